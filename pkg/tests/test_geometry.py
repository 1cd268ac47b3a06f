import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from immergrid.errors import SignError
from immergrid.geometry import (CellState, Disc, FunctionLevelSet, HalfPlane, PolarStar,
                                Rectangle, bisect_segments, classify_cell, classify_cells,
                                evaluate, intersect_edge, star_levelset)

coords = st.floats(-2.0, 2.0, allow_nan=False)


@pytest.mark.parametrize("point, expected", [
    ((0.0, 0.0), 0.5),
    ((0.5, 0.0), 0.0),
    ((1.0, 1.0), 0.5 + 0.1 * np.sin(5 * np.pi / 4) - np.sqrt(2.0)),
])
def test_star_values(point, expected):
    assert evaluate(star_levelset(), point) == pytest.approx(expected, abs=1e-14)


@given(coords, coords)
def test_deterministic(x, y):
    ls = star_levelset() & ~Disc((0.1, 0.0), 0.2)
    p = np.array([x, y])
    assert evaluate(ls, p) == evaluate(ls, p.copy())


@given(coords, coords)
def test_boolean_combinations(x, y):
    a, b = Disc((0.0, 0.0), 0.7), HalfPlane((1.0, 0.0), 0.1)
    p = np.array([x, y])
    assert evaluate(a | b, p) == max(evaluate(a, p), evaluate(b, p))
    assert evaluate(a & b, p) == min(evaluate(a, p), evaluate(b, p))
    assert evaluate(~a, p) == -evaluate(a, p)


@pytest.mark.parametrize("box, state", [
    (((-0.1, -0.1), (0.1, 0.1)), CellState.INSIDE),
    (((0.9, 0.9), (1.0, 1.0)), CellState.OUTSIDE),
    (((0.3, -0.1), (0.6, 0.1)), CellState.CUT),
])
def test_classify_cell_examples(box, state):
    assert classify_cell(star_levelset(), box, 2) == state


def test_zero_counts_as_inside():
    ls = HalfPlane((1.0, 0.0), 1.0)
    # psi vanishes on the right edge and is negative elsewhere
    assert classify_cell(ls, ((0.0, 0.0), (1.0, 1.0)), 0) == CellState.CUT
    assert classify_cell(ls, ((1.0, 0.0), (1.0 + 1e-9, 1.0)), 0) == CellState.INSIDE


@settings(max_examples=60)
@given(st.floats(-1.0, 0.9), st.floats(-1.0, 0.9), st.floats(0.01, 0.5), st.integers(0, 3))
def test_classification_monotone_in_depth(x0, y0, size, depth):
    box = ((x0, y0), (x0 + size, y0 + size))
    ls = star_levelset()
    shallow, deep = classify_cell(ls, box, depth), classify_cell(ls, box, depth + 1)
    if shallow == CellState.CUT:
        assert deep == CellState.CUT
    else:
        assert deep in (shallow, CellState.CUT)


def test_classify_cells_matches_scalar(rng):
    lo = rng.uniform(-1, 0.8, (40, 2))
    hi = lo + rng.uniform(0.05, 0.3, (40, 1))
    ls = star_levelset()
    vec = classify_cells(ls, lo, hi, 2)
    assert [int(s) for s in vec] == [int(classify_cell(ls, (a, b), 2)) for a, b in zip(lo, hi)]


@pytest.mark.parametrize("ls, p0, p1, root", [
    (HalfPlane((1.0, 0.0), 0.25), (0, 0), (1, 0), (0.25, 0.0)),
    (star_levelset(), (0, 0), (1, 0), (0.5, 0.0)),
])
def test_intersect_edge_examples(ls, p0, p1, root):
    np.testing.assert_allclose(intersect_edge(ls, p0, p1), root, atol=1e-10)


def test_intersect_edge_sign_error():
    with pytest.raises(SignError):
        intersect_edge(Disc((0, 0), 0.1), (0.5, 0.0), (1.0, 0.0))


def test_tangency_without_sign_error():
    ls = FunctionLevelSet(lambda x, y: x ** 2)
    q = intersect_edge(ls, (-1.0, 0.0), (0.0, 0.0))
    assert evaluate(ls, q) == 0.0


@settings(max_examples=80)
@given(st.floats(0.05, 0.95), st.floats(-1.0, 1.0), st.floats(1e-3, 1.0))
def test_bisection_root_bracketed(t, y, length):
    # psi is linear along the segment, so the located point is the exact root
    p0, p1 = np.array([0.0, y]), np.array([length, y])
    ls = HalfPlane((-1.0, 0.0), -t * length)
    q = intersect_edge(ls, p0, p1, 1e-12)
    assert abs(q[0] - t * length) <= 1e-12 * length


@pytest.mark.parametrize("eps", [1e-3, 1e-9, 1e-18])
@pytest.mark.parametrize("reverse", [False, True])
def test_bisection_resolves_roots_near_either_end(eps, reverse):
    ls = HalfPlane((-1.0, 0.0), -eps)
    p0, p1 = np.array([[0.0, 0.0]]), np.array([[1.0, 0.0]])
    if reverse:
        p0, p1 = p1, p0
    q = bisect_segments(ls, p0, p1)
    assert q[0, 0] == pytest.approx(eps, rel=1e-12)


def test_polar_star_center_total():
    ls = PolarStar(0.5, 0.1, 5.0, (0.3, -0.2))
    assert evaluate(ls, (0.3, -0.2)) == 0.5


def test_rectangle_sign():
    r = Rectangle((0.0, 0.0), (3.0, 1.0))
    assert evaluate(r, (1.5, 0.5)) > 0 > evaluate(r, (3.5, 0.5))
    assert evaluate(r, (3.0, 0.5)) == 0.0
