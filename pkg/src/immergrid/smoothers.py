"""Jacobi, colored Gauss-Seidel and Schwarz-type smoothers.

Schwarz blocks are chosen by support inclusion: the block of a DOF holds
every DOF (of the same vector component) whose physical support is
contained in the owner's support. Lagrange spaces only get blocks for
nodal DOFs. Blocks are greedily colored so that blocks of one color have
disjoint supports, which lets a multiplicative sweep treat a whole color at
once.

All smoother applications accept a vector or a matrix of column vectors.
"""
from __future__ import annotations

import enum
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from .basis import FunctionSpace
from .errors import EmptyBlockAfterFilter

__all__ = [
    "Kind", "Direction", "SmootherConfig", "SchwarzPartition", "Smoother",
    "select_blocks", "color_blocks", "factorize_blocks", "build_partition",
    "build_smoother", "apply_smoother", "support_incidence", "blocks_per_element",
    "default_gamma", "double_iteration",
]

DEFAULT_FILTER_RATIO = 1e-16
REFINE_BELOW = 1e-6
REFINE_STEPS = 2


class Kind(enum.Enum):
    JACOBI = "jacobi"
    GAUSS_SEIDEL = "gauss_seidel"
    ADDITIVE_SCHWARZ = "additive_schwarz"
    MULTIPLICATIVE_SCHWARZ = "multiplicative_schwarz"

    @classmethod
    def parse(cls, value) -> "Kind":
        if isinstance(value, cls):
            return value
        key = str(value).lower().replace("-", "_").replace(" ", "_")
        aliases = {"gs": "gauss_seidel", "gaussseidel": "gauss_seidel",
                   "as": "additive_schwarz", "additiveschwarz": "additive_schwarz",
                   "ms": "multiplicative_schwarz", "multiplicativeschwarz": "multiplicative_schwarz"}
        return cls(aliases.get(key, key))


class Direction(enum.Enum):
    FORWARD = "forward"
    REVERSE = "reverse"


@dataclass(frozen=True)
class SmootherConfig:
    """Smoother kind, relaxation and block filter threshold.

    ``gamma=None`` selects the default: 1 for Gauss-Seidel and
    multiplicative Schwarz, ``1 / max_K N_K`` for additive Schwarz (with
    ``N_K`` the number of blocks touching element ``K``) and
    ``1 / max_K n_K`` for Jacobi (``n_K`` the DOFs supported on ``K``).
    """
    kind: Kind = Kind.MULTIPLICATIVE_SCHWARZ
    gamma: float | None = None
    filter_ratio: float = DEFAULT_FILTER_RATIO

    def __post_init__(self):
        object.__setattr__(self, "kind", Kind.parse(self.kind))
        if self.gamma is not None and not self.gamma > 0:
            raise ValueError("relaxation must be positive")
        if self.filter_ratio < 0:
            raise ValueError("filter_ratio must be non-negative")


def support_incidence(space: FunctionSpace) -> sp.csr_matrix:
    """Boolean matrix ``S[dof, k]`` = vector DOF ``dof`` is supported on element ``k``."""
    ed = space.elem_dofs
    c = space.components
    rows, cols = np.nonzero(ed >= 0)
    scal = ed[rows, cols]
    S = sp.csr_matrix((np.ones(len(rows)), (scal, rows)), shape=(space.n_scalar, len(space.elements)))
    if c == 1:
        return S
    return sp.kron(S, np.ones((c, 1)), format="csr")


def _component(space: FunctionSpace) -> np.ndarray:
    return np.arange(space.n) % space.components


def _owners(space: FunctionSpace) -> np.ndarray:
    if space.family != "lagrange":
        return np.arange(space.n)
    p = space.degree
    a = space.anchors
    nodal = (a[:, 1] % p == 0) & (a[:, 2] % p == 0)
    return np.nonzero(np.repeat(nodal, space.components))[0]


def select_blocks(space: FunctionSpace, owners=None) -> list:
    """Encapsulating-support blocks, one per owner DOF.

    Block ``j`` holds every DOF ``k`` of the same vector component with
    ``supp(phi_k)`` contained in ``supp(phi_j)``. Owners are all DOFs for
    spline spaces and the nodal DOFs for Lagrange spaces; DOFs that end up
    in no block get a singleton block of their own. Blocks are returned as
    sorted index arrays, ordered by owner.
    """
    return _select(space, owners)[1]


def _select(space, owners=None):
    S = support_incidence(space)
    size = np.asarray(S.sum(axis=1)).ravel()
    if owners is None:
        owners = _owners(space)
    owners = np.asarray(owners, dtype=np.int64)
    comp = _component(space)
    # shared[j, k] = number of common support elements
    shared = (S[owners] @ S.T).tocoo()
    inside = (shared.data == size[shared.col]) & (comp[owners][shared.row] == comp[shared.col])
    rows, cols = shared.row[inside], shared.col[inside]
    order = np.lexsort((cols, rows))
    rows, cols = rows[order], cols[order]
    ptr = np.searchsorted(rows, np.arange(len(owners) + 1))
    blocks = {int(o): cols[ptr[i]:ptr[i + 1]] for i, o in enumerate(owners)}
    covered = np.zeros(space.n, dtype=bool)
    covered[cols] = True
    for k in np.nonzero(~covered)[0]:
        blocks[int(k)] = np.array([k])
    keys = sorted(blocks)
    return np.array(keys, dtype=np.int64), [blocks[o] for o in keys]


def _block_elements(S: sp.csr_matrix, blocks) -> sp.csr_matrix:
    """Block-to-element incidence (union of member supports)."""
    rows = np.repeat(np.arange(len(blocks)), [len(b) for b in blocks])
    cols = np.concatenate(blocks) if blocks else np.zeros(0, dtype=np.int64)
    P = sp.csr_matrix((np.ones(len(cols)), (rows, cols)), shape=(len(blocks), S.shape[0]))
    B = (P @ S).tocsr()
    B.data[:] = 1.0
    return B


def color_blocks(blocks, space: FunctionSpace) -> list:
    """Greedy coloring of blocks; same-color blocks have disjoint supports.

    Blocks are visited in the given order and each gets the smallest color
    not used by an already colored neighbour. Returns a list of block index
    arrays, one per color.
    """
    B = _block_elements(support_incidence(space), blocks)
    adj = (B @ B.T).tocsr()
    color = np.full(len(blocks), -1)
    for j in range(len(blocks)):
        nb = adj.indices[adj.indptr[j]:adj.indptr[j + 1]]
        used = set(color[nb].tolist())
        c = 0
        while c in used:
            c += 1
        color[j] = c
    if len(blocks) == 0:
        return []
    return [np.nonzero(color == c)[0] for c in range(color.max() + 1)]


def _gather(A: sp.csr_matrix, idx: np.ndarray) -> np.ndarray:
    """Dense sub-blocks ``A[idx[b]][:, idx[b]]`` for a stack of index rows."""
    n = A.shape[0]
    coo = A.tocoo()
    keys = coo.row.astype(np.int64) * n + coo.col
    order = np.argsort(keys)
    keys, vals = keys[order], coo.data[order]
    q = (idx[:, :, None].astype(np.int64) * n + idx[:, None, :]).ravel()
    pos = np.minimum(np.searchsorted(keys, q), len(keys) - 1)
    out = np.where(keys[pos] == q, vals[pos], 0.0) if len(keys) else np.zeros(len(q))
    return out.reshape(idx.shape + idx.shape[-1:])


def _by_size(blocks):
    groups: dict = {}
    for j, b in enumerate(blocks):
        groups.setdefault(len(b), []).append(j)
    return groups


def _singular_floor(size, wmax, ratio):
    # eigenvalue resolution of a unit-diagonal block in double precision;
    # ratio 0 switches filtering off apart from exact singularity
    return size * np.finfo(float).eps * wmax if ratio > 0 else 0.0


def _scaled_min(sub):
    s = 1.0 / np.sqrt(np.diag(sub))
    w, V = np.linalg.eigh(sub * s[:, None] * s[None, :])
    return w[0], w[-1], V[:, 0]


def _filter_one(Aj, members, ratio):
    """Drop dominant DOFs of near-singular modes until the block is SPD enough.

    Besides the ratio test on ``A_j`` itself, the diagonally scaled block
    that is actually factorized must be numerically nonsingular: its smallest
    eigenvalue has to exceed the round-off floor
    ``size * eps * w_max``. An unscaled
    eigenvalue near ``ratio * max(diag)`` is itself at round-off level and
    can hide an indefinite or singular scaled block.
    """
    keep = np.arange(len(members))
    while len(keep):
        sub = Aj[np.ix_(keep, keep)]
        w, V = np.linalg.eigh(sub)
        if w[0] >= ratio * np.max(np.diag(sub)) and w[0] > 0:
            ws, wmax, Vs = _scaled_min(sub)
            if ws > _singular_floor(len(keep), wmax, ratio):
                return members[keep], w, V
            keep = np.delete(keep, np.argmax(np.abs(Vs)))
            continue
        keep = np.delete(keep, np.argmax(np.abs(V[:, 0])))
    return members[keep], None, None


def _scaled_factors(A, blocks):
    """``(w, V, s)`` per block with ``diag(s) A_j diag(s) = V diag(w) V^T``.

    ``s = diag(A_j)^{-1/2}``. Scaling first keeps the decomposition accurate
    when one member has a far smaller diagonal entry than the others (a
    function with a sliver support), which the unscaled one resolves poorly.
    """
    out = [None] * len(blocks)
    for size, ids in _by_size(blocks).items():
        idx = np.array([blocks[j] for j in ids]).reshape(len(ids), size)
        sub = _gather(A, idx)
        s = 1.0 / np.sqrt(np.diagonal(sub, axis1=1, axis2=2))
        w, V = np.linalg.eigh(sub * s[:, :, None] * s[:, None, :])
        for t, j in enumerate(ids):
            out[j] = (w[t], V[t], s[t])
    return out


def factorize_blocks(A, blocks, filter_ratio: float = DEFAULT_FILTER_RATIO):
    """Filter near-singular DOFs from each block and factorize the rest.

    While the smallest eigenvalue of ``A_j`` is below ``filter_ratio`` times
    its largest diagonal entry, the DOF with the largest component in the
    corresponding eigenvector is removed. ``filter_ratio = 0`` disables
    filtering (exactly singular blocks still lose DOFs). A block whose
    diagonally scaled form is not numerically positive definite is filtered
    the same way, using the scaled eigenvector; a scaled eigenvalue below
    ``size * eps`` times the largest one counts as zero unless
    ``filter_ratio = 0``.

    Returns
    -------
    kept : list of ndarray
        Block members after filtering.
    factors : list of (w, V, s)
        Eigendecomposition of each filtered block after symmetric diagonal
        scaling, ``A_j = diag(1/s) V diag(w) V^T diag(1/s)``.
    """
    A = sp.csr_matrix(A)
    kept = [None] * len(blocks)
    for size, ids in _by_size(blocks).items():
        idx = np.array([blocks[j] for j in ids]).reshape(len(ids), size)
        sub = _gather(A, idx)
        w = np.linalg.eigvalsh(sub)
        dmax = np.max(np.diagonal(sub, axis1=1, axis2=2), axis=1)
        good = (w[:, 0] >= filter_ratio * dmax) & (w[:, 0] > 0)
        if np.any(good):
            d = np.diagonal(sub[good], axis1=1, axis2=2)
            sc = 1.0 / np.sqrt(np.where(d > 0, d, 1.0))
            ws = np.linalg.eigvalsh(sub[good] * sc[:, :, None] * sc[:, None, :])
            good[np.nonzero(good)[0][ws[:, 0] <= _singular_floor(size, ws[:, -1], filter_ratio)]] = False
        for t, j in enumerate(ids):
            if good[t]:
                kept[j] = idx[t]
                continue
            members, wj, _ = _filter_one(sub[t], idx[t], filter_ratio)
            if wj is None:
                raise EmptyBlockAfterFilter(f"block {j} lost all of its {size} DOFs to filtering")
            kept[j] = members
    return kept, _scaled_factors(A, kept)


class _Group:
    """Equal-size blocks solved together: ``d = S V diag(1/w) V^T S r`` per block.

    For badly conditioned blocks the solve is followed by two steps of
    iterative refinement with the residual formed in extended precision,
    which brings the block solution to working accuracy even when
    ``cond(A_j)`` is close to the filter limit.
    """

    def __init__(self, idx, w, V, s, blocks):
        self.idx = idx
        self.flat = idx.ravel()
        self.winv = 1.0 / w
        self.V = V
        self.s = s
        self.ill = np.nonzero(w[:, 0] < REFINE_BELOW * w[:, -1])[0]
        self.Aill = np.asarray(blocks[self.ill], dtype=np.longdouble)

    def _base(self, rl, V, winv, s):
        if rl.ndim == 2:
            c = np.einsum("bki,bk->bi", V, rl * s) * winv
            return np.einsum("bik,bk->bi", V, c) * s
        c = np.einsum("bki,bkm->bim", V, rl * s[:, :, None]) * winv[:, :, None]
        return np.einsum("bik,bkm->bim", V, c) * s[:, :, None]

    def solve(self, r):
        rl = r[self.idx]
        d = self._base(rl, self.V, self.winv, self.s)
        if len(self.ill):
            V, winv, s = self.V[self.ill], self.winv[self.ill], self.s[self.ill]
            target = np.asarray(rl[self.ill], dtype=np.longdouble)
            di = d[self.ill]
            sub = "bik,bk->bi" if rl.ndim == 2 else "bik,bkm->bim"
            for _ in range(REFINE_STEPS):
                res = target - np.einsum(sub, self.Aill, np.asarray(di, dtype=np.longdouble))
                di = di + self._base(np.asarray(res, dtype=float), V, winv, s)
            d[self.ill] = di
        return d


def _groups(A, blocks, factors, ids):
    out = []
    for size, sel in _by_size([blocks[j] for j in ids]).items():
        js = [ids[t] for t in sel]
        idx = np.array([blocks[j] for j in js]).reshape(len(js), size)
        w = np.array([factors[j][0] for j in js])
        V = np.array([factors[j][1] for j in js])
        sc = np.array([factors[j][2] for j in js])
        out.append(_Group(idx, w, V, sc, _gather(A, idx)))
    return out


@dataclass
class SchwarzPartition:
    """Blocks, their filtered factorizations and the color classes.

    Attributes
    ----------
    blocks : list of ndarray
        DOF index sets after filtering.
    factors : list of (w, V, s)
        Scaled eigendecomposition ``A_j = diag(1/s) V diag(w) V^T diag(1/s)``
        of each filtered block.
    owner : ndarray
        Owner DOF of each block.
    colors : list of ndarray
        Block indices per color.
    """
    blocks: list
    factors: list
    owner: np.ndarray
    colors: list
    n: int
    A: sp.csr_matrix = field(default=None, repr=False)
    max_blocks_per_element: int = 1
    color_groups: list = field(default_factory=list, repr=False)

    def __post_init__(self):
        self.color_groups = [_groups(self.A, self.blocks, self.factors, list(c)) for c in self.colors]

    @property
    def block_inverses(self) -> list:
        return [s[:, None] * ((V / w) @ V.T) * s[None, :] for w, V, s in self.factors]

    @property
    def n_colors(self) -> int:
        return len(self.colors)

    def additive(self, r):
        """``sum_j P_j A_j^{-1} P_j^T r``."""
        out = np.zeros_like(r)
        for groups in self.color_groups:
            for g in groups:
                # blocks of one color are disjoint
                out[g.flat] += g.solve(r).reshape((-1,) + r.shape[1:])
        return out


def blocks_per_element(space: FunctionSpace, blocks) -> np.ndarray:
    """``N_K``: number of blocks with a member supported on each element."""
    B = _block_elements(support_incidence(space), blocks)
    return np.asarray(B.sum(axis=0)).ravel().astype(int)


def build_partition(space: FunctionSpace, A, kind=Kind.MULTIPLICATIVE_SCHWARZ,
                    filter_ratio: float = DEFAULT_FILTER_RATIO) -> SchwarzPartition:
    """Blocks, factorizations and colors for a smoother of the given kind.

    Jacobi and Gauss-Seidel use one singleton block per DOF. DOFs that
    filtering removed from every block they were in get a singleton block.
    """
    kind = Kind.parse(kind)
    A = sp.csr_matrix(A)
    diag = A.diagonal()
    if kind in (Kind.JACOBI, Kind.GAUSS_SEIDEL):
        if np.any(diag <= 0):
            raise EmptyBlockAfterFilter("non-positive diagonal entry")
        blocks = [np.array([k]) for k in range(space.n)]
        owner = np.arange(space.n)
        factors = [(np.ones(1), np.ones((1, 1)), np.array([d ** -0.5])) for d in diag]
    else:
        owner, blocks = _select(space)
        blocks, factors = factorize_blocks(A, blocks, filter_ratio)
        owner = list(owner)
        covered = np.zeros(space.n, dtype=bool)
        for b in blocks:
            covered[b] = True
        for k in np.nonzero(~covered)[0]:
            blocks.append(np.array([k]))
            factors.append((np.ones(1), np.ones((1, 1)), np.array([diag[k] ** -0.5])))
            owner.append(k)
        order = sorted(range(len(blocks)), key=lambda j: (int(owner[j]), j))
        blocks = [blocks[j] for j in order]
        factors = [factors[j] for j in order]
        owner = np.array([owner[j] for j in order])
    colors = color_blocks(blocks, space)
    nk = blocks_per_element(space, blocks)
    return SchwarzPartition(blocks, factors, owner, colors, space.n, A,
                            int(nk.max()) if len(nk) else 1)


@dataclass
class Smoother:
    """A smoother bound to a matrix; ``apply`` returns ``gamma M^{-1} r``."""
    config: SmootherConfig
    A: sp.csr_matrix
    partition: SchwarzPartition
    gamma: float
    _diag_inv: np.ndarray = field(default=None, repr=False)
    _columns: list = field(default_factory=list, repr=False)

    def __post_init__(self):
        kind = self.config.kind
        if kind is Kind.JACOBI:
            self._diag_inv = 1.0 / self.A.diagonal()
        elif kind in (Kind.GAUSS_SEIDEL, Kind.MULTIPLICATIVE_SCHWARZ):
            for groups in self.partition.color_groups:
                dofs = np.concatenate([g.flat for g in groups])
                self._columns.append((dofs, self.A[:, dofs].tocsr()))

    @property
    def kind(self) -> Kind:
        return self.config.kind

    def apply(self, r, direction: Direction = Direction.FORWARD):
        r = np.asarray(r, dtype=float)
        kind = self.config.kind
        if kind is Kind.JACOBI:
            d = self._diag_inv if r.ndim == 1 else self._diag_inv[:, None]
            return self.gamma * d * r
        if kind is Kind.ADDITIVE_SCHWARZ:
            return self.gamma * self.partition.additive(r)
        return self.gamma * self._sweep(r, Direction(direction))

    def _sweep(self, r, direction):
        ops = list(zip(self.partition.color_groups, self._columns))
        if direction is Direction.REVERSE:
            ops = ops[::-1]
        x = np.zeros_like(r)
        res = r.copy()
        for groups, (dofs, Acol) in ops:
            # every block of the color sees the same residual
            d = np.concatenate([g.solve(res).reshape((-1,) + r.shape[1:]) for g in groups])
            x[dofs] += d
            res -= Acol @ d
        return x


def default_gamma(kind: Kind, space: FunctionSpace, partition: SchwarzPartition) -> float:
    if kind is Kind.ADDITIVE_SCHWARZ:
        return 1.0 / partition.max_blocks_per_element
    if kind is Kind.JACOBI:
        S = support_incidence(space)
        return 1.0 / float(np.asarray(S.sum(axis=0)).max())
    return 1.0


def build_smoother(space: FunctionSpace, A, config: SmootherConfig | None = None) -> Smoother:
    """Partition, factorize and bind a smoother to ``A``."""
    config = config or SmootherConfig()
    A = sp.csr_matrix(A)
    part = build_partition(space, A, config.kind, config.filter_ratio)
    gamma = config.gamma if config.gamma is not None else default_gamma(config.kind, space, part)
    return Smoother(config, A, part, gamma)


def apply_smoother(smoother: Smoother, r, direction: Direction = Direction.FORWARD):
    """``gamma M^{-1} r`` (``Forward``) or ``gamma M^{-T} r`` (``Reverse``)."""
    return smoother.apply(r, direction)


def double_iteration(smoother: Smoother, r):
    """Forward then reverse fixed-point step from zero: the symmetric smoother."""
    A = smoother.A
    x = smoother.apply(r, Direction.FORWARD)
    return x + smoother.apply(r - A @ x, Direction.REVERSE)
