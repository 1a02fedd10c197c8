"""Classical algebraic multigrid: strength graph, greedy C/F splitting,
direct interpolation, Galerkin hierarchy and symmetric V-cycles.

A connection i -> j is strong when -a_ij > theta * max_k(-a_ik), k != i
(strict inequality, negative couplings only).  The splitting walks the
unknowns in index order, turning each undecided point into a C-point
and its undecided strong dependents into F-points, then promotes any
F-point left without a strong C-neighbour.  Everything is serial and
deterministic; ties always resolve to the lowest index.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .csr import (
    CsrMatrix,
    cholesky_factor,
    cholesky_solve,
    spmv,
    tri_lower_solve,
    tri_upper_solve,
    triple_product,
)


@dataclass
class StrengthGraph:
    """Strong-connection adjacency: strong[i] lists the columns row i
    strongly depends on; transpose[i] lists the rows depending on i."""

    n: int
    theta: float
    strong: list
    transpose: list


def strength_graph(A: CsrMatrix, theta: float) -> StrengthGraph:
    if not 0.0 < theta < 1.0:
        raise ValueError(f"strength threshold must lie in (0,1), got {theta}")
    if A.nrows != A.ncols:
        raise ValueError("strength graph needs a square matrix")
    n = A.nrows
    strong = []
    transpose = [[] for _ in range(n)]
    for i in range(n):
        lo, hi = A.row_ptr[i], A.row_ptr[i + 1]
        cols = A.col_idx[lo:hi]
        vals = A.values[lo:hi]
        off = cols != i
        neg = -vals[off]
        if len(neg) == 0 or neg.max() <= 0.0:
            strong.append(np.empty(0, dtype=np.int64))
            continue
        cut = theta * neg.max()
        sel = cols[off][neg > cut]
        strong.append(sel)
        for j in sel:
            transpose[j].append(i)
    transpose = [np.asarray(t, dtype=np.int64) for t in transpose]
    return StrengthGraph(n, theta, strong, transpose)


def rs_coarsen(S: StrengthGraph):
    """Greedy C/F splitting; returns (c_points, f_points, coarse_index).

    coarse_index[i] is the coarse id of C-point i, -1 for F-points.
    """
    UNDECIDED, CPT, FPT = 0, 1, 2
    state = np.full(S.n, UNDECIDED, dtype=np.int8)
    for i in range(S.n):
        if state[i] != UNDECIDED:
            continue
        state[i] = CPT
        for j in S.transpose[i]:
            if state[j] == UNDECIDED:
                state[j] = FPT
    # every F-point needs a strong C-neighbour to interpolate from
    for i in range(S.n):
        if state[i] == FPT and not np.any(state[S.strong[i]] == CPT):
            state[i] = CPT

    c_points = np.flatnonzero(state == CPT)
    f_points = np.flatnonzero(state == FPT)
    coarse_index = np.full(S.n, -1, dtype=np.int64)
    coarse_index[c_points] = np.arange(len(c_points))
    return c_points, f_points, coarse_index


def direct_interpolation(A: CsrMatrix, S: StrengthGraph, partition) -> CsrMatrix:
    """Unit rows at C-points; F-point weights from the direct formula

        w_ij = -(a_ij / a_ii) * (sum of all negative a_ik) /
                                (sum of negative a_ik over strong C-neighbours).
    """
    c_points, f_points, coarse_index = partition
    n, n_c = A.nrows, len(c_points)
    rows, cols, vals = [], [], []
    for i in c_points:
        rows.append(i)
        cols.append(coarse_index[i])
        vals.append(1.0)
    for i in f_points:
        lo, hi = A.row_ptr[i], A.row_ptr[i + 1]
        rcols = A.col_idx[lo:hi]
        rvals = A.values[lo:hi]
        diag = rvals[rcols == i]
        a_ii = diag[0] if len(diag) else 0.0
        strong_c = S.strong[i][coarse_index[S.strong[i]] >= 0]
        if len(strong_c) == 0:
            raise ValueError(f"F-point {i} has no strong C-neighbour (coarsening bug)")
        neg = (rcols != i) & (rvals < 0.0)
        neg_sum = rvals[neg].sum()
        in_c = np.isin(rcols, strong_c) & neg
        negc_sum = rvals[in_c].sum()
        scale = neg_sum / negc_sum
        for j, a_ij in zip(rcols[in_c], rvals[in_c]):
            rows.append(i)
            cols.append(coarse_index[j])
            vals.append(-a_ij * scale / a_ii)
    return CsrMatrix.from_coo(n, n_c, rows, cols, vals)


@dataclass
class _Level:
    A: CsrMatrix
    lower: CsrMatrix  # tril(A), forward Gauss-Seidel sweep operator
    upper: CsrMatrix  # triu(A), backward sweep
    P: CsrMatrix | None = None


@dataclass
class AmgHierarchy:
    levels: list
    coarsest_factor: np.ndarray
    theta: float
    pre_sweeps: int = 1
    post_sweeps: int = 1
    max_levels: int = 20
    coarse_size_threshold: int = 64
    nnz_per_level: list = field(default_factory=list)

    @property
    def num_levels(self):
        return len(self.levels)

    def summary(self) -> dict:
        return {
            "theta": self.theta,
            "levels": [
                {"n": lvl.A.nrows, "nnz": lvl.A.nnz} for lvl in self.levels
            ],
            "operator_complexity": operator_complexity(self),
        }


def build_hierarchy(A: CsrMatrix, theta=0.25, max_levels=20, coarse_size=64) -> AmgHierarchy:
    """Coarsen until the matrix is small or coarsening stalls (< 5% removed)."""
    levels = [_Level(A, A.tril(), A.triu())]
    while levels[-1].A.nrows > coarse_size and len(levels) < max_levels:
        A_l = levels[-1].A
        S = strength_graph(A_l, theta)
        partition = rs_coarsen(S)
        n_c = len(partition[0])
        if n_c >= A_l.nrows or n_c > 0.95 * A_l.nrows:
            break
        P = direct_interpolation(A_l, S, partition)
        A_c = triple_product(P.transpose(), A_l, P)
        levels[-1].P = P
        levels.append(_Level(A_c, A_c.tril(), A_c.triu()))
    factor = cholesky_factor(levels[-1].A.to_dense())
    H = AmgHierarchy(levels, factor, theta)
    H.nnz_per_level = [lvl.A.nnz for lvl in levels]
    return H


def _vcycle(H: AmgHierarchy, level: int, r):
    lvl = H.levels[level]
    if level == len(H.levels) - 1:
        return cholesky_solve(None, r, factor=H.coarsest_factor)
    x = np.zeros_like(r)
    for _ in range(H.pre_sweeps):
        x += tri_lower_solve(lvl.lower, r - spmv(lvl.A, x))
    resid = r - spmv(lvl.A, x)
    x += spmv(lvl.P, _vcycle(H, level + 1, spmv(lvl.P.transpose(), resid)))
    for _ in range(H.post_sweeps):
        x += tri_upper_solve(lvl.upper, r - spmv(lvl.A, x))
    return x


def vcycle_apply(H: AmgHierarchy, r) -> np.ndarray:
    """One symmetric V-cycle on residual r with zero initial guess."""
    r = np.asarray(r, dtype=np.float64)
    if r.shape[0] != H.levels[0].A.nrows:
        raise ValueError("residual length does not match the finest level")
    return _vcycle(H, 0, r)


def operator_complexity(H: AmgHierarchy) -> float:
    """Total stored nonzeros over all levels relative to the finest level."""
    nnz = [lvl.A.nnz for lvl in H.levels]
    return float(sum(nnz)) / float(nnz[0])


class VCyclePreconditioner:
    """Fixed number of V-cycles as a (symmetric) preconditioner action."""

    def __init__(self, hierarchy: AmgHierarchy, cycles: int = 1):
        self.hierarchy = hierarchy
        self.cycles = cycles
        self._A = hierarchy.levels[0].A

    def __call__(self, r):
        x = vcycle_apply(self.hierarchy, r)
        for _ in range(self.cycles - 1):
            x += vcycle_apply(self.hierarchy, r - spmv(self._A, x))
        return x
