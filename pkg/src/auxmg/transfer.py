"""Transfer operators between a P^k space and its P1 space on one mesh.

The prolongation row of a fine node is just its barycentric coordinates
with respect to the vertices of a containing tet, so every row has at
most 4 entries, each a rational multiple of 1/k, and rows sum to 1 over
the full DOF sets.
"""

from __future__ import annotations

import numpy as np

from . import reference
from .csr import CsrMatrix, triple_product
from .fem import FeSpace


class TransferOperator:
    """Prolongation (n_h x n_H) and its transpose restriction."""

    def __init__(self, prolongation: CsrMatrix, fine_space: FeSpace, coarse_space: FeSpace):
        self.prolongation = prolongation
        self.fine_space = fine_space
        self.coarse_space = coarse_space
        self._restriction = None

    @property
    def restriction(self) -> CsrMatrix:
        if self._restriction is None:
            self._restriction = self.prolongation.transpose()
        return self._restriction

    def eliminated(self) -> CsrMatrix:
        """Prolongation restricted to interior rows and columns."""
        return self.prolongation.submatrix(
            self.fine_space.interior_indices(), self.coarse_space.interior_indices()
        )


def build_prolongation(fine: FeSpace, coarse: FeSpace, check=False) -> TransferOperator:
    """Interpolation matrix of hat functions at the fine lattice nodes.

    Entry (i, j) is the value of the hat function of vertex j at fine
    node i.  Values come from the lowest-id tet containing each node;
    with ``check=True`` agreement across all containing tets is
    asserted (a conformity sanity check).
    """
    if coarse.order != 1:
        raise ValueError("coarse space must have order 1")
    if fine.order < 2:
        raise ValueError("fine space must have order >= 2")
    if coarse.mesh is not fine.mesh and not (
        coarse.mesh.num_vertices == fine.mesh.num_vertices
        and np.array_equal(coarse.mesh.tets, fine.mesh.tets)
        and np.array_equal(coarse.mesh.vertices, fine.mesh.vertices)
    ):
        raise ValueError("fine and coarse spaces must share one mesh")

    k = fine.order
    lattice = reference.lattice_points(k)
    n_h, n_H = fine.n_dofs, coarse.n_dofs
    row_entries: list[dict | None] = [None] * n_h
    for t, tet in enumerate(fine.mesh.tets):
        for li, alpha in enumerate(lattice):
            gid = fine.element_dofs[t, li]
            entries = {int(tet[m]): alpha[m] / k for m in range(4) if alpha[m] > 0}
            if row_entries[gid] is None:
                row_entries[gid] = entries
            elif check and row_entries[gid] != entries:
                raise AssertionError(f"non-conforming transfer at fine DOF {gid}")

    rows, cols, vals = [], [], []
    for i, entries in enumerate(row_entries):
        for j in sorted(entries):
            rows.append(i)
            cols.append(j)
            vals.append(entries[j])
    P = CsrMatrix.from_coo(n_h, n_H, rows, cols, vals)
    return TransferOperator(P, fine, coarse)


def galerkin_coarse(A_h: CsrMatrix, transfer) -> CsrMatrix:
    """Coarse operator I_R A_h I_P.

    ``transfer`` may be a TransferOperator (full DOF sets) or a plain
    prolongation CsrMatrix with row count matching A_h.
    """
    P = transfer.prolongation if isinstance(transfer, TransferOperator) else transfer
    if A_h.nrows != A_h.ncols:
        raise ValueError("A_h must be square")
    if A_h.ncols != P.nrows:
        raise ValueError(f"dimension mismatch: A_h is {A_h.shape}, prolongation is {P.shape}")
    return triple_product(P.transpose(), A_h, P)
