"""P^k Lagrange finite element spaces on tetrahedral meshes.

Degrees of freedom sit at the barycentric lattice points of each tet
and are deduplicated topologically: one DOF per vertex, k-1 per edge,
(k-1)(k-2)/2 per face and C(k-1,3) per tet interior.  Global numbering
is vertices first (DOF id = vertex id), then edges in sorted key order,
then faces, then interiors, which keeps the enumeration independent of
element orientation.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import reference
from .csr import CsrMatrix, spmv
from .mesh import TetMesh


class FeSpace:
    """Scalar continuous P^k Lagrange space.

    Attributes
    ----------
    mesh : TetMesh
    order : int, 1 <= k <= 4
    n_dofs : int
    element_dofs : (nt, n_loc) int array, lattice ordering per tet
    dof_coords : (n_dofs, 3) float array
    is_boundary : (n_dofs,) bool array
    """

    def __init__(self, mesh, order, n_dofs, element_dofs, dof_coords, is_boundary):
        self.mesh = mesh
        self.order = order
        self.n_dofs = n_dofs
        self.element_dofs = element_dofs
        self.dof_coords = dof_coords
        self.is_boundary = is_boundary

    @property
    def num_interior(self):
        return int(np.sum(~self.is_boundary))

    def interior_indices(self):
        return np.flatnonzero(~self.is_boundary)

    def __repr__(self):
        return f"FeSpace(order={self.order}, n_dofs={self.n_dofs})"


def build_space(mesh: TetMesh, k: int) -> FeSpace:
    """Enumerate the conforming P^k space over ``mesh``."""
    if k not in (1, 2, 3, 4):
        raise ValueError(f"unsupported polynomial order {k}")
    lattice = reference.lattice_points(k)
    n_loc = len(lattice)
    nv = mesh.num_vertices

    # sub-entity keys shared across tets; vertices own ids 0..nv-1
    edge_key_ids: dict[tuple, int] = {}
    face_key_ids: dict[tuple, int] = {}
    if k >= 2:
        edges = mesh.edges()
        for e in edges:
            edge_key_ids[(int(e[0]), int(e[1]))] = len(edge_key_ids)
    if k >= 3:
        faces = np.sort(mesh.tets[:, [[1, 2, 3], [0, 2, 3], [0, 1, 3], [0, 1, 2]]].reshape(-1, 3), axis=1)
        for f in np.unique(faces, axis=0):
            face_key_ids[(int(f[0]), int(f[1]), int(f[2]))] = len(face_key_ids)
    ne, nf = len(edge_key_ids), len(face_key_ids)
    per_edge = k - 1
    per_face = (k - 1) * (k - 2) // 2
    per_tet = max(0, (k - 1) * (k - 2) * (k - 3) // 6)
    n_dofs = nv + ne * per_edge + nf * per_face + mesh.num_tets * per_tet

    base_edge = nv
    base_face = base_edge + ne * per_edge
    base_tet = base_face + nf * per_face

    # face-interior multi-indices in lexicographic-descending order of the
    # exponents on the face's (sorted) vertices
    face_multis = [
        (a, b, k - a - b)
        for a in range(k - 1, 0, -1)
        for b in range(k - a - 1, 0, -1)
        if k - a - b > 0
    ]
    face_multi_pos = {m: i for i, m in enumerate(face_multis)}
    tet_multi_pos = {}
    pos = 0
    for alpha in lattice:
        if all(a > 0 for a in alpha):
            tet_multi_pos[alpha] = pos
            pos += 1

    element_dofs = np.empty((mesh.num_tets, n_loc), dtype=np.int64)
    for t, tet in enumerate(mesh.tets):
        for li, alpha in enumerate(lattice):
            support = [m for m in range(4) if alpha[m] > 0]
            if len(support) == 1:
                gid = int(tet[support[0]])
            elif len(support) == 2:
                va, vb = int(tet[support[0]]), int(tet[support[1]])
                ea, eb = alpha[support[0]], alpha[support[1]]
                if va > vb:
                    va, vb, ea = vb, va, eb
                # slots ordered by exponent on the lower vertex, descending
                slot = (k - 1) - ea
                gid = base_edge + edge_key_ids[(va, vb)] * per_edge + slot
            elif len(support) == 3:
                vs = [(int(tet[m]), alpha[m]) for m in support]
                vs.sort()
                key = (vs[0][0], vs[1][0], vs[2][0])
                slot = face_multi_pos[(vs[0][1], vs[1][1], vs[2][1])]
                gid = base_face + face_key_ids[key] * per_face + slot
            else:
                gid = base_tet + t * per_tet + tet_multi_pos[alpha]
            element_dofs[t, li] = gid

    dof_coords = np.zeros((n_dofs, 3))
    lattice_arr = np.asarray(lattice, dtype=np.float64) / k
    for t, tet in enumerate(mesh.tets):
        dof_coords[element_dofs[t]] = lattice_arr @ mesh.vertices[tet]

    is_boundary = _boundary_dof_mask(mesh, element_dofs, lattice, n_dofs)
    return FeSpace(mesh, k, n_dofs, element_dofs, dof_coords, is_boundary)


def _boundary_dof_mask(mesh, element_dofs, lattice, n_dofs):
    bfaces = {tuple(f) for f in np.sort(mesh.boundary_faces, axis=1)}
    bedges = set()
    for f in bfaces:
        bedges.update({(f[0], f[1]), (f[0], f[2]), (f[1], f[2])})
    bverts = {v for f in bfaces for v in f}

    mask = np.zeros(n_dofs, dtype=bool)
    for t, tet in enumerate(mesh.tets):
        for li, alpha in enumerate(lattice):
            support = tuple(sorted(int(tet[m]) for m in range(4) if alpha[m] > 0))
            if len(support) == 1:
                onb = support[0] in bverts
            elif len(support) == 2:
                onb = support in bedges
            elif len(support) == 3:
                onb = support in bfaces
            else:
                onb = False
            if onb:
                mask[element_dofs[t, li]] = True
    return mask


# -- assembly ---------------------------------------------------------------


def _element_geometry(mesh):
    """Per-tet barycentric gradients (nt,4,3) and volumes (nt,)."""
    v = mesh.vertices[mesh.tets]
    J = (v[:, 1:] - v[:, :1]).transpose(0, 2, 1)  # columns are edge vectors
    detJ = np.linalg.det(J)
    vol = detJ / 6.0
    if np.any(vol <= 0) or np.any(~np.isfinite(vol)):
        bad = int(np.argmin(vol))
        raise ValueError(f"degenerate tet {bad} (volume {vol[bad]:g})")
    Jinv = np.linalg.inv(J)
    grads = np.empty((mesh.num_tets, 4, 3))
    grads[:, 1:, :] = Jinv
    grads[:, 0, :] = -Jinv.sum(axis=1)
    return grads, vol


def assemble_operator(space: FeSpace, form: str) -> CsrMatrix:
    """Assemble the stiffness or mass matrix over the full DOF set.

    Element integrals are exact (rational barycentric expansion), so
    e.g. stiffness row sums vanish to machine precision.
    """
    k = space.order
    grads, vol = _element_geometry(space.mesh)
    if form == "stiffness":
        S = reference.stiffness_reference(k)
        g = np.einsum("tmc,tnc->tmn", grads, grads) * vol[:, None, None]
        local = np.einsum("tmn,mnij->tij", g, S)
    elif form == "mass":
        M = reference.mass_reference(k)
        local = vol[:, None, None] * M[None, :, :]
    else:
        raise ValueError(f"unknown form {form!r}")

    n_loc = local.shape[1]
    dofs = space.element_dofs
    rows = np.repeat(dofs, n_loc, axis=1).ravel()
    cols = np.tile(dofs, (1, n_loc)).ravel()
    return CsrMatrix.from_coo(space.n_dofs, space.n_dofs, rows, cols, local.ravel())


def assemble_load(space: FeSpace, f) -> np.ndarray:
    """Load vector f_i = integral of f phi_i, via the degree-9 tet rule.

    ``f`` is called with an (m, 3) array of points and must return m
    values.
    """
    pts_b, wts = reference.tet_quadrature(9)
    phi = reference.basis_values_at(space.order, tuple(map(tuple, pts_b)))  # (nq, n_loc)
    verts = space.mesh.vertices[space.mesh.tets]  # (nt,4,3)
    xq = np.einsum("qm,tmc->tqc", pts_b, verts)  # (nt,nq,3)
    _, vol = _element_geometry(space.mesh)
    fv = np.asarray(f(xq.reshape(-1, 3)), dtype=np.float64).reshape(xq.shape[0], -1)
    local = vol[:, None] * np.einsum("tq,q,qi->ti", fv, wts, phi)
    out = np.zeros(space.n_dofs)
    np.add.at(out, space.element_dofs.ravel(), local.ravel())
    return out


@dataclass
class AssembledSystem:
    """Dirichlet-eliminated linear system with its index maps."""

    A: CsrMatrix
    rhs: np.ndarray
    interior_to_full: np.ndarray
    full_to_interior: np.ndarray  # -1 for boundary DOFs

    @property
    def n(self):
        return self.A.nrows


def eliminate_dirichlet(A: CsrMatrix, rhs, space: FeSpace, g=None) -> AssembledSystem:
    """Restrict to interior DOFs, lifting boundary values into the rhs.

    ``g`` may be None (homogeneous), a callable of an (m, 3) coordinate
    array, or a full-length vector of boundary values.
    """
    rhs = np.asarray(rhs, dtype=np.float64)
    if A.nrows != space.n_dofs or rhs.shape[0] != space.n_dofs:
        raise ValueError("operator/rhs size does not match the space")
    interior = space.interior_indices()
    full_to_interior = np.full(space.n_dofs, -1, dtype=np.int64)
    full_to_interior[interior] = np.arange(len(interior))

    rhs_int = rhs[interior]
    if g is not None:
        ghat = np.zeros(space.n_dofs)
        bnd = space.is_boundary
        if callable(g):
            ghat[bnd] = g(space.dof_coords[bnd])
        else:
            ghat[bnd] = np.asarray(g, dtype=np.float64)[bnd]
        if np.any(ghat != 0.0):
            rhs_int = rhs_int - spmv(A, ghat)[interior]
    A_int = A.submatrix(interior, interior)
    return AssembledSystem(A_int, rhs_int, interior, full_to_interior)


def l2_error(space: FeSpace, coeffs_full, exact) -> float:
    """L2 norm of (u_h - u) with u_h given by full-set coefficients."""
    pts_b, wts = reference.tet_quadrature(9)
    phi = reference.basis_values_at(space.order, tuple(map(tuple, pts_b)))
    verts = space.mesh.vertices[space.mesh.tets]
    xq = np.einsum("qm,tmc->tqc", pts_b, verts)
    _, vol = _element_geometry(space.mesh)
    uh = np.einsum("ti,qi->tq", np.asarray(coeffs_full)[space.element_dofs], phi)
    ue = np.asarray(exact(xq.reshape(-1, 3))).reshape(uh.shape)
    err2 = np.einsum("t,q,tq->", vol, wts, (uh - ue) ** 2)
    return float(np.sqrt(max(err2, 0.0)))
