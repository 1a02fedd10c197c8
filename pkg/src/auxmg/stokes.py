"""Hood-Taylor Stokes discretisation and Poisson-based block preconditioners.

Velocity lives in (P^{k,0})^3 with Dirichlet data on the whole boundary
(zero on the walls, a driven lid on the top face), pressure in
P^{k-1,0} with its constant mode projected away.  The saddle operator is

    F = [[A, B^T], [B, 0]],   B = discrete -div,

and the preconditioners approximate A^{-1} by one multigrid cycle per
velocity component and the Schur complement by the pressure mass matrix
solved with diagonally preconditioned CG.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse

from . import reference
from .amg import VCyclePreconditioner, build_hierarchy
from .csr import CsrMatrix, spmv
from .fem import FeSpace, assemble_operator, build_space, eliminate_dirichlet, _element_geometry
from .krylov import SolveReport, SolverConfig, fgmres, minres, pcg
from .mesh import TetMesh
from .transfer import build_prolongation
from .twolevel import TwoLevelPreconditioner

_GEOM_TOL = 1e-9


class InnerSolveError(RuntimeError):
    """The Schur-block mass solve failed; the report is attached."""

    def __init__(self, report: SolveReport):
        self.report = report
        super().__init__(f"inner mass solve did not converge in {report.iterations} iterations")


@dataclass
class StokesSystem:
    """Eliminated saddle system for the lid-driven cavity.

    Velocity DOFs are component-major over the interior scalar DOFs:
    u = [u_x; u_y; u_z].  ``B`` maps interior velocity to pressure;
    the boundary contribution of the lid sits in ``rhs_p``.
    """

    A: CsrMatrix            # 3x3 block diagonal vector Laplacian (interior)
    B: CsrMatrix            # n_p x 3*n_int discrete -div
    M_p: CsrMatrix          # pressure mass
    velocity_space: FeSpace
    pressure_space: FeSpace
    A_scalar: CsrMatrix     # one diagonal block of A
    rhs_u: np.ndarray
    rhs_p: np.ndarray
    lid_values: np.ndarray  # (n_v_full, 3) Dirichlet data over all velocity DOFs

    @property
    def n_interior(self):
        return self.A_scalar.nrows

    @property
    def n_velocity(self):
        return 3 * self.n_interior

    @property
    def n_pressure(self):
        return self.M_p.nrows

    @property
    def dim(self):
        return self.n_velocity + self.n_pressure

    def rhs(self):
        return np.concatenate([self.rhs_u, self.rhs_p])

    def split(self, x):
        return x[: self.n_velocity], x[self.n_velocity :]

    def apply_operator(self, x):
        u, p = self.split(x)
        top = spmv(self.A, u) + spmv(self.B.transpose(), p)
        bot = spmv(self.B, u)
        return np.concatenate([top, bot])

    def full_velocity(self, u_interior):
        """Assemble the (n_v_full, 3) velocity field including lid data."""
        space = self.velocity_space
        out = self.lid_values.copy()
        interior = space.interior_indices()
        n = self.n_interior
        for c in range(3):
            out[interior, c] = u_interior[c * n : (c + 1) * n]
        return out


def _lid_dirichlet_values(space: FeSpace, lid_velocity) -> np.ndarray:
    """Dirichlet data: zero on walls, lid values on the open top face.

    Rim nodes (top face meeting a wall) take the wall value, the
    watertight-cavity convention that keeps the data continuous.
    """
    coords = space.dof_coords
    g = np.zeros((space.n_dofs, 3))
    on_top = space.is_boundary & (np.abs(coords[:, 2] - 1.0) <= _GEOM_TOL)
    on_wall = (
        (np.abs(coords[:, 0]) <= _GEOM_TOL)
        | (np.abs(coords[:, 0] - 1.0) <= _GEOM_TOL)
        | (np.abs(coords[:, 1]) <= _GEOM_TOL)
        | (np.abs(coords[:, 1] - 1.0) <= _GEOM_TOL)
        | (np.abs(coords[:, 2]) <= _GEOM_TOL)
    )
    lid = on_top & ~on_wall
    if callable(lid_velocity):
        g[lid] = np.asarray(lid_velocity(coords[lid]), dtype=np.float64)
    else:
        g[lid] = np.asarray(lid_velocity, dtype=np.float64)
    return g


def _assemble_divergence(vel: FeSpace, pres: FeSpace):
    """Component blocks B_c (n_p x n_v_full) of the -div operator."""
    grads, vol = _element_geometry(vel.mesh)
    N = reference.divergence_reference(vel.order, pres.order)  # (4, n_p_loc, n_v_loc)
    blocks = []
    n_t = vel.mesh.num_tets
    n_p_loc, n_v_loc = N.shape[1], N.shape[2]
    prow = np.repeat(pres.element_dofs, n_v_loc, axis=1).ravel()
    vcol = np.tile(vel.element_dofs, (1, n_p_loc)).ravel()
    for c in range(3):
        local = -np.einsum("t,tm,mqi->tqi", vol, grads[:, :, c], N)
        S = scipy.sparse.coo_matrix(
            (local.ravel(), (prow, vcol)), shape=(pres.n_dofs, vel.n_dofs)
        ).tocsr()
        S.sort_indices()
        blocks.append(CsrMatrix.from_scipy(S))
    return blocks


def assemble_stokes(mesh: TetMesh, k: int, lid_velocity=(1.0, 0.0, 0.0)) -> StokesSystem:
    """P^k / P^{k-1} cavity problem with body force zero."""
    if k not in (2, 3, 4):
        raise ValueError("Hood-Taylor velocity order must be 2, 3 or 4")
    vel = build_space(mesh, k)
    pres = build_space(mesh, k - 1)
    A_full = assemble_operator(vel, "stiffness")
    M_p = assemble_operator(pres, "mass")
    g = _lid_dirichlet_values(vel, lid_velocity)

    interior = vel.interior_indices()
    sys0 = eliminate_dirichlet(A_full, np.zeros(vel.n_dofs), vel)
    A_scalar = sys0.A

    rhs_u = np.empty(3 * len(interior))
    ghat_cols = []
    for c in range(3):
        ghat = np.zeros(vel.n_dofs)
        ghat[vel.is_boundary] = g[vel.is_boundary, c]
        ghat_cols.append(ghat)
        rhs_u[c * len(interior) : (c + 1) * len(interior)] = -spmv(A_full, ghat)[interior]

    B_blocks = _assemble_divergence(vel, pres)
    B_int = scipy.sparse.hstack([b.to_scipy()[:, interior] for b in B_blocks]).tocsr()
    B_int.sort_indices()
    rhs_p = -sum(spmv(b, ghat) for b, ghat in zip(B_blocks, ghat_cols))

    A_blk = scipy.sparse.block_diag([A_scalar.to_scipy()] * 3).tocsr()
    A_blk.sort_indices()
    return StokesSystem(
        A=CsrMatrix.from_scipy(A_blk),
        B=CsrMatrix.from_scipy(B_int),
        M_p=M_p,
        velocity_space=vel,
        pressure_space=pres,
        A_scalar=A_scalar,
        rhs_u=rhs_u,
        rhs_p=rhs_p,
        lid_values=g,
    )


def project_pressure_mean(p, M_p: CsrMatrix):
    """Remove the mass-weighted mean: p - (1'M_p p / 1'M_p 1) 1."""
    p = np.asarray(p, dtype=np.float64)
    w = spmv(M_p, np.ones(M_p.nrows))
    return p - (w @ p) / w.sum()


@dataclass
class BlockPreconditioner:
    """Q_t (upper triangular) or Q_d (block diagonal) action.

    ``a_action`` applies one multigrid cycle of the scalar velocity
    block; the Schur approximation is the pressure mass matrix solved
    by diagonally preconditioned CG to ``schur_tol``.

    Q_t follows the triangular factorisation: z_p = -M_p^{-1} r_p first,
    then z_u = A^{-1}(r_u - B^T z_p).  Q_d drops the coupling and uses
    the positive pressure block diag(A^{-1}, +M_p^{-1}) so the action is
    SPD, as MINRES requires.
    """

    kind: str
    a_action: object
    system: StokesSystem
    schur_tol: float = 1e-2
    schur_max_iters: int = 50
    _mp_diag_inv: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        if self.kind not in ("Qt", "Qd"):
            raise ValueError("kind must be 'Qt' or 'Qd'")
        self._mp_diag_inv = 1.0 / self.system.M_p.diagonal()

    def _mass_solve(self, r_p):
        cfg = SolverConfig(method="cg", rel_tol=self.schur_tol, max_iters=self.schur_max_iters)
        z, rep = pcg(self.system.M_p, lambda r: self._mp_diag_inv * r, r_p, cfg)
        if not rep.converged:
            raise InnerSolveError(rep)
        return z

    def _velocity_solve(self, r_u):
        n = self.system.n_interior
        z = np.empty_like(r_u)
        for c in range(3):
            z[c * n : (c + 1) * n] = self.a_action(r_u[c * n : (c + 1) * n])
        return z

    def apply(self, r_u, r_p):
        if self.kind == "Qt":
            z_p = -self._mass_solve(r_p)
            z_u = self._velocity_solve(r_u - spmv(self.system.B.transpose(), z_p))
        else:
            z_u = self._velocity_solve(r_u)
            z_p = self._mass_solve(r_p)
        return z_u, z_p

    def __call__(self, r):
        r_u, r_p = self.system.split(np.asarray(r, dtype=np.float64))
        z_u, z_p = self.apply(r_u, r_p)
        z_p = project_pressure_mean(z_p, self.system.M_p)
        return np.concatenate([z_u, z_p])


def apply_block_preconditioner(P: BlockPreconditioner, S: StokesSystem, r):
    """Tuple-blocked entry point: r = (r_u, r_p) -> (z_u, z_p)."""
    r_u, r_p = r
    if len(r_u) != S.n_velocity or len(r_p) != S.n_pressure:
        raise ValueError("residual block sizes do not match the system")
    return P.apply(np.asarray(r_u, dtype=np.float64), np.asarray(r_p, dtype=np.float64))


def build_block_preconditioner(S: StokesSystem, kind="Qt", engine="gamg", theta=0.8,
                               schur_tol=1e-2, schur_max_iters=50) -> BlockPreconditioner:
    """One AMG or two-level (auxiliary P1) cycle on the velocity block."""
    if engine == "gamg":
        coarse_p1 = build_space(S.velocity_space.mesh, 1)
        P_int = build_prolongation(S.velocity_space, coarse_p1).eliminated()
        a_action = TwoLevelPreconditioner(S.A_scalar, P_int, coarse="amg", theta=theta, presmooth=True)
    elif engine == "amg":
        a_action = VCyclePreconditioner(build_hierarchy(S.A_scalar, theta=theta))
    else:
        raise ValueError(f"unknown engine {engine!r}")
    return BlockPreconditioner(kind, a_action, S, schur_tol, schur_max_iters)


def solve_cavity(S: StokesSystem, precond_kind="Qt", coarse_engine="gamg",
                 cfg: SolverConfig | None = None, theta=0.8, x0=None):
    """FGMRES (Q_t) or MINRES (Q_d) on the saddle system.

    The pressure mean is projected out of the initial guess, every
    preconditioner output and the final answer.  Returns the full
    velocity field (n_v_full, 3), the zero-mean pressure and the solve
    report.
    """
    M = build_block_preconditioner(S, kind=precond_kind, engine=coarse_engine, theta=theta)
    if cfg is None:
        method = "fgmres" if precond_kind == "Qt" else "minres"
        cfg = SolverConfig(method=method, rel_tol=1e-8, max_iters=400)
    b = S.rhs()
    if x0 is None:
        x0 = np.zeros(S.dim)
    else:
        x0 = np.array(x0, dtype=np.float64)
    u0, p0 = S.split(x0)
    x0 = np.concatenate([u0, project_pressure_mean(p0, S.M_p)])

    if cfg.method == "minres":
        x, report = minres(S.apply_operator, M, b, cfg, x0=x0)
    else:
        x, report = fgmres(S.apply_operator, M, b, cfg, x0=x0)
    u_int, p = S.split(x)
    p = project_pressure_mean(p, S.M_p)
    return S.full_velocity(u_int), p, report


# -- legacy VTK output -------------------------------------------------------


def write_vtk(path, mesh: TetMesh, point_data=None):
    """Legacy ASCII VTK unstructured grid with optional point fields.

    ``point_data`` maps names to per-vertex scalars (nv,) or vectors
    (nv, 3).
    """
    point_data = point_data or {}
    with open(path, "w") as fh:
        fh.write("# vtk DataFile Version 3.0\ncavity solution\nASCII\n")
        fh.write("DATASET UNSTRUCTURED_GRID\n")
        fh.write(f"POINTS {mesh.num_vertices} double\n")
        for x, y, z in mesh.vertices:
            fh.write(f"{x:.16e} {y:.16e} {z:.16e}\n")
        fh.write(f"CELLS {mesh.num_tets} {5 * mesh.num_tets}\n")
        for t in mesh.tets:
            fh.write(f"4 {t[0]} {t[1]} {t[2]} {t[3]}\n")
        fh.write(f"CELL_TYPES {mesh.num_tets}\n")
        fh.write("\n".join(["10"] * mesh.num_tets) + "\n")
        if point_data:
            fh.write(f"POINT_DATA {mesh.num_vertices}\n")
            for name, arr in point_data.items():
                arr = np.asarray(arr)
                if arr.ndim == 2 and arr.shape[1] == 3:
                    fh.write(f"VECTORS {name} double\n")
                    for row in arr:
                        fh.write(f"{row[0]:.16e} {row[1]:.16e} {row[2]:.16e}\n")
                else:
                    fh.write(f"SCALARS {name} double 1\nLOOKUP_TABLE default\n")
                    fh.write("\n".join(f"{v:.16e}" for v in arr) + "\n")
