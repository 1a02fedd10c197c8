"""Sensitivity of AMG to the strength threshold on high-order systems.

Classical AMG coarsening keys on strong negative couplings, and
high-order stiffness matrices violate the M-matrix assumptions behind
that heuristic, so its performance moves with the threshold theta.
The auxiliary-space method only ever hands AMG the P1 operator, for
which any reasonable theta works.
"""

import numpy as np

from auxmg.amg import VCyclePreconditioner, build_hierarchy
from auxmg.krylov import SolverConfig, fgmres
from auxmg.problems import poisson_setup
from auxmg.twolevel import TwoLevelPreconditioner

THETAS = (0.2, 0.4, 0.6, 0.8)
N = 3

header = f"{'method':>12} " + " ".join(f"theta={t:<4}" for t in THETAS) + "   spread"
for k in (2, 3, 4):
    problem = poisson_setup(N, k)
    A, P = problem.system.A, problem.prolongation_int
    rng = np.random.default_rng(k)
    x0 = rng.standard_normal(A.nrows)
    cfg = SolverConfig(rel_tol=1e-6, max_iters=300)

    print(f"\nP{k} elements, {A.nrows} unknowns")
    print(header)
    for name, make in (
        ("AMG", lambda t: VCyclePreconditioner(build_hierarchy(A, theta=t))),
        ("GAMG", lambda t: TwoLevelPreconditioner(A, P, coarse="amg", theta=t, presmooth=True)),
    ):
        counts = []
        for theta in THETAS:
            _, rep = fgmres(A, make(theta), np.zeros(A.nrows), cfg, x0=x0)
            counts.append(rep.iterations if rep.converged else -rep.iterations)
        row = " ".join(f"{c:>9}" for c in counts)
        print(f"{name:>12} {row} {max(counts) - min(counts):>8}")
