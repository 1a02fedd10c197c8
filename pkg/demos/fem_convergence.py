"""Manufactured-solution convergence study for the Lagrange elements.

With u = sin(pi x) sin(pi y) sin(pi z) and f = 3 pi^2 u the discrete
L2 error should fall like h^(k+1).  Each system is solved well below
the discretisation error with V-cycle-preconditioned CG.
"""

import numpy as np

from auxmg.amg import VCyclePreconditioner, build_hierarchy
from auxmg.fem import l2_error
from auxmg.krylov import SolverConfig, pcg
from auxmg.problems import manufactured_solution, poisson_setup

exact, f = manufactured_solution()

for k, meshes in ((1, (4, 8, 16)), (2, (2, 4, 8)), (3, (1, 2, 4))):
    print(f"\nP{k} elements (expected order {k + 1})")
    print(f"{'n':>4} {'DOF':>7} {'CG its':>7} {'L2 error':>12} {'order':>7}")
    prev = None
    for n in meshes:
        problem = poisson_setup(n, k, f=f)
        A, rhs = problem.system.A, problem.system.rhs
        M = VCyclePreconditioner(build_hierarchy(A, theta=0.25))
        x, rep = pcg(A, M, rhs, SolverConfig(method="cg", rel_tol=1e-12, max_iters=300))
        coeffs = np.zeros(problem.fine_space.n_dofs)
        coeffs[problem.system.interior_to_full] = x
        err = l2_error(problem.fine_space, coeffs, exact)
        order = f"{np.log2(prev / err):7.2f}" if prev else "      -"
        print(f"{n:>4} {A.nrows:>7} {rep.iterations:>7} {err:>12.3e} {order}")
        prev = err
