"""Poke at the discounted Bellman system behind each Newton step.

The reduced Newton system has coefficient matrix D(rP)(I - rho * P_rc),
where P_rc transports a row distribution forward through the plan and back.
This script verifies its textbook structure numerically: stochasticity,
stationarity, reversibility, the spectrum bounds before and after diagonal
preconditioning, and the forcing test satisfied by the annealed solve.
"""

import numpy as np

import otnewton as ot
from otnewton.dual import DualState
from otnewton.newton import DiscountedSystem, lambda2, newton_solve

n = 64
rng = np.random.default_rng(8)
problem = ot.Problem(
    C=ot.grid_points_cost(n, "l1"),
    r=ot.gen_marginal(n, "smooth-random", seed=8),
    c=ot.gen_marginal(n, "smooth-random", seed=1008),
)
state = DualState(problem, gamma=16.0,
                  u=np.log(problem.r) + 0.3 * rng.standard_normal(n),
                  v=np.log(problem.c) + 0.3 * rng.standard_normal(n))
state.rebalance_columns()
sys = DiscountedSystem.from_state(state)

dense = sys.dense_prc()
print(f"row-stochasticity error:  {np.abs(dense @ np.ones(n) - 1).max():.2e}")
print(f"stationarity error:       {np.abs(dense.T @ sys.rP - sys.rP).max():.2e}")
bal = np.diag(sys.rP) @ dense
print(f"reversibility error:      {np.abs(bal - bal.T).max():.2e}")
print(f"second eigenvalue:        {lambda2(sys):.6f}")

rho = 0.9
evals = np.linalg.eigvalsh(sys.dense_F(rho))
print(f"\nF(rho={rho}) spectrum [{evals.min():.3e}, {evals.max():.3e}] inside "
      f"[{(1 - rho) * sys.rP.min():.3e}, {(1 + rho) * sys.rP.max():.3e}]")
M = sys.rP * (1.0 - rho * sys.diag_prc())
ev = np.linalg.eigvalsh(sys.dense_F(rho) / np.sqrt(M)[:, None] / np.sqrt(M)[None, :])
print(f"preconditioned spectrum   [{ev.min():.4f}, {ev.max():.4f}] around 1")

grad_u = state.row_sums() - state.r
eta = 0.1
res = newton_solve(grad_u, sys, eta=eta)
resid = np.abs(sys.apply_F(1.0, res.d_u) + grad_u).sum()
print(f"\nannealed solve: discount {res.rho_final:.4f}, {res.cg_iters} CG iterations")
print(f"undiscounted residual {resid:.3e} <= eta * ||grad||_1 = "
      f"{eta * np.abs(grad_u).sum():.3e}")
