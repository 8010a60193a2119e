"""Watch the adaptive temperature schedule steer itself.

Each outer iteration projects onto the smoothed marginals at the current
inverse temperature, then adjusts the decay rate q from the worst
actual-to-predicted reduction ratio of its Newton steps: ratios near 1 mean
the warm starts are inside the superlinear zone and q can grow; low ratios
mean the temperature is dropping too fast.
"""

import numpy as np

import otnewton as ot

n = 1024
problem = ot.Problem(
    C=ot.grid_points_cost(n, "l2sq"),
    r=ot.gen_marginal(n, "smooth-random", seed=0),
    c=ot.gen_marginal(n, "smooth-random", seed=1000),
    label="demo-grid-1024",
)

sol = ot.mdot(problem, gamma_i=2.0 ** 5, gamma_f=2.0 ** 14, p=1.5, q_init=2.0)

print(f"{'t':>3} {'gamma':>9} {'tol':>9} {'newton':>7} {'cg':>5} "
      f"{'backtracks':>10} {'delta_min':>10} {'q_next':>7}")
for it in sol.iterations:
    d = it.stats.delta_min
    print(f"{it.t:>3} {it.gamma:>9.1f} {it.eps_d:>9.2e} "
          f"{it.stats.newton_steps:>7} {it.stats.cg_iters:>5} "
          f"{it.stats.backtracks:>10} {d if np.isfinite(d) else float('inf'):>10.3g} "
          f"{it.q_next:>7.3f}")

r = sol.report
print(f"\nrounded cost {r.primal_cost_rounded:.9f}  "
      f"(guaranteed within {r.error_bound:.2e} of optimal)")
print(f"operation counts by subroutine: {r.ops}")
print(f"wall time: {r.wall_ms:.0f} ms over {r.outer_iterations} outer iterations")
