"""Constrained (index-2) problem with an unstable plant.

A discretized Stokes-like channel flow carries an incompressibility
constraint J x = 0. All iterates must stay in ker J; a discrete
projector enforces this implicitly, and a small Bernoulli equation
pre-stabilizes the handful of unstable modes so the inner solver can
converge at all.

Run: python3 demos/constrained_stokes.py
"""

import numpy as np

from indcare import (InnerSolverFailure, NoConvergence, SolverOptions,
                     bernoulli_feedback, gen_stokes_dae2, solve_lrri)

prob = gen_stokes_dae2(12, m1=1, m2=1, p=6, convection=0.3,
                       n_unstable=2, seed=5)
print(f"stokes channel: n={prob.n} velocity unknowns, "
      f"{prob.n_c} constraints, 2 unstable modes injected")

z_b, k0, count = bernoulli_feedback(prob)
print(f"bernoulli pre-stabilization mirrors {count} modes "
      f"(feedback rank {z_b.shape[1]})")

print("\nwithout the feedback the inner solver stalls:")
try:
    solve_lrri(prob, SolverOptions(bernoulli="never", max_outer=12))
    print("  unexpectedly converged")
except (InnerSolverFailure, NoConvergence) as exc:
    print(f"  {type(exc).__name__}: {exc}")

print("\nwith the feedback (the default):")
res = solve_lrri(prob)
for row in res.trace.rows:
    print(f"  step {row['step']}: normalized residual "
          f"{row['normalized_res']:.3e}, rank {row['rank']}")

defect = np.linalg.norm((prob.j @ res.z).toarray()
                        if hasattr(prob.j @ res.z, "toarray")
                        else prob.j @ res.z)
print(f"\nconstraint defect |J Z| = {defect:.3e} "
      f"(|Z| = {np.linalg.norm(res.z):.3e})")
