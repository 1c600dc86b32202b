"""Solve the same indefinite Riccati equation with both drivers and
compare the results step by step.

Run: python3 demos/dense_vs_lowrank.py
"""

import numpy as np

from indcare import SolverOptions, gen_random_care, solve_lrri, solve_ri_dense

prob = gen_random_care(200, m1=2, m2=3, p=4, seed=42)
print(f"random stable plant: n={prob.n}, m1={prob.m1}, m2={prob.m2}, "
      f"p={prob.p}, gamma={prob.gamma}")

dense = solve_ri_dense(prob)
lowrank = solve_lrri(prob, SolverOptions(inner="radi"))

print("\ndense driver (matrix sign function inner solves)")
for row in dense.trace.rows:
    print(f"  step {row['step']}: normalized residual "
          f"{row['normalized_res']:.3e}, rank {row['rank']}")

print("\nlow-rank driver (factored inner solves)")
for row in lowrank.trace.rows:
    print(f"  step {row['step']}: normalized residual "
          f"{row['normalized_res']:.3e}, rank {row['rank']}")

x_lr = lowrank.z @ lowrank.z.T
rel = np.linalg.norm(x_lr - dense.x, 2) / np.linalg.norm(dense.x, 2)
print(f"\nsolutions agree to {rel:.3e} relative")
print(f"dense stores {dense.x.size} entries, "
      f"the factor stores {lowrank.z.size} "
      f"({lowrank.z.shape[0]}x{lowrank.z.shape[1]})")
