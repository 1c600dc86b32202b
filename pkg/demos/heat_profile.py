"""Low-rank solve of a large sparse heat-conduction problem.

The plant is a 1-d finite-difference heat rod with boundary actuation;
the quadratic term is indefinite because a disturbance input enters
with the opposite sign. Only tall factors are ever formed.

Run: python3 demos/heat_profile.py [n]
"""

import sys
import time

from indcare import SolverOptions, gen_heat_fd, solve_lrri

n = int(sys.argv[1]) if len(sys.argv) > 1 else 10000
prob = gen_heat_fd(n, m1=3, m2=3, p=6)
print(f"heat rod: n={prob.n}, sparse A with "
      f"{prob.a.nnz} nonzeros, gamma={prob.gamma}")

t0 = time.perf_counter()
res = solve_lrri(prob, SolverOptions(compression_tol=1e-15))
elapsed = time.perf_counter() - t0

print(f"\nconverged in {res.steps} outer steps ({elapsed:.1f}s)")
for row in res.trace.rows:
    print(f"  step {row['step']}: normalized residual "
          f"{row['normalized_res']:.3e}, rank {row['rank']}, "
          f"{row['seconds']:.2f}s")

frac = res.rank / prob.n
print(f"\nfinal factor is {prob.n}x{res.rank} "
      f"({100 * frac:.1f}% of the dense column count)")
print(f"normalized residual {res.metrics['normalized_res']:.3e}")
