"""
Auditing the backward pass against finite differences
=====================================================

Every gradient in the trainer is hand-derived, so a battery of oracle
comparisons guards it: analytic backprop vs central finite differences
on random parameters, batches, loss weights, and dropout masks, across
all four variants. Relative error above 1e-4 on any coordinate fails.
"""

from cake.gradcheck import REL_TOL, run_gradient_checks

results = run_gradient_checks(seed=0)

print(f"{'configuration':50}  params   max rel err")
for r in results:
    mark = "ok" if r.ok else "FAIL"
    print(f"{r.label:50}  {r.n_params:6d}   {r.max_rel_err:.3e}  {mark}")

worst = max(r.max_rel_err for r in results)
print(f"\n{len(results)} configurations, worst error {worst:.3e}, "
      f"tolerance {REL_TOL:.0e}")
print("all passed" if all(r.ok for r in results) else "FAILURES above")
