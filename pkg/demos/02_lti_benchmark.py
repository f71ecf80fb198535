"""Cubic feedback for a two-state LTI plant with a sixth-order state cost.

Runs the search with the cubic basis and with a linear-only basis, then
prints the learned weights and costs side by side.
"""

import numpy as np

from saop.bench import lti_nonquadratic
from saop.mras import SaopConfig, run

results = {}
for basis in ("cubic", "linear"):
    problem = lti_nonquadratic(basis=basis)
    result = results[basis] = run(problem, SaopConfig(seed=0))
    print(f"{basis:>6} basis {problem.basis.descriptors}")
    print(f"       status {result.status} after {result.iterations} iterations, {result.total_samples} samples")
    print(f"       J(w*) = {result.j_star:.1f}")
    print(f"       w*    = {np.round(result.w_star, 4)}\n")

traj, _ = lti_nonquadratic().trajectory(results["cubic"].w_star)
print("cubic closed loop: |x(t)| at t = 0, 1, 2, 5, 10:",
      np.round(np.linalg.norm(traj.states[[0, 100, 200, 500, 1000]], axis=1), 4))
