"""Dubins car steering to (20, 20) around a square obstacle.

The policy has 80 basis functions per input channel (RBF grid, obstacle
boundary centers, affine terms). Prints progress per iteration and writes
the final path to dubins_path.csv.
"""

import numpy as np

from saop.bench import dubins_car
from saop.mras import SaopConfig, run

problem = dubins_car()


def progress(state, rec):
    print(f"k={rec.k:>2} N={rec.n_k:>4} gamma={rec.gamma:>10.1f} best={rec.best_j:>10.1f} ||Sigma||={rec.sigma_norm:.2e}")


result = run(problem, SaopConfig(seed=2, n_initial=100), callback=progress)
traj, j = problem.trajectory(result.w_star)
print(f"\nJ(w*) = {j:.1f}; reached goal: {problem.reaches_goal(result.w_star)}; "
      f"collision: {problem.collides(result.w_star)}; final position {np.round(traj.states[-1, :2], 3)}")
traj.to_csv("dubins_path.csv")
