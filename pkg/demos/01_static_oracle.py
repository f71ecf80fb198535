"""Adaptive search on a problem whose minimizer is known.

J(w) = ||w - w_target||^2 needs no simulation, so this shows the search
loop alone: the threshold walks down, the Gaussian mean walks toward the
target and the covariance shrinks.
"""

import numpy as np

from saop.bench import static_quadratic
from saop.mras import SaopConfig, run

target = np.array([0.3, -0.2, 0.5, -0.4, 0.1, 0.25])
problem = static_quadratic(target)
result = run(problem, SaopConfig(seed=0, max_samples=500_000))

print(f"{'k':>3} {'N_k':>7} {'gamma':>10} {'best J':>10} {'||Sigma||':>10}")
for rec in result.history[::5]:
    print(f"{rec.k:>3} {rec.n_k:>7} {rec.gamma:>10.4g} {rec.best_j:>10.3g} {rec.sigma_norm:>10.3g}")

print("\nfinal mean:", np.round(result.w_star, 4))
print("target:    ", target)
print(f"max abs error {np.max(np.abs(result.w_star - target)):.2e} after {result.iterations} iterations")
