"""Search restricted to policies whose closed loop contracts around its nominal path.

Every sampled weight vector is rolled out and checked in a tube of radius
ell around its own trajectory; failing samples never become elites. The
returned policy is then driven with bounded random disturbances and the
squared deviation from the nominal path is compared with the analytic
envelope.
"""

import numpy as np

from saop.bench import lti_nonquadratic
from saop.contraction import bound_envelope, metric_deviation, ultimate_bound
from saop.dynamics import piecewise_disturbance
from saop.mras import SaopConfig, run

problem = lti_nonquadratic()
spec = problem.contraction
result = run(problem, SaopConfig(seed=0), robust=spec)
print(f"J(w*) = {result.j_star:.1f}, w* = {np.round(result.w_star, 4)}")
print("samples rejected by the tube check, per iteration:", [h.rejected_robust for h in result.history])

report = problem.verify(result.w_star)
print(f"tube check on w*: {'pass' if report.passed else 'fail'}, worst margin {report.worst_margin:.3g}")

nominal, _ = problem.trajectory(result.w_star)
envelope = bound_envelope(spec, nominal.times)
rng = np.random.default_rng(1)
ratios = []
for _ in range(20):
    d = piecewise_disturbance(spec.rho_max, 2, problem.cost.horizon, rng)
    traj, _ = problem.trajectory(result.w_star, disturbance=d)
    dev = metric_deviation(traj.states, nominal.states, spec.M)
    ratios.append(np.max(dev[1:] / envelope[1:]))
print(f"ultimate bound {ultimate_bound(spec)}; worst deviation/envelope over 20 disturbances {max(ratios):.3f}")
