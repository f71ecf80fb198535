"""Independent pure-Python oracle for a three-elite importance-weighted update.

Elites w = (1, 0), (0, 2), (-1, 1) with costs 1, 2, 3, S(J) = exp(-J), k = 2,
sampling density N(0, I) in two dimensions. Prints the frozen values used by
tests/test_mras.py.
"""

import math

W = [(1.0, 0.0), (0.0, 2.0), (-1.0, 1.0)]
J = [1.0, 2.0, 3.0]
K = 2


def density(w):
    return math.exp(-0.5 * (w[0] ** 2 + w[1] ** 2)) / (2 * math.pi)


raw = [math.exp(-j) ** K / density(w) for w, j in zip(W, J)]
total = sum(raw)
omega = [r / total for r in raw]
mu = [sum(o * w[i] for o, w in zip(omega, W)) for i in range(2)]
sigma = [[sum(o * (w[i] - mu[i]) * (w[j] - mu[j]) for o, w in zip(omega, W)) for j in range(2)] for i in range(2)]
print("omega", [repr(o) for o in omega])
print("mu", [repr(m) for m in mu])
print("sigma", [[repr(s) for s in row] for row in sigma])
