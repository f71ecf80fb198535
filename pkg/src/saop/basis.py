"""Basis families and saturated linear-in-weights feedback policies."""

from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Callable, Optional, Sequence

import numpy as np


@dataclass(frozen=True)
class BasisBlock:
    """A vectorized group of basis functions.

    ``evaluate`` maps ``(..., n)`` states to ``(..., size)`` values and
    ``gradient`` (optional) maps them to ``(..., size, n)``.
    """

    size: int
    evaluate: Callable[[np.ndarray], np.ndarray]
    descriptors: tuple
    gradient: Optional[Callable[[np.ndarray], np.ndarray]] = None


class BasisSet:
    """Ordered family of scalar basis functions ``phi_1..phi_N`` of the state."""

    def __init__(self, blocks: Sequence[BasisBlock]):
        blocks = tuple(blocks)
        if not blocks or sum(b.size for b in blocks) < 1:
            raise ValueError("a basis needs at least one function")
        self.blocks = blocks

    def __len__(self):
        return sum(b.size for b in self.blocks)

    def __add__(self, other: "BasisSet") -> "BasisSet":
        return BasisSet(self.blocks + other.blocks)

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        if len(self.blocks) == 1:
            return self.blocks[0].evaluate(x)
        return np.concatenate([b.evaluate(x) for b in self.blocks], axis=-1)

    @property
    def descriptors(self) -> list:
        return [d for b in self.blocks for d in b.descriptors]

    @property
    def functions(self) -> list:
        """Per-function scalar callables, in basis order."""
        return [(lambda x, i=i: self(x)[..., i]) for i in range(len(self))]

    @property
    def has_gradient(self) -> bool:
        return all(b.gradient is not None for b in self.blocks)

    def gradient(self, x):
        """Jacobian of the basis vector, shape ``(..., N, n)``."""
        x = np.asarray(x, dtype=float)
        if not self.has_gradient:
            raise NotImplementedError("basis has no analytic gradient")
        return np.concatenate([b.gradient(x) for b in self.blocks], axis=-2)

    def to_json(self) -> str:
        return json.dumps({"size": len(self), "descriptors": self.descriptors})


def eval_basis(basis: BasisSet, x) -> np.ndarray:
    return basis(x)


def _fmt(v):
    return ",".join(f"{c:g}" for c in np.atleast_1d(v))


def make_rbf(centers, sigma, dims=None) -> BasisSet:
    """Gaussian radial basis ``exp(-||x - c_i||^2 / (2 sigma^2))``.

    ``dims`` selects the state coordinates the distance is measured on
    (all of them by default), e.g. ``(0, 1)`` for planar position.
    """
    if not sigma > 0:
        raise ValueError("sigma must be positive")
    c = np.atleast_2d(np.asarray(centers, dtype=float))
    if c.shape[0] < 1:
        raise ValueError("need at least one center")
    sel = None if dims is None else np.asarray(dims, dtype=int)
    inv = 1.0 / (2.0 * sigma**2)

    def project(x):
        return x if sel is None else x[..., sel]

    def evaluate(x):
        d = project(x)[..., None, :] - c
        return np.exp(-np.sum(d * d, axis=-1) * inv)

    def gradient(x):
        d = project(x)[..., None, :] - c
        phi = np.exp(-np.sum(d * d, axis=-1) * inv)
        g_sel = -2.0 * inv * d * phi[..., None]
        if sel is None:
            return g_sel
        g = np.zeros(x.shape[:-1] + (c.shape[0], x.shape[-1]))
        g[..., sel] = g_sel
        return g

    where = "" if sel is None else f" dims={tuple(int(i) for i in sel)}"
    desc = tuple(f"rbf center=({_fmt(ci)}) sigma={sigma:g}{where}" for ci in c)
    return BasisSet([BasisBlock(c.shape[0], evaluate, desc, gradient)])


def make_polynomial(terms, state_dim) -> BasisSet:
    """Monomial basis, one function per multi-index.

    Each term is a sequence of state indices (0-based, repeats allowed), so
    ``(0, 0, 1)`` is ``x1^2 x2`` and ``()`` is the constant 1.
    """
    exps = np.zeros((len(terms), state_dim), dtype=int)
    for r, term in enumerate(terms):
        for i in term:
            if not 0 <= i < state_dim:
                raise ValueError(f"index {i} out of range for state_dim={state_dim}")
            exps[r, i] += 1
    if len(terms) < 1:
        raise ValueError("need at least one term")

    def evaluate(x):
        return np.prod(x[..., None, :] ** exps, axis=-1)

    def gradient(x):
        xb = x[..., None, :]
        g = np.empty(x.shape[:-1] + exps.shape)
        for i in range(state_dim):
            lowered = exps.copy()
            lowered[:, i] = np.maximum(lowered[:, i] - 1, 0)
            g[..., i] = exps[:, i] * np.prod(xb**lowered, axis=-1)
        return g

    def name(row):
        parts = [f"x{i + 1}" + (f"^{p}" if p > 1 else "") for i, p in enumerate(row) if p]
        return "*".join(parts) or "1"

    return BasisSet([BasisBlock(len(terms), evaluate, tuple(name(r) for r in exps), gradient)])


def make_affine(matrix, offset, names=None) -> BasisSet:
    """Affine basis functions ``phi = A x - b`` (one per row of ``A``)."""
    a = np.atleast_2d(np.asarray(matrix, dtype=float))
    b = np.asarray(offset, dtype=float).reshape(a.shape[0])

    def evaluate(x):
        return x @ a.T - b

    def gradient(x):
        return np.broadcast_to(a, x.shape[:-1] + a.shape).copy()

    if names is None:
        names = [f"linear row={_fmt(r)} offset={bi:g}" for r, bi in zip(a, b)]
    return BasisSet([BasisBlock(a.shape[0], evaluate, tuple(names), gradient)])


def weights_matrix(w, input_dim, basis_size) -> np.ndarray:
    """One weight vector, flat (channel-major) or ``(m, N)``, as ``(m, N)``."""
    return np.asarray(w, dtype=float).reshape(input_dim, basis_size)


def policy_eval(w, basis, x, lower, upper) -> np.ndarray:
    """Saturated feedback ``u_j = clip(<w_j, phi(x)>, lower_j, upper_j)``."""
    lower = np.atleast_1d(np.asarray(lower, dtype=float))
    wm = weights_matrix(w, lower.shape[0], len(basis))
    return np.clip(basis(x) @ wm.T, lower, upper)


def make_policy(w, basis, lower, upper):
    """Single-trajectory policy ``x -> u`` for fixed weights."""
    lower = np.atleast_1d(np.asarray(lower, dtype=float))
    upper = np.atleast_1d(np.asarray(upper, dtype=float))
    wm = weights_matrix(w, lower.shape[0], len(basis))

    def policy(x):
        return np.clip(basis(x) @ wm.T, lower, upper)

    return policy


def make_batch_policy(ws, basis, lower, upper):
    """Row-wise policy for a batch: row ``i`` of the state uses ``ws[i]``."""
    lower = np.atleast_1d(np.asarray(lower, dtype=float))
    upper = np.atleast_1d(np.asarray(upper, dtype=float))
    wm = np.asarray(ws, dtype=float).reshape(-1, lower.shape[0], len(basis))

    def policy(x):
        return np.clip(np.einsum("bmn,bn->bm", wm, basis(x)), lower, upper)

    return policy


def policy_jacobian(w, basis, x, lower, upper) -> np.ndarray:
    """``du/dx`` of the saturated policy, shape ``(..., m, n)``.

    Channels pinned at a bound have zero derivative.
    """
    lower = np.atleast_1d(np.asarray(lower, dtype=float))
    upper = np.atleast_1d(np.asarray(upper, dtype=float))
    wm = weights_matrix(w, lower.shape[0], len(basis))
    raw = basis(x) @ wm.T
    free = (raw > lower) & (raw < upper)
    grad = np.einsum("mN,...Nn->...mn", wm, basis.gradient(x))
    return grad * free[..., None]
