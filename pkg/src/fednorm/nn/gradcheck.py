"""Central-difference gradient checking for forward/backward pairs."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


def default_step(dtype) -> float:
    return 1e-6 if np.dtype(dtype) == np.float64 else 1e-3


def rel_error(analytic, numeric) -> float:
    """Max absolute difference scaled by the larger of the two gradients' max magnitudes."""
    a = np.asarray(analytic, dtype=np.float64)
    n = np.asarray(numeric, dtype=np.float64)
    scale = max(np.max(np.abs(a)), np.max(np.abs(n)), 1e-12)
    return float(np.max(np.abs(a - n)) / scale)


def numerical_gradient(f, x, dout, h):
    """d/dx of sum(f(x) * dout) by central differences; ``x`` is perturbed in place."""
    grad = np.zeros(x.shape, dtype=np.float64)
    flat = x.reshape(-1)
    g = grad.reshape(-1)
    dout64 = np.asarray(dout, dtype=np.float64)
    for i in range(flat.size):
        old = flat[i]
        flat[i] = old + h
        plus = np.sum(np.asarray(f(), dtype=np.float64) * dout64)
        flat[i] = old - h
        minus = np.sum(np.asarray(f(), dtype=np.float64) * dout64)
        flat[i] = old
        # use the step actually taken after rounding to the input dtype
        step = float(np.float64(old + x.dtype.type(h)) - np.float64(old - x.dtype.type(h)))
        g[i] = (plus - minus) / step
    return grad


@dataclass
class GradReport:
    errors: dict[str, float] = field(default_factory=dict)

    @property
    def max_rel_error(self) -> float:
        return max(self.errors.values()) if self.errors else 0.0

    def passed(self, tol: float) -> bool:
        return self.max_rel_error < tol


def finite_diff_check(forward, backward, inputs: dict, dout=None, h=None, rng=None) -> GradReport:
    """Compare a hand-written backward against central differences.

    ``forward(**inputs)`` returns ``(out, cache)``; ``backward(dout, cache)``
    returns gradients in the order of ``inputs`` (``None`` entries are skipped).
    A random upstream gradient is used when ``dout`` is not given.
    """
    names = list(inputs)
    out, cache = forward(**inputs)
    if dout is None:
        rng = rng or np.random.default_rng(0)
        dout = rng.standard_normal(np.shape(out)).astype(np.asarray(out).dtype)
    grads = backward(dout, cache)
    if not isinstance(grads, tuple):
        grads = (grads,)
    report = GradReport()
    for name, g in zip(names, grads):
        if g is None:
            continue
        x = inputs[name]
        step = h if h is not None else default_step(x.dtype)
        num = numerical_gradient(lambda: forward(**inputs)[0], x, dout, step)
        report.errors[name] = rel_error(g, num)
    return report
