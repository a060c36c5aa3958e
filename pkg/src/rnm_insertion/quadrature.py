"""Product quadrature rules used by the kernel, Ward and balayage code."""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy.special import roots_jacobi


@lru_cache(maxsize=64)
def gauss_legendre(order: int):
    x, w = np.polynomial.legendre.leggauss(order)
    x.setflags(write=False)
    w.setflags(write=False)
    return x, w


@lru_cache(maxsize=64)
def _gauss_jacobi(order: int, beta: float):
    # weight (1 + x)^beta on [-1, 1]
    x, w = roots_jacobi(order, 0.0, beta)
    return x, w


def composite_rule(breaks, order: int = 24):
    """Composite Gauss-Legendre nodes/weights over consecutive breakpoints."""
    breaks = np.asarray(breaks, dtype=float)
    x, w = gauss_legendre(order)
    a, b = breaks[:-1, None], breaks[1:, None]
    nodes = 0.5 * (b - a) * (x[None, :] + 1.0) + a
    weights = 0.5 * (b - a) * w[None, :]
    return nodes.ravel(), weights.ravel()


def power_weight_rule(power: float, breaks, order: int = 24):
    """Nodes/weights for int_0^T g(t) t^power dt with g smooth.

    The first panel [0, breaks[1]] uses Gauss-Jacobi so the algebraic
    endpoint behaviour is integrated exactly; the remaining panels are
    Gauss-Legendre with t^power folded into the weights.
    """
    breaks = np.asarray(breaks, dtype=float)
    if breaks[0] != 0.0:
        raise ValueError("power_weight_rule expects breaks starting at 0")
    h = breaks[1]
    if power == 0.0:
        return composite_rule(breaks, order)
    xj, wj = _gauss_jacobi(order, float(power))
    t0 = 0.5 * h * (xj + 1.0)
    w0 = (0.5 * h) ** (power + 1.0) * wj
    if len(breaks) == 2:
        return t0, w0
    t1, w1 = composite_rule(breaks[1:], order)
    return np.concatenate([t0, t1]), np.concatenate([w0, w1 * t1 ** power])


def graded_breaks(t_max: float, first: float, panels: int) -> np.ndarray:
    """0, first, then geometric-ish spacing up to t_max."""
    first = min(first, t_max)
    if panels <= 1 or first >= t_max:
        return np.array([0.0, t_max])
    rest = np.geomspace(first, t_max, panels)
    return np.concatenate([[0.0], rest])


def uniform_breaks(t_max: float, panels: int, extra=()) -> np.ndarray:
    pts = set(np.linspace(0.0, t_max, panels + 1).tolist())
    pts.update(float(e) for e in extra if 0.0 < e < t_max)
    return np.array(sorted(pts))


def trapezoid_angles(m: int):
    """Equispaced angles with weights summing to 2 pi (spectral for periodic integrands)."""
    theta = 2.0 * math.pi * np.arange(m) / m
    return theta, np.full(m, 2.0 * math.pi / m)


def smooth_step(x):
    """C-infinity step: 0 for x <= 0, 1 for x >= 1."""
    x = np.clip(np.asarray(x, dtype=float), 0.0, 1.0)

    def f(u):
        out = np.zeros_like(u)
        m = u > 0
        out[m] = np.exp(-1.0 / u[m])
        return out

    a, b = f(x), f(1.0 - x)
    return a / (a + b)


@dataclass(frozen=True)
class QuadSpec:
    """Resolution of the polar product rules.

    ``radial_panels`` x ``radial_order`` Gauss nodes in the radial variable and
    ``angular`` trapezoid nodes (0 means choose from the integrand scale).
    """

    radial_panels: int = 12
    radial_order: int = 24
    angular: int = 0

    def refined(self) -> "QuadSpec":
        ang = 0 if self.angular == 0 else int(self.angular * 1.5)
        return QuadSpec(int(self.radial_panels * 1.5) + 1, self.radial_order + 8, ang)
