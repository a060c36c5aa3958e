"""Insertion-difference fields and their mass balance.

rho_n = R~_n - R_n compares the unrescaled one-point functions with and
without the point charge.  As n grows the inserted mass -c concentrates at
the charge and +c is swept to the droplet boundary (harmonic measure from
infinity for the pure-log insertion, from the charge for the Green one).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import integrate

from .errors import NumericalError, PreconditionError
from .kernel_engine import (FieldSample, NonRadialModel, RadialModel, nonradial_kernel,
                            unrescaled_density, weighted_ml)
from .quadrature import composite_rule, power_weight_rule, trapezoid_angles, uniform_breaks
from .special_fn import regularized_gamma_q, weighted_ml_excess

INNER_FRACTION = 0.5
RIM_WINDOW = (0.9, 1.1)


@dataclass
class BalayageField:
    field: FieldSample
    normalization: str
    inner_mass: float
    total_mass: float
    rim_mass: float = math.nan
    metadata: dict = field(default_factory=dict)

    def report(self, expected_c=None) -> dict:
        out = {"inner_mass": self.inner_mass, "rim_mass": self.rim_mass,
               "total_mass": self.total_mass, "normalization": self.normalization}
        if expected_c is not None:
            out["expected_c"] = expected_c
        out.update(self.metadata)
        return out


# ---------------------------------------------------------------------------
# Radial fields
# ---------------------------------------------------------------------------

def _radial_rho(with_charge: RadialModel, without: RadialModel, r):
    return unrescaled_density(with_charge, r) - unrescaled_density(without, r)


def _outer_radius(model: RadialModel) -> float:
    """Radius past which both densities are below 1e-16 n."""
    R = model.droplet_radius
    r = R * (1.0 + 8.0 / math.sqrt(model.n)) + 0.1
    base = model.with_(c=0.0)
    while (unrescaled_density(model, r) > 1e-16 * model.n or unrescaled_density(base, r) > 1e-16 * model.n):
        r *= 1.25
        if r > 100 * R:
            raise NumericalError("densities do not decay outside the droplet")
    return r


def radial_masses(k: int, c: float, n: int, tau0: float = 1.0, panels: int = 8, order: int = 32) -> dict:
    """Masses of rho_n over the inner disk, the rim annulus and the plane.

    rho_n is radial, so int f dA = int_0^inf f(sqrt t) dt.  Each window is a
    composite Gauss rule in t; the first panel carries the t^c behaviour of
    the inserted density by Gauss-Jacobi.
    """
    model = RadialModel(k, c, tau0, n)
    base = model.with_(c=0.0)
    R = model.droplet_radius
    r_in, (a, b) = INNER_FRACTION * R, (RIM_WINDOW[0] * R, RIM_WINDOW[1] * R)
    r_out = max(_outer_radius(model), 1.2 * b)
    edges = [0.0, r_in ** 2, a ** 2, b ** 2, r_out ** 2]

    def window(t0, t1, singular):
        if singular:
            # separate t^c factor of the charged density near 0
            t, w = power_weight_rule(c, uniform_breaks(t1, panels), order)
            with np.errstate(divide="ignore", invalid="ignore"):
                charged = unrescaled_density(model, np.sqrt(t)) * t ** (-c)
            charged = np.where(np.isfinite(charged), charged, 0.0)
            t2, w2 = composite_rule(np.linspace(t0, t1, panels + 1), order)
            return float(np.sum(w * charged) - np.sum(w2 * unrescaled_density(base, np.sqrt(t2))))
        t, w = composite_rule(np.linspace(t0, t1, panels + 1), order)
        return float(np.sum(w * _radial_rho(model, base, np.sqrt(t))))

    parts = [window(edges[0], edges[1], c != 0)] + [window(edges[i], edges[i + 1], False) for i in (1, 2, 3)]
    return {"inner_mass": parts[0], "rim_mass": parts[2], "total_mass": math.fsum(parts),
            "inner_radius": r_in, "rim_window": [a, b], "outer_radius": r_out}


def radial_masses_exact(k: int, c: float, n: int, r_in: float, r_out: float | None = None) -> float:
    """int_{r_in<|zeta|<r_out} rho_n dA by regularised incomplete gammas (oracle).

    Each orthogonal term of the unrescaled density has mass P(alpha_j, n r^2k)
    inside radius r, alpha_j = (j+1+c)/k.
    """
    def inside(cc, r):
        if r is None:
            return float(n)
        x = n * r ** (2 * k)
        return math.fsum(1.0 - regularized_gamma_q((j + 1.0 + cc) / k, x) for j in range(n))

    lo = 0.0 if r_in == 0 else inside(c, r_in) - inside(0.0, r_in)
    hi = inside(c, r_out) - inside(0.0, r_out)
    return hi - lo


def rho_field_radial(k: int, c: float, n: int, grid, tau0: float = 1.0) -> BalayageField:
    """rho_n on ``grid`` (complex points) with the mass report for the pure-log insertion."""
    grid = np.asarray(grid, dtype=complex).ravel()
    model = RadialModel(k, c, tau0, n)
    if c < 0 and np.any(grid == 0):
        raise PreconditionError("grid contains the insertion point, where the density is infinite for c < 0")
    values = _radial_rho(model, model.with_(c=0.0), grid)
    masses = radial_masses(k, c, n, tau0)
    fs = FieldSample(grid, values, "rho_n", model,
                     {"normalization": "pure-log", "inner_radius": masses["inner_radius"],
                      "rim_window": masses["rim_window"]})
    return BalayageField(fs, "pure-log", masses["inner_mass"], masses["total_mass"], masses["rim_mass"],
                         {"inner_radius": masses["inner_radius"], "rim_window": masses["rim_window"]})


# ---------------------------------------------------------------------------
# Non-radial fields on the Ginibre disk
# ---------------------------------------------------------------------------

def _ginibre_density(n, zeta):
    return unrescaled_density(RadialModel(1, 0.0, 1.0, n), zeta)


def nonradial_masses(model: NonRadialModel, density, order: int = 24, angular: int = 256) -> dict:
    """Masses of a non-radial rho_n: disk around the charge, rim annulus, plane.

    The rim mass is also split by the line through 0 orthogonal to a, giving
    the part on the side of the charge and the opposite part.
    """
    n, a = model.n, model.a
    theta, wth = trapezoid_angles(angular)
    rmax = 1.0 + math.sqrt(60.0 / n) + 0.25

    def polar(centre, r0, r1, panels):
        r, wr = composite_rule(np.linspace(r0, r1, panels + 1), order)
        Z = centre + r[:, None] * np.exp(1j * theta)[None, :]
        vals = density(Z) - _ginibre_density(n, Z)
        return Z, vals * (wr * r)[:, None] * wth[None, :] / math.pi

    r_in = INNER_FRACTION * (1.0 - abs(a))
    _, w_in = polar(a, 0.0, r_in, 4)
    Zr, w_rim = polar(0.0, *RIM_WINDOW, 4)
    _, w_tot_in = polar(0.0, 0.0, 1.0, 8)
    _, w_tot_out = polar(0.0, 1.0, rmax, 8)
    direction = a / abs(a) if a != 0 else 1.0
    near = np.real(Zr * np.conj(direction)) > 0
    return {"inner_mass": float(np.sum(w_in)), "rim_mass": float(np.sum(w_rim)),
            "rim_mass_near": float(np.sum(w_rim[near])), "rim_mass_far": float(np.sum(w_rim[~near])),
            "total_mass": float(np.sum(w_tot_in) + np.sum(w_tot_out)), "inner_radius": r_in,
            "rim_window": list(RIM_WINDOW)}


def rho_field_nonradial(model: NonRadialModel, grid) -> BalayageField:
    grid = np.asarray(grid, dtype=complex).ravel()
    K = nonradial_kernel(model)
    values = K.density(grid) - _ginibre_density(model.n, grid)
    masses = nonradial_masses(model, K.density)
    meta = {k: masses[k] for k in ("inner_radius", "rim_window", "rim_mass_near", "rim_mass_far")}
    meta.update(normalization=model.normalization, gram_condition=K.condition)
    fs = FieldSample(grid, values, "rho_n", model, meta)
    return BalayageField(fs, model.normalization, masses["inner_mass"], masses["total_mass"],
                         masses["rim_mass"], meta)


# ---------------------------------------------------------------------------
# Mass identities of the limiting fields
# ---------------------------------------------------------------------------

def _quad(f, a, b, points=None):
    val, err = integrate.quad(f, a, b, points=points, epsabs=1e-13, epsrel=1e-12, limit=400)
    if not math.isfinite(val) or err > 1e-8:
        raise NumericalError(f"quadrature did not converge on [{a}, {b}] (estimate {err:.3g})")
    return val


def _tail_cut(alpha_max: float) -> float:
    return alpha_max + 60.0 + 12.0 * math.sqrt(alpha_max + 60.0)


def insertion_mass_direct(k: int, c: float) -> float:
    """I_{c,k} = int_0^inf [k - s^(1-k) W(s)] dt, s = t^(1/k), W = weighted_ml.

    W is s^c e^{-s^k} E_{1/k,(1+c)/k}(s); past t = 1 the cancelling
    difference is taken from ``weighted_ml_excess``.
    """
    if c <= -1 or k < 1:
        raise PreconditionError("insertion_mass_identity needs c > -1 and k >= 1")

    def near(t):
        s = t ** (1.0 / k)
        return k - s ** (1 - k) * float(weighted_ml(k, c, s))

    def far(t):
        s = t ** (1.0 / k)
        return -s ** (1 - k) * float(weighted_ml_excess(k, c, s))

    T = _tail_cut((k + c) / k)
    return _quad(near, 0.0, 1.0) + _quad(far, 1.0, T)


def _unit_integrand(alpha):
    """1 - t^(alpha-1) e^{-t} E_{1,alpha}(t) = Q(alpha, t) - t^(alpha-1) e^{-t} / Gamma(alpha)."""
    lg = math.lgamma(alpha)

    def f(t):
        return regularized_gamma_q(alpha, t) - math.exp((alpha - 1.0) * math.log(t) - t - lg)

    return f


def insertion_mass_split(k: int, c: float) -> float:
    """Sum over residue classes of the k = 1 integrals I_{(l+c+1)/k - 1, 1}."""
    if c <= -1 or k < 1:
        raise PreconditionError("insertion_mass_identity needs c > -1 and k >= 1")
    total = []
    for l in range(k):
        alpha = (l + c + 1.0) / k
        f = _unit_integrand(alpha)
        total.append(_quad(f, 0.0, 1.0) + _quad(f, 1.0, _tail_cut(alpha)))
    return math.fsum(total)


def insertion_mass_identity(k: int, c: float, route: str = "direct") -> float:
    """int (laplace Q0 - R) dA for the limiting density with charge c; equals c + (1-k)/2."""
    if route == "direct":
        return insertion_mass_direct(k, c)
    if route == "split":
        return insertion_mass_split(k, c)
    raise PreconditionError(f"unknown route {route!r}")


def limit_mass_deficit(k: int, c: float) -> float:
    """int (R|_{c=0} - R) dA, the mass expelled by the charge (equals c)."""
    return insertion_mass_identity(k, c) - insertion_mass_identity(k, 0.0)
