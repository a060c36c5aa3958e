"""Berezin kernel, Cauchy transform and Ward-equation residuals.

For the limiting field with kernel L0 and density R,

    B(z, w) = |L0(z, w)|^2 exp(-V0(w)) / L0(z, z),
    C(z)    = int B(z, w) / (z - w) dA(w),

and Ward's equation reads  dbar C = R - laplace V0 - laplace log R  on C \\ {0}
(laplace = d dbar, a quarter of the usual Laplacian).

Two independent evaluations of C are provided.  ``cauchy_transform_quad``
integrates the definition numerically.  ``cauchy_transform_radial`` uses
the monomial structure: with s = |z|^2, t = tau0 s^k and
L(s) = L0(z, z) = sum_j a_j s^j,

    C(z) = (1/z) [ sum_j P((j+1+c)/k, t)  -  s L'(s) / L(s) ],

the first part being the holomorphic-in-w contribution S1 (dbar S1 = R) and
the second S2 = d log L0(z, z).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import gammaln, logsumexp

from .errors import NumericalError, PreconditionError
from .kernel_engine import RadialModel, _radial_extent, kernel_log, limiting_density, log_norm
from .quadrature import QuadSpec, composite_rule, power_weight_rule, smooth_step, trapezoid_angles, uniform_breaks


def berezin(model: RadialModel, z, w):
    """B(z, w) = |L0(z,w)|^2 e^{-V0(w)} / L0(z,z), vectorised over w."""
    if z == 0 and model.c > 0:
        raise PreconditionError("Berezin kernel undefined where R vanishes (z = 0, c > 0)")
    w = np.asarray(w, dtype=complex)
    la, _ = kernel_log(model, z, w)
    ld, _ = kernel_log(model, z, z)
    with np.errstate(divide="ignore", invalid="ignore"):
        out = np.exp(2.0 * la - model.V0(w) - ld)
    out = np.where(np.isnan(out), 0.0, out)
    return float(out) if out.ndim == 0 else out


# ---------------------------------------------------------------------------
# Cauchy transform: direct quadrature
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class CauchyResult:
    value: complex
    error_estimate: float


def _cauchy_polar(model, z, spec: QuadSpec) -> complex:
    z = complex(z)
    rz = abs(z)
    ext = _radial_extent(model, z)
    ang = spec.angular or 256
    theta, wth = trapezoid_angles(ang)
    ld, _ = kernel_log(model, z, z)
    patch = float(model.c) != int(model.c)
    # for non-integer c the |w|^(2c) factor is not smooth at 0; a cutoff chi
    # (1 on |w| < rz/10, 0 on |w| > 3rz/5) moves that region onto its own grid
    r1, r2 = 0.1 * rz, 0.6 * rz

    def chi(r):
        return 1.0 - smooth_step((r - r1) / (r2 - r1)) if patch else np.zeros_like(r)

    origin = 0.0
    if patch:
        # t = |w|^2, measure t^c e^{-tau0 t^k} dt dtheta / (2 pi)
        t, wt = power_weight_rule(model.c, uniform_breaks(r2 ** 2, max(2, spec.radial_panels // 3)),
                                  spec.radial_order)
        W = np.sqrt(t)[:, None] * np.exp(1j * theta)[None, :]
        la, _ = kernel_log(model, z, W)
        g = np.exp(2.0 * la - model.tau0 * t[:, None] ** model.k - ld) * chi(np.sqrt(t))[:, None] / (z - W)
        # trapezoid weights 2 pi / m against the measure's 1 / (2 pi)
        origin = np.sum(wt[:, None] * g) / ang

    # z-centred piece: w = z + rho e^{i phi}, dA = rho drho dphi / pi so
    # B (1 - chi) / (z - w) dA = -B (1 - chi) e^{-i phi} drho dphi / pi
    rho, wr = composite_rule(np.linspace(0.0, ext + rz, spec.radial_panels + 1), spec.radial_order)
    W = z + rho[:, None] * np.exp(1j * theta)[None, :]
    r = np.abs(W)
    live = (r < ext) & ((r > r1) if patch else True)
    B = np.zeros(W.shape)
    la, _ = kernel_log(model, z, W[live])
    with np.errstate(divide="ignore", invalid="ignore"):
        B[live] = np.exp(2.0 * la - model.V0(W[live]) - ld) * (1.0 - chi(r[live]))
    z_part = -np.sum(wr[:, None] * wth[None, :] * B * np.exp(-1j * theta)[None, :]) / math.pi
    return complex(origin + z_part)


def cauchy_transform_quad(model: RadialModel, z, quad_spec: QuadSpec | None = None,
                          return_error: bool = False):
    """C(z) by polar quadrature centred at z, with an origin patch.

    A smooth partition of unity isolates a disk around 0 (radius |z|/2), where
    the |w|^(2c) factor is integrated by a Gauss-Jacobi rule in |w|^2.  The
    remainder is integrated in polar coordinates about z, whose Jacobian
    cancels the 1/(z - w) singularity.  The refinement difference is the
    error estimate.
    """
    if z == 0:
        raise PreconditionError("Cauchy transform quadrature needs z != 0")
    spec = quad_spec or QuadSpec(radial_panels=12, radial_order=20, angular=192)
    coarse = _cauchy_polar(model, z, spec)
    fine = _cauchy_polar(model, z, QuadSpec(spec.radial_panels + 4, spec.radial_order + 8,
                                            int(spec.angular * 4 / 3) if spec.angular else 0))
    err = abs(fine - coarse)
    if not np.isfinite(fine) or err > 1e-3:
        raise NumericalError(f"Cauchy transform quadrature not converged (change {err:.3g})")
    return CauchyResult(fine, err) if return_error else fine


# ---------------------------------------------------------------------------
# Cauchy transform: radial semi-analytic form
# ---------------------------------------------------------------------------

def _log_sum_P(alpha: float, t: float, J: int) -> float:
    """log sum_{m>=0} P(alpha + m, t) = log e^{-t} sum_i (i+1) t^{alpha+i} / Gamma(alpha+i+1)."""
    i = np.arange(J, dtype=float)
    terms = np.log1p(i) + (alpha + i) * math.log(t) - gammaln(alpha + i + 1.0)
    if terms[-1] - terms.max() > -40:
        raise NumericalError("S1 series truncated too early")
    return -t + float(logsumexp(terms))


def _horizon(k, t):
    return int(k * (t + 12.0 * math.sqrt(t) + 60.0)) + 20


def cauchy_parts(model: RadialModel, z):
    """(S1, S2) with C = S1 - S2 for the radial limiting kernel."""
    z = complex(z)
    if z == 0:
        raise PreconditionError("radial Cauchy transform needs z != 0")
    k, c = model.k, model.c
    scale = model.tau0 ** (1.0 / (2 * k))
    u = scale * z
    s = abs(u) ** 2
    t = s ** k
    J = _horizon(k, t)
    s1 = math.fsum(math.exp(_log_sum_P((l + 1.0 + c) / k, t, J)) for l in range(k))
    # S2: s L'(s)/L(s) = sum j a_j s^j / sum a_j s^j
    j = np.arange(J * 1.0 + k)
    base = j * math.log(s) - log_norm(model.with_(tau0=1.0), j)
    if base[-1] - base.max() > -40:
        raise NumericalError("S2 series truncated too early")
    with np.errstate(divide="ignore"):
        num = logsumexp(base[1:] + np.log(j[1:]))
    den = logsumexp(base)
    s2 = math.exp(num - den)
    return scale * s1 / u, scale * s2 / u


def cauchy_transform_radial(model: RadialModel, z) -> complex:
    s1, s2 = cauchy_parts(model, z)
    return s1 - s2


# ---------------------------------------------------------------------------
# Ward residual
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class WardComponents:
    dbar_C: complex
    R: float
    laplace_V0: float
    laplace_log_R: float


@dataclass(frozen=True)
class WardResidualReport:
    point: complex
    residual: float
    fd_step: float
    quad_error_estimate: float
    components: WardComponents
    richardson_change: float = 0.0

    def row(self):
        c = self.components
        return [self.point.real, self.point.imag, self.residual, self.fd_step,
                self.quad_error_estimate, self.richardson_change,
                c.dbar_C.real, c.dbar_C.imag, c.R, c.laplace_V0, c.laplace_log_R]


WARD_HEADER = ["re", "im", "residual", "fd_step", "quad_error_estimate", "richardson_change",
               "dbar_C_re", "dbar_C_im", "R", "laplace_V0", "laplace_log_R"]


def _dbar(f, z, h):
    return 0.25 * ((f(z + h) - f(z - h)) + 1j * (f(z + 1j * h) - f(z - 1j * h))) / h


def _laplace(f, z, h):
    # d dbar = (1/4)(d_xx + d_yy), five-point stencil
    return 0.25 * (f(z + h) + f(z - h) + f(z + 1j * h) + f(z - 1j * h) - 4.0 * f(z)) / h ** 2


def _components(model, z, h, cauchy):
    R = float(limiting_density(model, z))
    lap_v0 = float(model.laplace_Q0(z))
    dbar_c = complex(_dbar(cauchy, z, h))
    lap_log = float(_laplace(lambda x: math.log(limiting_density(model, x)), z, h))
    return WardComponents(dbar_c, R, lap_v0, lap_log)


def _residual(comp: WardComponents) -> float:
    return abs(comp.dbar_C - comp.R + comp.laplace_V0 + comp.laplace_log_R)


def ward_residual(model: RadialModel, z, fd_step: float = 1e-3, cauchy: str = "radial",
                  quad_spec: QuadSpec | None = None, tolerance: float = 1e-2) -> WardResidualReport:
    """|dbar C - R + laplace V0 + laplace log R| at z != 0.

    Central differences with step ``fd_step * max(|z|, 0.1)``; the same
    quantities at half the step give the Richardson change, and a change
    beyond ``tolerance`` is reported as a numerical failure.
    """
    z = complex(z)
    if z == 0:
        raise PreconditionError("Ward residual is evaluated on C \\ {0}")
    if not fd_step > 0:
        raise PreconditionError("fd_step must be positive")
    h = fd_step * max(abs(z), 0.1)
    if h > 0.25 * abs(z):
        raise PreconditionError("fd_step too large relative to |z|")
    if cauchy == "radial":
        C = lambda x: cauchy_transform_radial(model, x)  # noqa: E731
        quad_err = 0.0
    elif cauchy == "quad":
        C = lambda x: cauchy_transform_quad(model, x, quad_spec)  # noqa: E731
        quad_err = cauchy_transform_quad(model, z, quad_spec, return_error=True).error_estimate / h
    else:
        raise PreconditionError(f"unknown Cauchy transform route {cauchy!r}")
    comp = _components(model, z, h, C)
    half = _components(model, z, 0.5 * h, C)
    change = abs(_residual(comp) - _residual(half))
    scale = max(1.0, comp.R, comp.laplace_V0)
    if change > tolerance * scale:
        raise NumericalError(f"finite-difference step too large (Richardson change {change:.3g})")
    # rounding floor of the stencils: a few ulps of each evaluator over h, h^2
    floor = 8.0 * np.finfo(float).eps * ((1.0 + abs(C(z))) / h + 4.0 * (1.0 + abs(math.log(comp.R))) / h ** 2 + scale)
    return WardResidualReport(z, _residual(comp), h, float(quad_err + floor), comp, change)
