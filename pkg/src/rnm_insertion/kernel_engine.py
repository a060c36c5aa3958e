"""Correlation kernels and one-point densities for radial insertion ensembles.

Microscopic model: weight ``exp(-V0)`` on C with
``V0(z) = tau0 |z|^(2k) - 2 c log|z|`` and area measure ``dA = dx dy / pi``.
Orthogonal polynomials are monomials, so everything reduces to the norms
``||z^j||^2 = Gamma((j+c+1)/k) / (k tau0^((j+c+1)/k))``.  All sums are done
in log space because those norms overflow long before the interesting j.

A general ``tau0`` is removed by ``u = tau0^(1/2k) z``: the kernel scales as
``L(z, w) = tau0^((1+c)/k) L|_{tau0=1}(u_z, u_w)`` and the density as
``R(z) = tau0^(1/k) R|_{tau0=1}(u)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
from scipy import integrate
from scipy.special import gammaln, logsumexp

from .errors import NumericalError, PreconditionError
from .io import write_csv, write_json
from .quadrature import QuadSpec, composite_rule, power_weight_rule, trapezoid_angles, uniform_breaks
from .special_fn import ml_series_log, weighted_ml


@dataclass(frozen=True)
class RadialModel:
    """Parameters of the radial ensemble; single source of truth for V0, Q0."""

    k: int = 1
    c: float = 0.0
    tau0: float = 1.0
    n: int = 1
    beta: float = 1.0

    def __post_init__(self):
        if int(self.k) != self.k or self.k < 1:
            raise PreconditionError(f"k must be a positive integer, got {self.k}")
        object.__setattr__(self, "k", int(self.k))
        if not math.isfinite(self.c) or self.c <= -1:
            raise PreconditionError(f"charge c must be > -1, got {self.c}")
        if not (self.tau0 > 0 and math.isfinite(self.tau0)):
            raise PreconditionError(f"tau0 must be positive, got {self.tau0}")
        if int(self.n) != self.n or self.n < 1:
            raise PreconditionError(f"n must be a positive integer, got {self.n}")
        object.__setattr__(self, "n", int(self.n))
        if not (self.beta > 0 and math.isfinite(self.beta)):
            raise PreconditionError(f"beta must be positive, got {self.beta}")

    # potential evaluators ---------------------------------------------------
    def Q0(self, z):
        return self.tau0 * np.abs(z) ** (2 * self.k)

    def V0(self, z):
        r = np.abs(z)
        with np.errstate(divide="ignore"):
            logr = np.log(r)
        if self.c == 0:
            return self.Q0(z)
        return self.Q0(z) - 2.0 * self.c * logr

    def laplace_Q0(self, z):
        """d dbar Q0 = k^2 tau0 |z|^(2k-2)."""
        return self.k ** 2 * self.tau0 * np.abs(z) ** (2 * self.k - 2)

    @property
    def r_n(self) -> float:
        return self.n ** (-1.0 / (2 * self.k))

    @property
    def droplet_radius(self) -> float:
        """Radius of {Q0-droplet}: int_S laplace_Q0 dA = 1."""
        return (self.k * self.tau0) ** (-1.0 / (2 * self.k))

    @property
    def ml_params(self):
        return 1.0 / self.k, (1.0 + self.c) / self.k

    def with_(self, **kw) -> "RadialModel":
        d = dict(k=self.k, c=self.c, tau0=self.tau0, n=self.n, beta=self.beta)
        d.update(kw)
        return RadialModel(**d)

    def to_dict(self):
        return dict(k=self.k, c=self.c, tau0=self.tau0, n=self.n, beta=self.beta)


def log_norm(model: RadialModel, j):
    """log ||z^j||^2 in L^2(exp(-V0) dA)."""
    alpha = (np.asarray(j, dtype=float) + model.c + 1.0) / model.k
    return gammaln(alpha) - math.log(model.k) - alpha * math.log(model.tau0)


@dataclass(frozen=True)
class MomentTable:
    model: RadialModel
    log_norms: np.ndarray

    @property
    def J(self) -> int:
        return len(self.log_norms) - 1

    @cached_property
    def coefficients(self) -> np.ndarray:
        """a_j = 1/||z^j||^2 (may underflow to 0 for large j)."""
        return np.exp(-self.log_norms)


def build_moment_table(model: RadialModel, J: int) -> MomentTable:
    if J < model.n:
        raise PreconditionError(f"moment table horizon J={J} must be >= n={model.n}")
    ln = log_norm(model, np.arange(J + 1))
    ln.setflags(write=False)
    return MomentTable(model, ln)


def norm_by_quadrature(model: RadialModel, j: int) -> float:
    """||z^j||^2 = 2 int_0^inf r^(2j+2c+1) exp(-tau0 r^2k) dr by adaptive quadrature."""
    p = 2 * j + 2 * model.c + 1

    def f(r):
        return 2.0 * r ** p * math.exp(-model.tau0 * r ** (2 * model.k))

    peak = (p / (2 * model.k * model.tau0)) ** (1.0 / (2 * model.k)) if p > 0 else 1.0
    pts = [0.0, peak, 2 * peak + 1.0]
    total = 0.0
    for a, b in zip(pts[:-1], pts[1:]):
        total += integrate.quad(f, a, b, epsabs=0, epsrel=1e-13, limit=200)[0]
    total += integrate.quad(f, pts[-1], np.inf, epsabs=0, epsrel=1e-13, limit=200)[0]
    return total


# ---------------------------------------------------------------------------
# FieldSample
# ---------------------------------------------------------------------------

@dataclass
class FieldSample:
    points: np.ndarray
    values: np.ndarray
    label: str
    model: object = None
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        self.points = np.asarray(self.points, dtype=complex).ravel()
        self.values = np.asarray(self.values).ravel()
        if self.points.shape != self.values.shape:
            raise PreconditionError("FieldSample points and values differ in length")
        if not np.all(np.isfinite(self.points)):
            raise PreconditionError("FieldSample points must be finite")

    def rows(self):
        if np.iscomplexobj(self.values):
            return (["re", "im", "value_re", "value_im"],
                    [(p.real, p.imag, v.real, v.imag) for p, v in zip(self.points, self.values)])
        return ["re", "im", "value"], [(p.real, p.imag, v) for p, v in zip(self.points, self.values)]

    def sidecar(self) -> dict:
        model = self.model.to_dict() if hasattr(self.model, "to_dict") else self.model
        return {"label": self.label, "model": model, "count": int(self.points.size), **self.metadata}

    def to_csv(self, path, sidecar: bool = True):
        header, rows = self.rows()
        out = write_csv(path, header, rows)
        if sidecar:
            write_json(str(path) + ".json", self.sidecar())
        return out


def grid_points(xmin: float, xmax: float, num: int, ymin=None, ymax=None, ny=None) -> np.ndarray:
    """Row-major square grid (rows are y, columns x)."""
    ymin = xmin if ymin is None else ymin
    ymax = xmax if ymax is None else ymax
    ny = num if ny is None else ny
    x = np.linspace(xmin, xmax, num)
    y = np.linspace(ymin, ymax, ny)
    X, Y = np.meshgrid(x, y)
    return (X + 1j * Y).ravel()


# ---------------------------------------------------------------------------
# Finite-n density
# ---------------------------------------------------------------------------

def _log_partial_sums(k, c, tau0, log_norms, r, count, chunk=1 << 22):
    """log sum_{j<count} r^(2j) / ||z^j||^2 for r > 0 (array), windowed log-sum-exp.

    Terms are unimodal in j with peak near j = k tau0 r^(2k) and relative
    width ~ k sqrt(tau0 r^2k); only a window of +-(12 sd + 40 k) is summed.
    """
    r = np.asarray(r, dtype=float)
    out = np.empty_like(r)
    t = tau0 * r ** (2 * k)
    centre = np.clip(np.rint(k * t - c - 1.0), 0, count - 1).astype(np.int64)
    half = (k * (12.0 * np.sqrt(t) + 40.0)).astype(np.int64) + 2
    order = np.argsort(half)
    logr = np.log(r)
    pos = 0
    while pos < r.size:
        w = int(half[order[min(r.size - 1, pos)]])
        width = min(2 * w + 1, count)
        step = max(1, chunk // width)
        # grow the block while the window of its last member still fits
        sel = order[pos:pos + step]
        w = int(half[sel].max())
        width = min(2 * w + 1, count)
        lo = np.clip(centre[sel] - w, 0, max(count - width, 0))
        j = lo[:, None] + np.arange(width)[None, :]
        terms = 2.0 * j * logr[sel, None] - log_norms[j]
        out[sel] = logsumexp(terms, axis=1)
        pos += sel.size
    return out


def finite_n_density(model: RadialModel, z):
    """R_n(z) = sum_{j<n} |z|^(2j) exp(-V0(z)) / ||z^j||^2 (rescaled variable)."""
    z = np.asarray(z, dtype=complex)
    r = np.abs(z).ravel()
    out = np.empty(r.shape)
    zero = r == 0
    if np.any(zero):
        c = model.c
        out[zero] = 0.0 if c > 0 else (math.exp(-log_norm(model, 0)) if c == 0 else math.inf)
    pos = ~zero
    if np.any(pos):
        rp = r[pos]
        ln = log_norm(model, np.arange(model.n))
        logsum = _log_partial_sums(model.k, model.c, model.tau0, ln, rp, model.n)
        out[pos] = np.exp(logsum - model.V0(rp))
    return out.reshape(z.shape) if z.shape else float(out[0])


def unrescaled_density(model: RadialModel, zeta):
    """Density of the n-point ensemble with potential tau0|zeta|^2k - (2c/n) log|zeta|.

    Equals n^(1/k) R_n(n^(1/2k) zeta) with respect to dA.
    """
    zeta = np.asarray(zeta, dtype=complex)
    scale = model.n ** (1.0 / (2 * model.k))
    return model.n ** (1.0 / model.k) * finite_n_density(model, zeta * scale)


# ---------------------------------------------------------------------------
# Limiting kernel and density
# ---------------------------------------------------------------------------

def kernel_log(model: RadialModel, z, w):
    """(log|L0(z,w)|, arg L0(z,w)) for broadcastable complex arrays."""
    a, b = model.ml_params
    x = model.tau0 ** (1.0 / model.k) * np.asarray(z, dtype=complex) * np.conj(np.asarray(w, dtype=complex))
    la, ph = ml_series_log(a, b, x)
    return la + math.log(model.k) + ((1.0 + model.c) / model.k) * math.log(model.tau0), ph


def limiting_kernel(model: RadialModel, z, w):
    """L0(z, w) = k tau0^((1+c)/k) E_{1/k,(1+c)/k}(tau0^(1/k) z conj(w))."""
    la, ph = kernel_log(model, z, w)
    out = np.exp(la + 1j * ph)
    return complex(out) if np.ndim(out) == 0 else out


def limiting_density(model: RadialModel, z):
    """R(z) = L0(z,z) exp(-V0(z)); +inf at z = 0 when c < 0."""
    z = np.asarray(z, dtype=complex)
    s = model.tau0 ** (1.0 / model.k) * np.abs(z) ** 2
    out = model.tau0 ** (1.0 / model.k) * model.k * weighted_ml(model.k, model.c, s)
    return float(out) if np.ndim(out) == 0 else out


def log_density(model: RadialModel, z):
    with np.errstate(divide="ignore"):
        return np.log(limiting_density(model, z))


# ---------------------------------------------------------------------------
# Mass-one defect
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class MassOneReport:
    point: complex
    defect: float
    relative_defect: float
    diagonal: float
    error_estimate: float


def _radial_extent(model: RadialModel, z) -> float:
    """|w| beyond which |L0(z,w)|^2 e^{-V0(w)} / L0(z,z) < 1e-20."""
    u = model.tau0 ** (1.0 / (2 * model.k)) * abs(z)
    ext = (u ** model.k + 7.0) ** (1.0 / model.k) + 1.0
    return ext / model.tau0 ** (1.0 / (2 * model.k))


def kernel_on_rings(model: RadialModel, z, radii, m: int):
    """log|L0(z, r e^{i theta_l})| on rings, theta_l = 2 pi l / m.

    Along a ring the kernel series is a trigonometric polynomial in theta,
    so all m values come from one FFT of the (peak-scaled) coefficients.
    """
    a, b = model.ml_params
    radii = np.asarray(radii, dtype=float)
    x = model.tau0 ** (1.0 / model.k) * abs(z) * radii
    big = float(np.max(x)) ** model.k if x.size else 0.0
    J = int(model.k * (big + 12.0 * math.sqrt(big) + 40.0)) + 1
    if m <= J:
        raise NumericalError(f"{m} angular nodes alias a kernel series of {J} terms")
    j = np.arange(J)
    with np.errstate(divide="ignore"):
        lx = np.log(x)
    terms = j[None, :] * np.where(x > 0, lx, -1e300)[:, None] - gammaln(a * j + b)[None, :]
    terms[:, 0] = -gammaln(b)
    peak = terms.max(axis=1)
    coef = np.zeros((radii.size, m), dtype=complex)
    coef[:, :J] = np.exp(terms - peak[:, None] + 1j * j[None, :] * np.angle(z))
    # L(z, r e^{i theta}) = sum_j (.) e^{-i j theta}
    vals = np.fft.fft(coef, axis=1)
    with np.errstate(divide="ignore"):
        logabs = peak[:, None] + np.log(np.abs(vals))
    return logabs + math.log(model.k) + ((1.0 + model.c) / model.k) * math.log(model.tau0)


def _angular_nodes(model, z, rmax, spec):
    if spec.angular:
        return spec.angular
    x = (model.tau0 ** (1.0 / model.k) * abs(z) * rmax) ** model.k
    need = model.k * (x + 12.0 * math.sqrt(x) + 40.0) + 2
    return int(2 ** math.ceil(math.log2(need + 32)))


def _reproducing_integral(model, z, spec: QuadSpec):
    """int |L0(z,w)|^2 exp(-V0(w)) dA(w) on a polar product grid about 0.

    In t = |w|^2 the measure is t^c exp(-tau0 t^k) dt dtheta / (2 pi); the t^c
    factor is integrated exactly by a Gauss-Jacobi first panel.
    """
    rmax = _radial_extent(model, z)
    t, wt = power_weight_rule(model.c, uniform_breaks(rmax ** 2, spec.radial_panels), spec.radial_order)
    m = _angular_nodes(model, z, rmax, spec)
    logabs = kernel_on_rings(model, z, np.sqrt(t), m)
    integrand = np.exp(2.0 * logabs - model.tau0 * t[:, None] ** model.k)
    # trapezoid rule in theta: weights 2 pi / m, divided by the 2 pi of the measure
    return float(np.sum(wt[:, None] * integrand) / m)


def mass_one_defect(model: RadialModel, z, quad_spec: QuadSpec | None = None) -> MassOneReport:
    """int |L0(z,w)|^2 dmu0(w) - L0(z,z), with a refinement error estimate."""
    spec = quad_spec or QuadSpec()
    diag = float(np.real(limiting_kernel(model, z, z)))
    coarse = _reproducing_integral(model, z, spec)
    fine = _reproducing_integral(model, z, spec.refined())
    err = abs(fine - coarse)
    if not math.isfinite(fine) or err > 1e-3 * abs(diag):
        raise NumericalError(f"mass-one quadrature not converged (refinement change {err:.3g})")
    return MassOneReport(complex(z), fine - diag, fine / diag - 1.0, diag, err)


def mass_one_series(model: RadialModel, z) -> float:
    """Coefficient oracle: sum_j a_j^2 s^j ||z^j||^2 - sum_j a_j s^j, s = |z|^2."""
    s = model.tau0 ** (1.0 / model.k) * abs(z) ** 2
    J = int(model.k * (s ** model.k + 12 * math.sqrt(s ** model.k) + 60)) + 10
    ln = log_norm(model.with_(tau0=1.0), np.arange(J))
    with np.errstate(divide="ignore"):
        logs = np.arange(J) * math.log(s) if s > 0 else np.where(np.arange(J) == 0, 0.0, -np.inf)
    reproduced = np.exp(-2.0 * ln + logs + ln)
    diagonal = np.exp(-ln + logs)
    scale = model.tau0 ** ((1.0 + model.c) / model.k)
    return scale * (math.fsum(reproduced.tolist()) - math.fsum(diagonal.tolist()))


# ---------------------------------------------------------------------------
# Bulk asymptotics
# ---------------------------------------------------------------------------

def regular_bulk_check(model: RadialModel, zeta) -> list[str]:
    """Failed inequalities of the regular-bulk region (empty list = inside)."""
    bound = model.r_n * math.log(model.n)
    r = abs(zeta)
    failed = []
    if not r > bound:
        failed.append(f"|zeta| = {r:.6g} not > r_n log n = {bound:.6g}")
    d = model.droplet_radius - r
    if not d > bound:
        failed.append(f"dist(zeta, boundary) = {d:.6g} not > r_n log n = {bound:.6g}")
    return failed


def bulk_asymptotic_ratio(model: RadialModel, zeta, check_region: bool = True) -> float:
    """Unrescaled density over n * laplace(Q0); close to 1 at regular bulk points.

    ``check_region=False`` evaluates the ratio at any nonzero point, which is
    useful at desk-scale n where the regular-bulk region is still empty.
    """
    if check_region:
        failed = regular_bulk_check(model, zeta)
        if failed:
            raise PreconditionError("outside regular bulk: " + "; ".join(failed))
    if zeta == 0:
        raise PreconditionError("bulk ratio undefined at the insertion point")
    dens = unrescaled_density(model, zeta)
    return float(dens / (model.n * model.laplace_Q0(zeta)))


# ---------------------------------------------------------------------------
# Non-radial integer-charge kernel on the Ginibre background
# ---------------------------------------------------------------------------

MP_THRESHOLD = 60
MAX_NONRADIAL_N = 200


@dataclass(frozen=True)
class NonRadialModel:
    """Weight |zeta - a|^(2c) exp(-n|zeta|^2) (pure-log) or its Green variant.

    ``normalization='green'`` replaces |zeta-a|^(2c) by
    |(zeta-a)/(1-conj(a) zeta)|^(2c) inside the unit disk and 1 outside.
    """

    n: int
    c: int
    a: complex = 0j
    normalization: str = "pure-log"

    def __post_init__(self):
        if int(self.c) != self.c or not 0 <= self.c <= 3:
            raise PreconditionError(f"non-radial charge must be an integer in 0..3, got {self.c}")
        object.__setattr__(self, "c", int(self.c))
        if int(self.n) != self.n or self.n < 1:
            raise PreconditionError(f"n must be a positive integer, got {self.n}")
        object.__setattr__(self, "n", int(self.n))
        if self.n > MAX_NONRADIAL_N:
            raise PreconditionError(f"n must be <= {MAX_NONRADIAL_N} for the Gram construction")
        object.__setattr__(self, "a", complex(self.a))
        if not abs(self.a) < 1:
            raise PreconditionError(f"insertion point must satisfy |a| < 1, got {self.a}")
        if self.normalization not in ("pure-log", "green"):
            raise PreconditionError(f"unknown normalization {self.normalization!r}")

    def to_dict(self):
        return dict(n=self.n, c=self.c, a_re=self.a.real, a_im=self.a.imag,
                    normalization=self.normalization)

    def log_weight(self, zeta):
        """log of the insertion factor (without the Gaussian)."""
        zeta = np.asarray(zeta, dtype=complex)
        if self.c == 0:
            return np.zeros(zeta.shape)
        with np.errstate(divide="ignore"):
            lw = 2 * self.c * np.log(np.abs(zeta - self.a))
            if self.normalization == "green":
                inside = np.abs(zeta) < 1
                lw = np.where(inside, lw - 2 * self.c * np.log(np.abs(1 - np.conj(self.a) * zeta)), 0.0)
        return lw


def _log_sigma(n, i):
    """log of sigma_i = sqrt(i!/n^(i+1)), the Gaussian norm of zeta^i."""
    i = np.asarray(i, dtype=float)
    return 0.5 * (gammaln(i + 1.0) - (i + 1.0) * math.log(n))


def _gram_pure_log(model: NonRadialModel) -> np.ndarray:
    """Exact Gram matrix of zeta^i/sigma_i under |zeta-a|^(2c) e^{-n|zeta|^2} dA.

    Expanding |zeta-a|^(2c) = sum_{p,q} C(c,p) C(c,q) (-a)^(c-p) (-conj a)^(c-q)
    zeta^p conj(zeta)^q reduces every entry to the Gaussian moments
    int zeta^m conj(zeta)^l e^{-n|zeta|^2} dA = delta_{ml} m!/n^(m+1).
    """
    n, c, a = model.n, model.c, model.a
    G = np.zeros((n, n), dtype=complex)
    ls = _log_sigma(n, np.arange(n + c + 1))
    for p in range(c + 1):
        for q in range(c + 1):
            coef = math.comb(c, p) * math.comb(c, q) * (-a) ** (c - p) * (-np.conj(a)) ** (c - q)
            if coef == 0:
                continue
            # G[i, j] = int conj(e_i) e_j w dA picks m = i + q = j + p
            for i in range(n):
                j = i + q - p
                if 0 <= j < n:
                    m = i + q
                    logv = gammaln(m + 1.0) - (m + 1.0) * math.log(n) - ls[i] - ls[j]
                    G[i, j] += coef * math.exp(logv)
    return G


def _gram_green(model: NonRadialModel, radial_nodes=256, angular=0) -> np.ndarray:
    """Gram matrix for the Green-normalised weight by polar quadrature.

    The weight has a kink on |zeta| = 1, so the disk and its exterior are
    integrated separately with Gauss-Legendre in r and trapezoid in angle.
    """
    n = model.n
    m_ang = angular or int(2 ** math.ceil(math.log2(2 * n + 64 + 40 / max(1e-3, -math.log(max(abs(model.a), 1e-3))))))
    theta, wth = trapezoid_angles(m_ang)
    rmax = 1.0 + math.sqrt(60.0 / n) + 0.25
    r_in, w_in = composite_rule(np.linspace(0.0, 1.0, 9), radial_nodes // 8)
    r_out, w_out = composite_rule(np.linspace(1.0, rmax, 9), radial_nodes // 8)
    r = np.concatenate([r_in, r_out])
    wr = np.concatenate([w_in, w_out])
    zeta = r[:, None] * np.exp(1j * theta)[None, :]
    lw = model.log_weight(zeta) - n * r[:, None] ** 2
    idx = np.arange(n)
    # scaled monomials with half the weight folded in: log-magnitude per node
    with np.errstate(divide="ignore"):
        logr = np.log(r)
    G = np.zeros((n, n), dtype=complex)
    ls = _log_sigma(n, idx)
    for ri in range(r.size):
        if r[ri] == 0:
            continue
        mag = np.exp(idx[:, None] * logr[ri] - ls[:, None] + 0.5 * lw[ri][None, :])
        E = mag * np.exp(1j * idx[:, None] * theta[None, :])
        # measure dA = r dr dtheta / pi
        wgt = wr[ri] * r[ri] * wth / math.pi
        G += (np.conj(E) * wgt[None, :]) @ E.T
    return G


class NonRadialKernel:
    """Reproducing kernel of polynomials of degree < n under a non-radial weight."""

    def __init__(self, model: NonRadialModel):
        self.model = model
        n = model.n
        G = _gram_pure_log(model) if model.normalization == "pure-log" else _gram_green(model)
        G = 0.5 * (G + G.conj().T)
        self.condition = float(np.linalg.cond(G))
        self.high_precision = n > MP_THRESHOLD
        if self.high_precision:
            self._inv_chol = self._mp_inverse_cholesky(G)
        else:
            try:
                L = np.linalg.cholesky(G)
            except np.linalg.LinAlgError as exc:
                raise NumericalError(f"Gram matrix not positive definite (condition {self.condition:.3g})") from exc
            if self.condition * np.finfo(float).eps > 1e-6:
                raise NumericalError(f"Gram matrix numerically singular (condition {self.condition:.3g})")
            from scipy.linalg import solve_triangular

            self._inv_chol = solve_triangular(L, np.eye(n), lower=True)

    @staticmethod
    def _mp_inverse_cholesky(G):
        import mpmath

        with mpmath.workdps(32):
            M = mpmath.matrix(G.tolist())
            try:
                L = mpmath.cholesky(M)
            except ValueError as exc:
                raise NumericalError("Gram matrix numerically singular in extended precision") from exc
            Linv = mpmath.inverse(L)
            return np.array(Linv.tolist(), dtype=complex)

    def _basis(self, zeta):
        """Scaled monomials times exp(-(V(zeta))/2) as an (n, m) array."""
        zeta = np.asarray(zeta, dtype=complex).ravel()
        n = self.model.n
        idx = np.arange(n)
        r = np.abs(zeta)
        with np.errstate(divide="ignore", invalid="ignore"):
            logr = np.log(r)
            lw = self.model.log_weight(zeta) - n * r ** 2
            logmag = idx[:, None] * logr[None, :] - _log_sigma(n, idx)[:, None] + 0.5 * lw[None, :]
        logmag[0, r == 0] = -_log_sigma(n, 0) + 0.5 * lw[r == 0]
        mag = np.exp(logmag)
        mag = np.where(np.isnan(mag), 0.0, mag)
        return mag * np.exp(1j * idx[:, None] * np.angle(zeta)[None, :])

    def density(self, zeta):
        """Unrescaled one-point function with respect to dA."""
        zeta = np.asarray(zeta, dtype=complex)
        out = np.empty(zeta.size)
        flat = zeta.ravel()
        for s in range(0, flat.size, 4096):
            V = self._inv_chol.conj() @ self._basis(flat[s:s + 4096])
            out[s:s + 4096] = np.sum(np.abs(V) ** 2, axis=0)
        return out.reshape(zeta.shape) if zeta.shape else float(out[0])

    def kernel(self, zeta, eta):
        """K_n(zeta, eta) including the half-weights exp(-(V(zeta)+V(eta))/2)."""
        A = self._inv_chol.conj() @ self._basis(zeta)
        B = self._inv_chol.conj() @ self._basis(eta)
        out = np.sum(A * np.conj(B), axis=0)
        return complex(out[0]) if np.ndim(zeta) == 0 else out

    def total_mass(self, radial_order=24, angular=256) -> float:
        """int density dA by polar quadrature (should equal n)."""
        from .quadrature import composite_rule

        rmax = 1.0 + math.sqrt(60.0 / self.model.n) + 0.25
        r_in, w_in = composite_rule(np.linspace(0.0, 1.0, 9), radial_order)
        r_out, w_out = composite_rule(np.linspace(1.0, rmax, 9), radial_order)
        r, wr = np.concatenate([r_in, r_out]), np.concatenate([w_in, w_out])
        theta, wth = trapezoid_angles(angular)
        Z = r[:, None] * np.exp(1j * theta)[None, :]
        d = self.density(Z)
        return float(np.sum(d * (wr * r)[:, None] * wth[None, :]) / math.pi)


def nonradial_kernel(model: NonRadialModel) -> NonRadialKernel:
    return NonRadialKernel(model)
