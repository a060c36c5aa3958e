"""Exact radial sampling, Metropolis sampling and the log-modulus CLT experiment.

At beta = 1 the squared moduli of a radial determinantal ensemble are
independent: with weight |zeta|^(2c) exp(-n tau0 |zeta|^(2k)) the variable
n tau0 r_j^(2k) is Gamma((j+1+c)/k, 1), j = 0..n-1.  That gives exact draws
of every radial statistic, in particular of

    tr_ell = 2 sum_j log r_j,   X_n = (tr_ell - E tr_ell) / sqrt(log n).

RNG streams: every draw derives its generator from
``SeedSequence(entropy=seed, spawn_key=(index,))`` (PCG64), so trial i sees
the same stream whatever the thread count or scheduling.
"""

from __future__ import annotations

import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy import stats

from .errors import NumericalError, PreconditionError
from .kernel_engine import RadialModel, unrescaled_density
from .quadrature import composite_rule
from .special_fn import digamma, digamma_partial_sum, trigamma, trigamma_partial_sum

try:  # the Metropolis inner loop is compiled when numba is available
    import numba

    _njit = numba.njit(cache=False, nogil=True)
except ImportError:  # pragma: no cover
    numba = None

    def _njit(f):
        return f


MIN_TRIALS = 100


@dataclass(frozen=True)
class MCMCSettings:
    steps: int = 1_000_000
    burn_in: int = 100_000
    proposal_scale: float = 0.0  # 0: start from a fraction of the interparticle distance
    thin: int = 0  # record every `thin` steps after burn-in (0: once per sweep)
    target_acceptance: float = 0.35

    def __post_init__(self):
        if self.steps < 1 or self.burn_in < 1:
            raise PreconditionError("MCMC steps and burn_in must be positive")
        if self.proposal_scale < 0:
            raise PreconditionError("proposal_scale must be nonnegative")


@dataclass(frozen=True)
class SampleConfig:
    model: RadialModel
    mode: str = "moduli-exact"
    seed: int = 0
    mcmc: MCMCSettings | None = None

    def __post_init__(self):
        if self.mode not in ("moduli-exact", "mcmc"):
            raise PreconditionError(f"unknown sampling mode {self.mode!r}")
        if not 0 <= int(self.seed) < 2 ** 64:
            raise PreconditionError("seed must be a 64-bit unsigned integer")
        if self.mode == "moduli-exact" and self.model.beta != 1:
            raise PreconditionError("moduli-exact sampling requires beta = 1")
        if self.mode == "mcmc" and self.mcmc is None:
            object.__setattr__(self, "mcmc", MCMCSettings())


@dataclass
class Configuration:
    config: SampleConfig
    moduli: np.ndarray | None = None
    points: np.ndarray | None = None
    acceptance_rate: float | None = None
    samples: np.ndarray | None = None  # thinned MCMC states, shape (m, n)
    proposal_scale: float | None = None

    def radii(self) -> np.ndarray:
        return self.moduli if self.moduli is not None else np.abs(self.points)

    def planar_points(self) -> np.ndarray:
        if self.points is None:
            raise PreconditionError("moduli-exact samples carry no angles; planar points are unavailable")
        return self.points


def trial_rng(seed: int, index: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(entropy=int(seed), spawn_key=(int(index),)))


def default_threads() -> int:
    env = os.environ.get("RNM_THREADS")
    if env:
        try:
            value = int(env)
            if value >= 1:
                return value
        except ValueError:
            pass
    return 1


# ---------------------------------------------------------------------------
# Exact moduli
# ---------------------------------------------------------------------------

def moduli_shapes(model: RadialModel) -> np.ndarray:
    return (np.arange(model.n) + 1.0 + model.c) / model.k


def sample_moduli(cfg: SampleConfig, rng: np.random.Generator | None = None) -> Configuration:
    """Independent moduli with n tau0 r_j^(2k) ~ Gamma((j+1+c)/k, 1)."""
    if cfg.mode != "moduli-exact" or cfg.model.beta != 1:
        raise PreconditionError("sample_moduli requires moduli-exact mode at beta = 1")
    rng = rng if rng is not None else trial_rng(cfg.seed, 0)
    m = cfg.model
    g = rng.standard_gamma(moduli_shapes(m))
    r = (g / (m.n * m.tau0)) ** (1.0 / (2 * m.k))
    return Configuration(cfg, moduli=r)


# ---------------------------------------------------------------------------
# Fluctuations of tr_ell
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class FluctuationStats:
    tr_ell: float
    x_n: float
    exact_mean: float
    exact_var: float


def _residue_classes(model: RadialModel):
    """(alpha_l, count_l): the shapes (j+1+c)/k, j < n, as k arithmetic runs of step 1."""
    k, n = model.k, model.n
    out = []
    for l in range(min(k, n)):
        count = (n - 1 - l) // k + 1
        out.append(((l + 1.0 + model.c) / k, count))
    return out


def exact_moments(model: RadialModel) -> tuple[float, float]:
    """E tr_ell and Var tr_ell from polygamma sums (closed form per residue class)."""
    k, n = model.k, model.n
    mean_terms, var_terms = [], []
    for alpha, count in _residue_classes(model):
        mean_terms.append(digamma_partial_sum(alpha, count))
        var_terms.append(trigamma_partial_sum(alpha - 1.0, count))
    shift = math.log(n * model.tau0)
    mean = (math.fsum(mean_terms) - n * shift) / k
    var = math.fsum(var_terms) / k ** 2
    return mean, var


def exact_moments_direct(model: RadialModel) -> tuple[float, float]:
    """Same moments by direct summation over j (cross-check)."""
    a = moduli_shapes(model)
    mean = (math.fsum(digamma(a).tolist()) - model.n * math.log(model.n * model.tau0)) / model.k
    var = math.fsum(trigamma(a).tolist()) / model.k ** 2
    return mean, var


def fluctuation(cfgn: Configuration) -> FluctuationStats:
    r = cfgn.radii()
    if r is None or len(r) == 0:
        raise PreconditionError("configuration holds no moduli or points")
    if np.any(r <= 0):
        raise PreconditionError("a modulus is zero; log-modulus undefined")
    model = cfgn.config.model
    tr = 2.0 * math.fsum(np.log(r).tolist())
    mean, var = exact_moments(model)
    ln = math.log(model.n)
    x = (tr - mean) / math.sqrt(ln) if ln > 0 else math.nan
    return FluctuationStats(tr, x, mean, var)


def cgf_derivative(model: RadialModel, t: float, method: str = "direct") -> float:
    """F_n'(t) = (1/(k sqrt(log n))) sum_{j=1}^n [psi((j+c+t/sqrt(log n))/k) - psi((j+c)/k)].

    ``direct`` sums the polygamma terms vectorised; ``closed`` uses the
    telescoped digamma partial sums over the k residue classes of j
    (n = m k + nu).
    """
    n, k, c = model.n, model.k, model.c
    if n < 2:
        raise PreconditionError("cgf_derivative needs n >= 2")
    ln = math.log(n)
    shift = t / math.sqrt(ln)
    if not c + shift > -1:
        raise PreconditionError(f"c + t/sqrt(log n) = {c + shift:.6g} leaves the region c > -1")
    if shift == 0:
        return 0.0
    if method == "direct":
        j = np.arange(1, n + 1, dtype=float)
        diff = digamma((j + c + shift) / k) - digamma((j + c) / k)
        total = math.fsum(diff.tolist())
    elif method == "closed":
        parts = []
        for l in range(1, min(k, n) + 1):
            count = (n - l) // k + 1
            parts.append(digamma_partial_sum((l + c + shift) / k, count)
                         - digamma_partial_sum((l + c) / k, count))
        total = math.fsum(parts)
    else:
        raise PreconditionError(f"unknown method {method!r}")
    return total / (k * math.sqrt(ln))


# ---------------------------------------------------------------------------
# CLT experiment
# ---------------------------------------------------------------------------

def _trial_tr_ell(model: RadialModel, seed: int, index: int) -> float:
    rng = trial_rng(seed, index)
    g = rng.standard_gamma(moduli_shapes(model))
    # tr_ell = (1/k) sum log(g_j / (n tau0))
    return (math.fsum(np.log(g).tolist()) - model.n * math.log(model.n * model.tau0)) / model.k


def draw_tr_ell(model: RadialModel, trials: int, seed: int, threads: int = 1) -> np.ndarray:
    """tr_ell for trials 0..trials-1; element i depends only on (seed, i)."""
    if threads <= 1:
        return np.array([_trial_tr_ell(model, seed, i) for i in range(trials)])
    blocks = np.array_split(np.arange(trials), threads * 4)

    def run(block):
        return [_trial_tr_ell(model, seed, int(i)) for i in block]

    with ThreadPoolExecutor(max_workers=threads) as pool:
        results = list(pool.map(run, blocks))
    return np.array([v for block in results for v in block])


def _model_seed(seed: int, position: int) -> int:
    # distinct, reproducible entropy per model in the list
    return int(np.random.SeedSequence(entropy=int(seed), spawn_key=(2 ** 31 + position,)).generate_state(2, np.uint32).view(np.uint64)[0])


@dataclass
class ExperimentReport:
    entries: list
    seed: int
    trials: int
    passed: bool
    criteria: dict = field(default_factory=dict)

    def to_dict(self):
        return {"seed": self.seed, "trials": self.trials, "pass": self.passed,
                "criteria": self.criteria, "entries": self.entries}


def clt_entry(model: RadialModel, trials: int, seed: int, threads: int = 1) -> dict:
    tr = draw_tr_ell(model, trials, seed, threads)
    mean, var = exact_moments(model)
    ln = math.log(model.n)
    x = (tr - mean) / math.sqrt(ln)
    # compensated reductions keep the statistics independent of ordering
    emp_mean = math.fsum(x.tolist()) / trials
    dev = x - emp_mean
    emp_var = math.fsum((dev ** 2).tolist()) / (trials - 1)
    m4 = math.fsum((dev ** 4).tolist()) / trials
    se_mean = math.sqrt(emp_var / trials)
    se_var = math.sqrt(max(m4 - emp_var ** 2, 0.0) / trials)
    ad = stats.anderson(x, dist="norm")
    crit = float(ad.critical_values[list(ad.significance_level).index(1.0)])
    exact = var / ln
    mean_ok = abs(emp_mean) <= 3.0 * se_mean
    var_ok = abs(emp_var - exact) <= 3.0 * se_var
    ad_ok = float(ad.statistic) < crit
    return {"n": model.n, "k": model.k, "c": model.c, "trials": trials, "seed": seed,
            "empirical_mean": emp_mean, "se_mean": se_mean, "empirical_var": emp_var, "se_var": se_var,
            "exact_var_over_logn": exact, "limit_var": 1.0 / model.k,
            "ad_statistic": float(ad.statistic), "ad_critical_1pct": crit,
            "mean_pass": mean_ok, "var_pass": var_ok, "ad_pass": ad_ok,
            "pass": bool(mean_ok and var_ok)}


def clt_experiment(models, trials: int, seed: int, threads: int | None = None) -> ExperimentReport:
    """Sample X_n for each model and compare with the polygamma references.

    Passing requires every mean and variance within three standard errors,
    and the Anderson-Darling statistic below its 1% critical value for at
    least two thirds of the models.
    """
    if trials < MIN_TRIALS:
        raise PreconditionError(f"at least {MIN_TRIALS} trials are required, got {trials}")
    models = list(models)
    if not models:
        raise PreconditionError("clt_experiment needs at least one model")
    for m in models:
        if m.beta != 1:
            raise PreconditionError("clt_experiment uses exact moduli sampling (beta = 1)")
        if m.n < 2:
            raise PreconditionError("clt_experiment needs n >= 2 (log n normalisation)")
    threads = threads or default_threads()
    entries = [clt_entry(m, trials, _model_seed(seed, i), threads) for i, m in enumerate(models)]
    ad_count = sum(e["ad_pass"] for e in entries)
    ad_needed = math.ceil(2 * len(entries) / 3)
    passed = all(e["pass"] for e in entries) and ad_count >= ad_needed
    return ExperimentReport(entries, seed, trials, bool(passed),
                            {"ad_passes": ad_count, "ad_required": ad_needed,
                             "sigma_band": 3.0, "ad_level_pct": 1.0})


def variance_trend(k: int, c: float, ns=(100, 1000, 10000)) -> list[float]:
    """exact Var(X_n) over the given n (tends to 1/k)."""
    return [exact_moments(RadialModel(k, c, 1.0, n))[1] / math.log(n) for n in ns]


# ---------------------------------------------------------------------------
# Metropolis sampler of the Gibbs law
# ---------------------------------------------------------------------------

@_njit
def _site_energy(pts, i, z, n, k, c, tau0):
    """Energy terms involving particle i placed at z (pair part counted twice)."""
    r = abs(z)
    if r == 0.0:
        return np.inf
    e = n * tau0 * r ** (2 * k) - 2.0 * c * math.log(r)
    for j in range(pts.shape[0]):
        if j != i:
            d = abs(z - pts[j])
            if d == 0.0:
                return np.inf
            e -= 2.0 * math.log(d)
    return e


@_njit
def _metropolis_run(pts, steps, scale, beta, n, k, c, tau0, sites, noise, unif, record_every, out,
                    adapt_every, target):
    accepted = 0
    window = 0
    rec = 0
    for s in range(steps):
        i = sites[s]
        prop = pts[i] + scale * noise[s]
        de = _site_energy(pts, i, prop, n, k, c, tau0) - _site_energy(pts, i, pts[i], n, k, c, tau0)
        if np.isfinite(de) and (de <= 0.0 or unif[s] < math.exp(-beta * de)):
            pts[i] = prop
            accepted += 1
            window += 1
        if adapt_every > 0 and (s + 1) % adapt_every == 0:
            rate = window / adapt_every
            scale *= math.exp(rate - target)
            window = 0
        if record_every > 0 and (s + 1) % record_every == 0 and rec < out.shape[0]:
            out[rec, :] = pts
            rec += 1
    return accepted, scale


def energy(points, model: RadialModel) -> float:
    """H_n = sum_{i != j} log 1/|zeta_i - zeta_j| + n sum V_n(zeta_j)."""
    z = np.asarray(points, dtype=complex)
    d = np.abs(z[:, None] - z[None, :])
    iu = np.triu_indices(len(z), 1)
    with np.errstate(divide="ignore"):
        pair = -2.0 * np.sum(np.log(d[iu]))
        pot = model.n * model.tau0 * np.sum(np.abs(z) ** (2 * model.k)) - 2.0 * model.c * np.sum(np.log(np.abs(z)))
    return float(pair + pot)


def _random_blocks(rng, n, steps):
    sites = rng.integers(0, n, size=steps)
    noise = rng.standard_normal(steps) + 1j * rng.standard_normal(steps)
    noise *= math.sqrt(0.5)
    unif = rng.random(steps)
    return sites, noise, unif


def sample_mcmc(cfg: SampleConfig, potential=None, rng: np.random.Generator | None = None) -> Configuration:
    """Metropolis random walk targeting exp(-beta H_n) with single-site Gaussian moves.

    The proposal scale is tuned multiplicatively toward the target acceptance
    during burn-in, then frozen; moves giving a non-finite energy (a particle
    on the charge or on another particle) are rejected.  ``potential`` is
    accepted for interface symmetry; only the model's radial potential is
    supported by the compiled loop.
    """
    if cfg.mode != "mcmc":
        raise PreconditionError("sample_mcmc requires mcmc mode")
    if potential is not None:
        raise PreconditionError("custom potentials are not supported by the compiled sampler")
    m, st = cfg.model, cfg.mcmc
    rng = rng if rng is not None else trial_rng(cfg.seed, 0)
    n = m.n
    R = m.droplet_radius
    # start on a jittered disk filling the droplet, away from 0
    u = (np.arange(n) + 0.5) / n
    pts = R * np.sqrt(0.05 + 0.9 * u) * np.exp(2j * math.pi * rng.random(n))
    scale = st.proposal_scale or 0.5 * R / math.sqrt(n)
    args = (float(m.n), int(m.k), float(m.c), float(m.tau0))

    sites, noise, unif = _random_blocks(rng, n, st.burn_in)
    dummy = np.zeros((0, n), dtype=complex)
    adapt = max(200, min(5000, st.burn_in // 50))
    _, scale = _metropolis_run(pts, st.burn_in, scale, float(m.beta), *args, sites, noise, unif, 0, dummy,
                               adapt, st.target_acceptance)

    thin = st.thin or n
    out = np.zeros((st.steps // thin, n), dtype=complex)
    sites, noise, unif = _random_blocks(rng, n, st.steps)
    accepted, _ = _metropolis_run(pts, st.steps, scale, float(m.beta), *args, sites, noise, unif, thin, out,
                                  0, st.target_acceptance)
    rate = accepted / st.steps
    if not 0.0 < rate < 1.0:
        raise NumericalError(f"MCMC acceptance rate {rate} is degenerate")
    return Configuration(cfg, points=pts.copy(), acceptance_rate=rate, samples=out, proposal_scale=scale)


# ---------------------------------------------------------------------------
# Radial goodness of fit
# ---------------------------------------------------------------------------

def radial_bin_probabilities(model: RadialModel, edges) -> np.ndarray:
    """P(|zeta| in bin) for one particle of the n-point ensemble (last bin open)."""
    edges = np.asarray(edges, dtype=float)
    probs = []
    for a, b in zip(edges[:-1], edges[1:]):
        t, w = composite_rule(np.linspace(a * a, b * b, 5), 24)
        probs.append(float(np.sum(w * unrescaled_density(model, np.sqrt(t)))) / model.n)
    probs.append(max(0.0, 1.0 - math.fsum(probs)))
    return np.array(probs)


@dataclass(frozen=True)
class RadialFit:
    chi2: float
    dof: int
    p_value: float
    inflation: float
    counts: np.ndarray
    expected: np.ndarray


def radial_chi2(radii_batches, model: RadialModel, bins: int = 20, r_max: float | None = None,
                batches: int = 50) -> RadialFit:
    """Chi-square fit of pooled radii to the exact radial law.

    ``radii_batches`` has shape (m, n): m recorded configurations in time
    order.  Successive states are correlated, so the multinomial variance is
    replaced by the batch-means variance of the bin fractions; the plain
    statistic is divided by the mean inflation factor before computing p.
    """
    X = np.asarray(radii_batches, dtype=float)
    m = X.shape[0]
    if m < batches:
        raise PreconditionError("not enough recorded configurations for batch means")
    r_max = r_max or 1.3 * model.droplet_radius
    edges = np.linspace(0.0, r_max, bins)
    p = radial_bin_probabilities(model, edges)
    idx = np.minimum(np.searchsorted(edges, X, side="right") - 1, bins - 1)
    counts = np.array([np.sum(idx == b) for b in range(bins)], dtype=float)
    total = counts.sum()
    expected = total * p
    chi2 = float(np.sum((counts - expected) ** 2 / expected))
    # batch-means estimate of Var(fraction) versus the multinomial p(1-p)/N
    per = m // batches
    frac = np.empty((batches, bins))
    for b in range(batches):
        sl = idx[b * per:(b + 1) * per].ravel()
        frac[b] = np.bincount(sl, minlength=bins) / sl.size
    var_bm = frac.var(axis=0, ddof=1) / batches
    var_mn = p * (1 - p) / total
    inflation = float(np.mean(var_bm / var_mn))
    adj = chi2 / inflation
    pval = float(stats.chi2.sf(adj, bins - 1))
    return RadialFit(adj, bins - 1, pval, inflation, counts, expected)
