"""Command-line experiment runner.

Every run writes ``<prefix>.csv``, ``<prefix>.report.json`` and
``<prefix>.manifest.json``; the manifest echoes the fully resolved
parameters and can be fed back with ``--config`` to reproduce the CSV
byte for byte.  Exit status: 0 success, 2 invalid input, 3 numerical
failure, with a one-line JSON error record on standard error.
"""

from __future__ import annotations

import argparse
import json
import math
import os
import re
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .errors import NumericalError, PreconditionError
from .io import write_csv, write_json

COMMANDS = ("ml-eval", "density", "kernel", "ward", "sample", "clt", "balayage", "bulk-check",
            "figure1", "figure2")
EXIT_OK, EXIT_VALIDATION, EXIT_NUMERICAL = 0, 2, 3
THREADS_ENV = "RNM_THREADS"


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise PreconditionError(message)


# ---------------------------------------------------------------------------
# argument helpers
# ---------------------------------------------------------------------------

def parse_grid(spec: str) -> np.ndarray:
    """'lo:hi:num' (square) or 'x0:x1:nx,y0:y1:ny'; row-major over y then x."""
    parts = spec.split(",")
    try:
        axes = [tuple(p.split(":")) for p in parts]
        axes = [(float(a), float(b), int(m)) for a, b, m in axes]
    except ValueError as exc:
        raise PreconditionError(f"bad grid spec {spec!r}; expected lo:hi:num") from exc
    if len(axes) == 1:
        axes = axes * 2
    if len(axes) != 2 or any(m < 1 for _, _, m in axes):
        raise PreconditionError(f"bad grid spec {spec!r}")
    x = np.linspace(*axes[0])
    y = np.linspace(*axes[1])
    X, Y = np.meshgrid(x, y)
    return (X + 1j * Y).ravel()


def parse_points(spec: str) -> np.ndarray:
    try:
        pts = [complex(p.strip().replace(" ", "")) for p in spec.split(",") if p.strip()]
    except ValueError as exc:
        raise PreconditionError(f"bad point list {spec!r}") from exc
    if not pts:
        raise PreconditionError("empty point list")
    return np.array(pts, dtype=complex)


def parse_floats(spec) -> list[float]:
    if isinstance(spec, (int, float)):
        return [float(spec)]
    try:
        return [float(p) for p in str(spec).split(",") if p.strip()]
    except ValueError as exc:
        raise PreconditionError(f"bad number list {spec!r}") from exc


def parse_ints(spec) -> list[int]:
    vals = parse_floats(spec)
    if any(v != int(v) for v in vals):
        raise PreconditionError(f"expected integers, got {spec!r}")
    return [int(v) for v in vals]


def _points_from(ns, default=None) -> np.ndarray:
    if ns.points:
        pts = parse_points(ns.points)
    elif ns.grid:
        pts = parse_grid(ns.grid)
    elif default is not None:
        pts = default
    else:
        raise PreconditionError("give --grid or --points")
    if pts.size == 0:
        raise PreconditionError("grid is empty")
    return pts


_NUMBERISH = re.compile(r"^-[\d.]")


def _normalise_argv(argv):
    """Let values such as '-0.5,0,0.5' or '-3:3:101' follow an option."""
    out = []
    i = 0
    while i < len(argv):
        tok = argv[i]
        if tok.startswith("--") and "=" not in tok and i + 1 < len(argv) and _NUMBERISH.match(argv[i + 1]):
            out.append(f"{tok}={argv[i + 1]}")
            i += 2
            continue
        out.append(tok)
        i += 1
    return out


def load_config(path) -> dict:
    """Flat ``key = value`` text, or a JSON manifest/dict of parameters."""
    text = Path(path).read_text(encoding="utf-8")
    if str(path).endswith(".json") or text.lstrip().startswith("{"):
        data = json.loads(text)
        return dict(data.get("params", data))
    out = {}
    for line in text.splitlines():
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise PreconditionError(f"config line without '=': {line!r}")
        key, value = (s.strip() for s in line.split("=", 1))
        out[key.replace("-", "_")] = value
    return out


def _env_threads() -> int:
    try:
        return max(1, int(os.environ.get(THREADS_ENV, "1")))
    except ValueError:
        return 1


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="rnm-insertion", description="Point-charge insertion experiments for random normal matrices.")
    p.add_argument("--version", action="version", version=__version__)
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def common(sp, k=1, c="0", n=None, k_list=False):
        sp.add_argument("--config", help="flat key=value file or a manifest JSON")
        sp.add_argument("--k", type=str if k_list else int, default=str(k) if k_list else k)
        sp.add_argument("--c", type=str, default=c, help="charge (comma list where a sweep is allowed)")
        sp.add_argument("--tau0", type=float, default=1.0)
        sp.add_argument("--n", type=str, default=n)
        sp.add_argument("--beta", type=float, default=1.0)
        sp.add_argument("--grid", type=str, default=None, help="lo:hi:num or x0:x1:nx,y0:y1:ny")
        sp.add_argument("--points", type=str, default=None, help="comma-separated complex numbers")
        sp.add_argument("--seed", type=int, default=0)
        sp.add_argument("--trials", type=int, default=None)
        sp.add_argument("--out", type=str, default=None, help="output prefix")
        sp.add_argument("--threads", type=int, default=None, help=f"worker threads (default ${THREADS_ENV} or 1)")
        sp.add_argument("--plot", action="store_true", help="also render a PNG next to the CSV")
        return sp

    sp = common(sub.add_parser("ml-eval", help="Mittag-Leffler E_{a,b} at points"))
    sp.add_argument("--a", type=float, default=None)
    sp.add_argument("--b", type=float, default=None)

    sp = common(sub.add_parser("density", help="finite-n or limiting one-point function"))
    sp.add_argument("--kind", choices=("finite", "limit", "unrescaled"), default=None)

    sp = common(sub.add_parser("kernel", help="limiting kernel L0(z, w)"))
    sp.add_argument("--w", type=str, default="0")
    sp.add_argument("--mass-one", action="store_true", dest="mass_one")

    sp = common(sub.add_parser("ward", help="Ward-equation residuals"))
    sp.add_argument("--fd-step", type=float, default=1e-3, dest="fd_step")
    sp.add_argument("--route", choices=("radial", "quad"), default="radial")

    sp = common(sub.add_parser("sample", help="exact moduli or Metropolis sample"))
    sp.add_argument("--mode", choices=("moduli-exact", "mcmc"), default="moduli-exact")
    sp.add_argument("--steps", type=int, default=1_000_000)
    sp.add_argument("--burn-in", type=int, default=100_000, dest="burn_in")
    sp.add_argument("--proposal-scale", type=float, default=0.0, dest="proposal_scale")

    sp = common(sub.add_parser("clt", help="CLT experiment for log-modulus fluctuations"), k_list=True)

    sp = common(sub.add_parser("balayage", help="insertion difference field and masses"))
    sp.add_argument("--a", type=str, default=None, help="insertion point (non-radial Ginibre path)")
    sp.add_argument("--normalization", choices=("pure-log", "green"), default="pure-log")

    sp = common(sub.add_parser("bulk-check", help="bulk density ratio at regular bulk points"))
    sp.add_argument("--fraction", type=str, default=None, help="points as fractions of the droplet radius")
    sp.add_argument("--no-region-check", action="store_true", dest="no_region_check")

    sp = common(sub.add_parser("figure1", help="limiting densities on the positive axis"), k=2, c="-0.5,0,0.5")
    sp.add_argument("--xmin", type=float, default=1e-3)
    sp.add_argument("--xmax", type=float, default=2.5)
    sp.add_argument("--num", type=int, default=500)
    sp.add_argument("--no-plot", action="store_true", dest="no_plot")

    sp = common(sub.add_parser("figure2", help="balayage fields for an off-centre charge"), c="1", n="40")
    sp.add_argument("--a", type=str, default="0.3")
    sp.add_argument("--no-plot", action="store_true", dest="no_plot")
    return p


def _subparser(parser, command):
    for action in parser._actions:
        if isinstance(action, argparse._SubParsersAction):
            return action.choices[command]
    raise KeyError(command)


def resolve(argv) -> argparse.Namespace:
    """Parse argv; values from --config sit between built-in defaults and flags."""
    argv = _normalise_argv(list(argv))
    parser = build_parser()
    ns = parser.parse_args(argv)
    if ns.config:
        cfg = load_config(ns.config)
        sp = _subparser(parser, ns.command)
        dests = {a.dest for a in sp._actions}
        unknown = sorted(set(cfg) - dests - {"command", "config", "artifact_version"})
        if unknown:
            raise PreconditionError(f"unknown config keys: {', '.join(unknown)}")
        sp.set_defaults(**{k: v for k, v in cfg.items() if k in dests and k != "config"})
        ns = parser.parse_args(argv)
    if ns.threads is None:
        ns.threads = _env_threads()
    if ns.threads < 1:
        raise PreconditionError("--threads must be >= 1")
    if ns.out is None:
        ns.out = ns.command
    return ns


def _model(ns, c=None, n=None):
    from .kernel_engine import RadialModel

    cc = parse_floats(ns.c)[0] if c is None else c
    nn = n if n is not None else (parse_ints(ns.n)[0] if ns.n is not None else 1)
    return RadialModel(ns.k, cc, ns.tau0, nn, ns.beta)


# ---------------------------------------------------------------------------
# commands: each returns (header, rows, report, plot-callback or None)
# ---------------------------------------------------------------------------

def cmd_ml_eval(ns):
    from .parallel import map_points
    from .special_fn import mittag_leffler

    a = ns.a if ns.a is not None else 1.0 / ns.k
    b = ns.b if ns.b is not None else (1.0 + parse_floats(ns.c)[0]) / ns.k
    if not a > 0:
        raise PreconditionError("a must be positive")
    pts = _points_from(ns)
    vals = map_points(lambda p: np.array([mittag_leffler(a, b, z) for z in p]), pts, ns.threads)
    rows = [(z.real, z.imag, v.real, v.imag) for z, v in zip(pts, vals)]
    return ["re", "im", "value_re", "value_im"], rows, {"a": a, "b": b, "count": len(rows)}, None


def cmd_density(ns):
    from .kernel_engine import finite_n_density, limiting_density, unrescaled_density
    from .parallel import map_points

    kind = ns.kind or ("finite" if ns.n is not None else "limit")
    if kind != "limit" and ns.n is None:
        raise PreconditionError(f"--n is required for the {kind} density")
    model = _model(ns)
    pts = _points_from(ns)
    func = {"finite": finite_n_density, "limit": limiting_density, "unrescaled": unrescaled_density}[kind]
    vals = map_points(lambda p: func(model, p), pts, ns.threads)
    rows = [(z.real, z.imag, v) for z, v in zip(pts, vals)]
    finite = vals[np.isfinite(vals)]
    report = {"kind": kind, "model": model.to_dict(), "count": len(rows),
              "min": float(finite.min()) if finite.size else math.nan,
              "max": float(finite.max()) if finite.size else math.nan}

    def plot(prefix):
        from .plotting import plot_grid_field

        plot_grid_field(pts, vals, prefix + ".png", title=f"{kind} density k={model.k} c={model.c}")

    return ["re", "im", "value"], rows, report, plot


def cmd_kernel(ns):
    from .kernel_engine import limiting_kernel, mass_one_defect

    model = _model(ns)
    w = complex(ns.w)
    pts = _points_from(ns)
    vals = np.asarray(limiting_kernel(model, pts, np.full(pts.shape, w)))
    header = ["re", "im", "value_re", "value_im"]
    rows = [[z.real, z.imag, v.real, v.imag] for z, v in zip(pts, vals)]
    report = {"model": model.to_dict(), "w": w, "count": len(rows)}
    if ns.mass_one:
        header.append("mass_one_relative_defect")
        defects = [mass_one_defect(model, z).relative_defect for z in pts]
        for row, d in zip(rows, defects):
            row.append(d)
        report["max_abs_mass_one_defect"] = float(np.max(np.abs(defects)))
    return header, rows, report, None


def default_ward_points(count: int = 12, r0: float = 0.3, r1: float = 2.0) -> np.ndarray:
    radii = np.geomspace(r0, r1, count)
    angles = 2.0 * math.pi * np.arange(count) * 0.381966011250105  # golden-angle spread
    return radii * np.exp(1j * angles)


def cmd_ward(ns):
    from .ward import WARD_HEADER, ward_residual

    model = _model(ns)
    pts = _points_from(ns, default_ward_points())
    rows, reports, halves = [], [], []
    for z in pts:
        rep = ward_residual(model, z, ns.fd_step, cauchy=ns.route)
        half = ward_residual(model, z, ns.fd_step / 2, cauchy=ns.route)
        reports.append(rep)
        halves.append(half.residual)
        rows.append(rep.row() + [half.residual])
    res = np.array([r.residual for r in reports])
    floors = np.array([r.quad_error_estimate for r in reports])
    halves = np.array(halves)
    reduction_ok = (halves * 2.5 <= res) | (halves <= 4 * floors)
    report = {"model": model.to_dict(), "fd_step": ns.fd_step, "route": ns.route,
              "max_residual": float(res.max()), "max_residual_half_step": float(halves.max()),
              "reduction_ok": bool(reduction_ok.all()), "count": len(rows)}
    return WARD_HEADER + ["residual_half_step"], rows, report, None


def cmd_sample(ns):
    from .sampler import (MCMCSettings, SampleConfig, fluctuation, radial_chi2, sample_mcmc,
                          sample_moduli)

    if ns.n is None:
        raise PreconditionError("--n is required")
    model = _model(ns)
    if ns.mode == "moduli-exact":
        cfg = SampleConfig(model, "moduli-exact", ns.seed)
        conf = sample_moduli(cfg)
        st = fluctuation(conf)
        rows = [(j, r) for j, r in enumerate(conf.moduli)]
        report = {"mode": ns.mode, "model": model.to_dict(), "seed": ns.seed, "tr_ell": st.tr_ell, "x_n": st.x_n,
                  "exact_mean": st.exact_mean, "exact_var": st.exact_var}
        return ["index", "modulus"], rows, report, None
    cfg = SampleConfig(model, "mcmc", ns.seed, MCMCSettings(ns.steps, ns.burn_in, ns.proposal_scale))
    conf = sample_mcmc(cfg)
    rows = [(j, z.real, z.imag) for j, z in enumerate(conf.points)]
    report = {"mode": ns.mode, "model": model.to_dict(), "seed": ns.seed, "acceptance_rate": conf.acceptance_rate,
              "proposal_scale": conf.proposal_scale, "recorded_states": int(conf.samples.shape[0])}
    if model.beta == 1 and conf.samples.shape[0] >= 50:
        fit = radial_chi2(np.abs(conf.samples), model)
        report.update(radial_chi2=fit.chi2, radial_dof=fit.dof, radial_p_value=fit.p_value,
                      correlation_inflation=fit.inflation)
    return ["index", "re", "im"], rows, report, None


def cmd_clt(ns):
    from .kernel_engine import RadialModel
    from .sampler import clt_experiment, variance_trend

    ks = parse_ints(ns.k)
    cs = parse_floats(ns.c)
    ns_list = parse_ints(ns.n if ns.n is not None else "1000")
    if len(ks) != len(cs) and 1 not in (len(ks), len(cs)):
        raise PreconditionError("--k and --c lists must have equal length (or one entry)")
    m = max(len(ks), len(cs))
    pairs = list(zip(ks * m if len(ks) == 1 else ks, cs * m if len(cs) == 1 else cs))
    models = [RadialModel(k, c, ns.tau0, n) for k, c in pairs for n in ns_list]
    trials = ns.trials or 10_000
    rep = clt_experiment(models, trials, ns.seed, ns.threads)
    fields = ["n", "k", "c", "trials", "seed", "empirical_mean", "se_mean", "empirical_var", "se_var",
              "exact_var_over_logn", "limit_var", "ad_statistic", "ad_critical_1pct", "mean_pass",
              "var_pass", "ad_pass", "pass"]
    rows = [[e[f] for f in fields] for e in rep.entries]
    report = rep.to_dict()
    report["variance_trend"] = {f"k={k},c={c}": variance_trend(k, c) for k, c in pairs}
    report["variance_trend_n"] = [100, 1000, 10000]
    return fields, rows, report, None


def cmd_balayage(ns):
    from .balayage import rho_field_nonradial, rho_field_radial
    from .kernel_engine import NonRadialModel

    c = parse_floats(ns.c)[0]
    n = parse_ints(ns.n)[0] if ns.n is not None else 500
    pts = _points_from(ns, parse_grid("-1.5:1.5:61"))
    if ns.a is not None or ns.normalization == "green":
        if ns.k != 1:
            raise PreconditionError("the non-radial path is implemented for k = 1 (Ginibre background)")
        if c != int(c):
            raise PreconditionError("the non-radial path needs an integer charge")
        a = complex(ns.a) if ns.a is not None else 0j
        bf = rho_field_nonradial(NonRadialModel(n, int(c), a, ns.normalization), pts)
    else:
        bf = rho_field_radial(ns.k, c, n, pts, ns.tau0)
    header, rows = bf.field.rows()
    report = bf.report(expected_c=c)

    def plot(prefix):
        from .plotting import plot_grid_field

        plot_grid_field(pts, bf.field.values, prefix + ".png", title="rho_n", diverging=True)

    return header, rows, report, plot


def cmd_bulk_check(ns):
    from .kernel_engine import bulk_asymptotic_ratio, regular_bulk_check

    if ns.n is None:
        raise PreconditionError("--n is required")
    model = _model(ns)
    if ns.fraction is not None:
        pts = np.array(parse_floats(ns.fraction), dtype=complex) * model.droplet_radius
    else:
        pts = _points_from(ns)
    rows = []
    for z in pts:
        failed = regular_bulk_check(model, z)
        ratio = bulk_asymptotic_ratio(model, z, check_region=not ns.no_region_check)
        rows.append((z.real, z.imag, ratio, ratio - 1.0, 0 if failed else 1))
    dev = max(abs(r[3]) for r in rows)
    report = {"model": model.to_dict(), "droplet_radius": model.droplet_radius,
              "region_bound": model.r_n * math.log(model.n), "max_abs_deviation": dev,
              "region_checked": not ns.no_region_check}
    return ["re", "im", "ratio", "deviation", "regular_bulk"], rows, report, None


def cmd_figure1(ns):
    from .kernel_engine import RadialModel, limiting_density

    cs = parse_floats(ns.c)
    if ns.num < 2 or not 0 < ns.xmin < ns.xmax:
        raise PreconditionError("figure1 needs 0 < xmin < xmax and num >= 2")
    x = np.linspace(ns.xmin, ns.xmax, ns.num)
    curves = {}
    for c in cs:
        curves[f"R_c={c:g}"] = np.asarray(limiting_density(RadialModel(ns.k, c, ns.tau0), x))
    ref = np.asarray(RadialModel(ns.k, 0.0, ns.tau0).laplace_Q0(x))
    header = ["x"] + list(curves) + ["laplace_Q0"]
    rows = [[xi] + [curves[h][i] for h in curves] + [ref[i]] for i, xi in enumerate(x)]
    report = {"k": ns.k, "c": cs, "tau0": ns.tau0,
              "at_xmin": {h: float(v[0]) for h, v in curves.items()},
              "max_gap_at_xmax": float(max(abs(v[-1] - ref[-1]) for v in curves.values()))}

    def plot(prefix):
        from .plotting import plot_radial_curves

        plot_radial_curves(x, curves, ref, prefix + ".png", title=f"k = {ns.k}")

    return header, rows, report, plot


def cmd_figure2(ns):
    from .balayage import rho_field_nonradial
    from .kernel_engine import NonRadialModel

    c = parse_floats(ns.c)[0]
    n = parse_ints(ns.n)[0]
    if c != int(c):
        raise PreconditionError("figure2 needs an integer charge")
    a = complex(ns.a)
    pts = _points_from(ns, parse_grid("-1.5:1.5:121"))
    fields = {norm: rho_field_nonradial(NonRadialModel(n, int(c), a, norm), pts)
              for norm in ("pure-log", "green")}
    pl, gr = fields["pure-log"], fields["green"]
    imin = int(np.argmin(pl.field.values))
    report = {"n": n, "c": c, "a": a,
              "pure_log": pl.report(expected_c=c), "green": gr.report(expected_c=c),
              "pure_log_min_location": complex(pts[imin]),
              "pure_log_min_distance_to_a": float(abs(pts[imin] - a))}
    rows = [(z.real, z.imag, u, v) for z, u, v in zip(pts, pl.field.values, gr.field.values)]

    def plot(prefix):
        from .plotting import plot_pair

        plot_pair(pts, pl.field.values, gr.field.values, ("pure-log", "Green"), prefix + ".png")

    return ["re", "im", "rho_pure_log", "rho_green"], rows, report, plot


HANDLERS = {"ml-eval": cmd_ml_eval, "density": cmd_density, "kernel": cmd_kernel, "ward": cmd_ward,
            "sample": cmd_sample, "clt": cmd_clt, "balayage": cmd_balayage, "bulk-check": cmd_bulk_check,
            "figure1": cmd_figure1, "figure2": cmd_figure2}


def _manifest(ns) -> dict:
    params = {k: v for k, v in sorted(vars(ns).items()) if k not in ("command", "config")}
    return {"artifact": "artifact", "artifact_version": __version__, "command": ns.command, "params": params}


def run(ns) -> list[str]:
    header, rows, report, plot = HANDLERS[ns.command](ns)
    prefix = str(ns.out)
    Path(prefix).parent.mkdir(parents=True, exist_ok=True)
    files = [str(write_csv(prefix + ".csv", header, rows))]
    report = dict(report, command=ns.command)
    files.append(str(write_json(prefix + ".report.json", report)))
    want_plot = plot is not None and (ns.plot or (ns.command in ("figure1", "figure2") and not ns.no_plot))
    if want_plot:
        plot(prefix)
        files.append(prefix + ".png")
    files.append(str(write_json(prefix + ".manifest.json", _manifest(ns))))
    return files


def _fail(code, kind, command, exc):
    record = {"error": kind, "exit": code, "command": command, "message": str(exc).replace("\n", " ")}
    print(json.dumps(record), file=sys.stderr)
    return code


def main(argv=None) -> int:
    argv = sys.argv[1:] if argv is None else argv
    command = next((a for a in argv if a in COMMANDS), None)
    try:
        ns = resolve(argv)
        run(ns)
    except NumericalError as exc:
        return _fail(EXIT_NUMERICAL, "numerical", command, exc)
    except (PreconditionError, ValueError, TypeError, KeyError) as exc:
        return _fail(EXIT_VALIDATION, "validation", command, exc)
    except SystemExit as exc:  # --help / --version
        return int(exc.code or 0)
    return EXIT_OK


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
