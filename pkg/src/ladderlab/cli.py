"""Command-line front end: ``ladderlab <command> [options]``.

Exit codes: 0 success, 2 validation failure, 3 incompleteness, 4 numerical failure.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import math
import sys
from pathlib import Path

import numpy as np
from scipy.optimize import brentq

from . import BACKEND, __version__
from .config import (
    RunConfig,
    SpectrumCache,
    atomic_write,
    load_config,
    load_metric_spec,
    parse_float_list,
    parse_mass_range,
    pretty_json,
)
from .counting import (
    count_sharp,
    count_smoothed,
    detect_peaks,
    ladder_report,
    persistent_peaks,
    singular_support_predict,
    upsilon1,
)
from .dynamics import flow, lorentz_diagnostics, period_set_within, state_on_level
from .errors import IncompletenessError, LadderLabError, ValidationError
from .geometry import RoundSphere, StandardStationaryMetric, classify_admissibility, require_admissible
from .liouville import (
    liouville_volume,
    volume_closed_form_product,
    volume_ellipsoid,
    volume_montecarlo,
    volume_quadrature,
    weyl_prediction,
)
from .spectra import (
    JointSpectrum,
    constant_shift_bound,
    constant_shift_torus_spectrum,
    format_float,
    pencil_joint_spectrum,
    product_joint_spectrum,
    surface_spectrum,
)
from .testfunctions import TestFunction

log = logging.getLogger("ladderlab")

EXIT_OK = 0
EXIT_VALIDATION = 2
EXIT_INCOMPLETE = 3
EXIT_NUMERICAL = 4


def exit_code_for(exc: BaseException) -> int:
    if isinstance(exc, ValidationError):
        return EXIT_VALIDATION
    if isinstance(exc, IncompletenessError):
        return EXIT_INCOMPLETE
    return EXIT_NUMERICAL


# --------------------------------------------------------------------------
# spectra with caching


def resolve_backend(metric: StandardStationaryMetric, requested: str) -> str:
    if requested != "auto":
        if requested == "product" and not (metric.is_product and metric.h is None):
            raise ValidationError("the product backend needs N = 1, beta = 0 and h = I")
        if requested == "constant-shift" and not (metric.is_torus and metric.is_constant):
            raise ValidationError("the constant-shift backend needs constant coefficients on a torus")
        if requested == "pencil" and not metric.is_torus:
            raise ValidationError("the pencil backend is implemented on tori only")
        return requested
    if metric.is_product and metric.h is None:
        return "product"
    if metric.is_torus and metric.is_constant:
        return "constant-shift"
    if metric.is_torus:
        return "pencil"
    raise ValidationError("no spectral backend for this metric")


def _shift_radius(N: float, b: float, m: float, target: float) -> float:
    """Smallest ``r`` whose plane-wave bound reaches ``target``."""
    rstar = b * m / math.sqrt(N * N - b * b)
    if constant_shift_bound(N, b, m, rstar) >= target:
        return max(rstar, 1e-12)
    hi = max(1.0, 2 * rstar)
    while constant_shift_bound(N, b, m, hi) < target:
        hi *= 2
    return brentq(lambda r: constant_shift_bound(N, b, m, r) - target, rstar, hi, xtol=1e-12)


def _compute_slices(metric, backend, nu, W, masses, cfg) -> JointSpectrum:
    tops = {m: nu * m + W for m in masses}
    if backend == "product":
        r = max(math.sqrt(max(t * t - m * m, 0.0)) for m, t in tops.items())
        surf = surface_spectrum(metric, max(r, 1.0) * (1 + 1e-9))
        return product_joint_spectrum(surf, masses, metric.n, band=(nu, W))
    if backend == "constant-shift":
        N = metric.lapse.constant
        beta = [f.constant for f in metric.shift]
        b = float(np.sqrt(metric.beta_norm_sq(np.zeros(metric.dim))))
        r = max(_shift_radius(N, b, m, t) for m, t in tops.items()) * (1 + 1e-9)
        return constant_shift_torus_spectrum(N, beta, metric.surface.lengths, masses, r, metric.h, band=(nu, W))
    pts, _ = metric.nodes()
    Nmin = float(metric.lapse_at(pts).min())
    bmax = float(np.sqrt(metric.beta_norm_sq(pts).max()))
    out = None
    for m in masses:
        cut = cfg.cutoff if cfg.cutoff is not None else 2 * _shift_radius(Nmin, bmax, m, tops[m]) * (1 + 1e-9)
        sl = pencil_joint_spectrum(metric, m, cut, cfg.tolerances["real"], cfg.tolerances["cluster"])
        out = sl if out is None else out.merge(sl)
    return out


def cached_spectrum(cfg: RunConfig, metric, nu: float, W: float, masses) -> tuple[JointSpectrum, SpectrumCache]:
    """Slices for ``masses`` covering ``|lambda - nu m| <= W``, read from or written to the cache."""
    backend = resolve_backend(metric, cfg.backend)
    material = {
        "schema_version": 1,
        "metric": metric.to_dict(),
        "backend": backend,
        "nu": float(nu),
        "band": float(W),
        "cutoff": cfg.cutoff,
        "real_tol": cfg.tolerances["real"] if backend == "pencil" else None,
        "cluster_tol": cfg.tolerances["cluster"] if backend == "pencil" else None,
    }
    cache = SpectrumCache(cfg.resolved_cache_dir(), material)
    slices = {}
    missing = []
    for m in masses:
        sl = cache.get(m)
        if sl is None:
            missing.append(m)
        else:
            slices[m] = sl
    if missing:
        fresh = _compute_slices(metric, backend, nu, W, missing, cfg)
        for m in missing:
            sl = fresh.slice(m)
            cache.put(sl)
            slices[m] = sl
    return JointSpectrum(metric.n, backend, slices, math.inf, {"cache_key": cache.key}), cache


# --------------------------------------------------------------------------
# helpers


def _metric(cfg: RunConfig) -> StandardStationaryMetric:
    try:
        return StandardStationaryMetric.from_dict(cfg.metric)
    except KeyError as exc:
        raise ValidationError(f"metric specification lacks {exc}") from None
    except (TypeError, ValueError) as exc:
        if isinstance(exc, ValidationError):
            raise
        raise ValidationError(f"bad metric specification: {exc}") from None


def _psi(cfg: RunConfig) -> TestFunction:
    p = dict(cfg.psi)
    return TestFunction(
        float(p.get("hat_support_radius", 0.5)),
        str(p.get("profile", "bump")),
        float(p.get("tol", 1e-10)),
    )


def _out_dir(cfg: RunConfig) -> Path:
    d = Path(cfg.out_dir or "ladderlab-out")
    d.mkdir(parents=True, exist_ok=True)
    return d


def _table(header, rows, fmt: str) -> str:
    if fmt == "json":
        return pretty_json([dict(zip(header, r)) for r in rows])
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for r in rows:
        w.writerow([format_float(v) if isinstance(v, float) else v for v in r])
    return buf.getvalue()


def _ext(cfg) -> str:
    return "json" if cfg.format == "json" else "csv"


def _say(text: str) -> None:
    sys.stdout.write(text + "\n")


def _mode(cfg: RunConfig):
    """``("sharp", C)`` or ``("smoothed", psi)``."""
    if cfg.window is not None:
        return "sharp", cfg.window
    return "smoothed", _psi(cfg)


def _band(mode, arg) -> float:
    return float(arg) if mode == "sharp" else float(arg.effective_radius)


# --------------------------------------------------------------------------
# commands


def cmd_spectrum(cfg: RunConfig) -> int:
    metric = _metric(cfg)
    mode, arg = _mode(cfg)
    W = _band(mode, arg)
    summary = {"backend": resolve_backend(metric, cfg.backend), "band": W, "spectra": []}
    for nu in cfg.nu:
        spec, cache = cached_spectrum(cfg, metric, nu, W, cfg.masses)
        entry = {"nu": nu, "cache_key": cache.key, "slices": []}
        for m in cfg.masses:
            sl = spec.slice(m)
            entry["slices"].append(
                {"m": m, "entries": int(sl.mult.sum()), "complete_lo": sl.complete_lo, "complete_hi": sl.complete_hi}
            )
            _say(f"nu={format_float(nu)} m={m}: {int(sl.mult.sum())} eigenvalues, complete for "
                 f"{format_float(sl.complete_lo)} <= |lambda| <= {format_float(sl.complete_hi)}")
        _say(f"cache {cache.dir}: {cache.hits} hits, {cache.misses} computed")
        summary["spectra"].append(entry)
    atomic_write(_out_dir(cfg) / "spectrum_summary.json", pretty_json(summary))
    return EXIT_OK


def _volume_for(metric, nu):
    return liouville_volume(metric, nu).value


def cmd_count(cfg: RunConfig) -> int:
    metric = _metric(cfg)
    mode, arg = _mode(cfg)
    W = _band(mode, arg)
    out = _out_dir(cfg)
    both = cfg.include_negative_branch
    for i, nu in enumerate(cfg.nu):
        require_admissible(metric, nu, level_rtol=cfg.tolerances["admissible_level"])
        masses = [m for m in cfg.masses if m >= 1]
        spec, _ = cached_spectrum(cfg, metric, nu, W, masses)
        mu = _volume_for(metric, nu)
        rows = []
        for m in masses:
            if mode == "sharp":
                c = count_sharp(spec, nu, arg, m, both, cfg.include_zero_modes)
                pred = weyl_prediction(mu, arg, m, metric.n, "sharp", both)
            else:
                c = count_smoothed(spec, nu, arg, m, positive_only=not both).value
                pred = weyl_prediction(mu, arg.hat0, m, metric.n, "smoothed", both)
            rel = abs(c - pred) / pred if pred else math.nan
            rows.append((m, c if isinstance(c, int) else float(c), float(pred), float(rel)))
        path = out / f"count_nu{i}.{_ext(cfg)}"
        atomic_write(path, _table(["m", "count", "prediction", "relative_error"], rows, cfg.format))
        _say(f"nu={format_float(nu)}: wrote {path}")
    return EXIT_OK


CLUSTER_WIDTH = 3.0


def cmd_verify_weyl(cfg: RunConfig) -> int:
    metric = _metric(cfg)
    mode, arg = _mode(cfg)
    # the clustering diagnostic inspects nu m +/- CLUSTER_WIDTH
    W = max(_band(mode, arg), CLUSTER_WIDTH)
    out = _out_dir(cfg)
    both = cfg.include_negative_branch
    for i, nu in enumerate(cfg.nu):
        require_admissible(metric, nu, level_rtol=cfg.tolerances["admissible_level"])
        masses = [m for m in cfg.masses if m >= 1]
        spec, _ = cached_spectrum(cfg, metric, nu, W, masses)
        mu = _volume_for(metric, nu)
        if mode == "sharp":
            coef = weyl_prediction(mu, arg, 1, metric.n, "sharp", both)
            rep = ladder_report(spec, nu, masses, metric.n, coef, C=arg, tolerance=cfg.tolerances["fit"], both_branches=both,
                cluster_cv=cfg.tolerances["cluster_cv"])
        else:
            coef = weyl_prediction(mu, arg.hat0, 1, metric.n, "smoothed", both)
            rep = ladder_report(spec, nu, masses, metric.n, coef, psi=arg, tolerance=cfg.tolerances["fit"], both_branches=both,
                cluster_cv=cfg.tolerances["cluster_cv"])
        d = rep.to_dict()
        d["liouville_volume"] = mu
        d["tolerances"] = dict(cfg.tolerances)
        atomic_write(out / f"weyl_report_nu{i}.json", pretty_json(d))
        rows = [
            (m, c if isinstance(c, int) else float(c), float(p), float(abs(c - p) / p) if p else math.nan)
            for m, c, p in zip(rep.m, rep.counts, rep.predictions)
        ]
        atomic_write(out / f"weyl_counts_nu{i}.{_ext(cfg)}", _table(["m", "count", "prediction", "relative_error"], rows, cfg.format))
        rel = rep.fit.relative_error
        _say(
            f"nu={format_float(nu)}: fitted {rep.fit.coef:.6g} vs predicted {coef:.6g} "
            f"(relative error {rel:.3g}); verdict {rep.verdict}"
        )
    return EXIT_OK


def cmd_upsilon(cfg: RunConfig) -> int:
    metric = _metric(cfg)
    psi = _psi(cfg)
    out = _out_dir(cfg)
    m_max = max(cfg.masses)
    masses = list(range(0, m_max + 1))
    s = np.linspace(0.0, 2 * math.pi, cfg.s_points, endpoint=False)
    for i, nu in enumerate(cfg.nu):
        require_admissible(metric, nu, level_rtol=cfg.tolerances["admissible_level"])
        spec, _ = cached_spectrum(cfg, metric, nu, psi.effective_radius, masses)
        results = []
        for j, eps in enumerate(cfg.eps_sweep):
            r = upsilon1(spec, nu, psi, s, m_max, eps, cfg.include_zero_modes)
            results.append(r)
            rows = [(float(a), float(v.real), float(v.imag), float(abs(v))) for a, v in zip(s, r.values)]
            atomic_write(out / f"upsilon_nu{i}_eps{j}.{_ext(cfg)}", _table(["s", "Re", "Im", "modulus"], rows, cfg.format))
        report = {
            "nu": nu,
            "m_max": m_max,
            "eps_sweep": cfg.eps_sweep,
            "hat_support_radius": psi.hat_support_radius,
            "m0_contribution": results[0].m0_contribution,
            "peaks": {format_float(r.eps): detect_peaks(s, r.values).tolist() for r in results},
            "persistent_peaks": persistent_peaks(results).tolist(),
        }
        if metric.is_constant or isinstance(metric.surface, RoundSphere):
            ps = period_set_within(metric, nu, psi.hat_support_radius)
            report["periods"] = ps.to_dict()
            report["predicted"] = singular_support_predict(ps.periods, nu, psi.hat_support_radius)
            report["predicted_with_holonomy"] = singular_support_predict(
                ps.periods, nu, psi.hat_support_radius, holonomies=ps.holonomies
            )
        atomic_write(out / f"upsilon_nu{i}.json", pretty_json(report))
        _say(f"nu={format_float(nu)}: persistent peaks at {[round(p, 4) for p in report['persistent_peaks']]}")
    return EXIT_OK


def cmd_volume(cfg: RunConfig) -> int:
    metric = _metric(cfg)
    out = _out_dir(cfg)
    for i, nu in enumerate(cfg.nu):
        res = {}
        if metric.is_product:
            res["closed_form"] = {"value": volume_closed_form_product(metric.volume, nu, metric.n), "error": 0.0}
        q = volume_quadrature(metric, nu)
        res["quadrature"] = q.to_dict()
        res["ellipsoid"] = volume_ellipsoid(metric, nu).to_dict()
        if metric.is_torus:
            res["montecarlo"] = volume_montecarlo(metric, nu, samples=cfg.samples, seed=cfg.seed).to_dict()
        atomic_write(out / f"volume_nu{i}.json", pretty_json({"nu": nu, "n": metric.n, "results": res}))
        _say(f"nu={format_float(nu)}")
        for k, v in res.items():
            _say(f"  {k:<12} {v['value']:.12g} +/- {v['error']:.3g}")
    return EXIT_OK


def cmd_flow(cfg: RunConfig) -> int:
    metric = _metric(cfg)
    out = _out_dir(cfg)
    f = dict(cfg.flow)
    nu = cfg.nu[0]
    d = metric.dim
    x0 = f.get("x0", [0.0] * d)
    direction = f.get("direction", [1.0] + [0.0] * (d - 1))
    st = state_on_level(metric, x0, direction, nu)
    tr = flow(
        metric,
        st,
        float(f.get("duration", 100.0)),
        f.get("step"),
        f.get("integrator", "gauss6"),
        int(f.get("record_every", 1)),
    )
    worst = 0.0
    for k in range(len(tr)):
        nu_k, v = lorentz_diagnostics(metric, tr.state(k))
        N = float(metric.lapse_at(tr.x[k]))
        B = N * N - float(metric.beta_norm_sq(tr.x[k]))
        worst = max(worst, abs(math.sqrt(B) / math.sqrt(1 - v * v) - nu_k))
    atomic_write(out / "trajectory.csv", tr.to_csv())
    summary = {
        "nu": nu,
        "integrator": tr.integrator,
        "step": tr.step,
        "samples": len(tr),
        "shell_drift": tr.shell_drift,
        "tau_drift": tr.tau_drift,
        "lorentz_roundtrip_max_error": worst,
        "coordinate_time_elapsed": float(abs(tr.t[-1] - tr.t[0])),
    }
    atomic_write(out / "flow_summary.json", pretty_json(summary))
    _say(f"shell drift {tr.shell_drift:.3g}, tau drift {tr.tau_drift:.3g}, Lorentz round trip {worst:.3g}")
    return EXIT_OK


def cmd_admissible(cfg: RunConfig) -> int:
    metric = _metric(cfg)
    out = _out_dir(cfg)
    reports = []
    for nu in cfg.nu:
        rep = classify_admissibility(metric, nu, level_rtol=cfg.tolerances["admissible_level"])
        reports.append(rep.to_dict())
        _say(f"nu={format_float(nu)}: {rep.verdict}")
    atomic_write(out / "admissibility.json", pretty_json(reports))
    return EXIT_OK


COMMANDS = {
    "spectrum": cmd_spectrum,
    "count": cmd_count,
    "verify-weyl": cmd_verify_weyl,
    "upsilon": cmd_upsilon,
    "volume": cmd_volume,
    "flow": cmd_flow,
    "admissible": cmd_admissible,
}


# --------------------------------------------------------------------------
# argument parsing


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON run configuration")
    common.add_argument("--metric", help="JSON metric specification (overrides the config)")
    common.add_argument("--nu", type=float, action="append", help="ladder slope; repeatable")
    common.add_argument("--mass-range", help="A:B:STEP (inclusive) or a comma list")
    common.add_argument("--window", type=float, help="sharp window half-width C")
    common.add_argument("--psi-hat-radius", type=float, help="smoothed counting: radius of supp psi-hat")
    common.add_argument("--eps-sweep", help="comma-separated Abel regularization values")
    common.add_argument("--seed", type=int, help="unsigned 64-bit seed")
    common.add_argument("--samples", type=int, help="Monte Carlo sample count")
    common.add_argument("--backend", choices=["auto", "product", "constant-shift", "pencil"])
    common.add_argument("--cutoff", type=float, help="pencil basis cutoff")
    common.add_argument("--cache-dir", help="spectrum cache directory (LADDERLAB_CACHE overrides)")
    common.add_argument("--out-dir", help="output directory")
    common.add_argument("--include-negative-branch", action="store_true", default=None)
    common.add_argument("--include-zero-modes", action="store_true", default=None)
    common.add_argument("--format", choices=["csv", "json"])
    common.add_argument("-v", "--verbose", action="store_true", help="log cache activity to stderr")

    p = argparse.ArgumentParser(prog="ladderlab", description="Klein-Gordon ladder spectra and Weyl-law checks")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__} ({BACKEND} kernels)")
    sub = p.add_subparsers(dest="command", required=True)
    sub.add_parser("spectrum", parents=[common], help="compute and cache joint spectra")
    sub.add_parser("count", parents=[common], help="ladder counts against the Weyl prediction")
    sub.add_parser("verify-weyl", parents=[common], help="fit the Weyl coefficient and report a verdict")
    sub.add_parser("upsilon", parents=[common], help="generating function and its singular support")
    sub.add_parser("volume", parents=[common], help="Liouville volume by every available method")
    fl = sub.add_parser("flow", parents=[common], help="integrate the mass-shell flow")
    fl.add_argument("--duration", type=float)
    fl.add_argument("--step", type=float)
    fl.add_argument("--integrator", choices=["gauss6", "gauss4", "midpoint", "dop853"])
    fl.add_argument("--x0", help="comma-separated start point")
    fl.add_argument("--direction", help="comma-separated momentum direction")
    sub.add_parser("admissible", parents=[common], help="classify ladder slopes")
    return p


def config_from_args(args) -> RunConfig:
    if args.config:
        base = load_config(args.config).to_dict()
    else:
        base = {"schema_version": 1}
    if args.metric:
        base["metric"] = load_metric_spec(args.metric)
    if "metric" not in base:
        raise ValidationError("no metric given: use --metric or a config with a metric entry")
    if args.nu:
        base["nu"] = args.nu
    if args.mass_range:
        base["masses"] = parse_mass_range(args.mass_range)
    if args.psi_hat_radius is not None:
        base["psi"] = {**base.get("psi", {}), "hat_support_radius": args.psi_hat_radius}
        if args.window is None:
            base["window"] = None
    if args.window is not None:
        base["window"] = args.window
    if args.eps_sweep:
        base["eps_sweep"] = parse_float_list(args.eps_sweep)
    for key in ("seed", "samples", "backend", "cutoff", "cache_dir", "out_dir", "format"):
        v = getattr(args, key)
        if v is not None:
            base[key] = v
    for key in ("include_negative_branch", "include_zero_modes"):
        if getattr(args, key):
            base[key] = True
    if args.command == "flow":
        f = dict(base.get("flow", {}))
        if args.duration is not None:
            f["duration"] = args.duration
        if args.step is not None:
            f["step"] = args.step
        if args.integrator:
            f["integrator"] = args.integrator
        if args.x0:
            f["x0"] = parse_float_list(args.x0)
        if args.direction:
            f["direction"] = parse_float_list(args.direction)
        base["flow"] = f
    return RunConfig.from_dict(base)


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(levelname)s %(message)s",
        stream=sys.stderr,
    )
    try:
        cfg = config_from_args(args)
        return COMMANDS[args.command](cfg)
    except LadderLabError as exc:
        code = exit_code_for(exc)
        sys.stderr.write(f"error ({type(exc).__name__}): {exc}\n")
        return code
    except json.JSONDecodeError as exc:
        sys.stderr.write(f"error: invalid JSON: {exc}\n")
        return EXIT_VALIDATION


if __name__ == "__main__":
    sys.exit(main())
