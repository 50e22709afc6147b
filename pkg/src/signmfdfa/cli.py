"""Command-line front end.

Subcommands::

    signmfdfa analyze INPUT -o OUTDIR [options]
    signmfdfa surrogate INPUT -o OUTDIR --shuffles N --seed S [options]
    signmfdfa synth cascade|fgn -o FILE [options]
    signmfdfa replay MANIFEST -o OUTDIR

Exit codes: 0 success, 2 usage error, 3 data error, 4 numerical refusal.
Failures print one line ``error: reason=<Reason> detail=<text>`` to stderr.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import math
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__
from .engine import (
    MODES,
    NORMALIZATIONS,
    ZERO_POLICIES,
    EngineConfig,
    MFDFAResult,
    q_grid,
    run_mfdfa,
)
from .errors import DataError, MFDFAError, UsageError
from .series import (
    PriceSeries,
    ReturnSeries,
    SessionCalendar,
    filter_overnight,
    log_returns,
    read_series_csv,
    shuffle,
    write_series_csv,
)
from .spectrum import compare_channels, legendre, tau_from_hurst
from .synth import CascadeSpec, FgnSpec, binomial_cascade, fgn

MANIFEST = "manifest.json"


def _sha256(path: str | Path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def _num(x: float):
    x = float(x)
    return x if math.isfinite(x) else None


def _dump(obj) -> str:
    return json.dumps(obj, indent=2, allow_nan=False) + "\n"


# -- pipeline pieces shared by analyze / surrogate / replay -----------------

def _engine_config(opts: dict) -> EngineConfig:
    fit = None
    if opts["fit_min"] is not None or opts["fit_max"] is not None:
        fit = (opts["fit_min"], opts["fit_max"])
    return EngineConfig(
        q_grid=q_grid(opts["q_min"], opts["q_max"], opts["q_step"]),
        poly_order=opts["poly_order"],
        mode=opts["mode"],
        zero_policy=opts["zero_policy"],
        variance_normalization=opts["normalization"],
        scales_min=opts["scales_min"],
        scales_max=opts["scales_max"],
        scales_count=opts["scales_count"],
        fit_range=fit,
        workers=opts["workers"],
    )


def _load_returns(opts: dict) -> tuple[ReturnSeries, dict]:
    overnight = opts["overnight"]
    calendar = None
    if overnight.startswith("calendar:"):
        calendar = SessionCalendar.from_file(overnight[len("calendar:"):])
    elif overnight not in ("auto", "off"):
        raise UsageError(f"--overnight must be auto, off or calendar:<file>, not {overnight!r}")
    series = read_series_csv(opts["input"], opts["input_kind"], opts["delimiter"], calendar)
    returns = log_returns(series) if isinstance(series, PriceSeries) else series
    n_in = len(returns)
    if overnight != "off":
        returns = filter_overnight(returns, calendar, gap_factor=opts["gap_factor"])
    info = {
        "overnight": overnight,
        "gap_factor": opts["gap_factor"],
        "returns_in": n_in,
        "returns_used": len(returns),
        "overnight_removed": returns.meta.removed_count,
    }
    return returns, info


def _channel_records(result: MFDFAResult) -> tuple[list[dict], dict, dict]:
    records, spectra = [], {}
    for name, ch in result.channels.items():
        tau = tau_from_hurst(ch.hurst)
        spec = legendre(tau)
        spectra[name] = spec
        m = spec.metrics
        hs = ch.hurst
        qkeys = [repr(float(q)) for q in hs.q]
        records.append({
            "channel": name,
            "alpha_max": _num(m.alpha_max),
            "delta_alpha": _num(m.delta_alpha),
            "left_width": _num(m.left_width),
            "right_width": _num(m.right_width),
            "asymmetry": _num(m.asymmetry),
            "h": {k: _num(v) for k, v in zip(qkeys, hs.h)},
            "diagnostics": {
                "fit_range": list(hs.fit_range),
                "h_stderr": {k: _num(v) for k, v in zip(qkeys, hs.stderr)},
                "r_squared": {k: _num(v) for k, v in zip(qkeys, hs.r_squared)},
                "h_monotonicity_violations": [float(hs.q[i]) for i in hs.monotonicity_violations()],
                "tau_concave": bool(m.concave),
                "alpha_monotone": bool(m.alpha_monotone),
                "surface_monotone": ch.surface.is_monotone(),
                "segment_stats": [st.as_dict() for st in ch.surface.segment_stats],
            },
        })
    errors = {
        name: {"reason": exc.reason, "detail": str(exc)} for name, exc in result.errors.items()
    }
    return records, errors, spectra


def _write_analysis(result: MFDFAResult, outdir: Path, surfaces: bool) -> tuple[dict, list[str]]:
    records, errors, spectra = _channel_records(result)
    metrics: dict = {"channels": records, "errors": errors}
    if "positive" in spectra and "negative" in spectra:
        cmp = compare_channels(spectra["positive"], spectra["negative"])
        metrics["comparison"] = {
            "delta_alpha_max": _num(cmp.delta_alpha_max),
            "width_difference": _num(cmp.width_difference),
            "alpha_difference": {
                repr(float(q)): _num(d) for q, d in zip(cmp.q, cmp.alpha_difference)
            },
        }
    written = []
    for name, spec in spectra.items():
        fname = f"spectrum_{name}.csv"
        spec.write_csv(outdir / fname)
        written.append(fname)
    lines = ["channel,q,alpha,f_alpha"]
    for name, spec in spectra.items():
        lines += [f"{name},{float(q)!r},{float(a)!r},{float(f)!r}" for q, a, f in zip(spec.q, spec.alpha, spec.f)]
    (outdir / "spectrum_long.csv").write_text("\n".join(lines) + "\n")
    written.append("spectrum_long.csv")
    if surfaces:
        for name, ch in result.channels.items():
            fname = f"surface_{name}.csv"
            ch.surface.write_csv(outdir / fname)
            written.append(fname)
    (outdir / "metrics.json").write_text(_dump(metrics))
    written.append("metrics.json")
    return metrics, written


def _manifest(command: str, opts: dict, result: MFDFAResult, prep: dict,
              outdir: Path, written: list[str], seeds: list[int], started: float) -> dict:
    cfg = result.config
    return {
        "tool": "signmfdfa",
        "version": __version__,
        "command": command,
        "options": opts,
        "input_sha256": _sha256(opts["input"]),
        "preprocessing": prep,
        "resolved": {
            "length": result.length,
            "scales": list(result.scales),
            "q_grid": list(cfg.q_grid),
            "poly_order": cfg.poly_order,
            "mode": cfg.mode,
            "zero_policy": cfg.zero_policy,
            "min_points_per_fit": cfg.min_points,
            "variance_normalization": cfg.variance_normalization,
            "fit_range": [None if v is None else int(v) for v in (cfg.fit_range or (None, None))],
            "channels": list(cfg.channels),
            "seeds": seeds,
        },
        "exclusions": {
            name: [st.as_dict() for st in ch.surface.segment_stats]
            for name, ch in result.channels.items()
        },
        "outputs": {f: _sha256(outdir / f) for f in written},
        "timing": {"seconds": round(time.perf_counter() - started, 6)},
    }


def _analyze(opts: dict, outdir: Path) -> None:
    started = time.perf_counter()
    outdir.mkdir(parents=True, exist_ok=True)
    returns, prep = _load_returns(opts)
    result = run_mfdfa(returns, _engine_config(opts))
    _, written = _write_analysis(result, outdir, opts["surfaces"])
    manifest = _manifest("analyze", opts, result, prep, outdir, written, [], started)
    (outdir / MANIFEST).write_text(_dump(manifest))


def surrogate_seeds(seed: int, n: int) -> list[int]:
    """Replicate i is shuffled with seed + i."""
    return [seed + i for i in range(n)]


def _ensemble(values: list[float]) -> dict:
    v = np.array(values, dtype=float)
    if len(v) == 0:
        return {"mean": None, "std": None, "values": []}
    std = float(v.std(ddof=1)) if len(v) > 1 else 0.0
    return {"mean": _num(v.mean()), "std": _num(std), "values": [_num(x) for x in v]}


def _surrogate(opts: dict, outdir: Path) -> None:
    started = time.perf_counter()
    if opts["shuffles"] < 1:
        raise UsageError("--shuffles must be at least 1")
    if opts["seed"] < 0:
        raise UsageError("--seed must be non-negative")
    outdir.mkdir(parents=True, exist_ok=True)
    returns, prep = _load_returns(opts)
    cfg = _engine_config(opts)
    result = run_mfdfa(returns, cfg)
    metrics, written = _write_analysis(result, outdir, opts["surfaces"])
    seeds = surrogate_seeds(opts["seed"], opts["shuffles"])

    per_channel: dict[str, dict[str, list]] = {
        ch: {"alpha_max": [], "delta_alpha": [], "failures": []} for ch in cfg.channels
    }
    for s in seeds:
        try:
            rep = run_mfdfa(shuffle(returns, s), cfg)
        except MFDFAError as exc:
            for ch in cfg.channels:
                per_channel[ch]["failures"].append({"seed": s, "reason": exc.reason})
            continue
        records, errors, _ = _channel_records(rep)
        for rec in records:
            per_channel[rec["channel"]]["alpha_max"].append(rec["alpha_max"])
            per_channel[rec["channel"]]["delta_alpha"].append(rec["delta_alpha"])
        for ch, err in errors.items():
            per_channel[ch]["failures"].append({"seed": s, "reason": err["reason"]})

    original = {rec["channel"]: rec for rec in metrics["channels"]}
    report = {"shuffles": opts["shuffles"], "seeds": seeds, "channels": []}
    for ch, acc in per_channel.items():
        orig = original.get(ch)
        report["channels"].append({
            "channel": ch,
            "original": None if orig is None else {
                "alpha_max": orig["alpha_max"], "delta_alpha": orig["delta_alpha"],
            },
            "surrogate": {
                "alpha_max": _ensemble(acc["alpha_max"]),
                "delta_alpha": _ensemble(acc["delta_alpha"]),
                "failures": acc["failures"],
            },
        })
    (outdir / "surrogate.json").write_text(_dump(report))
    written.append("surrogate.json")
    manifest = _manifest("surrogate", opts, result, prep, outdir, written, seeds, started)
    (outdir / MANIFEST).write_text(_dump(manifest))


def _synth(opts: dict, out: Path) -> None:
    if opts["generator"] == "cascade":
        spec = CascadeSpec(opts["levels"], opts["a"], opts["sign_seed"])
        series = binomial_cascade(spec)
        params = {"levels": spec.levels, "a": spec.a, "sign_seed": spec.seed}
    else:
        fspec = FgnSpec(opts["hurst"], opts["length"], opts["seed"])
        series = fgn(fspec)
        params = {"hurst": fspec.hurst, "length": fspec.length, "seed": fspec.seed}
    out.parent.mkdir(parents=True, exist_ok=True)
    write_series_csv(out, series)
    manifest = {
        "tool": "signmfdfa",
        "version": __version__,
        "command": "synth",
        "options": opts,
        "generator": opts["generator"],
        "parameters": params,
        "rows": len(series),
        "outputs": {out.name: _sha256(out)},
    }
    Path(str(out) + ".manifest.json").write_text(_dump(manifest))


def _replay(manifest_path: Path, outdir: Path) -> None:
    try:
        manifest = json.loads(Path(manifest_path).read_text())
        command, opts = manifest["command"], manifest["options"]
    except (OSError, ValueError, KeyError) as exc:
        raise DataError(f"unreadable manifest {manifest_path}: {exc}") from None
    if command == "synth":
        _synth(opts, outdir / Path(opts["output"]).name)
        return
    if _sha256(opts["input"]) != manifest.get("input_sha256"):
        raise DataError(f"input {opts['input']} no longer matches the manifest checksum")
    {"analyze": _analyze, "surrogate": _surrogate}[command](opts, outdir)


# -- argument parsing -------------------------------------------------------

def _add_analysis_options(p: argparse.ArgumentParser) -> None:
    p.add_argument("input", help="CSV of timestamp,price (or timestamp,value with --input-kind returns)")
    p.add_argument("-o", "--out", required=True, help="output directory")
    p.add_argument("--input-kind", choices=("prices", "returns"), default="prices")
    p.add_argument("--delimiter", choices=(",", ";"), default=None,
                   help="field delimiter (default: detect)")
    p.add_argument("--overnight", default="auto",
                   help="auto (gap rule), off, or calendar:<file> (default: auto)")
    p.add_argument("--gap-factor", type=float, default=5.0,
                   help="drop returns whose interval exceeds this multiple of the median spacing")
    p.add_argument("--mode", choices=MODES, default="signed")
    p.add_argument("--q-min", type=float, default=-10.0)
    p.add_argument("--q-max", type=float, default=10.0)
    p.add_argument("--q-step", type=float, default=0.25)
    p.add_argument("--poly-order", type=int, default=2)
    p.add_argument("--scales-min", type=int, default=None)
    p.add_argument("--scales-max", type=int, default=None)
    p.add_argument("--scales-count", type=int, default=20)
    p.add_argument("--fit-min", type=int, default=None)
    p.add_argument("--fit-max", type=int, default=None)
    p.add_argument("--zero-policy", choices=ZERO_POLICIES, default="exclude")
    p.add_argument("--normalization", choices=NORMALIZATIONS, default="paper_1_over_s")
    p.add_argument("--surfaces", action="store_true", help="also write F_q(s) matrices")
    p.add_argument("--workers", type=int, default=1, help="threads across scales")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="signmfdfa", description=__doc__.split("\n")[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("analyze", help="estimate h(q) and f(alpha) per channel")
    _add_analysis_options(p)

    p = sub.add_parser("surrogate", help="compare against shuffled surrogates")
    _add_analysis_options(p)
    p.add_argument("--shuffles", type=int, default=10)
    p.add_argument("--seed", type=int, default=0)

    p = sub.add_parser("synth", help="write a synthetic series")
    gens = p.add_subparsers(dest="generator", required=True)
    g = gens.add_parser("cascade", help="deterministic binomial cascade")
    g.add_argument("--levels", type=int, default=16)
    g.add_argument("--a", type=float, default=0.75)
    g.add_argument("--sign-seed", type=int, default=None,
                   help="randomise signs with this seed")
    g.add_argument("-o", "--output", required=True)
    g = gens.add_parser("fgn", help="fractional Gaussian noise")
    g.add_argument("--hurst", type=float, required=True)
    g.add_argument("--length", type=int, default=65536)
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("-o", "--output", required=True)

    p = sub.add_parser("replay", help="re-run the command recorded in a manifest")
    p.add_argument("manifest")
    p.add_argument("-o", "--out", required=True)
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    opts = {k: v for k, v in vars(args).items() if k not in ("command", "out")}
    try:
        if args.command == "analyze":
            _analyze(opts, Path(args.out))
        elif args.command == "surrogate":
            _surrogate(opts, Path(args.out))
        elif args.command == "synth":
            _synth(opts, Path(args.output))
        else:
            _replay(Path(args.manifest), Path(args.out))
    except MFDFAError as exc:
        detail = " ".join(str(exc).split())
        print(f"error: reason={exc.reason} detail={detail}", file=sys.stderr)
        return exc.exit_code
    return 0


if __name__ == "__main__":
    sys.exit(main())
