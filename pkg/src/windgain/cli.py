"""``windgain`` command line: ``period1``, ``period2`` and ``synth``.

Exit codes: 0 success, 2 bad configuration or scenario, 3 input file not
found, 4 data error, 5 analysis error, 6 manifest missing.  Failures print
a one-line JSON report on stderr.
"""

from __future__ import annotations

import argparse
import json
import math
import os
import sys
import tempfile

import pandas as pd

from . import __version__
from .config import AnalysisConfig, BootstrapConfig, TurbineInput, load_config, read_document
from .dataset import align, ingest_series
from .errors import ConfigError, ManifestMissing, WindGainError
from .evaluation import make_folds
from .period1 import assess_pair, rank_pairs, ranking_table, select_variables
from .period2 import (
    PowerFrequency,
    bootstrap_gain,
    empirical_aep,
    empirical_power_frequency,
    quantify_gain,
)
from .synthgen import FarmScenario, generate, long_term_reference

MANIFEST_NAME = "manifest.json"
MANIFEST_VERSION = 1
EXIT_NOT_FOUND = 3


# ---------------------------------------------------------------------------
# Output helpers (deterministic bytes, atomic replace)
# ---------------------------------------------------------------------------
def _clean(obj):
    """JSON-safe copy: non-finite floats become null."""
    if isinstance(obj, float):
        return obj if math.isfinite(obj) else None
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if hasattr(obj, "item"):
        return _clean(obj.item())
    return obj


def _atomic_write(path, text):
    d = os.path.dirname(os.path.abspath(path))
    os.makedirs(d, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=d, prefix=".tmp-")
    try:
        with os.fdopen(fd, "w", newline="\n") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def write_json(path, obj):
    _atomic_write(path, json.dumps(_clean(obj), indent=2, sort_keys=True, allow_nan=False) + "\n")


def write_text(path, text):
    _atomic_write(path, text.rstrip("\n") + "\n")


def write_csv(path, frame):
    _atomic_write(path, frame.to_csv(index=False, lineterminator="\n", float_format="%.10g"))


def _pair_dir(root, ctrb, ctrn):
    return os.path.join(root, "period1", f"{ctrb}__{ctrn}")


def _load(turbine):
    return ingest_series(turbine.path, turbine.columns, turbine.id)


def _aligned(cfg, series, ctrb, ctrn):
    return align(series[cfg.ref.id], series[ctrb], series[ctrn], cfg.boundary,
                 cfg.cadence_seconds)


def _parse_pair(text):
    parts = [p.strip() for p in text.split(",")]
    if len(parts) != 2 or not all(parts):
        raise ConfigError(f"--override-pair expects CTRB,CTRN, got {text!r}")
    return tuple(parts)


# ---------------------------------------------------------------------------
# Commands
# ---------------------------------------------------------------------------
def cmd_period1(cfg, override_pair=None):
    """Select covariates and rank control pairs; write the manifest last."""
    pairs = cfg.candidate_pairs()
    if override_pair is not None:
        for tid in override_pair:
            cfg.turbine(tid)
        if override_pair not in pairs:
            pairs.append(override_pair)
    needed = {cfg.ref.id} | {t for p in pairs for t in p}
    series = {tid: _load(cfg.turbine(tid)) for tid in sorted(needed)}

    assessments, traces = [], {}
    for ctrb, ctrn in pairs:
        ds = _aligned(cfg, series, ctrb, ctrn)
        folds = make_folds(ds.n_p1, cfg.fold_seed)
        trace = select_variables(ds, folds, cfg.k_grid, cfg.candidates,
                                 cfg.bin_width, cfg.min_bin_count)
        a = assess_pair(ds, trace.final_set, folds, cfg.k_grid, ctrb, ctrn,
                        cfg.pair_threshold_kw, cfg.bin_width, cfg.min_bin_count)
        traces[(ctrb, ctrn)] = trace
        assessments.append(a)

        out = _pair_dir(cfg.output_dir, ctrb, ctrn)
        write_json(os.path.join(out, "selection.json"), trace.to_dict())
        write_text(os.path.join(out, "selection.txt"), trace.to_text())
        write_json(os.path.join(out, "cv_metrics.json"), {
            "n_p1": ds.n_p1, "n_p2": ds.n_p2,
            "ref": a.ref_metrics.to_dict(), "ctrb": a.ctrb_metrics.to_dict()})
        write_csv(os.path.join(out, "bias_ref.csv"), a.ref_metrics.curves_frame())
        write_csv(os.path.join(out, "bias_ctrb.csv"), a.ctrb_metrics.curves_frame())
        write_csv(os.path.join(out, "diff.csv"), a.diff_curve.to_frame(fold=0))

    ranked = rank_pairs(assessments)
    write_json(os.path.join(cfg.output_dir, "period1", "ranking.json"),
               [dict(rank=i, **a.summary()) for i, a in enumerate(ranked, 1)])
    write_text(os.path.join(cfg.output_dir, "period1", "ranking.txt"), ranking_table(ranked))

    if override_pair is not None:
        chosen = next(a for a in assessments if (a.ctrb_id, a.ctrn_id) == override_pair)
    else:
        chosen = ranked[0]
    manifest = {
        "version": MANIFEST_VERSION,
        "ref": cfg.ref.id,
        "ctrb": chosen.ctrb_id,
        "ctrn": chosen.ctrn_id,
        "variables": list(chosen.variables),
        "pair_overridden": override_pair is not None,
        "passes_threshold": chosen.passes_10kw,
        "max_abs_diff": chosen.max_abs_diff,
        "fold_seed": cfg.fold_seed,
        "bin_width": cfg.bin_width,
        "min_bin_count": cfg.min_bin_count,
        "k_min": cfg.k_min,
        "k_max": cfg.k_max,
    }
    write_json(os.path.join(cfg.output_dir, MANIFEST_NAME), manifest)
    return manifest


def read_manifest(path):
    if not os.path.exists(path):
        raise ManifestMissing(f"no manifest at {path}; run period1 first")
    with open(path) as fh:
        try:
            m = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ManifestMissing(f"unreadable manifest {path}: {exc}")
    missing = {"ref", "ctrb", "ctrn", "variables"} - set(m)
    if missing:
        raise ManifestMissing(f"manifest {path} lacks {sorted(missing)}")
    return m


def cmd_period2(cfg, manifest_path=None):
    """Gain curves, annualized gain and bootstrap CI for the manifest's choices."""
    manifest = read_manifest(manifest_path or os.path.join(cfg.output_dir, MANIFEST_NAME))
    if manifest["ref"] != cfg.ref.id:
        raise ConfigError(f"manifest REF {manifest['ref']!r} differs from config {cfg.ref.id!r}")
    ctrb, ctrn = manifest["ctrb"], manifest["ctrn"]
    variables = tuple(manifest["variables"])
    series = {tid: _load(cfg.turbine(tid)) for tid in sorted({cfg.ref.id, ctrb, ctrn})}
    ds = _aligned(cfg, series, ctrb, ctrn)

    if cfg.power_frequency is not None:
        if not os.path.exists(cfg.power_frequency):
            raise FileNotFoundError(cfg.power_frequency)
        pi = PowerFrequency.from_csv(cfg.power_frequency, cfg.bin_width)
    else:
        pi = empirical_power_frequency(ds.bin_power(), cfg.bin_width)
    aep = cfg.aep_kwh if cfg.aep_kwh is not None else empirical_aep(ds.response("REF", ds.p1_mask))

    folds = make_folds(ds.n_p1, cfg.fold_seed)
    report = quantify_gain(ds, variables, folds, pi, aep, cfg.k_grid,
                           cfg.bin_width, cfg.min_bin_count)
    boot = bootstrap_gain(ds, variables, pi, aep, cfg.bootstrap.replicates,
                          cfg.bootstrap.seed, cfg.bootstrap.ci_level, cfg.k_grid,
                          cfg.bin_width, cfg.min_bin_count)
    report = report.with_bootstrap(boot)

    out = os.path.join(cfg.output_dir, "period2")
    doc = report.to_dict()
    doc.update({"ref": cfg.ref.id, "ctrb": ctrb, "ctrn": ctrn,
                "aep_source": "config" if cfg.aep_kwh is not None else "empirical (Period 1 REF)"})
    write_json(os.path.join(out, "gain_report.json"), doc)
    write_csv(os.path.join(out, "gain_curves.csv"), report.curves.to_frame())
    parts = []
    for name, c in (("ref_p1", report.bias_p1_ref), ("ref_p2", report.bias_p2_ref),
                    ("ctrb_p1", report.bias_p1_ctrb), ("ctrb_p2", report.bias_p2_ctrb)):
        f = c.to_frame()
        f.insert(0, "curve", name)
        parts.append(f)
    write_csv(os.path.join(out, "bias_curves.csv"), pd.concat(parts, ignore_index=True))
    write_csv(os.path.join(out, "bootstrap_replicates.csv"), boot.to_frame())
    write_csv(os.path.join(out, "power_frequency.csv"), pi.to_frame())
    return report


def cmd_synth(scenario, output_dir, bin_width=100.0):
    """Synthetic farm CSVs, truth, long-term power frequency and a ready config."""
    farm = generate(scenario)
    farm.write(output_dir)
    pi, aep = long_term_reference(scenario, bin_width)
    write_csv(os.path.join(output_dir, "pi.csv"), pi.to_frame())
    cfg = AnalysisConfig(
        ref=TurbineInput("REF", "REF.csv"),
        controls=(TurbineInput("CTRB", "CTRB.csv"), TurbineInput("CTRN", "CTRN.csv")),
        boundary=farm.boundary,
        output_dir="results",
        cadence_seconds=scenario.cadence_seconds,
        bin_width=bin_width,
        fold_seed=scenario.seed,
        bootstrap=BootstrapConfig(seed=scenario.seed),
        power_frequency="pi.csv",
        aep_kwh=aep,
    )
    write_json(os.path.join(output_dir, "analysis.json"), cfg.to_dict())
    return farm


# ---------------------------------------------------------------------------
# Entry point
# ---------------------------------------------------------------------------
def build_parser():
    p = argparse.ArgumentParser(prog="windgain",
                                description="Power-gain analysis of a turbine upgrade from SCADA data.")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = p.add_subparsers(dest="command", required=True)

    p1 = sub.add_parser("period1", help="select covariates and rank control pairs")
    p1.add_argument("--config", required=True, help="analysis config (.toml or .json)")
    p1.add_argument("--override-pair", metavar="CTRB,CTRN",
                    help="record this pair in the manifest instead of the top-ranked one")
    p1.add_argument("--seed", type=int, help="fold seed (overrides the config)")
    p1.add_argument("--output-dir", help="output directory (overrides the config)")

    p2 = sub.add_parser("period2", help="quantify the gain for the manifest's choices")
    p2.add_argument("--config", required=True, help="analysis config (.toml or .json)")
    p2.add_argument("--manifest", help="manifest path (default: <output_dir>/manifest.json)")
    p2.add_argument("--seed", type=int, help="bootstrap seed (overrides the config)")
    p2.add_argument("--output-dir", help="output directory (overrides the config)")

    ps = sub.add_parser("synth", help="write a synthetic three-turbine data set")
    ps.add_argument("--config", help="scenario file; keys are FarmScenario fields, "
                                     "plus optional output_dir and bin_width")
    ps.add_argument("--seed", type=int, help="generator seed (overrides the scenario)")
    ps.add_argument("--output-dir", help="output directory (overrides the scenario file)")
    return p


def _analysis_config(args):
    cfg = load_config(args.config)
    changes = {}
    if args.output_dir:
        changes["output_dir"] = os.path.abspath(args.output_dir)
    if args.seed is not None:
        if args.command == "period1":
            changes["fold_seed"] = args.seed
        else:
            b = cfg.bootstrap
            changes["bootstrap"] = BootstrapConfig(b.replicates, b.ci_level, args.seed)
    return cfg.replace(**changes) if changes else cfg


def run(args):
    if args.command == "synth":
        doc = read_document(args.config) if args.config else {}
        base = os.path.dirname(os.path.abspath(args.config)) if args.config else os.getcwd()
        out = args.output_dir or os.path.join(base, doc.pop("output_dir", "synthetic"))
        bin_width = float(doc.pop("bin_width", 100.0))
        if args.seed is not None:
            doc["seed"] = args.seed
        farm = cmd_synth(FarmScenario.from_dict(doc), out, bin_width)
        return {"output_dir": os.path.abspath(out), "truth": farm.truth}
    cfg = _analysis_config(args)
    if args.command == "period1":
        pair = _parse_pair(args.override_pair) if args.override_pair else None
        return cmd_period1(cfg, pair)
    report = cmd_period2(cfg, args.manifest)
    b = report.bootstrap
    return {"annualized_gain": report.annualized_gain, "ci_low": b.ci_low,
            "ci_high": b.ci_high, "pi_coverage": report.pi_coverage}


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        summary = run(args)
    except WindGainError as exc:
        return _fail(type(exc).__name__, str(exc), exc.exit_code)
    except FileNotFoundError as exc:
        return _fail("FileNotFound", str(exc.filename or exc), EXIT_NOT_FOUND)
    print(json.dumps(_clean(summary), sort_keys=True))
    return 0


def _fail(kind, message, code):
    print(json.dumps({"error": kind, "message": message, "exit_code": code}), file=sys.stderr)
    return code


if __name__ == "__main__":
    sys.exit(main())
