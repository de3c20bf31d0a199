"""Command-line front end: ``dtebounds {bounds,test,illustrate,simulate} --config FILE``.

Each run reads one YAML or JSON document, writes tidy CSV tables and a
``manifest.json`` describing inputs, versions, seeds and every output file.
Exit codes: 0 success, 2 configuration error, 3 data error, 4 insufficient group.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import logging
import platform
import sys
from pathlib import Path

import numpy as np
import pandas as pd
import scipy
import yaml

from . import __version__
from .bounds import _jsonable, default_delta_grid, qote_bounds
from .counterfactual import parse_model, resolve_gce
from .exceptions import ConfigError, DataError, InsufficientDataError
from .gcetest import window_sweep
from .inference import InferenceConfig, bootstrap_first_steps, numerical_delta
from .panel import (
    all_patterns, as_pattern, classify, flip_last, group_matrix, load_panel, pattern_label,
)
from .pipeline import (
    EstimatorConfig, baseline_curve, conditional_curves, fit_first_steps, proposed_curve,
)
from .simulate import (
    DgpSpec,
    IllustrationSpec,
    closed_form_bounds,
    design_group_sizes,
    run_monte_carlo,
)

logger = logging.getLogger("dtebounds")

EXIT_OK, EXIT_CONFIG, EXIT_DATA, EXIT_INSUFFICIENT = 0, 2, 3, 4
DEFAULT_CONDITIONAL_VALUES = [18.0, 21.5, 27.5, 37.0]
FLOAT_FORMAT = "%.10g"


# ---------------------------------------------------------------- config helpers

def read_config(path) -> dict:
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    try:
        doc = json.loads(text) if path.suffix.lower() == ".json" else yaml.safe_load(text)
    except (json.JSONDecodeError, yaml.YAMLError) as exc:
        raise ConfigError(f"config {path} does not parse: {exc}") from None
    if not isinstance(doc, dict):
        raise ConfigError("config must be a mapping")
    return doc


def _block(doc, name):
    block = doc.get(name, doc)
    if not isinstance(block, dict):
        raise ConfigError(f"'{name}' block must be a mapping")
    return block


def _check_keys(block, allowed, where):
    unknown = sorted(set(block) - set(allowed))
    if unknown:
        raise ConfigError(f"unknown keys in {where}: {', '.join(unknown)}")


def _grid(spec, default, name):
    if spec is None:
        return default
    if isinstance(spec, dict):
        _check_keys(spec, {"min", "max", "n"}, name)
        try:
            lo, hi, n = float(spec["min"]), float(spec["max"]), int(spec.get("n", 201))
        except (KeyError, TypeError, ValueError):
            raise ConfigError(f"{name} needs numeric min, max and n") from None
        if hi <= lo or n < 2:
            raise ConfigError(f"{name} must have max > min and n >= 2")
        return np.linspace(lo, hi, n)
    try:
        arr = np.asarray(spec, dtype=float)
    except (TypeError, ValueError):
        raise ConfigError(f"{name} must be a list of numbers or a min/max/n mapping") from None
    if arr.ndim != 1 or arr.size < 1 or np.any(np.diff(arr) <= 0):
        raise ConfigError(f"{name} must be strictly ascending")
    return arr


def _estimator(block) -> EstimatorConfig:
    est = block.get("estimator", {}) or {}
    _check_keys(est, {"grid_size", "link"}, "estimator")
    return EstimatorConfig(grid_size=int(est.get("grid_size", 100)), link=est.get("link", "logit"),
                           min_size=int(block.get("min_size", 20)))


def _inference(block, default_seed):
    inf = block.get("inference")
    if not inf:
        return None
    if not isinstance(inf, dict):
        raise ConfigError("inference must be a mapping")
    _check_keys(inf, {"n_bootstrap", "r", "alpha", "seed", "sign", "two_sided"}, "inference")
    return InferenceConfig(
        n_bootstrap=int(inf.get("n_bootstrap", 500)), r=float(inf.get("r", 0.25)),
        alpha=float(inf.get("alpha", 0.05)), seed=int(inf.get("seed", default_seed)),
        sign=str(inf.get("sign", "minus")), two_sided=bool(inf.get("two_sided", False)),
    ).validate_for_run()


# ---------------------------------------------------------------- outputs

def _sha256_file(path):
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def _versions():
    return {"dtebounds": __version__, "python": platform.python_version(), "numpy": np.__version__,
            "scipy": scipy.__version__, "pandas": pd.__version__, "pyyaml": yaml.__version__}


class RunWriter:
    """Writes tables tagged with a run id and a manifest listing them."""

    def __init__(self, out_dir, command, config, inputs=None, threads=1):
        self.out_dir = Path(out_dir)
        try:
            self.out_dir.mkdir(parents=True, exist_ok=True)
        except OSError as exc:
            raise ConfigError(f"output directory {out_dir} is not writable: {exc}") from None
        ident = {"command": command, "config": config, "inputs": inputs or {}, "versions": _versions()}
        blob = json.dumps(_jsonable(ident), sort_keys=True).encode()
        self.run_id = hashlib.sha256(blob).hexdigest()[:16]
        self.manifest = {"run_id": self.run_id, "command": command, "config": config,
                         "inputs": inputs or {}, "versions": _versions(), "files": {},
                         "threads": threads}
        self._pending = {}

    def table(self, name, frame: pd.DataFrame):
        """Queue a table; nothing is written until :meth:`finish`."""
        frame = frame.copy()
        frame.insert(0, "run_id", self.run_id)
        self._pending[name] = frame

    def finish(self, **extra):
        # tables go to disk only alongside a manifest
        for name, frame in self._pending.items():
            path = self.out_dir / name
            frame.to_csv(path, index=False, float_format=FLOAT_FORMAT, lineterminator="\n")
            self.manifest["files"][name] = _sha256_file(path)
        self.manifest.update(extra)
        path = self.out_dir / "manifest.json"
        path.write_text(json.dumps(_jsonable(self.manifest), indent=2, sort_keys=True) + "\n",
                        encoding="utf-8")
        return path


def _load_data(block):
    if "input" not in block:
        raise ConfigError("'input' is required")
    schema = block.get("schema") or {}
    if not isinstance(schema, dict):
        raise ConfigError("schema must be a mapping")
    rng = block.get("outcome_range")
    if rng is not None and (len(rng) != 2 or float(rng[0]) > float(rng[1])):
        raise ConfigError("outcome_range must be [low, high]")
    path = Path(block["input"])
    if not path.exists():
        raise DataError(f"input file {path} not found")
    data = load_panel(path, schema, delimiter=block.get("delimiter", ","),
                      outcome_range=None if rng is None else (float(rng[0]), float(rng[1])))
    return data, {"input": str(path), "sha256": _sha256_file(path)}


# ---------------------------------------------------------------- commands

BOUNDS_KEYS = {"input", "schema", "delimiter", "window", "target", "model", "recovery_overrides",
               "outcome_range", "filter", "min_size", "estimator", "delta_grid", "tau_grid",
               "conditional", "conditional_values", "inference", "output"}


def cmd_bounds(doc, out_override=None, threads=1):
    block = _block(doc, "bounds")
    _check_keys(block, BOUNDS_KEYS, "bounds")
    target = as_pattern(block.get("target", "111"))
    if len(target) != 3:
        raise ConfigError("target must be a three-period pattern")
    model_opt = str(block.get("model", "1")).lower()
    models = {"both": [1, 2], "wd-only": []}.get(model_opt)
    if models is None:
        models = [parse_model(model_opt)]
    overrides = block.get("recovery_overrides") or {}
    specs = {m: resolve_gce(m, target, overrides) for m in models}
    est = _estimator(block)
    inference = _inference(block, 0) if models else None
    delta_cfg = block.get("delta_grid")
    tau = _grid(block.get("tau_grid"), np.round(np.arange(1, 100) / 100, 10), "tau_grid")
    if np.any((tau <= 0) | (tau >= 1)):
        raise ConfigError("tau_grid values must lie in (0, 1)")
    want_cond = bool(block.get("conditional", False))
    cond_values = [float(v) for v in block.get("conditional_values", DEFAULT_CONDITIONAL_VALUES)]
    out_dir = out_override or block.get("output", "out")
    cell_filter = block.get("filter")

    data, inputs = _load_data(block)
    window = tuple(block.get("window") or data.periods[-3:])
    if len(window) != 3:
        raise ConfigError("window must list three periods")
    index = classify(data, window)
    groups = {p: group_matrix(data, index, p, cell_filter, min_size=0) for p in all_patterns(3)}
    writer = RunWriter(out_dir, "bounds", block, inputs, threads=threads)

    T = groups[target]
    C = groups[flip_last(target)]
    for pat in (target, flip_last(target)):
        if len(groups[pat]) < est.min_size:
            raise InsufficientDataError(
                f"group {pattern_label(pat)} has {len(groups[pat])} units, fewer than {est.min_size}",
                pattern=pat, size=len(groups[pat]))
    y1, y0 = (T[:, 2], C[:, 2]) if target[2] == 1 else (C[:, 2], T[:, 2])
    delta = _grid(delta_cfg, default_delta_grid(y1, y0), "delta_grid")

    dote_rows, qote_rows, band_rows, curves, details = [], [], [], {}, {}
    base_first = fit_first_steps(groups, target, None, est)
    curves["wd_baseline"] = baseline_curve(base_first, delta)
    for m in models:
        first = fit_first_steps(groups, target, specs[m], est)
        name = f"model{m}"
        curves[name] = proposed_curve(first, delta)
        details[name] = {"spec": specs[m].as_dict(), "fit_reports": first.reports,
                         "rearrangement_shift": curves[name].meta["rearrangement_shift"],
                         "rearrangement_flag": curves[name].meta["rearrangement_flag"]}
        if want_cond:
            for curve in conditional_curves(first, cond_values, delta):
                v = curve.meta["conditioning_value"]
                q = qote_bounds(curve, tau).to_frame()
                q.insert(0, "conditioning_value", v)
                q.insert(0, "method", name)
                writer.table(f"qote_conditional_{name}_{v:g}.csv", q)
        if inference is not None:
            boots = bootstrap_first_steps(groups, target, specs[m], inference, est, first)
            band = numerical_delta(first, boots, lambda f: proposed_curve(f, delta), inference)
            frame = band.to_frame()
            frame.insert(0, "method", name)
            band_rows.append(frame)
            qb = band.quantile_band(tau).to_frame()
            qb.insert(0, "method", name)
            qb.insert(1, "kind", "band")
            qote_rows.append(qb)
            details[name]["inference"] = band.as_record()
    for name, curve in curves.items():
        frame = curve.to_frame()
        frame.insert(0, "method", name)
        dote_rows.append(frame)
        q = qote_bounds(curve, tau).to_frame()
        q.insert(0, "method", name)
        q.insert(1, "kind", "point")
        qote_rows.append(q)
        if name in details:
            details[name]["qote_off_grid"] = int(np.count_nonzero(q["lower_flag"]) +
                                                 np.count_nonzero(q["upper_flag"]))
    writer.table("dote.csv", pd.concat(dote_rows, ignore_index=True))
    writer.table("qote.csv", pd.concat(qote_rows, ignore_index=True))
    if band_rows:
        writer.table("bands.csv", pd.concat(band_rows, ignore_index=True))
    extra = {}
    if len(models) == 2:
        a, b = curves["model1"], curves["model2"]
        extra["model_sup_gap"] = float(max(np.abs(a.lower - b.lower).max(),
                                           np.abs(a.upper - b.upper).max()))
    writer.finish(
        panel={"periods": list(data.periods), "window": list(window), "n_units": data.n_units,
               "rows_dropped_missing_or_trimmed": data.n_missing_rows,
               "units_dropped_unbalanced": index.n_dropped,
               "group_sizes": {pattern_label(p): len(g) for p, g in groups.items()},
               "proportions": {pattern_label(p): v for p, v in index.proportions.items()}},
        models=details, seeds={"inference": None if inference is None else inference.seed},
        **extra,
    )
    return writer


TEST_KEYS = {"input", "schema", "delimiter", "target", "assumption", "n_bootstrap", "n_multiplier",
             "seed", "min_size", "kendall_method", "copula_method", "outcome_range", "output"}


def cmd_test(doc, out_override=None, threads=1):
    block = _block(doc, "test")
    _check_keys(block, TEST_KEYS, "test")
    target = as_pattern(block.get("target", "111"))
    opt = str(block.get("assumption", "both")).lower()
    assumptions = [1, 2] if opt == "both" else [parse_model(opt)]
    seed = int(block.get("seed", 0))
    data, inputs = _load_data(block)
    if len(data.periods) < 6:
        raise DataError(f"testing needs at least six periods, the panel has {len(data.periods)}")
    writer = RunWriter(out_override or block.get("output", "out"), "test",
                       block, inputs, threads=threads)
    tables = []
    for a, ss in zip(assumptions, np.random.SeedSequence(seed).spawn(len(assumptions))):
        tables.append(window_sweep(
            data, a, target, n_bootstrap=int(block.get("n_bootstrap", 999)),
            n_multiplier=int(block.get("n_multiplier", 1000)), seed=int(ss.generate_state(1)[0]),
            min_size=int(block.get("min_size", 20)),
            kendall_method=block.get("kendall_method", "bootstrap"),
            copula_method=block.get("copula_method", "multiplier")))
    table = pd.concat(tables, ignore_index=True)
    writer.table("gce_tests.csv", table)
    writer.finish(seeds={"test": seed}, n_flagged=int((table["flag"] != "").sum()))
    return writer


ILLUSTRATE_KEYS = {"specs", "rho0", "rho1", "n_nodes", "delta_grid", "output"}


def cmd_illustrate(doc, out_override=None, threads=1):
    block = _block(doc, "illustrate")
    _check_keys(block, ILLUSTRATE_KEYS, "illustrate")
    delta = _grid(block.get("delta_grid"), np.round(np.linspace(-4, 4, 161), 10), "delta_grid")
    n_nodes = int(block.get("n_nodes", 64))
    if "specs" in block:
        raw = block["specs"] or []
    else:
        rho0 = block.get("rho0", [0.0, 0.3, 0.5, 0.9])
        rho0 = rho0 if isinstance(rho0, list) else [rho0]
        raw = [{"rho0": r, "rho1": block.get("rho1", 0.0)} for r in rho0]
    if not raw:
        raise ConfigError("illustrate needs at least one (rho0, rho1) spec")
    specs = [IllustrationSpec(rho1=float(s.get("rho1", 0.0)), rho0=float(s.get("rho0", 0.0)),
                              n_nodes=n_nodes, delta_grid=tuple(delta)) for s in raw]
    writer = RunWriter(out_override or block.get("output", "out"), "illustrate",
                       block, threads=threads)
    frames, checks = [], []
    for spec in specs:
        proposed, baseline = closed_form_bounds(spec)
        for curve, method in ((proposed, "proposed"), (baseline, "wd_baseline")):
            f = curve.to_frame()
            f.insert(0, "method", method)
            f.insert(0, "rho1", spec.rho1)
            f.insert(0, "rho0", spec.rho0)
            frames.append(f)
        zero = int(np.argmin(np.abs(delta)))
        checks.append({"rho0": spec.rho0, "rho1": spec.rho1,
                       "width_at_zero": float(proposed.upper[zero] - proposed.lower[zero]),
                       "baseline_width_at_zero": float(baseline.upper[zero] - baseline.lower[zero]),
                       "node_doubling_change": proposed.meta["node_doubling_change"]})
    writer.table("illustration.csv", pd.concat(frames, ignore_index=True)[
        ["rho0", "rho1", "delta", "lower", "upper", "method"]])
    writer.finish(curves=checks)
    return writer


SIMULATE_KEYS = {"N", "rho_star", "n_reps", "target", "models", "seed", "estimator", "delta_grid",
                 "inference", "rho_treated", "mu_eta", "mu_theta", "min_size", "output"}


def cmd_simulate(doc, out_override=None, threads=1):
    block = _block(doc, "simulate")
    _check_keys(block, SIMULATE_KEYS, "simulate")
    sizes = block.get("N", [100, 500, 1000])
    sizes = sizes if isinstance(sizes, list) else [sizes]
    rhos = block.get("rho_star", [0.0, 0.6, 0.9])
    rhos = rhos if isinstance(rhos, list) else [rhos]
    target = as_pattern(block.get("target", "111"))
    models = tuple(parse_model(m) for m in block.get("models", [1, 2]))
    n_reps = int(block.get("n_reps", 100))
    if n_reps < 1:
        raise ConfigError("n_reps must be positive")
    seed = int(block.get("seed", 0))
    est_block = dict(block)
    est_block.setdefault("estimator", {"link": "probit"})
    est = _estimator(est_block)
    inference = _inference(block, seed)
    delta = _grid(block.get("delta_grid"), np.linspace(-5, 5, 101), "delta_grid")
    cells = []
    streams = np.random.SeedSequence(seed).spawn(len(sizes) * len(rhos))
    for i, (n, rho) in enumerate((n, r) for n in sizes for r in rhos):
        spec = DgpSpec(design_group_sizes(target, int(n)), rho_star=float(rho),
                       mu_eta=block.get("mu_eta"), mu_theta=block.get("mu_theta"),
                       rho_treated=float(block.get("rho_treated", 0.5)),
                       seed=int(streams[i].generate_state(1)[0]))
        cells.append(spec)
    writer = RunWriter(out_override or block.get("output", "out"), "simulate",
                       block, threads=threads)
    rows, curve_frames, timings = [], [], []
    for spec in cells:
        report = run_monte_carlo(spec, n_reps, target, est, delta, models, inference)
        rows.extend(report.rows())
        for m in models:
            curve_frames.append(pd.DataFrame({
                "N": report.meta["N"], "rho_star": spec.rho_star, "model": m, "delta": delta,
                "mean_lower": report.mean_lower[m], "mean_upper": report.mean_upper[m],
                "theory_lower": report.theory.lower, "theory_upper": report.theory.upper}))
        timings.append({"N": report.meta["N"], "rho_star": spec.rho_star,
                        "seed": spec.seed, "seconds": round(report.seconds, 1)})
    writer.table("mc_report.csv", pd.DataFrame(rows))
    writer.table("mc_curves.csv", pd.concat(curve_frames, ignore_index=True))
    writer.finish(cells=[s.as_dict() for s in cells], seeds={"simulate": seed}, timings=timings)
    return writer


COMMANDS = {"bounds": cmd_bounds, "test": cmd_test, "illustrate": cmd_illustrate,
            "simulate": cmd_simulate}


def build_parser():
    parser = argparse.ArgumentParser(prog="dtebounds", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name, help=f"run the {name} pipeline")
        p.add_argument("--config", "-c", required=True, help="YAML or JSON run configuration")
        p.add_argument("--out", help="override the output directory")
        p.add_argument("--threads", type=int, default=1,
                       help="worker cap (computation is single-threaded; recorded in the manifest)")
        p.add_argument("--verbose", "-v", action="count", default=0)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.WARNING - 10 * min(args.verbose, 2),
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        doc = read_config(args.config)
        if args.threads < 1:
            raise ConfigError("--threads must be positive")
        writer = COMMANDS[args.command](doc, args.out, args.threads)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except InsufficientDataError as exc:
        print(f"insufficient data: {exc}", file=sys.stderr)
        return EXIT_INSUFFICIENT
    except DataError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    print(f"wrote {writer.out_dir} (run {writer.run_id})")
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
