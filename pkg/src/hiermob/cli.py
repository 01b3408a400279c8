"""Command-line front end: one subcommand per phase of the modeling life cycle.

Subcommands talk to each other through files. Every artifact ``X`` comes with
``X.manifest.json`` (config digest, seed, input and output digests; stable
across reruns) and ``X.run.json`` (timestamps and durations; volatile).

Exit codes: 0 success, 1 usage error or missing file, 2 validation error,
3 data error.
"""
from __future__ import annotations

import argparse
import hashlib
import json
import logging
import math
import sys
import time
from pathlib import Path
from typing import Optional, Sequence

from . import __version__
from .adapt import AdaptationError, apply_script, load_script
from .hierarchy import (HierarchyError, RegionId, check_hierarchy, flat_region, format_report,
                        load_hierarchy)
from .ingest import CleaningConfig, IngestError, clean, read_store
from .model import (DataError, ModelConfig, ModelSchemaError, chord_csv, chord_export, fit_region,
                    load_model, serialize)
from .pipeline import model_filename, run_pipeline
from .sessions import split_sessions, sweep_threshold
from .synth import GenerationConfig, GenerationError, generate_trace
from .validate import map_clusters, refit_synthetic, rmse, round_trip

logger = logging.getLogger("hiermob")

EXIT_OK, EXIT_USAGE, EXIT_VALIDATION, EXIT_DATA = 0, 1, 2, 3

_VALIDATION_ERRORS = (HierarchyError, ModelSchemaError, AdaptationError)
_DATA_ERRORS = (DataError, IngestError, GenerationError)
_KIND_CODES = {cls.__name__: EXIT_VALIDATION for cls in _VALIDATION_ERRORS}
_KIND_CODES.update({cls.__name__: EXIT_DATA for cls in _DATA_ERRORS})
_KIND_CODES.update({"OverlapError": EXIT_VALIDATION, "CoverageError": EXIT_VALIDATION,
                    "StructureError": EXIT_VALIDATION})


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


# ---------------------------------------------------------------- helpers

def sha256_file(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def parse_grid(text: str) -> list[float]:
    """``"1:60"`` (inclusive), ``"5:60:5"`` or ``"10,20,30"``."""
    try:
        if ":" in text:
            parts = [float(p) for p in text.split(":")]
            if len(parts) not in (2, 3):
                raise ValueError
            start, stop = parts[0], parts[1]
            step = parts[2] if len(parts) == 3 else 1.0
            if step <= 0:
                raise ValueError
            n = int(math.floor((stop - start) / step + 1e-9)) + 1
            grid = [start + i * step for i in range(max(n, 0))]
        else:
            grid = [float(p) for p in text.split(",") if p.strip()]
    except ValueError:
        raise UsageError(f"bad threshold grid {text!r}; use START:STOP[:STEP] or a comma list") from None
    if not grid:
        raise UsageError(f"threshold grid {text!r} is empty")
    return [int(g) if float(g).is_integer() else g for g in grid]


def _require(path, what: str) -> Path:
    p = Path(path)
    if not p.exists():
        raise FileNotFoundError(f"{what} not found: {p}")
    return p


def _write(path, text: str) -> Path:
    p = Path(path)
    p.parent.mkdir(parents=True, exist_ok=True)
    with open(p, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(text)
    return p


def _config_view(args) -> dict:
    skip = {"func", "json_errors", "verbose", "config"}
    out = {}
    for key, value in sorted(vars(args).items()):
        if key in skip:
            continue
        if isinstance(value, Path):
            value = str(value)
        elif isinstance(value, (list, tuple)):
            value = [str(v) if isinstance(v, Path) else v for v in value]
        out[key] = value
    return out


def write_manifest(artifact, args, inputs: Sequence, outputs: Sequence, started: float,
                   extra: Optional[dict] = None) -> None:
    """Stable ``<artifact>.manifest.json`` and volatile ``<artifact>.run.json``."""
    config = _config_view(args)
    config_text = json.dumps(config, sort_keys=True, separators=(",", ":"))
    manifest = {
        "tool": "hiermob",
        "version": __version__,
        "command": args.command,
        "config": config,
        "config_sha256": hashlib.sha256(config_text.encode("utf-8")).hexdigest(),
        "seed": getattr(args, "seed", None),
        "inputs": {str(p): sha256_file(p) for p in inputs},
        "outputs": {str(p): sha256_file(p) for p in outputs},
    }
    if extra:
        manifest.update(extra)
    _write(f"{artifact}.manifest.json", json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    finished = time.time()
    run = {"started_unix": started, "finished_unix": finished, "seconds": finished - started,
           "argv": sys.argv[1:]}
    _write(f"{artifact}.run.json", json.dumps(run, indent=2, sort_keys=True) + "\n")


def _model_config(args) -> ModelConfig:
    threshold = None
    if getattr(args, "threshold", None) is not None:
        threshold = math.inf if args.threshold <= 0 else args.threshold
    return ModelConfig(threshold=threshold, grid=parse_grid(args.sweep), k=args.k, k_max=args.elbow,
                       seed=args.seed, restarts=args.restarts)


def _region(args, store):
    """Region selected by ``--region`` from ``--hierarchy``, or one zone per AP."""
    if not args.hierarchy:
        return flat_region(sorted(store.ap_ids))
    tree = load_hierarchy([_require(p, "hierarchy file") for p in args.hierarchy])
    if args.region is None:
        return tree.root
    rid = RegionId.parse(args.region)
    if rid not in tree.regions:
        raise UsageError(f"region {rid} is not in the hierarchy")
    return tree[rid]


def _hierarchy_inputs(args) -> list:
    return list(args.hierarchy or [])


# ---------------------------------------------------------------- commands

def cmd_ingest(args) -> int:
    started = time.time()
    store = read_store(_require(args.input, "input file"), args.format)
    out = Path(args.output)
    _write(out, store.to_jsonl() if out.suffix == ".jsonl" else store.to_csv())
    write_manifest(out, args, [args.input], [out], started,
                   {"n_samples": len(store), "n_users": store.n_users, "skipped": store.skipped})
    print(f"{store!r} -> {out}")
    return EXIT_OK


def cmd_clean(args) -> int:
    started = time.time()
    store = read_store(_require(args.input, "input file"))
    window = tuple(args.window) if args.window else None
    rules = CleaningConfig(args.drop_single, frozenset(args.exclude_ap or ()),
                           frozenset(args.exclude_user or ()), window)
    cleaned = clean(store, rules)
    out = Path(args.output)
    _write(out, cleaned.to_jsonl() if out.suffix == ".jsonl" else cleaned.to_csv())
    write_manifest(out, args, [args.input], [out], started,
                   {"n_samples_in": len(store), "n_samples_out": len(cleaned)})
    print(f"{len(store)} -> {len(cleaned)} samples -> {out}")
    return EXIT_OK


def cmd_sessions(args) -> int:
    started = time.time()
    store = read_store(_require(args.input, "input file"))
    region = _region(args, store)
    out = Path(args.output)
    if args.threshold is not None:
        thr = math.inf if args.threshold <= 0 else args.threshold
        lines = ["user_id,start,end,duration_s,n_samples"]
        for s in split_sessions(store, region, thr):
            lines.append(f"{s.user_id},{s.start},{s.end},{s.duration},{len(s)}")
        _write(out, "\n".join(lines) + "\n")
        print(f"{len(lines) - 1} sessions at threshold {args.threshold} min -> {out}")
    else:
        sweep = sweep_threshold(store, region, parse_grid(args.sweep))
        _write(out, sweep.to_csv())
        print(f"chosen threshold {sweep.chosen} min -> {out}")
    write_manifest(out, args, [args.input, *_hierarchy_inputs(args)], [out], started)
    return EXIT_OK


def cmd_model(args) -> int:
    started = time.time()
    store = read_store(_require(args.input, "input file"))
    region = _region(args, store)
    fit = fit_region(store, region, _model_config(args))
    out = Path(args.output)
    outputs = [_write(out, serialize(fit.model))]
    stem = out.with_suffix("")
    if fit.sweep is not None:
        outputs.append(_write(f"{stem}.sweep.csv", fit.sweep.to_csv()))
    if fit.elbow is not None:
        outputs.append(_write(f"{stem}.elbow.csv", fit.elbow.to_csv()))
    write_manifest(out, args, [args.input, *_hierarchy_inputs(args)], outputs, started)
    prov = fit.model.provenance
    print(f"{region.id}: k={fit.model.k}, threshold={prov['threshold_min']} min, "
          f"{prov['n_sessions']} sessions -> {out}")
    return EXIT_OK


def cmd_synth(args) -> int:
    started = time.time()
    model = load_model(_require(args.model, "model file"), row_tol=args.row_tol)
    inter = args.interarrival if args.interarrival == "from-data" else float(args.interarrival)
    try:
        cfg = GenerationConfig(args.users, inter, args.weights, args.seed, args.start)
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    try:
        trace = generate_trace(model, cfg)
    except ValueError as exc:
        raise DataError(str(exc)) from None
    out = Path(args.output)
    _write(out, trace.to_jsonl() if out.suffix == ".jsonl" else trace.to_csv())
    write_manifest(out, args, [args.model], [out], started,
                   {"n_samples": len(trace.samples), "diagnostics": trace.diagnostics})
    print(f"{len(trace.clusters)} users, {len(trace.samples)} samples -> {out}")
    return EXIT_OK


def cmd_adapt(args) -> int:
    started = time.time()
    model = load_model(_require(args.model, "model file"), row_tol=args.row_tol)
    script = load_script(_require(args.script, "adaptation script"))
    adapted = apply_script(model, script)
    out = _write(args.output, serialize(adapted))
    write_manifest(out, args, [args.model, args.script], [out], started)
    print(f"{len(script)} directives applied, {adapted.n_zones} zones, k={adapted.k} -> {out}")
    return EXIT_OK


def cmd_validate(args) -> int:
    started = time.time()
    inputs = []
    if args.round_trip:
        if args.input:
            store = read_store(_require(args.input, "input file"))
            region = _region(args, store)
            report, _, _ = round_trip(store, region, _model_config(args), seed=args.seed)
            inputs = [args.input, *_hierarchy_inputs(args)]
        elif args.model_a:
            m1 = load_model(_require(args.model_a, "model file"), row_tol=args.row_tol)
            n = args.users or m1.provenance.get("n_sessions")
            if not n:
                raise UsageError("--users is required when the model does not record n_sessions")
            m2 = refit_synthetic(m1, int(n), seed=args.seed,
                                 config=ModelConfig(seed=args.seed, restarts=args.restarts))
            report = rmse(m1, m2, map_clusters(m1, m2), args.exclude_structural)
            inputs = [args.model_a]
        else:
            raise UsageError("--round-trip needs --input (with optional --hierarchy) or --model-a")
    else:
        if not (args.model_a and args.model_b):
            raise UsageError("give --round-trip, or both --model-a and --model-b")
        a = load_model(_require(args.model_a, "model file"), row_tol=args.row_tol)
        b = load_model(_require(args.model_b, "model file"), row_tol=args.row_tol)
        if a.k != b.k:
            raise DataError(f"models have different cluster counts ({a.k} vs {b.k})")
        report = rmse(a, b, map_clusters(a, b), args.exclude_structural)
        inputs = [args.model_a, args.model_b]
    out = _write(args.output, report.to_json())
    write_manifest(out, args, inputs, [out], started)
    print(report.to_table())
    return EXIT_OK


def cmd_plotdata(args) -> int:
    started = time.time()
    model = load_model(_require(args.model, "model file"), row_tol=args.row_tol)
    outdir = Path(args.output_dir)
    outputs = []
    for j, c in enumerate(model.clusters):
        rows = chord_export(c.matrix, model.state_labels, include_in=not args.no_in,
                            include_out=args.include_out)
        outputs.append(_write(outdir / f"chord_cluster{j}.csv", chord_csv(rows)))
    write_manifest(outdir / "plotdata", args, [args.model], outputs, started)
    print(f"{len(outputs)} chord tables -> {outdir}")
    return EXIT_OK


def cmd_pipeline(args) -> int:
    started = time.time()
    store = read_store(_require(args.input, "input file"))
    if not args.hierarchy:
        raise UsageError("pipeline needs --hierarchy")
    tree = load_hierarchy([_require(p, "hierarchy file") for p in args.hierarchy])
    results = run_pipeline(store, tree, _model_config(args), jobs=args.jobs)
    outdir = Path(args.output_dir)
    outdir.mkdir(parents=True, exist_ok=True)
    summary, timing, outputs = [], [], []
    for r in results:
        entry = {"region": r.region.id.to_dict(), "status": "ok" if r.ok else "failed"}
        if r.ok:
            name = model_filename(r.region)
            outputs.append(_write(outdir / name, serialize(r.model)))
            entry.update(file=name, k=r.model.k, threshold_min=r.model.provenance["threshold_min"],
                         n_sessions=r.model.provenance["n_sessions"])
        else:
            entry.update(error=r.error, error_kind=r.error_kind)
        summary.append(entry)
        timing.append({"region": str(r.region.id), "seconds": r.seconds})
    outputs.append(_write(outdir / "summary.json", json.dumps(summary, indent=2) + "\n"))
    wall = time.time() - started
    _write(outdir / "timing.json", json.dumps({"wall_seconds": wall, "jobs": args.jobs,
                                               "regions": timing}, indent=2) + "\n")
    write_manifest(outdir / "pipeline", args, [args.input, *args.hierarchy], outputs, started)
    failed = [r for r in results if not r.ok]
    print(f"{len(results) - len(failed)}/{len(results)} regions modeled -> {outdir}")
    if failed:
        for r in failed:
            print(f"failed {r.region.id}: {r.error}", file=sys.stderr)
        return max(_KIND_CODES.get(r.error_kind, EXIT_DATA) for r in failed)
    return EXIT_OK


def cmd_check_hierarchy(args) -> int:
    files = [_require(p, "hierarchy file") for p in args.hierarchy]
    try:
        report = check_hierarchy(files)
    except json.JSONDecodeError as exc:
        raise HierarchyError(f"hierarchy file is not valid JSON: {exc}") from None
    if args.output:
        _write(args.output, json.dumps(report, indent=2) + "\n")
    print(format_report(report))
    if not report["valid"]:
        raise HierarchyError("hierarchy is invalid", report["errors"])
    return EXIT_OK


# ---------------------------------------------------------------- parser

def _add_modeling(p, fixed_threshold=True):
    p.add_argument("--hierarchy", nargs="+", metavar="FILE", help="region documents (JSON)")
    p.add_argument("--region", help="region id LEVEL[:BUILDING[:WING]]; default: the top region")
    p.add_argument("--sweep", default="1:60", help="threshold grid in minutes (default 1:60)")
    if fixed_threshold:
        p.add_argument("--threshold", type=float,
                       help="fixed threshold in minutes instead of the sweep; 0 disables gap splitting")
    p.add_argument("--elbow", type=int, default=30, metavar="K_MAX", help="largest k tried (default 30)")
    p.add_argument("--k", type=int, help="fixed number of user types instead of the elbow rule")
    p.add_argument("--restarts", type=int, default=10)


def build_parser() -> argparse.ArgumentParser:
    common = _Parser(add_help=False)
    common.add_argument("--config", help="JSON file of option defaults (keys are option names)")
    common.add_argument("--json-errors", action="store_true", help="machine-readable errors on stderr")
    common.add_argument("--seed", type=int, default=0)
    common.add_argument("-v", "--verbose", action="store_true")

    parser = _Parser(prog="hiermob", description="Hierarchical human mobility models from Wi-Fi logs.")
    parser.add_argument("--version", action="version", version=f"hiermob {__version__}")
    sub = parser.add_subparsers(dest="command", parser_class=_Parser, required=True)

    p = sub.add_parser("ingest", parents=[common], help="parse a raw log into a canonical store")
    p.add_argument("--input", required=True)
    p.add_argument("--format", choices=("csv", "jsonl", "proximity"))
    p.add_argument("--output", required=True)
    p.set_defaults(func=cmd_ingest)

    p = sub.add_parser("clean", parents=[common], help="drop users, APs or time ranges")
    p.add_argument("--input", required=True)
    p.add_argument("--output", required=True)
    p.add_argument("--drop-single", action="store_true", help="drop users seen only once")
    p.add_argument("--exclude-ap", nargs="*")
    p.add_argument("--exclude-user", nargs="*")
    p.add_argument("--window", nargs=2, type=int, metavar=("START", "END"))
    p.set_defaults(func=cmd_clean)

    p = sub.add_parser("sessions", parents=[common], help="threshold sweep, or sessions at a fixed threshold")
    p.add_argument("--input", required=True)
    p.add_argument("--output", required=True)
    _add_modeling(p)
    p.set_defaults(func=cmd_sessions)

    p = sub.add_parser("model", parents=[common], help="fit the mobility model of one region")
    p.add_argument("--input", required=True)
    p.add_argument("--output", required=True)
    _add_modeling(p)
    p.set_defaults(func=cmd_model)

    p = sub.add_parser("synth", parents=[common], help="generate a synthetic trace from a model")
    p.add_argument("--model", required=True)
    p.add_argument("--users", type=int, required=True)
    p.add_argument("--interarrival", default="from-data", help="mean seconds between arrivals")
    p.add_argument("--weights", type=float, nargs="+", help="user-type weights (default: popularities)")
    p.add_argument("--start", type=int, default=0, help="timestamp of the observation start")
    p.add_argument("--row-tol", type=float, default=1e-6)
    p.add_argument("--output", required=True)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("adapt", parents=[common], help="apply an adaptation script to a model")
    p.add_argument("--model", required=True)
    p.add_argument("--script", required=True)
    p.add_argument("--row-tol", type=float, default=1e-6)
    p.add_argument("--output", required=True)
    p.set_defaults(func=cmd_adapt)

    p = sub.add_parser("validate", parents=[common], help="RMSE between models, or the round trip")
    p.add_argument("--round-trip", action="store_true")
    p.add_argument("--input")
    p.add_argument("--model-a")
    p.add_argument("--model-b")
    p.add_argument("--users", type=int, help="synthetic sessions for a model round trip")
    p.add_argument("--exclude-structural", action="store_true")
    p.add_argument("--row-tol", type=float, default=1e-6)
    p.add_argument("--output", required=True)
    _add_modeling(p)
    p.set_defaults(func=cmd_validate)

    p = sub.add_parser("plotdata", parents=[common], help="chord-diagram tables of a model")
    p.add_argument("--model", required=True)
    p.add_argument("--output-dir", required=True)
    p.add_argument("--include-out", action="store_true", help="also list transitions to OUT")
    p.add_argument("--no-in", action="store_true", help="leave out transitions from IN")
    p.add_argument("--row-tol", type=float, default=1e-6)
    p.set_defaults(func=cmd_plotdata)

    p = sub.add_parser("pipeline", parents=[common], help="model every region of a hierarchy")
    p.add_argument("--input", required=True)
    p.add_argument("--output-dir", required=True)
    p.add_argument("--jobs", type=int, help="worker processes (default: cores, capped by regions)")
    _add_modeling(p)
    p.set_defaults(func=cmd_pipeline)

    p = sub.add_parser("check-hierarchy", parents=[common], help="validate hierarchy documents")
    p.add_argument("--hierarchy", nargs="+", required=True, metavar="FILE")
    p.add_argument("--output", help="write the report as JSON")
    p.set_defaults(func=cmd_check_hierarchy)
    return parser


def _apply_config(parser: argparse.ArgumentParser, argv: list[str]) -> argparse.Namespace:
    args = parser.parse_args(argv)
    if not args.config:
        return args
    path = _require(args.config, "config file")
    with open(path, encoding="utf-8") as fh:
        try:
            defaults = json.load(fh)
        except json.JSONDecodeError as exc:
            raise UsageError(f"config file {path} is not valid JSON: {exc}") from None
    if not isinstance(defaults, dict):
        raise UsageError(f"config file {path} must hold a JSON object")
    defaults = {k.replace("-", "_"): v for k, v in defaults.items()}
    unknown = sorted(set(defaults) - set(vars(args)))
    if unknown:
        raise UsageError(f"unknown keys in {path} for '{args.command}': {', '.join(unknown)}")
    subparser = parser._subparsers._group_actions[0].choices[args.command]
    subparser.set_defaults(**defaults)
    return parser.parse_args(argv)


def _exit_code(exc: BaseException) -> int:
    if isinstance(exc, (UsageError, FileNotFoundError)):
        return EXIT_USAGE
    if isinstance(exc, _VALIDATION_ERRORS):
        return EXIT_VALIDATION
    if isinstance(exc, _DATA_ERRORS):
        return EXIT_DATA
    return EXIT_USAGE


def _report_error(exc: BaseException, code: int, as_json: bool) -> None:
    if as_json:
        doc = {"error": type(exc).__name__, "message": str(exc), "exit_code": code}
        issues = getattr(exc, "issues", None)
        if issues:
            doc["issues"] = issues
        print(json.dumps(doc), file=sys.stderr)
    else:
        print(f"hiermob: error: {exc}", file=sys.stderr)


def main(argv: Optional[Sequence[str]] = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    as_json = "--json-errors" in argv
    parser = build_parser()
    try:
        args = _apply_config(parser, argv)
        logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                            format="%(levelname)s %(name)s: %(message)s")
        return args.func(args)
    except (UsageError, FileNotFoundError, ValueError, OSError) as exc:
        if isinstance(exc, FileNotFoundError) and exc.filename and str(exc.filename) not in str(exc):
            exc = FileNotFoundError(f"file not found: {exc.filename}")
        code = _exit_code(exc)
        _report_error(exc, code, as_json)
        return code
    except GenerationError as exc:
        _report_error(exc, EXIT_DATA, as_json)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
