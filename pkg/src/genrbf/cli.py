"""Command-line front end: ``genrbf <subcommand> ...``.

Every subcommand writes a manifest JSON next to its main output that records
the fully resolved configuration. ``benchmark`` accepts such a manifest as its
config, which reproduces the original run.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import os
import sys
from pathlib import Path

import numpy as np

from . import __version__, _backend, datasets
from .data import (DataFormatError, Dataset, StandardizationParams, apply_standardization,
                   fit_standardization, load_csv, write_csv)
from .density import EMDivergenceError, GaussianModel, estimate_em
from .kernel import (KernelError, KernelParams, gram, gram_cross, write_gram_binary,
                     write_gram_csv)
from .missingness import inject
from .representation import PointRepresentation, condition_many, represent_dataset
from .subspace import from_mask, whiten, whitening_map
from .svm import SvmModel, predict, train

log = logging.getLogger("genrbf")

OUTPUT_ENV = "GENRBF_OUTPUT_DIR"
EXIT_OK, EXIT_ERROR, EXIT_PARTIAL = 0, 1, 2

CONFIG_SCHEMA = {
    "type": "object",
    "required": ["datasets"],
    "additionalProperties": False,
    "properties": {
        "datasets": {
            "type": "array", "minItems": 1,
            "items": {"oneOf": [
                {"type": "string", "minLength": 1},
                {"type": "object", "required": ["name", "path"], "additionalProperties": False,
                 "properties": {"name": {"type": "string", "minLength": 1},
                                "path": {"type": "string"},
                                "label_column": {"type": ["integer", "string"]}}},
            ]},
        },
        "mechanisms": {"type": "array", "minItems": 1,
                       "items": {"enum": ["mcar", "mar", "nmar"]}},
        "fractions": {"type": "array", "minItems": 1,
                      "items": {"type": "number", "minimum": 0, "exclusiveMaximum": 1}},
        "methods": {"type": "array", "minItems": 1, "uniqueItems": True,
                    "items": {"enum": ["genrbf", "zero", "mean", "rbf"]}},
        "c_grid": {"type": "array", "minItems": 1,
                   "items": {"type": "number", "exclusiveMinimum": 0}},
        "gamma_grid": {"type": "array", "minItems": 1,
                       "items": {"type": "number", "exclusiveMinimum": 0}},
        "outer_folds": {"type": "integer", "minimum": 2},
        "inner_folds": {"type": "integer", "minimum": 2},
        "repetitions": {"type": "integer", "minimum": 1},
        "seed": {"type": "integer", "minimum": 0, "maximum": 2 ** 64 - 1},
        "svm_tol": {"type": "number", "exclusiveMinimum": 0},
        "svm_max_passes": {"type": "integer", "minimum": 1},
        "em_tol": {"type": "number", "exclusiveMinimum": 0},
        "em_max_iters": {"type": "integer", "minimum": 1},
        "threads": {"type": "integer", "minimum": 1},
        "rank_mode": {"enum": ["row", "collapsed"]},
        "alpha": {"enum": [0.05, 0.1]},
    },
}

CONFIG_DEFAULTS = {"mechanisms": ["mcar"], "fractions": [0.5], "rank_mode": "row",
                   "alpha": 0.05}


class CliError(Exception):
    pass


# --- helpers -----------------------------------------------------------------

def _dump(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=True) + "\n"


def _write_manifest(path: Path, command: str, config: dict, extra: dict | None = None) -> Path:
    doc = {"command": command, "version": __version__, "config": config}
    if extra:
        doc.update(extra)
    path.write_text(_dump(doc))
    return path


def _manifest_path(output: Path) -> Path:
    return output.with_name(output.name + ".manifest.json")


def _output_dir(arg) -> Path:
    out = Path(arg) if arg else Path(os.environ.get(OUTPUT_ENV, "genrbf-out"))
    out.mkdir(parents=True, exist_ok=True)
    return out


def _resolve_output(arg, default_name: str) -> Path:
    if arg:
        p = Path(arg)
        p.parent.mkdir(parents=True, exist_ok=True)
        return p
    return _output_dir(None) / default_name


def _label_column(value):
    if value is None:
        return -1
    try:
        return int(value)
    except ValueError:
        return value


def _load(path, label_column=-1) -> Dataset:
    return load_csv(path, label_column=_label_column(label_column))


def _standardize(data: Dataset, enabled: bool):
    if not enabled:
        return data, None
    params = fit_standardization(data)
    return apply_standardization(data, params), params


def _represent(model: GaussianModel, data: Dataset, whitened: bool):
    """Condition every row of ``data`` on ``model``, optionally after whitening."""
    if not whitened:
        return represent_dataset(model, data.values, data.missing)
    A, b = whitening_map(model.cov, model.mean)
    wmodel = model.transform(A, b)
    points = [whiten(from_mask(data.values[i], data.missing[i]), model.cov, model.mean)
              for i in range(len(data))]
    return condition_many(wmodel, points)


def _em_args(p):
    p.add_argument("--max-iters", type=int, default=500)
    p.add_argument("--tol", type=float, default=1e-6)
    p.add_argument("--ridge", type=float, default=None)


def _fit(data: Dataset, args) -> GaussianModel:
    return estimate_em(data, max_iters=args.max_iters, tol=args.tol, ridge=args.ridge)


# --- subcommands -------------------------------------------------------------

def cmd_inject(args) -> int:
    data = _load(args.input, args.label_column)
    out = _resolve_output(args.output, "injected.csv")
    res = inject(data, args.mech, args.p, args.seed, args.anchors)
    write_csv(res.data, out)
    config = {"input": str(args.input), "mechanism": args.mech, "p": args.p, "seed": args.seed,
              "anchor_count": args.anchors, "label_column": args.label_column,
              "output": str(out)}
    _write_manifest(_manifest_path(out), "inject", config, {"mask": res.manifest})
    log.info("wrote %s (%d missing cells)", out, int(res.data.missing.sum()))
    return EXIT_OK


def cmd_estimate(args) -> int:
    data = _load(args.input, args.label_column)
    data, std = _standardize(data, args.standardize)
    model = _fit(data, args)
    out = _resolve_output(args.output, "model.json")
    doc = model.to_dict()
    doc["n_iter"] = model.n_iter
    doc["loglik"] = model.loglik
    if std is not None:
        doc["standardization"] = std.to_dict()
    out.write_text(_dump(doc))
    config = {"input": str(args.input), "max_iters": args.max_iters, "tol": args.tol,
              "ridge": model.ridge, "standardize": args.standardize, "output": str(out)}
    _write_manifest(_manifest_path(out), "estimate", config)
    return EXIT_OK


def cmd_gram(args) -> int:
    params = KernelParams(args.gamma)
    data = _load(args.input, args.label_column)
    data, _ = _standardize(data, args.standardize)
    if args.model:
        model = GaussianModel.from_dict(json.loads(Path(args.model).read_text()))
    else:
        model = _fit(data, args)
    reps = _represent(model, data, args.whiten)
    K = gram(reps, params, n_threads=args.threads)
    out = _resolve_output(args.output, "gram.bin" if args.format == "binary" else "gram.csv")
    if args.format == "binary":
        write_gram_binary(K, out)
    else:
        write_gram_csv(K, out)
    config = {"input": str(args.input), "gamma": args.gamma, "format": args.format,
              "whiten": args.whiten, "standardize": args.standardize, "model": args.model,
              "max_iters": args.max_iters, "tol": args.tol, "ridge": model.ridge,
              "threads": args.threads, "backend": _backend.name, "output": str(out)}
    _write_manifest(_manifest_path(out), "gram", config)
    return EXIT_OK


def cmd_train(args) -> int:
    params = KernelParams(args.gamma)
    raw = _load(args.input, args.label_column)
    data, std = _standardize(raw, args.standardize)
    model = _fit(data, args)
    reps = _represent(model, data, args.whiten)
    K = gram(reps, params, n_threads=args.threads)
    svm = train(K, data.labels, args.C, tol=args.svm_tol, max_passes=args.max_passes,
                params=params, support_reps=reps)
    svm.extra = {
        "gaussian": model.to_dict(),
        "standardization": None if std is None else std.to_dict(),
        "whiten": args.whiten,
        "label_names": list(raw.label_names) if raw.label_names else None,
        "train_accuracy": svm.train_accuracy,
    }
    out = _resolve_output(args.output, "svm.json")
    out.write_text(_dump(svm.to_dict()))
    config = {"input": str(args.input), "gamma": args.gamma, "C": args.C,
              "svm_tol": args.svm_tol, "max_passes": args.max_passes,
              "standardize": args.standardize, "whiten": args.whiten,
              "max_iters": args.max_iters, "tol": args.tol, "ridge": model.ridge,
              "threads": args.threads, "output": str(out)}
    _write_manifest(_manifest_path(out), "train", config,
                    {"converged": svm.converged, "train_accuracy": svm.train_accuracy,
                     "n_support": int(svm.support_indices.size)})
    if not svm.converged:
        log.warning("SMO did not converge within %d pair updates", args.max_passes)
    return EXIT_OK


def cmd_predict(args) -> int:
    doc = json.loads(Path(args.model).read_text())
    svm = SvmModel.from_dict(doc)
    if svm.params is None or not doc.get("support_representations"):
        raise CliError("model file lacks gamma or support representations")
    data = _load(args.input, None if args.no_label else args.label_column)
    if doc.get("standardization"):
        data = apply_standardization(data, StandardizationParams.from_dict(doc["standardization"]))
    gaussian = GaussianModel.from_dict(doc["gaussian"])
    reps = _represent(gaussian, data, bool(doc.get("whiten")))
    cross = gram_cross(reps, [PointRepresentation.from_dict(r)
                              for r in doc["support_representations"]],
                       svm.params, n_threads=args.threads)
    pred = predict(svm, cross)
    names = doc.get("label_names")
    out = _resolve_output(args.output, "predictions.csv")
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["prediction", "label"])
    for v in pred:
        w.writerow([int(v), names[(int(v) + 1) // 2] if names else int(v)])
    out.write_text(buf.getvalue())
    extra = {}
    if not args.no_label:
        extra["accuracy"] = float(np.mean(pred == data.labels))
        print(f"accuracy {extra['accuracy']:.4f}")
    _write_manifest(_manifest_path(out), "predict",
                    {"input": str(args.input), "model": str(args.model),
                     "threads": args.threads, "output": str(out)}, extra)
    return EXIT_OK


def load_config(path) -> dict:
    """Read and validate a benchmark config (or a benchmark manifest)."""
    import jsonschema

    doc = json.loads(Path(path).read_text())
    if isinstance(doc, dict) and doc.get("command") == "benchmark" and "config" in doc:
        doc = doc["config"]
    try:
        jsonschema.validate(doc, CONFIG_SCHEMA)
    except jsonschema.ValidationError as exc:
        where = "/".join(str(p) for p in exc.absolute_path) or "<root>"
        raise CliError(f"invalid config at {where}: {exc.message}") from None
    return {**CONFIG_DEFAULTS, **doc}


def _load_datasets(entries) -> dict[str, Dataset]:
    out = {}
    for e in entries:
        if isinstance(e, str):
            if e in datasets.NAMES:
                out[e] = datasets.load(e)
            elif Path(e).exists():
                out[Path(e).stem] = load_csv(e)
            else:
                raise CliError(f"unknown dataset {e!r}: not bundled ({', '.join(datasets.NAMES)}) "
                               "and not a file")
        else:
            out[e["name"]] = load_csv(e["path"], label_column=e.get("label_column", -1))
    return out


def _experiment_config(cfg: dict, threads: int | None):
    from .bench import ExperimentConfig

    keys = ("c_grid", "gamma_grid", "outer_folds", "inner_folds", "repetitions", "methods",
            "seed", "svm_tol", "svm_max_passes", "em_tol", "em_max_iters", "threads")
    kwargs = {k: cfg[k] for k in keys if k in cfg}
    if threads is not None:
        kwargs["threads"] = threads
    kwargs.setdefault("threads", os.cpu_count() or 1)
    return ExperimentConfig(**kwargs)


def rank_outputs(table: dict, methods, mode: str = "row", alpha: float = 0.05):
    """Rank rows, CD-diagram data and the rank-vs-p CSV for an accuracy table.

    ``table`` maps ``(dataset, mechanism, p)`` to ``{method: accuracy}``. In
    ``collapsed`` mode accuracies are first averaged over ``p`` per
    ``(dataset, mechanism)``.
    """
    from .stats import cd_diagram, rank_methods

    complete = {k: v for k, v in table.items() if all(m in v for m in methods)}
    dropped = sorted(set(table) - set(complete), key=str)
    if mode == "collapsed":
        grouped: dict = {}
        for (ds, mech, _), accs in complete.items():
            grouped.setdefault((ds, mech), []).append(accs)
        rows = {k: {m: float(np.mean([a[m] for a in v])) for m in methods}
                for k, v in grouped.items()}
    elif mode == "row":
        rows = complete
    else:
        raise ValueError(f"unknown rank mode {mode!r}")
    rank_doc = {"mode": mode, "methods": list(methods), "rows": [],
                "dropped_configurations": [list(k) for k in dropped]}
    if not rows:
        return rank_doc, None, ""
    rt = rank_methods(rows, methods)
    for cfg, r in zip(rt.configurations, rt.ranks):
        entry = {"dataset": cfg[0], "mechanism": cfg[1]}
        if mode == "row":
            entry["p"] = cfg[2]
        entry["ranks"] = dict(zip(rt.methods, r.tolist()))
        entry["accuracy"] = {m: rows[cfg][m] for m in rt.methods}
        rank_doc["rows"].append(entry)
    rank_doc["mean_ranks"] = dict(zip(rt.methods, rt.mean_ranks.tolist()))
    try:
        cd = cd_diagram(rt, alpha)
        cd["mode"] = mode
    except ValueError as exc:
        cd = {"mode": mode, "error": str(exc)}

    # mean rank per (mechanism, p) across datasets
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["mechanism", "p", *rt.methods])
    if mode == "row":
        by: dict = {}
        for cfg, r in zip(rt.configurations, rt.ranks):
            by.setdefault((cfg[1], cfg[2]), []).append(r)
        for (mech, p) in sorted(by):
            w.writerow([mech, f"{p:g}", *[repr(float(x)) for x in np.mean(by[(mech, p)], axis=0)]])
    return rank_doc, cd, buf.getvalue()


def _write_rank_files(outdir: Path, rank_doc, cd, rank_csv) -> dict:
    paths = {"rank": outdir / "rank.json", "cd": outdir / "cd.json",
             "rank_vs_p": outdir / "rank_vs_p.csv"}
    paths["rank"].write_text(_dump(rank_doc))
    paths["cd"].write_text(_dump(cd if cd is not None else {"error": "no complete rows"}))
    paths["rank_vs_p"].write_text(rank_csv)
    return paths


def cmd_benchmark(args) -> int:
    from .bench import run_benchmark, write_results

    cfg = load_config(args.config)
    config = _experiment_config(cfg, args.threads)
    data = _load_datasets(cfg["datasets"])
    outdir = _output_dir(args.outdir)
    result = run_benchmark(data, cfg["mechanisms"], cfg["fractions"], config)
    write_results(result, outdir)
    rank_doc, cd, rank_csv = rank_outputs(result.accuracy_table(), config.methods,
                                          cfg["rank_mode"], cfg["alpha"])
    _write_rank_files(outdir, rank_doc, cd, rank_csv)
    # threads do not change results, so the manifest keeps the config value only
    resolved = {**cfg, **config.to_dict()}
    resolved["threads"] = cfg.get("threads", 1)
    _write_manifest(outdir / "manifest.json", "benchmark", resolved,
                    {"n_errors": len(result.errors)})
    if result.errors:
        for e in result.errors:
            print(f"cell failed: {e['dataset']}/{e['mechanism']}/p={e['p']:g}/"
                  f"rep={e['repetition']}/{e['method']}: {e['error']}", file=sys.stderr)
        return EXIT_PARTIAL
    return EXIT_OK


def _table_from_summary(doc: dict) -> tuple[dict, list]:
    table: dict = {}
    methods = set()
    for key, cell in doc["cells"].items():
        ds, mech, p, method = key.split("|")
        table.setdefault((ds, mech, float(p)), {})[method] = cell["mean"]
        methods.add(method)
    return table, sorted(methods)


def cmd_rank(args) -> int:
    doc = json.loads(Path(args.summary).read_text())
    table, methods = _table_from_summary(doc)
    if args.methods:
        methods = args.methods
    rank_doc, cd, rank_csv = rank_outputs(table, methods, args.mode, args.alpha)
    outdir = _output_dir(args.outdir)
    _write_rank_files(outdir, rank_doc, cd, rank_csv)
    _write_manifest(outdir / "rank.manifest.json", "rank",
                    {"summary": str(args.summary), "mode": args.mode, "alpha": args.alpha,
                     "methods": list(methods)})
    return EXIT_PARTIAL if rank_doc["dropped_configurations"] else EXIT_OK


# --- parser ------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="genrbf", description="genRBF kernel toolkit")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("-v", "--verbose", action="count", default=0)
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, output=True):
        p.add_argument("--threads", type=int, default=None,
                       help="worker threads (default: all cores)")
        if output:
            p.add_argument("-o", "--output", default=None,
                           help=f"output file (default: inside ${OUTPUT_ENV})")

    def dataset_args(p):
        p.add_argument("input", help="CSV file")
        p.add_argument("--label-column", default=None,
                       help="label column index or header name (default: last)")

    p = sub.add_parser("inject", help="inject MCAR/MAR/NMAR missingness into a complete CSV")
    dataset_args(p)
    p.add_argument("--mech", required=True, choices=["mcar", "mar", "nmar"])
    p.add_argument("--p", type=float, required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--anchors", type=int, default=None, help="anchor rows (default: N)")
    common(p)
    p.set_defaults(func=cmd_inject)

    p = sub.add_parser("estimate", help="fit a Gaussian by EM and write it as JSON")
    dataset_args(p)
    p.add_argument("--standardize", action="store_true")
    _em_args(p)
    common(p)
    p.set_defaults(func=cmd_estimate)

    p = sub.add_parser("gram", help="write the genRBF Gram matrix of a CSV")
    dataset_args(p)
    p.add_argument("--gamma", type=float, required=True)
    p.add_argument("--format", choices=["csv", "binary"], default="csv")
    p.add_argument("--model", default=None, help="Gaussian JSON (default: fit by EM)")
    p.add_argument("--whiten", action="store_true", help="whiten with the Gaussian first")
    p.add_argument("--standardize", action="store_true")
    _em_args(p)
    common(p)
    p.set_defaults(func=cmd_gram)

    p = sub.add_parser("train", help="train an SVM with the genRBF kernel")
    dataset_args(p)
    p.add_argument("--gamma", type=float, required=True)
    p.add_argument("--C", type=float, required=True)
    p.add_argument("--svm-tol", type=float, default=1e-3)
    p.add_argument("--max-passes", type=int, default=100_000)
    p.add_argument("--whiten", action="store_true")
    p.add_argument("--standardize", action="store_true")
    _em_args(p)
    common(p)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("predict", help="predict labels with a trained model")
    dataset_args(p)
    p.add_argument("--model", required=True)
    p.add_argument("--no-label", action="store_true", help="input has no label column")
    common(p)
    p.set_defaults(func=cmd_predict)

    p = sub.add_parser("benchmark", help="run the cross-validated benchmark from a JSON config")
    p.add_argument("config")
    p.add_argument("--outdir", default=None, help=f"default: ${OUTPUT_ENV} or ./genrbf-out")
    common(p, output=False)
    p.set_defaults(func=cmd_benchmark)

    p = sub.add_parser("rank", help="rank methods and compute Friedman/Nemenyi statistics")
    p.add_argument("summary", help="summary.json written by benchmark")
    p.add_argument("--mode", choices=["row", "collapsed"], default="row")
    p.add_argument("--alpha", type=float, choices=[0.05, 0.1], default=0.05)
    p.add_argument("--methods", nargs="+", default=None)
    p.add_argument("--outdir", default=None)
    p.set_defaults(func=cmd_rank)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.WARNING - 10 * min(args.verbose, 2),
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except DataFormatError as exc:
        print(f"error: {args.input if hasattr(args, 'input') else ''}: {exc}", file=sys.stderr)
    except (CliError, ValueError, KernelError, EMDivergenceError, OSError, KeyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
    return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
