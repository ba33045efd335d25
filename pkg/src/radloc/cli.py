"""Command-line front end: simulate, calibrate, train, evaluate, report.

Exit codes: 0 ok, 1 usage, 2 schema or data, 3 numeric failure. Failures
print one line ``error: <category>: <message>`` on stderr.
"""

from __future__ import annotations

import argparse
import os
import sys
from pathlib import Path

import numpy as np
import yaml

from radloc import __version__, config, container, datasets, evaluation, models, plotting, reftable
from radloc.errors import ConfigError, NumericError, RadlocError, SchemaError


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"error: usage: {message}", file=sys.stderr)
        raise SystemExit(1)


def _threads(args) -> int:
    raw = args.threads if args.threads is not None else os.environ.get("RADLOC_THREADS", "1")
    try:
        n = int(raw)
    except ValueError:
        raise ConfigError(f"thread count must be an integer, got {raw!r}") from None
    if n < 1:
        raise ConfigError("thread count must be >= 1")
    return n


def _config(args, **flags) -> config.RunConfig:
    cfg = config.load(args.config) if getattr(args, "config", None) else config.RunConfig()
    return config.override(cfg, **flags)


def _read_dataset(path) -> datasets.Dataset:
    if not Path(path).is_file():
        raise ConfigError(f"dataset {path} does not exist")
    return datasets.read_csv(path)


def _select(ds: datasets.Dataset, which: str, cfg: config.RunConfig) -> datasets.Dataset:
    if which == "all":
        return ds
    train, test = datasets.split(ds, cfg.test_fraction, cfg.split_seed)
    return train if which == "train" else test


# --------------------------------------------------------------------------- commands


def cmd_simulate(args) -> int:
    cfg = _config(args, preset=args.preset, seed=args.seed)
    grid, scene = config.build(cfg)
    ds = datasets.generate(grid, scene, n_workers=_threads(args))
    ds.provenance = container.provenance(
        cfg.to_dict(), {"simulation": cfg.seed}, command="simulate", grid=grid.describe()
    )
    datasets.write_csv(ds, args.out)
    print(f"wrote {len(ds)} samples x {ds.n_features} detectors to {args.out}")
    return 0


def cmd_calibrate(args) -> int:
    cfg = _config(args, preset=args.preset)
    if args.replicates is not None or args.calib_seed is not None or args.noiseless:
        extra = {"replicates": args.replicates, "seed": args.calib_seed, "noiseless": args.noiseless or None}
        cfg = config.override(cfg, calibration={**cfg.calibration, **{k: v for k, v in extra.items() if v is not None}})
    grid, scene = config.build(cfg)
    cal = config.calibration(cfg, grid)
    table = reftable.calibrate(scene, cal["angles"], int(cal["replicates"]), int(cal["seed"]),
                               float(cal["distance"]), bool(cal["noiseless"]))
    table = reftable.with_provenance(
        table, container.provenance(cfg.to_dict(), {"calibration": int(cal["seed"])}, command="calibrate")
    )
    reftable.save(table, args.out)
    if args.figure:
        plotting.reference_responses(table, args.figure)
    print(f"wrote reference table ({len(table.calib_angles)} angles) to {args.out}")
    return 0


def _hyperparameters(pairs) -> dict:
    out = {}
    for pair in pairs or ():
        key, sep, raw = pair.partition("=")
        if not sep:
            raise ConfigError(f"--set expects key=value, got {pair!r}")
        try:
            out[key] = yaml.safe_load(raw)
        except yaml.YAMLError:
            out[key] = raw
    return out


def cmd_train(args) -> int:
    cfg = _config(
        args,
        model=args.model,
        scaler=args.scaler,
        target=args.target,
        model_seed=args.model_seed,
        test_fraction=args.test_fraction,
        split_seed=args.split_seed,
    )
    if args.set:
        cfg = config.override(cfg, hyperparameters={**cfg.hyperparameters, **_hyperparameters(args.set)})
    ds = _read_dataset(args.data)
    if cfg.describes_scene:
        _, scene = config.build(cfg)
        if scene.array.n_detectors != ds.n_features:
            raise SchemaError(
                f"dataset has {ds.n_features} detector columns, configuration describes {scene.array.n_detectors}"
            )
    part = _select(ds, args.split, cfg)
    mcfg = models.ModelConfig(cfg.model, dict(cfg.hyperparameters), cfg.model_seed)
    prov = container.provenance(
        cfg.to_dict(),
        {"model": cfg.model_seed, "split": cfg.split_seed},
        command="train",
        split=args.split,
        inputs={"data": container.file_digest(args.data)},
    )
    model = models.train_dataset(mcfg, part, cfg.target, cfg.scaler, provenance=prov)
    _check_finite(model.parameters)
    models.save(model, args.out)
    print(f"wrote {cfg.model} ({cfg.scaler}, {cfg.target}) trained on {len(part)} samples to {args.out}")
    return 0


def _check_finite(params: dict) -> None:
    for name, value in params.items():
        arr = np.asarray(value)
        if arr.dtype.kind == "f" and not np.all(np.isfinite(arr)):
            raise NumericError(f"training produced non-finite values in {name}")


def _load_predictor(path):
    if not Path(path).is_file():
        raise ConfigError(f"model {path} does not exist")
    doc = container.load(path)
    if doc["kind"] == reftable.KIND:
        return reftable.load(path)
    return models.load(path)


def cmd_evaluate(args) -> int:
    cfg = _config(args, test_fraction=args.test_fraction, split_seed=args.split_seed)
    ds = _read_dataset(args.data)
    part = _select(ds, args.split, cfg)
    name = args.dataset_name or Path(args.data).stem
    results = []
    digests = {"data": container.file_digest(args.data)}
    for k, path in enumerate(args.model):
        predictor = _load_predictor(path)
        digests[f"model_{k}"] = container.file_digest(path)
        results.append(
            evaluation.evaluate(predictor, part, dataset=name, bootstrap=args.bootstrap, seed=args.bootstrap_seed)
        )
        if isinstance(predictor, reftable.ReferenceTable) and args.normalized_table:
            results.append(
                evaluation.evaluate(predictor, part, dataset=name, normalized_table=True,
                                    bootstrap=args.bootstrap, seed=args.bootstrap_seed)
            )
    prov = container.provenance(
        cfg.to_dict(),
        {"split": cfg.split_seed, "bootstrap": args.bootstrap_seed if args.bootstrap else None},
        command="evaluate",
        split=args.split,
        inputs=digests,
    )
    evaluation.write_metrics(results, args.out, prov)
    if args.json:
        evaluation.write_json(results, args.json, prov)
    for m in results:
        if m.target == "angle":
            print(f"{m.predictor:>22} {m.pipeline:>9}  angle error {m.mean_angular_error:7.2f} "
                  f"+/- {m.mean_angular_error_ci95:.2f} deg  accuracy {m.angle_accuracy:.3f}")
        else:
            print(f"{m.predictor:>22} {m.pipeline:>9}  bin accuracy {m.distance_bin_accuracy:.3f}  "
                  f"relative error {m.mean_relative_distance_error:.1f}% (median "
                  f"{m.median_relative_distance_error:.1f}%)")
    return 0


def cmd_report(args) -> int:
    series: dict[str, dict[float, tuple[str, str]]] = {}
    sources = {}
    for path in args.inputs:
        p = Path(path)
        if not p.name.endswith(".per_distance.csv"):
            p = evaluation.breakdown_path(p)
        if not p.is_file():
            raise ConfigError(f"per-distance table {p} does not exist")
        _, rows = evaluation.read_table(p)
        sources[str(path)] = container.file_digest(p)
        for r in rows:
            if missing := set(evaluation.BREAKDOWN_COLUMNS) - set(r):
                raise SchemaError(f"{p}: missing columns {sorted(missing)}")
            if r["target"] != args.target:
                continue
            label = "/".join(v for v in (r["predictor"], r["pipeline"], r["dataset"]) if v)
            series.setdefault(label, {})[float(r["true_distance_m"])] = (r["accuracy"], r["mean_error"])
    if not series:
        raise SchemaError(f"no {args.target} rows in the given inputs")
    distances = sorted({d for s in series.values() for d in s})
    labels = list(series)
    columns = ["true_distance_m"] + [f"{lab}:accuracy" for lab in labels] + [f"{lab}:mean_error" for lab in labels]
    rows = []
    for d in distances:
        row = {"true_distance_m": d}
        for lab in labels:
            acc, err = series[lab].get(d, (None, None))
            row[f"{lab}:accuracy"] = None if acc is None else float(acc)
            row[f"{lab}:mean_error"] = None if err is None else float(err)
        rows.append(row)
    prov = container.provenance({"target": args.target}, {}, command="report", inputs=sources)
    evaluation.write_table(args.out, columns, rows, prov)
    figure = args.figure or str(Path(args.out).with_suffix(".png"))
    plot = {lab: (sorted(s), [float(s[d][0]) for d in sorted(s)]) for lab, s in series.items()}
    ylabel = "angle accuracy" if args.target == "angle" else "distance-bin accuracy"
    plotting.accuracy_vs_distance(plot, figure, ylabel=ylabel)
    print(f"wrote {len(rows)} distances x {len(labels)} series to {args.out} and {figure}")
    return 0


# --------------------------------------------------------------------------- parser


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="radloc", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"radloc {__version__}")
    parser.add_argument("--threads", type=int, help="worker cap (default: $RADLOC_THREADS or 1)")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("simulate", help="generate a labelled count dataset (CSV)")
    p.add_argument("--config", help="YAML or JSON run configuration")
    p.add_argument("--preset", help=f"scenario preset: {', '.join(datasets.PRESETS)}")
    p.add_argument("--seed", type=int, help="simulation seed")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("calibrate", help="build a reference table container")
    p.add_argument("--config")
    p.add_argument("--preset")
    p.add_argument("--replicates", type=int, help="Poisson draws averaged per angle")
    p.add_argument("--calib-seed", type=int)
    p.add_argument("--noiseless", action="store_true", help="store expected counts instead of draws")
    p.add_argument("--figure", help="also plot the calibrated responses to this image")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_calibrate)

    p = sub.add_parser("train", help="fit a model on a dataset CSV")
    p.add_argument("--config")
    p.add_argument("--data", required=True)
    p.add_argument("--model", choices=models.KINDS)
    p.add_argument("--scaler", choices=("none", "unit_norm", "robust"))
    p.add_argument("--target", choices=models.TARGETS)
    p.add_argument("--model-seed", type=int)
    p.add_argument("--set", action="append", metavar="KEY=VALUE", help="hyperparameter override (repeatable)")
    p.add_argument("--split", choices=("train", "all"), default="train")
    p.add_argument("--test-fraction", type=float)
    p.add_argument("--split-seed", type=int)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("evaluate", help="score models or reference tables on a dataset")
    p.add_argument("--config")
    p.add_argument("--model", required=True, action="append", help="model or reference-table container (repeatable)")
    p.add_argument("--data", required=True)
    p.add_argument("--dataset-name", help="label for the dataset column (default: file stem)")
    p.add_argument("--split", choices=("test", "train", "all"), default="test")
    p.add_argument("--test-fraction", type=float)
    p.add_argument("--split-seed", type=int)
    p.add_argument("--normalized-table", action="store_true", help="also score reference tables on unit-norm counts")
    p.add_argument("--bootstrap", action="store_true", help="bootstrap confidence intervals")
    p.add_argument("--bootstrap-seed", type=int, default=0)
    p.add_argument("--json", help="also write a structured JSON report")
    p.add_argument("--out", required=True, help="metrics CSV (a .per_distance.csv sibling is written too)")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("report", help="merge per-distance results into one plot-ready table and figure")
    p.add_argument("inputs", nargs="+", help="metrics CSVs from evaluate")
    p.add_argument("--target", choices=models.TARGETS, default="angle")
    p.add_argument("--figure", help="image path (default: --out with .png suffix)")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_report)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except RadlocError as exc:
        print(f"error: {exc.category}: {exc}", file=sys.stderr)
        return exc.exit_code
    except FloatingPointError as exc:
        print(f"error: numeric: {exc}", file=sys.stderr)
        return NumericError.exit_code
    except OSError as exc:
        print(f"error: usage: {exc.filename or ''}: {exc.strerror}", file=sys.stderr)
        return ConfigError.exit_code


if __name__ == "__main__":
    sys.exit(main())
