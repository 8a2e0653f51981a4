"""Command-line entry point: ``perfmodel {sample,generate,fit,sweep,predict,report}``.

Every option can also come from a JSON config file (``--config``), either at
the top level or under a section named after the subcommand. Flags override
the file; the file overrides built-in defaults. Logs go to stderr, artifacts
to files.

Exit codes: 0 success, 2 configuration error, 3 data error, 4 numerical abort.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import os
import sys
from pathlib import Path

from perfmodel import report
from perfmodel.errors import ConfigError, DataError, NumericalError, PerfModelError
from perfmodel.fitting import FIT_DE_DEFAULTS, DEFAULT_LAMBDA, FitConfig, FitResult, RegMode
from perfmodel.fitting import fit as run_fit
from perfmodel.fitting import lambda_sweep, predict
from perfmodel.model import ParamVector
from perfmodel.optimizer import DeConfig
from perfmodel.schema import (
    DEFAULT_REPETITIONS,
    default_schema,
    load_assignments,
    load_dataset,
    load_schema,
    save_assignments,
    save_dataset,
    save_raw_groups,
    split,
)
from perfmodel.synth import SamplerConfig, SynthConfig, default_ground_truth, generate, sample_configs

log = logging.getLogger("perfmodel")

EXIT_OK, EXIT_CONFIG, EXIT_DATA, EXIT_NUMERICAL = 0, 2, 3, 4
OUT_DIR_ENV = "PERFMODEL_OUT_DIR"
DEFAULT_SWEEP = "1e-6,1e-5,1e-4,1e-3,1e-2,1e-1,1,10"

DEFAULTS = {
    "common": {"schema": None, "out_dir": None, "verbose": False},
    "sample": {"trials": 1500, "seed": 0, "out": "assignments.csv"},
    "generate": {"assignments": None, "trials": 1500, "seed": 0, "truth": None,
                 "noise": "none", "sigma": 0.0, "repetitions": DEFAULT_REPETITIONS,
                 "out": "dataset.csv", "raw_out": None},
    "fit": {"train": None, "test": None, "train_fraction": 0.6, "split_seed": 0,
            "no_split": False, "reg": "none", "lambda": DEFAULT_LAMBDA, "seeds": "1..10",
            "strategy": FIT_DE_DEFAULTS.strategy, "pop_multiplier": FIT_DE_DEFAULTS.pop_multiplier,
            "mutation": "0.5,1.0", "recombination": FIT_DE_DEFAULTS.recombination,
            "max_generations": FIT_DE_DEFAULTS.max_generations, "tol": FIT_DE_DEFAULTS.tol,
            "threads": 1, "tau": report.DEFAULT_TAU},
    "predict": {"model": None, "assignments": None, "out": "predictions.csv"},
    "report": {"fit": None, "dataset": None, "tau": report.DEFAULT_TAU},
}
DEFAULTS["sweep"] = dict(DEFAULTS["fit"], reg="l2", lambdas=DEFAULT_SWEEP)


def parse_seeds(text) -> list[int]:
    """``"1..10"`` (inclusive range), ``"3,5,8"`` or a list of ints."""
    if isinstance(text, (list, tuple)):
        return [int(s) for s in text]
    text = str(text).strip()
    try:
        if ".." in text:
            lo, hi = text.split("..")
            seeds = list(range(int(lo), int(hi) + 1))
        else:
            seeds = [int(s) for s in text.split(",") if s.strip()]
    except ValueError:
        raise ConfigError(f"cannot parse seeds {text!r}") from None
    if not seeds:
        raise ConfigError(f"empty seed list {text!r}")
    return seeds


def parse_floats(text) -> list[float]:
    if isinstance(text, (list, tuple)):
        return [float(v) for v in text]
    try:
        return [float(v) for v in str(text).split(",") if v.strip()]
    except ValueError:
        raise ConfigError(f"cannot parse number list {text!r}") from None


def _add_common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="JSON file with option values (flags take precedence)")
    p.add_argument("--schema", help="schema JSON file (default: built-in schema)")
    p.add_argument("--out-dir", dest="out_dir",
                   help=f"directory for relative output paths (default: ${OUT_DIR_ENV} or .)")
    p.add_argument("-v", "--verbose", action="store_true")


def _add_fit_options(p: argparse.ArgumentParser) -> None:
    p.add_argument("--train", help="training dataset (csv/json)")
    p.add_argument("--test", help="test dataset; if omitted, --train is split")
    p.add_argument("--train-fraction", dest="train_fraction", type=float)
    p.add_argument("--split-seed", dest="split_seed", type=int)
    p.add_argument("--no-split", dest="no_split", action="store_true",
                   help="fit on the whole --train file without a test set")
    p.add_argument("--reg", choices=["none", "l1", "l2"])
    p.add_argument("--lambda", dest="lambda", type=float)
    p.add_argument("--seeds", help='seed list, e.g. "1..10" or "1,2,3"')
    p.add_argument("--strategy")
    p.add_argument("--pop-multiplier", dest="pop_multiplier", type=int)
    p.add_argument("--mutation", help='dither interval "lo,hi"')
    p.add_argument("--recombination", type=float)
    p.add_argument("--max-generations", dest="max_generations", type=int)
    p.add_argument("--tol", type=float, help="relative cost-spread stop (0 = full budget)")
    p.add_argument("--threads", type=int, help="worker cap for parallel seeds")
    p.add_argument("--tau", type=float, help="ideal-scaling tolerance around q = -1")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="perfmodel",
        description="Fit power-law performance models to measured iteration times.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("sample", help="draw random parameter assignments",
                       argument_default=argparse.SUPPRESS)
    _add_common(p)
    p.add_argument("--trials", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--out")

    p = sub.add_parser("generate", help="synthesize timings from a ground-truth model",
                       argument_default=argparse.SUPPRESS)
    _add_common(p)
    p.add_argument("--assignments", help="assignments file; sampled afresh when omitted")
    p.add_argument("--trials", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--truth", help="ground-truth model JSON (default: built-in for default schema)")
    p.add_argument("--noise", choices=["none", "gaussian_relative"])
    p.add_argument("--sigma", type=float)
    p.add_argument("--repetitions", type=int)
    p.add_argument("--out")
    p.add_argument("--raw-out", dest="raw_out", help="also write raw repetitions (JSON)")

    p = sub.add_parser("fit", help="fit the model with multi-seed differential evolution",
                       argument_default=argparse.SUPPRESS)
    _add_common(p)
    _add_fit_options(p)

    p = sub.add_parser("sweep", help="fit once per regularization weight",
                       argument_default=argparse.SUPPRESS)
    _add_common(p)
    _add_fit_options(p)
    p.add_argument("--lambdas", help="comma-separated lambda values")

    p = sub.add_parser("predict", help="predict times for assignments",
                       argument_default=argparse.SUPPRESS)
    _add_common(p)
    p.add_argument("--model", help="fit result JSON or bare model JSON")
    p.add_argument("--assignments")
    p.add_argument("--out")

    p = sub.add_parser("report", help="re-render tables from a fit result",
                       argument_default=argparse.SUPPRESS)
    _add_common(p)
    p.add_argument("--fit", help="fit result JSON written by `fit`")
    p.add_argument("--dataset", help="dataset for scatter output")
    p.add_argument("--tau", type=float)
    return parser


def resolve_options(command: str, args: argparse.Namespace) -> dict:
    opts = dict(DEFAULTS["common"])
    opts.update(DEFAULTS[command])
    flags = {k: v for k, v in vars(args).items() if k != "command"}
    config_path = flags.pop("config", None)
    if config_path:
        path = Path(config_path)
        if not path.is_file():
            raise ConfigError(f"config file not found: {path}")
        try:
            data = json.loads(path.read_text(encoding="utf-8"))
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: invalid JSON ({exc})") from exc
        section = {k: v for k, v in data.items() if not isinstance(v, dict) or k == "de"}
        section.update(data.get(command, {}))
        de = section.pop("de", {})
        section.update(de)
        for key, value in section.items():
            key = key.replace("-", "_")
            if key not in opts:
                continue
            opts[key] = value
    opts.update(flags)
    if opts["out_dir"] is None:
        opts["out_dir"] = os.environ.get(OUT_DIR_ENV, ".")
    return opts


def _out_path(opts: dict, value) -> Path:
    path = Path(value)
    return path if path.is_absolute() else Path(opts["out_dir"]) / path


def _schema(opts):
    return default_schema() if opts["schema"] is None else load_schema(opts["schema"])


def _write_json(path: Path, data) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(data, indent=2) + "\n", encoding="utf-8")


def _fit_config(opts, reg: RegMode) -> FitConfig:
    mutation = parse_floats(opts["mutation"])
    if len(mutation) != 2:
        raise ConfigError(f"mutation needs two values, got {opts['mutation']!r}")
    de = DeConfig(strategy=opts["strategy"], pop_multiplier=int(opts["pop_multiplier"]),
                  mutation=tuple(mutation), recombination=float(opts["recombination"]),
                  max_generations=int(opts["max_generations"]), tol=float(opts["tol"]))
    return FitConfig(de=de, reg=reg, seeds=parse_seeds(opts["seeds"]))


def _datasets(opts, schema):
    if not opts["train"]:
        raise ConfigError("--train is required")
    train = load_dataset(opts["train"], schema=schema)
    if opts["test"]:
        return train, load_dataset(opts["test"], schema=schema)
    if opts["no_split"]:
        return train, None
    return split(train, float(opts["train_fraction"]), int(opts["split_seed"]))


def cmd_sample(opts) -> int:
    schema = _schema(opts)
    assignments = sample_configs(SamplerConfig(schema, int(opts["trials"]), int(opts["seed"])))
    out = _out_path(opts, opts["out"])
    save_assignments(assignments, schema, out)
    log.info("wrote %d assignments to %s", len(assignments), out)
    return EXIT_OK


def cmd_generate(opts) -> int:
    schema = _schema(opts)
    if opts["assignments"]:
        assignments = load_assignments(opts["assignments"], schema)
    else:
        assignments = sample_configs(SamplerConfig(schema, int(opts["trials"]), int(opts["seed"])))
    if opts["truth"]:
        truth = _load_model(opts["truth"], schema)
    elif opts["schema"] is None:
        truth = default_ground_truth(schema)
    else:
        raise ConfigError("--truth is required with a custom schema")
    cfg = SynthConfig(truth, opts["noise"], float(opts["sigma"]), int(opts["repetitions"]),
                      int(opts["seed"]))
    dataset, groups = generate(assignments, schema, cfg)
    out = _out_path(opts, opts["out"])
    save_dataset(dataset, out)
    if opts["raw_out"]:
        save_raw_groups(groups, schema, _out_path(opts, opts["raw_out"]))
    log.info("wrote %d records to %s", len(dataset), out)
    return EXIT_OK


def _write_fit_outputs(opts, schema, result: FitResult, scatter: dict,
                       json_name: str = "fit.json") -> list:
    out = Path(opts["out_dir"])
    verdicts = report.scaling_report(result, schema, float(opts["tau"])) if schema.extrinsic else []
    _write_json(out / json_name, report.report_dict(result, verdicts))
    (out / "coefficients.txt").write_text(report.coefficient_table(result, schema), encoding="utf-8")
    (out / "coefficients.csv").write_text(report.coefficient_table(result, schema, "csv"),
                                          encoding="utf-8")
    if verdicts:
        (out / "scaling.txt").write_text(report.scaling_table(verdicts), encoding="utf-8")
    for name, dataset in scatter.items():
        if dataset is not None:
            report.write_scatter_csv(report.scatter_data(result, schema, dataset), out / name)
    return verdicts


def cmd_fit(opts) -> int:
    schema = _schema(opts)
    train, test = _datasets(opts, schema)
    reg = RegMode(opts["reg"], float(opts["lambda"]))
    config = _fit_config(opts, reg)
    log.info("fitting %d train / %d test records, %d seeds, reg=%s",
             len(train), 0 if test is None else len(test), len(config.seeds), reg.to_dict())
    result = run_fit(train, test, schema, config, workers=int(opts["threads"]))
    verdicts = _write_fit_outputs(
        opts, schema, result, {"scatter_train.csv": train, "scatter_test.csv": test})
    print(f"regularization: {result.reg.kind} lambda={result.reg.lam}")
    print(f"representative seed {result.representative_seed}, cost {result.representative_cost:.6g}")
    print("train:", result.train_metrics.summary())
    if result.test_metrics is not None:
        print("test: ", result.test_metrics.summary())
    print()
    print(report.coefficient_table(result, schema), end="")
    if verdicts:
        print()
        print(report.scaling_table(verdicts), end="")
    return EXIT_OK


def cmd_sweep(opts) -> int:
    schema = _schema(opts)
    train, test = _datasets(opts, schema)
    reg = RegMode(opts["reg"], float(opts["lambda"]))
    config = _fit_config(opts, reg)
    lambdas = parse_floats(opts["lambdas"])
    entries = lambda_sweep(train, test, schema, config, lambdas,
                           kind=None if reg.kind == "none" else reg.kind,
                           workers=int(opts["threads"]))
    out = Path(opts["out_dir"]) / "sweep.csv"
    out.parent.mkdir(parents=True, exist_ok=True)
    out.write_text(report.sweep_csv(entries, schema), encoding="utf-8")
    for e in entries:
        r2 = "n/a" if e.r2 is None else f"{e.r2:.4f}"
        print(f"lambda={e.lam:<10g} R2={r2}")
    return EXIT_OK


def _load_model(path, schema) -> ParamVector:
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"model file not found: {path}")
    try:
        data = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON ({exc})") from exc
    if "representative" in data:
        data = data["representative"]["model"]
    return ParamVector.from_dict(schema, data)


def cmd_predict(opts) -> int:
    schema = _schema(opts)
    if not opts["model"] or not opts["assignments"]:
        raise ConfigError("--model and --assignments are required")
    model = _load_model(opts["model"], schema)
    assignments = load_assignments(opts["assignments"], schema)
    preds = predict(schema, model, assignments).tolist() if assignments else []
    out = _out_path(opts, opts["out"])
    out.parent.mkdir(parents=True, exist_ok=True)
    with out.open("w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(schema.names + ["predicted_ms"])
        for a, t in zip(assignments, preds):
            row = a.as_row(schema)
            w.writerow([repr(float(v)) if isinstance(v, float) else v for v in row.values()]
                       + [repr(t)])
    log.info("wrote %d predictions to %s", len(preds), out)
    return EXIT_OK


def cmd_report(opts) -> int:
    if not opts["fit"]:
        raise ConfigError("--fit is required")
    path = Path(opts["fit"])
    if not path.is_file():
        raise ConfigError(f"fit result not found: {path}")
    result = FitResult.from_dict(json.loads(path.read_text(encoding="utf-8")))
    schema = result.schema if opts["schema"] is None else load_schema(opts["schema"])
    if schema != result.schema:
        raise ConfigError("fit result was produced with a different schema")
    dataset = load_dataset(opts["dataset"], schema=schema) if opts["dataset"] else None
    verdicts = _write_fit_outputs(opts, schema, result, {"scatter.csv": dataset},
                                  json_name="report.json")
    print(report.coefficient_table(result, schema), end="")
    if verdicts:
        print()
        print(report.scaling_table(verdicts), end="")
    return EXIT_OK


COMMANDS = {"sample": cmd_sample, "generate": cmd_generate, "fit": cmd_fit,
            "sweep": cmd_sweep, "predict": cmd_predict, "report": cmd_report}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        opts = resolve_options(args.command, args)
        logging.basicConfig(level=logging.DEBUG if opts["verbose"] else logging.INFO,
                            format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)
        return COMMANDS[args.command](opts)
    except ConfigError as exc:
        print(f"perfmodel: configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except DataError as exc:
        print(f"perfmodel: data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except NumericalError as exc:
        print(f"perfmodel: numerical error: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except PerfModelError as exc:
        print(f"perfmodel: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
