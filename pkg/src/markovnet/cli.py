"""Command-line interface: ``markovnet {train,predict,eval,bench,synth}``.

Every command reads an optional INI config file (``--config``), applies
``--set section.key=value`` overrides and the dedicated flags on top, and
writes only inside the output directory (``--out`` or ``[run] out``).

Seeds fan out from the single ``[run] seed``:

========================  ==============
stream                    seed
========================  ==============
synthetic dataset         ``seed``
ratio resampling          ``seed + 1``
stratified split          ``seed + 2``
Gibbs chains              ``seed + 3``
========================  ==============

Exit codes: 0 success, 2 configuration error, 3 data error, 4 numerical
failure (divergence, state space too large).
"""
from __future__ import annotations

import argparse
import configparser
import json
import os
import sys

import numpy as np

from . import benchmark
from .data import (
    LABEL_COLUMN,
    BinningSpec,
    SynthConfig,
    apply_bins,
    bin_features,
    fit_bins,
    generate_synthetic,
    load_creditcard_csv,
    load_csv,
    load_feature_rows,
    read_split,
    stratified_split,
    write_csv,
    write_split,
)
from .errors import (
    ConfigError,
    DataError,
    DegenerateClassError,
    InvalidAssignmentError,
    InvalidEvidenceError,
    MarkovNetError,
    NumericalError,
    StructureError,
    UndefinedMetricError,
)
from .inference import METHODS, GibbsConfig, MeanFieldConfig, label_scores
from .metrics import ScoredPredictions, evaluate
from .model import load_model, save_model
from .training import StructureOptions, TrainConfig

EXIT_OK, EXIT_CONFIG, EXIT_DATA, EXIT_NUMERIC = 0, 2, 3, 4

SEED_OFFSETS = {"dataset": 0, "resample": 1, "split": 2, "gibbs": 3}

BINS_FORMAT_VERSION = 1


def _choice(*options):
    def parse(text):
        if text not in options:
            raise ValueError(f"expected one of {', '.join(options)}")
        return text
    return parse


def _path(text):
    if not text:
        raise ValueError("path must be non-empty")
    return text


def _bool(text):
    low = text.lower()
    if low in ("1", "true", "yes", "on"):
        return True
    if low in ("0", "false", "no", "off"):
        return False
    raise ValueError("expected true or false")


def _list(item):
    def parse(text):
        parts = [p.strip() for p in text.split(",") if p.strip()]
        if not parts:
            raise ValueError("expected a comma-separated list")
        return tuple(item(p) for p in parts)
    return parse


def _optional(parse):
    return lambda text: None if text.lower() == "none" else parse(text)


SCHEMA = {
    "run": {"seed": int, "out": _path},
    "data": {
        "csv": _path,
        "schema": _choice("creditcard", "generic"),
        "n_bins": int,
        "split": _choice("none", "stratified"),
        "test_frac": float,
        "split_file": _path,
    },
    "train": {
        "objective": _choice("exact_ll", "pseudo_ll"),
        "regularizer": _choice("none", "l2", "l1", "elastic"),
        "lambda": float,
        "l1_ratio": float,
        "step_size": float,
        "max_iters": int,
        "grad_tol": float,
        "weight_scheme": _choice("none", "inverse_frequency", "custom"),
        "class_costs": _list(float),
    },
    "structure": {
        "learn": _bool,
        "candidate_pairs": _choice("top_m_mutual_information", "all"),
        "m": int,
        "prune_eps": float,
        "lambda": float,
    },
    "inference": {"method": _choice(*METHODS)},
    "gibbs": {"burn_in": int, "samples": int, "thin": int},
    "meanfield": {"tol": float, "max_iters": int, "damping": float},
    "predict": {"model": _path, "bins": _path, "input": _path},
    "eval": {"scores": _path, "truth": _path, "threshold": float},
    "bench": {
        "source": _path,
        "ratios": _optional(_list(float)),
        "models": _list(_choice(*benchmark.MODELS)),
        "seeds": _list(int),
        "threshold": float,
        "logistic_l2": float,
        "record_timing": _bool,
    },
    "synth": {
        "n": int,
        "d": int,
        "minority_ratio": float,
        "planted": _choice("none", "xor_pair", "pairwise"),
        "noise": float,
    },
}


class RunConfig:
    """Validated ``{section: {key: value}}`` view of the config file and overrides."""

    def __init__(self, values: dict):
        self.values = values

    @classmethod
    def build(cls, config_path=None, overrides=()):
        raw = {}
        if config_path is not None:
            parser = configparser.ConfigParser(interpolation=None, default_section="__defaults__")
            parser.optionxform = str
            try:
                with open(config_path, encoding="utf-8") as fh:
                    parser.read_file(fh)
            except OSError as exc:
                raise ConfigError(f"cannot read config file {config_path}: {exc.strerror}") from None
            except configparser.Error as exc:
                raise ConfigError(f"malformed config file {config_path}: {exc}") from None
            for section in parser.sections():
                raw.setdefault(section, {}).update(parser[section])
        for section, key, text in overrides:
            raw.setdefault(section, {})[key] = text

        values = {}
        for section, items in raw.items():
            if section not in SCHEMA:
                raise ConfigError(f"unknown config section [{section}]")
            for key, text in items.items():
                if key not in SCHEMA[section]:
                    raise ConfigError(f"unknown config key {section}.{key}")
                try:
                    values.setdefault(section, {})[key] = SCHEMA[section][key](text.strip())
                except ValueError as exc:
                    raise ConfigError(f"{section}.{key} = {text!r}: {exc}") from None
        return cls(values)

    def get(self, section, key, default=None):
        return self.values.get(section, {}).get(key, default)

    def require(self, section, key):
        value = self.get(section, key)
        if value is None:
            raise ConfigError(f"missing required setting {section}.{key}")
        return value

    def seed(self) -> int:
        return self.require("run", "seed")

    def out_dir(self) -> str:
        out = self.require("run", "out")
        os.makedirs(out, exist_ok=True)
        return out

    def train_config(self) -> TrainConfig:
        keys = {"lambda": "lam"}
        kwargs = {keys.get(k, k): v for k, v in self.values.get("train", {}).items()}
        return _construct(TrainConfig, kwargs, "train")

    def structure_options(self) -> StructureOptions | None:
        opts = dict(self.values.get("structure", {}))
        if not opts.pop("learn", True):
            return None
        if "lambda" in opts:
            opts["lam"] = opts.pop("lambda")
        return _construct(StructureOptions, opts, "structure")

    def inference(self, seed: int | None):
        """``(method, cfg)`` for label scoring."""
        method = self.get("inference", "method", "exact")
        if method == "gibbs":
            if seed is None:
                raise ConfigError("Gibbs inference needs run.seed")
            opts = {**self.values.get("gibbs", {}), "seed": seed + SEED_OFFSETS["gibbs"]}
            return method, _construct(GibbsConfig, opts, "gibbs")
        if method == "meanfield":
            return method, _construct(MeanFieldConfig, self.values.get("meanfield", {}), "meanfield")
        return method, None

    def synth_config(self, seed: int) -> SynthConfig:
        opts = {**self.values.get("synth", {}), "seed": seed + SEED_OFFSETS["dataset"]}
        return _construct(SynthConfig, opts, "synth")


def _construct(cls, kwargs, section):
    try:
        return cls(**kwargs)
    except ConfigError:
        raise
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"invalid [{section}] settings: {exc}") from None


def _write_text(out_dir, name, text) -> str:
    path = os.path.join(out_dir, name)
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(text)
    return path


def _load_dataset(cfg: RunConfig, path):
    if cfg.get("data", "schema", "creditcard") == "creditcard":
        return load_creditcard_csv(path)
    return load_csv(path)


# -- commands ------------------------------------------------------------------

def cmd_train(cfg: RunConfig) -> int:
    seed = cfg.seed()
    train_cfg = cfg.train_config()
    structure = cfg.structure_options()
    raw = _load_dataset(cfg, cfg.require("data", "csv"))
    out = cfg.out_dir()

    rows = None
    split_mode = cfg.get("data", "split", "none")
    if cfg.get("data", "split_file") is not None:
        split = read_split(cfg.get("data", "split_file"))
        if split.train.size and split.train.max() >= len(raw):
            raise DataError(f"split file names row {split.train.max()} but the data has {len(raw)} rows")
        rows = split.train
    elif split_mode == "stratified":
        split = stratified_split(raw, cfg.get("data", "test_frac", 0.3), seed + SEED_OFFSETS["split"])
        write_split(split, os.path.join(out, "split.txt"))
        rows = split.train

    bins = fit_bins(raw, cfg.get("data", "n_bins", 5), rows)
    train_raw = raw if rows is None else raw.subset(rows)
    network, trace = benchmark.train_markov(apply_bins(train_raw, bins), train_cfg, structure)

    save_model(network, os.path.join(out, "model.json"))
    bins_doc = {"format_version": BINS_FORMAT_VERSION, "label": LABEL_COLUMN, **bins.to_dict()}
    _write_text(out, "bins.json", json.dumps(bins_doc, indent=2) + "\n")
    _write_text(out, "trace.txt", "".join(line + "\n" for line in trace.lines()))
    print(f"trained on {len(train_raw)} rows: {len(network.structure.edges)} edges, "
          f"{len(trace)} iterations, converged={trace.converged}; wrote {out}")
    return EXIT_OK


def load_bins(path) -> BinningSpec:
    try:
        with open(path, encoding="utf-8") as fh:
            doc = json.load(fh)
    except json.JSONDecodeError as exc:
        raise DataError(f"{path}: not a valid binning document ({exc.msg})") from None
    if doc.get("format_version") != BINS_FORMAT_VERSION:
        raise DataError(f"{path}: unsupported binning format_version {doc.get('format_version')!r}")
    return BinningSpec.from_dict(doc)


def cmd_predict(cfg: RunConfig) -> int:
    method, inf_cfg = cfg.inference(cfg.get("run", "seed"))
    network = load_model(cfg.require("predict", "model"))
    bins = load_bins(cfg.require("predict", "bins"))
    s = network.structure
    if len(s.feature_ids) != len(bins.cut_points):
        raise DataError(f"model has {len(s.feature_ids)} features but the binning has {len(bins.cut_points)}")
    if tuple(int(s.cardinalities[v]) for v in s.feature_ids) != tuple(max(2, c) for c in bins.cardinalities):
        raise DataError("model feature cardinalities do not match the binning")
    features = load_feature_rows(cfg.require("predict", "input"), bins.feature_names)
    out = cfg.out_dir()
    scores = label_scores(network, bin_features(features, bins), method, inf_cfg)
    _write_text(out, "scores.txt", "".join(f"{p:.17g}\n" for p in scores))
    print(f"scored {scores.size} rows with {method} inference; wrote {os.path.join(out, 'scores.txt')}")
    return EXIT_OK


def _read_lines(path) -> list[str]:
    with open(path, encoding="utf-8") as fh:
        return [line.strip() for line in fh if line.strip()]


def read_scores(path) -> np.ndarray:
    out = []
    for line_no, text in enumerate(_read_lines(path), start=1):
        try:
            out.append(float(text))
        except ValueError:
            raise DataError(f"{path}: line {line_no}: {text!r} is not a number") from None
    return np.array(out, dtype=np.float64)


def read_truth(path) -> np.ndarray:
    """Labels from a CSV with a ``Class`` column or from one 0/1 label per line."""
    with open(path, encoding="utf-8") as fh:
        first = fh.readline()
    if LABEL_COLUMN in [h.strip() for h in first.split(",")]:
        return load_csv(path, feature_names=(), allow_empty=True).labels
    out = []
    for line_no, text in enumerate(_read_lines(path), start=1):
        if text not in ("0", "1"):
            raise DataError(f"{path}: line {line_no}: label {text!r} is not 0 or 1")
        out.append(int(text))
    return np.array(out, dtype=np.intp)


def cmd_eval(cfg: RunConfig) -> int:
    scores_path = cfg.require("eval", "scores")
    truth_path = cfg.require("eval", "truth")
    threshold = cfg.get("eval", "threshold", 0.5)
    scores, truth = read_scores(scores_path), read_truth(truth_path)
    if scores.size != truth.size:
        raise DataError(f"{scores_path} has {scores.size} scores but {truth_path} has {truth.size} labels")
    out = cfg.out_dir()
    report = evaluate(ScoredPredictions(scores, truth), threshold)
    text = report.render_text()
    _write_text(out, "report.txt", text)
    _write_text(out, "report.json", json.dumps(report.to_dict(), indent=2) + "\n")
    sys.stdout.write(text)
    return EXIT_OK


def bench_spec(cfg: RunConfig) -> benchmark.BenchmarkSpec:
    seed = cfg.seed()
    b = cfg.values.get("bench", {})
    method, inf_cfg = cfg.inference(0)
    kwargs = dict(
        source=b.get("source", "synthetic"),
        schema=cfg.get("data", "schema", "creditcard"),
        synth=cfg.synth_config(0),
        ratios=b.get("ratios"),
        seeds=b.get("seeds", (seed,)),
        method=method,
        n_bins=cfg.get("data", "n_bins", 5),
        test_frac=cfg.get("data", "test_frac", 0.3),
        threshold=b.get("threshold", 0.5),
        train=cfg.train_config(),
        structure=cfg.structure_options(),
        logistic_l2=b.get("logistic_l2", 1.0),
        record_timing=b.get("record_timing", False),
    )
    if "models" in b:
        kwargs["models"] = b["models"]
    if method == "gibbs":
        kwargs["gibbs"] = inf_cfg
    elif method == "meanfield":
        kwargs["meanfield"] = inf_cfg
    return _construct(benchmark.BenchmarkSpec, kwargs, "bench")


def cmd_bench(cfg: RunConfig) -> int:
    spec = bench_spec(cfg)
    out = cfg.out_dir()
    report = benchmark.run_benchmark(spec)
    table = benchmark.render_table(report)
    _write_text(out, "report.txt", table)
    _write_text(out, "records.json", benchmark.render_records(report))
    sys.stdout.write(table)
    return EXIT_OK


def cmd_synth(cfg: RunConfig) -> int:
    seed = cfg.seed()
    synth = cfg.synth_config(seed)
    test_frac = cfg.get("data", "test_frac", 0.3)
    out = cfg.out_dir()
    raw = generate_synthetic(synth)
    split = stratified_split(raw, test_frac, seed + SEED_OFFSETS["split"])
    write_csv(raw, os.path.join(out, "data.csv"))
    write_split(split, os.path.join(out, "split.txt"))
    print(f"wrote {len(raw)} rows ({int(raw.labels.sum())} positive) to {os.path.join(out, 'data.csv')}")
    return EXIT_OK


COMMANDS = {
    "train": (cmd_train, "fit a network on a CSV and write model.json, bins.json, trace.txt",
              {"--data": ("data", "csv", "training CSV")}),
    "predict": (cmd_predict, "write P(Class = 1 | x) for every row of a CSV to scores.txt",
                {"--model": ("predict", "model", "model file from train"),
                 "--bins": ("predict", "bins", "bins.json from train"),
                 "--input": ("predict", "input", "CSV to score")}),
    "eval": (cmd_eval, "compute Weight ACC, F1 and AUC; write report.txt and report.json",
             {"--scores": ("eval", "scores", "one score per line"),
              "--truth": ("eval", "truth", "CSV with a Class column, or one 0/1 label per line")}),
    "bench": (cmd_bench, "run the model comparison / minority-ratio sweep; write report.txt and records.json",
              {}),
    "synth": (cmd_synth, "generate a synthetic dataset; write data.csv and split.txt", {}),
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="markovnet", description="Cost-sensitive Markov network classifier.")
    sub = parser.add_subparsers(dest="command", required=True, metavar="command")
    for name, (_, help_text, extra) in COMMANDS.items():
        p = sub.add_parser(name, help=help_text, description=help_text)
        p.add_argument("--config", help="INI config file")
        p.add_argument("--seed", type=int, help="top-level seed (overrides run.seed)")
        p.add_argument("--out", help="output directory (overrides run.out)")
        p.add_argument("--set", action="append", default=[], metavar="SECTION.KEY=VALUE",
                       help="override one config value; repeatable")
        for flag, (section, key, flag_help) in extra.items():
            p.add_argument(flag, dest=f"opt_{key}", help=f"{flag_help} (overrides {section}.{key})")
    return parser


def _overrides(args) -> list[tuple]:
    out = []
    for item in args.set:
        name, sep, value = item.partition("=")
        section, dot, key = name.strip().partition(".")
        if not sep or not dot or not section or not key:
            raise ConfigError(f"--set expects SECTION.KEY=VALUE, got {item!r}")
        out.append((section, key, value))
    for flag, (section, key, _) in COMMANDS[args.command][2].items():
        value = getattr(args, f"opt_{key}")
        if value is not None:
            out.append((section, key, value))
    if args.seed is not None:
        out.append(("run", "seed", str(args.seed)))
    if args.out is not None:
        out.append(("run", "out", args.out))
    return out


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = RunConfig.build(args.config, _overrides(args))
        return COMMANDS[args.command][0](cfg)
    except ConfigError as exc:
        code = EXIT_CONFIG
        message = str(exc)
    except NumericalError as exc:
        code = EXIT_NUMERIC
        message = str(exc)
    except (DataError, DegenerateClassError, UndefinedMetricError, InvalidAssignmentError,
            InvalidEvidenceError, StructureError) as exc:
        code = EXIT_DATA
        message = str(exc)
    except OSError as exc:
        code = EXIT_DATA
        message = f"{exc.filename}: {exc.strerror}" if exc.filename else str(exc)
    except MarkovNetError as exc:
        code = EXIT_DATA
        message = str(exc)
    print(f"markovnet {args.command}: error: {message}", file=sys.stderr)
    return code


if __name__ == "__main__":
    sys.exit(main())
