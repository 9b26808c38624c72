"""Benchmark runner: model comparison and minority-ratio sweep.

For every seed and minority ratio the runner resamples, splits, trains the
requested models on the training side and scores the test side.  Seeds fan
out as: dataset ``seed``, resampling ``seed + 1``, split ``seed + 2``,
Gibbs chains ``seed + 3``.
"""
from __future__ import annotations

import json
import time
from dataclasses import dataclass, field

import numpy as np

from .baseline import logistic_fit, logistic_predict
from .data import (
    SynthConfig,
    apply_bins,
    fit_bins,
    generate_synthetic,
    load_creditcard_csv,
    load_csv,
    resample_to_minority_ratio,
    stratified_split,
)
from .errors import ConfigError
from .inference import METHODS, GibbsConfig, MeanFieldConfig, label_scores
from .metrics import ScoredPredictions, best_f1_threshold, evaluate
from .model import GraphStructure, MarkovNetwork
from .training import (
    StructureOptions,
    TrainConfig,
    compute_class_weights,
    fit,
    learn_structure,
)

MODELS = ("markov_network", "logistic_baseline")

#: Published values, shown for context only; nothing here is reproduced.
PUBLISHED_MODEL_COMPARISON = {
    "LR": (0.72, 0.65, 0.74),
    "SVM": (0.78, 0.70, 0.79),
    "RF": (0.83, 0.77, 0.85),
    "XGBoost": (0.87, 0.81, 0.88),
    "Markov Network": (0.91, 0.86, 0.93),
}
PUBLISHED_RATIO_SWEEP = {
    0.1: (0.84, 0.72, 0.78),
    0.2: (0.87, 0.75, 0.82),
    0.3: (0.91, 0.86, 0.93),
}

RECORD_FIELDS = ("model", "ratio", "seed", "weight_acc", "f1", "auc", "threshold", "runtime_ms")


@dataclass(frozen=True)
class BenchmarkSpec:
    #: ``"synthetic"`` or a CSV path
    source: str = "synthetic"
    #: ``"creditcard"`` (strict 30-feature header) or ``"generic"`` (any features + Class)
    schema: str = "creditcard"
    synth: SynthConfig = SynthConfig()
    #: target minority ratios; ``None`` keeps the data's own ratio
    ratios: tuple | None = None
    models: tuple = MODELS
    seeds: tuple = (42,)
    method: str = "exact"
    n_bins: int = 5
    test_frac: float = 0.3
    threshold: float = 0.5
    train: TrainConfig = TrainConfig()
    #: ``None`` trains on the star graph without structure search
    structure: StructureOptions | None = StructureOptions()
    logistic_l2: float = 1.0
    gibbs: GibbsConfig = GibbsConfig()
    meanfield: MeanFieldConfig = MeanFieldConfig()
    record_timing: bool = False

    def __post_init__(self):
        unknown = [m for m in self.models if m not in MODELS]
        if unknown:
            raise ConfigError(f"unknown model {unknown[0]!r}; expected a subset of {MODELS}")
        if not self.models:
            raise ConfigError("at least one model is required")
        if self.method not in METHODS:
            raise ConfigError(f"unknown inference method {self.method!r}; expected one of {METHODS}")
        if self.schema not in ("creditcard", "generic"):
            raise ConfigError(f"unknown schema {self.schema!r}")
        if not self.seeds:
            raise ConfigError("at least one seed is required")


@dataclass
class BenchmarkRow:
    model: str
    ratio: float
    seed: int
    weight_acc: float
    f1: float
    auc: float
    threshold: float
    runtime_ms: float | None
    train_f1_threshold: float
    n_train: int = 0
    n_test: int = 0
    minority_recall: float = 0.0

    def record(self) -> dict:
        return {k: getattr(self, k) for k in RECORD_FIELDS}


@dataclass
class BenchmarkReport:
    spec: BenchmarkSpec
    rows: list = field(default_factory=list)

    def summary(self) -> list[tuple]:
        """``(model, ratio, mean weight_acc, mean f1, mean auc, n_seeds)`` in spec order."""
        out = []
        for model in self.spec.models:
            ratios = []
            for r in self.rows:
                if r.model == model and r.ratio not in ratios:
                    ratios.append(r.ratio)
            for ratio in ratios:
                sel = [r for r in self.rows if r.model == model and r.ratio == ratio]
                out.append((model, ratio,
                            float(np.mean([r.weight_acc for r in sel])),
                            float(np.mean([r.f1 for r in sel])),
                            float(np.mean([r.auc for r in sel])),
                            len(sel)))
        return out


def _load_source(spec: BenchmarkSpec, seed: int):
    if spec.source == "synthetic":
        cfg = SynthConfig(**{**spec.synth.__dict__, "seed": seed})
        return generate_synthetic(cfg)
    if spec.schema == "creditcard":
        return load_creditcard_csv(spec.source)
    return load_csv(spec.source)


def train_markov(train_ds, config: TrainConfig, structure: StructureOptions | None):
    """Structure search (optional) followed by the final fit on the kept edges."""
    weights = compute_class_weights(train_ds.labels, config.weight_scheme, config.class_costs)
    if structure is None:
        graph = GraphStructure.star(train_ds.variable_specs())
    else:
        graph = learn_structure(train_ds, config, structure, weights=weights).structure
    return fit(MarkovNetwork(graph), train_ds, config, weights=weights)


def _markov_row(spec, data, split, ratio, seed):
    raw_train, raw_test = data.subset(split.train), data.subset(split.test)
    bins = fit_bins(data, spec.n_bins, split.train)
    train_ds, test_ds = apply_bins(raw_train, bins), apply_bins(raw_test, bins)
    network, _ = train_markov(train_ds, spec.train, spec.structure)
    cfg = None
    if spec.method == "gibbs":
        cfg = GibbsConfig(seed=seed + 3, burn_in=spec.gibbs.burn_in, samples=spec.gibbs.samples,
                          thin=spec.gibbs.thin)
    elif spec.method == "meanfield":
        cfg = spec.meanfield
    train_scores = label_scores(network, train_ds.instances, spec.method, cfg)
    test_scores = label_scores(network, test_ds.instances, spec.method, cfg)
    return train_scores, test_scores


def _logistic_row(spec, data, split):
    y_train = data.labels[split.train]
    w = compute_class_weights(y_train, spec.train.weight_scheme, spec.train.class_costs)
    model = logistic_fit(data.features[split.train], y_train, w, l2_lambda=spec.logistic_l2)
    return (logistic_predict(model, data.features[split.train]),
            logistic_predict(model, data.features[split.test]))


def run_benchmark(spec: BenchmarkSpec) -> BenchmarkReport:
    report = BenchmarkReport(spec)
    for seed in spec.seeds:
        base = _load_source(spec, seed)
        for ratio in (spec.ratios or (None,)):
            data = base if ratio is None else resample_to_minority_ratio(base, ratio, seed + 1)
            actual_ratio = float(ratio) if ratio is not None else float(data.labels.mean())
            split = stratified_split(data, spec.test_frac, seed + 2)
            for model in spec.models:
                start = time.perf_counter()
                if model == "markov_network":
                    train_scores, test_scores = _markov_row(spec, data, split, ratio, seed)
                else:
                    train_scores, test_scores = _logistic_row(spec, data, split)
                elapsed = (time.perf_counter() - start) * 1000.0
                test_preds = ScoredPredictions(test_scores, data.labels[split.test])
                metrics = evaluate(test_preds, spec.threshold)
                c = metrics.confusion
                report.rows.append(BenchmarkRow(
                    model=model,
                    ratio=actual_ratio,
                    seed=int(seed),
                    weight_acc=metrics.weight_acc,
                    f1=metrics.f1,
                    auc=metrics.auc,
                    threshold=spec.threshold,
                    runtime_ms=round(elapsed, 3) if spec.record_timing else None,
                    train_f1_threshold=best_f1_threshold(ScoredPredictions(train_scores, data.labels[split.train])),
                    n_train=int(split.train.size),
                    n_test=int(split.test.size),
                    minority_recall=c.tp / (c.tp + c.fn),
                ))
    return report


def _fmt_ratio(r: float) -> str:
    return f"{r * 100:.4g}%"


def render_table(report: BenchmarkReport) -> str:
    """Aligned plain-text report."""
    spec = report.spec
    lines = [
        "Benchmark report",
        f"source: {spec.source}" + (f" (planted={spec.synth.planted}, n={spec.synth.n}, d={spec.synth.d}, "
                                    f"minority={spec.synth.minority_ratio}, noise={spec.synth.noise})"
                                    if spec.source == "synthetic" else f" (schema={spec.schema})"),
        f"split: stratified, test_frac={spec.test_frac}, split seed = seed + 2; bins K={spec.n_bins}",
        f"markov: objective={spec.train.objective} regularizer={spec.train.regularizer} "
        f"lambda={spec.train.lam} weights={spec.train.weight_scheme} inference={spec.method} "
        f"structure={'star' if spec.structure is None else 'learned'}",
        f"logistic: l2={spec.logistic_l2} weights={spec.train.weight_scheme}",
        "Weight ACC is balanced accuracy (mean per-class recall); F1 is for the minority class 1.",
        f"Decision threshold {spec.threshold}; train_thr is the F1-optimal threshold on the training split.",
        "",
    ]
    header = ("model", "ratio", "seed", "weight_acc", "f1", "auc", "threshold", "train_thr", "runtime_ms")
    body = []
    for r in report.rows:
        body.append((r.model, _fmt_ratio(r.ratio), str(r.seed), f"{r.weight_acc:.4f}", f"{r.f1:.4f}",
                     f"{r.auc:.4f}", f"{r.threshold:.4g}", f"{r.train_f1_threshold:.4f}",
                     "-" if r.runtime_ms is None else f"{r.runtime_ms:.1f}"))
    lines.extend(_align([header] + body))
    lines.append("")
    lines.append("Mean over seeds")
    mean_rows = [("model", "ratio", "weight_acc", "f1", "auc", "seeds")]
    for model, ratio, ba, f1, auc, k in report.summary():
        mean_rows.append((model, _fmt_ratio(ratio), f"{ba:.4f}", f"{f1:.4f}", f"{auc:.4f}", str(k)))
    lines.extend(_align(mean_rows))
    lines.append("")
    lines.append("Published reference values (not reproduced here; context only)")
    ref = [("published model", "weight_acc", "f1", "auc")]
    ref += [(name, *(f"{v:.2f}" for v in vals)) for name, vals in PUBLISHED_MODEL_COMPARISON.items()]
    lines.extend(_align(ref))
    ref2 = [("published minority ratio", "weight_acc", "f1", "auc")]
    ref2 += [(_fmt_ratio(k), *(f"{v:.2f}" for v in vals)) for k, vals in PUBLISHED_RATIO_SWEEP.items()]
    lines.append("")
    lines.extend(_align(ref2))
    return "\n".join(lines) + "\n"


def _align(rows) -> list[str]:
    widths = [max(len(r[i]) for r in rows) for i in range(len(rows[0]))]
    return ["  ".join(cell.ljust(w) for cell, w in zip(r, widths)).rstrip() for r in rows]


def render_records(report: BenchmarkReport) -> str:
    """Machine-readable JSON: one record per row with the fixed field names."""
    doc = {
        "records": [r.record() for r in report.rows],
        "train_f1_thresholds": [r.train_f1_threshold for r in report.rows],
        "reference_models": {k: dict(zip(("weight_acc", "f1", "auc"), v)) for k, v in PUBLISHED_MODEL_COMPARISON.items()},
        "reference_ratios": {str(k): dict(zip(("weight_acc", "f1", "auc"), v)) for k, v in PUBLISHED_RATIO_SWEEP.items()},
    }
    return json.dumps(doc, indent=2, sort_keys=False) + "\n"
