import json

import numpy as np
import pytest

from markovnet.benchmark import (
    MODELS,
    PUBLISHED_MODEL_COMPARISON,
    PUBLISHED_RATIO_SWEEP,
    RECORD_FIELDS,
    BenchmarkSpec,
    render_records,
    render_table,
    run_benchmark,
)
from markovnet.data import SynthConfig
from markovnet.errors import ConfigError
from markovnet.training import TrainConfig

SMALL = SynthConfig(n=3000, d=8, minority_ratio=0.05, planted="pairwise", noise=0.1)


@pytest.fixture(scope="module")
def sweep():
    spec = BenchmarkSpec(synth=SMALL, ratios=(0.1, 0.2, 0.3), seeds=(0,),
                         train=TrainConfig(max_iters=100))
    return run_benchmark(spec)


class TestRunBenchmark:
    def test_ratio_sweep_rows(self, sweep):
        markov = [r for r in sweep.rows if r.model == "markov_network"]
        assert [r.ratio for r in markov] == [0.1, 0.2, 0.3]
        assert len(sweep.rows) == 6
        for r in sweep.rows:
            assert 0 <= r.weight_acc <= 1 and 0 <= r.f1 <= 1 and 0 <= r.auc <= 1
            assert r.runtime_ms is None

    def test_resampled_sizes(self, sweep):
        # 150 minority rows; majority cut to 150/r - 150; 30% held out per class
        for r in sweep.rows:
            n = 150 + round(150 / r.ratio - 150)
            assert r.n_train + r.n_test == n
            assert abs(r.n_test - 0.3 * n) <= 1

    def test_summary_order(self, sweep):
        summary = sweep.summary()
        assert [(m, r) for m, r, *_ in summary] == [(m, r) for m in MODELS for r in (0.1, 0.2, 0.3)]
        assert all(k == 1 for *_, k in summary)

    def test_logistic_only(self, monkeypatch):
        import markovnet.benchmark as bench

        def no_markov(*args, **kwargs):
            raise AssertionError("Markov training must not run")

        monkeypatch.setattr(bench, "train_markov", no_markov)
        report = run_benchmark(BenchmarkSpec(synth=SMALL, models=("logistic_baseline",), seeds=(1, 2)))
        assert [r.model for r in report.rows] == ["logistic_baseline"] * 2
        assert [r.seed for r in report.rows] == [1, 2]

    def test_reruns_byte_identical(self):
        spec = BenchmarkSpec(synth=SMALL, ratios=(0.2,), seeds=(3,), train=TrainConfig(max_iters=50))
        a, b = run_benchmark(spec), run_benchmark(spec)
        assert render_table(a) == render_table(b)
        assert render_records(a) == render_records(b)

    def test_timing_recorded_on_request(self):
        spec = BenchmarkSpec(synth=SMALL, models=("logistic_baseline",), record_timing=True)
        row = run_benchmark(spec).rows[0]
        assert row.runtime_ms is not None and row.runtime_ms >= 0

    @pytest.mark.parametrize("method", ["gibbs", "meanfield"])
    def test_approximate_inference_methods(self, method):
        from markovnet.inference import GibbsConfig

        spec = BenchmarkSpec(synth=SynthConfig(n=400, d=3, minority_ratio=0.2, planted="pairwise"),
                             models=("markov_network",), method=method, structure=None,
                             gibbs=GibbsConfig(seed=0, burn_in=20, samples=200))
        row = run_benchmark(spec).rows[0]
        assert 0 <= row.auc <= 1

    @pytest.mark.parametrize("kwargs", [dict(models=("svm",)), dict(models=()), dict(method="bp"),
                                        dict(schema="parquet"), dict(seeds=())])
    def test_config_errors(self, kwargs):
        with pytest.raises(ConfigError):
            BenchmarkSpec(**kwargs)


class TestReports:
    def test_table_has_reference_constants(self, sweep):
        text = render_table(sweep)
        for name, values in PUBLISHED_MODEL_COMPARISON.items():
            line = next(l for l in text.splitlines() if l.startswith(name + " "))
            assert [f"{v:.2f}" for v in values] == line.split()[-3:]
        for ratio, values in PUBLISHED_RATIO_SWEEP.items():
            line = next(l for l in text.splitlines() if l.startswith(f"{ratio * 100:.4g}% "))
            assert [f"{v:.2f}" for v in values] == line.split()[-3:]
        assert "not reproduced" in text
        assert "balanced accuracy" in text
        assert "test_frac=0.3" in text

    def test_records_fields(self, sweep):
        doc = json.loads(render_records(sweep))
        assert len(doc["records"]) == len(sweep.rows)
        for rec in doc["records"]:
            assert tuple(rec) == RECORD_FIELDS
        assert doc["reference_models"]["LR"] == {"weight_acc": 0.72, "f1": 0.65, "auc": 0.74}
        assert doc["reference_models"]["Markov Network"] == {"weight_acc": 0.91, "f1": 0.86, "auc": 0.93}
        assert doc["reference_ratios"]["0.1"] == {"weight_acc": 0.84, "f1": 0.72, "auc": 0.78}

    def test_train_threshold_reported(self, sweep):
        for r in sweep.rows:
            assert np.isfinite(r.train_f1_threshold)


def test_creditcard_schema_source(tmp_path):
    from markovnet.data import CREDITCARD_COLUMNS, generate_synthetic, write_csv

    raw = generate_synthetic(SynthConfig(n=800, d=30, minority_ratio=0.1, planted="pairwise", seed=3))
    path = tmp_path / "cc.csv"
    write_csv(raw, path)
    text = path.read_text().split("\n", 1)[1]
    path.write_text(",".join(CREDITCARD_COLUMNS) + "\n" + text)
    spec = BenchmarkSpec(source=str(path), schema="creditcard", seeds=(42,), train=TrainConfig(max_iters=50))
    report = run_benchmark(spec)
    assert [r.model for r in report.rows] == list(MODELS)
    assert report.rows[0].ratio == pytest.approx(0.1)
    assert "schema=creditcard" in render_table(report)
