import json

import numpy as np
import pytest

from mlgad.data import Dataset, split, synth_multi_graph, synth_single_graph
from mlgad.errors import ConfigError
from mlgad.graph_core import Graph
from mlgad.pipeline import (MetricsReport, TrainConfig, evaluate, model_from_json,
                            model_to_json, predict, prepare, train)


@pytest.fixture(scope="module")
def single():
    return split(synth_single_graph(200, 0.1, "contextual", seed=3, shift=4.0), 0.4, seed=3)


@pytest.fixture(scope="module")
def multi():
    return split(synth_multi_graph(40, (20, 30), 0.25, seed=2), 0.4, seed=2)


def few_anomalies(k=2, n=60):
    labels = np.zeros(n, dtype=np.int64)
    labels[:k] = 1
    X = np.random.default_rng(0).normal(size=(n, 3))
    X[:k] += 4
    g = Graph.from_edges(n, [(i, (i + 1) % n) for i in range(n)], X, labels)
    return split(Dataset("single", [g]), 0.4, seed=0)


class TestConfig:
    def test_unknown_key(self):
        with pytest.raises(ConfigError):
            TrainConfig.from_dict({"epochs": 3, "learning_rate": 0.1})

    @pytest.mark.parametrize("kw", [{"depth": 0}, {"decay": 0.0}, {"epochs": 0},
                                    {"gamma_mode": "x"}, {"train_frac": 1.0}, {"levels": ("pixel",)}])
    def test_invalid(self, kw):
        with pytest.raises(ConfigError):
            TrainConfig(**kw)

    def test_dict_round_trip(self):
        c = TrainConfig(levels=("n", "g"), mask_levels=("edge",))
        assert TrainConfig.from_dict(c.to_dict()) == c


class TestTraining:
    def test_loss_strictly_decreases_first_ten_epochs(self, single):
        _, hist = train(single, TrainConfig(epochs=10, seed=0))
        totals = [sum(l.values()) for l in hist.losses]
        assert all(b < a for a, b in zip(totals, totals[1:]))
        assert min(totals) >= 0

    def test_mask_edge_still_scores_edges(self, single):
        cfg = TrainConfig(epochs=5, mask_levels=("edge",))
        model, hist = train(single, cfg)
        assert hist.train_levels == ["node"] and "edge" in hist.missing
        assert all(set(l) == {"node"} for l in hist.losses)
        report = evaluate(model, single, cfg)
        assert "edge" in report.levels and report.levels["edge"]["auroc"] is not None

    def test_identical_seeds_identical_history(self, multi):
        cfg = TrainConfig(epochs=8, seed=4)
        a = train(multi, cfg)[1]
        b = train(multi, cfg)[1]
        assert a.to_dict() == b.to_dict()

    def test_end_to_end_determinism(self):
        def run():
            ds = split(synth_multi_graph(30, (20, 25), 0.3, seed=6), 0.4, seed=6)
            cfg = TrainConfig(epochs=5, seed=6)
            report = evaluate(train(ds, cfg)[0], ds, cfg)
            report.wall_time = 0.0
            return report.to_json()

        assert run() == run()

    def test_epochs_do_not_change_sampler_calls(self, single):
        counts = []
        for epochs in (2, 12):
            prepared = prepare(single, TrainConfig())
            before = prepared.sampler.calls
            _, hist = train(single, TrainConfig(epochs=epochs), prepared)
            assert hist.sampler_calls == 0 and prepared.sampler.calls == before
            counts.append(before)
        assert counts[0] == counts[1] > 0

    def test_no_labeled_level(self, multi):
        with pytest.raises(ConfigError):
            train(multi, TrainConfig(epochs=2, levels=("edge",)))

    def test_requires_split(self):
        with pytest.raises(ConfigError):
            prepare(synth_multi_graph(20, (20, 25), 0.2), TrainConfig())


class TestLeakage:
    def test_pooling_never_crosses_partitions(self, single):
        prepared = prepare(single, TrainConfig())
        part = single.node_part
        for lvl in ("node", "edge"):
            for i, name in enumerate(("train", "val", "test")):
                P = prepared.pool[lvl][name]
                assert (part[P.indices] == i).all()

    def test_cross_edges_removed_from_propagation(self, single):
        from mlgad.data import leakage_free_graph
        g = leakage_free_graph(single)
        assert g.edge_count < single.union.edge_count
        assert (single.node_part[g.edges[:, 0]] == single.node_part[g.edges[:, 1]]).all()


class TestEvaluation:
    def test_report_round_trip(self, multi):
        cfg = TrainConfig(epochs=3)
        report = evaluate(train(multi, cfg)[0], multi, cfg)
        back = MetricsReport.from_json(report.to_json())
        assert back == report
        for m in report.levels.values():
            assert all(0 <= m[k] <= 1 for k in ("auroc", "auprc", "macro_f1"))

    def test_single_class_split_is_undefined(self):
        ds = few_anomalies()
        assert ds.labels("node")[ds.split["node"]["val"]].sum() == 0
        cfg = TrainConfig(epochs=2)
        report = evaluate(train(ds, cfg)[0], ds, cfg, split="val")
        m = report.levels["node"]
        assert m["auroc"] is None and m["auprc"] is None and m["macro_f1"] is not None
        assert report.undefined_levels() == ["node"]

    def test_checkpoint_round_trip(self, multi):
        cfg = TrainConfig(epochs=3, seed=1)
        model, _ = train(multi, cfg)
        back, cfg2 = model_from_json(model_to_json(model, cfg))
        assert cfg2 == cfg
        prepared = prepare(multi, cfg)
        for lvl in ("node", "graph"):
            assert np.array_equal(predict(model, prepared, lvl, "test"),
                                  predict(back, prepared, lvl, "test"))
        assert json.loads(model_to_json(model, cfg))["format"].startswith("mlgad-checkpoint")
