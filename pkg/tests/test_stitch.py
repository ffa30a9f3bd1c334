import math

import numpy as np
import pytest

from mlgad.autograd import Tensor, grad
from mlgad.errors import ConfigError
from mlgad.stitch import (LEVELS, GraphStitchModel, MomentumSGD, StitchUnit, anomaly_ratio,
                          build_tower, forward, gradient_surgery, level_name, mask_levels,
                          multi_level_step, project_conflicting, stitch_apply, tower_forward,
                          weighted_ce_loss)


def ones(v=1.0, shape=(2, 3)):
    return Tensor(np.full(shape, v))


class TestStitchApply:
    def test_identity(self):
        u = StitchUnit()
        u.alpha.data = np.eye(3)
        out = stitch_apply(u, ones(1), ones(2), ones(3))
        assert [o.data[0, 0] for o in out] == [1, 2, 3]

    def test_zero(self):
        u = StitchUnit()
        u.alpha.data = np.zeros((3, 3))
        assert all(not o.data.any() for o in stitch_apply(u, ones(1), ones(2), ones(3)))

    def test_hand_example(self):
        u = StitchUnit()
        u.alpha.data = np.array([[1.0, 1, 0], [0, 1, 0], [0, 0, 1]])
        n, e, g = stitch_apply(u, ones(1), ones(2), ones(5))
        assert (n.data == 3).all() and (e.data == 2).all() and (g.data == 5).all()

    def test_shape_mismatch(self):
        with pytest.raises(ValueError):
            stitch_apply(StitchUnit(), ones(1), ones(1, (3, 3)), ones(1))

    def test_initialization(self):
        a = StitchUnit().alpha.data
        assert np.all(np.diag(a) == 0.9) and a[0, 1] == a[2, 0] == 0.05


class TestMasking:
    def test_empty_is_noop(self):
        m = GraphStitchModel(4, 8)
        before = [u.alpha.data.copy() for u in m.stitches]
        mask_levels(m, [])
        assert all(np.array_equal(a, u.alpha.data) for a, u in zip(before, m.stitches))

    def test_pins_outgoing_only(self):
        m = mask_levels(GraphStitchModel(4, 8), ["e"])
        for u in m.stitches:
            eff = u.effective().data
            assert eff[0, 1] == 0 and eff[2, 1] == 0
            assert eff[1, 0] == 0.05 and eff[1, 2] == 0.05 and eff[1, 1] == 0.9

    def test_all_three_rejected(self):
        with pytest.raises(ConfigError):
            mask_levels(GraphStitchModel(4, 8), LEVELS)

    def test_masked_coefficients_get_no_update(self):
        m = GraphStitchModel(4, 8, missing=frozenset({"edge"}))
        x = Tensor(np.random.default_rng(0).normal(size=(5, 8)))
        loss = weighted_ce_loss(forward(m, x, "node"), [1, 0, 0, 1, 0])
        g = grad(loss, [u.alpha for u in m.stitches])
        assert all(gi[0, 1] == 0 and gi[2, 1] == 0 for gi in g)

    def test_masked_level_still_scores(self):
        m = GraphStitchModel(4, 8, missing=frozenset({"edge"}))
        p = forward(m, Tensor(np.ones((3, 8))), "edge").data
        assert p.shape == (3, 1) and ((p > 0) & (p < 1)).all()

    def test_isolation_under_perturbation(self):
        rng = np.random.default_rng(1)
        m = GraphStitchModel(4, 8, seed=3, missing=frozenset({"edge"}))
        x = Tensor(rng.normal(size=(7, 8)))
        before = {lvl: forward(m, x, lvl).data.copy() for lvl in ("node", "graph")}
        for p in m.towers["edge"].parameters():
            p.data = p.data + rng.normal(size=p.shape) * 10
        for lvl, b in before.items():
            assert np.array_equal(forward(m, x, lvl).data, b)


class TestForward:
    def test_identical_towers(self):
        m = GraphStitchModel(4, 8)
        w = [t.layers[0].weight.data for t in m.towers.values()]
        assert np.array_equal(w[0], w[1]) and np.array_equal(w[1], w[2])

    def test_identity_stitch_matches_standalone_tower(self):
        m = GraphStitchModel(4, 8, seed=5)
        for u in m.stitches:
            u.alpha.data = np.eye(3)
        x = Tensor(np.random.default_rng(0).normal(size=(6, 8)))
        ref = tower_forward(build_tower(8, 2, m.tower_seed), x).data
        for lvl in LEVELS:
            assert np.array_equal(forward(m, x, lvl).data, ref)

    def test_probabilities_in_open_interval(self):
        m = GraphStitchModel(4, 8)
        x = Tensor(np.random.default_rng(0).normal(size=(50, 8)) * 100)
        p = forward(m, x, "graph").data
        assert ((p >= 0) & (p <= 1)).all()

    def test_unknown_level(self):
        with pytest.raises(ConfigError):
            forward(GraphStitchModel(4, 8), Tensor(np.ones((1, 8))), "community")
        assert level_name("E") == "edge"

    def test_deterministic(self):
        x = Tensor(np.random.default_rng(0).normal(size=(4, 8)))
        a = forward(GraphStitchModel(4, 8, seed=9), x, "node").data
        b = forward(GraphStitchModel(4, 8, seed=9), x, "node").data
        assert np.array_equal(a, b)

    def test_snapshot_round_trip(self):
        m = GraphStitchModel(4, 8, seed=1)
        snap = m.snapshot()
        other = GraphStitchModel(4, 8, seed=2)
        other.load_arrays(snap)
        x = Tensor(np.ones((2, 8)))
        assert np.array_equal(forward(m, x, "edge").data, forward(other, x, "edge").data)
        with pytest.raises(ValueError):
            GraphStitchModel(4, 16).load_arrays(snap)


class TestLoss:
    def test_hand_example(self):
        loss = weighted_ce_loss(Tensor(np.array([[0.9], [0.2]])), [1, 0], gamma=2.0)
        assert loss.data.item() == pytest.approx(-(2 * math.log(0.9) + math.log(0.8)), rel=1e-12)
        assert loss.data.item() == pytest.approx(0.4339, abs=5e-5)

    def test_symmetric_point(self):
        loss = weighted_ce_loss(Tensor(np.array([[0.5]])), [1], gamma=1.0)
        assert loss.data.item() == pytest.approx(math.log(2), rel=1e-12)

    def test_perfect_predictions_near_zero(self):
        loss = weighted_ce_loss(Tensor(np.array([[1.0], [0.0]])), [1, 0])
        assert 0 <= loss.data.item() < 1e-6

    def test_length_mismatch_and_bad_labels(self):
        with pytest.raises(ValueError):
            weighted_ce_loss(Tensor(np.ones((2, 1)) * 0.5), [1, 0, 1])
        with pytest.raises(ValueError):
            weighted_ce_loss(Tensor(np.ones((2, 1)) * 0.5), [1, 2])

    def test_anomaly_ratio(self):
        assert anomaly_ratio([0, 1, 0, 1]) == 1
        assert anomaly_ratio([0] * 9 + [1]) == 9
        assert anomaly_ratio([0, 0, 0]) == 1
        assert anomaly_ratio([0] * 9 + [1], "direct") == pytest.approx(1 / 9)
        assert anomaly_ratio([0] * 9 + [1], "none") == 1
        with pytest.raises(ConfigError):
            anomaly_ratio([0, 1], "other")


class TestGradientSurgery:
    def test_no_conflict_is_plain_sum(self):
        g = [np.array([1.0, 2.0]), np.array([0.5, 0.0]), np.array([0.0, 3.0])]
        assert gradient_surgery(g, 0).tolist() == [1.5, 5.0]

    def test_hand_projection(self):
        out = project_conflicting([np.array([1.0, 1.0]), np.array([-1.0, 0.0])],
                                  np.random.default_rng(0))
        assert out[0].tolist() == [0.0, 1.0]

    def test_antiparallel_exact_zero(self):
        g = np.array([0.3, -1.7, 2.2])
        total = gradient_surgery([g, -g], 0)
        assert np.array_equal(total, np.zeros(3))

    def test_zero_norm_skipped(self):
        out = gradient_surgery([np.array([1.0, 0.0]), np.zeros(2)], 0)
        assert out.tolist() == [1.0, 0.0]

    def test_needs_two(self):
        with pytest.raises(ValueError):
            gradient_surgery([np.ones(2)], 0)

    def test_seeded(self):
        rng = np.random.default_rng(4)
        g = [rng.normal(size=6) for _ in range(4)]
        assert np.array_equal(gradient_surgery(g, 7), gradient_surgery(g, 7))


class TestOptimizer:
    def test_clipping_keeps_updates_bounded(self):
        p = Tensor(np.zeros((1, 2)), requires_grad=True)
        opt = MomentumSGD([p], lr=1.0, momentum=0.0, clip=5.0)
        opt.step([np.array([[300.0, 400.0]])])
        np.testing.assert_allclose(p.data, [[-3.0, -4.0]])

    def test_momentum(self):
        p = Tensor(np.zeros((1, 1)), requires_grad=True)
        opt = MomentumSGD([p], lr=0.1, momentum=0.9, clip=100.0)
        opt.step([np.ones((1, 1))])
        opt.step([np.ones((1, 1))])
        assert p.data.item() == pytest.approx(-0.1 - 0.19)

    def test_loss_decreases_and_alpha_finite(self):
        rng = np.random.default_rng(0)
        m = GraphStitchModel(4, 8, seed=0)
        X = rng.normal(size=(40, 8))
        y = (X[:, 0] > 0).astype(int)
        x = Tensor(X)
        params = m.trainable_parameters()
        opt = MomentumSGD(params, lr=1e-2)
        losses = []
        for _ in range(50):
            ls = {lvl: weighted_ce_loss(forward(m, x, lvl), y) for lvl in LEVELS}
            losses.append(sum(l.data.item() for l in ls.values()))
            multi_level_step(ls, params, opt, rng)
        assert min(losses) >= 0 and losses[-1] < losses[0]
        assert all(np.isfinite(u.alpha.data).all() for u in m.stitches)
