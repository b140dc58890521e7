import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from tilembed.encoder import Block, EncoderConfig, embed_array, init_encoder
from tilembed.errors import ConfigError, NumericError, ShapeError
from tilembed.losses import cross_entropy, objective_value, softmax, triplet_hinge
from tilembed.raster import RasterGrid, Tile
from tilembed.sampler import TileTriplet, TripletSpec, sample_triplets
from tilembed.training import (
    AdamState,
    TrainConfig,
    adam_step,
    init_head,
    predict_supervised,
    random_derangement,
    recombine_batch,
    supervised_loss_gradients,
    train,
    train_supervised,
)

vectors = arrays(np.float64, 3, elements=st.floats(-100, 100))


class TestHinge:
    def test_equal_embeddings_leave_margin(self):
        z = np.array([1.0, -2.0])
        assert triplet_hinge(z, z, z, 50) == 50.0

    def test_satisfied(self):
        assert triplet_hinge([0, 0], [3, 4], [6, 8], 2) == 0.0

    def test_violated(self):
        assert abs(triplet_hinge([0, 0], [0, 2], [1, 0], 0.5) - 1.5) <= 1e-12

    def test_dim_mismatch(self):
        with pytest.raises(ShapeError):
            triplet_hinge([0, 0], [0, 0, 0], [0, 0], 1)

    @settings(max_examples=100, deadline=None)
    @given(vectors, vectors, vectors, st.floats(0, 50))
    def test_nonnegative_and_zero_iff_separated(self, za, zn, zd, m):
        h = triplet_hinge(za, zn, zd, m)
        assert h >= 0
        pos, neg = np.linalg.norm(za - zn), np.linalg.norm(za - zd)
        if neg > pos + m + 1e-9:
            assert h == 0
        if neg < pos + m - 1e-9:
            assert h > 0

    @settings(max_examples=100, deadline=None)
    @given(vectors, vectors, vectors, st.floats(0, 10), st.floats(0.01, 100))
    def test_scaling_law(self, za, zn, zd, m, c):
        pos, neg = np.linalg.norm(za - zn), np.linalg.norm(za - zd)
        expected = max(0.0, c * (pos - neg) + m)
        assert triplet_hinge(c * za, c * zn, c * zd, m) == pytest.approx(expected, abs=1e-9 * (1 + c * (pos + neg)))


class TestObjective:
    def test_sum_of_hinges_without_penalty(self):
        trips = [([0, 0], [3, 4], [6, 8]), ([0, 0], [0, 2], [1, 0])]
        assert objective_value(trips, 0.5, 0.0) == pytest.approx(
            sum(triplet_hinge(*t, 0.5) for t in trips), abs=1e-12
        )

    def test_penalty_covers_all_three(self):
        assert abs(objective_value([([0, 0], [3, 4], [6, 8])], 2, 0.1) - 1.5) <= 1e-12

    def test_scale_escape_threshold(self):
        za, zn, zd = np.zeros(2), np.array([3.0, 4.0]), np.array([6.0, 8.0])
        # threshold m / (|za - zd| - |za - zn|) = 2 / 5
        assert triplet_hinge(0.4 * za, 0.4 * zn, 0.4 * zd, 2) == 0
        assert triplet_hinge(0.396 * za, 0.396 * zn, 0.396 * zd, 2) > 0

    def test_empty(self):
        with pytest.raises(ShapeError):
            objective_value([], 1, 0)

    def test_mixed_dims(self):
        with pytest.raises(ShapeError):
            objective_value([([0, 0], [1, 1], [2, 2]), ([0], [1], [2])], 1, 0)

    @settings(max_examples=30, deadline=None)
    @given(st.lists(st.tuples(vectors, vectors, vectors), min_size=1, max_size=6), st.randoms(use_true_random=False))
    def test_permutation_invariant(self, trips, rnd):
        shuffled = list(trips)
        rnd.shuffle(shuffled)
        a, b = objective_value(trips, 1.0, 0.01), objective_value(shuffled, 1.0, 0.01)
        assert a == pytest.approx(b, rel=1e-12, abs=1e-9)


class TestCrossEntropy:
    def test_uniform_logits(self):
        loss, _ = cross_entropy(np.zeros((6, 4)), [0, 1, 2, 3, 0, 1])
        assert loss == pytest.approx(np.log(4), abs=1e-12)

    def test_gradient_fd(self):
        rng = np.random.default_rng(0)
        logits, labels = rng.normal(size=(5, 3)), rng.integers(0, 3, 5)
        _, grad = cross_entropy(logits, labels)
        fd = np.zeros_like(logits)
        for idx in np.ndindex(logits.shape):
            e = np.zeros_like(logits)
            e[idx] = 1e-6
            fd[idx] = (cross_entropy(logits + e, labels, False)[0] - cross_entropy(logits - e, labels, False)[0]) / 2e-6
        np.testing.assert_allclose(grad, fd, atol=1e-8)

    def test_softmax_rows(self):
        p = softmax(np.array([[1000.0, 1000.0], [0.0, np.log(3)]]))
        np.testing.assert_allclose(p, [[0.5, 0.5], [0.25, 0.75]])


def tile(v, origin):
    return Tile(np.full((2, 2, 1), float(v)), origin)


def toy_batch(b):
    return [TileTriplet(tile(3 * i, (3 * i, 0)), tile(3 * i + 1, (3 * i + 1, 0)), tile(3 * i + 2, (3 * i + 2, 0))) for i in range(b)]


class TestRecombine:
    def test_off_identity(self):
        batch = toy_batch(4)
        out = recombine_batch(batch, "off", np.random.default_rng(0))
        assert all(o.anchor is t.anchor and o.neighbor is t.neighbor and o.distant is t.distant for o, t in zip(out, batch))
        assert len(out) == len(batch)

    def test_full_count(self):
        assert len(recombine_batch(toy_batch(3), "full", np.random.default_rng(0))) == 18

    @settings(max_examples=25, deadline=None)
    @given(st.integers(2, 9), st.integers(0, 1000))
    def test_full_structure(self, b, seed):
        batch = toy_batch(b)
        out = recombine_batch(batch, "full", np.random.default_rng(seed))
        assert len(out) == 3 * b * (b - 1)
        pairs = {(t.anchor.origin, t.neighbor.origin) for t in batch}
        owner = {t.origin: i for i, trip in enumerate(batch) for t in (trip.anchor, trip.neighbor, trip.distant)}
        for t in out:
            assert (t.anchor.origin, t.neighbor.origin) in pairs
            assert owner[t.distant.origin] != owner[t.anchor.origin]
        # each pair sees every foreign tile exactly once
        assert len({(t.anchor.origin, t.distant.origin) for t in out}) == len(out)

    @settings(max_examples=50, deadline=None)
    @given(st.integers(2, 20), st.integers(0, 1000))
    def test_shuffle_derangement(self, b, seed):
        batch = toy_batch(b)
        out = recombine_batch(batch, "shuffle", np.random.default_rng(seed))
        assert all(o.distant.origin != t.distant.origin for o, t in zip(out, batch))
        assert sorted(o.distant.origin for o in out) == sorted(t.distant.origin for t in batch)
        assert all(o.anchor is t.anchor for o, t in zip(out, batch))

    def test_too_small(self):
        for mode in ("shuffle", "full"):
            with pytest.raises(ConfigError):
                recombine_batch(toy_batch(1), mode, np.random.default_rng(0))

    def test_derangement_uniform_over_three(self):
        rng = np.random.default_rng(0)
        counts = {}
        for _ in range(2000):
            key = tuple(random_derangement(3, rng))
            counts[key] = counts.get(key, 0) + 1
        assert set(counts) == {(1, 2, 0), (2, 0, 1)}
        assert abs(counts[(1, 2, 0)] - 1000) < 150


class TestAdam:
    def test_first_step(self):
        cfg = TrainConfig()
        params = {"w": np.array([1.0])}
        new, state = adam_step(params, {"w": np.array([1.0])}, AdamState.zeros_like(params), cfg)
        assert new["w"][0] == pytest.approx(0.999, abs=1e-10)
        assert state.step == 1 and params["w"][0] == 1.0

    def test_zero_gradient(self):
        params = {"w": np.array([0.5, -2.0])}
        state = AdamState.zeros_like(params)
        new, state = adam_step(params, {"w": np.zeros(2)}, state, TrainConfig())
        np.testing.assert_array_equal(new["w"], params["w"])
        assert state.step == 1

    def test_deterministic_trajectories(self):
        def run():
            params, state = {"w": np.ones(3)}, AdamState.zeros_like({"w": np.ones(3)})
            for t in range(20):
                params, state = adam_step(params, {"w": np.sin(params["w"] * (t + 1))}, state, TrainConfig())
            return params["w"]

        assert run().tobytes() == run().tobytes()

    def test_non_finite(self):
        params = {"w": np.ones(1)}
        with pytest.raises(NumericError):
            adam_step(params, {"w": np.array([np.nan])}, AdamState.zeros_like(params), TrainConfig())


class TestTrainConfig:
    @pytest.mark.parametrize(
        "kwargs",
        [dict(margin=-1), dict(lam=-0.1), dict(batch_size=1), dict(beta1=1.0), dict(augmentation="mix")],
    )
    def test_invalid(self, kwargs):
        with pytest.raises(ConfigError):
            TrainConfig(**kwargs)

    def test_single_batch_allowed_without_recombination(self):
        TrainConfig(batch_size=1, augmentation="off")


TINY = EncoderConfig(tile_size=4, bands=1, blocks=(Block(3),), embed_dim=2, init_seed=0)


def tiny_set(n=3, seed=0):
    grid = RasterGrid(np.random.default_rng(seed).normal(size=(1, 24, 24)).astype(np.float32))
    return sample_triplets(grid, TripletSpec(n, 4, 4, seed=seed))


class TestTrain:
    def test_zero_epochs(self):
        params0 = init_encoder(TINY)
        params, report = train(tiny_set(), TINY, TrainConfig(epochs=0))
        for k in params0:
            np.testing.assert_array_equal(params[k], params0[k])
        assert report.mean_loss == [] and report.log_lines() == []

    def test_toy_descent(self):
        cfg = TrainConfig(margin=1.0, lam=0.0, epochs=200, batch_size=3, learning_rate=1e-2, augmentation="off")
        _, report = train(tiny_set(), TINY, cfg)
        assert len(report.mean_loss) == 200
        assert report.mean_loss[-1] < report.mean_loss[0]

    def test_norm_penalty_shrinks_embeddings(self):
        tset = tiny_set(40, seed=2)
        inputs = tset.tiles(np.arange(3 * len(tset)))
        norms = []
        for lam in (0.01, 0.0):
            params, _ = train(tset, TINY, TrainConfig(margin=1.0, lam=lam, epochs=30, batch_size=10, seed=1))
            norms.append(np.linalg.norm(embed_array(params, TINY, inputs), axis=1).mean())
        assert norms[0] < norms[1]

    def test_reproducible_and_logged(self):
        lines = []
        cfg = TrainConfig(margin=1.0, epochs=3, batch_size=4, seed=5)
        a, rep = train(tiny_set(10), TINY, cfg, log=lines.append)
        b, _ = train(tiny_set(10), TINY, cfg)
        for k in a:
            assert a[k].tobytes() == b[k].tobytes()
        assert len(lines) == 3
        fields = lines[0].split("\t")
        assert fields[0] == "1" and int(fields[2]) == 10 and len(fields) == 4

    def test_counts_per_mode(self):
        tset = tiny_set(16)
        for mode, per_epoch in (("off", 16), ("shuffle", 16), ("full", 16 * 21)):
            _, rep = train(tset, TINY, TrainConfig(margin=1.0, epochs=2, batch_size=8, augmentation=mode))
            assert rep.triplets_seen == [per_epoch, per_epoch]
        _, rep = train(tset, TINY, TrainConfig(margin=1.0, epochs=1, batch_size=8, augmentation="off"))
        assert rep.fixed_distants == [16]

    def test_trailing_singleton_folded(self):
        _, rep = train(tiny_set(9), TINY, TrainConfig(margin=1.0, epochs=1, batch_size=4))
        assert rep.triplets_seen == [9] and rep.fixed_distants == [0]

    def test_shape_mismatch(self):
        with pytest.raises(ShapeError):
            train(tiny_set(), EncoderConfig(tile_size=8, bands=1, blocks=(Block(2),), embed_dim=2), TrainConfig())

    def test_numeric_error_has_coordinates(self):
        params = init_encoder(TINY)
        params["conv0.weight"][:] = 1e308
        with pytest.raises(NumericError, match="epoch=1"):
            train(tiny_set(4), TINY, TrainConfig(margin=1.0, epochs=1, batch_size=2), params=params)


class TestSupervised:
    def inputs(self, n, seed=0):
        rng = np.random.default_rng(seed)
        return rng.normal(size=(n, 4, 4, 1))

    def test_memorizes_two_examples(self):
        x = self.inputs(2)
        # two examples, two classes: smallest valid problem
        cfg = TrainConfig(epochs=300, batch_size=2, learning_rate=1e-2, augmentation="off")
        params, head, rep = train_supervised(x, [0, 1], TINY, cfg)
        assert rep.mean_loss[-1] < 0.01
        np.testing.assert_array_equal(predict_supervised(params, head, TINY, x), [0, 1])

    def test_uniform_at_init(self):
        params = init_encoder(TINY)
        head = init_head(2, 4)
        head["cls.weight"][:] = 0
        loss, _, _ = supervised_loss_gradients(params, head, TINY, self.inputs(8), np.arange(8) % 4)
        assert loss == pytest.approx(np.log(4), abs=1e-12)

    def test_head_gradient_fd(self):
        params = init_encoder(TINY)
        head = init_head(2, 3, seed=1)
        x, y = self.inputs(6, 1), np.array([0, 1, 2, 0, 1, 2])
        _, _, hg = supervised_loss_gradients(params, head, TINY, x, y)
        for name, p in head.items():
            for idx in np.ndindex(p.shape):
                old = p[idx]
                p[idx] = old + 1e-6
                lp = supervised_loss_gradients(params, head, TINY, x, y)[0]
                p[idx] = old - 1e-6
                lm = supervised_loss_gradients(params, head, TINY, x, y)[0]
                p[idx] = old
                fd = (lp - lm) / 2e-6
                assert abs(fd - hg[name][idx]) <= 1e-4 * max(abs(fd), abs(hg[name][idx]), 1e-3)

    def test_single_class(self):
        with pytest.raises(ConfigError):
            train_supervised(self.inputs(3), [1, 1, 1], TINY, TrainConfig(augmentation="off"))
