import numpy as np
import pytest
from conftest import random_quats, random_sequence
from oracles import finite_difference_gradients, relative_error

from signscore import quat
from signscore.embedding import EmbedModel
from signscore.errors import ValidationError
from signscore.motion import MotionSequence
from signscore.optim import Adam, SGD, TrainConfig
from signscore.scorehead import FeatureVector, Score, ScoreHead
from signscore.smoothing import SmootherModel
from signscore.training import (CheckpointSupervision, EmbedPair, PairSet,
                                checkpoint_weight, loss_embedding, loss_score,
                                train_embedding, train_scorehead)


class TestCheckpointWeight:
    def test_peak_value(self):
        sup = CheckpointSupervision(((10, 3.5),), sigma=4.0)
        assert checkpoint_weight(10, sup) == 3.5

    def test_one_sigma_decay(self):
        sup = CheckpointSupervision(((10, 2.0),), sigma=4.0)
        want = 2.0 * np.exp(-0.5)
        assert abs(checkpoint_weight(14, sup) - want) <= 1e-12

    def test_two_checkpoints_max_not_sum(self):
        sup = CheckpointSupervision(((0, 2.0), (10, 4.0)), sigma=5.0)
        t = 5
        direct = max(2.0 * np.exp(-(5 - 0) ** 2 / 50.0),
                     4.0 * np.exp(-(5 - 10) ** 2 / 50.0))
        assert abs(checkpoint_weight(t, sup) - direct) <= 1e-12
        assert checkpoint_weight(t, sup) < 2.0 * np.exp(-0.5) + 4.0 * np.exp(-0.5)

    def test_validation(self):
        with pytest.raises(ValidationError):
            CheckpointSupervision((), sigma=1.0)
        with pytest.raises(ValidationError):
            CheckpointSupervision(((0, 1.0),), sigma=0.0)


def _identity_pair(skel, n_frames=8):
    rots = np.broadcast_to(quat.IDENTITY, (n_frames, skel.n_joints, 4)).copy()
    seq = MotionSequence(skel.skeleton_id, 30.0, rots, np.arange(n_frames) / 30.0)
    return EmbedPair(seq, seq, None)


class TestLossEmbedding:
    def test_zero_case(self, tiny_skeleton):
        """learner == reference, zero-output model, zero targets."""
        model = EmbedModel(tiny_skeleton, d_model=8, n_heads=2, seed=0)
        pair = _identity_pair(tiny_skeleton)
        sup = CheckpointSupervision(((0, 0.0), (4, 0.0)), sigma=2.0)
        batch = PairSet(positives=[EmbedPair(pair.learner, pair.reference, sup)])
        out = loss_embedding(batch, model)
        assert out["l_s"] == 0.0
        assert out["l_t"] == 0.0
        assert out["l_d"] == 0.0

    def test_direct_arithmetic_single_frame(self, tiny_skeleton):
        """w summed against target: |(sum w) - target| per frame."""
        model = EmbedModel(tiny_skeleton, d_model=8, n_heads=2, seed=1)
        model.params["head_w"].data[:] = 0.0
        model.params["head_b"].data[:] = 0.5  # every w_i = 0.5, sum = 3.0
        pair = _identity_pair(tiny_skeleton, n_frames=2)
        sup = CheckpointSupervision(((0, 2.0), (1, 2.0)), sigma=1e9)
        batch = PairSet(positives=[EmbedPair(pair.learner, pair.reference, sup)])
        out = loss_embedding(batch, model)
        # both frames: |3.0 - 2.0| = 1; L_s sums over frames -> 2
        assert abs(out["l_s"] - 2.0) <= 1e-9
        # L_t: 6 joints * 2 frames * (0.5 - 0)^2
        assert abs(out["l_t"] - 12 * 0.25) <= 1e-9

    def test_gradients_match_finite_differences(self, tiny_skeleton):
        rng = np.random.default_rng(101)
        model = EmbedModel(tiny_skeleton, d_model=8, n_heads=2, seed=2)
        model.params["head_w"].data[:] = rng.normal(0.0, 0.3, (8, 1))
        learner = random_sequence(rng, tiny_skeleton, n_frames=5)
        reference = random_sequence(rng, tiny_skeleton, n_frames=5)
        sup = CheckpointSupervision(((1, 1.0), (3, 0.5)), sigma=2.0)
        batch = PairSet(positives=[EmbedPair(learner, reference, sup)],
                        negatives=[EmbedPair(learner, reference, None)])

        out = loss_embedding(batch, model)
        analytic = out["gradients"]

        def total():
            res = loss_embedding(batch, model)
            return res["l_d"]

        probe = np.random.default_rng(1010)
        names = list(model.params)
        indices = []
        for _ in range(120):
            name = names[int(probe.integers(0, len(names)))]
            indices.append((name, int(probe.integers(0, model.params[name].data.size))))
        fd = finite_difference_gradients(total,
                                         {n: t.data for n, t in model.params.items()},
                                         indices)
        got = np.array([analytic[n].flat[i] for n, i in indices])
        assert relative_error(got, fd).max() <= 1e-4

    def test_empty_batch_rejected(self, tiny_skeleton):
        model = EmbedModel(tiny_skeleton, d_model=8, n_heads=2, seed=3)
        with pytest.raises(ValidationError):
            loss_embedding([], model)
        with pytest.raises(ValidationError):
            PairSet(positives=[], negatives=[])


class TestLossScore:
    def test_equal_constant_scores_give_log2_rank_loss(self):
        head = ScoreHead(2, seed=5)
        head.params["w1"].data[:] = 0.0
        head.params["w2"].data[:] = 0.0
        head.params["b2"].data[:] = 70.0
        batch = [(FeatureVector(0.1, 0.2), Score(70.0, 70.0, 70.0)),
                 (FeatureVector(0.3, 0.1), Score(70.0, 70.0, 70.0))]
        out = loss_score(batch, head)
        assert out["l_score"] == 0.0
        # zero margins and zero signs: every pair term is log(2)
        assert abs(out["l_rank"] - np.log(2.0)) <= 1e-12
        assert not out["rank_skipped"]

    def test_saturated_correct_ordering_vanishes(self):
        head = ScoreHead(2, seed=6)
        head.params["w1"].data[:] = 0.0
        head.params["w2"].data[:] = 0.0
        feats = [FeatureVector(0.1, 0.1), FeatureVector(0.2, 0.2)]
        # predictions are both b2; emulate perfect large-margin ordering by
        # checking the loss formula directly on ordered targets
        head.params["b2"].data[:] = 0.0
        batch = list(zip(feats, (Score(0.0, 0.0, 0.0), Score(100.0, 100.0, 100.0))))
        out = loss_score(batch, head)
        # margins are 0 here; the analytic zero-margin value is log 2
        assert abs(out["l_rank"] - np.log(2.0)) <= 1e-12

    def test_rank_term_skipped_for_singleton(self):
        head = ScoreHead(2, seed=7)
        out = loss_score([(FeatureVector(0.1, 0.2), Score(50.0, 50.0, 50.0))], head)
        assert out["rank_skipped"]
        assert out["l_rank"] == 0.0

    def test_gradients_match_finite_differences(self):
        rng = np.random.default_rng(102)
        head = ScoreHead(3, seed=8)
        head.set_normalization(rng.uniform(0.1, 1.0, size=(12, 3)))
        batch = [(FeatureVector(*rng.uniform(0.1, 1.0, 3)),
                  Score(*rng.uniform(10.0, 95.0, 3))) for _ in range(5)]
        out = loss_score(batch, head)
        analytic = out["gradients"]

        probe = np.random.default_rng(1020)
        indices = []
        for name, t in head.params.items():
            for flat in probe.choice(t.data.size, size=min(12, t.data.size),
                                     replace=False):
                indices.append((name, int(flat)))
        fd = finite_difference_gradients(
            lambda: loss_score(batch, head)["total"],
            {n: t.data for n, t in head.params.items()}, indices)
        got = np.array([analytic[n].flat[i] for n, i in indices])
        assert relative_error(got, fd).max() <= 1e-4

    def test_large_margin_rank_loss_saturates(self):
        head = ScoreHead(2, seed=9)
        rng = np.random.default_rng(103)
        feats = np.array([[0.1, 0.1], [2.0, 2.0]])
        head.set_normalization(feats)
        # train to produce strongly separated outputs, then the rank term
        # must approach zero for correctly ordered pairs
        batch = [(FeatureVector(0.1, 0.1), Score(90.0, 90.0, 90.0)),
                 (FeatureVector(2.0, 2.0), Score(10.0, 10.0, 10.0))]
        cfg = TrainConfig(learning_rate=0.05, epochs=400, batch_size=2, seed=1)
        head, _ = train_scorehead(batch, cfg, n_features=2)
        out = loss_score(batch, head)
        assert out["l_rank"] <= 0.05


class TestOptimizers:
    def test_step_scale_is_order_learning_rate(self):
        rng = np.random.default_rng(104)
        from signscore.autodiff import Tensor

        for make in (lambda lr: SGD(lr), lambda lr: Adam(lr)):
            params = {"w": Tensor(rng.normal(size=(4, 4)), True)}
            params["w"].grad = rng.normal(size=(4, 4))
            before = params["w"].data.copy()
            opt = make(1e-9)
            opt.step(params)
            delta = np.abs(params["w"].data - before).max()
            assert 0.0 < delta <= 1e-7  # no hidden-state blowup

    def test_adam_moments_keyed_by_name(self):
        from signscore.autodiff import Tensor

        opt = Adam(0.1)
        params = {"a": Tensor(np.zeros(3), True)}
        params["a"].grad = np.ones(3)
        opt.step(params)
        assert "a" in opt._m

    def test_config_validation(self):
        with pytest.raises(ValidationError):
            TrainConfig(learning_rate=0.0)
        with pytest.raises(ValidationError):
            TrainConfig(optimizer="lion")
        with pytest.raises(ValidationError):
            TrainConfig.from_json({"learning_rate": 0.1, "bogus": 1})


class TestTrainLoops:
    def test_same_seed_bit_identical_traces(self, tiny_skeleton):
        rng = np.random.default_rng(105)
        pairs = _small_pairset(rng, tiny_skeleton)
        cfg = TrainConfig(learning_rate=0.01, epochs=3, batch_size=2, seed=11)
        _, trace_a = train_embedding(pairs, cfg, tiny_skeleton)
        _, trace_b = train_embedding(pairs, cfg, tiny_skeleton)
        assert trace_a == trace_b

    def test_frozen_smoother_contract(self, tiny_skeleton):
        rng = np.random.default_rng(106)
        pairs = _small_pairset(rng, tiny_skeleton, n_frames=10)
        smoother = SmootherModel.savgol_fallback(4)
        snapshot = {name: getattr(smoother, name).copy()
                    for name in ("pos_w", "vel_w", "acc_w", "fusion")}
        cfg = TrainConfig(learning_rate=0.01, epochs=2, batch_size=2, seed=12)
        train_embedding(pairs, cfg, tiny_skeleton, smoother=smoother)
        for name, before in snapshot.items():
            assert np.array_equal(getattr(smoother, name), before)

    def test_scorehead_training_determinism(self):
        rng = np.random.default_rng(107)
        batch = [(FeatureVector(*rng.uniform(0.1, 1.0, 2)),
                  Score(*rng.uniform(20.0, 90.0, 3))) for _ in range(8)]
        cfg = TrainConfig(learning_rate=0.02, epochs=5, batch_size=4, seed=13)
        _, ta = train_scorehead(batch, cfg, n_features=2)
        _, tb = train_scorehead(batch, cfg, n_features=2)
        assert ta == tb


def _small_pairset(rng, skel, n_frames=6):
    positives = []
    for _ in range(2):
        learner = random_sequence(rng, skel, n_frames=n_frames)
        reference = random_sequence(rng, skel, n_frames=n_frames)
        sup = CheckpointSupervision(((0, 0.5), (n_frames - 1, 0.5)), sigma=2.0)
        positives.append(EmbedPair(learner, reference, sup))
    negatives = [EmbedPair(positives[0].learner, positives[1].reference, None)]
    return PairSet(positives=positives, negatives=negatives)
