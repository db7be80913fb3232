import numpy as np
import pytest
from conftest import constant_sequence, random_sequence
from oracles import brute_force_dtw

from signscore import quat
from signscore.alignment import (alignment_cost, dtw_align, dtw_align_costs,
                                 motion_gradient)
from signscore.errors import ValidationError
from signscore.motion import MotionSequence


class TestMotionGradient:
    def test_constant_sequence_all_zero(self, tiny_skeleton):
        seq = constant_sequence(tiny_skeleton, quat.from_axis_angle([0.4, 0.1, -0.2]))
        grads = motion_gradient(seq).grads
        assert grads.shape == (10, 6)
        assert np.abs(grads).max() == 0.0

    def test_uniform_rotation_rate(self, tiny_skeleton):
        # 10 degrees per frame about one axis on joint 2: half-angle 5 deg
        step = np.deg2rad(10.0)
        n = 12
        rots = np.broadcast_to(quat.IDENTITY, (n, 6, 4)).copy()
        for t in range(n):
            rots[t, 2] = quat.from_axis_angle([0.0, 0.0, t * step])
        seq = MotionSequence("tiny6", 30.0, rots, np.arange(n) / 30.0)
        grads = motion_gradient(seq).grads
        assert np.abs(grads[:, 2] - step / 2.0).max() <= 1e-9
        others = np.delete(grads, 2, axis=1)
        assert np.abs(others).max() <= 1e-12

    def test_time_reversal_symmetry(self, tiny_skeleton):
        rng = np.random.default_rng(31)
        seq = random_sequence(rng, tiny_skeleton, n_frames=9)
        rev = MotionSequence(seq.skeleton_id, seq.fps, seq.rotations[::-1],
                             seq.timestamps)
        fwd = motion_gradient(seq).grads
        bwd = motion_gradient(rev).grads
        # interior rows mirror; only the replicated boundary row differs
        assert np.abs(fwd[:-1] - bwd[:-1][::-1]).max() <= 1e-12

    def test_too_short_rejected(self, tiny_skeleton):
        seq = constant_sequence(tiny_skeleton, quat.IDENTITY, n_frames=2)
        good = motion_gradient(seq)
        assert good.grads.shape == (2, 6)


class TestDtwAlign:
    def test_identical_sequences_diagonal(self):
        rng = np.random.default_rng(32)
        a = rng.normal(size=(7, 3))
        res = dtw_align(a, a)
        assert res.cost == 0.0
        assert res.path == tuple((i, i) for i in range(7))

    def test_brute_force_equivalence_small_grids(self):
        rng = np.random.default_rng(33)
        for trial in range(200):
            t1 = int(rng.integers(1, 7))
            t2 = int(rng.integers(1, 7))
            sq = rng.uniform(0.0, 1.0, size=(t1, t2))
            # random exact ties to stress the tie-break
            if trial % 3 == 0 and t1 > 1 and t2 > 1:
                sq[rng.integers(t1), rng.integers(t2)] = sq[0, 0]
            res = dtw_align_costs(sq)
            want_path, want_total = brute_force_dtw(sq)
            assert list(res.path) == want_path
            got_total = (res.cost * len(res.path)) ** 2
            assert abs(got_total - want_total) <= 1e-12

    def test_duplicated_row_costs_zero(self):
        rng = np.random.default_rng(34)
        a = rng.normal(size=(6, 4))
        b = np.insert(a, 3, a[3], axis=0)  # duplicate one frame
        res = dtw_align(a, b)
        assert res.cost == 0.0
        steps = [(res.path[k + 1][0] - res.path[k][0],
                  res.path[k + 1][1] - res.path[k][1])
                 for k in range(len(res.path) - 1)]
        assert steps.count((0, 1)) + steps.count((1, 0)) == 1

    def test_path_validity_invariants(self):
        rng = np.random.default_rng(35)
        for _ in range(50):
            t1 = int(rng.integers(1, 12))
            t2 = int(rng.integers(1, 12))
            res = dtw_align_costs(rng.uniform(size=(t1, t2)))
            path = res.path
            assert path[0] == (0, 0)
            assert path[-1] == (t1 - 1, t2 - 1)
            for k in range(1, len(path)):
                di = path[k][0] - path[k - 1][0]
                dj = path[k][1] - path[k - 1][1]
                assert (di, dj) in {(1, 0), (0, 1), (1, 1)}

    def test_cost_never_worse_than_diagonal(self):
        rng = np.random.default_rng(36)
        for _ in range(30):
            t = int(rng.integers(2, 10))
            a = rng.normal(size=(t, 3))
            b = rng.normal(size=(t, 3))
            res = dtw_align(a, b)
            diag_sq = np.sum((a - b) ** 2, axis=1).sum()
            assert (res.cost * len(res.path)) ** 2 <= diag_sq + 1e-12

    def test_symmetric_cost(self):
        rng = np.random.default_rng(37)
        for _ in range(20):
            a = rng.normal(size=(int(rng.integers(2, 9)), 3))
            b = rng.normal(size=(int(rng.integers(2, 9)), 3))
            assert abs(dtw_align(a, b).cost - dtw_align(b, a).cost) <= 1e-12

    def test_empty_rejected(self):
        with pytest.raises(ValidationError):
            dtw_align_costs(np.zeros((0, 3)))

    def test_callable_local_cost(self):
        a = np.array([[0.0], [1.0]])
        b = np.array([[0.0], [1.0], [1.0]])
        res = dtw_align(a, b, local_cost=lambda x, y: abs(float(x[0] - y[0])))
        assert res.cost == 0.0


class TestAlignmentCost:
    def test_self_comparison_zero(self, tiny_skeleton):
        rng = np.random.default_rng(38)
        seq = random_sequence(rng, tiny_skeleton, n_frames=10)
        c_a, result = alignment_cost(seq, seq)
        assert c_a == 0.0
        assert result.path == tuple((i, i) for i in range(10))

    def test_frame_duplication_stretch_exactly_zero(self, tiny_skeleton):
        """Duplicating every frame of a pose-holding reference is a 2x time
        stretch; the gradient rows of the stretch are the reference's rows
        (bitwise) plus extra exact zeros, so the cost is exactly 0."""
        rng = np.random.default_rng(39)
        base = random_sequence(rng, tiny_skeleton, n_frames=6)
        ref = _duplicate_frames(base, 2)
        learner = _duplicate_frames(ref, 2)
        c_a, result = alignment_cost(learner, ref)
        assert c_a == 0.0
        # the path is the stretch map: every reference frame gets matched
        assert sorted(result.correlation) == list(range(learner.n_frames))

    def test_increment_repeated_stretch_near_zero(self, tiny_skeleton):
        """Stretching in the motion-increment domain duplicates the gradient
        signature up to float roundoff in the quaternion accumulation."""
        rng = np.random.default_rng(42)
        ref = random_sequence(rng, tiny_skeleton, n_frames=7)
        stretched = _repeat_increments(ref, 2)
        c_a, result = alignment_cost(stretched, ref)
        assert c_a <= 1e-12
        for t_ref in range(ref.n_frames - 1):
            owners = [tl for tl, tr in result.path if tr == t_ref]
            assert len(owners) >= 2

    def test_noise_monotonicity(self, tiny_skeleton):
        rng = np.random.default_rng(40)
        ref = random_sequence(rng, tiny_skeleton, n_frames=16)
        costs = []
        for sigma in (0.05, 0.1, 0.2):
            noise = rng.normal(0.0, sigma, size=ref.rotations.shape[:2] + (3,))
            noisy = ref.with_rotations(quat.compose(quat.exp_map(noise), ref.rotations))
            costs.append(alignment_cost(noisy, ref)[0])
        clean = alignment_cost(ref, ref)[0]
        assert clean < costs[0] < costs[1] < costs[2]

    def test_skeleton_mismatch_rejected(self, tiny_skeleton, hands32):
        rng = np.random.default_rng(41)
        a = random_sequence(rng, tiny_skeleton)
        b = random_sequence(rng, hands32)
        with pytest.raises(ValidationError):
            alignment_cost(a, b)


def _duplicate_frames(seq, factor):
    rots = np.repeat(seq.rotations, factor, axis=0)
    return MotionSequence(seq.skeleton_id, seq.fps, rots,
                          np.arange(len(rots)) / seq.fps)


def _repeat_increments(seq, factor):
    """Play every frame-to-frame rotation increment ``factor`` times."""
    rots = [seq.rotations[0]]
    for t in range(1, seq.n_frames):
        delta = quat.compose(seq.rotations[t], quat.conjugate(seq.rotations[t - 1]))
        for _ in range(factor):
            rots.append(quat.canonicalize(quat.compose(delta, rots[-1])))
    rots = np.stack(rots)
    return MotionSequence(seq.skeleton_id, seq.fps, rots,
                          np.arange(len(rots)) / seq.fps)
