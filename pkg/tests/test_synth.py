import numpy as np
import pytest

from signscore import quat, synth
from signscore.errors import ValidationError
from signscore.synth import (GestureSpec, PerturbationParams, build_dataset,
                             generate_reference, pairset_from_samples,
                             perturb_with_oracle, random_gesture,
                             segment_boundaries, split_ids)


class TestGenerateReference:
    def test_identical_keyposes_constant(self, tiny_skeleton):
        rng = np.random.default_rng(110)
        pose = quat.canonicalize(rng.normal(size=(6, 4)))
        spec = GestureSpec((pose, pose.copy()), (10,), 0, "tiny6", fps=30.0)
        seq = generate_reference(spec)
        assert seq.n_frames == 11
        assert np.abs(seq.rotations - pose).max() <= 1e-12

    def test_midframe_is_geodesic_midpoint(self, tiny_skeleton):
        a = np.broadcast_to(quat.IDENTITY, (6, 4)).copy()
        b = a.copy()
        b[2] = quat.from_axis_angle([0.0, 0.0, np.pi / 2])
        spec = GestureSpec((a, b), (10,), 0, "tiny6", fps=30.0)
        seq = generate_reference(spec)
        # ease-in/out hits 0.5 exactly at the segment midpoint
        mid = seq.rotations[5, 2]
        want = quat.from_axis_angle([0.0, 0.0, np.pi / 4])
        assert np.abs(mid - want).max() <= 1e-9

    def test_seed_determinism(self, tiny_skeleton):
        a = generate_reference(random_gesture(tiny_skeleton, 42))
        b = generate_reference(random_gesture(tiny_skeleton, 42))
        assert np.array_equal(a.rotations, b.rotations)

    def test_validation(self, tiny_skeleton):
        rng = np.random.default_rng(111)
        pose = quat.canonicalize(rng.normal(size=(6, 4)))
        with pytest.raises(ValidationError):
            GestureSpec((pose,), (), 0, "tiny6")
        with pytest.raises(ValidationError):
            GestureSpec((pose, pose), (1,), 0, "tiny6")


class TestPerturbWithOracle:
    def test_zero_perturbation_identity(self, tiny_skeleton):
        clean = generate_reference(random_gesture(tiny_skeleton, 1))
        sample = perturb_with_oracle(clean, PerturbationParams(), seed=5)
        assert np.array_equal(sample.perturbed.rotations, clean.rotations)
        assert sample.oracle_scores.as_array().tolist() == [100.0, 100.0, 100.0]

    def test_dropout_fraction_exact(self, tiny_skeleton):
        clean = generate_reference(random_gesture(tiny_skeleton, 2))
        t = clean.n_frames
        n_drop = t // 5
        params = PerturbationParams(dropout_spans=((3, n_drop),))
        sample = perturb_with_oracle(clean, params, seed=6)
        want = 100.0 * (1.0 - n_drop / t)
        assert sample.oracle_scores.completeness == want
        assert sample.perturbed.n_frames == t - n_drop

    def test_jitter_monotone_smoothness(self, tiny_skeleton):
        clean = generate_reference(random_gesture(tiny_skeleton, 3))
        scores = []
        for sigma in (0.01, 0.03, 0.06, 0.1, 0.15):
            s = perturb_with_oracle(clean, PerturbationParams(jitter=sigma), seed=7)
            scores.append(s.oracle_scores.smoothness)
        assert all(a > b for a, b in zip(scores, scores[1:]))

    def test_joint_error_drives_recognizability(self, tiny_skeleton):
        clean = generate_reference(random_gesture(tiny_skeleton, 4))
        params = PerturbationParams(joint_error=0.4, error_joints=(1, 4))
        sample = perturb_with_oracle(clean, params, seed=8)
        want = 100.0 * np.exp(-synth.RECOG_DECAY * 0.4 * 2 / 6)
        assert abs(sample.oracle_scores.recognizability - want) <= 1e-12
        # systematic error shows up in the log distances of those joints
        from signscore.embedding import pair_log_distance

        d = pair_log_distance(sample.perturbed.rotations[0], clean.rotations[0])
        assert d[1] > 0.15 and d[4] > 0.15

    def test_time_warp_changes_length(self, tiny_skeleton):
        clean = generate_reference(random_gesture(tiny_skeleton, 5))
        sample = perturb_with_oracle(clean, PerturbationParams(time_warp=1.5), seed=9)
        assert sample.perturbed.n_frames == int(round(clean.n_frames * 1.5))
        # warp alone does not touch the oracle scores
        assert sample.oracle_scores.as_array().tolist() == [100.0, 100.0, 100.0]

    def test_dejitter_target_is_prejitter(self, tiny_skeleton):
        clean = generate_reference(random_gesture(tiny_skeleton, 6))
        params = PerturbationParams(jitter=0.05, joint_error=0.3, error_joints=(2,))
        sample = perturb_with_oracle(clean, params, seed=10)
        assert sample.dejitter_target.n_frames == sample.perturbed.n_frames
        assert not np.array_equal(sample.dejitter_target.rotations,
                                  sample.perturbed.rotations)
        # the target carries the systematic error but no jitter
        from signscore.embedding import pair_log_distance

        d = pair_log_distance(sample.dejitter_target.rotations[0], clean.rotations[0])
        assert d[2] > 0.1

    def test_warp_validation(self):
        with pytest.raises(ValidationError):
            PerturbationParams(time_warp=3.0)

    def test_checkpoints_remapped(self, tiny_skeleton):
        spec = random_gesture(tiny_skeleton, 7)
        clean = generate_reference(spec)
        marks = segment_boundaries(spec)
        sample = perturb_with_oracle(clean, PerturbationParams(time_warp=0.9),
                                     seed=11, checkpoints=marks)
        idxs = [t for t, _ in sample.checkpoints]
        assert idxs == sorted(set(idxs))
        assert all(0 <= t < sample.perturbed.n_frames for t in idxs)


class TestBuildDataset:
    def test_one_reference_four_bands(self, tiny_skeleton):
        ds = build_dataset(1, per_reference=4, seed=3, skeleton=tiny_skeleton)
        assert len(ds.samples) == 4
        means = [rec.sample.oracle_scores.mean for rec in ds.samples]
        for mean, band in zip(means, synth.QUALITY_BANDS):
            assert band[0] - 1.0 <= mean <= band[1] + 1.0

    def test_reproducible(self, tiny_skeleton):
        a = build_dataset(2, seed=9, skeleton=tiny_skeleton)
        b = build_dataset(2, seed=9, skeleton=tiny_skeleton)
        for ra, rb in zip(a.samples, b.samples):
            assert np.array_equal(ra.sample.perturbed.rotations,
                                  rb.sample.perturbed.rotations)
            assert ra.sample.oracle_scores == rb.sample.oracle_scores

    def test_band_coverage(self, tiny_skeleton):
        ds = build_dataset(3, per_reference=4, seed=12, skeleton=tiny_skeleton)
        bands_hit = set()
        for rec in ds.samples:
            m = rec.sample.oracle_scores.mean
            for lo, hi in synth.QUALITY_BANDS:
                if lo - 1.0 <= m <= hi + 1.0:
                    bands_hit.add((lo, hi))
                    break
        assert len(bands_hit) == 4

    def test_total_trims(self, tiny_skeleton):
        ds = build_dataset(3, per_reference=4, seed=13, skeleton=tiny_skeleton,
                           total=10)
        assert len(ds.samples) == 10

    def test_sequences_validate(self, tiny_skeleton):
        ds = build_dataset(1, seed=14, skeleton=tiny_skeleton)
        for rec in ds.samples:
            seq = rec.sample.perturbed
            assert np.abs(np.linalg.norm(seq.rotations, axis=-1) - 1.0).max() <= 1e-9
            assert np.all(np.diff(seq.timestamps) > 0)
            assert 0.0 <= rec.sample.oracle_scores.mean <= 100.0


class TestSplitAndPairs:
    def test_split_deterministic_and_disjoint(self):
        ids = [f"s{i:03d}" for i in range(20)]
        a = split_ids(ids, 15, seed=4)
        b = split_ids(ids, 15, seed=4)
        assert a == b
        assert len(a["train"]) == 15
        assert set(a["train"]) | set(a["test"]) == set(ids)
        assert not set(a["train"]) & set(a["test"])

    def test_pairset_roles(self, tiny_skeleton):
        ds = build_dataset(2, per_reference=2, seed=15, skeleton=tiny_skeleton)
        pairs = pairset_from_samples(ds.samples, ds.references, seed=0)
        assert len(pairs.positives) == 4
        assert len(pairs.negatives) == 2
        for p in pairs.positives:
            assert p.supervision is not None
        for p in pairs.negatives:
            assert p.supervision is None
