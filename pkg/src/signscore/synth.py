"""Synthetic gesture generator with a perturbation oracle.

Stands in for the unavailable real dataset: references are slerp curves
through random keyposes with ease-in/out timing, learners are degraded
copies, and every degradation writes its own ground-truth score.

Oracle formulas (constants are this package's choices, not measured
values; every end-to-end claim is made against this oracle):

* smoothness      = 100 * exp(-SMOOTHNESS_DECAY * jitter_sigma)
* completeness    = 100 * (1 - dropped_frames / frames_before_dropout)
* recognizability = 100 * exp(-RECOG_DECAY * mean_joint_error)

where ``mean_joint_error`` averages the injected per-joint systematic
rotation angles over all N joints.  Checkpoint baselines are the
expected per-frame sum of joint log distances implied by the
perturbation (error joints contribute angle/2 each, jitter contributes
E|N(0, sigma^2 I_3)| per joint), which keeps the checkpoint-sum and
per-joint losses on one scale.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import quat
from .errors import ValidationError
from .motion import MotionSequence, ScoredSample
from .scorehead import Score
from .skeleton import default_skeleton
from .training import CheckpointSupervision, EmbedPair, PairSet

__all__ = [
    "SMOOTHNESS_DECAY",
    "RECOG_DECAY",
    "QUALITY_BANDS",
    "GestureSpec",
    "PerturbationParams",
    "SyntheticSample",
    "SynthDataset",
    "random_gesture",
    "generate_reference",
    "perturb_with_oracle",
    "build_dataset",
    "split_ids",
    "pairset_from_samples",
    "supervision_sigma",
]

SMOOTHNESS_DECAY = 4.0
RECOG_DECAY = 1.5
JITTER_MEAN_NORM = 2.0 * np.sqrt(2.0 / np.pi)  # E|N(0, I_3)| for the baseline scale
QUALITY_BANDS = ((90.0, 100.0), (80.0, 90.0), (70.0, 80.0), (60.0, 70.0))


@dataclass(frozen=True)
class GestureSpec:
    keyposes: tuple  # of (N, 4) rotation arrays
    durations: tuple  # frames per segment, len == len(keyposes) - 1
    seed: int
    skeleton_id: str
    fps: float = 30.0

    def __post_init__(self):
        if len(self.keyposes) < 2:
            raise ValidationError("gesture needs at least two keyposes")
        if len(self.durations) != len(self.keyposes) - 1:
            raise ValidationError("need one duration per segment")
        if any(d < 2 for d in self.durations):
            raise ValidationError("segment durations must be >= 2 frames")


@dataclass(frozen=True)
class PerturbationParams:
    jitter: float = 0.0  # log-space Gaussian sigma, radians
    joint_error: float = 0.0  # systematic rotation angle per sampled joint, radians
    error_joints: tuple = ()
    time_warp: float = 1.0  # duration multiplier
    dropout_spans: tuple = ()  # ((start, length), ...) in post-warp frame indices

    def __post_init__(self):
        if self.jitter < 0 or self.joint_error < 0:
            raise ValidationError("perturbation magnitudes must be nonnegative")
        if not 0.5 <= self.time_warp <= 2.0:
            raise ValidationError("time-warp factor must lie in [0.5, 2]")
        if any(l < 0 or s < 0 for s, l in self.dropout_spans):
            raise ValidationError("dropout spans must be nonnegative")


@dataclass(frozen=True)
class SyntheticSample:
    clean: MotionSequence
    perturbed: MotionSequence
    dejitter_target: MotionSequence  # perturbed minus the jitter step
    oracle_scores: Score
    checkpoints: tuple  # ((frame_index, baseline_score), ...)
    params: PerturbationParams


@dataclass(frozen=True)
class SampleRecord:
    sample_id: str
    reference_id: str
    sample: SyntheticSample

    def scored(self):
        return ScoredSample(self.sample.perturbed, self.reference_id,
                            self.sample.oracle_scores.as_array(),
                            self.sample.checkpoints)


@dataclass
class SynthDataset:
    skeleton: "Skeleton"
    references: dict = field(default_factory=dict)
    samples: list = field(default_factory=list)


def _smoothstep(u):
    return u * u * (3.0 - 2.0 * u)


def random_gesture(skel, seed, fps=30.0, n_segments=None, frames_per_segment=(8, 14),
                   max_angle=1.1):
    """Seeded random gesture spec over the given skeleton."""
    rng = np.random.default_rng(seed)
    if isinstance(seed, (int, np.integer)):
        seed_id = int(seed)
    else:  # SeedSequence and friends: derive a stable identifier
        seed_id = int(np.random.default_rng(seed).integers(1 << 31))
    if n_segments is None:
        n_segments = int(rng.integers(6, 9))  # the source domain uses 6-8 segments
    n = skel.n_joints
    keyposes = []
    for _ in range(n_segments + 1):
        axes = rng.normal(size=(n, 3))
        axes /= np.linalg.norm(axes, axis=1, keepdims=True)
        angles = rng.uniform(0.0, max_angle, size=(n, 1))
        keyposes.append(quat.from_axis_angle(axes * angles))
    durations = tuple(int(rng.integers(frames_per_segment[0], frames_per_segment[1] + 1))
                      for _ in range(n_segments))
    return GestureSpec(tuple(keyposes), durations, seed_id, skel.skeleton_id, fps)


def generate_reference(spec):
    """Slerp through the keyposes with ease-in/out timing per segment."""
    frames = []
    for k, dur in enumerate(spec.durations):
        a, b = spec.keyposes[k], spec.keyposes[k + 1]
        for j in range(dur):
            e = _smoothstep(j / dur)
            frames.append(a if e == 0.0 else quat.slerp(a, b, e))
    frames.append(spec.keyposes[-1])
    rotations = np.stack(frames)
    timestamps = np.arange(len(frames)) / spec.fps
    return MotionSequence(spec.skeleton_id, spec.fps, rotations, timestamps)


def segment_boundaries(spec):
    """Frame indices where segments start (alignment checkpoint anchors)."""
    starts = np.concatenate([[0], np.cumsum(spec.durations)[:-1]])
    return [int(s) for s in starts]


def _resample(rotations, n_out):
    t_in = rotations.shape[0]
    if n_out == t_in:
        return rotations.copy()
    pos = np.linspace(0.0, t_in - 1.0, n_out)
    idx = np.minimum(pos.astype(np.int64), t_in - 2)
    frac = pos - idx
    out = np.empty((n_out,) + rotations.shape[1:])
    for k in range(n_out):
        if frac[k] == 0.0:
            out[k] = rotations[idx[k]]
        else:
            out[k] = quat.slerp(rotations[idx[k]], rotations[idx[k] + 1], frac[k])
    return out


def perturb_with_oracle(clean, params, seed, checkpoints=()):
    """Degrade a clean sequence and emit oracle scores for the damage.

    Order of operations: systematic joint errors, time warp (slerp
    resampling), segment dropout, then jitter; the pre-jitter sequence is
    kept as the de-jittering target for smoother training.
    """
    rng = np.random.default_rng(seed)
    rot = clean.rotations.copy()
    t_in, n = rot.shape[0], rot.shape[1]

    for j in params.error_joints:
        if not 0 <= j < n:
            raise ValidationError(f"error joint {j} outside skeleton")
        axis = rng.normal(size=3)
        axis /= np.linalg.norm(axis)
        err = quat.from_axis_angle(axis * params.joint_error)
        rot[:, j] = quat.compose(err, rot[:, j])

    t_warp = max(2, int(round(t_in * params.time_warp)))
    rot = _resample(rot, t_warp)
    scale = (t_warp - 1.0) / (t_in - 1.0)
    marks = sorted({min(int(round(c * scale)), t_warp - 1) for c in checkpoints})

    keep = np.ones(t_warp, dtype=bool)
    for start, length in params.dropout_spans:
        keep[start:start + length] = False
    dropped = int(t_warp - keep.sum())
    if keep.sum() < 2:
        raise ValidationError("dropout removed too many frames")
    rot = rot[keep]
    new_index = np.cumsum(keep) - 1
    marks = sorted({int(new_index[m]) for m in marks if keep[m]})

    fps = clean.fps
    timestamps = np.arange(rot.shape[0]) / fps
    dejitter_target = MotionSequence(clean.skeleton_id, fps, rot, timestamps)

    if params.jitter > 0.0:
        noise = rng.normal(0.0, params.jitter, size=rot.shape[:2] + (3,))
        rot = quat.compose(quat.exp_map(noise), rot)
    perturbed = MotionSequence(clean.skeleton_id, fps, rot, timestamps)

    mean_err = params.joint_error * len(params.error_joints) / n
    oracle = Score(
        smoothness=100.0 * np.exp(-SMOOTHNESS_DECAY * params.jitter),
        completeness=100.0 * (1.0 - dropped / t_warp),
        recognizability=100.0 * np.exp(-RECOG_DECAY * mean_err),
    )
    baseline = (0.5 * params.joint_error * len(params.error_joints)
                + n * params.jitter * JITTER_MEAN_NORM)
    marked = tuple((m, baseline) for m in marks)
    return SyntheticSample(clean=clean, perturbed=perturbed,
                           dejitter_target=dejitter_target, oracle_scores=oracle,
                           checkpoints=marked, params=params)


def _band_perturbation(rng, band, t_warp_frames, n_joints):
    """Solve the oracle formulas backwards so the sample lands in a band."""
    s_smooth = rng.uniform(*band)
    s_complete = rng.uniform(*band)
    s_recog = rng.uniform(*band)
    jitter = -np.log(s_smooth / 100.0) / SMOOTHNESS_DECAY
    drop_frac = 1.0 - s_complete / 100.0
    mean_err = -np.log(s_recog / 100.0) / RECOG_DECAY
    m = min(int(rng.integers(6, 11)), n_joints)
    joints = tuple(int(j) for j in rng.choice(n_joints, size=m, replace=False))
    joint_error = min(mean_err * n_joints / m, 0.9 * np.pi)
    warp = float(rng.uniform(0.85, 1.2))
    t_warp = max(2, int(round(t_warp_frames * warp)))
    n_drop = int(round(drop_frac * t_warp))
    spans = ()
    if n_drop > 0:
        start = int(rng.integers(0, t_warp - n_drop + 1))
        spans = ((start, n_drop),)
    return PerturbationParams(jitter=jitter, joint_error=joint_error,
                              error_joints=joints, time_warp=warp,
                              dropout_spans=spans)


def build_dataset(n_references, per_reference=4, seed=0, skeleton=None, fps=30.0,
                  total=None):
    """n references, each with learners cycling through the quality bands
    (90-100, 80-90, 70-80, 60-70).  Fully deterministic given the seed."""
    if n_references < 1:
        raise ValidationError("need at least one reference")
    skel = skeleton or default_skeleton()
    root = np.random.SeedSequence(seed)
    ref_seeds, sample_seeds = root.spawn(2)
    ref_children = ref_seeds.spawn(n_references)
    limit = n_references * per_reference if total is None else int(total)
    sample_children = sample_seeds.spawn(limit)

    ds = SynthDataset(skeleton=skel)
    specs = {}
    for r in range(n_references):
        rid = f"ref{r:03d}"
        spec = random_gesture(skel, ref_children[r], fps=fps)
        specs[rid] = spec
        ds.references[rid] = generate_reference(spec)

    for i in range(limit):
        rid = f"ref{i // per_reference:03d}"
        band = QUALITY_BANDS[i % len(QUALITY_BANDS)]
        rng = np.random.default_rng(sample_children[i])
        clean = ds.references[rid]
        params = _band_perturbation(rng, band, clean.n_frames, skel.n_joints)
        sample = perturb_with_oracle(clean, params, sample_children[i].spawn(1)[0],
                                     checkpoints=segment_boundaries(specs[rid]))
        ds.samples.append(SampleRecord(f"s{i:04d}", rid, sample))
    return ds


def split_ids(sample_ids, n_train, seed):
    """Deterministic shuffled train/test split of sample ids."""
    ids = sorted(sample_ids)
    if not 0 < n_train < len(ids):
        raise ValidationError(f"n_train must lie strictly inside (0, {len(ids)})")
    rng = np.random.default_rng(np.random.SeedSequence((seed, 0x5917)))
    order = rng.permutation(len(ids))
    train = sorted(ids[i] for i in order[:n_train])
    test = sorted(ids[i] for i in order[n_train:])
    return {"train": train, "test": test}


def supervision_sigma(n_frames, n_checkpoints):
    """Gaussian decay width: the mean checkpoint spacing, floored.

    Spacing-wide Gaussians keep the decayed target near the baseline
    between checkpoints, where the injected differences persist; much
    narrower windows would ask the weight sum to collapse to zero mid-
    segment and fight the per-joint distance loss."""
    return max(2.0, n_frames / max(1, n_checkpoints))


def pairset_from_samples(records, references, seed=0, negative_every=2):
    """PairSet for embedding training: every record forms a positive pair
    with its own reference; every ``negative_every``-th record also forms
    a negative pair with a different reference (no checkpoint
    supervision, matching how only positive pairs carry annotations)."""
    if not records:
        raise ValidationError("no records to build pairs from")
    rng = np.random.default_rng(np.random.SeedSequence((seed, 0x9a17)))
    get_ref = references.get if hasattr(references, "get") else references.__getitem__
    ref_ids = sorted(references.ids if hasattr(references, "ids") else references.keys())
    positives, negatives = [], []
    for k, rec in enumerate(records):
        motion, rid, checkpoints = _record_fields(rec)
        ref = get_ref(rid)
        sup = None
        if checkpoints:
            sup = CheckpointSupervision(tuple(checkpoints),
                                        supervision_sigma(motion.n_frames, len(checkpoints)))
        positives.append(EmbedPair(motion, ref, sup))
        others = [r for r in ref_ids if r != rid]
        if others and k % negative_every == 0:
            other = others[int(rng.integers(0, len(others)))]
            negatives.append(EmbedPair(motion, get_ref(other), None))
    return PairSet(positives=positives, negatives=negatives)


def _record_fields(rec):
    if isinstance(rec, SampleRecord):
        return rec.sample.perturbed, rec.reference_id, rec.sample.checkpoints
    # a motion.ScoredSample
    return rec.motion, rec.reference_id, rec.checkpoints
