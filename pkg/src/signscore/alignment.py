"""Temporal alignment: motion gradients and dynamic time warping.

The local grid holds squared local distances; the dynamic program
minimizes their running sum over monotone paths with steps
{(1,0), (0,1), (1,1)} and the reported cost is sqrt(total) / path_length.
Traceback tie-break on equal accumulated cost: diagonal first, then the
(1,0) step, then (0,1) -- fixed so paths are reproducible.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import quat
from ._kernels import dtw_accumulate
from .errors import ValidationError

__all__ = [
    "GradientSequence",
    "AlignmentResult",
    "motion_gradient",
    "dtw_align",
    "dtw_align_costs",
    "alignment_cost",
    "dtw_frame_pairs",
]


@dataclass(frozen=True)
class GradientSequence:
    """Per-frame per-joint angular-speed magnitudes (radians/frame), (T, N)."""

    grads: np.ndarray


@dataclass(frozen=True)
class AlignmentResult:
    path: tuple  # ((t_learner, t_reference), ...) from (0,0) to (T1-1, T2-1)
    cost: float  # sqrt(sum of squared local costs along path) / len(path)
    correlation: dict  # learner frame -> tuple of matched reference frames

    @property
    def total_squared(self):
        # reconstructable, kept for diagnostics
        return (self.cost * len(self.path)) ** 2


def motion_gradient(seq):
    """Half-angle magnitudes of frame-to-frame relative rotations.

    Row t holds |log(q(t+1) * q(t)^-1)| per joint; the final row is
    replicated from t = T-2 so the output length matches the sequence.
    """
    if seq.n_frames < 2:
        raise ValidationError("motion gradient needs T >= 2 frames")
    rel = quat.compose(seq.rotations[1:], quat.conjugate(seq.rotations[:-1]))
    mags = np.linalg.norm(quat.log_map(quat.canonicalize(rel)), axis=-1)
    # bitwise-equal consecutive frames have the identity relative rotation;
    # evaluate that case exactly so held poses contribute true zeros
    same = np.all(seq.rotations[1:] == seq.rotations[:-1], axis=-1)
    mags = np.where(same, 0.0, mags)
    return GradientSequence(np.concatenate([mags, mags[-1:]], axis=0))


def _local_sq_costs(a, b):
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.ndim == 1:
        a = a[:, None]
    if b.ndim == 1:
        b = b[:, None]
    if a.ndim != 2 or b.ndim != 2 or a.shape[1] != b.shape[1]:
        raise ValidationError(
            f"feature matrices must share their feature dimension, got {a.shape} vs {b.shape}"
        )
    if a.shape[0] < 1 or b.shape[0] < 1:
        raise ValidationError("cannot align an empty sequence")
    diff = a[:, None, :] - b[None, :, :]
    return np.einsum("ijk,ijk->ij", diff, diff)


def _traceback(acc):
    t1, t2 = acc.shape
    i, j = t1 - 1, t2 - 1
    path = [(i, j)]
    while i > 0 or j > 0:
        if i == 0:
            j -= 1
        elif j == 0:
            i -= 1
        else:
            diag = acc[i - 1, j - 1]
            up = acc[i - 1, j]
            left = acc[i, j - 1]
            best = min(diag, up, left)
            if diag == best:
                i -= 1
                j -= 1
            elif up == best:
                i -= 1
            else:
                j -= 1
        path.append((i, j))
    path.reverse()
    return tuple(path)


def dtw_align_costs(sq_costs):
    """Run the dynamic program on a precomputed squared-local-cost grid."""
    sq_costs = np.ascontiguousarray(sq_costs, dtype=np.float64)
    if sq_costs.ndim != 2 or sq_costs.size == 0:
        raise ValidationError("cost grid must be a nonempty 2-d array")
    acc = dtw_accumulate(sq_costs)
    path = _traceback(acc)
    total = float(acc[-1, -1])
    cost = float(np.sqrt(max(total, 0.0)) / len(path))
    correlation = {}
    for ti, tj in path:
        correlation.setdefault(ti, []).append(tj)
    correlation = {t: tuple(v) for t, v in correlation.items()}
    return AlignmentResult(path=path, cost=cost, correlation=correlation)


def dtw_align(a, b, local_cost="euclidean"):
    """Align two feature matrices (T1, F) and (T2, F).

    ``local_cost`` is ``"euclidean"`` or a callable d(row_a, row_b); the
    dynamic program always accumulates squared local distances.
    """
    if callable(local_cost):
        a = np.atleast_2d(np.asarray(a, dtype=np.float64))
        b = np.atleast_2d(np.asarray(b, dtype=np.float64))
        if a.shape[0] < 1 or b.shape[0] < 1:
            raise ValidationError("cannot align an empty sequence")
        grid = np.empty((a.shape[0], b.shape[0]))
        for i in range(a.shape[0]):
            for j in range(b.shape[0]):
                grid[i, j] = local_cost(a[i], b[j]) ** 2
    elif local_cost == "euclidean":
        grid = _local_sq_costs(a, b)
    else:
        raise ValidationError(f"unknown local cost {local_cost!r}")
    return dtw_align_costs(grid)


def alignment_cost(learner, reference, mode="gradient", embed_model=None):
    """Gradient-DTW alignment cost between two sequences (pass smoothed
    sequences; jitter leaks straight into the gradient features).

    ``mode="gradient"`` aligns angular-speed feature rows under euclidean
    local cost; ``mode="embedding"`` scores each frame pair with the
    learned embedding distance instead.
    """
    if learner.skeleton_id != reference.skeleton_id:
        raise ValidationError(
            f"skeleton mismatch: {learner.skeleton_id!r} vs {reference.skeleton_id!r}"
        )
    if learner.n_joints != reference.n_joints:
        raise ValidationError("sequences disagree on joint count")
    if mode == "gradient":
        ga = motion_gradient(learner).grads
        gb = motion_gradient(reference).grads
        result = dtw_align(ga, gb, "euclidean")
    elif mode == "embedding":
        if embed_model is None:
            raise ValidationError("embedding local cost needs an embed model")
        from . import embedding  # local import, avoids a cycle

        grid = embedding.pairwise_embedding_distance(learner, reference, embed_model)
        result = dtw_align_costs(grid**2)
    else:
        raise ValidationError(f"unknown alignment mode {mode!r}")
    return result.cost, result


def dtw_frame_pairs(learner, reference):
    """Gradient-DTW warping path as parallel (learner, reference) index arrays."""
    _, result = alignment_cost(learner, reference, mode="gradient")
    path = np.asarray(result.path, dtype=np.int64)
    return path[:, 0], path[:, 1]
