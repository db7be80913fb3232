"""Losses and optimization for the embedding model and the score head.

All gradients come from the in-project reverse-mode autodiff engine;
central finite differences are the test oracle, never the production
path.  Training is deterministic given the config seed: seeded
initialization, seeded batch order, fixed reduction order.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import alignment, smoothing
from .autodiff import Tensor, gather, softplus
from .embedding import EmbedModel, pair_log_distance
from .errors import ValidationError
from .optim import TrainConfig, check_finite, make_optimizer, zero_grads
from .scorehead import ScoreHead

__all__ = [
    "CheckpointSupervision",
    "EmbedPair",
    "PairSet",
    "checkpoint_weight",
    "checkpoint_targets",
    "loss_embedding",
    "loss_score",
    "train_embedding",
    "train_scorehead",
]


@dataclass(frozen=True)
class CheckpointSupervision:
    """Checkpoint frame indices with baseline scores and a Gaussian decay
    width (frames)."""

    checkpoints: tuple  # ((frame_index, baseline_score), ...)
    sigma: float

    def __post_init__(self):
        if not self.sigma > 0:
            raise ValidationError("supervision decay sigma must be positive")
        if not self.checkpoints:
            raise ValidationError("supervision needs at least one checkpoint")
        object.__setattr__(
            self, "checkpoints",
            tuple((int(t), float(s)) for t, s in self.checkpoints))
        for t, s in self.checkpoints:
            if t < 0 or not np.isfinite(s):
                raise ValidationError("checkpoints must have valid index and finite score")


def checkpoint_weight(t, sup):
    """Decayed target at frame t: the *maximum* over checkpoints of
    s * exp(-(t - t_c)^2 / (2 sigma^2)); the nearest checkpoint dominates
    instead of overlapping windows summing past their baselines."""
    return float(checkpoint_targets(np.array([t]), sup)[0])


def checkpoint_targets(frames, sup):
    frames = np.asarray(frames, dtype=np.float64)
    vals = np.stack([
        s * np.exp(-((frames - t) ** 2) / (2.0 * sup.sigma**2))
        for t, s in sup.checkpoints
    ])
    return vals.max(axis=0)


@dataclass(frozen=True)
class EmbedPair:
    learner: "MotionSequence"
    reference: "MotionSequence"
    supervision: CheckpointSupervision | None = None


@dataclass
class PairSet:
    """Positive pairs (same action, different quality, with checkpoint
    supervision) and negative pairs (different actions, distance
    supervision only)."""

    positives: list = field(default_factory=list)
    negatives: list = field(default_factory=list)

    def __post_init__(self):
        if not self.positives and not self.negatives:
            raise ValidationError("pair set is empty")
        shapes = {(p.learner.n_joints, p.reference.n_joints) for p in self.all_pairs}
        if any(a != b for a, b in shapes) or len({a for a, _ in shapes}) != 1:
            raise ValidationError("all pairs must share one joint count")

    @property
    def all_pairs(self):
        return list(self.positives) + list(self.negatives)


def _pair_frame_data(pair, model, path=None):
    """Topo-ordered rotations along the warping path plus loss targets."""
    if path is None:
        path = alignment.dtw_frame_pairs(pair.learner, pair.reference)
    idx_l, idx_r = path
    order = model.topo_order
    rot_l = pair.learner.rotations[idx_l][:, order]
    rot_r = pair.reference.rotations[idx_r][:, order]
    d = pair_log_distance(rot_l, rot_r)  # (K, N)
    targets = (checkpoint_targets(idx_l, pair.supervision)
               if pair.supervision is not None else None)
    return rot_l, rot_r, d, targets


def _embedding_loss_graph(pairs, model, paths=None):
    """Build the batched L_s/L_t graph; returns (loss, l_s value, l_t value)."""
    datas = []
    for i, pair in enumerate(pairs):
        path = None if paths is None else paths[i]
        datas.append(_pair_frame_data(pair, model, path))
    rot_l = np.concatenate([d[0] for d in datas], axis=0)
    rot_r = np.concatenate([d[1] for d in datas], axis=0)
    w = model.forward_pairs(rot_l, rot_r)  # (B, N)

    inv = 1.0 / len(datas)
    l_s = None
    l_t = None
    start = 0
    for rot, _, d, targets in datas:
        k = rot.shape[0]
        wk = w[start:start + k]
        start += k
        lt_term = ((wk - d) ** 2).sum() * inv
        l_t = lt_term if l_t is None else l_t + lt_term
        if targets is not None:
            ls_term = (wk.sum(axis=1) - targets).abs().sum() * inv
            l_s = ls_term if l_s is None else l_s + ls_term
    if l_s is None:
        l_s = Tensor(0.0)
    loss = l_s + l_t
    return loss, float(l_s.data), float(l_t.data)


def loss_embedding(batch, model, paths=None):
    """Checkpoint-sum loss L_s, per-joint distance loss L_t, their sum,
    and exact parameter gradients for a pair batch.

    L_s compares the per-frame weight sum against the Gaussian-decayed
    checkpoint target (absolute error); L_t is the squared error between
    each weight and the joint log-distance magnitude of the warped frame
    pair.  Pair losses are averaged over the batch.
    """
    pairs = batch.all_pairs if isinstance(batch, PairSet) else list(batch)
    if not pairs:
        raise ValidationError("loss_embedding needs a nonempty batch")
    zero_grads(model.params)
    loss, l_s, l_t = _embedding_loss_graph(pairs, model, paths)
    if loss.requires_grad:
        loss.backward()
    grads = {name: (np.zeros_like(t.data) if t.grad is None else t.grad.copy())
             for name, t in model.params.items()}
    return {"l_s": l_s, "l_t": l_t, "l_d": l_s + l_t, "gradients": grads}


def _score_loss_graph(head, features, scores):
    """MAE score loss plus pairwise logistic rank surrogate."""
    pred = head.forward_raw(features)  # (B, 3)
    l_score = (pred - scores).abs().mean()
    bsz = features.shape[0]
    if bsz < 2:
        return l_score, l_score, None
    iu, ju = np.triu_indices(bsz, k=1)
    margins = gather(pred, iu, axis=0) - gather(pred, ju, axis=0)  # (P, 3)
    signs = np.sign(scores[iu] - scores[ju])
    l_rank = softplus(margins * (-signs)).mean()
    return l_score + l_rank, l_score, l_rank


def loss_score(batch, head):
    """Score-regression loss for a batch of (FeatureVector, Score) pairs.

    Returns L_score (mean absolute error), L_rank (pairwise logistic
    ordering surrogate, averaged over ordered pairs and dimensions),
    their total, exact gradients, and a flag when the batch was too small
    for the rank term.
    """
    if not batch:
        raise ValidationError("loss_score needs a nonempty batch")
    feats = np.stack([fv.as_array(head.n_features) for fv, _ in batch])
    scores = np.stack([s.as_array() if hasattr(s, "as_array") else np.asarray(s, float)
                       for _, s in batch])
    zero_grads(head.params)
    total, l_score, l_rank = _score_loss_graph(head, feats, scores)
    total.backward()
    grads = {name: (np.zeros_like(t.data) if t.grad is None else t.grad.copy())
             for name, t in head.params.items()}
    return {
        "l_score": float(l_score.data),
        "l_rank": 0.0 if l_rank is None else float(l_rank.data),
        "total": float(total.data),
        "gradients": grads,
        "rank_skipped": l_rank is None,
    }


def train_embedding(pairs, config, skeleton, smoother=None, d_model=32, n_heads=4):
    """Train the embedding model on a PairSet.

    A given smoother is applied to every sequence up front and stays
    frozen (its parameters are never touched).  Warping paths are
    recomputed once per epoch on the smoothed inputs; batches follow a
    seeded order.  Returns (model, per-epoch trace of loss components).
    """
    if not isinstance(pairs, PairSet):
        raise ValidationError("train_embedding expects a PairSet")
    model = EmbedModel(skeleton, d_model=d_model, n_heads=n_heads, seed=config.seed)

    def prep(seq):
        if smoother is None:
            return seq
        return smoothing.smooth_sequence(seq, smoother).smoothed

    prepared = [EmbedPair(prep(p.learner), prep(p.reference), p.supervision)
                for p in pairs.all_pairs]
    opt = make_optimizer(config)
    rng = np.random.default_rng(config.seed)
    trace = []
    decay_epoch = int(config.epochs * 0.6)
    for epoch in range(config.epochs):
        if epoch == decay_epoch and epoch > 0:
            opt.lr = config.learning_rate / 4.0  # fixed step decay for the tail
        paths = [alignment.dtw_frame_pairs(p.learner, p.reference) for p in prepared]
        order = rng.permutation(len(prepared))
        sums = np.zeros(2)
        batches = 0
        for start in range(0, len(order), config.batch_size):
            chosen = order[start:start + config.batch_size]
            zero_grads(model.params)
            loss, l_s, l_t = _embedding_loss_graph(
                [prepared[i] for i in chosen], model, [paths[i] for i in chosen])
            loss.backward()
            check_finite(loss.item(), "train_embedding")
            opt.step(model.params)
            sums += (l_s, l_t)
            batches += 1
        trace.append({"l_s": sums[0] / batches, "l_t": sums[1] / batches,
                      "l_d": (sums[0] + sums[1]) / batches})
    return model, trace


def train_scorehead(samples, config, n_features=2):
    """Train the score head on (FeatureVector, Score) samples; feature
    standardization is fitted on this data and frozen into the head."""
    if len(samples) < 2:
        raise ValidationError("train_scorehead needs at least two samples")
    head = ScoreHead(n_features, seed=config.seed)
    feats = np.stack([fv.as_array(n_features) for fv, _ in samples])
    scores = np.stack([s.as_array() if hasattr(s, "as_array") else np.asarray(s, float)
                       for _, s in samples])
    head.set_normalization(feats)
    opt = make_optimizer(config)
    rng = np.random.default_rng(config.seed)
    trace = []
    for _ in range(config.epochs):
        order = rng.permutation(len(samples))
        total_sum = 0.0
        batches = 0
        for start in range(0, len(order), config.batch_size):
            chosen = order[start:start + config.batch_size]
            zero_grads(head.params)
            total, _, _ = _score_loss_graph(head, feats[chosen], scores[chosen])
            total.backward()
            check_finite(total.item(), "train_scorehead")
            opt.step(head.params)
            total_sum += total.item()
            batches += 1
        trace.append({"total": total_sum / batches})
    return head, trace
