"""Per-frame-pair spatial embedding over the joint hierarchy.

A single-block encoder/decoder attention model treats the N joints of a
frame as a sequence in the spatial dimension, ordered by
``topological_order``.  The encoder reads the learner frame with full
self-attention; the decoder reads the reference frame under an ancestry
mask (each joint position attends only to itself and its skeletal
ancestors) plus cross-attention into the encoder output, and a linear
head emits one difference weight per joint.

The ancestry mask is enforced with exact zeros: perturbing reference
joint j cannot change w_i unless j is i or one of i's ancestors, bitwise,
and the analytic input gradients outside that set are exactly 0.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from . import quat
from .autodiff import Tensor, layer_norm, softmax_masked
from .checkpoint import load as _load_ckpt
from .checkpoint import save as _save_ckpt
from .errors import ValidationError

__all__ = [
    "EmbedModel",
    "JointWeights",
    "TruncationPolicy",
    "TruncatedDistance",
    "attention_forward",
    "joint_log_distance",
    "pair_log_distance",
    "embed_frame_pair",
    "truncated_distance",
    "truncated_distance_batch",
    "pairwise_embedding_distance",
]

_PAIR_CHUNK = 512  # batch rows per forward when scoring many frame pairs


@dataclass(frozen=True)
class JointWeights:
    """Per-joint difference weights, ordered by topological_order."""

    weights: np.ndarray  # (N,)


@dataclass(frozen=True)
class TruncationPolicy:
    threshold: float = 1.0
    penalty: float | None = None  # per skipped joint; defaults to 2 * threshold

    def __post_init__(self):
        if not self.threshold > 0:
            raise ValidationError("truncation threshold must be positive")
        if self.penalty is None:
            object.__setattr__(self, "penalty", 2.0 * self.threshold)
        if self.penalty < 0:
            raise ValidationError("truncation penalty must be nonnegative")


class TruncatedDistance(NamedTuple):
    distance: float
    step: int


def joint_log_distance(q, q_ref):
    """Log difference between two rotations: vector and magnitude.

    The magnitude is half the relative rotation angle, so it lives in
    [0, pi/2]; it is symmetric and zero iff both quaternions encode the
    same rotation (quaternions equal after canonicalization evaluate to
    exactly zero).
    """
    qa = quat.canonicalize(q)
    qb = quat.canonicalize(q_ref)
    if np.array_equal(qa, qb):
        return np.zeros(3), 0.0
    df = quat.log_map(quat.canonicalize(quat.compose(qa, quat.conjugate(qb))))
    return df, float(np.linalg.norm(df))


def pair_log_distance(rots_a, rots_b):
    """Batched magnitudes of joint log differences; shapes (..., N, 4) -> (..., N)."""
    qa = quat.canonicalize(rots_a)
    qb = quat.canonicalize(rots_b)
    rel = quat.canonicalize(quat.compose(qa, quat.conjugate(qb)))
    mags = np.linalg.norm(quat.log_map(rel), axis=-1)
    return np.where(np.all(qa == qb, axis=-1), 0.0, mags)


def attention_forward(q, k, v, mask=None):
    """Scaled dot-product attention; mask is boolean with True = attend.

    Softmax rows over unmasked positions sum to 1; a fully-masked row
    yields a zero output vector.  Accepts Tensors or arrays with shape
    (..., n, d_head).
    """
    q = q if isinstance(q, Tensor) else Tensor(q)
    k = k if isinstance(k, Tensor) else Tensor(k)
    v = v if isinstance(v, Tensor) else Tensor(v)
    scale = 1.0 / np.sqrt(q.shape[-1])
    scores = (q @ k.swapaxes(-1, -2)) * scale
    attn = softmax_masked(scores, mask)
    return attn @ v


class EmbedModel:
    """Encoder-decoder attention over joints with a scalar output head."""

    def __init__(self, skeleton, d_model=32, n_heads=4, seed=0, params=None,
                 topo_order=None, mask=None, skeleton_id=None):
        if d_model % n_heads != 0:
            raise ValidationError("d_model must be divisible by n_heads")
        if skeleton is not None:
            self.skeleton_id = skeleton.skeleton_id
            self.n_joints = skeleton.n_joints
            self.topo_order = np.array(skeleton.topo_order, dtype=np.int64)
            self.mask = skeleton.ancestry_mask()
        else:
            self.skeleton_id = skeleton_id
            self.topo_order = np.asarray(topo_order, dtype=np.int64)
            self.n_joints = len(self.topo_order)
            self.mask = np.asarray(mask, dtype=bool)
        self.d_model = d_model
        self.n_heads = n_heads
        self.d_ff = 2 * d_model
        self.params = params if params is not None else self._init_params(seed)

    def _init_params(self, seed):
        rng = np.random.default_rng(seed)
        d, f, n = self.d_model, self.d_ff, self.n_joints

        def xavier(fan_in, fan_out):
            std = np.sqrt(2.0 / (fan_in + fan_out))
            return rng.normal(0.0, std, size=(fan_in, fan_out))

        p = {}
        p["in_w"] = Tensor(xavier(4, d), True)
        p["in_b"] = Tensor(np.zeros(d), True)
        p["joint_emb"] = Tensor(rng.normal(0.0, 0.1, size=(n, d)), True)
        for prefix in ("enc_sa", "dec_sa", "dec_ca"):
            for mat in ("wq", "wk", "wv", "wo"):
                p[f"{prefix}_{mat}"] = Tensor(xavier(d, d), True)
            for bias in ("bq", "bk", "bv", "bo"):
                p[f"{prefix}_{bias}"] = Tensor(np.zeros(d), True)
        for prefix in ("enc", "dec"):
            p[f"{prefix}_ff_w1"] = Tensor(xavier(d, f), True)
            p[f"{prefix}_ff_b1"] = Tensor(np.zeros(f), True)
            p[f"{prefix}_ff_w2"] = Tensor(xavier(f, d), True)
            p[f"{prefix}_ff_b2"] = Tensor(np.zeros(d), True)
        n_ln = {"enc": 2, "dec": 3}
        for prefix, count in n_ln.items():
            for i in range(1, count + 1):
                p[f"{prefix}_ln{i}_g"] = Tensor(np.ones(d), True)
                p[f"{prefix}_ln{i}_b"] = Tensor(np.zeros(d), True)
        # zero-initialized output head: an untrained model emits the bias
        p["head_w"] = Tensor(np.zeros((d, 1)), True)
        p["head_b"] = Tensor(np.zeros(1), True)
        return p

    # -- forward pieces --------------------------------------------------

    def _mha(self, x_q, x_kv, prefix, mask=None):
        p = self.params
        h, d = self.n_heads, self.d_model
        dh = d // h
        bsz, n_q = x_q.shape[0], x_q.shape[1]
        n_kv = x_kv.shape[1]
        q = x_q @ p[f"{prefix}_wq"] + p[f"{prefix}_bq"]
        k = x_kv @ p[f"{prefix}_wk"] + p[f"{prefix}_bk"]
        v = x_kv @ p[f"{prefix}_wv"] + p[f"{prefix}_bv"]
        qh = q.reshape(bsz, n_q, h, dh).transpose((0, 2, 1, 3))
        kh = k.reshape(bsz, n_kv, h, dh).transpose((0, 2, 1, 3))
        vh = v.reshape(bsz, n_kv, h, dh).transpose((0, 2, 1, 3))
        out = attention_forward(qh, kh, vh, mask)
        out = out.transpose((0, 2, 1, 3)).reshape(bsz, n_q, d)
        return out @ p[f"{prefix}_wo"] + p[f"{prefix}_bo"]

    def _ffn(self, x, prefix):
        p = self.params
        hidden = (x @ p[f"{prefix}_ff_w1"] + p[f"{prefix}_ff_b1"]).tanh()
        return hidden @ p[f"{prefix}_ff_w2"] + p[f"{prefix}_ff_b2"]

    def _ln(self, x, prefix, i):
        p = self.params
        return layer_norm(x, p[f"{prefix}_ln{i}_g"], p[f"{prefix}_ln{i}_b"])

    def _embed_inputs(self, rots):
        p = self.params
        x = rots if isinstance(rots, Tensor) else Tensor(rots)
        return x @ p["in_w"] + p["in_b"] + p["joint_emb"]

    def encode(self, learner_rots):
        """Encoder stream: full self-attention over the learner frame."""
        x = self._embed_inputs(learner_rots)
        x = self._ln(x + self._mha(x, x, "enc_sa"), "enc", 1)
        return self._ln(x + self._ffn(x, "enc"), "enc", 2)

    def decode(self, ref_rots, enc_out):
        y = self._embed_inputs(ref_rots)
        y = self._ln(y + self._mha(y, y, "dec_sa", mask=self.mask), "dec", 1)
        y = self._ln(y + self._mha(y, enc_out, "dec_ca"), "dec", 2)
        return self._ln(y + self._ffn(y, "dec"), "dec", 3)

    def forward_pairs(self, learner_rots, ref_rots):
        """Batched forward: (B, N, 4) topo-ordered quaternion rows -> (B, N)."""
        p = self.params
        enc = self.encode(learner_rots)
        dec = self.decode(ref_rots, enc)
        w = dec @ p["head_w"] + p["head_b"]
        return w.reshape(w.shape[0], w.shape[1])

    def weights_for(self, learner_rots, ref_rots):
        """Inference on skeleton-ordered frames; returns (B, N) numpy
        weights in topological order."""
        learner_rots = np.asarray(learner_rots, dtype=np.float64)
        ref_rots = np.asarray(ref_rots, dtype=np.float64)
        if learner_rots.shape != ref_rots.shape:
            raise ValidationError("frame pair shapes differ")
        if learner_rots.shape[-2:] != (self.n_joints, 4):
            raise ValidationError(
                f"frames must be (..., {self.n_joints}, 4), got {learner_rots.shape}"
            )
        single = learner_rots.ndim == 2
        if single:
            learner_rots = learner_rots[None]
            ref_rots = ref_rots[None]
        out = self.forward_pairs(learner_rots[:, self.topo_order],
                                 ref_rots[:, self.topo_order]).data
        return out[0] if single else out

    # -- persistence ------------------------------------------------------

    def save(self, path):
        meta = {
            "d_model": self.d_model,
            "n_heads": self.n_heads,
            "skeleton_id": self.skeleton_id,
            "topo_order": [int(i) for i in self.topo_order],
        }
        arrays = {name: t.data for name, t in self.params.items()}
        arrays["ancestry_mask"] = self.mask.astype(np.float64)
        _save_ckpt(path, "embed", meta, arrays)

    @classmethod
    def load(cls, path):
        meta, arrays = _load_ckpt(path, "embed")
        mask = arrays.pop("ancestry_mask") > 0.5
        params = {name: Tensor(arr, True) for name, arr in arrays.items()}
        return cls(None, d_model=int(meta["d_model"]), n_heads=int(meta["n_heads"]),
                   params=params, topo_order=meta["topo_order"], mask=mask,
                   skeleton_id=meta["skeleton_id"])


def embed_frame_pair(frame, ref_frame, model):
    """Difference weights for one (learner, reference) frame pair."""
    return JointWeights(model.weights_for(frame.rotations, ref_frame.rotations))


def truncated_distance(weights, policy):
    """Scan weights in topological order; S is the index of the first
    weight above the threshold (N if none).  Joints up to and including S
    contribute their weights; each joint after it contributes the fixed
    penalty instead."""
    w = weights.weights if isinstance(weights, JointWeights) else np.asarray(weights)
    d, s = truncated_distance_batch(w[None], policy)
    return TruncatedDistance(float(d[0]), int(s[0]))


def truncated_distance_batch(w, policy):
    """Vectorized truncated_distance over (B, N) weight rows."""
    w = np.asarray(w, dtype=np.float64)
    n = w.shape[1]
    exceed = w > policy.threshold
    has = exceed.any(axis=1)
    first = np.where(has, np.argmax(exceed, axis=1), n)
    cumsum = np.cumsum(w, axis=1)
    included = np.where(has, cumsum[np.arange(len(w)), np.minimum(first, n - 1)],
                        cumsum[:, -1])
    skipped = np.where(has, n - first - 1, 0)
    return included + skipped * policy.penalty, first


def pairwise_embedding_distance(learner, reference, model, policy=None):
    """Truncated embedding distance D for every (t1, t2) frame pair, used
    as the alternative DTW local cost.  Shape (T1, T2)."""
    policy = policy or TruncationPolicy()
    t1, t2 = learner.n_frames, reference.n_frames
    rot_l = learner.rotations[:, model.topo_order]
    rot_r = reference.rotations[:, model.topo_order]
    out = np.empty((t1 * t2,), dtype=np.float64)
    idx_l, idx_r = np.divmod(np.arange(t1 * t2), t2)
    for start in range(0, t1 * t2, _PAIR_CHUNK):
        stop = min(start + _PAIR_CHUNK, t1 * t2)
        w = model.forward_pairs(rot_l[idx_l[start:stop]], rot_r[idx_r[start:stop]]).data
        out[start:stop], _ = truncated_distance_batch(w, policy)
    return out.reshape(t1, t2)
