"""Windowed temporal de-jittering of quaternion tracks.

Each joint's rotation track is taken to its log-map 3-vectors, and every
scalar channel is filtered independently: sliding windows (stride 1)
yield position, first-difference, and second-difference features, each
multiplied by its own W x W branch matrix, linearly fused by a 3-vector,
and overlapping window predictions are averaged per frame.  Filtering in
log space keeps the linear fusion on the rotation manifold; outputs are
exp-mapped back and re-canonicalized.

The overlap average is computed relative to the first covering window's
prediction, and frames whose smoothed log equals the input log bitwise
keep their original quaternion.  Together these make the identity
configuration (identity branch matrices, fusion (1, 0, 0)) an exact
identity map, not just one up to float noise.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import quat
from .autodiff import Tensor, concat, scatter_add
from .checkpoint import load as _load_ckpt
from .checkpoint import save as _save_ckpt
from .errors import ValidationError
from .optim import TrainConfig, check_finite, make_optimizer, zero_grads

__all__ = [
    "SmootherModel",
    "SmoothResult",
    "sequence_logs",
    "smooth_sequence",
    "smoothing_cost",
    "fit_smoother",
    "save_smoother",
    "load_smoother",
]

COST_EPS = 1e-8  # denominator clamp: the relative cost divides by |M(t)|, zero at rest


@dataclass
class SmootherModel:
    window: int
    pos_w: np.ndarray  # (W, W)
    vel_w: np.ndarray
    acc_w: np.ndarray
    fusion: np.ndarray  # (3,)
    kind: str = "trained"
    final_loss: float | None = None

    def __post_init__(self):
        w = self.window
        if w < 3:
            raise ValidationError("smoother window must be >= 3")
        for name in ("pos_w", "vel_w", "acc_w"):
            arr = np.asarray(getattr(self, name), dtype=np.float64)
            if arr.shape != (w, w) or not np.all(np.isfinite(arr)):
                raise ValidationError(f"{name} must be a finite ({w}, {w}) matrix")
            setattr(self, name, arr)
        fusion = np.asarray(self.fusion, dtype=np.float64)
        if fusion.shape != (3,) or not np.all(np.isfinite(fusion)):
            raise ValidationError("fusion must be a finite 3-vector")
        self.fusion = fusion

    @classmethod
    def identity(cls, window=8):
        eye = np.eye(window)
        return cls(window, eye, eye.copy(), eye.copy(), np.array([1.0, 0.0, 0.0]),
                   kind="identity")

    @classmethod
    def savgol_fallback(cls, window=8):
        """Parameter-free quadratic least-squares projection per window;
        usable before any smoother has been trained."""
        k = np.arange(window, dtype=np.float64)
        basis = np.stack([np.ones(window), k, k * k], axis=1)
        hat = basis @ np.linalg.solve(basis.T @ basis, basis.T)
        zero = np.zeros((window, window))
        return cls(window, hat, zero, zero.copy(), np.array([1.0, 0.0, 0.0]),
                   kind="savgol-fallback")


@dataclass(frozen=True)
class SmoothResult:
    smoothed: "MotionSequence"
    cost: float
    smoother_kind: str


def sequence_logs(seq):
    """Per-frame per-joint log-map vectors, shape (T, N, 3)."""
    return quat.log_map(seq.rotations)


def _window_index(n_frames, window):
    starts = np.arange(n_frames - window + 1)
    return starts[:, None] + np.arange(window)[None, :]


def _forward_channels(x, pos_w, vel_w, acc_w, fusion, window):
    """Smooth channel matrix x of shape (C, T); all args may be Tensors."""
    n_frames = x.shape[-1]
    idx = _window_index(n_frames, window)
    windows = x[:, idx]  # (C, n_win, W)

    d1 = windows[:, :, 1:] - windows[:, :, :-1]
    vel = concat([d1, d1[:, :, -1:]], axis=-1)
    d2 = vel[:, :, 1:] - vel[:, :, :-1]
    acc = concat([d2, d2[:, :, -1:]], axis=-1)

    pred = (fusion[0] * (windows @ pos_w.swapaxes(-1, -2))
            + fusion[1] * (vel @ vel_w.swapaxes(-1, -2))
            + fusion[2] * (acc @ acc_w.swapaxes(-1, -2)))

    # overlap average, computed relative to the first covering window so
    # that identical window predictions aggregate with zero rounding
    first_start = np.maximum(0, np.arange(n_frames) - window + 1)
    base = pred[:, first_start, np.arange(n_frames) - first_start]  # (C, T)
    delta = pred - base[:, idx]
    cover = np.zeros(n_frames)
    np.add.at(cover, idx, 1.0)
    return base + scatter_add(delta, idx, n_frames, axis=1) * (1.0 / cover)


def _params_to_tensors(model, requires_grad=False):
    return {
        "pos_w": Tensor(model.pos_w.copy(), requires_grad),
        "vel_w": Tensor(model.vel_w.copy(), requires_grad),
        "acc_w": Tensor(model.acc_w.copy(), requires_grad),
        "fusion": Tensor(model.fusion.copy(), requires_grad),
    }


def _channels(seq):
    logs = sequence_logs(seq)  # (T, N, 3)
    return logs.transpose(1, 2, 0).reshape(-1, seq.n_frames), logs


def smooth_sequence(seq, model):
    """Filter every joint channel; returns the smoothed sequence and its
    relative deviation cost."""
    if seq.n_frames < model.window:
        raise ValidationError(
            f"sequence has {seq.n_frames} frames; smoothing needs at least "
            f"window size {model.window}"
        )
    channels, logs = _channels(seq)
    params = _params_to_tensors(model)
    out = _forward_channels(Tensor(channels), params["pos_w"], params["vel_w"],
                            params["acc_w"], params["fusion"], model.window)
    smoothed_logs = out.data.reshape(seq.n_joints, 3, seq.n_frames).transpose(2, 0, 1)

    unchanged = np.all(smoothed_logs == logs, axis=-1)
    rebuilt = quat.canonicalize(quat.exp_map(smoothed_logs))
    rotations = np.where(unchanged[..., None], seq.rotations, rebuilt)
    smoothed = seq.with_rotations(rotations)
    return SmoothResult(smoothed=smoothed, cost=smoothing_cost(seq, smoothed),
                        smoother_kind=model.kind)


def smoothing_cost(original, smoothed):
    """Mean per-frame relative log-space deviation between two sequences."""
    if (original.n_frames, original.n_joints) != (smoothed.n_frames, smoothed.n_joints):
        raise ValidationError("sequences must have matching shape for the smoothing cost")
    la = sequence_logs(original).reshape(original.n_frames, -1)
    lb = sequence_logs(smoothed).reshape(smoothed.n_frames, -1)
    num = np.linalg.norm(la - lb, axis=1)
    den = np.maximum(np.linalg.norm(la, axis=1), COST_EPS)
    return float(np.mean(num / den))


def fit_smoother(pairs, config=None, window=8):
    """Fit branch and fusion weights by gradient descent on the mean
    squared log-space error between smoothed noisy input and clean target.

    Starts from the identity configuration, so the initial loss is exactly
    the raw noisy-vs-clean error.  Returns (model, per-epoch loss trace).
    """
    if not pairs:
        raise ValidationError("fit_smoother needs at least one (noisy, clean) pair")
    config = config or TrainConfig(learning_rate=0.02, epochs=150, batch_size=64)
    data = []
    for noisy, clean in pairs:
        if (noisy.n_frames, noisy.n_joints) != (clean.n_frames, clean.n_joints):
            raise ValidationError("noisy/clean pair shapes differ")
        if noisy.n_frames < window:
            raise ValidationError(
                f"pair has {noisy.n_frames} frames; window {window} needs more"
            )
        data.append((_channels(noisy)[0], _channels(clean)[0]))

    model = SmootherModel.identity(window)
    params = _params_to_tensors(model, requires_grad=True)
    opt = make_optimizer(config)
    rng = np.random.default_rng(config.seed)
    trace = []
    for _ in range(config.epochs):
        order = rng.permutation(len(data)) if len(data) > 1 else np.array([0])
        epoch_losses = []
        for start in range(0, len(order), config.batch_size):
            batch = order[start:start + config.batch_size]
            zero_grads(params)
            loss = None
            for k in batch:
                noisy_ch, clean_ch = data[k]
                out = _forward_channels(Tensor(noisy_ch), params["pos_w"],
                                        params["vel_w"], params["acc_w"],
                                        params["fusion"], window)
                mse = ((out - Tensor(clean_ch)) ** 2).mean()
                loss = mse if loss is None else loss + mse
            loss = loss * (1.0 / len(batch))
            loss.backward()
            epoch_losses.append(check_finite(loss.item(), "fit_smoother"))
            opt.step(params)
        trace.append(float(np.mean(epoch_losses)))

    return SmootherModel(window, params["pos_w"].data, params["vel_w"].data,
                         params["acc_w"].data, params["fusion"].data,
                         kind="trained", final_loss=trace[-1]), trace


def save_smoother(model, path):
    meta = {"window": model.window, "model_kind": model.kind,
            "final_loss": model.final_loss}
    _save_ckpt(path, "smoother", meta, {
        "pos_w": model.pos_w, "vel_w": model.vel_w,
        "acc_w": model.acc_w, "fusion": model.fusion,
    })


def load_smoother(path):
    meta, arrays = _load_ckpt(path, "smoother")
    return SmootherModel(int(meta["window"]), arrays["pos_w"], arrays["vel_w"],
                         arrays["acc_w"], arrays["fusion"],
                         kind=str(meta.get("model_kind", "trained")),
                         final_loss=meta.get("final_loss"))
