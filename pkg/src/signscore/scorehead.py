"""Score regression head and evaluation metrics.

The head is a two-layer feed-forward regressor from the concatenated
sequence-level difference features (smoothing cost, alignment cost, and
optionally the embedding difference) to a three-dimensional score.
Features are standardized with statistics frozen at fit time; public
scores are clamped to [0, 100], while training reads the raw outputs so
gradients survive at the clamp boundaries.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .autodiff import Tensor
from .checkpoint import load as _load_ckpt
from .checkpoint import save as _save_ckpt
from .errors import ValidationError

__all__ = [
    "FeatureVector",
    "Score",
    "ScoreHead",
    "score_forward",
    "spearman",
    "tier_accuracy",
    "average_ranks",
]

SCORE_DIMENSIONS = ("smoothness", "completeness", "recognizability")
HIDDEN_WIDTH = 16
TIER_WIDTH = 5.0


@dataclass(frozen=True)
class FeatureVector:
    c_s: float
    c_a: float
    c_e: float | None = None

    def __post_init__(self):
        vals = [self.c_s, self.c_a] + ([] if self.c_e is None else [self.c_e])
        arr = np.asarray(vals, dtype=np.float64)
        if not np.all(np.isfinite(arr)):
            raise ValidationError("features must be finite")
        if np.any(arr < 0.0):
            raise ValidationError("features must be nonnegative")

    def as_array(self, n_features):
        if n_features == 2:
            return np.array([self.c_s, self.c_a])
        if n_features == 3:
            if self.c_e is None:
                raise ValidationError("feature vector lacks c_e but the head wants 3 features")
            return np.array([self.c_s, self.c_a, self.c_e])
        raise ValidationError(f"unsupported feature count {n_features}")


@dataclass(frozen=True)
class Score:
    smoothness: float
    completeness: float
    recognizability: float

    def __post_init__(self):
        for name in SCORE_DIMENSIONS:
            v = getattr(self, name)
            if not (np.isfinite(v) and 0.0 <= v <= 100.0):
                raise ValidationError(f"{name} score must lie in [0, 100], got {v!r}")

    @classmethod
    def clamped(cls, values):
        v = np.clip(np.asarray(values, dtype=np.float64), 0.0, 100.0)
        return cls(float(v[0]), float(v[1]), float(v[2]))

    def as_array(self):
        return np.array([self.smoothness, self.completeness, self.recognizability])

    @property
    def mean(self):
        return float(np.mean(self.as_array()))


class ScoreHead:
    """Two affine layers with a tanh between; input standardization
    constants are stored alongside the weights."""

    def __init__(self, n_features, seed=0, params=None, feat_mean=None, feat_std=None):
        if n_features not in (2, 3):
            raise ValidationError("score head takes 2 or 3 features")
        self.n_features = n_features
        self.hidden = HIDDEN_WIDTH
        if params is None:
            rng = np.random.default_rng(seed)
            std1 = np.sqrt(2.0 / (n_features + self.hidden))
            std2 = np.sqrt(2.0 / (self.hidden + 3))
            params = {
                "w1": Tensor(rng.normal(0.0, std1, (n_features, self.hidden)), True),
                "b1": Tensor(np.zeros(self.hidden), True),
                "w2": Tensor(rng.normal(0.0, std2, (self.hidden, 3)), True),
                # mid-scale output bias; scores live in [0, 100]
                "b2": Tensor(np.full(3, 50.0), True),
            }
        self.params = params
        self.feat_mean = np.zeros(n_features) if feat_mean is None else np.asarray(feat_mean, float)
        self.feat_std = np.ones(n_features) if feat_std is None else np.asarray(feat_std, float)

    def set_normalization(self, features):
        features = np.asarray(features, dtype=np.float64)
        self.feat_mean = features.mean(axis=0)
        self.feat_std = np.maximum(features.std(axis=0), 1e-9)

    def forward_raw(self, features):
        """Unclamped head output as a Tensor; features (B, F) array or Tensor."""
        x = features if isinstance(features, Tensor) else Tensor(features)
        z = (x - self.feat_mean) * (1.0 / self.feat_std)
        h = (z @ self.params["w1"] + self.params["b1"]).tanh()
        return h @ self.params["w2"] + self.params["b2"]

    def save(self, path):
        meta = {"n_features": self.n_features}
        arrays = {name: t.data for name, t in self.params.items()}
        arrays["feat_mean"] = self.feat_mean
        arrays["feat_std"] = self.feat_std
        _save_ckpt(path, "head", meta, arrays)

    @classmethod
    def load(cls, path):
        meta, arrays = _load_ckpt(path, "head")
        feat_mean = arrays.pop("feat_mean")
        feat_std = arrays.pop("feat_std")
        params = {name: Tensor(arr, True) for name, arr in arrays.items()}
        return cls(int(meta["n_features"]), params=params,
                   feat_mean=feat_mean, feat_std=feat_std)


def score_forward(features, head):
    """Deterministic inference: clamp(affine2(tanh(affine1(z))), 0, 100)."""
    x = features.as_array(head.n_features)
    out = head.forward_raw(x[None]).data[0]
    return Score.clamped(out)


def average_ranks(values):
    """1-based ranks with ties assigned the group average."""
    values = np.asarray(values, dtype=np.float64)
    order = np.argsort(values, kind="stable")
    ranks = np.empty(len(values), dtype=np.float64)
    i = 0
    while i < len(values):
        j = i
        while j + 1 < len(values) and values[order[j + 1]] == values[order[i]]:
            j += 1
        ranks[order[i:j + 1]] = 0.5 * (i + j) + 1.0
        i = j + 1
    return ranks


def spearman(y, y_hat):
    """Rank correlation: the closed form 1 - 6*sum(d^2)/(N(N^2-1)) when
    ranks are unique, Pearson on average ranks when ties exist."""
    y = np.asarray(y, dtype=np.float64)
    y_hat = np.asarray(y_hat, dtype=np.float64)
    if y.shape != y_hat.shape or y.ndim != 1:
        raise ValidationError("spearman needs two equal-length one-dimensional lists")
    n = len(y)
    if n < 2:
        raise ValidationError("spearman needs at least two points")
    ry = average_ranks(y)
    rh = average_ranks(y_hat)
    ties = len(np.unique(y)) < n or len(np.unique(y_hat)) < n
    if not ties:
        d = ry - rh
        return float(1.0 - 6.0 * np.sum(d * d) / (n * (n * n - 1.0)))
    sy = ry.std()
    sh = rh.std()
    if sy == 0.0 or sh == 0.0:
        raise ValidationError("rank correlation is undefined for a constant list")
    return float(np.mean((ry - ry.mean()) * (rh - rh.mean())) / (sy * sh))


def tier_accuracy(y, y_hat):
    """Fraction of predictions falling in the same 5-point tier as truth;
    100 clamps into the top tier [95, 100]."""
    y = np.asarray(y, dtype=np.float64)
    y_hat = np.asarray(y_hat, dtype=np.float64)
    if y.shape != y_hat.shape or y.ndim != 1 or len(y) == 0:
        raise ValidationError("tier_accuracy needs two equal-length nonempty lists")
    for arr in (y, y_hat):
        if not np.all(np.isfinite(arr)) or np.any(arr < 0.0) or np.any(arr > 100.0):
            raise ValidationError("tier scores must lie in [0, 100]")
    tiers_y = np.minimum(np.floor(y / TIER_WIDTH), 19)
    tiers_h = np.minimum(np.floor(y_hat / TIER_WIDTH), 19)
    return float(np.mean(tiers_y == tiers_h))
