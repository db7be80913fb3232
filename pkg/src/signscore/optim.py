"""Training configuration and first-order optimizers.

Parameters are dicts of named autodiff Tensors; iteration order is the
insertion order, which together with seeded initialization makes every
training loop deterministic.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import TrainingDivergence, ValidationError


@dataclass
class TrainConfig:
    learning_rate: float = 0.01
    epochs: int = 100
    batch_size: int = 8
    seed: int = 0
    optimizer: str = "adam"  # "adam" (adaptive moments) or "sgd" (plain gradient descent)

    def __post_init__(self):
        if not (self.learning_rate > 0 and math.isfinite(self.learning_rate)):
            raise ValidationError("learning_rate must be positive and finite")
        if self.epochs < 1:
            raise ValidationError("epochs must be >= 1")
        if self.batch_size < 1:
            raise ValidationError("batch_size must be >= 1")
        if self.optimizer not in ("adam", "sgd"):
            raise ValidationError(f"unknown optimizer {self.optimizer!r}")

    @classmethod
    def from_json(cls, doc):
        known = {f for f in cls.__dataclass_fields__}
        extra = set(doc) - known
        if extra:
            raise ValidationError(f"unknown training config fields: {sorted(extra)}")
        return cls(**doc)


def make_optimizer(config):
    if config.optimizer == "sgd":
        return SGD(config.learning_rate)
    return Adam(config.learning_rate)


class SGD:
    def __init__(self, lr):
        self.lr = lr

    def step(self, params):
        for t in params.values():
            if t.grad is not None:
                t.data -= self.lr * t.grad


class Adam:
    def __init__(self, lr, beta1=0.9, beta2=0.999, eps=1e-8):
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.t = 0
        self._m = {}
        self._v = {}

    def step(self, params):
        self.t += 1
        b1c = 1.0 - self.beta1**self.t
        b2c = 1.0 - self.beta2**self.t
        for name, p in params.items():
            if p.grad is None:
                continue
            m = self._m.setdefault(name, np.zeros_like(p.data))
            v = self._v.setdefault(name, np.zeros_like(p.data))
            m += (1.0 - self.beta1) * (p.grad - m)
            v += (1.0 - self.beta2) * (p.grad**2 - v)
            p.data -= self.lr * (m / b1c) / (np.sqrt(v / b2c) + self.eps)


def zero_grads(params):
    for t in params.values():
        t.grad = None


def check_finite(loss_value, context):
    if not math.isfinite(loss_value):
        raise TrainingDivergence(f"{context}: loss became {loss_value!r}")
    return loss_value
