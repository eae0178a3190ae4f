from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .tensor import ShapeError, Tensor


@dataclass
class RMSProp:
    """RMSProp with a per-parameter running average of squared gradients."""

    params: Sequence[Tensor]
    lr: float = 1e-3
    decay: float = 0.99
    eps: float = 1e-8
    square_avg: list[np.ndarray] = field(default_factory=list)

    def __post_init__(self):
        if not 0.0 < self.decay < 1.0:
            raise ValueError(f"decay must lie in (0, 1), got {self.decay}")
        if self.eps <= 0:
            raise ValueError(f"eps must be positive, got {self.eps}")
        self.params = list(self.params)
        if not self.square_avg:
            self.square_avg = [np.zeros_like(p.data) for p in self.params]

    def step(self, grads: Sequence[np.ndarray]) -> None:
        if len(grads) != len(self.params):
            raise ShapeError(f"got {len(grads)} gradients for {len(self.params)} parameters")
        for p, avg, g in zip(self.params, self.square_avg, grads):
            if g.shape != p.shape:
                raise ShapeError(f"gradient shape {g.shape} does not match parameter shape {p.shape}")
            avg *= self.decay
            avg += (1.0 - self.decay) * g * g
            p.data = p.data - self.lr * g / (np.sqrt(avg) + self.eps)

    def state_dict(self) -> dict:
        return {
            "lr": self.lr, "decay": self.decay, "eps": self.eps,
            "square_avg": [a.copy() for a in self.square_avg],
        }


def rmsprop_step(state: RMSProp, grads: Sequence[np.ndarray]) -> list[Tensor]:
    state.step(grads)
    return list(state.params)
