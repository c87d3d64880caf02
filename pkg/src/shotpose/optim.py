"""Adam optimizer over plain float64 arrays."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .autodiff import Tensor
from .errors import ContractError, ShapeMismatchError


@dataclass
class AdamState:
    """First/second moment estimates plus the shared timestep."""

    step: int = 0
    m: list[np.ndarray] = field(default_factory=list)
    v: list[np.ndarray] = field(default_factory=list)

    @classmethod
    def for_params(cls, params: list[np.ndarray]) -> "AdamState":
        return cls(step=0,
                   m=[np.zeros_like(p) for p in params],
                   v=[np.zeros_like(p) for p in params])


def adam_step(params: list[np.ndarray], grads: list[np.ndarray], state: AdamState,
              lr: float, beta1: float = 0.9, beta2: float = 0.999,
              eps: float = 1e-8) -> AdamState:
    """One Adam update, applied to `params` in place.

    The timestep increments even for all-zero gradients, so bias
    correction bookkeeping always advances.
    """
    if not (len(params) == len(grads) == len(state.m) == len(state.v)):
        raise ContractError("params, grads, and state must have matching lengths")
    for p, g, m, v in zip(params, grads, state.m, state.v):
        if not (p.shape == g.shape == m.shape == v.shape):
            raise ShapeMismatchError("adam_step", p.shape, g.shape)
    state.step += 1
    t = state.step
    bc1 = 1.0 - beta1 ** t
    bc2 = 1.0 - beta2 ** t
    for p, g, m, v in zip(params, grads, state.m, state.v):
        m *= beta1
        m += (1.0 - beta1) * g
        v *= beta2
        v += (1.0 - beta2) * (g * g)
        p -= lr * (m / bc1) / (np.sqrt(v / bc2) + eps)
    return state


class Adam:
    """Convenience wrapper binding Adam state to a list of Tensors."""

    def __init__(self, params: list[Tensor], lr: float = 1e-3,
                 beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
        self.params = list(params)
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.state = AdamState.for_params([p.data for p in self.params])

    def step(self) -> None:
        grads = []
        for p in self.params:
            if p.grad is None:
                raise ContractError("parameter has no gradient; run backward first")
            grads.append(p.grad)
        adam_step([p.data for p in self.params], grads, self.state,
                  self.lr, self.beta1, self.beta2, self.eps)

    def zero_grad(self) -> None:
        for p in self.params:
            p.zero_grad()
