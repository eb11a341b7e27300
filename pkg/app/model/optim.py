"""Optimizers behind one ``step(params, grads) -> params`` interface.

SGD is the contract-bearing optimizer: every equivalence guarantee of the
runtime is stated under it. Adam is offered for ordinary training runs.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import List

import numpy as np

from app.core.errors import ParameterError
from app.model.gnn import Gradients, ModelParams


def sgd_step(params: ModelParams, grads: Gradients, lr: float) -> ModelParams:
    grads.check_against(params)
    lr_t = params.dtype.type(lr)
    new_weights = tuple(
        tuple(w - lr_t * g.astype(w.dtype) for w, g in zip(w_group, g_group))
        for w_group, g_group in zip(params.weights, grads.weights)
    )
    return ModelParams(params.kind, params.layer_dims, new_weights)


@dataclass
class SGD:
    lr: float

    def step(self, params: ModelParams, grads: Gradients) -> ModelParams:
        return sgd_step(params, grads, self.lr)


@dataclass
class Adam:
    lr: float
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    t: int = 0
    m: List[List[np.ndarray]] = field(default_factory=list)
    v: List[List[np.ndarray]] = field(default_factory=list)

    def step(self, params: ModelParams, grads: Gradients) -> ModelParams:
        grads.check_against(params)
        if not self.m:
            self.m = [[np.zeros_like(w) for w in group] for group in params.weights]
            self.v = [[np.zeros_like(w) for w in group] for group in params.weights]
        self.t += 1
        c1 = 1.0 - self.beta1**self.t
        c2 = 1.0 - self.beta2**self.t
        new_weights = []
        for l, (w_group, g_group) in enumerate(zip(params.weights, grads.weights)):
            updated = []
            for k, (w, g) in enumerate(zip(w_group, g_group)):
                self.m[l][k] = self.beta1 * self.m[l][k] + (1 - self.beta1) * g
                self.v[l][k] = self.beta2 * self.v[l][k] + (1 - self.beta2) * g * g
                m_hat = self.m[l][k] / c1
                v_hat = self.v[l][k] / c2
                updated.append((w - self.lr * m_hat / (np.sqrt(v_hat) + self.eps)).astype(w.dtype))
            new_weights.append(tuple(updated))
        return ModelParams(params.kind, params.layer_dims, tuple(new_weights))


def make_optimizer(name: str, lr: float) -> SGD | Adam:
    if name == "sgd":
        return SGD(lr)
    if name == "adam":
        return Adam(lr)
    raise ParameterError(f"unknown optimizer {name!r}")
