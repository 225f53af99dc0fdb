from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .model import NetParams

BETA1 = 0.9
BETA2 = 0.999
EPS = 1e-8


@dataclass
class OptState:
    """Optimizer state.  ``m``/``v`` are Adam's moment estimates (None for SGD)."""

    kind: str = "adam"
    t: int = 0
    m: NetParams | None = None
    v: NetParams | None = None

    @classmethod
    def fresh(cls, kind: str, params: NetParams) -> "OptState":
        if kind == "adam":
            return cls("adam", 0, params.zeros_like(), params.zeros_like())
        if kind == "sgd":
            return cls("sgd", 0)
        raise ValueError(f"unknown optimizer {kind!r}")


def adam_step(p: NetParams, grad: NetParams, state: OptState, lr: float,
              beta1: float = BETA1, beta2: float = BETA2, eps: float = EPS):
    """One bias-corrected Adam update; returns new params and state."""
    if state.m is None:
        state = OptState.fresh("adam", p)
    t = state.t + 1
    m = state.m.map(lambda m_, g: beta1 * m_ + (1.0 - beta1) * g, grad)
    v = state.v.map(lambda v_, g: beta2 * v_ + (1.0 - beta2) * (g * g), grad)
    bc1 = 1.0 - beta1 ** t
    bc2 = 1.0 - beta2 ** t
    new = p.map(lambda w, m_, v_: w - lr * (m_ / bc1) / (np.sqrt(v_ / bc2) + eps), m, v)
    return new, OptState("adam", t, m, v)


def sgd_step(p: NetParams, grad: NetParams, state: OptState, lr: float):
    return p - grad.scale(lr), OptState("sgd", state.t + 1)


def apply_step(p: NetParams, grad: NetParams, state: OptState, lr: float):
    if state.kind == "adam":
        return adam_step(p, grad, state, lr)
    return sgd_step(p, grad, state, lr)
