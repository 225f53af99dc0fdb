"""Fully connected tanh networks used as energies or as direct score fields.

Layer ``l`` maps ``h[l-1] -> h[l] = tanh(W[l] h[l-1] + b[l])`` for the hidden
layers and the last layer is linear.  Inputs are batches ``(n, d)``; every
public function also accepts a single vector ``(d,)``.

The input-gradient of an energy net is itself a layered computation
(the ordinary backward pass).  ``score_param_vjp`` differentiates that
computation once more in reverse mode, which is all the denoising objective
needs; no general higher-order tape is involved.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .core import DimensionError, Rng

FORMAT_VERSION = 1
ACTIVATIONS = ("tanh",)


@dataclass(frozen=True)
class NetConfig:
    input_dim: int
    hidden_dims: tuple[int, ...]
    output_dim: int = 1
    activation: str = "tanh"
    seed: int = 0
    # "energy" (scalar output) or "score" (R^d -> R^d); needed because the
    # two coincide in shape when input_dim == 1.
    kind: str = "energy"

    def __post_init__(self):
        object.__setattr__(self, "hidden_dims", tuple(int(h) for h in self.hidden_dims))
        if self.input_dim < 1:
            raise ValueError("input_dim must be positive")
        if not self.hidden_dims or min(self.hidden_dims) < 1:
            raise ValueError("need at least one hidden layer of positive width")
        if self.activation not in ACTIVATIONS:
            raise ValueError(f"unsupported activation {self.activation!r}")
        if self.kind == "energy" and self.output_dim != 1:
            raise ValueError("energy nets have output_dim 1")
        if self.kind == "score" and self.output_dim != self.input_dim:
            raise ValueError("score nets have output_dim == input_dim")
        if self.kind not in ("energy", "score"):
            raise ValueError(f"unknown net kind {self.kind!r}")

    @classmethod
    def energy_net(cls, d, hidden, seed=0):
        return cls(d, tuple(hidden), 1, seed=seed, kind="energy")

    @classmethod
    def score_net(cls, d, hidden, seed=0):
        return cls(d, tuple(hidden), d, seed=seed, kind="score")

    @property
    def layer_sizes(self) -> tuple[int, ...]:
        return (self.input_dim, *self.hidden_dims, self.output_dim)

    def to_dict(self) -> dict:
        return {
            "input_dim": self.input_dim,
            "hidden_dims": list(self.hidden_dims),
            "output_dim": self.output_dim,
            "activation": self.activation,
            "seed": self.seed,
            "kind": self.kind,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "NetConfig":
        return cls(
            int(d["input_dim"]),
            tuple(d["hidden_dims"]),
            int(d["output_dim"]),
            d.get("activation", "tanh"),
            int(d.get("seed", 0)),
            d.get("kind", "energy" if int(d["output_dim"]) == 1 else "score"),
        )


@dataclass
class NetParams:
    """Weights ``W[l]`` of shape ``(out, in)`` and biases ``b[l]``, l = 1..L+1.

    Gradients are returned as ``NetParams`` of the same shapes, so the
    arithmetic helpers below double as gradient algebra.
    """

    config: NetConfig
    weights: list
    biases: list

    def __post_init__(self):
        sizes = self.config.layer_sizes
        if len(self.weights) != len(sizes) - 1 or len(self.biases) != len(sizes) - 1:
            raise DimensionError("layer count does not match config")
        for l, (w, b) in enumerate(zip(self.weights, self.biases)):
            if w.shape != (sizes[l + 1], sizes[l]) or b.shape != (sizes[l + 1],):
                raise DimensionError(f"layer {l + 1} has shapes {w.shape}, {b.shape}")

    @property
    def n_layers(self) -> int:
        return len(self.weights)

    @property
    def size(self) -> int:
        return sum(w.size + b.size for w, b in zip(self.weights, self.biases))

    def arrays(self):
        for w, b in zip(self.weights, self.biases):
            yield w
            yield b

    def flat(self) -> np.ndarray:
        return np.concatenate([a.ravel() for a in self.arrays()])

    def with_flat(self, vec) -> "NetParams":
        vec = np.asarray(vec, dtype=np.float64)
        if vec.shape != (self.size,):
            raise DimensionError(f"expected {self.size} values, got {vec.shape}")
        ws, bs, i = [], [], 0
        for w, b in zip(self.weights, self.biases):
            ws.append(vec[i:i + w.size].reshape(w.shape).copy())
            i += w.size
            bs.append(vec[i:i + b.size].copy())
            i += b.size
        return NetParams(self.config, ws, bs)

    def map(self, fn, *others: "NetParams") -> "NetParams":
        ws = [fn(w, *(o.weights[i] for o in others)) for i, w in enumerate(self.weights)]
        bs = [fn(b, *(o.biases[i] for o in others)) for i, b in enumerate(self.biases)]
        return NetParams(self.config, ws, bs)

    def zeros_like(self) -> "NetParams":
        return self.map(np.zeros_like)

    def copy(self) -> "NetParams":
        return self.map(np.copy)

    def __add__(self, other):
        return self.map(np.add, other)

    def __sub__(self, other):
        return self.map(np.subtract, other)

    def scale(self, c: float) -> "NetParams":
        return self.map(lambda a: c * a)

    def all_finite(self) -> bool:
        return all(np.all(np.isfinite(a)) for a in self.arrays())


def init_params(cfg: NetConfig, rng: Rng) -> NetParams:
    """Glorot-uniform weights, zero biases."""
    sizes = cfg.layer_sizes
    ws, bs = [], []
    for fan_in, fan_out in zip(sizes[:-1], sizes[1:]):
        limit = math.sqrt(6.0 / (fan_in + fan_out))
        u = rng.uniform((fan_out, fan_in))
        ws.append(limit * (2.0 * u - 1.0))
        bs.append(np.zeros(fan_out))
    return NetParams(cfg, ws, bs)


@dataclass
class ForwardTrace:
    x: np.ndarray
    pre: list = field(default_factory=list)     # z[l], l = 1..L
    hidden: list = field(default_factory=list)  # h[l] = tanh(z[l])
    output: np.ndarray | None = None


def _as_batch(p: NetParams, x) -> tuple[np.ndarray, bool]:
    x = np.asarray(x, dtype=np.float64)
    single = x.ndim == 1
    if single:
        x = x[None, :]
    if x.ndim != 2 or x.shape[1] != p.config.input_dim:
        raise DimensionError(f"input of shape {x.shape} for input_dim {p.config.input_dim}")
    return x, single


def _require(p: NetParams, kind: str):
    if p.config.kind != kind:
        raise DimensionError(f"operation needs a {kind} net, got a {p.config.kind} net")


def forward(p: NetParams, x) -> ForwardTrace:
    xb, _ = _as_batch(p, x)
    tr = ForwardTrace(xb)
    h = xb
    for w, b in zip(p.weights[:-1], p.biases[:-1]):
        z = h @ w.T + b
        h = np.tanh(z)
        tr.pre.append(z)
        tr.hidden.append(h)
    tr.output = h @ p.weights[-1].T + p.biases[-1]
    return tr


def _input_grad(p: NetParams, tr: ForwardTrace):
    """Backward pass of an energy net to its input.

    Returns ``grad_x E`` of shape (n, d) plus the per-layer quantities the
    second-order pass reuses: ``g[l] = dE/dh[l]`` and ``delta[l] = dE/dz[l]``
    (0-based lists over the L hidden layers).
    """
    n = tr.x.shape[0]
    g = np.broadcast_to(p.weights[-1][0], (n, p.weights[-1].shape[1]))
    gs = [None] * len(tr.hidden)
    deltas = [None] * len(tr.hidden)
    for l in range(len(tr.hidden) - 1, -1, -1):
        gs[l] = g
        deltas[l] = g * (1.0 - tr.hidden[l] ** 2)
        g = deltas[l] @ p.weights[l]
    return g, gs, deltas


def energy(p: NetParams, x):
    _require(p, "energy")
    tr = forward(p, x)
    e = tr.output[:, 0]
    return float(e[0]) if np.ndim(x) == 1 else e


def energy_grad_x(p: NetParams, x) -> np.ndarray:
    _require(p, "energy")
    xb, single = _as_batch(p, x)
    g, _, _ = _input_grad(p, forward(p, xb))
    return g[0] if single else g


def score(p: NetParams, x) -> np.ndarray:
    """The score ``-grad_x E``; an exact gradient field by construction."""
    return -energy_grad_x(p, x)


def _backprop(p: NetParams, tr: ForwardTrace, out_adj: np.ndarray) -> NetParams:
    """First-order reverse pass given the adjoint of the linear output."""
    L = len(tr.hidden)
    ws, bs = [None] * (L + 1), [None] * (L + 1)
    ws[L] = out_adj.T @ tr.hidden[-1]
    bs[L] = out_adj.sum(axis=0)
    g = out_adj @ p.weights[L]
    for l in range(L - 1, -1, -1):
        zbar = g * (1.0 - tr.hidden[l] ** 2)
        prev = tr.hidden[l - 1] if l > 0 else tr.x
        ws[l] = zbar.T @ prev
        bs[l] = zbar.sum(axis=0)
        if l > 0:
            g = zbar @ p.weights[l]
    return NetParams(p.config, ws, bs)


def energy_param_grad(p: NetParams, x) -> NetParams:
    """``grad_theta E``; for a batch, the sum over rows."""
    _require(p, "energy")
    tr = forward(p, x)
    return _backprop(p, tr, np.ones((tr.x.shape[0], 1)))


def score_param_vjp_trace(p: NetParams, tr: ForwardTrace, v: np.ndarray,
                          parts=None) -> NetParams:
    """``grad_theta sum_rows <v, grad_x E(x)>`` from a precomputed trace."""
    if parts is None:
        parts = _input_grad(p, tr)
    _, gs, deltas = parts
    L = len(tr.hidden)
    W = p.weights
    ws = [np.zeros_like(w) for w in W]
    bs = [np.zeros_like(b) for b in p.biases]
    hbar = [None] * L

    # Adjoint of the backward (input-gradient) pass, walked bottom-up.
    gbar = v
    for l in range(L):
        ws[l] += deltas[l].T @ gbar
        dbar = gbar @ W[l].T
        s = 1.0 - tr.hidden[l] ** 2
        hbar[l] = -2.0 * tr.hidden[l] * dbar * gs[l]
        gbar = dbar * s
    ws[L] += gbar.sum(axis=0)[None, :]

    # Adjoint of the forward pass, top-down.
    for l in range(L - 1, -1, -1):
        zbar = hbar[l] * (1.0 - tr.hidden[l] ** 2)
        prev = tr.hidden[l - 1] if l > 0 else tr.x
        ws[l] += zbar.T @ prev
        bs[l] += zbar.sum(axis=0)
        if l > 0:
            hbar[l - 1] = hbar[l - 1] + zbar @ W[l]
    return NetParams(p.config, ws, bs)


def score_param_vjp(p: NetParams, x, v) -> NetParams:
    """Parameter gradient of ``g(theta) = <v, grad_x E(x; theta)>``.

    For a batch of inputs ``v`` must have the same shape and the result is
    the sum over rows.  Linear in ``v``.
    """
    _require(p, "energy")
    xb, _ = _as_batch(p, x)
    vb = np.asarray(v, dtype=np.float64).reshape(xb.shape)
    return score_param_vjp_trace(p, forward(p, xb), vb)


def expert_energies(p: NetParams, x) -> np.ndarray:
    """Per-unit contributions ``w[L+1]_a * h[L]_a(x)`` of the last hidden layer.

    Their sum plus the output bias is the energy.
    """
    _require(p, "energy")
    tr = forward(p, x)
    experts = tr.hidden[-1] * p.weights[-1][0]
    return experts[0] if np.ndim(x) == 1 else experts


def score_net_forward(p: NetParams, x) -> np.ndarray:
    _require(p, "score")
    tr = forward(p, x)
    return tr.output[0] if np.ndim(x) == 1 else tr.output


def score_net_param_vjp(p: NetParams, x, out_adj) -> NetParams:
    """``J_theta(psi)^T out_adj`` summed over rows, for a direct score net."""
    _require(p, "score")
    tr = forward(p, x)
    return _backprop(p, tr, np.asarray(out_adj, dtype=np.float64).reshape(tr.output.shape))


def score_of(p: NetParams, x) -> np.ndarray:
    """Score field of either net kind."""
    return score(p, x) if p.config.kind == "energy" else score_net_forward(p, x)


# -- checkpoints ------------------------------------------------------------

def save_params(directory, p: NetParams, metadata: dict | None = None) -> None:
    """Write ``model.json`` (config + metadata) and ``model.bin`` (little-endian f64)."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    doc = {"format_version": FORMAT_VERSION, **p.config.to_dict()}
    if metadata:
        doc["training"] = metadata
    (directory / "model.json").write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n")
    (directory / "model.bin").write_bytes(p.flat().astype("<f8").tobytes())


def load_params(directory) -> tuple[NetParams, dict]:
    directory = Path(directory)
    doc = json.loads((directory / "model.json").read_text())
    if doc.get("format_version") != FORMAT_VERSION:
        raise ValueError(f"unsupported checkpoint format {doc.get('format_version')!r}")
    cfg = NetConfig.from_dict(doc)
    raw = np.frombuffer((directory / "model.bin").read_bytes(), dtype="<f8").astype(np.float64)
    template = NetParams(
        cfg,
        [np.zeros((o, i)) for i, o in zip(cfg.layer_sizes[:-1], cfg.layer_sizes[1:])],
        [np.zeros(o) for o in cfg.layer_sizes[1:]],
    )
    return template.with_flat(raw), doc.get("training", {})
