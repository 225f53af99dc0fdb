"""Double-SGD training loop for the DEEN, DSM and CD-Langevin objectives.

Each iteration ``t`` draws its minibatch and noise from streams addressed by
``(seed, label, t)``.  A run stopped after ``k`` iterations and resumed from
its saved state therefore continues with exactly the draws an uninterrupted
run would have used.
"""

from __future__ import annotations

import json
import logging
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .core import Rng
from .data import Dataset, NoisyPairBatch, sample_joint
from .model import NetConfig, NetParams, init_params, load_params, save_params
from .objectives import cd_direction, deen_grad, dsm_grad
from .optim import OptState, apply_step

log = logging.getLogger(__name__)

KINDS = ("deen", "dsm", "cd")


class NumericalError(FloatingPointError):
    """Non-finite loss or parameters during training."""

    def __init__(self, iteration: int, what: str = "loss"):
        super().__init__(f"non-finite {what} at iteration {iteration}")
        self.iteration = iteration


@dataclass
class TrainConfig:
    sigma: float
    learning_rate: float = 0.001
    batch_size: int = 128
    iterations: int = 1000
    noisy_per_point: int = 1
    optimizer: str = "adam"
    seed: int = 0
    running_avg_window: int = 50
    resample_each_iter: bool = True

    def __post_init__(self):
        if not self.sigma > 0:
            raise ValueError("sigma must be > 0")
        if not self.learning_rate > 0:
            raise ValueError("learning_rate must be > 0")
        if self.batch_size < 1 or self.noisy_per_point < 1 or self.running_avg_window < 1:
            raise ValueError("batch_size, noisy_per_point and running_avg_window must be >= 1")
        if self.iterations < 0:
            raise ValueError("iterations must be >= 0")
        if self.optimizer not in ("adam", "sgd"):
            raise ValueError(f"unknown optimizer {self.optimizer!r}")


@dataclass
class LossHistory:
    window: int
    iterations: list = field(default_factory=list)
    raw: list = field(default_factory=list)
    running: list = field(default_factory=list)

    def append(self, iteration: int, loss: float) -> None:
        self.iterations.append(iteration)
        self.raw.append(loss)
        recent = self.raw[-self.window:]
        self.running.append(math.fsum(recent) / len(recent))

    def running_at(self, iteration: int) -> float:
        return self.running[self.iterations.index(iteration)]

    def to_csv(self, path) -> None:
        with open(path, "w") as fh:
            fh.write("iter,loss,running_avg\n")
            for it, l, r in zip(self.iterations, self.raw, self.running):
                fh.write(f"{it},{l!r},{r!r}\n")

    @classmethod
    def from_csv(cls, path, window: int) -> "LossHistory":
        hist = cls(window)
        lines = Path(path).read_text().splitlines()[1:]
        for line in lines:
            it, loss, _ = line.split(",")
            hist.append(int(it), float(loss))
        return hist


@dataclass
class TrainState:
    params: NetParams
    opt: OptState
    history: LossHistory
    iteration: int = 0


def net_config_for(kind: str, dim: int, hidden, seed: int) -> NetConfig:
    if kind == "dsm":
        return NetConfig.score_net(dim, hidden, seed)
    return NetConfig.energy_net(dim, hidden, seed)


def initial_state(kind: str, data: Dataset, cfg: TrainConfig, hidden=(32, 32, 32),
                  rng: Rng | None = None) -> TrainState:
    rng = rng or Rng(cfg.seed)
    net = net_config_for(kind, data.dim, hidden, cfg.seed)
    params = init_params(net, rng.stream("init"))
    return TrainState(params, OptState.fresh(cfg.optimizer, params),
                      LossHistory(cfg.running_avg_window))


def _batch(data: Dataset, cfg: TrainConfig, rng: Rng, t: int, joint) -> NoisyPairBatch:
    idx = rng.spawn("minibatch", t).integers(data.n, cfg.batch_size)
    if joint is None:
        return sample_joint(data, cfg.sigma, cfg.noisy_per_point, rng.spawn("noise", t), idx)
    # fixed pre-drawn pair set: pick one stored noisy copy per selected point
    m = cfg.noisy_per_point
    pick = idx * m + rng.spawn("copy", t).integers(m, cfg.batch_size)
    return NoisyPairBatch(joint.clean[pick], joint.noisy[pick], cfg.sigma)


def train(kind: str, data: Dataset, cfg: TrainConfig, rng: Rng | None = None,
          hidden=(32, 32, 32), state: TrainState | None = None,
          log_every: int = 0) -> TrainState:
    """Run ``cfg.iterations`` updates in total (counting any resumed ones).

    Returns the final state; ``state.params`` and ``state.history`` are the
    trained network and its ``(iter, loss, running_avg)`` record.  For ``cd``
    the recorded number is ``mean E(x) - E(x-)``, not an objective value.
    """
    if kind not in KINDS:
        raise ValueError(f"unknown training kind {kind!r}")
    rng = rng or Rng(cfg.seed)
    if state is None:
        state = initial_state(kind, data, cfg, hidden, rng)
    joint = None
    if not cfg.resample_each_iter:
        joint = sample_joint(data, cfg.sigma, cfg.noisy_per_point, rng.stream("joint"))

    params, opt, history = state.params, state.opt, state.history
    for t in range(state.iteration + 1, cfg.iterations + 1):
        try:
            if kind == "cd":
                idx = rng.spawn("minibatch", t).integers(data.n, cfg.batch_size)
                loss, grad = cd_direction(params, data.samples[idx], cfg.sigma, rng.spawn("noise", t))
            else:
                batch = _batch(data, cfg, rng, t, joint)
                loss, grad = (deen_grad if kind == "deen" else dsm_grad)(params, batch, cfg.sigma)
        except OverflowError as exc:
            raise NumericalError(t) from exc
        if not math.isfinite(loss):
            raise NumericalError(t)
        params, opt = apply_step(params, grad, opt, cfg.learning_rate)
        if not params.all_finite():
            raise NumericalError(t, "parameters")
        history.append(t, loss)
        if log_every and t % log_every == 0:
            log.info("iter %d loss %.6g running %.6g", t, loss, history.running[-1])
    return TrainState(params, opt, history, max(state.iteration, cfg.iterations))


# -- run directories ----------------------------------------------------------

def save_state(directory, state: TrainState, kind: str, cfg: TrainConfig) -> None:
    """Checkpoint: model.json/model.bin, optimizer moments, loss.csv."""
    directory = Path(directory)
    meta = {"kind": kind, "iteration": state.iteration, "config": asdict(cfg),
            "optimizer": {"kind": state.opt.kind, "t": state.opt.t}}
    save_params(directory, state.params, meta)
    if state.opt.m is not None:
        moments = np.concatenate([state.opt.m.flat(), state.opt.v.flat()])
        (directory / "optim.bin").write_bytes(moments.astype("<f8").tobytes())
    state.history.to_csv(directory / "loss.csv")


def load_state(directory) -> tuple[TrainState, str, TrainConfig]:
    directory = Path(directory)
    params, meta = load_params(directory)
    cfg = TrainConfig(**meta["config"])
    opt = OptState(meta["optimizer"]["kind"], int(meta["optimizer"]["t"]))
    if opt.kind == "adam":
        raw = np.frombuffer((directory / "optim.bin").read_bytes(), dtype="<f8").astype(np.float64)
        k = params.size
        opt.m = params.with_flat(raw[:k])
        opt.v = params.with_flat(raw[k:])
    history = LossHistory.from_csv(directory / "loss.csv", cfg.running_avg_window)
    return TrainState(params, opt, history, int(meta["iteration"])), meta["kind"], cfg


def training_meta(directory) -> dict:
    return json.loads((Path(directory) / "model.json").read_text()).get("training", {})
