"""The cooperative training loop.

Each epoch runs ``disc_train_count`` discriminator passes followed by one
generator pass over every training row.  In a discriminator step the
generator's samples for a row's neighborhood are snapped to valid feature
values, stacked on top of ``gen`` rows drawn from outside the neighborhood,
and the discriminator learns to tell the two halves apart.  In a generator
step the unsnapped samples go through the frozen discriminator and only the
generator is updated, on the squared error against the same labels.

Randomness comes from streams derived from ``(seed, purpose, epoch)``, so a
run split into several ``resume`` calls reproduces an uninterrupted run bit
for bit.
"""
from __future__ import annotations

import logging
import math
import time
from dataclasses import asdict, dataclass, field

import numpy as np

from .convnet import (
    DEFAULT_CLIP,
    DiscriminatorNet,
    GeneratorNet,
    GradientTape,
    Optimizer,
    backward,
    disc_objective,
    final_objective,
    synthesize,
)
from .dataset import EncodedMatrix, snap_feature_types
from .errors import ComplementTooSmall, NonFiniteLoss
from .neighborhood import NeighborhoodIndex, outside_batch

log = logging.getLogger(__name__)

_INIT, _SHUFFLE, _OUTSIDE = 0, 1, 2


@dataclass(frozen=True)
class TrainConfig:
    k: int = 5
    gen: int | None = None
    disc_train_count: int = 5
    neb_epochs: int = 10
    alpha_clip: float = DEFAULT_CLIP
    optimizer: str = "adam"
    lr: float = 1e-3
    seed: int = 42

    def __post_init__(self):
        if self.gen is None:
            object.__setattr__(self, "gen", self.k)
        if self.k < 2:
            raise ValueError("k must be at least 2")
        if self.gen < self.k:
            raise ValueError("gen must be at least k")
        if self.disc_train_count < 0:
            raise ValueError("disc_train_count must be non-negative")
        if self.neb_epochs < 1:
            raise ValueError("neb_epochs must be at least 1")
        if not 0.0 <= self.alpha_clip <= 1.0:
            raise ValueError("alpha_clip must lie in [0, 1]")

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, doc: dict) -> "TrainConfig":
        return cls(**doc)


@dataclass
class TrainReport:
    epochs: list = field(default_factory=list)
    disc_updates: int = 0
    gen_updates: int = 0
    wall_time: float = 0.0

    @property
    def loss_disc(self) -> list[float]:
        return [e["loss_disc"] for e in self.epochs]

    @property
    def loss_final(self) -> list[float]:
        return [e["loss_final"] for e in self.epochs]

    def to_dict(self, include_timing: bool = True) -> dict:
        out = {"epochs": self.epochs, "disc_updates": self.disc_updates, "gen_updates": self.gen_updates}
        if include_timing:
            out["wall_time"] = self.wall_time
        return out

    @classmethod
    def from_dict(cls, doc: dict) -> "TrainReport":
        return cls(list(doc.get("epochs", [])), doc.get("disc_updates", 0), doc.get("gen_updates", 0),
                   doc.get("wall_time", 0.0))


@dataclass
class TrainState:
    generator: GeneratorNet
    discriminator: DiscriminatorNet
    gen_opt: Optimizer
    disc_opt: Optimizer
    report: TrainReport
    epochs_done: int = 0


def make_labels(gen: int) -> np.ndarray:
    """``gen`` rows of (1, 0) for synthetic samples followed by ``gen`` rows of (0, 1)."""
    return np.vstack([np.tile([1.0, 0.0], (gen, 1)), np.tile([0.0, 1.0], (gen, 1))])


def _stream(seed: int, purpose: int, epoch: int | None = None) -> np.random.Generator:
    key = [seed, purpose] if epoch is None else [seed, purpose, epoch]
    return np.random.default_rng(key)


def init_state(n_features: int, cfg: TrainConfig) -> TrainState:
    rng = _stream(cfg.seed, _INIT)
    g = GeneratorNet.init(n_features, cfg.k, rng, cfg.alpha_clip)
    d = DiscriminatorNet.init(n_features, rng)
    return TrainState(g, d, Optimizer(cfg.optimizer, cfg.lr), Optimizer(cfg.optimizer, cfg.lr), TrainReport())


def _neighborhoods(index: NeighborhoodIndex, data: EncodedMatrix, x: int, reps: int, rng) -> np.ndarray:
    rows = index.neighbors[x]
    return np.stack([data.values[rng.permutation(rows)] for _ in range(reps)])


def _check_finite(loss: float, epoch: int, phase: str):
    if not math.isfinite(loss):
        raise NonFiniteLoss(f"non-finite {phase} loss in epoch {epoch + 1}", epoch=epoch + 1, phase=phase)


def run_epochs(state: TrainState, data: EncodedMatrix, index: NeighborhoodIndex, cfg: TrainConfig, n_epochs: int) -> TrainState:
    """Advance ``state`` by ``n_epochs`` epochs, mutating it in place."""
    n, f = data.values.shape
    if index.n_rows != n or index.k != cfg.k:
        raise ValueError("neighborhood index does not match the data or config")
    if n - cfg.k < cfg.gen:
        raise ComplementTooSmall(
            f"need at least k + gen = {cfg.k + cfg.gen} rows, have {n}", count=cfg.gen, available=n - cfg.k
        )
    g, d = state.generator, state.discriminator
    labels = make_labels(cfg.gen)
    reps = -(-cfg.gen // cfg.k)
    tape = GradientTape()
    started = time.perf_counter()
    for _ in range(n_epochs):
        epoch = state.epochs_done
        shuffle_rng = _stream(cfg.seed, _SHUFFLE, epoch)
        outside_rng = _stream(cfg.seed, _OUTSIDE, epoch)
        d_losses = []
        for _ in range(cfg.disc_train_count):
            for x in shuffle_rng.permutation(n):
                nbh = _neighborhoods(index, data, x, reps, shuffle_rng)
                outside = outside_batch(data, index.neighbors[x], cfg.gen, outside_rng)
                conv = synthesize(g, nbh).reshape(-1, f)[: cfg.gen]
                batch = np.vstack([snap_feature_types(data, conv), outside])
                loss = disc_objective(d, batch, labels, tape)
                _check_finite(loss, epoch, "discriminator")
                state.disc_opt.step(d.params(), backward(tape, "disc"))
                d_losses.append(loss)
        g_losses = []
        for x in shuffle_rng.permutation(n):
            nbh = _neighborhoods(index, data, x, reps, shuffle_rng)
            outside = outside_batch(data, index.neighbors[x], cfg.gen, outside_rng)
            loss = final_objective(g, d, nbh, outside, labels, tape, n_synthetic=cfg.gen)
            _check_finite(loss, epoch, "generator")
            state.gen_opt.step(g.params(), backward(tape, "final"))
            g_losses.append(loss)
        state.report.disc_updates += len(d_losses)
        state.report.gen_updates += len(g_losses)
        entry = {
            "epoch": epoch + 1,
            "loss_disc": float(np.mean(d_losses)) if d_losses else None,
            "loss_final": float(np.mean(g_losses)),
        }
        state.report.epochs.append(entry)
        state.epochs_done += 1
        log.info("epoch %d loss_disc=%s loss_final=%.6f", entry["epoch"],
                 "nan" if entry["loss_disc"] is None else f"{entry['loss_disc']:.6f}", entry["loss_final"])
    tape.clear()
    state.report.wall_time += time.perf_counter() - started
    return state


def train(data: EncodedMatrix, index: NeighborhoodIndex, cfg: TrainConfig):
    """Train from scratch; returns ``(generator, discriminator, report)``."""
    state = train_state(data, index, cfg)
    return state.generator, state.discriminator, state.report


def train_state(data: EncodedMatrix, index: NeighborhoodIndex, cfg: TrainConfig) -> TrainState:
    state = init_state(data.n_features, cfg)
    return run_epochs(state, data, index, cfg, cfg.neb_epochs)


def resume(bundle, extra_epochs: int):
    """Continue training a bundle; returns a new bundle with accumulated counters."""
    from .synthesizer import check_version

    check_version(bundle.version)
    if extra_epochs < 0:
        raise ValueError("extra_epochs must be non-negative")
    state = bundle.train_state_copy()
    if extra_epochs:
        run_epochs(state, bundle.data, bundle.index, bundle.config, extra_epochs)
    return bundle.with_state(state)
