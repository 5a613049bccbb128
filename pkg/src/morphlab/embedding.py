"""Latent-code inversion by Adam against the four-term face loss."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, NonFiniteError, OptimizationError, ShapeError
from .generator import Generator, NoiseBank
from .losses import TERMS, FaceLoss
from .optim import AdamState, adam_step
from .tensor import Tape, Tensor, backward

TRACE_HEADER = ("step", "total") + TERMS


@dataclass(frozen=True)
class OptimizationConfig:
    lr: float = 0.01
    steps: int = 1500
    init_samples: int = 10000
    init_low: float = -1.0
    init_high: float = 1.0
    seed: int = 0
    noise_steps: int = 0
    space: str = "z"

    def __post_init__(self):
        if self.steps < 1:
            raise ConfigError(f"steps must be >= 1, got {self.steps}")
        if self.init_samples < 1:
            raise ConfigError("init_samples must be >= 1")
        if not self.init_low < self.init_high:
            raise ConfigError(f"init bounds not ordered: [{self.init_low}, {self.init_high}]")
        if self.noise_steps < 0:
            raise ConfigError("noise_steps must be >= 0")
        if self.space not in ("z", "w"):
            raise ConfigError(f"space must be 'z' or 'w', got {self.space!r}")
        if self.lr <= 0:
            raise ConfigError("lr must be positive")


@dataclass
class EmbeddingResult:
    latent: np.ndarray
    best_loss: float
    best_step: int
    trace: np.ndarray  # rows of (total, wing, biom, percept, mse)
    space: str = "z"
    noise: NoiseBank | None = None
    noise_trace: np.ndarray | None = field(default=None, repr=False)

    def trace_table(self) -> str:
        lines = [",".join(TRACE_HEADER)]
        for i, row in enumerate(self.trace):
            lines.append(",".join([str(i)] + [repr(float(v)) for v in row]))
        return "\n".join(lines) + "\n"


def init_latent(shape, samples: int = 10000, low: float = -1.0, high: float = 1.0,
                seed: int = 0) -> np.ndarray:
    """Element-wise mean of ``samples`` uniform draws over the latent grid."""
    if samples < 1:
        raise ConfigError("samples must be >= 1")
    rng = np.random.default_rng(seed)
    total = np.zeros(shape)
    remaining = samples
    while remaining:
        chunk = min(remaining, 1000)
        total += rng.uniform(low, high, (chunk,) + tuple(shape)).sum(axis=0)
        remaining -= chunk
    return total / samples


def _evaluate(generator: Generator, latent, noise, prepared, loss: FaceLoss, space: str,
              wrt: str):
    try:
        with np.errstate(over="ignore", invalid="ignore"), Tape() as tape:
            z = Tensor(latent, requires_grad=(wrt == "latent"))
            maps = [Tensor(m, requires_grad=(wrt == "noise")) for m in noise.maps]
            image = generator.forward(z, NoiseBank(maps), space)
            total, parts = loss(image, prepared)
        value = float(total.data)
        if not np.isfinite(value):
            return value, parts, None
        grads = backward(tape, total)
    except NonFiniteError:
        return float("nan"), {}, None
    if wrt == "latent":
        return value, parts, [grads[z]]
    return value, parts, grads.wrt(*maps)


def embed_image(target, generator: Generator, config: OptimizationConfig | None = None,
                loss: FaceLoss | None = None, noise: NoiseBank | None = None,
                init: np.ndarray | None = None) -> EmbeddingResult:
    """Find the latent whose rendering best matches ``target``.

    Starts from the mean of uniform samples (or ``init``), runs
    ``config.steps`` Adam updates with the noise bank held fixed, and keeps
    the lowest-loss iterate. If ``config.noise_steps`` is positive the noise
    maps are refined afterwards with the latent frozen.
    """
    config = config or OptimizationConfig()
    loss = loss or FaceLoss()
    gcfg = generator.config
    target = np.asarray(target.data if isinstance(target, Tensor) else target, dtype=np.float64)
    expected = (3, gcfg.target_resolution, gcfg.target_resolution)
    if target.shape != expected:
        raise ShapeError(f"target image has shape {target.shape}, expected {expected}")
    noise = noise if noise is not None else generator.noise(config.seed)
    noise.validate(gcfg)
    prepared = loss.prepare(target)
    if init is None:
        latent = init_latent(gcfg.latent_shape, config.init_samples, config.init_low,
                             config.init_high, config.seed)
        if config.space == "w":
            latent = generator.mapping(latent).data
    else:
        latent = np.array(init, dtype=np.float64)
    state = AdamState(lr=config.lr)
    trace = np.zeros((config.steps, 1 + len(TERMS)))
    best, best_step, best_latent = np.inf, 0, latent.copy()
    for step in range(config.steps):
        value, parts, grads = _evaluate(generator, latent, noise, prepared, loss,
                                        config.space, "latent")
        if grads is None:
            raise OptimizationError(f"non-finite loss at step {step}", step, best_latent)
        trace[step] = [value] + [parts[t] for t in TERMS]
        if value < best:
            best, best_step, best_latent = value, step, latent.copy()
        (latent,), state = adam_step([latent], grads, state)
    result = EmbeddingResult(best_latent, best, best_step, trace, config.space)
    if config.noise_steps:
        result.noise, result.noise_trace = optimize_noise(
            target, best_latent, generator, noise, config.noise_steps, loss,
            lr=config.lr, space=config.space, prepared=prepared)
    return result


def optimize_noise(target, latent, generator: Generator, noise: NoiseBank, steps: int,
                   loss: FaceLoss | None = None, lr: float = 0.01, space: str = "z",
                   prepared: dict | None = None):
    """Refine the noise maps with the latent frozen.

    Returns ``(best_noise, trace)`` where ``trace`` holds the total loss per
    evaluated step; ``steps=0`` returns a copy of the input bank.
    """
    loss = loss or FaceLoss()
    if steps < 0:
        raise ConfigError("steps must be >= 0")
    noise.validate(generator.config)
    if prepared is None:
        prepared = loss.prepare(target)
    maps = [np.array(m, dtype=np.float64) for m in noise.maps]
    best_maps = [m.copy() for m in maps]
    best = np.inf
    state = AdamState(lr=lr)
    trace = np.zeros(steps)
    for step in range(steps):
        value, _, grads = _evaluate(generator, latent, NoiseBank(maps), prepared, loss,
                                    space, "noise")
        if grads is None:
            raise OptimizationError(f"non-finite loss at noise step {step}", step,
                                    NoiseBank(best_maps))
        trace[step] = value
        if value < best:
            best, best_maps = value, [m.copy() for m in maps]
        maps, state = adam_step(maps, grads, state)
    return NoiseBank(best_maps), trace
