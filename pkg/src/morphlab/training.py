"""Minimal adversarial training loop and a procedural face-like dataset."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, NonFiniteError, OptimizationError
from .generator import (Generator, GeneratorConfig, NoiseBank, discriminator_forward,
                        init_discriminator_params)
from .optim import AdamState, adam_step
from .tensor import Tape, Tensor, backward, mean, neg, softplus

TRACE_HEADER = ("step", "d_loss", "g_loss", "real_score", "fake_score")


def procedural_faces(count: int = 64, resolution: int = 16, seed: int = 0) -> np.ndarray:
    """Smooth synthetic "faces": a shaded ellipse with two eyes and a mouth bar.

    Returns ``(count, 3, resolution, resolution)`` in [-1, 1].
    """
    rng = np.random.default_rng(seed)
    coords = (np.arange(resolution) + 0.5) / resolution * 2 - 1
    yy, xx = np.meshgrid(coords, coords, indexing="ij")
    images = np.empty((count, 3, resolution, resolution))
    for i in range(count):
        cx, cy = rng.uniform(-0.1, 0.1, 2)
        ax, ay = rng.uniform(0.55, 0.75), rng.uniform(0.7, 0.9)
        skin = rng.uniform(0.1, 0.8, 3)
        background = rng.uniform(-0.9, -0.3, 3)
        face = np.clip(1 - ((xx - cx) / ax) ** 2 - ((yy - cy) / ay) ** 2, 0, 1) ** 0.5
        eyes = sum(np.exp(-(((xx - cx - s * 0.3 * ax) ** 2 + (yy - cy + 0.25 * ay) ** 2) / 0.01))
                   for s in (-1, 1))
        mouth = np.exp(-((xx - cx) ** 2 / 0.08 + (yy - cy - 0.45 * ay) ** 2 / 0.005))
        shade = face * (1 - 0.9 * eyes - 0.6 * mouth)
        images[i] = background[:, None, None] + (skin - background)[:, None, None] * shade
    return np.clip(images, -1.0, 1.0)


@dataclass
class SmokeTrainResult:
    trace: np.ndarray  # rows of (d_loss, g_loss, mean real score, mean fake score)
    generator_params: dict
    discriminator_params: dict
    final_real: float
    final_fake: float

    def trace_table(self) -> str:
        lines = [",".join(TRACE_HEADER)]
        for i, row in enumerate(self.trace):
            lines.append(",".join([str(i)] + [repr(float(v)) for v in row]))
        return "\n".join(lines) + "\n"


def gan_smoke_train(config: GeneratorConfig, dataset, steps: int = 50, batch: int = 8,
                    lr: float = 0.002, seed: int = 0, d_lr: float | None = None,
                    generator_params: dict | None = None, discriminator_params: dict | None = None) -> SmokeTrainResult:
    """Alternate one discriminator and one generator Adam step per iteration.

    Losses are the non-saturating pair ``softplus(-D(x)) + softplus(D(G(z)))``
    for D and ``softplus(-D(G(z)))`` for G, without gradient penalty. The
    final real/fake scores are measured over the whole dataset against an
    equally sized batch of fresh samples.
    """
    dataset = np.asarray(dataset, dtype=np.float64)
    res = config.target_resolution
    if dataset.ndim != 4 or dataset.shape[1:] != (3, res, res) or len(dataset) == 0:
        raise ConfigError(f"dataset must be (N, 3, {res}, {res}), got {dataset.shape}")
    if not np.isfinite(dataset).all() or np.abs(dataset).max() > 1:
        raise ConfigError("dataset values must be finite and lie in [-1, 1]")
    if steps < 0 or batch < 1:
        raise ConfigError(f"steps must be >= 0 and batch >= 1, got {steps}, {batch}")
    gen = Generator(config, generator_params)
    g_params = {k: np.array(v, dtype=np.float64) for k, v in gen.params.items()}
    d_params = (init_discriminator_params(res, seed=seed + 1) if discriminator_params is None
                else {k: np.array(v, dtype=np.float64) for k, v in discriminator_params.items()})
    g_state = AdamState(lr=lr, beta1=0.0, beta2=0.99)
    d_state = AdamState(lr=4 * lr if d_lr is None else d_lr, beta1=0.0, beta2=0.99)
    rng = np.random.default_rng(seed)
    trace = np.zeros((steps, 4))

    def sample_latents(n):
        return rng.uniform(-1, 1, (n,) + config.latent_shape)

    def sample_noise(n):
        return NoiseBank.sample(config, int(rng.integers(2 ** 31)), batch=n)

    for step in range(steps):
        try:
            with np.errstate(over="ignore", invalid="ignore"):
                d_params, g_params, d_state, g_state, trace[step] = _train_step(
                    config, dataset, batch, rng, d_params, g_params, d_state, g_state,
                    sample_latents, sample_noise)
        except NonFiniteError as exc:
            raise OptimizationError(f"non-finite value at step {step}: {exc}", step) from exc
        if not np.isfinite(trace[step]).all():
            raise OptimizationError(f"non-finite loss at step {step}", step)

    n = len(dataset)
    fakes = Generator(config, g_params).generate(sample_latents(n), sample_noise(n))
    final_real = float(discriminator_forward(dataset, d_params).data.mean())
    final_fake = float(discriminator_forward(fakes, d_params).data.mean())
    return SmokeTrainResult(trace, g_params, d_params, final_real, final_fake)


def _adam_update(params: dict, tensors: dict, grads, state: AdamState):
    names = sorted(params)
    new, state = adam_step([params[k] for k in names], grads.wrt(*[tensors[k] for k in names]),
                           state)
    return dict(zip(names, new)), state


def _train_step(config, dataset, batch, rng, d_params, g_params, d_state, g_state,
                sample_latents, sample_noise):
    real = dataset[rng.choice(len(dataset), size=batch, replace=len(dataset) < batch)]
    fake = Generator(config, g_params).generate(sample_latents(batch), sample_noise(batch))
    with Tape() as tape:
        dp = {k: Tensor(v, requires_grad=True) for k, v in d_params.items()}
        real_scores = discriminator_forward(Tensor(real), dp)
        fake_scores = discriminator_forward(Tensor(fake), dp)
        d_loss = mean(softplus(neg(real_scores))) + mean(softplus(fake_scores))
    d_params, d_state = _adam_update(d_params, dp, backward(tape, d_loss), d_state)

    z, noise = sample_latents(batch), sample_noise(batch)
    with Tape() as tape:
        gp = {k: Tensor(v, requires_grad=True) for k, v in g_params.items()}
        images = Generator(config, gp).forward(Tensor(z), noise)
        g_loss = mean(softplus(neg(discriminator_forward(images, d_params))))
    g_params, g_state = _adam_update(g_params, gp, backward(tape, g_loss), g_state)
    row = [float(d_loss.data), float(g_loss.data),
           float(real_scores.data.mean()), float(fake_scores.data.mean())]
    return d_params, g_params, d_state, g_state, row
