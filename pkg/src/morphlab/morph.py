"""Latent morphing and demorphing, and the image-level pipelines built on them."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .embedding import EmbeddingResult, OptimizationConfig, embed_image
from .errors import ConfigError, ShapeError
from .generator import Generator, NoiseBank
from .losses import FaceLoss


@dataclass(frozen=True)
class MorphSpec:
    lam: float = 0.5
    noise_seed: int | None = None  # None: derive from the optimization seed
    inherit_noise: bool = False

    def __post_init__(self):
        _check_lambda(self.lam)


def _check_lambda(lam) -> None:
    lam_arr = np.asarray(lam, dtype=np.float64)
    if not np.all((lam_arr > 0) & (lam_arr < 1)):
        raise ConfigError(f"lambda must lie in the open interval (0, 1), got {lam}")


def _pair(a, b, name):
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise ShapeError(f"{name}: latent shapes differ, {a.shape} vs {b.shape}")
    return a, b


def _weight(lam, like: np.ndarray):
    # a per-component lambda is a column over latent rows
    lam = np.asarray(lam, dtype=np.float64)
    return lam.reshape(-1, 1) if lam.ndim == 1 and like.ndim == 2 else lam


def morph_latents(z1, z2, lam=0.5) -> np.ndarray:
    """``lam * z1 + (1 - lam) * z2``."""
    z1, z2 = _pair(z1, z2, "morph")
    _check_lambda(lam)
    w = _weight(lam, z1)
    return w * z1 + (1 - w) * z2


def demorph_latents(z, z1, lam=0.5) -> np.ndarray:
    """Recover the second contributor: ``(z - lam * z1) / (1 - lam)``."""
    z, z1 = _pair(z, z1, "demorph")
    _check_lambda(lam)
    w = _weight(lam, z)
    return (z - w * z1) / (1 - w)


@dataclass
class MorphResult:
    image: np.ndarray
    latent: np.ndarray
    embeddings: tuple


@dataclass
class DemorphResult:
    image: np.ndarray
    latent: np.ndarray
    embeddings: tuple


def _noise_for(spec: MorphSpec, config: OptimizationConfig, generator: Generator,
               embedded: EmbeddingResult) -> NoiseBank:
    if spec.inherit_noise and embedded.noise is not None:
        return embedded.noise
    seed = config.seed if spec.noise_seed is None else spec.noise_seed
    return generator.noise(seed)


def morph_images(x1, x2, spec: MorphSpec, generator: Generator,
                 config: OptimizationConfig | None = None, loss: FaceLoss | None = None,
                 noise: NoiseBank | None = None) -> MorphResult:
    """Embed both faces, interpolate their latents and render the morph.

    ``noise`` is the bank held fixed while embedding; the morph itself is
    rendered with a freshly seeded bank unless ``spec.inherit_noise``.
    """
    config = config or OptimizationConfig()
    r1 = embed_image(x1, generator, config, loss, noise)
    r2 = r1 if np.array_equal(np.asarray(x1), np.asarray(x2)) else \
        embed_image(x2, generator, config, loss, noise)
    z = morph_latents(r1.latent, r2.latent, spec.lam)
    image = generator.generate(z, _noise_for(spec, config, generator, r1), config.space)
    return MorphResult(image, z, (r1, r2))


def demorph_image(m, b1_live, spec: MorphSpec, generator: Generator,
                  config: OptimizationConfig | None = None, loss: FaceLoss | None = None,
                  noise: NoiseBank | None = None) -> DemorphResult:
    """Restore the second contributor of morph ``m`` given a live capture of the first."""
    config = config or OptimizationConfig()
    rm = embed_image(m, generator, config, loss, noise)
    r1 = embed_image(b1_live, generator, config, loss, noise)
    z2 = demorph_latents(rm.latent, r1.latent, spec.lam)
    image = generator.generate(z2, _noise_for(spec, config, generator, rm), config.space)
    return DemorphResult(image, z2, (rm, r1))
