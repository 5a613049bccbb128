"""Inversion loss: weighted Wing, HOG-cosine biometric, perceptual and MSE terms."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, ShapeError
from .features import (LandmarkSet, cosine_biometric_distance, hog_features,
                       init_landmark_params, init_pyramid_params, perceptual_pyramid,
                       soft_landmarks)
from .tensor import Tensor, add, as_tensor, log, mean, mul, sub, tabs, tsum, where

TERMS = ("wing", "biom", "percept", "mse")


@dataclass(frozen=True)
class LossWeights:
    alpha1: float = 0.02
    alpha2: float = 1.0
    alpha3: float = 1.0
    alpha4: float = 1.0
    wing_beta: float = 10.0
    wing_epsilon: float = 2.0
    lambdas: tuple = (1.0, 1.0, 1.0, 1.0)

    def __post_init__(self):
        alphas = self.alphas
        if any(a < 0 for a in alphas) or not any(a > 0 for a in alphas):
            raise ConfigError(f"loss weights must be nonnegative with one positive, got {alphas}")
        if self.wing_beta <= 0 or self.wing_epsilon <= 0:
            raise ConfigError("wing beta and epsilon must be positive")
        if len(self.lambdas) != 4:
            raise ConfigError("perceptual loss needs four stage factors")
        object.__setattr__(self, "lambdas", tuple(float(v) for v in self.lambdas))

    @property
    def alphas(self) -> tuple:
        return (self.alpha1, self.alpha2, self.alpha3, self.alpha4)

    def combine(self, parts) -> float:
        """Weighted sum of component values given in ``TERMS`` order or by name."""
        if isinstance(parts, dict):
            parts = [parts[t] for t in TERMS]
        return float(sum(a * float(v) for a, v in zip(self.alphas, parts, strict=True)))


def wing_loss(pred, target, beta: float = 10.0, epsilon: float = 2.0) -> Tensor:
    """Mean Wing penalty over all 2k coordinate residuals."""
    if beta <= 0 or epsilon <= 0:
        raise ConfigError("wing loss needs beta > 0 and epsilon > 0")
    pred = as_tensor(pred.points if isinstance(pred, LandmarkSet) else pred)
    target = as_tensor(target.points if isinstance(target, LandmarkSet) else target)
    if pred.shape != target.shape:
        raise ShapeError(f"wing loss: landmark count mismatch {pred.shape} vs {target.shape}")
    x = tabs(sub(pred, target))
    c = beta - beta * math.log(1 + beta / epsilon)
    small = x.data < beta
    log_branch = mul(log(add(1.0, mul(x, 1.0 / epsilon))), beta)
    return mean(where(small, log_branch, sub(x, c)))


def biometric_loss(generated, target, cell_size: int = 8, bins: int = 9) -> Tensor:
    """Cosine distance between soft-binned HOG descriptors."""
    a = hog_features(generated, cell_size, bins, soft=True)
    b = target if isinstance(target, Tensor) and target.ndim == 1 else None
    if b is None:
        b = hog_features(target, cell_size, bins, soft=True).values
    return cosine_biometric_distance(a.values, b)


def perceptual_loss(generated, target, params: dict, lambdas=(1.0, 1.0, 1.0, 1.0)) -> Tensor:
    """Sum over stages of ``lambda_j / N_j * ||F_j(a) - F_j(b)||^2``."""
    fa = perceptual_pyramid(generated, params)
    fb = target if isinstance(target, list) else perceptual_pyramid(target, params).maps
    total = None
    for lam, ma, mb, n in zip(lambdas, fa.maps, fb, fa.counts):
        diff = sub(ma, mb)
        term = mul(tsum(mul(diff, diff)), lam / n)
        total = term if total is None else add(total, term)
    return total


def mse_loss(generated, target) -> Tensor:
    generated, target = as_tensor(generated), as_tensor(target)
    if generated.shape != target.shape:
        raise ShapeError(f"mse: shape mismatch {generated.shape} vs {target.shape}")
    diff = sub(generated, target)
    return mean(mul(diff, diff))


@dataclass
class FaceLoss:
    """Frozen extractors plus weights; evaluates the four-term objective.

    ``prepare`` caches the target's landmarks, HOG and pyramid so repeated
    evaluations only pay for the generated image.
    """

    weights: LossWeights = field(default_factory=LossWeights)
    landmark_params: dict = field(default_factory=lambda: init_landmark_params(seed=7))
    pyramid_params: dict = field(default_factory=lambda: init_pyramid_params(seed=11))
    hog_cell: int = 8
    hog_bins: int = 9

    def prepare(self, target) -> dict:
        target = Tensor(np.asarray(target.data if isinstance(target, Tensor) else target))
        return {
            "image": target,
            "landmarks": soft_landmarks(target, self.landmark_params).points,
            "hog": hog_features(target, self.hog_cell, self.hog_bins, soft=True).values,
            "pyramid": perceptual_pyramid(target, self.pyramid_params).maps,
        }

    def __call__(self, generated, target) -> tuple:
        prepared = target if isinstance(target, dict) else self.prepare(target)
        return total_loss(generated, prepared, self)


def total_loss(generated, target, loss: FaceLoss) -> tuple:
    """Return ``(total, {term: value})`` for the weighted four-term objective.

    Terms with zero weight are skipped and reported as 0.
    """
    prepared = target if isinstance(target, dict) else loss.prepare(target)
    w = loss.weights
    generated = as_tensor(generated)
    parts = {}
    total = None
    for name, alpha in zip(TERMS, w.alphas):
        if alpha == 0:
            parts[name] = 0.0
            continue
        if name == "wing":
            pred = soft_landmarks(generated, loss.landmark_params)
            term = wing_loss(pred, prepared["landmarks"], w.wing_beta, w.wing_epsilon)
        elif name == "biom":
            term = biometric_loss(generated, prepared["hog"], loss.hog_cell, loss.hog_bins)
        elif name == "percept":
            term = perceptual_loss(generated, prepared["pyramid"], loss.pyramid_params, w.lambdas)
        else:
            term = mse_loss(generated, prepared["image"])
        parts[name] = float(term.data)
        weighted = mul(term, alpha)
        total = weighted if total is None else add(total, weighted)
    return total, parts
