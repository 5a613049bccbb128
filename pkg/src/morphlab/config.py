"""Plain-text ``key = value`` run configuration.

Blank lines and ``#`` comments are ignored; list values are comma
separated. Unknown keys are rejected. ``MORPHLAB_SEED`` in the environment
overrides ``seed``.

Keys and defaults::

    # generator
    k_local = 16            d = 32                 base_resolution = 4
    target_resolution = 16  channels = 32,32,16    attention = duplex,duplex,none
    mapping_depth = 2       attention_dim = 32     layers_per_block = 2
    noise_init = 0.1        generator_seed = 0     checkpoint =
    # loss
    alpha1 = 0.02  alpha2 = 1.0  alpha3 = 1.0  alpha4 = 1.0
    wing_beta = 10.0  wing_epsilon = 2.0  lambdas = 1,1,1,1
    hog_cell = 8  hog_bins = 9  landmarks = 68  extractor_seed = 0  pyramid_weights =
    # optimization
    lr = 0.01  steps = 1500  init_samples = 10000  init_low = -1.0  init_high = 1.0
    noise_steps = 0  space = z  seed = 0
    # morphing and evaluation
    lambda = 0.5  morph_noise_seed =  inherit_noise = false  target_fmr = 0.001
    train_batch = 8  train_lr = 0.002
"""

from __future__ import annotations

import os
from dataclasses import dataclass, field, fields, replace

from .embedding import OptimizationConfig
from .errors import ConfigError
from .features import init_landmark_params, init_pyramid_params
from .generator import GeneratorConfig
from .losses import FaceLoss, LossWeights
from .morph import MorphSpec

SEED_ENV = "MORPHLAB_SEED"


@dataclass(frozen=True)
class RunConfig:
    k_local: int = 16
    d: int = 32
    base_resolution: int = 4
    target_resolution: int = 16
    channels: tuple = (32, 32, 16)
    attention: tuple = ("duplex", "duplex", "none")
    mapping_depth: int = 2
    attention_dim: int = 32
    layers_per_block: int = 2
    noise_init: float = 0.1
    generator_seed: int = 0
    checkpoint: str = ""
    alpha1: float = 0.02
    alpha2: float = 1.0
    alpha3: float = 1.0
    alpha4: float = 1.0
    wing_beta: float = 10.0
    wing_epsilon: float = 2.0
    lambdas: tuple = (1.0, 1.0, 1.0, 1.0)
    hog_cell: int = 8
    hog_bins: int = 9
    landmarks: int = 68
    extractor_seed: int = 0
    pyramid_weights: str = ""
    lr: float = 0.01
    steps: int = 1500
    init_samples: int = 10000
    init_low: float = -1.0
    init_high: float = 1.0
    noise_steps: int = 0
    space: str = "z"
    seed: int = 0
    lam: float = field(default=0.5, metadata={"key": "lambda"})
    morph_noise_seed: int | None = None
    inherit_noise: bool = False
    target_fmr: float = 0.001
    train_batch: int = 8
    train_lr: float = 0.002

    def generator_config(self) -> GeneratorConfig:
        return GeneratorConfig(
            k_local=self.k_local, d=self.d, base_resolution=self.base_resolution,
            target_resolution=self.target_resolution, channels=self.channels,
            attention=self.attention, mapping_depth=self.mapping_depth,
            attention_dim=self.attention_dim, layers_per_block=self.layers_per_block,
            noise_init=self.noise_init, seed=self.generator_seed)

    def loss_weights(self) -> LossWeights:
        return LossWeights(self.alpha1, self.alpha2, self.alpha3, self.alpha4,
                           self.wing_beta, self.wing_epsilon, self.lambdas)

    def face_loss(self) -> FaceLoss:
        if self.pyramid_weights:
            from .io import load_checkpoint
            pyramid = load_checkpoint(self.pyramid_weights)
        else:
            pyramid = init_pyramid_params(seed=self.extractor_seed + 11)
        return FaceLoss(self.loss_weights(),
                        init_landmark_params(self.landmarks, seed=self.extractor_seed + 7),
                        pyramid, self.hog_cell, self.hog_bins)

    def optimization(self) -> OptimizationConfig:
        return OptimizationConfig(self.lr, self.steps, self.init_samples, self.init_low,
                                  self.init_high, self.seed, self.noise_steps, self.space)

    def morph_spec(self) -> MorphSpec:
        return MorphSpec(self.lam, self.morph_noise_seed, self.inherit_noise)


def _key(f) -> str:
    return f.metadata.get("key", f.name)


_FIELDS = {_key(f): f for f in fields(RunConfig)}
_TUPLE_TYPES = {"channels": int, "attention": str, "lambdas": float}


def _convert(key: str, f, raw: str):
    raw = raw.strip()
    default = f.default
    try:
        if key in _TUPLE_TYPES:
            return tuple(_TUPLE_TYPES[key](v.strip()) for v in raw.split(",") if v.strip())
        if f.name == "morph_noise_seed":
            return None if raw == "" else int(raw)
        if isinstance(default, bool):
            if raw.lower() not in ("true", "false", "1", "0", "yes", "no"):
                raise ValueError(raw)
            return raw.lower() in ("true", "1", "yes")
        if isinstance(default, int):
            return int(raw)
        if isinstance(default, float):
            return float(raw)
        return raw
    except ValueError:
        raise ConfigError(f"bad value for {key!r}: {raw!r}") from None


def parse_config(text: str, base: RunConfig | None = None) -> RunConfig:
    values = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value'")
        key, raw = (s.strip() for s in line.split("=", 1))
        if key not in _FIELDS:
            raise ConfigError(f"line {lineno}: unknown key {key!r}")
        f = _FIELDS[key]
        values[f.name] = _convert(key, f, raw)
    return replace(base or RunConfig(), **values)


def load_config(path: str | None = None, seed: int | None = None,
                environ=os.environ) -> RunConfig:
    """Read ``path`` (if any), then apply ``MORPHLAB_SEED`` and an explicit seed."""
    cfg = RunConfig()
    if path:
        with open(path, encoding="utf-8") as fh:
            cfg = parse_config(fh.read())
    env = environ.get(SEED_ENV)
    if env not in (None, ""):
        try:
            cfg = replace(cfg, seed=int(env))
        except ValueError:
            raise ConfigError(f"{SEED_ENV} must be an integer, got {env!r}") from None
    if seed is not None:
        cfg = replace(cfg, seed=seed)
    return cfg
