"""Bipartite-attention generator and a small convolutional discriminator.

The generator maps a compositional latent of ``k_local + 1`` rows (local
style components followed by one global component) through a row-wise MLP,
then drives a stack of synthesis blocks. Each block adds its noise map,
runs synthesis layers (spatial affine warp, bias + activation, bipartite
attention against the latents) and a 2x up-sampling convolution. The last
block has no attention and ends in an RGB head.

Attention is always positions x latents, never positions x positions.
"""

from __future__ import annotations

import contextlib
import math
import threading
import tracemalloc
from dataclasses import dataclass, field, replace

import numpy as np

from . import functional as F
from .errors import ConfigError, ShapeError
from .tensor import Tensor, add, as_tensor, matmul, mul, reshape, tanh, transpose

ATTENTION_MODES = ("simplex", "duplex", "none")
ROW_SUM_TOL = 1e-6


@dataclass(frozen=True)
class GeneratorConfig:
    k_local: int = 16
    d: int = 32
    base_resolution: int = 4
    target_resolution: int = 32
    channels: tuple = (64, 64, 32, 16)
    attention: tuple = ("duplex", "duplex", "duplex", "none")
    mapping_depth: int = 2
    attention_dim: int = 32
    layers_per_block: int = 2
    noise_init: float = 0.1
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "channels", tuple(int(c) for c in self.channels))
        object.__setattr__(self, "attention", tuple(self.attention))
        if self.k_local < 1 or self.d < 1:
            raise ConfigError(f"k_local and d must be >= 1, got {self.k_local}, {self.d}")
        if self.mapping_depth < 0 or self.attention_dim < 1 or self.layers_per_block < 1:
            raise ConfigError("mapping_depth >= 0, attention_dim >= 1, layers_per_block >= 1")
        base, target = self.base_resolution, self.target_resolution
        ratio = target // base if base > 0 else 0
        if base < 1 or target < base or target % base or ratio & (ratio - 1):
            raise ConfigError(f"target_resolution {target} must be base {base} times a power of two")
        n = self.n_blocks
        if len(self.channels) != n or any(c < 1 for c in self.channels):
            raise ConfigError(f"expected {n} positive channel widths, got {self.channels}")
        if len(self.attention) != n:
            raise ConfigError(f"expected {n} attention modes, got {self.attention}")
        for mode in self.attention:
            if mode not in ATTENTION_MODES:
                raise ConfigError(f"unknown attention mode {mode!r}")
        if self.attention[-1] != "none":
            raise ConfigError("the final block must have attention mode 'none'")

    @property
    def n_blocks(self) -> int:
        return int(round(math.log2(self.target_resolution // self.base_resolution))) + 1

    @property
    def n_latents(self) -> int:
        return self.k_local + 1

    @property
    def latent_shape(self) -> tuple:
        return (self.k_local + 1, self.d)

    def resolution(self, block: int) -> int:
        return self.base_resolution * 2 ** block

    def layers(self, block: int) -> int:
        return 1 if block == self.n_blocks - 1 else self.layers_per_block

    @classmethod
    def small(cls, target_resolution: int = 16, **overrides) -> "GeneratorConfig":
        """Desk-scale configuration with default widths for ``target_resolution``."""
        n = int(round(math.log2(target_resolution // 4))) + 1
        widths = [64, 64, 32, 16, 16, 16, 16, 16, 16][:n]
        if n <= 3:
            widths = [32, 32, 16][:n]
        kwargs = dict(target_resolution=target_resolution, channels=tuple(widths),
                      attention=("duplex",) * (n - 1) + ("none",))
        kwargs.update(overrides)
        return cls(**kwargs)


@dataclass
class NoiseBank:
    """One Gaussian noise map per synthesis block."""

    maps: list = field(default_factory=list)

    @classmethod
    def sample(cls, config: GeneratorConfig, seed: int, batch: int | None = None) -> "NoiseBank":
        rng = np.random.default_rng(seed)
        maps = []
        for b in range(config.n_blocks):
            r = config.resolution(b)
            shape = (r, r) if batch is None else (batch, r, r)
            maps.append(rng.standard_normal(shape))
        return cls(maps)

    @classmethod
    def zeros(cls, config: GeneratorConfig) -> "NoiseBank":
        return cls([np.zeros((config.resolution(b),) * 2) for b in range(config.n_blocks)])

    def copy(self) -> "NoiseBank":
        return NoiseBank([np.array(m.data if isinstance(m, Tensor) else m) for m in self.maps])

    def validate(self, config: GeneratorConfig) -> None:
        if len(self.maps) != config.n_blocks:
            raise ShapeError(f"noise bank has {len(self.maps)} maps, config has {config.n_blocks} blocks")
        for b, m in enumerate(self.maps):
            r = config.resolution(b)
            if tuple(m.shape[-2:]) != (r, r) or len(m.shape) not in (2, 3):
                raise ShapeError(f"noise map {b} has shape {tuple(m.shape)}, expected (.., {r}, {r})")


def _init(rng, shape, fan_in, gain=1.0):
    return rng.standard_normal(shape) * (gain / math.sqrt(fan_in))


def init_generator_params(config: GeneratorConfig) -> dict:
    rng = np.random.default_rng(config.seed)
    p = {}
    d, a = config.d, config.attention_dim
    lrelu_gain = math.sqrt(2 / (1 + F.LEAKY_SLOPE ** 2))
    for i in range(config.mapping_depth):
        p[f"mapping.{i}.weight"] = _init(rng, (d, d), d, lrelu_gain)
        p[f"mapping.{i}.bias"] = np.zeros(d)
    c0, r0 = config.channels[0], config.base_resolution
    p["synthesis.const"] = rng.standard_normal((c0, r0, r0))
    for b in range(config.n_blocks):
        c, r = config.channels[b], config.resolution(b)
        mode = config.attention[b]
        p[f"b{b}.noise_strength"] = np.full(c, config.noise_init)
        for layer in range(config.layers(b)):
            pre = f"b{b}.l{layer}"
            p[f"{pre}.theta"] = np.eye(2, 3)
            p[f"{pre}.bias"] = np.zeros(c)
            if mode == "none":
                continue
            p[f"{pre}.pos"] = rng.standard_normal((r * r, c)) * 0.5
            p[f"{pre}.wq"] = _init(rng, (c, a), c)
            p[f"{pre}.wk"] = _init(rng, (d, a), d)
            p[f"{pre}.wv"] = _init(rng, (d, a), d)
            p[f"{pre}.wgamma"] = _init(rng, (a, c), a, 0.5)
            p[f"{pre}.bgamma"] = np.ones(c)
            p[f"{pre}.wbeta"] = _init(rng, (a, c), a, gain=2.0)
            p[f"{pre}.bbeta"] = np.zeros(c)
            if mode == "duplex":
                p[f"{pre}.uq"] = _init(rng, (d, a), d)
                p[f"{pre}.uk"] = _init(rng, (c, a), c)
                p[f"{pre}.uv"] = _init(rng, (c, a), c)
                p[f"{pre}.uo"] = _init(rng, (a, d), a, 0.5)
        if b < config.n_blocks - 1:
            c_next = config.channels[b + 1]
            p[f"b{b}.conv.weight"] = _init(rng, (c_next, c, 3, 3), 9 * c, lrelu_gain)
            p[f"b{b}.conv.bias"] = np.zeros(c_next)
    c_last = config.channels[-1]
    p["rgb.weight"] = _init(rng, (3, c_last, 1, 1), c_last)
    p["rgb.bias"] = np.zeros(3)
    return p


# ---------------------------------------------------------------------------
# attention

_attn_local = threading.local()


@contextlib.contextmanager
def record_attention():
    """Collect every position-to-latent attention matrix computed inside the block."""
    log = []
    prev = getattr(_attn_local, "log", None)
    _attn_local.log = log
    try:
        yield log
    finally:
        _attn_local.log = prev


def _check_attention(attn: np.ndarray, rows: int, cols: int) -> None:
    if attn.shape[-2:] != (rows, cols):
        raise ShapeError(f"attention matrix has shape {attn.shape[-2:]}, expected ({rows}, {cols})")
    if attn.min() < 0 or np.abs(attn.sum(axis=-1) - 1).max() > ROW_SUM_TOL:
        raise ShapeError("attention rows are not probability vectors")


def bipartite_attention(x, z, mode: str, params: dict):
    """One bipartite attention step between features and latents.

    ``x`` is ``(N, m, c)`` (positions by channels), ``z`` is ``(N, n, d)``.
    Returns ``(x_new, z_new, attention)``; ``z_new`` is ``z`` itself in
    simplex mode. ``params`` holds keys ``pos, wq, wk, wv, wgamma, bgamma,
    wbeta, bbeta`` and, for duplex, ``uq, uk, uv, uo``.
    """
    if mode not in ("simplex", "duplex"):
        raise ConfigError(f"unknown attention mode {mode!r}")
    x, z = as_tensor(x), as_tensor(z)
    if x.ndim != 3 or z.ndim != 3 or x.shape[0] != z.shape[0]:
        raise ShapeError(f"bipartite_attention: incompatible shapes {x.shape} and {z.shape}")
    n_batch, m, _ = x.shape
    n = z.shape[1]
    if m == 0:
        raise ShapeError("bipartite_attention: empty feature grid")
    p = params
    if mode == "duplex":
        # latents query the image features, then feed back through a residual projection
        qz = matmul(z, p["uq"])
        kx = matmul(x, p["uk"])
        vx = matmul(x, p["uv"])
        scale = 1.0 / math.sqrt(qz.shape[-1])
        attn_z = F.softmax(mul(matmul(qz, transpose(kx, (0, 2, 1))), scale))
        _check_attention(attn_z.data, n, m)
        z = add(z, matmul(matmul(attn_z, vx), p["uo"]))
    q = matmul(add(x, p["pos"]), p["wq"])
    k = matmul(z, p["wk"])
    v = matmul(z, p["wv"])
    scale = 1.0 / math.sqrt(q.shape[-1])
    attn = F.softmax(mul(matmul(q, transpose(k, (0, 2, 1))), scale))
    _check_attention(attn.data, m, n)
    log = getattr(_attn_local, "log", None)
    if log is not None:
        log.append(attn.data)
    read = matmul(attn, v)
    gamma = F.linear(read, p["wgamma"], p["bgamma"])
    beta = F.linear(read, p["wbeta"], p["bbeta"])
    x_new = add(mul(gamma, F.feature_normalize(x, axes=(1,))), beta)
    return x_new, z, attn


def measure_attention_memory(ms=(16, 64, 256), k_local=16, d=32, channels=32,
                             attention_dim=32, seed=0) -> list:
    """Peak bytes traced while running one simplex attention step per grid size."""
    rng = np.random.default_rng(seed)
    n = k_local + 1
    peaks = []
    for m in ms:
        params = {
            "pos": rng.standard_normal((m, channels)),
            "wq": rng.standard_normal((channels, attention_dim)),
            "wk": rng.standard_normal((d, attention_dim)),
            "wv": rng.standard_normal((d, attention_dim)),
            "wgamma": rng.standard_normal((attention_dim, channels)),
            "bgamma": np.ones(channels),
            "wbeta": rng.standard_normal((attention_dim, channels)),
            "bbeta": np.zeros(channels),
        }
        params = {key: Tensor(v) for key, v in params.items()}
        x = Tensor(rng.standard_normal((1, m, channels)))
        z = Tensor(rng.standard_normal((1, n, d)))
        tracemalloc.start()
        tracemalloc.reset_peak()
        base = tracemalloc.get_traced_memory()[0]
        bipartite_attention(x, z, "simplex", params)
        peak = tracemalloc.get_traced_memory()[1] - base
        tracemalloc.stop()
        peaks.append(peak)
    return peaks


# ---------------------------------------------------------------------------
# forwards

def _tensors(params: dict) -> dict:
    return {k: as_tensor(v) for k, v in params.items()}


def _batched_latent(z, config: GeneratorConfig):
    z = as_tensor(z)
    squeeze = z.ndim == 2
    if squeeze:
        z = reshape(z, (1,) + z.shape)
    if z.ndim != 3 or z.shape[1:] != config.latent_shape:
        raise ShapeError(f"latent has shape {z.shape}, expected (.., {config.n_latents}, {config.d})")
    return z, squeeze


def mapping_forward(z, params: dict, config: GeneratorConfig) -> Tensor:
    """Row-wise feed-forward transform of the latent; depth 0 is the identity."""
    z = as_tensor(z)
    if z.shape[-2:] != config.latent_shape:
        raise ShapeError(f"mapping: latent has shape {z.shape}, expected {config.latent_shape}")
    p = _tensors(params)
    h = z
    for i in range(config.mapping_depth):
        h = F.leaky_relu(F.linear(h, p[f"mapping.{i}.weight"], p[f"mapping.{i}.bias"]))
    return h


def _layer_params(p: dict, prefix: str) -> dict:
    start = len(prefix) + 1
    return {k[start:]: v for k, v in p.items() if k.startswith(prefix + ".")}


def synthesis_forward(zp, noise: NoiseBank, params: dict, config: GeneratorConfig,
                      return_latents: bool = False):
    """Render an image in [-1, 1] of shape ``(3, T, T)`` (or ``(N, 3, T, T)``)."""
    zp, squeeze = _batched_latent(zp, config)
    noise.validate(config)
    p = _tensors(params)
    n_batch = zp.shape[0]
    x = None
    for b in range(config.n_blocks):
        c, r = config.channels[b], config.resolution(b)
        nmap = as_tensor(noise.maps[b])
        nmap = reshape(nmap, (nmap.shape[0] if nmap.ndim == 3 else 1, 1, r, r))
        if nmap.shape[0] not in (1, n_batch):
            raise ShapeError(f"noise map {b} batch {nmap.shape[0]} does not match latent batch {n_batch}")
        injected = mul(reshape(p[f"b{b}.noise_strength"], (1, c, 1, 1)), nmap)
        if b == 0:
            x = add(reshape(p["synthesis.const"], (1, c, r, r)), injected)
            if x.shape[0] != n_batch:
                x = add(x, Tensor(np.zeros((n_batch, 1, 1, 1))))
        else:
            x = add(x, injected)
        mode = config.attention[b]
        for layer in range(config.layers(b)):
            pre = f"b{b}.l{layer}"
            x = F.affine_warp(x, p[f"{pre}.theta"])
            x = F.leaky_relu(add(x, reshape(p[f"{pre}.bias"], (1, c, 1, 1))))
            if mode != "none":
                xs = transpose(reshape(x, (n_batch, c, r * r)), (0, 2, 1))
                xs, zp, _ = bipartite_attention(xs, zp, mode, _layer_params(p, pre))
                x = reshape(transpose(xs, (0, 2, 1)), (n_batch, c, r, r))
        if b < config.n_blocks - 1:
            x = F.leaky_relu(F.conv2d(x, p[f"b{b}.conv.weight"], p[f"b{b}.conv.bias"], up=True))
    img = tanh(F.conv2d(x, p["rgb.weight"], p["rgb.bias"]))
    if squeeze:
        img = reshape(img, img.shape[1:])
        zp = reshape(zp, zp.shape[1:])
    return (img, zp) if return_latents else img


def generator_forward(z, noise: NoiseBank, params: dict, config: GeneratorConfig) -> Tensor:
    return synthesis_forward(mapping_forward(z, params, config), noise, params, config)


# ---------------------------------------------------------------------------
# discriminator

def init_discriminator_params(resolution: int, channels=(16, 32, 32), seed: int = 0) -> dict:
    """Convolution stack halving resolution down to 4x4, then a linear score head."""
    rng = np.random.default_rng(seed)
    stages = int(round(math.log2(resolution // 4)))
    if resolution < 4 or 4 * 2 ** stages != resolution:
        raise ConfigError(f"discriminator resolution must be 4 times a power of two, got {resolution}")
    widths = list(channels) + [channels[-1]] * max(0, stages + 1 - len(channels))
    gain = math.sqrt(2 / (1 + F.LEAKY_SLOPE ** 2))
    p = {"d.conv0.weight": _init(rng, (widths[0], 3, 3, 3), 27, gain),
         "d.conv0.bias": np.zeros(widths[0])}
    for i in range(stages):
        cin, cout = widths[i], widths[i + 1]
        p[f"d.down{i}.weight"] = _init(rng, (cout, cin, 3, 3), 9 * cin, gain)
        p[f"d.down{i}.bias"] = np.zeros(cout)
    c_last = widths[stages]
    p["d.fc.weight"] = _init(rng, (c_last * 16, 1), c_last * 16)
    p["d.fc.bias"] = np.zeros(1)
    return p


def discriminator_forward(image, params: dict) -> Tensor:
    """Realness score: a scalar for one image, shape ``(N,)`` for a batch."""
    image = as_tensor(image)
    p = _tensors(params)
    squeeze = image.ndim == 3
    if squeeze:
        image = reshape(image, (1,) + image.shape)
    stages = sum(1 for k in p if k.endswith(".weight") and k.startswith("d.down"))
    expected = 4 * 2 ** stages
    if image.ndim != 4 or image.shape[1] != 3 or image.shape[2:] != (expected, expected):
        raise ShapeError(f"discriminator: image shape {image.shape}, expected (.., 3, {expected}, {expected})")
    h = F.leaky_relu(F.conv2d(image, p["d.conv0.weight"], p["d.conv0.bias"]))
    for i in range(stages):
        h = F.leaky_relu(F.conv2d(h, p[f"d.down{i}.weight"], p[f"d.down{i}.bias"], down=True))
    h = reshape(h, (h.shape[0], -1))
    score = reshape(F.linear(h, p["d.fc.weight"], p["d.fc.bias"]), (h.shape[0],))
    return reshape(score, ()) if squeeze else score


class Generator:
    """Config plus weights, with convenience entry points returning numpy arrays."""

    def __init__(self, config: GeneratorConfig, params: dict | None = None):
        self.config = config
        self.params = init_generator_params(config) if params is None else dict(params)
        expected = init_generator_params(replace(config)) if params is not None else None
        if expected is not None:
            _check_param_shapes(expected, self.params)

    def noise(self, seed: int) -> NoiseBank:
        return NoiseBank.sample(self.config, seed)

    def mapping(self, z) -> Tensor:
        return mapping_forward(z, self.params, self.config)

    def synthesis(self, zp, noise: NoiseBank) -> Tensor:
        return synthesis_forward(zp, noise, self.params, self.config)

    def forward(self, z, noise: NoiseBank, space: str = "z") -> Tensor:
        if space == "z":
            return generator_forward(z, noise, self.params, self.config)
        if space == "w":
            return self.synthesis(z, noise)
        raise ConfigError(f"unknown latent space {space!r}")

    def generate(self, z, noise: NoiseBank, space: str = "z") -> np.ndarray:
        return self.forward(z, noise, space).data

    def random_latent(self, seed: int) -> np.ndarray:
        return np.random.default_rng(seed).uniform(-1, 1, self.config.latent_shape)


def _check_param_shapes(expected: dict, got: dict) -> None:
    missing = sorted(set(expected) - set(got))
    extra = sorted(set(got) - set(expected))
    if missing or extra:
        raise ShapeError(f"parameter names differ from config: missing {missing[:5]}, unexpected {extra[:5]}")
    for name, arr in expected.items():
        if tuple(np.shape(got[name])) != arr.shape:
            raise ShapeError(f"parameter {name} has shape {np.shape(got[name])}, expected {arr.shape}")
