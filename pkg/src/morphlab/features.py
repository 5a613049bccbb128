"""Feature extractors: HOG, LBP, a perceptual feature pyramid, soft landmarks,
and ingestion of externally computed embeddings.

Images are ``(3, H, W)`` RGB (or ``(H, W)`` grayscale) with values in
[-1, 1] unless stated otherwise.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import functional as F
from .errors import ConfigError, FormatError, ShapeError
from .tensor import (Tensor, add, as_tensor, atan2, div, hypot, matmul, maximum, mul,
                     reshape, sqrt, sub, take, tsum)

LUMA = np.array([0.299, 0.587, 0.114])
COSINE_EPS = 1e-12
CELL_NORM_EPS = 1e-6


def to_gray(image) -> Tensor:
    image = as_tensor(image)
    if image.ndim == 2:
        return image
    if image.ndim == 3 and image.shape[0] == 1:
        return reshape(image, image.shape[1:])
    if image.ndim == 3 and image.shape[0] == 3:
        return tsum(mul(image, LUMA.reshape(3, 1, 1)), axis=0)
    raise ShapeError(f"expected a (3, H, W) or (H, W) image, got {image.shape}")


# ---------------------------------------------------------------------------
# HOG

@dataclass
class HOGDescriptor:
    values: Tensor
    cell_size: int
    bins: int
    extent: tuple

    def numpy(self) -> np.ndarray:
        return self.values.data


def hog_features(image, cell_size: int = 8, bins: int = 9, soft: bool = True) -> HOGDescriptor:
    """Per-cell histograms of unsigned gradient orientation.

    Bin ``b`` is centered at ``b * pi / bins`` (bin 0 holds horizontal
    gradients). Soft mode splits each vote linearly between the two nearest
    bin centers and is differentiable almost everywhere; hard mode votes for
    the nearest center. Each cell histogram is L2-normalized.
    """
    gray = to_gray(image)
    h, w = gray.shape
    if h % cell_size or w % cell_size:
        raise ShapeError(f"hog: extent {(h, w)} not divisible by cell size {cell_size}")
    # central differences inside, one-sided at the border (exact on linear ramps)
    right = np.minimum(np.arange(w) + 1, w - 1)
    left = np.maximum(np.arange(w) - 1, 0)
    down = np.minimum(np.arange(h) + 1, h - 1)
    up = np.maximum(np.arange(h) - 1, 0)
    gx = mul(sub(take(gray, right, axis=1), take(gray, left, axis=1)), 1.0 / (right - left))
    gy = mul(sub(take(gray, down, axis=0), take(gray, up, axis=0)),
             (1.0 / (down - up)).reshape(h, 1))
    mag = hypot(gx, gy)
    theta = atan2(gy, gx)
    width = math.pi / bins
    # fold to [0, pi): shift negative angles by pi (constant offset)
    pos = mul(add(theta, np.where(theta.data < 0, math.pi, 0.0)), 1.0 / width)
    eye = np.eye(bins)
    if soft:
        lower = np.floor(pos.data)
        frac = sub(pos, lower)
        lo_idx = lower.astype(np.intp) % bins
        hi_idx = (lo_idx + 1) % bins
        weights = add(mul(eye[lo_idx], reshape(sub(1.0, frac), (h, w, 1))),
                      mul(eye[hi_idx], reshape(frac, (h, w, 1))))
    else:
        weights = Tensor(eye[np.floor(pos.data + 0.5).astype(np.intp) % bins])
    votes = mul(weights, reshape(mag, (h, w, 1)))
    cells = tsum(reshape(votes, (h // cell_size, cell_size, w // cell_size, cell_size, bins)),
                 axis=(1, 3))
    norm = sqrt(add(tsum(mul(cells, cells), axis=-1, keepdims=True), CELL_NORM_EPS ** 2))
    desc = reshape(div(cells, norm), (-1,))
    return HOGDescriptor(desc, cell_size, bins, (h, w))


def cosine_biometric_distance(a, b) -> Tensor:
    """``1 - cos(a, b)`` with norms floored at 1e-12; two zero vectors give 0."""
    a = as_tensor(a.values if isinstance(a, HOGDescriptor) else a)
    b = as_tensor(b.values if isinstance(b, HOGDescriptor) else b)
    if a.shape != b.shape:
        raise ShapeError(f"cosine distance: length mismatch {a.shape} vs {b.shape}")
    na = np.linalg.norm(a.data)
    nb = np.linalg.norm(b.data)
    if na < COSINE_EPS and nb < COSINE_EPS:
        return mul(tsum(a), 0.0)
    norm_a = maximum(sqrt(tsum(mul(a, a))), COSINE_EPS)
    norm_b = maximum(sqrt(tsum(mul(b, b))), COSINE_EPS)
    return sub(1.0, div(tsum(mul(a, b)), mul(norm_a, norm_b)))


# ---------------------------------------------------------------------------
# LBP

# clockwise from the top-left neighbour; neighbour i sets bit i
LBP_OFFSETS = ((-1, -1), (-1, 0), (-1, 1), (0, 1), (1, 1), (1, 0), (1, -1), (0, -1))


@dataclass
class LBPHistogram:
    counts: np.ndarray
    normalized: bool = False


def lbp_codes(image) -> np.ndarray:
    gray = to_gray(np.asarray(image.data if isinstance(image, Tensor) else image, dtype=np.float64)).data
    h, w = gray.shape
    if h < 3 or w < 3:
        raise ShapeError(f"lbp: image must be at least 3x3, got {(h, w)}")
    center = gray[1:-1, 1:-1]
    codes = np.zeros(center.shape, dtype=np.intp)
    for bit, (dy, dx) in enumerate(LBP_OFFSETS):
        neighbour = gray[1 + dy:h - 1 + dy, 1 + dx:w - 1 + dx]
        codes |= (neighbour >= center).astype(np.intp) << bit
    return codes


def lbp_histogram(image, normalize: bool = False) -> LBPHistogram:
    counts = np.bincount(lbp_codes(image).ravel(), minlength=256).astype(np.float64)
    if normalize:
        counts /= counts.sum()
    return LBPHistogram(counts, normalize)


def lbp_features(image, grid: int = 1) -> np.ndarray:
    """Concatenated normalized LBP histograms over a ``grid x grid`` tiling."""
    codes = lbp_codes(image)
    feats = []
    for rows in np.array_split(codes, grid, axis=0):
        for tile in np.array_split(rows, grid, axis=1):
            hist = np.bincount(tile.ravel(), minlength=256).astype(np.float64)
            feats.append(hist / max(hist.sum(), 1.0))
    return np.concatenate(feats)


# ---------------------------------------------------------------------------
# perceptual pyramid

@dataclass
class FeaturePyramid:
    maps: list
    counts: list


PYRAMID_TAPS = ("conv1_1", "conv1_2", "conv3_2", "conv4_2")


def init_pyramid_params(seed: int = 0, widths=(8, 8, 16, 16)) -> dict:
    """Seeded random stand-in for the four VGG-16 taps."""
    rng = np.random.default_rng(seed)
    c1, c2, c3, c4 = widths
    shapes = {
        "s1.weight": (c1, 3, 3, 3),
        "s2.weight": (c2, c1, 3, 3),
        "s3a.weight": (c3, c2, 3, 3),
        "s3b.weight": (c3, c3, 3, 3),
        "s4.weight": (c4, c3, 3, 3),
    }
    p = {}
    for name, shape in shapes.items():
        fan_in = shape[1] * 9
        p[name] = rng.standard_normal(shape) * math.sqrt(2 / fan_in)
        p[name.replace("weight", "bias")] = np.zeros(shape[0])
    return p


def perceptual_pyramid(image, params: dict) -> FeaturePyramid:
    """Four feature maps at full, full, 1/4 and 1/8 resolution."""
    if not params:
        raise ConfigError("perceptual_pyramid: extractor parameters not loaded")
    missing = [k for k in ("s1.weight", "s2.weight", "s3a.weight", "s3b.weight", "s4.weight")
               if k not in params]
    if missing:
        raise ConfigError(f"perceptual_pyramid: missing parameters {missing}")
    p = {k: as_tensor(v) for k, v in params.items()}
    x = as_tensor(image)
    if x.ndim == 3:
        x = reshape(x, (1,) + x.shape)
    if x.shape[-1] % 8 or x.shape[-2] % 8:
        raise ShapeError(f"perceptual_pyramid: extent {x.shape[-2:]} must be divisible by 8")
    f1 = F.leaky_relu(F.conv2d(x, p["s1.weight"], p["s1.bias"]))
    f2 = F.leaky_relu(F.conv2d(f1, p["s2.weight"], p["s2.bias"]))
    h = F.leaky_relu(F.conv2d(f2, p["s3a.weight"], p["s3a.bias"], down=True))
    f3 = F.leaky_relu(F.conv2d(h, p["s3b.weight"], p["s3b.bias"], down=True))
    f4 = F.leaky_relu(F.conv2d(f3, p["s4.weight"], p["s4.bias"], down=True))
    maps = [f1, f2, f3, f4]
    return FeaturePyramid(maps, [m.size for m in maps])


# ---------------------------------------------------------------------------
# soft landmarks

@dataclass
class LandmarkSet:
    points: Tensor  # (k, 2) as (x, y) pixel coordinates

    @property
    def k(self) -> int:
        return self.points.shape[0]

    def numpy(self) -> np.ndarray:
        return self.points.data


def init_landmark_params(k: int = 68, kernel_size: int = 5, seed: int = 0) -> dict:
    if k < 1:
        raise ConfigError("landmark head needs k >= 1")
    rng = np.random.default_rng(seed)
    w = rng.standard_normal((k, 1, kernel_size, kernel_size))
    w /= np.sqrt((w ** 2).sum(axis=(1, 2, 3), keepdims=True))
    return {"weight": w * 2.0, "bias": np.zeros(k), "temperature": np.array(0.2)}


def soft_argmax(logits, temperature: float = 1.0) -> Tensor:
    """Expected (x, y) pixel position under ``softmax(logits / temperature)``.

    ``logits`` has shape ``(k, H, W)``; returns ``(k, 2)``.
    """
    logits = as_tensor(logits)
    k, h, w = logits.shape
    prob = F.softmax(mul(reshape(logits, (k, h * w)), 1.0 / temperature))
    yy, xx = np.meshgrid(np.arange(h, dtype=np.float64), np.arange(w, dtype=np.float64),
                         indexing="ij")
    grid = np.stack([xx.ravel(), yy.ravel()], axis=1)
    return matmul(prob, grid)


def soft_landmarks(image, params: dict) -> LandmarkSet:
    """Landmarks from seeded convolution heatmaps located by soft-argmax."""
    weight = as_tensor(params["weight"])
    if weight.shape[0] == 0:
        raise ConfigError("soft_landmarks: k must be positive")
    gray = to_gray(image)
    h, w = gray.shape
    heat = F.conv2d(reshape(gray, (1, 1, h, w)), weight, params.get("bias"))
    temperature = float(np.asarray(params.get("temperature", 1.0)))
    return LandmarkSet(soft_argmax(reshape(heat, (weight.shape[0], h, w)), temperature))


def load_landmarks(path) -> dict:
    """Read ``id,x1,y1,...,xk,yk`` rows into ``{id: (k, 2) array}``."""
    table = _read_vector_rows(path, "landmark")
    out = {}
    for key, vec in table.items():
        if vec.size % 2:
            raise FormatError(f"landmark row {key!r} has an odd number of coordinates")
        out[key] = vec.reshape(-1, 2)
    return out


# ---------------------------------------------------------------------------
# external embeddings

class EmbeddingTable(dict):
    """Immutable-by-convention map from sample id to a fixed-length vector."""

    @property
    def dim(self) -> int | None:
        return next(iter(self.values())).size if self else None


def _read_vector_rows(path, what: str) -> dict:
    rows = {}
    length = None
    with open(path, encoding="ascii") as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            parts = [s.strip() for s in line.split(",")]
            key = parts[0]
            try:
                vec = np.array([float(v) for v in parts[1:]], dtype=np.float64)
            except ValueError:
                if not rows and lineno == 1 and key.lower() == "id":
                    continue
                raise FormatError(f"{path}:{lineno}: unparseable {what} row") from None
            if vec.size == 0 or not np.isfinite(vec).all():
                raise FormatError(f"{path}:{lineno}: empty or non-finite {what} vector")
            if length is None:
                length = vec.size
            elif vec.size != length:
                raise FormatError(f"{path}:{lineno}: ragged {what} vector "
                                  f"(length {vec.size}, expected {length})")
            if key in rows:
                raise FormatError(f"{path}:{lineno}: duplicate id {key!r}")
            rows[key] = vec
    return rows


def load_embeddings(path) -> EmbeddingTable:
    """Read ``id,v1,...,vn`` rows (decimal ASCII)."""
    return EmbeddingTable(_read_vector_rows(path, "embedding"))


def similarity(u, v) -> float:
    """Cosine similarity in [-1, 1]."""
    u = np.asarray(u, dtype=np.float64).ravel()
    v = np.asarray(v, dtype=np.float64).ravel()
    if u.shape != v.shape:
        raise ShapeError(f"similarity: length mismatch {u.shape} vs {v.shape}")
    den = max(np.linalg.norm(u), COSINE_EPS) * max(np.linalg.norm(v), COSINE_EPS)
    return float(np.clip(u @ v / den, -1.0, 1.0))
