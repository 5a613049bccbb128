"""File formats: checkpoint archives, latent files, PPM images, score tables,
dataset manifests.

Checkpoint layout (all integers little-endian)::

    b"MGFCKPT1"
    u32 entry count
    per entry: u16 name length, name (utf-8), u8 dtype code, u8 rank, rank x u64 extents
    payloads, in manifest order, as little-endian IEEE-754 arrays

Latent layout: u32 k_local, u32 d, then (k_local + 1) * d little-endian f64.
"""

from __future__ import annotations

import csv
import os
import struct
from dataclasses import dataclass

import numpy as np

from .errors import FormatError, ShapeError
from .metrics import DemorphTrial, MorphTrial

CHECKPOINT_MAGIC = b"MGFCKPT1"
DTYPE_CODES = {1: np.dtype("<f4"), 2: np.dtype("<f8")}
_CODE_FOR = {np.dtype(np.float32): 1, np.dtype(np.float64): 2}
MAX_RANK = 8


def save_checkpoint(params: dict, path) -> None:
    header = [CHECKPOINT_MAGIC, struct.pack("<I", len(params))]
    payload = []
    for name, arr in params.items():
        arr = np.asarray(arr)
        if arr.dtype not in _CODE_FOR:
            arr = arr.astype(np.float64)
        raw = name.encode("utf-8")
        header.append(struct.pack("<H", len(raw)) + raw)
        header.append(struct.pack("<BB", _CODE_FOR[arr.dtype], arr.ndim))
        header.append(struct.pack(f"<{arr.ndim}Q", *arr.shape))
        payload.append(np.ascontiguousarray(arr, dtype=DTYPE_CODES[_CODE_FOR[arr.dtype]]).tobytes())
    with open(path, "wb") as fh:
        fh.write(b"".join(header))
        fh.write(b"".join(payload))


def load_checkpoint(path) -> dict:
    """Read an archive written by :func:`save_checkpoint`.

    The whole manifest is validated against the file size before any
    payload is decoded.
    """
    with open(path, "rb") as fh:
        blob = fh.read()
    return parse_checkpoint(blob)


def parse_checkpoint(blob: bytes) -> dict:
    size = len(blob)

    def need(offset, count, what):
        if offset + count > size:
            raise FormatError(f"truncated checkpoint: {what} at offset {offset}")

    need(0, 8, "magic")
    if blob[:8] != CHECKPOINT_MAGIC:
        raise FormatError("bad checkpoint magic at offset 0")
    need(8, 4, "entry count")
    (count,) = struct.unpack_from("<I", blob, 8)
    offset = 12
    manifest = []
    for i in range(count):
        need(offset, 2, f"name length of entry {i}")
        (nlen,) = struct.unpack_from("<H", blob, offset)
        offset += 2
        need(offset, nlen, f"name of entry {i}")
        try:
            name = blob[offset:offset + nlen].decode("utf-8")
        except UnicodeDecodeError:
            raise FormatError(f"undecodable name of entry {i} at offset {offset}") from None
        offset += nlen
        need(offset, 2, f"dtype/rank of {name!r}")
        code, rank = struct.unpack_from("<BB", blob, offset)
        if code not in DTYPE_CODES:
            raise FormatError(f"unknown dtype code {code} for {name!r} at offset {offset}")
        if rank > MAX_RANK:
            raise FormatError(f"rank {rank} of {name!r} exceeds {MAX_RANK} at offset {offset + 1}")
        offset += 2
        need(offset, 8 * rank, f"extents of {name!r}")
        shape = struct.unpack_from(f"<{rank}Q", blob, offset)
        offset += 8 * rank
        nbytes = DTYPE_CODES[code].itemsize
        for extent in shape:
            nbytes *= extent
            if nbytes > size:
                raise FormatError(f"extent overflow for {name!r} at offset {offset - 8 * rank}")
        manifest.append((name, code, shape, nbytes))
    names = [m[0] for m in manifest]
    if len(set(names)) != len(names):
        raise FormatError("duplicate entry names in checkpoint manifest")
    params = {}
    for name, code, shape, nbytes in manifest:
        if offset + nbytes > size:
            raise FormatError(f"truncated checkpoint: payload of {name!r} at offset {offset} "
                              f"needs {nbytes} bytes, {size - offset} available")
        arr = np.frombuffer(blob, dtype=DTYPE_CODES[code], count=nbytes // DTYPE_CODES[code].itemsize,
                            offset=offset).reshape(shape)
        params[name] = arr.astype(arr.dtype.newbyteorder("="))
        offset += nbytes
    if offset != size:
        raise FormatError(f"trailing bytes after last payload at offset {offset}")
    return params


def save_latent(latent, path) -> None:
    latent = np.asarray(latent, dtype=np.float64)
    if latent.ndim != 2 or latent.shape[0] < 2:
        raise ShapeError(f"latent must be (k_local + 1, d), got {latent.shape}")
    with open(path, "wb") as fh:
        fh.write(struct.pack("<II", latent.shape[0] - 1, latent.shape[1]))
        fh.write(latent.astype("<f8").tobytes())


def load_latent(path) -> np.ndarray:
    with open(path, "rb") as fh:
        blob = fh.read()
    if len(blob) < 8:
        raise FormatError(f"{path}: latent header truncated")
    k_local, d = struct.unpack_from("<II", blob, 0)
    expected = 8 + 8 * (k_local + 1) * d
    if len(blob) != expected:
        raise FormatError(f"{path}: latent file has {len(blob)} bytes, header implies {expected}")
    return np.frombuffer(blob, dtype="<f8", offset=8).reshape(k_local + 1, d).astype(np.float64)


# ---------------------------------------------------------------------------
# images

def _ppm_tokens(blob: bytes):
    """Yield (token, end offset) for the four header fields, skipping comments."""
    i, n = 0, len(blob)
    found = 0
    while found < 4:
        while i < n and blob[i:i + 1].isspace():
            i += 1
        if i < n and blob[i:i + 1] == b"#":
            while i < n and blob[i:i + 1] not in (b"\n", b"\r"):
                i += 1
            continue
        start = i
        while i < n and not blob[i:i + 1].isspace() and blob[i:i + 1] != b"#":
            i += 1
        if start == i:
            raise FormatError("malformed PPM header")
        found += 1
        yield blob[start:i], i


def read_ppm(path) -> np.ndarray:
    """Binary PPM (P6, maxval 255) to a ``(3, H, W)`` array in [-1, 1]."""
    with open(path, "rb") as fh:
        blob = fh.read()
    tokens = list(_ppm_tokens(blob))
    if tokens[0][0] != b"P6":
        raise FormatError(f"{path}: not a binary PPM (magic {tokens[0][0]!r})")
    try:
        width, height, maxval = (int(t) for t, _ in tokens[1:])
    except ValueError:
        raise FormatError(f"{path}: malformed PPM header") from None
    if maxval != 255 or width < 1 or height < 1:
        raise FormatError(f"{path}: unsupported PPM geometry {width}x{height} maxval {maxval}")
    start = tokens[-1][1] + 1
    data = blob[start:start + 3 * width * height]
    if len(data) != 3 * width * height:
        raise FormatError(f"{path}: PPM pixel data truncated")
    pixels = np.frombuffer(data, dtype=np.uint8).reshape(height, width, 3)
    return pixels.transpose(2, 0, 1).astype(np.float64) * (2.0 / 255.0) - 1.0


def to_uint8(image) -> np.ndarray:
    """Inverse of the read mapping, rounding half away from zero and clamping."""
    scaled = np.clip((np.asarray(image, dtype=np.float64) + 1.0) * 127.5, 0.0, 255.0)
    return np.floor(scaled + 0.5).astype(np.uint8)


def write_ppm(image, path) -> None:
    image = np.asarray(image)
    if image.ndim != 3 or image.shape[0] != 3:
        raise ShapeError(f"write_ppm: expected (3, H, W), got {image.shape}")
    pixels = to_uint8(image).transpose(1, 2, 0)
    h, w = pixels.shape[:2]
    with open(path, "wb") as fh:
        fh.write(f"P6\n{w} {h}\n255\n".encode("ascii"))
        fh.write(np.ascontiguousarray(pixels).tobytes())


def read_image(path, resolution: int | None = None) -> np.ndarray:
    if str(path).lower().endswith(".png"):
        from PIL import Image

        with Image.open(path) as im:
            pixels = np.asarray(im.convert("RGB"), dtype=np.float64)
        image = pixels.transpose(2, 0, 1) * (2.0 / 255.0) - 1.0
    else:
        image = read_ppm(path)
    if resolution is not None and image.shape[1:] != (resolution, resolution):
        raise ShapeError(f"{path}: image is {image.shape[2]}x{image.shape[1]}, "
                         f"generator expects {resolution}x{resolution}")
    return image


def write_image(image, path) -> None:
    if str(path).lower().endswith(".png"):
        from PIL import Image

        Image.fromarray(to_uint8(image).transpose(1, 2, 0)).save(path)
    else:
        write_ppm(image, path)


# ---------------------------------------------------------------------------
# score tables

def _rows(path, ncols: int, what: str):
    with open(path, newline="", encoding="ascii") as fh:
        for lineno, row in enumerate(csv.reader(fh), 1):
            if not row or row[0].startswith("#"):
                continue
            if len(row) != ncols:
                raise FormatError(f"{path}:{lineno}: expected {ncols} fields in {what} row, got {len(row)}")
            try:
                values = [float(v) for v in row[1:]]
            except ValueError:
                if lineno == 1:
                    continue  # header
                raise FormatError(f"{path}:{lineno}: unparseable {what} row") from None
            if not np.isfinite(values).all():
                raise FormatError(f"{path}:{lineno}: non-finite value")
            yield row[0].strip(), values


def read_scores(path) -> list:
    """``id,score`` rows to a list of (id, score)."""
    return [(key, vals[0]) for key, vals in _rows(path, 2, "score")]


def read_morph_trials(path) -> list:
    return [MorphTrial(key, *vals) for key, vals in _rows(path, 3, "morph trial")]


def read_demorph_trials(path) -> list:
    return [DemorphTrial(key, *vals) for key, vals in _rows(path, 3, "demorph trial")]


ROLES = ("bonafide", "live_capture", "morph")


@dataclass(frozen=True)
class ManifestRecord:
    subject_id: str
    role: str
    image_path: str
    pair_id: str | None = None


def load_manifest(path) -> list:
    """Read ``subject_id,role,image_path[,pair_id]`` records.

    Image paths are resolved against the manifest's directory and must
    exist; every pair id must group exactly two bona fide subjects.
    """
    base = os.path.dirname(os.path.abspath(path))
    records = []
    with open(path, newline="", encoding="utf-8") as fh:
        for lineno, row in enumerate(csv.reader(fh), 1):
            if not row or row[0].startswith("#"):
                continue
            if lineno == 1 and row[0].strip() == "subject_id":
                continue
            if len(row) not in (3, 4):
                raise FormatError(f"{path}:{lineno}: expected 3 or 4 fields")
            subject, role, image = (v.strip() for v in row[:3])
            pair = row[3].strip() or None if len(row) == 4 else None
            if role not in ROLES:
                raise FormatError(f"{path}:{lineno}: unknown role {role!r}")
            full = image if os.path.isabs(image) else os.path.join(base, image)
            if not os.path.exists(full):
                raise FormatError(f"{path}:{lineno}: image {image!r} does not exist")
            records.append(ManifestRecord(subject, role, full, pair))
    pairs = {}
    for rec in records:
        if rec.pair_id is not None and rec.role == "bonafide":
            pairs.setdefault(rec.pair_id, set()).add(rec.subject_id)
    referenced = {rec.pair_id for rec in records if rec.pair_id is not None}
    for pair in referenced:
        if len(pairs.get(pair, ())) != 2:
            raise FormatError(f"{path}: pair {pair!r} must reference two bona fide subjects")
    return records
