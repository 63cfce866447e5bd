"""Empirical measures: weighted point clouds, synthetic datasets, image-density
sampling, MNIST ingestion, and the fake/real mixture with its densities."""
from __future__ import annotations

import struct
import zlib
from dataclasses import dataclass
from pathlib import Path

import numpy as np

__all__ = [
    "EmpiricalMeasure",
    "PairedData",
    "make_mixture",
    "sample_8gaussians",
    "sample_image_density",
    "load_mnist",
    "ring_raster",
    "two_blob_raster",
]


@dataclass(frozen=True)
class EmpiricalMeasure:
    """Weighted point cloud in R^n: a finite mixture of Diracs."""

    points: np.ndarray  # (N, n)
    weights: np.ndarray  # (N,)

    def __post_init__(self):
        pts = np.atleast_2d(np.asarray(self.points, dtype=float))
        w = np.atleast_1d(np.asarray(self.weights, dtype=float))
        object.__setattr__(self, "points", pts)
        object.__setattr__(self, "weights", w)
        if pts.shape[0] < 1:
            raise ValueError("measure needs at least one atom")
        if w.shape != (pts.shape[0],):
            raise ValueError("weights shape does not match points")
        if np.any(w <= 0):
            raise ValueError("weights must be strictly positive")
        if abs(w.sum() - 1.0) > 1e-12:
            raise ValueError("weights must sum to 1")

    @staticmethod
    def uniform(points) -> "EmpiricalMeasure":
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        n = pts.shape[0]
        return EmpiricalMeasure(pts, np.full(n, 1.0 / n))

    @property
    def dim(self) -> int:
        return self.points.shape[1]

    @property
    def size(self) -> int:
        return self.points.shape[0]


@dataclass(frozen=True)
class PairedData:
    """Fake and real measures fused into the mixture (1/2)fake + (1/2)real,
    with Radon-Nikodym densities of each component against the mixture."""

    fake: EmpiricalMeasure
    real: EmpiricalMeasure
    mixture: EmpiricalMeasure
    rho1: np.ndarray  # d fake / d mixture on the mixture support
    rho2: np.ndarray  # d real / d mixture
    rho: np.ndarray  # (rho2 - rho1) / 2


def make_mixture(fake: EmpiricalMeasure, real: EmpiricalMeasure) -> PairedData:
    """Merge fake and real supports (exact coordinate equality) into the
    half-half mixture and compute the densities rho1, rho2, rho."""
    if fake.dim != real.dim:
        raise ValueError(f"dimension mismatch: {fake.dim} vs {real.dim}")
    # Index duplicate rows by exact bytes; sampled data never collides, so
    # the common case is a plain concatenation.
    index: dict[bytes, int] = {}
    points = []
    wf = []
    wr = []
    for pts, w, accum in ((fake.points, fake.weights, wf), (real.points, real.weights, wr)):
        for i in range(pts.shape[0]):
            key = pts[i].tobytes()
            j = index.get(key)
            if j is None:
                j = len(points)
                index[key] = j
                points.append(pts[i])
                wf.append(0.0)
                wr.append(0.0)
            (wf if accum is wf else wr)[j] += w[i]
    points = np.asarray(points)
    wf = np.asarray(wf)
    wr = np.asarray(wr)
    wm = 0.5 * wf + 0.5 * wr
    rho1 = wf / wm
    rho2 = wr / wm
    mixture = EmpiricalMeasure(points, wm / wm.sum())
    return PairedData(fake, real, mixture, rho1, rho2, (rho2 - rho1) / 2.0)


def sample_8gaussians(count_per_measure: int, seed: int):
    """(source, target) pair for the eight-Gaussians benchmark.

    The target is a uniform mixture of 8 Gaussians with means on the circle
    of radius 5 and isotropic standard deviation 0.5; the source is a
    standard 2D normal.  Deterministic per seed.
    """
    if count_per_measure < 1:
        raise ValueError("count_per_measure must be >= 1")
    rng = np.random.Generator(np.random.PCG64(seed))
    angles = 2.0 * np.pi * np.arange(8) / 8.0
    means = 5.0 * np.stack([np.cos(angles), np.sin(angles)], axis=1)
    modes = rng.integers(0, 8, size=count_per_measure)
    target_pts = means[modes] + 0.5 * rng.standard_normal((count_per_measure, 2))
    source_pts = rng.standard_normal((count_per_measure, 2))
    return (
        EmpiricalMeasure.uniform(source_pts),
        EmpiricalMeasure.uniform(target_pts),
    )


# ---------------------------------------------------------------------------
# Greyscale rasters
# ---------------------------------------------------------------------------

def _read_pgm(data: bytes) -> np.ndarray:
    tokens = []
    i = 0
    while len(tokens) < 4:
        # PGM header: magic, width, height, maxval, with '#' comments.
        j = data.find(b"\n", i) if data[i : i + 1] == b"#" else i
        if data[i : i + 1] == b"#":
            i = j + 1
            continue
        j = i
        while j < len(data) and not data[j : j + 1].isspace():
            j += 1
        if j > i:
            tokens.append(data[i:j])
        i = j + 1
    magic, width, height, maxval = tokens[0], int(tokens[1]), int(tokens[2]), int(tokens[3])
    if magic != b"P5" or maxval > 255:
        raise ValueError("only 8-bit binary PGM (P5) rasters are supported")
    pix = np.frombuffer(data[i : i + width * height], dtype=np.uint8)
    if pix.size != width * height:
        raise ValueError("truncated PGM data")
    return pix.reshape(height, width)


def _read_png(data: bytes) -> np.ndarray:
    if data[:8] != b"\x89PNG\r\n\x1a\n":
        raise ValueError("not a PNG file")
    pos = 8
    idat = b""
    header = None
    while pos < len(data):
        (length,) = struct.unpack(">I", data[pos : pos + 4])
        ctype = data[pos + 4 : pos + 8]
        chunk = data[pos + 8 : pos + 8 + length]
        if ctype == b"IHDR":
            header = struct.unpack(">IIBBBBB", chunk)
        elif ctype == b"IDAT":
            idat += chunk
        elif ctype == b"IEND":
            break
        pos += 12 + length
    if header is None:
        raise ValueError("PNG missing IHDR")
    width, height, depth, color, _, _, interlace = header
    if depth != 8 or color != 0 or interlace != 0:
        raise ValueError("only 8-bit greyscale non-interlaced PNG is supported")
    raw = zlib.decompress(idat)
    stride = width + 1
    out = np.zeros((height, width), dtype=np.uint8)
    prev = np.zeros(width, dtype=np.int64)
    for r in range(height):
        row = raw[r * stride : (r + 1) * stride]
        ftype = row[0]
        cur = np.frombuffer(row[1:], dtype=np.uint8).astype(np.int64)
        line = np.zeros(width, dtype=np.int64)
        for c in range(width):
            a = line[c - 1] if c > 0 else 0
            b = prev[c]
            cc = prev[c - 1] if c > 0 else 0
            if ftype == 0:
                val = cur[c]
            elif ftype == 1:
                val = cur[c] + a
            elif ftype == 2:
                val = cur[c] + b
            elif ftype == 3:
                val = cur[c] + (a + b) // 2
            elif ftype == 4:
                p = a + b - cc
                pa, pb, pc = abs(p - a), abs(p - b), abs(p - cc)
                pred = a if (pa <= pb and pa <= pc) else (b if pb <= pc else cc)
                val = cur[c] + pred
            else:
                raise ValueError(f"unknown PNG filter {ftype}")
            line[c] = val & 0xFF
        out[r] = line
        prev = line
    return out


def _load_raster(image) -> np.ndarray:
    if isinstance(image, (str, Path)):
        data = Path(image).read_bytes()
        if data[:2] == b"P5":
            return _read_pgm(data)
        return _read_png(data)
    arr = np.asarray(image)
    if arr.ndim != 2:
        raise ValueError("raster must be a 2D single-channel image (no alpha)")
    return arr


def sample_image_density(image, count: int, seed: int) -> EmpiricalMeasure:
    """Sample 2D points with probability proportional to pixel darkness.

    Pixel centers are mapped into [-1, 1]^2 and Gaussian jitter with standard
    deviation 1/max(width, height) is added.
    """
    raster = _load_raster(image).astype(float)
    if raster.size == 0:
        raise ValueError("empty image")
    if count < 1:
        raise ValueError("count must be >= 1")
    height, width = raster.shape
    darkness = 1.0 - raster / raster.max() if raster.max() > 0 else np.ones_like(raster)
    total = darkness.sum()
    if total <= 0:
        raise ValueError("all-white image has zero sampling mass")
    probs = (darkness / total).ravel()
    rng = np.random.Generator(np.random.PCG64(seed))
    idx = rng.choice(probs.size, size=count, p=probs)
    rows, cols = np.divmod(idx, width)
    # Pixel centers in [-1, 1]^2, row 0 at the top.
    x = -1.0 + 2.0 * (cols + 0.5) / width
    y = 1.0 - 2.0 * (rows + 0.5) / height
    pts = np.stack([x, y], axis=1)
    pts = pts + rng.standard_normal(pts.shape) / max(width, height)
    return EmpiricalMeasure.uniform(pts)


def ring_raster(size: int = 64) -> np.ndarray:
    """Procedural stand-in raster: dark ring on white background."""
    c = (size - 1) / 2.0
    yy, xx = np.mgrid[0:size, 0:size]
    r = np.hypot(xx - c, yy - c) / size
    band = np.exp(-((r - 0.3) ** 2) / (2 * 0.04**2))
    return np.clip(255.0 * (1.0 - band), 0, 255).astype(np.uint8)


def two_blob_raster(size: int = 64) -> np.ndarray:
    """Procedural stand-in raster: two dark blobs on white background."""
    yy, xx = np.mgrid[0:size, 0:size]
    d1 = ((xx - 0.3 * size) ** 2 + (yy - 0.5 * size) ** 2) / (0.01 * size**2)
    d2 = ((xx - 0.7 * size) ** 2 + (yy - 0.5 * size) ** 2) / (0.01 * size**2)
    blobs = np.exp(-d1) + np.exp(-d2)
    return np.clip(255.0 * (1.0 - blobs), 0, 255).astype(np.uint8)


def write_pgm(path, raster: np.ndarray) -> None:
    raster = np.asarray(raster, dtype=np.uint8)
    header = f"P5\n{raster.shape[1]} {raster.shape[0]}\n255\n".encode()
    Path(path).write_bytes(header + raster.tobytes())


# ---------------------------------------------------------------------------
# MNIST
# ---------------------------------------------------------------------------

def load_mnist(images_path, count: int, seed: int) -> EmpiricalMeasure:
    """Load `count` images from an IDX file, zero-pad 28x28 to 32x32, map
    pixels affinely from [0, 255] to [-1, 1], and flatten to R^1024."""
    data = Path(images_path).read_bytes()
    if len(data) < 16:
        raise ValueError("truncated IDX header")
    magic, n_images, rows, cols = struct.unpack(">IIII", data[:16])
    if magic != 2051:
        raise ValueError(f"bad IDX magic {magic}, expected 2051")
    if rows != 28 or cols != 28:
        raise ValueError(f"expected 28x28 images, got {rows}x{cols}")
    need = 16 + n_images * rows * cols
    if len(data) < need:
        raise ValueError("truncated IDX image data")
    if count > n_images:
        raise ValueError(f"requested {count} images but file has {n_images}")
    raw = np.frombuffer(data[16:need], dtype=np.uint8).reshape(n_images, rows, cols)
    rng = np.random.Generator(np.random.PCG64(seed))
    pick = rng.choice(n_images, size=count, replace=False)
    imgs = raw[pick].astype(float)
    padded = np.zeros((count, 32, 32))
    padded[:, 2:30, 2:30] = imgs  # pad with 0 = black before the affine map
    flat = padded.reshape(count, 1024)
    return EmpiricalMeasure.uniform(2.0 * flat / 255.0 - 1.0)
