"""Datasets: 2-D toy generators, IDX/CSV ingestion, image patches, noise models.

Toy parametrizations (documented defaults, chosen so samples sit inside
roughly [-4, 4]^2):

* spiral: ``t ~ U[0.5, 3 pi]``, point ``= 4 (t cos t, t sin t) / (3 pi)``
  plus isotropic Gaussian jitter.
* mixture of Gaussians: six equal-weight components of std 0.3 on a circle
  of radius 2.5 (``default_mog_spec``).
"""

from __future__ import annotations

import gzip
import math
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .core import DimensionError, DomainError, Rng, gaussian

IDX_IMAGES = 0x00000803
IDX_LABELS = 0x00000801


class FormatError(ValueError):
    """Malformed or truncated input file."""


@dataclass
class Dataset:
    samples: np.ndarray
    height: int | None = None
    width: int | None = None
    split: str | None = None

    def __post_init__(self):
        self.samples = np.atleast_2d(np.asarray(self.samples, dtype=np.float64))
        if self.samples.shape[0] < 1:
            raise ValueError("dataset must contain at least one sample")
        if self.height is not None and self.height * self.width != self.samples.shape[1]:
            raise DimensionError("height * width must equal the sample dimension")

    @property
    def n(self) -> int:
        return self.samples.shape[0]

    @property
    def dim(self) -> int:
        return self.samples.shape[1]

    def images(self) -> np.ndarray:
        if self.height is None:
            raise ValueError("dataset has no image metadata")
        return self.samples.reshape(self.n, self.height, self.width)

    def subset(self, idx, split=None) -> "Dataset":
        return Dataset(self.samples[idx], self.height, self.width, split or self.split)


@dataclass(frozen=True)
class NoisyPairBatch:
    """Clean rows and their noisy copies; row i of ``noisy`` came from row i of ``clean``."""

    clean: np.ndarray
    noisy: np.ndarray
    sigma: float

    def __post_init__(self):
        if self.clean.shape != self.noisy.shape or self.clean.ndim != 2:
            raise DimensionError(f"pair shapes {self.clean.shape} vs {self.noisy.shape}")

    def __len__(self):
        return self.clean.shape[0]


@dataclass
class MoGSpec:
    weights: list
    means: list
    stds: list

    def __post_init__(self):
        self.weights = [float(w) for w in self.weights]
        self.means = [np.atleast_1d(np.asarray(m, dtype=np.float64)) for m in self.means]
        self.stds = [float(s) for s in self.stds]
        if not (len(self.weights) == len(self.means) == len(self.stds) >= 1):
            raise ValueError("weights, means and stds need equal, nonzero length")
        if min(self.weights) <= 0 or abs(sum(self.weights) - 1.0) > 1e-9:
            raise ValueError("weights must be positive and sum to 1")
        if min(self.stds) < 0:
            raise ValueError("component stds must be non-negative")
        if len({m.shape for m in self.means}) != 1:
            raise ValueError("component means differ in dimension")

    @property
    def dim(self) -> int:
        return self.means[0].shape[0]


def default_mog_spec(k: int = 6, radius: float = 2.5, std: float = 0.3) -> MoGSpec:
    angles = 2.0 * math.pi * np.arange(k) / k
    means = [radius * np.array([math.cos(a), math.sin(a)]) for a in angles]
    return MoGSpec([1.0 / k] * k, means, [std] * k)


def gen_spiral(n: int, noise_std: float, rng: Rng, scale: float = 4.0) -> Dataset:
    if n < 1 or noise_std < 0:
        raise DomainError("need n >= 1 and noise_std >= 0")
    t = 0.5 + (3.0 * math.pi - 0.5) * rng.stream("t").uniform(n)
    pts = scale * np.stack([t * np.cos(t), t * np.sin(t)], axis=1) / (3.0 * math.pi)
    pts = pts + gaussian(rng.stream("jitter"), (n, 2), 0.0, noise_std)
    return Dataset(pts)


def gen_mog(n: int, spec: MoGSpec, rng: Rng) -> Dataset:
    cum = np.cumsum(spec.weights)
    comp = np.searchsorted(cum, rng.stream("component").uniform(n) * cum[-1], side="right")
    comp = np.minimum(comp, len(spec.weights) - 1)
    z = gaussian(rng.stream("draw"), (n, spec.dim))
    means = np.stack(spec.means)[comp]
    stds = np.asarray(spec.stds)[comp][:, None]
    return Dataset(means + stds * z)


def gen_gaussian(n: int, dim: int, std: float, rng: Rng) -> Dataset:
    return Dataset(gaussian(rng, (n, dim), 0.0, std))


def sample_joint(data: Dataset, sigma: float, m: int, rng: Rng, indices=None) -> NoisyPairBatch:
    """Draw ``m`` noisy copies ``x + sigma * eps`` of each selected clean row.

    Pairs are grouped by clean row: rows ``i*m .. i*m+m-1`` share a source.
    """
    if sigma < 0:
        raise DomainError("sigma must be >= 0")
    clean = data.samples if indices is None else data.samples[indices]
    clean = np.repeat(clean, m, axis=0)
    noise = gaussian(rng, clean.shape)
    return NoisyPairBatch(clean, clean + sigma * noise, sigma)


# -- files ------------------------------------------------------------------

def _open_maybe_gz(path: Path) -> bytes:
    raw = path.read_bytes()
    if raw[:2] == b"\x1f\x8b":
        raw = gzip.decompress(raw)
    return raw


def load_idx(path) -> Dataset:
    """Read an IDX image (0x0803) or label (0x0801) file, optionally gzipped.

    Image bytes are scaled to [0, 1]; labels are kept as their integer values.
    """
    raw = _open_maybe_gz(Path(path))
    if len(raw) < 8:
        raise FormatError(f"{path}: truncated header")
    (magic,) = struct.unpack(">I", raw[:4])
    if magic == IDX_IMAGES:
        if len(raw) < 16:
            raise FormatError(f"{path}: truncated header")
        n, h, w = struct.unpack(">III", raw[4:16])
        body, shape = raw[16:], (n, h * w)
    elif magic == IDX_LABELS:
        (n,) = struct.unpack(">I", raw[4:8])
        body, shape, h, w = raw[8:], (n, 1), None, None
    else:
        raise FormatError(f"{path}: bad IDX magic 0x{magic:08x}")
    count = shape[0] * shape[1]
    if len(body) < count:
        raise FormatError(f"{path}: expected {count} data bytes, found {len(body)}")
    values = np.frombuffer(body, dtype=np.uint8, count=count).reshape(shape).astype(np.float64)
    if magic == IDX_IMAGES:
        return Dataset(values / 255.0, h, w)
    return Dataset(values)


def write_idx_images(path, images: np.ndarray) -> None:
    """Write uint8 images ``(n, h, w)`` as an IDX3 file; used for fixtures."""
    images = np.asarray(images, dtype=np.uint8)
    n, h, w = images.shape
    Path(path).write_bytes(struct.pack(">IIII", IDX_IMAGES, n, h, w) + images.tobytes())


def read_csv(path, height=None, width=None) -> Dataset:
    """One sample per row, comma separated, no header."""
    try:
        arr = np.loadtxt(path, delimiter=",", dtype=np.float64, ndmin=2)
    except ValueError as exc:
        raise FormatError(f"{path}: {exc}") from exc
    if arr.size == 0:
        raise FormatError(f"{path}: no samples")
    return Dataset(arr, height, width)


def write_csv(path, samples) -> None:
    samples = np.atleast_2d(np.asarray(samples, dtype=np.float64))
    with open(path, "w") as fh:
        for row in samples:
            fh.write(",".join(repr(float(v)) for v in row) + "\n")


# -- image patches ----------------------------------------------------------

def extract_patches(images: Dataset, patch: int, count: int, rng: Rng,
                    center: bool = True) -> Dataset:
    """Random ``patch x patch`` windows, flattened; zero-mean per patch if ``center``."""
    imgs = images.images()
    n, h, w = imgs.shape
    if patch > h or patch > w:
        raise DimensionError(f"patch {patch} larger than {h}x{w} image")
    which = rng.stream("image").integers(n, count)
    rows = rng.stream("row").integers(h - patch + 1, count)
    cols = rng.stream("col").integers(w - patch + 1, count)
    out = np.empty((count, patch * patch))
    for k in range(count):
        out[k] = imgs[which[k], rows[k]:rows[k] + patch, cols[k]:cols[k] + patch].ravel()
    if center:
        out -= out.mean(axis=1, keepdims=True)
    return Dataset(out, patch, patch)


def add_patch_noise(x, factor: float, rng: Rng) -> np.ndarray:
    """``x + factor * std(x) * nu`` with the std taken per patch (per row)."""
    x = np.asarray(x, dtype=np.float64)
    xb = np.atleast_2d(x)
    std = xb.std(axis=1, keepdims=True)
    noisy = xb + factor * std * gaussian(rng, xb.shape)
    return noisy.reshape(x.shape)


def gen_texture_images(n_images: int, size: int, rng: Rng, n_waves: int = 3,
                       period=(5.0, 12.0), contrast: float = 0.05) -> Dataset:
    """Synthetic textures: sums of a few random oriented sinusoidal gratings.

    Periods are drawn uniformly in ``period`` pixels, orientations and phases
    uniformly, amplitudes in ``contrast * [0.5, 1]``.  The default band puts
    enough energy at fine scales that a 3x3 median plus unit Gaussian blur
    visibly erodes the texture.
    """
    yy, xx = np.mgrid[0:size, 0:size].astype(np.float64)
    u = rng.uniform((n_images, n_waves, 4))
    imgs = np.zeros((n_images, size, size))
    for i in range(n_images):
        for k in range(n_waves):
            lam = period[0] + (period[1] - period[0]) * u[i, k, 0]
            theta = math.pi * u[i, k, 1]
            phase = 2.0 * math.pi * u[i, k, 2]
            amp = contrast * (0.5 + 0.5 * u[i, k, 3])
            proj = xx * math.cos(theta) + yy * math.sin(theta)
            imgs[i] += amp * np.cos(2.0 * math.pi * proj / lam + phase)
    return Dataset(imgs.reshape(n_images, size * size), size, size)


def gen_texture_patches(n: int, rng: Rng, patch: int = 32, n_images: int = 200,
                        image_size: int = 64, **texture_kw) -> Dataset:
    """Zero-mean ``patch x patch`` windows cut from freshly drawn texture images."""
    imgs = gen_texture_images(n_images, image_size, rng.stream("images"), **texture_kw)
    return extract_patches(imgs, patch, n, rng.stream("patches"))
