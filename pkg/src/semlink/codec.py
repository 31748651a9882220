"""Feature encoders and the uniform scalar quantizer.

Features are plain ``numpy`` arrays of shape ``(W_y, H_y, C_y)``.  Two
encoders stand in for a learned codec:

* ``identity_block`` reshapes a ``W x H x 3`` image space-to-depth into
  ``W/b x H/b x 3b^2`` features and back, losslessly.
* ``gaussian_source`` ignores its input and draws a feature sample from a
  Gaussian with diagonal or separable AR(1) spatial covariance.

Quantizer levels are addressed by 0-based indices ``0 .. 2**R - 1`` so that
each index fits in exactly ``R`` bits.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import ConfigError, DataError

MAX_BITS = 16


def check_feature(y, name="feature"):
    """Return ``y`` as a float64 ``(W, H, C)`` array, rejecting NaN/Inf."""
    arr = np.asarray(y, dtype=np.float64)
    if arr.ndim != 3 or min(arr.shape) < 1:
        raise ConfigError(f"{name} must be a non-empty 3-D array, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise DataError(f"{name} contains NaN or Inf")
    return arr


@dataclass(frozen=True)
class Codebook:
    """Uniform codebook of ``2**bits`` levels spanning ``[u_min, u_max]``."""

    u_min: float
    u_max: float
    bits: int

    def __post_init__(self):
        if not (isinstance(self.bits, (int, np.integer)) and 1 <= self.bits <= MAX_BITS):
            raise ConfigError(f"bits must be an integer in [1, {MAX_BITS}], got {self.bits!r}")
        if not (np.isfinite(self.u_min) and np.isfinite(self.u_max)) or not self.u_min < self.u_max:
            raise ConfigError(f"need finite u_min < u_max, got ({self.u_min}, {self.u_max})")

    @property
    def n_levels(self) -> int:
        return 1 << self.bits

    @property
    def step(self) -> float:
        return (self.u_max - self.u_min) / (self.n_levels - 1)

    @property
    def levels(self) -> np.ndarray:
        n = self.n_levels
        lv = self.u_min + np.arange(n) * (self.u_max - self.u_min) / (n - 1)
        lv[-1] = self.u_max
        return lv


def make_codebook(u_min: float, u_max: float, bits: int) -> Codebook:
    return Codebook(float(u_min), float(u_max), int(bits))


def quantize_indices(y, cb: Codebook) -> np.ndarray:
    """Level index of every element; cells are ``[u_i - d/2, u_i + d/2)``.

    Values outside the codebook range clamp to the boundary levels.
    """
    arr = np.asarray(y, dtype=np.float64)
    if np.isnan(arr).any():
        raise DataError("cannot quantize NaN")
    # multiply before dividing so exact midpoints such as 3.5 stay exact
    pos = (arr - cb.u_min) * (cb.n_levels - 1) / (cb.u_max - cb.u_min)
    idx = np.floor(pos + 0.5)
    return np.clip(idx, 0, cb.n_levels - 1).astype(np.int64)


def quantize(y, cb: Codebook):
    """Quantize ``y``; returns ``(values, indices)``."""
    idx = quantize_indices(y, cb)
    return cb.levels[idx], idx


def dequantize(indices, cb: Codebook) -> np.ndarray:
    idx = np.asarray(indices)
    if idx.size and (not np.issubdtype(idx.dtype, np.integer)):
        if not np.all(idx == np.floor(idx)):
            raise DataError("level indices must be integers")
        idx = idx.astype(np.int64)
    if idx.size and (idx.min() < 0 or idx.max() >= cb.n_levels):
        raise DataError(f"level index out of range [0, {cb.n_levels - 1}]")
    return cb.levels[idx]


@dataclass(frozen=True)
class EncoderSpec:
    """Configuration of one of the two stand-in encoders.

    For ``identity_block`` only ``block`` matters.  For ``gaussian_source``,
    ``shape`` is the feature shape, ``mean`` is broadcast to it, and the
    covariance is either diagonal (``variances``) or separable AR(1) with
    correlation ``corr`` and marginal standard deviation ``std``.
    """

    kind: str
    block: int = 1
    shape: tuple = ()
    mean: object = 0.0
    variances: object = None
    corr: float | None = None
    std: float = 1.0

    def __post_init__(self):
        if self.kind == "identity_block":
            if int(self.block) < 1:
                raise ConfigError("block size must be >= 1")
        elif self.kind == "gaussian_source":
            if len(self.shape) != 3 or min(self.shape) < 1:
                raise ConfigError("gaussian_source needs a 3-D feature shape")
            if self.corr is not None:
                if not -1.0 < self.corr < 1.0:
                    raise ConfigError("AR(1) correlation must lie in (-1, 1)")
                if self.std < 0:
                    raise ConfigError("std must be nonnegative")
            elif self.variances is not None and np.any(np.asarray(self.variances) < 0):
                raise ConfigError("variances must be nonnegative")
        else:
            raise ConfigError(f"unknown encoder kind {self.kind!r}")

    def mean_tensor(self) -> np.ndarray:
        return np.broadcast_to(np.asarray(self.mean, dtype=np.float64), self.shape).copy()


def ar1_correlation(n: int, corr: float) -> np.ndarray:
    k = np.arange(n)
    return corr ** np.abs(k[:, None] - k[None, :])


def space_to_depth(x, block: int) -> np.ndarray:
    x = np.asarray(x)
    if x.ndim != 3:
        raise ConfigError(f"image must be W x H x C, got shape {x.shape}")
    w, h, c = x.shape
    if w % block or h % block:
        raise ConfigError(f"image dims {w}x{h} not divisible by block {block}")
    return (x.reshape(w // block, block, h // block, block, c)
             .transpose(0, 2, 1, 3, 4)
             .reshape(w // block, h // block, block * block * c))


def depth_to_space(y, block: int, channels: int = 3) -> np.ndarray:
    y = np.asarray(y)
    wy, hy, cy = y.shape
    if cy != block * block * channels:
        raise ConfigError(f"feature has {cy} channels, expected {block * block * channels}")
    return (y.reshape(wy, hy, block, block, channels)
             .transpose(0, 2, 1, 3, 4)
             .reshape(wy * block, hy * block, channels))


def encode(x, spec: EncoderSpec, seed=None) -> np.ndarray:
    """Map an image (or, for ``gaussian_source``, nothing) to a feature tensor."""
    if spec.kind == "identity_block":
        return space_to_depth(np.asarray(x, dtype=np.float64), spec.block)
    rng = np.random.default_rng(seed)
    w, h, c = spec.shape
    mean = spec.mean_tensor()
    if spec.corr is not None:
        # separable AR(1) field per channel: L_w Z L_h^T has covariance R_w (x) R_h
        lw = np.linalg.cholesky(ar1_correlation(w, spec.corr))
        lh = np.linalg.cholesky(ar1_correlation(h, spec.corr))
        z = rng.standard_normal((c, w, h))
        field = np.einsum("ab,cbd,ed->aec", lw, z, lh)
        return mean + spec.std * field
    var = np.zeros(spec.shape) if spec.variances is None else np.broadcast_to(
        np.asarray(spec.variances, dtype=np.float64), spec.shape)
    return mean + np.sqrt(var) * rng.standard_normal(spec.shape)


def decode(y, spec: EncoderSpec) -> np.ndarray:
    if spec.kind == "identity_block":
        y = np.asarray(y, dtype=np.float64)
        return depth_to_space(y, spec.block, y.shape[2] // (spec.block * spec.block))
    return np.array(y, dtype=np.float64)


def zero_image_feature(spec: EncoderSpec, feature_shape) -> np.ndarray:
    """Encoder output for the all-zero image, used to fill erased elements."""
    if spec.kind == "identity_block":
        return np.zeros(feature_shape)
    return spec.mean_tensor()


# --- binary tensor files -------------------------------------------------

_HEADER = struct.Struct("<III")


def tensor_to_bytes(y) -> bytes:
    arr = check_feature(y)
    return _HEADER.pack(*arr.shape) + np.ascontiguousarray(arr, dtype="<f8").tobytes()


def tensor_from_bytes(buf: bytes) -> np.ndarray:
    if len(buf) < _HEADER.size:
        raise DataError("tensor file truncated before header")
    dims = _HEADER.unpack_from(buf)
    n = int(np.prod(dims))
    body = buf[_HEADER.size:]
    if len(body) != 8 * n:
        raise DataError(f"tensor body has {len(body)} bytes, expected {8 * n}")
    return np.frombuffer(body, dtype="<f8").reshape(dims).astype(np.float64)


def write_tensor(path, y) -> None:
    Path(path).write_bytes(tensor_to_bytes(y))


def read_tensor(path) -> np.ndarray:
    return tensor_from_bytes(Path(path).read_bytes())
