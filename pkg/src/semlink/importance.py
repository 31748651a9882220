"""Class-activation-map importance and per-packet weights."""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError
from .packetizer import PacketLayout


@dataclass(frozen=True)
class BackboneFeatures:
    maps: np.ndarray  # W_f x H_f x C_f
    class_weights: np.ndarray  # n_classes x C_f

    def __post_init__(self):
        f = np.asarray(self.maps, dtype=np.float64)
        u = np.atleast_2d(np.asarray(self.class_weights, dtype=np.float64))
        if f.ndim != 3 or f.shape[2] < 1:
            raise ConfigError(f"backbone features must be W x H x C, got {f.shape}")
        if u.shape[1] != f.shape[2]:
            raise ConfigError(f"class weights have {u.shape[1]} columns for {f.shape[2]} channels")
        if not (np.all(np.isfinite(f)) and np.all(np.isfinite(u))):
            raise ConfigError("backbone features and weights must be finite")
        object.__setattr__(self, "maps", f)
        object.__setattr__(self, "class_weights", u)


def class_probs(scores) -> np.ndarray:
    s = np.asarray(scores, dtype=np.float64)
    e = np.exp(s - s.max())
    return e / e.sum()


def class_scores(features: BackboneFeatures) -> np.ndarray:
    pooled = features.maps.sum(axis=(0, 1))
    return features.class_weights @ pooled


def select_class(features: BackboneFeatures) -> int:
    # argmax returns the first maximum, i.e. the lowest index on ties
    return int(np.argmax(class_probs(class_scores(features))))


def cam(features: BackboneFeatures, k: int) -> np.ndarray:
    """Raw activation map ``sum_c u_c^k f_c``."""
    if not 0 <= k < features.class_weights.shape[0]:
        raise ConfigError(f"class index {k} out of range")
    return features.maps @ features.class_weights[k]


def normalize_and_upsample(raw, target) -> np.ndarray:
    """Min-max normalize to [0, 1] (constant maps become all ones), then
    nearest-neighbour upsample to ``target = (W_y, H_y)``."""
    raw = np.asarray(raw, dtype=np.float64)
    wt, ht = (int(v) for v in target)
    if wt < raw.shape[0] or ht < raw.shape[1]:
        raise ConfigError(f"cannot upsample {raw.shape} to smaller {target}")
    lo, hi = raw.min(), raw.max()
    norm = np.ones_like(raw) if hi == lo else (raw - lo) / (hi - lo)
    rows = np.arange(wt) * raw.shape[0] // wt
    cols = np.arange(ht) * raw.shape[1] // ht
    return norm[np.ix_(rows, cols)]


def importance_map(features: BackboneFeatures, target):
    """Importance map of the most probable class; returns ``(map, k)``."""
    k = select_class(features)
    return normalize_and_upsample(cam(features, k), target), k


def patch_importance(imap, layout: PacketLayout) -> np.ndarray:
    imap = np.asarray(imap, dtype=np.float64)
    if imap.shape != layout.feature_shape[:2]:
        raise ConfigError(f"importance map {imap.shape} != feature grid {layout.feature_shape[:2]}")
    return layout.patch_view(imap).mean(axis=(1, 2))


def synthetic_blob(shape, center=(0.5, 0.5), width=0.2, n_classes=2, background=0.1):
    """Backbone features whose top class lights up a Gaussian blob.

    Channel 0 holds the blob (``center`` and ``width`` are fractions of the
    map size), channel 1 a flat background.  Class 0 weights the blob
    strongly and the background no less than any other class, so it is
    always the selected class.
    """
    w, h = (int(v) for v in shape)
    x = (np.arange(w) + 0.5) / w
    y = (np.arange(h) + 0.5) / h
    blob = np.exp(-((x[:, None] - center[0]) ** 2 + (y[None, :] - center[1]) ** 2)
                  / (2.0 * width ** 2))
    maps = np.stack([blob, np.full((w, h), background)], axis=2)
    u = np.zeros((n_classes, 2))
    u[0] = (2.0, 1.0)
    for k in range(1, n_classes):
        u[k] = (0.1, 1.0 / k)
    return BackboneFeatures(maps, u)


def read_class_weights(path) -> np.ndarray:
    with open(path, newline="") as fh:
        rows = [[float(v) for v in row] for row in csv.reader(fh) if row and not row[0].startswith("#")]
    if not rows or len({len(r) for r in rows}) != 1:
        raise ConfigError(f"{path}: class-weight rows must be non-empty and equal length")
    return np.array(rows)
