"""End-to-end trial runner, SNR sweeps and result files.

One trial: draw a source, encode, quantize, packetize, weight packets by
importance, allocate power slot by slot, sample packet losses, rebuild the
feature with blank-image fill, optionally impute, decode and score.

Random streams are keyed by ``(seed, trial, stream, slot)`` so every trial is
reproducible on its own and sweeps reuse the same source and fading draws
at each SNR point.
"""

from __future__ import annotations

import copy
import csv
import json
import math
import time
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np

from . import codec, importance, imputer, link, packetizer, power
from .errors import ConfigError, SemLinkError, StageError

POLICIES = ("semantic", "equal", "waterfill")
MODES = ("localized", "propagating")

# stream ids for the counter-based seeding
_SOURCE, _CHANNEL, _LOSS, _IMPUTE = range(4)

DEFAULTS = {
    "encoder": {"kind": "identity_block", "block": 1},
    "image": {"size": [16, 16], "corr": 0.95, "mean": 127.5, "std": 50.0},
    "codebook": {"u_min": 0.0, "u_max": 255.0, "bits": 7},
    "layout": {"patch": [4, 4]},
    "link": {"blocklength": 1024, "rate": 0.4375, "noise_power": 1.0, "p_ave": 1.0,
             "subcarriers": 16, "channel": "rayleigh"},
    "policy": "semantic",
    "mode": "localized",
    "impute": True,
    "schedule": {"steps": 10, "beta_start": 1e-4, "beta_end": 0.02, "eta": 0.0},
    "prior": None,
    "kernel": 2,
    "importance": {"kind": "blob", "center": [0.5, 0.5], "width": 0.25},
    "trials": 1,
    "seed": 0,
    "snr_db": [],
}

_SECTION_KEYS = {
    "encoder": {"kind", "block", "shape", "mean", "variances", "corr", "std"},
    "image": {"size", "corr", "mean", "std"},
    "codebook": {"u_min", "u_max", "bits"},
    "layout": {"patch"},
    "link": {"blocklength", "rate", "noise_power", "p_ave", "subcarriers", "channel"},
    "schedule": {"steps", "beta_start", "beta_end", "eta"},
    "prior": {"mean", "std", "corr", "variances"},
    "importance": {"kind", "center", "width", "features", "class_weights"},
}


def _merge(user: dict) -> dict:
    unknown = set(user) - set(DEFAULTS)
    if unknown:
        raise ConfigError(f"unknown config keys: {sorted(unknown)}")
    cfg = copy.deepcopy(DEFAULTS)
    for key, value in user.items():
        if key in _SECTION_KEYS and value is not None:
            if not isinstance(value, dict):
                raise ConfigError(f"config section {key!r} must be an object")
            bad = set(value) - _SECTION_KEYS[key]
            if bad:
                raise ConfigError(f"unknown keys in {key!r}: {sorted(bad)}")
            base = cfg[key] if isinstance(cfg[key], dict) else {}
            if key in ("encoder", "importance", "prior") and value.get("kind", base.get("kind")) != base.get("kind"):
                base = {}
            cfg[key] = {**base, **value}
        else:
            cfg[key] = value
    return cfg


@dataclass
class SimConfig:
    """Validated simulation configuration plus the objects built from it."""

    raw: dict

    def __post_init__(self):
        self.raw = _merge(self.raw)
        c = self.raw
        try:
            enc = dict(c["encoder"])
            if "shape" in enc:
                enc["shape"] = tuple(enc["shape"])
            self.encoder = codec.EncoderSpec(**enc)
            cb = c["codebook"]
            self.codebook = codec.make_codebook(cb["u_min"], cb["u_max"], cb["bits"])
            self.image_shape = None
            if self.encoder.kind == "identity_block":
                w, h = c["image"]["size"]
                self.image_shape = (int(w), int(h), 3)
                fshape = codec.space_to_depth(np.zeros(self.image_shape), self.encoder.block).shape
            else:
                fshape = self.encoder.shape
            self.layout = packetizer.PacketLayout(fshape, tuple(c["layout"]["patch"]), cb["bits"])
            lk = c["link"]
            self.channel = lk["channel"]
            if self.channel not in ("awgn", "rayleigh"):
                raise ConfigError(f"unknown channel model {self.channel!r}")
            self.link = link.LinkParams(int(lk["blocklength"]), float(lk["rate"]),
                                        float(lk["noise_power"]), float(lk["p_ave"]),
                                        int(lk["subcarriers"]))
            if self.layout.payload_bits > math.floor(self.link.rate * self.link.blocklength + 1e-9):
                raise ConfigError(
                    f"packet payload {self.layout.payload_bits} bits exceeds "
                    f"R_c * D = {self.link.rate * self.link.blocklength:g}")
            if c["policy"] not in POLICIES:
                raise ConfigError(f"policy must be one of {POLICIES}")
            if c["mode"] not in MODES:
                raise ConfigError(f"mode must be one of {MODES}")
            sc = c["schedule"]
            self.schedule = imputer.linear_schedule(int(sc["steps"]), sc["beta_start"],
                                                    sc["beta_end"], eta=float(sc["eta"]))
            if int(c["kernel"]) < 1:
                raise ConfigError("kernel must be >= 1")
            if int(c["trials"]) < 1:
                raise ConfigError("trials must be >= 1")
            if not isinstance(c["snr_db"], list):
                raise ConfigError("snr_db must be a list")
            self.prior, self.prior_offset, self.prior_scale = self._build_prior()
            self.weights = self._build_weights()
        except SemLinkError:
            raise
        except (KeyError, TypeError, ValueError) as exc:
            raise ConfigError(f"invalid configuration: {exc}") from exc

    @classmethod
    def from_file(cls, path):
        try:
            data = json.loads(Path(path).read_text())
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path} is not valid JSON: {exc}") from exc
        if not isinstance(data, dict):
            raise ConfigError("config root must be a JSON object")
        return cls(data)

    def replace(self, **changes) -> "SimConfig":
        raw = copy.deepcopy(self.raw)
        for key, value in changes.items():
            if key in raw and isinstance(raw[key], dict) and isinstance(value, dict):
                raw[key] = {**raw[key], **value}
            else:
                raw[key] = value
        return SimConfig(raw)

    def _build_prior(self):
        """Gaussian prior used by the imputer, on standardized features."""
        p = self.raw["prior"] or {}
        if self.encoder.kind == "identity_block":
            img = self.raw["image"]
            mean = p.get("mean", img["mean"])
            std = p.get("std", img["std"])
            corr = p.get("corr", float(img["corr"]) ** self.encoder.block)
            return imputer.GaussianSourceModel(0.0, corr=corr), mean, std
        enc = self.encoder
        if "variances" in p or (enc.corr is None and "corr" not in p):
            var = p.get("variances", enc.variances)
            var = np.maximum(np.asarray(var if var is not None else 1.0, dtype=np.float64), 1e-12)
            return imputer.GaussianSourceModel(p.get("mean", 0.0) if "mean" in p else enc.mean_tensor(),
                                               variances=var), 0.0, 1.0
        return (imputer.GaussianSourceModel(0.0, corr=p.get("corr", enc.corr)),
                p.get("mean", enc.mean_tensor()), p.get("std", enc.std))

    def _build_weights(self):
        spec = self.raw["importance"]
        kind = spec.get("kind", "uniform")
        grid = self.layout.feature_shape[:2]
        if kind == "uniform":
            return np.ones(self.layout.n_packets)
        if kind == "blob":
            feats = importance.synthetic_blob(grid, tuple(spec.get("center", (0.5, 0.5))),
                                              float(spec.get("width", 0.25)))
        elif kind == "files":
            feats = importance.BackboneFeatures(codec.read_tensor(spec["features"]),
                                                importance.read_class_weights(spec["class_weights"]))
        else:
            raise ConfigError(f"unknown importance kind {kind!r}")
        imap, _ = importance.importance_map(feats, grid)
        return importance.patch_importance(imap, self.layout)


@dataclass
class TrialResult:
    trial: int
    seed: int
    snr_db: float
    policy: str
    mode: str
    lost: int
    n_packets: int
    per: float
    psnr: float
    mse: float
    weighted_per: float
    erased: int
    wall_time: float = 0.0


def mse(x_hat, x) -> float:
    x_hat = np.asarray(x_hat, dtype=np.float64)
    x = np.asarray(x, dtype=np.float64)
    if x_hat.shape != x.shape:
        from .errors import DataError
        raise DataError(f"shape mismatch {x_hat.shape} vs {x.shape}")
    return float(np.mean((x_hat - x) ** 2))


def psnr(x_hat, x, peak=255.0) -> float:
    err = mse(x_hat, x)
    if err == 0.0:
        return math.inf
    return 10.0 * math.log10(peak * peak / err)


def synthetic_image(shape, corr, mean, std, rng) -> np.ndarray:
    """Smooth AR(1) random image on the 0..255 scale."""
    w, h, c = shape
    spec = codec.EncoderSpec("gaussian_source", shape=(w, h, c), mean=mean, corr=corr, std=std)
    return np.clip(codec.encode(None, spec, rng), 0.0, 255.0)


def _rng(*key):
    return np.random.default_rng([int(k) for k in key])


def _allocate(policy, weights, gains, params):
    if policy == "equal" or (policy == "semantic" and not np.any(weights * gains > 0)):
        return power.equal_pa(len(gains), params.p_ave)
    if not np.any(gains > 0):
        return np.zeros(len(gains))
    if policy == "waterfill":
        return power.waterfill(gains, params.p_ave)
    prob = power.AllocationProblem(weights, gains, params.p_ave, params.blocklength, params.rate)
    return power.solve_semantic_pa(prob).powers


def run_trial(config: SimConfig, trial: int, snr_db: float | None = None,
              policy: str | None = None) -> TrialResult:
    """Run one seeded end-to-end transmission."""
    started = time.perf_counter()
    c = config.raw
    seed = int(c["seed"])
    policy = policy or c["policy"]
    params = config.link
    if snr_db is not None:
        params = link.LinkParams(params.blocklength, params.rate,
                                 params.p_ave / 10.0 ** (snr_db / 10.0), params.p_ave,
                                 params.subcarriers)
    else:
        snr_db = 10.0 * math.log10(params.p_ave / params.noise_power)
    layout = config.layout
    n = layout.n_packets
    stage = "encode"
    try:
        src_rng = _rng(seed, trial, _SOURCE)
        if config.encoder.kind == "identity_block":
            img = c["image"]
            x = synthetic_image(config.image_shape, img["corr"], img["mean"], img["std"], src_rng)
            y = codec.encode(x, config.encoder)
        else:
            y = codec.encode(None, config.encoder, src_rng)
            x = y
        stage = "quantize"
        _, idx = codec.quantize(y, config.codebook)
        stage = "packetize"
        packets = packetizer.packetize(idx, layout)
        stage = "power"
        b = params.subcarriers
        n_slots = -(-n // b)
        weights = np.zeros(n_slots * b)
        weights[:n] = config.weights
        lost = set()
        wper = 0.0
        for s in range(n_slots):
            sl = slice(s * b, (s + 1) * b)
            chan = link.draw_channel(b, config.channel, _rng(seed, trial, _CHANNEL, s))
            g = chan.gains / params.noise_power
            p = _allocate(policy, weights[sl], g, params)
            real = np.arange(s * b, (s + 1) * b) < n
            rho = np.atleast_1d(link.packet_error_prob(g * p, params.blocklength, params.rate))
            rho = np.where(p > 0, rho, 1.0)
            wper += float(np.dot(weights[sl][real], rho[real]))
            stage = "channel"
            slot_lost = link.sample_losses(chan, p, params, _rng(seed, trial, _LOSS, s))
            lost |= {s * b + i for i in slot_lost if s * b + i < n}
            stage = "power"
        if c["mode"] == "propagating":
            lost = set(packetizer.propagate_losses(lost, n))
        stage = "depacketize"
        fill = codec.zero_image_feature(config.encoder, layout.feature_shape)
        y_hat, report = packetizer.depacketize(packets, lost, layout, config.codebook, fill)
        y_hat = imputer.init_erased(y_hat, report.erased, fill)
        if c["impute"] and report.lost:
            stage = "impute"
            mask = imputer.build_mask(report, int(c["kernel"]))
            off, scale = config.prior_offset, config.prior_scale
            den = imputer.GaussianDenoiser(config.prior, config.schedule)
            z = imputer.impute((y_hat - off) / scale, mask, den, config.schedule,
                               _rng(seed, trial, _IMPUTE))
            y_hat = np.where(report.erased, z * scale + off, y_hat)
        stage = "decode"
        x_hat = codec.decode(y_hat, config.encoder)
        if config.encoder.kind == "identity_block":
            x_hat = np.clip(x_hat, 0.0, 255.0)
        stage = "metrics"
        err = mse(x_hat, x)
        return TrialResult(
            trial=int(trial), seed=seed, snr_db=float(snr_db), policy=policy, mode=c["mode"],
            lost=len(lost), n_packets=n, per=len(lost) / n,
            psnr=psnr(x_hat, x), mse=err, weighted_per=wper, erased=report.count,
            wall_time=time.perf_counter() - started)
    except StageError:
        raise
    except SemLinkError as exc:
        raise StageError(stage, exc) from exc


def run_trials(config: SimConfig, snr_db=None, policy=None, trials=None) -> list:
    n = int(trials if trials is not None else config.raw["trials"])
    return [run_trial(config, t, snr_db, policy) for t in range(n)]


def _stats(values):
    arr = np.asarray(values, dtype=np.float64)
    if np.isinf(arr).any():
        return math.inf, math.nan
    return float(arr.mean()), float(arr.std(ddof=1)) if arr.size > 1 else 0.0


SWEEP_COLUMNS = ["snr_db", "policy", "mode", "trials", "per_mean", "per_std", "lost_mean",
                 "psnr_mean", "psnr_std", "mse_mean", "mse_std",
                 "weighted_per_mean", "weighted_per_std"]

TRIAL_COLUMNS = ["trial", "seed", "snr_db", "policy", "mode", "lost", "n_packets", "per",
                 "psnr", "mse", "weighted_per", "erased"]


def aggregate(results) -> dict:
    r0 = results[0]
    row = {"snr_db": r0.snr_db, "policy": r0.policy, "mode": r0.mode, "trials": len(results)}
    for name in ("per", "psnr", "mse", "weighted_per"):
        row[f"{name}_mean"], row[f"{name}_std"] = _stats([getattr(r, name) for r in results])
    row["lost_mean"] = float(np.mean([r.lost for r in results]))
    return row


def run_sweep(config: SimConfig, policies=None) -> list:
    snrs = config.raw["snr_db"]
    if not snrs:
        raise ConfigError("sweep needs a non-empty snr_db list")
    policies = policies or [config.raw["policy"]]
    rows = []
    for s in snrs:
        for pol in policies:
            rows.append(aggregate(run_trials(config, float(s), pol)))
    return rows


def fmt(v) -> str:
    if isinstance(v, str):
        return v
    if isinstance(v, (bool, np.bool_)):
        return str(v).lower()
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    v = float(v)
    if math.isnan(v):
        return "nan"
    if math.isinf(v):
        return "inf" if v > 0 else "-inf"
    return f"{v:.9g}"


def write_csv(path, rows, columns) -> None:
    path = Path(path)
    try:
        with path.open("w", newline="") as fh:
            out = csv.writer(fh, lineterminator="\n")
            out.writerow(columns)
            for row in rows:
                out.writerow([fmt(row[k]) for k in columns])
    except OSError as exc:
        raise OSError(f"cannot write {path}: {exc}") from exc


def trial_rows(results) -> list:
    return [{k: v for k, v in asdict(r).items() if k != "wall_time"} for r in results]


def write_manifest(path, config: SimConfig, command: str, extra=None) -> None:
    doc = {"command": command, "config": config.raw, "seed": int(config.raw["seed"])}
    if extra:
        doc.update(extra)
    Path(path).write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n")
