"""Spatial-error-concentration packetization.

Each packet carries one ``W_z x H_z`` spatial patch across *all* feature
channels, so a lost packet erases a compact block rather than scattering
damage over the whole feature.  Packets are emitted in row-major order over
the patch grid; inside a packet elements are written channel by channel,
each channel row-major over the patch, each element as ``R`` bits MSB first.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np

from .codec import Codebook, dequantize
from .errors import ConfigError, DataError


@dataclass(frozen=True)
class PacketLayout:
    feature_shape: tuple
    patch: tuple
    bits: int

    def __post_init__(self):
        object.__setattr__(self, "feature_shape", tuple(int(v) for v in self.feature_shape))
        object.__setattr__(self, "patch", tuple(int(v) for v in self.patch))
        if len(self.feature_shape) != 3 or min(self.feature_shape) < 1:
            raise ConfigError(f"bad feature shape {self.feature_shape}")
        if len(self.patch) != 2 or min(self.patch) < 1:
            raise ConfigError(f"bad patch size {self.patch}")
        w, h, _ = self.feature_shape
        if w % self.patch[0] or h % self.patch[1]:
            raise ConfigError(f"patch {self.patch} does not tile feature {w}x{h}")
        if not 1 <= int(self.bits) <= 16:
            raise ConfigError("bits per element must be in [1, 16]")

    @property
    def grid(self) -> tuple:
        return (self.feature_shape[0] // self.patch[0], self.feature_shape[1] // self.patch[1])

    @property
    def n_packets(self) -> int:
        gw, gh = self.grid
        return gw * gh

    @property
    def payload_bits(self) -> int:
        return self.patch[0] * self.patch[1] * self.feature_shape[2] * self.bits

    def origin(self, index: int) -> tuple:
        """Patch-grid coordinates of packet ``index``."""
        return divmod(int(index), self.grid[1])

    def extent(self, index: int) -> tuple:
        """Feature-space slices covered by packet ``index``."""
        i, j = self.origin(index)
        wz, hz = self.patch
        return slice(i * wz, (i + 1) * wz), slice(j * hz, (j + 1) * hz)

    def patch_view(self, arr) -> np.ndarray:
        """View a ``W x H x ...`` array as ``N x W_z x H_z x ...`` in packet order."""
        arr = np.asarray(arr)
        gw, gh = self.grid
        wz, hz = self.patch
        rest = arr.shape[2:]
        return (arr.reshape(gw, wz, gh, hz, *rest)
                   .swapaxes(1, 2)
                   .reshape(gw * gh, wz, hz, *rest))

    def from_patches(self, blocks) -> np.ndarray:
        blocks = np.asarray(blocks)
        gw, gh = self.grid
        wz, hz = self.patch
        rest = blocks.shape[3:]
        return (blocks.reshape(gw, gh, wz, hz, *rest)
                      .swapaxes(1, 2)
                      .reshape(gw * wz, gh * hz, *rest))


@dataclass(frozen=True)
class Packet:
    index: int
    origin: tuple
    payload: np.ndarray  # uint8 array of 0/1, length K

    def __eq__(self, other):
        if not isinstance(other, Packet):
            return NotImplemented
        return (self.index == other.index and self.origin == other.origin
                and np.array_equal(self.payload, other.payload))

    __hash__ = None


@dataclass(frozen=True)
class ErasureReport:
    """Lost packet indices and the boolean map of erased feature elements."""

    lost: frozenset
    erased: np.ndarray  # bool, feature shape

    @property
    def positions(self) -> set:
        return {tuple(int(v) for v in p) for p in np.argwhere(self.erased)}

    @property
    def count(self) -> int:
        return int(self.erased.sum())

    @classmethod
    def from_positions(cls, positions, feature_shape, lost=()):
        erased = np.zeros(feature_shape, dtype=bool)
        for p in positions:
            erased[tuple(p)] = True
        return cls(frozenset(lost), erased)


def _to_bits(values, bits):
    shifts = np.arange(bits - 1, -1, -1, dtype=np.int64)
    return ((values[:, None] >> shifts) & 1).astype(np.uint8).ravel()


def _from_bits(payload, bits):
    shifts = np.arange(bits - 1, -1, -1, dtype=np.int64)
    return (payload.reshape(-1, bits).astype(np.int64) << shifts).sum(axis=1)


def packetize(indices, layout: PacketLayout) -> list:
    idx = np.asarray(indices)
    if idx.shape != layout.feature_shape:
        raise ConfigError(f"index tensor shape {idx.shape} != layout {layout.feature_shape}")
    if not np.issubdtype(idx.dtype, np.integer):
        raise DataError("packetize expects integer level indices")
    if idx.size and (idx.min() < 0 or idx.max() >= (1 << layout.bits)):
        raise DataError(f"indices do not fit in {layout.bits} bits")
    blocks = layout.patch_view(idx.astype(np.int64))
    packets = []
    for n, block in enumerate(blocks):
        # channel-major, then row-major inside the patch
        flat = np.moveaxis(block, 2, 0).ravel()
        packets.append(Packet(n, layout.origin(n), _to_bits(flat, layout.bits)))
    return packets


def erasure_from_lost(lost, layout: PacketLayout) -> ErasureReport:
    erased = np.zeros(layout.feature_shape, dtype=bool)
    for p in lost:
        erased[layout.extent(p)] = True
    return ErasureReport(frozenset(int(p) for p in lost), erased)


def depacketize(packets, lost, layout: PacketLayout, codebook: Codebook, fill):
    """Rebuild the received feature from the packets that survived.

    Elements of lost packets (and of packets absent from ``packets``) take
    the corresponding ``fill`` values.  Returns ``(y_hat, report)``.
    """
    fill = np.asarray(fill, dtype=np.float64)
    if fill.shape != layout.feature_shape:
        raise ConfigError(f"fill shape {fill.shape} != layout {layout.feature_shape}")
    lost = {int(p) for p in lost}
    seen = set()
    idx = np.zeros(layout.feature_shape, dtype=np.int64)
    wz, hz = layout.patch
    c = layout.feature_shape[2]
    for pkt in packets:
        if pkt.index in seen:
            raise DataError(f"duplicate packet index {pkt.index}")
        if not 0 <= pkt.index < layout.n_packets:
            raise DataError(f"packet index {pkt.index} outside layout")
        seen.add(pkt.index)
        if pkt.index in lost:
            continue
        if len(pkt.payload) != layout.payload_bits:
            raise DataError(f"packet {pkt.index} payload has {len(pkt.payload)} bits")
        vals = _from_bits(np.asarray(pkt.payload), layout.bits)
        idx[layout.extent(pkt.index)] = np.moveaxis(vals.reshape(c, wz, hz), 0, 2)
    lost |= set(range(layout.n_packets)) - seen
    report = erasure_from_lost(lost, layout)
    y_hat = np.where(report.erased, fill, dequantize(idx, codebook))
    return y_hat, report


def erasure_locality_check(report: ErasureReport, layout: PacketLayout) -> bool:
    """True iff the erased set is a union of whole patch x all-channel blocks."""
    erased = np.asarray(report.erased, dtype=bool)
    if erased.shape != layout.feature_shape:
        return False
    per_packet = layout.patch_view(erased).reshape(layout.n_packets, -1)
    return bool(np.all(per_packet.all(axis=1) | ~per_packet.any(axis=1)))


def propagate_losses(lost, n_packets: int) -> frozenset:
    """Everything from the first loss onward is lost (variable-length coding cliff)."""
    if not lost:
        return frozenset()
    return frozenset(range(min(lost), n_packets))


# --- wire format: <u32 index><u32 bit length><payload bytes, MSB first> ---

_PKT_HEADER = struct.Struct("<II")


def packets_to_bytes(packets) -> bytes:
    out = bytearray()
    for pkt in packets:
        bits = np.asarray(pkt.payload, dtype=np.uint8)
        out += _PKT_HEADER.pack(pkt.index, len(bits))
        out += np.packbits(bits).tobytes()
    return bytes(out)


def packets_from_bytes(buf: bytes, layout: PacketLayout) -> list:
    packets = []
    pos = 0
    while pos < len(buf):
        if pos + _PKT_HEADER.size > len(buf):
            raise DataError("truncated packet header")
        index, nbits = _PKT_HEADER.unpack_from(buf, pos)
        pos += _PKT_HEADER.size
        nbytes = (nbits + 7) // 8
        if pos + nbytes > len(buf):
            raise DataError(f"truncated payload for packet {index}")
        raw = np.frombuffer(buf, dtype=np.uint8, count=nbytes, offset=pos)
        pos += nbytes
        packets.append(Packet(index, layout.origin(index), np.unpackbits(raw)[:nbits]))
    return packets
