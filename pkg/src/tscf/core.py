"""Domain types and mask algebra.

Everything here is an immutable value type plus pure functions: masks are
decomposed into maximal runs, rebuilt from runs, broadcast across channels,
and applied to a series by substituting donor values at active cells.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

COMMON = "common"
INDEPENDENT = "independent"


class OutOfBoundsError(ValueError):
    """A subsequence does not fit inside the (L, C) grid."""


class DimensionMismatchError(ValueError):
    """Operands do not share the expected (L, C) shape."""


def _frozen(a: np.ndarray) -> np.ndarray:
    a.flags.writeable = False
    return a


@dataclass(frozen=True)
class TimeSeriesInstance:
    """An L x C real-valued series (rows = time steps, columns = channels)."""

    values: np.ndarray
    label: Optional[int] = None

    def __post_init__(self):
        v = np.array(self.values, dtype=float)
        if v.ndim == 1:
            v = v[:, None]
        if v.ndim != 2 or v.shape[0] < 1 or v.shape[1] < 1:
            raise ValueError(f"series must be L x C with L, C >= 1, got shape {v.shape}")
        if not np.all(np.isfinite(v)):
            raise ValueError("series values must be finite")
        if self.label is not None and self.label < 0:
            raise ValueError("label must be a nonnegative class id")
        object.__setattr__(self, "values", _frozen(v))

    @property
    def length(self) -> int:
        return self.values.shape[0]

    @property
    def channels(self) -> int:
        return self.values.shape[1]


@dataclass(frozen=True)
class LabeledDataset:
    """Labeled instances sharing one (L, C) shape; the split used for NUN
    search, reference-model fitting and error calibration."""

    instances: tuple[TimeSeriesInstance, ...]
    class_count: int = 0  # 0 means "infer as max label + 1"

    def __post_init__(self):
        insts = tuple(self.instances)
        if not insts:
            raise ValueError("dataset must be nonempty")
        shape = insts[0].values.shape
        for inst in insts:
            if inst.label is None:
                raise ValueError("all dataset instances must be labeled")
            if inst.values.shape != shape:
                raise DimensionMismatchError(
                    f"instances disagree on shape: {inst.values.shape} vs {shape}"
                )
        labels = {inst.label for inst in insts}
        if len(labels) < 2:
            raise ValueError("dataset must contain at least 2 distinct labels")
        k = self.class_count if self.class_count else max(labels) + 1
        if max(labels) >= k:
            raise ValueError(f"label {max(labels)} out of range for {k} classes")
        object.__setattr__(self, "instances", insts)
        object.__setattr__(self, "class_count", k)

    @property
    def length(self) -> int:
        return self.instances[0].length

    @property
    def channels(self) -> int:
        return self.instances[0].channels

    def __len__(self) -> int:
        return len(self.instances)

    def values_array(self) -> np.ndarray:
        """Stacked (n, L, C) view of all instances."""
        return np.stack([inst.values for inst in self.instances])

    def labels_array(self) -> np.ndarray:
        return np.array([inst.label for inst in self.instances], dtype=int)


@dataclass(frozen=True)
class ChangeMask:
    """Binary change indicator: a shared length-L vector (common) or an
    L x C matrix (independent)."""

    kind: str
    bits: np.ndarray

    def __post_init__(self):
        if self.kind not in (COMMON, INDEPENDENT):
            raise ValueError(f"unknown mask kind {self.kind!r}")
        raw = np.asarray(self.bits)
        expected_ndim = 1 if self.kind == COMMON else 2
        if raw.ndim != expected_ndim:
            raise ValueError(f"{self.kind} mask must be {expected_ndim}-D, got {raw.ndim}-D")
        if raw.size == 0:
            raise ValueError("mask must be nonempty")
        if not ((raw == 0) | (raw == 1)).all():
            raise ValueError("mask entries must be 0 or 1")
        object.__setattr__(self, "bits", _frozen(raw.astype(np.uint8)))

    @property
    def length(self) -> int:
        return self.bits.shape[0]

    @property
    def positions(self) -> int:
        return self.bits.size

    def popcount(self) -> int:
        return int(self.bits.sum())

    def key(self) -> bytes:
        """Hashable identity used for de-duplication."""
        return self.kind.encode() + self.bits.tobytes()

    def __eq__(self, other) -> bool:
        return (
            isinstance(other, ChangeMask)
            and self.kind == other.kind
            and self.bits.shape == other.bits.shape
            and bool(np.array_equal(self.bits, other.bits))
        )

    def __hash__(self):
        return hash(self.key())


@dataclass(frozen=True, order=True)
class Subsequence:
    """A maximal run of active cells: start time, channel, run length."""

    start: int
    channel: int
    length: int

    def __post_init__(self):
        if self.start < 0 or self.channel < 0 or self.length < 1:
            raise OutOfBoundsError(f"bad subsequence {(self.start, self.channel, self.length)}")


@dataclass
class Individual:
    """Population member: a mask plus fitness bookkeeping filled in after
    evaluation and sorting."""

    mask: ChangeMask
    objectives: Optional["ObjectiveVector"] = None  # set by the objectives module
    rank: Optional[int] = None
    crowding: Optional[float] = None


def decompose_mask(mask: ChangeMask) -> list[Subsequence]:
    """Maximal runs of ones along the time axis, per channel, sorted by
    (channel, start). Common masks decompose as a single channel."""
    per_channel = (mask.bits[:, None] if mask.kind == COMMON else mask.bits).T != 0
    rises = per_channel.copy()
    rises[:, 1:] &= ~per_channel[:, :-1]
    falls = per_channel.copy()
    falls[:, :-1] &= ~per_channel[:, 1:]
    start_c, start_t = np.nonzero(rises)  # row-major over (C, L): (channel, start) order
    _, end_t = np.nonzero(falls)
    return [
        Subsequence(int(s), int(c), int(e - s + 1))
        for c, s, e in zip(start_c, start_t, end_t)
    ]


def reconstruct_mask(subs: list[Subsequence], length: int, channels: int, kind: str) -> ChangeMask:
    """Union of the given runs. Raises OutOfBoundsError if any run escapes
    the (length, channels) grid."""
    if kind == COMMON:
        bits = np.zeros(length, dtype=np.uint8)
        for sub in subs:
            if sub.channel != 0 or sub.start + sub.length > length:
                raise OutOfBoundsError(f"{sub} outside common mask of length {length}")
            bits[sub.start : sub.start + sub.length] = 1
        return ChangeMask(COMMON, bits)
    bits = np.zeros((length, channels), dtype=np.uint8)
    for sub in subs:
        if sub.channel >= channels or sub.start + sub.length > length:
            raise OutOfBoundsError(f"{sub} outside {length}x{channels} mask")
        bits[sub.start : sub.start + sub.length, sub.channel] = 1
    return ChangeMask(INDEPENDENT, bits)


def broadcast_mask(mask: ChangeMask, channels: int) -> ChangeMask:
    """Replicate a common mask across channels; rows stay in lockstep."""
    if mask.kind != COMMON:
        raise ValueError("only common masks can be broadcast")
    return ChangeMask(INDEPENDENT, np.repeat(mask.bits[:, None], channels, axis=1))


def as_independent(mask: ChangeMask, channels: int) -> ChangeMask:
    return mask if mask.kind == INDEPENDENT else broadcast_mask(mask, channels)


def mask_matrix(mask: ChangeMask, channels: int) -> np.ndarray:
    """Boolean L x C activity matrix (common masks activate whole rows)."""
    if mask.kind == COMMON:
        return np.repeat(mask.bits[:, None].astype(bool), channels, axis=1)
    if mask.bits.shape[1] != channels:
        raise DimensionMismatchError(
            f"mask has {mask.bits.shape[1]} channels, expected {channels}"
        )
    return mask.bits.astype(bool)


def apply_mask(
    x: TimeSeriesInstance, mask: ChangeMask, nun: TimeSeriesInstance
) -> TimeSeriesInstance:
    """Substitute donor values where the mask is active; the result carries
    no label."""
    if x.values.shape != nun.values.shape:
        raise DimensionMismatchError(
            f"series shapes differ: {x.values.shape} vs {nun.values.shape}"
        )
    if mask.length != x.length:
        raise DimensionMismatchError(f"mask length {mask.length} != series length {x.length}")
    active = mask_matrix(mask, x.channels)
    return TimeSeriesInstance(np.where(active, nun.values, x.values))


def count_subsequences(mask: ChangeMask) -> int:
    """Number of maximal runs; a run starting at time 0 counts."""
    return len(decompose_mask(mask))


def flatten_bits(mask: ChangeMask) -> np.ndarray:
    """Channel-major flattening (channel 0's L bits first); fixes the cut
    order used by crossover."""
    if mask.kind == COMMON:
        return mask.bits.copy()
    return mask.bits.T.reshape(-1).copy()


def mask_from_flat(flat: np.ndarray, length: int, channels: int, kind: str) -> ChangeMask:
    """Inverse of flatten_bits."""
    if kind == COMMON:
        return ChangeMask(COMMON, flat)
    return ChangeMask(INDEPENDENT, flat.reshape(channels, length).T)
