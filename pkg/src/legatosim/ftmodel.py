"""Dataset protection registry and checkpoint/recovery cost model.

A task registers each dataset once, whatever memory it lives in.  The
cost model then dispatches on location: host data is written straight to
storage, device and unified data must first cross the device-host tier.

Two transfer modes are modelled:

* ``SYNC`` -- the baseline: copy everything across the tier, then write.
  Its tier traversal runs at a reduced effective bandwidth
  (``tier_efficiency``), standing in for unpinned, unchunked copies.
* ``ASYNC`` -- chunked copies on streams overlapped with the file write;
  the slower of the two paths dominates, plus one chunk to fill the
  pipeline.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from typing import TYPE_CHECKING, Iterable, Union

from legatosim.errors import DuplicateDataset, IntervalUndefined, NothingToCheckpoint

if TYPE_CHECKING:
    from legatosim.domain import Node, NodeClass


class Location(enum.Enum):
    HOST = "host"
    DEVICE = "device"
    UNIFIED = "unified"


class CheckpointMode(enum.Enum):
    SYNC = "sync"
    ASYNC = "async"


AUTO = "auto"


@dataclass(frozen=True)
class Dataset:
    id: int
    location: Location
    size: float  # MiB

    def __post_init__(self):
        if self.size <= 0:
            raise ValueError(f"dataset {self.id}: size must be > 0 MiB")
        if not isinstance(self.location, Location):
            object.__setattr__(self, "location", Location(self.location))


@dataclass(frozen=True)
class CheckpointPolicy:
    mode: CheckpointMode = CheckpointMode.ASYNC
    interval: Union[float, str] = AUTO
    chunk_size: float = 64.0  # MiB

    def __post_init__(self):
        if not isinstance(self.mode, CheckpointMode):
            object.__setattr__(self, "mode", CheckpointMode(self.mode))
        if self.interval != AUTO and not (isinstance(self.interval, (int, float)) and self.interval > 0):
            raise ValueError(f"checkpoint interval must be > 0 or 'auto', got {self.interval!r}")
        if self.chunk_size <= 0:
            raise ValueError("chunk_size must be > 0")


@dataclass
class ProtectRegistry:
    """Ordered, append-only list of the datasets a task wants protected."""

    entries: list[Dataset] = field(default_factory=list)

    @classmethod
    def of(cls, datasets: Iterable[Dataset]) -> ProtectRegistry:
        reg = cls()
        for d in datasets:
            reg = protect(reg, d)
        return reg

    def __len__(self) -> int:
        return len(self.entries)

    def sizes(self) -> tuple[float, float]:
        """Return (total MiB, MiB that must cross the device-host tier)."""
        total = sum(d.size for d in self.entries)
        tiered = sum(d.size for d in self.entries if d.location is not Location.HOST)
        return total, tiered


def protect(reg: ProtectRegistry, d: Dataset) -> ProtectRegistry:
    if any(e.id == d.id for e in reg.entries):
        raise DuplicateDataset(f"dataset id {d.id} already protected")
    return ProtectRegistry(reg.entries + [d])


@dataclass(frozen=True)
class CostCalibration:
    """Effective-bandwidth multipliers for the Sync tier path, in (0, 1]."""

    checkpoint_tier_efficiency: float = 1.0
    recovery_tier_efficiency: float = 1.0

    def __post_init__(self):
        for name in ("checkpoint_tier_efficiency", "recovery_tier_efficiency"):
            v = getattr(self, name)
            if not (0 < v <= 1):
                raise ValueError(f"{name} must be in (0, 1], got {v}")


def _phase_times(total: float, tiered: float, storage_bw: float, tier_bw: float):
    return total / storage_bw, tiered / tier_bw


def _pipeline_fill(tiered: float, chunk_size: float, storage_bw: float, tier_bw: float) -> float:
    # First chunk through the faster stage of the two-stage pipeline.
    # Equals chunk_size / tier_bw whenever the tier is the faster link.
    return min(chunk_size, tiered) / max(storage_bw, tier_bw)


def _transfer_time(reg, policy, node_class, efficiency: float) -> float:
    if not reg.entries:
        raise NothingToCheckpoint("registry is empty")
    total, tiered = reg.sizes()
    write, tier = _phase_times(total, tiered, node_class.storage_bw, node_class.tier_bw)
    if policy.mode is CheckpointMode.SYNC:
        return write + tier / efficiency
    fill = _pipeline_fill(tiered, policy.chunk_size, node_class.storage_bw, node_class.tier_bw)
    return max(write, tier) + fill


def checkpoint_time(
    reg: ProtectRegistry,
    policy: CheckpointPolicy,
    node: Node | NodeClass,
    calibration: CostCalibration | None = None,
) -> float:
    """Seconds to write one checkpoint of ``reg`` from ``node`` to local storage."""
    cal = calibration or DEFAULT_CALIBRATION
    return _transfer_time(reg, policy, _class_of(node), cal.checkpoint_tier_efficiency)


def recovery_time(
    reg: ProtectRegistry,
    policy: CheckpointPolicy,
    node: Node | NodeClass,
    calibration: CostCalibration | None = None,
) -> float:
    """Seconds to read the last checkpoint back and restore device data."""
    cal = calibration or DEFAULT_CALIBRATION
    return _transfer_time(reg, policy, _class_of(node), cal.recovery_tier_efficiency)


def _class_of(node):
    return getattr(node, "node_class", node)


def optimal_interval(ckpt_cost: float, mtbf: float) -> float:
    """First-order optimal compute time between checkpoints, sqrt(2 C M)."""
    if ckpt_cost < 0 or mtbf <= 0:
        raise ValueError("checkpoint cost must be >= 0 and mtbf > 0")
    if mtbf <= ckpt_cost:
        raise IntervalUndefined(f"mtbf {mtbf} s does not exceed checkpoint cost {ckpt_cost} s")
    return math.sqrt(2.0 * ckpt_cost * mtbf)


# Reference configuration the Sync baseline is anchored to: one GPU per
# process, 16 GiB of device-resident data per process, NVMe-class local
# storage and a PCIe3 x16 host link.
CALIBRATION_PROCESS_MIB = 16384.0
CALIBRATION_STORAGE_BW = 3277.0
CALIBRATION_TIER_BW = 12288.0
CALIBRATION_CHUNK_MIB = 64.0
CHECKPOINT_SPEEDUP = 12.05
RECOVERY_SPEEDUP = 5.13


def calibrate(
    tiered: float,
    host: float,
    storage_bw: float,
    tier_bw: float,
    chunk_size: float,
    checkpoint_speedup: float,
    recovery_speedup: float,
) -> CostCalibration:
    """Solve for the Sync tier efficiencies that yield the given Sync/Async ratios."""
    total = tiered + host
    write, tier = _phase_times(total, tiered, storage_bw, tier_bw)
    if tier == 0:
        raise ValueError("calibration needs tier-resident data")
    async_t = max(write, tier) + _pipeline_fill(tiered, chunk_size, storage_bw, tier_bw)

    def solve(speedup):
        slack = speedup * async_t - write
        if slack <= 0:
            raise ValueError(f"speedup {speedup} unreachable for this configuration")
        return tier / slack

    return CostCalibration(solve(checkpoint_speedup), solve(recovery_speedup))


DEFAULT_CALIBRATION = calibrate(
    tiered=CALIBRATION_PROCESS_MIB,
    host=0.0,
    storage_bw=CALIBRATION_STORAGE_BW,
    tier_bw=CALIBRATION_TIER_BW,
    chunk_size=CALIBRATION_CHUNK_MIB,
    checkpoint_speedup=CHECKPOINT_SPEEDUP,
    recovery_speedup=RECOVERY_SPEEDUP,
)
