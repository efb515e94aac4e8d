"""Supply-voltage model for undervolted FPGA on-chip memories.

Below the nominal voltage a device passes through three regions: the
guardband (fault free, down to ``v_min``), the critical region (bit flips
growing exponentially as voltage drops, down to ``v_crash``) and the crash
region (device unresponsive).  Power falls continuously through the first
two regions.
"""

from __future__ import annotations

import enum
import math
from dataclasses import asdict, dataclass
from typing import TYPE_CHECKING, Mapping

from legatosim.errors import CrashRegion, InvalidFootprint, OutOfRange, UnknownPlatform

if TYPE_CHECKING:
    from legatosim.domain import Node


class VoltageRegion(enum.Enum):
    GUARDBAND = "guardband"
    CRITICAL = "critical"
    CRASH = "crash"


@dataclass(frozen=True)
class PlatformPreset:
    """Voltage anchors and fault/power calibration for one board.

    Attributes:
        name: Board name, e.g. ``"VC707"``.
        v_nom: Nominal supply voltage (V).
        v_min: Minimum safe voltage; lowest fault-free level (V).
        v_crash: Voltage below which the device stops responding (V).
        lambda_crash: Fault rate at ``v_crash`` (faults/Mbit).
        lambda_min: Fault rate just below ``v_min`` (faults/Mbit).
        power_saving_at_crash: Fractional power saving at ``v_crash``
            relative to ``v_nom``.
        mtbf_calibration: Converts faults/Mbit into a time scale
            (Mbit * seconds).
    """

    name: str
    v_nom: float
    v_min: float
    v_crash: float
    lambda_crash: float
    lambda_min: float = 1.0
    power_saving_at_crash: float = 0.91
    mtbf_calibration: float = 3600.0

    def __post_init__(self):
        if not (0 < self.v_crash < self.v_min < self.v_nom):
            raise ValueError(
                f"preset {self.name}: need 0 < v_crash < v_min < v_nom, got "
                f"{self.v_crash}, {self.v_min}, {self.v_nom}"
            )
        if not (self.lambda_crash > self.lambda_min > 0):
            raise ValueError(f"preset {self.name}: need lambda_crash > lambda_min > 0")
        if not (0 < self.power_saving_at_crash < 1):
            raise ValueError(f"preset {self.name}: power_saving_at_crash must be in (0, 1)")
        if self.mtbf_calibration <= 0:
            raise ValueError(f"preset {self.name}: mtbf_calibration must be > 0")

    @property
    def fault_slope(self) -> float:
        """Exponent k of the critical-region fault curve (1/V)."""
        return math.log(self.lambda_crash / self.lambda_min) / (self.v_min - self.v_crash)

    def to_dict(self) -> dict:
        return asdict(self)


# Boards characterised at 28nm with a 1 V nominal BRAM rail.  Only the
# fault rates at v_crash are measured values; v_min/v_crash are read off a
# plot and kept as adjustable placeholders.
_V_NOM, _V_MIN, _V_CRASH = 1.0, 0.61, 0.54

BUILTIN_PRESETS: dict[str, PlatformPreset] = {
    p.name: p
    for p in (
        PlatformPreset("VC707", _V_NOM, _V_MIN, _V_CRASH, lambda_crash=652.0),
        PlatformPreset("ZC702", _V_NOM, _V_MIN, _V_CRASH, lambda_crash=153.0),
        PlatformPreset("KC705-A", _V_NOM, _V_MIN, _V_CRASH, lambda_crash=254.0),
        PlatformPreset("KC705-B", _V_NOM, _V_MIN, _V_CRASH, lambda_crash=60.0),
    )
}


def get_preset(name: str, presets: Mapping[str, PlatformPreset] | None = None) -> PlatformPreset:
    table = BUILTIN_PRESETS if presets is None else presets
    try:
        return table[name]
    except KeyError:
        raise UnknownPlatform(name) from None


def region(v: float, p: PlatformPreset) -> VoltageRegion:
    if v <= 0 or v > p.v_nom:
        raise OutOfRange(f"{v} V outside (0, {p.v_nom}] for {p.name}")
    if v >= p.v_min:
        return VoltageRegion.GUARDBAND
    if v >= p.v_crash:
        return VoltageRegion.CRITICAL
    return VoltageRegion.CRASH


def _check_operable(v: float, p: PlatformPreset) -> VoltageRegion:
    r = region(v, p)
    if r is VoltageRegion.CRASH:
        raise CrashRegion(f"{v} V is below v_crash={p.v_crash} V on {p.name}")
    return r


def fault_rate(v: float, p: PlatformPreset) -> float:
    """Bit-flip rate in faults/Mbit at supply voltage ``v``.

    Zero in the guardband.  In the critical region the rate is the
    log-linear interpolation between ``lambda_min`` at ``v_min`` and
    ``lambda_crash`` at ``v_crash``, i.e.
    ``lambda_min * exp(k * (v_min - v))``.
    """
    if _check_operable(v, p) is VoltageRegion.GUARDBAND:
        return 0.0
    # Written as a geometric blend so both anchors come out bit-exact.
    t = (p.v_min - v) / (p.v_min - p.v_crash)
    return p.lambda_crash**t * p.lambda_min ** (1.0 - t)


def voltage_for_fault_rate(rate: float, p: PlatformPreset) -> float:
    """Inverse of :func:`fault_rate` on the critical region."""
    if not (p.lambda_min < rate <= p.lambda_crash):
        raise ValueError(f"rate {rate} outside ({p.lambda_min}, {p.lambda_crash}] for {p.name}")
    if rate == p.lambda_crash:
        return p.v_crash
    return p.v_min - math.log(rate / p.lambda_min) / p.fault_slope


def power_factor(v: float, p: PlatformPreset) -> float:
    """Power at ``v`` relative to power at ``v_nom``.

    Static-plus-quadratic shape ``s + (1 - s) * (v / v_nom)**2`` with ``s``
    fixed so that the factor at ``v_crash`` equals
    ``1 - power_saving_at_crash``.  ``s`` goes negative when the measured
    saving exceeds what a pure V^2 law allows, which is the usual case.
    """
    _check_operable(v, p)
    r_crash = (p.v_crash / p.v_nom) ** 2
    if v == p.v_crash:
        return 1.0 - p.power_saving_at_crash
    dynamic = p.power_saving_at_crash / (1.0 - r_crash)  # = 1 - s
    return 1.0 - dynamic * (1.0 - (v / p.v_nom) ** 2)


def mtbf(node: Node, footprint: float) -> float | None:
    """Mean time between bit faults for ``footprint`` Mbit held on ``node``.

    Returns None (no failures ever) for nodes without an undervolted
    platform or running inside the guardband.
    """
    if footprint <= 0:
        raise InvalidFootprint(f"footprint must be > 0 Mbit, got {footprint}")
    if node.voltage is None:
        return None
    if node.preset is None:
        raise UnknownPlatform(node.node_class.platform)
    rate = fault_rate(node.voltage, node.preset)
    if rate == 0.0:
        return None
    return node.preset.mtbf_calibration / (rate * footprint)
