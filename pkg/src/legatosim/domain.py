"""Tasks, nodes and the profiling predictions the scheduler relies on."""

from __future__ import annotations

import enum
from dataclasses import dataclass, field, replace
from typing import TYPE_CHECKING, Mapping

from legatosim.errors import UnknownPlatform, UnknownProfile
from legatosim.undervolt import BUILTIN_PRESETS, PlatformPreset, get_preset, power_factor

if TYPE_CHECKING:
    from legatosim.ftmodel import Dataset

DEFAULT_IDLE_FRACTION = 0.1


@dataclass(frozen=True)
class Resources:
    """Cores and memory (MiB).  Comparison helpers are componentwise."""

    cores: float = 0
    memory: float = 0

    def __post_init__(self):
        if self.cores < 0 or self.memory < 0:
            raise ValueError(f"negative resources: {self}")

    def __add__(self, other: Resources) -> Resources:
        return Resources(self.cores + other.cores, self.memory + other.memory)

    def __sub__(self, other: Resources) -> Resources:
        # __post_init__ rejects any negative field
        return Resources(self.cores - other.cores, self.memory - other.memory)

    def fits_in(self, other: Resources) -> bool:
        return self.cores <= other.cores and self.memory <= other.memory


@dataclass(frozen=True)
class TradeoffWeights:
    """Client energy/performance trade-off.  Performance weight is ``1 - energy_weight``."""

    energy_weight: float = 0.5

    def __post_init__(self):
        if not (0.0 <= self.energy_weight <= 1.0):
            raise ValueError(f"energy_weight must be in [0, 1], got {self.energy_weight}")

    @property
    def performance_weight(self) -> float:
        return 1.0 - self.energy_weight


class TaskStatus(enum.Enum):
    PENDING = "pending"
    RUNNING = "running"
    MIGRATING = "migrating"
    RECOVERING = "recovering"
    DONE = "done"


@dataclass
class Task:
    id: str
    kind: str
    total_work: float
    arrival: float = 0.0
    demand: Resources = field(default_factory=Resources)
    weights: TradeoffWeights = field(default_factory=TradeoffWeights)
    datasets: list[Dataset] = field(default_factory=list)
    state_size: float = 0.0
    # Mbit of task state held in undervolted memory; scales fault exposure
    footprint: float = 1.0
    progress: float = 0.0
    status: TaskStatus = TaskStatus.PENDING

    def __post_init__(self):
        if self.total_work < 0:
            raise ValueError(f"task {self.id}: total_work must be >= 0")
        if not (0.0 <= self.progress <= self.total_work):
            raise ValueError(f"task {self.id}: progress {self.progress} outside [0, {self.total_work}]")
        if self.arrival < 0:
            raise ValueError(f"task {self.id}: arrival must be >= 0")
        if self.total_work == 0 or self.progress == self.total_work:
            self.status = TaskStatus.DONE

    @property
    def remaining(self) -> float:
        return self.total_work - self.progress

    def advance(self, work: float) -> None:
        self.progress = min(self.total_work, self.progress + work)
        if self.progress >= self.total_work:
            self.progress = self.total_work
            self.status = TaskStatus.DONE


@dataclass(frozen=True)
class NodeClass:
    name: str
    capacity: Resources
    nominal_power: float
    throughput: Mapping[str, float] = field(default_factory=dict)
    platform: str | None = None
    storage_bw: float = 3277.0
    interconnect_bw: float = 1192.0
    tier_bw: float = 12288.0

    def __post_init__(self):
        for attr in ("storage_bw", "interconnect_bw", "tier_bw"):
            if getattr(self, attr) <= 0:
                raise ValueError(f"node class {self.name}: {attr} must be > 0")
        if self.nominal_power < 0:
            raise ValueError(f"node class {self.name}: nominal_power must be >= 0")
        bad = {k: v for k, v in self.throughput.items() if v <= 0}
        if bad:
            raise ValueError(f"node class {self.name}: non-positive throughput {bad}")


@dataclass
class Node:
    id: str
    node_class: NodeClass
    voltage: float | None = None
    preset: PlatformPreset | None = None
    allocated: Resources = field(default_factory=Resources)

    @property
    def free(self) -> Resources:
        return self.node_class.capacity - self.allocated

    def power_factor(self) -> float:
        if self.voltage is None:
            return 1.0
        if self.preset is None:
            raise UnknownPlatform(self.node_class.platform)
        return power_factor(self.voltage, self.preset)

    def allocate(self, demand: Resources) -> None:
        new = self.allocated + demand
        if not new.fits_in(self.node_class.capacity):
            raise ValueError(f"node {self.id}: allocating {demand} exceeds capacity")
        self.allocated = new

    def release(self, demand: Resources) -> None:
        self.allocated = self.allocated - demand


def make_node(
    node_id: str,
    node_class: NodeClass,
    voltage: float | None = None,
    platform: str | None = None,
    presets: Mapping[str, PlatformPreset] | None = None,
) -> Node:
    """Build a node, resolving its platform preset and defaulting the voltage to v_nom."""
    name = platform or node_class.platform
    if platform and platform != node_class.platform:
        node_class = replace(node_class, platform=platform)
    preset = None
    if name is not None:
        preset = get_preset(name, BUILTIN_PRESETS if presets is None else presets)
        if voltage is None:
            voltage = preset.v_nom
    elif voltage is not None:
        raise UnknownPlatform(None)
    return Node(node_id, node_class, voltage, preset)


@dataclass(frozen=True)
class ProfileEntry:
    throughput: float
    active_power: float

    def __post_init__(self):
        if self.throughput <= 0 or self.active_power <= 0:
            raise ValueError(f"profile entries must be positive: {self}")


class ProfileTable:
    """Predicted throughput and active power per (task kind, node class)."""

    def __init__(self, entries: Mapping[tuple[str, str], ProfileEntry] | None = None):
        self.entries: dict[tuple[str, str], ProfileEntry] = dict(entries or {})

    def add(self, kind: str, node_class: str, throughput: float, active_power: float) -> None:
        self.entries[(kind, node_class)] = ProfileEntry(throughput, active_power)

    def lookup(self, kind: str, node_class: str) -> ProfileEntry:
        try:
            return self.entries[(kind, node_class)]
        except KeyError:
            raise UnknownProfile(kind, node_class) from None

    def __contains__(self, key) -> bool:
        return key in self.entries

    def __eq__(self, other) -> bool:
        return isinstance(other, ProfileTable) and self.entries == other.entries

    def __repr__(self) -> str:
        return f"ProfileTable({self.entries!r})"


def estimate_runtime(task: Task, node_class: NodeClass, profiles: ProfileTable) -> float:
    entry = profiles.lookup(task.kind, node_class.name)
    return (task.total_work - task.progress) / entry.throughput


def estimate_energy(task: Task, node: Node, profiles: ProfileTable) -> float:
    """Predicted joules to finish ``task`` on ``node``, voltage scaling included."""
    entry = profiles.lookup(task.kind, node.node_class.name)
    runtime = (task.total_work - task.progress) / entry.throughput
    return runtime * entry.active_power * node.power_factor()


def idle_power(node: Node, idle_fraction: float = DEFAULT_IDLE_FRACTION) -> float:
    return idle_fraction * node.node_class.nominal_power * node.power_factor()
