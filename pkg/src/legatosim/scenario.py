"""Scenario files: JSON in, validated :class:`Scenario` out, and back.

The accepted layout and every default are documented in
``docs/scenario.md``.  :func:`to_dict` produces the *resolved* form (all
defaults filled, node classes hoisted, task templates expanded); loading
that form again yields an equal scenario.
"""

from __future__ import annotations

import copy
import hashlib
import json
from collections import Counter
from dataclasses import dataclass, field, fields, replace
from pathlib import Path
from typing import Any

from legatosim.domain import NodeClass, ProfileTable, Resources, Task, TradeoffWeights, make_node
from legatosim.errors import ScenarioError, UnknownPlatform
from legatosim.ftmodel import (
    AUTO,
    DEFAULT_CALIBRATION,
    CheckpointMode,
    CheckpointPolicy,
    CostCalibration,
    Dataset,
    Location,
    ProtectRegistry,
)
from legatosim.heats import SchedulerConfig
from legatosim.undervolt import BUILTIN_PRESETS, PlatformPreset, region

BUNDLED_DIR = Path(__file__).parent / "scenarios"


@dataclass(frozen=True)
class NodeGroup:
    node_class: str
    count: int = 1
    voltage: float | None = None
    platform: str | None = None
    prefix: str | None = None


@dataclass(frozen=True)
class SimOptions:
    idle_fraction: float = 0.1
    fatal_fraction: float = 1.0
    migration_overhead: float = 1.0
    horizon: float | None = None


@dataclass
class Scenario:
    name: str = "scenario"
    presets: dict[str, PlatformPreset] = field(default_factory=dict)
    preset_overrides: list[PlatformPreset] = field(default_factory=list)
    node_classes: dict[str, NodeClass] = field(default_factory=dict)
    nodes: list[NodeGroup] = field(default_factory=list)
    profiles: ProfileTable = field(default_factory=ProfileTable)
    tasks: list[Task] = field(default_factory=list)
    scheduler: SchedulerConfig = field(default_factory=SchedulerConfig)
    checkpoint: CheckpointPolicy | None = None
    calibration: CostCalibration = DEFAULT_CALIBRATION
    simulation: SimOptions = field(default_factory=SimOptions)

    def build_cluster(self):
        """Fresh list of nodes with empty allocations, ids in declaration order."""
        out = []
        counters: dict[str, int] = {}
        for g in self.nodes:
            prefix = g.prefix or g.node_class
            for _ in range(g.count):
                k = counters.get(prefix, 0)
                counters[prefix] = k + 1
                out.append(
                    make_node(f"{prefix}-{k}", self.node_classes[g.node_class], g.voltage, g.platform, self.presets)
                )
        return out

    def fresh_tasks(self) -> list[Task]:
        return [copy.deepcopy(t) for t in self.tasks]

    def with_energy_weight(self, w: float) -> Scenario:
        tasks = [replace(copy.deepcopy(t), weights=TradeoffWeights(w)) for t in self.tasks]
        return replace(self, tasks=tasks)


# -- parsing -----------------------------------------------------------------


def _req(obj: dict, key: str, where: str):
    if key not in obj:
        raise ScenarioError(f"{where}: missing required field {key!r}")
    return obj[key]


def _check_keys(obj: Any, allowed: set[str], where: str) -> dict:
    if not isinstance(obj, dict):
        raise ScenarioError(f"{where}: expected an object, got {type(obj).__name__}")
    extra = set(obj) - allowed
    if extra:
        raise ScenarioError(f"{where}: unknown field(s) {sorted(extra)}")
    return obj


def _build(where: str, factory, *args, **kwargs):
    try:
        return factory(*args, **kwargs)
    except ScenarioError:
        raise
    except (ValueError, TypeError) as e:
        raise ScenarioError(f"{where}: {e}") from None


_PRESET_FIELDS = {f.name for f in fields(PlatformPreset)}


def _parse_presets(raw: list) -> tuple[dict[str, PlatformPreset], list[PlatformPreset]]:
    table = dict(BUILTIN_PRESETS)
    overrides = []
    for i, p in enumerate(raw):
        where = f"presets[{i}]"
        _check_keys(p, _PRESET_FIELDS, where)
        name = _req(p, "name", where)
        base = table.get(name)
        if base is not None:
            preset = _build(where, replace, base, **p)
        else:
            preset = _build(where, PlatformPreset, **p)
        table[name] = preset
        overrides.append(preset)
    return table, overrides


def _parse_resources(raw, where: str, default: Resources | None = None) -> Resources:
    if raw is None and default is not None:
        return default
    _check_keys(raw, {"cores", "memory"}, where)
    return _build(where, Resources, raw.get("cores", 0), raw.get("memory", 0))


_CLASS_KEYS = {"name", "capacity", "nominal_power", "throughput", "platform", "storage_bw", "interconnect_bw", "tier_bw"}


def _parse_class(raw: dict, where: str) -> NodeClass:
    _check_keys(raw, _CLASS_KEYS, where)
    kw = {k: raw[k] for k in ("platform", "storage_bw", "interconnect_bw", "tier_bw") if k in raw}
    return _build(
        where,
        NodeClass,
        name=_req(raw, "name", where),
        capacity=_parse_resources(_req(raw, "capacity", where), f"{where}.capacity"),
        nominal_power=_req(raw, "nominal_power", where),
        throughput=dict(raw.get("throughput", {})),
        **kw,
    )


def _parse_datasets(raw: list, where: str) -> list[Dataset]:
    out = []
    for j, d in enumerate(raw):
        w = f"{where}.datasets[{j}]"
        _check_keys(d, {"id", "location", "size"}, w)
        loc = _req(d, "location", w)
        try:
            loc = Location(loc)
        except ValueError:
            raise ScenarioError(f"{w}: location must be one of host/device/unified, got {loc!r}") from None
        out.append(_build(w, Dataset, _req(d, "id", w), loc, _req(d, "size", w)))
    try:
        ProtectRegistry.of(out)
    except ValueError as e:
        raise ScenarioError(f"{where}: {e}") from None
    return out


_TASK_KEYS = {
    "id", "kind", "work", "arrival", "demand", "energy_weight", "datasets",
    "state_size", "footprint", "count", "interarrival",
}


def _parse_tasks(raw: list) -> list[Task]:
    tasks = []
    for i, t in enumerate(raw):
        where = f"tasks[{i}]"
        _check_keys(t, _TASK_KEYS, where)
        count = t.get("count", 1)
        if not isinstance(count, int) or count < 0:
            raise ScenarioError(f"{where}: count must be a non-negative integer")
        base_id = str(t.get("id", f"t{i}"))
        arrival = t.get("arrival", 0.0)
        gap = t.get("interarrival", 0.0)
        demand = _parse_resources(t.get("demand"), f"{where}.demand", default=Resources(1, 0))
        datasets = _parse_datasets(t.get("datasets", []), where)
        for k in range(count):
            tid = base_id if count == 1 and "count" not in t else f"{base_id}-{k}"
            tasks.append(
                _build(
                    where,
                    Task,
                    id=tid,
                    kind=_req(t, "kind", where),
                    total_work=_req(t, "work", where),
                    arrival=arrival + k * gap,
                    demand=demand,
                    weights=_build(where, TradeoffWeights, t.get("energy_weight", 0.5)),
                    datasets=list(datasets),
                    state_size=t.get("state_size", 0.0),
                    footprint=t.get("footprint", 1.0),
                )
            )
    dupes = sorted(k for k, v in Counter(t.id for t in tasks).items() if v > 1)
    if dupes:
        raise ScenarioError(f"duplicate task id(s) {dupes}")
    return tasks


def from_dict(raw: dict) -> Scenario:
    """Validate a decoded scenario document and fill every default."""
    top = {
        "name", "presets", "node_classes", "nodes", "profiles", "tasks",
        "scheduler", "checkpoint", "calibration", "simulation", "version",
    }
    _check_keys(raw, top, "scenario")
    presets, overrides = _parse_presets(raw.get("presets", []))

    classes: dict[str, NodeClass] = {}
    for i, c in enumerate(raw.get("node_classes", [])):
        nc = _parse_class(c, f"node_classes[{i}]")
        if nc.name in classes:
            raise ScenarioError(f"node_classes[{i}]: duplicate class {nc.name!r}")
        classes[nc.name] = nc

    groups = []
    for i, g in enumerate(raw.get("nodes", [])):
        where = f"nodes[{i}]"
        _check_keys(g, {"class", "count", "voltage", "platform", "prefix"}, where)
        ref = _req(g, "class", where)
        if isinstance(ref, dict):
            nc = _parse_class(ref, f"{where}.class")
            if nc.name in classes and classes[nc.name] != nc:
                raise ScenarioError(f"{where}: inline class {nc.name!r} conflicts with an existing definition")
            classes[nc.name] = nc
            ref = nc.name
        elif ref not in classes:
            raise ScenarioError(f"{where}: unknown node class {ref!r}")
        count = g.get("count", 1)
        if not isinstance(count, int) or count < 0:
            raise ScenarioError(f"{where}: count must be a non-negative integer")
        groups.append(NodeGroup(ref, count, g.get("voltage"), g.get("platform"), g.get("prefix")))

    profiles = ProfileTable()
    for i, p in enumerate(raw.get("profiles", [])):
        where = f"profiles[{i}]"
        _check_keys(p, {"kind", "node_class", "throughput", "active_power"}, where)
        cname = _req(p, "node_class", where)
        if cname not in classes:
            raise ScenarioError(f"{where}: unknown node class {cname!r}")
        _build(where, profiles.add, _req(p, "kind", where), cname, _req(p, "throughput", where), _req(p, "active_power", where))

    tasks = _parse_tasks(raw.get("tasks", []))
    profiled_kinds = {k for k, _ in profiles.entries}
    for t in tasks:
        if t.kind not in profiled_kinds:
            raise ScenarioError(f"task {t.id}: kind {t.kind!r} has no profile entry")

    sched_raw = _check_keys(raw.get("scheduler", {}), {"reschedule_interval", "hysteresis", "tie_break"}, "scheduler")
    scheduler = _build("scheduler", SchedulerConfig, **sched_raw)

    ck_raw = raw.get("checkpoint")
    checkpoint = None
    if ck_raw is not None:
        _check_keys(ck_raw, {"mode", "interval", "chunk_size"}, "checkpoint")
        mode = ck_raw.get("mode", "async")
        try:
            mode = CheckpointMode(mode)
        except ValueError:
            raise ScenarioError(f"checkpoint.mode must be 'sync' or 'async', got {mode!r}") from None
        checkpoint = _build(
            "checkpoint", CheckpointPolicy, mode, ck_raw.get("interval", AUTO), ck_raw.get("chunk_size", 64.0)
        )

    cal_raw = _check_keys(
        raw.get("calibration", {}), {"checkpoint_tier_efficiency", "recovery_tier_efficiency"}, "calibration"
    )
    calibration = _build("calibration", replace, DEFAULT_CALIBRATION, **cal_raw)

    sim_raw = _check_keys(
        raw.get("simulation", {}), {"idle_fraction", "fatal_fraction", "migration_overhead", "horizon"}, "simulation"
    )
    simulation = SimOptions(**sim_raw)
    if not (0 <= simulation.idle_fraction <= 1) or not (0 <= simulation.fatal_fraction <= 1):
        raise ScenarioError("simulation: idle_fraction and fatal_fraction must be in [0, 1]")
    if simulation.migration_overhead < 0:
        raise ScenarioError("simulation: migration_overhead must be >= 0")

    sc = Scenario(
        name=raw.get("name", "scenario"),
        presets=presets,
        preset_overrides=overrides,
        node_classes=classes,
        nodes=groups,
        profiles=profiles,
        tasks=tasks,
        scheduler=scheduler,
        checkpoint=checkpoint,
        calibration=calibration,
        simulation=simulation,
    )
    _validate_cluster(sc)
    return sc


def _validate_cluster(sc: Scenario) -> None:
    try:
        nodes = sc.build_cluster()
    except UnknownPlatform as e:
        raise ScenarioError(f"unknown platform preset {e.name!r}") from None
    seen = set()
    for n in nodes:
        if n.id in seen:
            raise ScenarioError(f"duplicate node id {n.id!r}; give node groups distinct prefixes")
        seen.add(n.id)
        if n.voltage is not None:
            try:
                region(n.voltage, n.preset)
            except ValueError as e:
                raise ScenarioError(f"node {n.id}: {e}") from None


# -- serialisation -------------------------------------------------------------


def to_dict(sc: Scenario) -> dict:
    """Resolved form of ``sc`` with every default written out."""
    return {
        "version": 1,
        "name": sc.name,
        "presets": [p.to_dict() for p in sc.preset_overrides],
        "node_classes": [
            {
                "name": c.name,
                "capacity": {"cores": c.capacity.cores, "memory": c.capacity.memory},
                "nominal_power": c.nominal_power,
                "throughput": dict(sorted(c.throughput.items())),
                "platform": c.platform,
                "storage_bw": c.storage_bw,
                "interconnect_bw": c.interconnect_bw,
                "tier_bw": c.tier_bw,
            }
            for c in sc.node_classes.values()
        ],
        "nodes": [
            {"class": g.node_class, "count": g.count, "voltage": g.voltage, "platform": g.platform, "prefix": g.prefix}
            for g in sc.nodes
        ],
        "profiles": [
            {"kind": k, "node_class": c, "throughput": e.throughput, "active_power": e.active_power}
            for (k, c), e in sc.profiles.entries.items()
        ],
        "tasks": [
            {
                "id": t.id,
                "kind": t.kind,
                "work": t.total_work,
                "arrival": t.arrival,
                "demand": {"cores": t.demand.cores, "memory": t.demand.memory},
                "energy_weight": t.weights.energy_weight,
                "datasets": [{"id": d.id, "location": d.location.value, "size": d.size} for d in t.datasets],
                "state_size": t.state_size,
                "footprint": t.footprint,
            }
            for t in sc.tasks
        ],
        "scheduler": {
            "reschedule_interval": sc.scheduler.reschedule_interval,
            "hysteresis": sc.scheduler.hysteresis,
            "tie_break": sc.scheduler.tie_break,
        },
        "checkpoint": None
        if sc.checkpoint is None
        else {
            "mode": sc.checkpoint.mode.value,
            "interval": sc.checkpoint.interval,
            "chunk_size": sc.checkpoint.chunk_size,
        },
        "calibration": {
            "checkpoint_tier_efficiency": sc.calibration.checkpoint_tier_efficiency,
            "recovery_tier_efficiency": sc.calibration.recovery_tier_efficiency,
        },
        "simulation": {
            "idle_fraction": sc.simulation.idle_fraction,
            "fatal_fraction": sc.simulation.fatal_fraction,
            "migration_overhead": sc.simulation.migration_overhead,
            "horizon": sc.simulation.horizon,
        },
    }


def dumps(sc: Scenario) -> str:
    return json.dumps(to_dict(sc), indent=2) + "\n"


def scenario_hash(sc: Scenario) -> str:
    canon = json.dumps(to_dict(sc), sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canon.encode()).hexdigest()[:16]


def resolve_path(path: str | Path) -> Path:
    """Accept a file path or the name of a bundled scenario (e.g. ``smart-mirror``)."""
    p = Path(path)
    if p.exists():
        return p
    for cand in (BUNDLED_DIR / p.name, BUNDLED_DIR / f"{p.name}.json"):
        if cand.exists():
            return cand
    return p


def loads(text: str, source: str = "<string>") -> Scenario:
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as e:
        raise ScenarioError(f"{source}:{e.lineno}:{e.colno}: invalid JSON: {e.msg}") from None
    return from_dict(raw)


def load_scenario(path: str | Path) -> Scenario:
    p = resolve_path(path)
    try:
        text = p.read_text(encoding="utf-8")
    except OSError as e:
        raise ScenarioError(f"cannot read scenario {str(path)!r}: {e.strerror}") from None
    return loads(text, str(p))
