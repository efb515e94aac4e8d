"""Heterogeneity- and energy-aware placement (HEATS).

Per task: filter nodes with enough free resources, predict runtime and
energy on each from the profile table, min-max normalise both predictions
over the candidate set, and score ``w_e * energy + (1 - w_e) * runtime``
(lower is better).  Pending tasks are placed FIFO; running tasks are
periodically re-scored and migrated when another node beats their current
host by more than a hysteresis margin.

All functions here are pure: they read nodes' allocations but never
mutate them.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Iterable, Sequence

from legatosim.domain import Node, ProfileTable, Task, estimate_energy, estimate_runtime
from legatosim.undervolt import VoltageRegion, region

TIE_EPS = 1e-9


@dataclass(frozen=True)
class ScoredCandidate:
    node_id: str
    predicted_runtime: float
    predicted_energy: float
    norm_runtime: float
    norm_energy: float
    score: float


@dataclass(frozen=True)
class SchedulerConfig:
    reschedule_interval: float | None = 30.0
    hysteresis: float = 0.1
    tie_break: str = "lexicographic-node-id"

    def __post_init__(self):
        if self.reschedule_interval is not None and self.reschedule_interval <= 0:
            raise ValueError("reschedule_interval must be > 0")
        if self.hysteresis < 0:
            raise ValueError("hysteresis must be >= 0")
        if self.tie_break != "lexicographic-node-id":
            raise ValueError(f"unsupported tie_break {self.tie_break!r}")


@dataclass(frozen=True)
class Migration:
    task_id: str
    source: str
    target: str


def _usable(node: Node) -> bool:
    return node.voltage is None or node.preset is None or region(node.voltage, node.preset) is not VoltageRegion.CRASH


def candidates(task: Task, cluster: Sequence[Node]) -> list[Node]:
    """Nodes with room for ``task.demand`` that are not in the crash region."""
    return [n for n in cluster if task.demand.fits_in(n.free) and _usable(n)]


def _normalise(values: list[float]) -> list[float]:
    lo, hi = min(values), max(values)
    if hi == lo:
        return [0.0] * len(values)
    span = hi - lo
    return [(v - lo) / span for v in values]


def score_candidates(task: Task, cands: Sequence[Node], profiles: ProfileTable) -> list[ScoredCandidate]:
    """Score every candidate; the first element is the node to pick.

    Ordering is ascending (score, node_id), except that scores within
    ``TIE_EPS`` of the best count as ties and the smallest node id among
    them is moved to the front.
    """
    if not cands:
        return []
    runtimes = [estimate_runtime(task, n.node_class, profiles) for n in cands]
    energies = [estimate_energy(task, n, profiles) for n in cands]
    w = task.weights.energy_weight
    scored = [
        ScoredCandidate(n.id, rt, en, nr, ne, w * ne + (1.0 - w) * nr)
        for n, rt, en, nr, ne in zip(cands, runtimes, energies, _normalise(runtimes), _normalise(energies))
    ]
    scored.sort(key=lambda c: (c.score, c.node_id))
    winner = min((c for c in scored if c.score <= scored[0].score + TIE_EPS), key=lambda c: c.node_id)
    if winner is not scored[0]:
        scored.remove(winner)
        scored.insert(0, winner)
    return scored


def _profiled(task: Task, nodes: Iterable[Node], profiles: ProfileTable) -> list[Node]:
    return [n for n in nodes if (task.kind, n.node_class.name) in profiles]


def place(queue: Sequence[Task], cluster: Sequence[Node], profiles: ProfileTable) -> list[tuple[str, str]]:
    """Greedy FIFO placement of pending tasks.

    Each placement commits its allocation before the next task is scored.
    Tasks that fit nowhere are skipped and stay pending.
    """
    view = {n.id: replace(n) for n in cluster}
    order = [n.id for n in cluster]
    out = []
    for task in queue:
        nodes = [view[i] for i in order]
        cands = candidates(task, _profiled(task, nodes, profiles))
        if not cands:
            continue
        best = score_candidates(task, cands, profiles)[0]
        node = view[best.node_id]
        view[best.node_id] = replace(node, allocated=node.allocated + task.demand)
        out.append((task.id, best.node_id))
    return out


def reschedule(
    running: Sequence[tuple[Task, str]],
    cluster: Sequence[Node],
    profiles: ProfileTable,
    cfg: SchedulerConfig,
) -> list[Migration]:
    """Re-score running tasks and return the migrations to perform.

    ``running`` pairs each task with the id of its current node; the
    cluster's allocations must already include those tasks.
    """
    view = {n.id: replace(n) for n in cluster}
    order = [n.id for n in cluster]
    out = []
    for task, current in sorted(running, key=lambda r: r[0].id):
        own = view[current]
        without = replace(own, allocated=own.allocated - task.demand)
        nodes = [without if i == current else view[i] for i in order]
        cands = candidates(task, _profiled(task, nodes, profiles))
        if not cands:
            continue
        scored = score_candidates(task, cands, profiles)
        best = scored[0]
        if best.node_id == current:
            continue
        cur_score = next((c.score for c in scored if c.node_id == current), math.inf)
        if not cur_score - best.score > cfg.hysteresis:
            continue
        view[current] = without
        target = view[best.node_id]
        view[best.node_id] = replace(target, allocated=target.allocated + task.demand)
        out.append(Migration(task.id, current, best.node_id))
    return out

