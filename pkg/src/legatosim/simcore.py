"""Deterministic discrete-event engine.

Runs a :class:`~legatosim.scenario.Scenario` in virtual time: tasks arrive,
HEATS places and periodically migrates them, undervolted nodes inject
task-fatal faults, and checkpoint/recovery costs come from
:mod:`legatosim.ftmodel`.  Every state change is appended to a trace.

A task on a node cycles through three phases:

    compute --(interval of compute time)--> checkpoint --> compute ...
    any phase --(failure)--> recovery --> compute (from last checkpoint)

Migration lifts a task out of compute, keeps its progress, and drops it
back into compute on the target after ``state_size / interconnect_bw``
plus a fixed overhead.
"""

from __future__ import annotations

import heapq
import json
import logging
import math
from dataclasses import dataclass, field
from typing import Any

import numpy as np

from legatosim import ftmodel, heats
from legatosim.domain import Node, Task, TaskStatus, idle_power
from legatosim.errors import IntervalUndefined
from legatosim.scenario import Scenario
from legatosim.undervolt import mtbf

log = logging.getLogger(__name__)

EPS = 1e-9

# queue event kinds
TASK_ARRIVAL = "TaskArrival"
TASK_FINISH = "TaskFinish"
RESCHEDULE_TICK = "RescheduleTick"
CHECKPOINT_START = "CheckpointStart"
CHECKPOINT_DONE = "CheckpointDone"
FAILURE = "Failure"
RECOVERY_DONE = "RecoveryDone"
MIGRATION_DONE = "MigrationDone"
# trace-only rows
TASK_START = "TaskStart"
MIGRATION_START = "MigrationStart"
TASK_UNFINISHED = "TaskUnfinished"

TRACE_HEADER = ("time", "event", "task", "node", "detail")


@dataclass(frozen=True)
class TraceRow:
    time: float
    event: str
    task: str = ""
    node: str = ""
    detail: dict = field(default_factory=dict)

    def as_csv_row(self) -> list[str]:
        return [repr(float(self.time)), self.event, self.task, self.node, json.dumps(self.detail, sort_keys=True)]


@dataclass
class TaskMetrics:
    wait: float = 0.0
    runtime: float = 0.0
    energy: float = 0.0
    executed_work: float = 0.0
    lost_work: float = 0.0
    finish: float | None = None


@dataclass
class Metrics:
    makespan: float = 0.0
    total_energy: float = 0.0
    tasks: dict[str, TaskMetrics] = field(default_factory=dict)
    migrations: int = 0
    failures: int = 0
    checkpoints: int = 0
    checkpoint_overhead: float = 0.0
    recovery_time: float = 0.0
    rework: float = 0.0
    unfinished: dict[str, str] = field(default_factory=dict)

    def flat(self) -> dict[str, Any]:
        done = [m for m in self.tasks.values() if m.finish is not None]
        return {
            "makespan": self.makespan,
            "total_energy": self.total_energy,
            "tasks_done": len(done),
            "tasks_unfinished": len(self.unfinished),
            "mean_wait": sum(m.wait for m in done) / len(done) if done else 0.0,
            "mean_runtime": sum(m.runtime for m in done) / len(done) if done else 0.0,
            "task_energy": sum(m.energy for m in self.tasks.values()),
            "migrations": self.migrations,
            "failures": self.failures,
            "checkpoints": self.checkpoints,
            "checkpoint_overhead": self.checkpoint_overhead,
            "recovery_time": self.recovery_time,
            "rework": self.rework,
        }


def checkpoint_overhead_fraction(metrics: Metrics, baseline_runtime: float) -> float:
    """Fault-tolerance time (checkpoints + recoveries + re-executed work) per unit of useful runtime."""
    if baseline_runtime <= 0:
        raise ValueError("baseline_runtime must be > 0")
    return (metrics.checkpoint_overhead + metrics.recovery_time + metrics.rework) / baseline_runtime


class _Run:
    """Engine-side state of one task."""

    __slots__ = (
        "task", "node", "phase", "phase_start", "rate", "power", "interval", "since_ckpt",
        "ckpt_progress", "has_ckpt", "token", "fail_token", "ckpt_cost", "rec_cost",
        "registry", "lam", "first_start", "on_node_since", "metrics", "migrating_to",
    )

    def __init__(self, task: Task):
        self.task = task
        self.node: str | None = None
        self.phase = "pending"
        self.phase_start = 0.0
        self.rate = 0.0
        self.power = 0.0
        self.interval: float | None = None
        self.since_ckpt = 0.0
        self.ckpt_progress = 0.0
        self.has_ckpt = False
        self.token = 0
        self.fail_token = 0
        self.ckpt_cost = 0.0
        self.rec_cost = 0.0
        self.registry = ftmodel.ProtectRegistry.of(task.datasets)
        self.lam = 0.0
        self.first_start: float | None = None
        self.on_node_since = 0.0
        self.metrics = TaskMetrics()
        self.migrating_to: str | None = None


class Engine:
    """One simulation run.  Build, call :meth:`run` once."""

    def __init__(self, scenario: Scenario, seed: int):
        self.sc = scenario
        self.seed = seed
        self.nodes: list[Node] = scenario.build_cluster()
        self.by_id = {n.id: n for n in self.nodes}
        ss = np.random.SeedSequence(seed & (2**64 - 1))
        # one child stream per node, keyed by declaration index
        self.rngs = {
            n.id: np.random.default_rng(np.random.SeedSequence(ss.entropy, spawn_key=(i,)))
            for i, n in enumerate(self.nodes)
        }
        self.runs = {t.id: _Run(t) for t in scenario.fresh_tasks()}
        self.pending: list[str] = []
        self.active: dict[str, set[str]] = {n.id: set() for n in self.nodes}
        self.node_energy = {n.id: 0.0 for n in self.nodes}
        self.node_since = {n.id: 0.0 for n in self.nodes}
        self.queue: list = []
        self.seq = 0
        self.now = 0.0
        self.tick_at: float | None = None
        self.trace: list[TraceRow] = []
        self.metrics = Metrics()
        self.last_finish = 0.0

    # -- bookkeeping ---------------------------------------------------------

    def _push(self, t: float, kind: str, task_id: str = "", token: int = 0):
        if t < self.now - EPS:
            raise RuntimeError(f"event {kind} scheduled in the past ({t} < {self.now})")
        heapq.heappush(self.queue, (t, self.seq, kind, task_id, token))
        self.seq += 1

    def _record(self, event: str, task: str = "", node: str = "", **detail):
        self.trace.append(TraceRow(self.now, event, task, node, detail))

    def _node_power(self, nid: str) -> float:
        tasks = self.active[nid]
        if not tasks:
            return idle_power(self.by_id[nid], self.sc.simulation.idle_fraction)
        return sum(self.runs[t].power for t in sorted(tasks))

    def _accrue_node(self, nid: str):
        self.node_energy[nid] += self._node_power(nid) * (self.now - self.node_since[nid])
        self.node_since[nid] = self.now

    def _attach(self, r: _Run, nid: str):
        self._accrue_node(nid)
        self.active[nid].add(r.task.id)
        r.node = nid
        r.on_node_since = self.now

    def _detach(self, r: _Run):
        nid = r.node
        self._accrue_node(nid)
        self.active[nid].discard(r.task.id)
        r.metrics.energy += r.power * (self.now - r.on_node_since)

    def _check_capacity(self):
        for n in self.nodes:
            if not n.allocated.fits_in(n.node_class.capacity):
                raise AssertionError(f"capacity violated on {n.id} at t={self.now}")

    # -- per-node models -------------------------------------------------------

    def _configure_on_node(self, r: _Run, node: Node):
        task, sc = r.task, self.sc
        entry = sc.profiles.lookup(task.kind, node.node_class.name)
        r.rate = node.node_class.throughput.get(task.kind, entry.throughput)
        r.power = entry.active_power * node.power_factor()
        m = mtbf(node, task.footprint)
        fatal = sc.simulation.fatal_fraction
        r.lam = 0.0 if m is None or fatal == 0 else fatal / m
        r.interval = None
        policy = sc.checkpoint
        if policy is None or not r.registry.entries:
            return
        r.ckpt_cost = ftmodel.checkpoint_time(r.registry, policy, node, sc.calibration)
        r.rec_cost = ftmodel.recovery_time(r.registry, policy, node, sc.calibration)
        if policy.interval != ftmodel.AUTO:
            r.interval = float(policy.interval)
        elif r.lam > 0:
            try:
                r.interval = ftmodel.optimal_interval(r.ckpt_cost, 1.0 / r.lam)
            except IntervalUndefined:
                # cannot keep up with failures; checkpoint once per MTBF anyway
                r.interval = 1.0 / r.lam
                log.warning("task %s: checkpoint cost exceeds MTBF on %s", task.id, node.id)

    def _arm_failure(self, r: _Run):
        r.fail_token += 1
        if r.lam > 0:
            dt = self.rngs[r.node].exponential(1.0 / r.lam)
            self._push(self.now + dt, FAILURE, r.task.id, r.fail_token)

    # -- phases ----------------------------------------------------------------

    def _enter(self, r: _Run, phase: str, duration: float, kind: str):
        r.phase = phase
        r.phase_start = self.now
        r.token += 1
        self._push(self.now + duration, kind, r.task.id, r.token)

    def _enter_compute(self, r: _Run):
        r.task.status = TaskStatus.RUNNING
        to_finish = r.task.remaining / r.rate
        to_ckpt = math.inf if r.interval is None else max(0.0, r.interval - r.since_ckpt)
        if to_finish <= to_ckpt + EPS:
            self._enter(r, "compute", to_finish, TASK_FINISH)
        else:
            self._enter(r, "compute", to_ckpt, CHECKPOINT_START)

    def _leave_compute(self, r: _Run):
        elapsed = self.now - r.phase_start
        work = min(elapsed * r.rate, r.task.remaining)
        r.task.progress += work
        r.metrics.executed_work += work
        r.since_ckpt += elapsed

    def _leave_phase(self, r: _Run):
        elapsed = self.now - r.phase_start
        if r.phase == "compute":
            self._leave_compute(r)
        elif r.phase == "checkpoint":
            self.metrics.checkpoint_overhead += elapsed
        elif r.phase == "recovery":
            self.metrics.recovery_time += elapsed

    def _start(self, r: _Run, nid: str):
        node = self.by_id[nid]
        node.allocate(r.task.demand)
        if r.first_start is None:
            r.first_start = self.now
            r.metrics.wait = self.now - r.task.arrival
        self._attach(r, nid)
        self._configure_on_node(r, node)
        self._record(TASK_START, r.task.id, nid)
        self._arm_failure(r)
        self._enter_compute(r)
        self._ensure_tick()

    def _place_pending(self):
        if not self.pending:
            return
        queue = [self.runs[t].task for t in self.pending]
        for tid, nid in heats.place(queue, self.nodes, self.sc.profiles):
            self.pending.remove(tid)
            self._start(self.runs[tid], nid)

    def _ensure_tick(self):
        x = self.sc.scheduler.reschedule_interval
        if x is None or self.tick_at is not None:
            return
        self.tick_at = (math.floor(self.now / x + EPS) + 1) * x
        self._push(self.tick_at, RESCHEDULE_TICK)

    # -- event handlers ----------------------------------------------------------

    def _on_arrival(self, r: _Run):
        self._record(TASK_ARRIVAL, r.task.id)
        if r.task.status is TaskStatus.DONE:
            r.metrics.finish = self.now
            self.last_finish = max(self.last_finish, self.now)
            self._record(TASK_FINISH, r.task.id)
            return
        self.pending.append(r.task.id)
        self._place_pending()

    def _on_finish(self, r: _Run):
        self._leave_compute(r)
        r.task.progress = r.task.total_work
        r.task.status = TaskStatus.DONE
        nid = r.node
        self._detach(r)
        self.by_id[nid].release(r.task.demand)
        r.phase = "done"
        r.fail_token += 1
        r.metrics.finish = self.now
        r.metrics.runtime = self.now - r.first_start
        self.last_finish = max(self.last_finish, self.now)
        self._record(TASK_FINISH, r.task.id, nid)
        self._place_pending()

    def _on_checkpoint_start(self, r: _Run):
        self._leave_compute(r)
        self._record(CHECKPOINT_START, r.task.id, r.node, progress=r.task.progress)
        self._enter(r, "checkpoint", r.ckpt_cost, CHECKPOINT_DONE)

    def _on_checkpoint_done(self, r: _Run):
        self.metrics.checkpoint_overhead += self.now - r.phase_start
        self.metrics.checkpoints += 1
        r.ckpt_progress = r.task.progress
        r.has_ckpt = True
        r.since_ckpt = 0.0
        self._record(CHECKPOINT_DONE, r.task.id, r.node, duration=r.ckpt_cost)
        self._enter_compute(r)

    def _on_failure(self, r: _Run):
        phase = r.phase
        self._leave_phase(r)
        lost = r.task.progress - r.ckpt_progress
        r.task.progress = r.ckpt_progress
        r.metrics.lost_work += lost
        self.metrics.rework += lost / r.rate
        self.metrics.failures += 1
        r.since_ckpt = 0.0
        r.task.status = TaskStatus.RECOVERING
        self._record(FAILURE, r.task.id, r.node, phase=phase, lost_work=lost)
        self._arm_failure(r)
        self._enter(r, "recovery", r.rec_cost if r.has_ckpt else 0.0, RECOVERY_DONE)

    def _on_recovery_done(self, r: _Run):
        self.metrics.recovery_time += self.now - r.phase_start
        self._record(RECOVERY_DONE, r.task.id, r.node)
        self._enter_compute(r)

    def _on_migration_done(self, r: _Run):
        nid = r.migrating_to
        r.migrating_to = None
        self._attach(r, nid)
        self._configure_on_node(r, self.by_id[nid])
        self._record(MIGRATION_DONE, r.task.id, nid)
        self._arm_failure(r)
        self._enter_compute(r)

    def _busy(self) -> bool:
        return any(r.phase in ("compute", "checkpoint", "recovery", "migrating") for r in self.runs.values())

    def _on_tick(self):
        self.tick_at = None
        if not self._busy():
            return  # the last task finished at this instant
        running = [(r.task, r.node) for r in self.runs.values() if r.phase == "compute"]
        migrations = heats.reschedule(running, self.nodes, self.sc.profiles, self.sc.scheduler) if running else []
        self._record(RESCHEDULE_TICK, migrations=len(migrations))
        for m in migrations:
            self._migrate(self.runs[m.task_id], m.target)
        self._place_pending()
        if self._busy():
            self._ensure_tick()

    def _migrate(self, r: _Run, target: str):
        self._leave_compute(r)
        src = self.by_id[r.node]
        dst = self.by_id[target]
        self._detach(r)
        src.release(r.task.demand)
        dst.allocate(r.task.demand)
        bw = min(src.node_class.interconnect_bw, dst.node_class.interconnect_bw)
        delay = r.task.state_size / bw + self.sc.simulation.migration_overhead
        self.metrics.migrations += 1
        self._record(MIGRATION_START, r.task.id, src.id, target=target, delay=delay)
        r.node = None
        r.migrating_to = target
        r.fail_token += 1
        r.task.status = TaskStatus.MIGRATING
        self._enter(r, "migrating", delay, MIGRATION_DONE)

    # -- main loop -----------------------------------------------------------------

    def run(self) -> tuple[list[TraceRow], Metrics]:
        for r in sorted(self.runs.values(), key=lambda r: (r.task.arrival, r.task.id)):
            self._push(r.task.arrival, TASK_ARRIVAL, r.task.id)
        horizon = self.sc.simulation.horizon
        cut = False
        handlers = {
            TASK_FINISH: self._on_finish,
            CHECKPOINT_START: self._on_checkpoint_start,
            CHECKPOINT_DONE: self._on_checkpoint_done,
            RECOVERY_DONE: self._on_recovery_done,
            MIGRATION_DONE: self._on_migration_done,
        }
        while self.queue:
            t, _, kind, tid, token = self.queue[0]
            if horizon is not None and t > horizon:
                cut = True
                break
            heapq.heappop(self.queue)
            r = self.runs.get(tid)
            if kind == FAILURE:
                if token != r.fail_token:
                    continue
            elif kind in handlers and token != r.token:
                continue
            self.now = t
            if kind == TASK_ARRIVAL:
                self._on_arrival(r)
            elif kind == RESCHEDULE_TICK:
                self._on_tick()
            elif kind == FAILURE:
                self._on_failure(r)
            else:
                handlers[kind](r)
            self._check_capacity()
        return self._finish(cut, horizon)

    def _finish(self, cut: bool, horizon: float | None):
        end = horizon if cut else self.last_finish
        self.now = end
        for r in sorted(self.runs.values(), key=lambda r: r.task.id):
            if r.metrics.finish is not None:
                continue
            if r.node is not None:
                self._leave_phase(r)
                self._detach(r)
            if r.phase == "pending":
                reason = "no feasible node" if not cut else "horizon reached while pending"
            else:
                reason = f"horizon reached during {r.phase}"
            self.metrics.unfinished[r.task.id] = reason
            self._record(TASK_UNFINISHED, r.task.id, r.node or "", reason=reason)
        for n in self.nodes:
            self._accrue_node(n.id)
        m = self.metrics
        m.makespan = end
        m.total_energy = sum(self.node_energy[n.id] for n in self.nodes)
        m.tasks = {tid: self.runs[tid].metrics for tid in sorted(self.runs)}
        return self.trace, m


def run(scenario: Scenario, seed: int) -> tuple[list[TraceRow], Metrics]:
    """Simulate ``scenario`` with ``seed``; returns the trace and the metrics."""
    return Engine(scenario, seed).run()
