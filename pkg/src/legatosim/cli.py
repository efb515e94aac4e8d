"""Command-line entry point: ``legatosim run|sweep|validate``.

Exit codes: 0 success, 1 scenario/validation error, 2 output directory
not writable.
"""

from __future__ import annotations

import argparse
import csv
import logging
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

from legatosim import __version__, simcore
from legatosim.errors import ScenarioError
from legatosim.scenario import Scenario, dumps, load_scenario, scenario_hash

log = logging.getLogger("legatosim")

SUMMARY_HEADER = (
    "scenario_hash", "seed", "energy_weight", "makespan", "total_energy", "tasks_done",
    "tasks_unfinished", "mean_wait", "mean_runtime", "task_energy", "migrations", "failures",
    "checkpoints", "checkpoint_overhead", "recovery_time", "rework", "version",
)


def report_row(sc: Scenario, seed: int, metrics: simcore.Metrics, energy_weight: float | None = None) -> list:
    flat = metrics.flat()
    row = {"scenario_hash": scenario_hash(sc), "seed": seed,
           "energy_weight": "" if energy_weight is None else repr(energy_weight),
           "version": __version__}
    row.update({k: repr(v) if isinstance(v, float) else v for k, v in flat.items()})
    return [row[k] for k in SUMMARY_HEADER]


def write_csv(path: Path, header, rows) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        w.writerows(rows)


def write_run(out: Path, sc: Scenario, seed: int, trace, metrics, energy_weight=None) -> list:
    row = report_row(sc, seed, metrics, energy_weight)
    write_csv(out / "summary.csv", SUMMARY_HEADER, [row])
    write_csv(out / "trace.csv", simcore.TRACE_HEADER, (r.as_csv_row() for r in trace))
    (out / "scenario.resolved.json").write_text(dumps(sc), encoding="utf-8")
    return row


def parse_seeds(spec: str) -> list[int]:
    """``"1..10"`` -> [1, ..., 10] (inclusive); ``"3"`` -> [3]; ``"1,4,9"`` -> [1, 4, 9]."""
    if ".." in spec:
        a, b = spec.split("..", 1)
        lo, hi = int(a), int(b)
        if hi < lo:
            raise argparse.ArgumentTypeError(f"empty seed range {spec!r}")
        return list(range(lo, hi + 1))
    return [int(s) for s in spec.split(",")]


def parse_weights(spec: str) -> list[float]:
    """``"0..1:0.5"`` -> [0.0, 0.5, 1.0]; ``"0.3"`` -> [0.3]; ``"0,1"`` -> [0.0, 1.0]."""
    if ".." not in spec:
        vals = [float(s) for s in spec.split(",")]
    else:
        vals = _weight_range(spec)
    if not all(0 <= v <= 1 for v in vals):
        raise argparse.ArgumentTypeError("energy weights must lie in [0, 1]")
    return vals


def _weight_range(spec: str) -> list[float]:
    rng, _, step = spec.partition(":")
    a, b = (float(x) for x in rng.split("..", 1))
    step = float(step) if step else (b - a)
    if step <= 0:
        if a == b:
            return [a]
        raise argparse.ArgumentTypeError("weight step must be > 0")
    n = int(round((b - a) / step))
    vals = [round(a + i * step, 12) for i in range(n + 1)]
    return [v for v in vals if v <= b + 1e-12]


def _prepare_out(path: str) -> Path:
    out = Path(path)
    out.mkdir(parents=True, exist_ok=True)
    probe = out / ".write-probe"
    probe.write_text("")
    probe.unlink()
    return out


def _sweep_one(args):
    sc, seed, w, stage = args
    sc_w = sc.with_energy_weight(w)
    trace, metrics = simcore.run(sc_w, seed)
    stage.mkdir(parents=True, exist_ok=True)
    return write_run(stage, sc_w, seed, trace, metrics, w)


def cmd_run(ns) -> int:
    sc = load_scenario(ns.scenario)
    out = _prepare_out(ns.out)
    trace, metrics = simcore.run(sc, ns.seed)
    write_run(out, sc, ns.seed, trace, metrics)
    log.info("run done: makespan=%.6g energy=%.6g J", metrics.makespan, metrics.total_energy)
    return 0


def cmd_sweep(ns) -> int:
    sc = load_scenario(ns.scenario)
    out = _prepare_out(ns.out)
    jobs = [(sc, s, w, out / "runs" / f"w{w:g}_s{s}") for w in ns.energy_weight for s in ns.seeds]
    if ns.jobs > 1:
        with ProcessPoolExecutor(max_workers=ns.jobs) as pool:
            rows = list(pool.map(_sweep_one, jobs))
    else:
        rows = [_sweep_one(j) for j in jobs]
    # merged in (seed, weight) order regardless of completion order
    order = sorted(range(len(jobs)), key=lambda i: (jobs[i][1], jobs[i][2]))
    write_csv(out / "summary.csv", SUMMARY_HEADER, [rows[i] for i in order])
    (out / "scenario.resolved.json").write_text(dumps(sc), encoding="utf-8")
    log.info("sweep done: %d runs", len(rows))
    return 0


def cmd_validate(ns) -> int:
    sc = load_scenario(ns.scenario)
    if ns.print:
        sys.stdout.write(dumps(sc))
    else:
        print(f"ok: {sc.name} ({len(sc.tasks)} tasks, {sum(g.count for g in sc.nodes)} nodes)")
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="legatosim", description="Heterogeneous-cluster energy/resilience simulator")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = p.add_subparsers(dest="command", required=True)

    r = sub.add_parser("run", help="simulate one scenario with one seed")
    r.add_argument("scenario", help="scenario JSON path or bundled name")
    r.add_argument("--seed", type=int, default=0)
    r.add_argument("--out", required=True, help="output directory")
    r.set_defaults(func=cmd_run)

    s = sub.add_parser("sweep", help="simulate over seeds x energy weights")
    s.add_argument("scenario")
    s.add_argument("--seeds", type=parse_seeds, default=[0], help="A..B inclusive, or comma list")
    s.add_argument("--energy-weight", type=parse_weights, default=[0.0, 0.5, 1.0], help="LO..HI:STEP, or comma list")
    s.add_argument("--out", required=True)
    s.add_argument("--jobs", type=int, default=1)
    s.set_defaults(func=cmd_sweep)

    v = sub.add_parser("validate", help="check a scenario; --print echoes the resolved form")
    v.add_argument("scenario")
    v.add_argument("--print", action="store_true")
    v.set_defaults(func=cmd_validate)
    return p


def main(argv=None) -> int:
    level = getattr(logging, os.environ.get("LEGATOSIM_LOG", "WARNING").upper(), logging.WARNING)
    logging.basicConfig(
        level=level if isinstance(level, int) else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
    )
    ns = build_parser().parse_args(argv)
    try:
        return ns.func(ns)
    except ScenarioError as e:
        print(f"error: {e}", file=sys.stderr)
        return 1
    except OSError as e:
        print(f"error: cannot write output: {e}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
