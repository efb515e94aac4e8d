"""Builders for scheduler instances shared by the unit and acceptance tests."""

import random

from legatosim.domain import NodeClass, ProfileTable, Resources, Task, TradeoffWeights, make_node

from oracles import power_factor_closed_form


def simple_class(name, cores=4, memory=8192, platform=None):
    return NodeClass(name, Resources(cores, memory), 100.0, platform=platform)


def simple_task(tid, kind="k", work=100.0, cores=1, memory=0, w=0.5):
    return Task(tid, kind, work, demand=Resources(cores, memory), weights=TradeoffWeights(w))


def timed_instance(rt_en, w=0.5, work=60.0):
    """Nodes n0..nk whose predicted (runtime, energy) pairs are exactly ``rt_en``."""
    profiles = ProfileTable()
    nodes = []
    for i, (rt, en) in enumerate(rt_en):
        cls = simple_class(f"c{i}")
        profiles.add("k", cls.name, work / rt, en / rt)
        nodes.append(make_node(f"n{i}", cls))
    return simple_task("t", work=work, w=w), nodes, profiles


def random_instance(rng: random.Random, max_nodes=5, max_tasks=10):
    n_classes = rng.randint(1, 3)
    classes = []
    for c in range(n_classes):
        plat = "VC707" if rng.random() < 0.4 else None
        classes.append(simple_class(f"c{c}", rng.randint(1, 8), rng.choice([1024, 4096, 16384]), plat))
    kinds = ["a", "b"]
    prof = ProfileTable()
    for k in kinds:
        for c in classes:
            if rng.random() < 0.9:
                prof.add(k, c.name, rng.choice([0.5, 1, 2, 3, 5, 8]), rng.choice([10, 40, 50, 120, 400]))
    nodes = []
    for i in range(rng.randint(1, max_nodes)):
        cls = rng.choice(classes)
        v = None
        if cls.platform:
            v = rng.choice([1.0, 0.8, 0.6, 0.55, 0.5])
        node = make_node(f"n{i}", cls, voltage=v)
        node.allocate(Resources(rng.randint(0, cls.capacity.cores // 2), 0))
        nodes.append(node)
    tasks = [
        simple_task(f"t{j}", rng.choice(kinds), rng.choice([10, 50, 100, 300]), rng.randint(1, 4),
              rng.choice([0, 512, 2048]), rng.choice([0.0, 0.25, 0.5, 0.75, 1.0]))
        for j in range(rng.randint(0, max_tasks))
    ]
    return tasks, nodes, prof


def to_oracle(tasks, nodes, prof):
    ot = [dict(id=t.id, kind=t.kind, work=t.total_work, cores=t.demand.cores, memory=t.demand.memory,
               w=t.weights.energy_weight) for t in tasks]
    on = []
    for n in nodes:
        crashed = n.voltage is not None and n.voltage < 0.54
        pf = 1.0 if n.voltage is None or crashed else power_factor_closed_form(n.voltage, 1.0, 0.54, 0.91)
        on.append(dict(id=n.id, cls=n.node_class.name, cores=n.node_class.capacity.cores,
                       memory=n.node_class.capacity.memory, used_cores=n.allocated.cores,
                       used_memory=n.allocated.memory, pf=pf, crashed=crashed))
    op = {k: (e.throughput, e.active_power) for k, e in prof.entries.items()}
    return ot, on, op
