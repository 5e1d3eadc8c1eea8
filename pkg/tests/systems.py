"""Small system builders plus the random-system generator for conformance runs."""

from __future__ import annotations

import random

from amcs.engine import SensorEvent, UniformLatency
from amcs.formalisms import (
    ChoiceKB,
    FactKB,
    RuleKB,
    choice_suite,
    fact_suite,
    make_append_updater,
    make_controller,
    fresh_info_controller,
    rule_suite,
)
from amcs.kernel import (
    AMCSSpec,
    Context,
    ContextConfiguration,
    ContextManagement,
    DataPackage,
    OutputRule,
    SystemConfiguration,
)
from amcs.terms import Term, parse_term

from genprograms import random_choice_kb, random_stratified_kb


def fact_context(name, facts=(), rules=(), controller=None, updater=None, suite=None):
    kb = FactKB(frozenset(parse_term(t) if isinstance(t, str) else t for t in facts))
    mgmt = ContextManagement(
        controller or make_controller("nonempty_buffer"),
        updater or make_append_updater(),
        tuple(rules),
    )
    return Context(name, suite or fact_suite()), ContextConfiguration(kb, "factstore", (), mgmt)


def assemble(pairs, streams=(), sensors=()):
    contexts, configs = zip(*pairs)
    spec = AMCSSpec(tuple(contexts), tuple(streams), frozenset(sensors))
    init = SystemConfiguration(tuple(configs), tuple(() for _ in streams))
    return spec, init


def sensor(t, target, source, *infos):
    return SensorEvent(t, target, DataPackage(source, frozenset(parse_term(i) for i in infos)))


# ---------------------------------------------------------------------------
# Random systems for the run-conformance acceptance criterion
# ---------------------------------------------------------------------------

_CONTROLLER_KINDS = ("always", "nonempty_buffer", "fresh", "wait_for_sources", "wait_for_eoc")


def random_system(rng: random.Random):
    """A random valid system plus a sensor-event schedule and latency model."""
    n_ctx = rng.randint(1, 4)
    n_streams = rng.randint(0, 3)
    n_sensors = rng.randint(0, 3)
    ctx_names = [f"c{i}" for i in range(n_ctx)]
    stream_names = [f"o{i}" for i in range(n_streams)]
    sensor_names = [f"s{i}" for i in range(n_sensors)]
    atom_pool = [Term(a) for a in ("a", "b", "c", "d")]

    pairs = []
    for i, name in enumerate(ctx_names):
        kind = rng.choice(("facts", "rules", "choice"))
        if kind == "facts":
            kb = FactKB(frozenset(rng.sample(atom_pool, k=rng.randint(0, 2))))
            suite, sem = fact_suite(), "factstore"
        elif kind == "rules":
            kb = random_stratified_kb(rng, n_preds=4, n_rules=3, n_facts=1)
            suite, sem = rule_suite(), "stratified"
        else:
            kb = random_choice_kb(rng)
            suite, sem = choice_suite(), "choice"

        rules = []
        targets = ctx_names + stream_names
        for _ in range(rng.randint(0, 3)):
            stake = rng.choice(targets)
            head = Term(f"m{rng.randint(0, 3)}", (rng.choice(atom_pool),))
            pos = tuple(rng.sample(atom_pool, k=rng.randint(0, 1)))
            neg = tuple(rng.sample([a for a in atom_pool if a not in pos], k=rng.randint(0, 1)))
            rules.append(OutputRule(stake, head, pos, neg))

        ckind = rng.choice(_CONTROLLER_KINDS)
        if ckind == "fresh":
            controller = fresh_info_controller()
        elif ckind in ("wait_for_sources", "wait_for_eoc"):
            pool = [n for n in ctx_names + sensor_names if n != name]
            if pool:
                controller = make_controller(ckind, {rng.choice(pool)})
            else:
                controller = make_controller("nonempty_buffer")
        else:
            controller = make_controller(ckind)

        mgmt = ContextManagement(controller, make_append_updater(), tuple(rules))
        pairs.append((Context(name, suite), ContextConfiguration(kb, sem, (), mgmt)))

    spec, init = assemble(pairs, stream_names, sensor_names)
    events = []
    if sensor_names:
        for _ in range(rng.randint(0, 8)):
            events.append(
                SensorEvent(
                    rng.randint(1, 40),
                    rng.choice(ctx_names),
                    DataPackage(rng.choice(sensor_names), frozenset(rng.sample(atom_pool, k=rng.randint(0, 2)))),
                )
            )
    latency = UniformLatency(1, rng.randint(1, 4))
    return spec, init, events, latency
