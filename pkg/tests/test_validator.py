import random
from dataclasses import replace

import pytest

from amcs.engine import FixedLatency, RunTrace, TraceEvent, run
from amcs.formalisms import make_append_updater, make_controller
from amcs.kernel import ContextManagement, DataPackage, OutputRule
from amcs.terms import Var, parse_term
from amcs.tracefile import parse_trace, render_trace
from amcs.validator import validate_run, validate_trace

from systems import assemble, fact_context, random_system, sensor


def terms(*texts):
    return frozenset(parse_term(t) for t in texts)


def forwarding_rule(stake):
    return OutputRule(stake, Var("V"), (Var("V"),), ())


@pytest.fixture()
def fixture_trace() -> RunTrace:
    """One fully known computation: start t=2, belief set t=4, eoc t=6."""
    producer = fact_context(
        "p",
        facts=["f"],
        controller=make_controller("wait_for_sources", {"boot"}),
        rules=[forwarding_rule("q"), forwarding_rule("o"), forwarding_rule("p")],
    )
    sink = fact_context("q", controller=make_controller("wait_for_sources", {"never"}))
    spec, init = assemble([producer, sink], streams=("o",), sensors=("boot", "never"))
    trace = run(spec, init, [sensor(1, "p", "boot", "go")], 8, FixedLatency(2), seed=0)
    assert validate_run(spec, trace) == []
    return trace


def _set_busy(trace: RunTrace, name: str, time: int, value: bool):
    snaps = []
    for snap in trace.snapshots:
        if snap.time == time:
            ctxs = tuple(replace(c, busy=value) if c.name == name else c for c in snap.contexts)
            snap = replace(snap, contexts=ctxs)
        snaps.append(snap)
    trace.snapshots = snaps


def _edit_buffer(trace: RunTrace, name: str, time_from: int, edit):
    snaps = []
    for snap in trace.snapshots:
        if snap.time >= time_from:
            ctxs = tuple(replace(c, buffer=edit(c.buffer)) if c.name == name else c for c in snap.contexts)
            snap = replace(snap, contexts=ctxs)
        snaps.append(snap)
    trace.snapshots = snaps


def _edit_stream(trace: RunTrace, name: str, time_from: int, edit):
    idx = trace.stream_names.index(name)
    snaps = []
    for snap in trace.snapshots:
        if snap.time >= time_from:
            streams = list(snap.streams)
            streams[idx] = edit(streams[idx])
            snap = replace(snap, streams=tuple(streams))
        snaps.append(snap)
    trace.snapshots = snaps


def _conditions(violations):
    return {v.condition for v in violations}


def test_agreement_on_random_systems():
    rng = random.Random(2024)
    for _ in range(60):
        spec, init, events, latency = random_system(rng)
        trace = run(spec, init, events, 40, latency, seed=rng.randint(0, 10**6))
        assert validate_run(spec, trace) == []


def test_trace_round_trip(fixture_trace):
    text = render_trace(fixture_trace)
    again = parse_trace(text)
    assert again == fixture_trace
    assert render_trace(again) == text


def test_mutant_condition_i(fixture_trace):
    _set_busy(fixture_trace, "p", 8, True)
    assert "i" in _conditions(validate_trace(fixture_trace))


def test_mutant_condition_ii(fixture_trace):
    _set_busy(fixture_trace, "p", 7, True)
    assert "ii" in _conditions(validate_trace(fixture_trace))


def test_mutant_condition_iii(fixture_trace):
    # Shift the belief-set wave to t=7, after the computation ended.
    moved = []
    for ev in fixture_trace.events:
        if ev.kind == "beliefSet" and ev.src == "p":
            moved.append(replace(ev, time=7))
        else:
            moved.append(ev)
    fixture_trace.events = moved
    bs_infos = terms("f", "go")
    bs_pkg = DataPackage("p", bs_infos)

    def drop(buf):
        return tuple(p for p in buf if p != bs_pkg)

    def add(buf):
        return buf + (bs_pkg,)

    for target, editor in (("q", _edit_buffer), ("p", _edit_buffer)):
        editor(fixture_trace, target, 4, drop)
        editor(fixture_trace, target, 7, add)
    _edit_stream(fixture_trace, "o", 4, drop)
    _edit_stream(fixture_trace, "o", 7, add)
    violations = validate_trace(fixture_trace)
    assert "iii" in _conditions(violations)


def test_mutant_condition_iv(fixture_trace):
    pkg = DataPackage("boot", terms("noise"))
    fixture_trace.events.append(TraceEvent(5, "sensor", "boot", "o", tuple(terms("noise"))))
    fixture_trace.events.sort(key=lambda e: e.time)
    _edit_stream(fixture_trace, "o", 5, lambda buf: buf + (pkg,))
    assert "iv" in _conditions(validate_trace(fixture_trace))


def test_mutant_condition_v(fixture_trace):
    # p is busy at t=5; erase its buffered belief-set package from then on.
    bs_pkg = DataPackage("p", terms("f", "go"))
    _edit_buffer(fixture_trace, "p", 5, lambda buf: tuple(p for p in buf if p != bs_pkg))
    assert "v" in _conditions(validate_trace(fixture_trace))


def test_mutant_condition_suffix(fixture_trace):
    ghost = DataPackage("boot", terms("ghost"))
    _edit_buffer(fixture_trace, "p", 2, lambda buf: (ghost,) + buf)
    assert "suffix" in _conditions(validate_trace(fixture_trace))


def test_all_six_mutants_have_distinct_tags(fixture_trace):
    # the individual tests above each assert the exact expected tag; this
    # one documents that the clean fixture stays clean
    assert validate_trace(fixture_trace) == []
