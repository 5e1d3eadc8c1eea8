import random
from dataclasses import replace

import pytest

from amcs.engine import (
    EngineFault,
    FixedLatency,
    SystemValidationError,
    begin_computation,
    initial_state,
    is_waiting,
    run,
    step,
)
from amcs.formalisms import (
    ChoiceKB,
    RuleKB,
    choice_suite,
    make_append_updater,
    make_controller,
)
from amcs.kernel import (
    Context,
    ContextConfiguration,
    ContextManagement,
    DataPackage,
    OutputRule,
)
from amcs.terms import EOC, Var, parse_term
from amcs.tracefile import render_trace

from systems import assemble, fact_context, sensor


def terms(*texts):
    return frozenset(parse_term(t) for t in texts)


def pkg(src, *infos):
    return DataPackage(src, terms(*infos))


def out_rule(stake, head):
    return OutputRule(stake, parse_term(head), (), ())


def with_buffer(state, i, buffer):
    cfg = state.configs[i]
    configs = list(state.configs)
    configs[i] = replace(cfg, buffer=buffer)
    return replace(state, configs=tuple(configs))


# --- is_waiting ---------------------------------------------------------------


def test_is_waiting_always_ready():
    _, cfg = fact_context("c", controller=make_controller("always"))
    assert not is_waiting(cfg)


def test_is_waiting_for_sources():
    ctrl = make_controller("wait_for_sources", {"ca"})
    _, cfg = fact_context("c", controller=ctrl)
    assert is_waiting(cfg)
    ready = replace(cfg, buffer=(pkg("ca", "case(c1,l3,2)"),))
    assert not is_waiting(ready)


# --- begin_computation ----------------------------------------------------------


def test_begin_computation_fact_store():
    pair = fact_context("c", facts=["b"], controller=make_controller("always"))
    spec, init = assemble([pair])
    state = with_buffer(initial_state(spec, init), 0, (pkg("s1", "a"),))
    new_state, event = begin_computation(state, 0, FixedLatency(1), random.Random(0))
    new_cfg = new_state.configs[0]
    assert new_cfg.kb.facts_view() == terms("a", "b")
    assert new_cfg.buffer == ()
    flight = new_state.in_flight[0]
    assert [bs for bs, _ in flight.pending] == [terms("a", "b")]
    assert event.kind == "update"


def test_begin_computation_identity_updater_is_legal():
    # Keeping the entire buffer is the k=1 suffix.
    pair = fact_context("c", controller=make_controller("always"), updater=lambda cfg: cfg)
    spec, init = assemble([pair])
    state = with_buffer(initial_state(spec, init), 0, (pkg("s1", "a"),))
    new_state, _ = begin_computation(state, 0, FixedLatency(1), random.Random(0))
    assert new_state.configs[0].buffer == state.configs[0].buffer


def test_begin_computation_rejects_non_suffix():
    def bad_updater(cfg):
        return replace(cfg, buffer=(pkg("x", "zzz"),))

    pair = fact_context("c", controller=make_controller("always"), updater=bad_updater)
    spec, init = assemble([pair])
    state = initial_state(spec, init)
    with pytest.raises(EngineFault) as exc:
        begin_computation(state, 0, FixedLatency(1), random.Random(0))
    assert exc.value.violation is not None and exc.value.violation.condition == "suffix"


def test_begin_computation_rejects_inadmissible_kb():
    def bad_updater(cfg):
        return replace(cfg, kb=RuleKB(), buffer=())

    pair = fact_context("c", controller=make_controller("always"), updater=bad_updater)
    spec, init = assemble([pair])
    with pytest.raises(EngineFault):
        begin_computation(initial_state(spec, init), 0, FixedLatency(1), random.Random(0))


# --- step ------------------------------------------------------------------------


def test_step_quiescent():
    spec, init = assemble([fact_context("c1"), fact_context("c2")])
    state = initial_state(spec, init)
    new_state, log = step(state, [], FixedLatency(1), random.Random(0))
    assert new_state.time == 1
    assert log == []
    assert new_state.configs == state.configs


def forwarding_rule(stake):
    # bare-variable rule: forwards every belief to the stakeholder
    return OutputRule(stake, Var("V"), (Var("V"),), ())


def test_step_delivery_schedule():
    # Two belief sets delivered one tick apart, then the end signal: the
    # stakeholder buffer gains exactly three packages, the last one {eoc}.
    kb = ChoiceKB(RuleKB(), ((parse_term("x"), parse_term("y")),))
    mgmt = ContextManagement(
        make_controller("nonempty_buffer"),
        make_append_updater(),
        (forwarding_rule("sink"),),
    )
    prod_cfg = ContextConfiguration(kb, "choice", (pkg("go", "seed"),), mgmt)
    producer = (Context("prod", choice_suite()), prod_cfg)
    sink = fact_context("sink", controller=make_controller("wait_for_sources", {"never"}))
    spec, init = assemble([producer, sink], sensors=("go", "never"))

    rng = random.Random(1)
    state = initial_state(spec, init)
    state, log = step(state, [], FixedLatency(1), rng)
    assert state.busy(0)
    assert [e.kind for e in log] == ["update"]
    for expected_len in (1, 2, 3):
        state, log = step(state, [], FixedLatency(1), rng)
        assert len(state.configs[1].buffer) == expected_len
    buf = state.configs[1].buffer
    assert buf[0].infos == terms("seed", "x")
    assert buf[1].infos == terms("seed", "y")
    assert buf[2] == DataPackage("prod", frozenset({EOC}))
    assert state.busy(0)  # busy on the eoc tick itself
    state, _ = step(state, [], FixedLatency(1), rng)
    assert not state.busy(0)  # and idle the tick after


def test_step_sensor_to_busy_context():
    pair = fact_context("c", facts=["b"], controller=make_controller("nonempty_buffer"))
    spec, init = assemble([pair], sensors=("s1",))
    state = with_buffer(initial_state(spec, init), 0, (pkg("s1", "a"),))
    rng = random.Random(0)
    state, _ = step(state, [], FixedLatency(3), rng)
    assert state.busy(0)
    state, log = step(state, [sensor(2, "c", "s1", "late")], FixedLatency(3), rng)
    assert state.busy(0)
    assert state.configs[0].buffer[-1] == pkg("s1", "late")
    assert any(e.kind == "sensor" for e in log)


# --- run ---------------------------------------------------------------------------


def test_run_horizon_zero():
    spec, init = assemble([fact_context("c")])
    trace = run(spec, init, [], 0, FixedLatency(1), seed=3)
    assert len(trace.snapshots) == 1
    assert trace.snapshots[0].time == 0
    assert trace.events == []


def test_run_is_deterministic():
    from systems import random_system

    rng = random.Random(99)
    spec, init, events, latency = random_system(rng)
    t1 = run(spec, init, events, 30, latency, seed=5)
    t2 = run(spec, init, events, 30, latency, seed=5)
    assert render_trace(t1) == render_trace(t2)


def test_run_rejects_invalid_system():
    pair = fact_context("c", rules=[out_rule("nowhere", "ping")])
    spec, init = assemble([pair])
    with pytest.raises(SystemValidationError):
        run(spec, init, [], 5, FixedLatency(1), seed=0)


def test_run_attaches_partial_trace_on_fault():
    calls = {"n": 0}

    def flaky(cfg):
        calls["n"] += 1
        if calls["n"] > 1:
            raise RuntimeError("boom")
        return make_append_updater()(cfg)

    pair = fact_context("c", controller=make_controller("always"), updater=flaky)
    spec, init = assemble([pair])
    with pytest.raises(EngineFault) as exc:
        run(spec, init, [], 20, FixedLatency(1), seed=0)
    assert exc.value.partial_trace is not None
    assert len(exc.value.partial_trace.snapshots) >= 1
