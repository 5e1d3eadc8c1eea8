"""The discrete-time run engine.

One engine step advances the global clock by one tick. Within a step,
in this order:

1. every context that is neither busy nor waiting starts a computation:
   its update function consumes a suffix of the buffer, the semantics of
   the new knowledge base is evaluated eagerly against that snapshot, and
   the resulting belief sets are scheduled for delivery at times drawn
   from the latency model;
2. due belief sets are delivered: for each one, the output of the source
   context is appended to every stakeholder buffer; when a computation's
   end time is reached, the end-of-computation package is appended to
   every stakeholder buffer and the context stops being busy at the
   following tick;
3. sensor packages timestamped with the new tick are appended to their
   target buffers.

Starts are processed first, so an update function always sees exactly the
previous tick's buffer; packages arriving on the same tick land behind
the consumed suffix. Everything is deterministic given the seed: latency
is sampled in context order, deliveries fan out to stakeholders in system
declaration order, and ties deliver in enumeration order.
"""

from __future__ import annotations

import random
from dataclasses import dataclass, field, replace
from typing import Iterable, Protocol, Sequence

from .kernel import (
    AMCSSpec,
    Buffer,
    ContextConfiguration,
    DataPackage,
    KnowledgeBase,
    SystemConfiguration,
    Violation,
    relout,
    stakeholders,
    validate_system,
)
from .terms import EOC, Term, canon_terms

__all__ = [
    "LatencyModel",
    "FixedLatency",
    "UniformLatency",
    "TableLatency",
    "SensorEvent",
    "InFlightComputation",
    "RuntimeState",
    "TraceEvent",
    "ContextSnapshot",
    "Snapshot",
    "RunTrace",
    "EngineFault",
    "SystemValidationError",
    "is_waiting",
    "initial_state",
    "begin_computation",
    "step",
    "run",
]


class EngineFault(RuntimeError):
    """A run aborted: updater/controller/semantics misbehaved at runtime."""

    def __init__(self, context: str, message: str, violation: Violation | None = None):
        super().__init__(f"{context}: {message}")
        self.context = context
        self.violation = violation
        self.partial_trace: "RunTrace | None" = None


class SystemValidationError(ValueError):
    def __init__(self, violations: list[Violation]):
        super().__init__("; ".join(str(v) for v in violations))
        self.violations = violations


class LatencyModel(Protocol):
    def sample(
        self, context_index: int, kb: KnowledgeBase, count: int, rng: random.Random
    ) -> tuple[tuple[int, ...], int]:
        """Per-belief-set delivery offsets plus the end-of-computation offset.

        Offsets are ticks after the computation start, each at least 1; the
        end offset must be no earlier than every delivery.
        """
        ...


@dataclass(frozen=True)
class FixedLatency:
    """The j-th belief set arrives after ``j * per_result`` ticks."""

    per_result: int = 1

    def __post_init__(self):
        if self.per_result < 1:
            raise ValueError("latency must be at least one tick")

    def sample(self, context_index, kb, count, rng):
        offsets = tuple(self.per_result * (j + 1) for j in range(count))
        return offsets, self.per_result * (count + 1)


@dataclass(frozen=True)
class UniformLatency:
    """Seeded uniform offsets in [low, high], sorted; end follows the last."""

    low: int = 1
    high: int = 3

    def __post_init__(self):
        if self.low < 1 or self.high < self.low:
            raise ValueError("need 1 <= low <= high")

    def sample(self, context_index, kb, count, rng):
        offsets = tuple(sorted(rng.randint(self.low, self.high) for _ in range(count)))
        last = offsets[-1] if offsets else 0
        return offsets, last + rng.randint(self.low, self.high)


@dataclass(frozen=True)
class TableLatency:
    """Per-context (per_result, eoc_gap) pairs, indexed by context position."""

    table: tuple[tuple[int, int], ...]

    def sample(self, context_index, kb, count, rng):
        per, gap = self.table[context_index]
        offsets = tuple(per * (j + 1) for j in range(count))
        return offsets, per * count + gap


@dataclass(frozen=True)
class SensorEvent:
    """A sensor package appearing on a context's input buffer at a tick."""

    time: int
    target: str
    package: DataPackage


@dataclass(frozen=True)
class InFlightComputation:
    context_index: int
    started_at: int
    kb_snapshot: KnowledgeBase
    pending: tuple[tuple[frozenset[Term], int], ...]  # (belief set, delivery tick)
    eoc_time: int


@dataclass(frozen=True)
class RuntimeState:
    spec: AMCSSpec
    time: int
    configs: tuple[ContextConfiguration, ...]
    in_flight: tuple[InFlightComputation | None, ...]
    ended_at: tuple[int | None, ...]
    streams: tuple[Buffer, ...]

    def busy(self, i: int) -> bool:
        return self.in_flight[i] is not None or self.ended_at[i] == self.time


@dataclass(frozen=True)
class TraceEvent:
    """One notification-log record.

    ``kind`` is beliefSet, eoc, sensor or update. Update events mark a
    computation start; their info list encodes the stakeholder names of
    the new configuration so a trace alone supports completeness checks.
    """

    time: int
    kind: str
    src: str
    dst: str
    infos: tuple[Term, ...]


@dataclass(frozen=True)
class ContextSnapshot:
    name: str
    busy: bool
    semantics_id: str
    kb_facts: tuple[Term, ...]
    buffer: Buffer


@dataclass(frozen=True)
class Snapshot:
    time: int
    contexts: tuple[ContextSnapshot, ...]
    streams: tuple[Buffer, ...]


@dataclass
class RunTrace:
    """Timestamped system configurations plus the notification log."""

    context_names: tuple[str, ...]
    stream_names: tuple[str, ...]
    sensor_names: tuple[str, ...]
    snapshots: list[Snapshot] = field(default_factory=list)
    events: list[TraceEvent] = field(default_factory=list)

    def events_at(self, t: int) -> list[TraceEvent]:
        return [e for e in self.events if e.time == t]


def is_waiting(cfg: ContextConfiguration) -> bool:
    """True iff the computation controller rejects the current kb/buffer pair."""
    return not cfg.management.controller(cfg.kb, cfg.buffer)


def initial_state(spec: AMCSSpec, init: SystemConfiguration) -> RuntimeState:
    n = len(spec.contexts)
    return RuntimeState(
        spec=spec,
        time=0,
        configs=init.contexts,
        in_flight=(None,) * n,
        ended_at=(None,) * n,
        streams=init.streams,
    )


def _snapshot(state: RuntimeState) -> Snapshot:
    ctxs = []
    for i, (ctx, cfg) in enumerate(zip(state.spec.contexts, state.configs)):
        ctxs.append(
            ContextSnapshot(
                name=ctx.name,
                busy=state.busy(i),
                semantics_id=cfg.semantics_id,
                kb_facts=canon_terms(cfg.kb.facts_view()),
                buffer=cfg.buffer,
            )
        )
    return Snapshot(state.time, tuple(ctxs), state.streams)


def _stakeholder_order(spec: AMCSSpec, names: frozenset[str]) -> list[str]:
    ordered = [n for n in spec.context_names if n in names]
    ordered += [n for n in spec.stream_names if n in names]
    return ordered


def begin_computation(
    state: RuntimeState, i: int, latency: LatencyModel, rng: random.Random
) -> tuple[RuntimeState, TraceEvent]:
    """Start a computation for context ``i`` at the next tick.

    The update function is applied to the current buffer and knowledge
    base; the new buffer must be a suffix of the old one and the new kb
    admissible, otherwise the run is rejected. Belief sets of the new kb
    are evaluated immediately under the (possibly changed) active
    semantics and scheduled with offsets drawn from the latency model.
    """
    ctx = state.spec.contexts[i]
    cfg = state.configs[i]
    try:
        new_cfg = cfg.management.updater(cfg)
    except EngineFault:
        raise
    except Exception as exc:
        raise EngineFault(ctx.name, f"update function failed: {exc}") from exc

    old_buf, new_buf = cfg.buffer, new_cfg.buffer
    if len(new_buf) > len(old_buf) or new_buf != old_buf[len(old_buf) - len(new_buf) :]:
        raise EngineFault(
            ctx.name,
            "update function returned a buffer that is not a suffix of its input",
            Violation("suffix", state.time + 1, ctx.name, "updated buffer is not a suffix"),
        )
    if not ctx.suite.admissible(new_cfg.kb):
        raise EngineFault(ctx.name, "update function produced an inadmissible knowledge base")
    semantics = ctx.suite.semantics.get(new_cfg.semantics_id)
    if semantics is None:
        raise EngineFault(ctx.name, f"active semantics {new_cfg.semantics_id!r} not in suite")
    try:
        belief_sets = list(semantics(new_cfg.kb))
    except Exception as exc:
        raise EngineFault(ctx.name, f"semantics evaluation failed: {exc}") from exc

    offsets, eoc_offset = latency.sample(i, new_cfg.kb, len(belief_sets), rng)
    if len(offsets) != len(belief_sets) or any(o < 1 for o in offsets) or eoc_offset < max(offsets, default=1):
        raise EngineFault(ctx.name, "latency model returned invalid offsets")
    start = state.time + 1
    ordered = sorted(offsets)
    pending = tuple((bs, start + off) for bs, off in zip(belief_sets, ordered))
    flight = InFlightComputation(i, start, new_cfg.kb, pending, start + eoc_offset)

    configs = list(state.configs)
    configs[i] = new_cfg
    in_flight = list(state.in_flight)
    in_flight[i] = flight
    stakes = _stakeholder_order(state.spec, stakeholders(new_cfg.management.rules))
    event = TraceEvent(start, "update", ctx.name, ctx.name, tuple(Term(s) for s in stakes))
    return (
        replace(state, configs=tuple(configs), in_flight=tuple(in_flight)),
        event,
    )


def _append_to(state_parts, spec: AMCSSpec, name: str, pkg: DataPackage) -> None:
    configs, streams = state_parts
    if name in spec.context_names:
        j = spec.context_index(name)
        cfg = configs[j]
        configs[j] = replace(cfg, buffer=cfg.buffer + (pkg,))
    else:
        j = spec.stream_names.index(name)
        streams[j] = streams[j] + (pkg,)


def step(
    state: RuntimeState,
    events: Sequence[SensorEvent],
    latency: LatencyModel,
    rng: random.Random,
) -> tuple[RuntimeState, list[TraceEvent]]:
    """Advance the system by one tick; returns the new state and log records."""
    spec = state.spec
    t1 = state.time + 1
    log: list[TraceEvent] = []

    # 1. computation starts, judged on the time-t state
    for i, ctx in enumerate(spec.contexts):
        if state.busy(i):
            continue
        cfg = state.configs[i]
        try:
            waiting = is_waiting(cfg)
        except Exception as exc:
            raise EngineFault(ctx.name, f"controller failed: {exc}") from exc
        if waiting:
            continue
        state, ev = begin_computation(state, i, latency, rng)
        log.append(ev)

    configs = list(state.configs)
    in_flight = list(state.in_flight)
    ended_at = list(state.ended_at)
    streams = list(state.streams)
    parts = (configs, streams)

    # 2. due deliveries, in context order; belief sets before the end signal
    for i, ctx in enumerate(spec.contexts):
        flight = in_flight[i]
        if flight is None:
            continue
        due = [bs for bs, at in flight.pending if at == t1]
        rest = tuple((bs, at) for bs, at in flight.pending if at != t1)
        rules = configs[i].management.rules
        stakes = _stakeholder_order(spec, stakeholders(rules))
        for bs in due:
            for name in stakes:
                try:
                    pkg = relout(ctx.name, bs, rules, name)
                except ValueError as exc:
                    raise EngineFault(ctx.name, str(exc)) from exc
                _append_to(parts, spec, name, pkg)
                log.append(TraceEvent(t1, "beliefSet", ctx.name, name, canon_terms(pkg.infos)))
        if flight.eoc_time == t1:
            for name in stakes:
                pkg = DataPackage(ctx.name, frozenset({EOC}))
                _append_to(parts, spec, name, pkg)
                log.append(TraceEvent(t1, "eoc", ctx.name, name, (EOC,)))
            in_flight[i] = None
            ended_at[i] = t1
        else:
            in_flight[i] = replace(flight, pending=rest)

    # 3. sensor packages for this tick
    for ev in events:
        if ev.time != t1:
            raise ValueError(f"sensor event at t={ev.time} fed to step producing t={t1}")
        if ev.target not in spec.context_names:
            raise ValueError(f"sensor event targets unknown context {ev.target!r}")
        if ev.package.source in spec.names() or ev.package.source not in spec.sensor_names:
            raise ValueError(f"sensor package source {ev.package.source!r} is not a sensor name")
        _append_to(parts, spec, ev.target, ev.package)
        log.append(TraceEvent(t1, "sensor", ev.package.source, ev.target, canon_terms(ev.package.infos)))

    new_state = RuntimeState(
        spec=spec,
        time=t1,
        configs=tuple(configs),
        in_flight=tuple(in_flight),
        ended_at=tuple(ended_at),
        streams=tuple(streams),
    )
    return new_state, log


def run(
    spec: AMCSSpec,
    init: SystemConfiguration,
    sensors: Iterable[SensorEvent],
    horizon: int,
    latency: LatencyModel,
    seed: int = 0,
) -> RunTrace:
    """Iterate :func:`step` for ``horizon`` ticks from the initial configuration.

    Fully deterministic given identical arguments. Aborts raise
    :class:`EngineFault` with the partial trace attached.
    """
    if horizon < 0:
        raise ValueError("horizon must be nonnegative")
    violations = validate_system(spec, init)
    if violations:
        raise SystemValidationError(violations)

    by_time: dict[int, list[SensorEvent]] = {}
    for ev in sensors:
        if ev.time < 1:
            raise ValueError("sensor events start at tick 1")
        by_time.setdefault(ev.time, []).append(ev)

    rng = random.Random(seed)
    state = initial_state(spec, init)
    trace = RunTrace(
        context_names=spec.context_names,
        stream_names=spec.stream_names,
        sensor_names=tuple(sorted(spec.sensor_names)),
        snapshots=[_snapshot(state)],
    )
    for _ in range(horizon):
        try:
            state, log = step(state, by_time.get(state.time + 1, []), latency, rng)
        except EngineFault as fault:
            fault.partial_trace = trace
            raise
        trace.events.extend(log)
        trace.snapshots.append(_snapshot(state))
    return trace
