"""Independent run-trace validation.

This module never looks at engine internals: it reads only configuration
snapshots (busy flags, buffers, stream contents) and the notification log,
and re-checks the run conditions:

(i)    a computation start flips idle to busy via an update record, and
       only then;
(ii)   busy holds from the start through the end-of-computation
       notification, which reaches every stakeholder exactly at the end,
       and not beyond;
(iii)  belief-set notifications happen only while busy and reach every
       stakeholder uniformly;
(iv)   output streams grow only by belief-set or end notifications from
       contexts;
(v)    input buffers of busy/waiting contexts grow only by notifications
       or sensor packages, and never lose entries;
suffix the buffer left behind by an update is a suffix of its input;
def5   stream packages are always sourced by contexts.

What a trace cannot carry -- controller decisions and the semantics of
knowledge bases -- is the engine's to enforce; everything structural is
re-checked here.
"""

from __future__ import annotations

from .engine import RunTrace, TraceEvent
from .kernel import AMCSSpec, DataPackage, Violation
from .terms import EOC

__all__ = ["validate_run", "validate_trace"]

_NOTIFY_KINDS = ("beliefSet", "eoc", "sensor")


def validate_run(spec: AMCSSpec, trace: RunTrace) -> list[Violation]:
    """Check a trace against the run conditions for the given system."""
    if spec.context_names != trace.context_names or spec.stream_names != trace.stream_names:
        raise ValueError("trace does not belong to this system (name mismatch)")
    return validate_trace(trace)


def _event_package(ev: TraceEvent) -> DataPackage:
    return DataPackage(ev.src, frozenset(ev.infos))


def validate_trace(trace: RunTrace) -> list[Violation]:
    times = [s.time for s in trace.snapshots]
    if not times or any(b - a != 1 for a, b in zip(times, times[1:])):
        raise ValueError("trace times must increase by exactly 1")
    t0, t_last = times[0], times[-1]

    contexts = trace.context_names
    streams = trace.stream_names
    ctx_set, stream_set = set(contexts), set(streams)
    known = ctx_set | stream_set

    busy: dict[str, dict[int, bool]] = {c: {} for c in contexts}
    buffers: dict[str, dict[int, tuple[DataPackage, ...]]] = {c: {} for c in contexts}
    stream_at: dict[str, dict[int, tuple[DataPackage, ...]]] = {s: {} for s in streams}
    for snap in trace.snapshots:
        for cs in snap.contexts:
            busy[cs.name][snap.time] = cs.busy
            buffers[cs.name][snap.time] = cs.buffer
        for name, buf in zip(streams, snap.streams):
            stream_at[name][snap.time] = buf

    out: list[Violation] = []

    def flag(condition: str, time: int, where: str, message: str):
        out.append(Violation(condition, time, where, message))

    # --- event sanity, plus indexes -------------------------------------
    deliveries: dict[tuple[int, str], list[TraceEvent]] = {}
    updates: dict[tuple[int, str], TraceEvent] = {}
    by_source: dict[str, list[TraceEvent]] = {c: [] for c in contexts}
    for ev in trace.events:
        if ev.time <= t0 or ev.time > t_last:
            flag("i", ev.time, ev.src, "notification outside the trace's time range")
            continue
        if ev.kind == "update":
            if ev.src != ev.dst or ev.src not in ctx_set:
                flag("i", ev.time, ev.src, "malformed update record")
                continue
            if (ev.time, ev.src) in updates:
                flag("i", ev.time, ev.src, "two computation starts at one tick")
                continue
            updates[(ev.time, ev.src)] = ev
            continue
        if ev.kind not in _NOTIFY_KINDS:
            flag("i", ev.time, ev.src, f"unknown notification kind {ev.kind!r}")
            continue
        deliveries.setdefault((ev.time, ev.dst), []).append(ev)
        if ev.kind in ("beliefSet", "eoc") and ev.src in ctx_set:
            by_source[ev.src].append(ev)

    # --- buffer evolution per context (conditions i, v, suffix) ---------
    for name in contexts:
        for t in times[:-1]:
            t1 = t + 1
            arrived = deliveries.get((t1, name), [])
            for ev in arrived:
                if ev.kind == "sensor":
                    if ev.src in known:
                        flag("v", t1, name, f"sensor package sourced by system name {ev.src!r}")
                elif ev.src not in ctx_set:
                    flag("v", t1, name, f"notification from unknown context {ev.src!r}")
            old, new = buffers[name][t], buffers[name][t1]
            upd = updates.get((t1, name))
            was_busy, now_busy = busy[name][t], busy[name][t1]
            if upd is not None:
                if was_busy:
                    flag("i", t1, name, "computation started while still busy")
                if not now_busy:
                    flag("i", t1, name, "computation start did not set the busy flag")
                k = len(arrived)
                tail = new[len(new) - k :] if k else ()
                if len(new) < k or list(tail) != [_event_package(e) for e in arrived]:
                    flag("v", t1, name, "buffer tail does not match the packages delivered this tick")
                    continue
                core = new[: len(new) - k]
                if len(core) > len(old) or core != old[len(old) - len(core) :]:
                    flag("suffix", t1, name, "buffer after the update is not a suffix of the old buffer")
            else:
                if not was_busy and now_busy:
                    flag("i", t1, name, "became busy without a computation start")
                expected = old + tuple(_event_package(e) for e in arrived)
                if new != expected:
                    flag("v", t1, name, "buffer change not explained by logged notifications")

    # --- stream evolution (conditions iv, def5) -------------------------
    for name in streams:
        for t in times[:-1]:
            t1 = t + 1
            arrived = deliveries.get((t1, name), [])
            usable = []
            for ev in arrived:
                if ev.kind not in ("beliefSet", "eoc"):
                    flag("iv", t1, name, f"{ev.kind} package appended to an output stream")
                    continue
                if ev.src not in ctx_set:
                    flag("def5", t1, name, f"stream package sourced by non-context {ev.src!r}")
                usable.append(ev)
            old, new = stream_at[name][t], stream_at[name][t1]
            expected = old + tuple(_event_package(e) for e in usable)
            if new != expected:
                flag("iv", t1, name, "stream change not explained by logged notifications")

    # --- busy bracketing and notification placement (ii, iii) -----------
    for name in contexts:
        intervals: list[tuple[int, int]] = []
        start: int | None = t0 if busy[name][t0] else None
        for t in times[1:]:
            if busy[name][t] and start is None:
                start = t
            elif not busy[name][t] and start is not None:
                intervals.append((start, t - 1))
                start = None
        if start is not None:
            intervals.append((start, t_last))

        def interval_of(t: int) -> tuple[int, int] | None:
            for s, e in intervals:
                if s <= t <= e:
                    return (s, e)
            return None

        stakeset_at: dict[int, frozenset[str] | None] = {}
        for s, e in intervals:
            upd = updates.get((s, name))
            if upd is None and s > t0:
                flag("i", s, name, "busy interval without a computation start")
            stakeset_at[s] = frozenset(t.functor for t in upd.infos) if upd else None

        eocs = [e for e in by_source[name] if e.kind == "eoc"]
        eoc_by_time: dict[int, list[TraceEvent]] = {}
        for ev in eocs:
            eoc_by_time.setdefault(ev.time, []).append(ev)
        for t, evs in sorted(eoc_by_time.items()):
            iv = interval_of(t)
            if iv is None:
                flag("ii", t, name, "end-of-computation notification while not busy")
                continue
            s, e = iv
            if t != e:
                flag("ii", t, name, "busy after the end-of-computation notification")
                continue
            stakeset = stakeset_at.get(s)
            dsts = sorted(ev.dst for ev in evs)
            if len(set(dsts)) != len(dsts):
                flag("ii", t, name, "duplicate end-of-computation notification to one stakeholder")
            if stakeset is not None and set(dsts) != set(stakeset):
                flag("ii", t, name, "end-of-computation notifications do not match the stakeholder set")
            if any(tuple(ev.infos) != (EOC,) for ev in evs):
                flag("ii", t, name, "end-of-computation package must carry exactly the eoc atom")
        for s, e in intervals:
            closed = e < t_last
            stakeset = stakeset_at.get(s)
            if closed and stakeset and not eoc_by_time.get(e):
                flag("ii", e, name, "computation ended without an end-of-computation notification")

        bs_by_time: dict[int, list[TraceEvent]] = {}
        for ev in by_source[name]:
            if ev.kind == "beliefSet":
                bs_by_time.setdefault(ev.time, []).append(ev)
        for t, evs in sorted(bs_by_time.items()):
            iv = interval_of(t)
            if iv is None:
                flag("iii", t, name, "belief-set notification while not busy")
                continue
            s, e = iv
            stakeset = stakeset_at.get(s)
            counts: dict[str, int] = {}
            for ev in evs:
                counts[ev.dst] = counts.get(ev.dst, 0) + 1
            if stakeset is not None:
                if set(counts) != set(stakeset) or len(set(counts.values())) > 1:
                    flag("iii", t, name, "belief-set notifications do not reach every stakeholder uniformly")
            elif len(set(counts.values())) > 1:
                flag("iii", t, name, "belief-set notifications are not uniform across stakeholders")

    return out
