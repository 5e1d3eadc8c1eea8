"""Line-oriented trace serialization.

The format is bit-exact on purpose: golden-trace regressions compare
bytes. One notification record per line::

    t=<tick> kind=<beliefSet|eoc|sensor|update> src=<name> dst=<name> pkg=[<terms>]

followed, per tick, by a configuration snapshot as an indented block::

    t=<tick>
      ctx <name> busy=<0|1> sem=<id> kb=[<terms>] buf=[<src>:{<terms>},...]
      out <stream>=[<src>:{<terms>},...]

Term lists are comma-separated canonical terms; package info sets are
rendered in canonical term order.
"""

from __future__ import annotations

from .engine import ContextSnapshot, RunTrace, Snapshot, TraceEvent
from .kernel import Buffer, DataPackage
from .terms import Term, canon_terms, parse_term_list, render_term

__all__ = ["render_trace", "parse_trace", "TraceParseError"]

_HEADER = "amcs-trace v1"


class TraceParseError(ValueError):
    def __init__(self, lineno: int, message: str):
        super().__init__(f"line {lineno}: {message}")
        self.lineno = lineno


def _render_terms(terms) -> str:
    return ",".join(render_term(t) for t in terms)


def _render_package(pkg: DataPackage) -> str:
    return f"{pkg.source}:{{{_render_terms(canon_terms(pkg.infos))}}}"


def _render_buffer(buf: Buffer) -> str:
    return "[" + ",".join(_render_package(p) for p in buf) + "]"


def render_trace(trace: RunTrace) -> str:
    lines = [_HEADER]
    lines.append("contexts: " + " ".join(trace.context_names))
    lines.append("streams: " + " ".join(trace.stream_names))
    lines.append("sensors: " + " ".join(trace.sensor_names))
    events_by_time: dict[int, list[TraceEvent]] = {}
    for ev in trace.events:
        events_by_time.setdefault(ev.time, []).append(ev)
    for snap in trace.snapshots:
        for ev in events_by_time.get(snap.time, []):
            lines.append(
                f"t={ev.time} kind={ev.kind} src={ev.src} dst={ev.dst} pkg=[{_render_terms(ev.infos)}]"
            )
        lines.append(f"t={snap.time}")
        for ctx in snap.contexts:
            lines.append(
                f"  ctx {ctx.name} busy={int(ctx.busy)} sem={ctx.semantics_id} "
                f"kb=[{_render_terms(ctx.kb_facts)}] buf={_render_buffer(ctx.buffer)}"
            )
        for name, stream in zip(trace.stream_names, snap.streams):
            lines.append(f"  out {name}={_render_buffer(stream)}")
    return "\n".join(lines) + "\n"


def _split_top(text: str, sep: str) -> list[str]:
    parts: list[str] = []
    depth = 0
    start = 0
    for i, c in enumerate(text):
        if c in "({":
            depth += 1
        elif c in ")}":
            depth -= 1
        elif c == sep and depth == 0:
            parts.append(text[start:i])
            start = i + 1
    parts.append(text[start:])
    return [p for p in parts if p]


def _parse_packages(text: str, lineno: int) -> Buffer:
    if not (text.startswith("[") and text.endswith("]")):
        raise TraceParseError(lineno, f"expected [..] package list, got {text!r}")
    inner = text[1:-1]
    packages = []
    for part in _split_top(inner, ","):
        if ":" not in part:
            raise TraceParseError(lineno, f"malformed package {part!r}")
        src, infos_text = part.split(":", 1)
        if not (infos_text.startswith("{") and infos_text.endswith("}")):
            raise TraceParseError(lineno, f"malformed package {part!r}")
        try:
            infos = parse_term_list(infos_text[1:-1])
        except ValueError as exc:
            raise TraceParseError(lineno, f"bad term in package {part!r}: {exc}") from exc
        packages.append(DataPackage(src, frozenset(infos)))
    return tuple(packages)


def _parse_terms(text: str, lineno: int) -> tuple[Term, ...]:
    if not (text.startswith("[") and text.endswith("]")):
        raise TraceParseError(lineno, f"expected [..] term list, got {text!r}")
    try:
        return parse_term_list(text[1:-1])
    except ValueError as exc:
        raise TraceParseError(lineno, str(exc)) from exc


def _names_line(line: str, prefix: str, lineno: int) -> tuple[str, ...]:
    if not line.startswith(prefix + ":"):
        raise TraceParseError(lineno, f"expected {prefix!r} header line")
    rest = line[len(prefix) + 1 :].strip()
    return tuple(rest.split()) if rest else ()


def _kv_fields(text: str, lineno: int) -> dict[str, str]:
    fields: dict[str, str] = {}
    for chunk in _split_top(text, " "):
        if "=" not in chunk:
            raise TraceParseError(lineno, f"malformed field {chunk!r}")
        k, v = chunk.split("=", 1)
        fields[k] = v
    return fields


def parse_trace(text: str) -> RunTrace:
    """Parse a serialized trace; inverse of :func:`render_trace`."""
    lines = text.splitlines()
    if not lines or lines[0] != _HEADER:
        raise TraceParseError(1, f"missing {_HEADER!r} header")
    if len(lines) < 4:
        raise TraceParseError(len(lines), "truncated header")
    contexts = _names_line(lines[1], "contexts", 2)
    streams = _names_line(lines[2], "streams", 3)
    sensors = _names_line(lines[3], "sensors", 4)
    trace = RunTrace(contexts, streams, sensors)

    i = 4
    while i < len(lines):
        line = lines[i]
        lineno = i + 1
        if not line.startswith("t="):
            raise TraceParseError(lineno, f"expected a t=... line, got {line!r}")
        if " " in line:
            fields = _kv_fields(line, lineno)
            for key in ("t", "kind", "src", "dst", "pkg"):
                if key not in fields:
                    raise TraceParseError(lineno, f"event line missing {key}=")
            trace.events.append(
                TraceEvent(
                    time=int(fields["t"]),
                    kind=fields["kind"],
                    src=fields["src"],
                    dst=fields["dst"],
                    infos=_parse_terms(fields["pkg"], lineno),
                )
            )
            i += 1
            continue
        t = int(line[2:])
        i += 1
        ctx_snaps: list[ContextSnapshot] = []
        stream_bufs: list[Buffer] = []
        while i < len(lines) and lines[i].startswith("  "):
            body = lines[i].strip()
            lineno = i + 1
            if body.startswith("ctx "):
                rest = body[4:]
                name, field_text = rest.split(" ", 1)
                fields = _kv_fields(field_text, lineno)
                ctx_snaps.append(
                    ContextSnapshot(
                        name=name,
                        busy=fields["busy"] == "1",
                        semantics_id=fields["sem"],
                        kb_facts=_parse_terms(fields["kb"], lineno),
                        buffer=_parse_packages(fields["buf"], lineno),
                    )
                )
            elif body.startswith("out "):
                _, assign = body.split(" ", 1)
                name, buf = assign.split("=", 1)
                stream_bufs.append(_parse_packages(buf, lineno))
            else:
                raise TraceParseError(lineno, f"unexpected snapshot line {body!r}")
            i += 1
        if len(ctx_snaps) != len(contexts) or len(stream_bufs) != len(streams):
            raise TraceParseError(lineno, f"snapshot at t={t} incomplete")
        trace.snapshots.append(Snapshot(t, tuple(ctx_snaps), tuple(stream_bufs)))
    if not trace.snapshots:
        raise TraceParseError(len(lines), "trace has no snapshots")
    return trace
