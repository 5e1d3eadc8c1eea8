"""Loading systems and sensor schedules from text files.

System files (``.amcs``) are line-oriented ``key: value`` directives.
Top-level::

    system: caet              % optional label
    sensors: s1 s2
    streams: o1 o2

then one block per context, opened by ``context: <name>``::

    formalism: facts | rules | choice
    semantics: <id>           % optional; defaults by formalism
    controller: always | nonempty_buffer | fresh |
                wait_for_sources(n1,n2) | wait_for_eoc(n1,n2)
    inputs: s1 s2             % sensors routed to this context
    kb: <fact, rule or choice statement>
    forget: <pattern>.        | forget: <pattern> if <trigger>.
    drop: <pattern> if <guard>.
    out: (<stakeholder>, <head>) :- <body>.

Sensor schedules are one event per line::

    t=<tick> sensor=<name> info=<comma-separated terms>

routed to every context that lists the sensor under ``inputs:``.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from .engine import SensorEvent
from .formalisms import (
    SEMANTICS,
    ChoiceKB,
    FactKB,
    ProgramSpec,
    RuleKB,
    fresh_info_controller,
    make_append_updater,
    make_controller,
    parse_output_rule,
    parse_program_line,
)
from .kernel import (
    AMCSSpec,
    Context,
    ContextConfiguration,
    ContextManagement,
    DataPackage,
    KnowledgeBase,
    LogicSuite,
    OutputRule,
    SystemConfiguration,
)
from .terms import parse_term_list

__all__ = ["LoadedSystem", "load_system", "loads_system", "load_sensor_events", "loads_sensor_events"]


class SystemFileError(ValueError):
    def __init__(self, lineno: int, message: str):
        super().__init__(f"line {lineno}: {message}")
        self.lineno = lineno


@dataclass
class _ContextBlock:
    name: str
    formalism: str = "facts"
    semantics: str | None = None
    controller: str = "nonempty_buffer"
    inputs: list[str] = field(default_factory=list)
    program: ProgramSpec = field(default_factory=ProgramSpec.empty)
    out_rules: list[OutputRule] = field(default_factory=list)


@dataclass
class LoadedSystem:
    spec: AMCSSpec
    init: SystemConfiguration
    routes: dict[str, tuple[str, ...]]  # sensor name -> subscribed contexts

    def as_tuple(self):
        return self.spec, self.init


_DEFAULT_SEMANTICS = {"facts": "factstore", "rules": "stratified", "choice": "choice"}


def _build_kb(block: _ContextBlock) -> KnowledgeBase:
    prog = block.program
    if block.formalism == "facts":
        if prog.rules or prog.groups:
            raise ValueError(f"context {block.name}: a fact store cannot carry rules or choices")
        return FactKB(frozenset(prog.facts))
    if block.formalism == "rules":
        if prog.groups:
            raise ValueError(f"context {block.name}: choice groups need formalism 'choice'")
        return RuleKB(frozenset(prog.facts), tuple(prog.rules))
    if block.formalism == "choice":
        return ChoiceKB(RuleKB(frozenset(prog.facts), tuple(prog.rules)), tuple(prog.groups))
    raise ValueError(f"context {block.name}: unknown formalism {block.formalism!r}")


_ADMISSIBLE = {
    "facts": lambda kb: isinstance(kb, FactKB),
    "rules": lambda kb: isinstance(kb, RuleKB),
    "choice": lambda kb: isinstance(kb, ChoiceKB),
}


def _build_controller(block: _ContextBlock):
    text = block.controller
    if "(" in text:
        name, rest = text.split("(", 1)
        if not rest.endswith(")"):
            raise ValueError(f"malformed controller {text!r}")
        args = [a.strip() for a in rest[:-1].split(",") if a.strip()]
        return make_controller(name.strip(), args)
    if text == "fresh":
        return fresh_info_controller(tuple(block.program.drops))
    return make_controller(text)


def _build_context(block: _ContextBlock) -> tuple[Context, ContextConfiguration]:
    kb = _build_kb(block)
    sem_id = block.semantics or _DEFAULT_SEMANTICS[block.formalism]
    sem_fn = SEMANTICS.get(sem_id)
    if sem_fn is None:
        raise ValueError(f"context {block.name}: unknown semantics {sem_id!r}")
    catalog = {sem_id: sem_fn}
    default_id = _DEFAULT_SEMANTICS[block.formalism]
    if default_id not in catalog:
        catalog[default_id] = SEMANTICS[default_id]
    suite = LogicSuite(_ADMISSIBLE[block.formalism], catalog)
    mgmt = ContextManagement(
        _build_controller(block),
        make_append_updater(tuple(block.program.forgets), tuple(block.program.drops)),
        tuple(block.out_rules),
    )
    return Context(block.name, suite), ContextConfiguration(kb, sem_id, (), mgmt)


def loads_system(text: str) -> LoadedSystem:
    sensors: list[str] = []
    streams: list[str] = []
    blocks: list[_ContextBlock] = []
    current: _ContextBlock | None = None

    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("%", 1)[0].strip()
        if not line:
            continue
        if ":" not in line:
            raise SystemFileError(lineno, f"expected 'key: value', got {line!r}")
        key, value = line.split(":", 1)
        key, value = key.strip(), value.strip()
        try:
            if key == "system":
                continue
            elif key == "sensors":
                sensors.extend(value.split())
            elif key == "streams":
                streams.extend(value.split())
            elif key == "context":
                current = _ContextBlock(name=value)
                blocks.append(current)
            elif current is None:
                raise ValueError(f"directive {key!r} outside a context block")
            elif key == "formalism":
                current.formalism = value
            elif key == "semantics":
                current.semantics = value
            elif key == "controller":
                current.controller = value
            elif key == "inputs":
                current.inputs.extend(value.split())
            elif key == "kb":
                parse_program_line(value, current.program)
            elif key == "forget":
                parse_program_line(f"forget {value}", current.program)
            elif key == "drop":
                parse_program_line(f"drop {value}", current.program)
            elif key == "out":
                current.out_rules.append(parse_output_rule(value))
            else:
                raise ValueError(f"unknown directive {key!r}")
        except SystemFileError:
            raise
        except ValueError as exc:
            raise SystemFileError(lineno, str(exc)) from exc

    if not blocks:
        raise SystemFileError(1, "no context blocks")
    pairs = [_build_context(b) for b in blocks]
    contexts, configs = zip(*pairs)
    spec = AMCSSpec(tuple(contexts), tuple(streams), frozenset(sensors))
    init = SystemConfiguration(tuple(configs), tuple(() for _ in streams))
    routes: dict[str, tuple[str, ...]] = {}
    for b in blocks:
        for s in b.inputs:
            if s not in sensors:
                raise SystemFileError(1, f"context {b.name} subscribes to undeclared sensor {s!r}")
            routes[s] = routes.get(s, ()) + (b.name,)
    return LoadedSystem(spec, init, routes)


def load_system(path) -> LoadedSystem:
    with open(path, encoding="utf-8") as fh:
        return loads_system(fh.read())


def loads_sensor_events(text: str, routes: dict[str, tuple[str, ...]]) -> list[SensorEvent]:
    events: list[SensorEvent] = []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("%", 1)[0].strip()
        if not line:
            continue
        fields: dict[str, str] = {}
        for chunk in line.split(None, 2):
            if "=" not in chunk:
                raise SystemFileError(lineno, f"malformed field {chunk!r}")
            k, v = chunk.split("=", 1)
            fields[k] = v
        for key in ("t", "sensor", "info"):
            if key not in fields:
                raise SystemFileError(lineno, f"sensor event missing {key}=")
        try:
            tick = int(fields["t"])
            infos = frozenset(parse_term_list(fields["info"]))
        except ValueError as exc:
            raise SystemFileError(lineno, str(exc)) from exc
        name = fields["sensor"]
        targets = routes.get(name)
        if not targets:
            raise SystemFileError(lineno, f"sensor {name!r} is not routed to any context")
        for target in targets:
            events.append(SensorEvent(tick, target, DataPackage(name, infos)))
    return events


def load_sensor_events(path, routes: dict[str, tuple[str, ...]]) -> list[SensorEvent]:
    with open(path, encoding="utf-8") as fh:
        return loads_sensor_events(fh.read(), routes)
