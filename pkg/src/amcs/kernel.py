"""Core domain types and the pure operations on them.

A system is a tuple of named contexts plus named output streams; contexts
exchange source-tagged data packages over buffers. Output rules decide,
per belief set, which information goes to which stakeholder. Everything
here is an immutable value and every operation is a pure function; the
clocked behaviour lives in :mod:`amcs.engine`.

Output rules may be written with variables (as convenient shorthand);
they are grounded against the belief set by pattern matching when the
output is computed. The ground-rule contract is `body_holds`.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Iterable, Iterator, Mapping

from .terms import (
    EOC,
    Pattern,
    Term,
    Var,
    canon_terms,
    is_ground,
    match,
    match_any,
    pattern_vars,
    render_term,
    substitute,
    substitute_partial,
)

__all__ = [
    "Violation",
    "check_name",
    "DataPackage",
    "Buffer",
    "OutputRule",
    "KnowledgeBase",
    "LogicSuite",
    "Context",
    "AMCSSpec",
    "ContextManagement",
    "ContextConfiguration",
    "SystemConfiguration",
    "body_holds",
    "rule_activations",
    "relout",
    "stakeholders",
    "validate_system",
]

_NAME_CHARS = set("abcdefghijklmnopqrstuvwxyz0123456789_")


def check_name(name: str) -> str:
    if not name or any(c not in _NAME_CHARS for c in name):
        raise ValueError(f"invalid name {name!r}: need nonempty [a-z0-9_]")
    return name


@dataclass(frozen=True, slots=True)
class Violation:
    """A broken run or system condition.

    ``condition`` is one of ``i``..``v`` (run conditions), ``suffix``
    (buffer-consumption rule) or ``def5`` (static system wellformedness).
    """

    condition: str
    time: int
    where: str
    message: str

    def __str__(self) -> str:
        return f"[{self.condition}] t={self.time} {self.where}: {self.message}"


@dataclass(frozen=True, slots=True)
class DataPackage:
    """A source-tagged, finite set of information pieces."""

    source: str
    infos: frozenset[Term]

    def __str__(self) -> str:
        return f"{self.source}:{{{','.join(render_term(t) for t in canon_terms(self.infos))}}}"


def package(source: str, infos: Iterable[Term]) -> DataPackage:
    return DataPackage(source, frozenset(infos))


Buffer = tuple[DataPackage, ...]


@dataclass(frozen=True)
class OutputRule:
    """``<stakeholder, head> <- pos, not neg``.

    ``head`` and body literals may contain variables; every variable in the
    head or in a negative literal must occur in some positive literal
    (anonymous ``_`` is allowed in negative literals). The head can never
    be the reserved end-of-computation atom.
    """

    stakeholder: str
    head: Pattern
    pos: tuple[Pattern, ...] = ()
    neg: tuple[Pattern, ...] = ()

    def __post_init__(self):
        check_name(self.stakeholder)
        if self.head == EOC:
            raise ValueError("an output rule may not produce the reserved eoc atom")
        bound = set()
        for p in self.pos:
            bound |= pattern_vars(p)
        unsafe = pattern_vars(self.head) - bound
        for n in self.neg:
            unsafe |= pattern_vars(n) - bound
        if unsafe:
            raise ValueError(f"unsafe variables {sorted(unsafe)} in output rule for {self.stakeholder}")

    def __str__(self) -> str:
        head = f"({self.stakeholder}, {render_term(self.head)})"
        body = [render_term(p) for p in self.pos] + [f"not {render_term(n)}" for n in self.neg]
        return head + (" :- " + ", ".join(body) if body else "")


def body_holds(rule: OutputRule, beliefs: frozenset[Term]) -> bool:
    """Ground-rule activation: positive body contained, negative body disjoint."""
    for p in rule.pos:
        if not is_ground(p):
            raise ValueError("body_holds is defined on ground rules")
        if p not in beliefs:
            return False
    return not any(match_any(n, beliefs) for n in rule.neg)


def _join(patterns: tuple[Pattern, ...], beliefs: frozenset[Term], binding: dict[str, Term]) -> Iterator[dict[str, Term]]:
    if not patterns:
        yield binding
        return
    first, rest = patterns[0], patterns[1:]
    for b in beliefs:
        nb = match(first, b, binding)
        if nb is not None:
            yield from _join(rest, beliefs, nb)


def rule_activations(rule: OutputRule, beliefs: frozenset[Term]) -> frozenset[Term]:
    """All ground heads the rule produces under the belief set."""
    heads: set[Term] = set()
    for binding in _join(rule.pos, beliefs, {}):
        if any(match_any(substitute_partial(n, binding), beliefs) for n in rule.neg):
            continue
        head = substitute(rule.head, binding) if pattern_vars(rule.head) else rule.head
        if not is_ground(head):
            raise ValueError(f"rule head {head} not ground after matching")
        if head == EOC:
            raise ValueError("output rules may not produce the reserved eoc atom")
        heads.add(head)  # type: ignore[arg-type]
    return frozenset(heads)


def relout(source: str, beliefs: frozenset[Term], rules: Iterable[OutputRule], stakeholder: str) -> DataPackage:
    """The output of ``source`` w.r.t. ``rules`` under ``beliefs`` for one stakeholder."""
    infos: set[Term] = set()
    for r in rules:
        if r.stakeholder == stakeholder:
            infos |= rule_activations(r, beliefs)
    return DataPackage(source, frozenset(infos))


def stakeholders(rules: Iterable[OutputRule]) -> frozenset[str]:
    """The distinct stakeholder names occurring in rule heads."""
    return frozenset(r.stakeholder for r in rules)


class KnowledgeBase:
    """Base class for formalism-specific knowledge bases.

    A knowledge base only has to expose the ground facts that make sense to
    serialize into a trace snapshot; anything else (rules, choice groups,
    scripted state) is opaque to the kernel.
    """

    def facts_view(self) -> frozenset[Term]:
        raise NotImplementedError


Semantics = Callable[[KnowledgeBase], list[frozenset[Term]]]


@dataclass(frozen=True)
class LogicSuite:
    """A formalism: admissible knowledge bases plus a catalog of semantics."""

    admissible: Callable[[KnowledgeBase], bool]
    semantics: Mapping[str, Semantics]

    def __post_init__(self):
        if not self.semantics:
            raise ValueError("a logic suite needs at least one semantics")


@dataclass(frozen=True)
class Context:
    name: str
    suite: LogicSuite

    def __post_init__(self):
        check_name(self.name)


@dataclass(frozen=True)
class AMCSSpec:
    """The static system: contexts, output-stream names, sensor names."""

    contexts: tuple[Context, ...]
    stream_names: tuple[str, ...] = ()
    sensor_names: frozenset[str] = frozenset()

    def __post_init__(self):
        if not self.contexts:
            raise ValueError("a system needs at least one context")

    @property
    def context_names(self) -> tuple[str, ...]:
        return tuple(c.name for c in self.contexts)

    def names(self) -> frozenset[str]:
        """names(M): context and output-stream names (sensors are outside)."""
        return frozenset(self.context_names) | frozenset(self.stream_names)

    def context_index(self, name: str) -> int:
        return self.context_names.index(name)


Controller = Callable[[KnowledgeBase, Buffer], bool]
Updater = Callable[["ContextConfiguration"], "ContextConfiguration"]


@dataclass(frozen=True)
class ContextManagement:
    """Computation controller, update function, and output rules of a context."""

    controller: Controller
    updater: Updater
    rules: tuple[OutputRule, ...] = ()


@dataclass(frozen=True)
class ContextConfiguration:
    kb: KnowledgeBase
    semantics_id: str
    buffer: Buffer
    management: ContextManagement


@dataclass(frozen=True)
class SystemConfiguration:
    """One configuration per context plus the content of every output stream."""

    contexts: tuple[ContextConfiguration, ...]
    streams: tuple[Buffer, ...] = ()


def validate_system(spec: AMCSSpec, init: SystemConfiguration) -> list[Violation]:
    """Static wellformedness of a system and its initial configuration.

    Violations are returned, never raised: distinct names across the shared
    namespace, rule stakeholders known, active semantics present in the
    suite, admissible knowledge bases, stream packages sourced by contexts.
    """
    if len(init.contexts) != len(spec.contexts):
        raise ValueError("configuration/context count mismatch")
    if len(init.streams) != len(spec.stream_names):
        raise ValueError("configuration/stream count mismatch")

    out: list[Violation] = []

    def bad(where: str, message: str):
        out.append(Violation("def5", 0, where, message))

    seen: set[str] = set()
    for name in (*spec.context_names, *spec.stream_names, *sorted(spec.sensor_names)):
        if name in seen:
            bad(name, "duplicate name in the shared context/stream/sensor namespace")
        seen.add(name)

    names = spec.names()
    for ctx, cfg in zip(spec.contexts, init.contexts):
        for r in cfg.management.rules:
            if r.stakeholder not in names:
                bad(ctx.name, f"output rule {r} names unknown stakeholder {r.stakeholder!r}")
        if cfg.semantics_id not in ctx.suite.semantics:
            bad(ctx.name, f"active semantics {cfg.semantics_id!r} not in the suite catalog")
        if not ctx.suite.admissible(cfg.kb):
            bad(ctx.name, "knowledge base not admissible for the context's suite")

    ctx_names = frozenset(spec.context_names)
    for stream_name, buf in zip(spec.stream_names, init.streams):
        for pkg in buf:
            if pkg.source not in ctx_names:
                bad(stream_name, f"stream package sourced by non-context {pkg.source!r}")
    return out
