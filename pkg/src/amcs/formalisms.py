"""Concrete logic suites and the context-management policy library.

Three knowledge-base kinds instantiate the abstract suite interface:

* ``FactKB`` -- a plain fact store; its semantics returns the facts as the
  single belief set.
* ``RuleKB`` -- facts plus forward-chaining rules with stratified
  negation-as-failure; the semantics computes the perfect model.
* ``ChoiceKB`` -- a RuleKB extended with choice groups; one alternative per
  group is selected, giving one belief set per selection (the controllable
  multi-belief-set semantics).

Rule bodies may use the evaluable comparison predicates lt/le/gt/ge/eq/neq
over atoms (integer atoms compare numerically, everything else by canonical
text, integers before symbols). They are evaluated during grounding and
never stored.

The textual rule syntax, one statement per line::

    fact.
    head :- b1, b2, not b3.
    choice {a; b; c}.
    forget pattern.
    forget pattern if trigger.
    drop pattern if guard.

``forget`` rules delete matching facts at update time (unconditionally, or
for each incoming info matching the trigger, sharing variables). ``drop``
rules discard incoming infos whose guard matches an existing fact -- the
stale-input suppression hook.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, replace
from typing import Iterable, Iterator

from .kernel import (
    Buffer,
    ContextConfiguration,
    Controller,
    DataPackage,
    KnowledgeBase,
    LogicSuite,
    OutputRule,
    Updater,
)
from .terms import (
    EOC,
    Pattern,
    Term,
    Var,
    is_ground,
    match,
    match_any,
    parse_pattern,
    pattern_vars,
    render_term,
    substitute,
    substitute_partial,
)

__all__ = [
    "Rule",
    "FactKB",
    "RuleKB",
    "ChoiceKB",
    "StratificationError",
    "stratify",
    "factstore_semantics",
    "forward_chain",
    "enumerate_choices",
    "make_controller",
    "fresh_info_controller",
    "ForgetRule",
    "DropRule",
    "make_append_updater",
    "updater_append_facts",
    "ProgramSpec",
    "parse_program",
    "parse_program_line",
    "parse_output_rule",
    "fact_suite",
    "rule_suite",
    "choice_suite",
    "SEMANTICS",
    "register_semantics",
]

BUILTIN_PREDS = frozenset({"lt", "le", "gt", "ge", "eq", "neq"})


class StratificationError(ValueError):
    pass


@dataclass(frozen=True)
class Rule:
    """``head :- pos, not neg`` over patterns; checked safe at construction."""

    head: Pattern
    pos: tuple[Pattern, ...] = ()
    neg: tuple[Pattern, ...] = ()

    def __post_init__(self):
        bound: set[str] = set()
        for p in self.pos:
            if not isinstance(p, Var) and _pred(p) in _builtin_sigs():
                continue
            bound |= pattern_vars(p)
        unsafe = pattern_vars(self.head) - bound
        for n in self.neg:
            unsafe |= pattern_vars(n) - bound
        for p in self.pos:
            if not isinstance(p, Var) and _pred(p) in _builtin_sigs():
                unsafe |= pattern_vars(p) - bound
        if unsafe:
            raise ValueError(f"unsafe variables {sorted(unsafe)} in rule {self}")
        if isinstance(self.head, Var):
            raise ValueError("rule head must not be a bare variable")

    def __str__(self) -> str:
        body = [render_term(p) for p in self.pos] + [f"not {render_term(n)}" for n in self.neg]
        return render_term(self.head) + (" :- " + ", ".join(body) if body else "")


def _pred(p: Pattern) -> tuple[str, int]:
    if isinstance(p, Var):
        return ("", -1)  # bare-variable literal; never a builtin
    return (p.functor, len(p.args))


def _builtin_sigs() -> frozenset[tuple[str, int]]:
    return frozenset((name, 2) for name in BUILTIN_PREDS)


@dataclass(frozen=True)
class FactKB(KnowledgeBase):
    facts: frozenset[Term] = frozenset()

    def facts_view(self) -> frozenset[Term]:
        return self.facts

    def with_facts(self, facts: frozenset[Term]) -> "FactKB":
        return FactKB(facts)


@dataclass(frozen=True)
class RuleKB(KnowledgeBase):
    facts: frozenset[Term] = frozenset()
    rules: tuple[Rule, ...] = ()

    def __post_init__(self):
        for f in self.facts:
            if not is_ground(f):
                raise ValueError(f"non-ground fact {f}")

    def facts_view(self) -> frozenset[Term]:
        return self.facts

    def with_facts(self, facts: frozenset[Term]) -> "RuleKB":
        return RuleKB(facts, self.rules)


@dataclass(frozen=True)
class ChoiceKB(KnowledgeBase):
    base: RuleKB = RuleKB()
    groups: tuple[tuple[Term, ...], ...] = ()

    def __post_init__(self):
        if any(not g for g in self.groups):
            raise ValueError("choice groups must be nonempty")

    def facts_view(self) -> frozenset[Term]:
        return self.base.facts

    def with_facts(self, facts: frozenset[Term]) -> "ChoiceKB":
        return ChoiceKB(self.base.with_facts(facts), self.groups)


def stratify(rules: Iterable[Rule]) -> dict[tuple[str, int], int]:
    """Assign strata to head predicates; raises on recursion through negation."""
    rules = tuple(rules)
    builtins = _builtin_sigs()
    preds: set[tuple[str, int]] = set()
    for r in rules:
        preds.add(_pred(r.head))
        for p in (*r.pos, *r.neg):
            sig = _pred(p)
            if sig not in builtins:
                preds.add(sig)
    stratum = {p: 0 for p in preds}
    for _ in range(len(preds) + 1):
        changed = False
        for r in rules:
            h = _pred(r.head)
            for p in r.pos:
                sig = _pred(p)
                if sig not in builtins and stratum[h] < stratum[sig]:
                    stratum[h] = stratum[sig]
                    changed = True
            for n in r.neg:
                sig = _pred(n)
                if sig not in builtins and stratum[h] < stratum[sig] + 1:
                    stratum[h] = stratum[sig] + 1
                    changed = True
        if not changed:
            return stratum
    raise StratificationError("program is not stratifiable (recursion through negation)")


def _atom_sort_key(t: Term) -> tuple[int, object]:
    text = render_term(t)
    if not t.args and text.isdigit():
        return (0, int(text))
    return (1, text)


def _eval_builtin(name: str, a: Term, b: Term) -> bool:
    ka, kb = _atom_sort_key(a), _atom_sort_key(b)
    if name == "lt":
        return ka < kb
    if name == "le":
        return ka <= kb
    if name == "gt":
        return ka > kb
    if name == "ge":
        return ka >= kb
    if name == "eq":
        return a == b
    if name == "neq":
        return a != b
    raise ValueError(f"unknown builtin {name}")


def _body_bindings(rule: Rule, facts: set[Term]) -> Iterator[dict[str, Term]]:
    builtins = _builtin_sigs()
    joins = [p for p in rule.pos if _pred(p) not in builtins]
    checks = [p for p in rule.pos if _pred(p) in builtins]

    def rec(i: int, binding: dict[str, Term]) -> Iterator[dict[str, Term]]:
        if i == len(joins):
            for c in checks:
                ground = substitute(c, binding) if pattern_vars(c) else c
                if not _eval_builtin(ground.functor, ground.args[0], ground.args[1]):  # type: ignore[union-attr]
                    return
            for n in rule.neg:
                if match_any(substitute_partial(n, binding), facts):
                    return
            yield binding
            return
        for f in facts:
            nb = match(joins[i], f, binding)
            if nb is not None:
                yield from rec(i + 1, nb)

    yield from rec(0, {})


def factstore_semantics(kb: KnowledgeBase) -> list[frozenset[Term]]:
    """Identity semantics: the fact set is the single belief set."""
    return [kb.facts_view()]


def forward_chain(kb: KnowledgeBase) -> list[frozenset[Term]]:
    """Perfect model of a stratified program, as a single belief set.

    Strata are closed bottom-up; negation within a stratum only ever sees
    predicates that are already complete, so the naive fixpoint is exact.
    """
    if isinstance(kb, FactKB):
        return [kb.facts]
    assert isinstance(kb, RuleKB)
    strata = stratify(kb.rules)
    facts: set[Term] = set(kb.facts)
    levels = sorted({strata[_pred(r.head)] for r in kb.rules})
    for level in levels:
        layer = [r for r in kb.rules if strata[_pred(r.head)] == level]
        changed = True
        while changed:
            changed = False
            for r in layer:
                derived = [
                    substitute(r.head, binding) if pattern_vars(r.head) else r.head
                    for binding in _body_bindings(r, facts)
                ]
                for head in derived:
                    if head not in facts:
                        facts.add(head)  # type: ignore[arg-type]
                        changed = True
    return [frozenset(facts)]


def enumerate_choices(kb: KnowledgeBase) -> list[frozenset[Term]]:
    """One belief set per selection from the cross product of choice groups.

    Enumeration is lexicographic over (group index, alternative index);
    duplicate belief sets are removed keeping the first occurrence.
    """
    assert isinstance(kb, ChoiceKB)
    out: list[frozenset[Term]] = []
    seen: set[frozenset[Term]] = set()
    for selection in itertools.product(*kb.groups):
        augmented = RuleKB(kb.base.facts | frozenset(selection), kb.base.rules)
        (bs,) = forward_chain(augmented)
        if bs not in seen:
            seen.add(bs)
            out.append(bs)
    return out


# ---------------------------------------------------------------------------
# Controllers
# ---------------------------------------------------------------------------


def make_controller(policy: str, sources: Iterable[str] = ()) -> Controller:
    """Controller policies: always, nonempty_buffer, wait_for_sources, wait_for_eoc."""
    srcs = frozenset(sources)
    if policy == "always":
        return lambda kb, buf: True
    if policy == "nonempty_buffer":
        return lambda kb, buf: len(buf) > 0
    if policy in ("wait_for_sources", "wait_for_eoc"):
        if not srcs:
            raise ValueError(f"{policy} needs at least one source name")
        if policy == "wait_for_sources":
            return lambda kb, buf: all(any(p.source == s for p in buf) for s in srcs)
        return lambda kb, buf: all(any(p.source == s and EOC in p.infos for p in buf) for s in srcs)
    raise ValueError(f"unknown controller policy {policy!r}")


def fresh_info_controller(drops: tuple["DropRule", ...] = ()) -> Controller:
    """Compute only when the buffer holds information that is actually new.

    New means: not the eoc signal, not already a known fact, and not
    discarded by one of the context's drop rules. This is what lets
    request/response loops between contexts quiesce.
    """

    def controller(kb: KnowledgeBase, buf: Buffer) -> bool:
        facts = kb.facts_view()
        for pkg in buf:
            for info in pkg.infos:
                if info == EOC or info in facts:
                    continue
                if not _dropped(info, facts, drops):
                    return True
        return False

    return controller


# ---------------------------------------------------------------------------
# Updaters
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ForgetRule:
    pattern: Pattern
    trigger: Pattern | None = None


@dataclass(frozen=True)
class DropRule:
    pattern: Pattern
    guard: Pattern


def _dropped(info: Term, facts: frozenset[Term], drops: tuple[DropRule, ...]) -> bool:
    for d in drops:
        binding = match(d.pattern, info)
        if binding is not None and match_any(substitute_partial(d.guard, binding), facts):
            return True
    return False


def make_append_updater(forgets: tuple[ForgetRule, ...] = (), drops: tuple[DropRule, ...] = ()) -> Updater:
    """The standard update function: consume everything, filter, union.

    The whole buffer is consumed. Incoming infos are dropped if a drop rule
    fires against the current facts; the eoc signal is never stored. Forget
    rules then delete old facts (triggered rules bind against each incoming
    info), and the remaining incoming infos are unioned in. Semantics,
    controller and output rules are left unchanged.
    """

    def updater(cfg: ContextConfiguration) -> ContextConfiguration:
        kb = cfg.kb
        old = kb.facts_view()
        incoming: set[Term] = set()
        for pkg in cfg.buffer:
            for info in pkg.infos:
                if info != EOC and not _dropped(info, old, drops):
                    incoming.add(info)
        facts = set(old)
        for fr in forgets:
            if fr.trigger is None:
                facts -= {f for f in facts if match(fr.pattern, f) is not None}
            else:
                for info in incoming:
                    binding = match(fr.trigger, info)
                    if binding is not None:
                        pat = substitute_partial(fr.pattern, binding)
                        facts -= {f for f in facts if match(pat, f) is not None}
        facts |= incoming
        new_kb = kb.with_facts(frozenset(facts))  # type: ignore[attr-defined]
        return replace(cfg, kb=new_kb, buffer=())

    return updater


def updater_append_facts(
    cfg: ContextConfiguration,
    forgets: tuple[ForgetRule, ...] = (),
    drops: tuple[DropRule, ...] = (),
) -> ContextConfiguration:
    """One-shot form of :func:`make_append_updater` for direct calls."""
    return make_append_updater(forgets, drops)(cfg)


# ---------------------------------------------------------------------------
# Textual rule syntax
# ---------------------------------------------------------------------------


@dataclass
class ProgramSpec:
    """Everything a program text can declare for one context."""

    facts: set[Term]
    rules: list[Rule]
    groups: list[tuple[Term, ...]]
    forgets: list[ForgetRule]
    drops: list[DropRule]

    @staticmethod
    def empty() -> "ProgramSpec":
        return ProgramSpec(set(), [], [], [], [])


def _strip_statement(line: str) -> str | None:
    text = line.split("%", 1)[0].strip()
    if not text:
        return None
    if not text.endswith("."):
        raise ValueError(f"statement must end with '.': {line!r}")
    return text[:-1].strip()


def _split_body(body: str) -> list[str]:
    parts: list[str] = []
    depth = 0
    start = 0
    for i, c in enumerate(body):
        if c == "(":
            depth += 1
        elif c == ")":
            depth -= 1
        elif c == "," and depth == 0:
            parts.append(body[start:i])
            start = i + 1
    parts.append(body[start:])
    return [p.strip() for p in parts if p.strip()]


def _parse_literals(body: str) -> tuple[tuple[Pattern, ...], tuple[Pattern, ...]]:
    pos: list[Pattern] = []
    neg: list[Pattern] = []
    for lit in _split_body(body):
        if lit.startswith("not "):
            neg.append(parse_pattern(lit[4:].strip()))
        else:
            pos.append(parse_pattern(lit))
    return tuple(pos), tuple(neg)


def parse_program_line(text: str, into: ProgramSpec) -> None:
    stmt = _strip_statement(text)
    if stmt is None:
        return
    if stmt.startswith("choice"):
        rest = stmt[len("choice") :].strip()
        if not (rest.startswith("{") and rest.endswith("}")):
            raise ValueError(f"malformed choice group: {text!r}")
        alts = [a.strip() for a in rest[1:-1].split(";") if a.strip()]
        if not alts:
            raise ValueError(f"empty choice group: {text!r}")
        group = tuple(parse_pattern(a) for a in alts)
        if any(not is_ground(a) for a in group):
            raise ValueError(f"choice alternatives must be ground: {text!r}")
        into.groups.append(group)  # type: ignore[arg-type]
        return
    if stmt.startswith("forget "):
        rest = stmt[len("forget ") :]
        if " if " in rest:
            pat, trig = rest.split(" if ", 1)
            into.forgets.append(ForgetRule(parse_pattern(pat.strip()), parse_pattern(trig.strip())))
        else:
            into.forgets.append(ForgetRule(parse_pattern(rest.strip())))
        return
    if stmt.startswith("drop "):
        rest = stmt[len("drop ") :]
        if " if " not in rest:
            raise ValueError(f"drop rule needs an 'if' guard: {text!r}")
        pat, guard = rest.split(" if ", 1)
        into.drops.append(DropRule(parse_pattern(pat.strip()), parse_pattern(guard.strip())))
        return
    if ":-" in stmt:
        head_text, body = stmt.split(":-", 1)
        head = parse_pattern(head_text.strip())
        pos, neg = _parse_literals(body)
        into.rules.append(Rule(head, pos, neg))
        return
    fact = parse_pattern(stmt)
    if not is_ground(fact):
        raise ValueError(f"facts must be ground: {text!r}")
    into.facts.add(fact)  # type: ignore[arg-type]


def parse_program(text: str) -> ProgramSpec:
    spec = ProgramSpec.empty()
    for lineno, line in enumerate(text.splitlines(), start=1):
        try:
            parse_program_line(line, spec)
        except ValueError as exc:
            raise ValueError(f"line {lineno}: {exc}") from exc
    return spec


def parse_output_rule(text: str) -> OutputRule:
    """Parse ``(stakeholder, head) :- body.`` (body optional)."""
    stmt = _strip_statement(text)
    if stmt is None:
        raise ValueError("empty output rule")
    if ":-" in stmt:
        head_text, body = stmt.split(":-", 1)
        pos, neg = _parse_literals(body)
    else:
        head_text, pos, neg = stmt, (), ()
    head_text = head_text.strip()
    if not (head_text.startswith("(") and head_text.endswith(")")):
        raise ValueError(f"output rule head must be (stakeholder, term): {text!r}")
    inner = head_text[1:-1]
    if "," not in inner:
        raise ValueError(f"output rule head must be (stakeholder, term): {text!r}")
    stake, head_term = inner.split(",", 1)
    return OutputRule(stake.strip(), parse_pattern(head_term.strip()), pos, neg)


# ---------------------------------------------------------------------------
# Suites and the semantics registry
# ---------------------------------------------------------------------------


def _rule_admissible(kb: KnowledgeBase) -> bool:
    if not isinstance(kb, RuleKB):
        return False
    try:
        stratify(kb.rules)
    except StratificationError:
        return False
    return True


def _choice_admissible(kb: KnowledgeBase) -> bool:
    return isinstance(kb, ChoiceKB) and _rule_admissible(kb.base)


SEMANTICS: dict[str, "object"] = {
    "factstore": factstore_semantics,
    "stratified": forward_chain,
    "choice": enumerate_choices,
}


def register_semantics(name: str, fn) -> None:
    SEMANTICS[name] = fn


def fact_suite(extra_semantics: dict[str, object] | None = None) -> LogicSuite:
    catalog: dict = {"factstore": factstore_semantics}
    if extra_semantics:
        catalog.update(extra_semantics)
    return LogicSuite(lambda kb: isinstance(kb, FactKB), catalog)


def rule_suite() -> LogicSuite:
    return LogicSuite(_rule_admissible, {"stratified": forward_chain})


def choice_suite() -> LogicSuite:
    return LogicSuite(_choice_admissible, {"choice": enumerate_choices})
