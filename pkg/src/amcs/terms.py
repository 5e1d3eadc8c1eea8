"""Ground first-order terms: the concrete information language.

Everything that travels between contexts -- beliefs, buffer contents,
rule heads -- is a ground term over lowercase symbols: an atom like
``eoc`` or a compound like ``case(c1,l3,high)``. Patterns (terms with
uppercase variables and the anonymous ``_``) appear only inside rules
and filters; they never travel.

Canonical text form: no whitespace, arguments comma-separated. Parsing
is whitespace-insensitive and round-trips with rendering.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Iterator, Union

__all__ = [
    "Term",
    "Var",
    "Pattern",
    "EOC",
    "TermSyntaxError",
    "parse_term",
    "parse_pattern",
    "parse_term_list",
    "parse_pattern_list",
    "render_term",
    "canon_terms",
    "term_key",
    "match",
    "match_any",
    "substitute",
    "substitute_partial",
    "pattern_vars",
    "is_ground",
]


@dataclass(frozen=True, slots=True)
class Term:
    """A ground term: ``functor`` with zero or more ``Term`` arguments."""

    functor: str
    args: tuple["Term", ...] = ()

    def __str__(self) -> str:
        return render_term(self)


@dataclass(frozen=True, slots=True)
class Var:
    """A pattern variable. ``_`` is anonymous: matches anything, binds nothing."""

    name: str

    def __str__(self) -> str:
        return self.name


Pattern = Union[Term, Var]

EOC = Term("eoc")


class TermSyntaxError(ValueError):
    def __init__(self, message: str, column: int):
        super().__init__(f"{message} at column {column}")
        self.column = column


def render_term(t: Pattern) -> str:
    if isinstance(t, Var):
        return t.name
    if not t.args:
        return t.functor
    return f"{t.functor}({','.join(render_term(a) for a in t.args)})"


def term_key(t: Pattern) -> str:
    """Sort key giving the canonical total order on terms."""
    return render_term(t)


def canon_terms(terms: Iterable[Pattern]) -> tuple[Term, ...]:
    """Terms sorted into canonical order (used for all serialized output)."""
    return tuple(sorted(terms, key=term_key))


_SYMBOL_START = set("abcdefghijklmnopqrstuvwxyz0123456789")
_VAR_START = set("ABCDEFGHIJKLMNOPQRSTUVWXYZ")
# First character decides symbol vs variable ('_' alone is anonymous); both
# may continue mixed-case: predicates like queryA are symbols.
_SYMBOL_CHARS = _SYMBOL_START | _VAR_START | {"_"}
_VAR_CHARS = _VAR_START | _SYMBOL_START | {"_"}


class _Parser:
    def __init__(self, text: str, allow_vars: bool):
        self.text = text
        self.pos = 0
        self.allow_vars = allow_vars

    def error(self, message: str):
        raise TermSyntaxError(message, self.pos + 1)

    def skip_ws(self):
        while self.pos < len(self.text) and self.text[self.pos].isspace():
            self.pos += 1

    def peek(self) -> str:
        return self.text[self.pos] if self.pos < len(self.text) else ""

    def term(self) -> Pattern:
        self.skip_ws()
        c = self.peek()
        if c in _VAR_START:
            if not self.allow_vars:
                self.error("variables not allowed in a ground term")
            return Var(self._ident(_VAR_CHARS))
        if c == "_":
            if not self.allow_vars:
                self.error("variables not allowed in a ground term")
            self.pos += 1
            return Var("_")
        if c not in _SYMBOL_START:
            self.error("expected a term")
        functor = self._ident(_SYMBOL_CHARS)
        self.skip_ws()
        if self.peek() != "(":
            return Term(functor)
        self.pos += 1
        args = [self.term()]
        while True:
            self.skip_ws()
            c = self.peek()
            if c == ",":
                self.pos += 1
                args.append(self.term())
            elif c == ")":
                self.pos += 1
                return Term(functor, tuple(args))
            else:
                self.error("expected ',' or ')'")

    def _ident(self, charset: set[str]) -> str:
        start = self.pos
        while self.pos < len(self.text) and self.text[self.pos] in charset:
            self.pos += 1
        return self.text[start : self.pos]

    def term_list(self) -> list[Pattern]:
        self.skip_ws()
        if self.pos == len(self.text):
            return []
        terms = [self.term()]
        while True:
            self.skip_ws()
            if self.pos == len(self.text):
                return terms
            if self.peek() != ",":
                self.error("expected ',' between terms")
            self.pos += 1
            terms.append(self.term())

    def expect_end(self):
        self.skip_ws()
        if self.pos != len(self.text):
            self.error("unexpected trailing input")


def parse_term(text: str) -> Term:
    """Parse a single ground term; raises :class:`TermSyntaxError` on bad input."""
    p = _Parser(text, allow_vars=False)
    t = p.term()
    p.expect_end()
    assert isinstance(t, Term)
    return t


def parse_pattern(text: str) -> Pattern:
    """Parse a term that may contain variables."""
    p = _Parser(text, allow_vars=True)
    t = p.term()
    p.expect_end()
    return t


def parse_term_list(text: str) -> tuple[Term, ...]:
    """Parse a comma-separated list of ground terms (may be empty)."""
    p = _Parser(text, allow_vars=False)
    terms = p.term_list()
    p.expect_end()
    return tuple(terms)  # type: ignore[arg-type]


def parse_pattern_list(text: str) -> tuple[Pattern, ...]:
    p = _Parser(text, allow_vars=True)
    terms = p.term_list()
    p.expect_end()
    return tuple(terms)


def is_ground(t: Pattern) -> bool:
    if isinstance(t, Var):
        return False
    return all(is_ground(a) for a in t.args)


def pattern_vars(t: Pattern) -> set[str]:
    """Named variables occurring in a pattern (``_`` excluded)."""
    if isinstance(t, Var):
        return set() if t.name == "_" else {t.name}
    out: set[str] = set()
    for a in t.args:
        out |= pattern_vars(a)
    return out


def _match(p: Pattern, t: Term, binding: dict[str, Term]) -> bool:
    if isinstance(p, Var):
        if p.name == "_":
            return True
        bound = binding.get(p.name)
        if bound is None:
            binding[p.name] = t
            return True
        return bound == t
    if p.functor != t.functor or len(p.args) != len(t.args):
        return False
    return all(_match(pa, ta, binding) for pa, ta in zip(p.args, t.args))


def match(pattern: Pattern, term: Term, binding: dict[str, Term] | None = None) -> dict[str, Term] | None:
    """Match ``pattern`` against a ground ``term``.

    Returns the extended binding on success, ``None`` otherwise. The given
    binding is not mutated.
    """
    b = dict(binding) if binding else {}
    return b if _match(pattern, term, b) else None


def match_any(pattern: Pattern, terms: Iterable[Term], binding: dict[str, Term] | None = None) -> bool:
    """True iff some term in ``terms`` matches the pattern under ``binding``."""
    return any(match(pattern, t, binding) is not None for t in terms)


def substitute(pattern: Pattern, binding: dict[str, Term]) -> Term:
    """Instantiate a pattern to a ground term; every variable must be bound."""
    if isinstance(pattern, Var):
        if pattern.name == "_" or pattern.name not in binding:
            raise ValueError(f"unbound variable {pattern.name}")
        return binding[pattern.name]
    if not pattern.args:
        return pattern
    return Term(pattern.functor, tuple(substitute(a, binding) for a in pattern.args))


def substitute_partial(pattern: Pattern, binding: dict[str, Term]) -> Pattern:
    """Apply a binding, leaving unbound variables in place."""
    if isinstance(pattern, Var):
        return binding.get(pattern.name, pattern)
    if not pattern.args:
        return pattern
    return Term(pattern.functor, tuple(substitute_partial(a, binding) for a in pattern.args))  # type: ignore[misc]
