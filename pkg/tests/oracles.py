"""Independent brute-force oracles used to cross-check the implementation.

These deliberately share no code with the engine paths they check: the
stable-model enumerator grounds a program and tests every subset of the
Herbrand base against the reduct fixpoint.
"""

from __future__ import annotations

import itertools

from amcs.formalisms import BUILTIN_PREDS, Rule, RuleKB
from amcs.terms import Term, Var, is_ground, match, pattern_vars, substitute


def _constants(kb: RuleKB) -> list[Term]:
    out: set[Term] = set()

    def walk(t):
        if isinstance(t, Var):
            return
        if not t.args:
            out.add(t)
        for a in t.args:
            walk(a)

    for f in kb.facts:
        for a in f.args:
            walk(a)
    for r in kb.rules:
        for p in (r.head, *r.pos, *r.neg):
            if not isinstance(p, Var):
                for a in p.args:
                    walk(a)
    return sorted(out, key=str)


def _is_builtin(p) -> bool:
    return not isinstance(p, Var) and p.functor in BUILTIN_PREDS and len(p.args) == 2


def _eval_builtin(t: Term) -> bool:
    from amcs.formalisms import _atom_sort_key  # same total order as the engine

    a, b = t.args
    ka, kb_ = _atom_sort_key(a), _atom_sort_key(b)
    return {
        "lt": ka < kb_,
        "le": ka <= kb_,
        "gt": ka > kb_,
        "ge": ka >= kb_,
        "eq": a == b,
        "neq": a != b,
    }[t.functor]


def ground_program(kb: RuleKB) -> list[tuple[Term, frozenset[Term], frozenset[Term]]]:
    """All ground instances of the rules over the program's constants."""
    consts = _constants(kb) or [Term("u")]
    grounded = []
    for r in kb.rules:
        vars_ = set()
        for p in (r.head, *r.pos, *r.neg):
            vars_ |= pattern_vars(p)
        names = sorted(vars_)
        for combo in itertools.product(consts, repeat=len(names)):
            binding = dict(zip(names, combo))
            pos, neg, ok = [], [], True
            for p in r.pos:
                g = substitute(p, binding) if pattern_vars(p) else p
                if _is_builtin(g):
                    if not _eval_builtin(g):
                        ok = False
                        break
                else:
                    pos.append(g)
            if not ok:
                continue
            for n in r.neg:
                neg.append(substitute(n, binding) if pattern_vars(n) else n)
            head = substitute(r.head, binding) if pattern_vars(r.head) else r.head
            grounded.append((head, frozenset(pos), frozenset(neg)))
    return grounded


def stable_models(kb: RuleKB) -> set[frozenset[Term]]:
    """Every stable model, by checking all subsets of the Herbrand base."""
    rules = ground_program(kb)
    base: set[Term] = set(kb.facts)
    for h, pos, neg in rules:
        base.add(h)
        base |= pos
        base |= neg
    atoms = sorted(base, key=str)
    if len(atoms) > 16:
        raise ValueError(f"oracle limited to 16 ground atoms, got {len(atoms)}")

    models: set[frozenset[Term]] = set()
    for k in range(len(atoms) + 1):
        for subset in itertools.combinations(atoms, k):
            cand = frozenset(subset) | kb.facts
            derived = set(kb.facts)
            changed = True
            while changed:
                changed = False
                for h, pos, neg in rules:
                    if neg & cand:
                        continue
                    if pos <= derived and h not in derived:
                        derived.add(h)
                        changed = True
            if frozenset(derived) == cand:
                models.add(cand)
    return models
