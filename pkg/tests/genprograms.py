"""Random stratified-program generation for oracle cross-checks."""

from __future__ import annotations

import random

from amcs.formalisms import ChoiceKB, Rule, RuleKB
from amcs.terms import Term


def random_stratified_kb(rng: random.Random, n_preds: int = 6, n_rules: int = 6, n_facts: int = 3) -> RuleKB:
    """A propositional stratified program over at most ``n_preds`` atoms.

    Stratifiable by construction: every atom gets a level; rule bodies use
    same-or-lower levels positively and strictly lower levels negatively.
    """
    atoms = [Term(f"p{i}") for i in range(n_preds)]
    level = {a: rng.randint(0, 2) for a in atoms}
    facts = set(rng.sample(atoms, k=min(n_facts, len(atoms))))
    rules = []
    for _ in range(n_rules):
        head = rng.choice(atoms)
        le = [a for a in atoms if a != head and level[a] <= level[head]]
        lt = [a for a in atoms if level[a] < level[head]]
        pos = tuple(rng.sample(le, k=rng.randint(0, min(2, len(le)))))
        lt = [a for a in lt if a not in pos]
        neg = tuple(rng.sample(lt, k=rng.randint(0, min(1, len(lt)))))
        rules.append(Rule(head, pos, neg))
    return RuleKB(frozenset(facts), tuple(rules))


def random_choice_kb(rng: random.Random) -> ChoiceKB:
    base = random_stratified_kb(rng, n_preds=4, n_rules=3, n_facts=1)
    extra = [Term(f"q{i}") for i in range(4)]
    groups = []
    for _ in range(rng.randint(0, 3)):
        size = rng.randint(1, 3)
        groups.append(tuple(rng.sample(extra, k=size)))
    return ChoiceKB(base, tuple(groups))
