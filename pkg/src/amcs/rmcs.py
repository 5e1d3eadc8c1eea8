"""Simulating a reactive multi-context system with an asynchronous one.

A :class:`SimpleRMCS` is a deliberately small reactive MCS: rule-based
contexts, ground bridge rules (add the head to the own knowledge base when
the body holds against the global belief tuple), and sensors with declared
observation vocabularies. Its equilibria -- tuples of belief sets, one per
context, each acceptable for its context's bridge-updated knowledge base --
are computed two ways:

* :func:`brute_force_equilibria` enumerates candidate tuples and checks
  the fixpoint condition directly;
* :func:`build_simulation` compiles the rMCS into an aMCS that computes
  the same set at runtime, with three contexts per rMCS context (knowledge
  store ``kb_*``, evaluation copy ``kbp_*``, management ``mgr_*``) plus an
  observation gateway ``obs``, a candidate generator ``guess`` and a
  comparator ``check`` feeding the ``equilibria`` output stream.

The generator enumerates every candidate eagerly as choice alternatives;
the comparator deduplicates and still sends the retry notifications of the
guess-and-check protocol, so the message flow mirrors the construction
even though no flow control depends on it. Confirmed equilibria appear on
the stream as packages of ``in(<context index>, <belief>)`` wrappers plus
an ``eq`` marker (the marker keeps all-empty equilibria detectable).
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, replace

from .engine import SensorEvent
from .formalisms import (
    ChoiceKB,
    FactKB,
    RuleKB,
    Rule,
    enumerate_choices,
    forward_chain,
    make_controller,
)
from .kernel import (
    AMCSSpec,
    Buffer,
    Context,
    ContextConfiguration,
    ContextManagement,
    DataPackage,
    KnowledgeBase,
    LogicSuite,
    OutputRule,
    SystemConfiguration,
)
from .terms import EOC, Term, Var, match, parse_pattern, parse_term, term_key

__all__ = [
    "BridgeLit",
    "BridgeRule",
    "RMCSContext",
    "SimpleRMCS",
    "UniverseTooLarge",
    "parse_rmcs",
    "load_rmcs",
    "candidate_universe",
    "candidate_count",
    "brute_force_equilibria",
    "build_simulation",
    "boot_events",
    "suggested_horizon",
    "extract_equilibria",
    "simulate_equilibria",
]

_RESERVED = ("obs", "guess", "check")
_MAX_ATOMS = 12


class UniverseTooLarge(ValueError):
    pass


@dataclass(frozen=True)
class BridgeLit:
    context: str
    atom: Term
    positive: bool = True


@dataclass(frozen=True)
class BridgeRule:
    head: Term
    body: tuple[BridgeLit, ...] = ()


@dataclass(frozen=True)
class RMCSContext:
    name: str
    kb: RuleKB | ChoiceKB
    bridges: tuple[BridgeRule, ...] = ()
    # (sensor name, possible observation atoms) pairs
    observes: tuple[tuple[str, tuple[Term, ...]], ...] = ()


@dataclass(frozen=True)
class SimpleRMCS:
    contexts: tuple[RMCSContext, ...] = ()
    sensors: tuple[str, ...] = ()

    def __post_init__(self):
        for ctx in self.contexts:
            if ctx.name in _RESERVED or ctx.name.startswith(("kb_", "kbp_", "mgr_")):
                raise ValueError(f"context name {ctx.name!r} is reserved by the simulation")
            for s, _ in ctx.observes:
                if s not in self.sensors:
                    raise ValueError(f"context {ctx.name} observes undeclared sensor {s!r}")

    def index(self, name: str) -> int:
        for i, ctx in enumerate(self.contexts):
            if ctx.name == name:
                return i
        raise KeyError(name)


# ---------------------------------------------------------------------------
# Semantics helpers
# ---------------------------------------------------------------------------


def _acc(ctx: RMCSContext, extra: frozenset[Term]) -> list[frozenset[Term]]:
    kb = ctx.kb
    if isinstance(kb, ChoiceKB):
        return enumerate_choices(replace(kb, base=kb.base.with_facts(kb.base.facts | extra)))
    return forward_chain(kb.with_facts(kb.facts | extra))


def _bridge_heads(ctx: RMCSContext) -> list[Term]:
    return sorted({r.head for r in ctx.bridges}, key=term_key)


def _obs_atoms(ctx: RMCSContext) -> list[Term]:
    atoms = {a for _, universe in ctx.observes for a in universe}
    return sorted(atoms, key=term_key)


def _check_universe(ctx: RMCSContext) -> None:
    atoms = set(ctx.kb.facts_view()) | set(_bridge_heads(ctx)) | set(_obs_atoms(ctx))
    if len(atoms) > _MAX_ATOMS:
        raise UniverseTooLarge(
            f"context {ctx.name}: {len(atoms)} base atoms exceed the bound of {_MAX_ATOMS}"
        )


def _subsets(items: list[Term]):
    for mask in range(1 << len(items)):
        yield frozenset(items[j] for j in range(len(items)) if mask >> j & 1)


def candidate_universe(ctx: RMCSContext) -> list[frozenset[Term]]:
    """Every belief set the context can have under any bridge-update and
    any combination of declared observations; order is deterministic."""
    _check_universe(ctx)
    heads, obs = _bridge_heads(ctx), _obs_atoms(ctx)
    out: list[frozenset[Term]] = []
    seen: set[frozenset[Term]] = set()
    for h in _subsets(heads):
        for o in _subsets(obs):
            for bs in _acc(ctx, h | o):
                if bs not in seen:
                    seen.add(bs)
                    out.append(bs)
    return out


def candidate_count(m: SimpleRMCS) -> int:
    total = 1
    for ctx in m.contexts:
        total *= len(candidate_universe(ctx))
    return total


def _bridge_active(rule: BridgeRule, m: SimpleRMCS, tuple_: tuple[frozenset[Term], ...]) -> bool:
    for lit in rule.body:
        present = lit.atom in tuple_[m.index(lit.context)]
        if present != lit.positive:
            return False
    return True


def brute_force_equilibria(
    m: SimpleRMCS, obs: dict[str, frozenset[Term]] | None = None
) -> set[tuple[frozenset[Term], ...]]:
    """Exhaustive equilibrium enumeration.

    A candidate tuple is an equilibrium iff every component is an
    acceptable belief set of its context's knowledge base extended by the
    observations and by the heads of the bridge rules active under the
    tuple.
    """
    obs = obs or {}
    for sensor in obs:
        if sensor not in m.sensors:
            raise ValueError(f"observation for undeclared sensor {sensor!r}")
    obs_for: list[frozenset[Term]] = []
    candidates: list[list[frozenset[Term]]] = []
    for ctx in m.contexts:
        _check_universe(ctx)
        o: set[Term] = set()
        for sensor, universe in ctx.observes:
            got = obs.get(sensor, frozenset())
            extra = got - frozenset(universe)
            if extra:
                raise ValueError(
                    f"observations {sorted(map(str, extra))} outside the declared vocabulary of {sensor!r}"
                )
            o |= got
        obs_for.append(frozenset(o))
        heads = _bridge_heads(ctx)
        cands: list[frozenset[Term]] = []
        seen: set[frozenset[Term]] = set()
        for h in _subsets(heads):
            for bs in _acc(ctx, h | frozenset(o)):
                if bs not in seen:
                    seen.add(bs)
                    cands.append(bs)
        candidates.append(cands)

    equilibria: set[tuple[frozenset[Term], ...]] = set()
    for combo in itertools.product(*candidates):
        ok = True
        for i, ctx in enumerate(m.contexts):
            active = frozenset(r.head for r in ctx.bridges if _bridge_active(r, m, combo))
            if combo[i] not in _acc(ctx, active | obs_for[i]):
                ok = False
                break
        if ok:
            equilibria.add(combo)
    return equilibria


# ---------------------------------------------------------------------------
# The aMCS construction
# ---------------------------------------------------------------------------


def _int_atom(n: int) -> Term:
    return Term(str(n))


def _forward(stake: str) -> OutputRule:
    return OutputRule(stake, Var("V"), (Var("V"),), ())


def _fact_suite_with(sem_id: str, fn) -> LogicSuite:
    return LogicSuite(lambda kb: isinstance(kb, FactKB), {sem_id: fn})


def _consume_all_keep_facts(cfg: ContextConfiguration) -> ContextConfiguration:
    return replace(cfg, buffer=())


def _gate_go(kb: KnowledgeBase, buf: Buffer) -> bool:
    go = parse_pattern("go(_)")
    return any(match(go, info) is not None for pkg in buf for info in pkg.infos)


def _term_int(t: Term) -> int:
    return int(t.functor)


def build_simulation(m: SimpleRMCS) -> tuple[AMCSSpec, SystemConfiguration]:
    """Compile the rMCS into an aMCS that computes its equilibria.

    The emitted system has ``3n + 3`` contexts and the single output
    stream ``equilibria``; it passes the static validator for every valid
    input.
    """
    n = len(m.contexts)
    kb_names = [f"kb_{c.name}" for c in m.contexts]
    kbp_names = [f"kbp_{c.name}" for c in m.contexts]
    mgr_names = [f"mgr_{c.name}" for c in m.contexts]
    universes = [candidate_universe(c) for c in m.contexts]

    pairs: list[tuple[Context, ContextConfiguration]] = []

    # --- kb_i: stores the current knowledge base, pushes it on demand ----
    commit_pat = parse_pattern("commit(_)")
    go_pat = parse_pattern("go(_)")
    for i, ctx in enumerate(m.contexts):
        def kb_gate(kb, buf):
            for pkg in buf:
                for info in pkg.infos:
                    if match(commit_pat, info) is not None or match(go_pat, info) is not None:
                        return True
            return False

        def kb_update(cfg: ContextConfiguration) -> ContextConfiguration:
            # At most one commit wave per computation: every commit must be
            # answered by its own push so managers can count them.
            cut = len(cfg.buffer)
            for j, pkg in enumerate(cfg.buffer):
                if any(match(commit_pat, info) is not None for info in pkg.infos):
                    cut = j + 1
                    break
            consumed, rest = cfg.buffer[:cut], cfg.buffer[cut:]
            committed = [
                info.args[0]
                for pkg in consumed
                for info in pkg.infos
                if match(commit_pat, info) is not None
            ]
            kb = FactKB(frozenset(committed)) if committed else cfg.kb
            return replace(cfg, kb=kb, buffer=rest)

        rules = (
            OutputRule(mgr_names[i], Term("kbload"), (), ()),
            OutputRule(mgr_names[i], parse_pattern("kbf(F)"), (Var("F"),), ()),
            OutputRule("guess", Term("kbready", (_int_atom(i + 1),)), (), ()),
        )
        cfg = ContextConfiguration(
            FactKB(ctx.kb.facts_view()),
            "factstore",
            (DataPackage("boot", frozenset({parse_term("go(0)")})),),
            ContextManagement(kb_gate, kb_update, rules),
        )
        pairs.append((Context(kb_names[i], _fact_suite_with("factstore", lambda kb: [kb.facts_view()])), cfg))

    # --- kbp_i: evaluates candidate knowledge bases ----------------------
    for i, ctx in enumerate(m.contexts):
        mgr_name = mgr_names[i]

        def kbp_gate(kb, buf, _mgr=mgr_name):
            return any(p.source == _mgr and Term("load") in p.infos for p in buf)

        def kbp_load(cfg: ContextConfiguration, _mgr=mgr_name) -> ContextConfiguration:
            fact = parse_pattern("fact(_)")
            cut = None
            for j, pkg in enumerate(cfg.buffer):
                if pkg.source == _mgr and Term("load") in pkg.infos:
                    cut = j
                    break
            if cut is None:
                return replace(cfg, buffer=())
            loaded = frozenset(
                info.args[0] for info in cfg.buffer[cut].infos if match(fact, info) is not None
            )
            return replace(cfg, kb=cfg.kb.with_facts(loaded), buffer=cfg.buffer[cut + 1 :])

        if isinstance(ctx.kb, ChoiceKB):
            suite = LogicSuite(lambda kb: isinstance(kb, ChoiceKB), {"choice": enumerate_choices})
            kb0: KnowledgeBase = replace(ctx.kb, base=ctx.kb.base.with_facts(frozenset()))
            sem_id = "choice"
        else:
            suite = LogicSuite(lambda kb: isinstance(kb, RuleKB), {"stratified": forward_chain})
            kb0 = ctx.kb.with_facts(frozenset())
            sem_id = "stratified"
        mgmt = ContextManagement(kbp_gate, kbp_load, (_forward("check"),))
        pairs.append((Context(kbp_names[i], suite), ContextConfiguration(kb0, sem_id, (), mgmt)))

    # --- mgr_i: applies bridge rules and management ----------------------
    #
    # Arriving work is queued inside the knowledge base and dispatched one
    # item per computation: candidates as cqm/cqi facts, confirmations as
    # sq facts. Candidates are only dispatched while no commit of ours is
    # still waiting for the store's answering push (awaitkb counter), so a
    # new guessing round can never run against a stale knowledge base.
    for i, ctx in enumerate(m.contexts):
        rules = [
            Rule(parse_pattern("tokb(F)"), (parse_pattern("kbf(F)"), Term("hascand")), ()),
            Rule(parse_pattern("tokb(F)"), (parse_pattern("obsf(F)"), Term("hascand")), ()),
            Rule(
                parse_pattern("commitf(F)"),
                (parse_pattern("success(R)"), parse_pattern("hold(R,F)")),
                (),
            ),
        ]
        for br in ctx.bridges:
            pos = [Term("hascand")]
            neg = []
            for lit in br.body:
                wrapped = Term("in", (_int_atom(m.index(lit.context) + 1), lit.atom))
                (pos if lit.positive else neg).append(wrapped)
            rules.append(Rule(Term("tokb", (br.head,)), tuple(pos), tuple(neg)))

        def _mgr_counter(facts: set[Term], name: str) -> int:
            pat = parse_pattern(f"{name}(_)")
            (fact,) = [f for f in facts if match(pat, f) is not None]
            return _term_int(fact.args[0])

        def _mgr_set_counter(facts: set[Term], name: str, value: int) -> None:
            pat = parse_pattern(f"{name}(_)")
            facts -= {f for f in facts if match(pat, f) is not None}
            facts.add(Term(name, (_int_atom(value),)))

        def mgr_gate(kb, buf):
            for pkg in buf:
                if pkg.source == "guess" and pkg.infos != frozenset({EOC}):
                    return True
                if pkg.infos - frozenset({EOC}):
                    return True
            facts = kb.facts_view()
            sq = parse_pattern("sq(_)")
            if any(match(sq, f) is not None for f in facts):
                return True
            cqm = parse_pattern("cqm(_)")
            if not any(match(cqm, f) is not None for f in facts):
                return False
            await_pat = parse_pattern("awaitkb(_)")
            (cnt,) = [f for f in facts if match(await_pat, f) is not None]
            return _term_int(cnt.args[0]) == 0

        def mgr_update(cfg: ContextConfiguration) -> ContextConfiguration:
            kbf_pat, obsf_pat = parse_pattern("kbf(_)"), parse_pattern("obsf(_)")
            in_pat, hold_pat = parse_pattern("in(_,_)"), parse_pattern("hold(_,_)")
            succ_pat = parse_pattern("success(_)")
            cqm_pat, cqi_pat = parse_pattern("cqm(_)"), parse_pattern("cqi(_,_,_)")
            sq_pat = parse_pattern("sq(_)")
            facts = set(cfg.kb.facts_view())
            facts -= {f for f in facts if match(in_pat, f) is not None}
            facts.discard(Term("hascand"))
            facts -= {f for f in facts if match(succ_pat, f) is not None}

            obs_wave = False
            kbf_wave: list[Term] | None = None
            obsf_wave: list[Term] = []
            for pkg in cfg.buffer:
                if pkg.source == "guess" and pkg.infos != frozenset({EOC}):
                    seq = _mgr_counter(facts, "cqtop") + 1
                    _mgr_set_counter(facts, "cqtop", seq)
                    facts.add(Term("cqm", (_int_atom(seq),)))
                    for info in pkg.infos:
                        if match(in_pat, info) is not None:
                            facts.add(Term("cqi", (_int_atom(seq), *info.args)))
                    continue
                if Term("kbload") in pkg.infos:
                    pending = _mgr_counter(facts, "awaitkb")
                    if pending > 0:
                        _mgr_set_counter(facts, "awaitkb", pending - 1)
                    kbf_wave = [info for info in pkg.infos if match(kbf_pat, info) is not None]
                    continue
                if Term("obspush") in pkg.infos:
                    obs_wave = True
                    obsf_wave = [info for info in pkg.infos if match(obsf_pat, info) is not None]
                    continue
                for info in pkg.infos:
                    if info == EOC:
                        continue
                    if match(obsf_pat, info) is not None:
                        obsf_wave.append(info)
                        obs_wave = True
                    elif match(hold_pat, info) is not None:
                        facts.add(info)
                    elif match(succ_pat, info) is not None:
                        facts.add(Term("sq", (info.args[0],)))
            if kbf_wave is not None:
                facts -= {f for f in facts if match(kbf_pat, f) is not None}
                facts.update(kbf_wave)
            if obs_wave:
                facts -= {f for f in facts if match(obsf_pat, f) is not None}
                facts.update(obsf_wave)

            # dispatch: one confirmation, else one candidate when in sync
            sqs = sorted((f for f in facts if match(sq_pat, f) is not None), key=lambda f: _term_int(f.args[0]))
            if sqs:
                head = sqs[0]
                facts.discard(head)
                r = head.args[0]
                facts.add(Term("success", (r,)))
                if any(match(parse_pattern(f"hold({_term_int(r)},_)"), f) is not None for f in facts):
                    _mgr_set_counter(facts, "awaitkb", _mgr_counter(facts, "awaitkb") + 1)
            elif _mgr_counter(facts, "awaitkb") == 0:
                cqms = sorted((f for f in facts if match(cqm_pat, f) is not None), key=lambda f: _term_int(f.args[0]))
                if cqms:
                    head = cqms[0]
                    seq = _term_int(head.args[0])
                    facts.discard(head)
                    for f in list(facts):
                        if match(cqi_pat, f) is not None and _term_int(f.args[0]) == seq:
                            facts.discard(f)
                            facts.add(Term("in", (f.args[1], f.args[2])))
                    _mgr_set_counter(facts, "rnd", _mgr_counter(facts, "rnd") + 1)
                    facts.add(Term("hascand"))
            return replace(cfg, kb=cfg.kb.with_facts(frozenset(facts)), buffer=())

        def mgr_sem(kb: KnowledgeBase) -> list[frozenset[Term]]:
            (bs,) = forward_chain(kb)
            succ = parse_pattern("success(_)")
            if Term("hascand") in bs or any(match(succ, f) is not None for f in bs):
                return [bs]
            return []

        out_rules = (
            OutputRule(kbp_names[i], Term("load"), (Term("hascand"),), ()),
            OutputRule(kbp_names[i], parse_pattern("fact(F)"), (parse_pattern("tokb(F)"),), ()),
            OutputRule(mgr_names[i], parse_pattern("hold(K,F)"), (parse_pattern("tokb(F)"), parse_pattern("rnd(K)")), ()),
            OutputRule(kb_names[i], parse_pattern("commit(F)"), (parse_pattern("commitf(F)"),), ()),
        )
        suite = LogicSuite(lambda kb: isinstance(kb, RuleKB), {"mgr": mgr_sem})
        kb0 = RuleKB(
            frozenset({parse_term("rnd(0)"), parse_term("cqtop(0)"), parse_term("awaitkb(0)")}),
            tuple(rules),
        )
        mgmt = ContextManagement(mgr_gate, mgr_update, out_rules)
        pairs.append((Context(mgr_names[i], suite), ContextConfiguration(kb0, "mgr", (), mgmt)))

    pairs.extend(_build_obs(m, mgr_names))
    pairs.extend(_build_guess(m, universes, mgr_names))
    pairs.extend(_build_check(m, kbp_names, mgr_names))

    contexts, configs = zip(*pairs)
    spec = AMCSSpec(
        tuple(contexts),
        ("equilibria",),
        frozenset(m.sensors) | frozenset({"boot"}),
    )
    init = SystemConfiguration(tuple(configs), ((),))
    return spec, init


def _build_obs(m: SimpleRMCS, mgr_names: list[str]):
    sensors = m.sensors
    observers: dict[str, list[int]] = {s: [] for s in sensors}
    for i, ctx in enumerate(m.contexts):
        for s, _ in ctx.observes:
            observers[s].append(i)

    def obs_gate(kb: KnowledgeBase, buf: Buffer) -> bool:
        facts = kb.facts_view()
        fresh_queue = any(p.source in sensors for p in buf)
        roundend = parse_pattern("roundend(_)")
        has_roundend = any(match(roundend, i) is not None for p in buf for i in p.infos)
        never_released = parse_term("nround(0)") in facts
        pending = Term("pendingrel") in facts
        return has_roundend or (fresh_queue and (never_released or pending))

    def obs_update(cfg: ContextConfiguration) -> ContextConfiguration:
        facts = set(cfg.kb.facts_view())
        qm_pat = parse_pattern("obsqm(_,_)")
        roundend = parse_pattern("roundend(_)")
        # ingest
        release_requested = False
        for pkg in cfg.buffer:
            if pkg.source in sensors:
                seqs = [
                    _term_int(f.args[1])
                    for f in facts
                    if match(qm_pat, f) is not None and f.args[0] == Term(pkg.source)
                ]
                seq = max(seqs, default=0) + 1
                facts.add(Term("obsqm", (Term(pkg.source), _int_atom(seq))))
                for info in pkg.infos:
                    if info != EOC:
                        facts.add(Term("obsq", (Term(pkg.source), _int_atom(seq), info)))
            elif any(match(roundend, i) is not None for i in pkg.infos):
                release_requested = True
        (nround,) = [f for f in facts if match(parse_pattern("nround(_)"), f) is not None]
        never_released = nround == parse_term("nround(0)")
        pending = Term("pendingrel") in facts
        facts.discard(Term("pendingrel"))
        # clear the previous release payload
        for pat in ("torel(_,_)", "newround(_)"):
            p = parse_pattern(pat)
            facts -= {f for f in facts if match(p, f) is not None}

        want_release = release_requested or never_released or pending
        if want_release:
            advanced = False
            rel_pat = parse_pattern("obsrel(_,_)")
            for s in sensors:
                rel = [f for f in facts if match(rel_pat, f) is not None and f.args[0] == Term(s)]
                upto = max((_term_int(f.args[1]) for f in rel), default=0)
                nxt = upto + 1
                if Term("obsqm", (Term(s), _int_atom(nxt))) in facts:
                    facts -= set(rel)
                    facts.add(Term("obsrel", (Term(s), _int_atom(nxt))))
                    advanced = True
            if advanced:
                # push the currently released observation state per observer;
                # the obspush marker lets managers replace (even clear) theirs
                q_pat = parse_pattern("obsq(_,_,_)")
                rel_pat2 = parse_pattern("obsrel(_,_)")
                for i in range(len(m.contexts)):
                    facts.add(Term("torel", (_int_atom(i + 1), Term("obspush"))))
                released = {
                    f.args[0].functor: _term_int(f.args[1])
                    for f in facts
                    if match(rel_pat2, f) is not None
                }
                for s, upto in released.items():
                    for f in list(facts):
                        if match(q_pat, f) is not None and f.args[0] == Term(s) and _term_int(f.args[1]) == upto:
                            for i in observers.get(s, []):
                                facts.add(Term("torel", (_int_atom(i + 1), Term("obsf", (f.args[2],)))))
                k = _term_int(nround.args[0]) + 1
                facts.discard(nround)
                facts.add(Term("nround", (_int_atom(k),)))
                facts.add(Term("newround", (_int_atom(k),)))
            elif release_requested:
                facts.add(Term("pendingrel"))
        return replace(cfg, kb=FactKB(frozenset(facts)), buffer=())

    def obs_sem(kb: KnowledgeBase) -> list[frozenset[Term]]:
        facts = kb.facts_view()
        if any(match(parse_pattern("newround(_)"), f) is not None for f in facts):
            return [facts]
        return []

    out_rules = [OutputRule("guess", parse_pattern("go(K)"), (parse_pattern("newround(K)"),), ())]
    for i, name in enumerate(mgr_names):
        out_rules.append(
            OutputRule(name, Var("F"), (Term("torel", (_int_atom(i + 1), Var("F"))),), ())
        )
    mgmt = ContextManagement(obs_gate, obs_update, tuple(out_rules))
    cfg = ContextConfiguration(FactKB(frozenset({parse_term("nround(0)")})), "obs", (), mgmt)
    suite = LogicSuite(lambda kb: isinstance(kb, FactKB), {"obs": obs_sem})
    return [(Context("obs", suite), cfg)]


def _build_guess(m: SimpleRMCS, universes: list[list[frozenset[Term]]], mgr_names: list[str]):
    groups = []
    rules = []
    for i, universe in enumerate(universes):
        group = tuple(Term("cnd", (_int_atom(i + 1), _int_atom(k + 1))) for k in range(len(universe)))
        groups.append(group)
        for k, bs in enumerate(universe):
            for b in sorted(bs, key=term_key):
                rules.append(Rule(Term("in", (_int_atom(i + 1), b)), (group[k],), ()))

    out_rules = [
        OutputRule("check", parse_pattern("cnd(I,K)"), (parse_pattern("cnd(I,K)"),), ()),
        OutputRule("check", parse_pattern("in(J,B)"), (parse_pattern("in(J,B)"),), ()),
    ]
    for name in mgr_names:
        out_rules.append(OutputRule(name, parse_pattern("in(J,B)"), (parse_pattern("in(J,B)"),), ()))

    n = len(m.contexts)
    ready_pat = parse_pattern("kbready(_)")

    def guess_gate(kb: KnowledgeBase, buf: Buffer) -> bool:
        # Guess only once every knowledge store has pushed its content, so
        # candidates can never overtake the stores' boot pushes.
        if not _gate_go(kb, buf):
            return False
        ready = {f for f in kb.facts_view() if match(ready_pat, f) is not None}
        for pkg in buf:
            ready |= {i for i in pkg.infos if match(ready_pat, i) is not None}
        return len(ready) >= n

    def guess_update(cfg: ContextConfiguration) -> ContextConfiguration:
        ready = [i for pkg in cfg.buffer for i in pkg.infos if match(ready_pat, i) is not None]
        kb = cfg.kb
        if ready:
            kb = kb.with_facts(kb.facts_view() | frozenset(ready))
        return replace(cfg, kb=kb, buffer=())

    kb = ChoiceKB(RuleKB(frozenset(), tuple(rules)), tuple(groups))
    suite = LogicSuite(lambda k: isinstance(k, ChoiceKB), {"choice": enumerate_choices})
    buffer: Buffer = ()
    # The degenerate system with no contexts has nothing to guess; its
    # stream stays empty even though the vacuous tuple is an equilibrium.
    gate = guess_gate if m.contexts else (lambda kb, buf: False)
    if not m.sensors and m.contexts:
        buffer = (DataPackage("boot", frozenset({parse_term("go(0)")})),)
    cfg = ContextConfiguration(kb, "choice", buffer, ContextManagement(gate, guess_update, tuple(out_rules)))
    return [(Context("guess", suite), cfg)]


def _build_check(m: SimpleRMCS, kbp_names: list[str], mgr_names: list[str]):
    n = len(m.contexts)
    kbp_index = {name: i for i, name in enumerate(kbp_names)}

    def ints(fact: Term, *pos: int) -> tuple[int, ...]:
        return tuple(_term_int(fact.args[p]) for p in pos)

    def check_update(cfg: ContextConfiguration) -> ContextConfiguration:
        facts = set(cfg.kb.facts_view())

        def one(pattern: str) -> Term:
            p = parse_pattern(pattern)
            (f,) = [x for x in facts if match(p, x) is not None]
            return f

        def bump(fact: Term, name: str, args: tuple[Term, ...]) -> Term:
            facts.discard(fact)
            new = Term(name, args)
            facts.add(new)
            return new

        for pat in ("fresh(_)", "gfresh(_)"):
            p = parse_pattern(pat)
            facts -= {f for f in facts if match(p, f) is not None}

        in_pat = parse_pattern("in(_,_)")
        for pkg in cfg.buffer:
            if pkg.source == "guess":
                if pkg.infos == frozenset({EOC}):
                    g = one("geoc(_)")
                    gc = one("gcnt(_)")
                    new_g = _term_int(g.args[0]) + 1
                    bump(g, "geoc", (_int_atom(new_g),))
                    facts.add(Term("glast", (_int_atom(new_g), gc.args[0])))
                else:
                    gc = one("gcnt(_)")
                    r = _term_int(gc.args[0]) + 1
                    bump(gc, "gcnt", (_int_atom(r),))
                    facts.add(Term("candc", (_int_atom(r),)))
                    for info in pkg.infos:
                        if match(in_pat, info) is not None:
                            facts.add(Term("candin", (_int_atom(r), *info.args)))
            elif pkg.source in kbp_index:
                i = kbp_index[pkg.source]
                if pkg.infos == frozenset({EOC}):
                    rr = one(f"resround({i},_)")
                    r = _term_int(rr.args[1]) + 1
                    bump(rr, "resround", (_int_atom(i), _int_atom(r)))
                    cur_pat = parse_pattern(f"curres({i},_,_)")
                    curbs_pat = parse_pattern(f"curbs({i},_)")
                    for f in list(facts):
                        if match(curbs_pat, f) is not None:
                            facts.discard(f)
                            facts.add(Term("resbs", (_int_atom(i), _int_atom(r), f.args[1])))
                        elif match(cur_pat, f) is not None:
                            facts.discard(f)
                            facts.add(Term("res", (_int_atom(i), _int_atom(r), f.args[1], f.args[2])))
                else:
                    curbs_pat = parse_pattern(f"curbs({i},_)")
                    s = max(
                        (_term_int(f.args[1]) for f in facts if match(curbs_pat, f) is not None),
                        default=0,
                    ) + 1
                    facts.add(Term("curbs", (_int_atom(i), _int_atom(s))))
                    for info in pkg.infos:
                        if info != EOC:
                            facts.add(Term("curres", (_int_atom(i), _int_atom(s), info)))

        # newly complete candidate rounds
        done_pat = parse_pattern("done(_)")
        done = {ints(f, 0)[0] for f in facts if match(done_pat, f) is not None}
        gcnt = _term_int(one("gcnt(_)").args[0])
        res_done = []
        for i in range(n):
            rr = one(f"resround({i},_)")
            res_done.append(_term_int(rr.args[1]))
        for r in range(1, gcnt + 1):
            if r in done:
                continue
            if Term("candc", (_int_atom(r),)) in facts and all(res_done[i] >= r for i in range(n)):
                facts.add(Term("done", (_int_atom(r),)))
                facts.add(Term("fresh", (_int_atom(r),)))
                done.add(r)

        # newly complete guess rounds
        gdone_pat = parse_pattern("gdone(_)")
        gdone = {ints(f, 0)[0] for f in facts if match(gdone_pat, f) is not None}
        glast_pat = parse_pattern("glast(_,_)")
        prev_last = 0
        for f in sorted((x for x in facts if match(glast_pat, x) is not None), key=lambda x: _term_int(x.args[0])):
            g, last = ints(f, 0, 1)
            first = prev_last + 1
            prev_last = last
            if g in gdone:
                continue
            if all(r in done for r in range(first, last + 1)):
                facts.add(Term("gdone", (_int_atom(g),)))
                facts.add(Term("gfresh", (_int_atom(g),)))
                gdone.add(g)
        return replace(cfg, kb=FactKB(frozenset(facts)), buffer=())

    def check_sem(kb: KnowledgeBase) -> list[frozenset[Term]]:
        facts = kb.facts_view()

        def collect(pattern: str):
            p = parse_pattern(pattern)
            return [f for f in facts if match(p, f) is not None]

        out: list[frozenset[Term]] = []
        fresh = sorted((_term_int(f.args[0]) for f in collect("fresh(_)")))
        for r in fresh:
            cand = [set() for _ in range(n)]
            for f in collect(f"candin({r},_,_)"):
                cand[_term_int(f.args[1]) - 1].add(f.args[2])
            ok = True
            for i in range(n):
                sets = {}
                for f in collect(f"resbs({i},{r},_)"):
                    sets[_term_int(f.args[2])] = set()
                for f in collect(f"res({i},{r},_,_)"):
                    sets[_term_int(f.args[2])].add(f.args[3])
                if not any(cand[i] == s for s in sets.values()):
                    ok = False
                    break
            if ok:
                bs = {Term("eq"), Term("success", (_int_atom(r),))}
                for i in range(n):
                    for b in cand[i]:
                        bs.add(Term("in", (_int_atom(i + 1), b)))
                out.append(frozenset(bs))
            else:
                out.append(frozenset({Term("retry", (_int_atom(r),))}))
        for f in sorted(collect("gfresh(_)"), key=lambda x: _term_int(x.args[0])):
            out.append(frozenset({Term("roundend", (f.args[0],))}))
        return out

    out_rules = [
        OutputRule("equilibria", Term("eq"), (Term("eq"),), ()),
        OutputRule("equilibria", parse_pattern("in(J,B)"), (parse_pattern("in(J,B)"),), ()),
        OutputRule("guess", parse_pattern("retry(R)"), (parse_pattern("retry(R)"),), ()),
        OutputRule("obs", parse_pattern("roundend(G)"), (parse_pattern("roundend(G)"),), ()),
    ]
    for name in mgr_names:
        out_rules.append(OutputRule(name, parse_pattern("success(R)"), (parse_pattern("success(R)"),), ()))

    base = {parse_term("gcnt(0)"), parse_term("geoc(0)")}
    for i in range(n):
        base.add(Term("resround", (_int_atom(i), _int_atom(0))))
    suite = LogicSuite(lambda kb: isinstance(kb, FactKB), {"check": check_sem})
    mgmt = ContextManagement(make_controller("nonempty_buffer"), check_update, tuple(out_rules))
    return [(Context("check", suite), ContextConfiguration(FactKB(frozenset(base)), "check", (), mgmt))]


# ---------------------------------------------------------------------------
# Running and decoding
# ---------------------------------------------------------------------------


def boot_events(m: SimpleRMCS) -> list[SensorEvent]:
    """No extra events are needed to boot a simulation; kept for symmetry."""
    return []


def suggested_horizon(m: SimpleRMCS, max_latency: int = 1, rounds: int = 1) -> int:
    """A horizon long enough for the generator to exhaust all candidates."""
    k = candidate_count(m)
    per_candidate = 10 * max(1, max_latency)
    return 40 + rounds * (k + 2) * per_candidate


def extract_equilibria(trace) -> set[tuple[frozenset[Term], ...]]:
    """Decode the confirmed equilibria from the ``equilibria`` stream."""
    try:
        idx = trace.stream_names.index("equilibria")
    except ValueError as exc:
        raise ValueError("trace has no equilibria stream") from exc
    n = sum(1 for name in trace.context_names if name.startswith("kbp_"))
    stream = trace.snapshots[-1].streams[idx]
    in_pat = parse_pattern("in(_,_)")
    out: set[tuple[frozenset[Term], ...]] = set()
    for pkg in stream:
        if not pkg.infos or pkg.infos == frozenset({EOC}):
            continue
        if Term("eq") not in pkg.infos:
            raise ValueError(f"malformed package on the equilibria stream: {pkg}")
        components: list[set[Term]] = [set() for _ in range(n)]
        for info in pkg.infos:
            if info == Term("eq"):
                continue
            if match(in_pat, info) is None:
                raise ValueError(f"malformed equilibrium component {info}")
            i = _term_int(info.args[0]) - 1
            if not 0 <= i < n:
                raise ValueError(f"equilibrium component for unknown context index {i + 1}")
            components[i].add(info.args[1])
        out.add(tuple(frozenset(c) for c in components))
    return out


def simulate_equilibria(m: SimpleRMCS, horizon: int | None = None, seed: int = 0, latency=None):
    """Build, run, and decode; the convenience path used by tests and the CLI."""
    from .engine import FixedLatency, run

    latency = latency or FixedLatency(1)
    max_lat = getattr(latency, "per_result", None) or getattr(latency, "high", 1)
    if horizon is None:
        horizon = suggested_horizon(m, max_lat)
    spec, init = build_simulation(m)
    trace = run(spec, init, [], horizon, latency, seed)
    return extract_equilibria(trace), trace


# ---------------------------------------------------------------------------
# Textual format
# ---------------------------------------------------------------------------


def parse_rmcs(text: str) -> SimpleRMCS:
    """Parse the per-context block format with ``(ctx:atom)`` body literals."""
    from .formalisms import parse_program_line, ProgramSpec

    sensors: list[str] = []
    blocks: list[dict] = []
    current: dict | None = None
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("%", 1)[0].strip()
        if not line:
            continue
        if ":" not in line:
            raise ValueError(f"line {lineno}: expected 'key: value'")
        key, value = (s.strip() for s in line.split(":", 1))
        try:
            if key == "sensors":
                sensors.extend(value.split())
            elif key == "context":
                current = {"name": value, "program": ProgramSpec.empty(), "bridges": [], "observes": []}
                blocks.append(current)
            elif current is None:
                raise ValueError(f"directive {key!r} outside a context block")
            elif key == "kb":
                parse_program_line(value, current["program"])
            elif key == "bridge":
                current["bridges"].append(_parse_bridge(value))
            elif key == "observes":
                current["observes"].append(_parse_observes(value))
            else:
                raise ValueError(f"unknown directive {key!r}")
        except ValueError as exc:
            raise ValueError(f"line {lineno}: {exc}") from exc

    contexts = []
    for b in blocks:
        prog = b["program"]
        base = RuleKB(frozenset(prog.facts), tuple(prog.rules))
        kb: RuleKB | ChoiceKB = ChoiceKB(base, tuple(prog.groups)) if prog.groups else base
        contexts.append(
            RMCSContext(b["name"], kb, tuple(b["bridges"]), tuple(b["observes"]))
        )
    return SimpleRMCS(tuple(contexts), tuple(sensors))


def _parse_bridge(text: str) -> BridgeRule:
    stmt = text.strip()
    if not stmt.endswith("."):
        raise ValueError(f"bridge rule must end with '.': {text!r}")
    stmt = stmt[:-1].strip()
    if ":-" in stmt:
        head_text, body_text = stmt.split(":-", 1)
    else:
        head_text, body_text = stmt, ""
    head = parse_term(head_text.strip())
    body = []
    depth = 0
    parts, start = [], 0
    for i, c in enumerate(body_text):
        if c == "(":
            depth += 1
        elif c == ")":
            depth -= 1
        elif c == "," and depth == 0:
            parts.append(body_text[start:i])
            start = i + 1
    parts.append(body_text[start:])
    for part in (p.strip() for p in parts):
        if not part:
            continue
        positive = True
        if part.startswith("not "):
            positive = False
            part = part[4:].strip()
        if not (part.startswith("(") and part.endswith(")")) or ":" not in part:
            raise ValueError(f"bridge literal must look like (ctx:atom): {part!r}")
        ctx, atom = part[1:-1].split(":", 1)
        body.append(BridgeLit(ctx.strip(), parse_term(atom.strip()), positive))
    return BridgeRule(head, tuple(body))


def _parse_observes(text: str) -> tuple[str, tuple[Term, ...]]:
    text = text.strip()
    if "{" not in text or not text.endswith("}"):
        raise ValueError(f"observes needs 'sensor {{a; b}}': {text!r}")
    sensor, rest = text.split("{", 1)
    atoms = tuple(parse_term(a.strip()) for a in rest[:-1].split(";") if a.strip())
    return sensor.strip(), atoms


def load_rmcs(path) -> SimpleRMCS:
    with open(path, encoding="utf-8") as fh:
        return parse_rmcs(fh.read())
