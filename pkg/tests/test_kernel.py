import itertools

import pytest
from hypothesis import given, strategies as st

from amcs.formalisms import FactKB, fact_suite
from amcs.kernel import (
    AMCSSpec,
    Context,
    ContextConfiguration,
    ContextManagement,
    DataPackage,
    OutputRule,
    SystemConfiguration,
    body_holds,
    relout,
    rule_activations,
    stakeholders,
    validate_system,
)
from amcs.formalisms import make_controller, make_append_updater, parse_output_rule
from amcs.terms import EOC, parse_pattern, parse_term


def beliefs(*texts):
    return frozenset(parse_term(t) for t in texts)


def rule(text):
    return parse_output_rule(text)


# The task-planner output rules, as written with variables.
TP_RULES = (
    rule("(cd, assign(A,C)) :- sugassignment(A,C)."),
    rule("(na, queryA(L)) :- avail(A), not assign(A,_), loc(A,L)."),
    rule("(na, queryC(L)) :- case(C,P), loc(A,L), not assign(A,_)."),
    rule("(amb, assigned(A,C)) :- assign(A,C)."),
)


# --- body_holds -------------------------------------------------------------


def test_body_holds_paper_instance():
    r = OutputRule("cd", parse_term("assign(a1,c1)"), (parse_term("sugassignment(a1,c1)"),))
    assert body_holds(r, beliefs("sugassignment(a1,c1)"))


def test_body_holds_empty_body():
    r = OutputRule("cd", parse_term("ping"))
    assert body_holds(r, beliefs())
    assert body_holds(r, beliefs("a", "b"))


def test_body_holds_negation_blocks():
    r = OutputRule("cd", parse_term("h"), (), (parse_term("b"),))
    assert body_holds(r, beliefs())
    assert not body_holds(r, beliefs("b"))


@given(st.sets(st.sampled_from("abcd"), max_size=4))
def test_body_holds_monotonicity_split(extra):
    pos_only = OutputRule("cd", parse_term("h"), (parse_term("a"),))
    s = beliefs("a") | frozenset(parse_term(x) for x in extra)
    assert body_holds(pos_only, s)
    blocking = OutputRule("cd", parse_term("h"), (), (parse_term("z"),))
    assert not body_holds(blocking, s | beliefs("z"))


# --- relout -----------------------------------------------------------------


def test_relout_tp_example():
    s = beliefs("sugassignment(a1,c1)", "assign(a2,c2)")
    pkg = relout("tp", s, TP_RULES, "cd")
    assert pkg == DataPackage("tp", beliefs("assign(a1,c1)"))


def test_relout_empty_rules():
    assert relout("tp", beliefs("a"), (), "cd") == DataPackage("tp", frozenset())


def test_relout_no_matching_stakeholder():
    assert relout("tp", beliefs("sugassignment(a1,c1)"), TP_RULES, "mo") == DataPackage("tp", frozenset())


def _naive_out(source, s, rules, stakeholder):
    # Double-loop oracle for ground rules, straight from the output definition.
    infos = set()
    for r in rules:
        if r.stakeholder != stakeholder:
            continue
        if all(p in s for p in r.pos) and not (set(r.neg) & s):
            infos.add(r.head)
    return DataPackage(source, frozenset(infos))


def test_relout_matches_bruteforce_over_universe():
    universe = [parse_term(x) for x in ("a", "b", "c", "d")]
    rules = (
        OutputRule("n1", parse_term("h1"), (universe[0],), (universe[1],)),
        OutputRule("n1", parse_term("h2"), (universe[2], universe[3])),
        OutputRule("n2", parse_term("h3"), (), (universe[0],)),
        OutputRule("n2", parse_term("h1"), (universe[1],)),
    )
    for k in range(5):
        for subset in itertools.combinations(universe, k):
            s = frozenset(subset)
            for stake in ("n1", "n2", "n3"):
                assert relout("src", s, rules, stake) == _naive_out("src", s, rules, stake)


def test_rule_activations_grounds_patterns():
    r = rule("(na, queryA(L)) :- avail(A), not assign(A,_), loc(A,L).")
    s = beliefs("avail(a1)", "loc(a1,l1)", "avail(a2)", "loc(a2,l2)", "assign(a2,c9)")
    assert rule_activations(r, s) == beliefs("queryA(l1)")


def test_output_rule_rejects_eoc_head():
    with pytest.raises(ValueError):
        OutputRule("cd", EOC)


def test_output_rule_rejects_unsafe_vars():
    with pytest.raises(ValueError):
        OutputRule("cd", parse_pattern("h(X)"))


# --- stakeholders -----------------------------------------------------------


def test_stakeholders_tp_rules():
    assert stakeholders(TP_RULES) == frozenset({"cd", "na", "amb"})


def test_stakeholders_empty():
    assert stakeholders(()) == frozenset()


def test_stakeholders_dedupes():
    rs = (rule("(cd, a)."), rule("(cd, b)."))
    assert stakeholders(rs) == frozenset({"cd"})


def test_stakeholders_covers_possible_outputs():
    # A stakeholder shows up exactly when some rule can ever produce for it.
    rules = (
        rule("(n1, h) :- a."),
        rule("(n2, g) :- b, not c."),
    )
    names = {"n1", "n2", "n3"}
    universe = [parse_term(x) for x in "abc"]
    reachable = set()
    for k in range(4):
        for subset in itertools.combinations(universe, k):
            for n in names:
                if relout("s", frozenset(subset), rules, n).infos:
                    reachable.add(n)
    assert reachable == set(stakeholders(rules))


# --- validate_system --------------------------------------------------------


def _tiny_system(rules=(), context_names=("c1", "c2"), streams=("out1",), sensors=("s1",)):
    suite = fact_suite()
    contexts = tuple(Context(n, suite) for n in context_names)
    spec = AMCSSpec(contexts, streams, frozenset(sensors))
    plain = ContextManagement(make_controller("nonempty_buffer"), make_append_updater(), ())
    first = ContextManagement(make_controller("nonempty_buffer"), make_append_updater(), tuple(rules))
    cfgs = tuple(
        ContextConfiguration(FactKB(), "factstore", (), first if i == 0 else plain)
        for i in range(len(contexts))
    )
    init = SystemConfiguration(cfgs, tuple(() for _ in streams))
    return spec, init


def test_validate_system_accepts_wellformed():
    spec, init = _tiny_system(rules=[rule("(out1, ping) :- a.")])
    assert validate_system(spec, init) == []


def test_validate_system_unknown_stakeholder():
    spec, init = _tiny_system(rules=[rule("(nowhere, ping) :- a.")])
    violations = validate_system(spec, init)
    assert len(violations) == 1
    assert violations[0].condition == "def5"
    assert "nowhere" in violations[0].message


def test_validate_system_duplicate_names():
    spec, init = _tiny_system(context_names=("c1", "c1"))
    violations = validate_system(spec, init)
    assert any("duplicate" in v.message for v in violations)


def test_validate_system_bad_semantics_id():
    spec, init = _tiny_system()
    bad = ContextConfiguration(init.contexts[0].kb, "missing", (), init.contexts[0].management)
    init = SystemConfiguration((bad,) + init.contexts[1:], init.streams)
    violations = validate_system(spec, init)
    assert any("semantics" in v.message for v in violations)


def test_validate_system_inadmissible_kb():
    from amcs.formalisms import RuleKB

    spec, init = _tiny_system()
    bad = ContextConfiguration(RuleKB(), "factstore", (), init.contexts[0].management)
    init = SystemConfiguration((bad,) + init.contexts[1:], init.streams)
    violations = validate_system(spec, init)
    assert any("admissible" in v.message for v in violations)


def test_validate_system_stream_source():
    spec, init = _tiny_system()
    pkg = DataPackage("s1", beliefs("a"))  # sensor-sourced stream entry
    init = SystemConfiguration(init.contexts, ((pkg,),))
    violations = validate_system(spec, init)
    assert any("non-context" in v.message for v in violations)
