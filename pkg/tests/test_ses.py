import random

import pytest

from dpbc.syntax import (
    Action,
    NIL,
    Prefix,
    Rec,
    Sum,
    TAU,
    Var,
    loop,
    parse,
    pretty,
    substitute,
)
from dpbc.proof import check
from dpbc.standardize import NotGuarded
from dpbc.ses import (
    EqSystem,
    NotEquivalent,
    SesSystem,
    bottom_variables,
    derivatives,
    extract_ses,
    formal_classes,
    prove_congruent,
    promote,
    quotient,
    ses_semantics,
    solve_system,
    tau_transform,
)
from dpbc.equiv import RootedCheck, equivalent, rooted_check
from dpbc.semantics import build_lts

from genexpr import random_expr, random_guarded_expr, random_ses_equations


def _check_family(system, sols, ders):
    for x in system.formals:
        d = ders[x]
        assert check(d) is None, (x, check(d))
        lhs, rhs = d.conclusion
        assert lhs == sols[x]
        assert rhs == substitute(system.rhs[x], sols)


def test_extract_prefix_chain():
    s, root, sols, ders = extract_ses(parse("a.b.0"))
    assert len(s.formals) == 3
    shapes = [pretty(s.rhs[x]) for x in s.formals]
    assert shapes == ["0", "b._X0", "a._X1"]
    assert root == "_X2"
    assert sols[root] == parse("a.b.0")
    _check_family(s, sols, ders)


def test_extract_loop():
    s, root, sols, ders = extract_ses(parse("tau* a.0"))
    kinds = {x: s.shape[x][0] for x in s.formals}
    assert kinds[root] == "loop"
    _check_family(s, sols, ders)


def test_extract_nil():
    s, root, sols, ders = extract_ses(NIL)
    assert [pretty(s.rhs[x]) for x in s.formals] == ["0"]
    _check_family(s, sols, ders)


def test_extract_requires_guarded():
    with pytest.raises(NotGuarded):
        extract_ses(parse("rec X. tau.X"))


def test_solve_two_state_system():
    sys = EqSystem(("X", "Y"), {"X": parse("a.Y"), "Y": parse("b.X")})
    sol, ders = solve_system(sys, "X")
    lts = build_lts(sol)
    assert lts.n_states == 2
    assert [(a.name) for _, a, _ in lts.transitions] == ["a", "b"]
    for d in ders.values():
        assert check(d) is None


def test_solve_trivial():
    sol, _ = solve_system(EqSystem(("X",), {"X": NIL}), "X")
    assert sol == Rec("X", NIL)


def test_solve_rejects_unguarded():
    with pytest.raises(NotGuarded):
        solve_system(EqSystem(("X",), {"X": parse("tau.X")}), "X")


def test_tau_transform():
    s = tau_transform(EqSystem(("X",), {"X": parse("a.X")}))
    assert s.rhs["X"] == parse("tau.a.X")
    ses = SesSystem.from_equations(("X",), {"X": parse("a.X")})
    t = tau_transform(ses)
    assert t.is_guarded()
    empty = tau_transform(EqSystem((), {}))
    assert empty.formals == ()


def test_ses_semantics_and_classes():
    s = SesSystem.from_equations(
        ("X", "Y"), {"X": parse("a.X"), "Y": parse("a.Y")})
    part = formal_classes(s)
    assert part.same(0, 1)
    s2 = SesSystem.from_equations(
        ("X", "Y"), {"X": parse("a.X"), "Y": parse("b.Y")})
    assert not formal_classes(s2).same(0, 1)
    single = SesSystem.from_equations(("X",), {"X": parse("a.X")})
    assert formal_classes(single).n_classes >= 1


def test_ses_semantics_against_solutions():
    rng = random.Random(51)
    for _ in range(30):
        formals, rhs = random_ses_equations(rng, 3)
        try:
            s = SesSystem.from_equations(formals, rhs)
        except (ValueError, NotGuarded):
            continue
        part = formal_classes(s)
        sems = ses_semantics(s)
        for i, x in enumerate(formals):
            for j, y in enumerate(formals):
                solx, _ = solve_system(s, x)
                soly, _ = solve_system(s, y)
                assert part.same(i, j) == equivalent(solx, soly, "dpbb")


def test_bottoms_spec_example():
    s = SesSystem.from_equations(
        ("X", "Y", "Z"),
        {"X": parse("tau.Y + a.Z"), "Y": parse("a.Z"), "Z": NIL})
    part = formal_classes(s)
    assert part.same(0, 1) and not part.same(0, 2)
    bots = bottom_variables(s, part)
    cls_x = part.class_of[0]
    assert bots[cls_x] == "Y"


def test_bottoms_singleton_and_loop():
    s = SesSystem.from_equations(("X",), {"X": parse("a.X")})
    part = formal_classes(s)
    assert bottom_variables(s, part) == {part.class_of[0]: "X"}
    s2 = SesSystem.from_equations(
        ("X", "Z"), {"X": loop(parse("a.Z")), "Z": NIL})
    part2 = formal_classes(s2)
    bots2 = bottom_variables(s2, part2)
    # the loop's own silent step binds its binder, not a formal
    assert bots2[part2.class_of[0]] == "X"


def test_derivatives_examples():
    s = SesSystem.from_equations(
        ("X", "Y", "Z"),
        {"X": parse("tau.Y + a.Z"), "Y": parse("a.Z"), "Z": NIL})
    part = formal_classes(s)
    pair = derivatives(s, part, "X")
    assert pair.stutter.prefixed == ((TAU, Var("Y")),)
    assert pair.nonstutter.prefixed == ((Action("a"), Var("Z")),)
    # a bottom variable has an empty stuttering derivative
    pair_y = derivatives(s, part, "Y")
    assert pair_y.stutter.prefixed == ()
    # exposed non-formals land in the non-stuttering derivative
    s2 = SesSystem.from_equations(("X",), {"X": parse("a.X + W")})
    pair2 = derivatives(s2, formal_classes(s2), "X")
    assert pair2.nonstutter.vars == ("W",)


def test_quotient_two_equal_loops():
    s = SesSystem.from_equations(
        ("X", "Y"), {"X": parse("a.X"), "Y": parse("a.Y")})
    quot, iota, common = quotient(s)
    assert len(quot.formals) == 1
    assert iota == {"X": "X", "Y": "X"}
    assert common["X"][0] == common["Y"][0]
    for sol, d in common.values():
        assert check(d) is None


def test_quotient_loop_class():
    s = SesSystem.from_equations(
        ("X", "Y"),
        {"X": loop(parse("a.X")), "Y": loop(parse("a.Y"))})
    quot, iota, common = quotient(s)
    assert common["X"][0] == common["Y"][0]
    for sol, d in common.values():
        assert check(d) is None


def test_quotient_singleton_classes():
    s = SesSystem.from_equations(
        ("X", "Y"), {"X": parse("a.Y"), "Y": parse("b.X")})
    quot, iota, common = quotient(s)
    assert len(quot.formals) == 2
    assert iota == {"X": "X", "Y": "Y"}
    for sol, d in common.values():
        assert check(d) is None


def test_quotient_random_contract():
    rng = random.Random(52)
    for _ in range(60):
        formals, rhs = random_ses_equations(rng)
        try:
            s = SesSystem.from_equations(formals, rhs)
        except (ValueError, NotGuarded):
            continue
        quot, iota, common = quotient(s)
        for x in formals:
            sol, d = common[x]
            assert check(d) is None
            assert d.conclusion[0] == sol
            # the conclusion closes the silently-prefixed equation
            taus = {y: common[y][0] for y in formals}
            assert d.conclusion[1] == substitute(Prefix(TAU, s.rhs[x]), taus)
        for x in formals:
            for y in formals:
                if iota[x] == iota[y]:
                    assert common[x][0] == common[y][0]


def test_derivative_splits_rebuild_equation():
    # the filled equation equals stutter + rest up to sum laws
    from dpbc.syntax import canon_leaves, flatten_sum
    from dpbc.ses import _view_expr

    rng = random.Random(53)
    for _ in range(40):
        formals, rhs = random_ses_equations(rng)
        try:
            s = SesSystem.from_equations(formals, rhs)
        except (ValueError, NotGuarded):
            continue
        part = formal_classes(s)
        for x in formals:
            pair = derivatives(s, part, x)
            kind, view = s.shape[x]
            body = s.rhs[x] if kind == "plain" else s.rhs[x].body.right
            merged = Sum(_view_expr(pair.stutter), _view_expr(pair.nonstutter))
            assert canon_leaves(flatten_sum(body)) == canon_leaves(flatten_sum(merged))


def test_derivative_clause_derivations_check():
    # the split / stutter-collapse / self-absorption equations used by the
    # quotient are themselves checkable derivations
    from dpbc.ses import _Quotient

    rng = random.Random(57)
    checked = 0
    while checked < 20:
        formals, rhs = random_ses_equations(rng)
        try:
            s = SesSystem.from_equations(formals, rhs)
        except (ValueError, NotGuarded):
            continue
        q = _Quotient(s)
        for x in formals:
            d = q.b.finalize(q.clause_split(x))
            assert check(d) is None
            assert d.conclusion[0] == q.fillb(x)
            d2 = q.b.finalize(q.clause_absorb(x))
            assert check(d2) is None
            lhs, rhs2 = d2.conclusion
            assert lhs == q.fillb(x) and rhs2 == Sum(q.fillb(x), q.filled(x)[1])
            if any(q.cls[y] == q.cls[x] for y in s.unguarded_successors(x)):
                d3 = q.b.finalize(q.clause_stutter(x))
                assert check(d3) is None
                assert d3.conclusion[1] == Prefix(TAU, q.bsol[q.cls[x]])
        checked += 1


def test_bottom_variable_summand_subset():
    # for a bottom variable, the filled non-stuttering summands of any
    # equivalent formal are already among its own
    from dpbc.syntax import canon_leaves, flatten_sum
    from dpbc.ses import _view_expr, quotient, _Quotient

    rng = random.Random(56)
    checked = 0
    while checked < 25:
        formals, rhs = random_ses_equations(rng)
        try:
            s = SesSystem.from_equations(formals, rhs)
        except (ValueError, NotGuarded):
            continue
        q = _Quotient(s)
        for x in formals:
            xi = q.iota[x]
            if x == xi:
                continue
            _, f1x = q.filled(x)
            _, f1i = q.filled(xi)
            got = set(canon_leaves(flatten_sum(f1x)))
            ref = set(canon_leaves(flatten_sum(f1i)))
            assert got <= ref, (x, xi)
            checked += 1


def test_promote_examples():
    d = promote(parse("a.0"), parse("a.0 + a.0"))
    assert check(d) is None
    assert d.conclusion == (parse("tau.a.0"), parse("tau.(a.0 + a.0)"))
    d2 = promote(parse("a.0"), parse("a.0"))
    assert check(d2) is None
    with pytest.raises(NotEquivalent):
        promote(parse("rec X. a.X"), parse("b.0"))


def test_promote_requires_guarded():
    with pytest.raises(NotGuarded):
        promote(parse("rec X. tau.X"), parse("a.0"))


def test_prove_congruent_examples():
    d = prove_congruent(parse("a.tau.b.0"), parse("a.b.0"))
    assert check(d) is None
    r = prove_congruent(parse("a.0"), parse("tau.a.0"))
    assert isinstance(r, RootedCheck) and not r.equal
    d2 = prove_congruent(parse("a.0"), parse("a.0"))
    assert len(d2) == 1 and check(d2) is None


def test_roundtrip_solutions_unique_up_to_provability():
    # two independent solves of one system are provably equal
    rng = random.Random(54)
    done = 0
    while done < 15:
        e = random_guarded_expr(rng, rng.randint(2, 8))
        s, root, sols, ders = extract_ses(e)
        if len(s.formals) < 2:
            continue
        sol1, _ = solve_system(s, root)
        reordered = SesSystem.from_equations(
            tuple(reversed(s.formals)), s.rhs)
        sol2, _ = solve_system(reordered, root)
        d = prove_congruent(sol1, sol2)
        assert not isinstance(d, RootedCheck)
        assert check(d) is None
        done += 1


def test_completeness_matches_rooted_equivalence():
    rng = random.Random(55)
    for _ in range(60):
        e = random_expr(rng, rng.randint(1, 10))
        f = random_expr(rng, rng.randint(1, 10)) if rng.random() < 0.6 else Sum(e, e)
        r = prove_congruent(e, f)
        if isinstance(r, RootedCheck):
            assert not rooted_check(e, f).equal
        else:
            assert rooted_check(e, f).equal
            assert check(r) is None
            assert r.conclusion == (e, f)
