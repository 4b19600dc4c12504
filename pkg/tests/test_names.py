"""Regression tests for identifier collisions with the reserved
fresh-name namespaces and for shadowed binders."""

import random

from dpbc.syntax import (
    Prefix,
    Rec,
    Sum,
    TAU,
    Var,
    is_loop,
    loop,
    parse,
    pretty,
)
from dpbc.proof import check
from dpbc.standardize import standardize
from dpbc.ses import extract_ses, promote, prove_congruent, solve_system
from dpbc.equiv import RootedCheck, rooted_check

import genexpr
from genexpr import random_expr, random_guarded_expr

HOSTILE = ["_g0", "_g1", "_X0", "_q0", "X", "Z'"]


def test_user_loop_in_reserved_namespace():
    e = parse("rec _g0.(tau._g0 + a._g1)")
    assert is_loop(e)
    assert loop(parse("a._g1")) == e
    unfolded = Sum(Prefix(TAU, e), parse("a._g1"))
    d = prove_congruent(e, unfolded)
    assert not isinstance(d, RootedCheck)
    assert check(d) is None


def test_alpha_variant_loops_are_provably_equal():
    e = parse("rec _g0.(tau._g0 + a._g1)")
    f = Rec("Y", Sum(Prefix(TAU, Var("Y")), parse("a._g1")))
    d = prove_congruent(e, f)
    assert not isinstance(d, RootedCheck)
    assert check(d) is None


def test_extraction_avoids_user_reserved_names():
    e = parse("a._X0 + b._q0")
    system, root, sols, ders = extract_ses(e)
    assert "_X0" not in system.formals
    assert "_q0" not in system.formals
    sol, _ = solve_system(system, root)
    assert rooted_check(sol, e).equal


def test_shadowed_binders():
    e = parse("rec X. a.rec X. b.X")
    view, d = standardize(e)
    assert check(d) is None
    assert rooted_check(e, d.conclusion[1]).equal


def test_promote_with_quotient_namespace_variable():
    d = promote(parse("a._q0"), parse("a._q0 + a._q0"))
    assert check(d) is None


def test_randomized_hostile_names():
    rng = random.Random(31337)
    for _ in range(40):
        e = random_expr(rng, rng.randint(1, 12), HOSTILE)
        view, d = standardize(e)
        assert check(d) is None, pretty(e)
        assert rooted_check(e, d.conclusion[1]).equal, pretty(e)
    for _ in range(30):
        e = random_guarded_expr(rng, rng.randint(1, 10), HOSTILE)
        system, root, sols, ders = extract_ses(e)
        for dd in ders.values():
            assert check(dd) is None, pretty(e)
        sol, sd = solve_system(system, root)
        assert rooted_check(sol, e).equal, pretty(e)
    for _ in range(30):
        e = random_expr(rng, rng.randint(1, 10), HOSTILE)
        f = Sum(e, e) if rng.random() < 0.5 else random_expr(rng, rng.randint(1, 10), HOSTILE)
        result = prove_congruent(e, f)
        if not isinstance(result, RootedCheck):
            assert check(result) is None, (pretty(e), pretty(f))
