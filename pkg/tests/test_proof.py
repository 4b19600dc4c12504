import random

import pytest

from dpbc.syntax import Action, NIL, Prefix, Rec, Sum, TAU, Var, parse
from dpbc.proof import (
    Builder,
    Derivation,
    MissingMeta,
    MoveNotPresent,
    ProofStep,
    Refl,
    SideCondition,
    Symm,
    Trans,
    check,
    derive_D0,
    derive_summand_absorption,
    derive_T1,
    format_derivation,
    instantiate_axiom,
    parse_derivation,
    prove_canon,
    prove_sum_eq,
    prove_alpha,
)
from dpbc.equiv import rooted_check

from genexpr import random_expr


def test_instantiate_branching_axiom():
    st = instantiate_axiom(
        "B", {"E": parse("a.0"), "F": parse("b.0")}, {"a": Action("c")})
    assert st.lhs == parse("c.(tau.(a.0 + b.0) + b.0)")
    assert st.rhs == parse("c.(a.0 + b.0)")


def test_instantiate_r3():
    st = instantiate_axiom("R3", {"E": parse("a.0")}, {"X": "X"})
    assert st.lhs == parse("rec X.(X + a.0)")
    assert st.rhs == parse("rec X. a.0")


def test_r2_side_condition():
    with pytest.raises(SideCondition):
        instantiate_axiom(
            "R2", {"E": parse("tau.X"), "F": parse("a.0")}, {"X": "X"})


def test_r4_side_condition():
    with pytest.raises(SideCondition):
        instantiate_axiom(
            "R4",
            {"E": parse("a.X"), "F": NIL, "G": NIL},
            {"X": "X"},
        )


def test_missing_meta():
    with pytest.raises(MissingMeta):
        instantiate_axiom("S1", {"E": parse("a.0")}, {})


def test_r0_side_condition():
    with pytest.raises(SideCondition):
        instantiate_axiom("R0", {"E": parse("a.Y")}, {"X": "X", "Y": "Y"})


def test_check_t1_chain():
    d = derive_T1(Action("a"), parse("b.0"))
    assert check(d) is None
    anchors = {(st.lhs, st.rhs) for st in d.steps}
    # the chain passes through the printed waypoints
    assert (parse("a.tau.b.0"), parse("a.(tau.(b.0 + 0) + 0)")) in anchors
    assert (parse("a.(tau.(b.0 + 0) + 0)"), parse("a.(b.0 + 0)")) in anchors
    assert d.conclusion == (parse("a.tau.b.0"), parse("a.b.0"))


def test_check_rejects_broken_trans():
    s0 = ProofStep(parse("a.0"), parse("a.0"), Refl())
    s1 = ProofStep(parse("b.0"), parse("b.0"), Refl())
    bad = ProofStep(parse("a.0"), parse("b.0"), Trans(0, 1))
    failure = check(Derivation((s0, s1, bad)))
    assert failure is not None and failure.index == 2


def test_check_rejects_swapped_axiom():
    st = instantiate_axiom("S4", {"E": parse("a.0")}, {})
    swapped = ProofStep(st.rhs, st.lhs, st.just)
    failure = check(Derivation((swapped,)))
    assert failure is not None and failure.index == 0


def test_check_rejects_forward_reference():
    s0 = ProofStep(parse("a.0"), parse("a.0"), Symm(0))
    assert check(Derivation((s0,))) is not None


def test_derive_t1_with_silent_action():
    d = derive_T1(TAU, parse("a.0"))
    assert check(d) is None
    assert d.conclusion == (parse("tau.tau.a.0"), parse("tau.a.0"))
    assert rooted_check(*d.conclusion).equal


def test_summand_absorption_move():
    e = parse("a.0 + b.0")
    d = derive_summand_absorption(e, (Action("a"), NIL))
    assert check(d) is None
    assert d.conclusion == (e, Sum(e, parse("a.0")))
    assert rooted_check(*d.conclusion).equal


def test_summand_absorption_exposure():
    d = derive_summand_absorption(Var("X"), "X")
    assert check(d) is None
    assert d.conclusion == (Var("X"), parse("X + X"))


def test_summand_absorption_missing():
    with pytest.raises(MoveNotPresent):
        derive_summand_absorption(parse("rec X.(a.0 + X)"), "X")
    with pytest.raises(MoveNotPresent):
        derive_summand_absorption(parse("a.0"), (Action("b"), NIL))


def test_summand_absorption_through_recursion():
    e = parse("rec X. a.b.X")
    d = derive_summand_absorption(e, (Action("a"), parse("b.rec X. a.b.X")))
    assert check(d) is None
    assert rooted_check(*d.conclusion).equal


def test_d0_immediate_exposure():
    d = derive_D0(Var("X"), NIL, "X")
    assert check(d) is None
    assert d.conclusion == (
        parse("rec X.(tau.X + 0)"),
        parse("rec X.(tau.(X + X) + 0)"),
    )


def test_d0_one_step_path():
    d = derive_D0(parse("tau.X + b.0"), parse("a.0"), "X")
    assert check(d) is None
    lhs, rhs = d.conclusion
    assert lhs == parse("rec X.(tau.(tau.X + b.0) + a.0)")
    assert rhs == parse("rec X.(tau.(X + (tau.X + b.0)) + a.0)")
    assert rooted_check(lhs, rhs).equal


def test_d0_side_condition():
    with pytest.raises(SideCondition):
        derive_D0(parse("a.X"), NIL, "X")


def test_generators_deterministic():
    a = derive_D0(parse("tau.X + b.0"), parse("a.0"), "X")
    b = derive_D0(parse("tau.X + b.0"), parse("a.0"), "X")
    assert a == b
    assert derive_T1(Action("a"), parse("b.0")) == derive_T1(Action("a"), parse("b.0"))


def test_axiom_soundness_random_sample():
    rng = random.Random(31)
    for _ in range(100):
        d = _random_axiom_instance(rng)
        assert check(d) is None
        assert rooted_check(*d.conclusion).equal, format_derivation(d)


def _random_axiom_instance(rng) -> Derivation:
    from genexpr import random_expr as re_

    b = Builder()
    axiom = rng.choice(
        ["S1", "S2", "S3", "S4", "B", "R0", "R1", "R2", "R3", "R4",
         "R5", "R6", "R7", "R8"])
    e = re_(rng, rng.randint(1, 5))
    f = re_(rng, rng.randint(1, 4))
    g = re_(rng, rng.randint(1, 3))
    exposed = Sum(Var("X"), e) if rng.random() < 0.5 else Prefix(TAU, Var("X"))
    if axiom in ("S1",):
        idx = b.axiom(axiom, {"E": e, "F": f})
    elif axiom == "S2":
        idx = b.axiom(axiom, {"E": e, "F": f, "G": g})
    elif axiom in ("S3", "S4"):
        idx = b.axiom(axiom, {"E": e})
    elif axiom == "B":
        idx = b.axiom(axiom, {"E": e, "F": f},
                      {"a": rng.choice([TAU, Action("a")])})
    elif axiom == "R0":
        idx = b.axiom(axiom, {"E": e}, {"X": "X", "Y": "_f9"})
    elif axiom in ("R1", "R3", "R6"):
        idx = b.axiom(axiom, {"E": e}, {"X": "X"})
    elif axiom == "R2":
        prem = b.axiom("R1", {"E": Prefix(Action("a"), e)}, {"X": "X"})
        rec = Rec("X", Prefix(Action("a"), e))
        idx = b.axiom(
            "R2", {"E": Prefix(Action("a"), e), "F": rec}, {"X": "X"},
            premise=prem)
    elif axiom == "R4":
        idx = b.axiom(axiom, {"E": exposed, "F": f, "G": g}, {"X": "X"})
    elif axiom == "R5":
        idx = b.axiom(axiom, {"E": exposed, "F": f}, {"X": "X", "Y": "Y"})
    elif axiom == "R7":
        idx = b.axiom(axiom, {"E": e}, {"X": "X", "Y": "Y"})
    else:  # R8
        idx = b.axiom(axiom, {"E": e, "F": f}, {"X": "X", "Y": "Y"})
    return b.finalize(idx)


def test_soundness_of_randomly_composed_derivations():
    # random chains of axiom instances, congruence wrappers, symmetry and
    # transitivity stay rooted-sound
    rng = random.Random(33)
    for _ in range(60):
        b = Builder()
        idx = _random_axiom_instance_idx(b, rng)
        for _ in range(rng.randint(0, 6)):
            roll = rng.random()
            lhs, rhs = b.endpoints(idx)
            if roll < 0.3:
                idx = b.symm(idx)
            elif roll < 0.6:
                pos = rng.choice(["prefix", "suml", "sumr", "recbody"])
                if pos == "prefix":
                    idx = b.cong("prefix", idx, rng.choice([TAU, Action("a")]))
                elif pos == "recbody":
                    idx = b.cong("recbody", idx, rng.choice(["X", "Y", "Z"]))
                else:
                    idx = b.cong(pos, idx, random_expr(rng, rng.randint(1, 3)))
            else:
                other = _random_axiom_instance_idx(b, rng)
                lo, _ = b.endpoints(other)
                bridge = b.cong("suml", idx, lo)
                grown = b.cong("sumr", other, b.endpoints(idx)[1])
                idx = b.trans(bridge, grown)
        d = b.finalize(idx)
        assert check(d) is None
        assert rooted_check(*d.conclusion).equal


def _random_axiom_instance_idx(b, rng) -> int:
    d = _random_axiom_instance(rng)
    return b.splice(d)


def test_prove_canon_and_sum_eq():
    rng = random.Random(32)
    b = Builder()
    for _ in range(60):
        e = random_expr(rng, rng.randint(1, 10))
        out, idx = prove_canon(b, e)
        lhs, rhs = b.endpoints(idx)
        assert lhs == e and rhs == out
    d = b.finalize(prove_sum_eq(b, parse("a.0 + (b.0 + a.0)"), parse("b.0 + a.0 + 0")))
    assert check(d) is None


def test_prove_alpha():
    b = Builder()
    lhs = parse("rec X. a.X + b.Y")
    rhs = parse("rec Z. a.Z + b.Y")
    idx = prove_alpha(b, lhs, rhs)
    d = b.finalize(idx)
    assert check(d) is None
    assert d.conclusion == (lhs, rhs)


def test_certificate_roundtrip():
    d = derive_D0(parse("tau.X + b.0"), parse("a.0"), "X")
    text = format_derivation(d)
    again = parse_derivation(text)
    assert again == d
    assert check(again) is None


def test_certificate_tamper_detection():
    d = derive_T1(Action("a"), parse("b.0"))
    text = format_derivation(d)
    lines = [l for l in text.splitlines() if l.startswith("step")]
    # swap the endpoints of the final step
    last = lines[-1]
    head, _, just = last.rpartition(" by ")
    prefix, _, eq = head.partition(" ")
    num, _, body = eq.partition(" ")
    lhs, _, rhs = body.partition(" = ")
    lines[-1] = f"step {num} {rhs} = {lhs} by {just}"
    bad = parse_derivation("\n".join(lines))
    failure = check(bad)
    assert failure is not None and failure.index == int(num)
