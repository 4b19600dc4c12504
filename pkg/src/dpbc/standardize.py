"""Proof-producing rewriting of expressions into standard sums.

The derived rules for the loop operator are replayed as explicit
derivation chains; associativity and commutativity glue between the
printed steps is supplied by the canonical-sum prover.
"""

from __future__ import annotations

from .syntax import (
    Expr,
    compose_sum,
    Nil,
    NIL,
    Prefix,
    Rec,
    Sum,
    TAU,
    Var,
    as_standard_sum,
    flatten_sum,
    free_vars,
    fresh_name,
    is_fully_exposed,
    is_guarded_expr,
    is_guarded_in,
    is_loop,
    loop,
    loop_body,
    pretty,
)
from .semantics import tau_exposes
from .proof import (
    Builder,
    Derivation,
    ProofError,
    SideCondition,
    _d0,
    _t1,
    prove_alpha,
    prove_canon,
    prove_sum_eq,
)


class NotGuarded(ProofError):
    pass


# --- loop helpers ----------------------------------------------------------


def canonical_loop(e: Expr) -> Expr:
    """The loop with the same binder and body, in constructor shape."""
    return Rec(e.binder, Sum(Prefix(TAU, Var(e.binder)), loop_body(e)))


def prove_loop_canonical(b: Builder, e: Expr):
    """Reshape a recognized loop into constructor form; proves e = result."""
    cl = canonical_loop(e)
    if cl == e:
        return cl, b.refl(e)
    inner = prove_sum_eq(b, e.body, cl.body)
    return cl, b.cong("recbody", inner, e.binder)


def _d1(b: Builder, lp: Expr) -> int:
    """lp = tau.lp + body, for any constructor-shaped loop."""
    z, body = lp.binder, lp.body.right
    return b.axiom("R1", {"E": Sum(Prefix(TAU, Var(z)), body)}, {"X": z})


def _d2(b: Builder, lp: Expr) -> int:
    """lp = lp + body, for any constructor-shaped loop."""
    body = lp.body.right
    d1 = _d1(b, lp)
    unfolded = b.rhs_after(d1)  # tau.lp + body
    dup = prove_sum_eq(b, unfolded, Sum(unfolded, body))
    back = b.cong("suml", b.symm(d1), body)
    return b.chain(d1, dup, back)


def _app(b: Builder, total: int, path, inner: int) -> int:
    """Extend a chain by rewriting inside its current right-hand side."""
    return b.trans(total, b.rewrite_at(b.rhs_after(total), path, inner))


def _d3(b: Builder, x: str, e: Expr, f: Expr, avoid=()) -> int:
    """rec x.(tau.(x+e)+f) = rec x.(tau.loop(e+f)+f)."""
    y = fresh_name(free_vars(e) | free_vars(f) | {x} | set(avoid))
    b1 = Sum(Prefix(TAU, Sum(Var(x), e)), f)
    total = b.refl(Rec(x, b1))
    # wrap the body in a vacuous recursion over the fresh binder
    inner_r1 = b.symm(b.axiom("R1", {"E": b1}, {"X": y}))
    total = b.trans(total, b.cong("recbody", inner_r1, x))
    # exchange the recursion variable for the inner binder
    total = b.trans(total, b.axiom("R8", {"E": e, "F": f}, {"X": x, "Y": y}))
    # guard the inner binder with a silent prefix
    r4 = b.symm(b.axiom("R4", {"E": Var(y), "F": e, "G": f}, {"X": y}))
    total = b.trans(total, b.cong("recbody", r4, x))
    # unfold the inner recursion once
    total = _app(
        b, total, ["rec"],
        b.axiom("R1", {"E": Sum(Prefix(TAU, Sum(Prefix(TAU, Var(y)), e)), f)},
                {"X": y}))
    # pull the silent prefix out of the recursion
    r6a = b.symm(
        b.axiom("R6", {"E": Sum(Prefix(TAU, Sum(Var(y), e)), f)}, {"X": y}))
    total = _app(b, total, ["rec", "suml", "prefix", "suml"], r6a)
    n1 = b.rhs_after(r6a)  # rec y. tau.(tau.(y+e)+f)
    # eliminate the inner silent guard, padding with an empty summand
    p = n1.body
    c = b.rewrite_at(n1, ["rec"], b.symm(b.axiom("S4", {"E": p})))
    c = b.trans(c, b.axiom("R4", {"E": Sum(Var(y), e), "F": f, "G": NIL}, {"X": y}))
    cur = b.rhs_after(c)
    c = b.trans(c, b.rewrite_at(cur, ["rec"], b.axiom("S4", {"E": cur.body.left})))
    total = _app(b, total, ["rec", "suml", "prefix", "suml"], c)
    # push the silent prefix back inside
    r6b = b.axiom("R6", {"E": Sum(Sum(Var(y), e), f)}, {"X": y})
    total = _app(b, total, ["rec", "suml", "prefix", "suml"], r6b)
    ll = b.rhs_after(r6b).body  # rec y.((tau.y+e)+f)
    # reshape into the canonical loop and align the binder
    lp = loop(Sum(e, f))
    shape = prove_sum_eq(b, ll.body, Sum(Prefix(TAU, Var(y)), Sum(e, f)))
    fix = b.cong("recbody", shape, y)
    fix = b.trans(fix, prove_alpha(b, b.rhs_after(fix), lp))
    total = _app(b, total, ["rec", "suml", "prefix", "suml", "prefix"], fix)
    # absorb the loop body once
    total = _app(b, total, ["rec", "suml", "prefix", "suml", "prefix"], _d2(b, lp))
    grown = Sum(lp, Sum(e, f))
    # rearrange so the branching axiom applies
    total = _app(b, total, ["rec", "suml", "prefix", "suml", "prefix"],
                 prove_sum_eq(b, grown, Sum(Sum(lp, f), e)))
    total = _app(b, total, ["rec", "suml"],
                 b.axiom("B", {"E": Sum(lp, f), "F": e}, {"a": TAU}))
    # fold the loop body away again
    total = _app(b, total, ["rec", "suml", "prefix"],
                 prove_sum_eq(b, Sum(Sum(lp, f), e), grown))
    total = _app(b, total, ["rec", "suml", "prefix"], b.symm(_d2(b, lp)))
    return total


def _d4(b: Builder, x: str, e: Expr, f: Expr, g: Expr, avoid=()) -> int:
    """rec x.(tau.(x+e)+tau.(x+f)+g) = rec x.(tau.(x+e+f)+g)."""
    te = Prefix(TAU, Sum(Var(x), e))
    tf = Prefix(TAU, Sum(Var(x), f))
    total = b.refl(Rec(x, Sum(Sum(te, tf), g)))
    ff = Sum(tf, g)
    total = _app(b, total, ["rec"], prove_sum_eq(b, Sum(Sum(te, tf), g), Sum(te, ff)))
    total = b.trans(total, _d3(b, x, e, ff, avoid))
    p1 = loop(Sum(e, ff))
    # collapse the loop: its body reaches x unguarded through the tail
    total = b.trans(
        total,
        b.axiom("R5", {"E": Sum(e, ff), "F": ff}, {"X": x, "Y": p1.binder}))
    total = _app(b, total, ["rec", "suml", "prefix"],
                 b.axiom("R1", {"E": Sum(e, ff)}, {"X": p1.binder}))
    # expose the silent summand for R4
    total = _app(b, total, ["rec", "suml", "prefix"],
                 prove_sum_eq(b, Sum(e, ff), Sum(tf, Sum(e, g))))
    total = b.trans(
        total,
        b.axiom("R4", {"E": Sum(Var(x), f), "F": Sum(e, g), "G": ff}, {"X": x}))
    w = Sum(Var(x), Sum(Sum(e, f), g))
    total = _app(b, total, ["rec", "suml", "prefix"],
                 prove_sum_eq(b, Sum(Sum(Var(x), f), Sum(e, g)), w))
    # swap the two silent summands and repeat on the other side
    tw = Prefix(TAU, w)
    gg = Sum(tw, g)
    total = _app(b, total, ["rec"], prove_sum_eq(b, Sum(tw, ff), Sum(tf, gg)))
    total = b.trans(total, _d3(b, x, f, gg, avoid))
    p2 = loop(Sum(f, gg))
    total = b.trans(
        total, b.axiom("R5", {"E": Sum(f, gg), "F": gg}, {"X": x, "Y": p2.binder}))
    total = _app(b, total, ["rec", "suml", "prefix"],
                 b.axiom("R1", {"E": Sum(f, gg)}, {"X": p2.binder}))
    total = _app(b, total, ["rec", "suml", "prefix"],
                 prove_sum_eq(b, Sum(f, gg), Sum(tw, Sum(f, g))))
    total = b.trans(
        total, b.axiom("R4", {"E": w, "F": Sum(f, g), "G": gg}, {"X": x}))
    # drop the duplicated summands inside, then the duplicated silent step
    total = _app(b, total, ["rec", "suml", "prefix"],
                 prove_sum_eq(b, Sum(w, Sum(f, g)), w))
    total = _app(b, total, ["rec"], prove_sum_eq(b, Sum(tw, gg), Sum(tw, g)))
    # strip the inner copy of g with the loop rules, meeting the target
    # side at the canonical loop argument
    a_ = Sum(Sum(e, f), g)
    total = b.trans(total, _d3(b, x, a_, g, avoid))
    _, darg = prove_canon(b, Sum(a_, g))
    total = _app(b, total, ["rec", "suml", "prefix", "rec", "sumr"], darg)
    other = b.refl(Rec(x, Sum(Prefix(TAU, Sum(Var(x), Sum(e, f))), g)))
    other = b.trans(other, _d3(b, x, Sum(e, f), g, avoid))
    _, darg2 = prove_canon(b, Sum(Sum(e, f), g))
    other = _app(b, other, ["rec", "suml", "prefix", "rec", "sumr"], darg2)
    if b.rhs_after(other) != b.rhs_after(total):
        raise ProofError("loop arguments failed to meet")
    total = b.trans(total, b.symm(other))
    # final shape: left-nested inner sum
    total = _app(b, total, ["rec", "suml", "prefix"],
                 prove_sum_eq(b, Sum(Var(x), Sum(e, f)), Sum(Sum(Var(x), e), f)))
    return total


def _d5(b: Builder, e: Expr, f: Expr, avoid=()) -> int:
    """loop(tau.loop(e+f)+f) = tau.loop(e+f)+f."""
    p = loop(Sum(e, f))
    a = Sum(Prefix(TAU, p), f)
    l0 = loop(a)
    x0 = l0.binder
    y0 = fresh_name(free_vars(e) | free_vars(f) | {x0} | set(avoid))
    sub_avoid = set(avoid) | {x0, y0}
    total = b.refl(l0)
    # wrap the tail in a vacuous recursion
    total = _app(b, total, ["rec", "sumr"], b.symm(b.axiom("R1", {"E": a}, {"X": y0})))
    # fold the loop back into recursion form
    total = _app(b, total, ["rec", "sumr"], b.symm(_d3(b, y0, e, f, sub_avoid)))
    # duplicate the silent summand, padding with an empty operand
    ty0 = Prefix(TAU, Sum(Var(y0), NIL))
    te = Prefix(TAU, Sum(Var(y0), e))
    m1 = Rec(y0, Sum(te, f))
    inner = b.rewrite_at(
        m1, ["rec", "suml", "prefix"],
        prove_sum_eq(b, Sum(Var(y0), e), Sum(Sum(Var(y0), NIL), e)))
    inner = b.trans(inner, b.symm(_d4(b, y0, NIL, e, f, sub_avoid)))
    s4 = b.axiom("S4", {"E": Var(y0)})
    inner = b.trans(
        inner,
        b.rewrite_at(b.rhs_after(inner), ["rec", "suml", "suml", "prefix"], s4))
    inner = b.trans(
        inner,
        b.cong("recbody",
               prove_sum_eq(b, Sum(Sum(Prefix(TAU, Var(y0)), te), f),
                            Sum(Prefix(TAU, Var(y0)), Sum(te, f))), y0))
    total = _app(b, total, ["rec", "sumr"], inner)
    # merge the nested loops
    total = b.trans(
        total, b.axiom("R7", {"E": Sum(te, f)}, {"X": x0, "Y": y0}))
    # undo the duplication inside the remaining recursion
    undo = b.cong(
        "recbody",
        prove_sum_eq(b, Sum(Prefix(TAU, Var(y0)), Sum(te, f)),
                     Sum(Sum(Prefix(TAU, Var(y0)), te), f)),
        y0)
    undo = b.trans(
        undo,
        b.rewrite_at(b.rhs_after(undo), ["rec", "suml", "suml", "prefix"], b.symm(s4)))
    undo = b.trans(undo, _d4(b, y0, NIL, e, f, sub_avoid))
    undo = b.trans(
        undo,
        b.rewrite_at(b.rhs_after(undo), ["rec", "suml", "prefix"],
                     prove_sum_eq(b, Sum(Sum(Var(y0), NIL), e), Sum(Var(y0), e))))
    undo = b.trans(undo, _d3(b, y0, e, f, sub_avoid))
    total = _app(b, total, ["rec"], undo)
    # discard both vacuous recursions
    total = b.trans(total, b.axiom("R1", {"E": Rec(y0, a)}, {"X": x0}))
    total = b.trans(total, b.axiom("R1", {"E": a}, {"X": y0}))
    return total


def _d6(b: Builder, e: Expr, avoid=()) -> int:
    """loop(loop(e)) = loop(e)."""
    p = loop(e)
    l0 = loop(p)
    total = b.refl(l0)
    d1 = _d1(b, p)
    total = _app(b, total, ["rec", "sumr"], d1)
    # pad the loop body with an empty summand
    pad = b.trans(b.symm(b.axiom("S4", {"E": e})), b.axiom("S1", {"E": e, "F": NIL}))
    total = _app(b, total, ["rec", "sumr", "suml", "prefix", "rec", "sumr"], pad)
    total = b.trans(total, _d5(b, NIL, e, avoid=avoid))
    total = _app(b, total, ["suml", "prefix", "rec", "sumr"], b.symm(pad))
    total = b.trans(total, b.symm(d1))
    return total


def derive_D(k: int, operands) -> Derivation:
    """The derived loop rules, replayed as checkable derivations.

    operands: D1/D2/D6 take (E,); D3 takes (x, E, F); D4 takes
    (x, E, F, G); D5 takes (E, F).
    """
    b = Builder()
    if k == 1:
        (e,) = operands
        idx = _d1(b, loop(e))
    elif k == 2:
        (e,) = operands
        idx = _d2(b, loop(e))
    elif k == 3:
        x, e, f = operands
        idx = _d3(b, x, e, f)
    elif k == 4:
        x, e, f, g = operands
        idx = _d4(b, x, e, f, g)
    elif k == 5:
        e, f = operands
        idx = _d5(b, e, f)
    elif k == 6:
        (e,) = operands
        idx = _d6(b, e)
    else:
        raise ValueError(f"no derived rule D{k}")
    return b.finalize(idx)


# --- full exposure -----------------------------------------------------------


def _fully_expose(b: Builder, x: str, e: Expr):
    """Equal guarded expression with x fully exposed; proves e = result."""
    if is_fully_exposed(x, e):
        return e, b.refl(e)
    if isinstance(e, Prefix):
        body2, d = _fully_expose(b, x, e.body)
        return Prefix(e.act, body2), b.cong("prefix", d, e.act)
    if isinstance(e, Sum):
        l2, dl = _fully_expose(b, x, e.left)
        r2, dr = _fully_expose(b, x, e.right)
        i1 = b.cong("suml", dl, e.right)
        i2 = b.cong("sumr", dr, l2)
        return Sum(l2, r2), b.trans(i1, i2)
    if isinstance(e, Rec):
        if is_loop(e):
            cl, d0 = prove_loop_canonical(b, e)
            body2, d1 = _fully_expose(b, x, cl.body.right)
            out = Rec(cl.binder, Sum(Prefix(TAU, Var(cl.binder)), body2))
            if cl.binder in free_vars(body2):
                raise ProofError("loop body exposure captured the binder")
            return out, b.trans(d0, b.rewrite_at(cl, ["rec", "sumr"], d1))
        body2, d1 = _fully_expose(b, x, e.body)
        if not is_guarded_in(e.binder, body2):
            raise ProofError("exposure unguarded the recursion binder")
        i1 = b.cong("recbody", d1, e.binder)
        r1 = b.axiom("R1", {"E": body2}, {"X": e.binder})
        return b.rhs_after(r1), b.trans(i1, r1)
    raise ProofError(f"cannot expose {x} in {pretty(e)}")


def fully_expose(x: str, e: Expr):
    """(e', derivation of e = e') with x fully exposed in the guarded e'."""
    if not is_guarded_expr(e):
        raise NotGuarded(f"{pretty(e)} is not a guarded expression")
    b = Builder()
    out, idx = _fully_expose(b, x, e)
    if not (is_fully_exposed(x, out) and is_guarded_expr(out)):
        raise ProofError("full exposure failed to establish its contract")
    return out, b.finalize(idx)


# --- exposure as a summand -----------------------------------------------------


def _expose(b: Builder, x: str, e: Expr, f: Expr):
    """(e1, idx) with x guarded in e1 and idx proving
    rec x.(tau.e + f) = rec x.(tau.(x + e1) + f)."""
    if isinstance(e, Var) and e.name == x:
        s4 = b.symm(b.axiom("S4", {"E": Var(x)}))
        host = Rec(x, Sum(Prefix(TAU, Var(x)), f))
        return NIL, b.rewrite_at(host, ["rec", "suml", "prefix"], s4)
    if isinstance(e, Prefix):
        if not e.act.is_tau:
            raise SideCondition("expose_to_summand", f"{x} is guarded in {pretty(e)}")
        t1 = _t1(b, TAU, e.body)
        host = Rec(x, Sum(Prefix(TAU, e), f))
        total = b.rewrite_at(host, ["rec", "suml"], t1)
        e1, d = _expose(b, x, e.body, f)
        return e1, b.trans(total, d)
    if isinstance(e, Sum):
        el, er = e.left, e.right
        if not tau_exposes(x, el):
            flip = prove_sum_eq(b, e, Sum(er, el))
            host = Rec(x, Sum(Prefix(TAU, e), f))
            total = b.rewrite_at(host, ["rec", "suml", "prefix"], flip)
            e1, d = _expose(b, x, Sum(er, el), f)
            return e1, b.trans(total, d)
        total = _d0(b, e, f, x)
        # split the two halves behind separate silent prefixes
        host = Rec(x, Sum(Prefix(TAU, Sum(Var(x), e)), f))
        total = b.trans(
            total,
            b.rewrite_at(host, ["rec", "suml", "prefix"],
                         prove_sum_eq(b, Sum(Var(x), e), Sum(Sum(Var(x), el), er))))
        total = b.trans(total, b.symm(_d4(b, x, el, er, f)))
        tl = Prefix(TAU, Sum(Var(x), el))
        tr = Prefix(TAU, Sum(Var(x), er))
        f2 = Sum(tr, f)
        host = Rec(x, Sum(Sum(tl, tr), f))
        total = b.trans(
            total,
            b.rewrite_at(host, ["rec"], prove_sum_eq(b, Sum(Sum(tl, tr), f), Sum(tl, f2))))
        total = b.trans(total, b.symm(_d0(b, el, f2, x)))
        e1l, d = _expose(b, x, el, f2)
        total = b.trans(total, d)
        tl2 = Prefix(TAU, Sum(Var(x), e1l))
        if is_guarded_in(x, er):
            host = Rec(x, Sum(tl2, f2))
            total = b.trans(
                total,
                b.rewrite_at(host, ["rec"],
                             prove_sum_eq(b, Sum(tl2, f2), Sum(Sum(tl2, tr), f))))
            total = b.trans(total, _d4(b, x, e1l, er, f))
            e1 = Sum(e1l, er)
            host = Rec(x, Sum(Prefix(TAU, Sum(Sum(Var(x), e1l), er)), f))
            total = b.trans(
                total,
                b.rewrite_at(host, ["rec", "suml", "prefix"],
                             prove_sum_eq(b, Sum(Sum(Var(x), e1l), er), Sum(Var(x), e1))))
            return e1, total
        # the right half also reaches x unguarded: process it the same way
        f3 = Sum(tl2, f)
        host = Rec(x, Sum(tl2, f2))
        total = b.trans(
            total,
            b.rewrite_at(host, ["rec"], prove_sum_eq(b, Sum(tl2, f2), Sum(tr, f3))))
        total = b.trans(total, b.symm(_d0(b, er, f3, x)))
        e1r, d = _expose(b, x, er, f3)
        total = b.trans(total, d)
        tr2 = Prefix(TAU, Sum(Var(x), e1r))
        host = Rec(x, Sum(tr2, f3))
        total = b.trans(
            total,
            b.rewrite_at(host, ["rec"],
                         prove_sum_eq(b, Sum(tr2, f3), Sum(Sum(tl2, tr2), f))))
        total = b.trans(total, _d4(b, x, e1l, e1r, f))
        e1 = Sum(e1l, e1r)
        host = Rec(x, Sum(Prefix(TAU, Sum(Sum(Var(x), e1l), e1r)), f))
        total = b.trans(
            total,
            b.rewrite_at(host, ["rec", "suml", "prefix"],
                         prove_sum_eq(b, Sum(Sum(Var(x), e1l), e1r), Sum(Var(x), e1))))
        return e1, total
    if isinstance(e, Rec):
        # fully exposed + reachable forces a loop here
        if not is_loop(e):
            raise SideCondition("expose_to_summand", f"{pretty(e)} is not a loop")
        cl, dcanon = prove_loop_canonical(b, e)
        host = Rec(x, Sum(Prefix(TAU, e), f))
        total = b.rewrite_at(host, ["rec", "suml", "prefix"], dcanon)
        body = cl.body.right
        if cl.binder == x:
            raise ProofError("loop binder clashes with the exposed variable")
        total = b.trans(
            total, b.axiom("R5", {"E": body, "F": f}, {"X": x, "Y": cl.binder}))
        r1 = b.axiom("R1", {"E": body}, {"X": cl.binder})
        host = Rec(x, Sum(Prefix(TAU, Rec(cl.binder, body)), f))
        total = b.trans(total, b.rewrite_at(host, ["rec", "suml", "prefix"], r1))
        e1, d = _expose(b, x, body, f)
        return e1, b.trans(total, d)
    raise SideCondition("expose_to_summand", f"{x} is not reachable unguarded in {pretty(e)}")


def expose_to_summand(x: str, e: Expr, f: Expr):
    """(e1, derivation of rec x.(tau.e+f) = rec x.(tau.(x+e1)+f))."""
    if not is_guarded_expr(e):
        raise NotGuarded(f"{pretty(e)} is not a guarded expression")
    if not tau_exposes(x, e):
        raise SideCondition("expose_to_summand", f"{x} is not reachable unguarded in {pretty(e)}")
    if not is_fully_exposed(x, e):
        raise SideCondition("expose_to_summand", f"{x} is not fully exposed in {pretty(e)}")
    b = Builder()
    e1, idx = _expose(b, x, e, f)
    if not is_guarded_in(x, e1):
        raise ProofError("exposure left the variable unguarded")
    return e1, b.finalize(idx)


# --- standardization -----------------------------------------------------------


def _standardize(b: Builder, e: Expr):
    """(standard-sum expression, idx proving e = it)."""
    if isinstance(e, (Nil, Var)):
        return e, b.refl(e)
    if isinstance(e, Prefix):
        if is_guarded_expr(e.body):
            return e, b.refl(e)
        sb, d = _standardize(b, e.body)
        return Prefix(e.act, sb), b.cong("prefix", d, e.act)
    if isinstance(e, Sum):
        sl, dl = _standardize(b, e.left)
        sr, dr = _standardize(b, e.right)
        i1 = b.cong("suml", dl, e.right)
        i2 = b.cong("sumr", dr, sl)
        combined = Sum(sl, sr)
        out, d3 = prove_canon(b, combined)
        return out, b.chain(i1, i2, d3)
    # recursion
    y = e.binder
    sf, df = _standardize(b, e.body)
    total = b.cong("recbody", df, y)
    leaves = flatten_sum(sf) if not isinstance(sf, Nil) else []
    group1 = []
    rest = []
    has_self = False
    for leaf in leaves:
        if isinstance(leaf, Var) and leaf.name == y:
            has_self = True
        elif (isinstance(leaf, Prefix) and leaf.act.is_tau
              and not is_guarded_in(y, leaf.body)):
            group1.append(leaf.body)
        else:
            rest.append(leaf)
    cur_body = sf
    if has_self:
        remainder = compose_sum([Prefix(TAU, h) for h in group1] + rest)
        host = Rec(y, cur_body)
        reshaped = prove_sum_eq(b, cur_body, Sum(Var(y), remainder))
        total = b.trans(total, b.rewrite_at(host, ["rec"], reshaped))
        total = b.trans(total, b.axiom("R3", {"E": remainder}, {"X": y}))
        cur_body = remainder
    g = compose_sum(rest)
    if not group1:
        # the binder is guarded throughout: unfold once
        host = Rec(y, cur_body)
        fix = prove_sum_eq(b, cur_body, g) if cur_body != g else None
        if fix is not None:
            total = b.trans(total, b.rewrite_at(host, ["rec"], fix))
        r1 = b.axiom("R1", {"E": g}, {"X": y})
        total = b.trans(total, r1)
        out, d = prove_canon(b, b.rhs_after(r1))
        return out, b.trans(total, d)
    # expose the binder in every unguarded silent summand
    exposed = []
    for i, h in enumerate(group1):
        todo = [Prefix(TAU, hh) for hh in group1[i + 1 :]]
        done = [Prefix(TAU, Sum(Var(y), hh)) for hh in exposed]
        remainder = compose_sum(todo + done + rest)
        host = Rec(y, cur_body)
        reshaped = prove_sum_eq(b, cur_body, Sum(Prefix(TAU, h), remainder))
        total = b.trans(total, b.rewrite_at(host, ["rec"], reshaped))
        h2, d = _fully_expose(b, y, h)
        host = Rec(y, Sum(Prefix(TAU, h), remainder))
        total = b.trans(
            total, b.rewrite_at(host, ["rec", "suml", "prefix"], d))
        if not tau_exposes(y, h2):
            raise ProofError("exposed summand lost its unguarded occurrence")
        h3, d = _expose(b, y, h2, remainder)
        total = b.trans(total, d)
        exposed.append(h3)
        cur_body = Sum(Prefix(TAU, Sum(Var(y), h3)), remainder)
    # fold the exposed summands together
    while len(exposed) > 1:
        a2, b2_ = exposed[0], exposed[1]
        others = [Prefix(TAU, Sum(Var(y), hh)) for hh in exposed[2:]]
        remainder = compose_sum(others + rest)
        host = Rec(y, cur_body)
        want = Sum(
            Sum(Prefix(TAU, Sum(Var(y), a2)), Prefix(TAU, Sum(Var(y), b2_))), remainder)
        total = b.trans(
            total, b.rewrite_at(host, ["rec"], prove_sum_eq(b, cur_body, want)))
        total = b.trans(total, _d4(b, y, a2, b2_, remainder))
        merged = Sum(a2, b2_)
        mid = Sum(Prefix(TAU, Sum(Sum(Var(y), a2), b2_)), remainder)
        host = Rec(y, mid)
        total = b.trans(
            total,
            b.rewrite_at(host, ["rec", "suml", "prefix"],
                         prove_sum_eq(b, Sum(Sum(Var(y), a2), b2_), Sum(Var(y), merged))))
        exposed = [merged] + exposed[2:]
        cur_body = Sum(Prefix(TAU, Sum(Var(y), merged)), remainder)
    tot = exposed[0]
    host = Rec(y, cur_body)
    want = Sum(Prefix(TAU, Sum(Var(y), tot)), g)
    if cur_body != want:
        total = b.trans(
            total, b.rewrite_at(host, ["rec"], prove_sum_eq(b, cur_body, want)))
    total = b.trans(total, _d3(b, y, tot, g))
    lp = loop(Sum(tot, g))
    r1 = b.axiom("R1", {"E": Sum(Prefix(TAU, lp), g)}, {"X": y})
    total = b.trans(total, r1)
    out, d = prove_canon(b, b.rhs_after(r1))
    return out, b.trans(total, d)


def standardize(e: Expr):
    """(view, derivation of e = standard sum)."""
    b = Builder()
    out, idx = _standardize(b, e)
    view = as_standard_sum(out)
    if view is None:
        raise ProofError(f"standardization produced a non-standard shape: {pretty(out)}")
    return view, b.finalize(idx)
