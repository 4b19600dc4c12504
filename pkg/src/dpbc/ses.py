"""Recursive equation systems and the completeness pipeline.

Guarded expressions are compiled to standard equation systems whose
solutions are recorded as checkable derivations; quotienting the system
by solution equivalence produces common provable solutions, which
drives the silent-prefix promotion step and the congruence prover.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

from .syntax import (
    Expr,
    Nil,
    NIL,
    Prefix,
    Rec,
    Sum,
    SumView,
    TAU,
    Var,
    all_vars,
    canon_leaves,
    compose_sum,
    flatten_sum,
    free_vars,
    is_guarded_expr,
    is_guarded_in,
    is_loop,
    loop,
    loop_body,
    pretty,
    substitute,
)
from .semantics import Lts, tau_exposes, DEFAULT_BUDGET
from .equiv import Partition, bisimilarity, equivalent, rooted_check, RootedCheck
from .proof import (
    Builder,
    Derivation,
    ProofError,
    prove_alpha,
    prove_canon,
    prove_subst_cong,
    prove_sum_eq,
    subst_step,
    _t1,
    _summand_move,
    _summand_exposure,
)
from .standardize import NotGuarded, _d1, _d2, _d5, _d6, _app, _standardize


class NotEquivalent(ProofError):
    def __init__(self, witness: RootedCheck):
        super().__init__("expressions are not equivalent")
        self.witness = witness


@dataclass(frozen=True)
class EqSystem:
    """A finite recursive equation system over distinct formal variables."""

    formals: tuple
    rhs: dict

    def __post_init__(self):
        assert len(set(self.formals)) == len(self.formals)
        assert set(self.formals) == set(self.rhs)

    def unguarded_successors(self, x: str):
        """Formal variables occurring unguarded in the rhs of x."""
        return [y for y in self.formals if tau_exposes(y, self.rhs[x])]

    def is_guarded(self) -> bool:
        """The unguarded-occurrence relation admits no cycle."""
        color = {}

        def visit(x):
            color[x] = 1
            for y in self.unguarded_successors(x):
                c = color.get(y)
                if c == 1:
                    return False
                if c is None and not visit(y):
                    return False
            color[x] = 2
            return True

        return all(visit(x) for x in self.formals if x not in color)


def _classify_rhs(system_formals, e: Expr):
    """Validate an SES right-hand side; returns ('plain'|'loop', SumView)."""
    kind = "plain"
    body = e
    if isinstance(e, Rec):
        if not is_loop(e):
            return None
        kind = "loop"
        body = loop_body(e)
    prefixed = []
    bare = []
    for leaf in flatten_sum(body):
        if isinstance(leaf, Nil):
            continue
        if isinstance(leaf, Prefix):
            if not (isinstance(leaf.body, Var) and leaf.body.name in system_formals):
                return None
            prefixed.append((leaf.act, leaf.body))
        elif isinstance(leaf, Var):
            if leaf.name in system_formals:
                return None
            bare.append(leaf.name)
        else:
            return None
    return kind, SumView(tuple(prefixed), tuple(sorted(set(bare))))


@dataclass(frozen=True)
class SesSystem(EqSystem):
    """An equation system in standard form: every right-hand side is a
    sum of prefixes over formals plus non-formal variables, optionally
    inside a loop, and the system is guarded."""

    shape: dict

    @staticmethod
    def from_equations(formals, rhs) -> "SesSystem":
        shapes = {}
        fs = tuple(formals)
        for x in fs:
            cls = _classify_rhs(set(fs), rhs[x])
            if cls is None:
                raise ValueError(f"{x} has a non-standard right-hand side: {pretty(rhs[x])}")
            shapes[x] = cls
        sys = SesSystem(fs, dict(rhs), shapes)
        if not sys.is_guarded():
            raise NotGuarded("equation system has an unguarded cycle")
        return sys


@dataclass(frozen=True)
class DerivativePair:
    """Class-preserving silent summands of an equation, and the rest."""

    stutter: SumView
    nonstutter: SumView


# --- extraction -----------------------------------------------------------------


class _Extraction:
    def __init__(self, e: Expr):
        self.b = Builder()
        self.used = set(all_vars(e))
        self.counter = 0
        self.order = []
        self.rhs = {}
        self.sols = {}
        self.ders = {}

    def fresh_formal(self) -> str:
        while True:
            name = f"_X{self.counter}"
            self.counter += 1
            if name not in self.used:
                self.used.add(name)
                return name

    def fill(self, e: Expr) -> Expr:
        return substitute(e, self.sols)

    def add(self, rhs: Expr, sol: Expr, der: int) -> str:
        x = self.fresh_formal()
        self.order.append(x)
        self.rhs[x] = rhs
        self.sols[x] = sol
        self.ders[x] = der
        return x

    def _bridge(self, idx: int, target: Expr) -> int:
        """Extend a chain so its right-hand side becomes `target`,
        assuming the two sides agree up to S1-S4 and renaming."""
        b = self.b
        cur = b.rhs_after(idx)
        if cur == target:
            return idx
        if isinstance(cur, Rec) and isinstance(target, Rec):
            ci = cur.body.right
            ti = target.body.right
            mid_a, da = prove_canon(b, ci)
            mid_b, db = prove_canon(b, ti)
            step = b.rewrite_at(cur, ["rec", "sumr"], da)
            back_host = Rec(target.binder, Sum(Prefix(TAU, Var(target.binder)), ti))
            back = b.rewrite_at(back_host, ["rec", "sumr"], db)
            step = b.trans(idx, step)
            step = b.trans(
                step, prove_alpha(b, b.rhs_after(step), b.rhs_after(back)))
            return b.trans(step, b.symm(back))
        if isinstance(cur, Sum) or isinstance(target, Sum) or cur != target:
            try:
                return b.trans(idx, prove_sum_eq(b, cur, target))
            except ProofError:
                return b.trans(idx, prove_alpha(b, cur, target))
        return idx

    def extract(self, e: Expr) -> str:
        b = self.b
        if isinstance(e, Nil):
            return self.add(NIL, NIL, b.refl(NIL))
        if isinstance(e, Var):
            return self.add(e, e, b.refl(e))
        if isinstance(e, Prefix):
            r = self.extract(e.body)
            sol = Prefix(e.act, self.sols[r])
            return self.add(Prefix(e.act, Var(r)), sol, b.refl(sol))
        if isinstance(e, Sum):
            r1 = self.extract(e.left)
            r2 = self.extract(e.right)
            parts = []
            for r in (r1, r2):
                rr = self.rhs[r]
                if is_loop(rr):
                    inner = loop_body(rr)
                    template = Sum(Prefix(TAU, Var(r)), inner)
                    ll = self.fill(rr)
                    if not is_loop(ll):
                        raise ProofError("substituted loop lost its shape")
                    d1 = _d1(b, ll)
                    eq = b.trans(self.ders[r], d1)
                    fix = b.cong("prefix", b.symm(self.ders[r]), TAU)
                    eq = b.trans(
                        eq, b.cong("suml", fix, ll.body.right))
                    eq = self._bridge(eq, self.fill(template))
                    parts.append((template, eq))
                else:
                    parts.append((rr, self.ders[r]))
            (t1, eq1), (t2, eq2) = parts
            rhs = compose_sum(canon_leaves(flatten_sum(t1) + flatten_sum(t2)))
            sol = Sum(self.sols[r1], self.sols[r2])
            i1 = b.cong("suml", eq1, self.sols[r2])
            i2 = b.cong("sumr", eq2, b.rhs_after(eq1))
            der = self._bridge(b.trans(i1, i2), self.fill(rhs))
            return self.add(rhs, sol, der)
        if isinstance(e, Rec) and is_loop(e):
            body = loop_body(e)
            canonical = Rec(e.binder, Sum(Prefix(TAU, Var(e.binder)), body))
            dcanon = (
                b.refl(e)
                if canonical == e
                else b.cong("recbody", prove_sum_eq(b, e.body, canonical.body), e.binder)
            )
            r = self.extract(body)
            h = self.rhs[r]
            if is_loop(h):
                # a loop of a loop collapses
                total = b.trans(
                    dcanon,
                    b.rewrite_at(canonical, ["rec", "sumr"], self.ders[r]))
                ll = self.fill(h)
                if not is_loop(ll):
                    raise ProofError("substituted loop lost its shape")
                arg = ll.body.right
                outer = b.rhs_after(total)
                total = b.trans(total, prove_alpha(b, outer, loop(loop(arg))))
                total = b.trans(total, _d6(b, arg, avoid=self.used))
                total = b.trans(
                    total, prove_alpha(b, b.rhs_after(total), ll))
                return self.add(h, e, total)
            rhs = loop(h)
            total = b.trans(
                dcanon, b.rewrite_at(canonical, ["rec", "sumr"], self.ders[r]))
            total = b.trans(
                total, prove_alpha(b, b.rhs_after(total), self.fill(rhs)))
            return self.add(rhs, e, total)
        if isinstance(e, Rec):
            y = e.binder
            if not is_guarded_in(y, e.body):
                raise NotGuarded(f"{pretty(e)} is not a guarded recursion")
            before = len(self.order)
            r = self.extract(e.body)
            new_formals = self.order[before:]
            h = self.rhs[r]
            if y in free_vars(h):
                raise ProofError("recursion binder escaped into its root equation")
            sigma = {y: e}
            # the replacement for the binder inside the subsystem
            if is_loop(h):
                rho = Sum(Prefix(TAU, Var(r)), loop_body(h))
            else:
                rho = h
            old_sols = dict(self.sols)
            old_ders = dict(self.ders)
            cache = {}
            # re-point every solution of the subsystem below the binder
            for z in new_formals:
                self.sols[z] = substitute(old_sols[z], sigma)
            # the binder now denotes the recursion itself
            r1ax = self.b.axiom("R1", {"E": e.body}, {"X": y})
            hole = b.trans(
                r1ax,
                prove_alpha(b, substitute(e.body, sigma), self.sols[r])
                if substitute(e.body, sigma) != self.sols[r]
                else b.refl(self.sols[r]),
            )
            t_root = subst_step(b, old_ders[r], sigma, cache)
            hole = b.trans(hole, t_root)
            if is_loop(h):
                ll = b.rhs_after(t_root)
                if not is_loop(ll):
                    raise ProofError("substituted loop lost its shape")
                d1 = _d1(b, ll)
                hole2 = b.trans(hole, d1)
                fix = b.cong("prefix", b.symm(t_root), TAU)
                hole_fill = b.trans(hole2, b.cong("suml", fix, ll.body.right))
                hole_fill = self._bridge(hole_fill, self.fill(rho))
            else:
                hole_fill = self._bridge(hole, self.fill(rho))
            for z in new_formals:
                old_rhs = self.rhs[z]
                new_rhs = self._transform_rhs(old_rhs, y, rho)
                t_z = subst_step(b, old_ders[z], sigma, cache)
                k_z = substitute(old_rhs, {f: self.sols[f] for f in new_formals})
                want_l = substitute(k_z, {y: e})
                got = b.rhs_after(t_z)
                if got != want_l:
                    t_z = b.trans(t_z, prove_alpha(b, got, want_l))
                t_z = b.trans(t_z, prove_subst_cong(b, k_z, y, hole_fill))
                self.rhs[z] = new_rhs
                self.ders[z] = self._bridge(t_z, self.fill(new_rhs))
            # the recursion's own equation repeats the root equation
            root_der = self._bridge(hole, self.fill(h))
            return self.add(h, e, root_der)
        raise ProofError(f"cannot extract {pretty(e)}")

    def _transform_rhs(self, rhs: Expr, y: str, rho: Expr) -> Expr:
        if y not in free_vars(rhs):
            return rhs
        if is_loop(rhs):
            inner = substitute(loop_body(rhs), {y: rho})
            return loop(compose_sum(canon_leaves(flatten_sum(inner))))
        out = substitute(rhs, {y: rho})
        return compose_sum(canon_leaves(flatten_sum(out)))


def extract_ses(e: Expr):
    """(system, root formal, per-equation derivations) such that the
    input provably solves the system for the root."""
    if not is_guarded_expr(e):
        raise NotGuarded(f"{pretty(e)} is not a guarded expression")
    ex = _Extraction(e)
    root = ex.extract(e)
    system = SesSystem.from_equations(ex.order, ex.rhs)
    ders = {x: ex.b.finalize(ex.ders[x]) for x in ex.order}
    sols = dict(ex.sols)
    if sols[root] != e:
        raise ProofError("extraction lost the input expression")
    return system, root, sols, ders


# --- solving --------------------------------------------------------------------


def _solve_any(b: Builder, order, rhs):
    """Provable solutions for an arbitrary system, by eliminating the
    formals with recursion and closing each equation by unfolding."""
    order = list(order)
    work = dict(rhs)
    recs = {}
    for i in range(len(order) - 1, -1, -1):
        x = order[i]
        recs[x] = Rec(x, work[x])
        for j in range(i):
            work[order[j]] = substitute(work[order[j]], {x: recs[x]})
    sols = {}
    ders = {}
    for i, x in enumerate(order):
        partial = {order[j]: sols[order[j]] for j in range(i)}
        sols[x] = substitute(recs[x], partial)
        body = substitute(work[x], partial)
        if sols[x] != Rec(x, body):
            raise ProofError("solution shape drifted during elimination")
        ders[x] = b.axiom("R1", {"E": body}, {"X": x})
    # bridge each unfolding to the original equation, now that every
    # solution is known
    final = {}
    for x in order:
        target = substitute(rhs[x], sols)
        idx = ders[x]
        got = b.rhs_after(idx)
        if got != target:
            idx = b.trans(idx, prove_alpha(b, got, target))
        final[x] = idx
    return sols, final


def solve_system(s: EqSystem, x: str):
    """(solution for x, per-equation derivations); the system must be
    guarded so that the solution is unique up to provability."""
    if x not in s.formals:
        raise ValueError(f"{x} is not a formal variable")
    if not s.is_guarded():
        raise NotGuarded("equation system has an unguarded cycle")
    b = Builder()
    sols, ders = _solve_any(b, s.formals, s.rhs)
    return sols[x], {f: b.finalize(ders[f]) for f in s.formals}


def tau_transform(s: EqSystem) -> EqSystem:
    """Prefix every right-hand side with a silent step."""
    out = EqSystem(s.formals, {x: Prefix(TAU, s.rhs[x]) for x in s.formals})
    if isinstance(s, SesSystem) and not out.is_guarded():
        raise ProofError("silent prefixing broke guardedness")
    return out


# --- semantics of a system --------------------------------------------------------


def ses_semantics(s: SesSystem) -> Lts:
    """The system as a transition system: formal states plus absorbing
    states for the exposed non-formal variables."""
    exposed = sorted({w for x in s.formals for w in s.shape[x][1].vars})
    index = {x: i for i, x in enumerate(s.formals)}
    for w in exposed:
        index[w] = len(index)
    transitions = []
    exposure = [frozenset() for _ in index]
    for x in s.formals:
        kind, view = s.shape[x]
        src = index[x]
        if kind == "loop":
            transitions.append((src, TAU, src))
        for a, tgt in view.prefixed:
            transitions.append((src, a, index[tgt.name]))
        exposure[src] = frozenset(view.vars)
    for w in exposed:
        exposure[index[w]] = frozenset((w,))
    transitions = tuple(sorted(set(transitions), key=lambda t: (t[0], t[1].key(), t[2])))
    root = 0 if s.formals else None
    return Lts(tuple(s.formals) + tuple(exposed), transitions, tuple(exposure), root)


def formal_classes(s: SesSystem) -> Partition:
    """Solution equivalence of the formal variables, decided on the
    system's own transition system."""
    return bisimilarity(ses_semantics(s), "dpbb")


def _class_of(s: SesSystem, part: Partition):
    return {x: part.class_of[i] for i, x in enumerate(s.formals)}


def bottom_variables(s: SesSystem, classes: Partition):
    """One designated bottom variable per class of formals: the least
    formal, in system order, with no equivalent unguarded successor."""
    cls = _class_of(s, classes)
    bottoms = {}
    for x in s.formals:
        succs = s.unguarded_successors(x)
        if all(cls[y] != cls[x] for y in succs):
            bottoms.setdefault(cls[x], x)
    for x in s.formals:
        if cls[x] not in bottoms:
            raise ProofError(f"class of {x} has no bottom variable")
    return bottoms


def derivatives(s: SesSystem, classes: Partition, x: str) -> DerivativePair:
    """Split the summands of x's equation into class-preserving silent
    moves and the rest (plus exposed variables)."""
    cls = _class_of(s, classes)
    _, view = s.shape[x]
    stutter = []
    rest = []
    for a, tgt in view.prefixed:
        if a.is_tau and cls[tgt.name] == cls[x]:
            stutter.append((a, tgt))
        else:
            rest.append((a, tgt))
    return DerivativePair(
        SumView(tuple(stutter), ()), SumView(tuple(rest), view.vars))


def _view_expr(view: SumView) -> Expr:
    leaves = [Prefix(a, t) for a, t in view.prefixed] + [Var(v) for v in view.vars]
    return compose_sum(leaves) if leaves else NIL


# --- quotient construction ----------------------------------------------------------


def _fresh_many(avoid, n, prefix="_q"):
    out = []
    avoid = set(avoid)
    i = 0
    while len(out) < n:
        name = f"{prefix}{i}"
        i += 1
        if name not in avoid:
            avoid.add(name)
            out.append(name)
    return out


class _Quotient:
    """Carrier for the quotient computation on one system."""

    def __init__(self, s: SesSystem, b: Optional[Builder] = None):
        self.s = s
        self.b = b if b is not None else Builder()
        self.classes = formal_classes(s)
        self.cls = _class_of(s, self.classes)
        self.bottoms = bottom_variables(s, self.classes)
        class_ids = sorted({self.cls[x] for x in s.formals})
        self.class_ids = class_ids
        avoid = set(s.formals)
        for x in s.formals:
            avoid |= all_vars(s.rhs[x])
        self.zvar = {c: z for c, z in zip(class_ids, _fresh_many(avoid, len(class_ids)))}
        self.iota = {x: self.bottoms[self.cls[x]] for x in s.formals}
        zmap = {y: Var(self.zvar[self.cls[y]]) for y in s.formals}
        self.quot_formals = tuple(self.zvar[c] for c in class_ids)
        self.quot_rhs = {
            self.zvar[c]: substitute(s.rhs[self.bottoms[c]], zmap) for c in class_ids
        }
        sols, ders = _solve_any(self.b, self.quot_formals, self.quot_rhs)
        self.bsol = {c: sols[self.zvar[c]] for c in class_ids}
        self.bmap = {y: self.bsol[self.cls[y]] for y in s.formals}
        # equality (2): each designated equation holds for the solutions
        self.eq2 = {}
        for c in class_ids:
            xi = self.bottoms[c]
            idx = ders[self.zvar[c]]
            want = substitute(s.rhs[xi], self.bmap)
            got = self.b.rhs_after(idx)
            if got != want:
                idx = self.b.trans(idx, prove_alpha(self.b, got, want))
            self.eq2[c] = idx
        self._der_cache = {}

    # -- filled derivative sums --------------------------------------------

    def filled(self, x: str):
        pair = derivatives(self.s, self.classes, x)
        f0 = substitute(_view_expr(pair.stutter), self.bmap)
        f1 = substitute(_view_expr(pair.nonstutter), self.bmap)
        return f0, f1

    def fillb(self, x: str) -> Expr:
        return substitute(self.s.rhs[x], self.bmap)

    def clause_split(self, x: str) -> int:
        """The filled equation equals its split into derivative sums
        (wrapped in a loop when the equation is in loop form)."""
        b = self.b
        f0, f1 = self.filled(x)
        kind, _ = self.s.shape[x]
        fx = self.fillb(x)
        if kind == "plain":
            return prove_sum_eq(b, fx, Sum(f0, f1))
        if not is_loop(fx):
            raise ProofError("filled loop equation lost its shape")
        target = loop(Sum(f0, f1))
        idx = b.rewrite_at(
            fx, ["rec", "sumr"], prove_sum_eq(b, fx.body.right, Sum(f0, f1)))
        return b.trans(idx, prove_alpha(b, b.rhs_after(idx), target))

    def clause_stutter(self, x: str) -> int:
        """A non-bottom stutter sum collapses to one silent step onto the
        common solution of its class."""
        b = self.b
        f0, _ = self.filled(x)
        return prove_sum_eq(b, f0, Prefix(TAU, self.bsol[self.cls[x]]))

    def subset_absorb(self, lp: Expr, extra: Expr) -> int:
        """lp = lp + extra, when extra's summands occur in the loop body."""
        b = self.b
        d2 = _d2(b, lp)
        grown = b.rhs_after(d2)
        idx = b.trans(d2, prove_sum_eq(b, grown, Sum(grown, extra)))
        return b.trans(
            idx, b.rewrite_at(Sum(grown, extra), ["suml"], b.symm(d2)))

    def clause_absorb(self, x: str) -> int:
        """The filled equation absorbs its own non-stuttering summands:
        F{B} = F{B} + F1{B}."""
        b = self.b
        _, f1 = self.filled(x)
        fx = self.fillb(x)
        split = self.clause_split(x)
        kind, _ = self.s.shape[x]
        if kind == "plain":
            mid = b.rhs_after(split)
            idx = b.trans(split, prove_sum_eq(b, mid, Sum(mid, f1)))
            return b.trans(
                idx, b.rewrite_at(Sum(mid, f1), ["suml"], b.symm(split)))
        lp = b.rhs_after(split)
        idx = b.trans(split, self.subset_absorb(lp, f1))
        return b.trans(
            idx, b.rewrite_at(Sum(lp, f1), ["suml"], b.symm(split)))

    def equality3(self, x: str) -> int:
        """tau.(filled equation of x) = tau.(filled designated equation)."""
        b = self.b
        if x in self._der_cache:
            return self._der_cache[x]
        c = self.cls[x]
        xi = self.bottoms[c]
        kind_x = self.s.shape[x][0]
        kind_i = self.s.shape[xi][0]
        is_bottom = x == xi or all(
            self.cls[y] != c for y in self.s.unguarded_successors(x))
        if x == xi:
            out = b.refl(Prefix(TAU, self.fillb(x)))
            self._der_cache[x] = out
            return out
        f0x, f1x = self.filled(x)
        f0i, f1i = self.filled(xi)
        fxi = self.fillb(xi)
        if is_bottom:
            # the stutter sums are empty and the rest coincide as sets,
            # so both sides meet at one canonical sum (loop) directly
            if kind_x != kind_i:
                raise ProofError("bottom variables of one class disagree on loops")
            if kind_x == "plain":
                left = prove_sum_eq(b, self.fillb(x), fxi)
                out = b.cong("prefix", left, TAU)
            else:
                lx = self.fillb(x)
                _, dx = prove_canon(b, lx.body.right)
                _, di = prove_canon(b, fxi.body.right)
                step = b.rewrite_at(lx, ["rec", "sumr"], dx)
                back = b.rewrite_at(fxi, ["rec", "sumr"], di)
                step = b.trans(
                    step, prove_alpha(b, b.rhs_after(step), b.rhs_after(back)))
                out = b.cong("prefix", b.trans(step, b.symm(back)), TAU)
            self._der_cache[x] = out
            return out
        if kind_x == "plain":
            # expand the stutter step onto the designated equation and
            # absorb the leftover summands with the branching axiom
            total = b.cong("prefix", self.clause_split(x), TAU)
            total = _app(b, total, ["prefix", "suml"], self.clause_stutter(x))
            total = _app(b, total, ["prefix", "suml", "prefix"], self.eq2[c])
            total = _app(b, total, ["prefix", "suml", "prefix"],
                         self.clause_absorb(xi))
            grown = Sum(fxi, f1i)
            total = _app(b, total, ["prefix", "suml", "prefix"],
                         prove_sum_eq(b, grown, Sum(grown, f1x)))
            total = b.trans(
                total, b.axiom("B", {"E": grown, "F": f1x}, {"a": TAU}))
            total = _app(b, total, ["prefix"],
                         prove_sum_eq(b, Sum(grown, f1x), grown))
            total = _app(b, total, ["prefix"],
                         b.symm(self.clause_absorb(xi)))
            self._der_cache[x] = total
            return total
        # x's equation is a loop, hence so is the designated one
        if kind_i != "loop":
            raise ProofError("a loop equation met a loop-free designated bottom")
        total = b.cong("prefix", self.clause_split(x), TAU)
        total = _app(b, total, ["prefix", "rec", "sumr", "suml"],
                     self.clause_stutter(x))
        total = _app(b, total, ["prefix", "rec", "sumr", "suml", "prefix"],
                     self.eq2[c])
        total = _app(b, total, ["prefix", "rec", "sumr", "suml", "prefix"],
                     self.clause_split(xi))
        lpi = loop(Sum(f0i, f1i))
        dropnil = b.rewrite_at(
            lpi, ["rec", "sumr"], prove_sum_eq(b, Sum(f0i, f1i), Sum(f1i, f1x)))
        total = _app(b, total, ["prefix", "rec", "sumr", "suml", "prefix"], dropnil)
        # both loop layers now match the derived-rule shape
        lp_mid = loop(Sum(f1i, f1x))
        outer_target = loop(Sum(Prefix(TAU, lp_mid), f1x))
        cur = b.rhs_after(total)
        total = b.trans(
            total, b.cong("prefix", prove_alpha(b, cur.body, outer_target), TAU))
        total = _app(b, total, ["prefix"], _d5(b, f1i, f1x))
        # duplicate the tail inside the merged loop for the branching axiom
        dd2 = self.subset_absorb(lp_mid, f1x)
        total = _app(b, total, ["prefix", "suml", "prefix"], dd2)
        total = b.trans(
            total, b.axiom("B", {"E": lp_mid, "F": f1x}, {"a": TAU}))
        total = _app(b, total, ["prefix"], b.symm(dd2))
        # shrink the loop body back to the designated equation
        shrink = b.rewrite_at(
            lp_mid, ["rec", "sumr"],
            prove_sum_eq(b, Sum(f1i, f1x), Sum(f0i, f1i)))
        total = _app(b, total, ["prefix"], shrink)
        total = _app(b, total, ["prefix"],
                     prove_alpha(b, b.rhs_after(total).body, lpi))
        total = _app(b, total, ["prefix"], b.symm(self.clause_split(xi)))
        self._der_cache[x] = total
        return total

    def common_solutions(self):
        """For every formal X: (tau.B, derivation that it provably solves
        the silent-prefixed system for X)."""
        b = self.b
        taumap = {y: Prefix(TAU, self.bmap[y]) for y in self.s.formals}
        out = {}
        for x in self.s.formals:
            c = self.cls[x]
            sol = Prefix(TAU, self.bsol[c])
            idx = b.cong("prefix", self.eq2[c], TAU)  # tau.B = tau.F_Xi{B}
            idx = b.trans(idx, b.symm(self.equality3(x)))  # ... = tau.F_X{B}
            pad = _pad_tau(b, self.s.rhs[x], self.bmap, taumap)
            idx = b.trans(idx, b.cong("prefix", pad, TAU))
            out[x] = (sol, idx)
        return out


def _pad_tau(b: Builder, template: Expr, sigma1: dict, sigma2: dict) -> int:
    """template{sigma1} = template{sigma2}, where sigma2 silently prefixes
    every value of sigma1; the substituted variables occur only under
    prefixes in the template."""
    if not (free_vars(template) & set(sigma1)):
        return b.refl(substitute(template, sigma1))
    if isinstance(template, Prefix):
        if isinstance(template.body, Var) and template.body.name in sigma1:
            return b.symm(_t1(b, template.act, sigma1[template.body.name]))
        return b.cong(
            "prefix", _pad_tau(b, template.body, sigma1, sigma2), template.act)
    if isinstance(template, Sum):
        la = substitute(template.left, sigma1)
        lb = substitute(template.left, sigma2)
        ra = substitute(template.right, sigma1)
        i1 = b.cong("suml", _pad_tau(b, template.left, sigma1, sigma2), ra)
        i2 = b.cong("sumr", _pad_tau(b, template.right, sigma1, sigma2), lb)
        return b.trans(i1, i2)
    if isinstance(template, Rec):
        s1 = {k: v for k, v in sigma1.items() if k != template.binder}
        s2 = {k: v for k, v in sigma2.items() if k != template.binder}
        if any(template.binder in free_vars(v) for v in s1.values()):
            raise ProofError("binder captured while padding silent steps")
        return b.cong(
            "recbody", _pad_tau(b, template.body, s1, s2), template.binder)
    raise ProofError("template contains a formal variable in a bare position")


def quotient(s: SesSystem):
    """(quotient system, designated-bottom map, common solutions).

    The common solutions provably solve the silent-prefixed system; the
    per-formal derivations are returned alongside each solution.
    """
    q = _Quotient(s)
    sols = q.common_solutions()
    quot = EqSystem(q.quot_formals, q.quot_rhs)
    b = q.b
    return quot, dict(q.iota), {
        x: (sol, b.finalize(idx)) for x, (sol, idx) in sols.items()
    }


# --- uniqueness of solutions ---------------------------------------------------------


def _prove_unique(b: Builder, order, rhs, fam_d, fam_e, der_d, der_e, target) -> int:
    """Given two provable-solution families of a guarded system, derive
    the equality of their values at the target formal."""
    order = list(order)
    rhs = dict(rhs)
    fam_d = dict(fam_d)
    fam_e = dict(fam_e)
    der_d = dict(der_d)
    der_e = dict(der_e)

    def close(fam, der, m):
        """fam_m = (rec m. rhs_m){fam without m}, by fixpoint induction."""
        others = {z: fam[z] for z in order if z != m}
        fm = substitute(rhs[m], others)
        if not is_guarded_in(m, fm):
            raise NotGuarded(f"{m} is unguarded in its own equation")
        prem = der[m]
        want = substitute(fm, {m: fam[m]})
        got = b.rhs_after(prem)
        if got != want:
            prem = b.trans(prem, prove_alpha(b, got, want))
        idx = b.axiom("R2", {"E": fm, "F": fam[m]}, {"X": m}, premise=prem)
        want_l = substitute(Rec(m, rhs[m]), others)
        got_l = b.rhs_after(idx)
        if got_l != want_l:
            idx = b.trans(idx, prove_alpha(b, got_l, want_l))
        return idx

    while len(order) > 1:
        m = next(z for z in reversed(order) if z != target)
        l = Rec(m, rhs[m])
        dm = close(fam_d, der_d, m)
        em = close(fam_e, der_e, m)
        order.remove(m)
        new_rhs = {z: substitute(rhs[z], {m: l}) for z in order}
        for fam, der, dstar in ((fam_d, der_d, dm), (fam_e, der_e, em)):
            others = {z: fam[z] for z in order}
            for z in order:
                k = substitute(rhs[z], others)
                want = substitute(k, {m: fam[m]})
                idx = der[z]
                got = b.rhs_after(idx)
                if got != want:
                    idx = b.trans(idx, prove_alpha(b, got, want))
                idx = b.trans(idx, prove_subst_cong(b, k, m, dstar))
                want2 = substitute(new_rhs[z], others)
                got2 = b.rhs_after(idx)
                if got2 != want2:
                    idx = b.trans(idx, prove_alpha(b, got2, want2))
                der[z] = idx
            del fam[m]
            del der[m]
        rhs = new_rhs
    m = order[0]
    if m != target:
        raise ProofError("target formal was eliminated")
    dm = close(fam_d, der_d, m)
    em = close(fam_e, der_e, m)
    return b.trans(dm, b.symm(em))


# --- promotion and congruence ----------------------------------------------------------


def _extract_into(b: Builder, e: Expr, avoid):
    """Extraction sharing one builder, with formals fresh for `avoid`."""
    ex = _Extraction(e)
    ex.b = b
    ex.used |= set(avoid)
    root = ex.extract(e)
    return ex, root


def _promote(b: Builder, e: Expr, f: Expr, budget: int = DEFAULT_BUDGET) -> int:
    """tau.e = tau.f for equivalent guarded expressions."""
    if e == f:
        return b.refl(Prefix(TAU, e))
    ex1, r1 = _extract_into(b, e, all_vars(f))
    ex2, r2 = _extract_into(b, f, set(ex1.used))
    order = ex1.order + ex2.order
    rhs = {**ex1.rhs, **ex2.rhs}
    sols = {**ex1.sols, **ex2.sols}
    merged = SesSystem.from_equations(order, rhs)
    part = formal_classes(merged)
    cls = _class_of(merged, part)
    if cls[r1] != cls[r2]:
        raise NotEquivalent(rooted_check(Prefix(TAU, e), Prefix(TAU, f), budget))
    ders = {**ex1.ders, **ex2.ders}
    q = _Quotient(merged, b)
    common = q.common_solutions()
    # the silent-prefixed inputs solve the silent-prefixed system
    taus = {x: Prefix(TAU, sols[x]) for x in order}
    taumap = dict(taus)
    tau_rhs = {x: Prefix(TAU, rhs[x]) for x in order}
    tau_ders = {}
    for x in order:
        idx = b.cong("prefix", ders[x], TAU)
        idx = b.trans(idx, b.cong("prefix", _pad_tau(b, rhs[x], sols, taumap), TAU))
        tau_ders[x] = idx
    com_fam = {x: common[x][0] for x in order}
    com_der = {x: common[x][1] for x in order}
    left = _prove_unique(b, order, tau_rhs, dict(taus), dict(com_fam),
                         dict(tau_ders), dict(com_der), r1)
    right = _prove_unique(b, order, tau_rhs, dict(taus), dict(com_fam),
                          dict(tau_ders), dict(com_der), r2)
    if com_fam[r1] != com_fam[r2]:
        raise ProofError("common solutions differ inside one class")
    return b.trans(left, b.symm(right))


def promote(e: Expr, f: Expr, budget: int = DEFAULT_BUDGET) -> Derivation:
    """tau.e = tau.f, for guarded expressions with equivalent behaviour."""
    for g in (e, f):
        if not is_guarded_expr(g):
            raise NotGuarded(f"{pretty(g)} is not a guarded expression")
    if e != f and not equivalent(e, f, "dpbb", budget):
        raise NotEquivalent(rooted_check(e, f, budget))
    b = Builder()
    return b.finalize(_promote(b, e, f, budget))


def _promote_bridge(b: Builder, g: Expr, h: Expr, budget: int) -> int:
    """tau.g = tau.h for equivalent expressions, standardizing whichever
    side is not a guarded expression."""
    if g == h:
        return b.refl(Prefix(TAU, g))
    left, dl = (g, None)
    right, dr = (h, None)
    if not is_guarded_expr(g):
        left, dl = _standardize(b, g)
    if not is_guarded_expr(h):
        right, dr = _standardize(b, h)
    mid = _promote(b, left, right, budget)
    if dl is not None:
        mid = b.trans(b.symm(b.cong("prefix", dl, TAU)), mid)
    if dr is not None:
        mid = b.trans(mid, b.symm(b.cong("prefix", dr, TAU)))
    return mid


def _absorb_into(b: Builder, e: Expr, f: Expr, budget: int) -> int:
    """e + f = f, when every move and exposure of e is covered by f."""
    from .semantics import step as sos_step
    from .semantics import exposes

    std, dstd = _standardize(b, e)
    total = b.cong("suml", dstd, f)
    cur = std
    while True:
        if isinstance(cur, Nil):
            total = b.trans(total, prove_sum_eq(b, Sum(cur, f), f))
            return total
        if isinstance(cur, Sum):
            rest, last = cur.left, cur.right
        else:
            rest, last = None, cur
        if isinstance(last, Var):
            w = last.name
            if w not in exposes(f):
                raise ProofError(f"{w} is not exposed by {pretty(f)}")
            absorb = b.symm(_summand_exposure(b, f, w))
        else:
            a, body = last.act, last.body
            witness = None
            for a2, tgt in sos_step(f):
                if a2 == a and equivalent(body, tgt, "dpbb", budget):
                    witness = tgt
                    break
            if witness is None:
                raise ProofError(f"{pretty(last)} has no matching move in {pretty(f)}")
            if witness == body:
                absorb = b.symm(_summand_move(b, f, a, body))
            else:
                pad = b.symm(_t1(b, a, body))  # a.body = a.tau.body
                bridge = _promote_bridge(b, body, witness, budget)
                fixed = b.trans(pad, b.cong("prefix", bridge, a))
                fixed = b.trans(fixed, _t1(b, a, witness))  # ... = a.witness
                grow = _summand_move(b, f, a, witness)  # f = f + a.witness
                shrink = b.rewrite_at(
                    Sum(f, Prefix(a, witness)), ["sumr"], b.symm(fixed))
                absorb = b.symm(b.trans(grow, shrink))  # f + a.body = f
        if rest is None:
            total = b.trans(total, prove_sum_eq(b, Sum(cur, f), Sum(f, last)))
            total = b.trans(total, absorb)
            return total
        total = b.trans(
            total, prove_sum_eq(b, Sum(cur, f), Sum(rest, Sum(f, last))))
        total = b.trans(total, b.rewrite_at(Sum(rest, Sum(f, last)), ["sumr"], absorb))
        total = b.trans(total, b.cong("suml", b.refl(rest), f))
        cur = rest


def prove_congruent(e: Expr, f: Expr, budget: int = DEFAULT_BUDGET):
    """A checkable derivation of e = f when they are rooted-equivalent,
    otherwise the failing rooted check."""
    rc = rooted_check(e, f, budget)
    if not rc.equal:
        return rc
    b = Builder()
    if e == f:
        return b.finalize(b.refl(e))
    fwd = _absorb_into(b, e, f, budget)  # e + f = f
    bwd = _absorb_into(b, f, e, budget)  # f + e = e
    s1 = b.axiom("S1", {"E": e, "F": f})  # e + f = f + e
    left = b.symm(b.trans(s1, bwd))  # e = e + f
    return b.finalize(b.trans(left, fwd))
