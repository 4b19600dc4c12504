"""The axiom system as data: schema instantiation, derivations, checker.

A derivation is a sequence of steps, each an equation justified by
reflexivity, symmetry, transitivity, an axiom instance (with its
metavariable bindings and side conditions), or a one-hole congruence.
The checker re-instantiates every axiom step from its recorded bindings
and compares trees, so certificates are self-contained.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Mapping, Optional, Union

from .syntax import (
    Action,
    Expr,
    Nil,
    NIL,
    Prefix,
    Rec,
    Sum,
    TAU,
    Var,
    all_vars,
    free_vars,
    fresh_name,
    is_guarded_in,
    parse,
    pretty,
    substitute,
    summand_key,
)
from .semantics import step as sos_step
from .semantics import exposes, tau_exposes

AXIOM_IDS = (
    "S1", "S2", "S3", "S4", "B",
    "R0", "R1", "R2", "R3", "R4", "R5", "R6", "R7", "R8",
)

# metavariables (expressions) and extras (binders / actions) per schema
SCHEMA_PARAMS = {
    "S1": (("E", "F"), ()),
    "S2": (("E", "F", "G"), ()),
    "S3": (("E",), ()),
    "S4": (("E",), ()),
    "B": (("E", "F"), ("a",)),
    "R0": (("E",), ("X", "Y")),
    "R1": (("E",), ("X",)),
    "R2": (("E", "F"), ("X",)),
    "R3": (("E",), ("X",)),
    "R4": (("E", "F", "G"), ("X",)),
    "R5": (("E", "F"), ("X", "Y")),
    "R6": (("E",), ("X",)),
    "R7": (("E",), ("X", "Y")),
    "R8": (("E", "F"), ("X", "Y")),
}


class ProofError(Exception):
    pass


class MissingMeta(ProofError):
    pass


class SideCondition(ProofError):
    def __init__(self, axiom: str, detail: str):
        super().__init__(f"{axiom}: {detail}")
        self.axiom = axiom
        self.detail = detail


class MoveNotPresent(ProofError):
    pass


def _axiom_sides(axiom: str, meta: dict, extra: dict):
    """Both sides of the schema under the given instantiation, checking
    side conditions.  The R2 premise is validated by the checker."""
    metas, extras = SCHEMA_PARAMS[axiom]
    for m in metas:
        if m not in meta or not isinstance(meta[m], Expr):
            raise MissingMeta(f"{axiom} needs expression {m}")
    for x in extras:
        if x not in extra:
            raise MissingMeta(f"{axiom} needs {x}")
    E = meta.get("E")
    F = meta.get("F")
    G = meta.get("G")
    X = extra.get("X")
    Y = extra.get("Y")
    if axiom == "S1":
        return Sum(E, F), Sum(F, E)
    if axiom == "S2":
        return Sum(E, Sum(F, G)), Sum(Sum(E, F), G)
    if axiom == "S3":
        return Sum(E, E), E
    if axiom == "S4":
        return Sum(E, NIL), E
    if axiom == "B":
        a = extra["a"]
        if not isinstance(a, Action):
            raise MissingMeta("B needs an action for a")
        return Prefix(a, Sum(Prefix(TAU, Sum(E, F)), F)), Prefix(a, Sum(E, F))
    if axiom == "R0":
        if Y in free_vars(Rec(X, E)):
            raise SideCondition("R0", f"{Y} occurs free in the recursion")
        return Rec(X, E), Rec(Y, substitute(E, {X: Var(Y)}))
    if axiom == "R1":
        return Rec(X, E), substitute(E, {X: Rec(X, E)})
    if axiom == "R2":
        if not is_guarded_in(X, E):
            raise SideCondition("R2", f"{X} is not guarded in the body")
        return F, Rec(X, E)
    if axiom == "R3":
        return Rec(X, Sum(Var(X), E)), Rec(X, E)
    if axiom == "R4":
        if not tau_exposes(X, E):
            raise SideCondition("R4", f"{X} is not reachable unguarded from the summand")
        return (
            Rec(X, Sum(Prefix(TAU, Sum(Prefix(TAU, E), F)), G)),
            Rec(X, Sum(Prefix(TAU, Sum(E, F)), G)),
        )
    if axiom == "R5":
        if X == Y:
            raise SideCondition("R5", "binders must be distinct")
        if not tau_exposes(X, E):
            raise SideCondition("R5", f"{X} is not reachable unguarded from the summand")
        inner_l = Rec(Y, Sum(Prefix(TAU, Var(Y)), E))
        return (
            Rec(X, Sum(Prefix(TAU, inner_l), F)),
            Rec(X, Sum(Prefix(TAU, Rec(Y, E)), F)),
        )
    if axiom == "R6":
        return (
            Rec(X, Prefix(TAU, E)),
            Prefix(TAU, Rec(X, substitute(E, {X: Prefix(TAU, Var(X))}))),
        )
    if axiom == "R7":
        if X == Y:
            raise SideCondition("R7", "binders must be distinct")
        inner = Rec(Y, Sum(Prefix(TAU, Var(Y)), E))
        return Rec(X, Sum(Prefix(TAU, Var(X)), inner)), Rec(X, inner)
    if axiom == "R8":
        if X == Y:
            raise SideCondition("R8", "binders must be distinct")
        return (
            Rec(X, Rec(Y, Sum(Prefix(TAU, Sum(Var(X), E)), F))),
            Rec(X, Rec(Y, Sum(Prefix(TAU, Sum(Var(Y), E)), F))),
        )
    raise ProofError(f"unknown axiom {axiom!r}")


# --- steps and derivations ----------------------------------------------------


@dataclass(frozen=True)
class Refl:
    pass


@dataclass(frozen=True)
class Symm:
    of: int


@dataclass(frozen=True)
class Trans:
    first: int
    second: int


@dataclass(frozen=True)
class AxiomStep:
    axiom: str
    meta: tuple  # ((name, Expr), ...)
    extra: tuple  # ((name, str | Action), ...)
    premise: Optional[int] = None


@dataclass(frozen=True)
class Cong:
    pos: str  # 'prefix' | 'suml' | 'sumr' | 'recbody'
    inner: int
    context: object  # Action | Expr | binder name


Just = Union[Refl, Symm, Trans, AxiomStep, Cong]


@dataclass(frozen=True)
class ProofStep:
    lhs: Expr
    rhs: Expr
    just: Just


@dataclass(frozen=True)
class Derivation:
    steps: tuple

    @property
    def conclusion(self):
        last = self.steps[-1]
        return (last.lhs, last.rhs)

    def __len__(self):
        return len(self.steps)


@dataclass(frozen=True)
class CheckFailure:
    index: int
    reason: str

    def __str__(self):
        return f"step {self.index}: {self.reason}"


def instantiate_axiom(axiom: str, meta: Mapping, extra: Mapping,
                      premise: Optional[int] = None) -> ProofStep:
    """A single axiom step; raises on unknown ids, missing bindings or
    violated side conditions."""
    if axiom not in AXIOM_IDS:
        raise ProofError(f"unknown axiom {axiom!r}")
    lhs, rhs = _axiom_sides(axiom, dict(meta), dict(extra))
    just = AxiomStep(
        axiom,
        tuple(sorted(meta.items())),
        tuple(sorted(extra.items())),
        premise,
    )
    return ProofStep(lhs, rhs, just)


def _check_step(steps, i) -> Optional[str]:
    st = steps[i]
    j = st.just
    if isinstance(j, Refl):
        if st.lhs != st.rhs:
            return "refl endpoints differ"
        return None
    if isinstance(j, Symm):
        if not 0 <= j.of < i:
            return "symm reference out of range"
        prev = steps[j.of]
        if st.lhs != prev.rhs or st.rhs != prev.lhs:
            return "symm endpoints do not mirror the referenced step"
        return None
    if isinstance(j, Trans):
        if not (0 <= j.first < i and 0 <= j.second < i):
            return "trans reference out of range"
        a, b = steps[j.first], steps[j.second]
        if a.rhs != b.lhs:
            return "trans endpoints do not meet"
        if st.lhs != a.lhs or st.rhs != b.rhs:
            return "trans endpoints differ from the referenced chain"
        return None
    if isinstance(j, AxiomStep):
        try:
            lhs, rhs = _axiom_sides(j.axiom, dict(j.meta), dict(j.extra))
        except ProofError as exc:
            return str(exc)
        if st.lhs != lhs or st.rhs != rhs:
            return f"{j.axiom} instance does not match the recorded bindings"
        if j.axiom == "R2":
            if j.premise is None or not 0 <= j.premise < i:
                return "R2 needs an earlier premise step"
            prem = steps[j.premise]
            meta = dict(j.meta)
            extra = dict(j.extra)
            if prem.lhs != st.lhs:
                return "R2 premise must share the left-hand side"
            expected = substitute(meta["E"], {extra["X"]: st.lhs})
            if prem.rhs != expected:
                return "R2 premise does not unfold the recursion body"
        elif j.premise is not None:
            return f"{j.axiom} takes no premise"
        return None
    if isinstance(j, Cong):
        if not 0 <= j.inner < i:
            return "cong reference out of range"
        inner = steps[j.inner]
        if j.pos == "prefix":
            ok = (
                isinstance(j.context, Action)
                and st.lhs == Prefix(j.context, inner.lhs)
                and st.rhs == Prefix(j.context, inner.rhs)
            )
        elif j.pos == "suml":
            ok = (
                isinstance(j.context, Expr)
                and st.lhs == Sum(inner.lhs, j.context)
                and st.rhs == Sum(inner.rhs, j.context)
            )
        elif j.pos == "sumr":
            ok = (
                isinstance(j.context, Expr)
                and st.lhs == Sum(j.context, inner.lhs)
                and st.rhs == Sum(j.context, inner.rhs)
            )
        elif j.pos == "recbody":
            ok = (
                isinstance(j.context, str)
                and st.lhs == Rec(j.context, inner.lhs)
                and st.rhs == Rec(j.context, inner.rhs)
            )
        else:
            return f"unknown congruence position {j.pos!r}"
        if not ok:
            return "congruence endpoints do not wrap the referenced step"
        return None
    return f"unknown justification {j!r}"


def check(derivation: Derivation) -> Optional[CheckFailure]:
    """None when every step is justified, else the first failure."""
    steps = derivation.steps
    if not steps:
        return CheckFailure(0, "empty derivation")
    for i in range(len(steps)):
        reason = _check_step(steps, i)
        if reason is not None:
            return CheckFailure(i, reason)
    return None


# --- derivation builder ---------------------------------------------------------


class Builder:
    """Accumulates justified steps with structural deduplication."""

    def __init__(self):
        self.steps = []
        self._index = {}

    def _emit(self, lhs: Expr, rhs: Expr, just: Just) -> int:
        key = (lhs, rhs, just)
        idx = self._index.get(key)
        if idx is None:
            idx = len(self.steps)
            self.steps.append(ProofStep(lhs, rhs, just))
            self._index[key] = idx
        return idx

    def endpoints(self, i: int):
        st = self.steps[i]
        return st.lhs, st.rhs

    def refl(self, e: Expr) -> int:
        return self._emit(e, e, Refl())

    def axiom(self, axiom: str, meta: Mapping, extra: Mapping = (),
              premise: Optional[int] = None) -> int:
        st = instantiate_axiom(axiom, dict(meta), dict(extra), premise)
        return self._emit(st.lhs, st.rhs, st.just)

    def symm(self, i: int) -> int:
        st = self.steps[i]
        if isinstance(st.just, Refl):
            return i
        if isinstance(st.just, Symm):
            return st.just.of
        return self._emit(st.rhs, st.lhs, Symm(i))

    def trans(self, i: int, j: int) -> int:
        a, b = self.steps[i], self.steps[j]
        if a.rhs != b.lhs:
            raise ProofError(
                f"cannot chain: {pretty(a.rhs)} vs {pretty(b.lhs)}")
        if isinstance(a.just, Refl):
            return j
        if isinstance(b.just, Refl):
            return i
        return self._emit(a.lhs, b.rhs, Trans(i, j))

    def chain(self, *idxs: int) -> int:
        acc = idxs[0]
        for i in idxs[1:]:
            acc = self.trans(acc, i)
        return acc

    def cong(self, pos: str, inner: int, context) -> int:
        st = self.steps[inner]
        if pos == "prefix":
            lhs, rhs = Prefix(context, st.lhs), Prefix(context, st.rhs)
        elif pos == "suml":
            lhs, rhs = Sum(st.lhs, context), Sum(st.rhs, context)
        elif pos == "sumr":
            lhs, rhs = Sum(context, st.lhs), Sum(context, st.rhs)
        elif pos == "recbody":
            lhs, rhs = Rec(context, st.lhs), Rec(context, st.rhs)
        else:
            raise ProofError(f"unknown congruence position {pos!r}")
        if isinstance(st.just, Refl):
            return self.refl(lhs)
        return self._emit(lhs, rhs, Cong(pos, inner, context))

    def rewrite_at(self, host: Expr, path, inner: int) -> int:
        """Lift a step to a rewrite of the subterm of `host` at `path`;
        the result proves host = host-with-subterm-replaced."""
        if not path:
            lhs, _ = self.endpoints(inner)
            if lhs != host:
                raise ProofError(
                    f"rewrite target mismatch: {pretty(lhs)} at {pretty(host)}")
            return inner
        head, rest = path[0], path[1:]
        if head == "prefix":
            return self.cong("prefix", self.rewrite_at(host.body, rest, inner), host.act)
        if head == "suml":
            return self.cong("suml", self.rewrite_at(host.left, rest, inner), host.right)
        if head == "sumr":
            return self.cong("sumr", self.rewrite_at(host.right, rest, inner), host.left)
        if head == "rec":
            return self.cong("recbody", self.rewrite_at(host.body, rest, inner), host.binder)
        raise ProofError(f"bad path element {head!r}")

    def rhs_after(self, i: int) -> Expr:
        return self.steps[i].rhs

    def splice(self, derivation: Derivation) -> int:
        """Import an existing derivation; returns the index of its
        conclusion step."""
        remap = {}
        last = -1
        for i, st in enumerate(derivation.steps):
            j = st.just
            if isinstance(j, Symm):
                j = Symm(remap[j.of])
            elif isinstance(j, Trans):
                j = Trans(remap[j.first], remap[j.second])
            elif isinstance(j, Cong):
                j = Cong(j.pos, remap[j.inner], j.context)
            elif isinstance(j, AxiomStep) and j.premise is not None:
                j = AxiomStep(j.axiom, j.meta, j.extra, remap[j.premise])
            remap[i] = self._emit(st.lhs, st.rhs, j)
            last = remap[i]
        return last

    def finalize(self, conclusion: int) -> Derivation:
        """Extract the reachable part of the derivation ending at the
        conclusion step."""
        needed = set()
        stack = [conclusion]
        while stack:
            i = stack.pop()
            if i in needed:
                continue
            needed.add(i)
            j = self.steps[i].just
            if isinstance(j, Symm):
                stack.append(j.of)
            elif isinstance(j, Trans):
                stack.extend((j.first, j.second))
            elif isinstance(j, Cong):
                stack.append(j.inner)
            elif isinstance(j, AxiomStep) and j.premise is not None:
                stack.append(j.premise)
        order = sorted(needed)
        remap = {old: new for new, old in enumerate(order)}
        out = []
        for old in order:
            st = self.steps[old]
            j = st.just
            if isinstance(j, Symm):
                j = Symm(remap[j.of])
            elif isinstance(j, Trans):
                j = Trans(remap[j.first], remap[j.second])
            elif isinstance(j, Cong):
                j = Cong(j.pos, remap[j.inner], j.context)
            elif isinstance(j, AxiomStep) and j.premise is not None:
                j = AxiomStep(j.axiom, j.meta, j.extra, remap[j.premise])
            out.append(ProofStep(st.lhs, st.rhs, j))
        return Derivation(tuple(out))


# --- sum rearrangement with proof ------------------------------------------------


def _prove_lassoc(b: Builder, e: Expr):
    """Flatten every nested sum onto the left spine; returns the
    left-nested tree and a step proving equality."""
    if not isinstance(e, Sum):
        return e, b.refl(e)
    cur = e
    acc = b.refl(e)
    while isinstance(cur.right, Sum):
        s2 = b.axiom("S2", {"E": cur.left, "F": cur.right.left, "G": cur.right.right})
        acc = b.trans(acc, s2)
        cur = Sum(Sum(cur.left, cur.right.left), cur.right.right)
    left2, dl = _prove_lassoc(b, cur.left)
    acc = b.trans(acc, b.cong("suml", dl, cur.right))
    return Sum(left2, cur.right), acc


def _prove_insert(b: Builder, tree: Expr, x: Expr):
    """Insert x into a sorted left-nested sum; proves Sum(tree, x) = result."""
    host = Sum(tree, x)
    if not isinstance(tree, Sum):
        if summand_key(x) >= summand_key(tree):
            return host, b.refl(host)
        return Sum(x, tree), b.axiom("S1", {"E": tree, "F": x})
    init, last = tree.left, tree.right
    if summand_key(x) >= summand_key(last):
        return host, b.refl(host)
    # (init + last) + x = init + (last + x) = init + (x + last) = (init + x) + last
    i1 = b.symm(b.axiom("S2", {"E": init, "F": last, "G": x}))
    i2 = b.cong("sumr", b.axiom("S1", {"E": last, "F": x}), init)
    i3 = b.axiom("S2", {"E": init, "F": x, "G": last})
    acc = b.chain(i1, i2, i3)
    inner, d = _prove_insert(b, init, x)
    acc = b.trans(acc, b.cong("suml", d, last))
    return Sum(inner, last), acc


def _prove_sort(b: Builder, e: Expr):
    """Insertion sort of a left-nested sum by summand order."""
    if not isinstance(e, Sum):
        return e, b.refl(e)
    init, last = e.left, e.right
    init2, d = _prove_sort(b, init)
    acc = b.cong("suml", d, last)
    res, d2 = _prove_insert(b, init2, last)
    return res, b.trans(acc, d2)


def _prove_compress(b: Builder, e: Expr):
    """Remove duplicate and empty summands from a sorted left-nested sum."""
    if not isinstance(e, Sum):
        return e, b.refl(e)
    init, last = e.left, e.right
    init2, d = _prove_compress(b, init)
    acc = b.cong("suml", d, last)
    cur = Sum(init2, last)
    if isinstance(last, Nil):
        return init2, b.trans(acc, b.axiom("S4", {"E": init2}))
    if init2 == last:
        return last, b.trans(acc, b.axiom("S3", {"E": last}))
    if isinstance(init2, Sum) and init2.right == last:
        # (I + x) + x = I + (x + x) = I + x
        i1 = b.symm(b.axiom("S2", {"E": init2.left, "F": last, "G": last}))
        i2 = b.cong("sumr", b.axiom("S3", {"E": last}), init2.left)
        return init2, b.chain(acc, i1, i2)
    return cur, acc


def prove_canon(b: Builder, e: Expr):
    """Prove e equal to its canonical sum form (sorted, duplicate- and
    0-free, left-nested)."""
    flat, d1 = _prove_lassoc(b, e)
    sorted_, d2 = _prove_sort(b, flat)
    out, d3 = _prove_compress(b, sorted_)
    return out, b.chain(d1, d2, d3)


def prove_sum_eq(b: Builder, lhs: Expr, rhs: Expr) -> int:
    """Prove two sums equal when their canonical forms coincide."""
    cl, dl = prove_canon(b, lhs)
    cr, dr = prove_canon(b, rhs)
    if cl != cr:
        raise ProofError(
            f"sums differ beyond S1-S4: {pretty(lhs)} vs {pretty(rhs)}")
    return b.trans(dl, b.symm(dr))


# --- alpha bridging -----------------------------------------------------------


def prove_alpha(b: Builder, lhs: Expr, rhs: Expr) -> int:
    """Prove two alpha-equivalent expressions equal via explicit renaming
    steps and congruence."""
    if lhs == rhs:
        return b.refl(lhs)
    if isinstance(lhs, Prefix) and isinstance(rhs, Prefix) and lhs.act == rhs.act:
        return b.cong("prefix", prove_alpha(b, lhs.body, rhs.body), lhs.act)
    if isinstance(lhs, Sum) and isinstance(rhs, Sum):
        d1 = b.cong("suml", prove_alpha(b, lhs.left, rhs.left), lhs.right)
        d2 = b.cong("sumr", prove_alpha(b, lhs.right, rhs.right), rhs.left)
        return b.trans(d1, d2)
    if isinstance(lhs, Rec) and isinstance(rhs, Rec):
        if lhs.binder == rhs.binder:
            return b.cong("recbody", prove_alpha(b, lhs.body, rhs.body), lhs.binder)
        ren = b.axiom("R0", {"E": lhs.body}, {"X": lhs.binder, "Y": rhs.binder})
        renamed = b.rhs_after(ren)
        inner = prove_alpha(b, renamed.body, rhs.body)
        return b.trans(ren, b.cong("recbody", inner, rhs.binder))
    raise ProofError(
        f"not alpha-equivalent: {pretty(lhs)} vs {pretty(rhs)}")


def prove_subst_cong(b: Builder, context: Expr, hole: str, inner: int) -> int:
    """Lift a proven equation into every free occurrence of `hole` in
    `context`: proves context{lhs/hole} = context{rhs/hole}."""
    lhs, rhs = b.endpoints(inner)
    if hole not in free_vars(context):
        return b.refl(context)
    if isinstance(context, Var):
        return inner
    if isinstance(context, Prefix):
        return b.cong(
            "prefix", prove_subst_cong(b, context.body, hole, inner), context.act)
    if isinstance(context, Sum):
        la = substitute(context.left, {hole: lhs})
        ra = substitute(context.right, {hole: lhs})
        lb = substitute(context.left, {hole: rhs})
        d1 = b.cong("suml", prove_subst_cong(b, context.left, hole, inner), ra)
        d2 = b.cong("sumr", prove_subst_cong(b, context.right, hole, inner), lb)
        return b.trans(d1, d2)
    # recursion with a free occurrence of the hole below
    y = context.binder
    if y not in free_vars(lhs) and y not in free_vars(rhs):
        return b.cong(
            "recbody", prove_subst_cong(b, context.body, hole, inner), y)
    z = fresh_name(all_vars(context.body) | free_vars(lhs) | free_vars(rhs) | {hole, y})
    body_z = substitute(context.body, {y: Var(z)})
    mid = b.cong("recbody", prove_subst_cong(b, body_z, hole, inner), z)
    left_bridge = prove_alpha(b, substitute(context, {hole: lhs}), b.endpoints(mid)[0])
    right_bridge = prove_alpha(b, b.endpoints(mid)[1], substitute(context, {hole: rhs}))
    return b.chain(left_bridge, mid, right_bridge)


# --- substitution through derivations --------------------------------------------


def _sigma_key(sigma: dict):
    return tuple(sorted(sigma.items(), key=lambda kv: kv[0]))


def subst_step(b: Builder, i: int, sigma: dict, _cache=None) -> int:
    """Transform a proven equation under a simultaneous substitution:
    returns a step proving lhs{sigma} = rhs{sigma}."""
    if _cache is None:
        _cache = {}
    st = b.steps[i]
    relevant = set(sigma) & (free_vars(st.lhs) | free_vars(st.rhs))
    sigma = {k: v for k, v in sigma.items() if k in relevant and v != Var(k)}
    if not sigma:
        return i
    key = (i, _sigma_key(sigma))
    if key in _cache:
        return _cache[key]
    res = _subst_step_raw(b, i, sigma, _cache)
    tl, tr = substitute(st.lhs, sigma), substitute(st.rhs, sigma)
    got = b.endpoints(res)
    if got != (tl, tr):
        raise ProofError(
            f"substitution transform drifted: {pretty(got[0])} = {pretty(got[1])}"
            f" wanted {pretty(tl)} = {pretty(tr)}")
    _cache[key] = res
    return res


def _subst_step_raw(b: Builder, i: int, sigma: dict, cache) -> int:
    st = b.steps[i]
    j = st.just
    tl = substitute(st.lhs, sigma)
    tr = substitute(st.rhs, sigma)
    if isinstance(j, Refl):
        return b.refl(tl)
    if isinstance(j, Symm):
        return b.symm(subst_step(b, j.of, sigma, cache))
    if isinstance(j, Trans):
        return b.trans(
            subst_step(b, j.first, sigma, cache),
            subst_step(b, j.second, sigma, cache),
        )
    if isinstance(j, Cong):
        if j.pos == "prefix":
            return b.cong("prefix", subst_step(b, j.inner, sigma, cache), j.context)
        if j.pos == "suml":
            return b.cong(
                "suml", subst_step(b, j.inner, sigma, cache),
                substitute(j.context, sigma))
        if j.pos == "sumr":
            return b.cong(
                "sumr", subst_step(b, j.inner, sigma, cache),
                substitute(j.context, sigma))
        # recbody: the binder may need renaming away from the substitution
        y = j.context
        inner_st = b.steps[j.inner]
        sigma2 = {k: v for k, v in sigma.items() if k != y}
        captured = any(y in free_vars(v) for v in sigma2.values())
        if not captured:
            inner2 = subst_step(b, j.inner, sigma2, cache)
            out = b.cong("recbody", inner2, y)
        else:
            avoid = (
                all_vars(inner_st.lhs) | all_vars(inner_st.rhs) | set(sigma2) | {y})
            for v in sigma2.values():
                avoid |= free_vars(v)
            z = fresh_name(avoid)
            composed = dict(sigma2)
            composed[y] = Var(z)
            inner2 = subst_step(b, j.inner, composed, cache)
            out = b.cong("recbody", inner2, z)
        got = b.endpoints(out)
        if got == (tl, tr):
            return out
        return b.chain(prove_alpha(b, tl, got[0]), out, prove_alpha(b, got[1], tr))
    if isinstance(j, AxiomStep):
        return _subst_axiom(b, st, sigma, cache)
    raise ProofError(f"unknown justification {j!r}")


def _subst_axiom(b: Builder, st: ProofStep, sigma: dict, cache) -> int:
    j = st.just
    meta = dict(j.meta)
    extra = dict(j.extra)
    tl = substitute(st.lhs, sigma)
    tr = substitute(st.rhs, sigma)
    metas, extras = SCHEMA_PARAMS[j.axiom]
    binders = [x for x in extras if x != "a"]
    if not binders:
        meta2 = {m: substitute(v, sigma) for m, v in meta.items()}
        return b.axiom(j.axiom, meta2, extra)
    # rename schema binders to names untouched by the substitution
    avoid = set(sigma) | {extra[x] for x in binders}
    for v in sigma.values():
        avoid |= free_vars(v)
    for v in meta.values():
        avoid |= all_vars(v)
    ren = {}
    extra2 = dict(extra)
    for x in binders:
        z = fresh_name(avoid)
        avoid.add(z)
        ren[extra[x]] = Var(z)
        extra2[x] = z
    composed = {k: v for k, v in sigma.items() if k not in ren}
    composed.update(ren)
    meta2 = {m: substitute(v, composed) for m, v in meta.items()}
    premise2 = None
    if j.axiom == "R2":
        prem_idx = subst_step(b, j.premise, sigma, cache)
        # align the premise with the renamed instance if needed
        want_rhs = substitute(meta2["E"], {extra2["X"]: tl})
        got_l, got_r = b.endpoints(prem_idx)
        if got_r != want_rhs:
            prem_idx = b.trans(prem_idx, prove_alpha(b, got_r, want_rhs))
        meta2["F"] = tl
        premise2 = prem_idx
    out = b.axiom(j.axiom, meta2, extra2, premise2)
    got = b.endpoints(out)
    if got == (tl, tr):
        return out
    return b.chain(prove_alpha(b, tl, got[0]), out, prove_alpha(b, got[1], tr))


# --- derived rules ----------------------------------------------------------------


def _t1(b: Builder, a: Action, e: Expr) -> int:
    """a.tau.e = a.e via the branching axiom with an empty second summand."""
    s4 = b.axiom("S4", {"E": e})
    i1 = b.cong("prefix", b.symm(s4), TAU)  # tau.e = tau.(e+0)
    s4b = b.axiom("S4", {"E": Prefix(TAU, Sum(e, NIL))})
    i2 = b.trans(i1, b.symm(s4b))  # tau.e = tau.(e+0)+0
    i3 = b.cong("prefix", i2, a)  # a.tau.e = a.(tau.(e+0)+0)
    i4 = b.axiom("B", {"E": e, "F": NIL}, {"a": a})  # ... = a.(e+0)
    i5 = b.trans(i3, i4)
    i6 = b.cong("prefix", s4, a)  # a.(e+0) = a.e
    return b.trans(i5, i6)


def derive_T1(a: Action, e: Expr) -> Derivation:
    """a.tau.e = a.e."""
    b = Builder()
    return b.finalize(_t1(b, a, e))


class _Blocked(Exception):
    """Internal: the current search path revisited a goal."""


def _summand_move(b: Builder, e: Expr, a: Action, target: Expr,
                  _seen=None) -> int:
    """e = e + a.target, replaying a minimal derivation of the move.

    Goals already on the search path are dead ends: a minimal transition
    derivation never passes through its own conclusion.
    """
    if _seen is None:
        _seen = frozenset()
    if e in _seen:
        raise _Blocked
    seen = _seen | {e}
    added = Prefix(a, target)
    if isinstance(e, Prefix) and e.act == a and e.body == target:
        return b.symm(b.axiom("S3", {"E": e}))
    if isinstance(e, Sum):
        branches = []
        if (a, target) in sos_step(e.left):
            branches.append("left")
        if (a, target) in sos_step(e.right):
            branches.append("right")
        for side in branches:
            try:
                if side == "left":
                    ih = _summand_move(b, e.left, a, target, seen)
                    i1 = b.cong("suml", ih, e.right)  # l+r = (l+a.t)+r
                    i2 = b.symm(b.axiom("S2", {"E": e.left, "F": added, "G": e.right}))
                    i3 = b.cong("sumr", b.axiom("S1", {"E": added, "F": e.right}), e.left)
                    i4 = b.axiom("S2", {"E": e.left, "F": e.right, "G": added})
                    return b.chain(i1, i2, i3, i4)
                ih = _summand_move(b, e.right, a, target, seen)
                i1 = b.cong("sumr", ih, e.left)  # l+r = l+(r+a.t)
                i2 = b.axiom("S2", {"E": e.left, "F": e.right, "G": added})
                return b.chain(i1, i2)
            except _Blocked:
                continue
        if branches:
            raise _Blocked
        raise MoveNotPresent(f"{pretty(e)} has no {a} move to {pretty(target)}")
    if isinstance(e, Rec):
        if (a, target) not in sos_step(e):
            raise MoveNotPresent(f"{pretty(e)} has no {a} move to {pretty(target)}")
        unfolded = substitute(e.body, {e.binder: e})
        r1 = b.axiom("R1", {"E": e.body}, {"X": e.binder})  # e = unfolded
        ih = _summand_move(b, unfolded, a, target, seen)
        i1 = b.trans(r1, ih)  # e = unfolded + a.t
        i2 = b.cong("suml", b.symm(r1), added)
        return b.trans(i1, i2)
    raise MoveNotPresent(f"{pretty(e)} has no {a} move to {pretty(target)}")


def _summand_exposure(b: Builder, e: Expr, x: str, _seen=None) -> int:
    """e = e + x, replaying a minimal derivation of the exposure."""
    if _seen is None:
        _seen = frozenset()
    if e in _seen:
        raise _Blocked
    seen = _seen | {e}
    added = Var(x)
    if isinstance(e, Var) and e.name == x:
        return b.symm(b.axiom("S3", {"E": e}))
    if isinstance(e, Sum):
        branches = []
        if x in exposes(e.left):
            branches.append("left")
        if x in exposes(e.right):
            branches.append("right")
        for side in branches:
            try:
                if side == "left":
                    ih = _summand_exposure(b, e.left, x, seen)
                    i1 = b.cong("suml", ih, e.right)
                    i2 = b.symm(b.axiom("S2", {"E": e.left, "F": added, "G": e.right}))
                    i3 = b.cong("sumr", b.axiom("S1", {"E": added, "F": e.right}), e.left)
                    i4 = b.axiom("S2", {"E": e.left, "F": e.right, "G": added})
                    return b.chain(i1, i2, i3, i4)
                ih = _summand_exposure(b, e.right, x, seen)
                i1 = b.cong("sumr", ih, e.left)
                i2 = b.axiom("S2", {"E": e.left, "F": e.right, "G": added})
                return b.chain(i1, i2)
            except _Blocked:
                continue
        if branches:
            raise _Blocked
        raise MoveNotPresent(f"{pretty(e)} does not expose {x}")
    if isinstance(e, Rec):
        if x not in exposes(e):
            raise MoveNotPresent(f"{pretty(e)} does not expose {x}")
        unfolded = substitute(e.body, {e.binder: e})
        r1 = b.axiom("R1", {"E": e.body}, {"X": e.binder})
        ih = _summand_exposure(b, unfolded, x, seen)
        i1 = b.trans(r1, ih)
        i2 = b.cong("suml", b.symm(r1), added)
        return b.trans(i1, i2)
    raise MoveNotPresent(f"{pretty(e)} does not expose {x}")


def derive_summand_absorption(e: Expr, move) -> Derivation:
    """e = e + a.e' for a move of e, or e = e + X for an exposed variable."""
    b = Builder()
    if isinstance(move, str):
        if move not in exposes(e):
            raise MoveNotPresent(f"{pretty(e)} does not expose {move}")
        idx = _summand_exposure(b, e, move)
    else:
        a, target = move
        if (a, target) not in sos_step(e):
            raise MoveNotPresent(
                f"{pretty(e)} has no {a} move to {pretty(target)}")
        idx = _summand_move(b, e, a, target)
    return b.finalize(idx)


def _tau_path_to_exposure(e: Expr, x: str):
    """Shortest silent path from e to an expression exposing x,
    deterministic by derivative order."""
    if x in exposes(e):
        return [e]
    seen = {e}
    queue = [[e]]
    qi = 0
    while qi < len(queue):
        path = queue[qi]
        qi += 1
        for a, nxt in sos_step(path[-1]):
            if not a.is_tau or nxt in seen:
                continue
            if x in exposes(nxt):
                return path + [nxt]
            seen.add(nxt)
            queue.append(path + [nxt])
    return None


def _d0(b: Builder, e: Expr, f: Expr, x: str) -> int:
    """rec x.(tau.e + f) = rec x.(tau.(x + e) + f), given that e reaches
    an exposure of x by silent moves.

    The witnessing silent path e -> e1 -> ... -> en is absorbed summand
    by summand, the exposed variable is added, and the path is removed
    again; every tau in front of a path state is eliminated with R4.
    """
    path = _tau_path_to_exposure(e, x)
    if path is None:
        raise SideCondition("D0", f"{x} is not reachable unguarded from {pretty(e)}")

    def lift(inner: int) -> int:
        lhs, _ = b.endpoints(inner)
        host = Rec(x, Sum(Prefix(TAU, lhs), f))
        return b.rewrite_at(host, ["rec", "suml", "prefix"], inner)

    total = b.refl(Rec(x, Sum(Prefix(TAU, e), f)))
    accs = [e]  # accs[i] is e + e1 + ... + ei
    for i in range(1, len(path)):
        ei = path[i]
        acc = accs[-1]
        total = b.trans(total, lift(_summand_move(b, acc, TAU, ei)))
        total = b.trans(
            total,
            lift(prove_sum_eq(b, Sum(acc, Prefix(TAU, ei)), Sum(Prefix(TAU, ei), acc))),
        )
        total = b.trans(
            total, b.axiom("R4", {"E": ei, "F": acc, "G": f}, {"X": x}))
        total = b.trans(total, lift(prove_sum_eq(b, Sum(ei, acc), Sum(acc, ei))))
        accs.append(Sum(acc, ei))
    # expose the variable and move it to the front
    acc = accs[-1]
    total = b.trans(total, lift(_summand_exposure(b, acc, x)))
    total = b.trans(
        total, lift(prove_sum_eq(b, Sum(acc, Var(x)), Sum(Var(x), acc))))
    # strip the path states from the back, re-introducing each tau with R4
    for i in range(len(path) - 1, 0, -1):
        ei = path[i]
        rest = Sum(Var(x), accs[i - 1])
        total = b.trans(
            total,
            lift(prove_sum_eq(b, Sum(Var(x), accs[i]), Sum(ei, rest))))
        total = b.trans(
            total, b.symm(b.axiom("R4", {"E": ei, "F": rest, "G": f}, {"X": x})))
        total = b.trans(
            total,
            lift(prove_sum_eq(b, Sum(Prefix(TAU, ei), rest), Sum(rest, Prefix(TAU, ei)))))
        total = b.trans(
            total, lift(b.symm(_summand_move(b, rest, TAU, ei))))
    return total


def derive_D0(e: Expr, f: Expr, x: str) -> Derivation:
    """rec x.(tau.e + f) = rec x.(tau.(x + e) + f)."""
    b = Builder()
    return b.finalize(_d0(b, e, f, x))


# --- certificate file format --------------------------------------------------
#
#   step <n> <lhs> = <rhs> by refl
#   step <n> <lhs> = <rhs> by symm <k>
#   step <n> <lhs> = <rhs> by trans <k> <l>
#   step <n> <lhs> = <rhs> by axiom <ID> {E:=..., X:=..., a:=...} [premise <k>]
#   step <n> <lhs> = <rhs> by cong <pos> <k> in <context with hole>


HOLE = "◻"  # white medium square


def _format_binding(name: str, value) -> str:
    if isinstance(value, Expr):
        return f"{name}:={pretty(value)}"
    if isinstance(value, Action):
        return f"{name}:={value.name}"
    return f"{name}:={value}"


def _format_just(just: Just) -> str:
    if isinstance(just, Refl):
        return "refl"
    if isinstance(just, Symm):
        return f"symm {just.of}"
    if isinstance(just, Trans):
        return f"trans {just.first} {just.second}"
    if isinstance(just, AxiomStep):
        parts = [_format_binding(n, v) for n, v in just.meta]
        parts += [_format_binding(n, v) for n, v in just.extra]
        text = f"axiom {just.axiom} {{{', '.join(parts)}}}"
        if just.premise is not None:
            text += f" premise {just.premise}"
        return text
    if isinstance(just, Cong):
        if just.pos == "prefix":
            ctx = f"{just.context.name}.{HOLE}"
        elif just.pos == "suml":
            ctx = f"{HOLE} + {pretty(just.context)}"
        elif just.pos == "sumr":
            ctx = f"{pretty(just.context)} + {HOLE}"
        else:
            ctx = f"rec {just.context}. {HOLE}"
        return f"cong {just.pos} {just.inner} in {ctx}"
    raise ProofError(f"cannot format {just!r}")


def format_derivation(d: Derivation) -> str:
    lhs, rhs = d.conclusion
    lines = [f"# proves: {pretty(lhs)} = {pretty(rhs)}"]
    for i, st in enumerate(d.steps):
        lines.append(
            f"step {i} {pretty(st.lhs)} = {pretty(st.rhs)} by {_format_just(st.just)}")
    return "\n".join(lines) + "\n"


class CertificateError(ValueError):
    pass


def _parse_bindings(axiom: str, text: str):
    metas, extras = SCHEMA_PARAMS[axiom]
    meta, extra = {}, {}
    text = text.strip()
    if text:
        for chunk in text.split(","):
            if ":=" not in chunk:
                raise CertificateError(f"bad binding {chunk!r}")
            name, value = chunk.split(":=", 1)
            name = name.strip()
            value = value.strip()
            if name in metas:
                meta[name] = parse(value)
            elif name == "a":
                extra[name] = Action(value)
            elif name in extras:
                extra[name] = value
            else:
                raise CertificateError(f"{axiom} takes no parameter {name!r}")
    return meta, extra


def _parse_just(text: str) -> Just:
    text = text.strip()
    if text == "refl":
        return Refl()
    if text.startswith("symm "):
        return Symm(int(text[5:].strip()))
    if text.startswith("trans "):
        a, b = text[6:].split()
        return Trans(int(a), int(b))
    if text.startswith("axiom "):
        rest = text[6:].strip()
        name, _, rest = rest.partition(" ")
        if name not in AXIOM_IDS:
            raise CertificateError(f"unknown axiom {name!r}")
        rest = rest.strip()
        premise = None
        if not rest.startswith("{") or "}" not in rest:
            raise CertificateError(f"missing bindings for {name}")
        body, _, tail = rest[1:].partition("}")
        tail = tail.strip()
        if tail:
            if not tail.startswith("premise "):
                raise CertificateError(f"unexpected trailer {tail!r}")
            premise = int(tail[8:].strip())
        meta, extra = _parse_bindings(name, body)
        return AxiomStep(
            name, tuple(sorted(meta.items())), tuple(sorted(extra.items())), premise)
    if text.startswith("cong "):
        rest = text[5:]
        pos, _, rest = rest.partition(" ")
        num, _, rest = rest.strip().partition(" ")
        inner = int(num)
        rest = rest.strip()
        if not rest.startswith("in "):
            raise CertificateError("congruence step is missing its context")
        ctx = rest[3:].strip()
        if pos == "prefix":
            if not ctx.endswith(f".{HOLE}"):
                raise CertificateError(f"bad prefix context {ctx!r}")
            return Cong("prefix", inner, Action(ctx[: -len(HOLE) - 1]))
        if pos == "suml":
            if not ctx.startswith(f"{HOLE} + "):
                raise CertificateError(f"bad suml context {ctx!r}")
            return Cong("suml", inner, parse(ctx[len(HOLE) + 3 :]))
        if pos == "sumr":
            if not ctx.endswith(f" + {HOLE}"):
                raise CertificateError(f"bad sumr context {ctx!r}")
            return Cong("sumr", inner, parse(ctx[: -len(HOLE) - 3]))
        if pos == "recbody":
            prefix = "rec "
            if not (ctx.startswith(prefix) and ctx.endswith(f". {HOLE}")):
                raise CertificateError(f"bad recbody context {ctx!r}")
            return Cong("recbody", inner, ctx[len(prefix) : -len(HOLE) - 2].strip())
        raise CertificateError(f"unknown congruence position {pos!r}")
    raise CertificateError(f"unknown justification {text!r}")


def parse_derivation(text: str) -> Derivation:
    steps = []
    for raw in text.splitlines():
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if not line.startswith("step "):
            raise CertificateError(f"unexpected line {line!r}")
        rest = line[5:]
        num, _, rest = rest.partition(" ")
        try:
            if int(num) != len(steps):
                raise CertificateError(
                    f"step numbered {num} but {len(steps)} expected")
            body, sep, just_text = rest.rpartition(" by ")
            if not sep:
                raise CertificateError(f"step {num} has no justification")
            if " = " not in body:
                raise CertificateError(f"step {num} is not an equation")
            lhs_text, _, rhs_text = body.partition(" = ")
            steps.append(
                ProofStep(parse(lhs_text), parse(rhs_text), _parse_just(just_text)))
        except ValueError as exc:
            if isinstance(exc, CertificateError):
                raise
            raise CertificateError(f"malformed step {num!r}: {exc}") from exc
    if not steps:
        raise CertificateError("certificate has no steps")
    return Derivation(tuple(steps))
