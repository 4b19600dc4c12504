"""Decision procedures for the bisimilarities and rooted congruence.

The functionals on pair relations are transcribed literally from their
clause definitions.  `bisimilarity` runs the pair-level greatest
fixpoint iteration R <- sym(R & F(R)) from the full relation; a
vectorized engine computes the same iterates for speed and is
cross-checked against the literal transcription in the test suite.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .semantics import Lts, build_lts, union_lts, _can_reach_tau_cycle, DEFAULT_BUDGET
from .syntax import Expr

KINDS = ("strong", "branching", "dpbb")


@dataclass(frozen=True)
class PairRelation:
    """A set of state pairs over a finite transition system."""

    lts: Lts
    pairs: frozenset

    def __contains__(self, pair):
        return pair in self.pairs

    def is_symmetric(self) -> bool:
        return all((j, i) in self.pairs for i, j in self.pairs)


@dataclass(frozen=True)
class Partition:
    """Equivalence classes over the states of a transition system.

    Class ids are dense from 0, assigned by first occurrence, so equal
    partitions compare equal as values.
    """

    lts: Lts
    class_of: tuple

    @property
    def n_classes(self) -> int:
        return max(self.class_of) + 1 if self.class_of else 0

    def same(self, i: int, j: int) -> bool:
        return self.class_of[i] == self.class_of[j]

    def blocks(self):
        out = [[] for _ in range(self.n_classes)]
        for s, c in enumerate(self.class_of):
            out[c].append(s)
        return [tuple(b) for b in out]

    def pairs(self) -> PairRelation:
        ps = {
            (i, j)
            for i in range(len(self.class_of))
            for j in range(len(self.class_of))
            if self.class_of[i] == self.class_of[j]
        }
        return PairRelation(self.lts, frozenset(ps))


def full_relation(lts: Lts) -> PairRelation:
    n = lts.n_states
    return PairRelation(lts, frozenset((i, j) for i in range(n) for j in range(n)))


def identity_relation(lts: Lts) -> PairRelation:
    return PairRelation(lts, frozenset((i, i) for i in range(lts.n_states)))


# --- literal functionals -----------------------------------------------------


def _strong_ok(lts: Lts, pairs, i: int, j: int) -> bool:
    for a, ip in lts.succ(i):
        if not any(a2 == a and (ip, jp) in pairs for a2, jp in lts.succ(j)):
            return False
    for x in lts.exposure[i]:
        if x not in lts.exposure[j]:
            return False
    return True


def _branching_ok(lts: Lts, pairs, i: int, j: int, progressing: bool) -> bool:
    for a, ip in lts.succ(i):
        ok = False
        if a.is_tau:
            dom = lts.tau_closure_plus(j) if progressing else lts.tau_closure(j)
            ok = any((i, jp) in pairs and (ip, jp) in pairs for jp in dom)
        if not ok:
            for jmid in lts.tau_closure(j):
                if (i, jmid) not in pairs:
                    continue
                if any(a2 == a and (ip, jp) in pairs for a2, jp in lts.succ(jmid)):
                    ok = True
                    break
        if not ok:
            return False
    for x in lts.exposure[i]:
        ok = any(
            (i, jmid) in pairs and x in lts.exposure[jmid]
            for jmid in lts.tau_closure(j)
        )
        if not ok:
            return False
    return True


def _divergence_ok(lts: Lts, pairs, i: int, j: int) -> bool:
    """Every infinite silent run from state i must pass through a state
    matched (after at least one silent step of j) by the relation."""
    n = lts.n_states
    matched = set()
    plus = lts.tau_closure_plus(j)
    for ip in range(n):
        if any((ip, jp) in pairs for jp in plus):
            matched.add(ip)
    if i in matched:
        return True
    allowed = set(range(n)) - matched
    return i not in _can_reach_tau_cycle(lts, [i], allowed)


def functional_S(rel: PairRelation) -> PairRelation:
    lts = rel.lts
    n = lts.n_states
    out = {
        (i, j)
        for i in range(n)
        for j in range(n)
        if _strong_ok(lts, rel.pairs, i, j)
    }
    return PairRelation(lts, frozenset(out))


def functional_B(rel: PairRelation) -> PairRelation:
    lts = rel.lts
    n = lts.n_states
    out = {
        (i, j)
        for i in range(n)
        for j in range(n)
        if _branching_ok(lts, rel.pairs, i, j, progressing=False)
    }
    return PairRelation(lts, frozenset(out))


def functional_Bp(rel: PairRelation) -> PairRelation:
    lts = rel.lts
    n = lts.n_states
    out = {
        (i, j)
        for i in range(n)
        for j in range(n)
        if _branching_ok(lts, rel.pairs, i, j, progressing=True)
    }
    return PairRelation(lts, frozenset(out))


def functional_Bd(rel: PairRelation) -> PairRelation:
    lts = rel.lts
    n = lts.n_states
    out = {
        (i, j)
        for i in range(n)
        for j in range(n)
        if _branching_ok(lts, rel.pairs, i, j, progressing=False)
        and _divergence_ok(lts, rel.pairs, i, j)
    }
    return PairRelation(lts, frozenset(out))


FUNCTIONALS = {
    "strong": functional_S,
    "branching": functional_B,
    "dpbb": functional_Bd,
}


# --- vectorized fixpoint engine ----------------------------------------------


def _bool_mm(a, b):
    return (a.astype(np.uint8) @ b.astype(np.uint8)) > 0


class _Engine:
    def __init__(self, lts: Lts):
        self.lts = lts
        n = lts.n_states
        self.n = n
        acts = sorted({a for _, a, _ in lts.transitions}, key=lambda a: a.key())
        self.edges = {}
        for a in acts:
            m = np.zeros((n, n), dtype=bool)
            self.edges[a] = m
        for src, a, dst in lts.transitions:
            self.edges[a][src, dst] = True
        tau = next((a for a in acts if a.is_tau), None)
        e_tau = self.edges[tau] if tau is not None else np.zeros((n, n), dtype=bool)
        t = e_tau | np.eye(n, dtype=bool)
        while True:
            t2 = t | _bool_mm(t, t)
            if (t2 == t).all():
                break
            t = t2
        self.tau_star = t
        self.tau_plus = _bool_mm(e_tau, t)
        self.moves = [lts.succ(i) for i in range(n)]
        self.expose_vec = {}
        for s in range(n):
            for x in lts.exposure[s]:
                if x not in self.expose_vec:
                    self.expose_vec[x] = np.zeros(n, dtype=bool)
                self.expose_vec[x][s] = True

    def apply(self, r, kind: str):
        n = self.n
        if n == 0:
            return r
        ok = np.ones((n, n), dtype=bool)
        t, tp = self.tau_star, self.tau_plus
        for i in range(n):
            for a, ip in self.moves[i]:
                if kind == "strong":
                    cond = _bool_mm(self.edges[a], r[ip][:, None])[:, 0]
                else:
                    inner = _bool_mm(self.edges[a], r[ip][:, None])[:, 0]
                    cond = _bool_mm(t, (r[i] & inner)[:, None])[:, 0]
                    if a.is_tau:
                        stut_dom = tp if kind == "progressing" else t
                        cond |= _bool_mm(stut_dom, (r[i] & r[ip])[:, None])[:, 0]
                ok[i] &= cond
            for x in self.lts.exposure[i]:
                ev = self.expose_vec[x]
                if kind == "strong":
                    ok[i] &= ev
                else:
                    ok[i] &= _bool_mm(t, (r[i] & ev)[:, None])[:, 0]
        if kind == "dpbb":
            ok &= self._divergence_matrix(r)
        return ok

    def _divergence_matrix(self, r):
        n = self.n
        ok = np.ones((n, n), dtype=bool)
        # matched[ip, j]: some state silently reachable from j in >= 1 steps
        # is related to ip
        matched = _bool_mm(r, self.tau_plus.T)
        full_div = _can_reach_tau_cycle(self.lts, range(n))
        for j in range(n):
            col = matched[:, j]
            suspects = [i for i in full_div if not col[i]]
            if not suspects:
                continue
            allowed = {i for i in range(n) if not col[i]}
            bad = _can_reach_tau_cycle(self.lts, suspects, allowed)
            for i in bad:
                ok[i, j] = False
        return ok


def _iterate(lts: Lts, kind: str):
    eng = _Engine(lts)
    n = lts.n_states
    r = np.ones((n, n), dtype=bool)
    while True:
        nxt = r & eng.apply(r, kind)
        nxt &= nxt.T
        if (nxt == r).all():
            return r
        r = nxt


def bisimilarity(lts: Lts, kind: str) -> Partition:
    """The coarsest symmetric post-fixpoint of the selected functional,
    as a partition of the states."""
    if kind not in KINDS:
        raise ValueError(f"unknown relation kind {kind!r}")
    n = lts.n_states
    if n == 0:
        return Partition(lts, ())
    r = _iterate(lts, kind)
    class_of = [-1] * n
    nxt = 0
    for i in range(n):
        if class_of[i] >= 0:
            continue
        class_of[i] = nxt
        for j in range(i + 1, n):
            if r[i, j] and r[j, i]:
                class_of[j] = nxt
        nxt += 1
    return Partition(lts, tuple(class_of))


# --- rooted congruence --------------------------------------------------------


@dataclass(frozen=True)
class RootedCheck:
    """Outcome of a rooted-congruence check, with a witness on failure."""

    equal: bool
    clause: Optional[str] = None  # 'forth' | 'back' | 'exposure'
    detail: str = ""
    lts: Optional[Lts] = None
    partition: Optional[Partition] = None
    root_left: int = -1
    root_right: int = -1

    def __bool__(self):
        return self.equal


def rooted_check(e: Expr, f: Expr, budget: int = DEFAULT_BUDGET) -> RootedCheck:
    """Check the three root clauses over the joint dpbb partition."""
    le = build_lts(e, budget)
    lf = build_lts(f, budget)
    joint, re_, rf = union_lts(le, lf)
    part = bisimilarity(joint, "dpbb")

    def find_match(lts, src_move, other_root, flip):
        a, tgt = src_move
        for a2, tgt2 in joint.succ(other_root):
            if a2 == a and part.same(tgt, tgt2):
                return tgt2
        return None

    for a, tgt in joint.succ(re_):
        if find_match(joint, (a, tgt), rf, False) is None:
            return RootedCheck(
                False, "forth",
                f"left move {a}.{joint.states[tgt][1]} has no matching right move",
                joint, part, re_, rf)
    for a, tgt in joint.succ(rf):
        if find_match(joint, (a, tgt), re_, True) is None:
            return RootedCheck(
                False, "back",
                f"right move {a}.{joint.states[tgt][1]} has no matching left move",
                joint, part, re_, rf)
    if joint.exposure[re_] != joint.exposure[rf]:
        diff = joint.exposure[re_] ^ joint.exposure[rf]
        return RootedCheck(
            False, "exposure",
            f"exposure sets differ on {sorted(diff)}",
            joint, part, re_, rf)
    return RootedCheck(True, None, "", joint, part, re_, rf)


def rooted_equal(e: Expr, f: Expr, budget: int = DEFAULT_BUDGET) -> RootedCheck:
    return rooted_check(e, f, budget)


def equivalent(e: Expr, f: Expr, kind: str, budget: int = DEFAULT_BUDGET) -> bool:
    """Are the two expressions related by the selected bisimilarity?"""
    if kind == "rooted":
        return rooted_check(e, f, budget).equal
    le = build_lts(e, budget)
    lf = build_lts(f, budget)
    joint, re_, rf = union_lts(le, lf)
    part = bisimilarity(joint, kind)
    return part.same(re_, rf)


# --- brute-force oracle --------------------------------------------------------


def _set_partitions(items):
    """All set partitions of a list (each as a list of blocks)."""
    if not items:
        yield []
        return
    first, rest = items[0], items[1:]
    for smaller in _set_partitions(rest):
        for k in range(len(smaller)):
            yield smaller[:k] + [[first] + smaller[k]] + smaller[k + 1 :]
        yield [[first]] + smaller


def brute_oracle(lts: Lts, kind: str) -> Partition:
    """Definitional oracle: the union of all equivalence post-fixpoints.

    Every symmetric post-fixpoint is contained in the coarsest one, which
    is an equivalence, so enumerating candidate partitions reaches the
    same union as enumerating all symmetric relations.  Rejects systems
    with more than 8 states.
    """
    n = lts.n_states
    if n > 8:
        raise ValueError("brute_oracle accepts at most 8 states")
    if kind not in KINDS:
        raise ValueError(f"unknown relation kind {kind!r}")
    func = FUNCTIONALS[kind]
    union = set()
    for blocks in _set_partitions(list(range(n))):
        pairs = frozenset(
            (i, j) for block in blocks for i in block for j in block
        )
        image = func(PairRelation(lts, pairs))
        if pairs <= image.pairs:
            union |= pairs
    # union of post-fixpoints; build the partition by closure
    parent = list(range(n))

    def find(i):
        while parent[i] != i:
            parent[i] = parent[parent[i]]
            i = parent[i]
        return i

    for i, j in union:
        ri, rj = find(i), find(j)
        if ri != rj:
            parent[max(ri, rj)] = min(ri, rj)
    class_of = [-1] * n
    nxt = 0
    for i in range(n):
        r = find(i)
        if class_of[r] < 0:
            class_of[r] = nxt
            nxt += 1
        class_of[i] = class_of[r]
    return Partition(lts, tuple(class_of))
