"""Operational semantics: transitions, exposure, finite transition systems.

States of a built LTS are syntactically distinct expressions; recursion
is stepped by unfolding the body's derivatives, which keeps the
reachable closure finite for this calculus.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache
from typing import Optional

from .syntax import Expr, Prefix, Rec, Sum, Var, expr_key, substitute

DEFAULT_BUDGET = 100000


class BudgetExceeded(Exception):
    """Raised when a state-space construction passes its state budget."""


@lru_cache(maxsize=None)
def step(e: Expr):
    """All derivatives of e, sorted by (action, expression) order."""
    out = set()
    if isinstance(e, Prefix):
        out.add((e.act, e.body))
    elif isinstance(e, Sum):
        out.update(step(e.left))
        out.update(step(e.right))
    elif isinstance(e, Rec):
        for act, deriv in step(e.body):
            out.add((act, substitute(deriv, {e.binder: e})))
    return tuple(sorted(out, key=lambda p: (p[0].key(), expr_key(p[1]))))


@lru_cache(maxsize=None)
def exposes(e: Expr) -> frozenset:
    """The variables e exposes as immediate unguarded summands."""
    if isinstance(e, Var):
        return frozenset((e.name,))
    if isinstance(e, Sum):
        return exposes(e.left) | exposes(e.right)
    if isinstance(e, Rec):
        return exposes(e.body) - {e.binder}
    return frozenset()


def tau_exposes(x: str, e: Expr, budget: int = DEFAULT_BUDGET) -> bool:
    """True iff some expression reachable from e by silent steps exposes x."""
    seen = {e}
    frontier = [e]
    while frontier:
        cur = frontier.pop()
        if x in exposes(cur):
            return True
        for act, nxt in step(cur):
            if act.is_tau and nxt not in seen:
                if len(seen) >= budget:
                    raise BudgetExceeded(f"state budget {budget} exceeded")
                seen.add(nxt)
                frontier.append(nxt)
    return False


@dataclass(frozen=True)
class Lts:
    """A finite labelled transition system with per-state exposure sets."""

    states: tuple
    transitions: tuple  # (src, Action, dst), sorted
    exposure: tuple  # frozenset of identifiers per state
    root: Optional[int]

    @property
    def n_states(self) -> int:
        return len(self.states)

    def succ(self, s: int):
        return self._adjacency()[s]

    def tau_succ(self, s: int):
        return [t for a, t in self._adjacency()[s] if a.is_tau]

    def _adjacency(self):
        adj = getattr(self, "_adj", None)
        if adj is None:
            adj = [[] for _ in self.states]
            for src, act, dst in self.transitions:
                adj[src].append((act, dst))
            object.__setattr__(self, "_adj", adj)
        return adj

    def tau_closure(self, s: int) -> frozenset:
        """States reachable from s by zero or more silent steps."""
        memo = getattr(self, "_tauclos", None)
        if memo is None:
            memo = {}
            object.__setattr__(self, "_tauclos", memo)
        if s not in memo:
            seen = {s}
            stack = [s]
            while stack:
                cur = stack.pop()
                for t in self.tau_succ(cur):
                    if t not in seen:
                        seen.add(t)
                        stack.append(t)
            memo[s] = frozenset(seen)
        return memo[s]

    def tau_closure_plus(self, s: int) -> frozenset:
        """States reachable from s by one or more silent steps."""
        out = set()
        for t in self.tau_succ(s):
            out |= self.tau_closure(t)
        return frozenset(out)


def union_lts(a: Lts, b: Lts):
    """Disjoint union; returns the combined system and the two root indices."""
    off = a.n_states
    states = tuple(("L", s) for s in a.states) + tuple(("R", s) for s in b.states)
    transitions = tuple(a.transitions) + tuple(
        (src + off, act, dst + off) for src, act, dst in b.transitions
    )
    exposure = tuple(a.exposure) + tuple(b.exposure)
    return Lts(states, transitions, exposure, None), a.root, b.root + off


def build_lts(e: Expr, budget: int = DEFAULT_BUDGET) -> Lts:
    """Reachable closure of the transition relation from e.

    States are numbered by breadth-first discovery with derivatives in
    (action, expression) order, so construction is deterministic.
    """
    index = {e: 0}
    states = [e]
    transitions = []
    queue = [e]
    qi = 0
    while qi < len(queue):
        cur = queue[qi]
        qi += 1
        src = index[cur]
        for act, nxt in step(cur):
            if nxt not in index:
                if len(states) >= budget:
                    raise BudgetExceeded(f"state budget {budget} exceeded")
                index[nxt] = len(states)
                states.append(nxt)
                queue.append(nxt)
            transitions.append((src, act, index[nxt]))
    exposure = tuple(exposes(s) for s in states)
    return Lts(tuple(states), tuple(sorted(
        transitions, key=lambda t: (t[0], t[1].key(), t[2]))), exposure, 0)


def _tau_sccs(lts: Lts, allowed=None):
    """Strongly connected components of the silent-step subgraph
    (iterative Tarjan), restricted to `allowed` states when given."""
    if allowed is None:
        allowed = range(lts.n_states)
    allowed = set(allowed)
    index = {}
    low = {}
    on_stack = set()
    stack = []
    sccs = []
    counter = [0]

    for start in sorted(allowed):
        if start in index:
            continue
        work = [(start, iter([t for t in lts.tau_succ(start) if t in allowed]))]
        index[start] = low[start] = counter[0]
        counter[0] += 1
        stack.append(start)
        on_stack.add(start)
        while work:
            node, it = work[-1]
            advanced = False
            for nxt in it:
                if nxt not in index:
                    index[nxt] = low[nxt] = counter[0]
                    counter[0] += 1
                    stack.append(nxt)
                    on_stack.add(nxt)
                    work.append((nxt, iter([t for t in lts.tau_succ(nxt) if t in allowed])))
                    advanced = True
                    break
                if nxt in on_stack:
                    low[node] = min(low[node], index[nxt])
            if advanced:
                continue
            work.pop()
            if work:
                parent = work[-1][0]
                low[parent] = min(low[parent], low[node])
            if low[node] == index[node]:
                comp = []
                while True:
                    w = stack.pop()
                    on_stack.discard(w)
                    comp.append(w)
                    if w == node:
                        break
                sccs.append(comp)
    return sccs


def _can_reach_tau_cycle(lts: Lts, sources, allowed=None) -> frozenset:
    """States among `sources` that can silently reach a silent cycle,
    moving only through `allowed` states."""
    if allowed is None:
        allowed = set(range(lts.n_states))
    else:
        allowed = set(allowed)
    cyclic = set()
    for comp in _tau_sccs(lts, allowed):
        if len(comp) > 1:
            cyclic.update(comp)
        else:
            s = comp[0]
            if s in [t for t in lts.tau_succ(s) if t in allowed]:
                cyclic.add(s)
    # backward closure over silent edges within the allowed set
    rev = {s: [] for s in allowed}
    for src, act, dst in lts.transitions:
        if act.is_tau and src in allowed and dst in allowed:
            rev[dst].append(src)
    seen = set(cyclic)
    frontier = list(cyclic)
    while frontier:
        cur = frontier.pop()
        for prev in rev[cur]:
            if prev not in seen:
                seen.add(prev)
                frontier.append(prev)
    return frozenset(s for s in sources if s in seen)


def divergent(lts: Lts) -> frozenset:
    """States admitting an infinite silent run: those that can silently
    reach a silent cycle."""
    return _can_reach_tau_cycle(lts, range(lts.n_states))


def format_aut(lts: Lts, with_exposure: bool = True) -> str:
    """Render in Aldebaran format, with exposure sets as auxiliary lines."""
    root = lts.root if lts.root is not None else 0
    lines = [f"des ({root}, {len(lts.transitions)}, {lts.n_states})"]
    for src, act, dst in lts.transitions:
        lines.append(f'({src},"{act.name}",{dst})')
    if with_exposure:
        for s in range(lts.n_states):
            for x in sorted(lts.exposure[s]):
                lines.append(f'exp ({s}, "{x}")')
    return "\n".join(lines) + "\n"
