"""Random generators shared by the test modules."""

import random

from dpbc.syntax import (
    Action,
    Expr,
    NIL,
    Prefix,
    Rec,
    Sum,
    TAU,
    Var,
    is_guarded_expr,
    loop,
)
from dpbc.semantics import Lts

ACTIONS = [TAU, Action("a"), Action("b"), Action("c")]
VARS = ["X", "Y", "Z", "W"]


def random_expr(rng: random.Random, size: int, free_pool=VARS) -> Expr:
    """A random expression with at most `size` internal nodes."""
    if size <= 1:
        if free_pool and rng.random() < 0.4:
            return Var(rng.choice(free_pool))
        return NIL
    roll = rng.random()
    if roll < 0.4:
        return Prefix(rng.choice(ACTIONS), random_expr(rng, size - 1, free_pool))
    if roll < 0.75:
        ls = rng.randint(1, size - 1)
        return Sum(
            random_expr(rng, ls, free_pool),
            random_expr(rng, size - ls, free_pool),
        )
    binder = rng.choice(VARS)
    body = random_expr(rng, size - 1, list(set(free_pool) | {binder}))
    return Rec(binder, body)


def _repair(e: Expr) -> Expr:
    """Rebuild unguarded recursions as loops, bottom-up."""
    if isinstance(e, Prefix):
        return Prefix(e.act, _repair(e.body))
    if isinstance(e, Sum):
        return Sum(_repair(e.left), _repair(e.right))
    if isinstance(e, Rec):
        body = _repair(e.body)
        cand = Rec(e.binder, body)
        if is_guarded_expr(cand):
            return cand
        return loop(body)
    return e


def random_guarded_expr(rng: random.Random, size: int, free_pool=VARS) -> Expr:
    e = _repair(random_expr(rng, size, free_pool))
    assert is_guarded_expr(e)
    return e


def random_lts(rng: random.Random, max_states: int = 6) -> Lts:
    n = rng.randint(1, max_states)
    trans = set()
    for _ in range(rng.randint(0, 2 * n)):
        trans.add((rng.randrange(n), rng.choice(ACTIONS), rng.randrange(n)))
    exposure = tuple(
        frozenset(rng.sample(["X", "Y"], rng.randint(0, 2))) for _ in range(n)
    )
    return Lts(
        tuple(range(n)),
        tuple(sorted(trans, key=lambda t: (t[0], t[1].key(), t[2]))),
        exposure,
        0,
    )


def random_ses_equations(rng: random.Random, max_formals: int = 4):
    """Formals and right-hand sides of a random standard system,
    guarded by directing silent moves up the formal order."""
    n = rng.randint(1, max_formals)
    formals = [f"_S{i}" for i in range(n)]
    rhs = {}
    for i, x in enumerate(formals):
        leaves = []
        for _ in range(rng.randint(0, 3)):
            act = rng.choice(ACTIONS)
            if act.is_tau:
                if i + 1 >= n:
                    continue
                tgt = formals[rng.randrange(i + 1, n)]
            else:
                tgt = formals[rng.randrange(n)]
            leaves.append(Prefix(act, Var(tgt)))
        for _ in range(rng.randint(0, 1)):
            leaves.append(Var(rng.choice(["V", "W"])))
        body = NIL
        for leaf in leaves:
            body = leaf if body == NIL else Sum(body, leaf)
        if rng.random() < 0.4:
            rhs[x] = loop(body)
        else:
            rhs[x] = body
    return formals, rhs
