"""Command-line front end."""

from __future__ import annotations

import sys

import click

from .syntax import ParseError, TAU, parse, pretty, view_expr
from .semantics import (
    BudgetExceeded,
    DEFAULT_BUDGET,
    Lts,
    _can_reach_tau_cycle,
    build_lts,
    format_aut,
)
from .equiv import RootedCheck, bisimilarity, equivalent, rooted_check
from .proof import CertificateError, check, format_derivation, parse_derivation
from .standardize import standardize
from .ses import prove_congruent

RELATIONS = ("strong", "branching", "dpbb", "rooted")


def _read_expr(path: str):
    with open(path, encoding="utf-8") as fh:
        return parse(fh.read())


def _fail(message: str):
    click.echo(f"error: {message}", err=True)
    sys.exit(2)


@click.group()
def main():
    """Equivalence prover for finite-state process expressions."""


@main.command("check")
@click.option("--rel", type=click.Choice(RELATIONS), default="dpbb",
              show_default=True, help="relation to decide")
@click.option("--budget", type=int, default=DEFAULT_BUDGET, show_default=True,
              help="state budget for transition systems")
@click.argument("file1", type=click.Path(exists=True, dir_okay=False))
@click.argument("file2", type=click.Path(exists=True, dir_okay=False))
def check_cmd(rel, budget, file1, file2):
    """Decide whether two expressions are related (exit 0) or not (exit 1)."""
    try:
        e = _read_expr(file1)
        f = _read_expr(file2)
        if rel == "rooted":
            rc = rooted_check(e, f, budget)
            if rc.equal:
                sys.exit(0)
            click.echo(
                f"not rooted-equivalent: {rc.clause} at states "
                f"({rc.root_left},{rc.root_right}): {rc.detail}",
                err=True)
            sys.exit(1)
        if equivalent(e, f, rel, budget):
            sys.exit(0)
        click.echo(f"not {rel}-equivalent: the roots are in different classes",
                   err=True)
        sys.exit(1)
    except (ParseError, OSError, BudgetExceeded) as exc:
        _fail(str(exc))


@main.command("prove")
@click.option("--budget", type=int, default=DEFAULT_BUDGET, show_default=True)
@click.option("--cert", type=click.Path(dir_okay=False), default=None,
              help="write the certificate here instead of stdout")
@click.argument("file1", type=click.Path(exists=True, dir_okay=False))
@click.argument("file2", type=click.Path(exists=True, dir_okay=False))
def prove_cmd(budget, cert, file1, file2):
    """Prove two expressions congruent; emit a checkable certificate."""
    try:
        e = _read_expr(file1)
        f = _read_expr(file2)
        result = prove_congruent(e, f, budget)
    except (ParseError, OSError, BudgetExceeded) as exc:
        _fail(str(exc))
    if isinstance(result, RootedCheck):
        click.echo(
            f"INEQ {result.clause} ({result.root_left},{result.root_right})",
            err=True)
        click.echo(result.detail, err=True)
        sys.exit(1)
    text = format_derivation(result)
    if cert:
        with open(cert, "w", encoding="utf-8") as fh:
            fh.write(text)
    else:
        click.echo(text, nl=False)
    sys.exit(0)


@main.command("verify")
@click.argument("file", type=click.Path(exists=True, dir_okay=False))
def verify_cmd(file):
    """Check a certificate; exit 0 when every step is justified."""
    try:
        with open(file, encoding="utf-8") as fh:
            derivation = parse_derivation(fh.read())
        failure = check(derivation)
    except (ParseError, CertificateError, OSError, BudgetExceeded) as exc:
        _fail(str(exc))
    if failure is None:
        lhs, rhs = derivation.conclusion
        click.echo(f"verified: {pretty(lhs)} = {pretty(rhs)}")
        sys.exit(0)
    click.echo(f"invalid certificate: {failure}", err=True)
    sys.exit(1)


@main.command("std")
@click.option("--cert", type=click.Path(dir_okay=False), default=None,
              help="certificate path (default: FILE.cert)")
@click.argument("file", type=click.Path(exists=True, dir_okay=False))
def std_cmd(cert, file):
    """Rewrite an expression into a standard sum, with a certificate."""
    try:
        e = _read_expr(file)
        view, derivation = standardize(e)
    except (ParseError, OSError) as exc:
        _fail(str(exc))
    click.echo(pretty(view_expr(view)))
    path = cert if cert else f"{file}.cert"
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(format_derivation(derivation))
    sys.exit(0)


def _format_text(lts: Lts) -> str:
    lines = [f"states: {lts.n_states}  transitions: {len(lts.transitions)}  root: {lts.root}"]
    for i, state in enumerate(lts.states):
        label = pretty(state) if hasattr(state, "_hash") else str(state)
        exp = ",".join(sorted(lts.exposure[i]))
        suffix = f"  exposes {{{exp}}}" if exp else ""
        lines.append(f"  {i}: {label}{suffix}")
    for src, act, dst in lts.transitions:
        lines.append(f"  {src} --{act.name}--> {dst}")
    return "\n".join(lines) + "\n"


@main.command("lts")
@click.option("--format", "fmt", type=click.Choice(["text", "aut"]),
              default="aut", show_default=True)
@click.option("--budget", type=int, default=DEFAULT_BUDGET, show_default=True)
@click.argument("file", type=click.Path(exists=True, dir_okay=False))
def lts_cmd(fmt, budget, file):
    """Print the reachable transition system of an expression."""
    try:
        e = _read_expr(file)
        lts = build_lts(e, budget)
    except (ParseError, OSError, BudgetExceeded) as exc:
        _fail(str(exc))
    if fmt == "aut":
        click.echo(format_aut(lts), nl=False)
    else:
        click.echo(_format_text(lts), nl=False)
    sys.exit(0)


@main.command("minimize")
@click.option("--budget", type=int, default=DEFAULT_BUDGET, show_default=True)
@click.argument("file", type=click.Path(exists=True, dir_okay=False))
def minimize_cmd(budget, file):
    """Quotient under the divergence-preserving relation, in AUT format.

    States are equivalence classes; silent self-loops mark classes with
    an internal divergence; silent moves inside one class are dropped.
    """
    try:
        e = _read_expr(file)
        lts = build_lts(e, budget)
    except (ParseError, OSError, BudgetExceeded) as exc:
        _fail(str(exc))
    part = bisimilarity(lts, "dpbb")
    moves = set()
    for src, act, dst in lts.transitions:
        cs, cd = part.class_of[src], part.class_of[dst]
        if not act.is_tau or cs != cd:
            moves.add((cs, act, cd))
    # a class diverges internally when some member can silently cycle
    # without leaving the class
    for c in range(part.n_classes):
        members = [i for i in range(lts.n_states) if part.class_of[i] == c]
        if _can_reach_tau_cycle(lts, members, allowed=members):
            moves.add((c, TAU, c))
    moves = sorted(moves, key=lambda t: (t[0], t[1].key(), t[2]))
    root = part.class_of[lts.root]
    lines = [f"des ({root}, {len(moves)}, {part.n_classes})"]
    for src, act, dst in moves:
        lines.append(f'({src},"{act.name}",{dst})')
    click.echo("\n".join(lines))
    sys.exit(0)


if __name__ == "__main__":
    main()
