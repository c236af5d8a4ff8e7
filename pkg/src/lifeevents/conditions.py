"""Condition expressions: the AST shared by reaction rules and role constraints.

Expressions are immutable trees.  Evaluation never short-circuits so that an
evaluation trace always lists every predicate of the tree with its value.
"""
from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Callable, Iterator, Union

from .errors import UnknownPredicateTarget

Scalar = Union[bool, int, float, str]

COMPARATORS = ("=", "!=", "<", "<=", ">", ">=")


@dataclass(frozen=True)
class Literal:
    value: bool


@dataclass(frozen=True)
class Not:
    operand: "Expr"


@dataclass(frozen=True)
class And:
    operands: tuple


@dataclass(frozen=True)
class Or:
    operands: tuple


@dataclass(frozen=True)
class HasRole:
    name: str


@dataclass(frozen=True)
class InPhase:
    name: str


@dataclass(frozen=True)
class SubspeciesIs:
    name: str


@dataclass(frozen=True)
class AttrCompare:
    name: str
    op: str
    value: Scalar


@dataclass(frozen=True)
class OptedOut:
    service: str  # a service id or "*"


@dataclass(frozen=True)
class RelatedBy:
    relator: str
    other: "Expr | None" = None


@dataclass(frozen=True)
class Partner:
    """True when the entity under test co-bears the moment being created."""


Expr = Union[Literal, Not, And, Or, HasRole, InPhase, SubspeciesIs, AttrCompare,
             OptedOut, RelatedBy, Partner]
PREDICATES = (HasRole, InPhase, SubspeciesIs, AttrCompare, OptedOut, RelatedBy, Partner)


# --- printing -------------------------------------------------------------

def format_literal(value: Scalar) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, str):
        return json.dumps(value)
    return repr(value)


def to_text(expr: Expr) -> str:
    """Canonical text; re-parsing it yields a structurally equal tree."""
    if isinstance(expr, Literal):
        return "true" if expr.value else "false"
    if isinstance(expr, Not):
        inner = to_text(expr.operand)
        if isinstance(expr.operand, (And, Or)):
            inner = f"({inner})"
        return f"not {inner}"
    if isinstance(expr, And):
        return " and ".join(
            f"({to_text(o)})" if isinstance(o, (And, Or)) else to_text(o) for o in expr.operands
        )
    if isinstance(expr, Or):
        return " or ".join(
            f"({to_text(o)})" if isinstance(o, Or) else to_text(o) for o in expr.operands
        )
    if isinstance(expr, HasRole):
        return f"has_role({expr.name})"
    if isinstance(expr, InPhase):
        return f"in_phase({expr.name})"
    if isinstance(expr, SubspeciesIs):
        return f"subspecies_is({expr.name})"
    if isinstance(expr, AttrCompare):
        return f"attr({expr.name}) {expr.op} {format_literal(expr.value)}"
    if isinstance(expr, OptedOut):
        return f"opted_out({expr.service})"
    if isinstance(expr, RelatedBy):
        if expr.other is None:
            return f"related_by({expr.relator})"
        return f"related_by({expr.relator}, {to_text(expr.other)})"
    if isinstance(expr, Partner):
        return "partner"
    raise TypeError(f"not a condition expression: {expr!r}")


def predicates(expr: Expr) -> Iterator[Expr]:
    """Top-level predicates in left-to-right order (related_by is atomic)."""
    if isinstance(expr, Not):
        yield from predicates(expr.operand)
    elif isinstance(expr, (And, Or)):
        for o in expr.operands:
            yield from predicates(o)
    elif isinstance(expr, PREDICATES):
        yield expr


def referenced_names(expr: Expr) -> Iterator[Expr]:
    """Every predicate, including those nested inside related_by."""
    for p in predicates(expr):
        yield p
        if isinstance(p, RelatedBy) and p.other is not None:
            yield from referenced_names(p.other)


# --- evaluation -----------------------------------------------------------

@dataclass(frozen=True)
class Context:
    """What a condition is evaluated against.

    ``state`` is a StateOfAffairs; ``optouts`` a set of (subject, service)
    pairs where service may be ``"*"``; ``partners`` the co-bearers of a
    moment under construction (empty outside constraint checks).
    """

    state: object
    optouts: frozenset = frozenset()
    partners: frozenset = frozenset()
    strict: bool = False


def _compare(left: Scalar, op: str, right: Scalar) -> bool:
    numeric = (int, float)
    both_numeric = (isinstance(left, numeric) and not isinstance(left, bool)
                    and isinstance(right, numeric) and not isinstance(right, bool))
    same_kind = both_numeric or type(left) is type(right)
    if op == "=":
        return same_kind and left == right
    if op == "!=":
        return not (same_kind and left == right)
    if not same_kind or isinstance(left, bool):
        return False
    if op == "<":
        return left < right
    if op == "<=":
        return left <= right
    if op == ">":
        return left > right
    if op == ">=":
        return left >= right
    raise ValueError(f"unknown comparator {op!r}")


def _facts(subject: str, ctx: Context, what: str):
    facts = ctx.state.facts.get(subject)
    if facts is None and ctx.strict:
        raise UnknownPredicateTarget(f"{what}: entity {subject!r} absent from state")
    return facts


def eval_predicate(pred: Expr, subject: str, ctx: Context) -> bool:
    if isinstance(pred, Partner):
        return subject in ctx.partners
    if isinstance(pred, OptedOut):
        if pred.service == "*":
            return (subject, "*") in ctx.optouts
        return (subject, pred.service) in ctx.optouts or (subject, "*") in ctx.optouts
    facts = _facts(subject, ctx, to_text(pred))
    if facts is None:
        return False
    if isinstance(pred, HasRole):
        return pred.name in facts.roles
    if isinstance(pred, InPhase):
        return pred.name in facts.phases
    if isinstance(pred, SubspeciesIs):
        return facts.subspecies == pred.name
    if isinstance(pred, AttrCompare):
        if pred.name not in facts.attributes:
            if ctx.strict:
                raise UnknownPredicateTarget(
                    f"attribute {pred.name!r} absent for entity {subject!r}")
            return False
        return _compare(facts.attributes[pred.name], pred.op, pred.value)
    if isinstance(pred, RelatedBy):
        for moment in ctx.state.moments:
            if moment.name != pred.relator or subject not in moment.bearers:
                continue
            others = [b for b in moment.bearers if b != subject]
            if pred.other is None and others:
                return True
            if any(evaluate(pred.other, o, ctx) for o in others):
                return True
        return False
    raise TypeError(f"not a predicate: {pred!r}")


def evaluate(expr: Expr, subject: str, ctx: Context,
             record: list | None = None) -> bool:
    """Evaluate ``expr`` for ``subject``; append (predicate text, value) to ``record``."""
    if isinstance(expr, Literal):
        return expr.value
    if isinstance(expr, Not):
        return not evaluate(expr.operand, subject, ctx, record)
    if isinstance(expr, And):
        values = [evaluate(o, subject, ctx, record) for o in expr.operands]
        return all(values)
    if isinstance(expr, Or):
        values = [evaluate(o, subject, ctx, record) for o in expr.operands]
        return any(values)
    value = eval_predicate(expr, subject, ctx)
    if record is not None:
        record.append((to_text(expr), value))
    return value


def evaluate_with(expr: Expr, lookup: Callable[[Expr], bool]) -> bool:
    """Evaluate the connective structure using externally supplied predicate values."""
    if isinstance(expr, Literal):
        return expr.value
    if isinstance(expr, Not):
        return not evaluate_with(expr.operand, lookup)
    if isinstance(expr, And):
        return all([evaluate_with(o, lookup) for o in expr.operands])
    if isinstance(expr, Or):
        return any([evaluate_with(o, lookup) for o in expr.operands])
    return lookup(expr)
