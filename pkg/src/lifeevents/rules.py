"""Reaction rules: a small ECA language mapping life events to service initializations.

Grammar (one token of lookahead)::

    rules   := { rule }
    rule    := "rule" ID "on" ID "when" expr "then" "initialize" action
               { "," action } [ "priority" INT ] [ "strict" ]
    action  := ID "mode" ("automatic" | "consent" | "request_only")
    expr    := term { "or" term }
    term    := factor { "and" factor }
    factor  := "not" factor | "(" expr ")" | predicate | "true" | "false"
    predicate := "has_role" "(" ID ")" | "in_phase" "(" ID ")"
               | "subspecies_is" "(" ID ")" | "opted_out" "(" (ID | "*") ")"
               | "attr" "(" ID ")" CMP literal
               | "related_by" "(" ID [ "," expr ] ")" | "partner"

``#`` starts a comment running to the end of the line.  Newlines carry no
meaning inside a rule.
"""
from __future__ import annotations

import json
import re
from dataclasses import dataclass, field
from typing import Iterable, Iterator, Sequence

from . import conditions as c
from .errors import (
    DuplicateRuleId, RuleParseError, RuleSyntaxError, UnknownRule, UnknownServiceRef,
    UnknownTypeRef,
)
from .services import Mode

KEYWORDS = frozenset({
    "rule", "on", "when", "then", "initialize", "mode", "priority", "strict",
    "and", "or", "not", "true", "false", "partner",
    "has_role", "in_phase", "subspecies_is", "opted_out", "attr", "related_by",
})
_UNICODE_CMP = {"≠": "!=", "≤": "<=", "≥": ">="}


@dataclass(frozen=True)
class Token:
    kind: str  # ident, int, float, string, punct, cmp, eof
    value: object
    line: int
    col: int

    def describe(self) -> str:
        if self.kind == "eof":
            return "end of input"
        if self.kind == "string":
            return json.dumps(self.value)
        return repr(str(self.value))


def tokenize(text: str, filename: str = "<rules>", line_offset: int = 0) -> list[Token]:
    tokens = []
    i, line, col = 0, 1 + line_offset, 1
    n = len(text)

    def err(msg_expected, found):
        raise RuleSyntaxError(msg_expected, found, line, col, filename)

    while i < n:
        ch = text[i]
        if ch == "\n":
            i, line, col = i + 1, line + 1, 1
            continue
        if ch in " \t\r":
            i, col = i + 1, col + 1
            continue
        if ch == "#":
            while i < n and text[i] != "\n":
                i += 1
            continue
        start_col = col
        if ch.isalpha() or ch == "_":
            j = i
            while j < n and (text[j].isalnum() or text[j] == "_"):
                j += 1
            tokens.append(Token("ident", text[i:j], line, start_col))
            col += j - i
            i = j
            continue
        if ch.isdigit() or (ch == "-" and i + 1 < n and text[i + 1].isdigit()):
            j = i + 1
            while j < n and text[j].isdigit():
                j += 1
            kind = "int"
            if j + 1 < n and text[j] == "." and text[j + 1].isdigit():
                j += 1
                while j < n and text[j].isdigit():
                    j += 1
                kind = "float"
            exp = re.match(r"[eE][+-]?\d+", text[j:])
            if exp:
                j += exp.end()
                kind = "float"
            raw = text[i:j]
            tokens.append(Token(kind, int(raw) if kind == "int" else float(raw), line, start_col))
            col += j - i
            i = j
            continue
        if ch == '"':
            j = i + 1
            while j < n and text[j] != '"':
                if text[j] == "\\":
                    j += 1
                if j < n and text[j] == "\n":
                    break
                j += 1
            if j >= n or text[j] != '"':
                err('closing \'"\'', "end of line")
            try:
                value = json.loads(text[i:j + 1])
            except json.JSONDecodeError:
                err("valid string literal", text[i:j + 1])
            tokens.append(Token("string", value, line, start_col))
            col += j + 1 - i
            i = j + 1
            continue
        if ch in "(),*":
            tokens.append(Token("punct", ch, line, start_col))
            i, col = i + 1, col + 1
            continue
        if ch in _UNICODE_CMP:
            tokens.append(Token("cmp", _UNICODE_CMP[ch], line, start_col))
            i, col = i + 1, col + 1
            continue
        if ch in "<>!=":
            two = text[i:i + 2]
            if two in ("<=", ">=", "!="):
                tokens.append(Token("cmp", two, line, start_col))
                i, col = i + 2, col + 2
                continue
            if ch == "!":
                err("'!='", repr(ch))
            tokens.append(Token("cmp", ch, line, start_col))
            i, col = i + 1, col + 1
            continue
        err("a token", repr(ch))
    tokens.append(Token("eof", None, line, col))
    return tokens


@dataclass(frozen=True)
class Reference:
    """A name used by a rule, kept with its location for semantic checks."""

    kind: str  # service, role, phase, subspecies
    name: str
    line: int
    col: int


@dataclass(frozen=True)
class ReactionRule:
    id: str
    on: str
    when: c.Expr
    then: tuple  # ((service id, Mode), ...)
    priority: int = 0
    strict: bool = False
    line: int = field(default=0, compare=False)
    col: int = field(default=0, compare=False)
    refs: tuple = field(default=(), compare=False, repr=False)

    def to_text(self) -> str:
        actions = ", ".join(f"{svc} mode {mode.value}" for svc, mode in self.then)
        text = f"rule {self.id} on {self.on} when {c.to_text(self.when)} then initialize {actions}"
        if self.priority:
            text += f" priority {self.priority}"
        if self.strict:
            text += " strict"
        return text


class RuleSet:
    """Immutable, indexed collection of reaction rules."""

    def __init__(self, rules: Iterable[ReactionRule] = ()):
        self.rules: tuple[ReactionRule, ...] = tuple(rules)
        self._by_id = {r.id: r for r in self.rules}
        self._by_event: dict[str, list[ReactionRule]] = {}
        for r in self.rules:
            self._by_event.setdefault(r.on, []).append(r)
        for bucket in self._by_event.values():
            bucket.sort(key=lambda r: (-r.priority, r.id))

    def __len__(self) -> int:
        return len(self.rules)

    def __iter__(self) -> Iterator[ReactionRule]:
        return iter(self.rules)

    def __eq__(self, other) -> bool:
        return isinstance(other, RuleSet) and self.rules == other.rules

    def get(self, rule_id: str) -> ReactionRule:
        try:
            return self._by_id[rule_id]
        except KeyError:
            raise UnknownRule(f"no rule {rule_id!r}") from None

    def for_event(self, life_event_type: str) -> list[ReactionRule]:
        return self._by_event.get(life_event_type, [])

    def to_text(self) -> str:
        return "".join(r.to_text() + "\n" for r in self.rules)


class _Parser:
    def __init__(self, tokens: list[Token], filename: str):
        self.tokens = tokens
        self.pos = 0
        self.filename = filename
        self.parens: list[Token] = []
        self.refs: list[Reference] = []

    @property
    def tok(self) -> Token:
        return self.tokens[self.pos]

    def advance(self) -> Token:
        t = self.tokens[self.pos]
        if t.kind != "eof":
            self.pos += 1
        return t

    def fail(self, expected: str):
        t = self.tok
        if t.kind == "eof" and self.parens:
            opener = self.parens[-1]
            raise RuleSyntaxError(f"{expected} (unclosed '(')", t.describe(),
                                  opener.line, opener.col, self.filename)
        raise RuleSyntaxError(expected, t.describe(), t.line, t.col, self.filename)

    def is_kw(self, word: str) -> bool:
        return self.tok.kind == "ident" and self.tok.value == word

    def expect_kw(self, word: str) -> Token:
        if not self.is_kw(word):
            self.fail(f"'{word}'")
        return self.advance()

    def expect_ident(self, what: str = "identifier") -> Token:
        if self.tok.kind != "ident" or self.tok.value in KEYWORDS:
            self.fail(what)
        return self.advance()

    def expect_punct(self, ch: str) -> Token:
        if self.tok.kind != "punct" or self.tok.value != ch:
            self.fail(f"'{ch}'")
        t = self.advance()
        if ch == "(":
            self.parens.append(t)
        elif ch == ")":
            self.parens.pop()
        return t

    # -- productions -------------------------------------------------------

    def parse_all(self) -> tuple[list[ReactionRule], list[RuleSyntaxError]]:
        rules, errors = [], []
        while self.tok.kind != "eof":
            start = self.pos
            self.parens = []
            self.refs = []
            try:
                rules.append(self.rule())
            except RuleSyntaxError as e:
                errors.append(e)
                # resynchronize on the next 'rule' keyword
                if self.pos == start:
                    self.advance()
                while self.tok.kind != "eof" and not self.is_kw("rule"):
                    self.advance()
        return rules, errors

    def rule(self) -> ReactionRule:
        head = self.expect_kw("rule")
        rid = self.expect_ident("rule id").value
        self.expect_kw("on")
        on = self.expect_ident("life event type").value
        self.expect_kw("when")
        when = self.expr()
        self.expect_kw("then")
        self.expect_kw("initialize")
        actions = [self.action()]
        while self.tok.kind == "punct" and self.tok.value == ",":
            self.advance()
            actions.append(self.action())
        priority = 0
        if self.is_kw("priority"):
            self.advance()
            if self.tok.kind != "int":
                self.fail("integer priority")
            priority = self.advance().value
        strict = False
        if self.is_kw("strict"):
            self.advance()
            strict = True
        if self.tok.kind != "eof" and not self.is_kw("rule"):
            self.fail("',', 'priority', 'strict', 'rule' or end of input")
        return ReactionRule(rid, on, when, tuple(actions), priority, strict,
                            head.line, head.col, tuple(self.refs))

    def action(self) -> tuple:
        svc = self.expect_ident("service id")
        self.refs.append(Reference("service", svc.value, svc.line, svc.col))
        self.expect_kw("mode")
        if self.tok.kind != "ident" or self.tok.value not in {m.value for m in Mode}:
            self.fail("mode (automatic, consent or request_only)")
        return (svc.value, Mode(self.advance().value))

    def expr(self) -> c.Expr:
        terms = [self.term()]
        while self.is_kw("or"):
            self.advance()
            terms.append(self.term())
        return terms[0] if len(terms) == 1 else c.Or(tuple(terms))

    def term(self) -> c.Expr:
        factors = [self.factor()]
        while self.is_kw("and"):
            self.advance()
            factors.append(self.factor())
        return factors[0] if len(factors) == 1 else c.And(tuple(factors))

    def factor(self) -> c.Expr:
        t = self.tok
        if t.kind == "punct" and t.value == "(":
            self.expect_punct("(")
            inner = self.expr()
            self.expect_punct(")")
            return inner
        if t.kind != "ident":
            self.fail("condition")
        word = t.value
        if word == "not":
            self.advance()
            return c.Not(self.factor())
        if word in ("true", "false"):
            self.advance()
            return c.Literal(word == "true")
        if word == "partner":
            self.advance()
            return c.Partner()
        if word in ("has_role", "in_phase", "subspecies_is"):
            self.advance()
            self.expect_punct("(")
            name = self.expect_ident("type name")
            self.expect_punct(")")
            kind = {"has_role": "role", "in_phase": "phase", "subspecies_is": "subspecies"}[word]
            self.refs.append(Reference(kind, name.value, name.line, name.col))
            node = {"has_role": c.HasRole, "in_phase": c.InPhase,
                    "subspecies_is": c.SubspeciesIs}[word]
            return node(name.value)
        if word == "opted_out":
            self.advance()
            self.expect_punct("(")
            if self.tok.kind == "punct" and self.tok.value == "*":
                self.advance()
                svc = "*"
            else:
                name = self.expect_ident("service id or '*'")
                svc = name.value
                self.refs.append(Reference("service", svc, name.line, name.col))
            self.expect_punct(")")
            return c.OptedOut(svc)
        if word == "attr":
            self.advance()
            self.expect_punct("(")
            name = self.expect_ident("attribute name").value
            self.expect_punct(")")
            if self.tok.kind != "cmp":
                self.fail("comparison operator")
            op = self.advance().value
            return c.AttrCompare(name, op, self.literal())
        if word == "related_by":
            self.advance()
            self.expect_punct("(")
            relator = self.expect_ident("relator name").value
            other = None
            if self.tok.kind == "punct" and self.tok.value == ",":
                self.advance()
                other = self.expr()
            self.expect_punct(")")
            return c.RelatedBy(relator, other)
        self.fail("condition")

    def literal(self):
        t = self.tok
        if t.kind in ("int", "float", "string"):
            return self.advance().value
        if t.kind == "ident" and t.value in ("true", "false"):
            self.advance()
            return t.value == "true"
        self.fail("literal")


def _check(rules: Sequence[ReactionRule], filename: str, services, types) -> list:
    from .ontology import TypeKind

    errors = []
    seen = set()
    for r in rules:
        if r.id in seen:
            errors.append(DuplicateRuleId(f"rule id {r.id!r} already used", r.line, r.col, filename))
        seen.add(r.id)
        for ref in r.refs:
            if ref.kind == "service":
                if services is not None and ref.name not in services:
                    errors.append(UnknownServiceRef(
                        f"unknown service {ref.name!r}", ref.line, ref.col, filename))
            elif types is not None and not types.is_kind(ref.name, TypeKind(ref.kind)):
                errors.append(UnknownTypeRef(
                    f"{ref.name!r} is not a defined {ref.kind}", ref.line, ref.col, filename))
    return errors


def parse_rules(text: str, filename: str = "<rules>", services=None, types=None,
                line_offset: int = 0) -> RuleSet:
    """Parse rule text into a RuleSet, or raise RuleParseError listing every error.

    When ``services`` (a container of service ids) or ``types`` (a
    TypeRegistry) is given, references are resolved against it.
    """
    try:
        tokens = tokenize(text, filename, line_offset)
    except RuleSyntaxError as e:
        raise RuleParseError([e]) from None
    rules, errors = _Parser(tokens, filename).parse_all()
    errors = list(errors) + _check(rules, filename, services, types)
    if errors:
        errors.sort(key=lambda e: (e.line, e.col))
        raise RuleParseError(errors)
    return RuleSet(rules)


def parse_condition(text: str, filename: str = "<condition>") -> c.Expr:
    """Parse a standalone condition expression."""
    try:
        parser = _Parser(tokenize(text, filename), filename)
        expr = parser.expr()
        if parser.tok.kind != "eof":
            parser.fail("end of condition")
    except RuleSyntaxError as e:
        raise RuleParseError([e]) from None
    return expr


def print_rules(rules: Iterable[ReactionRule]) -> str:
    return "".join(r.to_text() + "\n" for r in rules)


# --- evaluation -----------------------------------------------------------

@dataclass(frozen=True)
class Action:
    service: str
    mode: Mode
    rule_id: str
    rewritten: bool = False  # automatic downgraded to request_only by an opt-out

    def to_dict(self) -> dict:
        return {"service": self.service, "mode": self.mode.value, "rule": self.rule_id,
                "rewritten": self.rewritten}


@dataclass(frozen=True)
class EvaluationTrace:
    rule_id: str
    event_id: str
    predicates: tuple  # ((predicate text, value), ...)
    verdict: bool
    actions: tuple = ()
    skipped: bool = False  # the rule listens to a different life event type

    def to_dict(self) -> dict:
        return {
            "rule": self.rule_id,
            "event": self.event_id,
            "predicates": [[text, value] for text, value in self.predicates],
            "verdict": self.verdict,
            "actions": [a.to_dict() for a in self.actions],
        }


def _opted_out(optouts, subject: str, service: str) -> bool:
    return (subject, service) in optouts or (subject, "*") in optouts


def _post_filter(rule: ReactionRule, subject: str, optouts) -> tuple:
    out = []
    for svc, mode in rule.then:
        if mode is Mode.AUTOMATIC and _opted_out(optouts, subject, svc):
            out.append(Action(svc, Mode.REQUEST_ONLY, rule.id, rewritten=True))
        else:
            out.append(Action(svc, mode, rule.id))
    return tuple(out)


def _trace(rule: ReactionRule, event, state, optouts) -> EvaluationTrace:
    record: list = []
    ctx = c.Context(state, frozenset(optouts), strict=rule.strict)
    verdict = c.evaluate(rule.when, event.subject, ctx, record)
    actions = _post_filter(rule, event.subject, optouts) if verdict else ()
    return EvaluationTrace(rule.id, event.id, tuple(record), verdict, actions)


def evaluate_traced(rules: RuleSet, event, state, optouts=frozenset()) -> list[EvaluationTrace]:
    """Traces of every rule listening to the event's type, in firing order."""
    return [_trace(r, event, state, optouts) for r in rules.for_event(event.life_event_type)]


def evaluate(rules: RuleSet, event, state, optouts=frozenset()) -> list[Action]:
    """Actions triggered by ``event`` ordered by (priority desc, rule id asc).

    ``state`` is the event's after-snapshot; ``optouts`` a set of
    (subject, service-or-"*") pairs.  An opted-out service is never
    emitted in automatic mode.
    """
    return [a for t in evaluate_traced(rules, event, state, optouts) for a in t.actions]


def explain(rules: RuleSet, rule_id: str, event, state, optouts=frozenset()) -> EvaluationTrace:
    rule = rules.get(rule_id)
    if rule.on != event.life_event_type:
        return EvaluationTrace(rule.id, event.id, (), False, (), skipped=True)
    return _trace(rule, event, state, optouts)


def naive_evaluate(rules: Sequence[ReactionRule], cases) -> list[list[EvaluationTrace]]:
    """Reference matcher: every rule against every (event, state, optouts) case.

    No indexing: each rule is tested against each event's type in turn and
    the firing order is recomputed by a full sort.
    """
    results = []
    for event, state, optouts in cases:
        traces = []
        for rule in rules:
            if rule.on != event.life_event_type:
                continue
            record: list = []
            ctx = c.Context(state, frozenset(optouts), strict=rule.strict)
            verdict = c.evaluate(rule.when, event.subject, ctx, record)
            actions = []
            if verdict:
                for svc, mode in rule.then:
                    blocked = (event.subject, svc) in optouts or (event.subject, "*") in optouts
                    if mode is Mode.AUTOMATIC and blocked:
                        actions.append(Action(svc, Mode.REQUEST_ONLY, rule.id, True))
                    else:
                        actions.append(Action(svc, mode, rule.id))
            traces.append(((-rule.priority, rule.id), EvaluationTrace(
                rule.id, event.id, tuple(record), verdict, tuple(actions))))
        traces.sort(key=lambda pair: pair[0])
        results.append([t for _, t in traces])
    return results
