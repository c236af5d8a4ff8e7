"""Scenario files: declarations of the world plus a timeline of directives.

The format is line oriented.  Each line is split shell-style; ``key=value``
tokens are options, the rest positional.  ``#`` starts a comment.  Example::

    name birth
    type species Human
    type role Parent of Human
    deontic Parent right "family benefit" service=family_benefit
    entity board institutional_agent Organization name="Social Insurance Board"
    entity mary physical_agent Human subspecies=Female age=31
    register population
    service family_benefit provider=board right=family_benefit
    recognize birth_of_child pattern=pregnancy_registered,birth_registered within=300
    begin rules
    rule R1 on birth_of_child when has_role(Parent) then initialize family_benefit mode automatic
    end rules
    at 10 data_event pregnancy_registered subject=mary register=population due=2026
    at 20 data_event birth_registered subject=mary register=population assign_role=Parent

Timeline directives: ``data_event``, ``opt_out``, ``opt_in``, ``consent``,
``explicit_request`` and ``probe``.
"""
from __future__ import annotations

import hashlib
import re
import shlex
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable

from .errors import (
    AlreadyHeld, BearerCardinality, CrossSpeciesSubspecies, DuplicateRuleId, IncompatiblePhase,
    IncompatibleRole, MissingAuthorization, ModelError, NotHeld, RuleParseError,
    ScenarioError, TimestampRegression, UnknownEntity, UnknownPhase, UnknownRegister,
    UnknownRole, UnknownService, UnknownSubject,
)
from .events import DataEvent, Effect, EventStore, RecognitionRule
from .ontology import (
    Category, DeonticAssignment, DeonticKind, EntityRecord, TypeDefinition,
    TypeKind, World,
)
from .rules import RuleSet, parse_condition, parse_rules
from .services import (
    ConsentRegistry, LifeEventService, Mode, PublicServiceDefinition, ServiceModel,
)

_OPTION = re.compile(r"^[A-Za-z_][A-Za-z0-9_.]*=")
EFFECT_KEYS = ("assign_role", "relinquish_role", "phase", "relator", "subspecies")
DATA_EVENT_KEYS = {"subject", "register", "id", "with", "authorization", *EFFECT_KEYS}
TIMELINE = ("data_event", "opt_out", "opt_in", "consent", "explicit_request", "probe")


class FormatError(ModelError):
    code = "FormatError"


@dataclass(frozen=True)
class Problem:
    location: str
    code: str
    message: str

    def __str__(self) -> str:
        return f"{self.location}: {self.code}: {self.message}"


@dataclass
class Directive:
    line: int
    keyword: str
    args: list
    opts: dict
    time: int | None = None


@dataclass
class Scenario:
    name: str
    path: str | None
    text: str
    declarations: list = field(default_factory=list)
    timeline: list = field(default_factory=list)
    rule_sources: list = field(default_factory=list)  # (text, filename, line offset, line)
    problems: list = field(default_factory=list)

    @property
    def digest(self) -> str:
        return hashlib.sha256(self.text.encode("utf-8")).hexdigest()

    def where(self, line: int) -> str:
        return f"{self.path or '<scenario>'}:{line}"


def parse_value(raw: str):
    """Scalar from option text: int, float, true/false, otherwise the string."""
    if raw in ("true", "false"):
        return raw == "true"
    try:
        return int(raw)
    except ValueError:
        pass
    try:
        return float(raw)
    except ValueError:
        return raw


def _split(raw: str) -> list[str]:
    return [x for x in raw.split(",") if x]


def parse_scenario(text: str, path: str | None = None) -> Scenario:
    """Tokenize a scenario; malformed lines become problems, not exceptions."""
    name = Path(path).stem if path else "scenario"
    sc = Scenario(name, path, text)
    lines = text.splitlines()
    i = 0
    while i < len(lines):
        lineno = i + 1
        raw = lines[i]
        i += 1
        try:
            tokens = shlex.split(raw, comments=True)
        except ValueError as e:
            sc.problems.append(Problem(sc.where(lineno), "FormatError", str(e)))
            continue
        if not tokens:
            continue
        if tokens[:2] == ["begin", "rules"]:
            start = i
            while i < len(lines) and lines[i].split("#")[0].split() != ["end", "rules"]:
                i += 1
            if i >= len(lines):
                sc.problems.append(Problem(sc.where(lineno), "FormatError",
                                           "'begin rules' without 'end rules'"))
            sc.rule_sources.append(("\n".join(lines[start:i]), path or "<scenario>", start, lineno))
            i += 1
            continue
        time = None
        if tokens[0] == "at":
            if len(tokens) < 3:
                sc.problems.append(Problem(sc.where(lineno), "FormatError",
                                           "expected 'at <time> <directive>'"))
                continue
            try:
                time = int(tokens[1])
            except ValueError:
                sc.problems.append(Problem(sc.where(lineno), "FormatError",
                                           f"time {tokens[1]!r} is not an integer"))
                continue
            tokens = tokens[2:]
        args, opts = [], {}
        for tok in tokens[1:]:
            if _OPTION.match(tok):
                key, _, value = tok.partition("=")
                opts[key] = value
            else:
                args.append(tok)
        d = Directive(lineno, tokens[0], args, opts, time)
        if time is not None:
            sc.timeline.append(d)
        elif d.keyword == "name":
            sc.name = " ".join(args)
        elif d.keyword == "rules_file":
            if len(args) != 1:
                sc.problems.append(Problem(sc.where(lineno), "FormatError",
                                           "rules_file takes one path"))
                continue
            rpath = Path(args[0])
            if path and not rpath.is_absolute():
                rpath = Path(path).parent / rpath
            try:
                sc.rule_sources.append((rpath.read_text(), str(rpath), 0, lineno))
            except OSError as e:
                sc.problems.append(Problem(sc.where(lineno), "FormatError",
                                           f"cannot read rules file: {e.strerror}"))
        else:
            sc.declarations.append(d)
    return sc


def load(path) -> Scenario:
    path = str(path)
    return parse_scenario(Path(path).read_text(), path)


# --- compiled timeline ----------------------------------------------------

@dataclass(frozen=True)
class Step:
    line: int
    time: int
    kind: str
    subject: str | None = None  # world entity id
    service: str | None = None
    decision: str | None = None
    event: DataEvent | None = None


@dataclass
class Model:
    """Everything a run needs, built from a scenario."""

    scenario: Scenario
    world: World
    store: EventStore
    consents: ConsentRegistry
    services: ServiceModel
    recognizers: list
    rules: RuleSet
    labels: dict
    steps: list


Sink = Callable[[str, ModelError], None]


def raising_sink(location: str, error: ModelError) -> None:
    raise ScenarioError(location, error)


def _need(d: Directive, n: int, usage: str):
    if len(d.args) < n:
        raise FormatError(f"usage: {usage}")


def build(sc: Scenario, sink: Sink = raising_sink) -> Model:
    world = World()
    labels: dict[str, str] = {}
    consents = ConsentRegistry()
    services = ServiceModel(world, consents)
    registers: list[str] = []
    recognizers: list[RecognitionRule] = []
    declared_types = {}

    deontics: dict[str, list] = {}
    for d in sc.declarations:
        if d.keyword != "deontic":
            continue
        try:
            _need(d, 3, 'deontic <Role> duty|right|constraint "<description>"')
            pred = None
            if "when" in d.opts:
                try:
                    pred = parse_condition(d.opts["when"], sc.where(d.line))
                except RuleParseError as e:
                    raise FormatError(f"bad constraint predicate: {e.errors[0].message}") from None
            kind = d.args[1]
            if kind not in {k.value for k in DeonticKind}:
                raise FormatError(f"unknown deontic kind {kind!r}")
            deontics.setdefault(d.args[0], []).append(
                (d.line, DeonticAssignment(kind, d.args[2], d.opts.get("service"), pred)))
        except ModelError as e:
            sink(sc.where(d.line), e)

    def entity_id(label: str) -> str:
        if label not in labels:
            raise UnknownEntity(f"no entity labelled {label!r}")
        return labels[label]

    for d in sc.declarations:
        loc = sc.where(d.line)
        try:
            if d.keyword == "type":
                _need(d, 2, "type <kind> <Name> [of <Supertype>]")
                sup = None
                if len(d.args) >= 4 and d.args[2] == "of":
                    sup = d.args[3]
                elif len(d.args) != 2:
                    raise FormatError("usage: type <kind> <Name> [of <Supertype>]")
                if d.args[0] not in {k.value for k in TypeKind}:
                    raise FormatError(f"unknown type kind {d.args[0]!r}")
                mine = [a for _, a in deontics.get(d.args[1], [])]
                world.define_type(TypeDefinition(d.args[1], d.args[0], sup, mine))
                declared_types[d.args[1]] = d.line
            elif d.keyword == "deontic":
                pass
            elif d.keyword == "entity":
                _compile_entity(d, world, labels, entity_id)
            elif d.keyword == "moment":
                _need(d, 3, "moment <name> <kind> <bearer,...> [value=...]")
                bearers = [entity_id(b) for b in _split(d.args[2])]
                value = parse_value(d.opts["value"]) if "value" in d.opts else None
                world.create_moment(d.args[0], d.args[1], bearers, value)
            elif d.keyword == "register":
                _need(d, 1, "register <id>")
                if d.args[0] in registers:
                    raise FormatError(f"register {d.args[0]!r} already declared")
                registers.append(d.args[0])
            elif d.keyword == "service":
                _need(d, 1, "service <id> provider=<entity> [...]")
                if "provider" not in d.opts:
                    raise FormatError("service needs provider=<entity>")
                definition = PublicServiceDefinition(
                    d.args[0], d.opts.get("name", d.args[0]), entity_id(d.opts["provider"]),
                    d.opts.get("capability", ""), d.opts.get("right"),
                    d.opts.get("mode", Mode.AUTOMATIC.value))
                if d.opts.get("offered", "true") == "true":
                    services.offer_service(definition, 0)
                else:
                    services.define_service(definition)
            elif d.keyword == "life_event_service":
                _need(d, 1, "life_event_service <id> on=<type> members=<svc,...>")
                services.define_life_event_service(LifeEventService(
                    d.args[0], d.opts.get("on", ""), _split(d.opts.get("members", "")),
                    d.opts.get("name", d.args[0])))
            elif d.keyword == "recognize":
                _need(d, 1, "recognize <life_event_type> pattern=<type,...> [within=N]")
                window = int(d.opts["within"]) if "within" in d.opts else None
                recognizers.append(RecognitionRule(
                    d.args[0], _split(d.opts.get("pattern", "")), window))
            else:
                raise FormatError(f"unknown declaration {d.keyword!r}")
        except ModelError as e:
            sink(loc, e)
        except ValueError as e:
            sink(loc, FormatError(str(e)))

    for role, items in deontics.items():
        if role not in declared_types:
            for line, _ in items:
                sink(sc.where(line), UnknownRole(f"deontic for undeclared role {role!r}"))

    rules: list = []
    seen: set[str] = set()
    for text, filename, offset, _ in sc.rule_sources:
        try:
            parsed = parse_rules(text, filename, services=services.definitions,
                                 types=world.types, line_offset=offset)
        except RuleParseError as e:
            for err in e.errors:
                sink(f"{err.filename}:{err.line}:{err.col}", err)
            continue
        for r in parsed:
            if r.id in seen:
                err = DuplicateRuleId(f"rule id {r.id!r} already used", r.line, r.col, filename)
                sink(f"{filename}:{r.line}:{r.col}", err)
                continue
            seen.add(r.id)
            rules.append(r)
    ruleset = RuleSet(rules)

    store = EventStore(world, registers)
    model = Model(sc, world, store, consents, services, recognizers, ruleset, labels, [])
    model.steps = _compile_timeline(sc, model, sink)
    return model


def _compile_entity(d: Directive, world: World, labels: dict, entity_id) -> None:
    _need(d, 3, "entity <label> <category> <Species> [subspecies=..] [roles=..] [phases=..]")
    label, category, species = d.args[:3]
    if label in labels:
        raise FormatError(f"entity label {label!r} already used")
    if category not in {c.value for c in Category}:
        raise FormatError(f"unknown category {category!r}")
    reserved = {"subspecies", "roles", "phases", "members"}
    attrs = {k: parse_value(v) for k, v in sorted(d.opts.items()) if k not in reserved}
    members = [entity_id(m) for m in _split(d.opts.get("members", ""))]
    eid = world.register_entity(category, species, d.opts.get("subspecies"), attrs,
                                members, hint=label)
    labels[label] = eid
    for role in _split(d.opts.get("roles", "")):
        world.assign_role(eid, role)
    for phase in _split(d.opts.get("phases", "")):
        world.transition_phase(eid, phase)


def _compile_timeline(sc: Scenario, model: Model, sink: Sink) -> list[Step]:
    """Typed steps from timeline directives, checked statically.

    Role, phase and subspecies effects are simulated on copies of the
    declared entities so that incompatibilities are reported with the line
    that would cause them.
    """
    world = model.world
    shadow: dict[str, EntityRecord] = {eid: world.entity(eid) for eid in world.entity_ids()}
    steps: list[Step] = []
    last_time = 0
    data_ids: set[str] = set()
    n_data = 0

    def subject_of(label: str) -> str:
        if label not in model.labels:
            raise UnknownSubject(f"no entity labelled {label!r}")
        return model.labels[label]

    def service_of(name: str) -> str:
        if name not in model.services.definitions:
            raise UnknownService(f"no service {name!r}")
        return name

    for d in sc.timeline:
        loc = sc.where(d.line)
        try:
            if d.time < last_time:
                raise TimestampRegression(f"time {d.time} precedes previous directive at {last_time}")
            last_time = d.time
            if d.keyword == "data_event":
                n_data += 1
                steps.append(_compile_data_event(d, n_data, data_ids, model, shadow, subject_of))
            elif d.keyword in ("opt_out", "opt_in"):
                _need(d, 1, f"{d.keyword} <subject> [<service>|*]")
                svc = d.args[1] if len(d.args) > 1 else "*"
                if svc != "*":
                    service_of(svc)
                steps.append(Step(d.line, d.time, d.keyword, subject_of(d.args[0]), svc))
            elif d.keyword == "consent":
                _need(d, 3, "consent <subject> <service> granted|denied")
                if d.args[2] not in ("granted", "denied"):
                    raise FormatError(f"consent decision must be granted or denied, not {d.args[2]!r}")
                steps.append(Step(d.line, d.time, "consent", subject_of(d.args[0]),
                                  service_of(d.args[1]), d.args[2]))
            elif d.keyword == "explicit_request":
                _need(d, 2, "explicit_request <subject> <service>")
                steps.append(Step(d.line, d.time, "explicit_request", subject_of(d.args[0]),
                                  service_of(d.args[1])))
            elif d.keyword == "probe":
                steps.append(Step(d.line, d.time, "probe"))
            else:
                raise FormatError(f"unknown timeline directive {d.keyword!r}")
        except ModelError as e:
            sink(loc, e)
    return steps


def _compile_data_event(d: Directive, n: int, data_ids: set, model: Model,
                        shadow: dict, subject_of) -> Step:
    _need(d, 1, "data_event <type> subject=<entity> register=<register> [...]")
    if "subject" not in d.opts or "register" not in d.opts:
        raise FormatError("data_event needs subject= and register=")
    subject = subject_of(d.opts["subject"])
    co = tuple(subject_of(x) for x in _split(d.opts.get("with", "")))
    if d.opts["register"] not in model.store.registers:
        raise UnknownRegister(f"register {d.opts['register']!r} is not declared")
    event_id = d.opts.get("id", f"d{n}")
    if event_id in data_ids:
        raise FormatError(f"data event id {event_id!r} already used")
    data_ids.add(event_id)
    effects = []
    for key in EFFECT_KEYS:
        for name in _split(d.opts.get(key, "")):
            effects.append(Effect(key, name, d.opts.get("authorization") if key == "subspecies" else None))
    _simulate(effects, subject, co, model.world, shadow)
    payload = {k: parse_value(v) for k, v in sorted(d.opts.items()) if k not in DATA_EVENT_KEYS}
    event = DataEvent(event_id, d.args[0], d.time, subject, d.opts["register"], payload, co,
                      tuple(effects))
    return Step(d.line, d.time, "data_event", subject, event=event)


def _simulate(effects, subject: str, co: tuple, world: World, shadow: dict) -> None:
    """Apply effects to shadow records, raising what the run would raise."""
    types = world.types
    rec = shadow[subject]
    for eff in effects:
        if eff.action == "assign_role":
            if not types.is_kind(eff.name, TypeKind.ROLE):
                raise UnknownRole(f"{eff.name!r} is not a defined role")
            problem = world.role_problem(rec, eff.name)
            if problem:
                raise IncompatibleRole(problem)
            parent = types.parent_role(eff.name)
            if parent is not None and parent not in rec.roles:
                raise IncompatibleRole(f"sub-role {eff.name!r} requires {parent!r} to be held")
            if eff.name in rec.roles:
                raise AlreadyHeld(f"role {eff.name!r} already held")
            rec.roles.add(eff.name)
        elif eff.action == "relinquish_role":
            if eff.name not in rec.roles:
                raise NotHeld(f"role {eff.name!r} not held")
            rec.roles = {r for r in rec.roles if eff.name not in types.chain(r)}
        elif eff.action == "phase":
            if not types.is_kind(eff.name, TypeKind.PHASE):
                raise UnknownPhase(f"{eff.name!r} is not a defined phase")
            anchor = types.anchor(eff.name)
            if anchor not in (rec.species, rec.subspecies):
                raise IncompatiblePhase(f"phase {eff.name!r} is declared under {anchor!r}")
            group = types.get(eff.name).supertype
            rec.phases = {p for p in rec.phases if types.get(p).supertype != group} | {eff.name}
        elif eff.action == "subspecies":
            if not eff.authorization:
                raise MissingAuthorization("subspecies change needs authorization=<token>")
            sd = types.get(eff.name)
            if sd is None or sd.kind is not TypeKind.SUBSPECIES or sd.supertype != rec.species:
                raise CrossSpeciesSubspecies(f"{eff.name!r} is not a subspecies of {rec.species!r}")
            rec.subspecies = eff.name
            rec.phases = {p for p in rec.phases if types.anchor(p) in (rec.species, rec.subspecies)}
            rec.roles = {r for r in rec.roles if types.anchor(r) in (rec.species, rec.subspecies)}
        elif eff.action == "relator":
            if not co:
                raise BearerCardinality(f"relator {eff.name!r} needs with=<co-subject>")


def validate(sc: Scenario) -> list[Problem]:
    """Every problem in the scenario, in file order; empty means runnable."""
    problems = list(sc.problems)

    def collect(location: str, error: ModelError) -> None:
        problems.append(Problem(location, error.code, error.message))

    build(sc, collect)
    return problems

