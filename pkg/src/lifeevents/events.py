"""Perdurants: data events in state registers, life events recognized from them.

Data events are ingested into an append-only log.  After every entry the
log keeps a snapshot of the world, so a recognized life event can point at
the states of affairs it separates.  Recognition is declarative: a life
event type is matched either by a single data-event type or by an ordered
sequence of data-event types on one subject inside a time window.
"""
from __future__ import annotations

import itertools
import json
from dataclasses import dataclass, field, replace
from types import MappingProxyType
from typing import Iterable, Mapping, Sequence

from .errors import (
    CausalCycle, DuplicateEvent, InvalidRecognitionRule, TemporalInversion,
    TimestampRegression, UnknownEvent, UnknownRegister, UnknownSubject,
)
from .ontology import MomentKind, StateOfAffairs, World


@dataclass(frozen=True)
class Effect:
    """An ontological change carried by a data event.

    ``action`` is one of assign_role, relinquish_role, phase, relator,
    subspecies.  For ``relator`` the bearers are the event's subject and
    co-subjects; for ``subspecies`` ``authorization`` must be set.
    """

    action: str
    name: str
    authorization: str | None = None

    ACTIONS = ("assign_role", "relinquish_role", "phase", "relator", "subspecies")

    def __post_init__(self):
        if self.action not in self.ACTIONS:
            raise ValueError(f"unknown effect {self.action!r}")

    def to_text(self) -> str:
        if self.authorization:
            return f"{self.action}={self.name}/{self.authorization}"
        return f"{self.action}={self.name}"


@dataclass(frozen=True)
class DataEvent:
    id: str
    event_type: str
    timestamp: int
    subject: str
    register: str
    payload: Mapping = field(default_factory=dict)
    co_subjects: tuple = ()
    effects: tuple = ()

    def __post_init__(self):
        object.__setattr__(self, "payload", MappingProxyType(dict(self.payload)))
        object.__setattr__(self, "co_subjects", tuple(self.co_subjects))
        object.__setattr__(self, "effects", tuple(self.effects))

    def to_dict(self) -> dict:
        return {
            "id": self.id,
            "type": self.event_type,
            "t": self.timestamp,
            "subject": self.subject,
            "co_subjects": list(self.co_subjects),
            "register": self.register,
            "payload": {k: self.payload[k] for k in sorted(self.payload)},
            "effects": [e.to_text() for e in self.effects],
        }


@dataclass(frozen=True)
class LifeEvent:
    id: str
    life_event_type: str
    subject: str
    timestamp: int
    constituents: tuple
    positions: tuple
    before: StateOfAffairs
    after: StateOfAffairs
    caused_by: frozenset = frozenset()

    @property
    def is_atomic(self) -> bool:
        return len(self.constituents) == 1

    def to_dict(self) -> dict:
        return {
            "id": self.id,
            "type": self.life_event_type,
            "subject": self.subject,
            "t": self.timestamp,
            "constituents": list(self.constituents),
            "caused_by": sorted(self.caused_by),
            "before": self.before.position,
            "after": self.after.position,
        }


@dataclass(frozen=True)
class RecognitionRule:
    life_event_type: str
    pattern: tuple
    window: int | None = None

    def __post_init__(self):
        object.__setattr__(self, "pattern", tuple(self.pattern))
        if not self.pattern:
            raise InvalidRecognitionRule(f"{self.life_event_type}: empty pattern")
        if len(self.pattern) >= 2 and (self.window is None or self.window <= 0):
            raise InvalidRecognitionRule(
                f"{self.life_event_type}: sequence patterns need a positive window")


@dataclass(frozen=True)
class RegisterFact:
    value: object
    timestamp: int
    event_id: str


class StateRegister:
    """A simulated state register: last-write-wins facts keyed by (entity, attribute)."""

    def __init__(self, register_id: str):
        self.id = register_id
        self.facts: dict[tuple[str, str], RegisterFact] = {}

    def apply(self, event: DataEvent) -> None:
        for name in sorted(event.payload):
            self.facts[(event.subject, name)] = RegisterFact(
                event.payload[name], event.timestamp, event.id)

    def get(self, entity_id: str, attribute: str):
        fact = self.facts.get((entity_id, attribute))
        return None if fact is None else fact.value

    def serialize(self) -> str:
        rows = [
            {"entity": e, "attribute": a, "value": f.value, "t": f.timestamp, "event": f.event_id}
            for (e, a), f in sorted(self.facts.items())
        ]
        return json.dumps({"register": self.id, "facts": rows}, sort_keys=True,
                          separators=(",", ":"))


@dataclass(frozen=True)
class LogEntry:
    position: int
    record: object  # DataEvent | LifeEvent

    def to_json(self) -> str:
        kind = "data" if isinstance(self.record, DataEvent) else "life"
        body = {"position": self.position, "kind": kind}
        body.update(self.record.to_dict())
        return json.dumps(body, separators=(",", ":"))


class EventLog:
    """Append-only log with the world state captured after each entry.

    ``state(k)`` is the state after the first ``k`` entries, so the state
    just before entry ``p`` is ``state(p)`` and just after it ``state(p + 1)``.
    """

    def __init__(self, initial: StateOfAffairs):
        self._entries: list[LogEntry] = []
        self._states: list[StateOfAffairs] = [initial]

    def __len__(self) -> int:
        return len(self._entries)

    def __iter__(self):
        return iter(self._entries)

    def __getitem__(self, position: int) -> LogEntry:
        return self._entries[position]

    @property
    def last_timestamp(self) -> int | None:
        return self._entries[-1].record.timestamp if self._entries else None

    def append(self, record, state_after: StateOfAffairs) -> int:
        last = self.last_timestamp
        if last is not None and record.timestamp < last:
            raise TimestampRegression(f"timestamp {record.timestamp} precedes log head {last}")
        position = len(self._entries)
        self._entries.append(LogEntry(position, record))
        self._states.append(state_after)
        return position

    def state(self, k: int) -> StateOfAffairs:
        return self._states[k]

    @property
    def states(self) -> tuple:
        return tuple(self._states)

    def entries(self, start: int = 0, end: int | None = None) -> list[LogEntry]:
        return self._entries[start:end]

    def serialize(self) -> str:
        return "".join(e.to_json() + "\n" for e in self._entries)


# --- recognition ----------------------------------------------------------

def _by_subject(entries: Iterable[LogEntry]) -> dict[str, list[LogEntry]]:
    groups: dict[str, list[LogEntry]] = {}
    for e in entries:
        if isinstance(e.record, DataEvent):
            groups.setdefault(e.record.subject, []).append(e)
    return groups


def _greedy_matches(events: Sequence[LogEntry], rule: RecognitionRule) -> list[list[LogEntry]]:
    """Earliest-match, non-overlapping matches of ``rule`` over one subject's events.

    Timestamps are non-decreasing, so once the window is exceeded from a
    given start no later event can complete the match.
    """
    pattern = rule.pattern
    matches = []
    i = 0
    while i < len(events):
        first = events[i].record
        if first.event_type != pattern[0]:
            i += 1
            continue
        chosen = [i]
        j = i + 1
        while len(chosen) < len(pattern) and j < len(events):
            ev = events[j].record
            if ev.timestamp - first.timestamp > rule.window:
                break
            if ev.event_type == pattern[len(chosen)]:
                chosen.append(j)
            j += 1
        if len(chosen) == len(pattern):
            matches.append([events[k] for k in chosen])
            i = chosen[-1] + 1
        else:
            i += 1
    return matches


def _naive_matches(events: Sequence[LogEntry], rule: RecognitionRule) -> list[list[LogEntry]]:
    """Exhaustive subsequence enumeration, then earliest-match consumption."""
    n = len(rule.pattern)
    candidates = []
    for combo in itertools.combinations(range(len(events)), n):
        recs = [events[k].record for k in combo]
        if [r.event_type for r in recs] != list(rule.pattern):
            continue
        if n > 1 and recs[-1].timestamp - recs[0].timestamp > rule.window:
            continue
        candidates.append(combo)
    chosen = []
    last_end = -1
    while True:
        remaining = [c for c in candidates if c[0] > last_end]
        if not remaining:
            break
        best = min(remaining)
        chosen.append([events[k] for k in best])
        last_end = best[-1]
    return chosen


def _build(matches_per_rule, rules, states) -> list[LifeEvent]:
    out = []
    for ri, subject, match in matches_per_rule:
        first, last = match[0].position, match[-1].position
        before, after = states[first], states[last + 1]
        if before.subject_view(subject) == after.subject_view(subject):
            # no change to the subject: nothing was separated
            continue
        rule = rules[ri]
        out.append((
            (match[-1].record.timestamp, ri, subject, last),
            LifeEvent(
                id=f"{rule.life_event_type}#{ri}.{first}.{last}",
                life_event_type=rule.life_event_type,
                subject=subject,
                timestamp=match[-1].record.timestamp,
                constituents=tuple(m.record.id for m in match),
                positions=tuple(m.position for m in match),
                before=before,
                after=after,
            ),
        ))
    out.sort(key=lambda pair: pair[0])
    events = [le for _, le in out]
    return _link_contained(events)


def _link_contained(events: list[LifeEvent]) -> list[LifeEvent]:
    """A life event whose constituents are strictly contained in a later one causes it."""
    linked = []
    for b in events:
        causes = set(b.caused_by)
        cb = set(b.constituents)
        for a in events:
            if a is b or a.subject != b.subject:
                continue
            if set(a.constituents) < cb and a.positions[-1] < b.positions[-1]:
                causes.add(a.id)
        linked.append(replace(b, caused_by=frozenset(causes)))
    return linked


def recognize(log: EventLog, rules: Sequence[RecognitionRule], start: int = 0,
              end: int | None = None) -> list[LifeEvent]:
    """Recognize life events in the log window ``[start, end)``.

    Output is ordered by timestamp, then rule declaration order, then
    subject id.  Pure: repeated calls return equal lists.
    """
    states = log.states
    groups = _by_subject(log.entries(start, end))
    found = []
    for ri, rule in enumerate(rules):
        for subject in sorted(groups):
            for match in _greedy_matches(groups[subject], rule):
                found.append((ri, subject, match))
    return _build(found, rules, states)


def naive_recognize(log: EventLog, rules: Sequence[RecognitionRule], start: int = 0,
                    end: int | None = None) -> list[LifeEvent]:
    """Reference recognizer: same contract as :func:`recognize`, by brute force."""
    states = log.states
    window = [e for e in log.entries(start, end) if isinstance(e.record, DataEvent)]
    found = []
    for ri, rule in enumerate(rules):
        subjects = sorted({e.record.subject for e in window})
        for subject in subjects:
            mine = [e for e in window if e.record.subject == subject]
            for match in _naive_matches(mine, rule):
                found.append((ri, subject, match))
    return _build(found, rules, states)


# --- the store ------------------------------------------------------------

class EventStore:
    """Ingestion, registers and life-event bookkeeping over one world."""

    def __init__(self, world: World, registers: Iterable[str] = ()):
        self.world = world
        self.registers: dict[str, StateRegister] = {r: StateRegister(r) for r in registers}
        self.log = EventLog(world.snapshot(world.clock, 0))
        self.life_events: dict[str, LifeEvent] = {}
        self._event_ids: set[str] = set()

    def add_register(self, register_id: str) -> StateRegister:
        reg = self.registers.setdefault(register_id, StateRegister(register_id))
        return reg

    def ingest(self, event: DataEvent) -> int:
        if event.subject not in self.world:
            raise UnknownSubject(f"subject {event.subject!r} does not exist")
        for co in event.co_subjects:
            if co not in self.world:
                raise UnknownSubject(f"co-subject {co!r} does not exist")
        last = self.log.last_timestamp
        if last is not None and event.timestamp < last:
            raise TimestampRegression(f"timestamp {event.timestamp} precedes log head {last}")
        if event.register not in self.registers:
            raise UnknownRegister(f"register {event.register!r} is not declared")
        if event.id in self._event_ids:
            raise DuplicateEvent(f"data event id {event.id!r} already ingested")
        self.registers[event.register].apply(event)
        self._apply(event)
        self._event_ids.add(event.id)
        position = len(self.log)
        return self.log.append(event, self.world.snapshot(event.timestamp, position + 1))

    def _apply(self, event: DataEvent) -> None:
        w, t, s = self.world, event.timestamp, event.subject
        for name in sorted(event.payload):
            w.set_attribute(s, name, event.payload[name], t)
        for eff in event.effects:
            if eff.action == "assign_role":
                w.assign_role(s, eff.name, t)
            elif eff.action == "relinquish_role":
                w.relinquish_role(s, eff.name, t)
            elif eff.action == "phase":
                w.transition_phase(s, eff.name, t)
            elif eff.action == "subspecies":
                w.change_subspecies(s, eff.name, eff.authorization, t)
            elif eff.action == "relator":
                bearers = (s,) + event.co_subjects
                social = all(w.entity(b).category.is_agent for b in bearers)
                kind = MomentKind.SOCIAL_RELATOR if social else MomentKind.RELATOR
                w.create_moment(eff.name, kind, bearers, at=t)

    def record_life_event(self, event: LifeEvent) -> int:
        """Append a recognized life event to the log and index it."""
        self.life_events[event.id] = event
        position = len(self.log)
        return self.log.append(event, self.world.snapshot(event.timestamp, position + 1))

    def get(self, event_id: str) -> LifeEvent:
        try:
            return self.life_events[event_id]
        except KeyError:
            raise UnknownEvent(f"no life event {event_id!r}") from None

    def link_cause(self, cause_id: str, effect_id: str) -> LifeEvent:
        cause, effect = self.get(cause_id), self.get(effect_id)
        if cause_id == effect_id or self._reaches(cause_id, effect_id):
            raise CausalCycle(f"{cause_id!r} -> {effect_id!r} would close a causal cycle")
        if cause.timestamp > effect.timestamp:
            raise TemporalInversion(f"{cause_id!r} happens after {effect_id!r}")
        updated = replace(effect, caused_by=effect.caused_by | {cause_id})
        self.life_events[effect_id] = updated
        return updated

    def _reaches(self, start: str, target: str) -> bool:
        """Whether ``target`` is among the (transitive) causes of ``start``."""
        stack, seen = [start], set()
        while stack:
            node = stack.pop()
            if node == target:
                return True
            if node in seen:
                continue
            seen.add(node)
            ev = self.life_events.get(node)
            if ev is not None:
                stack.extend(ev.caused_by)
        return False

    def separated_states(self, event) -> tuple[StateOfAffairs, StateOfAffairs]:
        ev = self.get(event if isinstance(event, str) else event.id)
        return ev.before, ev.after
