"""Runtime type system for endurants: types, entities, moments and snapshots.

Species and subspecies are rigid: an entity keeps its species for life and
changes subspecies only through an authorized administrative override.
Roles and phases are anti-rigid and may be acquired and dropped freely,
subject to compatibility with the entity's species chain.  Multi-bearer
moments (relators) are existentially dependent on their bearers and are
destroyed with them.
"""
from __future__ import annotations

import copy
import json
from dataclasses import dataclass, field
from enum import Enum
from types import MappingProxyType
from typing import Iterable, Mapping

from . import conditions
from .errors import (
    AlreadyHeld, BearerCardinality, ConstraintViolated, CrossSpeciesSubspecies,
    DeonticsOnNonRole, DuplicateType, IllegalSupertypeKind, IncompatiblePhase,
    IncompatibleRole, InvalidDeontic, MembersOnNonInstitutional, MissingAuthorization,
    NonAgentSocialBearer, NonPhysicalMember, NotHeld, RigidityViolation,
    SubspeciesMismatch, TimeRegression, UnknownBearer, UnknownEntity, UnknownPhase,
    UnknownRole, UnknownSpecies, UnknownSupertype,
)


class TypeKind(str, Enum):
    SPECIES = "species"
    SUBSPECIES = "subspecies"
    PHASE = "phase"
    ROLE = "role"


class Category(str, Enum):
    PHYSICAL_OBJECT = "physical_object"
    AMOUNT_OF_MATTER = "amount_of_matter"
    PHYSICAL_AGENT = "physical_agent"
    INSTITUTIONAL_AGENT = "institutional_agent"

    @property
    def is_agent(self) -> bool:
        return self in (Category.PHYSICAL_AGENT, Category.INSTITUTIONAL_AGENT)


class DeonticKind(str, Enum):
    DUTY = "duty"
    RIGHT = "right"
    CONSTRAINT = "constraint"


class MomentKind(str, Enum):
    INTRINSIC = "intrinsic"
    RELATOR = "relator"
    SOCIAL_RELATOR = "social_relator"


# Legal supertype kinds per defined kind.
_SUPERTYPE_KINDS = {
    TypeKind.SPECIES: (),
    TypeKind.SUBSPECIES: (TypeKind.SPECIES,),
    TypeKind.PHASE: (TypeKind.SPECIES, TypeKind.SUBSPECIES),
    TypeKind.ROLE: (TypeKind.SPECIES, TypeKind.SUBSPECIES, TypeKind.ROLE),
}


@dataclass(frozen=True)
class DeonticAssignment:
    kind: DeonticKind
    description: str
    service_ref: str | None = None
    predicate: conditions.Expr | None = None

    def __post_init__(self):
        object.__setattr__(self, "kind", DeonticKind(self.kind))
        if self.service_ref is not None and self.kind is not DeonticKind.RIGHT:
            raise InvalidDeontic("service_ref is only permitted on rights")
        if self.predicate is not None and self.kind is not DeonticKind.CONSTRAINT:
            raise InvalidDeontic("predicate is only permitted on constraints")


@dataclass(frozen=True)
class TypeDefinition:
    name: str
    kind: TypeKind
    supertype: str | None = None
    deontics: tuple = ()

    def __post_init__(self):
        object.__setattr__(self, "kind", TypeKind(self.kind))
        object.__setattr__(self, "deontics", tuple(self.deontics))


class TypeRegistry:
    """Registry of type definitions. The supertype graph is a forest by construction."""

    def __init__(self):
        self._types: dict[str, TypeDefinition] = {}

    def define_type(self, definition: TypeDefinition) -> str:
        d = definition
        if d.name in self._types:
            raise DuplicateType(f"type {d.name!r} already defined")
        allowed = _SUPERTYPE_KINDS[d.kind]
        if d.supertype is None:
            if allowed:
                raise IllegalSupertypeKind(f"{d.kind.value} {d.name!r} requires a supertype")
        else:
            if not allowed:
                raise IllegalSupertypeKind(f"species {d.name!r} cannot have a supertype")
            sup = self._types.get(d.supertype)
            if sup is None:
                raise UnknownSupertype(f"supertype {d.supertype!r} of {d.name!r} is not defined")
            if sup.kind not in allowed:
                raise IllegalSupertypeKind(
                    f"{d.kind.value} {d.name!r} cannot specialize {sup.kind.value} {sup.name!r}")
        if d.deontics and d.kind is not TypeKind.ROLE:
            raise DeonticsOnNonRole(f"{d.kind.value} {d.name!r} cannot carry deontic assignments")
        self._types[d.name] = d
        return d.name

    def __contains__(self, name) -> bool:
        return name in self._types

    def __iter__(self):
        return iter(self._types.values())

    def get(self, name: str) -> TypeDefinition | None:
        return self._types.get(name)

    def is_kind(self, name: str, kind: TypeKind) -> bool:
        d = self._types.get(name)
        return d is not None and d.kind is kind

    def names(self, kind: TypeKind) -> list[str]:
        return [d.name for d in self._types.values() if d.kind is kind]

    def chain(self, name: str) -> list[str]:
        """``name`` followed by all its supertypes, nearest first."""
        out = []
        while name is not None:
            out.append(name)
            name = self._types[name].supertype
        return out

    def anchor(self, name: str) -> str:
        """The species or subspecies a role/phase is ultimately declared under."""
        for n in self.chain(name):
            if self._types[n].kind in (TypeKind.SPECIES, TypeKind.SUBSPECIES):
                return n
        raise AssertionError(f"type {name!r} has no species anchor")

    def species_of(self, name: str) -> str:
        return self.chain(name)[-1]

    def parent_role(self, role: str) -> str | None:
        sup = self._types[role].supertype
        return sup if sup is not None and self._types[sup].kind is TypeKind.ROLE else None

    def deontics_of(self, role: str) -> list[tuple[str, DeonticAssignment]]:
        """Deontic assignments of ``role`` and of every role it specializes."""
        out = []
        for n in self.chain(role):
            d = self._types[n]
            if d.kind is TypeKind.ROLE:
                out.extend((n, a) for a in d.deontics)
        return out

    def rights(self, roles: Iterable[str]) -> set[str]:
        """Service refs of every right conferred by the given roles."""
        refs = set()
        for r in roles:
            if r not in self._types:
                continue
            for _, a in self.deontics_of(r):
                if a.kind is DeonticKind.RIGHT and a.service_ref is not None:
                    refs.add(a.service_ref)
        return refs


@dataclass
class EntityRecord:
    id: str
    category: Category
    species: str
    subspecies: str | None = None
    phases: set = field(default_factory=set)
    roles: set = field(default_factory=set)
    attributes: dict = field(default_factory=dict)
    members: set = field(default_factory=set)

    def copy(self) -> "EntityRecord":
        return copy.deepcopy(self)


@dataclass(frozen=True)
class MomentRecord:
    id: str
    name: str
    kind: MomentKind
    bearers: tuple
    value: object = None

    def to_dict(self) -> dict:
        return {"id": self.id, "name": self.name, "kind": self.kind.value,
                "bearers": list(self.bearers), "value": self.value}


@dataclass(frozen=True)
class EntityFacts:
    category: Category
    species: str
    subspecies: str | None
    phases: frozenset
    roles: frozenset
    attributes: Mapping
    members: frozenset

    def to_dict(self) -> dict:
        return {
            "category": self.category.value,
            "species": self.species,
            "subspecies": self.subspecies,
            "phases": sorted(self.phases),
            "roles": sorted(self.roles),
            "attributes": {k: self.attributes[k] for k in sorted(self.attributes)},
            "members": sorted(self.members),
        }


@dataclass(frozen=True)
class StateOfAffairs:
    """Immutable snapshot of every entity and moment at one logical instant.

    ``position`` is the event-log position the snapshot was taken at; it
    orders snapshots that share a timestamp.
    """

    timestamp: int
    position: int
    facts: Mapping
    moments: frozenset

    @property
    def instant(self) -> tuple[int, int]:
        return (self.timestamp, self.position)

    def to_dict(self) -> dict:
        return {
            "t": self.timestamp,
            "position": self.position,
            "entities": {k: self.facts[k].to_dict() for k in sorted(self.facts)},
            "moments": [m.to_dict() for m in sorted(self.moments, key=lambda m: m.id)],
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))

    def moments_of(self, entity_id: str) -> frozenset:
        return frozenset(m for m in self.moments if entity_id in m.bearers)

    def subject_view(self, entity_id: str):
        return (self.facts.get(entity_id), self.moments_of(entity_id))

    def diff(self, other: "StateOfAffairs") -> set[str]:
        """Entity ids whose facts or moments differ between the two snapshots."""
        changed = set()
        for eid in set(self.facts) | set(other.facts):
            if self.facts.get(eid) != other.facts.get(eid):
                changed.add(eid)
        for m in self.moments ^ other.moments:
            changed.update(m.bearers)
        return changed


@dataclass(frozen=True)
class AuditFact:
    seq: int
    at: int
    action: str
    entity: str
    detail: str = ""

    def to_dict(self) -> dict:
        return {"seq": self.seq, "at": self.at, "action": self.action,
                "entity": self.entity, "detail": self.detail}


def empty_state(timestamp: int = 0, position: int = 0) -> StateOfAffairs:
    return StateOfAffairs(timestamp, position, MappingProxyType({}), frozenset())


class World:
    """Single-writer store of entities and moments over a type registry."""

    def __init__(self, types: TypeRegistry | None = None):
        self.types = types if types is not None else TypeRegistry()
        self._entities: dict[str, EntityRecord] = {}
        self._moments: dict[str, MomentRecord] = {}
        self._audit: list[AuditFact] = []
        self._counter = 0
        self._moment_counter = 0
        self._clock = 0

    # -- plumbing ----------------------------------------------------------

    def define_type(self, definition: TypeDefinition) -> str:
        return self.types.define_type(definition)

    def _tick(self, at: int | None) -> int:
        if at is None:
            return self._clock
        if at < self._clock:
            raise TimeRegression(f"logical time {at} precedes current time {self._clock}")
        self._clock = at
        return at

    def _fresh_id(self, hint: str | None) -> str:
        self._counter += 1
        return f"{hint or 'entity'}#{self._counter}"

    def _get(self, entity_id: str) -> EntityRecord:
        try:
            return self._entities[entity_id]
        except KeyError:
            raise UnknownEntity(f"no entity {entity_id!r}") from None

    def _log(self, at: int, action: str, entity: str, detail: str = "") -> None:
        self._audit.append(AuditFact(len(self._audit) + 1, at, action, entity, detail))

    @property
    def audit(self) -> tuple[AuditFact, ...]:
        return tuple(self._audit)

    @property
    def clock(self) -> int:
        return self._clock

    def __contains__(self, entity_id) -> bool:
        return entity_id in self._entities

    def entity(self, entity_id: str) -> EntityRecord:
        return self._get(entity_id).copy()

    def entity_ids(self) -> list[str]:
        return list(self._entities)

    def moment(self, moment_id: str) -> MomentRecord:
        return self._moments[moment_id]

    def moments(self) -> list[MomentRecord]:
        return list(self._moments.values())

    # -- compatibility -----------------------------------------------------

    def _compatible(self, rec: EntityRecord, type_name: str) -> bool:
        anchor = self.types.anchor(type_name)
        return anchor == rec.species or (rec.subspecies is not None and anchor == rec.subspecies)

    def role_problem(self, rec: EntityRecord, role: str) -> str | None:
        """Why ``role`` cannot be held by ``rec`` (None when it can)."""
        if not self._compatible(rec, role):
            return (f"role {role!r} is declared under {self.types.anchor(role)!r}, "
                    f"not under {rec.species!r}/{rec.subspecies!r}")
        return None

    # -- entity lifecycle --------------------------------------------------

    def register_entity(self, category, species: str, subspecies: str | None = None,
                        attributes: Mapping | None = None, members: Iterable[str] = (),
                        hint: str | None = None) -> str:
        category = Category(category)
        if not self.types.is_kind(species, TypeKind.SPECIES):
            raise UnknownSpecies(f"{species!r} is not a defined species")
        if subspecies is not None:
            d = self.types.get(subspecies)
            if d is None or d.kind is not TypeKind.SUBSPECIES or d.supertype != species:
                raise SubspeciesMismatch(f"{subspecies!r} is not a subspecies of {species!r}")
        members = list(members)
        if members and category is not Category.INSTITUTIONAL_AGENT:
            raise MembersOnNonInstitutional(f"{category.value} entities have no members")
        for m in members:
            self._check_member(m)
        eid = self._fresh_id(hint)
        self._entities[eid] = EntityRecord(
            eid, category, species, subspecies, attributes=dict(attributes or {}),
            members=set(members))
        self._log(self._clock, "register", eid, f"{category.value}:{species}")
        return eid

    def _check_member(self, member: str) -> None:
        rec = self._entities.get(member)
        if rec is None:
            raise UnknownEntity(f"no entity {member!r}")
        if rec.category is not Category.PHYSICAL_AGENT:
            raise NonPhysicalMember(f"member {member!r} is a {rec.category.value}, not a physical agent")

    def add_member(self, institution: str, member: str, at: int | None = None) -> EntityRecord:
        rec = self._get(institution)
        if rec.category is not Category.INSTITUTIONAL_AGENT:
            raise MembersOnNonInstitutional(f"{institution!r} is not an institutional agent")
        self._check_member(member)
        at = self._tick(at)
        rec.members.add(member)
        self._log(at, "add_member", institution, member)
        return rec.copy()

    def assign_role(self, entity_id: str, role: str, at: int | None = None) -> EntityRecord:
        rec = self._get(entity_id)
        if not self.types.is_kind(role, TypeKind.ROLE):
            raise UnknownRole(f"{role!r} is not a defined role")
        problem = self.role_problem(rec, role)
        if problem:
            raise IncompatibleRole(problem)
        parent = self.types.parent_role(role)
        if parent is not None and parent not in rec.roles:
            raise IncompatibleRole(f"sub-role {role!r} requires {parent!r} to be held")
        if role in rec.roles:
            raise AlreadyHeld(f"{entity_id!r} already holds {role!r}")
        at = self._tick(at)
        rec.roles.add(role)
        self._log(at, "assign_role", entity_id, role)
        return rec.copy()

    def _subroles_held(self, rec: EntityRecord, role: str) -> list[str]:
        return sorted(r for r in rec.roles if r != role and role in self.types.chain(r))

    def relinquish_role(self, entity_id: str, role: str, at: int | None = None) -> EntityRecord:
        rec = self._get(entity_id)
        if role not in rec.roles:
            raise NotHeld(f"{entity_id!r} does not hold {role!r}")
        at = self._tick(at)
        for sub in self._subroles_held(rec, role):
            rec.roles.discard(sub)
            self._log(at, "relinquish_role", entity_id, f"{sub} (cascade from {role})")
        rec.roles.discard(role)
        self._log(at, "relinquish_role", entity_id, role)
        return rec.copy()

    def transition_phase(self, entity_id: str, phase: str, at: int | None = None) -> EntityRecord:
        rec = self._get(entity_id)
        if not self.types.is_kind(phase, TypeKind.PHASE):
            raise UnknownPhase(f"{phase!r} is not a defined phase")
        if not self._compatible(rec, phase):
            raise IncompatiblePhase(
                f"phase {phase!r} is declared under {self.types.anchor(phase)!r}")
        at = self._tick(at)
        group = self.types.get(phase).supertype
        siblings = sorted(p for p in rec.phases if self.types.get(p).supertype == group)
        rec.phases.difference_update(siblings)
        rec.phases.add(phase)
        self._log(at, "transition_phase", entity_id, f"{'|'.join(siblings) or '-'} -> {phase}")
        return rec.copy()

    def change_species(self, entity_id: str, *args, **kwargs):
        """Species are rigid: this always refuses, even for a no-op request."""
        raise RigidityViolation(f"species of {entity_id!r} cannot change")

    def change_subspecies(self, entity_id: str, new_subspecies: str,
                          authorization: str | None, at: int | None = None) -> EntityRecord:
        rec = self._get(entity_id)
        if not authorization:
            raise MissingAuthorization("changing a subspecies requires an authorization token")
        d = self.types.get(new_subspecies)
        if d is None or d.kind is not TypeKind.SUBSPECIES or d.supertype != rec.species:
            raise CrossSpeciesSubspecies(
                f"{new_subspecies!r} is not a subspecies of {rec.species!r}")
        at = self._tick(at)
        old = rec.subspecies
        rec.subspecies = new_subspecies
        dropped_phases = sorted(p for p in rec.phases if not self._compatible(rec, p))
        rec.phases.difference_update(dropped_phases)
        dropped_roles = sorted(r for r in rec.roles if not self._compatible(rec, r))
        rec.roles.difference_update(dropped_roles)
        detail = f"{old} -> {new_subspecies} auth={authorization}"
        if dropped_phases:
            detail += f" dropped_phases={','.join(dropped_phases)}"
        if dropped_roles:
            detail += f" dropped_roles={','.join(dropped_roles)}"
        self._log(at, "change_subspecies", entity_id, detail)
        return rec.copy()

    def set_attribute(self, entity_id: str, name: str, value, at: int | None = None) -> str:
        """Set an intrinsic attribute; returns the entity id afterwards.

        An amount of matter does not survive a change of its parts, so the
        old entity is retired and a new one with a fresh id takes its place.
        """
        rec = self._get(entity_id)
        at = self._tick(at)
        if rec.category is not Category.AMOUNT_OF_MATTER:
            rec.attributes[name] = value
            self._log(at, "set_attribute", entity_id, f"{name}={json.dumps(value)}")
            return entity_id
        attrs = dict(rec.attributes)
        attrs[name] = value
        hint = entity_id.rsplit("#", 1)[0]
        new_id = self._fresh_id(hint)
        self._entities[new_id] = EntityRecord(
            new_id, rec.category, rec.species, rec.subspecies, set(rec.phases),
            set(rec.roles), attrs)
        self._log(at, "reidentify", entity_id, f"{name}={json.dumps(value)} -> {new_id}")
        self._destroy(entity_id, at)
        return new_id

    def destroy_entity(self, entity_id: str, at: int | None = None) -> frozenset:
        self._get(entity_id)
        at = self._tick(at)
        return self._destroy(entity_id, at)

    def _destroy(self, entity_id: str, at: int) -> frozenset:
        del self._entities[entity_id]
        cascaded = frozenset(mid for mid, m in self._moments.items() if entity_id in m.bearers)
        for mid in sorted(cascaded):
            del self._moments[mid]
            self._log(at, "destroy_moment", entity_id, mid)
        for rec in self._entities.values():
            rec.members.discard(entity_id)
        self._log(at, "destroy", entity_id)
        return cascaded

    # -- moments -----------------------------------------------------------

    def create_moment(self, name: str, kind, bearers: Iterable[str], value=None,
                      at: int | None = None) -> str | None:
        """Create a moment; returns its id, or None for an intrinsic moment
        (which is stored inline as an attribute of its single bearer)."""
        kind = MomentKind(kind)
        bearers = tuple(bearers)
        for b in bearers:
            if b not in self._entities:
                raise UnknownBearer(f"bearer {b!r} does not exist")
        if kind is MomentKind.INTRINSIC:
            if len(bearers) != 1:
                raise BearerCardinality(f"intrinsic moment {name!r} needs exactly 1 bearer")
            self.set_attribute(bearers[0], name, value, at)
            return None
        if len(set(bearers)) < 2 or len(set(bearers)) != len(bearers):
            raise BearerCardinality(f"{kind.value} {name!r} needs at least 2 distinct bearers")
        if kind is MomentKind.SOCIAL_RELATOR:
            for b in bearers:
                if not self._entities[b].category.is_agent:
                    raise NonAgentSocialBearer(f"bearer {b!r} of {name!r} is not an agent")
        self._check_constraints(name, bearers)
        at = self._tick(at)
        self._moment_counter += 1
        mid = f"m{self._moment_counter}"
        self._moments[mid] = MomentRecord(mid, name, kind, bearers, value)
        self._log(at, "create_moment", mid, f"{name}:{kind.value}:{','.join(bearers)}")
        return mid

    def _check_constraints(self, name: str, bearers: tuple) -> None:
        state = self.snapshot(self._clock)
        for b in bearers:
            partners = frozenset(x for x in bearers if x != b)
            ctx = conditions.Context(state, partners=partners)
            for held in sorted(self._entities[b].roles):
                for role, a in self.types.deontics_of(held):
                    if a.kind is not DeonticKind.CONSTRAINT or a.predicate is None:
                        continue
                    if not conditions.evaluate(a.predicate, b, ctx):
                        raise ConstraintViolated(
                            f"creating {name!r}: constraint of role {role!r} on {b!r} "
                            f"failed: {a.description}", deontic=a, bearer=b, role=role)

    # -- snapshots ---------------------------------------------------------

    def snapshot(self, at: int | None = None, position: int = 0) -> StateOfAffairs:
        at = self._clock if at is None else at
        facts = {
            eid: EntityFacts(
                rec.category, rec.species, rec.subspecies, frozenset(rec.phases),
                frozenset(rec.roles), MappingProxyType(dict(rec.attributes)),
                frozenset(rec.members))
            for eid, rec in sorted(self._entities.items())
        }
        return StateOfAffairs(at, position, MappingProxyType(facts),
                              frozenset(self._moments.values()))
