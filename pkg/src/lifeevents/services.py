"""Public services: one offering per service, any number of initializations.

A service initialization replaces classic request processing: it can be
started by a life event (proactively) or by an explicit request, and runs
through admission, optional consent, and delivery.  Every transition is
checked against ``TRANSITIONS`` and reported to an optional listener.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum
from typing import Callable

from .errors import (
    DuplicateOffering, DuplicateService, InvalidLifeEventService, NotOffered,
    OptOutAtDelivery, SubjectMismatch, UnknownInitialization, UnknownProvider,
    UnknownService, UnknownSubject, WrongState,
)
from .ontology import Category, World

EXPLICIT_REQUEST = "explicit-request"


class Mode(str, Enum):
    AUTOMATIC = "automatic"
    CONSENT = "consent"
    REQUEST_ONLY = "request_only"


class InitState(str, Enum):
    INITIALIZED = "Initialized"
    ADMISSION_PENDING = "AdmissionPending"
    ADMITTED = "Admitted"
    REJECTED = "Rejected"
    CONSENT_PENDING = "ConsentPending"
    AWAITING_EXPLICIT_REQUEST = "AwaitingExplicitRequest"
    DELIVERING = "Delivering"
    DELIVERED = "Delivered"
    CANCELLED = "Cancelled"


S = InitState
TRANSITIONS: dict[InitState, frozenset] = {
    S.INITIALIZED: frozenset({S.ADMISSION_PENDING, S.AWAITING_EXPLICIT_REQUEST}),
    S.ADMISSION_PENDING: frozenset({S.ADMITTED, S.REJECTED}),
    S.ADMITTED: frozenset({S.CONSENT_PENDING, S.DELIVERING}),
    S.CONSENT_PENDING: frozenset({S.DELIVERING, S.CANCELLED}),
    S.DELIVERING: frozenset({S.DELIVERED, S.AWAITING_EXPLICIT_REQUEST}),
    S.AWAITING_EXPLICIT_REQUEST: frozenset({S.ADMISSION_PENDING}),
    S.REJECTED: frozenset(),
    S.CANCELLED: frozenset(),
    S.DELIVERED: frozenset(),
}
TERMINAL = frozenset(s for s, out in TRANSITIONS.items() if not out)


class RejectionReason(str, Enum):
    MISSING_RIGHT = "missing_right"
    OFFERING_INACTIVE = "offering_inactive"
    SUBJECT_UNKNOWN = "subject_unknown"


@dataclass(frozen=True)
class PublicServiceDefinition:
    id: str
    name: str
    provider: str
    capability: str = ""
    required_right: str | None = None  # service ref a held role's right must name
    default_mode: Mode = Mode.AUTOMATIC

    def __post_init__(self):
        object.__setattr__(self, "default_mode", Mode(self.default_mode))


@dataclass
class ServiceOffering:
    service_id: str
    offered_at: int
    active: bool = True


@dataclass
class ServiceInitialization:
    id: str
    service_id: str
    subject: str
    trigger: str  # life event id or EXPLICIT_REQUEST
    mode: Mode
    state: InitState = InitState.INITIALIZED
    interaction_count: int = 0
    monitor_log: list = field(default_factory=list)
    explicitly_requested: bool = False
    reasons: tuple = ()


@dataclass(frozen=True)
class LifeEventService:
    id: str
    life_event_type: str
    members: tuple
    name: str = ""

    def __post_init__(self):
        object.__setattr__(self, "members", tuple(self.members))
        if len(set(self.members)) < 2:
            raise InvalidLifeEventService(
                f"life event service {self.id!r} must aggregate at least two services")


@dataclass(frozen=True)
class Transition:
    at: int
    init_id: str
    service: str
    subject: str
    source: InitState
    target: InitState
    reason: str

    def to_dict(self) -> dict:
        return {"init": self.init_id, "service": self.service, "subject": self.subject,
                "from": self.source.value, "to": self.target.value, "reason": self.reason}


class ConsentRegistry:
    """Opt-outs (per service or ``"*"``) and per-initialization consent decisions."""

    def __init__(self):
        self.optouts: set[tuple[str, str]] = set()
        self.consents: dict[tuple[str, str], tuple[bool, int]] = {}

    def opt_out(self, subject: str, service: str = "*") -> None:
        self.optouts.add((subject, service))

    def opt_in(self, subject: str, service: str = "*") -> None:
        self.optouts.discard((subject, service))

    def is_opted_out(self, subject: str, service: str) -> bool:
        return (subject, service) in self.optouts or (subject, "*") in self.optouts

    def record(self, subject: str, init_id: str, granted: bool, at: int) -> None:
        self.consents[(subject, init_id)] = (granted, at)

    def snapshot(self) -> frozenset:
        return frozenset(self.optouts)


class ServiceModel:
    def __init__(self, world: World, consents: ConsentRegistry | None = None,
                 listener: Callable[[Transition], None] | None = None):
        self.world = world
        self.consents = consents if consents is not None else ConsentRegistry()
        self.listener = listener
        self.definitions: dict[str, PublicServiceDefinition] = {}
        self.offerings: dict[str, ServiceOffering] = {}
        self.life_event_services: dict[str, LifeEventService] = {}
        self.initializations: dict[str, ServiceInitialization] = {}

    # -- definitions & offering --------------------------------------------

    def __contains__(self, service_id) -> bool:
        return service_id in self.definitions

    def define_service(self, definition: PublicServiceDefinition) -> PublicServiceDefinition:
        if definition.id in self.definitions:
            raise DuplicateService(f"service {definition.id!r} already defined")
        self._check_provider(definition)
        self.definitions[definition.id] = definition
        return definition

    def _check_provider(self, d: PublicServiceDefinition) -> None:
        if d.provider not in self.world:
            raise UnknownProvider(f"provider {d.provider!r} of {d.id!r} does not exist")
        if self.world.entity(d.provider).category is not Category.INSTITUTIONAL_AGENT:
            raise UnknownProvider(f"provider {d.provider!r} of {d.id!r} is not an institutional agent")

    def offer_service(self, definition: PublicServiceDefinition, at: int) -> ServiceOffering:
        if definition.id in self.offerings:
            raise DuplicateOffering(f"service {definition.id!r} is already offered")
        known = self.definitions.get(definition.id)
        if known is None:
            self.define_service(definition)
        elif known != definition:
            raise DuplicateService(f"service {definition.id!r} defined differently")
        offering = ServiceOffering(definition.id, at)
        self.offerings[definition.id] = offering
        return offering

    def withdraw(self, service_id: str) -> None:
        self._offering(service_id).active = False

    def _offering(self, service_id: str) -> ServiceOffering:
        off = self.offerings.get(service_id)
        if off is None:
            raise NotOffered(f"service {service_id!r} has no offering")
        return off

    def define_life_event_service(self, les: LifeEventService) -> LifeEventService:
        if les.id in self.life_event_services:
            raise InvalidLifeEventService(f"life event service {les.id!r} already defined")
        for m in les.members:
            if m not in self.definitions:
                raise UnknownService(f"member {m!r} of {les.id!r} is not a defined service")
        self.life_event_services[les.id] = les
        return les

    # -- lifecycle ---------------------------------------------------------

    def get(self, init_id: str) -> ServiceInitialization:
        try:
            return self.initializations[init_id]
        except KeyError:
            raise UnknownInitialization(f"no initialization {init_id!r}") from None

    def _move(self, init: ServiceInitialization, target: InitState, at: int, reason: str) -> None:
        if target not in TRANSITIONS[init.state]:
            raise WrongState(f"{init.id}: no transition {init.state.value} -> {target.value}")
        t = Transition(at, init.id, init.service_id, init.subject, init.state, target, reason)
        init.state = target
        init.monitor_log.append((at, f"{t.source.value}->{t.target.value}:{reason}"))
        if self.listener is not None:
            self.listener(t)

    def _require(self, init: ServiceInitialization, state: InitState) -> None:
        if init.state is not state:
            raise WrongState(f"{init.id} is {init.state.value}, expected {state.value}")

    def _active(self, service_id: str) -> ServiceOffering:
        off = self._offering(service_id)
        if not off.active:
            raise NotOffered(f"service {service_id!r} is no longer offered")
        return off

    def _new(self, service_id: str, subject: str, trigger: str, mode: Mode) -> ServiceInitialization:
        init = ServiceInitialization(f"I{len(self.initializations) + 1}", service_id, subject,
                                     trigger, mode)
        self.initializations[init.id] = init
        return init

    def initialize(self, service_id: str, subject: str, trigger: str, mode, at: int
                   ) -> ServiceInitialization:
        mode = Mode(mode)
        self._active(service_id)
        if subject not in self.world:
            raise UnknownSubject(f"subject {subject!r} does not exist")
        init = self._new(service_id, subject, trigger, mode)
        proactive = trigger != EXPLICIT_REQUEST
        if proactive and self.consents.is_opted_out(subject, service_id):
            self._move(init, S.AWAITING_EXPLICIT_REQUEST, at, "opted_out")
        elif proactive and mode is Mode.REQUEST_ONLY:
            self._move(init, S.AWAITING_EXPLICIT_REQUEST, at, "request_only")
        else:
            self._move(init, S.ADMISSION_PENDING, at, "initialized")
        return init

    def process_admission(self, init_id: str, state, at: int | None = None
                          ) -> ServiceInitialization:
        init = self.get(init_id)
        self._require(init, S.ADMISSION_PENDING)
        at = state.timestamp if at is None else at
        reasons = []
        facts = state.facts.get(init.subject)
        definition = self.definitions[init.service_id]
        if facts is None:
            reasons.append(RejectionReason.SUBJECT_UNKNOWN)
        elif definition.required_right is not None:
            if definition.required_right not in self.world.types.rights(facts.roles):
                reasons.append(RejectionReason.MISSING_RIGHT)
        if not self.offerings[init.service_id].active:
            reasons.append(RejectionReason.OFFERING_INACTIVE)
        if reasons:
            init.reasons = tuple(reasons)
            self._move(init, S.REJECTED, at, ",".join(r.value for r in reasons))
            return init
        self._move(init, S.ADMITTED, at, "admission_rules_passed")
        if init.mode is Mode.CONSENT:
            self._move(init, S.CONSENT_PENDING, at, "consent_required")
        else:
            self._move(init, S.DELIVERING, at, init.mode.value)
        return init

    def record_consent(self, subject: str, init_id: str, decision, at: int
                       ) -> ServiceInitialization:
        init = self.get(init_id)
        if subject != init.subject:
            raise SubjectMismatch(f"{subject!r} cannot decide on {init_id} of {init.subject!r}")
        self._require(init, S.CONSENT_PENDING)
        granted = decision in (True, "granted", "grant", "yes")
        self.consents.record(subject, init_id, granted, at)
        init.interaction_count += 1
        if granted:
            self._move(init, S.DELIVERING, at, "consent_granted")
        else:
            self._move(init, S.CANCELLED, at, "consent_denied")
        return init

    def explicit_request(self, subject: str, service_id: str, at: int) -> ServiceInitialization:
        self._active(service_id)
        if subject not in self.world:
            raise UnknownSubject(f"subject {subject!r} does not exist")
        for init in self.initializations.values():
            if (init.subject == subject and init.service_id == service_id
                    and init.state is S.AWAITING_EXPLICIT_REQUEST):
                break
        else:
            init = self._new(service_id, subject, EXPLICIT_REQUEST, Mode.REQUEST_ONLY)
            init.explicitly_requested = True
            init.interaction_count = 1
            self._move(init, S.ADMISSION_PENDING, at, "explicit_request")
            return init
        init.mode = Mode.REQUEST_ONLY
        init.explicitly_requested = True
        init.interaction_count += 1
        self._move(init, S.ADMISSION_PENDING, at, "explicit_request")
        return init

    def deliver(self, init_id: str, at: int) -> ServiceInitialization:
        init = self.get(init_id)
        self._require(init, S.DELIVERING)
        if not init.explicitly_requested and self.consents.is_opted_out(init.subject, init.service_id):
            self._move(init, S.AWAITING_EXPLICIT_REQUEST, at, "opt_out_at_delivery")
            raise OptOutAtDelivery(f"{init.subject!r} opted out of {init.service_id!r}", init)
        self._move(init, S.DELIVERED, at, "delivered")
        return init

    # -- accounting --------------------------------------------------------

    def triggered_by(self, trigger: str) -> list[ServiceInitialization]:
        return [i for i in self.initializations.values() if i.trigger == trigger]

    def aggregate_interactions(self, life_event_id: str, subject: str) -> int:
        return sum(i.interaction_count for i in self.initializations.values()
                   if i.trigger == life_event_id and i.subject == subject)

    def for_service(self, service_id: str) -> list[ServiceInitialization]:
        return [i for i in self.initializations.values() if i.service_id == service_id]

    def services_for(self, life_event_type: str) -> list[str]:
        out = []
        for les in self.life_event_services.values():
            if les.life_event_type == life_event_type:
                out.extend(m for m in les.members if m not in out)
        return out

