"""CPSV-AP subset: PublicService, LifeEvent and PublicOrganisation.

A catalog life event only exists in relation to a public service, so the
export drops life-event types no service is grouped under, and the import
reports any life event that no service references.  Documents are JSON with
lexicographic ordering everywhere, so exports are byte-reproducible.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Iterable

from .errors import CatalogParseError, UnresolvedProvider
from .ontology import Category
from .services import LifeEventService, PublicServiceDefinition

SECTIONS = ("organisations", "services", "life_events")


@dataclass(frozen=True)
class OrganisationEntry:
    id: str
    name: str


@dataclass(frozen=True)
class LifeEventEntry:
    id: str
    name: str


@dataclass(frozen=True)
class ServiceEntry:
    id: str
    name: str
    provider: str
    life_events: tuple = ()


@dataclass(frozen=True)
class CatalogDocument:
    organisations: tuple = ()
    services: tuple = ()
    life_events: tuple = ()

    def to_dict(self) -> dict:
        return {
            "organisations": [{"id": o.id, "name": o.name} for o in self.organisations],
            "services": [{"id": s.id, "name": s.name, "provider": s.provider,
                          "life_events": list(s.life_events)} for s in self.services],
            "life_events": [{"id": e.id, "name": e.name} for e in self.life_events],
        }


@dataclass(frozen=True)
class Violation:
    code: str  # orphan_life_event, dangling_provider, dangling_life_event, duplicate_id, malformed
    location: str
    message: str

    def __str__(self) -> str:
        return f"{self.location}: {self.code}: {self.message}"


@dataclass
class ImportResult:
    document: CatalogDocument
    report: list = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.report

    def service_definitions(self) -> list[PublicServiceDefinition]:
        return [PublicServiceDefinition(s.id, s.name, s.provider) for s in self.document.services]


def _sorted(items, key=lambda x: x.id):
    return tuple(sorted(items, key=key))


def export_catalog(services: Iterable[PublicServiceDefinition],
                   life_event_services: Iterable[LifeEventService] = (),
                   world=None, rules=None, life_event_types: Iterable[str] = ()
                   ) -> CatalogDocument:
    """Project a service model onto the catalog subset.

    A service is grouped under a life-event type when a life event service
    of that type aggregates it or a reaction rule on that type initializes
    it.  Types in ``life_event_types`` with no grouped service are omitted.
    """
    services = list(services)
    ids = {s.id for s in services}
    links: dict[str, set[str]] = {t: set() for t in life_event_types}
    names: dict[str, str] = {}
    for les in sorted(life_event_services, key=lambda x: x.id):
        links.setdefault(les.life_event_type, set()).update(m for m in les.members if m in ids)
        names.setdefault(les.life_event_type, les.name or les.life_event_type)
    for rule in rules or ():
        links.setdefault(rule.on, set()).update(svc for svc, _ in rule.then if svc in ids)

    orgs = {}
    for s in services:
        if world is not None:
            if s.provider not in world:
                raise UnresolvedProvider(f"provider {s.provider!r} of {s.id!r} does not exist")
            rec = world.entity(s.provider)
            if rec.category is not Category.INSTITUTIONAL_AGENT:
                raise UnresolvedProvider(f"provider {s.provider!r} is not an organisation")
            orgs[s.provider] = str(rec.attributes.get("name", s.provider))
        else:
            orgs[s.provider] = s.provider

    grouped = {s.id: sorted(t for t, members in links.items() if s.id in members) for s in services}
    linked_types = sorted(t for t, members in links.items() if members)
    return CatalogDocument(
        organisations=_sorted(OrganisationEntry(k, v) for k, v in orgs.items()),
        services=_sorted(ServiceEntry(s.id, s.name, s.provider, tuple(grouped[s.id]))
                         for s in services),
        life_events=tuple(LifeEventEntry(t, names.get(t, t)) for t in linked_types),
    )


def dumps(document: CatalogDocument) -> str:
    return json.dumps(document.to_dict(), indent=2, sort_keys=True) + "\n"


def _entry(raw, path: str, fields: tuple, report: list):
    if not isinstance(raw, dict):
        report.append(Violation("malformed", path, "entry is not an object"))
        return None
    out = {}
    for f in fields:
        value = raw.get(f)
        if f == "life_events":
            if value is None:
                value = []
            if not isinstance(value, list) or not all(isinstance(v, str) for v in value):
                report.append(Violation("malformed", f"{path}.{f}", "expected a list of ids"))
                return None
            out[f] = tuple(sorted(value))
        elif not isinstance(value, str):
            report.append(Violation("malformed", f"{path}.{f}", "expected a string"))
            return None
        else:
            out[f] = value
    return out


def import_catalog(text: str) -> ImportResult:
    """Parse a catalog; semantic problems go to the report, never raise.

    Only a document that is not JSON at all raises CatalogParseError.
    """
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as e:
        raise CatalogParseError(e.msg, e.lineno, e.colno) from None
    report: list[Violation] = []
    if not isinstance(raw, dict):
        report.append(Violation("malformed", "$", "document is not an object"))
        raw = {}
    sections = {}
    for name in SECTIONS:
        items = raw.get(name, [])
        if not isinstance(items, list):
            report.append(Violation("malformed", name, "section is not a list"))
            items = []
        sections[name] = items

    orgs, services, events = [], [], []
    layout = (("organisations", ("id", "name"), orgs),
              ("services", ("id", "name", "provider", "life_events"), services),
              ("life_events", ("id", "name"), events))
    for name, fields, sink in layout:
        seen = set()
        for i, item in enumerate(sections[name]):
            path = f"{name}[{i}]"
            entry = _entry(item, path, fields, report)
            if entry is None:
                continue
            if entry["id"] in seen:
                report.append(Violation("duplicate_id", path, f"duplicate id {entry['id']!r}"))
                continue
            seen.add(entry["id"])
            sink.append((path, entry))

    org_ids = {e["id"] for _, e in orgs}
    event_ids = {e["id"] for _, e in events}
    referenced = set()
    for path, s in services:
        if s["provider"] not in org_ids:
            report.append(Violation("dangling_provider", f"{path}.provider",
                                    f"organisation {s['provider']!r} is not declared"))
        for le in s["life_events"]:
            referenced.add(le)
            if le not in event_ids:
                report.append(Violation("dangling_life_event", f"{path}.life_events",
                                        f"life event {le!r} is not declared"))
    for path, e in events:
        if e["id"] not in referenced:
            report.append(Violation(
                "orphan_life_event", path,
                f"life event {e['id']!r} is referenced by no service; a catalog life event "
                "must be an event to which a public service is related"))

    document = CatalogDocument(
        organisations=_sorted(OrganisationEntry(**e) for _, e in orgs),
        services=_sorted(ServiceEntry(**e) for _, e in services),
        life_events=_sorted(LifeEventEntry(**e) for _, e in events),
    )
    return ImportResult(document, report)
