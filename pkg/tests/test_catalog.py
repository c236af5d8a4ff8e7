from __future__ import annotations

import json

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import human_world
from lifeevents.catalog import (
    CatalogDocument, LifeEventEntry, OrganisationEntry, ServiceEntry, dumps, export_catalog,
    import_catalog,
)
from lifeevents.errors import CatalogParseError, UnresolvedProvider
from lifeevents.ontology import Category
from lifeevents.rules import parse_rules
from lifeevents.services import LifeEventService, PublicServiceDefinition, ServiceModel


def _wedding_model():
    w = human_world()
    registry = w.register_entity(Category.INSTITUTIONAL_AGENT, "Organization",
                                 attributes={"name": "Population Registry"}, hint="registry")
    sm = ServiceModel(w)
    for sid in ("marriage_registration", "family_name_change"):
        sm.offer_service(PublicServiceDefinition(sid, sid.replace("_", " "), registry), 0)
    sm.define_life_event_service(LifeEventService(
        "wedding", "married", ["marriage_registration", "family_name_change"], "Getting married"))
    return w, sm


def test_engaged_is_not_a_catalog_life_event():
    w, sm = _wedding_model()
    doc = export_catalog(sm.definitions.values(), sm.life_event_services.values(), world=w,
                         life_event_types=["engaged", "married"])
    assert [e.id for e in doc.life_events] == ["married"]
    assert all(s.life_events == ("married",) for s in doc.services)
    assert doc.organisations == (OrganisationEntry("registry#1", "Population Registry"),)


def test_rules_link_services_to_life_events():
    w, sm = _wedding_model()
    rules = parse_rules("rule r on engaged when true then initialize family_name_change "
                        "mode consent")
    doc = export_catalog(sm.definitions.values(), (), world=w, rules=rules,
                         life_event_types=["engaged", "married"])
    assert [e.id for e in doc.life_events] == ["engaged"]


def test_empty_model():
    doc = export_catalog([], [])
    assert doc == CatalogDocument()
    assert json.loads(dumps(doc)) == {"life_events": [], "organisations": [], "services": []}


def test_unresolved_provider():
    w, _ = _wedding_model()
    person = w.register_entity(Category.PHYSICAL_AGENT, "Human")
    with pytest.raises(UnresolvedProvider):
        export_catalog([PublicServiceDefinition("s", "s", "ghost#9")], world=w)
    with pytest.raises(UnresolvedProvider):
        export_catalog([PublicServiceDefinition("s", "s", person)], world=w)


def test_dangling_provider_reported():
    text = json.dumps({"organisations": [],
                       "services": [{"id": "s", "name": "S", "provider": "nobody",
                                     "life_events": []}],
                       "life_events": []})
    result = import_catalog(text)
    assert [(v.code, v.location) for v in result.report] == [
        ("dangling_provider", "services[0].provider")]


def test_orphan_life_event_reported():
    text = json.dumps({"organisations": [{"id": "o", "name": "O"}],
                       "services": [{"id": "s", "name": "S", "provider": "o",
                                     "life_events": ["married"]}],
                       "life_events": [{"id": "married", "name": "Married"},
                                       {"id": "engaged", "name": "Engaged"}]})
    result = import_catalog(text)
    (v,) = result.report
    assert (v.code, v.location) == ("orphan_life_event", "life_events[1]")
    assert "public service is related" in v.message


def test_every_violation_is_reported():
    text = json.dumps({"organisations": [{"id": "o", "name": "O"}, {"id": "o", "name": "P"}],
                       "services": [{"id": "s", "name": "S", "provider": "o",
                                     "life_events": ["ghost"]}, 7,
                                    {"id": "t", "name": 3, "provider": "o"}],
                       "life_events": "nope"})
    codes = sorted(v.code for v in import_catalog(text).report)
    assert codes == ["dangling_life_event", "duplicate_id", "malformed", "malformed", "malformed"]


def test_parse_error_is_located():
    with pytest.raises(CatalogParseError) as info:
        import_catalog('{\n  "services": [,]\n}')
    assert (info.value.line, info.value.col) == (2, 16)


def test_hand_built_catalog_round_trips():
    doc = CatalogDocument(
        organisations=(OrganisationEntry("sib", "Social Insurance Board"),
                       OrganisationEntry("tax", "Tax Board")),
        services=(ServiceEntry("child_benefit", "Child benefit", "sib", ("birth",)),
                  ServiceEntry("parental_benefit", "Parental benefit", "sib", ("birth",)),
                  ServiceEntry("tax_refund", "Tax refund", "tax", ())),
        life_events=(LifeEventEntry("birth", "Birth of a child"),),
    )
    result = import_catalog(dumps(doc))
    assert result.ok and result.document == doc
    assert [d.id for d in result.service_definitions()] == [
        "child_benefit", "parental_benefit", "tax_refund"]


IDS = st.text(alphabet="abcxyz_", min_size=1, max_size=6)


@st.composite
def models(draw):
    w = human_world()
    orgs = [w.register_entity(Category.INSTITUTIONAL_AGENT, "Organization",
                              attributes={"name": draw(st.text(max_size=8))})
            for _ in range(draw(st.integers(1, 3)))]
    sm = ServiceModel(w)
    for sid in draw(st.lists(IDS, min_size=0, max_size=6, unique=True)):
        sm.offer_service(PublicServiceDefinition(sid, draw(st.text(max_size=10)),
                                                 draw(st.sampled_from(orgs))), 0)
    ids = sorted(sm.definitions)
    types = draw(st.lists(IDS, max_size=4, unique=True))
    if len(ids) >= 2:
        for i, t in enumerate(types):
            members = draw(st.lists(st.sampled_from(ids), min_size=2, max_size=4, unique=True))
            sm.define_life_event_service(LifeEventService(f"les{i}", t, members, t.upper()))
    return w, sm, types + draw(st.lists(IDS, max_size=2))


@settings(max_examples=100, deadline=None)
@given(models())
def test_export_import_export_is_byte_identical(model):
    w, sm, types = model
    doc = export_catalog(sm.definitions.values(), sm.life_event_services.values(), world=w,
                         life_event_types=types)
    first = dumps(doc)
    result = import_catalog(first)
    assert result.ok, result.report
    assert dumps(result.document) == first
    # narrowing: every exported life event is referenced by at least one service
    referenced = {le for s in doc.services for le in s.life_events}
    assert {e.id for e in doc.life_events} <= referenced
