from __future__ import annotations

from pathlib import Path

import pytest

from lifeevents.rules import parse_condition
from lifeevents.ontology import Category, DeonticAssignment, TypeDefinition, World

SCENARIOS = Path(__file__).resolve().parent.parent / "src" / "lifeevents" / "scenarios"
DATA = Path(__file__).resolve().parent / "data"


def human_world() -> World:
    """Human with Male/Female, the Male phase ladder, Citizen/Conscript and spouses."""
    w = World()
    w.define_type(TypeDefinition("Human", "species"))
    w.define_type(TypeDefinition("Dog", "species"))
    w.define_type(TypeDefinition("Organization", "species"))
    w.define_type(TypeDefinition("Male", "subspecies", "Human"))
    w.define_type(TypeDefinition("Female", "subspecies", "Human"))
    w.define_type(TypeDefinition("Poodle", "subspecies", "Dog"))
    for phase in ("Boy", "Teenager", "Adult Male"):
        w.define_type(TypeDefinition(phase, "phase", "Male"))
    for phase in ("Girl", "Adult Female"):
        w.define_type(TypeDefinition(phase, "phase", "Female"))
    w.define_type(TypeDefinition("Citizen", "role", "Human", [
        DeonticAssignment("right", "use the family benefit e-service", "family_benefit")]))
    w.define_type(TypeDefinition("Conscript", "role", "Citizen", [
        DeonticAssignment("duty", "complete military service")]))
    close = DeonticAssignment("constraint", "spouses are not close relatives",
                              predicate=parse_condition("not related_by(kinship, partner)"))
    w.define_type(TypeDefinition("Spouse", "role", "Human", [close]))
    w.define_type(TypeDefinition("Wife", "role", "Spouse"))
    w.define_type(TypeDefinition("Husband", "role", "Spouse"))
    return w


@pytest.fixture
def world() -> World:
    return human_world()


@pytest.fixture
def john(world) -> str:
    return world.register_entity(Category.PHYSICAL_AGENT, "Human", "Male", {"age": 30},
                                 hint="john")


@pytest.fixture
def tax_board(world) -> str:
    return world.register_entity(Category.INSTITUTIONAL_AGENT, "Organization",
                                 attributes={"name": "Tax Board"}, hint="taxboard")


# one line per acceptance criterion, shown in the terminal summary
ACCEPTANCE: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE, key=lambda s: int(s.split()[2].rstrip(":"))):
            terminalreporter.write_line(line)
