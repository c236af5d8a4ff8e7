from __future__ import annotations

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.stateful import RuleBasedStateMachine, invariant, precondition, rule

from conftest import human_world
from lifeevents.errors import (
    AlreadyHeld, BearerCardinality, ConstraintViolated, CrossSpeciesSubspecies, DeonticsOnNonRole,
    DuplicateType, IllegalSupertypeKind, IncompatiblePhase, IncompatibleRole, InvalidDeontic,
    MembersOnNonInstitutional, MissingAuthorization, NonAgentSocialBearer, NonPhysicalMember,
    NotHeld, RigidityViolation, SubspeciesMismatch, TimeRegression, UnknownBearer, UnknownSpecies,
    UnknownSupertype,
)
from lifeevents.ontology import (
    Category, DeonticAssignment, MomentKind, TypeDefinition, TypeKind, TypeRegistry, World,
)


# -- type registry -----------------------------------------------------------

def test_human_with_male_and_female_subspecies():
    reg = TypeRegistry()
    reg.define_type(TypeDefinition("Human", "species"))
    assert reg.define_type(TypeDefinition("Male", "subspecies", "Human")) == "Male"
    assert reg.define_type(TypeDefinition("Female", "subspecies", "Human")) == "Female"
    assert reg.names(TypeKind.SUBSPECIES) == ["Male", "Female"]


def test_conscript_sub_role_carries_duty():
    w = human_world()
    deontics = w.types.deontics_of("Conscript")
    kinds = [(role, a.kind.value, a.description) for role, a in deontics]
    assert ("Conscript", "duty", "complete military service") in kinds
    # the sub-role inherits its parent's rights
    assert "family_benefit" in w.types.rights({"Conscript"})


def test_species_cannot_have_supertype():
    reg = TypeRegistry()
    reg.define_type(TypeDefinition("Human", "species"))
    with pytest.raises(IllegalSupertypeKind):
        reg.define_type(TypeDefinition("Dog", "species", "Human"))


@pytest.mark.parametrize("kind, sup", [
    ("subspecies", "Citizen"),   # subspecies under a role
    ("phase", "Citizen"),        # phase under a role
    ("role", "Boy"),             # role under a phase
    ("subspecies", "Male"),      # subspecies under a subspecies
])
def test_illegal_supertype_kinds(kind, sup):
    w = human_world()
    with pytest.raises(IllegalSupertypeKind):
        w.define_type(TypeDefinition("X", kind, sup))


def test_missing_and_unknown_supertypes():
    reg = TypeRegistry()
    with pytest.raises(IllegalSupertypeKind):
        reg.define_type(TypeDefinition("Citizen", "role"))
    with pytest.raises(UnknownSupertype):
        reg.define_type(TypeDefinition("Citizen", "role", "Human"))


def test_duplicate_type():
    w = human_world()
    with pytest.raises(DuplicateType):
        w.define_type(TypeDefinition("Human", "species"))


def test_only_roles_carry_deontics():
    w = human_world()
    with pytest.raises(DeonticsOnNonRole):
        w.define_type(TypeDefinition("Elder", "phase", "Male",
                                     [DeonticAssignment("duty", "retire")]))


def test_deontic_shape_is_checked():
    with pytest.raises(InvalidDeontic):
        DeonticAssignment("duty", "pay taxes", service_ref="tax_return")
    with pytest.raises(ValueError):
        DeonticAssignment("wish", "nothing")


# -- entities ----------------------------------------------------------------

def test_register_john(world):
    a = world.register_entity(Category.PHYSICAL_AGENT, "Human", "Male", hint="john")
    b = world.register_entity(Category.PHYSICAL_AGENT, "Human", "Male", hint="john")
    assert a != b
    rec = world.entity(a)
    assert (rec.species, rec.subspecies, rec.roles, rec.phases) == ("Human", "Male", set(), set())


def test_register_tax_board_has_no_members(world, tax_board):
    rec = world.entity(tax_board)
    assert rec.category is Category.INSTITUTIONAL_AGENT
    assert rec.members == set()


def test_register_with_role_as_species(world):
    with pytest.raises(UnknownSpecies):
        world.register_entity(Category.PHYSICAL_AGENT, "Citizen")


def test_register_with_foreign_subspecies(world):
    with pytest.raises(SubspeciesMismatch):
        world.register_entity(Category.PHYSICAL_AGENT, "Human", "Poodle")


def test_institution_members_are_physical_agents(world, john, tax_board):
    world.add_member(tax_board, john)
    assert world.entity(tax_board).members == {john}
    with pytest.raises(NonPhysicalMember):
        world.add_member(tax_board, tax_board)
    with pytest.raises(MembersOnNonInstitutional):
        world.add_member(john, john)
    with pytest.raises(MembersOnNonInstitutional):
        world.register_entity(Category.PHYSICAL_AGENT, "Human", members=[john])


def test_acquire_relinquish_reacquire_citizen(world, john):
    assert world.assign_role(john, "Citizen", 1).roles == {"Citizen"}
    assert world.relinquish_role(john, "Citizen", 2).roles == set()
    assert world.assign_role(john, "Citizen", 3).roles == {"Citizen"}


def test_organisation_cannot_be_citizen(world, tax_board):
    with pytest.raises(IncompatibleRole):
        world.assign_role(tax_board, "Citizen")


def test_role_errors(world, john):
    with pytest.raises(NotHeld):
        world.relinquish_role(john, "Citizen")
    world.assign_role(john, "Citizen")
    with pytest.raises(AlreadyHeld):
        world.assign_role(john, "Citizen")


def test_sub_role_needs_parent(world, john):
    with pytest.raises(IncompatibleRole):
        world.assign_role(john, "Conscript")


def test_dropping_citizen_cascades_to_conscript(world, john):
    world.assign_role(john, "Citizen")
    world.assign_role(john, "Conscript")
    assert world.relinquish_role(john, "Citizen").roles == set()
    cascade = [f for f in world.audit if f.action == "relinquish_role"]
    assert [f.detail for f in cascade] == ["Conscript (cascade from Citizen)", "Citizen"]


def test_phase_transitions(world, john):
    world.transition_phase(john, "Boy")
    assert world.transition_phase(john, "Teenager").phases == {"Teenager"}
    with pytest.raises(IncompatiblePhase):
        world.transition_phase(john, "Girl")


def test_phase_order_is_not_imposed(world, john):
    world.transition_phase(john, "Boy")
    assert world.transition_phase(john, "Adult Male").phases == {"Adult Male"}


def test_change_species_always_refuses(world, john):
    with pytest.raises(RigidityViolation):
        world.change_species(john, "Dog")
    with pytest.raises(RigidityViolation):
        world.change_species(john, "Human")
    assert world.entity(john).species == "Human"


def test_change_subspecies_with_authorization_drops_phase(world, john):
    world.transition_phase(john, "Boy")
    rec = world.change_subspecies(john, "Female", authorization="court-2024-17")
    assert (rec.subspecies, rec.phases) == ("Female", set())
    assert "dropped_phases=Boy" in world.audit[-1].detail


def test_change_subspecies_errors(world, john):
    with pytest.raises(MissingAuthorization):
        world.change_subspecies(john, "Female", authorization=None)
    with pytest.raises(CrossSpeciesSubspecies):
        world.change_subspecies(john, "Poodle", authorization="x")
    assert world.entity(john).subspecies == "Male"


def test_logical_time_never_regresses(world, john):
    world.assign_role(john, "Citizen", 10)
    with pytest.raises(TimeRegression):
        world.relinquish_role(john, "Citizen", 5)


def test_amount_of_matter_changes_identity(world):
    world.define_type(TypeDefinition("Clay", "species"))
    lump = world.register_entity(Category.AMOUNT_OF_MATTER, "Clay", attributes={"kg": 2},
                                 hint="clay")
    other = world.set_attribute(lump, "kg", 1)
    assert other != lump and lump not in world and world.entity(other).attributes == {"kg": 1}


def test_object_keeps_identity_on_attribute_change(world, john):
    assert world.set_attribute(john, "age", 31) == john


# -- moments -----------------------------------------------------------------

def _spouses(world):
    anna = world.register_entity(Category.PHYSICAL_AGENT, "Human", "Female", hint="anna")
    john = world.register_entity(Category.PHYSICAL_AGENT, "Human", "Male", hint="john")
    world.assign_role(anna, "Spouse")
    world.assign_role(anna, "Wife")
    world.assign_role(john, "Spouse")
    world.assign_role(john, "Husband")
    return anna, john


def test_marriage_is_a_social_relator(world):
    anna, john = _spouses(world)
    mid = world.create_moment("marriage", MomentKind.SOCIAL_RELATOR, [anna, john])
    assert world.moment(mid).bearers == (anna, john)


def test_marriage_of_close_relatives_is_refused(world):
    anna, john = _spouses(world)
    world.create_moment("kinship", MomentKind.SOCIAL_RELATOR, [anna, john], value="siblings")
    with pytest.raises(ConstraintViolated) as info:
        world.create_moment("marriage", MomentKind.SOCIAL_RELATOR, [anna, john])
    assert info.value.role == "Spouse"


def test_kinship_with_someone_else_does_not_block(world):
    anna, john = _spouses(world)
    peter = world.register_entity(Category.PHYSICAL_AGENT, "Human", "Male", hint="peter")
    world.create_moment("kinship", MomentKind.SOCIAL_RELATOR, [anna, peter])
    assert world.create_moment("marriage", MomentKind.SOCIAL_RELATOR, [anna, john])


def test_moment_bearer_rules(world, john, tax_board):
    with pytest.raises(BearerCardinality):
        world.create_moment("color", MomentKind.INTRINSIC, [john, tax_board])
    with pytest.raises(BearerCardinality):
        world.create_moment("contract", MomentKind.RELATOR, [john])
    with pytest.raises(UnknownBearer):
        world.create_moment("contract", MomentKind.RELATOR, [john, "ghost#9"])
    world.define_type(TypeDefinition("Chair", "species"))
    chair = world.register_entity(Category.PHYSICAL_OBJECT, "Chair")
    with pytest.raises(NonAgentSocialBearer):
        world.create_moment("ownership", MomentKind.SOCIAL_RELATOR, [john, chair])
    assert world.create_moment("ownership", MomentKind.RELATOR, [john, chair])


def test_intrinsic_moment_is_an_attribute(world, john):
    assert world.create_moment("height", MomentKind.INTRINSIC, [john], 182) is None
    assert world.entity(john).attributes["height"] == 182


def test_destroy_cascades_relators(world):
    anna, john = _spouses(world)
    mid = world.create_moment("marriage", MomentKind.SOCIAL_RELATOR, [anna, john])
    assert world.destroy_entity(john) == {mid}
    assert world.moments() == []


def test_destroy_without_moments(world, john):
    assert world.destroy_entity(john) == frozenset()


# -- snapshots ---------------------------------------------------------------

def test_snapshot_of_empty_store():
    snap = World().snapshot()
    assert dict(snap.facts) == {} and snap.moments == frozenset()


def test_consecutive_snapshots_are_equal(world, john):
    assert world.snapshot() == world.snapshot()


def test_snapshot_diff_after_assign_role(world, john, tax_board):
    before = world.snapshot(0)
    world.assign_role(john, "Citizen", 1)
    after = world.snapshot(1)
    assert before.diff(after) == {john}
    old, new = before.facts[john], after.facts[john]
    assert new.roles - old.roles == {"Citizen"}
    assert (old.species, old.phases, old.attributes) == (new.species, new.phases, new.attributes)


def test_snapshot_is_immutable(world, john):
    snap = world.snapshot()
    with pytest.raises(TypeError):
        snap.facts[john] = None
    world.set_attribute(john, "age", 99)
    assert snap.facts[john].attributes["age"] == 30


# -- properties --------------------------------------------------------------

ROLES = ["Citizen", "Conscript", "Spouse", "Wife", "Husband"]


@settings(max_examples=60, deadline=None)
@given(st.lists(st.tuples(st.sampled_from(["assign", "drop"]), st.sampled_from(ROLES)),
                max_size=30))
def test_role_sets_stay_legal(ops):
    """Whatever is attempted, held roles are compatible and sub-roles have their parent."""
    w = human_world()
    anna = w.register_entity(Category.PHYSICAL_AGENT, "Human", "Female")
    for op, role in ops:
        try:
            (w.assign_role if op == "assign" else w.relinquish_role)(anna, role)
        except (AlreadyHeld, NotHeld, IncompatibleRole):
            pass
        roles = w.entity(anna).roles
        for r in roles:
            parent = w.types.parent_role(r)
            assert parent is None or parent in roles


class RigidityMachine(RuleBasedStateMachine):
    """Random interleavings of anti-rigid changes never touch the species."""

    def __init__(self):
        super().__init__()
        self.w = human_world()
        self.ids = {}
        self.t = 0

    @rule(sub=st.sampled_from(["Male", "Female", None]))
    def register(self, sub):
        eid = self.w.register_entity(Category.PHYSICAL_AGENT, "Human", sub)
        self.ids[eid] = "Human"

    @precondition(lambda self: self.ids)
    @rule(data=st.data(), role=st.sampled_from(ROLES))
    def toggle_role(self, data, role):
        eid = data.draw(st.sampled_from(sorted(self.ids)))
        self.t += 1
        try:
            if role in self.w.entity(eid).roles:
                self.w.relinquish_role(eid, role, self.t)
            else:
                self.w.assign_role(eid, role, self.t)
        except IncompatibleRole:
            pass

    @precondition(lambda self: self.ids)
    @rule(data=st.data(), phase=st.sampled_from(["Boy", "Teenager", "Adult Male", "Girl"]))
    def phase(self, data, phase):
        eid = data.draw(st.sampled_from(sorted(self.ids)))
        try:
            self.w.transition_phase(eid, phase)
        except IncompatiblePhase:
            pass

    @precondition(lambda self: self.ids)
    @rule(data=st.data(), species=st.sampled_from(["Dog", "Human", "Organization"]))
    def species_change(self, data, species):
        eid = data.draw(st.sampled_from(sorted(self.ids)))
        with pytest.raises(RigidityViolation):
            self.w.change_species(eid, species)

    @precondition(lambda self: self.ids)
    @rule(data=st.data(), sub=st.sampled_from(["Male", "Female"]))
    def subspecies_change(self, data, sub):
        eid = data.draw(st.sampled_from(sorted(self.ids)))
        self.w.change_subspecies(eid, sub, authorization="order")

    @invariant()
    def species_fixed(self):
        for eid, species in self.ids.items():
            rec = self.w.entity(eid)
            assert rec.species == species
            for t in rec.roles | rec.phases:
                assert self.w.types.anchor(t) in (rec.species, rec.subspecies)


TestRigidity = RigidityMachine.TestCase
TestRigidity.settings = settings(max_examples=40, stateful_step_count=25, deadline=None)
