"""Seeded random scenarios for differential and property testing.

Every generated scenario validates: role effects are tracked on a shadow
copy of each person, so a data event never assigns a role that is held or
incompatible, and strict rules only read attributes every person has.
"""
from __future__ import annotations

import random
import shlex

from .conditions import And, AttrCompare, Expr, HasRole, InPhase, Literal, Not, OptedOut, Or
from .conditions import RelatedBy, SubspeciesIs, to_text
from .scenario import Scenario, parse_scenario

SUBSPECIES = ("Female", "Male")
PHASES = ("Child", "Adult", "Retired")
ROLES = ("Citizen", "Parent", "Worker", "Employee")
PARENT_ROLE = {"Employee": "Worker"}
EVENT_TYPES = ("birth_registered", "address_changed", "job_started", "income_declared",
               "marriage_registered")
LIFE_EVENT_TYPES = ("birth_of_child", "relocation", "employment", "family_change")
STRICT_ATTRS = ("age", "income")
ALL_ATTRS = STRICT_ATTRS + ("children",)


def _condition(rng: random.Random, services: list[str], strict: bool, depth: int = 0) -> Expr:
    if depth < 2 and rng.random() < 0.4:
        node = rng.choice((And, Or))
        return node(tuple(_condition(rng, services, strict, depth + 1)
                          for _ in range(rng.randint(2, 3))))
    if depth < 2 and rng.random() < 0.15:
        return Not(_condition(rng, services, strict, depth + 1))
    pick = rng.randrange(7)
    if pick == 0:
        return HasRole(rng.choice(ROLES))
    if pick == 1:
        return InPhase(rng.choice(PHASES))
    if pick == 2:
        return SubspeciesIs(rng.choice(SUBSPECIES))
    if pick == 3:
        attrs = STRICT_ATTRS if strict else ALL_ATTRS
        return AttrCompare(rng.choice(attrs), rng.choice(("=", "!=", "<", "<=", ">", ">=")),
                           rng.randint(0, 70))
    if pick == 4:
        return OptedOut(rng.choice(services + ["*"]))
    if pick == 5:
        return RelatedBy("partnership", rng.choice((None, HasRole("Citizen"))))
    return Literal(rng.random() < 0.8)


def generate_text(seed: int) -> str:
    """Scenario source for ``seed``; identical seeds give identical bytes."""
    rng = random.Random(seed)
    out = [f"# generated from seed {seed}", f"name random_{seed}", "",
           "type species Human", "type species Organization"]
    out += [f"type subspecies {s} of Human" for s in SUBSPECIES]
    out += [f"type phase {p} of Human" for p in PHASES]
    for role in ROLES:
        out.append(f"type role {role} of {PARENT_ROLE.get(role, 'Human')}")

    n_services = rng.randint(2, 5)
    services = [f"svc{i}" for i in range(n_services)]
    for svc in services:
        if rng.random() < 0.8:
            role = rng.choice(ROLES)
            out.append(f'deontic {role} right "right to {svc}" service={svc}')
    out.append("")

    orgs = [f"org{i}" for i in range(rng.randint(1, 2))]
    for org in orgs:
        out.append(f'entity {org} institutional_agent Organization name="Agency {org}"')
    people = [f"p{i}" for i in range(rng.randint(2, 5))]
    shadow: dict[str, set] = {}
    for person in people:
        roles = set()
        for role in ROLES:
            parent = PARENT_ROLE.get(role)
            if rng.random() < 0.4 and (parent is None or parent in roles):
                roles.add(role)
        shadow[person] = roles
        ordered = [r for r in ROLES if r in roles]
        parts = [f"entity {person} physical_agent Human", f"subspecies={rng.choice(SUBSPECIES)}",
                 f"age={rng.randint(0, 90)}", f"income={rng.randint(0, 60)}"]
        if ordered:
            parts.append("roles=" + ",".join(ordered))
        if rng.random() < 0.7:
            parts.append(f"phases={rng.choice(PHASES)}")
        out.append(" ".join(parts))
    out += ["", "register population", "register tax", ""]

    for svc in services:
        right = ""
        if any(line.endswith(f"service={svc}") for line in out):
            right = f" right={svc}"
        out.append(f"service {svc} provider={rng.choice(orgs)}{right}")
    le_types = rng.sample(LIFE_EVENT_TYPES, rng.randint(1, 3))
    if len(services) >= 2 and rng.random() < 0.7:
        members = ",".join(sorted(rng.sample(services, 2)))
        out.append(f"life_event_service bundle on={le_types[0]} members={members}")
    out.append("")

    for le_type in le_types:
        length = rng.randint(1, 3)
        pattern = ",".join(rng.choice(EVENT_TYPES) for _ in range(length))
        window = ""
        if length > 1 or rng.random() < 0.3:
            window = f" within={rng.randint(10, 200)}"
        out.append(f"recognize {le_type} pattern={pattern}{window}")
    out += ["", "begin rules"]
    for i in range(rng.randint(1, 4)):
        strict = rng.random() < 0.2
        cond = _condition(rng, services, strict)
        actions = ", ".join(
            f"{svc} mode {rng.choice(('automatic', 'automatic', 'consent', 'request_only'))}"
            for svc in rng.sample(services, rng.randint(1, min(3, len(services)))))
        line = f"rule r{i} on {rng.choice(le_types)} when {to_text(cond)} then initialize {actions}"
        if rng.random() < 0.5:
            line += f" priority {rng.randint(-2, 5)}"
        if strict:
            line += " strict"
        out.append(line)
    out += ["end rules", ""]

    t = 0
    for _ in range(rng.randint(0, 25)):
        t += rng.randint(0, 30)
        person = rng.choice(people)
        roll = rng.random()
        if roll < 0.55:
            out.append(f"at {t} " + _data_event(rng, person, people, shadow[person]))
        elif roll < 0.7:
            out.append(f"at {t} opt_out {person} {rng.choice(services + ['*'])}")
        elif roll < 0.75:
            out.append(f"at {t} opt_in {person} {rng.choice(services + ['*'])}")
        elif roll < 0.85:
            decision = rng.choice(("granted", "granted", "denied"))
            out.append(f"at {t} consent {person} {rng.choice(services)} {decision}")
        elif roll < 0.95:
            out.append(f"at {t} explicit_request {person} {rng.choice(services)}")
        else:
            out.append(f"at {t} probe")
    return "\n".join(out) + "\n"


def _data_event(rng: random.Random, person: str, people: list, roles: set) -> str:
    parts = ["data_event", rng.choice(EVENT_TYPES), f"subject={person}",
             f"register={rng.choice(('population', 'tax'))}"]
    free = [r for r in ROLES
            if r not in roles and (PARENT_ROLE.get(r) is None or PARENT_ROLE[r] in roles)]
    if free and rng.random() < 0.3:
        role = rng.choice(free)
        roles.add(role)
        parts.append(f"assign_role={role}")
    elif roles and rng.random() < 0.15:
        role = rng.choice(sorted(roles))
        roles.difference_update({role} | {r for r, p in PARENT_ROLE.items() if p == role})
        parts.append(f"relinquish_role={role}")
    if rng.random() < 0.3:
        parts.append(f"phase={rng.choice(PHASES)}")
    if rng.random() < 0.1:
        parts += [f"subspecies={rng.choice(SUBSPECIES)}", "authorization=court-order"]
    others = [p for p in people if p != person]
    if others and rng.random() < 0.15:
        parts += [f"with={rng.choice(others)}", "relator=partnership"]
    if rng.random() < 0.6:
        parts.append(f"{rng.choice(ALL_ATTRS)}={rng.randint(0, 70)}")
    return " ".join(shlex.quote(p) for p in parts)


def generate(seed: int) -> Scenario:
    return parse_scenario(generate_text(seed), f"<random:{seed}>")
