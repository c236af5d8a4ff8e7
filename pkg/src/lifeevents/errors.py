"""Exception hierarchy shared by every module.

Every error derives from :class:`ModelError`, whose ``code`` is the stable
machine-readable name used in traces and validation reports.
"""
from __future__ import annotations


class ModelError(Exception):
    code = "ModelError"

    def __init__(self, message: str = "", **details):
        super().__init__(message or self.code)
        self.details = details

    @property
    def message(self) -> str:
        return str(self.args[0]) if self.args else self.code


# --- ontology -------------------------------------------------------------

class DuplicateType(ModelError):
    code = "DuplicateType"


class UnknownSupertype(ModelError):
    code = "UnknownSupertype"


class IllegalSupertypeKind(ModelError):
    code = "IllegalSupertypeKind"


class DeonticsOnNonRole(ModelError):
    code = "DeonticsOnNonRole"


class InvalidDeontic(ModelError):
    code = "InvalidDeontic"


class UnknownSpecies(ModelError):
    code = "UnknownSpecies"


class UnknownRole(ModelError):
    code = "UnknownRole"


class UnknownPhase(ModelError):
    code = "UnknownPhase"


class SubspeciesMismatch(ModelError):
    code = "SubspeciesMismatch"


class MembersOnNonInstitutional(ModelError):
    code = "MembersOnNonInstitutional"


class NonPhysicalMember(ModelError):
    code = "NonPhysicalMember"


class IncompatibleRole(ModelError):
    code = "IncompatibleRole"


class AlreadyHeld(ModelError):
    code = "AlreadyHeld"


class NotHeld(ModelError):
    code = "NotHeld"


class IncompatiblePhase(ModelError):
    code = "IncompatiblePhase"


class RigidityViolation(ModelError):
    code = "RigidityViolation"


class MissingAuthorization(ModelError):
    code = "MissingAuthorization"


class CrossSpeciesSubspecies(ModelError):
    code = "CrossSpeciesSubspecies"


class BearerCardinality(ModelError):
    code = "BearerCardinality"


class NonAgentSocialBearer(ModelError):
    code = "NonAgentSocialBearer"


class ConstraintViolated(ModelError):
    code = "ConstraintViolated"

    def __init__(self, message: str, *, deontic, bearer: str, role: str):
        super().__init__(message, bearer=bearer, role=role)
        self.deontic = deontic
        self.bearer = bearer
        self.role = role


class UnknownBearer(ModelError):
    code = "UnknownBearer"


class UnknownEntity(ModelError):
    code = "UnknownEntity"


class TimeRegression(ModelError):
    code = "TimeRegression"


# --- events ---------------------------------------------------------------

class UnknownSubject(ModelError):
    code = "UnknownSubject"


class TimestampRegression(TimeRegression):
    code = "TimestampRegression"


class UnknownRegister(ModelError):
    code = "UnknownRegister"


class DuplicateEvent(ModelError):
    code = "DuplicateEvent"


class CausalCycle(ModelError):
    code = "CausalCycle"


class TemporalInversion(ModelError):
    code = "TemporalInversion"


class UnknownEvent(ModelError):
    code = "UnknownEvent"


class InvalidRecognitionRule(ModelError):
    code = "InvalidRecognitionRule"


# --- rules ----------------------------------------------------------------

class RuleError(ModelError):
    """A rule-file problem pinned to a source location."""

    code = "RuleError"

    def __init__(self, message: str, line: int, col: int, filename: str = "<rules>"):
        super().__init__(message, line=line, col=col)
        self.line = line
        self.col = col
        self.filename = filename

    def __str__(self) -> str:
        return f"{self.filename}:{self.line}:{self.col}: {self.code}: {self.message}"


class RuleSyntaxError(RuleError):
    code = "SyntaxError"

    def __init__(self, expected: str, found: str, line: int, col: int, filename: str = "<rules>"):
        super().__init__(f"expected {expected}, found {found}", line, col, filename)
        self.expected = expected
        self.found = found


class UnknownServiceRef(RuleError):
    code = "UnknownServiceRef"


class UnknownTypeRef(RuleError):
    code = "UnknownTypeRef"


class DuplicateRuleId(RuleError):
    code = "DuplicateRuleId"


class RuleParseError(ModelError):
    """Raised with every located error found in a rule text."""

    code = "RuleParseError"

    def __init__(self, errors):
        self.errors = list(errors)
        super().__init__("\n".join(str(e) for e in self.errors))


class UnknownPredicateTarget(ModelError):
    code = "UnknownPredicateTarget"


class UnknownRule(ModelError):
    code = "UnknownRule"


# --- services -------------------------------------------------------------

class DuplicateService(ModelError):
    code = "DuplicateService"


class DuplicateOffering(ModelError):
    code = "DuplicateOffering"


class UnknownProvider(ModelError):
    code = "UnknownProvider"


class UnknownService(ModelError):
    code = "UnknownService"


class NotOffered(ModelError):
    code = "NotOffered"


class WrongState(ModelError):
    code = "WrongState"


class SubjectMismatch(ModelError):
    code = "SubjectMismatch"


class OptOutAtDelivery(ModelError):
    code = "OptOutAtDelivery"

    def __init__(self, message: str, initialization=None):
        super().__init__(message)
        self.initialization = initialization


class InvalidLifeEventService(ModelError):
    code = "InvalidLifeEventService"


class UnknownInitialization(ModelError):
    code = "UnknownInitialization"


# --- catalog --------------------------------------------------------------

class UnresolvedProvider(ModelError):
    code = "UnresolvedProvider"


class CatalogParseError(ModelError):
    code = "ParseError"

    def __init__(self, message: str, line: int, col: int):
        super().__init__(message, line=line, col=col)
        self.line = line
        self.col = col

    def __str__(self) -> str:
        return f"{self.line}:{self.col}: {self.message}"


# --- harness --------------------------------------------------------------

class ScenarioError(ModelError):
    """A module error surfaced with the scenario location that caused it."""

    code = "ScenarioError"

    def __init__(self, location: str, cause: ModelError):
        super().__init__(f"{location}: {cause.code}: {cause.message}")
        self.location = location
        self.cause = cause


class ValidationFailure(ModelError):
    code = "ValidationFailure"

    def __init__(self, report):
        self.report = list(report)
        super().__init__("\n".join(str(item) for item in self.report))
