"""Life events and event-driven public service provision.

Modules, bottom up: ``ontology`` (types, entities, moments, states of
affairs), ``events`` (data events, recognition of life events),
``rules`` (reaction-rule DSL), ``services`` (offering and initialization
lifecycle), ``catalog`` (CPSV-AP subset) and ``harness`` (scenario runner).
"""
from .errors import ModelError
from .harness import Options, oracle_run, replay, run
from .scenario import load, parse_scenario, validate

__all__ = ["ModelError", "Options", "load", "oracle_run", "parse_scenario", "replay", "run",
           "validate"]
__version__ = "0.1.0"
