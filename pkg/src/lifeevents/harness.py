"""Deterministic scenario runner.

``run`` drives the full pipeline (ingest, recognize, evaluate, initialize,
admit, consent/deliver) and writes a JSON-lines trace with a fixed key
order.  ``oracle_run`` is the same pipeline with the brute-force recognizer
and the naive all-rules matcher; both must produce byte-identical traces.
"""
from __future__ import annotations

import json
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

from .errors import ModelError, OptOutAtDelivery, ScenarioError, ValidationFailure
from .events import naive_recognize, recognize
from .rules import evaluate_traced, naive_evaluate
from .scenario import Model, Scenario, build, load, validate
from .services import InitState

TRACE_FORMAT = "lifeevents-trace/1"


@dataclass(frozen=True)
class Options:
    seed: int = 0
    workers: int = 1


class TraceWriter:
    def __init__(self):
        self.records: list[dict] = []

    def emit(self, t: int, kind: str, **fields) -> dict:
        record = {"seq": len(self.records), "t": t, "kind": kind}
        record.update(fields)
        self.records.append(record)
        return record

    def text(self) -> str:
        return "".join(json.dumps(r, separators=(",", ":")) + "\n" for r in self.records)


@dataclass
class RunResult:
    trace: str
    records: list
    model: Model
    life_events: list = field(default_factory=list)
    evaluations: dict = field(default_factory=dict)  # life event id -> (optouts, traces)

    def of_kind(self, kind: str) -> list[dict]:
        return [r for r in self.records if r["kind"] == kind]


class _Runner:
    def __init__(self, scenario: Scenario, options: Options, oracle: bool):
        problems = validate(scenario)
        if problems:
            raise ValidationFailure(problems)
        self.sc = scenario
        self.options = options
        self.oracle = oracle
        self.model = build(scenario)
        self.out = TraceWriter()
        self.model.services.listener = lambda tr: self.out.emit(tr.at, "transition", **tr.to_dict())
        self.audited = 0
        self.life_events = []
        self.evaluations = {}
        self.now = 0

    def _audit(self) -> None:
        facts = self.model.world.audit
        for f in facts[self.audited:]:
            self.out.emit(f.at, "audit", fact=f.seq, action=f.action, entity=f.entity,
                          detail=f.detail)
        self.audited = len(facts)

    def execute(self) -> RunResult:
        sc = self.sc
        self.out.emit(0, "header", format=TRACE_FORMAT, scenario=sc.name, source=sc.path,
                      sha256=sc.digest, seed=self.options.seed)
        self._audit()
        for step in self.model.steps:
            self.now = step.time
            try:
                getattr(self, "_" + step.kind)(step)
            except ModelError as e:
                raise ScenarioError(sc.where(step.line), e) from e
            self._audit()
        self._finish()
        return RunResult(self.out.text(), self.out.records, self.model, self.life_events,
                         self.evaluations)

    # -- steps -------------------------------------------------------------

    def _data_event(self, step) -> None:
        store, ev = self.model.store, step.event
        position = store.ingest(ev)
        self.out.emit(ev.timestamp, "ingest", position=position, event=ev.to_dict())
        self._audit()
        recognizer = naive_recognize if self.oracle else recognize
        found = recognizer(store.log, self.model.recognizers)
        new = [le for le in found if le.id not in store.life_events]
        for le in new:
            position = store.record_life_event(le)
            self.life_events.append(le)
            self.out.emit(le.timestamp, "life_event", n=len(self.life_events),
                          position=position, event=le.to_dict())
        optouts = self.model.consents.snapshot()
        for le, traces in zip(new, self._evaluate(new, optouts)):
            self.evaluations[le.id] = (optouts, traces)
            for tr in traces:
                self.out.emit(le.timestamp, "evaluation", **tr.to_dict())
            for tr in traces:
                for action in tr.actions:
                    init = self.model.services.initialize(
                        action.service, le.subject, le.id, action.mode, le.timestamp)
                    self._advance(init)

    def _evaluate(self, new, optouts) -> list:
        rules = self.model.rules
        if self.oracle:
            return naive_evaluate(list(rules), [(le, le.after, optouts) for le in new])
        if self.options.workers > 1 and len(new) > 1:
            with ThreadPoolExecutor(self.options.workers) as pool:
                return list(pool.map(lambda le: evaluate_traced(rules, le, le.after, optouts), new))
        return [evaluate_traced(rules, le, le.after, optouts) for le in new]

    def _advance(self, init) -> None:
        services = self.model.services
        if init.state is InitState.ADMISSION_PENDING:
            state = self.model.world.snapshot(self.now, len(self.model.store.log))
            services.process_admission(init.id, state, self.now)
        if init.state is InitState.DELIVERING:
            try:
                services.deliver(init.id, self.now)
            except OptOutAtDelivery:
                self.out.emit(self.now, "delivery_blocked", init=init.id,
                              service=init.service_id, subject=init.subject)

    def _opt_out(self, step) -> None:
        self.model.consents.opt_out(step.subject, step.service)
        self.out.emit(step.time, "opt_out", subject=step.subject, service=step.service)

    def _opt_in(self, step) -> None:
        self.model.consents.opt_in(step.subject, step.service)
        self.out.emit(step.time, "opt_in", subject=step.subject, service=step.service)

    def _consent(self, step) -> None:
        services = self.model.services
        pending = [i for i in services.initializations.values()
                   if i.subject == step.subject and i.service_id == step.service
                   and i.state is InitState.CONSENT_PENDING]
        if not pending:
            self.out.emit(step.time, "consent_unmatched", subject=step.subject,
                          service=step.service, decision=step.decision)
            return
        init = pending[0]
        self.out.emit(step.time, "consent", init=init.id, subject=step.subject,
                      service=step.service, decision=step.decision)
        services.record_consent(step.subject, init.id, step.decision, step.time)
        self._advance(init)

    def _explicit_request(self, step) -> None:
        self.out.emit(step.time, "explicit_request", subject=step.subject, service=step.service)
        init = self.model.services.explicit_request(step.subject, step.service, step.time)
        self._advance(init)

    def _probe(self, step) -> None:
        state = self.model.world.snapshot(step.time, len(self.model.store.log))
        self.out.emit(step.time, "probe", state=state.to_dict())

    def _finish(self) -> None:
        services = self.model.services
        totals = []
        for le in self.life_events:
            inits = services.triggered_by(le.id)
            count = services.aggregate_interactions(le.id, le.subject)
            totals.append(count)
            self.out.emit(self.now, "interactions", event=le.id, type=le.life_event_type,
                          subject=le.subject, initializations=len(inits), interactions=count)
        states = [i.state for i in services.initializations.values()]
        self.out.emit(self.now, "metrics",
                      data_events=sum(1 for s in self.model.steps if s.kind == "data_event"),
                      life_events=len(self.life_events),
                      initializations=len(states),
                      delivered=states.count(InitState.DELIVERED),
                      rejected=states.count(InitState.REJECTED),
                      cancelled=states.count(InitState.CANCELLED),
                      awaiting_explicit_request=states.count(InitState.AWAITING_EXPLICIT_REQUEST),
                      consent_pending=states.count(InitState.CONSENT_PENDING),
                      interactions_total=sum(i.interaction_count
                                             for i in services.initializations.values()),
                      max_interactions_per_life_event=max(totals, default=0))


def run(scenario: Scenario, options: Options | None = None) -> RunResult:
    return _Runner(scenario, options or Options(), oracle=False).execute()


def oracle_run(scenario: Scenario, options: Options | None = None) -> RunResult:
    return _Runner(scenario, options or Options(), oracle=True).execute()


def read_header(trace_text: str) -> dict:
    first = trace_text.split("\n", 1)[0]
    header = json.loads(first)
    if header.get("kind") != "header" or header.get("format") != TRACE_FORMAT:
        raise ValueError("not a lifeevents trace")
    return header


def replay(trace_path) -> tuple[bool, str]:
    """Re-execute the scenario a trace names and compare byte for byte.

    Returns (matches, message); the message names the first differing line.
    """
    recorded = Path(trace_path).read_text()
    header = read_header(recorded)
    source = header.get("source")
    if not source:
        return False, "trace header has no scenario source"
    sc = load(source)
    if sc.digest != header["sha256"]:
        return False, f"scenario {source} changed since the trace was recorded"
    fresh = run(sc, Options(seed=header.get("seed", 0))).trace
    if fresh == recorded:
        return True, f"{len(recorded.splitlines())} records match"
    for n, (a, b) in enumerate(zip(recorded.splitlines(), fresh.splitlines()), start=1):
        if a != b:
            return False, f"first difference at line {n}"
    return False, "traces differ in length"
