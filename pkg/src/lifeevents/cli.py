"""Command line: validate, run, replay, explain, export-catalog, fuzz.

Exit codes: 0 success, 1 validation failure (or a replay/fuzz mismatch),
2 runtime error.
"""
from __future__ import annotations

import argparse
import sys
from pathlib import Path

from .catalog import dumps, export_catalog
from .errors import ModelError, ScenarioError, ValidationFailure
from .harness import Options, oracle_run, replay, run
from .rules import explain
from .scenario import build, load, validate

EXIT_OK, EXIT_INVALID, EXIT_RUNTIME = 0, 1, 2


def _write(text: str, out: str | None) -> None:
    if out:
        Path(out).write_text(text)
    else:
        sys.stdout.write(text)


def cmd_validate(args) -> int:
    problems = validate(load(args.scenario))
    for p in problems:
        print(p)
    if problems:
        print(f"{len(problems)} problem(s)", file=sys.stderr)
        return EXIT_INVALID
    print("ok")
    return EXIT_OK


def cmd_run(args) -> int:
    result = run(load(args.scenario), Options(seed=args.seed, workers=args.workers))
    _write(result.trace, args.trace)
    return EXIT_OK


def cmd_replay(args) -> int:
    ok, message = replay(args.trace)
    print(("match: " if ok else "mismatch: ") + message)
    return EXIT_OK if ok else EXIT_INVALID


def cmd_explain(args) -> int:
    result = run(load(args.scenario))
    if not 1 <= args.event <= len(result.life_events):
        print(f"life event {args.event} out of range: the run recognized "
              f"{len(result.life_events)}", file=sys.stderr)
        return EXIT_RUNTIME
    event = result.life_events[args.event - 1]
    optouts, _ = result.evaluations[event.id]
    trace = explain(result.model.rules, args.rule, event, event.after, optouts)
    print(f"rule {trace.rule_id} on life event {event.id} "
          f"({event.life_event_type}, subject {event.subject}, t={event.timestamp})")
    if trace.skipped:
        print(f"  skipped: rule reacts to {result.model.rules.get(args.rule).on!r}")
        return EXIT_OK
    for text, value in trace.predicates:
        print(f"  {'true ' if value else 'false'}  {text}")
    print(f"  verdict: {'fires' if trace.verdict else 'does not fire'}")
    for action in trace.actions:
        note = " (rewritten: subject opted out)" if action.rewritten else ""
        print(f"  initialize {action.service} mode {action.mode.value}{note}")
    return EXIT_OK


def cmd_export_catalog(args) -> int:
    sc = load(args.scenario)
    problems = validate(sc)
    if problems:
        raise ValidationFailure(problems)
    model = build(sc)
    document = export_catalog(
        model.services.definitions.values(), model.services.life_event_services.values(),
        world=model.world, rules=model.rules,
        life_event_types=[r.life_event_type for r in model.recognizers])
    _write(dumps(document), args.out)
    return EXIT_OK


def cmd_fuzz(args) -> int:
    from .generate import generate

    failures = 0
    for seed in range(args.seed, args.seed + args.count):
        sc = generate(seed)
        if run(sc, Options(seed=seed)).trace != oracle_run(sc, Options(seed=seed)).trace:
            failures += 1
            print(f"seed {seed}: engine and oracle traces differ")
    print(f"{args.count - failures}/{args.count} seeds agree")
    return EXIT_INVALID if failures else EXIT_OK


def parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="lifeevents",
                                description="Life-event driven public service simulator.")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("validate", help="check a scenario without running it")
    s.add_argument("scenario")
    s.set_defaults(func=cmd_validate)

    s = sub.add_parser("run", help="execute a scenario and emit its trace")
    s.add_argument("scenario")
    s.add_argument("--trace", help="write the trace here instead of stdout")
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--workers", type=int, default=1,
                   help="threads for per-event rule evaluation")
    s.set_defaults(func=cmd_run)

    s = sub.add_parser("replay", help="re-execute a recorded trace and compare")
    s.add_argument("trace")
    s.set_defaults(func=cmd_replay)

    s = sub.add_parser("explain", help="show how one rule evaluated on one life event")
    s.add_argument("scenario")
    s.add_argument("--rule", required=True)
    s.add_argument("--event", type=int, required=True,
                   help="1-based ordinal of the recognized life event")
    s.set_defaults(func=cmd_explain)

    s = sub.add_parser("export-catalog", help="write the CPSV-AP subset catalog")
    s.add_argument("scenario")
    s.add_argument("--out")
    s.set_defaults(func=cmd_export_catalog)

    s = sub.add_parser("fuzz", help="differential run vs oracle on random scenarios")
    s.add_argument("--count", type=int, default=100)
    s.add_argument("--seed", type=int, default=0)
    s.set_defaults(func=cmd_fuzz)
    return p


def main(argv=None) -> int:
    args = parser().parse_args(argv)
    try:
        return args.func(args)
    except ValidationFailure as e:
        for problem in e.report:
            print(problem, file=sys.stderr)
        return EXIT_INVALID
    except ScenarioError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_RUNTIME
    except (ModelError, OSError, ValueError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
