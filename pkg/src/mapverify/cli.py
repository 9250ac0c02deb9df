"""``mapverify`` command-line entry point.

Exit status: 0 success, 1 violations found or metrics below target,
2 usage, format or validation error.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import sys
from pathlib import Path
from typing import Sequence

from mapverify._atomic import atomic_write
from mapverify.config import ConfigError, EvalConfig
from mapverify.defaults import (
    data_text, default_predicates_text, default_rules_text, grammar_text, map_schema_text,
)
from mapverify.engine import LinkError, LinkedRuleset, evaluate, load_linked
from mapverify.eval_harness import HarnessError, run as run_eval
from mapverify.map_io import CoverageError, MapFormatError, convert_roads, read_map, read_opendrive, write_map
from mapverify.map_model import GeometryError, NetworkError
from mapverify.predicate_lang import ParseError, TypecheckError
from mapverify.rule_lang import RuleError
from mapverify.scenario_gen import DEFECTS, build_corpus
from mapverify.synthesis.clients import CompletionError, HttpClient, ReplayClient, request_id_for
from mapverify.synthesis.contract import CandidateArtifact
from mapverify.synthesis.prompt import ContextBundle, RuleSpecRequest, build_prompt
from mapverify.synthesis.registry import (
    ConcurrentRegistrationError, Registry, RegistryError, review_and_register,
)
from mapverify.synthesis.smoke import infer_category, smoke_pair
from mapverify.synthesis.validate import validate, validate_response

EXIT_OK, EXIT_FAIL, EXIT_ERROR = 0, 1, 2
CANDIDATE_FORMAT = "mapverify.pending-candidate/1"

# Errors that map to exit status 2.
_INPUT_ERRORS = (
    OSError, ConfigError, MapFormatError, CoverageError, GeometryError, NetworkError, ParseError,
    RuleError, TypecheckError, LinkError, HarnessError, RegistryError, CompletionError, ValueError,
)


class UsageError(Exception):
    pass


def _err(msg: str) -> None:
    print(f"mapverify: error: {msg}", file=sys.stderr)


def _config(args) -> EvalConfig:
    return EvalConfig.load(args.config) if getattr(args, "config", None) else EvalConfig()


def _ruleset(args, cfg: EvalConfig) -> LinkedRuleset:
    """Rules from --registry, --rules/--predicates, or the shipped defaults."""
    if getattr(args, "registry", None):
        return Registry(args.registry).linked()
    if bool(args.rules) != bool(args.predicates):
        raise UsageError("--rules and --predicates must be given together")
    if args.rules:
        return load_linked(Path(args.rules).read_text(encoding="utf-8"),
                           Path(args.predicates).read_text(encoding="utf-8"))
    return load_linked(default_rules_text(cfg), default_predicates_text())


def _add_rule_source(p: argparse.ArgumentParser, registry: bool = True) -> None:
    p.add_argument("--rules", help="ruleset file (default: shipped elevation rules)")
    p.add_argument("--predicates", help="predicate definition file")
    if registry:
        p.add_argument("--registry", help="registry directory to take rules and predicates from")
    p.add_argument("--config", help="evaluation config (JSON)")


# ------------------------------------------------------------------ commands

def cmd_verify(args) -> int:
    cfg = _config(args)
    linked = _ruleset(args, cfg)
    net = read_map(Path(args.map).read_bytes())
    report = evaluate(linked, net, cfg)
    for line in report.summary_lines():
        print(line)
    n_ok = len(report.results) - len(report.violated_rules)
    if report.ok:
        print(f"{n_ok} rules satisfied")
    else:
        print(f"{len(report.violated_rules)} of {len(report.results)} rules violated")
    if args.report:
        meta = {"map": Path(args.map).name}
        atomic_write(Path(args.report), report.to_json(meta).encode("utf-8"))
    return EXIT_OK if report.ok else EXIT_FAIL


def cmd_convert(args) -> int:
    roads = read_opendrive(Path(args.opendrive).read_bytes())
    net = convert_roads(roads, args.step)
    atomic_write(Path(args.out), write_map(net))
    print(f"converted {len(net)} roads to {args.out}")
    return EXIT_OK


def cmd_gen(args) -> int:
    if min(args.clean, args.defective) < 0:
        raise UsageError("--clean and --defective must be non-negative")
    out = build_corpus(args.out, args.seed, args.clean, args.defective)
    print(f"wrote {args.clean + args.defective} maps to {out}")
    return EXIT_OK


def cmd_eval(args) -> int:
    cfg = _config(args)
    report = run_eval(args.corpus, _ruleset(args, cfg), cfg)
    print(report.table())
    if args.report:
        atomic_write(Path(args.report), report.to_json().encode("utf-8"))
    return EXIT_OK if report.passed else EXIT_FAIL


def cmd_lint(args) -> int:
    load_linked(Path(args.rules).read_text(encoding="utf-8"),
                Path(args.predicates).read_text(encoding="utf-8"))
    print("ok")
    return EXIT_OK


def cmd_init(args) -> int:
    if args.defaults:
        rules, preds = default_rules_text(), default_predicates_text()
    else:
        rules, preds = data_text("base.rules"), data_text("base.pdl")
    Registry.init(args.registry, rules, preds)
    print(f"initialized registry at {args.registry}")
    return EXIT_OK


def cmd_recover(args) -> int:
    rid = Registry(args.registry).recover(force=args.force)
    print(f"rolled back {rid}" if rid else "nothing to recover")
    return EXIT_OK


def _context_bundle(ctx: Path) -> ContextBundle:
    reg = Registry(ctx)
    rules, preds = reg.texts()
    grammar = ctx / "grammar.ebnf"
    schema = ctx / "map_schema.xsd"
    return ContextBundle.from_sources(
        grammar.read_text(encoding="utf-8") if grammar.is_file() else grammar_text(),
        rules, preds,
        schema.read_text(encoding="utf-8") if schema.is_file() else map_schema_text(),
    )


def cmd_synthesize(args) -> int:
    description = args.spec if args.spec is not None else Path(args.spec_file).read_text(encoding="utf-8")
    req = RuleSpecRequest(description, args.name)
    category = args.category or infer_category(req.description)
    ctx = Path(args.context)
    prompt = build_prompt(_context_bundle(ctx), req)
    if args.live:
        client, request_id = HttpClient.from_env(), request_id_for(prompt)
    else:
        path = Path(args.replay)
        if path.suffix == ".txt" and path.is_file():
            client, request_id = ReplayClient(path.parent), path.stem
        else:
            client, request_id = ReplayClient(), args.replay
    response = client.complete(prompt, request_id)
    cfg = _config(args)
    candidate, verdict = validate_response(response, Registry(ctx).state(), smoke_pair(category), cfg)
    doc = {
        "format": CANDIDATE_FORMAT,
        "request_id": request_id,
        "description": req.description,
        "category": category,
        "prompt_sha256": hashlib.sha256(prompt.encode("utf-8")).hexdigest(),
        "rule_text": candidate.rule_text if candidate else None,
        "pdl_text": candidate.pdl_text if candidate else None,
        "explanation": candidate.explanation if candidate else None,
        "raw_response": response,
        "verdict": verdict.to_dict(),
    }
    pending = Path(args.pending) if args.pending else ctx / "pending"
    pending.mkdir(parents=True, exist_ok=True)
    out = pending / f"{request_id}.json"
    atomic_write(out, (json.dumps(doc, indent=2, sort_keys=True) + "\n").encode("utf-8"))
    _print_verdict(verdict.to_dict())
    print(f"candidate written to {out}")
    return EXIT_OK if verdict.accepted else EXIT_ERROR


def _print_verdict(v: dict) -> None:
    for st in v["stages"]:
        print(f"  [{'ok' if st['ok'] else 'FAIL'}] {st['stage']}")
        for d in st["diagnostics"]:
            print(f"        {d}")
    print(f"verdict: {v['overall']}" + (f" at {v['failed_stage']}" if v["failed_stage"] else ""))


def _show_candidate(doc: dict, verdict: dict) -> None:
    print(f"=== candidate {doc['request_id']} ({doc['category']})")
    print(f"description: {doc['description'].strip()}")
    for title, key in (("rule", "rule_text"), ("predicates", "pdl_text"), ("explanation", "explanation")):
        print(f"--- {title}")
        print((doc.get(key) or "(missing)").rstrip())
    print("--- validation")
    _print_verdict(verdict)
    for w in verdict["smoke_witness"]:
        print(f"  smoke {w['map']}: {w['rule']} {w['status']}")
        for v in w["violations"]:
            binding = ", ".join(f"{var}={lid}" for var, lid in v["binding"])
            witness = ", ".join(f"{c}={x}" for c, x in v["witness"])
            print(f"    [{binding}] {witness}")


def _decide(registry: Registry, pending: Path, request_id: str, approve: bool, cfg: EvalConfig,
            interactive: bool = False) -> int:
    path = pending / f"{request_id}.json"
    if not path.is_file():
        raise UsageError(f"no pending candidate {request_id!r} in {pending}")
    doc = json.loads(path.read_text(encoding="utf-8"))
    if doc.get("rule_text") is None:
        candidate, verdict = validate_response(doc["raw_response"], registry.state(), smoke_pair(doc["category"]), cfg)
    else:
        candidate = CandidateArtifact(doc["rule_text"], doc["pdl_text"], doc["explanation"], doc["raw_response"])
        # The registry may have moved on since synthesis; validate against its current state.
        verdict = validate(candidate, registry.state(), smoke_pair(doc["category"]), cfg)
    if interactive:
        _show_candidate(doc, verdict.to_dict())
        while True:
            answer = input("[a]pprove, [r]eject, [q]uit? ").strip().lower()
            if answer in ("a", "r", "q"):
                break
        if answer == "q":
            return EXIT_OK
        approve = answer == "a"
    if approve and not verdict.accepted:
        _err(f"{request_id} failed validation at {verdict.failed_stage}; refusing to register")
        return EXIT_ERROR
    result = review_and_register(registry, candidate, verdict, request_id, approve)
    decision = "approved" if approve else "rejected"
    path.replace(path.with_name(f"{request_id}.{decision}.json"))
    if result is None:
        print(f"{request_id}: rejected; registry unchanged")
    else:
        print(f"{request_id}: registered rules {', '.join(result.added_rules)}; "
              f"predicates {', '.join(result.added_predicates)}")
    return EXIT_OK


def cmd_review(args) -> int:
    pending = Path(args.pending)
    registry = Registry(args.registry if args.registry else pending.parent)
    cfg = _config(args)
    if args.approve:
        return _decide(registry, pending, args.approve, True, cfg)
    if args.reject:
        return _decide(registry, pending, args.reject, False, cfg)
    ids = sorted(p.stem for p in pending.glob("*.json") if p.stem.count(".") == 0)
    if not ids:
        print("no pending candidates")
    for rid in ids:
        _decide(registry, pending, rid, False, cfg, interactive=True)
    return EXIT_OK


# ------------------------------------------------------------------ parser

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="mapverify", description="Elevation-aware lanelet map verification.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("verify", help="evaluate rules on one map")
    p.add_argument("--map", required=True)
    _add_rule_source(p)
    p.add_argument("--report", help="write the verification report (JSON) here")
    p.set_defaults(func=cmd_verify)

    p = sub.add_parser("convert", help="convert an OpenDRIVE-subset file to the map format")
    p.add_argument("--opendrive", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--step", type=float, default=1.0, help="sampling step in meters")
    p.set_defaults(func=cmd_convert)

    p = sub.add_parser("gen", help="generate a labelled synthetic corpus")
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--clean", type=int, required=True)
    p.add_argument("--defective", type=int, required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_gen)

    p = sub.add_parser("eval", help="score a ruleset on a corpus")
    p.add_argument("--corpus", required=True)
    _add_rule_source(p)
    p.add_argument("--report", help="write the metrics report (JSON) here")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("lint", help="parse, type-check and link a ruleset")
    p.add_argument("--rules", required=True)
    p.add_argument("--predicates", required=True)
    p.set_defaults(func=cmd_lint)

    p = sub.add_parser("init", help="create a rule registry")
    p.add_argument("--registry", required=True)
    p.add_argument("--defaults", action="store_true", help="seed with the full elevation ruleset")
    p.set_defaults(func=cmd_init)

    p = sub.add_parser("recover", help="roll back an interrupted registration")
    p.add_argument("--registry", required=True)
    p.add_argument("--force", action="store_true", help="ignore a lock held by a live process")
    p.set_defaults(func=cmd_recover)

    p = sub.add_parser("synthesize", help="ask for a new rule and validate the answer")
    spec = p.add_mutually_exclusive_group(required=True)
    spec.add_argument("--spec", help="defect description")
    spec.add_argument("--spec-file")
    p.add_argument("--context", required=True, help="registry directory providing the context")
    src = p.add_mutually_exclusive_group(required=True)
    src.add_argument("--replay", metavar="FIXTURE", help="fixture name or .txt path")
    src.add_argument("--live", action="store_true", help="call the configured HTTP endpoint")
    p.add_argument("--category", choices=DEFECTS, help="smoke-test category (default: inferred)")
    p.add_argument("--name", help="rule name hint")
    p.add_argument("--pending", help="pending directory (default: CONTEXT/pending)")
    p.add_argument("--config")
    p.set_defaults(func=cmd_synthesize)

    p = sub.add_parser("review", help="approve or reject pending candidates")
    p.add_argument("--pending", required=True)
    p.add_argument("--registry", help="registry directory (default: parent of --pending)")
    decision = p.add_mutually_exclusive_group()
    decision.add_argument("--approve", metavar="ID")
    decision.add_argument("--reject", metavar="ID")
    p.add_argument("--config")
    p.set_defaults(func=cmd_review)
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except UsageError as exc:
        parser.print_usage(sys.stderr)
        _err(str(exc))
    except ConcurrentRegistrationError as exc:
        _err(str(exc))
    except _INPUT_ERRORS as exc:
        _err(str(exc))
    except KeyboardInterrupt:
        _err("interrupted")
    return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
