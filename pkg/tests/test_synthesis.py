from __future__ import annotations

import json
import os

import httpx
import pytest

from mapverify.defaults import data_text, default_predicates_text, default_rules_text, grammar_text, map_schema_text
from mapverify.engine import evaluate
from mapverify.scenario_gen import ABRUPT_STEP, EXCESSIVE_SLOPE, LOW_CLEARANCE
from mapverify.synthesis import (
    INVALID_FIXTURES, STAGES, VALID_FIXTURES, CompletionError, ConcurrentRegistrationError, ContextBundle,
    ContractError, HttpClient, NullClient, Registry, RegistryError, RegistryState, ReplayClient,
    RuleSpecRequest, SimulatedCrash, build_prompt, infer_category, parse_contract, review_and_register,
    smoke_pair, validate_response,
)
from mapverify.synthesis.clients import fixture_dir
from mapverify.synthesis.prompt import CONSTRAINT_SENTENCE, HEADERS
from mapverify.synthesis.registry import CRASH_POINTS, LOCK_FILE, PDL_FILE, RULES_FILE

CATEGORY = {
    "slope_valid": EXCESSIVE_SLOPE, "step_valid": ABRUPT_STEP, "clearance_valid": LOW_CLEARANCE,
    "invalid_grammar": EXCESSIVE_SLOPE, "invalid_unknown_builtin": EXCESSIVE_SLOPE,
    "invalid_arity": LOW_CLEARANCE, "invalid_inverted": EXCESSIVE_SLOPE,
}

GOOD = """prose before
---BEGIN RULE---
rule r: forall l in L . p(l);
---END RULE---
---BEGIN PREDICATE---
pred p(l: lanelet) := length(l) > 1;
---END PREDICATE---
---BEGIN EXPLANATION---
why
---END EXPLANATION---
"""


def base_registry(root) -> Registry:
    return Registry.init(root, data_text("base.rules"), data_text("base.pdl"))


def fixture(name: str) -> str:
    return (fixture_dir() / f"{name}.txt").read_text(encoding="utf-8")


def snapshot(reg: Registry) -> tuple[bytes, bytes]:
    return reg.rules_path.read_bytes(), reg.pdl_path.read_bytes()


def bundle() -> ContextBundle:
    return ContextBundle.from_sources(grammar_text(), data_text("base.rules"), data_text("base.pdl"),
                                      map_schema_text())


# ---------------------------------------------------------------- prompt and contract


def test_prompt_sections_in_order():
    prompt = build_prompt(bundle(), RuleSpecRequest("Flag ramps steeper than 15 percent.", "steep_ramp"))
    positions = [prompt.index(h) for h in HEADERS]
    assert positions == sorted(positions)
    assert CONSTRAINT_SENTENCE in prompt
    assert "Name the rule steep_ramp." in prompt
    assert prompt.rstrip().endswith("Name the rule steep_ramp.")


def test_prompt_context_is_comment_free_and_deterministic():
    b = bundle()
    prompt = build_prompt(b, RuleSpecRequest("x"))
    assert "<!--" not in prompt
    assert "# Planar baseline" not in prompt
    assert "builtin grade_max(" in prompt and "pred has_min_length" in prompt
    assert prompt == build_prompt(bundle(), RuleSpecRequest("x"))


def test_empty_request_or_context_rejected():
    with pytest.raises(ValueError):
        RuleSpecRequest("   ")
    with pytest.raises(ValueError):
        ContextBundle.from_sources("# only a comment\n", "r", "p", "<x/>")


def test_contract_extracts_blocks():
    c = parse_contract(GOOD)
    assert c.rule_text == "rule r: forall l in L . p(l);\n"
    assert c.pdl_text.startswith("pred p") and c.explanation == "why\n" and c.raw_response == GOOD


@pytest.mark.parametrize("edit, section, problem", [
    (lambda t: t.replace("---BEGIN PREDICATE---", "").replace("---END PREDICATE---", ""), "PREDICATE", "missing"),
    (lambda t: t + "---BEGIN RULE---\nrule s: q();\n---END RULE---\n", "RULE", "duplicated"),
    (lambda t: t.replace("---END EXPLANATION---", ""), "EXPLANATION", "unterminated"),
    (lambda t: t.replace("why", "  "), "EXPLANATION", "empty"),
])
def test_contract_errors(edit, section, problem):
    with pytest.raises(ContractError) as exc:
        parse_contract(edit(GOOD))
    assert (exc.value.section, exc.value.problem) == (section, problem)


# ---------------------------------------------------------------- clients


def test_replay_and_null_clients(tmp_path):
    assert ReplayClient().complete("ignored", "slope_valid") == fixture("slope_valid")
    assert ReplayClient({"a": "b"}).complete("p", "a") == "b"
    with pytest.raises(CompletionError):
        ReplayClient(tmp_path).complete("p", "missing")
    with pytest.raises(CompletionError):
        NullClient().complete("p", "r")


def test_http_client_request_shape():
    seen = {}

    def handler(request: httpx.Request) -> httpx.Response:
        seen["url"] = str(request.url)
        seen["headers"] = request.headers
        seen["body"] = json.loads(request.content)
        return httpx.Response(200, json={"choices": [{"message": {"content": GOOD}}]})

    client = HttpClient.from_env({"MAPVERIFY_LLM_ENDPOINT": "http://llm.test/v1/chat",
                                  "MAPVERIFY_LLM_MODEL": "m1", "MAPVERIFY_LLM_API_KEY": "k"},
                                 transport=httpx.MockTransport(handler))
    assert client.complete("hello", "req-1") == GOOD
    assert seen["url"] == "http://llm.test/v1/chat"
    assert seen["body"] == {"model": "m1", "messages": [{"role": "user", "content": "hello"}], "temperature": 0}
    assert seen["headers"]["authorization"] == "Bearer k"
    assert seen["headers"]["x-request-id"] == "req-1"


@pytest.mark.parametrize("response", [
    httpx.Response(500, text="boom"),
    httpx.Response(200, json={"unexpected": True}),
])
def test_http_client_failures(response):
    client = HttpClient("http://llm.test", "m", transport=httpx.MockTransport(lambda r: response))
    with pytest.raises(CompletionError):
        client.complete("p", "r")


def test_http_client_needs_environment():
    with pytest.raises(CompletionError):
        HttpClient.from_env({})


# ---------------------------------------------------------------- validation


@pytest.mark.parametrize("name", VALID_FIXTURES)
def test_valid_fixtures_accepted_against_base(name, tmp_path):
    reg = base_registry(tmp_path)
    _, verdict = validate_response(fixture(name), reg.state(), smoke_pair(CATEGORY[name]))
    assert verdict.accepted, verdict.diagnostics
    assert [s.stage for s in verdict.stages] == list(STAGES)
    doc = verdict.to_dict()
    assert doc["overall"] == "accepted" and doc["failed_stage"] is None
    assert any(w["map"] == "defect" and w["status"] == "violated" for w in doc["smoke_witness"])


@pytest.mark.parametrize("name, stage", sorted(INVALID_FIXTURES.items()))
def test_invalid_fixtures_fail_at_expected_stage(name, stage, tmp_path):
    reg = base_registry(tmp_path)
    _, verdict = validate_response(fixture(name), reg.state(), smoke_pair(CATEGORY[name]))
    assert not verdict.accepted
    assert verdict.failed_stage == stage
    assert verdict.diagnostics
    # Stages before the failure all passed.
    assert [s.stage for s in verdict.stages] == list(STAGES[:STAGES.index(stage) + 1])


def test_contract_failure_is_first_stage():
    _, verdict = validate_response("no blocks here", RegistryState((), ()), smoke_pair(ABRUPT_STEP))
    assert verdict.failed_stage == "contract-parse"


def test_registered_names_cannot_be_reused(tmp_path):
    reg = Registry.init(tmp_path, default_rules_text(), default_predicates_text())
    _, verdict = validate_response(fixture("slope_valid"), reg.state(), smoke_pair(EXCESSIVE_SLOPE))
    assert verdict.failed_stage == "typecheck"
    assert any("already registered" in d or "collides" in d for d in verdict.diagnostics)


@pytest.mark.parametrize("text, category", [
    ("Ramps steeper than 15 % grade", EXCESSIVE_SLOPE),
    ("Vertical jump between consecutive lanelets", ABRUPT_STEP),
    ("Bridge deck too low over the road below", LOW_CLEARANCE),
])
def test_infer_category(text, category):
    assert infer_category(text) == category


def test_infer_category_ambiguous_or_absent():
    with pytest.raises(ValueError):
        infer_category("steep bridge")
    with pytest.raises(ValueError):
        infer_category("lane markings faded")


# ---------------------------------------------------------------- registry


def test_approve_registers_all_valid_fixtures_and_detects_defects(tmp_path):
    reg = base_registry(tmp_path)
    for name in VALID_FIXTURES:
        cand, verdict = validate_response(fixture(name), reg.state(), smoke_pair(CATEGORY[name]))
        result = review_and_register(reg, cand, verdict, name, approve=True)
        assert result.request_id == name and result.added_rules
    linked = reg.linked()
    assert len(linked.rule_names) == 4
    for name in VALID_FIXTURES:
        clean, defect = smoke_pair(CATEGORY[name])
        assert evaluate(linked, clean).ok
        assert not evaluate(linked, defect).ok
    events = [e["event"] for e in reg.journal()]
    assert events == ["INIT"] + ["BEGIN", "COMMIT"] * 3
    assert not (tmp_path / LOCK_FILE).exists()
    assert not list(tmp_path.glob("*.bak"))


def test_reject_leaves_files_byte_identical(tmp_path):
    reg = base_registry(tmp_path)
    before = snapshot(reg)
    cand, verdict = validate_response(fixture("slope_valid"), reg.state(), smoke_pair(EXCESSIVE_SLOPE))
    assert review_and_register(reg, cand, verdict, "slope_valid", approve=False) is None
    assert snapshot(reg) == before
    assert reg.journal()[-1]["decision"] == "reject"


def test_failed_verdict_cannot_be_approved(tmp_path):
    reg = base_registry(tmp_path)
    before = snapshot(reg)
    cand, verdict = validate_response(fixture("invalid_inverted"), reg.state(), smoke_pair(EXCESSIVE_SLOPE))
    with pytest.raises(RegistryError, match="smoke-test"):
        review_and_register(reg, cand, verdict, "invalid_inverted", approve=True)
    assert snapshot(reg) == before


def test_lock_blocks_concurrent_registration(tmp_path):
    reg = base_registry(tmp_path)
    cand, verdict = validate_response(fixture("slope_valid"), reg.state(), smoke_pair(EXCESSIVE_SLOPE))
    (tmp_path / LOCK_FILE).write_text("1")
    with pytest.raises(ConcurrentRegistrationError):
        review_and_register(reg, cand, verdict, "slope_valid", approve=True)
    with pytest.raises(ConcurrentRegistrationError):
        reg.register(cand, "slope_valid")
    # pid 1 is alive, so recovery needs force.
    with pytest.raises(ConcurrentRegistrationError):
        reg.recover()
    assert reg.recover(force=True) is None
    assert review_and_register(reg, cand, verdict, "slope_valid", approve=True) is not None


@pytest.mark.parametrize("point", CRASH_POINTS)
def test_crash_then_recover_restores_previous_state(point, tmp_path):
    def hook(p):
        if p == point:
            raise SimulatedCrash(p)

    reg = base_registry(tmp_path)
    before = snapshot(reg)
    cand, verdict = validate_response(fixture("step_valid"), reg.state(), smoke_pair(ABRUPT_STEP))
    crashing = Registry(tmp_path, crash_hook=hook)
    with pytest.raises(SimulatedCrash):
        crashing.register(cand, "step_valid")
    assert (tmp_path / LOCK_FILE).exists()
    rid = Registry(tmp_path).recover()
    assert rid == (None if point == "after-backup" else "step_valid")
    assert snapshot(reg) == before
    assert not (tmp_path / LOCK_FILE).exists()
    reg.linked()


def test_ordinary_exception_mid_write_rolls_back(tmp_path):
    def hook(p):
        if p == "between-writes":
            raise OSError("disk full")

    reg = base_registry(tmp_path)
    before = snapshot(reg)
    cand, _ = validate_response(fixture("clearance_valid"), reg.state(), smoke_pair(LOW_CLEARANCE))
    with pytest.raises(OSError):
        Registry(tmp_path, crash_hook=hook).register(cand, "c")
    assert snapshot(reg) == before
    assert reg.pending() is None and not (tmp_path / LOCK_FILE).exists()


def test_init_refuses_existing_and_bad_texts(tmp_path):
    base_registry(tmp_path / "a")
    with pytest.raises(RegistryError):
        base_registry(tmp_path / "a")
    with pytest.raises(Exception):
        Registry.init(tmp_path / "b", "rule r: forall l in L . nope(l);", data_text("base.pdl"))
    assert not (tmp_path / "b" / RULES_FILE).exists() and not (tmp_path / "b" / PDL_FILE).exists()


def test_registered_text_is_canonical_and_tagged(tmp_path):
    reg = base_registry(tmp_path)
    cand, verdict = validate_response(fixture("slope_valid"), reg.state(), smoke_pair(EXCESSIVE_SLOPE))
    review_and_register(reg, cand, verdict, "slope_valid", approve=True)
    rules_text = reg.rules_path.read_text()
    assert rules_text.startswith(data_text("base.rules"))
    assert "# slope_valid\nrule " in rules_text
    assert os.path.getsize(reg.pdl_path) > len(data_text("base.pdl"))
