"""Model-assisted rule synthesis: prompt assembly, validation and registration."""

from __future__ import annotations

from mapverify.synthesis.clients import (
    CompletionClient, CompletionError, HttpClient, NullClient, ReplayClient, request_id_for,
)
from mapverify.synthesis.contract import CandidateArtifact, ContractError, parse_contract
from mapverify.synthesis.prompt import ContextBundle, RuleSpecRequest, build_prompt
from mapverify.synthesis.registry import (
    ConcurrentRegistrationError, Registry, RegistryError, SimulatedCrash, review_and_register,
)
from mapverify.synthesis.smoke import infer_category, smoke_pair
from mapverify.synthesis.validate import (
    STAGES, RegistryState, StageResult, ValidationVerdict, validate, validate_response,
)

VALID_FIXTURES = ("slope_valid", "step_valid", "clearance_valid")
INVALID_FIXTURES = {
    "invalid_grammar": "rule-syntax",
    "invalid_unknown_builtin": "reference-closure",
    "invalid_arity": "typecheck",
    "invalid_inverted": "smoke-test",
}

__all__ = [
    "CompletionClient", "CompletionError", "HttpClient", "NullClient", "ReplayClient", "request_id_for",
    "CandidateArtifact", "ContractError", "parse_contract", "ContextBundle", "RuleSpecRequest",
    "build_prompt", "ConcurrentRegistrationError", "Registry", "RegistryError", "SimulatedCrash",
    "review_and_register", "infer_category", "smoke_pair", "STAGES", "RegistryState", "StageResult",
    "ValidationVerdict", "validate", "validate_response", "VALID_FIXTURES", "INVALID_FIXTURES",
]
