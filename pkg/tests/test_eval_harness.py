from __future__ import annotations

import json

import pytest

from mapverify.config import EvalConfig
from mapverify.defaults import default_predicates_text, default_rules_text
from mapverify.engine import evaluate, load_linked
from mapverify.eval_harness import HarnessError, run
from mapverify.map_io import read_map
from mapverify.scenario_gen import ABRUPT_STEP, DEFECTS, EXCESSIVE_SLOPE, LOW_CLEARANCE, build_corpus, read_manifest

LINKED = load_linked(default_rules_text(), default_predicates_text())


@pytest.fixture(scope="module")
def corpus(tmp_path_factory):
    return build_corpus(tmp_path_factory.mktemp("corpus") / "c", 42, 10, 30)


def test_default_corpus_passes(corpus):
    report = run(corpus, LINKED)
    assert report.passed
    assert report.clean_maps == 10 and report.false_positives == 0
    for d in DEFECTS:
        assert report.categories[d].recall == 1.0


def test_counts_match_an_independent_tally(corpus):
    report = run(corpus, LINKED)
    manifest = read_manifest(corpus)
    for d in DEFECTS:
        assert report.categories[d].maps_with_defect == sum(d in m["labels"] for m in manifest["maps"])
    total_labels = sum(len(m["labels"]) for m in manifest["maps"])
    assert sum(c.maps_with_defect for c in report.categories.values()) == total_labels
    # Each per-map violation set matches a direct engine run.
    for m in manifest["maps"][:8]:
        net = read_map((corpus / m["file"]).read_bytes())
        assert report.per_map[m["id"]] == evaluate(LINKED, net).violated_rules


def test_empty_corpus_reports_na(tmp_path):
    report = run(build_corpus(tmp_path / "c", 42, 0, 0), LINKED)
    doc = report.to_dict()
    assert all(c["recall"] == "n/a" for c in doc["categories"].values())
    assert doc["clean_maps"] == 0 and doc["passed"] is True
    assert "n/a" in report.table()


def test_loose_slope_threshold_loses_only_slope_recall(corpus):
    cfg = EvalConfig(max_grade=0.40)
    report = run(corpus, load_linked(default_rules_text(cfg), default_predicates_text()), cfg)
    assert report.categories[EXCESSIVE_SLOPE].recall == 0.0
    assert report.categories[ABRUPT_STEP].recall == 1.0
    assert report.categories[LOW_CLEARANCE].recall == 1.0
    assert report.false_positives == 0
    assert not report.passed


def test_report_json_is_deterministic_and_has_no_runtime(corpus):
    a, b = run(corpus, LINKED).to_json(), run(corpus, LINKED).to_json()
    assert a == b
    assert "runtime" not in json.loads(a)


def test_unreadable_map_names_the_path(tmp_path):
    corpus = build_corpus(tmp_path / "c", 3, 1, 1)
    entry = read_manifest(corpus)["maps"][0]
    (corpus / entry["file"]).write_text("<laneletNetwork>")
    with pytest.raises(HarnessError, match=entry["file"].split("/")[-1]):
        run(corpus, LINKED)


def test_mapping_must_cover_categories_and_name_known_rules(corpus):
    with pytest.raises(HarnessError, match="missing"):
        run(corpus, LINKED, mapping={EXCESSIVE_SLOPE: "slope_limit"})
    bad = {d: "nope" for d in DEFECTS}
    with pytest.raises(HarnessError, match="nope"):
        run(corpus, LINKED, mapping=bad)
