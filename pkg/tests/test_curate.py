"""Benchmark curation tests: plan validation, manifest bookkeeping,
deterministic regeneration, and load round-trips.

Small custom plans keep these fast; the session-scoped fixture holds
the full default benchmark for the tests that need its exact counts.
"""

import json

import pytest

from rftlab.curate import (
    BenchmarkPlan,
    CALIBRATION_RUNS,
    ManifestMissing,
    curate_benchmark,
    default_plan,
    load_benchmark,
    load_manifest,
)
from rftlab.faults import InvalidSpec
from rftlab.taxonomy import DifficultyRegime, FAULT_TYPES


# ---------------------------------------------------------------------------
# Helpers
# ---------------------------------------------------------------------------

def _tiny_plan(seed=7):
    """Two fault types, two runs per cell, three healthy runs."""
    easy = {t.value: 0 for t in FAULT_TYPES}
    hard = {t.value: 0 for t in FAULT_TYPES}
    easy["RF-1"] = 2
    easy["TE-1"] = 2
    hard["RF-1"] = 2
    return BenchmarkPlan(
        seed=seed,
        easy_per_type=easy,
        hard_per_type=hard,
        normal_runs=3,
    )


# ---------------------------------------------------------------------------
# Plan validation
# ---------------------------------------------------------------------------

def test_plan_rejects_unknown_type_and_negative_counts():
    with pytest.raises(ValueError):
        BenchmarkPlan(easy_per_type={"XX-9": 3})
    with pytest.raises(InvalidSpec):
        BenchmarkPlan(easy_per_type={"RF-1": -1})
    with pytest.raises(InvalidSpec):
        BenchmarkPlan(normal_runs=-1)
    with pytest.raises(InvalidSpec):
        BenchmarkPlan(retry_factor=0)


def test_default_plan_totals():
    plan = default_plan()
    assert sum(plan.easy_per_type.values()) == 320
    assert sum(plan.hard_per_type.values()) == 448
    assert plan.normal_runs == 11
    assert plan.easy_per_type["RF-1"] == 20
    assert plan.hard_per_type["RF-1"] == 28
    assert CALIBRATION_RUNS > plan.normal_runs


# ---------------------------------------------------------------------------
# Curation output
# ---------------------------------------------------------------------------

def test_tiny_plan_produces_planned_counts(tmp_path):
    manifest = curate_benchmark(_tiny_plan(), tmp_path)
    assert manifest.counts == {
        "total": 9, "fault_easy": 4, "fault_hard": 2, "normal": 3,
    }
    assert manifest.per_cell["RF-1/Easy"]["retained"] == 2
    assert manifest.per_cell["RF-1/Hard"]["retained"] == 2
    assert manifest.per_cell["TE-1/Easy"]["retained"] == 2
    assert "TE-1/Hard" not in manifest.per_cell


def test_layout_on_disk(tmp_path):
    curate_benchmark(_tiny_plan(), tmp_path)
    assert (tmp_path / "manifest.json").is_file()
    assert (tmp_path / "normal" / "normal-000.jsonl").is_file()
    assert (tmp_path / "runs" / "Easy" / "RF-1" / "RF-1-Easy-000.jsonl").is_file()
    assert (tmp_path / "runs" / "Hard" / "RF-1" / "RF-1-Hard-001.jsonl").is_file()


def test_manifest_files_cover_every_run(tmp_path):
    manifest = curate_benchmark(_tiny_plan(), tmp_path)
    assert len(manifest.files) == manifest.counts["total"]
    for entry in manifest.files:
        assert (tmp_path / entry["path"]).is_file()
        assert set(entry) == {
            "path", "run_id", "label_family", "label_type", "regime", "seed",
        }


def test_regeneration_is_byte_identical(tmp_path):
    a = tmp_path / "a"
    b = tmp_path / "b"
    curate_benchmark(_tiny_plan(), a)
    curate_benchmark(_tiny_plan(), b)
    files_a = sorted(p.relative_to(a) for p in a.rglob("*.jsonl"))
    files_b = sorted(p.relative_to(b) for p in b.rglob("*.jsonl"))
    assert files_a == files_b
    for rel in files_a:
        assert (a / rel).read_bytes() == (b / rel).read_bytes()
    assert (a / "manifest.json").read_bytes() == (b / "manifest.json").read_bytes()


def test_different_seed_changes_content(tmp_path):
    a = tmp_path / "a"
    b = tmp_path / "b"
    curate_benchmark(_tiny_plan(seed=7), a)
    curate_benchmark(_tiny_plan(seed=8), b)
    rel = "normal/normal-000.jsonl"
    assert (a / rel).read_bytes() != (b / rel).read_bytes()


def test_load_round_trip(tmp_path):
    written = curate_benchmark(_tiny_plan(), tmp_path)
    manifest, runs = load_benchmark(tmp_path)
    assert manifest == written
    assert len(runs) == written.counts["total"]
    by_id = {r.run_id: r for r in runs}
    for entry in manifest.files:
        run = by_id[entry["run_id"]]
        assert run.label.fault_type.value == entry["label_type"]
        assert (run.regime.value if run.regime else None) == entry["regime"]


def test_load_missing_manifest_raises(tmp_path):
    with pytest.raises(ManifestMissing):
        load_manifest(tmp_path / "nowhere")


def test_manifest_json_is_stable(tmp_path):
    manifest = curate_benchmark(_tiny_plan(), tmp_path)
    payload = json.loads((tmp_path / "manifest.json").read_text())
    assert payload["schema_version"] == "1"
    assert payload["counts"] == manifest.counts
    assert payload["plan"]["seed"] == 7


# ---------------------------------------------------------------------------
# Curated runs honor the plan's shapes
# ---------------------------------------------------------------------------

def test_curated_runs_have_planned_lengths_and_regimes(tmp_path):
    plan = _tiny_plan()
    curate_benchmark(plan, tmp_path)
    _, runs = load_benchmark(tmp_path)
    for run in runs:
        if run.label.is_normal:
            assert len(run) == plan.normal_steps
        elif run.regime is DifficultyRegime.EASY:
            assert len(run) == plan.easy_steps
            assert run.injection_meta.base_strength == 1.0
        else:
            assert len(run) == plan.hard_steps
            assert 0.25 <= run.injection_meta.base_strength <= 0.5


def test_default_benchmark_counts(bench_manifest):
    assert bench_manifest.counts == {
        "total": 779, "fault_easy": 320, "fault_hard": 448, "normal": 11,
    }
    easy_by_family = {"RF": 0, "PG": 0, "OD": 0, "CA": 0, "TE": 0}
    for cell, stats in bench_manifest.per_cell.items():
        type_id, regime = cell.split("/")
        if regime == "Easy":
            easy_by_family[type_id.split("-")[0]] += stats["retained"]
    assert easy_by_family == {"RF": 60, "PG": 80, "OD": 60, "CA": 60, "TE": 60}
