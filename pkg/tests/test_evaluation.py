"""Evaluation harness tests.

Metric functions are checked against independent brute-force oracles
built on exact rational arithmetic; fold assignment, report structure,
and renderers are covered on small synthetic run sets.
"""

import random
from fractions import Fraction

import pytest

from rftlab.detection import calibrate, compute_threshold
from rftlab.evaluation import (
    HorizonTooLarge,
    KTooLarge,
    eval_detection,
    eval_diagnosis,
    eval_remediation,
    f1_score,
    horizon_sweep,
    kfold_split,
    macro_average,
    precision,
    prf,
    recall,
    render_report,
    sweep_csv,
)
from rftlab.faults import FaultSpec, InjectionMode, build_schedule, generate_fault_run
from rftlab.remediation import (
    REMEDIES,
    InterventionAction,
    RFTConfig,
    RemediationOutcome,
    execute,
    mitigation_metrics,
    revalidate,
)
from rftlab.simulate import healthy_defaults, simulate_healthy
from rftlab.taxonomy import DifficultyRegime, FaultType


def _easy_run(fault_type, seed, config):
    spec = FaultSpec(fault_type, DifficultyRegime.EASY, 1.0,
                     mode=InjectionMode.ALWAYS_ON)
    sched = build_schedule(spec, config.steps, seed=seed)
    return generate_fault_run(config, spec, sched, seed=seed)


@pytest.fixture(scope="module")
def tiny_runs():
    config = healthy_defaults()
    normals = [simulate_healthy(config, 300 + i) for i in range(6)]
    faults = [
        _easy_run(ft, 400 + 20 * j + i, config)
        for j, ft in enumerate((FaultType.RF_1, FaultType.PG_2))
        for i in range(6)
    ]
    return normals + faults


@pytest.fixture(scope="module")
def family_runs():
    config = healthy_defaults()
    normals = [simulate_healthy(config, 330 + i) for i in range(6)]
    types = (FaultType.RF_1, FaultType.PG_1, FaultType.OD_1,
             FaultType.CA_1, FaultType.TE_1)
    faults = [
        _easy_run(ft, 500 + 10 * j + i, config)
        for j, ft in enumerate(types)
        for i in range(2)
    ]
    return normals + faults


@pytest.fixture(scope="module")
def diag_runs():
    """Six healthy runs plus two strong runs of every fault type, the
    smallest set a type-granularity attributor can be fit on."""
    config = healthy_defaults()
    normals = [simulate_healthy(config, 360 + i) for i in range(6)]
    faults = [
        _easy_run(ft, 700 + 10 * j + i, config)
        for j, ft in enumerate(FaultType)
        for i in range(2)
    ]
    return normals + faults


# ---------------------------------------------------------------------------
# metric oracles (exact rational brute force)
# ---------------------------------------------------------------------------

def _oracle_prf(tp, fp, fn):
    p = Fraction(tp, tp + fp) if tp + fp else Fraction(0)
    r = Fraction(tp, tp + fn) if tp + fn else Fraction(0)
    f = Fraction(0) if p + r == 0 else 2 * p * r / (p + r)
    return float(p), float(r), float(f)


def test_prf_matches_oracle_on_random_counts():
    rng = random.Random(1234)
    for _ in range(25):
        tp = rng.randint(0, 30)
        fp = rng.randint(0, 30)
        fn = rng.randint(0, 30)
        got = prf(tp, fp, fn)
        p, r, f = _oracle_prf(tp, fp, fn)
        assert abs(got["precision"] - p) <= 1e-12
        assert abs(got["recall"] - r) <= 1e-12
        assert abs(got["f1"] - f) <= 1e-12


def test_prf_degenerate_counts_are_zero():
    assert precision(0, 0) == 0.0
    assert recall(0, 0) == 0.0
    assert f1_score(0.0, 0.0) == 0.0
    assert prf(0, 5, 7) == {"precision": 0.0, "recall": 0.0, "f1": 0.0}


def test_macro_f1_matches_label_list_oracle():
    """Full pipeline (counts -> prf -> macro) against an independent
    recomputation from raw label lists."""
    rng = random.Random(77)
    classes = ["A", "B", "C"]
    for _ in range(25):
        n = rng.randint(4, 40)
        truth = [rng.choice(classes) for _ in range(n)]
        pred = [rng.choice(classes) for _ in range(n)]

        rows = []
        oracle_f1s = []
        for cls in classes:
            tp = sum(1 for t, p in zip(truth, pred) if t == cls and p == cls)
            fp = sum(1 for t, p in zip(truth, pred) if t != cls and p == cls)
            fn = sum(1 for t, p in zip(truth, pred) if t == cls and p != cls)
            rows.append(prf(tp, fp, fn))
            oracle_f1s.append(Fraction(_oracle_prf(tp, fp, fn)[2]))
        macro = macro_average(rows)
        oracle = float(sum(oracle_f1s, Fraction(0)) / len(classes))
        assert abs(macro["f1"] - oracle) <= 1e-12


def test_macro_average_empty_rows():
    assert macro_average([]) == {"precision": 0.0, "recall": 0.0, "f1": 0.0}


def _outcome(orig, post):
    return RemediationOutcome(
        run_id="r", fault_type=FaultType.RF_1,
        original_severity=orig, post_severity=post,
        mitigated=post < orig, below_threshold=False,
        delta_pct=(orig - post) / orig * 100.0,
    )


def _oracle_median(values):
    ordered = sorted(values)
    n = len(ordered)
    if n % 2:
        return ordered[n // 2]
    return (ordered[n // 2 - 1] + ordered[n // 2]) / 2.0


def test_mitigation_metrics_match_oracle_on_random_sets():
    rng = random.Random(90210)
    for _ in range(25):
        n = rng.randint(1, 9)
        outcomes = [
            _outcome(rng.uniform(5.0, 50.0), rng.uniform(0.0, 60.0))
            for _ in range(n)
        ]
        got = mitigation_metrics(outcomes)
        mr = float(Fraction(sum(1 for o in outcomes if o.mitigated), n))
        msc = _oracle_median([o.delta_pct for o in outcomes])
        assert abs(got["MR"] - mr) <= 1e-12
        assert abs(got["MSC"] - msc) <= 1e-12


def test_severity_change_consistent_with_reported_severities(family_runs):
    normals = [r for r in family_runs if r.label.is_normal]
    profile = calibrate(normals, 20)
    tau = compute_threshold(profile, normals, k=2.0, horizon=20)
    for run in [r for r in family_runs if not r.label.is_normal][:3]:
        action = InterventionAction(
            changes=REMEDIES[run.label.fault_type], rationale="reference"
        )
        updated = execute(RFTConfig.baseline(), action)
        out = revalidate(run, updated, profile, tau, 20)
        expected = (
            (out.original_severity - out.post_severity)
            / out.original_severity * 100.0
        )
        assert abs(out.delta_pct - expected) <= 1e-12


# ---------------------------------------------------------------------------
# fold assignment
# ---------------------------------------------------------------------------

def test_kfold_partitions_all_runs(tiny_runs):
    assignment = kfold_split(tiny_runs, 3, seed=5)
    seen = sorted(i for fold in assignment.folds for i in fold)
    assert seen == list(range(len(tiny_runs)))


def test_kfold_total_sizes_within_one(tiny_runs):
    assignment = kfold_split(tiny_runs, 3, seed=5)
    sizes = [len(f) for f in assignment.folds]
    assert max(sizes) - min(sizes) <= 1


def test_kfold_stratum_sizes_within_one(tiny_runs):
    assignment = kfold_split(tiny_runs, 3, seed=5)
    for key_fn in (
        lambda r: "NORMAL" if r.label.is_normal else r.label.fault_type.value,
    ):
        strata = {}
        for idx, run in enumerate(tiny_runs):
            strata.setdefault(key_fn(run), set()).add(idx)
        for members in strata.values():
            counts = [len(members & set(f)) for f in assignment.folds]
            assert max(counts) - min(counts) <= 1


def test_kfold_train_indices_complement_test(tiny_runs):
    assignment = kfold_split(tiny_runs, 3, seed=5)
    for fold in range(3):
        train = set(assignment.train_indices(fold))
        test = set(assignment.test_indices(fold))
        assert not train & test
        assert train | test == set(range(len(tiny_runs)))


def test_kfold_seeded_determinism(tiny_runs):
    a = kfold_split(tiny_runs, 3, seed=5)
    b = kfold_split(tiny_runs, 3, seed=5)
    c = kfold_split(tiny_runs, 3, seed=6)
    assert a == b
    assert a != c


def test_kfold_rejects_bad_k(tiny_runs):
    with pytest.raises(KTooLarge):
        kfold_split(tiny_runs, 1, seed=0)
    with pytest.raises(KTooLarge):
        kfold_split(tiny_runs, 7, seed=0)


# ---------------------------------------------------------------------------
# detection evaluation
# ---------------------------------------------------------------------------

def test_eval_detection_report_structure(tiny_runs):
    report = eval_detection(tiny_runs, k=2, seed=0, horizon=20)
    assert report["task"] == "detection"
    assert report["config"]["horizon"] == 20
    names = {(r["name"], r["regime"]) for r in report["rows"]}
    assert names == {("RF", "Easy"), ("PG", "Easy")}
    for row in report["rows"]:
        assert row["tp"] + row["fn"] == 6
        assert set(row) >= {"tp", "fp", "fn", "precision", "recall", "f1"}
    assert "Easy" in report["macro"]


def test_eval_detection_flags_strong_faults(tiny_runs):
    report = eval_detection(tiny_runs, k=2, seed=0, horizon=20)
    assert report["macro"]["Easy"]["recall"] >= 0.8


def test_eval_detection_ablation_paths_run(tiny_runs):
    for kwargs in ({"no_calibration": True}, {"no_invariants": True}):
        report = eval_detection(tiny_runs, k=2, seed=0, horizon=20, **kwargs)
        assert report["rows"]


def test_eval_detection_horizon_too_large(tiny_runs):
    with pytest.raises(HorizonTooLarge):
        eval_detection(tiny_runs, k=2, horizon=len(tiny_runs[0]) + 1)


# ---------------------------------------------------------------------------
# diagnosis evaluation
# ---------------------------------------------------------------------------

def test_eval_diagnosis_type_granularity(diag_runs):
    report = eval_diagnosis(diag_runs, k=2, seed=0, horizon=20)
    assert report["task"] == "diagnosis"
    names = {r["name"] for r in report["rows"]}
    assert names == {ft.value for ft in FaultType}
    total = sum(r["tp"] + r["fn"] for r in report["rows"])
    assert total == 32
    assert len(report["family_rows"]) == 5
    assert report["macro"]["Easy"]["f1"] >= 0.5


def test_eval_diagnosis_family_granularity(family_runs):
    report = eval_diagnosis(family_runs, k=2, seed=0, horizon=20,
                            granularity="family")
    names = {r["name"] for r in report["rows"]}
    assert names == {"RF", "PG", "OD", "CA", "TE"}
    assert {r["name"] for r in report["family_rows"]} == names
    assert report["macro"]["Easy"]["f1"] >= 0.9


def test_eval_diagnosis_pipeline_mode(family_runs):
    report = eval_diagnosis(family_runs, k=2, seed=0, horizon=20,
                            pipeline=True, granularity="family")
    assert report["config"]["pipeline"] is True
    assert report["macro"]["Easy"]["f1"] >= 0.8


# ---------------------------------------------------------------------------
# remediation evaluation
# ---------------------------------------------------------------------------

def test_eval_remediation_rule_planner(family_runs):
    report = eval_remediation(family_runs, seed=0, per_family=2, horizon=20)
    assert report["task"] == "remediation"
    assert len(report["rows"]) == 5
    for row in report["rows"]:
        assert row["cases"] == 2
        assert 0.0 <= row["MR"] <= 1.0
    assert report["overall"]["cases"] == 10
    assert report["overall"]["MR"] >= 0.5


def test_eval_remediation_oracle_planner(family_runs):
    report = eval_remediation(family_runs, seed=0, per_family=2,
                              planner="oracle", horizon=20)
    assert report["overall"]["MR"] >= 0.5
    assert report["config"]["planner"] == "oracle"


def test_eval_remediation_random_planner_deterministic(family_runs):
    a = eval_remediation(family_runs, seed=3, per_family=2,
                         planner="random", horizon=20)
    b = eval_remediation(family_runs, seed=3, per_family=2,
                         planner="random", horizon=20)
    assert a == b


def test_eval_remediation_rejects_bad_arguments(family_runs):
    with pytest.raises(ValueError):
        eval_remediation(family_runs, planner="psychic")
    with pytest.raises(ValueError):
        eval_remediation(family_runs, planner="llm")
    with pytest.raises(ValueError):
        eval_remediation(family_runs, per_family=50, horizon=20)


# ---------------------------------------------------------------------------
# horizon sweep and renderers
# ---------------------------------------------------------------------------

def test_horizon_sweep_rows_and_csv(tiny_runs):
    report = horizon_sweep(tiny_runs, [12, 6], k=2, seed=0)
    assert [r["horizon"] for r in report["rows"]] == [6, 12]
    assert all(r["regime"] == "Easy" for r in report["rows"])
    csv = sweep_csv(report)
    lines = csv.strip().splitlines()
    assert lines[0] == "horizon,regime,precision,recall,f1"
    assert len(lines) == 3


def test_horizon_sweep_validates_input(tiny_runs):
    with pytest.raises(ValueError):
        horizon_sweep(tiny_runs, [], k=2)
    with pytest.raises(HorizonTooLarge):
        horizon_sweep(tiny_runs, [len(tiny_runs[0]) + 1], k=2)


def test_render_report_sections(tiny_runs, family_runs):
    detection = render_report(eval_detection(tiny_runs, k=2, horizon=20))
    assert detection.startswith("task: detection\n")
    assert "macro averages" in detection
    assert "  horizon: 20" in detection

    remediation = render_report(
        eval_remediation(family_runs, seed=0, per_family=2, horizon=20)
    )
    assert "overall" in remediation
    assert "MR" in remediation


def test_render_report_empty_rows():
    text = render_report({"task": "detection", "config": {}, "rows": []})
    assert "(no rows)" in text
