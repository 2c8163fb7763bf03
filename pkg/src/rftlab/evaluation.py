"""Evaluation harness: folds, metrics, and report assembly.

Detection and diagnosis are scored with stratified k-fold protocols so
every run is tested exactly once while profiles, thresholds, and
attribution centroids are always fit out-of-fold. Remediation is scored
on a seeded sample of strong-regime runs per family. Reports are plain
dicts (JSON-ready) with deterministic content; renderers turn them into
aligned text or CSV.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence

from .attribution import attribute, class_of, fingerprint, fit_attributor
from .detection import NormalProfile, calibrate, compute_threshold, detect
from .planner_client import PlannerEndpoint, plan_action_llm
from .records import TrainingRun
from .remediation import (
    RFTConfig,
    build_state,
    execute,
    mitigation_metrics,
    plan_action_random,
    plan_action_rule,
    revalidate,
)
from .rng import RngStream, stream_seed
from .taxonomy import (
    FAMILIES,
    FAMILY_TYPES,
    DifficultyRegime,
    FaultLabel,
    FaultType,
)

DEFAULT_FOLDS = 5
DEFAULT_SIGMA = 2.0
REGIME_ORDER = (DifficultyRegime.EASY, DifficultyRegime.HARD)


class KTooLarge(ValueError):
    """k outside [2, smallest stratum size]."""


class HorizonTooLarge(ValueError):
    """Requested horizon exceeds the shortest run in the set."""


# ---------------------------------------------------------------------------
# metrics


def precision(tp: int, fp: int) -> float:
    return tp / (tp + fp) if tp + fp else 0.0


def recall(tp: int, fn: int) -> float:
    return tp / (tp + fn) if tp + fn else 0.0


def f1_score(p: float, r: float) -> float:
    return 0.0 if p + r == 0.0 else 2.0 * p * r / (p + r)


def prf(tp: int, fp: int, fn: int) -> dict[str, float]:
    p = precision(tp, fp)
    r = recall(tp, fn)
    return {"precision": p, "recall": r, "f1": f1_score(p, r)}


def macro_average(rows: Sequence[dict]) -> dict[str, float]:
    """Unweighted mean of precision, recall, and f1 over rows."""
    if not rows:
        return {"precision": 0.0, "recall": 0.0, "f1": 0.0}
    out = {}
    for key in ("precision", "recall", "f1"):
        out[key] = sum(row[key] for row in rows) / len(rows)
    return out


# ---------------------------------------------------------------------------
# folds


def _stratum_key(run: TrainingRun) -> tuple[str, str]:
    if run.label.is_normal:
        return ("NORMAL", "")
    return (run.label.fault_type.value, run.regime.value)


@dataclass(frozen=True)
class FoldAssignment:
    """Fold index per run position, for k folds over a fixed run list."""

    k: int
    folds: tuple[tuple[int, ...], ...]

    def test_indices(self, fold: int) -> tuple[int, ...]:
        return self.folds[fold]

    def train_indices(self, fold: int) -> tuple[int, ...]:
        out: list[int] = []
        for f, members in enumerate(self.folds):
            if f != fold:
                out.extend(members)
        return tuple(sorted(out))


def kfold_split(runs: Sequence[TrainingRun], k: int, seed: int) -> FoldAssignment:
    """Stratified fold assignment with per-stratum seeded shuffles.

    Strata are (fault type, regime) pairs, with healthy runs forming
    their own stratum. A global round-robin keeps both per-stratum and
    total fold sizes within one of each other.
    """
    strata: dict[tuple[str, str], list[int]] = {}
    for idx, run in enumerate(runs):
        strata.setdefault(_stratum_key(run), []).append(idx)
    smallest = min(len(v) for v in strata.values())
    if not 2 <= k <= smallest:
        raise KTooLarge(
            f"k={k} must lie in [2, {smallest}] (smallest stratum size)"
        )
    folds: list[list[int]] = [[] for _ in range(k)]
    offset = 0
    for key in sorted(strata):
        members = strata[key]
        stream = RngStream(stream_seed(seed, f"fold:{key[0]}:{key[1]}"), 0)
        stream.shuffle(members)
        for i, idx in enumerate(members):
            folds[(offset + i) % k].append(idx)
        offset = (offset + len(members)) % k
    return FoldAssignment(k=k, folds=tuple(tuple(sorted(f)) for f in folds))


# ---------------------------------------------------------------------------
# detection evaluation


def _default_horizon(runs: Sequence[TrainingRun]) -> int:
    return min(len(run) for run in runs)


def schedule_mode(run: TrainingRun) -> str:
    """Injection schedule mode, used to give each manifestation shape
    its own attribution prototype at training time."""
    meta = run.injection_meta
    return meta.mode if meta is not None else "none"


def eval_detection(
    runs: Sequence[TrainingRun],
    k: int = DEFAULT_FOLDS,
    seed: int = 0,
    k_sigma: float = DEFAULT_SIGMA,
    horizon: Optional[int] = None,
    no_calibration: bool = False,
    no_invariants: bool = False,
) -> dict:
    """Out-of-fold anomaly detection, scored per family and regime.

    Each fold's profile and threshold come from the healthy runs outside
    the fold; the fold's faults contribute hits and misses to their
    family-regime cell, and the fold's healthy runs contribute false
    positives shared by every cell.
    """
    normals = [r for r in runs if r.label.is_normal]
    if horizon is None:
        horizon = _default_horizon(normals) if normals else _default_horizon(runs)
    shortest = _default_horizon(runs)
    if horizon > shortest:
        raise HorizonTooLarge(f"horizon {horizon} exceeds shortest run ({shortest})")

    assignment = kfold_split(runs, k, seed)
    tp: dict[tuple[str, str], int] = {}
    fn: dict[tuple[str, str], int] = {}
    false_pos = 0
    for fold in range(k):
        train = [runs[i] for i in assignment.train_indices(fold)]
        train_normals = [r for r in train if r.label.is_normal]
        profile = None
        if not no_calibration and not no_invariants:
            profile = calibrate(train_normals, horizon)
        tau = compute_threshold(
            profile, train_normals, k=k_sigma, horizon=horizon,
            no_calibration=no_calibration, no_invariants=no_invariants,
        )
        for i in assignment.test_indices(fold):
            run = runs[i]
            decision = detect(
                run, profile, tau, horizon,
                no_calibration=no_calibration, no_invariants=no_invariants,
            )
            if run.label.is_normal:
                if decision.is_anomalous:
                    false_pos += 1
                continue
            cell = (run.label.family.value, run.regime.value)
            bucket = tp if decision.is_anomalous else fn
            bucket[cell] = bucket.get(cell, 0) + 1

    rows = []
    for regime in REGIME_ORDER:
        for family in FAMILIES:
            cell = (family.value, regime.value)
            counts = {
                "tp": tp.get(cell, 0),
                "fp": false_pos,
                "fn": fn.get(cell, 0),
            }
            if counts["tp"] + counts["fn"] == 0:
                continue
            rows.append(
                {"name": family.value, "regime": regime.value, **counts,
                 **prf(counts["tp"], counts["fp"], counts["fn"])}
            )
    macro = {
        regime.value: macro_average([r for r in rows if r["regime"] == regime.value])
        for regime in REGIME_ORDER
        if any(r["regime"] == regime.value for r in rows)
    }
    return {
        "task": "detection",
        "config": {
            "k_folds": k,
            "seed": seed,
            "k_sigma": k_sigma,
            "horizon": horizon,
            "no_calibration": no_calibration,
            "no_invariants": no_invariants,
        },
        "rows": rows,
        "macro": macro,
    }


# ---------------------------------------------------------------------------
# diagnosis evaluation


def eval_diagnosis(
    runs: Sequence[TrainingRun],
    k: int = DEFAULT_FOLDS,
    seed: int = 0,
    granularity: str = "type",
    horizon: Optional[int] = None,
    pipeline: bool = False,
    k_sigma: float = DEFAULT_SIGMA,
    no_temporal: bool = False,
    no_fingerprint: bool = False,
) -> dict:
    """Out-of-fold fault attribution over the faulty runs.

    The profile comes from every healthy run; folds cover only faults.
    With pipeline=True a run must first be flagged by detection before
    attribution sees it, so detection misses count against its class.
    """
    normals = [r for r in runs if r.label.is_normal]
    faults = [r for r in runs if not r.label.is_normal]
    if horizon is None:
        horizon = _default_horizon(normals) if normals else _default_horizon(faults)
    profile = calibrate(normals, horizon)
    tau = compute_threshold(profile, normals, k=k_sigma, horizon=horizon)

    fps = {
        run.run_id: fingerprint(
            run, profile, horizon,
            no_temporal=no_temporal, no_fingerprint=no_fingerprint,
        )
        for run in faults
    }
    # Fingerprint magnitudes scale with injected strength, so centroids
    # are fit within each regime rather than across both.
    confusion: dict[str, dict[tuple[str, Optional[str]], int]] = {
        regime.value: {} for regime in REGIME_ORDER
    }
    for regime in REGIME_ORDER:
        subset = [r for r in faults if r.regime is regime]
        if not subset:
            continue
        assignment = kfold_split(subset, k, seed)
        for fold in range(k):
            train = [subset[i] for i in assignment.train_indices(fold)]
            model = fit_attributor(
                [(fps[r.run_id], r.label) for r in train],
                granularity=granularity,
                subgroups=[schedule_mode(r) for r in train],
            )
            for i in assignment.test_indices(fold):
                run = subset[i]
                true_class = class_of(run.label, granularity)
                predicted: Optional[str] = None
                if pipeline:
                    decision = detect(run, profile, tau, horizon)
                    if decision.is_anomalous:
                        predicted = attribute(model, fps[run.run_id])
                else:
                    predicted = attribute(model, fps[run.run_id])
                key = (true_class, predicted)
                reg = confusion[regime.value]
                reg[key] = reg.get(key, 0) + 1

    classes = sorted({class_of(r.label, granularity) for r in faults})
    rows = []
    for regime in REGIME_ORDER:
        reg = confusion[regime.value]
        if not reg:
            continue
        for cls in classes:
            tp = reg.get((cls, cls), 0)
            fn = sum(n for (t, p), n in reg.items() if t == cls and p != cls)
            fp = sum(n for (t, p), n in reg.items() if t != cls and p == cls)
            rows.append(
                {"name": cls, "regime": regime.value, "tp": tp, "fp": fp,
                 "fn": fn, **prf(tp, fp, fn)}
            )

    family_rows = []
    for regime in REGIME_ORDER:
        regime_rows = {r["name"]: r for r in rows if r["regime"] == regime.value}
        if not regime_rows:
            continue
        for family in FAMILIES:
            if granularity == "family":
                members = [regime_rows.get(family.value)]
            else:
                members = [
                    regime_rows.get(ft.value) for ft in FAMILY_TYPES[family]
                ]
            members = [m for m in members if m is not None]
            if not members:
                continue
            family_rows.append(
                {"name": family.value, "regime": regime.value,
                 **macro_average(members)}
            )

    macro = {
        regime.value: macro_average([r for r in rows if r["regime"] == regime.value])
        for regime in REGIME_ORDER
        if any(r["regime"] == regime.value for r in rows)
    }
    return {
        "task": "diagnosis",
        "config": {
            "k_folds": k,
            "seed": seed,
            "granularity": granularity,
            "horizon": horizon,
            "pipeline": pipeline,
            "k_sigma": k_sigma,
            "no_temporal": no_temporal,
            "no_fingerprint": no_fingerprint,
        },
        "rows": rows,
        "family_rows": family_rows,
        "macro": macro,
    }


# ---------------------------------------------------------------------------
# remediation evaluation


def _sample_per_family(
    faults: Sequence[TrainingRun], per_family: int, seed: int
) -> list[TrainingRun]:
    sampled: list[TrainingRun] = []
    for family in FAMILIES:
        members = [r for r in faults if r.label.family is family]
        members.sort(key=lambda r: r.run_id)
        stream = RngStream(stream_seed(seed, f"remediation:{family.value}"), 0)
        stream.shuffle(members)
        if len(members) < per_family:
            raise ValueError(
                f"family {family.value} has {len(members)} eligible runs, "
                f"need {per_family}"
            )
        sampled.extend(members[:per_family])
    return sampled


def eval_remediation(
    runs: Sequence[TrainingRun],
    seed: int = 0,
    per_family: int = 15,
    planner: str = "rule",
    horizon: Optional[int] = None,
    k_sigma: float = DEFAULT_SIGMA,
    endpoint: Optional[PlannerEndpoint] = None,
) -> dict:
    """Closed-loop remediation scored on sampled strong-regime runs.

    The oracle planner applies the reference remedy for the true fault
    type; the rule planner trusts the attributor's diagnosis; the random
    planner moves arbitrary knobs. Each case replays the run under the
    updated config and scores mitigation.
    """
    if planner not in ("rule", "llm", "oracle", "random"):
        raise ValueError(f"unknown planner {planner!r}")
    if planner == "llm" and endpoint is None:
        raise ValueError("llm planner requires an endpoint")
    normals = [r for r in runs if r.label.is_normal]
    if horizon is None:
        horizon = _default_horizon(normals) if normals else _default_horizon(runs)
    profile = calibrate(normals, horizon)
    tau = compute_threshold(profile, normals, k=k_sigma, horizon=horizon)

    faults = [r for r in runs if not r.label.is_normal]
    easy = [r for r in faults if r.regime is DifficultyRegime.EASY]
    sampled = _sample_per_family(easy, per_family, seed)

    model = None
    if planner in ("rule", "llm"):
        fps = [(fingerprint(r, profile, horizon), r.label) for r in faults]
        model = fit_attributor(
            fps, granularity="type", subgroups=[schedule_mode(r) for r in faults]
        )

    outcomes_by_family: dict[str, list] = {f.value: [] for f in FAMILIES}
    fallback_count = 0
    for run in sampled:
        decision = detect(run, profile, tau, horizon)
        if planner in ("rule", "llm"):
            predicted = attribute(model, fingerprint(run, profile, horizon))
            label = FaultLabel.of(FaultType(predicted))
        else:
            label = run.label
        state = build_state(decision, label, RFTConfig.baseline(), run.regime)
        if planner == "random":
            action = plan_action_random(
                state, stream_seed(seed, f"random:{run.run_id}")
            )
        elif planner == "llm":
            action = plan_action_llm(state, endpoint)
            fallback_count += int(action.fallback)
        else:
            action = plan_action_rule(state)
        updated = execute(RFTConfig.baseline(), action)
        outcome = revalidate(run, updated, profile, tau, horizon)
        outcomes_by_family[run.label.family.value].append(outcome)

    rows = []
    all_outcomes = []
    for family in FAMILIES:
        outcomes = outcomes_by_family[family.value]
        all_outcomes.extend(outcomes)
        metrics = mitigation_metrics(outcomes)
        rows.append(
            {"name": family.value, "regime": DifficultyRegime.EASY.value,
             "cases": len(outcomes), **metrics}
        )
    overall = {"cases": len(all_outcomes), **mitigation_metrics(all_outcomes)}
    report = {
        "task": "remediation",
        "config": {
            "seed": seed,
            "per_family": per_family,
            "planner": planner,
            "horizon": horizon,
            "k_sigma": k_sigma,
        },
        "rows": rows,
        "overall": overall,
    }
    if planner == "llm":
        report["config"]["fallbacks"] = fallback_count
    return report


# ---------------------------------------------------------------------------
# horizon sweep


def horizon_sweep(
    runs: Sequence[TrainingRun],
    horizons: Sequence[int],
    k: int = DEFAULT_FOLDS,
    seed: int = 0,
    k_sigma: float = DEFAULT_SIGMA,
) -> dict:
    """Detection macro scores as a function of observation horizon."""
    if not horizons:
        raise ValueError("at least one horizon required")
    shortest = _default_horizon(runs)
    for h in sorted(horizons):
        if h > shortest:
            raise HorizonTooLarge(f"horizon {h} exceeds shortest run ({shortest})")
    rows = []
    for h in sorted(horizons):
        report = eval_detection(runs, k=k, seed=seed, k_sigma=k_sigma, horizon=h)
        for regime_value, macro in sorted(report["macro"].items()):
            rows.append({"horizon": h, "regime": regime_value, **macro})
    return {
        "task": "horizon_sweep",
        "config": {"k_folds": k, "seed": seed, "k_sigma": k_sigma,
                   "horizons": sorted(horizons)},
        "rows": rows,
    }


def sweep_csv(report: dict) -> str:
    """Render a horizon sweep as CSV text."""
    lines = ["horizon,regime,precision,recall,f1"]
    for row in report["rows"]:
        lines.append(
            f"{row['horizon']},{row['regime']},"
            f"{row['precision']:.6f},{row['recall']:.6f},{row['f1']:.6f}"
        )
    return "\n".join(lines) + "\n"


# ---------------------------------------------------------------------------
# text rendering


def _format_value(value) -> str:
    if isinstance(value, bool):
        return str(value).lower()
    if isinstance(value, float):
        return f"{value:.4f}"
    return str(value)


def _render_table(rows: Sequence[dict]) -> list[str]:
    if not rows:
        return ["(no rows)"]
    columns = list(rows[0].keys())
    cells = [[_format_value(row.get(col, "")) for col in columns] for row in rows]
    widths = [
        max(len(col), *(len(line[i]) for line in cells))
        for i, col in enumerate(columns)
    ]
    header = "  ".join(col.ljust(widths[i]) for i, col in enumerate(columns))
    rule = "  ".join("-" * w for w in widths)
    body = [
        "  ".join(line[i].ljust(widths[i]) for i in range(len(columns)))
        for line in cells
    ]
    return [header, rule, *body]


def render_report(report: dict) -> str:
    """Aligned plain-text rendering of any evaluation report."""
    lines = [f"task: {report['task']}"]
    for key in sorted(report.get("config", {})):
        lines.append(f"  {key}: {_format_value(report['config'][key])}")
    lines.append("")
    lines.extend(_render_table(report.get("rows", [])))
    if report.get("family_rows"):
        lines.append("")
        lines.append("family summary")
        lines.extend(_render_table(report["family_rows"]))
    if report.get("macro"):
        lines.append("")
        lines.append("macro averages")
        macro_rows = [
            {"regime": regime, **metrics}
            for regime, metrics in sorted(report["macro"].items())
        ]
        lines.extend(_render_table(macro_rows))
    if report.get("overall"):
        lines.append("")
        lines.append("overall")
        lines.extend(_render_table([report["overall"]]))
    return "\n".join(lines) + "\n"
