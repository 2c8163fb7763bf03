"""Anomaly detection over run telemetry.

The detector calibrates a profile of robust statistics from healthy
runs, turns a run's statistics into robust-z deviations, groups the
deviations under five training invariants, and scores severity as the
mean of the per-invariant maxima. A run is anomalous when its severity
exceeds a threshold set from healthy severities.
"""
from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Sequence, Union

import numpy as np

from .records import STEP_FIELDS, TELEMETRY_FIELDS, TrainingRun
from .signals import (
    RobustStat,
    SCALE_FLOOR,
    TEMPORAL_NAMES,
    first_diffs,
    lstsq_slope,
    pop_std,
    robust_stat,
    temporal_vector,
)

PROFILE_SCHEMA_VERSION = "1"

# The five training invariants and their statistics. The partition is
# fixed: reward trend and KL and entropy profiles get three statistics
# each, return stability four, generation quality five.
INVARIANT_GROUPS: dict[str, tuple[str, ...]] = {
    "reward_trend": ("reward_mean", "reward_slope", "reward_delta"),
    "kl_dynamics": ("kl_mean", "kl_max", "kl_slope"),
    "entropy_profile": ("entropy_mean", "entropy_slope", "entropy_final"),
    "return_stability": (
        "return_std",
        "value_return_gap",
        "advantage_std_mean",
        "advantage_mean_std",
    ),
    "generation_quality": (
        "length_mean",
        "length_std",
        "length_slope",
        "tool_error_mean",
        "truncation_mean",
    ),
}

STAT_NAMES: tuple[str, ...] = tuple(
    name for group in INVARIANT_GROUPS.values() for name in group
)

# Statistics kept for the verifier but outside the detection set.
AUX_STAT_NAMES: tuple[str, ...] = ("reward_return_gap",)

RAW_GROUP = "raw_means"


class TooFewRuns(ValueError):
    pass


class RunTooShort(ValueError):
    pass


def compute_statistics(run: TrainingRun, horizon: int) -> dict[str, float]:
    """The 18 invariant statistics over the first `horizon` steps."""
    if len(run) < horizon:
        raise RunTooShort(f"run {run.run_id} has {len(run)} steps, horizon is {horizon}")
    reward = run.signal("reward_mean")[:horizon]
    kl = run.signal("kl_mean")[:horizon]
    entropy = run.signal("entropy_mean")[:horizon]
    ret = run.signal("return_mean")[:horizon]
    value = run.signal("value_mean")[:horizon]
    adv_mean = run.signal("advantage_mean")[:horizon]
    adv_std = run.signal("advantage_std")[:horizon]
    length = run.signal("response_length_mean")[:horizon]
    tool = run.signal("tool_error_rate")[:horizon]
    trunc = run.signal("truncation_rate")[:horizon]
    return {
        "reward_mean": float(np.mean(reward)),
        "reward_slope": lstsq_slope(reward),
        "reward_delta": reward[-1] - reward[0],
        "kl_mean": float(np.mean(kl)),
        "kl_max": float(np.max(kl)),
        "kl_slope": lstsq_slope(kl),
        "entropy_mean": float(np.mean(entropy)),
        "entropy_slope": lstsq_slope(entropy),
        "entropy_final": entropy[-1],
        "return_std": pop_std(ret),
        "value_return_gap": float(np.mean(np.abs(np.subtract(value, ret)))),
        "advantage_std_mean": float(np.mean(adv_std)),
        "advantage_mean_std": pop_std(adv_mean),
        "length_mean": float(np.mean(length)),
        "length_std": pop_std(length),
        "length_slope": lstsq_slope(length),
        "tool_error_mean": float(np.mean(tool)),
        "truncation_mean": float(np.mean(trunc)),
    }


def _aux_statistics(run: TrainingRun, horizon: int) -> dict[str, float]:
    reward = run.signal("reward_mean")[:horizon]
    ret = run.signal("return_mean")[:horizon]
    return {
        "reward_return_gap": float(np.mean(np.abs(np.subtract(reward, ret)))),
    }


@dataclass(frozen=True)
class NormalProfile:
    """Robust references from healthy runs.

    stats hold the invariant statistics; signal_step holds per-step
    per-signal references used for onset scans and verification rules;
    signal_delta holds typical step-to-step movement per signal;
    temporal holds references for the temporal feature vector.
    """

    stats: dict[str, RobustStat]
    aux_stats: dict[str, RobustStat]
    signal_step: dict[str, list[RobustStat]]
    signal_delta: dict[str, float]
    temporal: tuple[RobustStat, ...]
    run_count: int
    horizon: int

    def to_json(self) -> str:
        payload = {
            "schema_version": PROFILE_SCHEMA_VERSION,
            "run_count": self.run_count,
            "horizon": self.horizon,
            "stats": {k: {"location": v.location, "scale": v.scale}
                      for k, v in self.stats.items()},
            "aux_stats": {k: {"location": v.location, "scale": v.scale}
                          for k, v in self.aux_stats.items()},
            "signal_step": {
                sig: [[r.location, r.scale] for r in refs]
                for sig, refs in self.signal_step.items()
            },
            "signal_delta": dict(self.signal_delta),
            "temporal": [[r.location, r.scale] for r in self.temporal],
        }
        return json.dumps(payload, indent=2, sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "NormalProfile":
        d = json.loads(text)
        return cls(
            stats={k: RobustStat(v["location"], v["scale"]) for k, v in d["stats"].items()},
            aux_stats={k: RobustStat(v["location"], v["scale"])
                       for k, v in d["aux_stats"].items()},
            signal_step={
                sig: [RobustStat(loc, scale) for loc, scale in refs]
                for sig, refs in d["signal_step"].items()
            },
            signal_delta={k: float(v) for k, v in d["signal_delta"].items()},
            temporal=tuple(RobustStat(loc, scale) for loc, scale in d["temporal"]),
            run_count=int(d["run_count"]),
            horizon=int(d["horizon"]),
        )

    def save(self, path: Union[str, Path]) -> None:
        Path(path).write_text(self.to_json(), encoding="utf-8")

    @classmethod
    def load(cls, path: Union[str, Path]) -> "NormalProfile":
        return cls.from_json(Path(path).read_text(encoding="utf-8"))


def calibrate(normal_runs: Sequence[TrainingRun], horizon: int) -> NormalProfile:
    """Fit a profile from healthy runs' first `horizon` steps.

    Needs at least three runs, each covering the horizon. Location is
    the median and scale the scaled MAD (floored), so duplicating the
    run set leaves the profile unchanged.
    """
    if len(normal_runs) < 3:
        raise TooFewRuns(f"calibration needs >= 3 runs, got {len(normal_runs)}")
    for run in normal_runs:
        if not run.label.is_normal:
            raise ValueError(f"calibration run {run.run_id} is not NORMAL-labeled")
        if len(run) < horizon:
            raise RunTooShort(
                f"run {run.run_id} has {len(run)} steps, horizon is {horizon}"
            )

    per_run_stats = [compute_statistics(run, horizon) for run in normal_runs]
    stats = {
        name: robust_stat([s[name] for s in per_run_stats]) for name in STAT_NAMES
    }
    per_run_aux = [_aux_statistics(run, horizon) for run in normal_runs]
    aux_stats = {
        name: robust_stat([s[name] for s in per_run_aux]) for name in AUX_STAT_NAMES
    }

    # The gap statistics are horizon-means of per-step absolute gaps, so
    # their sampling scale can also be estimated from the pooled per-step
    # gaps (many samples) instead of only the per-run means (few). Floor
    # the per-run estimate with the pooled one: a handful of runs can
    # land close together and make a z bound far tighter than the gap's
    # real variation supports.
    def _pooled_gap_scale(a: str, b: str) -> float:
        gaps = [
            abs(x - y)
            for run in normal_runs
            for x, y in zip(run.signal(a)[:horizon], run.signal(b)[:horizon])
        ]
        return pop_std(gaps) / float(np.sqrt(horizon))

    for table, name, pair in (
        (stats, "value_return_gap", ("value_mean", "return_mean")),
        (aux_stats, "reward_return_gap", ("reward_mean", "return_mean")),
    ):
        ref = table[name]
        table[name] = RobustStat(
            ref.location, max(ref.scale, _pooled_gap_scale(*pair))
        )

    signal_step: dict[str, list[RobustStat]] = {}
    for sig in STEP_FIELDS:
        columns = [run.signal(sig)[:horizon] for run in normal_runs]
        per_step = [robust_stat([col[t] for col in columns]) for t in range(horizon)]
        # Per-step noise is flat across a signal's horizon, so one step's
        # scale collapsing below the others is estimation error from the
        # small run count, not signal; floor each step at the signal's
        # median step scale.
        med = float(np.median([r.scale for r in per_step]))
        signal_step[sig] = [
            RobustStat(r.location, max(r.scale, med)) for r in per_step
        ]

    signal_delta = {}
    for sig in TELEMETRY_FIELDS:
        per_run_delta = [
            float(np.mean(np.abs(first_diffs(run.signal(sig)[:horizon]))))
            for run in normal_runs
        ]
        signal_delta[sig] = float(np.median(per_run_delta))

    vectors = [temporal_vector(run, signal_step, horizon) for run in normal_runs]
    temporal = []
    for i, name in enumerate(TEMPORAL_NAMES):
        ref = robust_stat([vec[i] for vec in vectors])
        if name.endswith(":onset"):
            # Onset features are step indices; healthy runs mostly agree
            # on -1, so the scale needs a floor of one whole step.
            ref = RobustStat(ref.location, max(ref.scale, 1.0))
        temporal.append(ref)
    temporal = tuple(temporal)

    return NormalProfile(
        stats=stats,
        aux_stats=aux_stats,
        signal_step=signal_step,
        signal_delta=signal_delta,
        temporal=temporal,
        run_count=len(normal_runs),
        horizon=horizon,
    )


@dataclass(frozen=True)
class DeviationVector:
    """Non-negative robust-z deviations, grouped by invariant."""

    values: dict[str, float]
    groups: dict[str, tuple[str, ...]]

    def __post_init__(self) -> None:
        for name, v in self.values.items():
            if v < 0:
                raise ValueError(f"deviation {name} must be >= 0, got {v}")


@dataclass(frozen=True)
class SeverityScore:
    severity: float
    phi: dict[str, float]


def extract_deviations(
    run: TrainingRun,
    profile: Optional[NormalProfile],
    horizon: int,
    no_calibration: bool = False,
    no_invariants: bool = False,
) -> DeviationVector:
    """Robust-z deviations of a run against the profile.

    no_calibration swaps each reference for (0, 1), scoring raw
    magnitudes. no_invariants drops the statistic set to plain
    per-signal means in a single group, also scored raw.
    """
    if len(run) < horizon:
        raise RunTooShort(f"run {run.run_id} has {len(run)} steps, horizon is {horizon}")

    if no_invariants:
        values = {}
        for sig in TELEMETRY_FIELDS:
            xs = run.signal(sig)[:horizon]
            values[f"raw_{sig}"] = abs(float(np.mean(xs)))
        return DeviationVector(values=values, groups={RAW_GROUP: tuple(values.keys())})

    stats = compute_statistics(run, horizon)
    values = {}
    for name in STAT_NAMES:
        if no_calibration:
            values[name] = abs(stats[name])
        else:
            if profile is None:
                raise ValueError("a profile is required unless no_calibration is set")
            loc, scale = profile.stats[name]
            values[name] = abs(stats[name] - loc) / scale
    return DeviationVector(values=values, groups=dict(INVARIANT_GROUPS))


def score(deviations: DeviationVector) -> SeverityScore:
    """Severity: the mean over invariants of each group's largest deviation."""
    phi = {
        group: max(deviations.values[name] for name in names)
        for group, names in deviations.groups.items()
    }
    sev = float(np.mean(list(phi.values())))
    return SeverityScore(severity=sev, phi=phi)


def severity_of(run: TrainingRun, profile: Optional[NormalProfile], horizon: int,
                no_calibration: bool = False, no_invariants: bool = False) -> float:
    dev = extract_deviations(run, profile, horizon,
                             no_calibration=no_calibration,
                             no_invariants=no_invariants)
    return score(dev).severity


def compute_threshold(
    profile: Optional[NormalProfile],
    normal_runs: Sequence[TrainingRun],
    k: float = 2.0,
    horizon: Optional[int] = None,
    no_calibration: bool = False,
    no_invariants: bool = False,
) -> float:
    """Threshold tau = mean + k * std of held-out healthy severities.

    Scoring a run against a profile fit on that same run understates how
    a fresh healthy run scores, so each severity here is leave-one-out:
    the run is scored against a profile fit on the remaining runs. The
    std is the population std, floored so identical severities still
    give a usable margin.
    """
    if not normal_runs:
        raise TooFewRuns("threshold needs at least one healthy run")
    h = horizon if horizon is not None else (profile.horizon if profile else None)
    if h is None:
        raise ValueError("horizon required when no profile is given")
    uncalibrated = no_calibration or no_invariants
    if not uncalibrated and len(normal_runs) >= 4:
        sevs = []
        for i, run in enumerate(normal_runs):
            rest = [r for j, r in enumerate(normal_runs) if j != i]
            sevs.append(severity_of(run, calibrate(rest, h), h))
    else:
        # Raw-magnitude scoring never touches the profile, so held-out
        # and in-sample severities coincide.
        sevs = [
            severity_of(run, profile, h, no_calibration=no_calibration,
                        no_invariants=no_invariants)
            for run in normal_runs
        ]
    return float(np.mean(sevs)) + k * max(pop_std(sevs), SCALE_FLOOR)


@dataclass(frozen=True)
class AnomalyDecision:
    is_anomalous: bool
    severity: SeverityScore
    threshold: float
    deviations: DeviationVector


def detect(
    run: TrainingRun,
    profile: Optional[NormalProfile],
    tau: float,
    horizon: int,
    no_calibration: bool = False,
    no_invariants: bool = False,
) -> AnomalyDecision:
    """Score one run and compare against the threshold."""
    dev = extract_deviations(run, profile, horizon,
                             no_calibration=no_calibration,
                             no_invariants=no_invariants)
    sev = score(dev)
    return AnomalyDecision(
        is_anomalous=sev.severity > tau,
        severity=sev,
        threshold=tau,
        deviations=dev,
    )
