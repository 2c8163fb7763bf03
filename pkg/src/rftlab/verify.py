"""Post-injection verification that a fault's signature materialized.

Each fault type has one designated rule evaluated over the run's active
steps against the calibrated profile. Easy runs are held to a z bound
of 3; hard runs, whose signatures are fainter by construction, to 1.5.
Rules with several components report the weakest one.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .detection import NormalProfile
from .faults import FaultSpec, UnknownFaultType
from .records import TrainingRun
from .taxonomy import DifficultyRegime, FaultType

EASY_Z_BOUND = 3.0
HARD_Z_BOUND = 1.5

# Ratio bounds for the frozen-dynamics rule (step deltas shrink).
OD2_RATIO_BOUND = {DifficultyRegime.EASY: 0.25, DifficultyRegime.HARD: 0.85}
# Outlier-fraction bounds for corrupted-record bursts.
TE2_FRACTION_BOUND = {DifficultyRegime.EASY: 0.10, DifficultyRegime.HARD: 0.05}
TE2_OUTLIER_Z = 4.0


@dataclass(frozen=True)
class VerificationResult:
    passed: bool
    statistic_name: str
    statistic_value: float
    bound: float
    direction: str  # "ge" or "le"


def _active_steps(run: TrainingRun) -> list[int]:
    if run.injection_meta is None:
        return list(range(len(run)))
    return [t for t, u in enumerate(run.injection_meta.per_step_strength) if u > 0.0]


def _step_z(profile: NormalProfile, sig: str, t: int, value: float) -> float:
    refs = profile.signal_step[sig]
    loc, scale = refs[min(t, len(refs) - 1)]
    return (value - loc) / scale


def _mean_z(profile: NormalProfile, run: TrainingRun, sig: str, active: list[int]) -> float:
    xs = run.signal(sig)
    return float(np.mean([_step_z(profile, sig, t, xs[t]) for t in active]))


def _max_z(profile: NormalProfile, run: TrainingRun, sig: str, active: list[int]) -> float:
    xs = run.signal(sig)
    return float(np.max([_step_z(profile, sig, t, xs[t]) for t in active]))


def _delta_ratio(profile: NormalProfile, run: TrainingRun, active: list[int]) -> float:
    """Mean over reward/entropy/length of the run's step deltas between
    consecutive fully-injected steps, relative to the profile's typical
    deltas. Ramp-in steps are excluded: the freeze shows only where the
    injected strength has reached its plateau."""
    meta = run.injection_meta
    if meta is not None:
        u = meta.per_step_strength
        plateau = 0.9 * max(u)
        steps = [t for t in active if u[t] >= plateau]
    else:
        steps = active
    pairs = [(a, b) for a, b in zip(steps, steps[1:]) if b == a + 1]
    if not pairs:
        return float("inf")
    ratios = []
    for sig in ("reward_mean", "entropy_mean", "response_length_mean"):
        xs = run.signal(sig)
        run_delta = float(np.mean([abs(xs[b] - xs[a]) for a, b in pairs]))
        ratios.append(run_delta / max(profile.signal_delta[sig], 1e-12))
    return float(np.mean(ratios))


def _gap_z(profile: NormalProfile, run: TrainingRun, a: str, b: str,
           stat_name: str, active: list[int], aux: bool) -> float:
    xa = run.signal(a)
    xb = run.signal(b)
    gap = float(np.mean([abs(xa[t] - xb[t]) for t in active]))
    table = profile.aux_stats if aux else profile.stats
    loc, scale = table[stat_name]
    return (gap - loc) / scale


def verify(run: TrainingRun, spec: FaultSpec, profile: NormalProfile) -> VerificationResult:
    """Check the run against its fault's designated rule."""
    if spec.fault_type is FaultType.NORMAL:
        raise UnknownFaultType("NORMAL has no verification rule")

    easy = spec.regime is DifficultyRegime.EASY
    b = EASY_Z_BOUND if easy else HARD_Z_BOUND
    active = _active_steps(run)
    if not active:
        return VerificationResult(False, "no_active_steps", 0.0, 0.0, "ge")

    ft = spec.fault_type
    # Each component: (name, value, direction, bound).
    if ft is FaultType.RF_1:
        comps = [("reward_z_mean", _mean_z(profile, run, "reward_mean", active), "ge", b)]
    elif ft is FaultType.RF_2:
        comps = [("reward_z_mean", _mean_z(profile, run, "reward_mean", active), "le", -b)]
    elif ft is FaultType.RF_3:
        comps = [
            ("reward_z_mean", _mean_z(profile, run, "reward_mean", active), "ge", b),
            ("entropy_z_mean", _mean_z(profile, run, "entropy_mean", active), "le", -b),
        ]
    elif ft is FaultType.PG_1:
        comps = [
            ("length_z_mean", _mean_z(profile, run, "response_length_mean", active), "le", -b),
            ("reward_z_mean", _mean_z(profile, run, "reward_mean", active), "le", -b * 2.0 / 3.0),
        ]
    elif ft is FaultType.PG_2:
        comps = [("entropy_z_mean", _mean_z(profile, run, "entropy_mean", active), "le", -b)]
    elif ft is FaultType.PG_3S:
        comps = [("length_z_mean", _mean_z(profile, run, "response_length_mean", active), "le", -b)]
    elif ft is FaultType.PG_3L:
        comps = [("length_z_mean", _mean_z(profile, run, "response_length_mean", active), "ge", b)]
    elif ft is FaultType.OD_1:
        # A lone max-z spikes on healthy noise; require elevated mean too.
        comps = [
            ("kl_z_max", _max_z(profile, run, "kl_mean", active), "ge", b),
            ("kl_z_mean", _mean_z(profile, run, "kl_mean", active), "ge", b / 2.0),
        ]
    elif ft is FaultType.OD_2:
        bound = OD2_RATIO_BOUND[spec.regime]
        comps = [("step_delta_ratio", _delta_ratio(profile, run, active), "le", bound)]
    elif ft is FaultType.OD_3:
        mid = active[len(active) // 2]
        value = _step_z(profile, "entropy_mean", mid, run.signal("entropy_mean")[mid])
        comps = [("entropy_z_mid", value, "le", -b)]
    elif ft is FaultType.CA_1:
        value = _gap_z(profile, run, "value_mean", "return_mean",
                       "value_return_gap", active, aux=False)
        comps = [
            ("value_return_gap_z", value, "ge", b),
            ("value_z_mean", _mean_z(profile, run, "value_mean", active), "ge", b / 2.0),
        ]
    elif ft is FaultType.CA_2:
        comps = [("advantage_std_z_mean", _mean_z(profile, run, "advantage_std", active), "ge", b)]
    elif ft is FaultType.CA_3:
        value = _gap_z(profile, run, "reward_mean", "return_mean",
                       "reward_return_gap", active, aux=True)
        comps = [("reward_return_gap_z", value, "ge", b)]
    elif ft is FaultType.TE_1:
        comps = [("tool_error_z_mean", _mean_z(profile, run, "tool_error_rate", active), "ge", b)]
    elif ft is FaultType.TE_2:
        xs = run.signal("response_length_mean")
        outliers = [
            t for t in active
            if abs(_step_z(profile, "response_length_mean", t, xs[t])) > TE2_OUTLIER_Z
        ]
        frac = len(outliers) / len(active)
        comps = [("length_outlier_fraction", frac, "ge", TE2_FRACTION_BOUND[spec.regime])]
    elif ft is FaultType.TE_3:
        comps = [("truncation_z_mean", _mean_z(profile, run, "truncation_rate", active), "ge", b)]
    else:
        raise UnknownFaultType(str(ft))

    # Margin is positive exactly when a component passes; report the
    # weakest component so compound rules stay a single statistic.
    def margin(comp):
        _, value, direction, bound = comp
        return value - bound if direction == "ge" else bound - value

    weakest = min(comps, key=margin)
    name, value, direction, bound = weakest
    return VerificationResult(
        passed=margin(weakest) >= 0.0,
        statistic_name=name,
        statistic_value=value,
        bound=bound,
        direction=direction,
    )


def rule_salience(result: VerificationResult) -> float:
    """Signed distance in the rule's pass direction; grows as the fault's
    signature strengthens."""
    if result.direction == "ge":
        return result.statistic_value
    return -result.statistic_value
