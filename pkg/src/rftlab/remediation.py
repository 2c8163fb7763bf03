"""Closed-loop remediation: plan a config change, replay, re-score.

The mitigation model attenuates a fault's effective strength by how far
each efficacious knob moved, normalized by the knob's range. Knob moves
with no efficacy against the diagnosed fault do not attenuate anything;
they instead widen the noise of one designated signal, modeling the side
effects of blind tuning.
"""
from __future__ import annotations

import statistics
from dataclasses import dataclass, fields, replace
from typing import Optional, Sequence

from .detection import AnomalyDecision, NormalProfile, severity_of
from .faults import FaultSpec, InjectionMode, InjectionSchedule, generate_fault_run
from .records import TrainingRun
from .rng import RngStream
from .simulate import healthy_defaults
from .taxonomy import DifficultyRegime, FaultLabel, FaultType

EFFICACY = 0.8
SIDE_EFFECT_GAIN = 0.5
MAX_KNOBS_PER_ACTION = 3

# Continuous knob bounds (lo, hi).
FLOAT_KNOBS: dict[str, tuple[float, float]] = {
    "reward_clip": (0.5, 5.0),
    "kl_coef": (0.0, 1.0),
    "learning_rate_scale": (0.1, 10.0),
    "entropy_bonus": (0.0, 0.5),
    "max_new_tokens_scale": (0.25, 4.0),
    "min_new_tokens_scale": (0.25, 4.0),
    "repetition_penalty": (1.0, 2.0),
    "value_loss_coef": (0.0, 2.0),
    "gae_lambda": (0.8, 1.0),
}
# Discrete knobs and their admissible values.
DISCRETE_KNOBS: dict[str, tuple[int, ...]] = {
    "advantage_norm": (0, 1),
    "tool_retry": (0, 1, 2, 3),
    "episode_guard": (0, 1),
}
KNOB_NAMES: tuple[str, ...] = tuple(FLOAT_KNOBS) + tuple(DISCRETE_KNOBS)

# Signal whose noise widens when a knob is moved without efficacy.
SIDE_EFFECT_SIGNAL: dict[str, str] = {
    "reward_clip": "reward_mean",
    "kl_coef": "kl_mean",
    "learning_rate_scale": "policy_loss",
    "entropy_bonus": "entropy_mean",
    "max_new_tokens_scale": "response_length_mean",
    "min_new_tokens_scale": "response_length_mean",
    "repetition_penalty": "entropy_mean",
    "value_loss_coef": "value_mean",
    "advantage_norm": "advantage_mean",
    "gae_lambda": "return_mean",
    "tool_retry": "tool_error_rate",
    "episode_guard": "truncation_rate",
}

# Reference remedies per fault type.
REMEDIES: dict[FaultType, dict[str, float | int]] = {
    FaultType.RF_1: {"reward_clip": 1.0},
    FaultType.RF_2: {"reward_clip": 1.0, "learning_rate_scale": 0.5},
    FaultType.RF_3: {"reward_clip": 1.0, "entropy_bonus": 0.1},
    FaultType.PG_1: {"min_new_tokens_scale": 2.0},
    FaultType.PG_2: {"repetition_penalty": 1.3, "entropy_bonus": 0.05},
    FaultType.PG_3S: {"min_new_tokens_scale": 2.0},
    FaultType.PG_3L: {"max_new_tokens_scale": 0.5},
    FaultType.OD_1: {"kl_coef": 0.5, "learning_rate_scale": 0.5},
    FaultType.OD_2: {"learning_rate_scale": 2.0},
    FaultType.OD_3: {"entropy_bonus": 0.2},
    FaultType.CA_1: {"value_loss_coef": 1.5},
    FaultType.CA_2: {"advantage_norm": 1},
    FaultType.CA_3: {"gae_lambda": 0.9},
    FaultType.TE_1: {"tool_retry": 2},
    FaultType.TE_2: {"episode_guard": 1},
    FaultType.TE_3: {"episode_guard": 1},
}


class UnknownKnob(ValueError):
    pass


class NormalLabelRejected(ValueError):
    pass


class MissingInjectionMeta(ValueError):
    pass


class EmptyOutcomeSet(ValueError):
    pass


class ZeroOriginalSeverity(ValueError):
    pass


def knob_range(name: str) -> float:
    if name in FLOAT_KNOBS:
        lo, hi = FLOAT_KNOBS[name]
        return hi - lo
    if name in DISCRETE_KNOBS:
        vals = DISCRETE_KNOBS[name]
        return float(max(vals) - min(vals))
    raise UnknownKnob(name)


def clamp_knob(name: str, value) -> float | int:
    """Pull a proposed value into the knob's admissible set."""
    if name in FLOAT_KNOBS:
        lo, hi = FLOAT_KNOBS[name]
        return min(max(float(value), lo), hi)
    if name in DISCRETE_KNOBS:
        vals = DISCRETE_KNOBS[name]
        return min(vals, key=lambda v: (abs(v - float(value)), v))
    raise UnknownKnob(name)


@dataclass(frozen=True)
class RFTConfig:
    """Training configuration knobs; defaults are the baseline setting."""

    reward_clip: float = 2.0
    kl_coef: float = 0.1
    learning_rate_scale: float = 1.0
    entropy_bonus: float = 0.0
    max_new_tokens_scale: float = 1.0
    min_new_tokens_scale: float = 1.0
    repetition_penalty: float = 1.0
    value_loss_coef: float = 0.5
    advantage_norm: int = 0
    gae_lambda: float = 0.95
    tool_retry: int = 0
    episode_guard: int = 0

    def __post_init__(self) -> None:
        for name, (lo, hi) in FLOAT_KNOBS.items():
            v = getattr(self, name)
            if not lo <= v <= hi:
                raise ValueError(f"{name}={v} outside [{lo}, {hi}]")
        for name, vals in DISCRETE_KNOBS.items():
            v = getattr(self, name)
            if v not in vals:
                raise ValueError(f"{name}={v} not in {vals}")

    @classmethod
    def baseline(cls) -> "RFTConfig":
        return cls()

    def to_dict(self) -> dict:
        return {f.name: getattr(self, f.name) for f in fields(self)}


@dataclass(frozen=True)
class InterventionAction:
    """A proposed config change: at most three knob moves plus rationale."""

    changes: dict[str, float | int]
    rationale: str
    fallback: bool = False

    def __post_init__(self) -> None:
        if len(self.changes) > MAX_KNOBS_PER_ACTION:
            raise ValueError(
                f"actions may touch at most {MAX_KNOBS_PER_ACTION} knobs, "
                f"got {len(self.changes)}"
            )
        for name in self.changes:
            if name not in KNOB_NAMES:
                raise UnknownKnob(name)


@dataclass(frozen=True)
class InterventionState:
    """What the planner sees: diagnosis, severity, and current config."""

    label: FaultLabel
    severity: float
    phi: dict[str, float]
    top_deviations: tuple[tuple[str, float], ...]
    config: RFTConfig
    regime: Optional[DifficultyRegime]

    def to_dict(self) -> dict:
        return {
            "fault_family": self.label.family.value,
            "fault_type": self.label.fault_type.value,
            "severity": self.severity,
            "phi": dict(self.phi),
            "top_deviations": [
                {"statistic": name, "z": z} for name, z in self.top_deviations
            ],
            "config": self.config.to_dict(),
            "regime": None if self.regime is None else self.regime.value,
        }


def build_state(
    decision: AnomalyDecision,
    label: FaultLabel,
    config: RFTConfig,
    regime: Optional[DifficultyRegime] = None,
) -> InterventionState:
    """Assemble planner input from a detection decision and a diagnosis."""
    if label.is_normal:
        raise NormalLabelRejected("remediation requires a fault label")
    ranked = sorted(
        decision.deviations.values.items(), key=lambda kv: (-kv[1], kv[0])
    )
    return InterventionState(
        label=label,
        severity=decision.severity.severity,
        phi=dict(decision.severity.phi),
        top_deviations=tuple(ranked[:3]),
        config=config,
        regime=regime,
    )


def plan_action_rule(state: InterventionState) -> InterventionAction:
    """Reference remedy for the diagnosed fault type."""
    remedy = REMEDIES[state.label.fault_type]
    return InterventionAction(
        changes=dict(remedy),
        rationale=f"reference remedy for {state.label.fault_type.value}",
    )


def plan_action_random(state: InterventionState, seed: int) -> InterventionAction:
    """Seeded random knob moves; the do-something-blind baseline."""
    stream = RngStream(seed, 0)
    names = list(KNOB_NAMES)
    stream.shuffle(names)
    chosen = names[: stream.randint(1, MAX_KNOBS_PER_ACTION)]
    changes: dict[str, float | int] = {}
    for name in sorted(chosen):
        if name in FLOAT_KNOBS:
            lo, hi = FLOAT_KNOBS[name]
            changes[name] = stream.uniform(lo, hi)
        else:
            changes[name] = stream.choice(DISCRETE_KNOBS[name])
    return InterventionAction(changes=changes, rationale="random knob exploration")


def execute(config: RFTConfig, action: InterventionAction) -> RFTConfig:
    """Apply an action to a config, validating every knob."""
    updates = {}
    for name, value in action.changes.items():
        if name not in KNOB_NAMES:
            raise UnknownKnob(name)
        updates[name] = int(value) if name in DISCRETE_KNOBS else float(value)
    return replace(config, **updates)


def attenuation(
    fault_type: FaultType, old: RFTConfig, new: RFTConfig
) -> tuple[float, dict[str, float]]:
    """Effective-strength scale and side-effect noise multipliers.

    Each efficacious knob move multiplies strength by
    (1 - efficacy * normalized_delta); each non-efficacious move widens
    its designated signal's noise instead.
    """
    remedy_knobs = set(REMEDIES[fault_type].keys())
    scale = 1.0
    noise_mults: dict[str, float] = {}
    for name in KNOB_NAMES:
        delta = abs(float(getattr(new, name)) - float(getattr(old, name)))
        if delta == 0.0:
            continue
        nd = min(delta / knob_range(name), 1.0)
        if name in remedy_knobs:
            scale *= 1.0 - EFFICACY * nd
        else:
            sig = SIDE_EFFECT_SIGNAL[name]
            noise_mults[sig] = noise_mults.get(sig, 1.0) * (1.0 + SIDE_EFFECT_GAIN * nd)
    return max(scale, 0.0), noise_mults


@dataclass(frozen=True)
class RemediationOutcome:
    run_id: str
    fault_type: FaultType
    original_severity: float
    post_severity: float
    mitigated: bool
    below_threshold: bool
    delta_pct: float


def revalidate(
    original_run: TrainingRun,
    updated: RFTConfig,
    profile: NormalProfile,
    tau: float,
    horizon: int,
    seed: Optional[int] = None,
) -> RemediationOutcome:
    """Replay the run under the updated config and re-score severity.

    The replay keeps the fault spec and seed; the config delta against
    the baseline drives attenuation and side effects. With no config
    delta the replay is bit-identical, so severity change is exactly 0.
    """
    if original_run.injection_meta is None or original_run.label.is_normal:
        raise MissingInjectionMeta(
            f"run {original_run.run_id} carries no injection metadata"
        )
    meta = original_run.injection_meta
    fault_type = original_run.label.fault_type
    scale, noise_mults = attenuation(fault_type, RFTConfig.baseline(), updated)

    sim_config = replace(healthy_defaults(), steps=len(original_run))
    spec = FaultSpec(
        fault_type=fault_type,
        regime=original_run.regime,
        base_strength=meta.base_strength,
        mode=InjectionMode(meta.mode),
        onset_step=meta.onset_step,
        duty_cycle=meta.duty_cycle,
        ramp_steps=meta.ramp_steps,
    )
    schedule = InjectionSchedule(
        mode=InjectionMode(meta.mode),
        base_strength=meta.base_strength,
        onset_step=meta.onset_step,
        per_step_strength=meta.per_step_strength,
        duty_cycle=meta.duty_cycle,
        ramp_steps=meta.ramp_steps,
    )
    replay_seed = original_run.seed if seed is None else seed
    post_run = generate_fault_run(
        sim_config,
        spec,
        schedule,
        replay_seed,
        run_id=f"{original_run.run_id}-post",
        strength_scale=scale,
        noise_mults=noise_mults or None,
    )

    s_orig = severity_of(original_run, profile, horizon)
    s_post = severity_of(post_run, profile, horizon)
    if s_orig == 0.0:
        raise ZeroOriginalSeverity(original_run.run_id)
    return RemediationOutcome(
        run_id=original_run.run_id,
        fault_type=fault_type,
        original_severity=s_orig,
        post_severity=s_post,
        mitigated=s_post < s_orig,
        below_threshold=s_post <= tau,
        delta_pct=(s_orig - s_post) / s_orig * 100.0,
    )


def mitigation_metrics(outcomes: Sequence[RemediationOutcome]) -> dict[str, float]:
    """Mitigation rate and median severity change over an outcome set."""
    if not outcomes:
        raise EmptyOutcomeSet("no remediation outcomes")
    mr = sum(1 for o in outcomes if o.mitigated) / len(outcomes)
    msc = float(statistics.median(o.delta_pct for o in outcomes))
    return {"MR": mr, "MSC": msc}
