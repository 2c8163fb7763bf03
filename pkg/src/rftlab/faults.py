"""Fault injection: schedules, per-type transforms, and labeled runs.

A fault is applied as a per-step transform of the healthy signals with a
per-step strength from the schedule. Strength zero leaves a step's
record bit-identical to the healthy run, which makes pre-onset segments
exact healthy prefixes.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, replace
from enum import Enum
from typing import Optional

from . import rng
from .records import InjectionMeta, TELEMETRY_FIELDS, TrainingRun
from .simulate import (
    SimConfig,
    assemble_records,
    entropy_law,
    healthy_arrays,
)
from .taxonomy import DifficultyRegime, FaultLabel, FaultType

# Stream ids used by injection; signal noise owns ids 0..10.
STREAM_SCHEDULE_DRAW = 100
STREAM_SCHEDULE_GATE = 101
STREAM_TE2_GATE = 102
STREAM_TE2_LENGTH = 103
STREAM_TE2_REWARD = 104
STREAM_TE2_KL = 105

# Corrupted-record draw ranges for TE-2 (wide relative to healthy bands).
TE2_REWARD_RANGE = (-1.0, 2.0)
TE2_KL_RANGE = (0.0, 0.5)

# Hard-regime schedule draw ranges.
HARD_STRENGTH_RANGE = (0.25, 0.5)
HARD_ONSET_RANGE = (5, 20)
HARD_RAMP_RANGE = (5, 15)
HARD_DUTY_RANGE = (0.3, 0.7)
EASY_RAMP_STEPS = 10


class InvalidSpec(ValueError):
    pass


class UnknownFaultType(ValueError):
    pass


class InjectionMode(str, Enum):
    ALWAYS_ON = "AlwaysOn"
    INTERMITTENT = "Intermittent"
    RAMP = "Ramp"
    DELAYED = "Delayed"


EASY_MODES = (InjectionMode.ALWAYS_ON, InjectionMode.RAMP)
HARD_MODES = (InjectionMode.INTERMITTENT, InjectionMode.RAMP, InjectionMode.DELAYED)


@dataclass(frozen=True)
class FaultSpec:
    """What to inject: type, regime, strength, optional schedule overrides."""

    fault_type: FaultType
    regime: DifficultyRegime
    base_strength: float
    mode: Optional[InjectionMode] = None
    onset_step: Optional[int] = None
    duty_cycle: Optional[float] = None
    ramp_steps: Optional[int] = None

    def __post_init__(self) -> None:
        if self.fault_type is FaultType.NORMAL:
            raise InvalidSpec("cannot inject the NORMAL class")
        if self.regime is DifficultyRegime.EASY:
            if self.base_strength != 1.0:
                raise InvalidSpec("easy faults use base_strength 1.0")
        else:
            lo, hi = HARD_STRENGTH_RANGE
            if not lo <= self.base_strength <= hi:
                raise InvalidSpec(
                    f"hard faults use base_strength in [{lo}, {hi}], "
                    f"got {self.base_strength}"
                )
        if self.onset_step is not None and self.onset_step < 0:
            raise InvalidSpec("onset_step must be >= 0")
        if self.duty_cycle is not None and not 0.0 < self.duty_cycle <= 1.0:
            raise InvalidSpec("duty_cycle must lie in (0, 1]")
        if self.ramp_steps is not None and self.ramp_steps < 1:
            raise InvalidSpec("ramp_steps must be >= 1")


@dataclass(frozen=True)
class InjectionSchedule:
    """Resolved per-step strengths for one run."""

    mode: InjectionMode
    base_strength: float
    onset_step: int
    per_step_strength: tuple[float, ...]
    duty_cycle: Optional[float] = None
    ramp_steps: Optional[int] = None

    def active_steps(self) -> list[int]:
        return [t for t, u in enumerate(self.per_step_strength) if u > 0.0]

    def to_meta(self) -> InjectionMeta:
        return InjectionMeta(
            mode=self.mode.value,
            base_strength=self.base_strength,
            onset_step=self.onset_step,
            per_step_strength=self.per_step_strength,
            duty_cycle=self.duty_cycle,
            ramp_steps=self.ramp_steps,
        )


def build_schedule(spec: FaultSpec, steps: int, seed: int) -> InjectionSchedule:
    """Resolve a spec into per-step strengths.

    Unset schedule parameters are drawn deterministically from the seed:
    easy runs start at step 0 and are AlwaysOn or Ramp, hard runs draw
    mode, onset, and duty/ramp parameters from their committed ranges.
    """
    draw = rng.RngStream(seed, STREAM_SCHEDULE_DRAW)
    easy = spec.regime is DifficultyRegime.EASY

    mode = spec.mode
    if mode is None:
        mode = draw.choice(EASY_MODES if easy else HARD_MODES)
    onset = spec.onset_step
    if onset is None:
        onset = 0 if easy else draw.randint(*HARD_ONSET_RANGE)
    duty = spec.duty_cycle
    if duty is None and mode is InjectionMode.INTERMITTENT:
        duty = draw.uniform(*HARD_DUTY_RANGE)
    ramp = spec.ramp_steps
    if ramp is None and mode is InjectionMode.RAMP:
        ramp = EASY_RAMP_STEPS if easy else draw.randint(*HARD_RAMP_RANGE)

    if onset >= steps:
        raise InvalidSpec(f"onset_step {onset} is past the end of a {steps}-step run")

    base = spec.base_strength
    strengths = []
    for t in range(steps):
        if t < onset:
            strengths.append(0.0)
        elif mode in (InjectionMode.ALWAYS_ON, InjectionMode.DELAYED):
            strengths.append(base)
        elif mode is InjectionMode.RAMP:
            strengths.append(base * min(1.0, (t - onset) / ramp))
        else:
            gate = rng.uniform(seed, STREAM_SCHEDULE_GATE, t)
            strengths.append(base if gate < duty else 0.0)

    return InjectionSchedule(
        mode=mode,
        base_strength=base,
        onset_step=onset,
        per_step_strength=tuple(strengths),
        duty_cycle=duty,
        ramp_steps=ramp,
    )


# ---------------------------------------------------------------------------
# per-type transforms


def _apply_fault(
    values: dict[str, list[float]],
    noise: dict[str, list[float]],
    config: SimConfig,
    seed: int,
    fault_type: FaultType,
    schedule: InjectionSchedule,
) -> dict[str, list[float]]:
    """Transform healthy arrays in place of the healthy dynamics.

    values/noise are the healthy arrays; the returned dict is a new set
    of arrays with the fault applied at every step of positive strength.
    """
    out = {sig: list(col) for sig, col in values.items()}
    h = values
    onset = schedule.onset_step
    steps = config.steps

    for t, u in enumerate(schedule.per_step_strength):
        if u <= 0.0:
            continue

        if fault_type is FaultType.RF_1:
            out["reward_mean"][t] = h["reward_mean"][t] * (1.0 + 3.0 * u)
            out["return_mean"][t] = out["reward_mean"][t] + noise["return_mean"][t]
        elif fault_type is FaultType.RF_2:
            out["reward_mean"][t] = h["reward_mean"][t] * (1.0 - u)
        elif fault_type is FaultType.RF_3:
            out["reward_mean"][t] = h["reward_mean"][t] + 0.5 * u
            out["entropy_mean"][t] = h["entropy_mean"][t] * (1.0 - 0.6 * u)
        elif fault_type is FaultType.PG_1:
            out["response_length_mean"][t] = h["response_length_mean"][t] * (1.0 - 0.95 * u)
            out["reward_mean"][t] = h["reward_mean"][t] * (1.0 - 0.9 * u)
            out["policy_loss"][t] = h["policy_loss"][t] * (1.0 - 0.8 * u)
            out["kl_mean"][t] = h["kl_mean"][t] * (1.0 - 0.8 * u)
        elif fault_type is FaultType.PG_2:
            out["entropy_mean"][t] = h["entropy_mean"][t] * (1.0 - 0.7 * u)
            out["response_length_mean"][t] = h["response_length_mean"][t] * (1.0 + 0.5 * u)
            out["reward_mean"][t] = h["reward_mean"][t] * (1.0 - 0.6 * u)
        elif fault_type is FaultType.PG_3S:
            out["response_length_mean"][t] = h["response_length_mean"][t] * (1.0 - 0.7 * u)
        elif fault_type is FaultType.PG_3L:
            out["response_length_mean"][t] = h["response_length_mean"][t] * (1.0 + 1.5 * u)
        elif fault_type is FaultType.OD_1:
            out["kl_mean"][t] = h["kl_mean"][t] * (1.0 + 20.0 * u * (t - onset) / steps)
            out["response_length_mean"][t] = (
                h["response_length_mean"][t] + 2.0 * u * noise["response_length_mean"][t]
            )
        elif fault_type is FaultType.OD_2:
            for sig in TELEMETRY_FIELDS:
                frozen = h[sig][onset] + 0.1 * noise[sig][t]
                out[sig][t] = (1.0 - u) * h[sig][t] + u * frozen
            out["policy_loss"][t] *= 1.0 - u
        elif fault_type is FaultType.OD_3:
            ts = config.entropy_timescale * (1.0 - 0.8 * u)
            floor = config.entropy_floor * (1.0 - 0.5 * u)
            out["entropy_mean"][t] = (
                entropy_law(config, t, timescale=ts, floor=floor)
                + noise["entropy_mean"][t]
            )
        elif fault_type is FaultType.CA_1:
            out["value_mean"][t] = h["value_mean"][t] + 1.5 * u
        elif fault_type is FaultType.CA_2:
            out["advantage_std"][t] = h["advantage_std"][t] * (1.0 + 8.0 * u)
            out["advantage_mean"][t] = noise["advantage_mean"][t] * (1.0 + 4.0 * u)
        elif fault_type is FaultType.CA_3:
            lag = math.ceil(5.0 * u)
            out["reward_mean"][t] = h["reward_mean"][max(t - lag, 0)]
        elif fault_type is FaultType.TE_1:
            out["tool_error_rate"][t] = h["tool_error_rate"][t] + 0.9 * u
            out["kl_mean"][t] = h["kl_mean"][t] + 3.0 * u * noise["kl_mean"][t]
            out["entropy_mean"][t] = h["entropy_mean"][t] + 3.0 * u * noise["entropy_mean"][t]
        elif fault_type is FaultType.TE_2:
            if rng.uniform(seed, STREAM_TE2_GATE, t) < u:
                out["response_length_mean"][t] = (
                    3.0 * config.length_target * rng.uniform(seed, STREAM_TE2_LENGTH, t)
                )
                lo, hi = TE2_REWARD_RANGE
                out["reward_mean"][t] = lo + (hi - lo) * rng.uniform(seed, STREAM_TE2_REWARD, t)
                lo, hi = TE2_KL_RANGE
                out["kl_mean"][t] = lo + (hi - lo) * rng.uniform(seed, STREAM_TE2_KL, t)
        elif fault_type is FaultType.TE_3:
            out["truncation_rate"][t] = h["truncation_rate"][t] + 0.8 * u
            out["response_length_mean"][t] = h["response_length_mean"][t] * (1.0 - 0.5 * u)
            out["return_mean"][t] = (
                h["reward_mean"][t] + (1.0 + 3.0 * u) * noise["return_mean"][t]
            )
        else:
            raise UnknownFaultType(str(fault_type))

    return out


def generate_fault_run(
    config: SimConfig,
    spec: FaultSpec,
    schedule: InjectionSchedule,
    seed: int,
    run_id: str | None = None,
    strength_scale: float = 1.0,
    noise_mults: dict[str, float] | None = None,
) -> TrainingRun:
    """Generate a labeled fault run from healthy dynamics plus transform.

    strength_scale attenuates the schedule uniformly (floored at zero)
    and noise_mults widens selected signals' noise; both exist for the
    mitigation model, which replays runs under adjusted conditions.
    """
    if len(schedule.per_step_strength) != config.steps:
        raise InvalidSpec(
            f"schedule covers {len(schedule.per_step_strength)} steps, "
            f"config has {config.steps}"
        )
    if strength_scale != 1.0:
        schedule = replace(
            schedule,
            per_step_strength=tuple(
                max(0.0, u * strength_scale) for u in schedule.per_step_strength
            ),
        )
    values, noise = healthy_arrays(config, seed, noise_mults=noise_mults)
    transformed = _apply_fault(values, noise, config, seed, spec.fault_type, schedule)
    return TrainingRun(
        run_id=run_id if run_id is not None else f"{spec.fault_type.value}-{seed:08x}",
        label=FaultLabel.of(spec.fault_type),
        regime=spec.regime,
        seed=seed,
        steps=assemble_records(transformed, config.steps),
        injection_meta=schedule.to_meta(),
    )


def inject(config: SimConfig, spec: FaultSpec, schedule: InjectionSchedule,
           seed: int, run_id: str | None = None) -> TrainingRun:
    """Apply a fault schedule to the healthy run for this seed."""
    return generate_fault_run(config, spec, schedule, seed, run_id=run_id)
