"""Run and step record types for training-dynamics telemetry."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

from .taxonomy import DifficultyRegime, FaultLabel

# Canonical field order of a step record. This order is also the signal
# order used by feature extraction, so it must never be reshuffled.
STEP_FIELDS: tuple[str, ...] = (
    "step",
    "reward_mean",
    "kl_mean",
    "entropy_mean",
    "return_mean",
    "value_mean",
    "advantage_mean",
    "advantage_std",
    "response_length_mean",
    "policy_loss",
    "tool_error_rate",
    "truncation_rate",
)

# The telemetry signals proper (everything but the step index).
TELEMETRY_FIELDS: tuple[str, ...] = STEP_FIELDS[1:]


class InvalidRecord(ValueError):
    pass


class InvalidRun(ValueError):
    pass


@dataclass(frozen=True)
class TrainStepRecord:
    """One training step's aggregated telemetry."""

    step: int
    reward_mean: float
    kl_mean: float
    entropy_mean: float
    return_mean: float
    value_mean: float
    advantage_mean: float
    advantage_std: float
    response_length_mean: float
    policy_loss: float
    tool_error_rate: float
    truncation_rate: float

    def __post_init__(self) -> None:
        if not isinstance(self.step, int) or self.step < 0:
            raise InvalidRecord(f"step must be a non-negative integer, got {self.step!r}")
        for name in TELEMETRY_FIELDS:
            v = getattr(self, name)
            if not isinstance(v, (int, float)) or isinstance(v, bool) or not math.isfinite(v):
                raise InvalidRecord(f"{name} must be a finite number, got {v!r}")
        if self.kl_mean < 0:
            raise InvalidRecord(f"kl_mean must be >= 0, got {self.kl_mean}")
        if self.entropy_mean < 0:
            raise InvalidRecord(f"entropy_mean must be >= 0, got {self.entropy_mean}")
        if self.advantage_std < 0:
            raise InvalidRecord(f"advantage_std must be >= 0, got {self.advantage_std}")
        if self.response_length_mean < 0:
            raise InvalidRecord(
                f"response_length_mean must be >= 0, got {self.response_length_mean}"
            )
        for name in ("tool_error_rate", "truncation_rate"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise InvalidRecord(f"{name} must lie in [0, 1], got {v}")

    def to_dict(self) -> dict:
        return {name: getattr(self, name) for name in STEP_FIELDS}

    @classmethod
    def from_dict(cls, d: dict) -> "TrainStepRecord":
        if set(d.keys()) != set(STEP_FIELDS):
            raise InvalidRecord(
                f"record must have exactly the fields {list(STEP_FIELDS)}, "
                f"got {sorted(d.keys())}"
            )
        vals = {}
        for name in STEP_FIELDS:
            v = d[name]
            if name == "step":
                if isinstance(v, bool) or not isinstance(v, int):
                    raise InvalidRecord(f"step must be an integer, got {v!r}")
                vals[name] = v
            else:
                if isinstance(v, bool) or not isinstance(v, (int, float)):
                    raise InvalidRecord(f"{name} must be a number, got {v!r}")
                vals[name] = float(v)
        return cls(**vals)


@dataclass(frozen=True)
class InjectionMeta:
    """Summary of the fault schedule a run was generated under."""

    mode: str
    base_strength: float
    onset_step: int
    per_step_strength: tuple[float, ...]
    duty_cycle: Optional[float] = None
    ramp_steps: Optional[int] = None

    def to_dict(self) -> dict:
        return {
            "mode": self.mode,
            "base_strength": self.base_strength,
            "onset_step": self.onset_step,
            "duty_cycle": self.duty_cycle,
            "ramp_steps": self.ramp_steps,
            "per_step_strength": list(self.per_step_strength),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "InjectionMeta":
        return cls(
            mode=str(d["mode"]),
            base_strength=float(d["base_strength"]),
            onset_step=int(d["onset_step"]),
            duty_cycle=None if d.get("duty_cycle") is None else float(d["duty_cycle"]),
            ramp_steps=None if d.get("ramp_steps") is None else int(d["ramp_steps"]),
            per_step_strength=tuple(float(x) for x in d["per_step_strength"]),
        )


@dataclass(frozen=True)
class TrainingRun:
    """A full run: identity, label, seed, and the step series.

    Normal runs carry no regime and no injection metadata; fault runs
    carry both.
    """

    run_id: str
    label: FaultLabel
    regime: Optional[DifficultyRegime]
    seed: int
    steps: tuple[TrainStepRecord, ...]
    injection_meta: Optional[InjectionMeta] = field(default=None)

    def __post_init__(self) -> None:
        if not self.run_id:
            raise InvalidRun("run_id must be non-empty")
        if not isinstance(self.seed, int) or isinstance(self.seed, bool) or self.seed < 0:
            raise InvalidRun(f"seed must be a non-negative integer, got {self.seed!r}")
        if len(self.steps) == 0:
            raise InvalidRun("a run must contain at least one step record")
        for i, rec in enumerate(self.steps):
            if rec.step != i:
                raise InvalidRun(
                    f"steps must be contiguous from 0; index {i} has step {rec.step}"
                )
        if self.label.is_normal:
            if self.injection_meta is not None:
                raise InvalidRun("normal runs must not carry injection metadata")
        else:
            if self.injection_meta is None:
                raise InvalidRun("fault runs must carry injection metadata")
            if self.regime is None:
                raise InvalidRun("fault runs must carry a difficulty regime")

    def __len__(self) -> int:
        return len(self.steps)

    def signal(self, name: str) -> list[float]:
        """The values of one record field across steps, in step order."""
        if name not in STEP_FIELDS:
            raise KeyError(name)
        return [float(getattr(rec, name)) for rec in self.steps]
