"""Healthy training-dynamics generator.

Each telemetry signal follows a smooth closed-form law plus Gaussian
noise drawn from its own counter-based stream. Rewards rise toward a
ceiling, entropy decays toward a floor, KL drifts slowly upward,
response length relaxes toward a target, returns track rewards, and
values track returns with a small lag. With every noise scale at zero
the signals match their closed forms exactly.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, fields

from . import rng
from .records import TrainStepRecord, TrainingRun
from .taxonomy import FaultLabel

# Per-signal stream ids. Keeping them fixed keeps runs reproducible and
# lets fault transforms re-read any signal's noise without cross-talk.
STREAMS: dict[str, int] = {
    "reward_mean": 0,
    "kl_mean": 1,
    "entropy_mean": 2,
    "response_length_mean": 3,
    "return_mean": 4,
    "value_mean": 5,
    "advantage_mean": 6,
    "advantage_std": 7,
    "policy_loss": 8,
    "tool_error_rate": 9,
    "truncation_rate": 10,
}

# Relaxation timescale for response length, in steps.
LENGTH_TIMESCALE = 8.0


class InvalidConfig(ValueError):
    pass


@dataclass(frozen=True)
class SimConfig:
    """Generator parameters; healthy_defaults() gives the reference set."""

    steps: int = 20
    reward_start: float = 0.10
    reward_ceiling: float = 0.85
    reward_timescale: float = 8.0
    reward_noise: float = 0.03
    kl_base: float = 0.02
    kl_drift: float = 0.0005
    kl_noise: float = 0.004
    entropy_start: float = 1.2
    entropy_floor: float = 0.4
    entropy_timescale: float = 25.0
    entropy_noise: float = 0.02
    length_start: float = 180.0
    length_target: float = 220.0
    length_noise: float = 10.0
    value_lag: int = 1
    return_noise: float = 0.02
    value_noise: float = 0.02
    advantage_scale: float = 0.5
    advantage_noise: float = 0.05
    advantage_std_noise: float = 0.02
    tool_error_base: float = 0.02
    truncation_base: float = 0.01
    rate_noise: float = 0.005
    loss_start: float = 0.6
    loss_decay: float = 0.92
    loss_noise: float = 0.02

    def __post_init__(self) -> None:
        if self.steps < 1:
            raise InvalidConfig(f"steps must be >= 1, got {self.steps}")
        if self.reward_timescale <= 0 or self.entropy_timescale <= 0:
            raise InvalidConfig("timescales must be positive")
        if self.value_lag < 0:
            raise InvalidConfig("value_lag must be >= 0")
        if not 0.0 < self.loss_decay <= 1.0:
            raise InvalidConfig("loss_decay must lie in (0, 1]")
        for f in fields(self):
            if f.name.endswith("_noise") and getattr(self, f.name) < 0:
                raise InvalidConfig(f"{f.name} must be >= 0")
        for name in ("tool_error_base", "truncation_base"):
            if not 0.0 <= getattr(self, name) <= 1.0:
                raise InvalidConfig(f"{name} must lie in [0, 1]")


def healthy_defaults() -> SimConfig:
    return SimConfig()


# ---------------------------------------------------------------------------
# closed-form laws


def reward_law(config: SimConfig, t: int) -> float:
    rise = 1.0 - math.exp(-t / config.reward_timescale)
    return config.reward_start + (config.reward_ceiling - config.reward_start) * rise


def entropy_law(config: SimConfig, t: int, timescale: float | None = None,
                floor: float | None = None) -> float:
    ts = config.entropy_timescale if timescale is None else timescale
    fl = config.entropy_floor if floor is None else floor
    return fl + (config.entropy_start - fl) * math.exp(-t / ts)


def kl_law(config: SimConfig, t: int) -> float:
    return config.kl_base + config.kl_drift * t


def length_law(config: SimConfig, t: int) -> float:
    relax = math.exp(-t / LENGTH_TIMESCALE)
    return config.length_target + (config.length_start - config.length_target) * relax


def loss_law(config: SimConfig, t: int) -> float:
    return config.loss_start * config.loss_decay**t


def advantage_std_law(config: SimConfig, t: int) -> float:
    return config.advantage_scale * (1.0 - t / (3.0 * config.steps))


# ---------------------------------------------------------------------------
# generation


def _noise(seed: int, signal: str, t: int, scale: float, mult: float = 1.0) -> float:
    if scale == 0.0 and mult == 1.0:
        return 0.0
    return scale * mult * rng.normal(seed, STREAMS[signal], t)


def healthy_arrays(config: SimConfig, seed: int,
                   noise_mults: dict[str, float] | None = None
                   ) -> tuple[dict[str, list[float]], dict[str, list[float]]]:
    """Raw (unclamped) healthy signal values and their noise components.

    Returns (values, noise) keyed by telemetry field name. noise_mults
    scales the noise of selected signals, which downstream perturbation
    modeling uses for side effects.
    """
    mults = noise_mults or {}
    n = config.steps

    def m(sig: str) -> float:
        return mults.get(sig, 1.0)

    values: dict[str, list[float]] = {}
    noise: dict[str, list[float]] = {}

    for sig, scale, law in (
        ("reward_mean", config.reward_noise, lambda t: reward_law(config, t)),
        ("kl_mean", config.kl_noise, lambda t: kl_law(config, t)),
        ("entropy_mean", config.entropy_noise, lambda t: entropy_law(config, t)),
        ("response_length_mean", config.length_noise, lambda t: length_law(config, t)),
        ("advantage_std", config.advantage_std_noise,
         lambda t: advantage_std_law(config, t)),
        ("policy_loss", config.loss_noise, lambda t: loss_law(config, t)),
        ("tool_error_rate", config.rate_noise, lambda t: config.tool_error_base),
        ("truncation_rate", config.rate_noise, lambda t: config.truncation_base),
    ):
        noise[sig] = [_noise(seed, sig, t, scale, m(sig)) for t in range(n)]
        values[sig] = [law(t) + noise[sig][t] for t in range(n)]

    noise["advantage_mean"] = [
        _noise(seed, "advantage_mean", t, config.advantage_noise, m("advantage_mean"))
        for t in range(n)
    ]
    values["advantage_mean"] = list(noise["advantage_mean"])

    # Returns track realized rewards; values track realized returns
    # with a lag, so they chain off the arrays above.
    noise["return_mean"] = [
        _noise(seed, "return_mean", t, config.return_noise, m("return_mean"))
        for t in range(n)
    ]
    values["return_mean"] = [
        values["reward_mean"][t] + noise["return_mean"][t] for t in range(n)
    ]
    noise["value_mean"] = [
        _noise(seed, "value_mean", t, config.value_noise, m("value_mean"))
        for t in range(n)
    ]
    values["value_mean"] = [
        values["return_mean"][max(t - config.value_lag, 0)] + noise["value_mean"][t]
        for t in range(n)
    ]
    return values, noise


def clamp_record_values(t: int, raw: dict[str, float]) -> TrainStepRecord:
    """Clamp raw values to each field's domain and build the record."""
    return TrainStepRecord(
        step=t,
        reward_mean=raw["reward_mean"],
        kl_mean=max(0.0, raw["kl_mean"]),
        entropy_mean=max(0.0, raw["entropy_mean"]),
        return_mean=raw["return_mean"],
        value_mean=raw["value_mean"],
        advantage_mean=raw["advantage_mean"],
        advantage_std=max(0.0, raw["advantage_std"]),
        response_length_mean=max(0.0, raw["response_length_mean"]),
        policy_loss=raw["policy_loss"],
        tool_error_rate=min(1.0, max(0.0, raw["tool_error_rate"])),
        truncation_rate=min(1.0, max(0.0, raw["truncation_rate"])),
    )


def assemble_records(values: dict[str, list[float]], steps: int) -> tuple[TrainStepRecord, ...]:
    return tuple(
        clamp_record_values(t, {sig: values[sig][t] for sig in values})
        for t in range(steps)
    )


def simulate_healthy(config: SimConfig, seed: int, run_id: str | None = None) -> TrainingRun:
    """Generate one healthy run. Same (config, seed) gives identical bytes."""
    values, _ = healthy_arrays(config, seed)
    return TrainingRun(
        run_id=run_id if run_id is not None else f"healthy-{seed:08x}",
        label=FaultLabel.normal(),
        regime=None,
        seed=seed,
        steps=assemble_records(values, config.steps),
    )
