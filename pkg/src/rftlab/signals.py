"""Series-level helpers shared by detection, attribution, and verification."""
from __future__ import annotations

from typing import NamedTuple, Sequence

import numpy as np

from .records import STEP_FIELDS, TrainingRun

SCALE_FLOOR = 1e-6
# Deviations divide by the reference scale, and a handful of reference
# runs can collapse the MAD far below the true spread. Flooring the
# scale at a percentage of the location keeps such collapses from
# inflating every downstream z.
REL_SCALE_FLOOR = 0.01
MAD_SCALE = 1.4826

# Per-signal temporal feature layout: three window means over thirds of
# the horizon, the least-squares slope, the fluctuation (std of first
# differences), and an onset index estimate.
TEMPORAL_FEATURES = ("early_mean", "mid_mean", "late_mean", "slope", "fluctuation", "onset")
CROSS_CORR_NAMES = ("corr_reward_return", "corr_reward_entropy", "corr_kl_length")
TEMPORAL_NAMES: tuple[str, ...] = tuple(
    f"{sig}:{feat}" for sig in STEP_FIELDS for feat in TEMPORAL_FEATURES
) + CROSS_CORR_NAMES
TEMPORAL_DIM = len(TEMPORAL_NAMES)


class RobustStat(NamedTuple):
    location: float
    scale: float


def robust_stat(values: Sequence[float]) -> RobustStat:
    """Median location and scaled MAD, with the scale floored both
    absolutely and relative to the location's magnitude."""
    arr = np.asarray(values, dtype=float)
    loc = float(np.median(arr))
    mad = float(np.median(np.abs(arr - loc)))
    return RobustStat(loc, max(MAD_SCALE * mad, REL_SCALE_FLOOR * abs(loc), SCALE_FLOOR))


def lstsq_slope(values: Sequence[float]) -> float:
    """Slope of the least-squares line of values against their index."""
    arr = np.asarray(values, dtype=float)
    n = arr.size
    if n < 2:
        return 0.0
    t = np.arange(n, dtype=float)
    t_centered = t - t.mean()
    denom = float(np.dot(t_centered, t_centered))
    return float(np.dot(t_centered, arr - arr.mean()) / denom)


def pearson(xs: Sequence[float], ys: Sequence[float]) -> float:
    """Pearson correlation; 0.0 when either series is constant."""
    x = np.asarray(xs, dtype=float)
    y = np.asarray(ys, dtype=float)
    xc = x - x.mean()
    yc = y - y.mean()
    denom = float(np.sqrt(np.dot(xc, xc) * np.dot(yc, yc)))
    if denom == 0.0:
        return 0.0
    return float(np.dot(xc, yc) / denom)


def pop_std(values: Sequence[float]) -> float:
    return float(np.std(np.asarray(values, dtype=float)))


def first_diffs(values: Sequence[float]) -> list[float]:
    return [values[i] - values[i - 1] for i in range(1, len(values))]


def window_bounds(horizon: int) -> tuple[int, int]:
    """Boundaries splitting [0, horizon) into early/mid/late thirds."""
    return horizon // 3, 2 * horizon // 3


def onset_index(values: Sequence[float], refs: Sequence[RobustStat],
                z_bound: float = 2.0) -> int:
    """First index whose robust z against its per-step reference exceeds
    the bound, or -1 if none does."""
    for t, v in enumerate(values):
        loc, scale = refs[t]
        if abs(v - loc) / scale > z_bound:
            return t
    return -1


def temporal_vector(run: TrainingRun, signal_step: dict[str, list[RobustStat]],
                    horizon: int) -> list[float]:
    """Temporal feature vector over the first `horizon` steps.

    Six features per record field plus three cross-signal correlations;
    the layout follows TEMPORAL_NAMES.
    """
    lo, hi = window_bounds(horizon)
    out: list[float] = []
    series: dict[str, list[float]] = {}
    for sig in STEP_FIELDS:
        xs = run.signal(sig)[:horizon]
        series[sig] = xs
        out.append(float(np.mean(xs[:lo])))
        out.append(float(np.mean(xs[lo:hi])))
        out.append(float(np.mean(xs[hi:])))
        out.append(lstsq_slope(xs))
        out.append(pop_std(first_diffs(xs)))
        out.append(float(onset_index(xs, signal_step[sig][:horizon])))
    out.append(pearson(series["reward_mean"], series["return_mean"]))
    out.append(pearson(series["reward_mean"], series["entropy_mean"]))
    out.append(pearson(series["kl_mean"], series["response_length_mean"]))
    return out
