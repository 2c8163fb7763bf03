"""Failure attribution: temporal fingerprints and nearest-centroid typing.

A run's fingerprint concatenates its standardized temporal features,
its invariant deviations, and the per-invariant severity components.
Attribution standardizes fingerprints against the training set and
assigns the nearest class centroid in Euclidean distance.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Sequence, Union

from .detection import (
    INVARIANT_GROUPS,
    NormalProfile,
    RunTooShort,
    STAT_NAMES,
    extract_deviations,
    score,
)
from .records import TrainingRun
from .signals import RobustStat, SCALE_FLOOR, TEMPORAL_NAMES, pop_std, robust_stat, temporal_vector
from .taxonomy import FAMILIES, FAULT_TYPES, FaultLabel, FaultType

MIN_HORIZON = 6
# Fingerprint dimensions can be mostly constant with a sparse informative
# tail (onset indices are the canonical case); a pure MAD scale collapses
# there and lets one dimension dominate every distance. The standardizer
# therefore floors each scale at a fraction of the dimension's std.
STD_FLOOR_FRACTION = 0.25

FINGERPRINT_NAMES: tuple[str, ...] = (
    tuple(f"temporal:{n}" for n in TEMPORAL_NAMES)
    + tuple(f"deviation:{n}" for n in STAT_NAMES)
    + tuple(f"phi:{g}" for g in INVARIANT_GROUPS)
)
FULL_DIM = len(FINGERPRINT_NAMES)
DEVIATION_DIM = len(STAT_NAMES)


class HorizonTooSmall(ValueError):
    pass


class EmptyClass(ValueError):
    pass


class DimensionMismatch(ValueError):
    pass


@dataclass(frozen=True)
class TemporalRepr:
    """Temporal feature vector; layout follows signals.TEMPORAL_NAMES."""

    values: tuple[float, ...]

    def __post_init__(self) -> None:
        if len(self.values) != len(TEMPORAL_NAMES):
            raise DimensionMismatch(
                f"temporal vector must have {len(TEMPORAL_NAMES)} entries, "
                f"got {len(self.values)}"
            )
        if not all(math.isfinite(v) for v in self.values):
            raise ValueError("temporal vector entries must be finite")


@dataclass(frozen=True)
class FaultFingerprint:
    """Concatenated fingerprint; 18-entry when reduced to deviations only."""

    values: tuple[float, ...]

    def __post_init__(self) -> None:
        if len(self.values) not in (FULL_DIM, DEVIATION_DIM):
            raise DimensionMismatch(
                f"fingerprint must have {FULL_DIM} or {DEVIATION_DIM} entries, "
                f"got {len(self.values)}"
            )
        if not all(math.isfinite(v) for v in self.values):
            raise ValueError("fingerprint entries must be finite")


def temporal_features(run: TrainingRun, profile: NormalProfile, horizon: int) -> TemporalRepr:
    """Temporal features of the first `horizon` steps.

    Onset scans compare each step against the profile's per-step
    references, so the profile must cover the horizon.
    """
    if horizon < MIN_HORIZON:
        raise HorizonTooSmall(f"temporal features need horizon >= {MIN_HORIZON}")
    if len(run) < horizon:
        raise RunTooShort(f"run {run.run_id} has {len(run)} steps, horizon is {horizon}")
    if profile.horizon < horizon:
        raise RunTooShort(
            f"profile covers horizon {profile.horizon}, requested {horizon}"
        )
    return TemporalRepr(values=tuple(temporal_vector(run, profile.signal_step, horizon)))


def fingerprint(
    run: TrainingRun,
    profile: NormalProfile,
    horizon: int,
    no_temporal: bool = False,
    no_fingerprint: bool = False,
) -> FaultFingerprint:
    """Build a run's fingerprint.

    no_temporal zeroes the temporal block in place; no_fingerprint drops
    everything but the deviation vector.
    """
    deviations = extract_deviations(run, profile, horizon)
    dev_values = tuple(deviations.values[name] for name in STAT_NAMES)
    if no_fingerprint:
        return FaultFingerprint(values=dev_values)

    if no_temporal:
        temporal_std = (0.0,) * len(TEMPORAL_NAMES)
    else:
        temporal = temporal_features(run, profile, horizon)
        temporal_std = tuple(
            (v - ref.location) / ref.scale
            for v, ref in zip(temporal.values, profile.temporal)
        )
    phi = score(deviations).phi
    phi_values = tuple(phi[g] for g in INVARIANT_GROUPS)
    return FaultFingerprint(values=temporal_std + dev_values + phi_values)


@dataclass(frozen=True)
class AttributionModel:
    """Nearest-centroid classifier over standardized fingerprints.

    Centroid keys are fault-type ids, optionally suffixed with a
    caller-supplied subgroup tag ("RF-3|Ramp"). A prediction is the
    class of the winning prototype at the model's granularity. A class
    whose members manifest in dissimilar shapes (an always-on fault
    versus the same fault ramping in; long and short generations under
    one family) would smear a single averaged centroid into a point far
    from every member, so each distinct shape keeps its own prototype
    and only the returned label is coarsened.
    """

    granularity: str
    dim: int
    standardizer: tuple[RobustStat, ...]
    centroids: dict[str, tuple[float, ...]]

    def standardize(self, fp: FaultFingerprint) -> list[float]:
        if len(fp.values) != self.dim:
            raise DimensionMismatch(
                f"fingerprint has {len(fp.values)} entries, model expects {self.dim}"
            )
        return [
            (v - ref.location) / ref.scale
            for v, ref in zip(fp.values, self.standardizer)
        ]

    def to_json(self) -> str:
        payload = {
            "granularity": self.granularity,
            "dim": self.dim,
            "standardizer": [[r.location, r.scale] for r in self.standardizer],
            "centroids": {k: list(v) for k, v in self.centroids.items()},
        }
        return json.dumps(payload, indent=2, sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "AttributionModel":
        d = json.loads(text)
        return cls(
            granularity=d["granularity"],
            dim=int(d["dim"]),
            standardizer=tuple(RobustStat(loc, scale) for loc, scale in d["standardizer"]),
            centroids={k: tuple(float(x) for x in v) for k, v in d["centroids"].items()},
        )

    def save(self, path: Union[str, Path]) -> None:
        Path(path).write_text(self.to_json(), encoding="utf-8")

    @classmethod
    def load(cls, path: Union[str, Path]) -> "AttributionModel":
        return cls.from_json(Path(path).read_text(encoding="utf-8"))


def _dim_scale(values: Sequence[float]) -> RobustStat:
    ref = robust_stat(values)
    return RobustStat(
        ref.location,
        max(ref.scale, STD_FLOOR_FRACTION * pop_std(values), SCALE_FLOOR),
    )


def class_of(label: FaultLabel, granularity: str) -> str:
    if granularity == "family":
        return label.family.value
    return label.fault_type.value


def fit_attributor(
    labeled: Sequence[tuple[FaultFingerprint, FaultLabel]],
    granularity: str = "type",
    subgroups: Optional[Sequence[str]] = None,
) -> AttributionModel:
    """Fit standardization and per-class centroids from labeled fingerprints.

    Every class of the chosen granularity must be represented. When
    ``subgroups`` is given (one tag per example, e.g. the injection
    schedule mode), each (type, tag) combination gets its own prototype;
    tags influence the fitted geometry only and are never needed at
    prediction time.
    """
    if granularity not in ("type", "family"):
        raise ValueError(f"granularity must be 'type' or 'family', got {granularity!r}")
    if not labeled:
        raise EmptyClass("no training fingerprints")
    if subgroups is not None and len(subgroups) != len(labeled):
        raise ValueError("subgroups must align one-to-one with labeled examples")
    dim = len(labeled[0][0].values)
    for fp, _ in labeled:
        if len(fp.values) != dim:
            raise DimensionMismatch("training fingerprints differ in dimension")

    expected = (
        [f.value for f in FAMILIES] if granularity == "family"
        else [t.value for t in FAULT_TYPES]
    )
    by_class: dict[str, list[FaultFingerprint]] = {c: [] for c in expected}
    by_proto: dict[str, list[FaultFingerprint]] = {}
    for i, (fp, label) in enumerate(labeled):
        if label.is_normal:
            raise ValueError("attribution is trained on fault runs only")
        by_class[class_of(label, granularity)].append(fp)
        key = label.fault_type.value
        if subgroups is not None:
            key = f"{key}|{subgroups[i]}"
        by_proto.setdefault(key, []).append(fp)
    for cls, members in by_class.items():
        if not members:
            raise EmptyClass(cls)

    standardizer = tuple(
        _dim_scale([fp.values[i] for fp, _ in labeled]) for i in range(dim)
    )
    model = AttributionModel(
        granularity=granularity, dim=dim, standardizer=standardizer, centroids={}
    )
    centroids = {}
    for key, members in by_proto.items():
        std = [model.standardize(fp) for fp in members]
        centroids[key] = tuple(
            sum(vec[i] for vec in std) / len(std) for i in range(dim)
        )
    return AttributionModel(
        granularity=granularity, dim=dim, standardizer=standardizer, centroids=centroids
    )


def prototype_class(key: str, granularity: str) -> str:
    """Label a centroid key resolves to at the given granularity."""
    type_id = key.split("|", 1)[0]
    if granularity == "family":
        return FaultType(type_id).family.value
    return type_id


def attribute(model: AttributionModel, fp: FaultFingerprint) -> str:
    """Class of the nearest centroid; ties go to the lexicographically
    smallest centroid identifier."""
    std = model.standardize(fp)
    best_key = None
    best_dist = None
    for key in sorted(model.centroids):
        centroid = model.centroids[key]
        dist = math.sqrt(sum((a - b) ** 2 for a, b in zip(std, centroid)))
        if best_dist is None or dist < best_dist:
            best_key = key
            best_dist = dist
    return prototype_class(best_key, model.granularity)
