"""Benchmark curation: generate, verify, retry, and lay out runs on disk.

Layout under the output directory:
    runs/<regime>/<fault_type>/<run_id>.jsonl
    normal/<run_id>.jsonl
    manifest.json
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Union

from . import rng
from .detection import NormalProfile, calibrate
from .faults import FaultSpec, InvalidSpec, build_schedule, inject
from .records import TrainingRun
from .runio import read_run, write_run
from .simulate import healthy_defaults, simulate_healthy
from .taxonomy import DifficultyRegime, FAULT_TYPES, FaultType
from .verify import verify

TOOL_VERSION = "rftlab 0.1.0"
MANIFEST_NAME = "manifest.json"

# Stream id for drawing a hard run's base strength (schedule draws own 100+).
STREAM_STRENGTH_DRAW = 110

# Healthy runs used internally to calibrate the verifier's references.
CALIBRATION_RUNS = 25


class RetryBudgetExhausted(RuntimeError):
    def __init__(self, fault_type: FaultType, regime: DifficultyRegime,
                 retained: int, planned: int, attempts: int):
        super().__init__(
            f"{fault_type.value}/{regime.value}: retained {retained} of {planned} "
            f"after {attempts} attempts"
        )
        self.fault_type = fault_type


class ManifestMissing(FileNotFoundError):
    pass


@dataclass(frozen=True)
class BenchmarkPlan:
    """Per-cell run counts and generation parameters."""

    seed: int = 42
    easy_per_type: dict[str, int] = field(
        default_factory=lambda: {t.value: 20 for t in FAULT_TYPES}
    )
    hard_per_type: dict[str, int] = field(
        default_factory=lambda: {t.value: 28 for t in FAULT_TYPES}
    )
    normal_runs: int = 11
    easy_steps: int = 20
    hard_steps: int = 40
    normal_steps: int = 20
    retry_factor: int = 5

    def __post_init__(self) -> None:
        for counts in (self.easy_per_type, self.hard_per_type):
            for name, n in counts.items():
                FaultType(name)
                if n < 0:
                    raise InvalidSpec(f"negative count for {name}")
        if self.normal_runs < 0:
            raise InvalidSpec("normal_runs must be >= 0")
        if self.retry_factor < 1:
            raise InvalidSpec("retry_factor must be >= 1")

    def to_dict(self) -> dict:
        return {
            "seed": self.seed,
            "easy_per_type": dict(self.easy_per_type),
            "hard_per_type": dict(self.hard_per_type),
            "normal_runs": self.normal_runs,
            "easy_steps": self.easy_steps,
            "hard_steps": self.hard_steps,
            "normal_steps": self.normal_steps,
            "retry_factor": self.retry_factor,
        }


def default_plan(seed: int = 42) -> BenchmarkPlan:
    """The reference benchmark: 320 easy and 448 hard fault runs plus 11
    healthy runs, 779 in total."""
    return BenchmarkPlan(seed=seed)


@dataclass(frozen=True)
class BenchmarkManifest:
    plan: dict
    counts: dict
    per_cell: dict
    files: list[dict]
    tool: str = TOOL_VERSION
    schema_version: str = "1"

    def to_json(self) -> str:
        payload = {
            "schema_version": self.schema_version,
            "tool": self.tool,
            "plan": self.plan,
            "counts": self.counts,
            "per_cell": self.per_cell,
            "files": self.files,
        }
        return json.dumps(payload, indent=2, sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "BenchmarkManifest":
        d = json.loads(text)
        return cls(
            plan=d["plan"],
            counts=d["counts"],
            per_cell=d["per_cell"],
            files=d["files"],
            tool=d.get("tool", ""),
            schema_version=d.get("schema_version", "1"),
        )


def _calibration_profile(plan: BenchmarkPlan, regime: DifficultyRegime) -> NormalProfile:
    steps = plan.easy_steps if regime is DifficultyRegime.EASY else plan.hard_steps
    config = replace(healthy_defaults(), steps=steps)
    runs = [
        simulate_healthy(
            config,
            rng.stream_seed(plan.seed, f"calibration:{regime.value}:{i}"),
            run_id=f"cal-{regime.value.lower()}-{i:03d}",
        )
        for i in range(CALIBRATION_RUNS)
    ]
    return calibrate(runs, horizon=steps)


def curate_benchmark(plan: BenchmarkPlan, out_dir: Union[str, Path]) -> BenchmarkManifest:
    """Generate the planned benchmark under out_dir.

    Fault cells are filled by generating candidate runs with fresh
    deterministic seeds and keeping those that pass verification, up to
    retry_factor times the planned count. The same plan and seed always
    produce identical files.
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)

    files: list[dict] = []
    per_cell: dict[str, dict] = {}

    normal_dir = out / "normal"
    if plan.normal_runs > 0:
        normal_dir.mkdir(parents=True, exist_ok=True)
    normal_config = replace(healthy_defaults(), steps=plan.normal_steps)
    for i in range(plan.normal_runs):
        seed = rng.stream_seed(plan.seed, f"normal:{i}")
        run = simulate_healthy(normal_config, seed, run_id=f"normal-{i:03d}")
        rel = f"normal/{run.run_id}.jsonl"
        write_run(run, out / rel)
        files.append(_file_entry(rel, run))

    any_faults = any(n > 0 for n in plan.easy_per_type.values()) or any(
        n > 0 for n in plan.hard_per_type.values()
    )
    profiles = {}
    if any_faults:
        profiles[DifficultyRegime.EASY] = _calibration_profile(plan, DifficultyRegime.EASY)
        profiles[DifficultyRegime.HARD] = _calibration_profile(plan, DifficultyRegime.HARD)

    fault_easy = 0
    fault_hard = 0
    for fault_type in FAULT_TYPES:
        for regime, planned_map in (
            (DifficultyRegime.EASY, plan.easy_per_type),
            (DifficultyRegime.HARD, plan.hard_per_type),
        ):
            planned = planned_map.get(fault_type.value, 0)
            if planned == 0:
                continue
            steps = plan.easy_steps if regime is DifficultyRegime.EASY else plan.hard_steps
            config = replace(healthy_defaults(), steps=steps)
            cell_dir = out / "runs" / regime.value / fault_type.value
            cell_dir.mkdir(parents=True, exist_ok=True)

            budget = plan.retry_factor * planned
            retained = 0
            rejected = 0
            attempt = 0
            while retained < planned and attempt < budget:
                seed = rng.stream_seed(
                    plan.seed, f"fault:{fault_type.value}:{regime.value}:{attempt}"
                )
                attempt += 1
                if regime is DifficultyRegime.EASY:
                    strength = 1.0
                else:
                    u = rng.uniform(seed, STREAM_STRENGTH_DRAW, 0)
                    strength = 0.25 + 0.25 * u
                spec = FaultSpec(fault_type=fault_type, regime=regime,
                                 base_strength=strength)
                schedule = build_schedule(spec, steps, seed)
                run_id = f"{fault_type.value}-{regime.value}-{retained:03d}"
                run = inject(config, spec, schedule, seed, run_id=run_id)
                result = verify(run, spec, profiles[regime])
                if result.passed:
                    rel = f"runs/{regime.value}/{fault_type.value}/{run.run_id}.jsonl"
                    write_run(run, out / rel)
                    files.append(_file_entry(rel, run))
                    retained += 1
                else:
                    rejected += 1

            per_cell[f"{fault_type.value}/{regime.value}"] = {
                "planned": planned,
                "attempted": attempt,
                "retained": retained,
                "rejected": rejected,
            }
            if retained < planned:
                raise RetryBudgetExhausted(fault_type, regime, retained, planned, attempt)
            if regime is DifficultyRegime.EASY:
                fault_easy += retained
            else:
                fault_hard += retained

    manifest = BenchmarkManifest(
        plan=plan.to_dict(),
        counts={
            "total": plan.normal_runs + fault_easy + fault_hard,
            "fault_easy": fault_easy,
            "fault_hard": fault_hard,
            "normal": plan.normal_runs,
        },
        per_cell=per_cell,
        files=files,
    )
    (out / MANIFEST_NAME).write_text(manifest.to_json(), encoding="utf-8")
    return manifest


def _file_entry(rel_path: str, run: TrainingRun) -> dict:
    return {
        "path": rel_path,
        "run_id": run.run_id,
        "label_family": run.label.family.value,
        "label_type": run.label.fault_type.value,
        "regime": None if run.regime is None else run.regime.value,
        "seed": run.seed,
    }


def load_manifest(bench_dir: Union[str, Path]) -> BenchmarkManifest:
    path = Path(bench_dir) / MANIFEST_NAME
    if not path.is_file():
        raise ManifestMissing(f"no {MANIFEST_NAME} under {bench_dir}")
    return BenchmarkManifest.from_json(path.read_text(encoding="utf-8"))


def load_benchmark(bench_dir: Union[str, Path]) -> tuple[BenchmarkManifest, list[TrainingRun]]:
    """Read every run listed in the manifest, in manifest order."""
    manifest = load_manifest(bench_dir)
    base = Path(bench_dir)
    runs = [read_run(base / entry["path"]) for entry in manifest.files]
    return manifest, runs
