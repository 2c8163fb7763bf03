"""Desk-scale laboratory for failure management in RFT training telemetry.

Synthesizes labeled fault-injection benchmarks over reinforcement
fine-tuning dynamics and provides detection, diagnosis, and remediation
over them, with an evaluation harness and a CLI.
"""

from .taxonomy import (
    FAMILIES,
    FAMILY_TYPES,
    FAULT_TYPES,
    DifficultyRegime,
    FaultFamily,
    FaultLabel,
    FaultType,
)
from .records import (
    STEP_FIELDS,
    TELEMETRY_FIELDS,
    InjectionMeta,
    InvalidRecord,
    InvalidRun,
    TrainingRun,
    TrainStepRecord,
)
from .runio import RunFormatError, parse_run, read_run, serialize_run, write_run
from .simulate import SimConfig, healthy_defaults, simulate_healthy
from .faults import (
    FaultSpec,
    InjectionMode,
    InjectionSchedule,
    InvalidSpec,
    build_schedule,
    inject,
)
from .detection import (
    AnomalyDecision,
    DeviationVector,
    NormalProfile,
    SeverityScore,
    calibrate,
    compute_statistics,
    compute_threshold,
    detect,
    extract_deviations,
    score,
    severity_of,
)
from .attribution import (
    AttributionModel,
    FaultFingerprint,
    TemporalRepr,
    attribute,
    fingerprint,
    fit_attributor,
    prototype_class,
    temporal_features,
)
from .verify import VerificationResult, verify
from .curate import (
    BenchmarkManifest,
    BenchmarkPlan,
    curate_benchmark,
    default_plan,
    load_benchmark,
    load_manifest,
)
from .remediation import (
    InterventionAction,
    InterventionState,
    RemediationOutcome,
    RFTConfig,
    build_state,
    execute,
    mitigation_metrics,
    plan_action_random,
    plan_action_rule,
    revalidate,
)
from .planner_client import PlannerEndpoint, plan_action_llm
from .evaluation import (
    eval_detection,
    eval_diagnosis,
    eval_remediation,
    horizon_sweep,
    kfold_split,
    render_report,
    schedule_mode,
)

__version__ = "0.1.0"

__all__ = [
    "AnomalyDecision",
    "AttributionModel",
    "BenchmarkManifest",
    "BenchmarkPlan",
    "DeviationVector",
    "DifficultyRegime",
    "FAMILIES",
    "FAMILY_TYPES",
    "FAULT_TYPES",
    "FaultFamily",
    "FaultFingerprint",
    "FaultLabel",
    "FaultSpec",
    "FaultType",
    "InjectionMeta",
    "InjectionMode",
    "InjectionSchedule",
    "InterventionAction",
    "InterventionState",
    "InvalidRecord",
    "InvalidRun",
    "InvalidSpec",
    "NormalProfile",
    "PlannerEndpoint",
    "RemediationOutcome",
    "RFTConfig",
    "RunFormatError",
    "STEP_FIELDS",
    "SeverityScore",
    "SimConfig",
    "TELEMETRY_FIELDS",
    "TemporalRepr",
    "TrainStepRecord",
    "TrainingRun",
    "VerificationResult",
    "attribute",
    "build_schedule",
    "build_state",
    "calibrate",
    "compute_statistics",
    "compute_threshold",
    "curate_benchmark",
    "default_plan",
    "detect",
    "eval_detection",
    "eval_diagnosis",
    "eval_remediation",
    "execute",
    "extract_deviations",
    "fingerprint",
    "fit_attributor",
    "healthy_defaults",
    "horizon_sweep",
    "inject",
    "kfold_split",
    "load_benchmark",
    "load_manifest",
    "mitigation_metrics",
    "parse_run",
    "plan_action_llm",
    "plan_action_random",
    "plan_action_rule",
    "prototype_class",
    "read_run",
    "render_report",
    "revalidate",
    "schedule_mode",
    "score",
    "serialize_run",
    "severity_of",
    "simulate_healthy",
    "temporal_features",
    "verify",
    "write_run",
]
