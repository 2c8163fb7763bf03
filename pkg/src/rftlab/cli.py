"""Command line interface.

Exit codes: 0 on success, 1 for usage problems, 2 for data problems
(missing or malformed files, infeasible parameters, endpoint failures).

Every option can be preset through --config pointing at a JSON object
keyed by option name; explicit flags win over the preset, which wins
over built-in defaults.
"""
from __future__ import annotations

import argparse
import json
import sys
from dataclasses import replace
from pathlib import Path
from typing import Optional, Sequence

from . import curate, evaluation
from .evaluation import schedule_mode
from .attribution import (
    EmptyClass,
    HorizonTooSmall,
    attribute,
    fingerprint,
    fit_attributor,
)
from .detection import (
    NormalProfile,
    RunTooShort,
    TooFewRuns,
    calibrate,
    compute_threshold,
    detect,
)
from .faults import InvalidSpec
from .planner_client import (
    AuthFailure,
    EndpointUnreachable,
    PlannerEndpoint,
    plan_action_llm,
)
from .records import InvalidRecord, InvalidRun, TrainingRun
from .remediation import (
    MissingInjectionMeta,
    NormalLabelRejected,
    RFTConfig,
    UnknownKnob,
    ZeroOriginalSeverity,
    build_state,
    execute,
    plan_action_random,
    plan_action_rule,
    revalidate,
)
from .rng import stream_seed
from .runio import RunFormatError, read_run
from .taxonomy import FAULT_TYPES, FaultLabel, FaultType

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_DATA = 2

DATA_ERRORS = (
    RunFormatError,
    InvalidRecord,
    InvalidRun,
    InvalidSpec,
    TooFewRuns,
    RunTooShort,
    HorizonTooSmall,
    EmptyClass,
    UnknownKnob,
    NormalLabelRejected,
    MissingInjectionMeta,
    ZeroOriginalSeverity,
    curate.RetryBudgetExhausted,
    curate.ManifestMissing,
    evaluation.KTooLarge,
    evaluation.HorizonTooLarge,
    EndpointUnreachable,
    AuthFailure,
    FileNotFoundError,
    json.JSONDecodeError,
    ValueError,
)


class UsageExit(SystemExit):
    pass


class _Parser(argparse.ArgumentParser):
    """argparse variant that exits 1 on usage errors instead of 2."""

    def error(self, message: str):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise UsageExit(EXIT_USAGE)


def _add_config_flag(parser: argparse.ArgumentParser) -> None:
    parser.add_argument(
        "--config",
        default=argparse.SUPPRESS,
        help="JSON file of option presets (flags override it)",
    )


def _merge_config(args: argparse.Namespace, defaults: dict) -> dict:
    """Built-in defaults, then --config presets, then explicit flags."""
    skip = ("func", "config", "command", "task", "_required")
    explicit = {k: v for k, v in vars(args).items() if k not in skip}
    merged = dict(defaults)
    config_path = getattr(args, "config", None)
    if config_path is not None:
        preset = json.loads(Path(config_path).read_text(encoding="utf-8"))
        if not isinstance(preset, dict):
            raise ValueError("--config must contain a JSON object")
        for key, value in preset.items():
            dest = key.replace("-", "_")
            if dest not in defaults:
                raise ValueError(f"unknown option {key!r} in --config")
            merged[dest] = value
    merged.update(explicit)
    return merged


def _print_json(payload: dict) -> None:
    print(json.dumps(payload, indent=2, sort_keys=True))


def _load_bench(bench_dir: str) -> tuple[curate.BenchmarkManifest, list[TrainingRun]]:
    return curate.load_benchmark(bench_dir)


def _profile_and_tau(
    runs: Sequence[TrainingRun],
    profile_path: Optional[str],
    horizon: Optional[int],
    k_sigma: float,
    no_calibration: bool = False,
    no_invariants: bool = False,
) -> tuple[Optional[NormalProfile], float, int]:
    normals = [r for r in runs if r.label.is_normal]
    if horizon is None:
        horizon = min(len(r) for r in normals) if normals else min(len(r) for r in runs)
    profile = None
    if not no_calibration and not no_invariants:
        if profile_path is not None:
            profile = NormalProfile.load(profile_path)
        else:
            profile = calibrate(normals, horizon)
    tau = compute_threshold(
        profile, normals, k=k_sigma, horizon=horizon,
        no_calibration=no_calibration, no_invariants=no_invariants,
    )
    return profile, tau, horizon


# ---------------------------------------------------------------------------
# subcommand handlers


GENERATE_DEFAULTS = {
    "out": None,
    "seed": 42,
    "easy_per_type": 20,
    "hard_per_type": 28,
    "normals": 11,
    "retry_factor": 5,
}


def _cmd_generate(args: argparse.Namespace) -> int:
    opts = _merge_config(args, GENERATE_DEFAULTS)
    plan = replace(
        curate.default_plan(int(opts["seed"])),
        easy_per_type={t.value: int(opts["easy_per_type"]) for t in FAULT_TYPES},
        hard_per_type={t.value: int(opts["hard_per_type"]) for t in FAULT_TYPES},
        normal_runs=int(opts["normals"]),
        retry_factor=int(opts["retry_factor"]),
    )
    manifest = curate.curate_benchmark(plan, opts["out"])
    counts = manifest.counts
    print(f"benchmark written to {opts['out']}")
    print(
        f"runs: {counts['total']} total, {counts['fault_easy']} easy, "
        f"{counts['fault_hard']} hard, {counts['normal']} healthy"
    )
    return EXIT_OK


CALIBRATE_DEFAULTS = {"bench": None, "out": None, "horizon": None}


def _cmd_calibrate(args: argparse.Namespace) -> int:
    opts = _merge_config(args, CALIBRATE_DEFAULTS)
    _, runs = _load_bench(opts["bench"])
    normals = [r for r in runs if r.label.is_normal]
    horizon = opts["horizon"]
    if horizon is None:
        horizon = min(len(r) for r in normals)
    profile = calibrate(normals, int(horizon))
    profile.save(opts["out"])
    print(f"profile from {len(normals)} healthy runs written to {opts['out']}")
    return EXIT_OK


DETECT_DEFAULTS = {
    "bench": None,
    "run": None,
    "profile": None,
    "k": 2.0,
    "horizon": None,
    "no_calibration": False,
    "no_invariants": False,
}


def _cmd_detect(args: argparse.Namespace) -> int:
    opts = _merge_config(args, DETECT_DEFAULTS)
    _, runs = _load_bench(opts["bench"])
    profile, tau, horizon = _profile_and_tau(
        runs, opts["profile"], opts["horizon"], float(opts["k"]),
        no_calibration=bool(opts["no_calibration"]),
        no_invariants=bool(opts["no_invariants"]),
    )
    run = read_run(opts["run"])
    decision = detect(
        run, profile, tau, horizon,
        no_calibration=bool(opts["no_calibration"]),
        no_invariants=bool(opts["no_invariants"]),
    )
    _print_json(
        {
            "run_id": run.run_id,
            "anomalous": decision.is_anomalous,
            "severity": decision.severity.severity,
            "threshold": decision.threshold,
            "phi": decision.severity.phi,
        }
    )
    return EXIT_OK


DIAGNOSE_DEFAULTS = {
    "bench": None,
    "run": None,
    "granularity": "type",
    "horizon": None,
    "no_temporal": False,
    "no_fingerprint": False,
}


def _cmd_diagnose(args: argparse.Namespace) -> int:
    opts = _merge_config(args, DIAGNOSE_DEFAULTS)
    _, runs = _load_bench(opts["bench"])
    normals = [r for r in runs if r.label.is_normal]
    faults = [r for r in runs if not r.label.is_normal]
    horizon = opts["horizon"]
    if horizon is None:
        horizon = min(len(r) for r in normals)
    horizon = int(horizon)
    profile = calibrate(normals, horizon)
    flags = {
        "no_temporal": bool(opts["no_temporal"]),
        "no_fingerprint": bool(opts["no_fingerprint"]),
    }
    model = fit_attributor(
        [(fingerprint(r, profile, horizon, **flags), r.label) for r in faults],
        granularity=opts["granularity"],
        subgroups=[schedule_mode(r) for r in faults],
    )
    run = read_run(opts["run"])
    predicted = attribute(model, fingerprint(run, profile, horizon, **flags))
    _print_json(
        {
            "run_id": run.run_id,
            "granularity": opts["granularity"],
            "predicted": predicted,
        }
    )
    return EXIT_OK


REMEDIATE_DEFAULTS = {
    "bench": None,
    "run": None,
    "planner": "rule",
    "endpoint": None,
    "k": 2.0,
    "horizon": None,
    "seed": 0,
}


def _cmd_remediate(args: argparse.Namespace) -> int:
    opts = _merge_config(args, REMEDIATE_DEFAULTS)
    _, runs = _load_bench(opts["bench"])
    profile, tau, horizon = _profile_and_tau(
        runs, None, opts["horizon"], float(opts["k"])
    )
    run = read_run(opts["run"])
    decision = detect(run, profile, tau, horizon)

    planner = opts["planner"]
    if planner in ("rule", "llm"):
        faults = [r for r in runs if not r.label.is_normal]
        model = fit_attributor(
            [(fingerprint(r, profile, horizon), r.label) for r in faults],
            granularity="type",
            subgroups=[schedule_mode(r) for r in faults],
        )
        predicted = attribute(model, fingerprint(run, profile, horizon))
        label = FaultLabel.of(FaultType(predicted))
    else:
        label = run.label
    state = build_state(decision, label, RFTConfig.baseline(), run.regime)
    if planner == "random":
        action = plan_action_random(
            state, stream_seed(int(opts["seed"]), f"random:{run.run_id}")
        )
    elif planner == "llm":
        if opts["endpoint"] is None:
            raise ValueError("--planner llm requires --endpoint")
        action = plan_action_llm(state, PlannerEndpoint(base_url=opts["endpoint"]))
    else:
        action = plan_action_rule(state)
    updated = execute(RFTConfig.baseline(), action)
    outcome = revalidate(run, updated, profile, tau, horizon)
    _print_json(
        {
            "run_id": run.run_id,
            "diagnosis": label.fault_type.value,
            "action": {
                "changes": action.changes,
                "rationale": action.rationale,
                "fallback": action.fallback,
            },
            "original_severity": outcome.original_severity,
            "post_severity": outcome.post_severity,
            "delta_pct": outcome.delta_pct,
            "mitigated": outcome.mitigated,
            "below_threshold": outcome.below_threshold,
        }
    )
    return EXIT_OK


EVALUATE_DEFAULTS = {
    "bench": None,
    "out": None,
    "folds": 5,
    "seed": 0,
    "k": 2.0,
    "horizon": None,
    "no_calibration": False,
    "no_invariants": False,
    "granularity": "type",
    "pipeline": False,
    "no_temporal": False,
    "no_fingerprint": False,
    "planner": "rule",
    "per_family": 15,
    "endpoint": None,
}


def _write_report(out_dir: str, name: str, report: dict) -> Path:
    reports = Path(out_dir) / "reports"
    reports.mkdir(parents=True, exist_ok=True)
    (reports / f"{name}.json").write_text(
        json.dumps(report, indent=2, sort_keys=True) + "\n", encoding="utf-8"
    )
    text = evaluation.render_report(report)
    (reports / f"{name}.txt").write_text(text, encoding="utf-8")
    return reports


def _cmd_evaluate(args: argparse.Namespace) -> int:
    opts = _merge_config(args, EVALUATE_DEFAULTS)
    task = args.task
    _, runs = _load_bench(opts["bench"])
    horizon = None if opts["horizon"] is None else int(opts["horizon"])
    if task == "detection":
        report = evaluation.eval_detection(
            runs,
            k=int(opts["folds"]),
            seed=int(opts["seed"]),
            k_sigma=float(opts["k"]),
            horizon=horizon,
            no_calibration=bool(opts["no_calibration"]),
            no_invariants=bool(opts["no_invariants"]),
        )
    elif task == "diagnosis":
        report = evaluation.eval_diagnosis(
            runs,
            k=int(opts["folds"]),
            seed=int(opts["seed"]),
            granularity=opts["granularity"],
            horizon=horizon,
            pipeline=bool(opts["pipeline"]),
            k_sigma=float(opts["k"]),
            no_temporal=bool(opts["no_temporal"]),
            no_fingerprint=bool(opts["no_fingerprint"]),
        )
    else:
        endpoint = None
        if opts["endpoint"] is not None:
            endpoint = PlannerEndpoint(base_url=opts["endpoint"])
        report = evaluation.eval_remediation(
            runs,
            seed=int(opts["seed"]),
            per_family=int(opts["per_family"]),
            planner=opts["planner"],
            horizon=horizon,
            k_sigma=float(opts["k"]),
            endpoint=endpoint,
        )
    print(evaluation.render_report(report), end="")
    if opts["out"] is not None:
        reports_dir = _write_report(opts["out"], task, report)
        print(f"report written to {reports_dir / (task + '.json')}")
    return EXIT_OK


SWEEP_DEFAULTS = {
    "bench": None,
    "out": None,
    "horizons": "6,8,10,12,14,16,18,20",
    "folds": 5,
    "seed": 0,
    "k": 2.0,
}


def _cmd_sweep(args: argparse.Namespace) -> int:
    opts = _merge_config(args, SWEEP_DEFAULTS)
    horizons = [int(h) for h in str(opts["horizons"]).split(",") if h.strip()]
    _, runs = _load_bench(opts["bench"])
    report = evaluation.horizon_sweep(
        runs,
        horizons,
        k=int(opts["folds"]),
        seed=int(opts["seed"]),
        k_sigma=float(opts["k"]),
    )
    csv_text = evaluation.sweep_csv(report)
    print(csv_text, end="")
    if opts["out"] is not None:
        reports_dir = _write_report(opts["out"], "horizon_sweep", report)
        (reports_dir / "horizon_sweep.csv").write_text(csv_text, encoding="utf-8")
        print(f"sweep written to {reports_dir / 'horizon_sweep.csv'}")
    return EXIT_OK


REPORT_DEFAULTS = {"path": None}


def _cmd_report(args: argparse.Namespace) -> int:
    opts = _merge_config(args, REPORT_DEFAULTS)
    report = json.loads(Path(opts["path"]).read_text(encoding="utf-8"))
    if not isinstance(report, dict) or "task" not in report:
        raise ValueError(f"{opts['path']} does not contain an evaluation report")
    print(evaluation.render_report(report), end="")
    return EXIT_OK


# ---------------------------------------------------------------------------
# parser assembly


def build_parser() -> _Parser:
    parser = _Parser(
        prog="rftlab",
        description="Fault-injection benchmarks and failure management "
        "for reinforcement fine-tuning telemetry.",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    S = argparse.SUPPRESS

    p = sub.add_parser("generate", parents=[], help="synthesize a benchmark")
    p.add_argument("--out", default=S, help="benchmark output directory")
    p.add_argument("--seed", type=int, default=S)
    p.add_argument("--easy-per-type", type=int, default=S, dest="easy_per_type")
    p.add_argument("--hard-per-type", type=int, default=S, dest="hard_per_type")
    p.add_argument("--normals", type=int, default=S)
    p.add_argument("--retry-factor", type=int, default=S, dest="retry_factor")
    _add_config_flag(p)
    p.set_defaults(func=_cmd_generate, _required=("out",))

    p = sub.add_parser("calibrate", help="fit a healthy profile from a benchmark")
    p.add_argument("--bench", default=S, help="benchmark directory")
    p.add_argument("--out", default=S, help="profile output path")
    p.add_argument("--horizon", type=int, default=S)
    _add_config_flag(p)
    p.set_defaults(func=_cmd_calibrate, _required=("bench", "out"))

    p = sub.add_parser("detect", help="score one run against a benchmark profile")
    p.add_argument("--bench", default=S)
    p.add_argument("--run", default=S, help="run file (JSONL)")
    p.add_argument("--profile", default=S, help="saved profile (optional)")
    p.add_argument("--k", type=float, default=S, help="threshold sigma multiplier")
    p.add_argument("--horizon", type=int, default=S)
    p.add_argument("--no-calibration", action="store_true", default=S,
                   dest="no_calibration")
    p.add_argument("--no-invariants", action="store_true", default=S,
                   dest="no_invariants")
    _add_config_flag(p)
    p.set_defaults(func=_cmd_detect, _required=("bench", "run"))

    p = sub.add_parser("diagnose", help="attribute one run to a fault class")
    p.add_argument("--bench", default=S)
    p.add_argument("--run", default=S)
    p.add_argument("--granularity", choices=("family", "type"), default=S)
    p.add_argument("--horizon", type=int, default=S)
    p.add_argument("--no-temporal", action="store_true", default=S,
                   dest="no_temporal")
    p.add_argument("--no-fingerprint", action="store_true", default=S,
                   dest="no_fingerprint")
    _add_config_flag(p)
    p.set_defaults(func=_cmd_diagnose, _required=("bench", "run"))

    p = sub.add_parser("remediate", help="plan and score a config change")
    p.add_argument("--bench", default=S)
    p.add_argument("--run", default=S)
    p.add_argument("--planner", choices=("rule", "llm", "oracle", "random"),
                   default=S)
    p.add_argument("--endpoint", default=S, help="planner endpoint base URL")
    p.add_argument("--k", type=float, default=S)
    p.add_argument("--horizon", type=int, default=S)
    p.add_argument("--seed", type=int, default=S)
    _add_config_flag(p)
    p.set_defaults(func=_cmd_remediate, _required=("bench", "run"))

    p = sub.add_parser("evaluate", help="run an evaluation protocol")
    esub = p.add_subparsers(dest="task", required=True)
    for task in ("detection", "diagnosis", "remediation"):
        ep = esub.add_parser(task)
        ep.add_argument("--bench", default=S)
        ep.add_argument("--out", default=S, help="output directory for reports")
        ep.add_argument("--folds", type=int, default=S)
        ep.add_argument("--seed", type=int, default=S)
        ep.add_argument("--k", type=float, default=S)
        ep.add_argument("--horizon", type=int, default=S)
        if task == "detection":
            ep.add_argument("--no-calibration", action="store_true", default=S,
                            dest="no_calibration")
            ep.add_argument("--no-invariants", action="store_true", default=S,
                            dest="no_invariants")
        if task == "diagnosis":
            ep.add_argument("--granularity", choices=("family", "type"), default=S)
            ep.add_argument("--pipeline", action="store_true", default=S)
            ep.add_argument("--no-temporal", action="store_true", default=S,
                            dest="no_temporal")
            ep.add_argument("--no-fingerprint", action="store_true", default=S,
                            dest="no_fingerprint")
        if task == "remediation":
            ep.add_argument("--planner", choices=("rule", "llm", "oracle", "random"),
                            default=S)
            ep.add_argument("--per-family", type=int, default=S, dest="per_family")
            ep.add_argument("--endpoint", default=S)
        _add_config_flag(ep)
        ep.set_defaults(func=_cmd_evaluate, _required=("bench",))

    p = sub.add_parser("sweep", help="detection scores across horizons")
    p.add_argument("--bench", default=S)
    p.add_argument("--out", default=S)
    p.add_argument("--horizons", default=S, help="comma-separated step counts")
    p.add_argument("--folds", type=int, default=S)
    p.add_argument("--seed", type=int, default=S)
    p.add_argument("--k", type=float, default=S)
    _add_config_flag(p)
    p.set_defaults(func=_cmd_sweep, _required=("bench",))

    p = sub.add_parser("report", help="render a JSON report as text")
    p.add_argument("path", help="report JSON file")
    _add_config_flag(p)
    p.set_defaults(func=_cmd_report, _required=())

    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        # argparse --help exits 0; our usage errors exit 1
        return int(exc.code or 0)
    merged_probe = vars(args)
    missing = [
        name for name in getattr(args, "_required", ())
        if merged_probe.get(name) is None and not _config_provides(args, name)
    ]
    if missing:
        parser.print_usage(sys.stderr)
        flags = ", ".join(f"--{m.replace('_', '-')}" for m in missing)
        print(f"rftlab: error: missing required option(s): {flags}", file=sys.stderr)
        return EXIT_USAGE
    try:
        return args.func(args)
    except UsageExit as exc:
        return int(exc.code)
    except DATA_ERRORS as exc:
        print(f"rftlab: error: {exc}", file=sys.stderr)
        return EXIT_DATA


def _config_provides(args: argparse.Namespace, name: str) -> bool:
    config_path = getattr(args, "config", None)
    if config_path is None:
        return False
    try:
        preset = json.loads(Path(config_path).read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError):
        return False
    return isinstance(preset, dict) and preset.get(name.replace("-", "_")) is not None


if __name__ == "__main__":
    sys.exit(main())
