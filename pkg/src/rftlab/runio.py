"""Run file format: one JSON header line, then one JSON object per step.

Files are UTF-8 text. The header carries run identity and labels; fault
runs additionally carry their injection summary so that a parsed run
reconstructs the original object field for field.
"""
from __future__ import annotations

import json
from pathlib import Path
from typing import Union

from .records import InjectionMeta, InvalidRecord, STEP_FIELDS, TrainStepRecord, TrainingRun
from .taxonomy import DifficultyRegime, FaultFamily, FaultLabel, FaultType

SCHEMA_VERSION = "1"


class RunFormatError(ValueError):
    """Base class for run file parse errors; carries the offending line."""

    def __init__(self, message: str, line: int):
        super().__init__(f"line {line}: {message}")
        self.line = line


class MalformedHeader(RunFormatError):
    pass


class MalformedRecord(RunFormatError):
    pass


class NonContiguousSteps(RunFormatError):
    pass


class LabelFamilyMismatch(RunFormatError):
    pass


def serialize_run(run: TrainingRun) -> bytes:
    """Encode a run as UTF-8 JSONL bytes.

    Encoding is deterministic: key order is fixed and floats keep full
    round-trip precision.
    """
    header = {
        "run_id": run.run_id,
        "label_family": run.label.family.value,
        "label_type": run.label.fault_type.value,
        "regime": None if run.regime is None else run.regime.value,
        "seed": run.seed,
        "schema_version": SCHEMA_VERSION,
    }
    if run.injection_meta is not None:
        header["injection"] = run.injection_meta.to_dict()
    lines = [json.dumps(header, separators=(",", ":"))]
    for rec in run.steps:
        lines.append(json.dumps(rec.to_dict(), separators=(",", ":")))
    return ("\n".join(lines) + "\n").encode("utf-8")


def parse_run(data: bytes) -> TrainingRun:
    """Decode run bytes, validating structure and labels.

    Raises MalformedHeader, MalformedRecord, NonContiguousSteps, or
    LabelFamilyMismatch naming the first offending line (1-based).
    """
    try:
        text = data.decode("utf-8")
    except UnicodeDecodeError as exc:
        raise MalformedHeader(f"not valid UTF-8: {exc}", line=1) from exc
    lines = text.splitlines()
    if not lines:
        raise MalformedHeader("empty file", line=1)

    try:
        header = json.loads(lines[0])
    except json.JSONDecodeError as exc:
        raise MalformedHeader(f"header is not valid JSON: {exc.msg}", line=1) from exc
    if not isinstance(header, dict):
        raise MalformedHeader("header must be a JSON object", line=1)
    required = {"run_id", "label_family", "label_type", "regime", "seed", "schema_version"}
    missing = required - set(header.keys())
    if missing:
        raise MalformedHeader(f"header missing keys {sorted(missing)}", line=1)
    if header["schema_version"] != SCHEMA_VERSION:
        raise MalformedHeader(
            f"unsupported schema_version {header['schema_version']!r}", line=1
        )

    try:
        family = FaultFamily(header["label_family"])
        fault_type = FaultType(header["label_type"])
    except ValueError as exc:
        raise MalformedHeader(f"unknown label: {exc}", line=1) from exc
    try:
        label = FaultLabel(family, fault_type)
    except ValueError as exc:
        raise LabelFamilyMismatch(str(exc), line=1) from exc

    regime_raw = header["regime"]
    try:
        regime = None if regime_raw is None else DifficultyRegime(regime_raw)
    except ValueError as exc:
        raise MalformedHeader(f"unknown regime {regime_raw!r}", line=1) from exc

    meta = None
    if header.get("injection") is not None:
        try:
            meta = InjectionMeta.from_dict(header["injection"])
        except (KeyError, TypeError, ValueError) as exc:
            raise MalformedHeader(f"bad injection summary: {exc}", line=1) from exc

    records: list[TrainStepRecord] = []
    for line_no, raw in enumerate(lines[1:], start=2):
        if not raw.strip():
            raise MalformedRecord("blank line inside record block", line=line_no)
        try:
            obj = json.loads(raw)
        except json.JSONDecodeError as exc:
            raise MalformedRecord(f"not valid JSON: {exc.msg}", line=line_no) from exc
        if not isinstance(obj, dict):
            raise MalformedRecord("record must be a JSON object", line=line_no)
        try:
            rec = TrainStepRecord.from_dict(obj)
        except InvalidRecord as exc:
            raise MalformedRecord(str(exc), line=line_no) from exc
        expected = len(records)
        if rec.step != expected:
            raise NonContiguousSteps(
                f"expected step {expected}, got {rec.step}", line=line_no
            )
        records.append(rec)

    if not records:
        raise MalformedRecord("run contains no step records", line=2)

    try:
        return TrainingRun(
            run_id=str(header["run_id"]),
            label=label,
            regime=regime,
            seed=int(header["seed"]),
            steps=tuple(records),
            injection_meta=meta,
        )
    except ValueError as exc:
        raise MalformedHeader(str(exc), line=1) from exc


def write_run(run: TrainingRun, path: Union[str, Path]) -> None:
    Path(path).write_bytes(serialize_run(run))


def read_run(path: Union[str, Path]) -> TrainingRun:
    return parse_run(Path(path).read_bytes())
