"""Fault taxonomy: five failure families plus a healthy class.

Families group the sixteen concrete fault types by mechanism: reward
feedback (RF), policy generation (PG), optimization dynamics (OD),
credit assignment (CA), and tool/environment interaction (TE).
"""
from __future__ import annotations

from dataclasses import dataclass
from enum import Enum


class FaultFamily(str, Enum):
    RF = "RF"
    PG = "PG"
    OD = "OD"
    CA = "CA"
    TE = "TE"
    NORMAL = "NORMAL"


class FaultType(str, Enum):
    RF_1 = "RF-1"
    RF_2 = "RF-2"
    RF_3 = "RF-3"
    PG_1 = "PG-1"
    PG_2 = "PG-2"
    PG_3S = "PG-3S"
    PG_3L = "PG-3L"
    OD_1 = "OD-1"
    OD_2 = "OD-2"
    OD_3 = "OD-3"
    CA_1 = "CA-1"
    CA_2 = "CA-2"
    CA_3 = "CA-3"
    TE_1 = "TE-1"
    TE_2 = "TE-2"
    TE_3 = "TE-3"
    NORMAL = "NORMAL"

    @property
    def family(self) -> FaultFamily:
        if self is FaultType.NORMAL:
            return FaultFamily.NORMAL
        return FaultFamily(self.value.split("-")[0])


class DifficultyRegime(str, Enum):
    EASY = "Easy"
    HARD = "Hard"


FAULT_TYPES: tuple[FaultType, ...] = tuple(
    t for t in FaultType if t is not FaultType.NORMAL
)

FAMILIES: tuple[FaultFamily, ...] = (
    FaultFamily.RF,
    FaultFamily.PG,
    FaultFamily.OD,
    FaultFamily.CA,
    FaultFamily.TE,
)

FAMILY_TYPES: dict[FaultFamily, tuple[FaultType, ...]] = {
    fam: tuple(t for t in FAULT_TYPES if t.family is fam) for fam in FAMILIES
}


@dataclass(frozen=True)
class FaultLabel:
    """A (family, type) pair; the family must match the type's prefix."""

    family: FaultFamily
    fault_type: FaultType

    def __post_init__(self) -> None:
        if self.fault_type.family is not self.family:
            raise ValueError(
                f"family {self.family.value} does not match "
                f"fault type {self.fault_type.value}"
            )

    @property
    def is_normal(self) -> bool:
        return self.fault_type is FaultType.NORMAL

    @classmethod
    def normal(cls) -> "FaultLabel":
        return cls(FaultFamily.NORMAL, FaultType.NORMAL)

    @classmethod
    def of(cls, fault_type: FaultType) -> "FaultLabel":
        return cls(fault_type.family, fault_type)
