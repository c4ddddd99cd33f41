"""Rollout-length schedulers that oscillate the token cap between two levels.

Every kind starts a cycle at ``l_max`` (compression first, then expansion),
so curves of different kinds share a phase origin.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from enum import Enum
from pathlib import Path

__all__ = [
    "ScheduleKind",
    "ScheduleSpec",
    "cap_at",
    "raw_cap",
    "dump_curve",
    "write_curve_csv",
]


class ScheduleKind(str, Enum):
    STAIR = "stair"
    COSINE = "cosine"
    STAIR_COSINE = "stair_cosine"


@dataclass(frozen=True)
class ScheduleSpec:
    """Scheduler configuration.

    Attributes:
        kind: Curve shape.
        l_max: Upper token cap, reached at the start of every cycle.
        l_min: Lower token cap, reached mid-cycle.
        cycle_len: Steps per compression-expansion cycle.
        n_cycles: Number of full cycles a training run covers.
    """

    kind: ScheduleKind
    l_max: int
    l_min: int
    cycle_len: int
    n_cycles: int = 1

    def __post_init__(self) -> None:
        object.__setattr__(self, "kind", ScheduleKind(self.kind))
        if not 1 <= self.l_min <= self.l_max:
            raise ValueError(f"need 1 <= l_min <= l_max, got l_min={self.l_min}, l_max={self.l_max}")
        if self.cycle_len < 2:
            raise ValueError(f"cycle_len must be >= 2, got {self.cycle_len}")
        if self.n_cycles < 1:
            raise ValueError(f"n_cycles must be >= 1, got {self.n_cycles}")

    @property
    def total_steps(self) -> int:
        return self.n_cycles * self.cycle_len

    def to_dict(self) -> dict:
        return {
            "kind": self.kind.value,
            "l_max": self.l_max,
            "l_min": self.l_min,
            "cycle_len": self.cycle_len,
            "n_cycles": self.n_cycles,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ScheduleSpec":
        return cls(**d)


def _phase(spec: ScheduleSpec, t: int) -> float:
    return 2.0 * math.pi * (t % spec.cycle_len) / spec.cycle_len


def raw_cap(spec: ScheduleSpec, t: int) -> float:
    """Real-valued cap at step ``t`` before rounding."""
    if t < 0:
        raise ValueError(f"step must be >= 0, got {t}")
    mid = (spec.l_max + spec.l_min) / 2.0
    amp = (spec.l_max - spec.l_min) / 2.0
    phi = _phase(spec, t)
    if spec.kind is ScheduleKind.COSINE:
        return mid + amp * math.cos(phi)
    if spec.kind is ScheduleKind.STAIR:
        return float(spec.l_max if phi < math.pi else spec.l_min)
    # stair-cosine: plateau, cosine descent, plateau, cosine ascent
    if phi < math.pi / 4 or phi >= 7 * math.pi / 4:
        return float(spec.l_max)
    if phi < 3 * math.pi / 4:
        return mid + amp * math.cos(2.0 * (phi - math.pi / 4))
    if phi < 5 * math.pi / 4:
        return float(spec.l_min)
    return mid + amp * math.cos(2.0 * (phi - 3 * math.pi / 4))


def cap_at(spec: ScheduleSpec, t: int) -> int:
    """Token cap in force at training step ``t`` (periodic in ``cycle_len``)."""
    # round half up; Python's round() would send ties to even
    cap = math.floor(raw_cap(spec, t) + 0.5)
    return min(max(cap, spec.l_min), spec.l_max)


def dump_curve(spec: ScheduleSpec, t_end: int) -> list[tuple[int, int]]:
    """``(t, cap)`` pairs for ``t = 0 .. t_end - 1``."""
    if t_end < 1:
        raise ValueError(f"t_end must be >= 1, got {t_end}")
    return [(t, cap_at(spec, t)) for t in range(t_end)]


def write_curve_csv(curve: list[tuple[int, int]], path: str | Path) -> None:
    with open(path, "w", newline="") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(["step", "cap"])
        w.writerows(curve)
