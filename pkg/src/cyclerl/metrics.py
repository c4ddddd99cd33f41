"""Analysis toolkit: accuracy-over-compression, marker frequency, entropy
smoothing, Pareto frontiers and the length/schedule lag diagnostic."""

from __future__ import annotations

import csv
from dataclasses import dataclass
from importlib import resources
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

__all__ = [
    "BenchRow",
    "AccCrReport",
    "acc_cr",
    "load_bench_table",
    "bench_table_path",
    "marker_frequency",
    "EntropySummary",
    "entropy_summary",
    "moving_average",
    "ParetoPoint",
    "pareto_export",
    "load_points",
    "write_points",
    "cycle_extrema",
    "lag_report",
]


@dataclass(frozen=True)
class BenchRow:
    name: str
    acc_init: float
    len_init: float
    acc_cur: float
    len_cur: float

    def __post_init__(self) -> None:
        for acc in (self.acc_init, self.acc_cur):
            if not 0 <= acc <= 100:
                raise ValueError(f"{self.name}: accuracy {acc} outside [0, 100]")
        if self.acc_init == 0:
            raise ValueError(f"{self.name}: initial accuracy is zero")
        if self.len_init <= 0 or self.len_cur <= 0:
            raise ValueError(f"{self.name}: lengths must be positive")

    @property
    def delta_acc(self) -> float:
        return max(self.acc_cur / self.acc_init - 1.0, 0.0)

    @property
    def cr(self) -> float:
        return self.len_cur / self.len_init


@dataclass(frozen=True)
class AccCrReport:
    names: tuple[str, ...]
    delta_acc: tuple[float, ...]
    cr: tuple[float, ...]
    aggregate: float
    method: str

    def rows(self) -> list[tuple[str, float, float]]:
        return list(zip(self.names, self.delta_acc, self.cr))


def acc_cr(rows: Sequence[BenchRow], method: str = "ratio_of_means") -> AccCrReport:
    """Relative accuracy gain over compressed ratio.

    Per benchmark ``dAcc = max(acc_cur/acc_init - 1, 0)`` and
    ``CR = len_cur/len_init``.  The default aggregate is
    ``mean(dAcc) / mean(CR)``; ``method="mean_of_ratios"`` gives
    ``mean(dAcc / CR)`` instead.
    """
    if not rows:
        raise ValueError("acc_cr needs at least one row")
    d = np.array([r.delta_acc for r in rows])
    c = np.array([r.cr for r in rows])
    if method == "ratio_of_means":
        agg = float(d.mean() / c.mean())
    elif method == "mean_of_ratios":
        agg = float((d / c).mean())
    else:
        raise ValueError(f"unknown aggregation method {method!r}")
    return AccCrReport(tuple(r.name for r in rows), tuple(d.tolist()), tuple(c.tolist()), agg, method)


def bench_table_path() -> Path:
    """Path of the shipped benchmark fixture."""
    return Path(str(resources.files("cyclerl") / "data" / "benchmarks.csv"))


def load_bench_table(path: str | Path) -> dict[str, list[BenchRow]]:
    """Read a ``model,bench,acc_init,len_init,acc_cur,len_cur`` CSV grouped by model."""
    out: dict[str, list[BenchRow]] = {}
    with open(path, newline="") as f:
        reader = csv.DictReader(f)
        expected = ["model", "bench", "acc_init", "len_init", "acc_cur", "len_cur"]
        if reader.fieldnames != expected:
            raise ValueError(f"{path}: expected header {','.join(expected)}, got {reader.fieldnames}")
        for rec in reader:
            row = BenchRow(
                rec["bench"],
                float(rec["acc_init"]),
                float(rec["len_init"]),
                float(rec["acc_cur"]),
                float(rec["len_cur"]),
            )
            out.setdefault(rec["model"], []).append(row)
    return out


def marker_frequency(responses: Iterable[Sequence[int]], markers: Iterable[int]) -> tuple[float, float]:
    """(mean marker count per response, marker count per 1000 pooled tokens)."""
    markers = set(markers)
    n_resp = n_tok = n_mark = 0
    for resp in responses:
        n_resp += 1
        n_tok += len(resp)
        n_mark += sum(1 for tok in resp if tok in markers)
    per_resp = n_mark / n_resp if n_resp else 0.0
    per_1k = 1000.0 * n_mark / n_tok if n_tok else 0.0
    return per_resp, per_1k


def moving_average(series: Sequence[float], window: int) -> np.ndarray:
    """Centered moving average, truncated to the available samples at the edges."""
    if window < 1:
        raise ValueError("window must be >= 1")
    x = np.asarray(series, dtype=np.float64)
    n = len(x)
    half_lo = (window - 1) // 2
    half_hi = window // 2
    return np.array([x[max(i - half_lo, 0) : min(i + half_hi + 1, n)].mean() for i in range(n)])


@dataclass(frozen=True)
class EntropySummary:
    smoothed: np.ndarray
    cycle_min: np.ndarray
    cycle_max: np.ndarray


def entropy_summary(trace: Sequence[float], window: int, cycle_len: int | None = None) -> EntropySummary:
    """Smoothed entropy trace with per-cycle minima and maxima of the smoothed series."""
    sm = moving_average(trace, window)
    if cycle_len is None or cycle_len >= len(sm):
        chunks = [sm] if len(sm) else []
    else:
        chunks = [sm[i : i + cycle_len] for i in range(0, len(sm), cycle_len)]
    return EntropySummary(
        sm,
        np.array([c.min() for c in chunks]),
        np.array([c.max() for c in chunks]),
    )


@dataclass(frozen=True)
class ParetoPoint:
    length: float
    accuracy: float
    label: str = ""


def pareto_export(points: Iterable[ParetoPoint | tuple]) -> list[ParetoPoint]:
    """Non-dominated points (shorter and more accurate is better), by length."""
    pts = [p if isinstance(p, ParetoPoint) else ParetoPoint(*p) for p in points]
    # sort by length, then accuracy descending; a point survives if it beats
    # every earlier point's accuracy
    order = sorted(range(len(pts)), key=lambda i: (pts[i].length, -pts[i].accuracy))
    frontier: list[ParetoPoint] = []
    best = -np.inf
    for i in order:
        p = pts[i]
        if p.accuracy > best:
            frontier.append(p)
            best = p.accuracy
    return frontier


def load_points(path: str | Path) -> list[ParetoPoint]:
    """Read ``length,accuracy[,label]`` rows (header required)."""
    with open(path, newline="") as f:
        reader = csv.DictReader(f)
        if not reader.fieldnames or not {"length", "accuracy"} <= set(reader.fieldnames):
            raise ValueError(f"{path}: header must contain length,accuracy")
        return [ParetoPoint(float(r["length"]), float(r["accuracy"]), r.get("label") or "") for r in reader]


def write_points(points: Sequence[ParetoPoint], f) -> None:
    w = csv.writer(f, lineterminator="\n")
    w.writerow(["length", "accuracy", "label"])
    for p in points:
        w.writerow([p.length, p.accuracy, p.label])


def cycle_extrema(series: Sequence[float], cycle_len: int) -> list[tuple[int, int]]:
    """(argmax, argmin) step of each complete or partial cycle."""
    x = np.asarray(series, dtype=np.float64)
    out = []
    for start in range(0, len(x), cycle_len):
        seg = x[start : start + cycle_len]
        out.append((start + int(seg.argmax()), start + int(seg.argmin())))
    return out


def lag_report(mean_len: Sequence[float], caps: Sequence[int], cycle_len: int, window: int = 5) -> list[dict]:
    """How many steps the smoothed length trough trails the scheduled trough.

    Troughs are searched in a window centred on each scheduled minimum
    (half a cycle wide), so a lagging response is attributed to the
    minimum that caused it.  Diagnostic only.
    """
    sm = moving_average(mean_len, window)
    caps = np.asarray(caps)
    out = []
    for start in range(0, len(caps), cycle_len):
        seg = caps[start : start + cycle_len]
        if len(seg) < cycle_len:
            break
        # middle of the minimum plateau (rounded caps repeat near the trough)
        lows = np.flatnonzero(seg == seg.min())
        cap_min = start + int(lows[len(lows) // 2])
        lo = max(cap_min - cycle_len // 4, 0)
        hi = min(cap_min + cycle_len // 2, len(sm))
        len_min = lo + int(sm[lo:hi].argmin())
        out.append({"cycle": start // cycle_len, "cap_trough": cap_min, "len_trough": len_min, "lag": len_min - cap_min})
    return out
