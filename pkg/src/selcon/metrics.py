"""Running error metrics and the adversarial FCP bound."""

from __future__ import annotations

import math
from dataclasses import dataclass, field, fields
from typing import Iterable, Sequence

import numpy as np

from .core import StepSchedule, gamma


@dataclass
class TraceRecord:
    t: int
    selected: bool
    err: float  # 0 when not selected
    q: float  # threshold in force at time t
    J: int  # one plus selections before t, within the current restart segment
    fcp: float = 0.0
    bound: float = math.inf
    ier: float | None = None
    power: float | None = None
    segment: int = 0


@dataclass
class Trace:
    """Column store of :class:`TraceRecord` values plus run metadata."""

    t: np.ndarray
    selected: np.ndarray
    err: np.ndarray
    q: np.ndarray
    J: np.ndarray
    fcp: np.ndarray
    bound: np.ndarray
    ier: np.ndarray
    power: np.ndarray
    segment: np.ndarray
    meta: dict = field(default_factory=dict)
    extra: dict = field(default_factory=dict)

    COLUMNS = ("t", "selected", "err", "q", "J", "fcp", "bound", "ier", "power")

    @classmethod
    def from_records(cls, records: Sequence[TraceRecord], meta: dict | None = None, extra: dict | None = None) -> "Trace":
        def col(name, dtype=float):
            return np.array([getattr(r, name) for r in records], dtype=dtype)

        def opt(name):
            return np.array([np.nan if getattr(r, name) is None else getattr(r, name) for r in records], dtype=float)

        return cls(
            t=col("t", np.int64),
            selected=col("selected", bool),
            err=col("err"),
            q=col("q"),
            J=col("J", np.int64),
            fcp=col("fcp"),
            bound=col("bound"),
            ier=opt("ier"),
            power=opt("power"),
            segment=col("segment", np.int64),
            meta=dict(meta or {}),
            extra=dict(extra or {}),
        )

    def __len__(self) -> int:
        return len(self.t)

    def __getitem__(self, i: int) -> TraceRecord:
        ier = None if np.isnan(self.ier[i]) else float(self.ier[i])
        power = None if np.isnan(self.power[i]) else float(self.power[i])
        return TraceRecord(
            int(self.t[i]), bool(self.selected[i]), float(self.err[i]), float(self.q[i]), int(self.J[i]),
            float(self.fcp[i]), float(self.bound[i]), ier, power, int(self.segment[i]),
        )

    def __iter__(self):
        return (self[i] for i in range(len(self)))

    @property
    def restarts(self) -> int:
        return int(self.segment[-1]) if len(self) else 0


def _columns(trace) -> tuple[np.ndarray, np.ndarray]:
    if isinstance(trace, Trace):
        return trace.selected, trace.err
    recs = list(trace)
    return (np.array([r.selected for r in recs], dtype=bool), np.array([r.err for r in recs], dtype=float))


def fcp(trace: Trace | Iterable[TraceRecord]) -> float:
    """Average error over selected times; 0 before the first selection."""
    sel, err = _columns(trace)
    k = int(sel.sum())
    return float((err * sel).sum() / max(1, k))


def fcp_path(selected, err) -> np.ndarray:
    """``FCP_t`` for every prefix."""
    sel = np.asarray(selected, dtype=bool)
    e = np.where(sel, np.asarray(err, dtype=float), 0.0)
    return np.cumsum(e) / np.maximum(1, np.cumsum(sel))


def fcp_bound(J: int, schedule: StepSchedule, B: float = 1.0, alpha: float = 0.1) -> float:
    """``alpha + (B + gamma_1) / (J * gamma_J)``, valid for nonincreasing steps."""
    if J < 1:
        raise ValueError("J must be >= 1")
    return alpha + (B + gamma(schedule, 1)) / (J * gamma(schedule, J))


def fcp_bound_general(J: int, steps: Sequence[float], B: float = 1.0, alpha: float = 0.1) -> float:
    """Bound for an arbitrary positive step sequence ``steps[0] = gamma_1, ...``.

    ``alpha + (B + max gamma) / J * (1/gamma_1 + sum_j |1/gamma_j - 1/gamma_{j-1}|)``
    over the first ``J`` steps.
    """
    if J < 1:
        raise ValueError("J must be >= 1")
    g = np.asarray(steps[:J], dtype=float)
    if len(g) < J:
        raise ValueError(f"need {J} steps, got {len(g)}")
    inv = 1.0 / g
    variation = inv[0] + np.abs(np.diff(inv)).sum()
    return float(alpha + (B + g.max()) / J * variation)


@dataclass
class Summary:
    final_fcp: float
    final_q: float
    selection_rate: float
    mean_ier: float
    t_converge: int | None
    restarts: int
    n: int

    def as_dict(self) -> dict:
        return {f.name: getattr(self, f.name) for f in fields(self)}


def time_to_convergence(q: np.ndarray, q0: float, band: float) -> int | None:
    """First ``t`` (1-indexed) after which ``|q_s - q0| <= band`` for all ``s >= t``."""
    outside = np.flatnonzero(np.abs(np.asarray(q) - q0) > band)
    if len(outside) == 0:
        return 1
    last = int(outside[-1])
    return last + 2 if last + 1 < len(q) else None


def summarize(trace: Trace, q0: float | None = None, band: float = 0.05) -> Summary:
    if len(trace) == 0:
        raise ValueError("cannot summarize an empty trace")
    logged = trace.ier[~np.isnan(trace.ier)]
    return Summary(
        final_fcp=fcp(trace),
        final_q=float(trace.q[-1]),
        selection_rate=float(trace.selected.mean()),
        mean_ier=float(logged.mean()) if logged.size else math.nan,
        t_converge=None if q0 is None else time_to_convergence(trace.q, q0, band),
        restarts=trace.restarts,
        n=len(trace),
    )
