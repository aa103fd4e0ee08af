"""Selection-gated threshold recursion.

The threshold ``q`` moves only at selected times::

    q <- q + gamma_J * (react(err, q) - alpha)    if selected
    J <- J + 1                                     if selected

where ``gamma_J = c * J**(-beta)`` and ``react`` forces an upward move
whenever ``q < 0``.  Unselected steps only advance the clock.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable


class ContractError(ValueError):
    """An input violated a documented precondition."""


@dataclass(frozen=True)
class StepSchedule:
    """Power-law step sizes ``gamma_j = c * j**(-beta)``.

    Parameters
    ----------
    c : float
        Scale, equal to the first step ``gamma_1``.
    beta : float
        Decay exponent in (0, 1).  3/4 is the recommended default.
    """

    c: float = 1.0
    beta: float = 0.75

    def __post_init__(self):
        if not self.c > 0:
            raise ContractError(f"step scale c must be positive, got {self.c}")
        if not 0.0 < self.beta < 1.0:
            raise ContractError(f"beta must lie in (0, 1), got {self.beta}")

    def __call__(self, j: int) -> float:
        return gamma(self, j)

    def max_up_to(self, j: int) -> float:
        # nonincreasing schedule: the max over 1..j is gamma_1
        return self.c


def gamma(schedule: StepSchedule, j: int) -> float:
    """Step size for the ``j``-th selection (1-indexed)."""
    if j < 1:
        raise ContractError(f"step index must be >= 1, got {j}")
    return schedule.c * j ** (-schedule.beta)


def react(err_value: float, q: float) -> float:
    """Update signal: the realized error, or 1 when the threshold is negative."""
    if not 0.0 <= err_value <= 1.0:
        raise ContractError(f"error value must lie in [0, 1], got {err_value}")
    return err_value if q >= 0 else 1.0


@dataclass(frozen=True)
class SciState:
    """Value-semantic state of the recursion.

    ``J`` is one plus the number of selections so far, so ``gamma(J)`` is the
    step that the next selection will use.  ``t`` is the index of the next
    time step and is kept only to align traces.
    """

    q: float
    alpha: float
    B: float = 1.0
    schedule: StepSchedule = field(default_factory=StepSchedule)
    J: int = 1
    t: int = 1

    def __post_init__(self):
        if not 0.0 < self.alpha < 1.0:
            raise ContractError(f"alpha must lie in (0, 1), got {self.alpha}")
        if not self.B > 0:
            raise ContractError(f"score bound B must be positive, got {self.B}")
        if self.J < 1 or self.t < 1:
            raise ContractError("J and t are 1-indexed")

    @classmethod
    def initial(
        cls,
        alpha: float,
        B: float = 1.0,
        schedule: StepSchedule | None = None,
        q1: float | None = None,
    ) -> "SciState":
        """Fresh state with ``q1`` defaulting to ``B / 2``."""
        if q1 is None:
            q1 = 0.5 * B
        if not 0.0 <= q1 < B:
            raise ContractError(f"q1 must lie in [0, B), got {q1}")
        return cls(q=q1, alpha=alpha, B=B, schedule=schedule or StepSchedule())

    @property
    def step_size(self) -> float:
        return gamma(self.schedule, self.J)


def step(state: SciState, selected: bool, err_value: float = 0.0) -> SciState:
    """Advance the recursion by one time step.

    ``err_value`` is ignored when ``selected`` is false.
    """
    if not selected:
        return SciState(state.q, state.alpha, state.B, state.schedule, state.J, state.t + 1)
    g = gamma(state.schedule, state.J)
    q = state.q + g * (react(err_value, state.q) - state.alpha)
    return SciState(q, state.alpha, state.B, state.schedule, state.J + 1, state.t + 1)


def threshold_bounds(state: SciState) -> tuple[float, float]:
    """Range that the threshold can never leave, whatever the data."""
    g = state.schedule.max_up_to(state.J)
    return -state.alpha * g, state.B + (1.0 - state.alpha) * g


def selection_count(selections: Iterable[bool]) -> int:
    """``J(t)`` from the selection indicators at times ``1..t-1``."""
    return sum(1 for s in selections if s) + 1
