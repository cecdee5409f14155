"""Step-up and step-down evaluation and the catalogue of built-in procedures.

A stepwise procedure is fully described by its kind (step-up or step-down)
and a threshold function mapping each rank ``i`` to a critical value that the
``i``-th smallest p-value is compared against.  Indices in every public
result are 1-based and refer to positions in the caller's (unsorted) vector.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Callable, Optional, Sequence

__all__ = [
    "Kind",
    "Transform",
    "SortedView",
    "ThresholdFunction",
    "StepwiseProcedure",
    "BUILTINS",
    "builtin",
    "sort_pvalues",
    "eval_step_up",
    "eval_step_down",
    "check_pvalues",
    "check_level",
]

# (alpha, sorted p-values of the untransformed input) -> one critical value per rank
Rule = Callable[[Optional[float], Sequence[float]], "tuple[float, ...]"]
# same inputs -> [(component table, component depends on p), ...]
Splitter = Callable[[Optional[float], Sequence[float]], "list[tuple[tuple[float, ...], bool]]"]


class Kind(Enum):
    STEP_UP = "step-up"
    STEP_DOWN = "step-down"


class Transform(Enum):
    IDENTITY = "identity"
    ONE_MINUS = "one-minus"

    def apply(self, p: Sequence[float]) -> tuple[float, ...]:
        if self is Transform.IDENTITY:
            return tuple(p)
        return tuple(1.0 - v for v in p)


def check_pvalues(p: Sequence[float]) -> tuple[float, ...]:
    """Return ``p`` as a tuple of floats, raising ValueError if it is not a p-value vector."""
    values = tuple(float(v) for v in p)
    if not values:
        raise ValueError("need at least one p-value")
    for i, v in enumerate(values, start=1):
        if not 0.0 <= v <= 1.0:  # also rejects NaN
            raise ValueError(f"p-value {i} is {v!r}, outside [0, 1]")
    return values


def check_level(alpha: float) -> float:
    alpha = float(alpha)
    if not 0.0 <= alpha <= 1.0:
        raise ValueError(f"significance level {alpha!r} outside [0, 1]")
    return alpha


@dataclass(frozen=True)
class SortedView:
    """Ascending p-values with the 1-based original index of each rank."""

    order: tuple[int, ...]
    sorted_values: tuple[float, ...]

    @property
    def m(self) -> int:
        return len(self.order)


def sort_pvalues(p: Sequence[float]) -> SortedView:
    """Sort ``p`` ascending; ties keep ascending original index."""
    # sorted() is stable, so equal values keep their input order.
    order = sorted(range(len(p)), key=p.__getitem__)
    return SortedView(
        order=tuple(i + 1 for i in order),
        sorted_values=tuple(p[i] for i in order),
    )


@dataclass(frozen=True)
class ThresholdFunction:
    """Critical values ``tau_alpha(i)`` for ranks ``i = 1..m``.

    ``rule`` receives the level and the sorted p-values of the caller's
    *untransformed* vector (``m`` is its length) and returns all ``m``
    critical values at once.  Thresholds that ignore the level accept
    ``alpha=None``.

    ``split`` optionally exposes the primitive tables a composite threshold
    was built from; the verification harness measures distances to decision
    boundaries against those.
    """

    name: str
    rule: Rule = field(repr=False, compare=False)
    depends_on_p: bool = False
    depends_on_alpha: bool = True
    min_m: int = 1
    split: Optional[Splitter] = field(default=None, repr=False, compare=False)

    def table(self, alpha: Optional[float], sorted_p: Sequence[float]) -> tuple[float, ...]:
        if alpha is None and self.depends_on_alpha:
            raise ValueError(f"threshold {self.name} needs a significance level")
        if len(sorted_p) < self.min_m:
            raise ValueError(f"threshold {self.name} needs m >= {self.min_m}, got {len(sorted_p)}")
        return self.rule(alpha, sorted_p)

    def components(self, alpha: Optional[float], sorted_p: Sequence[float]) -> list[tuple[tuple[float, ...], bool]]:
        if self.split is None:
            return [(self.table(alpha, sorted_p), self.depends_on_p)]
        return self.split(alpha, sorted_p)

    def __call__(self, rank: int, alpha: Optional[float], p: Sequence[float]) -> float:
        """Critical value at 1-based ``rank`` for the (unsorted) vector ``p``."""
        if not 1 <= rank <= len(p):
            raise ValueError(f"rank {rank} outside 1..{len(p)}")
        return self.table(alpha, sorted(p))[rank - 1]


def _cut_step_up(x_sorted: Sequence[float], tau: Sequence[float]) -> float:
    cut = -math.inf
    for v, t in zip(x_sorted, tau):
        if v <= t:
            cut = v  # x_sorted ascending: the last hit is the maximum
    return cut


def _cut_step_down(x_sorted: Sequence[float], tau: Sequence[float]) -> float:
    for v, t in zip(x_sorted, tau):
        if v > t:
            return v
    return math.inf


def _rejections(kind: Kind, x: Sequence[float], tau: Sequence[float]) -> frozenset[int]:
    x_sorted = sorted(x)
    if kind is Kind.STEP_UP:
        cut = _cut_step_up(x_sorted, tau)
        return frozenset(i for i, v in enumerate(x, start=1) if v <= cut)
    cut = _cut_step_down(x_sorted, tau)
    return frozenset(i for i, v in enumerate(x, start=1) if v < cut)


def eval_step_up(tau: ThresholdFunction, p: Sequence[float], alpha: Optional[float]) -> frozenset[int]:
    """Reject every hypothesis whose p-value is at most the largest ``p_(j) <= tau(j)``."""
    p = check_pvalues(p)
    return _rejections(Kind.STEP_UP, p, tau.table(alpha, sorted(p)))


def eval_step_down(tau: ThresholdFunction, p: Sequence[float], alpha: Optional[float]) -> frozenset[int]:
    """Reject every hypothesis whose p-value is below the smallest ``p_(j) > tau(j)``."""
    p = check_pvalues(p)
    return _rejections(Kind.STEP_DOWN, p, tau.table(alpha, sorted(p)))


@dataclass(frozen=True)
class StepwiseProcedure:
    """A step-up or step-down procedure.

    With ``transform=ONE_MINUS`` the comparisons run on ``1 - p`` while the
    threshold still sees the sorted original ``p``; only complements are
    built that way.  ``m=None`` accepts any vector length.
    """

    kind: Kind
    threshold: ThresholdFunction
    transform: Transform = Transform.IDENTITY
    m: Optional[int] = None

    @property
    def name(self) -> str:
        return self.threshold.name

    def _check_m(self, p: Sequence[float]) -> None:
        if self.m is not None and len(p) != self.m:
            raise ValueError(f"procedure {self.name} expects m={self.m}, got {len(p)} p-values")

    def thresholds(self, p: Sequence[float], alpha: Optional[float]) -> tuple[float, ...]:
        """Critical values by rank of the transformed input."""
        p = check_pvalues(p)
        self._check_m(p)
        return self.threshold.table(alpha, sorted(p))

    def evaluate(self, p: Sequence[float], alpha: Optional[float]) -> frozenset[int]:
        p = check_pvalues(p)
        self._check_m(p)
        tau = self.threshold.table(alpha, sorted(p))
        return _rejections(self.kind, self.transform.apply(p), tau)


# ---------------------------------------------------------------------------
# built-in catalogue

def _bonferroni(level):
    def rule(alpha, sp):
        a = alpha if level is None else level
        return (a / len(sp),) * len(sp)
    return rule


def _sidak(level):
    def rule(alpha, sp):
        a = alpha if level is None else level
        m = len(sp)
        return tuple(1.0 - (1.0 - a) ** (1.0 / (m - i + 1)) for i in range(1, m + 1))
    return rule


def _holm(level):
    def rule(alpha, sp):
        a = alpha if level is None else level
        m = len(sp)
        return tuple(a / (m - i + 1) for i in range(1, m + 1))
    return rule


def _bh(level):
    def rule(alpha, sp):
        a = alpha if level is None else level
        m = len(sp)
        return tuple(a * i / m for i in range(1, m + 1))
    return rule


# name -> (kind, rule factory)
_LEVELLED = {
    "bonferroni": (Kind.STEP_UP, _bonferroni),
    "sidak_sd": (Kind.STEP_DOWN, _sidak),
    "sidak_su": (Kind.STEP_UP, _sidak),
    "holm": (Kind.STEP_DOWN, _holm),
    "hochberg": (Kind.STEP_UP, _holm),
    "bh": (Kind.STEP_UP, _bh),
    "bh_sd": (Kind.STEP_DOWN, _bh),
}

BUILTINS: tuple[str, ...] = tuple(_LEVELLED) + ("topk",)


def _format_level(level: Optional[float]) -> str:
    return "alpha" if level is None else repr(level)


def builtin(name: str, alpha: Optional[float] = None, *, k: Optional[int] = None) -> StepwiseProcedure:
    """Look up a catalogue procedure.

    ``alpha=None`` leaves the level symbolic: it is then supplied at
    evaluation time.  ``topk`` takes ``k`` instead of a level.
    """
    key = name.lower()
    if key == "topk":
        if k is None or isinstance(k, bool) or int(k) != k or k < 1:
            raise ValueError(f"topk needs an integer k >= 1, got {k!r}")
        k = int(k)

        def rule(_alpha, sp, k=k):
            return (sp[k - 1],) * len(sp)

        tau = ThresholdFunction(f"topk({k})", rule, depends_on_p=True, depends_on_alpha=False, min_m=k)
        return StepwiseProcedure(Kind.STEP_UP, tau)
    if key not in _LEVELLED:
        raise ValueError(f"unknown procedure {name!r}; expected one of {', '.join(BUILTINS)}")
    if k is not None:
        raise ValueError(f"{key} takes a level, not k")
    if alpha is not None:
        alpha = check_level(alpha)
    kind, factory = _LEVELLED[key]
    tau = ThresholdFunction(
        f"{key}({_format_level(alpha)})", factory(alpha), depends_on_alpha=alpha is None
    )
    return StepwiseProcedure(kind, tau)
