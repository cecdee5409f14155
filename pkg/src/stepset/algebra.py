"""Set operations on multiple testing procedures.

Two procedures of the same kind can be fused into one stepwise procedure by
taking the pointwise maximum (union) or minimum (intersection) of their
thresholds, and a step-up procedure at a fixed level has a step-down
complement acting on ``1 - p`` (and vice versa).  Everything else is
evaluated at output level, by applying the set operation to the rejection
sets of the operands.

Fusion is exact for step-up unions and step-down intersections.  A step-up
intersection or step-down union computed from min/max thresholds matches
the set operation only when the two thresholds do not cross; the
``verify.oracle_equivalence`` check reports the disagreement when they do.
"""

from __future__ import annotations

import typing as t
from dataclasses import dataclass, field
from enum import Enum
from typing import Iterator, Optional, Sequence

from .core import (
    BUILTINS,
    Kind,
    StepwiseProcedure,
    ThresholdFunction,
    Transform,
    builtin,
    check_level,
    check_pvalues,
)

__all__ = [
    "ALPHA",
    "Builtin",
    "Union",
    "Intersect",
    "Diff",
    "Complement",
    "ProcedureExpr",
    "Claim",
    "SetOp",
    "ClosedForm",
    "OutputLevel",
    "CompiledProcedure",
    "ErrorKind",
    "ExprError",
    "CompileError",
    "union_same_kind",
    "intersect_same_kind",
    "complement",
    "compile",
    "eval_compiled",
    "closed_form_leaves",
    "resolve_alpha",
]

Span = t.Tuple[int, int]


class ErrorKind(Enum):
    SYNTAX = "Syntax"
    UNKNOWN_BUILTIN = "UnknownBuiltin"
    ARITY = "Arity"
    PARAM_RANGE = "ParamRange"
    UNRESOLVED_ALPHA = "UnresolvedAlpha"


class ExprError(ValueError):
    """An expression could not be parsed or compiled.

    ``span`` is a ``(start, end)`` offset pair into the expression text, or
    None when the offending node carries no source position.
    """

    def __init__(self, kind: ErrorKind, message: str, span: Optional[Span] = None):
        super().__init__(message)
        self.kind = kind
        self.message = message
        self.span = span

    def __str__(self) -> str:
        where = "" if self.span is None else f" at {self.span[0]}..{self.span[1]}"
        return f"{self.kind.value} error{where}: {self.message}"


class CompileError(ExprError):
    pass


# ---------------------------------------------------------------------------
# expression tree


class _Alpha:
    """The symbolic significance level, bound when the procedure is evaluated."""

    _instance = None

    def __new__(cls):
        if cls._instance is None:
            cls._instance = super().__new__(cls)
        return cls._instance

    def __repr__(self) -> str:
        return "ALPHA"

    def __reduce__(self):
        return (_Alpha, ())


ALPHA = _Alpha()
Level = t.Union[float, _Alpha]


@dataclass(frozen=True)
class Builtin:
    name: str
    level: Optional[Level] = None  # None only for topk
    k: Optional[int] = None
    span: Optional[Span] = field(default=None, compare=False, repr=False)


@dataclass(frozen=True)
class Union:
    left: "ProcedureExpr"
    right: "ProcedureExpr"
    span: Optional[Span] = field(default=None, compare=False, repr=False)


@dataclass(frozen=True)
class Intersect:
    left: "ProcedureExpr"
    right: "ProcedureExpr"
    span: Optional[Span] = field(default=None, compare=False, repr=False)


@dataclass(frozen=True)
class Diff:
    left: "ProcedureExpr"
    right: "ProcedureExpr"
    span: Optional[Span] = field(default=None, compare=False, repr=False)


@dataclass(frozen=True)
class Complement:
    child: "ProcedureExpr"
    level: Level
    span: Optional[Span] = field(default=None, compare=False, repr=False)


ProcedureExpr = t.Union[Builtin, Union, Intersect, Diff, Complement]


# ---------------------------------------------------------------------------
# closed-form constructions


def _combine(op, label: str, h1: StepwiseProcedure, h2: StepwiseProcedure) -> StepwiseProcedure:
    if h1.kind is not h2.kind:
        raise ValueError(f"cannot fuse a {h1.kind.value} with a {h2.kind.value} procedure")
    if h1.transform is not h2.transform:
        raise ValueError("cannot fuse procedures acting on differently transformed inputs")
    if h1.m is not None and h2.m is not None and h1.m != h2.m:
        raise ValueError(f"procedures disagree on m ({h1.m} vs {h2.m})")
    a, b = h1.threshold, h2.threshold

    def rule(alpha, sp):
        return tuple(map(op, a.table(alpha, sp), b.table(alpha, sp)))

    def split(alpha, sp):
        return a.components(alpha, sp) + b.components(alpha, sp)

    tau = ThresholdFunction(
        f"{label}({a.name}, {b.name})",
        rule,
        depends_on_p=a.depends_on_p or b.depends_on_p,
        depends_on_alpha=a.depends_on_alpha or b.depends_on_alpha,
        min_m=max(a.min_m, b.min_m),
        split=split,
    )
    return StepwiseProcedure(h1.kind, tau, h1.transform, h1.m if h1.m is not None else h2.m)


def union_same_kind(h1: StepwiseProcedure, h2: StepwiseProcedure) -> StepwiseProcedure:
    """Fuse two procedures of one kind through the pointwise maximum threshold."""
    return _combine(max, "max", h1, h2)


def intersect_same_kind(h1: StepwiseProcedure, h2: StepwiseProcedure) -> StepwiseProcedure:
    """Fuse two procedures of one kind through the pointwise minimum threshold."""
    return _combine(min, "min", h1, h2)


def complement(h: StepwiseProcedure, alpha0: float) -> StepwiseProcedure:
    """Stepwise procedure rejecting what ``h`` keeps at the fixed level ``alpha0``.

    The result has the opposite kind, acts on ``1 - p`` and uses the
    threshold ``1 - tau_alpha0(m + 1 - i)``.  It agrees with the set
    complement except where some ``p_(i)`` equals ``tau_alpha0(i)`` exactly.
    """
    if isinstance(alpha0, _Alpha) or alpha0 is None:
        raise ValueError("complement needs a numeric level")
    alpha0 = check_level(alpha0)
    if h.transform is not Transform.IDENTITY:
        raise ValueError("complement is only defined for procedures acting on p")
    inner = h.threshold

    def rule(_alpha, sp):
        return tuple(1.0 - v for v in reversed(inner.table(alpha0, sp)))

    def split(_alpha, sp):
        return [
            (tuple(1.0 - v for v in reversed(tbl)), dep)
            for tbl, dep in inner.components(alpha0, sp)
        ]

    tau = ThresholdFunction(
        f"reflect({inner.name}, {alpha0!r})",
        rule,
        depends_on_p=inner.depends_on_p,
        depends_on_alpha=False,
        min_m=inner.min_m,
        split=split,
    )
    kind = Kind.STEP_DOWN if h.kind is Kind.STEP_UP else Kind.STEP_UP
    return StepwiseProcedure(kind, tau, Transform.ONE_MINUS, h.m)


# ---------------------------------------------------------------------------
# compilation


class Claim(Enum):
    GUARANTEED = "guaranteed"
    NOT_GUARANTEED = "not-guaranteed"

    def __and__(self, other: "Claim") -> "Claim":
        if self is Claim.GUARANTEED and other is Claim.GUARANTEED:
            return Claim.GUARANTEED
        return Claim.NOT_GUARANTEED


class SetOp(Enum):
    UNION = "union"
    INTERSECT = "intersect"
    DIFF = "diff"
    COMPLEMENT = "complement"


@dataclass(frozen=True)
class ClosedForm:
    procedure: StepwiseProcedure


@dataclass(frozen=True)
class OutputLevel:
    op: SetOp
    children: tuple["CompiledProcedure", ...]


@dataclass(frozen=True)
class CompiledProcedure:
    """A compiled expression plus what is known about its behaviour.

    ``pinned_alpha`` is set when a complement fixed the symbolic level; the
    procedure then only evaluates at that level.
    """

    strategy: t.Union[ClosedForm, OutputLevel]
    monotonic_claim: Claim
    well_behaved_claim: Claim
    uses_alpha: bool = False
    pinned_alpha: Optional[float] = None
    min_m: int = 1
    m: Optional[int] = None

    @property
    def is_closed_form(self) -> bool:
        return isinstance(self.strategy, ClosedForm)

    @property
    def procedure(self) -> StepwiseProcedure:
        if not isinstance(self.strategy, ClosedForm):
            raise ValueError("output-level procedure has no single threshold function")
        return self.strategy.procedure

    def __call__(self, p: Sequence[float], alpha: Optional[float] = None) -> frozenset[int]:
        return eval_compiled(self, p, alpha)


def _merge_pins(a: Optional[float], b: Optional[float], span=None) -> Optional[float]:
    if a is not None and b is not None and a != b:
        raise CompileError(
            ErrorKind.UNRESOLVED_ALPHA,
            f"alpha is fixed to both {a!r} and {b!r} by complements",
            span,
        )
    return a if a is not None else b


def _leaf(node: Builtin) -> CompiledProcedure:
    if node.name.lower() not in BUILTINS:
        raise CompileError(ErrorKind.UNKNOWN_BUILTIN, f"unknown procedure {node.name!r}", node.span)
    try:
        if node.name.lower() == "topk":
            proc = builtin("topk", k=node.k)
        elif node.level is None:
            raise CompileError(ErrorKind.ARITY, f"{node.name} needs a level", node.span)
        else:
            level = None if isinstance(node.level, _Alpha) else node.level
            proc = builtin(node.name, level)
    except CompileError:
        raise
    except ValueError as exc:
        raise CompileError(ErrorKind.PARAM_RANGE, str(exc), node.span) from None
    # A threshold read off the data itself does not inherit the
    # monotonicity of fixed-threshold procedures.
    claim = Claim.NOT_GUARANTEED if proc.threshold.depends_on_p else Claim.GUARANTEED
    return CompiledProcedure(
        ClosedForm(proc),
        claim,
        claim,
        uses_alpha=isinstance(node.level, _Alpha),
        min_m=proc.threshold.min_m,
    )


def _compile(node, alpha: Optional[float], fuse: bool) -> CompiledProcedure:
    if isinstance(node, Builtin):
        return _leaf(node)

    if isinstance(node, (Union, Intersect, Diff)):
        a = _compile(node.left, alpha, fuse)
        b = _compile(node.right, alpha, fuse)
        common = dict(
            uses_alpha=a.uses_alpha or b.uses_alpha,
            pinned_alpha=_merge_pins(a.pinned_alpha, b.pinned_alpha, node.span),
            min_m=max(a.min_m, b.min_m),
        )
        if isinstance(node, Diff):
            # Always output level: the fused alternative disagrees with the
            # set difference whenever a p-value sits exactly on a threshold.
            return CompiledProcedure(
                OutputLevel(SetOp.DIFF, (a, b)), Claim.NOT_GUARANTEED, Claim.NOT_GUARANTEED, **common
            )
        op = SetOp.UNION if isinstance(node, Union) else SetOp.INTERSECT
        if (
            fuse
            and a.is_closed_form
            and b.is_closed_form
            and a.procedure.kind is b.procedure.kind
            and a.procedure.transform is b.procedure.transform
        ):
            fused = (union_same_kind if op is SetOp.UNION else intersect_same_kind)(a.procedure, b.procedure)
            return CompiledProcedure(
                ClosedForm(fused),
                a.monotonic_claim & b.monotonic_claim,
                a.well_behaved_claim & b.well_behaved_claim,
                **common,
            )
        return CompiledProcedure(
            OutputLevel(op, (a, b)),
            a.monotonic_claim & b.monotonic_claim,
            Claim.NOT_GUARANTEED,
            **common,
        )

    if isinstance(node, Complement):
        level = node.level
        if isinstance(level, _Alpha):
            if alpha is None:
                raise CompileError(
                    ErrorKind.UNRESOLVED_ALPHA,
                    "complement needs a numeric level; bind alpha or use a literal",
                    node.span,
                )
            level = alpha
        try:
            level = check_level(level)
        except (TypeError, ValueError) as exc:
            raise CompileError(ErrorKind.PARAM_RANGE, str(exc), node.span) from None
        child = _compile(node.child, alpha, fuse)
        pin = _merge_pins(child.pinned_alpha, level if child.uses_alpha else None, node.span)
        if fuse and child.is_closed_form and child.procedure.transform is Transform.IDENTITY:
            strategy = ClosedForm(complement(child.procedure, level))
        else:
            strategy = OutputLevel(SetOp.COMPLEMENT, (child,))
        return CompiledProcedure(
            strategy,
            Claim.NOT_GUARANTEED,
            Claim.NOT_GUARANTEED,
            uses_alpha=child.uses_alpha,
            pinned_alpha=pin,
            min_m=child.min_m,
        )

    raise CompileError(ErrorKind.SYNTAX, f"not an expression node: {node!r}", getattr(node, "span", None))


def compile(
    expr: ProcedureExpr,
    alpha: Optional[float] = None,
    m: Optional[int] = None,
    *,
    fuse: bool = True,
) -> CompiledProcedure:
    """Compile an expression tree, fusing stepwise procedures where possible.

    ``alpha`` binds the symbolic level where a complement needs a constant.
    ``m`` pins the number of hypotheses; without it the result accepts any
    length at least ``min_m``.  With ``fuse=False`` every set operation is
    kept at output level, which is the reference semantics.
    """
    if alpha is not None:
        try:
            alpha = check_level(alpha)
        except ValueError as exc:
            raise CompileError(ErrorKind.PARAM_RANGE, str(exc)) from None
    out = _compile(expr, alpha, fuse)
    if alpha is not None and out.pinned_alpha is not None and out.pinned_alpha != alpha:
        raise CompileError(
            ErrorKind.UNRESOLVED_ALPHA,
            f"alpha is fixed to {out.pinned_alpha!r} by a complement but bound to {alpha!r}",
            getattr(expr, "span", None),
        )
    if m is not None:
        if isinstance(m, bool) or int(m) != m or m < 1:
            raise CompileError(ErrorKind.PARAM_RANGE, f"m must be a positive integer, got {m!r}")
        if out.min_m > m:
            raise CompileError(ErrorKind.PARAM_RANGE, f"expression needs m >= {out.min_m}, got m={m}")
        out = _pin_m(out, int(m))
    return out


def _pin_m(c: CompiledProcedure, m: int) -> CompiledProcedure:
    if isinstance(c.strategy, ClosedForm):
        proc = c.strategy.procedure
        strategy = ClosedForm(StepwiseProcedure(proc.kind, proc.threshold, proc.transform, m))
    else:
        strategy = OutputLevel(c.strategy.op, tuple(_pin_m(ch, m) for ch in c.strategy.children))
    return CompiledProcedure(
        strategy, c.monotonic_claim, c.well_behaved_claim, c.uses_alpha, c.pinned_alpha, c.min_m, m
    )


def resolve_alpha(c: CompiledProcedure, alpha: Optional[float]) -> Optional[float]:
    if c.pinned_alpha is not None:
        if alpha is None:
            return c.pinned_alpha
        if alpha != c.pinned_alpha:
            raise ValueError(
                f"procedure was compiled with alpha fixed to {c.pinned_alpha!r}; cannot evaluate at {alpha!r}"
            )
    if alpha is None:
        if c.uses_alpha:
            raise ValueError("expression uses alpha but no level was given")
        return None
    return check_level(alpha)


def _eval(c: CompiledProcedure, p: tuple[float, ...], alpha: Optional[float]) -> frozenset[int]:
    s = c.strategy
    if isinstance(s, ClosedForm):
        return s.procedure.evaluate(p, alpha)
    parts = [_eval(ch, p, alpha) for ch in s.children]
    if s.op is SetOp.UNION:
        return parts[0] | parts[1]
    if s.op is SetOp.INTERSECT:
        return parts[0] & parts[1]
    if s.op is SetOp.DIFF:
        return parts[0] - parts[1]
    return frozenset(range(1, len(p) + 1)) - parts[0]


def eval_compiled(c: CompiledProcedure, p: Sequence[float], alpha: Optional[float] = None) -> frozenset[int]:
    """1-based indices rejected by ``c`` on ``p`` at level ``alpha``."""
    p = check_pvalues(p)
    if c.m is not None and len(p) != c.m:
        raise ValueError(f"procedure expects m={c.m}, got {len(p)} p-values")
    if len(p) < c.min_m:
        raise ValueError(f"procedure needs m >= {c.min_m}, got {len(p)} p-values")
    return _eval(c, p, resolve_alpha(c, alpha))


def closed_form_leaves(c: CompiledProcedure) -> Iterator[StepwiseProcedure]:
    """Stepwise procedures at the bottom of an output-level tree (or ``c`` itself)."""
    if isinstance(c.strategy, ClosedForm):
        yield c.strategy.procedure
        return
    for ch in c.strategy.children:
        yield from closed_form_leaves(ch)
