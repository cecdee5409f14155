"""Composable step-up/step-down multiple testing procedures."""

from .algebra import (
    ALPHA,
    Builtin,
    Claim,
    ClosedForm,
    CompileError,
    CompiledProcedure,
    Complement,
    Diff,
    ErrorKind,
    ExprError,
    Intersect,
    OutputLevel,
    SetOp,
    Union,
    compile,
    complement,
    eval_compiled,
    intersect_same_kind,
    union_same_kind,
)
from .core import (
    BUILTINS,
    Kind,
    SortedView,
    StepwiseProcedure,
    ThresholdFunction,
    Transform,
    builtin,
    eval_step_down,
    eval_step_up,
    sort_pvalues,
)
from .dsl import ParseError, format_expr, parse

__version__ = "0.1.0"
