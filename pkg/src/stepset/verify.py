"""Randomized property checks for multiple testing procedures.

Every checker draws its trials from a ``random.Random`` seeded by
``(cfg.seed, property, trial index)``, so a report is a pure function of the
procedure and the config.  Violations carry the inputs that triggered them
and can be replayed with :func:`stepset.algebra.eval_compiled`.
"""

from __future__ import annotations

import math
import random
from dataclasses import dataclass, field
from typing import Iterable, Optional, Sequence

from .algebra import (
    Builtin,
    Complement,
    CompiledProcedure,
    ClosedForm,
    Claim,
    Diff,
    Intersect,
    ProcedureExpr,
    Union,
    closed_form_leaves,
    compile,
    eval_compiled,
)
from .core import Kind, StepwiseProcedure, ThresholdFunction, Transform

__all__ = [
    "CheckConfig",
    "Violation",
    "PropertyReport",
    "FDR_EXAMPLE_PVALUES",
    "as_compiled",
    "boundary_gap",
    "check_monotonicity",
    "check_condition1_part1",
    "check_condition1_part2",
    "check_condition2",
    "oracle_equivalence",
    "reference_cases",
]

# Fifteen ordered p-values from the Benjamini & Hochberg (1995) FDR example.
FDR_EXAMPLE_PVALUES = (
    0.0001, 0.0004, 0.0019, 0.0095, 0.0201, 0.0278, 0.0298, 0.0344,
    0.0459, 0.3240, 0.4262, 0.5719, 0.6528, 0.7590, 1.000,
)


@dataclass(frozen=True)
class CheckConfig:
    trials: int = 1000
    seed: int = 0
    m_range: tuple[int, int] = (1, 8)
    delta: float = 1e-7
    boundary_margin: float = 1e-4
    alpha_grid_step: float = 0.01
    continuity_step: float = 1e-6
    continuity_tolerance: float = 1e-4
    alpha_range: tuple[float, float] = (0.01, 0.5)
    alpha: Optional[float] = None  # fixes the level in every trial
    max_resamples: int = 1000

    def __post_init__(self):
        if self.trials < 0:
            raise ValueError("trials must be non-negative")
        lo, hi = self.m_range
        if not 1 <= lo <= hi:
            raise ValueError(f"bad m_range {self.m_range}")
        if self.delta <= 0:
            raise ValueError("delta must be positive")
        if self.boundary_margin <= self.delta:
            raise ValueError("boundary_margin must exceed delta")
        if min(self.alpha_grid_step, self.continuity_step, self.continuity_tolerance) <= 0:
            raise ValueError("steps and tolerances must be positive")
        a_lo, a_hi = self.alpha_range
        if not 0.0 <= a_lo <= a_hi <= 1.0:
            raise ValueError(f"bad alpha_range {self.alpha_range}")


@dataclass(frozen=True)
class Violation:
    """Inputs on which a property failed, and what was observed there."""

    p: Optional[tuple[float, ...]]
    q: Optional[tuple[float, ...]]
    alpha: Optional[float]
    alpha_prime: Optional[float]
    observed: tuple = ()
    detail: str = ""

    def describe(self) -> str:
        parts = []
        if self.p is not None:
            parts.append(f"p={list(self.p)}")
        if self.q is not None:
            parts.append(f"q={list(self.q)}")
        if self.alpha is not None:
            parts.append(f"alpha={self.alpha!r}")
        if self.alpha_prime is not None:
            parts.append(f"alpha'={self.alpha_prime!r}")
        if self.observed:
            parts.append("observed " + " vs ".join(_fmt_set(s) if isinstance(s, frozenset) else str(s) for s in self.observed))
        if self.detail:
            parts.append(self.detail)
        return ", ".join(parts)


def _fmt_set(s: frozenset) -> str:
    return "{" + ",".join(str(i) for i in sorted(s)) + "}"


@dataclass(frozen=True)
class PropertyReport:
    property: str
    trials_run: int
    violations: tuple[Violation, ...] = ()
    skipped: int = 0

    @property
    def passed(self) -> bool:
        return not self.violations

    @property
    def first_witness(self) -> Optional[Violation]:
        return self.violations[0] if self.violations else None

    def summary(self) -> str:
        status = "pass" if self.passed else f"{len(self.violations)} violation(s)"
        extra = f", {self.skipped} skipped" if self.skipped else ""
        return f"{self.property}: {status} over {self.trials_run} trials{extra}"


# ---------------------------------------------------------------------------
# helpers


def as_compiled(proc: StepwiseProcedure) -> CompiledProcedure:
    """Wrap a bare stepwise procedure so the checkers accept it."""
    return CompiledProcedure(
        ClosedForm(proc),
        Claim.NOT_GUARANTEED,
        Claim.NOT_GUARANTEED,
        uses_alpha=proc.threshold.depends_on_alpha,
        min_m=proc.threshold.min_m,
        m=proc.m,
    )


def _coerce(h) -> CompiledProcedure:
    return as_compiled(h) if isinstance(h, StepwiseProcedure) else h


def _rng(cfg: CheckConfig, prop: str, trial: int) -> random.Random:
    return random.Random(f"{cfg.seed}:{prop}:{trial}")


def _m_bounds(h: CompiledProcedure, cfg: CheckConfig) -> tuple[int, int]:
    if h.m is not None:
        return h.m, h.m
    lo, hi = max(cfg.m_range[0], h.min_m), cfg.m_range[1]
    if lo > hi:
        raise ValueError(f"procedure needs m >= {h.min_m}, outside m_range {cfg.m_range}")
    return lo, hi


def _fixed_level(h: CompiledProcedure, cfg: CheckConfig) -> Optional[float]:
    if cfg.alpha is not None:
        if h.pinned_alpha is not None and h.pinned_alpha != cfg.alpha:
            raise ValueError(f"procedure is fixed to alpha={h.pinned_alpha!r}, config asks for {cfg.alpha!r}")
        return cfg.alpha
    return h.pinned_alpha


def _alpha(rng: random.Random, cfg: CheckConfig) -> float:
    return rng.uniform(*cfg.alpha_range)


def _candidates(h: CompiledProcedure, p: Sequence[float], alpha: Optional[float]) -> list[float]:
    """Threshold values on the p scale; p-values placed there probe decision boundaries."""
    sp = sorted(p)
    out = []
    for leaf in closed_form_leaves(h):
        for tbl, _dep in leaf.threshold.components(alpha, sp):
            if leaf.transform is Transform.ONE_MINUS:
                out.extend(1.0 - v for v in tbl)
            else:
                out.extend(tbl)
    return [min(1.0, max(0.0, v)) for v in out if math.isfinite(v)]


def _pvector(rng: random.Random, m: int, candidates: Sequence[float]) -> tuple[float, ...]:
    vals = []
    for _ in range(m):
        r = rng.random()
        if candidates and r < 0.25:
            vals.append(rng.choice(candidates))
        elif r < 0.3:
            vals.append(rng.choice((0.0, 1.0)))
        else:
            vals.append(rng.random())
    return tuple(vals)


def _draw(h, rng, cfg, fixed):
    lo, hi = _m_bounds(h, cfg)
    m = rng.randint(lo, hi)
    alpha = fixed if fixed is not None else _alpha(rng, cfg)
    eval_alpha = alpha if (h.uses_alpha or fixed is not None) else None
    probe = tuple(rng.random() for _ in range(m))
    p = _pvector(rng, m, _candidates(h, probe, alpha))
    return m, p, alpha, eval_alpha


def boundary_gap(h, p: Sequence[float], alpha: Optional[float]) -> float:
    """Smallest distance between a compared value and a primitive threshold.

    Exact coincidences with a data-dependent threshold (a p-value compared
    with itself, as in ``topk``) are structural rather than boundary cases
    and are ignored.  For such thresholds ties between p-values are
    boundaries too, so the spacing of ``p`` counts towards the gap.
    """
    h = _coerce(h)
    sp = sorted(p)
    gap = math.inf
    for leaf in closed_form_leaves(h):
        xs = sorted(leaf.transform.apply(p))
        if leaf.threshold.depends_on_p:
            gap = min([gap] + [b - a for a, b in zip(sp, sp[1:])])
        for tbl, dep in leaf.threshold.components(alpha, sp):
            for x, t in zip(xs, tbl):
                d = abs(x - t)
                if d == 0.0 and dep:
                    continue
                gap = min(gap, d)
    return gap


def _evaluate(h, p, alpha):
    return eval_compiled(h, p, alpha)


# ---------------------------------------------------------------------------
# monotonicity


def _directed_monotonicity_seeds(h: CompiledProcedure, cfg: CheckConfig, fixed: Optional[float]):
    """Inputs that expose thresholds decreasing in rank or in level.

    Only applies to fixed-threshold procedures acting on p directly.
    """
    if not isinstance(h.strategy, ClosedForm):
        return
    proc = h.strategy.procedure
    tau = proc.threshold
    if proc.transform is not Transform.IDENTITY or tau.depends_on_p:
        return
    lo, hi = _m_bounds(h, cfg)
    if fixed is not None or not h.uses_alpha:
        grid = [fixed if fixed is not None else None]
    else:
        a_lo, a_hi = cfg.alpha_range
        n = max(1, int(round((a_hi - a_lo) / max(cfg.alpha_grid_step, 1e-12))))
        grid = [a_lo + (a_hi - a_lo) * j / n for j in range(n + 1)]
    for m in range(lo, min(hi, lo + 7) + 1):
        dummy = (0.0,) * m
        tables = [tau.table(a, dummy) for a in grid]
        for a, tbl in zip(grid, tables):
            for i in range(1, m):
                top, bottom = tbl[i - 1], tbl[i]
                if top > bottom:
                    step = (top - bottom) / 3.0
                    v1, v2, v3 = bottom + step, bottom + 2 * step, top
                    q = (0.0,) * (i - 1) + (v1, v2) + (1.0,) * (m - i - 1)
                    p = q[: i - 1] + (v3,) + q[i:]
                    yield p, q, a, a
        for (a, t_a), (b, t_b) in zip(zip(grid, tables), zip(grid[1:], tables[1:])):
            for i in range(1, m + 1):
                if t_a[i - 1] > t_b[i - 1]:
                    p = (0.0,) * (i - 1) + (t_a[i - 1],) + (1.0,) * (m - i)
                    yield p, p, a, b


def check_monotonicity(h, cfg: CheckConfig, seeds: Iterable = ()) -> PropertyReport:
    """Look for ``p >= q`` and ``alpha <= alpha'`` with ``h(p, alpha)`` not inside ``h(q, alpha')``.

    ``seeds`` are extra ``(p, q, alpha, alpha')`` cases tried first.
    """
    h = _coerce(h)
    fixed = _fixed_level(h, cfg)
    violations = []
    trials = 0

    def probe(p, q, a, a2):
        nonlocal trials
        trials += 1
        hp, hq = _evaluate(h, p, a), _evaluate(h, q, a2)
        if not hp <= hq:
            violations.append(Violation(tuple(p), tuple(q), a, a2, (hp, hq), "h(p, alpha) not a subset of h(q, alpha')"))

    for p, q, a, a2 in list(seeds) + list(_directed_monotonicity_seeds(h, cfg, fixed)):
        if any(x < y for x, y in zip(p, q)) or (a is not None and a2 is not None and a > a2):
            continue
        probe(p, q, a, a2)

    for t in range(cfg.trials):
        rng = _rng(cfg, "monotonicity", t)
        m, q, a2, ea2 = _draw(h, rng, cfg, fixed)
        p = []
        for v in q:
            r = rng.random()
            if r < 1 / 3:
                p.append(v)
            elif r < 0.4:
                p.append(1.0)
            else:
                p.append(rng.uniform(v, 1.0))
        if ea2 is None or fixed is not None:
            ea = ea2
        else:
            ea = a2 if rng.random() < 1 / 3 else rng.uniform(cfg.alpha_range[0], a2)
        probe(tuple(p), q, ea, ea2)
    return PropertyReport("monotonicity", trials, tuple(violations))


# ---------------------------------------------------------------------------
# invariance under lowering rejected / raising retained p-values


def check_condition1_part1(h, cfg: CheckConfig, seeds: Iterable = ()) -> PropertyReport:
    """Lower rejected and raise retained p-values; the rejection set must not change.

    ``seeds`` are extra ``(p, q, alpha)`` cases; those whose ``q`` does not
    respect the direction constraints for ``h(p, alpha)`` are skipped.
    """
    h = _coerce(h)
    fixed = _fixed_level(h, cfg)
    violations = []
    trials = skipped = 0

    def probe(p, q, a, rejected):
        nonlocal trials
        trials += 1
        hq = _evaluate(h, q, a)
        if hq != rejected:
            violations.append(Violation(tuple(p), tuple(q), a, None, (rejected, hq), "h(q) differs from h(p)"))

    for p, q, a in seeds:
        a = fixed if fixed is not None else a
        rejected = _evaluate(h, p, a)
        ok = all(
            (qi <= pi) if (i + 1) in rejected else (qi >= pi)
            for i, (pi, qi) in enumerate(zip(p, q))
        )
        if len(p) != len(q) or not ok:
            skipped += 1
            continue
        probe(p, q, a, rejected)

    for t in range(cfg.trials):
        rng = _rng(cfg, "condition1-part1", t)
        m, p, a, ea = _draw(h, rng, cfg, fixed)
        rejected = _evaluate(h, p, ea)
        q = []
        for i, v in enumerate(p, start=1):
            r = rng.random()
            if i in rejected:
                q.append(0.0 if r < 0.2 else v if r < 0.35 else rng.uniform(0.0, v))
            else:
                q.append(1.0 if r < 0.2 else v if r < 0.35 else rng.uniform(v, 1.0))
        probe(p, tuple(q), ea, rejected)
    return PropertyReport("condition1-part1", trials, tuple(violations), skipped)


# ---------------------------------------------------------------------------
# local constancy


def check_condition1_part2(h, cfg: CheckConfig) -> PropertyReport:
    """Perturb boundary-free inputs by less than ``delta``; the rejection set must not change."""
    h = _coerce(h)
    fixed = _fixed_level(h, cfg)
    violations = []
    trials = skipped = 0
    for t in range(cfg.trials):
        rng = _rng(cfg, "condition1-part2", t)
        for _ in range(cfg.max_resamples):
            m, p, a, ea = _draw(h, rng, cfg, fixed)
            if boundary_gap(h, p, a) > cfg.boundary_margin:
                break
        else:
            skipped += 1
            continue
        base = _evaluate(h, p, ea)
        direction = [rng.gauss(0.0, 1.0) for _ in range(m)]
        norm = math.sqrt(sum(d * d for d in direction)) or 1.0
        radius = rng.uniform(0.0, cfg.delta) * 0.999
        q = tuple(min(1.0, max(0.0, v + radius * d / norm)) for v, d in zip(p, direction))
        a2 = ea
        if ea is not None and fixed is None:
            a2 = min(1.0, max(0.0, ea + rng.uniform(-cfg.delta, cfg.delta) * 0.999))
        trials += 1
        moved = _evaluate(h, q, a2)
        if moved != base:
            violations.append(Violation(p, q, ea, a2, (base, moved), "rejections changed within delta"))
    return PropertyReport("condition1-part2", trials, tuple(violations), skipped)


# ---------------------------------------------------------------------------
# threshold regularity


def _alpha_grid(step: float) -> list[float]:
    n = int(round(1.0 / step))
    return [min(1.0, j * step) for j in range(n + 1)]


def _locate_jump(tau, sp, i, lo, hi, step, tol):
    """Bisect ``[lo, hi]`` down to width ``step``, following the larger change at rank ``i``."""
    vlo, vhi = tau.table(lo, sp)[i], tau.table(hi, sp)[i]
    while hi - lo > step:
        mid = (lo + hi) / 2
        vmid = tau.table(mid, sp)[i]
        if abs(vmid - vlo) >= abs(vhi - vmid):
            hi, vhi = mid, vmid
        else:
            lo, vlo = mid, vmid
    return (lo, hi, vlo, vhi) if abs(vhi - vlo) > tol else None


def check_condition2(tau: ThresholdFunction, m: int, cfg: CheckConfig, alpha: Optional[float] = None) -> PropertyReport:
    """Check ``tau`` is non-decreasing in rank, and non-decreasing and continuous in the level.

    With ``alpha`` given (or ``tau`` ignoring the level) only the rank
    condition is checked, at that single level.  Data-dependent thresholds
    are checked on ``min(trials, 20)`` random vectors.
    """
    if m < tau.min_m:
        raise ValueError(f"{tau.name} needs m >= {tau.min_m}")
    level_free = alpha is not None or not tau.depends_on_alpha
    grid = [alpha] if level_free else _alpha_grid(cfg.alpha_grid_step)
    if tau.depends_on_p:
        rng = _rng(cfg, "condition2", m)
        vectors = [tuple(sorted(rng.random() for _ in range(m))) for _ in range(max(1, min(cfg.trials, 20)))]
    else:
        vectors = [(0.0,) * m]
    violations = []
    trials = 0
    s, tol = cfg.continuity_step, cfg.continuity_tolerance
    for sp in vectors:
        shown_p = sp if tau.depends_on_p else None
        prev = None
        for a in grid:
            tbl = tau.table(a, sp)
            trials += 1
            for i, v in enumerate(tbl, start=1):
                if not 0.0 <= v <= 1.0:
                    violations.append(Violation(shown_p, None, a, None, (v,), f"tau({i}) outside [0, 1]"))
            for i in range(1, m):
                if tbl[i] < tbl[i - 1]:
                    violations.append(
                        Violation(shown_p, None, a, None, (tbl[i - 1], tbl[i]), f"decreasing in rank at pair ({i},{i + 1})")
                    )
            if level_free:
                continue
            if prev is not None:
                a0, t0 = prev
                for i in range(m):
                    if tbl[i] < t0[i]:
                        violations.append(
                            Violation(shown_p, None, a0, a, (t0[i], tbl[i]), f"decreasing in alpha at rank {i + 1}")
                        )
                # Sidak-type thresholds are infinitely steep at alpha = 1
                if a < 1.0:
                    for i in range(m):
                        if abs(tbl[i] - t0[i]) > tol:
                            jump = _locate_jump(tau, sp, i, a0, a, s, tol)
                            if jump is not None:
                                lo, hi, vlo, vhi = jump
                                violations.append(
                                    Violation(shown_p, None, lo, hi, (vlo, vhi), f"jump in alpha at rank {i + 1}")
                                )
            prev = (a, tbl)
    return PropertyReport("condition2", trials, tuple(violations))


# ---------------------------------------------------------------------------
# closed form against output-level evaluation


def _has_complement(expr) -> bool:
    if isinstance(expr, Complement):
        return True
    if isinstance(expr, (Union, Intersect, Diff)):
        return _has_complement(expr.left) or _has_complement(expr.right)
    return False


def oracle_equivalence(expr: ProcedureExpr, cfg: CheckConfig, alpha: Optional[float] = None) -> PropertyReport:
    """Compare the fused closed form of ``expr`` with plain set operations on its operands.

    Samples where a compared value sits within ``boundary_margin`` of a
    threshold are redrawn when the expression contains a complement.
    """
    fused = compile(expr, alpha)
    if not fused.is_closed_form:
        raise ValueError("expression does not compile to a closed form")
    reference = compile(expr, alpha, fuse=False)
    fixed = _fixed_level(fused, cfg)
    boundary_free = _has_complement(expr)
    violations = []
    trials = skipped = 0
    for t in range(cfg.trials):
        rng = _rng(cfg, "oracle", t)
        for _ in range(cfg.max_resamples):
            m = rng.randint(*_m_bounds(fused, cfg))
            a = fixed if fixed is not None else _alpha(rng, cfg)
            p = tuple(rng.random() for _ in range(m))
            if not boundary_free or boundary_gap(fused, p, a) > cfg.boundary_margin:
                break
        else:
            skipped += 1
            continue
        ea = a if (fused.uses_alpha or fixed is not None) else None
        trials += 1
        got, want = _evaluate(fused, p, ea), _evaluate(reference, p, ea)
        if got != want:
            violations.append(Violation(p, None, ea, None, (got, want), "closed form vs output level"))
    return PropertyReport("oracle-equivalence", trials, tuple(violations), skipped)


# ---------------------------------------------------------------------------
# fixed-vector regression cases


def _expect(name: str, cases) -> PropertyReport:
    """``cases``: iterable of (label, procedure, p, alpha, expected set)."""
    violations = []
    n = 0
    for label, h, p, a, want in cases:
        n += 1
        got = _evaluate(h, p, a)
        if got != frozenset(want):
            violations.append(Violation(tuple(p), None, a, None, (got, frozenset(want)), label))
    return PropertyReport(name, n, tuple(violations))


def _expect_violation(name: str, report: PropertyReport, p=None, q=None) -> PropertyReport:
    """Pass when ``report`` holds a violation (at ``p``, ``q`` if given)."""
    if p is None:
        hit = bool(report.violations)
    else:
        hit = any(v.p == tuple(p) and v.q == tuple(q) for v in report.violations)
    missing = () if hit else (Violation(p and tuple(p), q and tuple(q), None, None, (), "expected violation not found"),)
    return PropertyReport(name, report.trials_run, missing)


def reference_cases() -> list[PropertyReport]:
    """Reproduce the fixed counterexamples and worked example; one report per case."""
    a = 0.1
    p_star = (0.034, 0.06, 1.0)
    q_up = (0.034, 1.0, 1.0)
    q_down = (0.0, 0.06, 1.0)
    c = lambda e: compile(e)  # noqa: E731
    bh, sidak_sd = Builtin("bh", a), Builtin("sidak_sd", a)
    sidak_su, bh_sd = Builtin("sidak_su", a), Builtin("bh_sd", a)
    mixed_and = c(Intersect(bh, sidak_sd))
    mixed_or = c(Union(sidak_su, bh_sd))
    cfg = CheckConfig(trials=0)
    reports = [
        _expect(
            "mixed-intersection-counterexample",
            [
                ("bh step-up", c(bh), p_star, None, {1, 2}),
                ("sidak step-down", c(sidak_sd), p_star, None, {1}),
                ("intersection at p*", mixed_and, p_star, None, {1}),
                ("intersection at q", mixed_and, q_up, None, set()),
            ],
        ),
        _expect_violation(
            "mixed-intersection-invariance-violation",
            check_condition1_part1(mixed_and, cfg, seeds=[(p_star, q_up, a)]),
            p_star,
            q_up,
        ),
        _expect(
            "mixed-union-counterexample",
            [
                ("sidak step-up", c(sidak_su), p_star, None, {1}),
                ("bh step-down", c(bh_sd), p_star, None, set()),
                ("bh step-down at q", c(bh_sd), q_down, None, {1, 2}),
                ("union at p*", mixed_or, p_star, None, {1}),
                ("union at q", mixed_or, q_down, None, {1, 2}),
            ],
        ),
        _expect_violation(
            "mixed-union-invariance-violation",
            check_condition1_part1(mixed_or, cfg, seeds=[(p_star, q_down, a)]),
            p_star,
            q_down,
        ),
        _expect(
            "fdr-top-k-intersection",
            [
                ("bh(0.05)", c(Builtin("bh", 0.05)), FDR_EXAMPLE_PVALUES, None, {1, 2, 3, 4}),
                ("topk(3)", c(Builtin("topk", None, 3)), FDR_EXAMPLE_PVALUES, None, {1, 2, 3}),
                (
                    "bh(0.05) & topk(3)",
                    c(Intersect(Builtin("bh", 0.05), Builtin("topk", None, 3))),
                    FDR_EXAMPLE_PVALUES,
                    None,
                    {1, 2, 3},
                ),
            ],
        ),
    ]

    rank_tau = ThresholdFunction("decreasing-rank", lambda _a, _sp: (1.0, 0.0), depends_on_alpha=False, min_m=2)
    rank_proc = as_compiled(StepwiseProcedure(Kind.STEP_UP, rank_tau, m=2))
    reports.append(
        _expect(
            "decreasing-rank-threshold",
            [
                # tied p-values share one decision, so both are rejected
                ("h(0.5, 0.5)", rank_proc, (0.5, 0.5), None, {1, 2}),
                ("h(1, 0.5)", rank_proc, (1.0, 0.5), None, {2}),
            ],
        )
    )
    reports.append(
        _expect_violation("decreasing-rank-monotonicity-violation", check_monotonicity(rank_proc, cfg))
    )

    # threshold falling in the level: a hypothesis rejected at 0.1 is kept at 0.2
    level_tau = ThresholdFunction("decreasing-level", lambda al, sp: (0.5 - al,) * len(sp))
    level_proc = as_compiled(StepwiseProcedure(Kind.STEP_UP, level_tau, m=1))
    p_level = (0.5 - 0.1,)
    reports.append(
        _expect_violation(
            "decreasing-level-monotonicity-violation",
            check_monotonicity(level_proc, cfg, seeds=[(p_level, p_level, 0.1, 0.2)]),
            p_level,
            p_level,
        )
    )
    return reports
