"""Two-stage plans for workers that are slow but not dead.

Full gradient codes pay an (s + 1)-fold replication factor to survive
workers that never answer. When stragglers are merely alpha times
slower (alpha > 1), far less redundancy suffices: split the training
rows into n(1 + r) equal partitions with r = ceil((s+1)/(alpha-1)).
Each worker first processes r dedicated naive partitions and sends
their plain gradient sum, then processes its rows of an (n, s) code
over the remaining n partitions and sends the coded combination. The
aggregator needs every naive message but only the first n - s coded
ones, whoever sent them.

The arithmetic works out so that by the time an alpha-slow worker has
finished just its naive partitions, a full-speed worker has finished
everything; when (s+1)/(alpha-1) is an integer the two instants
coincide exactly and no compute is wasted. The per-worker share of the
data is then (s+1)/n * alpha/(s+alpha) instead of (s+1)/n.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path

from .codec import (
    CYC,
    FRAC,
    GradientCode,
    build_cyc,
    build_frac,
    code_from_dict,
    code_to_dict,
)
from .errors import (
    ConfigError,
    DimensionMismatch,
    GradientCodingError,
    InvalidAlpha,
    ParseError,
)

# Relative slop under which (s+1)/(alpha-1) is treated as the integer it
# would be in exact arithmetic (e.g. alpha = 1.2 makes the float ratio
# 15.000000000000002, which must plan as 15 naive partitions, not 16).
RATIO_SNAP = 1e-9

PLAN_FIELDS = ("alpha", "naive_per_worker", "naive_assignment")


def _check_alpha(alpha: float) -> float:
    alpha = float(alpha)
    if not math.isfinite(alpha) or alpha <= 1.0:
        raise InvalidAlpha(f"slowdown factor must be finite and > 1, got {alpha}")
    return alpha


def naive_partition_count(s: int, alpha: float) -> int:
    """r = ceil((s+1)/(alpha-1)), snapping near-integer float ratios."""
    alpha = _check_alpha(alpha)
    ratio = (s + 1) / (alpha - 1.0)
    nearest = round(ratio)
    if nearest >= 1 and abs(ratio - nearest) <= RATIO_SNAP * max(1.0, abs(ratio)):
        return int(nearest)
    return int(math.ceil(ratio))


def load_fraction(n: int, s: int, alpha: float) -> float:
    """Fraction of the data a full-speed worker processes under the plan."""
    if not 1 <= s < n:
        raise DimensionMismatch(f"need 1 <= s < n, got s={s}, n={n}")
    alpha = _check_alpha(alpha)
    return (s + 1) * alpha / (n * (s + alpha))


def _canonical_assignment(n: int, r: int) -> tuple[tuple[int, ...], ...]:
    return tuple(tuple(range(w * r, (w + 1) * r)) for w in range(n))


@dataclass(frozen=True, eq=False)
class TwoStagePlan:
    """A validated two-stage layout for n workers and s slow ones."""

    n: int
    s: int
    alpha: float
    naive_per_worker: int
    code: GradientCode
    naive_assignment: tuple[tuple[int, ...], ...]

    def __post_init__(self):
        object.__setattr__(self, "alpha", _check_alpha(self.alpha))
        if not 1 <= self.s < self.n:
            raise DimensionMismatch(f"need 1 <= s < n, got s={self.s}, n={self.n}")
        if self.code.kind not in (FRAC, CYC):
            raise DimensionMismatch(f"stage two needs a coded scheme, got {self.code.kind!r}")
        if (self.code.n, self.code.s) != (self.n, self.s):
            raise DimensionMismatch(
                f"stage-two code is ({self.code.n}, s={self.code.s}), "
                f"plan is ({self.n}, s={self.s})"
            )
        want_r = naive_partition_count(self.s, self.alpha)
        if self.naive_per_worker != want_r:
            raise DimensionMismatch(
                f"naive_per_worker={self.naive_per_worker} inconsistent with "
                f"ceil((s+1)/(alpha-1))={want_r}"
            )
        canonical = _canonical_assignment(self.n, self.naive_per_worker)
        normalized = tuple(tuple(int(i) for i in row) for row in self.naive_assignment)
        if normalized != canonical:
            raise DimensionMismatch("naive assignment must be contiguous by worker")
        object.__setattr__(self, "naive_assignment", normalized)

    @property
    def naive_partitions_total(self) -> int:
        return self.n * self.naive_per_worker

    @property
    def coded_partitions_total(self) -> int:
        return self.n

    @property
    def total_partitions(self) -> int:
        return self.naive_partitions_total + self.coded_partitions_total

    @property
    def coded_offset(self) -> int:
        """Global partition index where the coded block starts."""
        return self.naive_partitions_total


def plan_partial(
    n: int,
    s: int,
    alpha: float,
    kind: str = FRAC,
    seed: int | None = None,
) -> TwoStagePlan:
    """Lay out naive and coded partitions for alpha-partial stragglers.

    ``kind`` picks the stage-two code; cyclic codes need ``seed``.
    Raises InvalidAlpha for alpha <= 1 and propagates DivisibilityError
    from the fractional construction.
    """
    alpha = _check_alpha(alpha)
    if not 1 <= s < n:
        raise DimensionMismatch(f"need 1 <= s < n, got s={s}, n={n}")
    if kind == FRAC:
        code = build_frac(n, s)
    elif kind == CYC:
        if seed is None:
            raise ConfigError("a cyclic stage-two code needs an explicit seed")
        code = build_cyc(n, s, seed)
    else:
        raise ConfigError(f"stage-two kind must be {FRAC!r} or {CYC!r}, got {kind!r}")
    r = naive_partition_count(s, alpha)
    return TwoStagePlan(
        n=n,
        s=s,
        alpha=alpha,
        naive_per_worker=r,
        code=code,
        naive_assignment=_canonical_assignment(n, r),
    )


def timing_slack(plan: TwoStagePlan) -> float:
    """alpha * r - (r + s + 1), in units of one partition's compute time.

    Non-negative by the ceiling; zero exactly when (s+1)/(alpha-1) is an
    integer, and always below alpha - 1. Positive slack means a slow
    worker's naive stage outlasts a fast worker's whole iteration by
    that much, the price of rounding r up.
    """
    r = plan.naive_per_worker
    return plan.alpha * r - (r + plan.s + 1)


def realized_load_fraction(plan: TwoStagePlan) -> float:
    """Share of rows a full-speed worker actually touches under the plan."""
    return (plan.naive_per_worker + plan.s + 1) / plan.total_partitions


def export_plan(plan: TwoStagePlan, path) -> None:
    out = code_to_dict(plan.code)
    out["alpha"] = float(plan.alpha)
    out["naive_per_worker"] = plan.naive_per_worker
    out["naive_assignment"] = [list(row) for row in plan.naive_assignment]
    Path(path).write_text(json.dumps(out, indent=1) + "\n")


def import_plan(path) -> TwoStagePlan:
    """Load and fully re-validate a plan file."""
    try:
        text = Path(path).read_text()
    except OSError as err:
        raise ParseError(f"cannot read {path}: {err}") from err
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as err:
        raise ParseError(f"{path} is not valid JSON: {err}") from err
    if not isinstance(raw, dict):
        raise ParseError(f"plan file must hold a JSON object, got {type(raw).__name__}")
    missing = sorted(set(PLAN_FIELDS) - set(raw))
    if missing:
        raise ParseError(f"missing plan fields: {', '.join(missing)}")
    code = code_from_dict(raw, extra_fields=PLAN_FIELDS)
    alpha = raw["alpha"]
    if isinstance(alpha, bool) or not isinstance(alpha, (int, float)):
        raise ParseError(f"field 'alpha' must be a number, got {alpha!r}")
    r = raw["naive_per_worker"]
    if isinstance(r, bool) or not isinstance(r, int):
        raise ParseError(f"field 'naive_per_worker' must be an integer, got {r!r}")
    rows = raw["naive_assignment"]
    if not isinstance(rows, list) or any(not isinstance(row, list) for row in rows):
        raise ParseError("field 'naive_assignment' must be a list of index lists")
    try:
        return TwoStagePlan(
            n=code.n,
            s=code.s,
            alpha=float(alpha),
            naive_per_worker=r,
            code=code,
            naive_assignment=tuple(tuple(row) for row in rows),
        )
    except GradientCodingError as err:
        raise ParseError(f"plan violates its invariants: {err}") from err
