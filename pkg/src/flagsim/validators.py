"""Checks for final colorings: exact ribbons, exact flags and eps-approximate flags."""

from __future__ import annotations

from collections import Counter as _Tally
from dataclasses import dataclass, field
from typing import Sequence

from .errors import IncompleteColoring, InvalidSpec


@dataclass
class Verdict:
    ok: bool
    reason: str = ""
    violations: list = field(default_factory=list)

    def __bool__(self) -> bool:
        return self.ok


@dataclass(frozen=True)
class FlagSpec:
    k: int
    a: int  # columns
    b: int = 1  # rows
    eps: float = 0.05


def canonical_color(i: int, n: int, k: int) -> int:
    """Reference band assignment: position ``i`` of ``n`` gets ``floor(i*k/n) + 1``."""
    if n < 1 or k < 1:
        raise ValueError("n and k must be positive")
    if not 0 <= i < n:
        raise IndexError(f"position {i} not in 0..{n - 1}")
    return i * k // n + 1


def canonical_coloring(n: int, k: int) -> list[int]:
    return [i * k // n + 1 for i in range(n)]


def _require_decided(colors: Sequence) -> None:
    for i, c in enumerate(colors):
        if c is None:
            raise IncompleteColoring(f"agent {i} has not decided")


def validate_exact_ribbon(colors: Sequence, k: int) -> Verdict:
    _require_decided(colors)
    for i, c in enumerate(colors):
        if not 1 <= c <= k:
            return Verdict(False, f"agent {i} has color {c} outside 1..{k}", [i])
    for i in range(1, len(colors)):
        if colors[i] < colors[i - 1]:
            return Verdict(False, f"colors decrease at agent {i} "
                                  f"({colors[i - 1]} -> {colors[i]})", [i])
    # non-decreasing already implies contiguous bands
    tally = _Tally(colors)
    counts = [tally.get(z, 0) for z in range(1, k + 1)]
    hi, lo = max(counts), min(counts)
    if hi - lo > 1:
        zmax = counts.index(hi) + 1
        zmin = counts.index(lo) + 1
        return Verdict(False, f"band sizes differ by {hi - lo} "
                              f"(color {zmax}: {hi}, color {zmin}: {lo})")
    return Verdict(True)


def validate_exact_flag(colors: Sequence, k: int, a: int, b: int) -> Verdict:
    """``colors`` is row-major over ``a`` columns and ``b`` rows."""
    _require_decided(colors)
    if len(colors) != a * b:
        raise ValueError(f"expected {a * b} colors, got {len(colors)}")
    for r in range(b):
        v = validate_exact_ribbon(colors[r * a:(r + 1) * a], k)
        if not v:
            return Verdict(False, f"row {r}: {v.reason}",
                           [r * a + i for i in v.violations])
    for c in range(a):
        top = colors[c]
        for r in range(1, b):
            if colors[r * a + c] != top:
                return Verdict(False, f"column {c} is not monochromatic at row {r}",
                               [r * a + c])
    return Verdict(True)


def eps_allowed_colors(col: int, spec: FlagSpec) -> tuple[int | None, set]:
    """(forced color or None, set of colors permitted) for an agent in column ``col``."""
    k, a, eps = spec.k, spec.a, spec.eps
    x = col + 0.5
    tol = 1e-12 * a
    forced = None
    allowed = set()
    for z in range(1, k + 1):
        inner_lo, inner_hi = ((z - 1) / k + eps) * a, (z / k - eps) * a
        if inner_lo - tol <= x <= inner_hi + tol:
            forced = z
        outer_lo, outer_hi = ((z - 1) / k - eps) * a, (z / k + eps) * a
        if outer_lo - tol <= x <= outer_hi + tol:
            allowed.add(z)
    if forced is not None:
        allowed &= {forced}
    return forced, allowed


def validate_eps_flag(colors: Sequence, spec: FlagSpec) -> Verdict:
    """Check both stripe conditions for every agent; the verdict lists offending agents."""
    if not 0 < spec.eps < 1:
        raise InvalidSpec(f"eps must lie in (0, 1), got {spec.eps}")
    _require_decided(colors)
    a, b = spec.a, spec.b
    if len(colors) != a * b:
        raise ValueError(f"expected {a * b} colors, got {len(colors)}")
    allowed_by_col = [eps_allowed_colors(c, spec)[1] for c in range(a)]
    bad = [i for i, z in enumerate(colors) if z not in allowed_by_col[i % a]]
    if bad:
        i = bad[0]
        return Verdict(False, f"{len(bad)} agents violate the stripe conditions "
                              f"(first: agent {i} color {colors[i]} at column {i % a})", bad)
    return Verdict(True)
