"""Steady-state power-law gradients, the size-invariant ribbon colorer, and the
indistinguishable-pair construction for corner-sourced 2D gradients."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

from .errors import (ConstructionError, InvalidMeasurement, SingularityError,
                     UnsupportedAspect)
from .sim import Color, Trace

# Default sampling offset inside each cell, as a fraction of the cell width.
# Any offset in (0, 1/k] reproduces canonical bands; see run_concentration_ribbon.
DEFAULT_OFFSET = 0.125


def concentration_at(point, source, alpha: float) -> float:
    """Concentration ``dist(point, source) ** -alpha`` at a point."""
    d = math.dist(_as_tuple(point), _as_tuple(source))
    if d == 0:
        raise SingularityError("point coincides with a source")
    return d ** -alpha


def _as_tuple(p) -> tuple:
    return (float(p),) if isinstance(p, (int, float)) else tuple(float(v) for v in p)


@dataclass(frozen=True)
class GradientField:
    alpha: float
    a: float
    b: float | None = None  # None for a 1D segment

    def __post_init__(self):
        if self.alpha <= 0:
            raise ValueError("alpha must be positive")
        if self.a <= 0 or (self.b is not None and self.b <= 0):
            raise ValueError("domain dimensions must be positive")

    @property
    def sources(self) -> list[tuple]:
        if self.b is None:
            return [(0.0,), (float(self.a),)]
        a, b = float(self.a), float(self.b)
        return [(0.0, 0.0), (a, 0.0), (0.0, b), (a, b)]

    def measure(self, point) -> tuple[float, ...]:
        return tuple(concentration_at(point, s, self.alpha) for s in self.sources)


def position_fraction(c1: float, c2: float, alpha: float) -> float:
    """Recover x/a from the two end-source concentrations of a segment."""
    if not (c1 > 0 and c2 > 0) or not (math.isfinite(c1) and math.isfinite(c2)):
        raise InvalidMeasurement(f"concentrations must be finite and positive: {c1}, {c2}")
    d1 = c1 ** (-1.0 / alpha)
    d2 = c2 ** (-1.0 / alpha)
    return d1 / (d1 + d2)


def exact_concentration_color(m: Sequence[float], alpha: float, k: int) -> int:
    """Color z with (z-1)/k < f <= z/k, where f is the recovered position fraction."""
    if len(m) != 2:
        raise InvalidMeasurement(f"expected two concentrations, got {len(m)}")
    if k < 2:
        raise ValueError("k must be at least 2")
    f = position_fraction(m[0], m[1], alpha)
    if f <= 0:
        return 1
    return min(k, max(1, math.ceil(f * k)))


def agent_positions(n: int, a: float, offset: float = DEFAULT_OFFSET) -> list[float]:
    return [(j + offset) * a / n for j in range(n)]


def run_concentration_ribbon(n: int, a: float, alpha: float, k: int,
                             offset: float = DEFAULT_OFFSET) -> Trace:
    """Every agent colors itself from its own measurement; no messages are sent.

    Agent j samples the field at ``(j + offset) * a / n``.  With ``offset``
    at most ``1/k`` the result matches ``canonical_color`` exactly; the cell
    center (``offset=0.5``) is also accepted but rounds some agents up.
    """
    if n < 1:
        raise ValueError("n must be positive")
    if not 0 < offset < 1:
        raise ValueError("offset must lie in (0, 1)")
    field = GradientField(alpha, a)
    colors = [exact_concentration_color(field.measure(x), alpha, k)
              for x in agent_positions(n, a, offset)]
    mem = Color(k).bits
    return Trace(rounds=0, total_message_bits=0, peak_memory_bits=mem, colors=colors,
                 halted=[True] * n, quiescent_round=None, messages=0,
                 agent_peak_memory=[mem] * n, wake_round=[0] * n)


@dataclass(frozen=True)
class WitnessPair:
    eps: float
    a: float
    b: float
    x: float
    y: float
    a2: float
    b2: float
    x2: float
    y2: float

    def corner_distances(self) -> tuple[tuple, tuple]:
        first = tuple(math.dist((self.x, self.y), c)
                      for c in ((0, 0), (self.a, 0), (0, self.b), (self.a, self.b)))
        second = tuple(math.dist((self.x2, self.y2), c)
                       for c in ((0, 0), (self.a2, 0), (0, self.b2), (self.a2, self.b2)))
        return first, second

    def residuals(self) -> tuple[float, float]:
        """Relative residuals of the near-side and far-side squared-distance equalities."""
        l1 = self.x ** 2 + self.b ** 2 / 4
        r1 = self.x2 ** 2 + self.b2 ** 2 / 4
        l2 = (self.x - self.a) ** 2 + self.b ** 2 / 4
        r2 = (self.x2 - self.a2) ** 2 + self.b2 ** 2 / 4
        return abs(l1 - r1) / max(abs(l1), 1e-300), abs(l2 - r2) / max(abs(l2), 1e-300)

    def to_record(self) -> dict:
        d1, d2 = self.residuals()
        return {"eps": self.eps, "a": self.a, "b": self.b, "x": self.x, "y": self.y,
                "a_prime": self.a2, "b_prime": self.b2, "x_prime": self.x2,
                "y_prime": self.y2, "residual_d1": d1, "residual_d2": d2}


def construct_witness(a: float, b: float, eps: float) -> WitnessPair:
    """Two flags and one point in each that see identical distances to all four corners.

    The first point sits eps inside the middle stripe of an a x b flag; the
    second sits eps inside the first stripe of an a' x b' flag.
    """
    if not 0 < eps < 1 / 6:
        raise ConstructionError(f"eps must lie in (0, 1/6), got {eps}")
    if not (a > 0 and b > 0):
        raise ConstructionError("dimensions must be positive")
    if a <= b:
        raise UnsupportedAspect("construction needs a > b; transpose the flag first")
    ratio = (1 / 3 - 2 * eps) / (1 / 3 + 2 * eps)
    a2 = a * math.sqrt(ratio)
    x = (1 / 3 + eps) * a
    x2 = (1 / 3 - eps) * a2
    b2sq = 4 * x * x + b * b - 4 * x2 * x2
    if not (a2 > 0 and x2 > 0 and b2sq > 0):
        raise ConstructionError("construction produced a non-positive dimension")
    b2 = math.sqrt(b2sq)
    return WitnessPair(eps, a, b, x, b / 2, a2, b2, x2, b2 / 2)
