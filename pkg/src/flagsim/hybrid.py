"""Noisy-gradient ribbon with local error repair by message passing.

Agents on a line read a noisy value of a monotone gradient M(x), color
themselves by two thresholds, and then the agents whose reading is too
close to a threshold are overwritten by color waves sent in from the
certain agents just outside their interval.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np
from scipy import integrate, optimize, special

from .errors import OverlappingUncertainty
from .sim import (LEFT, OPPOSITE, RIGHT, AgentProgram, AgentView, Color, Counter, Flag,
                  StepContext, Topology, build_line, run)


@dataclass(frozen=True)
class NoisyGradient:
    sigma: float
    a: float = 1.0
    T1: float = 1 / 3
    T2: float = 2 / 3
    M: Callable[[float], float] | None = None  # None means the linear map x / a
    M_inv: Callable[[float], float] | None = None

    def __post_init__(self):
        if self.sigma < 0:
            raise ValueError("sigma must be non-negative")
        if self.a <= 0:
            raise ValueError("domain length must be positive")
        if not self.T1 < self.T2:
            raise ValueError("need T1 < T2")

    @property
    def linear(self) -> bool:
        return self.M is None

    def mean(self, x):
        if self.M is None:
            return np.asarray(x, dtype=float) / self.a if np.ndim(x) else x / self.a
        return self.M(x)

    def inverse(self, level: float) -> float:
        """Position where the mean gradient equals ``level`` (clipped to the domain)."""
        if self.M is None:
            return min(max(level * self.a, 0.0), self.a)
        if self.M_inv is not None:
            return self.M_inv(level)
        lo, hi = self.M(0.0), self.M(self.a)
        if level <= lo:
            return 0.0
        if level >= hi:
            return self.a
        return optimize.brentq(lambda x: self.M(x) - level, 0.0, self.a, xtol=1e-14)


def sample_measurement(x, g: NoisyGradient, rng):
    mu = g.mean(x)
    if g.sigma == 0:
        return mu
    return rng.normal(mu, g.sigma, size=np.shape(mu)) if np.ndim(mu) else rng.normal(mu, g.sigma)


def threshold_color(m: float, T1: float, T2: float) -> int:
    if not T1 < T2:
        raise ValueError("need T1 < T2")
    if m <= T1:
        return 1
    if m <= T2:
        return 2
    return 3


def threshold_colors(ms, T1: float, T2: float) -> np.ndarray:
    ms = np.asarray(ms, dtype=float)
    return np.where(ms <= T1, 1, np.where(ms <= T2, 2, 3))


def _log_mass(lo: float, hi: float) -> float:
    """log(Phi(hi) - Phi(lo)) without cancellation in either tail."""
    if hi <= lo:
        return -math.inf
    if lo > 0:
        a, b = special.log_ndtr(-lo), special.log_ndtr(-hi)
    else:
        a, b = special.log_ndtr(hi), special.log_ndtr(lo)
    if b == -math.inf:
        return float(a)
    return float(a + math.log1p(-math.exp(b - a)))


def posterior(m: float, g: NoisyGradient) -> tuple[float, float, float]:
    """Posterior (blue, white, red) probabilities of a reading ``m`` under a uniform position prior."""
    if g.sigma == 0:
        z = threshold_color(m, g.T1, g.T2)
        return tuple(1.0 if z == i else 0.0 for i in (1, 2, 3))
    if g.linear:
        # the mean is uniform on [0, 1], so the posterior is a truncated normal
        s = g.sigma
        cuts = [0.0, min(max(g.T1, 0.0), 1.0), min(max(g.T2, 0.0), 1.0), 1.0]
        logs = [_log_mass((cuts[i] - m) / s, (cuts[i + 1] - m) / s) for i in range(3)]
        top = max(logs)
        w = [math.exp(v - top) if v > -math.inf else 0.0 for v in logs]
        tot = sum(w)
        return tuple(v / tot for v in w)
    x1, x2 = g.inverse(g.T1), g.inverse(g.T2)
    s = g.sigma

    def dens(x):
        return math.exp(-0.5 * ((m - g.M(x)) / s) ** 2)

    parts = []
    for lo, hi in ((0.0, x1), (x1, x2), (x2, g.a)):
        parts.append(integrate.quad(dens, lo, hi, limit=200, epsabs=0, epsrel=1e-11)[0]
                     if hi > lo else 0.0)
    tot = sum(parts)
    if tot == 0:
        # reading far outside the range: all mass sits at the nearer domain end
        return (1.0, 0.0, 0.0) if m < g.M(0.0) else (0.0, 0.0, 1.0)
    return tuple(p / tot for p in parts)


@dataclass(frozen=True)
class Marking:
    """Minimal covering interval (inclusive agent indices) per threshold, or None."""

    T1: tuple | None
    T2: tuple | None
    uncertain: tuple = ()

    @property
    def s_T1(self) -> int:
        return 0 if self.T1 is None else self.T1[1] - self.T1[0] + 1

    @property
    def s_T2(self) -> int:
        return 0 if self.T2 is None else self.T2[1] - self.T2[0] + 1

    def intervals(self) -> list[tuple]:
        return [iv for iv in (self.T1, self.T2) if iv is not None]

    def marked(self, n: int) -> list[bool]:
        flags = [False] * n
        for i, j in self.intervals():
            for p in range(i, j + 1):
                flags[p] = True
        return flags


def uncertain_agents(measurements: Sequence[float], g: NoisyGradient, rule: str = "zscore",
                     z: float = 3.0, c: float = 0.99) -> list[int]:
    """0 for certain agents, else the index (1 or 2) of the nearest threshold."""
    if rule not in ("zscore", "posterior"):
        raise ValueError(f"unknown uncertainty rule {rule!r}")
    out = []
    for m in measurements:
        near = 1 if abs(m - g.T1) <= abs(m - g.T2) else 2
        if g.sigma == 0:
            out.append(0)
        elif rule == "zscore":
            out.append(near if abs(m - (g.T1 if near == 1 else g.T2)) < z * g.sigma else 0)
        else:
            out.append(near if max(posterior(m, g)) < c else 0)
    return out


def mark_uncertain(colors: Sequence[int], measurements: Sequence[float], g: NoisyGradient,
                   rule: str = "zscore", z: float = 3.0, c: float = 0.99) -> Marking:
    """Per threshold, the smallest contiguous run of agents holding all its uncertain agents."""
    if len(colors) != len(measurements):
        raise ValueError("colors and measurements differ in length")
    tags = uncertain_agents(measurements, g, rule, z, c)
    spans = {}
    for i, t in enumerate(tags):
        if t:
            lo, hi = spans.get(t, (i, i))
            spans[t] = (min(lo, i), max(hi, i))
    iv1, iv2 = spans.get(1), spans.get(2)
    if iv1 and iv2 and not (iv1[1] < iv2[0] or iv2[1] < iv1[0]):
        raise OverlappingUncertainty(f"intervals {iv1} and {iv2} overlap")
    return Marking(iv1, iv2, tuple(i for i, t in enumerate(tags) if t))


# --- repair protocol --------------------------------------------------------

class RepairState:
    __slots__ = ("color", "marked", "mark_l", "mark_r", "is_start", "has_l", "has_r",
                 "settled", "halted")

    def __init__(self, color, marked, mark_l, mark_r, view: AgentView):
        self.color = color
        self.marked = marked
        self.mark_l = mark_l  # left neighbor is marked
        self.mark_r = mark_r
        self.is_start = view.is_start
        self.has_l = LEFT in view.sides
        self.has_r = RIGHT in view.sides
        self.settled = False
        self.halted = False


class RepairProgram(AgentProgram):
    """Yield-to-first repair of marked intervals.

    Every certain agent next to a marked interval is initially awake and sends
    its color into the interval.  A marked agent adopts the first color that
    reaches it; when waves from both sides arrive together it takes the left
    one.  Waves only travel between marked agents.
    """

    name = "repair"

    def __init__(self, colors: Sequence[int], marked: Sequence[bool], k: int = 3):
        if len(colors) != len(marked):
            raise ValueError("colors and marks differ in length")
        self.initial = list(colors)
        self.marks = list(marked)
        self.k = k

    def starters(self) -> list[int]:
        n = len(self.marks)
        out = []
        for i, mk in enumerate(self.marks):
            if mk:
                continue
            if (i > 0 and self.marks[i - 1]) or (i < n - 1 and self.marks[i + 1]):
                out.append(i)
        return out

    def configure(self, topo: Topology) -> None:
        if topo.n != len(self.marks):
            raise ValueError("topology size does not match the coloring")
        self.cwidth = Color(self.k).bits or 1
        self.messages = {"color": self.cwidth}
        self.schema = {"color": Color(self.k), "marked": Flag(), "settled": Flag(),
                       "halted": Flag()}

    def init_state(self, view: AgentView) -> RepairState:
        i = view.agent_id  # sensor input only: initial color and mark flags
        n = len(self.marks)
        return RepairState(self.initial[i], self.marks[i],
                           i > 0 and self.marks[i - 1], i < n - 1 and self.marks[i + 1], view)

    def step(self, st: RepairState, inbox: list, ctx: StepContext) -> list:
        out = []
        if not st.marked:
            if st.is_start and ctx.now == 0:
                if st.mark_l:
                    out.append((LEFT, st.color, self.cwidth))
                if st.mark_r:
                    out.append((RIGHT, st.color, self.cwidth))
            st.halted = True
            return out
        if st.settled:
            return out
        sides = {side for side, _ in inbox}
        side = LEFT if LEFT in sides else RIGHT
        st.color = next(c for s, c in inbox if s == side)
        st.settled = True
        if len(sides) == 1:
            onward = OPPOSITE[side]
            if (onward == LEFT and st.mark_l) or (onward == RIGHT and st.mark_r):
                out.append((onward, st.color, self.cwidth))
        st.halted = True
        return out

    def memory_view(self, st: RepairState, now: int) -> dict:
        return {"color": st.color, "marked": int(st.marked), "settled": int(st.settled),
                "halted": int(st.halted)}


@dataclass
class RepairResult:
    colors: list
    rounds: int
    interval_rounds: list  # (interval, rounds) pairs
    msg_bits: int
    trace: object = None


def repair_coloring(colors: Sequence[int], marking: Marking, k: int = 3,
                    seed: int = 0) -> RepairResult:
    n = len(colors)
    marked = marking.marked(n)
    if not any(marked):
        return RepairResult(list(colors), 0, [], 0)
    prog = RepairProgram(colors, marked, k)
    starts = prog.starters()
    if not starts:
        # the marks cover the whole line; nobody outside can vouch for a color
        return RepairResult(list(colors), 0, [(iv, 0) for iv in marking.intervals()], 0)
    tr = run(prog, build_line(n), starts, seed=seed)
    per = []
    for i, j in marking.intervals():
        rounds = [tr.last_round[p] for p in range(max(0, i - 1), min(n, j + 2))
                  if tr.last_round[p] is not None]
        per.append(((i, j), max(rounds) if rounds else 0))
    final = [c if c is not None else colors[p] for p, c in enumerate(tr.colors)]
    return RepairResult(final, tr.rounds, per, tr.total_message_bits, tr)


# --- distributed marking ------------------------------------------------------

class GapMarkState:
    __slots__ = ("tag", "sides", "heard")

    def __init__(self, tag: int, sides: frozenset):
        self.tag = tag  # 0 for certain, else nearest threshold index
        self.sides = sides
        self.heard = {}  # threshold -> sides it was announced from


class GapMarking(AgentProgram):
    """Distributed variant of interval marking.

    Locally uncertain agents announce their threshold to both sides with a hop
    budget ``ttl``.  A certain agent that hears the same threshold from both
    sides lies between two uncertain agents and marks itself.  With ``ttl`` at
    least the widest gap this reproduces the minimal covering intervals.
    """

    name = "gap-marking"
    silent = True

    def __init__(self, tags: Sequence[int], ttl: int):
        if ttl < 1:
            raise ValueError("ttl must be at least 1")
        self.tags = list(tags)
        self.ttl = int(ttl)

    def configure(self, topo: Topology) -> None:
        self.width = 1 + max(1, math.ceil(math.log2(self.ttl + 1)))
        self.messages = {"mark": self.width}
        self.schema = {"tag": Color(2), "heard_1": Counter(3), "heard_2": Counter(3)}

    def init_state(self, view: AgentView) -> GapMarkState:
        return GapMarkState(self.tags[view.agent_id], view.sides)

    def step(self, st: GapMarkState, inbox: list, ctx: StepContext) -> list:
        out = []
        if ctx.now == 0 and st.tag and not inbox:
            out = [(d, (st.tag, self.ttl), self.width) for d in (LEFT, RIGHT) if d in st.sides]
        for side, (thr, ttl) in inbox:
            st.heard.setdefault(thr, set()).add(side)
            onward = OPPOSITE[side]
            if ttl > 1 and not st.tag and onward in st.sides:
                out.append((onward, (thr, ttl - 1), self.width))
        return out

    def color(self, st: GapMarkState):
        return None

    def marked(self, st: GapMarkState) -> bool:
        return bool(st.tag) or any(len(s) == 2 for s in st.heard.values())

    def memory_view(self, st: GapMarkState, now: int) -> dict:
        def code(thr):
            s = st.heard.get(thr)
            return None if not s else (LEFT in s) + 2 * (RIGHT in s)
        return {"tag": st.tag or None, "heard_1": code(1), "heard_2": code(2)}


def distributed_marks(tags: Sequence[int], ttl: int, seed: int = 0) -> list[bool]:
    """Per-agent marks produced by running GapMarking on a line."""
    n = len(tags)
    starts = [i for i, t in enumerate(tags) if t]
    if not starts:
        return [False] * n
    prog = GapMarking(tags, ttl)
    final: list = []
    run(prog, build_line(n), starts, seed=seed,
        observer=lambda r, sts: final.__setitem__(slice(None), sts))
    return [st is not None and prog.marked(st) for st in final]


# --- tradeoff experiment ------------------------------------------------------

TRADEOFF_COLUMNS = ["sigma", "trial", "s_T1", "s_T2", "repair_rounds",
                    "frac_correct_norepair", "frac_correct_repair"]


@dataclass
class HybridTrial:
    sigma: float
    trial: int
    s_T1: int
    s_T2: int
    repair_rounds: int
    frac_correct_norepair: float
    frac_correct_repair: float
    interval_rounds: list
    overlap: bool = False

    def row(self) -> list:
        return [self.sigma, self.trial, self.s_T1, self.s_T2, self.repair_rounds,
                self.frac_correct_norepair, self.frac_correct_repair]


def hybrid_trial(n: int, sigma: float, rng, trial: int = 0, z: float = 3.0,
                 rule: str = "zscore", c: float = 0.99, a: float = 1.0,
                 T1: float = 1 / 3, T2: float = 2 / 3) -> HybridTrial:
    g = NoisyGradient(sigma, a, T1, T2)
    xs = (np.arange(n) + 0.5) * a / n
    truth = threshold_colors(g.mean(xs), T1, T2)
    ms = sample_measurement(xs, g, rng)
    noisy = threshold_colors(ms, T1, T2)
    base = float(np.mean(noisy == truth))
    try:
        marking = mark_uncertain(noisy.tolist(), ms.tolist(), g, rule, z, c)
    except OverlappingUncertainty:
        return HybridTrial(sigma, trial, -1, -1, 0, base, base, [], True)
    res = repair_coloring(noisy.tolist(), marking)
    fixed = float(np.mean(np.asarray(res.colors) == truth))
    return HybridTrial(sigma, trial, marking.s_T1, marking.s_T2, res.rounds, base, fixed,
                       res.interval_rounds)
