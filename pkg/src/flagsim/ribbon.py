"""Message-passing programs that color a line into k ordered bands.

All programs assume an oriented line: every agent can tell its left port
from its right port, and color 1 belongs on the left.
"""

from __future__ import annotations

import math

from .counter import FlajoletCounter, beta_for, exponent_cap
from .errors import InvalidParameter
from .sim import (LEFT, OPPOSITE, RIGHT, AgentProgram, AgentView, Color, Counter,
                  Flag, StepContext, Topology, width_for)
from .validators import canonical_color


def color_from_counts(n_left: int, n_right: int, k: int) -> int:
    """Band of an agent that has ``n_left`` agents to its left and ``n_right`` to its right."""
    if n_left < 0 or n_right < 0:
        raise ValueError("counts must be non-negative")
    return canonical_color(n_left, n_left + n_right + 1, k)


def _check_k(k: int) -> None:
    if k < 2:
        raise ValueError("k must be at least 2")


# --- Exact Count ----------------------------------------------------------

class CountState:
    __slots__ = ("is_start", "left_end", "right_end", "from_right", "t0",
                 "n_l", "n_r", "fire_at", "early_side", "color", "halted")

    def __init__(self, view: AgentView):
        self.is_start = view.is_start
        self.left_end = LEFT not in view.sides
        self.right_end = RIGHT not in view.sides
        self.from_right = None  # side the wake-up came from; None for the start
        self.t0 = 0  # t at wake time, equal to the hop distance to the start
        self.n_l = None
        self.n_r = None
        self.fire_at = None  # value of t at which the early rule fires
        self.early_side = None
        self.color = None
        self.halted = False


class ExactCount(AgentProgram):
    """Hop-count wave from the start, then counts flowing in from both endpoints.

    An agent that knows only ``n_d`` decides the extreme color on side ``d``
    once the missing count has been silent long enough to prove that the
    agent sits in that extreme band.
    """

    name = "exact-count"

    def __init__(self, k: int):
        _check_k(k)
        self.k = k

    def configure(self, topo: Topology) -> None:
        n, k = topo.n, self.k
        self.width = width_for(n)
        self.messages = {"hop": self.width, "count": self.width}
        self.schema = {
            "t": Counter(3 * n + 2 * k),
            "countdown": Counter((2 * k - 1) * n + 2 * k),
            "n_l": Counter(n),
            "n_r": Counter(n),
            "color": Color(k),
            "from_right": Flag(),
            "halted": Flag(),
        }

    def init_state(self, view: AgentView) -> CountState:
        return CountState(view)

    def _threshold(self, side: str, n_d: int) -> int:
        # t +- n_mid must reach this before the extreme color is certain
        if side == LEFT:
            return 2 * (self.k - 1) * n_d
        return 2 * (self.k - 1) * n_d + 2 * self.k - 4

    def _decide(self, st: CountState, color: int) -> None:
        st.color = color
        st.halted = True
        st.fire_at = None

    def step(self, st: CountState, inbox: list, ctx: StepContext) -> list:
        out = []
        w = self.width
        now = ctx.now
        msgs = inbox
        if now == 0:
            if st.is_start:
                n_mid = 0
            else:
                side, n_mid = inbox[0]
                st.from_right = side == RIGHT
                msgs = inbox[1:]
            st.t0 = n_mid
            for d in ((LEFT, RIGHT) if st.is_start else (OPPOSITE[side],)):
                if (d == LEFT and not st.left_end) or (d == RIGHT and not st.right_end):
                    out.append((d, n_mid + 1, w))
            if st.left_end:
                st.n_l = 0
                if not st.right_end:
                    out.append((RIGHT, 1, w))
            if st.right_end:
                st.n_r = 0
                if not st.left_end:
                    out.append((LEFT, 1, w))
        t = st.t0 + now

        for side, v in msgs:
            if side == LEFT:
                st.n_l = v
                if not st.right_end:
                    out.append((RIGHT, v + 1, w))
            else:
                st.n_r = v
                if not st.left_end:
                    out.append((LEFT, v + 1, w))

        if st.n_l is not None and st.n_r is not None:
            self._decide(st, color_from_counts(st.n_l, st.n_r, self.k))
            return out
        if st.left_end:
            self._decide(st, 1)
            return out
        if st.right_end:
            # color k needs n_l >= k - 1; a left count still missing at t proves
            # n_l > (t + t0) / 2, which is enough once t >= 2(k - 2) - t0
            if st.fire_at is None:
                st.fire_at = 2 * (self.k - 2) - st.t0
                st.early_side = RIGHT
            if t >= st.fire_at:
                self._decide(st, self.k)
            return out

        if st.fire_at is None and (st.n_l is not None or st.n_r is not None):
            d = LEFT if st.n_l is not None else RIGHT
            n_d = st.n_l if d == LEFT else st.n_r
            # the count arrived just now, so its arrival round pins n_mid:
            # t = 2 n_d - n_mid if the start lies on side d, else t = 2 n_d + n_mid
            start_on_d = st.from_right is not None and st.from_right == (d == RIGHT)
            if start_on_d:
                n_mid = 2 * n_d - t
                st.fire_at = self._threshold(d, n_d) + n_mid
            else:
                n_mid = t - 2 * n_d
                st.fire_at = self._threshold(d, n_d) - n_mid
            st.early_side = d
        if st.fire_at is not None and t >= st.fire_at:
            self._decide(st, 1 if st.early_side == LEFT else self.k)
        return out

    def deadline(self, st: CountState):
        if st.fire_at is None:
            return None
        return st.fire_at - st.t0

    def memory_view(self, st: CountState, now: int) -> dict:
        t = st.t0 + now
        view = {
            "n_l": st.n_l,
            "n_r": st.n_r,
            "color": st.color,
            "from_right": None if st.from_right is None else int(st.from_right),
            "halted": int(st.halted),
        }
        if st.fire_at is None:
            view["t"] = t
        else:
            view["countdown"] = max(0, st.fire_at - t)
        return view


# --- Exact Silent Count ---------------------------------------------------

ZERO, ONE, BOTH = 0, 1, 2  # token ids; BOTH is the combined 2-bit token
_FINAL = {ZERO: LEFT, ONE: RIGHT}


class SilentState:
    __slots__ = ("is_start", "left_end", "right_end", "tokens", "key", "count_from",
                 "count_start", "n_l", "n_r", "seen", "done", "color", "halted")

    def __init__(self, view: AgentView):
        self.is_start = view.is_start
        self.left_end = LEFT not in view.sides
        self.right_end = RIGHT not in view.sides
        self.tokens = None  # tokens in circulation
        self.key = None  # token whose passes time the counts
        self.count_from = None  # side the key must come from to stop the count
        self.count_start = None  # local round the running count started
        self.n_l = None
        self.n_r = None
        self.seen = {}  # token -> set of travel directions observed here
        self.done = set()
        self.color = None
        self.halted = False


class ExactSilentCount(AgentProgram):
    """Two one-bit tokens bounce between the endpoints; gaps between passes give the counts.

    Token 0 ends its life travelling left and token 1 travelling right.  When
    the start is an endpoint a single 2-bit token is used instead, and its
    final direction is the way it first left the start.
    """

    name = "silent-count"

    def __init__(self, k: int):
        _check_k(k)
        self.k = k

    def configure(self, topo: Topology) -> None:
        n = topo.n
        self.messages = {"token": 1, "combined": 2}
        self.schema = {
            "n_l": Counter(2 * n),
            "n_r": Counter(2 * n),
            "key": Counter(2),
            "phase_from_right": Flag(),
            "seen_0": Counter(3),
            "seen_1": Counter(3),
            "color": Color(self.k),
            "halted": Flag(),
        }

    def init_state(self, view: AgentView) -> SilentState:
        return SilentState(view)

    def _final_dir(self, st: SilentState, token: int) -> str:
        if token == BOTH:
            return st.seen[BOTH][0]
        return _FINAL[token]

    def _pass(self, st: SilentState, token: int, moving: str, out: list) -> None:
        """Record a token travelling in direction ``moving`` and relay or bounce it."""
        width = 2 if token == BOTH else 1
        seen = st.seen.setdefault(token, [])
        if moving not in seen:
            seen.append(moving)
        final = self._final_dir(st, token)
        at_edge = (moving == LEFT and st.left_end) or (moving == RIGHT and st.right_end)
        if at_edge:
            if moving == final and OPPOSITE[final] in seen:
                st.done.add(token)
                return
            moving = OPPOSITE[moving]
        if moving not in seen:
            seen.append(moving)
        if moving == final and OPPOSITE[final] in seen:
            st.done.add(token)
        out.append((moving, token, width))

    def _key_arrived(self, st: SilentState, side: str, now: int) -> None:
        if st.count_from is None or side != st.count_from:
            return
        gap = now - st.count_start
        if side == LEFT:
            st.n_l = gap // 2
        else:
            st.n_r = gap // 2
        # the count on the arrival side finished; count the other side next
        other = OPPOSITE[side]
        if (st.n_l if other == LEFT else st.n_r) is None:
            st.count_from = other
            st.count_start = now
        else:
            st.count_from = None

    def step(self, st: SilentState, inbox: list, ctx: StepContext) -> list:
        out = []
        now = ctx.now
        if now == 0:
            if st.left_end:
                st.n_l = 0
            if st.right_end:
                st.n_r = 0
            if st.is_start:
                if st.left_end and st.right_end:
                    st.tokens = ()
                elif st.left_end or st.right_end:
                    st.tokens = (BOTH,)
                    d = RIGHT if st.left_end else LEFT
                    st.seen[BOTH] = [d]
                    out.append((d, BOTH, 2))
                    st.key = BOTH
                    st.count_from = d
                    st.count_start = 0
                else:
                    st.tokens = (ZERO, ONE)
                    st.seen[ZERO] = [LEFT]
                    st.seen[ONE] = [RIGHT]
                    out.append((LEFT, ZERO, 1))
                    out.append((RIGHT, ONE, 1))
                    # both counts run from round 0; each stops when its token returns
                    st.count_start = 0
        for side, token in inbox:
            moving = OPPOSITE[side]
            if st.tokens is None:
                st.tokens = (BOTH,) if token == BOTH else (ZERO, ONE)
            if st.key is None and not st.is_start:
                st.key = token
                st.count_start = now
                if st.left_end or st.right_end:
                    st.count_from = side
                else:
                    st.count_from = OPPOSITE[side]
            if st.is_start and st.key is None:
                # interior start: token 0 returns from the left, token 1 from the right
                if token == ZERO and side == LEFT and st.n_l is None:
                    st.n_l = now // 2
                elif token == ONE and side == RIGHT and st.n_r is None:
                    st.n_r = now // 2
            elif token == st.key and now > st.count_start:
                self._key_arrived(st, side, now)
            self._pass(st, token, moving, out)
        if (st.tokens is not None and st.n_l is not None and st.n_r is not None
                and all(tok in st.done for tok in st.tokens)):
            st.color = color_from_counts(st.n_l, st.n_r, self.k)
            st.halted = True
        return out

    def memory_view(self, st: SilentState, now: int) -> dict:
        def count(final, side):
            if final is not None:
                return final
            if st.count_from == side or (st.is_start and st.key is None and st.tokens):
                return now - st.count_start
            return None

        def seen_code(tok):
            s = st.seen.get(tok)
            if not s:
                return None
            return (1 if LEFT in s else 0) + (2 if RIGHT in s else 0)

        return {
            "n_l": count(st.n_l, LEFT),
            "n_r": count(st.n_r, RIGHT),
            "key": st.key,
            "phase_from_right": None if st.count_from is None else int(st.count_from == RIGHT),
            "seen_0": seen_code(ZERO) if st.key != BOTH else seen_code(BOTH),
            "seen_1": seen_code(ONE),
            "color": st.color,
            "halted": int(st.halted),
        }


# --- Bubble Sort ----------------------------------------------------------

class SortState:
    __slots__ = ("is_start", "has_left", "has_right", "value", "parity", "left", "right",
                 "next_at")

    def __init__(self, view: AgentView):
        self.is_start = view.is_start
        self.has_left = LEFT in view.sides
        self.has_right = RIGHT in view.sides
        self.value = None
        self.parity = 0  # position parity relative to the start
        self.left = None  # cached value of the left neighbor
        self.right = None
        self.next_at = None  # next local round with a pending swap


class BubbleSort(AgentProgram):
    """Cyclic initial colors from the wake-up wave, then odd-even transposition sort.

    A pair compares in the rounds where both sides agree they are partners;
    each side applies the same ascending reorder.  Agents only message a
    neighbor when their own value changes, so a sorted line falls silent.
    """

    name = "bubble-sort"
    silent = True

    def __init__(self, k: int):
        _check_k(k)
        self.k = k

    def configure(self, topo: Topology) -> None:
        k = self.k
        self.vwidth = Color(k).bits or 1
        self.messages = {"wake": self.vwidth + 1, "value": self.vwidth}
        self.schema = {
            "value": Color(k),
            "left": Color(k),
            "right": Color(k),
            "parity": Flag(),
            "clock": Flag(),
        }

    def init_state(self, view: AgentView) -> SortState:
        return SortState(view)

    def color(self, st: SortState):
        return st.value

    def halted(self, st: SortState) -> bool:
        return False

    def _partner_right(self, st: SortState, now: int) -> bool:
        # global round parity is (now + parity) mod 2 since agents wake one hop per round
        return (now + st.parity) % 2 == st.parity

    def step(self, st: SortState, inbox: list, ctx: StepContext) -> list:
        now = ctx.now
        out = []
        if now == 0:
            if st.is_start:
                st.value, st.parity = 1, 0
                for d, ok in ((LEFT, st.has_left), (RIGHT, st.has_right)):
                    if ok:
                        out.append((d, ("wake", st.value, st.parity), self.vwidth + 1))
                return out
            side, (_, v, p) = inbox[0]
            inbox = inbox[1:]
            step_dir = 1 if side == LEFT else -1
            st.value = (v - 1 + step_dir) % self.k + 1
            st.parity = 1 - p
            if side == LEFT:
                st.left = v
            else:
                st.right = v
            out.append((side, ("val", st.value), self.vwidth))
            far = OPPOSITE[side]
            if (far == LEFT and st.has_left) or (far == RIGHT and st.has_right):
                out.append((far, ("wake", st.value, st.parity), self.vwidth + 1))
        for side, (_, v) in inbox:
            if side == LEFT:
                st.left = v
            else:
                st.right = v
        if now > 0:
            self._compare(st, now, out)
        st.next_at = self._next_swap(st, now)
        return out

    def _compare(self, st: SortState, now: int, out: list) -> None:
        if self._partner_right(st, now):
            if st.right is not None and st.value > st.right:
                st.value, st.right = st.right, st.value
                if st.has_left:
                    out.append((LEFT, ("val", st.value), self.vwidth))
        else:
            if st.left is not None and st.left > st.value:
                st.value, st.left = st.left, st.value
                if st.has_right:
                    out.append((RIGHT, ("val", st.value), self.vwidth))

    def _next_swap(self, st: SortState, now: int):
        best = None
        if st.right is not None and st.value > st.right:
            best = now + 1 if self._partner_right(st, now + 1) else now + 2
        if st.left is not None and st.left > st.value:
            cand = now + 2 if self._partner_right(st, now + 1) else now + 1
            best = cand if best is None else min(best, cand)
        return best

    def deadline(self, st: SortState):
        return st.next_at

    def memory_view(self, st: SortState, now: int) -> dict:
        return {"value": st.value, "left": st.left, "right": st.right,
                "parity": st.parity, "clock": (now + st.parity) % 2}


# --- Approximate Count ----------------------------------------------------

class ApproxState:
    __slots__ = ("is_start", "left_end", "right_end", "c_l", "c_r", "color", "halted")

    def __init__(self, view: AgentView):
        self.is_start = view.is_start
        self.left_end = LEFT not in view.sides
        self.right_end = RIGHT not in view.sides
        self.c_l = None
        self.c_r = None
        self.color = None
        self.halted = False


def default_delta(eps: float, k: int) -> float:
    return math.log2(1 / eps) + 2 * math.log2(k) + 8


class ApproxCount(AgentProgram):
    """Wake-up wave, then probabilistic counters flowing in from both endpoints.

    ``rule="estimate"`` compares the unbiased size estimates recovered from
    the two exponents; ``rule="log-ratio"`` compares the raw exponent
    difference against ``log_beta(i / (k - i))``.
    """

    name = "approx-count"

    def __init__(self, k: int, eps: float, delta: float | None = None, rule: str = "estimate"):
        _check_k(k)
        if not 0 < eps < 1 / (2 * (k - 1)):
            raise InvalidParameter(f"eps must lie in (0, 1/(2(k-1))) = (0, {1 / (2 * (k - 1)):.4g}),"
                                   f" got {eps}")
        if rule not in ("estimate", "log-ratio"):
            raise InvalidParameter(f"unknown decision rule {rule!r}")
        self.k = k
        self.eps = eps
        self.delta = default_delta(eps, k) if delta is None else float(delta)
        if self.delta < 0:
            raise InvalidParameter("delta must be non-negative")
        self.beta = beta_for(self.delta)
        self.rule = rule

    def configure(self, topo: Topology) -> None:
        cap = exponent_cap(topo.n, self.delta)
        self.cwidth = width_for(cap)
        self.messages = {"wake": 1, "counter": self.cwidth}
        self.schema = {"c_l": Counter(cap), "c_r": Counter(cap),
                       "color": Color(self.k), "halted": Flag()}

    def init_state(self, view: AgentView) -> ApproxState:
        return ApproxState(view)

    def decide(self, c_l: int, c_r: int) -> int:
        k = self.k
        if self.rule == "log-ratio":
            diff = c_l - c_r
            log_b = math.log(self.beta)
            for i in range(1, k):
                if diff <= math.log(i / (k - i)) / log_b:
                    return i
            return k
        est_l = FlajoletCounter(self.delta, c_l).estimate()
        est_r = FlajoletCounter(self.delta, c_r).estimate()
        for i in range(1, k):
            if est_l * (k - i) <= i * est_r:
                return i
        return k

    def step(self, st: ApproxState, inbox: list, ctx: StepContext) -> list:
        out = []
        msgs = inbox
        if ctx.now == 0:
            if st.is_start:
                dirs = (LEFT, RIGHT)
            else:
                side = inbox[0][0]
                msgs = inbox[1:]
                dirs = (OPPOSITE[side],)
            for d in dirs:
                if (d == LEFT and not st.left_end) or (d == RIGHT and not st.right_end):
                    out.append((d, None, 1))
            for end, c_attr, d in ((st.left_end, "c_l", RIGHT), (st.right_end, "c_r", LEFT)):
                if end:
                    setattr(st, c_attr, 0)
                    if not (st.left_end and st.right_end):
                        nxt = FlajoletCounter(self.delta, 0).increment(ctx.rng)
                        out.append((d, nxt.C, self.cwidth))
        for side, c in msgs:
            if side == LEFT:
                st.c_l = c
                fwd = RIGHT if not st.right_end else None
            else:
                st.c_r = c
                fwd = LEFT if not st.left_end else None
            if fwd is not None:
                nxt = FlajoletCounter(self.delta, c).increment(ctx.rng)
                out.append((fwd, nxt.C, self.cwidth))
        if st.c_l is not None and st.c_r is not None:
            st.color = self.decide(st.c_l, st.c_r)
            st.halted = True
        return out

    def memory_view(self, st: ApproxState, now: int) -> dict:
        return {"c_l": st.c_l, "c_r": st.c_r, "color": st.color, "halted": int(st.halted)}


PROGRAMS = {
    "exact-count": ExactCount,
    "silent-count": ExactSilentCount,
    "bubble-sort": BubbleSort,
}
