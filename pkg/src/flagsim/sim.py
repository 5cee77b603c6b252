"""Synchronous round-based scheduler for anonymous agents on lines and grids.

A round has three phases: envelopes sent in the previous round are
delivered, every agent that has mail (or a due timer) runs its step, and the
step's outgoing envelopes are queued for the next round.  Sleeping agents
wake the first time they receive something.  The starting agent is awake at
round 0.

Programs are event driven.  An agent is stepped only when it has mail or
when it asked to be woken at a later local round via ``deadline``.  Because
nothing else can change an agent's state, a run in which no envelope is in
flight and no deadline is pending is quiescent for good.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Any, Callable, Iterable, Sequence

import numpy as np

from .errors import InvalidSize, ProtocolError, RunTimeout, SchemaViolation

LEFT, RIGHT, UP, DOWN = "left", "right", "up", "down"
OPPOSITE = {LEFT: RIGHT, RIGHT: LEFT, UP: DOWN, DOWN: UP}


@dataclass(frozen=True)
class Topology:
    kind: str  # "line" or "grid"
    n: int
    a: int  # columns
    b: int  # rows
    neighbors: tuple

    def coords(self, agent: int) -> tuple[int, int]:
        """(column, row) of an agent; rows count downward from 0."""
        return agent % self.a, agent // self.a

    def agent_at(self, col: int, row: int) -> int:
        return row * self.a + col

    def rows(self, values: Sequence) -> list[list]:
        return [list(values[r * self.a:(r + 1) * self.a]) for r in range(self.b)]


def build_line(n: int) -> Topology:
    if n < 1:
        raise InvalidSize(f"line needs at least one agent, got {n}")
    nbrs = []
    for i in range(n):
        d = {}
        if i > 0:
            d[LEFT] = i - 1
        if i < n - 1:
            d[RIGHT] = i + 1
        nbrs.append(d)
    return Topology("line", n, n, 1, tuple(nbrs))


def build_grid(a: int, b: int) -> Topology:
    """Grid with ``a`` columns and ``b`` rows, agent ids in row-major order."""
    if a < 1 or b < 1:
        raise InvalidSize(f"grid dimensions must be positive, got {a}x{b}")
    nbrs = []
    for row in range(b):
        for col in range(a):
            d = {}
            if col > 0:
                d[LEFT] = row * a + col - 1
            if col < a - 1:
                d[RIGHT] = row * a + col + 1
            if row > 0:
                d[UP] = (row - 1) * a + col
            if row < b - 1:
                d[DOWN] = (row + 1) * a + col
            nbrs.append(d)
    return Topology("grid", a * b, a, b, tuple(nbrs))


# --- memory schemas -------------------------------------------------------

class _Field:
    __slots__ = ("lo", "hi", "bits")

    def check(self, value) -> bool:
        return isinstance(value, _INTS) and self.lo <= value <= self.hi

    def __eq__(self, other):
        return type(self) is type(other) and (self.lo, self.hi) == (other.lo, other.hi)

    def __hash__(self):
        return hash((type(self).__name__, self.lo, self.hi))


_INTS = (int, np.integer)


class Counter(_Field):
    """Unsigned counter field holding values in ``0..max``."""

    def __init__(self, max: int):
        if max < 0:
            raise ValueError("counter max must be non-negative")
        self.lo, self.hi = 0, int(max)
        self.bits = math.ceil(math.log2(self.hi + 1))

    @property
    def max(self) -> int:
        return self.hi

    def __repr__(self):
        return f"Counter(max={self.hi})"


class Color(_Field):
    def __init__(self, k: int):
        if k < 1:
            raise ValueError("k must be positive")
        self.lo, self.hi = 1, int(k)
        self.bits = math.ceil(math.log2(k)) if k > 1 else 0

    @property
    def k(self) -> int:
        return self.hi

    def __repr__(self):
        return f"Color(k={self.hi})"


class Flag(_Field):
    def __init__(self):
        self.lo, self.hi, self.bits = 0, 1, 1

    def __repr__(self):
        return "Flag()"


def measure_memory(schema: dict, view: dict) -> int:
    """Bit cost of an agent state under a declared schema.

    Every field that is currently set is charged its declared width
    (counters ``ceil(log2(max+1))``, colors ``ceil(log2 k)``, flags 1 bit).
    Unset optional fields (``None``) cost nothing.
    """
    total = 0
    for name, value in view.items():
        if value is None:
            if name not in schema:
                raise SchemaViolation(f"field {name!r} is not in the declared schema")
            continue
        spec = schema.get(name)
        if spec is None:
            raise SchemaViolation(f"field {name!r} is not in the declared schema")
        if not (isinstance(value, _INTS) and spec.lo <= value <= spec.hi):
            raise SchemaViolation(f"field {name!r}={value!r} outside {spec}")
        total += spec.bits
    return total


def width_for(max_value: int) -> int:
    """Bits needed to carry values in 0..max_value."""
    return max(1, math.ceil(math.log2(max_value + 1)))


# --- programs -------------------------------------------------------------

@dataclass(frozen=True)
class AgentView:
    """What an agent knows about itself when it wakes.

    ``agent_id`` exists only so programs can look up per-agent sensor input
    (e.g. a measured concentration); protocol logic must not branch on it.
    """

    agent_id: int
    sides: frozenset
    is_start: bool

    def has(self, side: str) -> bool:
        return side in self.sides


class StepContext:
    __slots__ = ("now", "rng")

    def __init__(self, rng):
        self.now = 0
        self.rng = rng


class AgentProgram:
    """Base class for per-agent state machines.

    Subclasses implement ``init_state`` and ``step``.  ``step`` receives the
    inbox as a list of ``(side, payload)`` pairs (the side the envelope came
    from, in delivery order) and returns ``(direction, payload, bit_width)``
    triples to send.  ``ctx.now`` is the agent's local round counter (0 in
    the round it woke).
    """

    name = "program"
    silent = False  # stabilizing programs never halt; runs end at quiescence
    schema: dict = {}
    messages: dict = {}  # message name -> bit width, filled by configure()

    def configure(self, topo: Topology) -> None:
        """Called once per run before any agent wakes; the harness knows n."""

    def init_state(self, view: AgentView):
        raise NotImplementedError

    def step(self, state, inbox: list, ctx: StepContext) -> list:
        raise NotImplementedError

    def deadline(self, state):
        """Local round (strictly in the future) at which to step without mail."""
        return None

    def color(self, state):
        return getattr(state, "color", None)

    def halted(self, state) -> bool:
        return getattr(state, "halted", False)

    def memory_view(self, state, now: int) -> dict:
        return {}

    def memory_bits(self, state, now: int) -> int:
        view = self.memory_view(state, now)
        key = tuple(view.items())
        memo = self.__dict__.get("_memory_memo")
        if memo is None or memo[0] is not self.schema:
            memo = self._memory_memo = (self.schema, {})
        bits = memo[1].get(key)
        if bits is None:
            bits = memo[1][key] = measure_memory(self.schema, view)
        return bits


# --- traces ---------------------------------------------------------------

@dataclass(frozen=True)
class Envelope:
    sender: int
    receiver: int
    direction: str  # direction of travel, as seen by the sender
    payload: Any
    bit_width: int
    sent_round: int


@dataclass
class Trace:
    rounds: int
    total_message_bits: int
    peak_memory_bits: int
    colors: list
    halted: list
    quiescent_round: int | None
    messages: int = 0
    agent_peak_memory: list = field(default_factory=list)
    wake_round: list = field(default_factory=list)
    last_round: list = field(default_factory=list)
    deliveries: list | None = None

    def to_record(self) -> dict:
        return {
            "rounds": self.rounds,
            "msg_bits": self.total_message_bits,
            "peak_mem_bits": self.peak_memory_bits,
            "colors": list(self.colors),
            "quiescent_round": self.quiescent_round,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_record())

    def transcript(self, agent: int) -> list:
        """(round, side, payload) of everything ``agent`` received."""
        if self.deliveries is None:
            raise ValueError("run with log_deliveries=True to get transcripts")
        return [(e.sent_round + 1, OPPOSITE[e.direction], e.payload)
                for e in self.deliveries if e.receiver == agent]


def trial_rng(master_seed: int, trial: int) -> np.random.Generator:
    """Independent generator for one trial, derived from (master seed, trial index)."""
    return np.random.default_rng(np.random.SeedSequence([int(master_seed), int(trial)]))


_EMPTY: list = []


def run(program: AgentProgram, topo: Topology, start: int | Iterable[int] = 0,
        seed: int = 0, max_rounds: int | None = None, *, rng=None,
        log_deliveries: bool = False,
        observer: Callable | None = None) -> Trace:
    """Simulate ``program`` on ``topo`` until every agent halted or the run is quiescent.

    ``start`` is the starting agent (several may be given for protocols where
    a set of agents is initially awake).  ``observer(round, states)`` is
    called after every round; it must not mutate anything.
    """
    n = topo.n
    starts = [start] if isinstance(start, (int, np.integer)) else sorted(set(start))
    if not starts:
        raise ValueError("need at least one initially awake agent")
    for s in starts:
        if not 0 <= s < n:
            raise IndexError(f"start agent {s} not in 0..{n - 1}")
    if max_rounds is None:
        max_rounds = 10 * n
    if max_rounds < 1:
        raise ValueError("max_rounds must be at least 1")
    if rng is None:
        rng = np.random.default_rng(seed)

    program.configure(topo)
    nbrs = topo.neighbors
    start_set = frozenset(starts)
    states: list = [None] * n
    woke: list = [None] * n
    last: list = [None] * n
    halted = [False] * n
    peak = [0] * n
    deadline_of: list = [None] * n
    timers: dict = {}
    live_timers = 0
    n_halted = 0
    ctx = StepContext(rng)
    init_state, step, is_halted = program.init_state, program.step, program.halted
    deadline, memory_bits = program.deadline, program.memory_bits

    pending: dict = {}
    pending_bits = 0
    pending_count = 0
    pending_log: list | None = [] if log_deliveries else None
    log: list | None = [] if log_deliveries else None
    bits = 0
    count = 0
    last_active = 0
    r = 0

    def snapshot(timed_out: bool) -> Trace:
        colors = [program.color(s) if s is not None else None for s in states]
        return Trace(
            rounds=last_active,
            total_message_bits=bits,
            peak_memory_bits=max(peak) if peak else 0,
            colors=colors,
            halted=list(halted),
            quiescent_round=None if (n_halted == n or timed_out) else last_active,
            messages=count,
            agent_peak_memory=list(peak),
            wake_round=list(woke),
            last_round=list(last),
            deliveries=log,
        )

    while True:
        inboxes = pending
        pending = {}
        bits += pending_bits
        count += pending_count
        pending_bits = pending_count = 0
        if log is not None:
            log.extend(pending_log)
            pending_log = []

        if r == 0:
            active = set(starts)
        else:
            active = set(inboxes)
            due = timers.pop(r, None)
            if due:
                for u in due:
                    if deadline_of[u] == r:
                        active.add(u)

        for u in sorted(active):
            if halted[u]:
                continue
            st = states[u]
            if st is None:
                woke[u] = r
                st = states[u] = init_state(AgentView(u, frozenset(nbrs[u]), u in start_set))
            if deadline_of[u] is not None:
                deadline_of[u] = None
                live_timers -= 1
            ctx.now = now = r - woke[u]
            out = step(st, inboxes.get(u, _EMPTY), ctx)
            last_active = last[u] = r
            if out:
                nb = nbrs[u]
                for d, payload, width in out:
                    v = nb.get(d)
                    if v is None:
                        raise ProtocolError(f"agent {u} sent {d} but has no {d} neighbor")
                    box = pending.get(v)
                    if box is None:
                        pending[v] = [(OPPOSITE[d], payload)]
                    else:
                        box.append((OPPOSITE[d], payload))
                    pending_bits += width
                    pending_count += 1
                    if pending_log is not None:
                        pending_log.append(Envelope(u, v, d, payload, width, r))
            mb = memory_bits(st, now)
            if mb > peak[u]:
                peak[u] = mb
            if is_halted(st):
                halted[u] = True
                n_halted += 1
            else:
                dl = deadline(st)
                if dl is not None:
                    g = woke[u] + dl
                    if g <= r:
                        raise ProtocolError(f"agent {u} asked for a deadline in the past")
                    deadline_of[u] = g
                    live_timers += 1
                    timers.setdefault(g, []).append(u)

        if observer is not None:
            observer(r, states)

        if not pending and live_timers == 0:
            return snapshot(False)
        if r >= max_rounds:
            raise RunTimeout(f"{program.name} did not finish within {max_rounds} rounds",
                             snapshot(True))
        r += 1
