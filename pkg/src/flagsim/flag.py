"""Grid programs built on top of a ribbon program running along rows.

Rows run along the flag width (the ``a`` columns), so stripes are vertical
and every column should end up monochromatic.  Horizontal messages belong
to the hosted ribbon program; vertical messages belong to the wrapper.
"""

from __future__ import annotations

import math
from typing import Callable

from .sim import (DOWN, LEFT, OPPOSITE, RIGHT, UP, AgentProgram, AgentView, Color,
                  Counter, Flag, StepContext, Topology, build_line)

_HORIZONTAL = (LEFT, RIGHT)


class _SubContext:
    __slots__ = ("now", "rng")

    def __init__(self, now: int, rng):
        self.now = now
        self.rng = rng


class HostState:
    __slots__ = ("view", "inner", "inner_woke", "inner_done", "row_color", "color",
                 "halted", "extra")

    def __init__(self, view: AgentView):
        self.view = view
        self.inner = None  # ribbon state, created when the row reaches this agent
        self.inner_woke = None  # wrapper-local round at which the ribbon state woke
        self.inner_done = False
        self.row_color = None
        self.color = None
        self.halted = False
        self.extra = {}


class _RowHost(AgentProgram):
    """Runs ``row_program`` along each row and leaves vertical traffic to subclasses."""

    def __init__(self, row_program: AgentProgram):
        self.row = row_program
        self.k = row_program.k
        self.silent = row_program.silent

    def configure(self, topo: Topology) -> None:
        if topo.kind != "grid":
            raise ValueError(f"{self.name} needs a grid topology")
        self.topo = topo
        self.row.configure(build_line(topo.a))
        self.messages = {"row." + m: w for m, w in self.row.messages.items()}
        self.schema = {"row." + f: spec for f, spec in self.row.schema.items()}

    def init_state(self, view: AgentView) -> HostState:
        return HostState(view)

    def _wake_row(self, st: HostState, now: int, row_start: bool) -> None:
        v = st.view
        sides = frozenset(s for s in v.sides if s in _HORIZONTAL)
        st.inner = self.row.init_state(AgentView(v.agent_id, sides, row_start))
        st.inner_woke = now

    def _step_row(self, st: HostState, horiz: list, ctx: StepContext, out: list) -> None:
        """Advance the ribbon state if it has mail or a due timer."""
        if st.inner is None or st.inner_done:
            return
        local = ctx.now - st.inner_woke
        if not horiz and local != 0:
            dl = self.row.deadline(st.inner)
            if dl is None or dl != local:
                return
        sent = self.row.step(st.inner, horiz, _SubContext(local, ctx.rng))
        if sent:
            out.extend(sent)
        st.row_color = self.row.color(st.inner)
        if self.row.halted(st.inner):
            st.inner_done = True

    def deadline(self, st: HostState):
        if st.inner is None or st.inner_done:
            return None
        dl = self.row.deadline(st.inner)
        return None if dl is None else st.inner_woke + dl

    def _row_view(self, st: HostState, now: int) -> dict:
        if st.inner is None:
            return {}
        inner = self.row.memory_view(st.inner, now - st.inner_woke)
        return {"row." + f: v for f, v in inner.items()}

    @staticmethod
    def _split(inbox: list) -> tuple[list, list]:
        horiz, vert = [], []
        for side, payload in inbox:
            (horiz if side in _HORIZONTAL else vert).append((side, payload))
        return horiz, vert


class UpDown(_RowHost):
    """The start row runs the ribbon; every color it settles on is copied up and down its column."""

    name = "up-down"

    def configure(self, topo: Topology) -> None:
        super().configure(topo)
        self.cwidth = Color(self.k).bits or 1
        self.messages["color"] = self.cwidth
        self.schema.update({"color": Color(self.k), "sent": Color(self.k),
                            "in_row": Flag(), "halted": Flag()})

    def step(self, st: HostState, inbox: list, ctx: StepContext) -> list:
        out = []
        horiz, vert = self._split(inbox)
        now = ctx.now
        if now == 0 and st.view.is_start:
            self._wake_row(st, 0, True)
        elif st.inner is None and horiz:
            self._wake_row(st, now, False)
        if st.inner is not None:
            self._step_row(st, horiz, ctx, out)
            c = st.row_color
            if c is not None and c != st.extra.get("sent"):
                st.extra["sent"] = c
                st.color = c
                for d in (UP, DOWN):
                    if d in st.view.sides:
                        out.append((d, c, self.cwidth))
            if st.inner_done and st.color is not None:
                st.halted = True
            return out
        for side, c in vert:
            st.color = c
            onward = OPPOSITE[side]
            if onward in st.view.sides:
                out.append((onward, c, self.cwidth))
        if st.color is not None and not self.silent:
            st.halted = True
        return out

    def memory_view(self, st: HostState, now: int) -> dict:
        view = self._row_view(st, now)
        view.update({"color": st.color, "sent": st.extra.get("sent"),
                     "in_row": int(st.inner is not None), "halted": int(st.halted)})
        return view


# --- Boost ----------------------------------------------------------------

WAKE, TOKEN, WINNER = "wake", "token", "winner"


def boost_threshold(n: int) -> int:
    return max(1, math.ceil(72 * math.log2(n))) if n > 1 else 1


class Boost(_RowHost):
    """Every row runs the ribbon; a token walks each column top-down tallying row colors.

    The first color whose tally reaches ``T`` wins and is broadcast along the
    column.  A token that reaches the bottom without a winner settles on the
    plurality color (lowest color on ties).
    """

    name = "boost"

    def __init__(self, row_program: AgentProgram, T: int | None = None):
        super().__init__(row_program)
        self.T_override = T

    def configure(self, topo: Topology) -> None:
        super().configure(topo)
        self.T = self.T_override if self.T_override is not None else boost_threshold(topo.n)
        k = self.k
        self.twidth = math.ceil(math.log2(self.T + 1))
        self.cwidth = Color(k).bits or 1
        self.messages.update({WAKE: 2, TOKEN: 2 + k * self.twidth, WINNER: 2 + self.cwidth})
        self.schema.update({f"tally_{z}": Counter(self.T) for z in range(1, k + 1)})
        self.schema.update({"winner": Color(k), "waiting": Flag(), "halted": Flag()})

    def _tally(self, st: HostState, counts: list, out: list) -> None:
        v = st.view
        counts[st.row_color - 1] += 1
        if counts[st.row_color - 1] >= self.T:
            self._declare(st, st.row_color, out, (UP, DOWN))
        elif DOWN not in v.sides:
            best = max(range(self.k), key=lambda z: (counts[z], -z)) + 1
            self._declare(st, best, out, (UP,))
        else:
            out.append((DOWN, (TOKEN, tuple(counts)), self.messages[TOKEN]))
        st.extra.pop("token", None)

    def _declare(self, st: HostState, winner: int, out: list, dirs) -> None:
        st.color = winner
        for d in dirs:
            if d in st.view.sides:
                out.append((d, (WINNER, winner), self.messages[WINNER]))

    def step(self, st: HostState, inbox: list, ctx: StepContext) -> list:
        out = []
        v = st.view
        horiz, vert = self._split(inbox)
        now = ctx.now
        row_start = False
        if now == 0 and v.is_start:
            row_start = True
            for d in (UP, DOWN):
                if d in v.sides:
                    out.append((d, (WAKE,), 2))
        for side, msg in vert:
            tag = msg[0]
            if tag == WAKE:
                row_start = True
                onward = OPPOSITE[side]
                if onward in v.sides:
                    out.append((onward, msg, 2))
            elif tag == TOKEN:
                if st.color is None:
                    st.extra["token"] = list(msg[1])
            elif tag == WINNER:
                if st.color is None:
                    st.color = msg[1]
                    st.extra.pop("token", None)
                    onward = OPPOSITE[side]
                    if onward in v.sides:
                        out.append((onward, msg, self.messages[WINNER]))
        if st.inner is None and (row_start or horiz):
            self._wake_row(st, now, row_start)
        self._step_row(st, horiz, ctx, out)
        if st.row_color is not None and st.color is None and st.inner_done:
            if UP not in v.sides and not st.extra.get("started"):
                st.extra["started"] = True
                self._tally(st, [0] * self.k, out)
            elif "token" in st.extra:
                self._tally(st, st.extra["token"], out)
        if st.color is not None and st.inner_done:
            st.halted = True
        return out

    def memory_view(self, st: HostState, now: int) -> dict:
        view = self._row_view(st, now)
        tok = st.extra.get("token")
        for z in range(1, self.k + 1):
            view[f"tally_{z}"] = None if tok is None else tok[z - 1]
        view.update({"winner": st.color, "waiting": int(tok is not None),
                     "halted": int(st.halted)})
        return view


# --- scripted rows ----------------------------------------------------------

class ScriptedRibbon(AgentProgram):
    """Row program whose agents pick colors from ``choose(agent_id, rng)`` on waking.

    Used to feed controlled row outcomes (including injected errors) to the
    grid wrappers.  The row is woken by a 1-bit wave from its starter.
    """

    name = "scripted"

    def __init__(self, k: int, choose: Callable):
        self.k = k
        self.choose = choose

    def configure(self, topo: Topology) -> None:
        self.messages = {"wake": 1}
        self.schema = {"color": Color(self.k), "halted": Flag()}

    def init_state(self, view: AgentView):
        return _Scripted(view)

    def step(self, st, inbox: list, ctx: StepContext) -> list:
        out = []
        if st.view.is_start:
            dirs = [d for d in _HORIZONTAL if d in st.view.sides]
        else:
            dirs = [OPPOSITE[inbox[0][0]]] if OPPOSITE[inbox[0][0]] in st.view.sides else []
        for d in dirs:
            out.append((d, None, 1))
        st.color = int(self.choose(st.view.agent_id, ctx.rng))
        st.halted = True
        return out

    def memory_view(self, st, now: int) -> dict:
        return {"color": st.color, "halted": int(st.halted)}


class _Scripted:
    __slots__ = ("view", "color", "halted")

    def __init__(self, view: AgentView):
        self.view = view
        self.color = None
        self.halted = False


def noisy_rows(k: int, truth: Callable[[int], int], error_rate: float,
               wrong: Callable[[int], int] | None = None) -> Callable:
    """Chooser for ScriptedRibbon: the true color, replaced by ``wrong(true)`` at ``error_rate``.

    The default wrong color is a single fixed neighbor band, which concentrates
    every error on one competitor.
    """
    if wrong is None:
        def wrong(z):
            return z + 1 if z < k else z - 1

    def choose(agent_id, rng):
        z = truth(agent_id)
        return wrong(z) if rng.random() < error_rate else z

    return choose
