"""Trial runner, parameter sweeps, complexity bounds and lower-bound scenarios."""

from __future__ import annotations

import csv
import io
import itertools
import json
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, fields, replace

import numpy as np

from .concentration import construct_witness, run_concentration_ribbon
from .errors import RunTimeout, UsageError
from .flag import Boost, UpDown
from .hybrid import TRADEOFF_COLUMNS, hybrid_trial
from .ribbon import ApproxCount, BubbleSort, ExactCount, ExactSilentCount
from .sim import Trace, build_grid, build_line, run, trial_rng
from .validators import (FlagSpec, canonical_coloring, validate_eps_flag,
                         validate_exact_flag, validate_exact_ribbon)

RUN_COLUMNS = ["trial", "n", "a", "b", "k", "start", "rounds", "msg_bits", "peak_mem_bits",
               "valid_exact", "valid_eps", "frac_correct", "status", "bound_ok"]

MESSAGE_ALGOS = ("exact-count", "silent-count", "bubble-sort", "approx-count", "up-down", "boost")
MODELS = {
    "message": MESSAGE_ALGOS,
    "concentration": ("exact-concentration",),
    "hybrid": ("repair",),
}
RANDOMIZED = ("approx-count", "boost", "repair")
ROW_ALGOS = {"exact-count": ExactCount, "silent-count": ExactSilentCount,
             "bubble-sort": BubbleSort}


@dataclass
class RunConfig:
    model: str = "message"
    algo: str = "exact-count"
    n: int | None = None
    a: int | None = None
    b: int | None = None
    k: int = 3
    alpha: float = 1.0
    eps: float | None = None
    delta: float | None = None
    sigma: float | None = None
    z: float = 3.0
    T: int | None = None
    start: str = "0"
    seed: int = 0
    trials: int = 1
    jobs: int = 1
    out: str | None = None
    log_deliveries: bool = False
    row_algo: str = "exact-count"
    gate: float = 0.95
    max_rounds: int | None = None

    def validate(self) -> "RunConfig":
        if self.model not in MODELS:
            raise UsageError(f"unknown model {self.model!r}")
        if self.algo not in MODELS[self.model]:
            raise UsageError(f"algorithm {self.algo!r} does not belong to model {self.model!r}")
        if self.k < 2:
            raise UsageError("k must be at least 2")
        if self.trials < 1:
            raise UsageError("trials must be positive")
        grid = self.algo in ("up-down", "boost")
        if grid:
            if self.a is None or self.b is None:
                raise UsageError(f"{self.algo} needs --a and --b")
        elif self.n is None:
            if self.a is not None and (self.b in (None, 1)):
                self.n = self.a
            else:
                raise UsageError(f"{self.algo} needs --n")
        if self.algo in ("approx-count", "boost"):
            if self.eps is None:
                raise UsageError(f"{self.algo} needs --eps")
            if not 0 < self.eps < 1 / (2 * (self.k - 1)):
                raise UsageError(f"eps must lie in (0, 1/(2(k-1))) for {self.algo}")
        if self.model == "hybrid" and self.sigma is None:
            raise UsageError("hybrid model needs --sigma")
        if self.row_algo not in ROW_ALGOS:
            raise UsageError(f"unknown row algorithm {self.row_algo!r}")
        if self.start not in ("sweep", "random"):
            try:
                int(self.start)
            except ValueError:
                raise UsageError(f"--start must be an agent id, 'sweep' or 'random'") from None
        return self

    @property
    def grid(self) -> bool:
        return self.algo in ("up-down", "boost")

    @property
    def agents(self) -> int:
        return self.a * self.b if self.grid else self.n

    @property
    def width(self) -> int:
        return self.a if self.grid else self.n

    @property
    def rows(self) -> int:
        return self.b if self.grid else 1


def parse_sigma(text, n: int | None):
    """Accept plain floats or multiples of 1/n written like ``2/n``."""
    if text is None or isinstance(text, (int, float)):
        return text
    s = str(text).strip()
    if s.endswith("/n"):
        if not n:
            raise UsageError("sigma given relative to n but n is unknown")
        return float(s[:-2] or 1) / n
    return float(s)


def make_program(cfg: RunConfig):
    k = cfg.k
    if cfg.algo == "exact-count":
        return ExactCount(k)
    if cfg.algo == "silent-count":
        return ExactSilentCount(k)
    if cfg.algo == "bubble-sort":
        return BubbleSort(k)
    if cfg.algo == "approx-count":
        return ApproxCount(k, cfg.eps, cfg.delta)
    if cfg.algo == "up-down":
        return UpDown(ROW_ALGOS[cfg.row_algo](k))
    if cfg.algo == "boost":
        return Boost(ApproxCount(k, cfg.eps, cfg.delta), T=cfg.T)
    raise UsageError(f"no program for {cfg.algo!r}")


# --- bounds -------------------------------------------------------------------

def bounds_for(algo: str, n: int, k: int, a: int | None = None, b: int | None = None,
               row_algo: str = "exact-count") -> dict:
    """Per-metric upper bounds with the fixed slack (+2k rounds, +16 memory bits)."""
    lg = math.log2(n) if n > 1 else 0.0
    lk = math.log2(k)
    if algo == "exact-count":
        w = math.ceil(math.log2(n + 1))
        return {"rounds": (2 - 1 / k) * n + 2 * k, "msg_bits": (4 - 2 / k) * n * w,
                "peak_mem_bits": 3 * lg + lk + 16}
    if algo == "silent-count":
        return {"rounds": 3 * n, "msg_bits": 6 * n, "peak_mem_bits": 2 * lg + lk + 16}
    if algo == "bubble-sort":
        return {"rounds": 3 * n, "peak_mem_bits": 3 * math.ceil(lk) + 2 + 16}
    if algo == "approx-count":
        return {"rounds": 2 * n}
    if algo == "up-down":
        row = bounds_for(row_algo, a, k)
        return {"rounds": row["rounds"] + (b - 1)}
    if algo == "boost":
        return {"rounds": 3 * n}
    if algo == "exact-concentration":
        return {"rounds": 0, "msg_bits": 0}
    return {}


def check_bounds(algo: str, record: dict, bounds: dict) -> bool:
    key = {"rounds": "rounds", "msg_bits": "msg_bits", "peak_mem_bits": "peak_mem_bits"}
    for metric, limit in bounds.items():
        v = record.get(key[metric])
        if v is not None and v > limit + 1e-9:
            return False
    return True


# --- trials -------------------------------------------------------------------

def _start_for(cfg: RunConfig, trial: int, rng) -> int:
    if cfg.start == "sweep":
        return trial % cfg.agents
    if cfg.start == "random":
        return int(rng.integers(cfg.agents))
    s = int(cfg.start)
    if not 0 <= s < cfg.agents:
        raise UsageError(f"start {s} is not an agent id in 0..{cfg.agents - 1}")
    return s


def _reference(cfg: RunConfig) -> list:
    row = canonical_coloring(cfg.width, cfg.k)
    return row * cfg.rows


def run_trial(cfg: RunConfig, trial: int) -> dict:
    """One trial as a CSV-ready record (plus private keys starting with ``_``)."""
    rng = trial_rng(cfg.seed, trial)
    start = _start_for(cfg, trial, rng)
    rec = {"trial": trial, "n": cfg.agents, "a": cfg.width, "b": cfg.rows, "k": cfg.k,
           "start": start}
    if cfg.model == "hybrid":
        return _hybrid_record(cfg, trial, rng, rec)
    status = "ok"
    trace: Trace
    if cfg.model == "concentration":
        trace = run_concentration_ribbon(cfg.n, cfg.a or cfg.n, cfg.alpha, cfg.k)
    else:
        topo = build_grid(cfg.a, cfg.b) if cfg.grid else build_line(cfg.n)
        try:
            trace = run(make_program(cfg), topo, start, rng=rng, max_rounds=cfg.max_rounds,
                        log_deliveries=cfg.log_deliveries)
        except RunTimeout as exc:
            trace = exc.trace
            status = "timeout"
    rec["rounds"] = trace.quiescent_round if trace.quiescent_round is not None else trace.rounds
    rec["msg_bits"] = trace.total_message_bits
    rec["peak_mem_bits"] = trace.peak_memory_bits
    colors = trace.colors
    decided = all(c is not None for c in colors)
    if decided:
        v = (validate_exact_flag(colors, cfg.k, cfg.a, cfg.b) if cfg.grid
             else validate_exact_ribbon(colors, cfg.k))
        rec["valid_exact"] = bool(v)
        if cfg.eps is not None:
            rec["valid_eps"] = bool(validate_eps_flag(
                colors, FlagSpec(cfg.k, cfg.width, cfg.rows, cfg.eps)))
        else:
            rec["valid_eps"] = ""
    else:
        rec["valid_exact"] = False
        rec["valid_eps"] = False if cfg.eps is not None else ""
        if status == "ok":
            status = "undecided"
    ref = _reference(cfg)
    rec["frac_correct"] = sum(1 for c, r in zip(colors, ref) if c == r) / len(ref)
    rec["status"] = status
    rec["bound_ok"] = check_bounds(cfg.algo, rec, bounds_for(
        cfg.algo, cfg.agents, cfg.k, cfg.a, cfg.b, cfg.row_algo))
    if cfg.log_deliveries and trace.deliveries is not None:
        rec["_deliveries"] = [delivery_line(trial, e) for e in trace.deliveries]
    return rec


def _hybrid_record(cfg: RunConfig, trial: int, rng, rec: dict) -> dict:
    n = cfg.n
    sigma = parse_sigma(cfg.sigma, n)
    ht = hybrid_trial(n, sigma, rng, trial, z=cfg.z)
    rec.update({"rounds": ht.repair_rounds, "msg_bits": "", "peak_mem_bits": "",
                "valid_exact": "", "valid_eps": "", "frac_correct": ht.frac_correct_repair,
                "status": "overlap" if ht.overlap else "ok",
                "bound_ok": all(r <= 2 * (j - i + 1) + 2 for (i, j), r in ht.interval_rounds)})
    rec["_tradeoff"] = ht.row()
    return rec


def delivery_line(trial: int, e) -> str:
    return json.dumps({"trial": trial, "round": e.sent_round + 1, "sender": e.sender,
                       "receiver": e.receiver, "direction": e.direction,
                       "bits": e.bit_width, "payload": repr(e.payload)}, sort_keys=True)


def recount_bits(lines) -> dict:
    """Total message bits per trial from a serialized delivery log."""
    out: dict = {}
    for line in lines:
        d = json.loads(line)
        out[d["trial"]] = out.get(d["trial"], 0) + d["bits"]
    return out


def run_trials(cfg: RunConfig) -> list[dict]:
    """All trials, ordered by trial index whatever the worker count."""
    cfg.validate()
    idx = range(cfg.trials)
    if cfg.jobs > 1:
        with ProcessPoolExecutor(max_workers=cfg.jobs) as pool:
            return list(pool.map(run_trial, itertools.repeat(cfg), idx))
    return [run_trial(cfg, t) for t in idx]


def summarize(cfg: RunConfig, records: list[dict]) -> dict:
    def mean(key):
        vals = [r[key] for r in records if isinstance(r[key], (bool, int, float))
                and not isinstance(r[key], str)]
        return sum(vals) / len(vals) if vals else ""

    def top(key):
        vals = [r[key] for r in records if isinstance(r[key], (int, float)) and
                not isinstance(r[key], bool)]
        return max(vals) if vals else ""

    n_timeout = sum(r["status"] == "timeout" for r in records)
    return {"trial": "summary", "n": cfg.agents, "a": cfg.width, "b": cfg.rows, "k": cfg.k,
            "start": cfg.start, "rounds": top("rounds"), "msg_bits": top("msg_bits"),
            "peak_mem_bits": top("peak_mem_bits"), "valid_exact": mean("valid_exact"),
            "valid_eps": mean("valid_eps"), "frac_correct": mean("frac_correct"),
            "status": f"timeouts={n_timeout}",
            "bound_ok": all(r["bound_ok"] for r in records)}


def _fmt(v) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        return repr(round(v, 12))
    return str(v)


def records_to_csv(records: list[dict], columns=RUN_COLUMNS) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(columns)
    for r in records:
        w.writerow([_fmt(r.get(c, "")) for c in columns])
    return buf.getvalue()


def outcome(cfg: RunConfig, records: list[dict]) -> int:
    """Exit code: 3 if any trial timed out, 2 on a validation or bound failure, else 0."""
    if any(r["status"] == "timeout" for r in records):
        return 3
    if not all(r["bound_ok"] for r in records):
        return 2
    if cfg.model == "hybrid":
        return 0
    if cfg.algo in RANDOMIZED:
        key = "valid_eps"
        ok = sum(1 for r in records if r[key] is True) / len(records)
        return 0 if ok >= cfg.gate else 2
    return 0 if all(r["valid_exact"] is True for r in records) else 2


def cmd_run(cfg: RunConfig) -> tuple[str, int, list]:
    records = run_trials(cfg)
    text = records_to_csv(records + [summarize(cfg, records)])
    return text, outcome(cfg, records), records


# --- sweeps -------------------------------------------------------------------

SWEEPABLE = {"n": int, "a": int, "b": int, "k": int, "alpha": float, "eps": float,
             "delta": float, "sigma": str, "algo": str, "start": str, "row_algo": str}


def parse_range(text: str, kind=int) -> list:
    """Comma list whose items may be inclusive ranges ``lo..hi`` (integers only)."""
    out = []
    for part in str(text).split(","):
        part = part.strip()
        if not part:
            continue
        if ".." in part and kind is int:
            lo, hi = part.split("..")
            out.extend(range(int(lo), int(hi) + 1))
        else:
            out.append(kind(part))
    if not out:
        raise UsageError(f"empty range {text!r}")
    return out


TABLE_COLUMNS = ["algo", "n", "a", "b", "k", "trials", "max_rounds", "bound_rounds",
                 "rounds_per_n", "max_msg_bits", "bound_msg_bits", "max_peak_mem_bits",
                 "bound_mem_bits", "valid_fraction", "bound_ok"]


def cmd_sweep(base: RunConfig, ranges: dict) -> tuple[dict, str, int]:
    """Cartesian sweep; returns per-cell CSV texts, the aggregate table and an exit code."""
    if not ranges:
        raise UsageError("sweep needs at least one ranged field")
    keys = sorted(ranges)
    cells = {}
    table = []
    tradeoff = []
    code = 0
    for combo in itertools.product(*(ranges[k] for k in keys)):
        cfg = replace(base, **dict(zip(keys, combo)))
        if cfg.model != "hybrid" and cfg.algo == "repair":
            cfg.model = "hybrid"
        if cfg.start == "sweep" and "trials" not in ranges:
            cfg = replace(cfg, trials=max(cfg.trials, _agents_of(cfg)))
        cfg.validate()
        text, rc, records = cmd_run(cfg)
        code = max(code, rc) if rc != 3 else 3
        name = "_".join(f"{k}-{v}" for k, v in zip(keys, combo)).replace("/", "per")
        cells[name] = text
        if cfg.model == "hybrid":
            tradeoff.extend(r["_tradeoff"] for r in records)
            continue
        bnd = bounds_for(cfg.algo, cfg.agents, cfg.k, cfg.a, cfg.b, cfg.row_algo)
        rounds = max(r["rounds"] for r in records)
        valid_key = "valid_eps" if cfg.algo in RANDOMIZED else "valid_exact"
        table.append({
            "algo": cfg.algo, "n": cfg.agents, "a": cfg.width, "b": cfg.rows, "k": cfg.k,
            "trials": cfg.trials, "max_rounds": rounds, "bound_rounds": bnd.get("rounds", ""),
            "rounds_per_n": rounds / cfg.agents,
            "max_msg_bits": max(r["msg_bits"] for r in records),
            "bound_msg_bits": bnd.get("msg_bits", ""),
            "max_peak_mem_bits": max(r["peak_mem_bits"] for r in records),
            "bound_mem_bits": bnd.get("peak_mem_bits", ""),
            "valid_fraction": sum(r[valid_key] is True for r in records) / len(records),
            "bound_ok": all(r["bound_ok"] for r in records),
        })
    if tradeoff:
        agg = records_to_csv([dict(zip(TRADEOFF_COLUMNS, row)) for row in tradeoff],
                             TRADEOFF_COLUMNS)
    else:
        agg = records_to_csv(table, TABLE_COLUMNS)
    return cells, agg, code


def _agents_of(cfg: RunConfig) -> int:
    if cfg.algo in ("up-down", "boost"):
        return (cfg.a or 1) * (cfg.b or 1)
    return cfg.n or cfg.a or 1


# --- witness ------------------------------------------------------------------

def cmd_witness(a: float, b: float, eps: float) -> dict:
    w = construct_witness(a, b, eps)
    rec = w.to_record()
    d1, d2 = w.corner_distances()
    rec["corner_distances"] = list(d1)
    rec["corner_distances_prime"] = list(d2)
    rec["max_corner_gap"] = max(abs(p - q) / max(p, 1e-300) for p, q in zip(d1, d2))
    rec["ok"] = max(rec["residual_d1"], rec["residual_d2"], rec["max_corner_gap"]) < 1e-9
    return rec


# --- lower-bound scenarios ----------------------------------------------------

@dataclass
class Diagnosis:
    name: str
    ok: bool
    details: dict = field(default_factory=dict)
    violations: list = field(default_factory=list)


def _decision_round(trace: Trace, agent: int) -> int:
    # the exact programs halt in the round they decide
    return trace.last_round[agent]


def diagnose_line(n: int, k: int) -> Diagnosis:
    """Prefix-indistinguishability scenario on lines of length n and n + k, start at agent 0."""
    if n < 2 * k:
        raise UsageError("the line scenario needs n >= 2k")
    short = run(ExactCount(k), build_line(n), 0, log_deliveries=True)
    long = run(ExactCount(k), build_line(n + k), 0, log_deliveries=True)
    ref_short = canonical_coloring(n, k)
    ref_long = canonical_coloring(n + k, k)
    p = next(i for i in range(n) if ref_short[i] != ref_long[i])
    limit = (2 - 1 / k) * n - k
    horizon = math.floor(limit)
    d_short, d_long = _decision_round(short, p), _decision_round(long, p)
    t_short = [m for m in short.transcript(p) if m[0] <= horizon]
    t_long = [m for m in long.transcript(p) if m[0] <= horizon]
    violations = []
    if n > 2 * k:
        for label, d in (("n", d_short), ("n+k", d_long)):
            if d < limit:
                violations.append(f"agent {p} decided at round {d} < {limit:g} on the {label} line")
    if t_short != t_long:
        first = next((i for i, (x, y) in enumerate(zip(t_short, t_long)) if x != y),
                     min(len(t_short), len(t_long)))
        violations.append(f"agent {p} transcripts differ at message {first} before round {horizon}")
    return Diagnosis("line-prefix", not violations, {
        "n": n, "k": k, "agent": p, "bound": limit, "decision_round_n": d_short,
        "decision_round_n_plus_k": d_long, "transcript_rounds_compared": horizon,
        "transcript_len": len(t_short)}, violations)


def diagnose_grid(a: int, b: int, k: int = 3) -> Diagnosis:
    topo = build_grid(a, b)
    tr = run(UpDown(ExactCount(k)), topo, 0)
    far = topo.agent_at(a - 1, b - 1)
    d = _decision_round(tr, far)
    need = a + b - 2
    viol = [] if d >= need else [f"agent {far} decided at round {d} < {need}"]
    return Diagnosis("grid-distance", not viol, {"a": a, "b": b, "k": k, "agent": far,
                                                 "decision_round": d, "bound": need}, viol)


def config_from_mapping(values: dict) -> RunConfig:
    """Build a RunConfig from string values (config file entries or flags)."""
    kinds = {f.name: f.type for f in fields(RunConfig)}
    cfg = RunConfig()
    for key, raw in values.items():
        key = key.replace("-", "_")
        if key not in kinds:
            raise UsageError(f"unknown config key {key!r}")
        if raw is None:
            continue
        t = str(kinds[key])
        if "bool" in t:
            val = raw if isinstance(raw, bool) else str(raw).lower() in ("1", "true", "yes")
        elif "int" in t and key != "start":
            val = int(raw)
        elif "float" in t and key != "sigma":
            val = float(raw)
        else:
            val = raw if key == "sigma" else str(raw)
        setattr(cfg, key, val)
    return cfg


def to_mapping(cfg: RunConfig) -> dict:
    return asdict(cfg)


def mean_s_by_sigma(n: int, sigmas, trials: int, seed: int = 0, z: float = 3.0) -> list[float]:
    out = []
    for si, sigma in enumerate(sigmas):
        vals = []
        for t in range(trials):
            ht = hybrid_trial(n, sigma, trial_rng(seed, si * 1_000_003 + t), t, z=z)
            vals.append((ht.s_T1 + ht.s_T2) / 2)
        out.append(float(np.mean(vals)))
    return out
