"""Command line entry point: ``flagsim run|sweep|witness|diagnose``."""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from . import harness
from .errors import FlagSimError, UsageError

EXIT_OK, EXIT_USAGE, EXIT_FAIL, EXIT_TIMEOUT = 0, 1, 2, 3

# flags that may carry ranges in ``sweep``
_RANGED = ("n", "a", "b", "k", "alpha", "eps", "delta", "sigma", "algo", "start", "row_algo")


def read_config(path: str) -> dict:
    """Flat ``key = value`` file; blank lines and ``#`` comments are skipped."""
    values = {}
    for lineno, line in enumerate(Path(path).read_text().splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise UsageError(f"{path}:{lineno}: expected key = value")
        key, val = (s.strip() for s in line.split("=", 1))
        values[key.replace("-", "_")] = val
    return values


class _Parser(argparse.ArgumentParser):
    # argparse exits with 2, which is reserved for failed validations
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        sys.exit(EXIT_USAGE)


def _common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="flat key=value file; flags override its entries")
    p.add_argument("--model", choices=sorted(harness.MODELS))
    p.add_argument("--algo")
    p.add_argument("--row-algo", dest="row_algo")
    for name in ("n", "a", "b", "k", "alpha", "eps", "delta", "sigma", "start"):
        p.add_argument(f"--{name}")
    p.add_argument("--T", dest="T", help="Boost tally threshold")
    p.add_argument("--z", help="z-score used to mark uncertain agents")
    p.add_argument("--seed")
    p.add_argument("--trials")
    p.add_argument("--jobs")
    p.add_argument("--max-rounds", dest="max_rounds")
    p.add_argument("--out")
    p.add_argument("--log-deliveries", dest="log_deliveries", action="store_true",
                   default=None)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="flagsim", description="Distributed stripe-coloring experiments.")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)
    _common(sub.add_parser("run", help="run trials of one configuration"))
    sw = sub.add_parser("sweep", help="Cartesian sweep over comma lists or lo..hi ranges")
    _common(sw)
    w = sub.add_parser("witness", help="construct a pair of indistinguishable flags")
    w.add_argument("--a", type=float, required=True)
    w.add_argument("--b", type=float, default=1.0)
    w.add_argument("--eps", type=float, required=True)
    w.add_argument("--out")
    d = sub.add_parser("diagnose", help="lower-bound scenario checks")
    d.add_argument("--n", type=int, default=30)
    d.add_argument("--k", type=int, default=3)
    d.add_argument("--a", type=int, default=8)
    d.add_argument("--b", type=int, default=8)
    d.add_argument("--out")
    return parser


def _gather(args) -> dict:
    values = read_config(args.config) if args.config else {}
    for key, val in vars(args).items():
        if key in ("command", "config") or val is None:
            continue
        values[key] = val
    return values


def _infer_model(values: dict) -> None:
    if "model" in values:
        return
    algo = str(values.get("algo", ""))
    for model, algos in harness.MODELS.items():
        if algo in algos:
            values["model"] = model


def _emit(text: str, out: str | None) -> None:
    if out:
        Path(out).parent.mkdir(parents=True, exist_ok=True)
        Path(out).write_text(text)
    else:
        sys.stdout.write(text)


def _cmd_run(values: dict) -> int:
    _infer_model(values)
    cfg = harness.config_from_mapping(values)
    cfg.sigma = harness.parse_sigma(cfg.sigma, cfg.n)
    text, code, records = harness.cmd_run(cfg.validate())
    _emit(text, cfg.out)
    if cfg.log_deliveries and cfg.out:
        lines = [ln for r in records for ln in r.get("_deliveries", [])]
        Path(cfg.out + ".deliveries.jsonl").write_text("".join(ln + "\n" for ln in lines))
    return code


def _cmd_sweep(values: dict) -> int:
    ranges = {}
    for key in _RANGED:
        raw = values.get(key)
        if raw is None:
            continue
        raw = str(raw)
        if "," in raw or ".." in raw:
            kind = harness.SWEEPABLE[key]
            kind = str if key == "sigma" else kind
            ranges[key] = harness.parse_range(raw, kind)
            del values[key]
    if not ranges:
        raise UsageError("sweep needs at least one ranged field (comma list or lo..hi)")
    if "algo" in ranges and "model" not in values:
        values["algo"] = ranges["algo"][0]
        _infer_model(values)
        del values["algo"]
    else:
        _infer_model(values)
    base = harness.config_from_mapping(values)
    if "sigma" in ranges:
        n = base.n
        ranges["sigma"] = [harness.parse_sigma(s, n) for s in ranges["sigma"]]
    elif base.sigma is not None:
        base.sigma = harness.parse_sigma(base.sigma, base.n)
    cells, table, code = harness.cmd_sweep(base, ranges)
    if base.out:
        out = Path(base.out)
        out.mkdir(parents=True, exist_ok=True)
        for name, text in cells.items():
            (out / f"{name}.csv").write_text(text)
        (out / "table.csv").write_text(table)
    else:
        sys.stdout.write(table)
    return code


def _cmd_witness(args) -> int:
    rec = harness.cmd_witness(args.a, args.b, args.eps)
    _emit(json.dumps(rec, indent=2, sort_keys=True) + "\n", args.out)
    return EXIT_OK if rec["ok"] else EXIT_FAIL


def _cmd_diagnose(args) -> int:
    reports = [harness.diagnose_line(args.n, args.k), harness.diagnose_grid(args.a, args.b, args.k)]
    payload = [{"name": r.name, "ok": r.ok, "details": r.details, "violations": r.violations}
               for r in reports]
    _emit(json.dumps(payload, indent=2, sort_keys=True) + "\n", args.out)
    return EXIT_OK if all(r.ok for r in reports) else EXIT_FAIL


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        if args.command == "witness":
            return _cmd_witness(args)
        if args.command == "diagnose":
            return _cmd_diagnose(args)
        values = _gather(args)
        return _cmd_run(values) if args.command == "run" else _cmd_sweep(values)
    except (UsageError, ValueError) as exc:
        print(f"flagsim: usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except FlagSimError as exc:
        print(f"flagsim: {exc}", file=sys.stderr)
        return EXIT_FAIL


if __name__ == "__main__":
    sys.exit(main())
