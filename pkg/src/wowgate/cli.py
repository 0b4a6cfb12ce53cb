"""``wow`` command line: borrowing regions, gate verdicts, posteriors, simulations.

Exit codes: 0 success, 2 usage or validation error, 3 numerical integrity
error, 4 I/O error.
"""

from __future__ import annotations

import argparse
import csv
import dataclasses
import hashlib
import io
import json
import logging
import math
import os
import sys
import warnings
from datetime import datetime, timezone
from pathlib import Path

from . import __version__
from .config import expand_config, load_config
from .errors import ConfigError, DomainError, IntegrityError
from .model import (
    BetaShape,
    BinaryDataset,
    ContinuousStats,
    HistoricalBinary,
    HistoricalContinuous,
    binary_posterior,
    continuous_posterior,
    credible_interval,
    posterior_mean,
)
from .policy import decide_weight, gated, policy_from_name
from .sim import calibrate_threshold, estimate_power, derive_seed, result_row
from .waic import (
    borrowing_region_binary,
    borrowing_region_continuous,
    gate_binary,
    gate_continuous,
    region_table_binary,
)

log = logging.getLogger("wowgate")

EXIT_OK, EXIT_USAGE, EXIT_INTEGRITY, EXIT_IO = 0, 2, 3, 4


class _UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


# --------------------------------------------------------------------------
# output helpers


def _fmt_num(v):
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        return format(v, ".17g")
    return str(v)


def to_csv(rows: list[dict]) -> str:
    if not rows:
        return ""
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    header = list(rows[0])
    writer.writerow(header)
    for row in rows:
        writer.writerow([_fmt_num(row[k]) for k in header])
    return buf.getvalue()


def _json_safe(v):
    if isinstance(v, float) and not math.isfinite(v):
        return None
    return v


def to_json(obj) -> str:
    if isinstance(obj, list):
        obj = [{k: _json_safe(v) for k, v in r.items()} for r in obj]
    elif isinstance(obj, dict):
        obj = {k: _json_safe(v) for k, v in obj.items()}
    return json.dumps(obj, indent=2, allow_nan=False) + "\n"


def to_table(rows: list[dict]) -> str:
    if not rows:
        return ""
    header = list(rows[0])

    def cell(v):
        if isinstance(v, float):
            return f"{v:.6g}"
        return _fmt_num(v)

    body = [[cell(r[k]) for k in header] for r in rows]
    widths = [max(len(h), *(len(b[i]) for b in body)) for i, h in enumerate(header)]
    lines = ["  ".join(h.rjust(w) for h, w in zip(header, widths)),
             "  ".join("-" * w for w in widths)]
    lines += ["  ".join(c.rjust(w) for c, w in zip(b, widths)) for b in body]
    return "\n".join(lines) + "\n"


def _record_text(rec: dict) -> str:
    return "".join(f"{k}={_fmt_num(v) if not isinstance(v, float) else f'{v:.10g}'}\n"
                   for k, v in rec.items())


def _emit(text: str, out: str | None) -> bytes:
    data = text.encode("utf-8")
    if out is None:
        sys.stdout.write(text)
        sys.stdout.flush()
    else:
        Path(out).write_bytes(data)
    return data


def _write_manifest(out: str, command: str, config, seed, data: bytes) -> None:
    manifest = {
        "tool": "wowgate",
        "version": __version__,
        "command": command,
        "config": config,
        "seed": seed,
        "timestamp": datetime.now(timezone.utc).isoformat(timespec="seconds"),
        "sha256": hashlib.sha256(data).hexdigest(),
    }
    Path(f"{out}.manifest.json").write_text(json.dumps(manifest, indent=2) + "\n",
                                            encoding="utf-8")


def _render_rows(rows: list[dict], fmt: str) -> str:
    if fmt == "csv":
        return to_csv(rows)
    if fmt == "json":
        return to_json(rows)
    return to_table(rows)


# --------------------------------------------------------------------------
# argument groups


def _add_historical(p):
    p.add_argument("--endpoint", choices=["binary", "continuous"], default="binary",
                   help="outcome type (default: binary)")
    p.add_argument("--n", type=int, required=True, help="concurrent control sample size")
    p.add_argument("--nh", type=int, required=True, help="historical control sample size")
    p.add_argument("--xh", type=int, help="historical responders (binary)")
    p.add_argument("--ybarh", type=float, help="historical sample mean (continuous, outcome units)")
    p.add_argument("--s2h", type=float,
                   help="historical sample variance (continuous, squared outcome units; "
                        "default: sigma^2)")
    p.add_argument("--sigma", type=float, default=3.0,
                   help="sampling sd of one observation (continuous, outcome units; default: 3)")
    p.add_argument("--sigma0", type=float, default=10.0,
                   help="sd of the vague component (continuous, outcome units; default: 10)")
    p.add_argument("--theta0", type=float, default=None,
                   help="mean of the vague component (continuous; default: ybarh)")
    p.add_argument("--a", type=float, default=1.0, help="vague Beta prior shape a (binary; default: 1)")
    p.add_argument("--b", type=float, default=1.0, help="vague Beta prior shape b (binary; default: 1)")


def _add_policy(p):
    p.add_argument("--policy", default="np",
                   choices=["np", "fixed", "mix", "mix50", "rmap", "sam", "ebrmap"],
                   help="borrowing-weight policy (default: np)")
    p.add_argument("--w", type=float, default=0.5,
                   help="prior weight of the historical component for fixed/mix (default: 0.5)")
    p.add_argument("--delta", type=float, default=0.15,
                   help="SAM clinically meaningful difference, outcome scale (default: 0.15)")
    p.add_argument("--gamma", type=float, default=0.8,
                   help="EB-rMAP prior predictive p-value threshold (default: 0.8)")
    p.add_argument("--tail", choices=["lower", "upper", "two_sided"], default="two_sided",
                   help="EB-rMAP p-value tail (default: two_sided)")
    p.add_argument("--level", type=float, default=0.95,
                   help="credible interval probability (default: 0.95)")


def _add_output(p, formats=("table", "csv", "json"), default="table"):
    p.add_argument("--format", choices=list(formats), default=default,
                   help=f"output format (default: {default})")
    p.add_argument("--out", default=None, help="output file (default: stdout)")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="wow", description="Borrowing regions, gate verdicts, posteriors and simulations.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true", help="debug logging on stderr")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("region", help="borrowing region of the WAIC gate")
    _add_historical(p)
    p.add_argument("--full", action="store_true",
                   help="binary: also print the per-x table (x, waic0, waic1, k, borrow)")
    p.add_argument("--sweep-nh", default=None,
                   help="comma-separated historical sizes; keeps the historical rate "
                        "xh/nh (binary) fixed and emits one region per size")
    _add_output(p)

    p = sub.add_parser("gate", help="gate verdict and posterior for one observed dataset")
    _add_historical(p)
    p.add_argument("--x", type=int, help="concurrent responders (binary)")
    p.add_argument("--ybar", type=float, help="concurrent sample mean (continuous, outcome units)")
    _add_policy(p)
    _add_output(p)

    p = sub.add_parser("posterior", help="mixture posterior without gating")
    _add_historical(p)
    p.add_argument("--x", type=int, help="concurrent responders (binary)")
    p.add_argument("--ybar", type=float, help="concurrent sample mean (continuous, outcome units)")
    _add_policy(p)
    _add_output(p)

    for name, helptext in (("simulate", "calibrate-then-power simulation from a scenario file"),
                           ("calibrate", "calibrated thresholds only, from a scenario file")):
        p = sub.add_parser(name, help=helptext)
        p.add_argument("--config", required=True, help="JSON scenario file")
        p.add_argument("--out", required=True,
                       help="result file; a manifest is written to <out>.manifest.json")
        p.add_argument("--format", choices=["csv", "json"], default="csv",
                       help="result format (default: csv)")
        p.add_argument("--seed", type=int, default=None,
                       help="base seed (default: $WOW_SEED, else the file's defaults.seed, else 0)")
        p.add_argument("--reps", type=int, default=None,
                       help="replicates per run, overriding the file")
        p.add_argument("--workers", type=int, default=1,
                       help="worker processes (default: 1); results do not depend on it")
    return parser


# --------------------------------------------------------------------------
# commands


def _historical(args):
    if args.endpoint == "binary":
        if args.xh is None:
            raise _UsageError("--xh is required for a binary endpoint")
        return BetaShape(args.a, args.b), HistoricalBinary(args.xh, args.nh)
    if args.ybarh is None:
        raise _UsageError("--ybarh is required for a continuous endpoint")
    s2h = args.s2h if args.s2h is not None else args.sigma ** 2
    return None, HistoricalContinuous(args.ybarh, s2h, args.nh, args.sigma0, args.theta0)


def _region_row(args, prior, hist) -> dict:
    if args.endpoint == "binary":
        reg = borrowing_region_binary(prior, args.n, hist)
        return {"n": args.n, "n_h": hist.n_h, "x_h": hist.x_h,
                "x_L": None if reg.empty else reg.x_lower,
                "x_U": None if reg.empty else reg.x_upper, "empty": reg.empty}
    reg = borrowing_region_continuous(hist, args.n, args.sigma)
    return {"n": args.n, "n_h": hist.n_h, "ybar_h": hist.ybar_h,
            "ybar_L": reg.ybar_lower, "ybar_U": reg.ybar_upper, "empty": reg.empty}


def cmd_region(args) -> int:
    prior, hist = _historical(args)
    if args.sweep_nh:
        try:
            sizes = [int(s) for s in args.sweep_nh.split(",") if s.strip()]
        except ValueError as exc:
            raise _UsageError(f"--sweep-nh: {exc}") from exc
        rows = []
        for nh in sizes:
            if args.endpoint == "binary":
                h = HistoricalBinary(int(round(nh * hist.rate)), nh)
            else:
                h = HistoricalContinuous(hist.ybar_h, hist.s2_h, nh, hist.vague_sd, hist.vague_mean)
            rows.append(_region_row(args, prior, h))
        _emit(_render_rows(rows, args.format), args.out)
        return EXIT_OK

    row = _region_row(args, prior, hist)
    if args.full and args.endpoint == "binary":
        table = region_table_binary(prior, args.n, hist)
        _emit(_render_rows(table, args.format), args.out)
        return EXIT_OK
    if args.format == "table":
        if row["empty"]:
            text = "empty region\n"
        elif args.endpoint == "binary":
            text = f"x_L={row['x_L']} x_U={row['x_U']}\n"
        else:
            text = f"ybar_L={row['ybar_L']:.10g} ybar_U={row['ybar_U']:.10g}\n"
        _emit(text, args.out)
    else:
        _emit(_render_rows([row], args.format) if args.format == "csv" else to_json(row), args.out)
    return EXIT_OK


def _policy(args):
    params = {"w": args.w, "delta": args.delta, "gamma": args.gamma, "tail": args.tail}
    return policy_from_name(args.policy, **params)


def _data(args):
    if args.endpoint == "binary":
        if args.x is None:
            raise _UsageError("--x is required for a binary endpoint")
        return BinaryDataset(args.x, args.n)
    if args.ybar is None:
        raise _UsageError("--ybar is required for a continuous endpoint")
    return ContinuousStats.from_population(args.ybar, args.n, args.sigma)


def _posterior_record(args, prior, hist, data, decision) -> dict:
    if args.endpoint == "binary":
        post = binary_posterior(prior, data, hist, decision.w_h)
    else:
        post = continuous_posterior(hist, data, decision.w_h)
    lo, hi = credible_interval(post, args.level)
    return {"w_h": decision.w_h, "w_star": post.w_star, "posterior_mean": posterior_mean(post),
            "ci_lower": lo, "ci_upper": hi}


def _emit_record(rec: dict, args) -> None:
    if args.format == "json":
        _emit(to_json(rec), args.out)
    elif args.format == "csv":
        _emit(to_csv([rec]), args.out)
    else:
        _emit(_record_text(rec), args.out)


def cmd_gate(args) -> int:
    prior, hist = _historical(args)
    data = _data(args)
    policy = _policy(args)
    if args.endpoint == "binary":
        dec = gate_binary(prior, data, hist)
    else:
        dec = gate_continuous(hist, data)
    weight = gated(policy, dec, data, hist, prior or BetaShape(1.0, 1.0))
    rec = {"borrow": dec.borrow, "k": dec.k, "waic0": dec.waic0.total, "waic1": dec.waic1.total,
           "policy": args.policy, "gated_out": weight.gated_out}
    rec.update(_posterior_record(args, prior, hist, data, weight))
    _emit_record(rec, args)
    return EXIT_OK


def cmd_posterior(args) -> int:
    prior, hist = _historical(args)
    data = _data(args)
    weight = decide_weight(_policy(args), data, hist, prior or BetaShape(1.0, 1.0))
    rec = {"policy": args.policy}
    rec.update(_posterior_record(args, prior, hist, data, weight))
    _emit_record(rec, args)
    return EXIT_OK


def _resolve_seed(flag: int | None) -> int | None:
    if flag is not None:
        return flag
    env = os.environ.get("WOW_SEED")
    if env is None or env == "":
        return None
    try:
        return int(env)
    except ValueError as exc:
        raise _UsageError(f"WOW_SEED must be an integer, got {env!r}") from exc


def _runs_for(args):
    if args.reps is not None and args.reps < 1:
        raise _UsageError("--reps must be >= 1")
    if args.workers < 1:
        raise _UsageError("--workers must be >= 1")
    doc = load_config(args.config)
    seed = _resolve_seed(args.seed)
    runs = expand_config(doc, seed=seed, reps=args.reps)
    if any(r.config.reps < 100 for r in runs):
        print("warning: fewer than 100 replicates; calibrated thresholds (empirical "
              "quantiles) will be unstable", file=sys.stderr)
    return doc, seed, runs


def _simulate(args, power: bool) -> int:
    doc, seed, runs = _runs_for(args)
    rows = []
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", UserWarning)
        for run in runs:
            cfg = run.config
            null = cfg.null().replace(seed=derive_seed(cfg.seed, 1))
            cal = calibrate_threshold(null, args.workers)
            log.info("scenario %s %s: C=%.6f", run.scenario_id, cfg.method, cal.threshold_c)
            if power:
                res = estimate_power(cfg, cal.threshold_c, args.workers)
                rows.append(result_row(cfg, res, cal, run.scenario_id))
            else:
                rows.append({"scenario": run.scenario_id, "method": cfg.method,
                             "gated": cfg.gated, "theta": cfg.theta, "n": cfg.n,
                             "n_t": cfg.n_t, "n_h": cfg.n_h, "alpha": cfg.alpha,
                             "C": cal.threshold_c, "achieved_alpha": cal.achieved_alpha,
                             "reps": cal.reps_used})
    text = to_csv(rows) if args.format == "csv" else to_json(rows)
    try:
        data = _emit(text, args.out)
        _write_manifest(args.out, args.command,
                        {"file": str(args.config), "document": doc, "reps": args.reps,
                         "workers": args.workers,
                         "runs": [{"scenario": r.scenario_id, "policy_type": type(r.config.policy).__name__,
                                   **dataclasses.asdict(r.config)} for r in runs]},
                        seed, data)
    except OSError as exc:
        print(f"error: cannot write output: {exc}", file=sys.stderr)
        return EXIT_IO
    return EXIT_OK


def cmd_simulate(args) -> int:
    return _simulate(args, power=True)


def cmd_calibrate(args) -> int:
    return _simulate(args, power=False)


_COMMANDS = {
    "region": cmd_region,
    "gate": cmd_gate,
    "posterior": cmd_posterior,
    "simulate": cmd_simulate,
    "calibrate": cmd_calibrate,
}


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)
    try:
        return _COMMANDS[args.command](args)
    except (_UsageError, ConfigError, DomainError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except IntegrityError as exc:
        print(f"integrity error: {exc}", file=sys.stderr)
        return EXIT_INTEGRITY
    except OSError as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
