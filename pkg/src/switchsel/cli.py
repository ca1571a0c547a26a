"""Command line front end: ``switchsel {select,test,simulate,diag}``.

Exit codes: 0 success, 1 a diagnostic failed, 2 unparseable input, 3 an
observation (or sample) the family or criterion cannot handle, 4 invalid
configuration or simulation kind, 5 a criterion that is not valid under
optional stopping was requested for ``test``.
"""

from __future__ import annotations

import argparse
import csv
import json
import math
import sys
import time
from datetime import datetime, timezone

import numpy as np

from switchsel import __version__, config, diagnostics, harness
from switchsel._accel import backend_name
from switchsel.criteria import RobustTest, bfms_select, glrt_threshold, post_selection_estimate, select, switch_select
from switchsel.errors import (ConfigError, EmptySample, InvalidObservation, NotAnytimeValid, NTooSmall,
                              NumericUnderflow, UndefinedMLE)
from switchsel.evidence import MarginalState
from switchsel.expfam import MeanParam, map_estimate, mle, truncated_mle
from switchsel.switchcrit import SwitchState, sw_update

EXIT_FAIL, EXIT_PARSE, EXIT_DATA, EXIT_CONFIG, EXIT_NOT_ANYTIME = 1, 2, 3, 4, 5


class ParseError(ValueError):
    pass


class UnsupportedObservation(ValueError):
    pass


def _now() -> str:
    return datetime.now(timezone.utc).isoformat(timespec="seconds")


def manifest(subcommand: str, cfg: config.SimConfig, started: str, **extra) -> dict:
    out = {
        "subcommand": subcommand,
        "tool_version": __version__,
        "seed": cfg.seed,
        "config": cfg.resolved(),
        "started": started,
        "finished": _now(),
    }
    out.update(extra)
    return out


# --------------------------------------------------------------------------- input

def parse_value(text: str, lineno: int) -> float:
    """One observation from a CSV field or JSON-lines entry."""
    text = text.strip()
    try:
        value = json.loads(text) if text[:1] in "[{" else float(text)
    except ValueError as exc:
        raise ParseError(f"line {lineno}: cannot parse {text!r}") from exc
    if isinstance(value, list):
        if len(value) != 1:
            raise UnsupportedObservation(f"line {lineno}: expected a scalar observation, got {len(value)} values")
        value = value[0]
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ParseError(f"line {lineno}: not a number: {text!r}")
    return float(value)


def read_observations(path: str) -> np.ndarray:
    """CSV (one observation per row) or JSON lines (``.jsonl``/``.json``); ``-`` reads stdin."""
    fh = sys.stdin if path == "-" else open(path, newline="", encoding="utf-8")
    try:
        json_lines = path.endswith((".jsonl", ".json"))
        values = []
        if json_lines:
            for i, line in enumerate(fh, start=1):
                if line.strip():
                    values.append(parse_value(line, i))
        else:
            for i, row in enumerate(csv.reader(fh), start=1):
                fields = [f for f in row if f.strip()]
                if not fields:
                    continue
                if len(fields) != 1:
                    raise UnsupportedObservation(f"row {i}: expected one value per row, got {len(fields)}")
                values.append(parse_value(fields[0], i))
    finally:
        if fh is not sys.stdin:
            fh.close()
    return np.array(values, dtype=float)


# --------------------------------------------------------------------------- commands

def _criterion_cfg(cfg: config.SimConfig, alpha) -> config.SimConfig:
    if alpha is not None and cfg.criterion == "aic":
        return cfg.replace(aic_t=glrt_threshold(alpha, cfg.pair().m1 - cfg.pair().m0))
    return cfg


def _anchor(pair) -> np.ndarray:
    if pair.is_singleton:
        return pair.null_point
    tail = pair.fixed_tail[0]
    return np.array([1.0 + tail * tail, tail])


def _estimator(cfg: config.SimConfig, pair, used: list):
    def estimate(sample, family) -> MeanParam:
        if cfg.estimator == "map":
            used.append("map")
            return map_estimate(sample, family, cfg.map_lambda, _anchor(pair))
        if cfg.estimator == "truncated":
            used.append("truncated")
            return truncated_mle(sample, family)
        try:
            out = mle(sample, family)
            used.append("mle")
            return out
        except (UndefinedMLE, EmptySample):
            used.append("map_fallback")
            return map_estimate(sample, family, cfg.map_lambda, _anchor(pair))

    return estimate


def _num(v: float):
    v = float(v) + 0.0  # no negative zero in output
    return v if math.isfinite(v) else repr(v)


def cmd_select(args) -> int:
    started = _now()
    cfg = _criterion_cfg(_load(args), args.alpha)
    x = read_observations(args.data)
    model = cfg.model()
    x = model.pair.family.check_sample(x)
    crit = cfg.criterion_obj()
    decision = select(crit, x, model)
    used: list[str] = []
    est = post_selection_estimate(decision, x, model.pair, _estimator(cfg, model.pair, used))
    out = {
        "criterion": crit.kind,
        "n": decision.n,
        "selected": decision.selected,
        "evidence": _num(decision.evidence),
        "log_evidence": _num(decision.log_evidence),
        "evidence_is_log": decision.log_scale,
        "estimate": [float(v) for v in est.values],
        "estimator": used[-1] if used else "null_point",
    }
    if crit.kind == "aic":
        out["aic_t"] = cfg.aic_t
    if args.alpha is not None and crit.anytime_valid:
        out["alpha"] = args.alpha
        out["reject"] = decision.evidence <= args.alpha
    out["manifest"] = manifest("select", cfg, started, data=args.data)
    print(json.dumps(out, indent=2))
    return 0


def cmd_test(args) -> int:
    cfg = _load(args)
    alpha = cfg.alpha if args.alpha is None else args.alpha
    model = cfg.model()
    test = RobustTest(alpha, cfg.criterion, model.pair)
    fam = model.pair.family
    if cfg.criterion == "switch":
        state = SwitchState.start(model.prior0, model.prior1, model.switch_prior)
    else:
        state = (MarginalState(model.prior0), MarginalState(model.prior1))
    out = sys.stdout
    for lineno, line in enumerate(iter(sys.stdin.readline, ""), start=1):
        if not line.strip():
            continue
        try:
            x = parse_value(line, lineno)
        except ParseError as exc:
            # a bad line ends the stream; everything printed so far stays valid
            raise UnsupportedObservation(str(exc)) from exc
        fam.check_sample([x])
        if cfg.criterion == "switch":
            state = sw_update(state, x)
            decision = switch_select(state, cfg.gamma)
        else:
            state = (state[0].update(x), state[1].update(x))
            decision = bfms_select(*state)
        status = test.step(decision).upper()
        out.write(f"{decision.n}\t{decision.log_evidence:.17g}\t{decision.evidence:.17g}\t{status}\n")
        out.flush()
    return 0


def cmd_simulate(args) -> int:
    started = _now()
    if args.kind not in harness.KINDS:
        raise ConfigError(f"unknown simulation kind {args.kind!r}; valid kinds: {', '.join(harness.KINDS)}")
    cfg = _load(args)
    t0 = time.perf_counter()
    report = harness.simulate(args.kind, cfg)
    info = manifest("simulate", cfg, started, kind=args.kind, backend=backend_name(),
                    elapsed_seconds=round(time.perf_counter() - t0, 3))
    csv_path, json_path = harness.write_report(report, args.out or args.kind, info)
    print(f"wrote {csv_path} and {json_path} ({len(report.rows)} rows)")
    return 0


def cmd_diag(args) -> int:
    cfg = _load(args)
    checks = diagnostics.run_all(cfg)
    for check in checks:
        print(check.line())
    return 0 if all(c.passed for c in checks) else EXIT_FAIL


# --------------------------------------------------------------------------- plumbing

def _load(args) -> config.SimConfig:
    overrides = {k: getattr(args, k, None) for k in ("seed", "reps", "horizon", "workers", "criterion")}
    return config.load(args.config, **overrides)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="switchsel", description="Nested exponential-family model selection.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", help="flat TOML config file")
        p.add_argument("--seed", type=int)
        p.add_argument("--criterion", help="switch, bayes, aic, bic or hq")

    p = sub.add_parser("select", help="select a model for a data file")
    common(p)
    p.add_argument("--data", required=True, help="CSV or JSON-lines file, '-' for stdin")
    p.add_argument("--alpha", type=float, help="level; for aic sets the likelihood-ratio-test threshold")
    p.set_defaults(func=cmd_select)

    p = sub.add_parser("test", help="anytime-valid sequential test on stdin, one observation per line")
    common(p)
    p.add_argument("--alpha", type=float)
    p.set_defaults(func=cmd_test)

    p = sub.add_parser("simulate", help="run a Monte Carlo experiment")
    p.add_argument("kind", help=", ".join(harness.KINDS))
    common(p)
    p.add_argument("--out", help="output stem; writes <out>.csv and <out>.json")
    p.add_argument("--reps", type=int)
    p.add_argument("--horizon", type=int)
    p.add_argument("--workers", type=int)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("diag", help="numerical self-checks")
    common(p)
    p.set_defaults(func=cmd_diag)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ParseError as exc:
        code, msg = EXIT_PARSE, exc
    except (UnsupportedObservation, InvalidObservation, UndefinedMLE, EmptySample, NTooSmall,
            NumericUnderflow) as exc:
        code, msg = EXIT_DATA, exc
    except NotAnytimeValid as exc:
        code, msg = EXIT_NOT_ANYTIME, exc
    except ConfigError as exc:
        code, msg = EXIT_CONFIG, exc
    except OSError as exc:
        code, msg = EXIT_PARSE, exc
    sys.stdout.flush()
    print(f"switchsel: error: {type(msg).__name__}: {msg}", file=sys.stderr)
    return code


if __name__ == "__main__":
    sys.exit(main())
