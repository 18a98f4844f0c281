"""Command-line front end: ``coalescence <command> --config FILE``.

Commands: validate, exact, simulate, genealogy, rates, sweep. Configs are
TOML (or JSON when the file ends in ``.json``). Exit codes: 0 success,
1 domain or validation error, 2 parse error, 3 resource exhaustion.
"""
from __future__ import annotations

import argparse
import csv
import io
import json
import math
import sys
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path
from typing import Optional

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

from . import analytics, genealogy, simulator
from .composition import classify, compose_chain
from .errors import (
    BudgetExceededError,
    CoalescenceError,
    InvalidMechanismError,
    ResourceError,
)
from .exact import exact_str, from_literal, to_literal
from .mechanisms import MechanismSchedule, named_schedule
from .rng import make_rng
from .svg import line_chart

EXIT_OK, EXIT_DOMAIN, EXIT_PARSE, EXIT_RESOURCE = 0, 1, 2, 3
COMMANDS = ("validate", "exact", "simulate", "genealogy", "rates", "sweep")

SECTION_KEYS = {
    "mechanism": {"family", "params", "schedule", "allow_degenerate", "named"},
    "run": {"N", "boxes", "replicas", "seed", "budget", "jmax", "workers"},
    "output": {"format", "path", "svg", "log"},
    "genealogy": {"nu", "j", "samples", "min_samples", "bgw_budget"},
    "rates": {"schedule", "params", "n_max"},
    "sweep": {"param", "values"},
}
RUN_DEFAULTS = {"N": 1, "boxes": 10_000, "replicas": 1, "seed": 0,
                "budget": simulator.DEFAULT_BUDGET, "jmax": 10, "workers": None}


class ConfigError(Exception):
    """Malformed or incomplete configuration (exit code 2)."""


@dataclass
class ExperimentConfig:
    mechanism: dict = field(default_factory=dict)
    run: dict = field(default_factory=dict)
    output: dict = field(default_factory=dict)
    genealogy: dict = field(default_factory=dict)
    rates: dict = field(default_factory=dict)
    sweep: dict = field(default_factory=dict)

    @classmethod
    def from_mapping(cls, d: dict, strict: bool = True) -> "ExperimentConfig":
        if not isinstance(d, dict):
            raise ConfigError("config must be a table of sections")
        unknown = set(d) - set(SECTION_KEYS)
        if unknown and strict:
            raise ConfigError(f"unknown config sections: {sorted(unknown)}")
        kw = {}
        for sec, keys in SECTION_KEYS.items():
            body = d.get(sec, {})
            if not isinstance(body, dict):
                raise ConfigError(f"[{sec}] must be a table")
            bad = set(body) - keys
            if bad and strict:
                raise ConfigError(f"unknown keys in [{sec}]: {sorted(bad)}")
            kw[sec] = {k: v for k, v in body.items() if k in keys}
        run = dict(RUN_DEFAULTS)
        run.update(kw["run"])
        for k in ("N", "boxes", "replicas", "seed", "budget", "jmax"):
            v = run[k]
            if isinstance(v, float) and v.is_integer():
                v = int(v)
            if not isinstance(v, int) or isinstance(v, bool):
                raise ConfigError(f"[run] {k} must be an integer")
            run[k] = v
        kw["run"] = run
        fmt = kw["output"].setdefault("format", "csv")
        if fmt not in ("csv", "json"):
            raise ConfigError("[output] format must be 'csv' or 'json'")
        return cls(**kw)

    def schedule(self) -> MechanismSchedule:
        m = dict(self.mechanism)
        if not m:
            raise ConfigError("config has no [mechanism] section")
        if "named" in m:
            extra = set(m) - {"named", "params"}
            if extra:
                raise ConfigError(f"[mechanism] with 'named' accepts only 'params', got {sorted(extra)}")
            return named_schedule(m["named"], **dict(m.get("params", {})))
        m.pop("named", None)
        return MechanismSchedule.from_dict(m)


def load_config(path: Path, strict: bool = True) -> ExperimentConfig:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config: {exc}") from None
    try:
        data = json.loads(text) if str(path).endswith(".json") else tomllib.loads(text)
    except (json.JSONDecodeError, tomllib.TOMLDecodeError) as exc:
        raise ConfigError(f"cannot parse {path}: {exc}") from None
    return ExperimentConfig.from_mapping(data, strict=strict)


# ---------------------------------------------------------------------------
# output helpers


def _num(x) -> tuple[str, str]:
    """(exact rational string or '', decimal string) for a CSV cell pair."""
    if x is None:
        return "", ""
    if isinstance(x, Fraction):
        try:
            dec = repr(float(x))
        except OverflowError:
            dec = "inf"
        return str(x), dec
    if isinstance(x, int):
        return str(x), repr(float(x))
    return "", repr(float(x))


def _jsonable(x):
    if isinstance(x, dict):
        return {str(k): _jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_jsonable(v) for v in x]
    if isinstance(x, Fraction):
        return to_literal(x)
    if isinstance(x, float) and not math.isfinite(x):
        return str(x)
    if hasattr(x, "item"):
        return _jsonable(x.item())
    return x


class Output:
    def __init__(self, cfg: ExperimentConfig, command: str):
        self.dir = Path(cfg.output.get("path", "."))
        self.fmt = cfg.output["format"]
        self.svg = cfg.output.get("svg")
        self.log_scale = bool(cfg.output.get("log", False))
        self.command = command
        self.written: list[str] = []

    def _write(self, name: str, text: str) -> None:
        self.dir.mkdir(parents=True, exist_ok=True)
        p = self.dir / name
        p.write_text(text)
        self.written.append(str(p))

    def table(self, header: list[str], rows: list[list], summary: dict) -> None:
        if self.fmt == "csv":
            buf = io.StringIO()
            w = csv.writer(buf, lineterminator="\n")
            w.writerow(header)
            w.writerows(rows)
            self._write(f"{self.command}.csv", buf.getvalue())
            self._write(f"{self.command}_summary.json", dumps(summary))
        else:
            doc = dict(summary)
            doc["table"] = [dict(zip(header, r)) for r in rows]
            self._write(f"{self.command}.json", dumps(doc))

    def chart(self, xs, ys, title, ylabel) -> None:
        if self.svg:
            p = Path(self.svg)
            p.parent.mkdir(parents=True, exist_ok=True)
            p.write_text(line_chart(xs, ys, title=title, ylabel=ylabel, log_y=self.log_scale))
            self.written.append(str(p))


def dumps(d) -> str:
    return json.dumps(_jsonable(d), indent=2, sort_keys=True) + "\n"


# ---------------------------------------------------------------------------
# commands


def cmd_validate(cfg: ExperimentConfig, out: Output) -> int:
    sched = cfg.schedule()
    N = cfg.run["N"]
    problems = sched.violations(N)
    report = {"family": sched.family, "N": N, "valid": not problems, "violations": problems}
    out._write("validate.json", dumps(report))
    for p in problems:
        print(p, file=sys.stderr)
    return EXIT_OK if not problems else EXIT_DOMAIN


def _checked_mechanisms(cfg: ExperimentConfig):
    sched = cfg.schedule()
    N = cfg.run["N"]
    problems = sched.violations(N)
    if problems:
        raise InvalidMechanismError(problems)
    return sched, sched.mechanisms(N)


def cmd_exact(cfg: ExperimentConfig, out: Output) -> int:
    sched, mechs = _checked_mechanisms(cfg)
    N, jmax = cfg.run["N"], cfg.run["jmax"]
    chain = compose_chain(mechs)
    pmf = chain.pmf(jmax)
    rows = [[j, *_num(p)] for j, p in enumerate(pmf)]
    report = classify(sched, N)
    summary = {
        "N": N,
        "chain": chain.to_dict(),
        "empty_prob": chain.empty_prob(),
        "empty_prob_decimal": float(chain.empty_prob()),
        "mean": chain.mean(),
        "mean_decimal": float(chain.mean()),
        "flags": list(chain.flags),
        "criticality": {"class": report.cls.value, "mu": report.mu, "mu_source": report.mu_source},
    }
    out.table(["j", "probability_exact", "probability"], rows, summary)
    out.chart(range(len(pmf)), [float(p) for p in pmf], f"P(K*_{N} = j)", "probability")
    print(dumps({"empty_prob": summary["empty_prob"], "mean": summary["mean"]}), end="")
    return EXIT_OK


def _run_config(cfg: ExperimentConfig, mechs) -> simulator.RunConfig:
    r = cfg.run
    return simulator.RunConfig(tuple(mechs), r["boxes"], seed=r["seed"], replicas=r["replicas"],
                               budget=r["budget"]).check()


def _simulate_logs(cfg, mechs):
    rc = _run_config(cfg, mechs)
    return simulator.run_replicas(rc, workers=cfg.run.get("workers"))


def cmd_simulate(cfg: ExperimentConfig, out: Output) -> int:
    _, mechs = _checked_mechanisms(cfg)
    N, jmax = cfg.run["N"], cfg.run["jmax"]
    logs = _simulate_logs(cfg, mechs)
    emp = simulator.empirical_pmf(logs, N, jmax)
    mean, se = simulator.empirical_mean(logs, N)
    try:
        chain = compose_chain(mechs)
        exact_pmf, exact_mean = chain.pmf(jmax), chain.mean()
    except CoalescenceError:
        exact_pmf, exact_mean = None, None
    rows = []
    for j in range(jmax + 1):
        ex = exact_pmf[j] if exact_pmf is not None and j < len(exact_pmf) else None
        z = None
        if ex is not None and emp.stderr[j] > 0:
            z = (emp.freq[j] - float(ex)) / emp.stderr[j]
        rows.append([j, repr(float(emp.freq[j])), repr(float(emp.stderr[j])), *_num(ex),
                     "" if z is None else repr(float(z))])
    summary = {
        "N": N,
        "boxes": cfg.run["boxes"],
        "replicas": cfg.run["replicas"],
        "seed": cfg.run["seed"],
        "sample_size": emp.sample_size,
        "mean": mean,
        "mean_stderr": se,
        "exact_mean": exact_mean,
        "mean_z": (None if exact_mean is None or not math.isfinite(float(exact_mean)) or se == 0
                   else (mean - float(exact_mean)) / se),
        "conservation": all(lg.check_conservation() for lg in logs),
        "level_counts": [[lv.count for lv in lg.levels] for lg in logs],
    }
    out.table(["j", "empirical", "stderr", "exact_rational", "exact", "z"], rows, summary)
    out.chart(range(jmax + 1), emp.freq, f"empirical P(K_{N} = j)", "frequency")
    print(dumps({"mean": mean, "mean_stderr": se, "p0": float(emp.freq[0])}), end="")
    return EXIT_OK


def cmd_genealogy(cfg: ExperimentConfig, out: Output) -> int:
    _, mechs = _checked_mechanisms(cfg)
    N = cfg.run["N"]
    g = cfg.genealogy
    try:
        nu, j = int(g["nu"]), int(g["j"])
    except KeyError as exc:
        raise ConfigError(f"[genealogy] needs {exc.args[0]!r}") from None
    exact = genealogy.exact_conditional(mechs, N, nu, j)
    logs = _simulate_logs(cfg, mechs)
    emp = genealogy.empirical_conditional(logs, nu, j, int(g.get("min_samples", genealogy.MIN_CONDITIONED_SAMPLES)))
    samples = int(g.get("samples", 10_000))
    rng = make_rng(cfg.run["seed"], 0, stream=2)
    bgw = genealogy.bgw_conditional(mechs, N, nu, j, rng, samples, g.get("bgw_budget"))
    tv = {
        "exact_empirical": genealogy.total_variation(exact, emp),
        "exact_bgw": genealogy.total_variation(exact, bgw),
        "empirical_bgw": genealogy.total_variation(emp, bgw),
    }
    K = max(len(exact.probs), len(emp.probs), len(bgw.probs))
    rows = []
    for k in range(K):
        ex = exact.probs[k] if k < len(exact.probs) else Fraction(0)
        e = emp.probs[k] if k < len(emp.probs) else 0.0
        b = bgw.probs[k] if k < len(bgw.probs) else 0.0
        rows.append([k, *_num(ex), repr(float(e)), repr(float(b))])
    summary = {"N": N, "nu": nu, "j": j, "tv": tv, "empirical_samples": emp.sample_size,
               "bgw_samples": bgw.sample_size}
    out.table(["k", "exact_rational", "exact", "empirical", "bgw"], rows, summary)
    print(dumps({"tv": tv}), end="")
    return EXIT_OK


def cmd_rates(cfg: ExperimentConfig, out: Output) -> int:
    r = cfg.rates
    if "schedule" not in r:
        raise ConfigError("[rates] needs 'schedule'")
    rep = analytics.limit_report(r["schedule"], int(r.get("n_max", 20)), **dict(r.get("params", {})))
    header = ["N", "exact_rational", "exact", "predicted_rational", "predicted", "ratio", "flag", "printed_form"]
    rows = []
    for row in rep.rows:
        rows.append([row.N, *_num(row.exact), *_num(row.predicted),
                     "" if row.ratio is None else repr(row.ratio), row.flag,
                     "" if row.printed_form is None else repr(row.printed_form)])
    summary = {k: v for k, v in rep.to_dict().items() if k != "rows"}
    out.table(header, rows, summary)
    out.chart(rep.column("N"), [analytics._decimal(x) for x in rep.column("exact")],
              f"{rep.schedule}: {rep.quantity}", rep.quantity)
    print(dumps({"rho": rep.rho, "rate_class": rep.rate_class, "flags": list(rep.flags)}), end="")
    return EXIT_OK


def cmd_sweep(cfg: ExperimentConfig, out: Output) -> int:
    s = cfg.sweep
    if "param" not in s or "values" not in s:
        raise ConfigError("[sweep] needs 'param' and 'values'")
    param, values = s["param"], list(s["values"])
    N = cfg.run["N"]
    rows, ys = [], []
    for v in values:
        mech = dict(cfg.mechanism)
        params = dict(mech.get("params", {}))
        params[param] = v
        mech["params"] = params
        sub = ExperimentConfig(mechanism=mech, run=cfg.run, output=cfg.output)
        sched, mechs = _checked_mechanisms(sub)
        chain = compose_chain(mechs)
        p0, mean = chain.empty_prob(), chain.mean()
        rep = classify(sched, N)
        rows.append([exact_str(from_literal(v)), *_num(p0), *_num(mean), rep.cls.value, repr(rep.mu)])
        ys.append(float(p0))
    summary = {"N": N, "param": param, "values": values}
    out.table([param, "empty_prob_rational", "empty_prob", "mean_rational", "mean", "class", "mu"], rows, summary)
    out.chart([float(from_literal(v)) for v in values], ys, f"P(K*_{N} = 0) vs {param}", "empty prob")
    return EXIT_OK


HANDLERS = {
    "validate": cmd_validate,
    "exact": cmd_exact,
    "simulate": cmd_simulate,
    "genealogy": cmd_genealogy,
    "rates": cmd_rates,
    "sweep": cmd_sweep,
}


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="coalescence", description="Box-filling coalescence experiments.")
    ap.add_argument("command", choices=COMMANDS)
    ap.add_argument("--config", required=True, type=Path, help="TOML or JSON experiment config")
    ap.add_argument("--seed", type=int, help="master seed (overrides [run] seed)")
    ap.add_argument("--out", type=Path, help="output directory (overrides [output] path)")
    ap.add_argument("--format", choices=("csv", "json"), help="table format")
    ap.add_argument("--svg", type=Path, help="write a line chart here")
    ap.add_argument("--replicas", type=int, help="replica count (overrides [run] replicas)")
    ap.add_argument("--strict", action=argparse.BooleanOptionalAction, default=True,
                    help="reject unknown config keys (default on)")
    return ap


def main(argv: Optional[list[str]] = None) -> int:
    ap = build_parser()
    try:
        args = ap.parse_args(argv)
    except SystemExit as exc:
        return EXIT_PARSE if exc.code else EXIT_OK
    try:
        cfg = load_config(args.config, strict=args.strict)
        if args.seed is not None:
            if not 0 <= args.seed < 2**64:
                raise ConfigError("--seed must be an unsigned 64-bit integer")
            cfg.run["seed"] = args.seed
        if args.replicas is not None:
            cfg.run["replicas"] = args.replicas
        if args.out is not None:
            cfg.output["path"] = str(args.out)
        if args.format is not None:
            cfg.output["format"] = args.format
        if args.svg is not None:
            cfg.output["svg"] = str(args.svg)
        return HANDLERS[args.command](cfg, Output(cfg, args.command))
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_PARSE
    except BudgetExceededError as exc:
        print(f"resource error: {exc}", file=sys.stderr)
        if exc.partial:
            print(f"partial: {json.dumps(_jsonable(exc.partial), sort_keys=True)}", file=sys.stderr)
        return EXIT_RESOURCE
    except ResourceError as exc:
        print(f"resource error: {exc}", file=sys.stderr)
        return EXIT_RESOURCE
    except (CoalescenceError, ValueError, TypeError, ZeroDivisionError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DOMAIN


if __name__ == "__main__":
    sys.exit(main())
