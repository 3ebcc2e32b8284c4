"""Command-line entry point: ``adoptions {simulate,price,calibrate,facts,backtest}``.

Every command writes ``<command>.json`` into ``--out-dir`` (sorted keys, the
resolved config echoed under ``"config"``) plus CSV artifacts where a table
makes sense. ``--format`` picks what goes to stdout: the JSON report or the
main CSV table.
"""

from __future__ import annotations

import argparse
import json
import math
import sys
from dataclasses import dataclass, field, fields
from pathlib import Path
from typing import Optional

import numpy as np

from adoptions import __version__
from adoptions.backtest import BacktestConfig, PricingMethod, run_backtest_suite
from adoptions.calibration import (
    Detector,
    DetectorConfig,
    calibrate,
    log_returns,
    select_detector,
)
from adoptions.errors import AdoptionsError, ConfigError, ConvergenceError
from adoptions.io import (
    SECONDS_PER_YEAR,
    dumps_report,
    ingest_csv,
    write_rows_csv,
    write_series_csv,
)
from adoptions.model import (
    DAY,
    HOUR,
    JumpDiffusionParams,
    LogADE,
    LogLaplacian,
    LogNormal,
    OptionSpec,
    build_time_grid,
    format_gamma,
    parse_gamma,
)
from adoptions.pricing import closed_form_price, mc_price
from adoptions.simulation import RngSpec, simulate_paths, simulate_series
from adoptions.stylized_facts import build_report

TIME_SCALES = {"daily": DAY, "hourly": HOUR}
JUMP_LAWS = ("lognormal", "ade", "laplacian")
PRICE_METHODS = ("mc", "closed_form", "both")


@dataclass(frozen=True)
class RunConfig:
    """Every tunable of every command; JSON config files use these field names.

    Defaults follow the advertising-option fixture: daily steps, r = 0.1,
    c = c_tilde = 0.2, K = 0.75 * x0, gamma = 0 and a 30-step window that
    starts 30 steps after pricing.
    """

    inputs: tuple = ()
    time_scale: str = "daily"
    dt: Optional[float] = None
    x0: float = 1.0
    r: float = 0.1
    sigma: float = 0.2
    lam: float = 5.0
    mu: float = 0.1
    jump_law: str = "lognormal"
    alpha: float = 0.1
    beta: float = 0.2
    eta1: float = 10.0
    eta2: float = 5.0
    p1: float = 0.5
    rho: float = 0.0
    eta: float = 0.1
    theta: float = 1.0
    K: Optional[float] = None
    strike_factor: float = 0.75
    m_tilde: int = 30
    m: int = 30
    gamma: object = 0.0
    c: float = 0.2
    c_tilde: float = 0.2
    method: str = "both"
    z: int = 100_000
    k_max: int = 200
    seed: int = 0
    paths: int = 1
    series_steps: Optional[int] = None
    detectors: Optional[tuple] = None
    detector_overrides: dict = field(default_factory=dict)
    significance: float = 0.05
    n_train: int = 60
    backtest_z: int = 10_000
    backtest_methods: tuple = tuple(m.value for m in PricingMethod)

    # ---- validation and conversions to domain types

    def validate(self) -> "RunConfig":
        def need(ok, name, msg):
            if not ok:
                raise ConfigError(f"config field '{name}': {msg}")

        need(self.time_scale in TIME_SCALES, "time_scale", f"must be one of {sorted(TIME_SCALES)}")
        need(self.dt is None or self.dt > 0, "dt", "must be positive")
        need(self.x0 > 0, "x0", "must be positive")
        need(self.sigma >= 0, "sigma", "must be >= 0")
        need(self.lam >= 0, "lam", "must be >= 0")
        need(self.jump_law in JUMP_LAWS, "jump_law", f"must be one of {JUMP_LAWS}")
        need(self.method in PRICE_METHODS, "method", f"must be one of {PRICE_METHODS}")
        need(self.K is None or self.K > 0, "K", "must be positive")
        need(self.strike_factor > 0, "strike_factor", "must be positive")
        need(_is_int(self.m) and self.m >= 1, "m", "must be an integer >= 1")
        need(_is_int(self.m_tilde) and self.m_tilde >= 0, "m_tilde", "must be an integer >= 0")
        need(_is_int(self.z) and self.z >= 2, "z", "must be an integer >= 2")
        need(_is_int(self.backtest_z) and self.backtest_z >= 2, "backtest_z",
             "must be an integer >= 2")
        need(_is_int(self.k_max) and self.k_max >= 1, "k_max", "must be an integer >= 1")
        need(_is_int(self.seed) and self.seed >= 0, "seed", "must be a non-negative integer")
        need(_is_int(self.paths) and self.paths >= 1, "paths", "must be an integer >= 1")
        need(self.series_steps is None or (_is_int(self.series_steps) and self.series_steps >= 1),
             "series_steps", "must be an integer >= 1")
        need(0 < self.significance < 1, "significance", "must lie in (0, 1)")
        need(_is_int(self.n_train) and self.n_train >= 2, "n_train", "must be an integer >= 2")
        for name in ("gamma",):
            try:
                parse_gamma(self.gamma)
            except (ConfigError, ValueError, TypeError) as exc:
                raise ConfigError(f"config field '{name}': {exc}") from None
        unknown = set(self.detector_overrides) - {f.name for f in fields(DetectorConfig)}
        need(not unknown, "detector_overrides", f"unknown keys {sorted(unknown)}")
        if self.detectors is not None:
            for d in self.detectors:
                Detector.parse(d)
        for mth in self.backtest_methods:
            need(mth in {m.value for m in PricingMethod}, "backtest_methods",
                 f"unknown method {mth!r}")
        # build once so parameter-level errors surface now, with field names
        self.jump_dist()
        return self

    def step(self, data_dt: Optional[float] = None) -> float:
        if self.dt is not None:
            return float(self.dt)
        if data_dt is not None:
            return float(data_dt)
        return TIME_SCALES[self.time_scale]

    def jump_dist(self):
        try:
            if self.jump_law == "lognormal":
                return LogNormal(self.alpha, self.beta)
            if self.jump_law == "ade":
                return LogADE(self.eta1, self.eta2, self.p1, 1.0 - self.p1)
            return LogLaplacian(self.rho, self.eta)
        except ConfigError as exc:
            raise ConfigError(f"config jump law '{self.jump_law}': {exc}") from None

    def params(self, risk_neutral: bool = True) -> JumpDiffusionParams:
        rate = self.r if risk_neutral else self.mu
        return JumpDiffusionParams(rate, self.sigma, self.lam, self.jump_dist(), risk_neutral)

    def option_spec(self, x0: float, dt: float) -> OptionSpec:
        strike = self.K if self.K is not None else self.strike_factor * x0
        return OptionSpec(theta=self.theta, K=strike, S=self.m_tilde * dt,
                          T=(self.m_tilde + self.m) * dt, m=self.m, gamma=parse_gamma(self.gamma),
                          c=self.c, c_tilde=self.c_tilde)

    def detector_config(self) -> DetectorConfig:
        return DetectorConfig(**self.detector_overrides)

    def to_record(self) -> dict:
        rec = {f.name: getattr(self, f.name) for f in fields(self)}
        rec["gamma"] = format_gamma(parse_gamma(self.gamma))
        rec["inputs"] = [str(p) for p in self.inputs]
        return rec


def _is_int(value) -> bool:
    return isinstance(value, (int, np.integer)) and not isinstance(value, bool)


_TUPLE_FIELDS = {"inputs", "detectors", "backtest_methods"}


def _coerce(name: str, value):
    if name in _TUPLE_FIELDS and value is not None:
        if isinstance(value, str):
            value = [value]
        return tuple(value)
    return value


def load_config_file(path) -> dict:
    path = Path(path)
    try:
        data = json.loads(path.read_text())
    except OSError as exc:
        raise ConfigError(f"config file {path}: {exc.strerror}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config file {path}:{exc.lineno}: invalid JSON ({exc.msg})") from exc
    if not isinstance(data, dict):
        raise ConfigError(f"config file {path}: top level must be an object")
    known = {f.name for f in fields(RunConfig)}
    unknown = sorted(set(data) - known)
    if unknown:
        raise ConfigError(f"config file {path}: unknown fields {unknown}")
    return data


def resolve_config(args: argparse.Namespace) -> RunConfig:
    """Defaults, then the config file, then explicit CLI flags."""
    merged: dict = {}
    if args.config:
        merged.update(load_config_file(args.config))
    for f in fields(RunConfig):
        value = getattr(args, f.name, None)
        if value is not None:
            merged[f.name] = value
    merged = {k: _coerce(k, v) for k, v in merged.items()}
    try:
        cfg = RunConfig(**merged)
    except TypeError as exc:
        raise ConfigError(str(exc)) from None
    return cfg.validate()


# ---------------------------------------------------------------- commands


def _single_input(cfg: RunConfig, command: str, required: bool = True):
    if not cfg.inputs:
        if required:
            raise ConfigError(f"{command} needs --input")
        return None
    if len(cfg.inputs) > 1:
        raise ConfigError(f"{command} takes a single --input, got {len(cfg.inputs)}")
    return ingest_csv(cfg.inputs[0])


def cmd_simulate(cfg: RunConfig, out_dir: Path) -> tuple[dict, Optional[Path]]:
    dt = cfg.step()
    if cfg.series_steps is not None:
        params = cfg.params(risk_neutral=False)
        prices, flags = simulate_series(cfg.x0, params, dt, cfg.series_steps, RngSpec(cfg.seed))
        table = out_dir / "series.csv"
        write_series_csv(table, prices, step_seconds=round(dt * SECONDS_PER_YEAR))
        report = {"mode": "series", "n_prices": int(prices.size), "n_jumps": int(flags.sum()),
                  "jump_steps": np.flatnonzero(flags).tolist(), "final_price": float(prices[-1])}
        return report, table
    params = cfg.params()
    grid = build_time_grid(cfg.option_spec(cfg.x0, dt))
    paths = simulate_paths(cfg.x0, params, grid, cfg.paths, RngSpec(cfg.seed))
    table = out_dir / "paths.csv"
    paths.to_csv(table)
    terminal = paths.terminal
    disc = math.exp(-params.r * grid.T)
    report = {
        "mode": "paths",
        "n_paths": len(paths),
        "n_steps": grid.n_steps,
        "dt": grid.dt,
        "n_jumps": paths.n_jumps.tolist(),
        "terminal_mean": float(terminal.mean()),
        "discounted_terminal_mean": disc * float(terminal.mean()),
    }
    return report, table


def cmd_price(cfg: RunConfig, out_dir: Path) -> tuple[dict, Optional[Path]]:
    series = _single_input(cfg, "price", required=False)
    x0 = float(series.prices[-1]) if series is not None else cfg.x0
    dt = cfg.step(series.dt if series is not None else None)
    params = cfg.params()
    spec = cfg.option_spec(x0, dt)
    report: dict = {"x0": x0, "dt": dt}
    rows = []
    if cfg.method in ("mc", "both"):
        res = mc_price(x0, params, spec, cfg.z, RngSpec(cfg.seed))
        report["monte_carlo"] = res.to_record()
        rows.append(res.to_record())
    if cfg.method in ("closed_form", "both"):
        closed_ok = cfg.jump_law == "lognormal" and spec.gamma == 0
        if closed_ok:
            res = closed_form_price(x0, params, spec, k_max=cfg.k_max)
            report["closed_form"] = res.to_record()
            rows.append(res.to_record())
            if "monte_carlo" in report:
                report["closed_form_in_mc_ci95"] = bool(
                    report["monte_carlo"]["ci95_low"] <= res.pi0 <= report["monte_carlo"]["ci95_high"])
        elif cfg.method == "closed_form":
            raise ConfigError("closed-form pricing needs jump_law='lognormal' and gamma=0")
        else:
            report["closed_form"] = {"skipped": "needs jump_law='lognormal' and gamma=0"}
    table = out_dir / "price.csv"
    write_rows_csv(table, rows, ("method", "pi0", "std_error", "ci95_low", "ci95_high", "z"))
    return report, table


def cmd_calibrate(cfg: RunConfig, out_dir: Path) -> tuple[dict, Optional[Path]]:
    series = _single_input(cfg, "calibrate")
    try:
        cal = calibrate(series, cfg.detectors, cfg.detector_config())
    except ConvergenceError as exc:
        if exc.best is None:
            raise
        # report the best attempt, then fail with the numerical-error exit code
        (out_dir / "calibrate.json").write_text(
            dumps_report({"config": cfg.to_record(), "error": str(exc), "mle": exc.best.to_record()}))
        raise
    report = {"n_prices": len(series), "dt": series.dt, "calibration": cal.to_record()}
    table = out_dir / "calibrate.csv"
    write_rows_csv(table, report["calibration"]["detectors"],
                   ("detector", "n_flagged", "kurtosis_after", "kurtosis_in_2_4", "error"))
    return report, table


def cmd_facts(cfg: RunConfig, out_dir: Path) -> tuple[dict, Optional[Path]]:
    if not cfg.inputs:
        raise ConfigError("facts needs at least one --input")
    reports, rows = {}, []
    for path in cfg.inputs:
        series = ingest_csv(path)
        rets = log_returns(series)
        rep = build_report(rets.returns, cfg.significance)
        # presence of jumps/spikes: the selected detector flags at least one return
        detection, _, _ = select_detector(rets, cfg.detectors, cfg.detector_config())
        name = Path(path).stem
        reports[name] = {**rep.to_record(), "jump_detector": detection.detector.value,
                         "jumps_flagged": detection.n_flagged}
        rows.append({"slot": name, "jumps_present": detection.n_flagged >= 1, **rep.to_row()})
    n = len(rows)
    summary = {key: sum(bool(r[key]) for r in rows) / n
               for key in ("jumps_present", "heavy_tails", "ks_reject", "sw_reject", "autocorrelation",
                           "volatility_clustering")}
    table = out_dir / "facts.csv"
    write_rows_csv(table, rows, list(rows[0]))
    return {"slots": reports, "share_of_slots": summary}, table


def cmd_backtest(cfg: RunConfig, out_dir: Path) -> tuple[dict, Optional[Path]]:
    if not cfg.inputs:
        raise ConfigError("backtest needs at least one --input")
    series_set = {}
    for path in cfg.inputs:
        name = Path(path).stem
        if name in series_set:
            raise ConfigError(f"duplicate slot name {name!r} among inputs")
        series_set[name] = ingest_csv(path)
    bt_cfg = BacktestConfig(
        n_train=cfg.n_train, m_tilde=cfg.m_tilde, m=cfg.m, r=cfg.r, c=cfg.c, c_tilde=cfg.c_tilde,
        theta=cfg.theta, gamma=parse_gamma(cfg.gamma), z=cfg.backtest_z, seed=cfg.seed,
        k_max=cfg.k_max, methods=cfg.backtest_methods, detectors=cfg.detectors,
        detector_config=cfg.detector_config(),
    )
    table = run_backtest_suite(series_set, bt_cfg)
    path = out_dir / "backtest.csv"
    table.write_csv(path)
    report = {"aggregate": table.aggregate(), "slots": table.slots,
              "rows": [r.to_record() for r in table.rows]}
    return report, path


COMMANDS = {
    "simulate": cmd_simulate,
    "price": cmd_price,
    "calibrate": cmd_calibrate,
    "facts": cmd_facts,
    "backtest": cmd_backtest,
}


# ---------------------------------------------------------------- argparse


def _gamma_arg(text: str):
    try:
        return float(text)
    except ValueError:
        return text


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    g = common.add_argument_group("common")
    g.add_argument("--input", dest="inputs", action="append", metavar="CSV",
                   help="timestamp,price CSV (repeat for several slots)")
    g.add_argument("--config", help="JSON file with RunConfig fields")
    g.add_argument("--seed", type=int)
    g.add_argument("--out-dir", default=".", help="directory for reports (default: cwd)")
    g.add_argument("--format", choices=("json", "csv"), default="json",
                   help="what to print on stdout")

    model = argparse.ArgumentParser(add_help=False)
    mg = model.add_argument_group("model")
    mg.add_argument("--time-scale", dest="time_scale", choices=sorted(TIME_SCALES))
    mg.add_argument("--dt", type=float)
    mg.add_argument("--x0", type=float)
    mg.add_argument("--r", type=float)
    mg.add_argument("--sigma", type=float)
    mg.add_argument("--lam", type=float)
    mg.add_argument("--mu", type=float, help="real-world drift for simulated series")
    mg.add_argument("--jump-law", dest="jump_law", choices=JUMP_LAWS)
    for name in ("alpha", "beta", "eta1", "eta2", "p1", "rho", "eta"):
        mg.add_argument(f"--{name}", type=float)

    option = argparse.ArgumentParser(add_help=False)
    og = option.add_argument_group("option")
    og.add_argument("--theta", type=float)
    og.add_argument("--K", type=float)
    og.add_argument("--strike-factor", dest="strike_factor", type=float)
    og.add_argument("--m-tilde", dest="m_tilde", type=int)
    og.add_argument("--m", type=int)
    og.add_argument("--gamma", type=_gamma_arg, help="number, 'min' or 'max'")
    og.add_argument("--c", type=float)
    og.add_argument("--c-tilde", dest="c_tilde", type=float)
    og.add_argument("--k-max", dest="k_max", type=int)

    detect = argparse.ArgumentParser(add_help=False)
    detect.add_argument("--detector", dest="detectors", action="append",
                        help="restrict detector selection (repeatable)")

    parser = argparse.ArgumentParser(prog="adoptions", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", parents=[common, model, option], help="simulate price paths")
    p.add_argument("--paths", type=int)
    p.add_argument("--series-steps", dest="series_steps", type=int,
                   help="write one real-world series of this many steps as timestamp,price CSV")

    p = sub.add_parser("price", parents=[common, model, option], help="price an option")
    p.add_argument("--method", choices=PRICE_METHODS)
    p.add_argument("--z", type=int, help="Monte Carlo paths")

    sub.add_parser("calibrate", parents=[common, detect], help="detect jumps and fit the MLE")

    p = sub.add_parser("facts", parents=[common, detect], help="stylized-fact battery")
    p.add_argument("--significance", type=float)

    p = sub.add_parser("backtest", parents=[common, option, detect], help="seller revenue backtest")
    p.add_argument("--r", type=float)
    p.add_argument("--n-train", dest="n_train", type=int)
    p.add_argument("--z", dest="backtest_z", type=int, help="Monte Carlo paths per price")
    p.add_argument("--backtest-method", dest="backtest_methods", action="append",
                   choices=[m.value for m in PricingMethod])
    return parser


def run(argv=None, stdout=None) -> int:
    stdout = stdout or sys.stdout
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        cfg = resolve_config(args)
        out_dir = Path(args.out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        body, table = COMMANDS[args.command](cfg, out_dir)
        report = {"command": args.command, "version": __version__, "config": cfg.to_record(),
                  **body}
        text = dumps_report(report)
        (out_dir / f"{args.command}.json").write_text(text)
        if args.format == "csv" and table is not None:
            stdout.write(table.read_text())
        else:
            stdout.write(text)
        return 0
    except AdoptionsError as exc:
        err = {"error": type(exc).__name__, "message": str(exc), "exit_code": exc.exit_code}
        sys.stderr.write(json.dumps(err, sort_keys=True) + "\n")
        return exc.exit_code


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
