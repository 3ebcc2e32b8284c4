"""Seller-revenue backtest: options priced on training data, exercised on test data."""

from __future__ import annotations

import csv
import math
import zlib
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Mapping, Optional, Sequence

import numpy as np
from scipy.special import ndtr

from adoptions.calibration import DetectorConfig, calibrate
from adoptions.errors import ConfigError, ConvergenceError, DataError, NumericalError
from adoptions.model import (
    JumpDiffusionParams,
    LogADE,
    LogLaplacian,
    LogNormal,
    OptionSpec,
    PriceSeries,
    format_gamma,
)
from adoptions.payoff import payoff_intrinsic
from adoptions.pricing import closed_form_price, mc_price
from adoptions.simulation import RngSpec


class MarketRegime(str, Enum):
    BULL = "Bull"
    BEAR = "Bear"


class Moneyness(str, Enum):
    ITM = "ITM"
    ATM = "ATM"
    OTM = "OTM"

    @property
    def strike_factor(self) -> float:
        return {"ITM": 0.75, "ATM": 1.0, "OTM": 1.25}[self.value]


class PricingMethod(str, Enum):
    CLOSED_FORM_LOGNORMAL = "closed_form_lognormal"
    MC_LOGNORMAL = "mc_lognormal"
    MC_ADE = "mc_ade"
    MC_LAPLACIAN = "mc_laplacian"


def classify_regime(x0: float, future_prices) -> MarketRegime:
    """Bull when x0 is at most the mean of the future prices (ties count as Bull)."""
    future = np.asarray(future_prices, dtype=float)
    if future.size == 0:
        raise DataError("need at least one future price to classify the regime")
    return MarketRegime.BULL if x0 <= future.mean() else MarketRegime.BEAR


def decide_exercise(test_window, spec: OptionSpec) -> bool:
    """A perfect-foresight buyer exercises iff the realized payoff is strictly positive."""
    return payoff_intrinsic(test_window, spec) > 0


@dataclass(frozen=True)
class BacktestOutcome:
    exercised: bool
    revenue_option: float
    revenue_auction: float
    revenue_change: float
    pi0_used: float
    regime: Optional[MarketRegime] = None
    moneyness: Optional[Moneyness] = None


def revenue_change(pi0: float, spec: OptionSpec, test_window, regime=None,
                   moneyness=None) -> BacktestOutcome:
    """Per-inventory revenue from selling the option versus auctioning the inventory.

    Auction revenue is the arithmetic mean of the window whatever the payoff's
    gamma. Option revenue is the premium per inventory plus K when exercised,
    or plus the auction revenue when not.
    """
    if not pi0 >= 0:
        raise ConfigError(f"option price must be >= 0, got {pi0}")
    window = np.asarray(test_window, dtype=float)
    exercised = decide_exercise(window, spec)
    auction = float(window.mean())
    if auction == 0:
        raise NumericalError("auction revenue is zero; revenue change undefined")
    premium = pi0 / spec.theta
    option = premium + (spec.K if exercised else auction)
    return BacktestOutcome(exercised, option, auction, (option - auction) / auction, pi0,
                           regime, moneyness)


def moment_matched_laplacian(alpha: float, beta: float) -> LogLaplacian:
    """Laplacian log-jump law with the same mean and variance as N(alpha, beta^2)."""
    eta = min(max(beta / math.sqrt(2.0), 1e-6), 0.99)
    return LogLaplacian(alpha, eta)


def moment_matched_ade(alpha: float, beta: float) -> LogADE:
    """Double-exponential law matching the sign probability and conditional means of N(alpha, beta^2)."""
    if beta <= 0:
        p1 = 1.0 if alpha >= 0 else 0.0
        up = abs(alpha) if alpha > 0 else 0.5
        down = abs(alpha) if alpha < 0 else 0.5
    else:
        a = alpha / beta
        p1 = float(ndtr(a))
        dens = math.exp(-0.5 * a * a) / math.sqrt(2 * math.pi)
        up = alpha + beta * dens / p1 if p1 > 1e-12 else beta
        down = -alpha + beta * dens / (1 - p1) if p1 < 1 - 1e-12 else beta
    eta1 = max(1.0 / max(up, 1e-12), 1.0 + 1e-6)
    eta2 = 1.0 / max(down, 1e-12)
    return LogADE(eta1, eta2, p1, 1.0 - p1)


@dataclass(frozen=True)
class BacktestConfig:
    """Settings for a multi-slot backtest.

    Each series is split into ``n_train`` training prices followed by
    ``m_tilde + m`` test prices; the payoff averages the last ``m``.
    """

    n_train: int = 60
    m_tilde: int = 30
    m: int = 30
    r: float = 0.1
    c: float = 1.0
    c_tilde: float = 1.0
    theta: float = 1.0
    gamma: float = 0.0
    z: int = 10_000
    seed: int = 0
    k_max: int = 200
    methods: Sequence[PricingMethod] = tuple(PricingMethod)
    moneyness: Sequence[Moneyness] = tuple(Moneyness)
    ade: Optional[LogADE] = None
    laplacian: Optional[LogLaplacian] = None
    detectors: Optional[Sequence[str]] = None
    detector_config: DetectorConfig = field(default_factory=DetectorConfig)

    def __post_init__(self):
        object.__setattr__(self, "methods", tuple(PricingMethod(m) for m in self.methods))
        object.__setattr__(self, "moneyness", tuple(Moneyness(m) for m in self.moneyness))
        if self.n_train < 2 or self.m < 1 or self.m_tilde < 0:
            raise ConfigError("need n_train >= 2, m >= 1 and m_tilde >= 0")


@dataclass(frozen=True)
class BacktestRow:
    slot: str
    regime: MarketRegime
    moneyness: Moneyness
    method: PricingMethod
    exercised: bool
    pi0: float
    revenue_change: float

    def to_record(self) -> dict:
        return {"slot": self.slot, "regime": self.regime.value, "moneyness": self.moneyness.value,
                "method": self.method.value, "exercised": self.exercised, "pi0": self.pi0,
                "revenue_change": self.revenue_change}


CSV_COLUMNS = ("slot", "regime", "moneyness", "method", "exercised", "pi0", "revenue_change")


@dataclass(frozen=True)
class BacktestTable:
    rows: list
    slots: dict = field(default_factory=dict)

    def aggregate(self) -> list[dict]:
        """Share of slots with a revenue increase and mean change, per method x regime x moneyness."""
        groups: dict = {}
        for row in self.rows:
            groups.setdefault((row.method, row.regime, row.moneyness), []).append(row.revenue_change)
        out = []
        for method in PricingMethod:
            for regime in MarketRegime:
                for mny in Moneyness:
                    changes = groups.get((method, regime, mny))
                    if not changes:
                        continue
                    arr = np.array(sorted(changes))
                    out.append({
                        "method": method.value, "regime": regime.value, "moneyness": mny.value,
                        "n_slots": int(arr.size),
                        "share_positive": float(np.mean(arr > 0)),
                        "mean_change": float(arr.mean()),
                    })
        return out

    def write_csv(self, path) -> None:
        with Path(path).open("w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(CSV_COLUMNS)
            for row in self.rows:
                rec = row.to_record()
                writer.writerow([repr(v) if isinstance(v, float) else v
                                 for v in (rec[c] for c in CSV_COLUMNS)])


def _slot_seed(seed: int, name: str) -> int:
    return (int(seed) * 0x100000001B3 ^ zlib.crc32(name.encode())) & ((1 << 63) - 1)


def _price(method, x0, lognormal_params, spec, cfg, rng, ade, lap):
    if method is PricingMethod.CLOSED_FORM_LOGNORMAL:
        if spec.gamma != 0:
            raise ConfigError("closed-form pricing needs gamma = 0")
        return closed_form_price(x0, lognormal_params, spec, k_max=cfg.k_max).pi0
    if method is PricingMethod.MC_LOGNORMAL:
        params = lognormal_params
    else:
        dist = ade if method is PricingMethod.MC_ADE else lap
        params = JumpDiffusionParams(lognormal_params.rate, lognormal_params.sigma,
                                     lognormal_params.lam, dist)
    return mc_price(x0, params, spec, cfg.z, rng).pi0


def backtest_slot(name: str, series: PriceSeries, cfg: BacktestConfig) -> tuple[list, dict]:
    train, test = series.split(cfg.n_train)
    horizon = cfg.m_tilde + cfg.m
    if test.size < horizon:
        raise DataError(f"slot {name!r}: need {horizon} test prices, have {test.size}")
    future = test[:horizon]
    window = future[cfg.m_tilde:]
    x0 = float(train.prices[-1])
    regime = classify_regime(x0, future)

    try:
        report = calibrate(train, cfg.detectors, cfg.detector_config)
        mle = report.mle
        calib = report.to_record()
    except ConvergenceError as exc:
        if exc.best is None:
            raise
        mle, calib = exc.best, {"warning": str(exc), "mle": exc.best.to_record()}
    ln_params = mle.to_params(cfg.r)
    ade = cfg.ade or moment_matched_ade(mle.alpha_hat, mle.beta_hat)
    lap = cfg.laplacian or moment_matched_laplacian(mle.alpha_hat, mle.beta_hat)

    dt = series.dt
    S, T = cfg.m_tilde * dt, horizon * dt
    rng = RngSpec(_slot_seed(cfg.seed, name))
    rows = []
    for mny in cfg.moneyness:
        spec = OptionSpec(theta=cfg.theta, K=mny.strike_factor * x0, S=S, T=T, m=cfg.m,
                          gamma=cfg.gamma, c=cfg.c, c_tilde=cfg.c_tilde)
        for method in cfg.methods:
            pi0 = _price(method, x0, ln_params, spec, cfg, rng, ade, lap)
            out = revenue_change(pi0, spec, window, regime, mny)
            rows.append(BacktestRow(name, regime, mny, method, out.exercised, pi0,
                                    out.revenue_change))
    info = {"x0": x0, "regime": regime.value, "calibration": calib,
            "ade": vars(ade), "laplacian": vars(lap), "gamma": format_gamma(cfg.gamma)}
    return rows, info


def run_backtest_suite(series_set: Mapping[str, PriceSeries], config: BacktestConfig
                       ) -> BacktestTable:
    """Backtest every slot; slots are processed in sorted-name order."""
    rows = []
    slots = {}
    for name in sorted(series_set):
        slot_rows, info = backtest_slot(name, series_set[name], config)
        rows.extend(slot_rows)
        slots[name] = info
    return BacktestTable(rows, slots)
