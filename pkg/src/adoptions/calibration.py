"""Fitting jump-diffusion parameters to historical spot prices.

Pipeline: log returns -> jump detection with several detectors -> pick the
detector whose jump-free residual kurtosis is closest to the Gaussian value
3 -> jump intensity from the flag count -> two-component normal-mixture MLE
for the diffusion and log-jump parameters.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, asdict
from enum import Enum
from typing import Iterable, Optional

import numpy as np
from scipy import optimize

from adoptions.errors import (
    ConfigError,
    ConvergenceError,
    DegenerateVarianceError,
    InsufficientDataError,
)
from adoptions.model import DAY, JumpDiffusionParams, LogNormal, PriceSeries
from adoptions.stylized_facts import sample_kurtosis

MAD_SCALE = 1.4826
MIN_SELECT_OBS = 30
MIN_MLE_OBS = 30
LAMBDA_DT_CAP = 0.5


class Detector(str, Enum):
    GC = "GC"
    PJI = "PJI"
    COBW = "COBW"
    BV_LM = "BV_LM"
    HAMPEL = "Hampel"

    @classmethod
    def parse(cls, value) -> "Detector":
        if isinstance(value, Detector):
            return value
        key = str(value).strip().upper().replace("-", "_")
        for d in cls:
            if key in (d.name, d.value.upper()):
                return d
        raise ConfigError(f"unknown detector {value!r}; choose from {[d.value for d in cls]}")


@dataclass(frozen=True)
class LogReturnSeries:
    returns: np.ndarray
    dt: float

    def __len__(self) -> int:
        return len(self.returns)


def log_returns(series: PriceSeries) -> LogReturnSeries:
    """R(t, dt) = ln X(t + dt) - ln X(t)."""
    r = np.diff(np.log(series.prices))
    r.flags.writeable = False
    return LogReturnSeries(r, series.dt)


@dataclass(frozen=True)
class DetectorConfig:
    """Tunable detector settings.

    COBW flags a return outside the fences
    [Q_q - k*(Q_{1-q} - Q_q), Q_{1-q} + k*(Q_{1-q} - Q_q)] built from the
    centiles of its block; q = 0.25, k = 3 is Tukey's far-out fence.
    ``cobw_block=None`` picks 24 for intraday data and 20 otherwise.
    """

    gc_q: float = 0.005
    cobw_block: Optional[int] = None
    cobw_q: float = 0.25
    cobw_k: float = 3.0
    cobw_min_block: int = 5
    hampel_window: int = 11
    hampel_k: float = 3.0
    pji_window: int = 20
    pji_k: float = 4.0
    pji_min_periods: int = 5
    bvlm_window: int = 16
    bvlm_alpha: float = 0.01

    def block_size(self, dt: float) -> int:
        if self.cobw_block is not None:
            return int(self.cobw_block)
        return 24 if dt < DAY * (1 - 1e-9) else 20


@dataclass(frozen=True)
class JumpDetectionResult:
    detector: Detector
    jump_indices: np.ndarray
    jump_returns: np.ndarray
    params_used: dict = field(default_factory=dict)

    @property
    def n_flagged(self) -> int:
        return int(self.jump_indices.size)


def _require(n: int, needed: int, what: str) -> None:
    if n < needed:
        raise InsufficientDataError(f"{what} needs at least {needed} returns, got {n}")


def _gc(r, cfg):
    _require(r.size, 10, "GC")
    lo, hi = np.quantile(r, [cfg.gc_q, 1 - cfg.gc_q])
    return (r < lo) | (r > hi), {"q": cfg.gc_q}


def _cobw(r, cfg, dt):
    w = cfg.block_size(dt)
    _require(r.size, 2 * w, "COBW")
    starts = list(range(0, r.size, w))
    if r.size - starts[-1] < cfg.cobw_min_block and len(starts) > 1:
        starts.pop()
    bounds = starts[1:] + [r.size]
    flags = np.zeros(r.size, dtype=bool)
    for a, b in zip(starts, bounds):
        block = r[a:b]
        lo, hi = np.quantile(block, [cfg.cobw_q, 1 - cfg.cobw_q])
        spread = hi - lo
        flags[a:b] = (block < lo - cfg.cobw_k * spread) | (block > hi + cfg.cobw_k * spread)
    return flags, {"block": w, "q": cfg.cobw_q, "k": cfg.cobw_k}


def _hampel(r, cfg):
    w = cfg.hampel_window
    _require(r.size, 2 * w, "Hampel")
    half = w // 2
    flags = np.zeros(r.size, dtype=bool)
    for i in range(r.size):
        win = r[max(0, i - half):i + half + 1]
        med = np.median(win)
        mad = np.median(np.abs(win - med))
        flags[i] = abs(r[i] - med) > cfg.hampel_k * MAD_SCALE * mad
    return flags, {"window": w, "k": cfg.hampel_k}


def _pji(r, cfg):
    w = cfg.pji_window
    _require(r.size, 2 * w, "PJI")
    a = np.abs(r)
    flags = np.zeros(r.size, dtype=bool)
    for i in range(cfg.pji_min_periods, r.size):
        ref = a[max(0, i - w):i].mean()
        flags[i] = a[i] > cfg.pji_k * ref
    return flags, {"window": w, "k": cfg.pji_k}


def _bv_lm(r, cfg, dt):
    if not dt < DAY * (1 - 1e-9):
        raise ConfigError("BV-LM needs intraday data (dt < 1/365)")
    K = cfg.bvlm_window
    _require(r.size, 2 * K, "BV-LM")
    n = r.size
    c = math.sqrt(2 / math.pi)
    ln_n = math.log(n)
    c_n = math.sqrt(2 * ln_n) / c - (math.log(math.pi) + math.log(ln_n)) / (2 * c * math.sqrt(2 * ln_n))
    s_n = 1 / (c * math.sqrt(2 * ln_n))
    threshold = -math.log(-math.log(1 - cfg.bvlm_alpha))
    a = np.abs(r)
    flags = np.zeros(n, dtype=bool)
    for i in range(K - 1, n):
        # bipower variation over the K-1 returns preceding r_i
        seg = a[i - K + 1:i]
        bv = float(np.sum(seg[1:] * seg[:-1])) / (K - 2)
        if bv > 0:
            stat = (a[i] / math.sqrt(bv) - c_n) / s_n
        else:
            stat = math.inf if a[i] > 0 else -math.inf
        flags[i] = stat > threshold
    return flags, {"window": K, "alpha": cfg.bvlm_alpha}


def detect_jumps(returns: LogReturnSeries, detector, config: Optional[DetectorConfig] = None
                 ) -> JumpDetectionResult:
    detector = Detector.parse(detector)
    cfg = config or DetectorConfig()
    r = np.asarray(returns.returns, dtype=float)
    if detector is Detector.GC:
        flags, used = _gc(r, cfg)
    elif detector is Detector.COBW:
        flags, used = _cobw(r, cfg, returns.dt)
    elif detector is Detector.HAMPEL:
        flags, used = _hampel(r, cfg)
    elif detector is Detector.PJI:
        flags, used = _pji(r, cfg)
    else:
        flags, used = _bv_lm(r, cfg, returns.dt)
    idx = np.flatnonzero(flags)
    return JumpDetectionResult(detector, idx, r[idx], used)


def applicable_detectors(dt: float) -> list[Detector]:
    out = [Detector.GC, Detector.PJI, Detector.COBW, Detector.HAMPEL]
    if dt < DAY * (1 - 1e-9):
        out.insert(3, Detector.BV_LM)
    return out


@dataclass(frozen=True)
class DetectorDiagnostics:
    detector: Detector
    n_flagged: int
    kurtosis_after: float
    error: Optional[str] = None

    @property
    def in_range(self) -> bool:
        return 2.0 <= self.kurtosis_after <= 4.0


def select_detector(returns: LogReturnSeries, detectors: Optional[Iterable] = None,
                    config: Optional[DetectorConfig] = None):
    """Pick the detector whose jump-free returns have kurtosis closest to 3.

    Ties go to the detector flagging fewer returns, then to list order.
    Detectors lacking data for their window are skipped and reported.
    Returns ``(JumpDetectionResult, list[DetectorDiagnostics], raw_kurtosis)``.
    """
    r = np.asarray(returns.returns, dtype=float)
    _require(r.size, MIN_SELECT_OBS, "detector selection")
    chosen = ([Detector.parse(d) for d in detectors] if detectors is not None
              else applicable_detectors(returns.dt))
    diagnostics = []
    results = {}
    for d in chosen:
        try:
            res = detect_jumps(returns, d, config)
        except (InsufficientDataError, ConfigError) as exc:
            diagnostics.append(DetectorDiagnostics(d, 0, math.nan, str(exc)))
            continue
        kept = np.delete(r, res.jump_indices)
        kurt = sample_kurtosis(kept) if kept.size >= 4 else math.nan
        diagnostics.append(DetectorDiagnostics(d, res.n_flagged, kurt))
        results[d] = res
    usable = [dg for dg in diagnostics if dg.error is None and math.isfinite(dg.kurtosis_after)]
    if not usable:
        raise InsufficientDataError("no detector could be applied to this series")
    best = min(usable, key=lambda dg: (abs(dg.kurtosis_after - 3.0), dg.n_flagged))
    return results[best.detector], diagnostics, sample_kurtosis(r)


def estimate_lambda(detection: JumpDetectionResult, n_obs: int, dt: float) -> float:
    """Flag rate per year, capped so that lambda*dt <= 0.5."""
    if n_obs < 1:
        raise ConfigError("n_obs must be >= 1")
    lam = detection.n_flagged / (n_obs * dt)
    return min(lam, LAMBDA_DT_CAP / dt)


@dataclass(frozen=True)
class MleEstimate:
    sigma_hat: float
    mu_hat: float
    alpha_hat: float
    beta_hat: float
    lambda_hat: float
    log_likelihood: float
    converged: bool
    n_obs: int
    dt: float

    def to_params(self, r: float) -> JumpDiffusionParams:
        """Risk-neutral parameters for pricing at riskless rate ``r``."""
        return JumpDiffusionParams(r, self.sigma_hat, self.lambda_hat,
                                   LogNormal(self.alpha_hat, self.beta_hat))

    def to_record(self) -> dict:
        return asdict(self)


def mixture_loglik(returns, dt: float, lam: float, mu: float, sigma: float, alpha: float,
                   beta: float) -> float:
    """ln prod_j ((1 - lam dt) f1(z_j) + lam dt f2(z_j)) for the one-jump mixture."""
    z = np.asarray(returns, dtype=float)
    mean1 = (mu - 0.5 * sigma**2) * dt
    return float(np.sum(_mixture_logpdf(z, lam * dt, mean1, sigma * math.sqrt(dt), alpha, beta)))


def _norm_logpdf(z, mean, var):
    return -0.5 * (math.log(2 * math.pi * var) + (z - mean) ** 2 / var)


def _mixture_logpdf(z, p, mean1, sd1, mu_v, sd_v):
    var1 = sd1 * sd1
    l1 = _norm_logpdf(z, mean1, var1)
    if p == 0:
        return l1
    l2 = _norm_logpdf(z, mean1 + mu_v, var1 + sd_v * sd_v)
    return np.logaddexp(math.log1p(-p) + l1, math.log(p) + l2)


def _starts(y, p):
    """Deterministic starting points in standardized units: (m1, log s1, mu_v, log s_v)."""
    big = np.abs(y) > 3.0
    tail_mean = float(y[big].mean()) if big.any() else 3.0
    tail_sd = float(y[big].std()) if big.sum() > 1 else 1.0
    core = y[~big] if (~big).sum() > 2 else y
    m0 = float(np.median(core))
    s0 = math.log(max(float(core.std()), 1e-3))
    k = max(1, int(round(p * y.size)))
    top = y[np.argsort(-np.abs(y))[:k]]
    return [
        (m0, s0, tail_mean, math.log(max(tail_sd, 0.5))),
        (m0, s0, 3.0, math.log(2.0)),
        (m0, s0, -3.0, math.log(2.0)),
        (m0, s0, 0.0, math.log(3.0)),
        (m0, s0, float(top.mean()), math.log(max(float(y.std()), 0.5))),
    ]


def fit_mle(returns: LogReturnSeries, lambda_fixed: float, tol: float = 1e-8) -> MleEstimate:
    """Maximize the one-jump normal-mixture likelihood with lambda held fixed.

    Optimizes over (mu, sigma, mu_V, sigma_V), with the volatilities on a
    log scale, from five deterministic starts; each start runs Nelder-Mead
    followed by a BFGS polish and the best likelihood wins (ties: lowest
    start). With ``lambda_fixed = 0`` only (mu, sigma) are fitted and the
    jump fields are reported as 0.
    """
    r = np.asarray(returns.returns, dtype=float)
    dt = returns.dt
    _require(r.size, MIN_MLE_OBS, "MLE")
    p = lambda_fixed * dt
    if lambda_fixed < 0 or p >= 1:
        raise ConfigError(f"need 0 <= lambda*dt < 1, got {p}")
    center = float(np.median(r))
    scale = float(np.std(r))
    if not scale > 1e-8:
        raise DegenerateVarianceError("returns have (numerically) zero variance")
    y = (r - center) / scale

    def negll(theta):
        if p == 0:
            m1, ls1 = theta
            return -float(np.sum(_norm_logpdf(y, m1, math.exp(2 * ls1))))
        m1, ls1, mu_v, ls_v = theta
        if max(ls1, ls_v) > 50 or min(ls1, ls_v) < -50:
            return math.inf
        return -float(np.sum(_mixture_logpdf(y, p, m1, math.exp(ls1), mu_v, math.exp(ls_v))))

    starts = _starts(y, p)
    if p == 0:
        starts = [s[:2] for s in starts[:1]] + [(0.0, 0.0)]
    best = None
    for i, x0 in enumerate(starts):
        nm = optimize.minimize(negll, np.array(x0, dtype=float), method="Nelder-Mead",
                               options={"xatol": 1e-10, "fatol": tol * 1e-2, "maxiter": 40_000,
                                        "maxfev": 80_000, "adaptive": True})
        polish = optimize.minimize(negll, nm.x, method="BFGS", options={"gtol": 1e-9})
        res = polish if polish.fun <= nm.fun else nm
        converged = bool(nm.success) or bool(polish.success)
        if best is None or res.fun < best[0].fun - tol:
            best = (res, converged, i)
    res, converged, _ = best
    if p == 0:
        m1, ls1 = res.x
        mu_v, sd_v = 0.0, 0.0
    else:
        m1, ls1, mu_v, ls_v = res.x
        sd_v = math.exp(ls_v) * scale
        mu_v = mu_v * scale
    sd1 = float(math.exp(ls1) * scale)
    mean1 = float(center + m1 * scale)
    sigma = sd1 / math.sqrt(dt)
    est = MleEstimate(
        sigma_hat=sigma,
        mu_hat=mean1 / dt + 0.5 * sigma**2,
        alpha_hat=float(mu_v),
        beta_hat=float(sd_v),
        lambda_hat=float(lambda_fixed),
        log_likelihood=float(-res.fun - r.size * math.log(scale)),
        converged=converged,
        n_obs=int(r.size),
        dt=dt,
    )
    if sd1 < 1e-8:
        raise DegenerateVarianceError(f"fitted per-step volatility {sd1:.3g} is below 1e-8")
    if not converged:
        raise ConvergenceError("mixture MLE did not converge from any start", best=est)
    return est


@dataclass(frozen=True)
class CalibrationReport:
    detection: JumpDetectionResult
    diagnostics: list
    raw_kurtosis: float
    lambda_hat: float
    mle: MleEstimate

    @property
    def selected(self) -> Detector:
        return self.detection.detector

    def to_record(self) -> dict:
        return {
            "selected_detector": self.selected.value,
            "raw_kurtosis": self.raw_kurtosis,
            "detectors": [
                {
                    "detector": dg.detector.value,
                    "n_flagged": dg.n_flagged,
                    "kurtosis_after": None if math.isnan(dg.kurtosis_after) else dg.kurtosis_after,
                    "kurtosis_in_2_4": dg.in_range,
                    "error": dg.error,
                }
                for dg in self.diagnostics
            ],
            "jump_indices": [int(i) for i in self.detection.jump_indices],
            "lambda_hat": self.lambda_hat,
            "mle": self.mle.to_record(),
        }


def calibrate(series: PriceSeries, detectors: Optional[Iterable] = None,
              config: Optional[DetectorConfig] = None) -> CalibrationReport:
    """Detector selection, intensity estimate and mixture MLE on raw returns."""
    rets = log_returns(series)
    detection, diagnostics, raw_kurt = select_detector(rets, detectors, config)
    lam = estimate_lambda(detection, len(rets), rets.dt)
    mle = fit_mle(rets, lam)
    return CalibrationReport(detection, diagnostics, raw_kurt, lam, mle)
