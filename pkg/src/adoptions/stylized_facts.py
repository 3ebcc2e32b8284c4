"""Stylized-fact battery for log returns: heavy tails, normality, autocorrelation,
volatility clustering."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import stats

from adoptions.errors import DataError, InsufficientDataError

LB_LAGS = (5, 10, 15)
TRANSFORMS = ("raw", "abs", "square")
MIN_REPORT_OBS = 30


@dataclass(frozen=True)
class TestResult:
    statistic: float
    p_value: float
    reject: bool

    def to_record(self) -> dict:
        return {"statistic": self.statistic, "p_value": self.p_value, "reject": self.reject}


def _clean(x, min_n: int, what: str) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    if x.ndim != 1:
        raise DataError(f"{what} expects a 1-D series")
    if not np.all(np.isfinite(x)):
        raise DataError(f"{what}: series contains non-finite values")
    if x.size < min_n:
        raise InsufficientDataError(f"{what} needs at least {min_n} observations, got {x.size}")
    return x


def sample_kurtosis(returns) -> float:
    """Non-excess kurtosis m4 / m2^2 (3 for a Gaussian)."""
    x = _clean(returns, 4, "kurtosis")
    d = x - x.mean()
    m2 = float(np.mean(d * d))
    if m2 == 0:
        raise InsufficientDataError("kurtosis undefined for a constant series")
    return float(np.mean(d**4)) / (m2 * m2)


def ks_normality_test(returns, alpha: float = 0.05, pvalue: str = "lilliefors") -> TestResult:
    """One-sample KS distance to Normal(sample mean, sample variance).

    ``pvalue="lilliefors"`` accounts for the estimated mean and variance and
    gives a correctly sized test; ``"asymptotic"`` uses the plain Kolmogorov
    distribution, which is conservative when parameters are estimated.
    """
    x = _clean(returns, 8, "KS test")
    sd = float(x.std(ddof=1))
    if sd == 0:
        raise InsufficientDataError("KS test undefined for a constant series")
    if pvalue == "asymptotic":
        res = stats.kstest(x, "norm", args=(float(x.mean()), sd), method="asymp")
        stat, p = float(res.statistic), float(res.pvalue)
    elif pvalue == "lilliefors":
        from statsmodels.stats.diagnostic import lilliefors

        stat, p = lilliefors(x, dist="norm", pvalmethod="table")
        stat, p = float(stat), float(p)
    else:
        raise ValueError(f"pvalue must be 'lilliefors' or 'asymptotic', got {pvalue!r}")
    return TestResult(stat, min(max(p, 0.0), 1.0), p < alpha)


def sw_normality_test(returns, alpha: float = 0.05) -> TestResult:
    x = np.asarray(returns, dtype=float)
    if not 12 <= x.size <= 5000:
        if x.size < 12:
            raise InsufficientDataError(f"Shapiro-Wilk needs 12 <= n <= 5000, got n={x.size}")
        raise DataError(f"Shapiro-Wilk needs 12 <= n <= 5000, got n={x.size}")
    x = _clean(x, 12, "Shapiro-Wilk")
    res = stats.shapiro(x)
    return TestResult(float(res.statistic), float(res.pvalue), float(res.pvalue) < alpha)


def acf(series, nlags: int) -> np.ndarray:
    """Sample autocorrelations rho_1..rho_nlags (biased estimator)."""
    x = np.asarray(series, dtype=float)
    d = x - x.mean()
    denom = float(np.dot(d, d))
    if denom == 0:
        raise InsufficientDataError("autocorrelation undefined for a constant series")
    return np.array([np.dot(d[k:], d[:-k]) / denom for k in range(1, nlags + 1)])


def ljung_box_test(series, lags: int, alpha: float = 0.05) -> TestResult:
    """Q = n(n+2) sum_{k<=lags} rho_k^2 / (n-k), chi-square(lags) upper tail."""
    x = _clean(series, 1, "Ljung-Box")
    n = x.size
    if lags < 1 or n <= lags + 1:
        raise InsufficientDataError(f"Ljung-Box with {lags} lags needs n > {lags + 1}, got {n}")
    rho = acf(x, lags)
    q = n * (n + 2) * float(np.sum(rho**2 / (n - np.arange(1, lags + 1))))
    p = float(stats.chi2.sf(q, lags))
    return TestResult(q, p, p < alpha)


@dataclass(frozen=True)
class StylizedFactsReport:
    n_obs: int
    kurtosis: float
    heavy_tails: bool
    kurtosis_p_value: float
    ks: TestResult
    sw: TestResult
    ljung_box: dict = field(default_factory=dict)
    alpha: float = 0.05

    @property
    def autocorrelation(self) -> bool:
        return any(self.ljung_box[(lag, "raw")].reject for lag in LB_LAGS)

    @property
    def volatility_clustering(self) -> bool:
        return any(self.ljung_box[(lag, t)].reject for lag in LB_LAGS for t in ("abs", "square"))

    def to_record(self) -> dict:
        return {
            "n_obs": self.n_obs,
            "alpha": self.alpha,
            "kurtosis": self.kurtosis,
            "kurtosis_p_value": self.kurtosis_p_value,
            "heavy_tails": self.heavy_tails,
            "ks": self.ks.to_record(),
            "sw": self.sw.to_record(),
            "ljung_box": {f"{t}_lag{lag}": res.to_record()
                          for (lag, t), res in sorted(self.ljung_box.items())},
            "autocorrelation": self.autocorrelation,
            "volatility_clustering": self.volatility_clustering,
        }

    def to_row(self) -> dict:
        """Flat row for aggregating many slots into one table."""
        row = {
            "n_obs": self.n_obs,
            "kurtosis": self.kurtosis,
            "heavy_tails": self.heavy_tails,
            "ks_reject": self.ks.reject,
            "sw_reject": self.sw.reject,
        }
        for t in TRANSFORMS:
            for lag in LB_LAGS:
                row[f"lb_{t}_{lag}_reject"] = self.ljung_box[(lag, t)].reject
        row["autocorrelation"] = self.autocorrelation
        row["volatility_clustering"] = self.volatility_clustering
        return row


def build_report(returns, alpha: float = 0.05) -> StylizedFactsReport:
    """Run the whole battery.

    The heavy-tail flag needs kurtosis above 3 *and* a one-sided
    Anscombe-Glynn kurtosis test rejecting at ``alpha``; sampling noise alone
    puts a Gaussian sample above 3 roughly half the time.
    """
    x = _clean(returns, MIN_REPORT_OBS, "stylized-facts report")
    kurt = sample_kurtosis(x)
    kurt_p = float(stats.kurtosistest(x, alternative="greater").pvalue)
    transformed = {"raw": x, "abs": np.abs(x), "square": x * x}
    lb = {}
    for t in TRANSFORMS:
        for lag in LB_LAGS:
            lb[(lag, t)] = ljung_box_test(transformed[t], lag, alpha)
    sw = (sw_normality_test(x, alpha) if x.size <= 5000
          else TestResult(math.nan, math.nan, False))
    return StylizedFactsReport(
        n_obs=int(x.size),
        kurtosis=kurt,
        heavy_tails=bool(kurt > 3.0 and kurt_p < alpha),
        kurtosis_p_value=kurt_p,
        ks=ks_normality_test(x, alpha),
        sw=sw,
        ljung_box=lb,
        alpha=alpha,
    )
