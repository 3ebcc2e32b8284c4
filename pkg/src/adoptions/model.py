"""Domain types and the closed-form scalar quantities shared across the package.

Time is annualized throughout: one year is 1, a day is 1/365 and an hour is
1/(365*24).
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Union

import numpy as np

from adoptions.errors import ConfigError, DataError, InvalidDistributionError

DAY = 1.0 / 365.0
HOUR = DAY / 24.0

_P_SUM_TOL = 1e-12
_SPACING_RTOL = 1e-9
# absorbs float noise in S/dt when S is a whole number of steps
_CEIL_SLACK = 1e-9


@dataclass(frozen=True)
class LogNormal:
    """Log jump size V ~ N(alpha, beta^2)."""

    alpha: float
    beta: float

    def __post_init__(self):
        if not (math.isfinite(self.alpha) and math.isfinite(self.beta)):
            raise InvalidDistributionError("LogNormal parameters must be finite")
        if self.beta < 0:
            raise InvalidDistributionError(f"LogNormal beta must be >= 0, got {self.beta}")

    @property
    def kind(self) -> str:
        return "lognormal"


@dataclass(frozen=True)
class LogADE:
    """Log jump size V follows Kou's asymmetric double exponential law.

    Upward jumps are Exp(eta1) with probability p1, downward jumps are
    -Exp(eta2) with probability p2.
    """

    eta1: float
    eta2: float
    p1: float
    p2: float

    def __post_init__(self):
        if not self.eta1 > 1:
            raise InvalidDistributionError(f"LogADE eta1 must be > 1, got {self.eta1}")
        if not self.eta2 > 0:
            raise InvalidDistributionError(f"LogADE eta2 must be > 0, got {self.eta2}")
        for name in ("p1", "p2"):
            p = getattr(self, name)
            if not 0 <= p <= 1:
                raise InvalidDistributionError(f"LogADE {name} must lie in [0, 1], got {p}")
        if abs(self.p1 + self.p2 - 1) > _P_SUM_TOL:
            raise InvalidDistributionError(
                f"LogADE p1 + p2 must equal 1, got {self.p1} + {self.p2}"
            )

    @property
    def kind(self) -> str:
        return "ade"


@dataclass(frozen=True)
class LogLaplacian:
    """Log jump size V ~ Laplace(location rho, scale eta), with 0 < eta < 1."""

    rho: float
    eta: float

    def __post_init__(self):
        if not math.isfinite(self.rho):
            raise InvalidDistributionError("LogLaplacian rho must be finite")
        if not 0 < self.eta < 1:
            raise InvalidDistributionError(
                f"LogLaplacian eta must lie in (0, 1) for a finite mean jump, got {self.eta}"
            )

    @property
    def kind(self) -> str:
        return "laplacian"


JumpSizeDistribution = Union[LogNormal, LogADE, LogLaplacian]


def zeta(dist: JumpSizeDistribution) -> float:
    """Mean relative jump size E[exp(V)] - 1."""
    if isinstance(dist, LogNormal):
        return math.expm1(dist.alpha + 0.5 * dist.beta**2)
    if isinstance(dist, LogADE):
        return dist.p1 * dist.eta1 / (dist.eta1 - 1) + dist.p2 * dist.eta2 / (dist.eta2 + 1) - 1
    if isinstance(dist, LogLaplacian):
        return math.exp(dist.rho) / (1 - dist.eta**2) - 1
    raise InvalidDistributionError(f"unknown jump distribution {dist!r}")


@dataclass(frozen=True)
class JumpDiffusionParams:
    """Parameters of dX/X = drift dt + sigma dW + d(sum of (Y_i - 1)).

    ``rate`` is the riskless rate r when ``risk_neutral`` is set, otherwise
    the real-world drift mu. Pricing functions only accept risk-neutral
    parameters.
    """

    rate: float
    sigma: float
    lam: float
    jump_dist: JumpSizeDistribution
    risk_neutral: bool = True

    def __post_init__(self):
        if not math.isfinite(self.rate):
            raise ConfigError("rate must be finite")
        if not (self.sigma >= 0 and math.isfinite(self.sigma)):
            raise ConfigError(f"sigma must be a finite value >= 0, got {self.sigma}")
        if not (self.lam >= 0 and math.isfinite(self.lam)):
            raise ConfigError(f"lambda must be a finite value >= 0, got {self.lam}")
        if not isinstance(self.jump_dist, (LogNormal, LogADE, LogLaplacian)):
            raise InvalidDistributionError(f"unknown jump distribution {self.jump_dist!r}")

    @property
    def r(self) -> float:
        if not self.risk_neutral:
            raise ConfigError("real-world parameters carry a drift mu, not a riskless rate")
        return self.rate

    @property
    def zeta(self) -> float:
        return zeta(self.jump_dist)

    def log_drift(self) -> float:
        """Per-year drift of ln X between jumps."""
        if self.risk_neutral:
            return risk_neutral_drift(self.rate, self.sigma, self.lam, self.jump_dist)
        return self.rate - 0.5 * self.sigma**2

    def require_risk_neutral(self) -> None:
        if not self.risk_neutral:
            raise ConfigError("pricing requires risk-neutral parameters (risk_neutral=True)")


def risk_neutral_drift(r: float, sigma: float, lam: float, dist: JumpSizeDistribution) -> float:
    """Log-space drift r - lambda*zeta - sigma^2/2 that makes exp(-rt) X(t) a martingale."""
    if sigma < 0 or lam < 0:
        raise ConfigError("sigma and lambda must be nonnegative")
    return r - lam * zeta(dist) - 0.5 * sigma**2


def parse_gamma(value) -> float:
    """Accept a number or the sentinels "min"/"max" (also "-inf"/"inf")."""
    if isinstance(value, str):
        key = value.strip().lower()
        if key in ("min", "-inf", "-infinity"):
            return -math.inf
        if key in ("max", "inf", "+inf", "infinity"):
            return math.inf
        try:
            value = float(key)
        except ValueError:
            raise ConfigError(f"gamma must be a number, 'min' or 'max', got {value!r}") from None
    gamma = float(value)
    if math.isnan(gamma):
        raise ConfigError("gamma must not be NaN")
    return gamma


def format_gamma(gamma: float):
    if gamma == math.inf:
        return "max"
    if gamma == -math.inf:
        return "min"
    return gamma


@dataclass(frozen=True)
class OptionSpec:
    """Contract terms of an average-price advertising option.

    theta is the raw inventory count and K the price per inventory unit; CPM
    quotes need dividing by 1000 by the caller.
    """

    theta: float
    K: float
    S: float
    T: float
    m: int
    gamma: float = 0.0
    c: float = 1.0
    c_tilde: float = 1.0

    def __post_init__(self):
        object.__setattr__(self, "gamma", parse_gamma(self.gamma))
        if not self.theta >= 1:
            raise ConfigError(f"theta must be >= 1, got {self.theta}")
        if not (self.K > 0 and math.isfinite(self.K)):
            raise ConfigError(f"K must be a finite value > 0, got {self.K}")
        for name in ("c", "c_tilde"):
            v = getattr(self, name)
            if not 0 < v <= 1:
                raise ConfigError(f"{name} must lie in (0, 1], got {v}")
        if int(self.m) != self.m or self.m < 1:
            raise ConfigError(f"m must be a positive integer, got {self.m}")
        object.__setattr__(self, "m", int(self.m))
        if not (0 <= self.S <= self.T) or not math.isfinite(self.T):
            raise ConfigError(f"need 0 <= S <= T, got S={self.S}, T={self.T}")
        if self.T <= 0:
            raise ConfigError("T must be > 0")

    @property
    def ctr_ratio(self) -> float:
        return self.c_tilde / self.c

    def with_(self, **changes) -> "OptionSpec":
        fields = {
            "theta": self.theta, "K": self.K, "S": self.S, "T": self.T, "m": self.m,
            "gamma": self.gamma, "c": self.c, "c_tilde": self.c_tilde,
        }
        fields.update(changes)
        return OptionSpec(**fields)


@dataclass(frozen=True)
class TimeGrid:
    """Uniform simulation grid over [0, T].

    Steps have length ``dt = (T - S)/m``; the first ``m_tilde`` steps cover
    the warm-up [0, S] and the last ``m`` steps form the averaging window.
    When S is not a whole number of steps the warm-up overshoots S by less
    than one step.
    """

    dt: float
    m_tilde: int
    m: int
    S: float
    T: float

    @property
    def n_steps(self) -> int:
        return self.m_tilde + self.m

    @property
    def times(self) -> np.ndarray:
        n = self.n_steps
        return np.arange(1, n + 1) * (self.T / n)

    @property
    def window(self) -> slice:
        return slice(self.m_tilde, self.m_tilde + self.m)


def build_time_grid(spec: OptionSpec) -> TimeGrid:
    S, T, m = spec.S, spec.T, spec.m
    if T == S:
        if m != 1:
            raise ConfigError("degenerate averaging window: S == T requires m == 1")
        # European case: one step straight to T
        return TimeGrid(dt=T, m_tilde=0, m=1, S=S, T=T)
    dt = (T - S) / m
    m_tilde = max(0, math.ceil(S / dt - _CEIL_SLACK))
    return TimeGrid(dt=dt, m_tilde=m_tilde, m=m, S=S, T=T)


@dataclass(frozen=True)
class PriceSeries:
    """Uniformly spaced positive spot prices; timestamps are in years."""

    timestamps: np.ndarray
    prices: np.ndarray
    dt: float

    def __post_init__(self):
        ts = np.asarray(self.timestamps, dtype=float)
        px = np.asarray(self.prices, dtype=float)
        if ts.ndim != 1 or px.shape != ts.shape:
            raise DataError("timestamps and prices must be 1-D arrays of equal length")
        if len(px) < 2:
            raise DataError("a price series needs at least 2 observations")
        if not np.all(np.isfinite(px)) or np.any(px <= 0):
            bad = int(np.flatnonzero(~(px > 0))[0]) if np.any(~(px > 0)) else 0
            raise DataError(f"prices must be positive; offending index {bad}")
        gaps = np.diff(ts)
        if np.any(gaps <= 0):
            raise DataError("timestamps must be strictly increasing")
        if not np.allclose(gaps, self.dt, rtol=_SPACING_RTOL, atol=0):
            raise DataError("timestamps are not uniformly spaced at dt")
        ts.flags.writeable = False
        px.flags.writeable = False
        object.__setattr__(self, "timestamps", ts)
        object.__setattr__(self, "prices", px)

    @classmethod
    def from_prices(cls, prices, dt: float, start: float = 0.0) -> "PriceSeries":
        prices = np.asarray(prices, dtype=float)
        return cls(start + dt * np.arange(len(prices)), prices, dt)

    def __len__(self) -> int:
        return len(self.prices)

    def split(self, n_train: int) -> tuple["PriceSeries", np.ndarray]:
        """Training series of the first ``n_train`` prices and the remaining test prices."""
        if not 2 <= n_train < len(self):
            raise DataError(f"cannot split {len(self)} prices with n_train={n_train}")
        train = PriceSeries(self.timestamps[:n_train], self.prices[:n_train], self.dt)
        return train, np.array(self.prices[n_train:])
