"""Option valuation: Monte Carlo pricer and the explicit geometric-average formula."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy.special import gammaln, ndtr

from adoptions import _kernels
from adoptions._accel import resolve_backend
from adoptions.errors import ConfigError, ConvergenceError
from adoptions.model import (
    JumpDiffusionParams,
    LogNormal,
    OptionSpec,
    build_time_grid,
    format_gamma,
)
from adoptions.simulation import RngSpec, jump_kernel_args, step_args

Z_95 = 1.96
DEFAULT_K_MAX = 200
POISSON_WEIGHT_TOL = 1e-12


@dataclass(frozen=True)
class ClosedFormTerms:
    """Per-k ingredients of the Poisson-mixture formula."""

    k: np.ndarray
    weights: np.ndarray
    A: np.ndarray
    B2: np.ndarray
    Omega: np.ndarray
    phi: float
    xi1: np.ndarray
    xi2: np.ndarray
    values: np.ndarray
    k_max: int
    lam_t: float
    alpha: float
    beta: float

    def remainder_bound(self, x0_leg: float) -> float:
        """Bound on the dropped tail sum_{k > k_last} w_k * x0_leg * Omega_k.

        Each term is at most x0_leg * Omega_k, and Omega_k grows by the constant
        factor exp(alpha + beta^2/2) per extra jump.
        """
        if self.lam_t == 0.0:
            return 0.0
        growth = math.exp(self.alpha + 0.5 * self.beta**2)
        k = int(self.k[-1])
        w = float(self.weights[-1])
        omega = float(self.Omega[-1])
        tail = 0.0
        for j in range(k + 1, k + 2000):
            w *= self.lam_t / j
            omega *= growth
            step = w * omega
            tail += step
            if step < 1e-300 or (j > self.lam_t * growth and step < tail * 1e-17):
                break
        return x0_leg * tail


@dataclass(frozen=True)
class PricingResult:
    method: str
    pi0: float
    std_error: float
    ci95_low: float
    ci95_high: float
    z: int
    inputs: dict = field(default_factory=dict)
    terms: Optional[ClosedFormTerms] = field(default=None, repr=False, compare=False)

    def contains(self, value: float) -> bool:
        return self.ci95_low <= value <= self.ci95_high

    def to_record(self) -> dict:
        return {
            "method": self.method,
            "pi0": self.pi0,
            "std_error": self.std_error,
            "ci95_low": self.ci95_low,
            "ci95_high": self.ci95_high,
            "z": self.z,
            "inputs": self.inputs,
        }


def _dist_record(dist) -> dict:
    rec = {"kind": dist.kind}
    rec.update({k: float(v) for k, v in vars(dist).items()})
    return rec


def _inputs_echo(x0, params: JumpDiffusionParams, spec: Optional[OptionSpec], **extra) -> dict:
    echo = {
        "x0": float(x0),
        "r": params.rate,
        "sigma": params.sigma,
        "lambda": params.lam,
        "jump_dist": _dist_record(params.jump_dist),
    }
    if spec is not None:
        echo.update(theta=spec.theta, K=spec.K, S=spec.S, T=spec.T, m=spec.m,
                    gamma=format_gamma(spec.gamma), c=spec.c, c_tilde=spec.c_tilde)
    echo.update(extra)
    return echo


def mc_price(x0: float, params: JumpDiffusionParams, spec: OptionSpec, z: int, rng: RngSpec,
             backend=None) -> PricingResult:
    """Discounted mean payoff over ``z`` simulated paths, with a 95% confidence band.

    Path j uses stream ``rng.stream_id + j``; the averaging window is steps
    m_tilde+1 .. m_tilde+m of the grid.
    """
    params.require_risk_neutral()
    if int(z) != z or z < 2:
        raise ConfigError(f"z must be an integer >= 2 to estimate a variance, got {z}")
    z = int(z)
    x0 = float(x0)
    if not x0 > 0:
        raise ConfigError("x0 must be positive")
    grid = build_time_grid(spec)
    drift_dt, vol_dt, jump_prob = step_args(params, grid.dt)
    kind, jp = jump_kernel_args(params.jump_dist)
    backend = resolve_backend(backend)
    args = (_kernels.as_u64(rng.seed), int(rng.stream_id), z, grid.n_steps, grid.m_tilde, grid.m,
            math.log(x0), drift_dt, vol_dt, jump_prob, kind, jp, float(spec.gamma),
            float(spec.theta), spec.ctr_ratio, float(spec.K))
    if backend == "numba":
        payoffs = _kernels.mc_payoffs_numba(*args)
        mean, m2 = _kernels.welford_numba(payoffs)
        sd = math.sqrt(m2 / (z - 1))
    else:
        payoffs = _kernels.mc_payoffs_numpy(*args)
        mean = float(payoffs.mean())
        sd = float(payoffs.std(ddof=1))
    disc = math.exp(-params.r * spec.T)
    pi0 = disc * mean
    se = disc * sd / math.sqrt(z)
    return PricingResult(
        method="monte_carlo",
        pi0=pi0,
        std_error=se,
        ci95_low=pi0 - Z_95 * se,
        ci95_high=pi0 + Z_95 * se,
        z=z,
        inputs=_inputs_echo(x0, params, spec, seed=int(rng.seed), first_stream=int(rng.stream_id),
                            dt=grid.dt, m_tilde=grid.m_tilde),
    )


def _lognormal_only(params: JumpDiffusionParams) -> LogNormal:
    if not isinstance(params.jump_dist, LogNormal):
        raise ConfigError(
            f"the explicit formula needs log-normal jumps, got {params.jump_dist.kind}"
        )
    return params.jump_dist


def _poisson_series(lam_t, alpha, beta, base_A, base_B2, x0_leg, strike, phi, k_max):
    """Sum Poisson(k; lam_t) * E[(x0_leg e^Theta_k - K)^+] with Theta_k ~ N(A_k, B2_k)."""
    if int(k_max) != k_max or k_max < 0:
        raise ConfigError("k_max must be a nonnegative integer")
    rows = []
    log_lt = math.log(lam_t) if lam_t > 0 else -math.inf
    total = 0.0
    converged = False
    for k in range(int(k_max) + 1):
        if lam_t > 0:
            w = math.exp(k * log_lt - lam_t - gammaln(k + 1))
        else:
            w = 1.0 if k == 0 else 0.0
        A = base_A + k * alpha
        B2 = base_B2 + k * beta**2
        Omega = math.exp(A + 0.5 * B2)
        if B2 > 0:
            B = math.sqrt(B2)
            xi1 = B - phi / B + A / B
            xi2 = A / B - phi / B
            value = x0_leg * Omega * float(ndtr(xi1)) - strike * float(ndtr(xi2))
        else:
            xi1 = xi2 = math.copysign(math.inf, A - phi) if A != phi else 0.0
            value = max(x0_leg * math.exp(A) - strike, 0.0)
        total += w * value
        rows.append((k, w, A, B2, Omega, xi1, xi2, value))
        if w < POISSON_WEIGHT_TOL and k > lam_t:
            converged = True
            break
    ks, ws, As, B2s, Oms, x1s, x2s, vals = np.array(rows).T
    terms = ClosedFormTerms(
        k=ks.astype(int), weights=ws, A=As, B2=B2s, Omega=Oms, phi=phi, xi1=x1s, xi2=x2s,
        values=vals, k_max=int(k_max), lam_t=float(lam_t), alpha=float(alpha), beta=float(beta),
    )
    if not converged:
        raise ConvergenceError(
            f"Poisson series not truncated within k_max={k_max} (lambda*T={lam_t:.4g})",
            best=(total, terms),
        )
    return total, terms


def closed_form_price(x0: float, params: JumpDiffusionParams, spec: OptionSpec,
                      k_max: int = DEFAULT_K_MAX, averaging: str = "continuous") -> PricingResult:
    """Explicit price for a geometric-average payoff (gamma = 0) with log-normal jumps.

    Conditioning on N(T) = k jumps, the log of the time-averaged price is
    Gaussian with mean A_k and variance B_k^2, so each term is a
    Black-Scholes-type expectation and the price is their Poisson mixture.
    All k jumps enter A_k and B_k^2 in full, whatever their timing.

    ``averaging="continuous"`` uses the continuous-time average over [S, T]
    (the m -> infinity limit); ``"discrete"`` uses the exact moments of the
    m-point average on the simulation grid, matching what ``mc_price`` samples
    when lambda = 0.
    """
    params.require_risk_neutral()
    dist = _lognormal_only(params)
    if spec.gamma != 0.0:
        raise ConfigError(f"the explicit formula covers gamma = 0 only, got gamma={spec.gamma}")
    x0 = float(x0)
    if not x0 > 0:
        raise ConfigError("x0 must be positive")
    r, sigma, lam = params.r, params.sigma, params.lam
    nu = r - lam * params.zeta - 0.5 * sigma**2
    S, T = spec.S, spec.T
    if averaging == "continuous":
        base_A = 0.5 * nu * (T + S)
        base_B2 = sigma**2 * T / 3.0 + 2.0 * sigma**2 * S / 3.0
    elif averaging == "discrete":
        grid = build_time_grid(spec)
        m = grid.m
        start = grid.m_tilde * grid.dt
        length = grid.m * grid.dt
        base_A = nu * ((m + 1) / m * length / 2.0 + start)
        base_B2 = (m + 1) * (2 * m + 1) / (6.0 * m * m) * sigma**2 * length + sigma**2 * start
    else:
        raise ConfigError(f"averaging must be 'continuous' or 'discrete', got {averaging!r}")
    phi = math.log(spec.c * spec.K) - math.log(spec.c_tilde * x0)
    total, terms = _poisson_series(lam * T, dist.alpha, dist.beta, base_A, base_B2,
                                   spec.ctr_ratio * x0, spec.K, phi, k_max)
    pi0 = spec.theta * math.exp(-r * T) * total
    return PricingResult(
        method="closed_form", pi0=pi0, std_error=0.0, ci95_low=pi0, ci95_high=pi0, z=0,
        inputs=_inputs_echo(x0, params, spec, k_max=int(k_max), averaging=averaging,
                            k_used=int(terms.k[-1])),
        terms=terms,
    )


def merton_european_price(x0: float, params: JumpDiffusionParams, K: float, T: float,
                          theta: float = 1.0, c: float = 1.0, c_tilde: float = 1.0,
                          k_max: int = DEFAULT_K_MAX) -> PricingResult:
    """Merton's jump-diffusion European call on the terminal price, scaled by theta and c_tilde/c.

    With lambda = 0 this is the Black-Scholes call.
    """
    spec = OptionSpec(theta=theta, K=K, S=T, T=T, m=1, gamma=0.0, c=c, c_tilde=c_tilde)
    params.require_risk_neutral()
    dist = _lognormal_only(params)
    x0 = float(x0)
    r, sigma, lam = params.r, params.sigma, params.lam
    nu = r - lam * params.zeta - 0.5 * sigma**2
    phi = math.log(c * K) - math.log(c_tilde * x0)
    total, terms = _poisson_series(lam * T, dist.alpha, dist.beta, nu * T, sigma**2 * T,
                                   spec.ctr_ratio * x0, K, phi, k_max)
    pi0 = theta * math.exp(-r * T) * total
    return PricingResult(
        method="closed_form", pi0=pi0, std_error=0.0, ci95_low=pi0, ci95_high=pi0, z=0,
        inputs=_inputs_echo(x0, params, spec, k_max=int(k_max), k_used=int(terms.k[-1]),
                            model="merton_european"),
        terms=terms,
    )


@dataclass(frozen=True)
class Sensitivity:
    name: str
    base: float
    derivative: float
    expected_sign: Optional[int]

    @property
    def direction(self) -> int:
        return int(np.sign(self.derivative))

    @property
    def ok(self) -> bool:
        if self.expected_sign is None:
            return True
        return self.derivative * self.expected_sign >= 0

    def to_record(self) -> dict:
        return {"name": self.name, "base": self.base, "derivative": self.derivative,
                "direction": self.direction, "expected_sign": self.expected_sign, "ok": self.ok}


# signs every pricing method must respect; r and T are reported without a contract
EXPECTED_SIGNS = {"x0": 1, "K": -1, "r": None, "T": None, "sigma": 1, "theta": 1,
                  "c_tilde": 1, "c": -1}


def price_sensitivities(x0: float, params: JumpDiffusionParams, spec: OptionSpec,
                        method: str = "auto", bump: float = 0.01, z: int = 20_000,
                        rng: Optional[RngSpec] = None, k_max: int = DEFAULT_K_MAX,
                        backend=None) -> list[Sensitivity]:
    """Finite-difference sensitivities of the price to each contract and model input.

    ``method="auto"`` uses the explicit formula when it applies (log-normal
    jumps, gamma = 0) and common-random-number Monte Carlo otherwise.
    A bump that would leave the valid domain falls back to a one-sided difference.
    """
    if method == "auto":
        method = ("closed_form" if isinstance(params.jump_dist, LogNormal) and spec.gamma == 0
                  else "monte_carlo")
    rng = rng or RngSpec(seed=12345)

    def price(x0_, params_, spec_):
        if method == "closed_form":
            return closed_form_price(x0_, params_, spec_, k_max=k_max).pi0
        return mc_price(x0_, params_, spec_, z, rng, backend=backend).pi0

    def variant(name, value):
        p, s, x = params, spec, x0
        if name == "x0":
            x = value
        elif name in ("r", "sigma"):
            fields = dict(rate=params.rate, sigma=params.sigma, lam=params.lam,
                          jump_dist=params.jump_dist, risk_neutral=params.risk_neutral)
            fields["rate" if name == "r" else "sigma"] = value
            p = JumpDiffusionParams(**fields)
        else:
            s = spec.with_(**{name: value})
        return x, p, s

    base_values = {"x0": x0, "K": spec.K, "r": params.rate, "T": spec.T, "sigma": params.sigma,
                   "theta": spec.theta, "c_tilde": spec.c_tilde, "c": spec.c}
    base_price = price(x0, params, spec)
    out = []
    for name, base in base_values.items():
        h = bump * abs(base) if base != 0 else bump
        points = []
        for value in (base - h, base + h):
            try:
                points.append((value, price(*variant(name, value))))
            except ConfigError:
                points.append((base, base_price))
        (lo, p_lo), (hi, p_hi) = points
        deriv = (p_hi - p_lo) / (hi - lo) if hi != lo else 0.0
        out.append(Sensitivity(name, float(base), float(deriv), EXPECTED_SIGNS[name]))
    return out
