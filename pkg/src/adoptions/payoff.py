"""Power-mean statistic and the average-price option payoff."""

from __future__ import annotations

import math

import numpy as np

from adoptions._kernels import power_mean_rows
from adoptions.errors import ConfigError, DataError
from adoptions.model import OptionSpec, parse_gamma

# below this |gamma| the geometric-mean branch is used
GAMMA_ZERO_TOL = 1e-8


def _as_window(window) -> np.ndarray:
    x = np.asarray(window, dtype=float)
    if x.ndim != 1 or x.size == 0:
        raise DataError("price window must be a nonempty 1-D sequence")
    if not np.all(x > 0) or not np.all(np.isfinite(x)):
        raise DataError("price window entries must be finite and positive")
    return x


def power_mean(window, gamma) -> float:
    """Hölder mean (sum x^gamma / m)^(1/gamma) of a positive price window.

    ``gamma`` may be any real, ``±inf`` or the strings ``"min"``/``"max"``.
    gamma = 0 is the geometric mean, computed in log space.
    """
    x = _as_window(window)
    return float(power_mean_rows(x[None, :], parse_gamma(gamma))[0])


def payoff(window, spec: OptionSpec) -> float:
    """theta * max((c_tilde/c) * psi(gamma | window) - K, 0)."""
    x = _as_window(window)
    if x.size != spec.m:
        raise ConfigError(f"window has {x.size} prices but the contract averages over m={spec.m}")
    psi = power_mean(x, spec.gamma)
    return spec.theta * max(spec.ctr_ratio * psi - spec.K, 0.0)


def payoff_intrinsic(window, spec: OptionSpec) -> float:
    """(c_tilde/c) * psi - K without the positive part; > 0 means exercise."""
    x = _as_window(window)
    if x.size != spec.m:
        raise ConfigError(f"window has {x.size} prices but the contract averages over m={spec.m}")
    return spec.ctr_ratio * power_mean(x, spec.gamma) - spec.K


def geometric_mean(window) -> float:
    x = _as_window(window)
    return math.exp(float(np.mean(np.log(x))))
