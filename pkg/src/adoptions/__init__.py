"""Pricing engine for average-price advertising options under jump-diffusion spot prices."""

from adoptions.errors import (
    AdoptionsError,
    ConfigError,
    ConvergenceError,
    DataError,
    DegenerateVarianceError,
    InsufficientDataError,
    InvalidDistributionError,
    NumericalError,
)
from adoptions.model import (
    JumpDiffusionParams,
    LogADE,
    LogLaplacian,
    LogNormal,
    OptionSpec,
    PriceSeries,
    TimeGrid,
    build_time_grid,
    risk_neutral_drift,
    zeta,
)
from adoptions.payoff import payoff, power_mean
from adoptions.pricing import (
    PricingResult,
    closed_form_price,
    mc_price,
    merton_european_price,
    price_sensitivities,
)
from adoptions.simulation import RngSpec, SimulatedPath, simulate_path, simulate_paths

__version__ = "0.1.0"

__all__ = [
    "AdoptionsError",
    "ConfigError",
    "ConvergenceError",
    "DataError",
    "DegenerateVarianceError",
    "InsufficientDataError",
    "InvalidDistributionError",
    "JumpDiffusionParams",
    "LogADE",
    "LogLaplacian",
    "LogNormal",
    "NumericalError",
    "OptionSpec",
    "PriceSeries",
    "PricingResult",
    "RngSpec",
    "SimulatedPath",
    "TimeGrid",
    "build_time_grid",
    "closed_form_price",
    "mc_price",
    "merton_european_price",
    "payoff",
    "power_mean",
    "price_sensitivities",
    "risk_neutral_drift",
    "simulate_path",
    "simulate_paths",
    "zeta",
]
