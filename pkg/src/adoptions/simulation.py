"""Exact-grid simulation of the jump-diffusion spot price.

Each step adds a Gaussian diffusion increment and, with probability
lambda*dt, one jump drawn from the jump-size law:

    ln X_i = ln X_{i-1} + a_i + xi_i * v_i
    a_i ~ N(drift * dt, sigma^2 dt),  xi_i ~ Bernoulli(lambda dt)

where drift is r - lambda*zeta - sigma^2/2 under risk-neutral parameters and
mu - sigma^2/2 under real-world ones.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from adoptions import _kernels
from adoptions._accel import resolve_backend
from adoptions.errors import ConfigError
from adoptions.model import JumpDiffusionParams, LogADE, LogLaplacian, LogNormal, TimeGrid

# above this the one-jump-per-step approximation loses ~0.5% of jump mass
BERNOULLI_SOFT_LIMIT = 0.1


@dataclass(frozen=True)
class RngSpec:
    """A reproducible random stream: (seed, stream_id) fixes every draw."""

    seed: int
    stream_id: int = 1

    def __post_init__(self):
        for name in ("seed", "stream_id"):
            v = getattr(self, name)
            if int(v) != v:
                raise ConfigError(f"{name} must be an integer")
        if not 0 <= self.stream_id <= _kernels.MASK64:
            raise ConfigError("stream_id must fit in 64 unsigned bits")


@dataclass(frozen=True)
class SimulatedPath:
    log_prices: np.ndarray
    x0: float
    grid: TimeGrid
    n_jumps: int = 0

    @property
    def prices(self) -> np.ndarray:
        return np.exp(self.log_prices)

    @property
    def window(self) -> np.ndarray:
        return self.prices[self.grid.window]


@dataclass(frozen=True)
class SimulatedPaths:
    """A batch of replications; row j belongs to stream ``first_stream + j``."""

    log_prices: np.ndarray
    n_jumps: np.ndarray
    x0: float
    grid: TimeGrid
    first_stream: int = 1

    def __len__(self) -> int:
        return self.log_prices.shape[0]

    def __getitem__(self, j: int) -> SimulatedPath:
        return SimulatedPath(self.log_prices[j], self.x0, self.grid, int(self.n_jumps[j]))

    def __iter__(self):
        return (self[j] for j in range(len(self)))

    @property
    def prices(self) -> np.ndarray:
        return np.exp(self.log_prices)

    @property
    def terminal(self) -> np.ndarray:
        return np.exp(self.log_prices[:, -1])

    def to_csv(self, path) -> None:
        """Dump as rows (replication, step, time, price); step 0 is the initial price."""
        times = self.grid.times
        with Path(path).open("w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["replication", "step", "time", "price"])
            for j in range(len(self)):
                rep = self.first_stream + j
                writer.writerow([rep, 0, repr(0.0), repr(float(self.x0))])
                prices = np.exp(self.log_prices[j])
                for i in range(prices.shape[0]):
                    writer.writerow([rep, i + 1, repr(float(times[i])), repr(float(prices[i]))])


def jump_kernel_args(dist) -> tuple[int, np.ndarray]:
    """Encode a jump law as (kind, parameter vector) for the kernels."""
    if isinstance(dist, LogNormal):
        return _kernels.JUMP_LOGNORMAL, np.array([dist.alpha, dist.beta, 0.0, 0.0])
    if isinstance(dist, LogADE):
        return _kernels.JUMP_ADE, np.array([dist.eta1, dist.eta2, dist.p1, dist.p2])
    if isinstance(dist, LogLaplacian):
        return _kernels.JUMP_LAPLACIAN, np.array([dist.rho, dist.eta, 0.0, 0.0])
    raise ConfigError(f"unknown jump distribution {dist!r}")


def step_args(params: JumpDiffusionParams, dt: float) -> tuple[float, float, float]:
    """Per-step (drift, volatility, jump probability); rejects lambda*dt >= 1."""
    jump_prob = params.lam * dt
    if jump_prob >= 1:
        raise ConfigError(
            f"lambda*dt = {jump_prob:.4g} >= 1: the one-jump-per-step scheme is invalid; "
            "refine the grid"
        )
    return params.log_drift() * dt, params.sigma * math.sqrt(dt), jump_prob


def _check_x0(x0: float) -> float:
    x0 = float(x0)
    if not (x0 > 0 and math.isfinite(x0)):
        raise ConfigError(f"x0 must be a finite positive price, got {x0}")
    return x0


def simulate_paths(x0: float, params: JumpDiffusionParams, grid: TimeGrid, n_paths: int,
                   base_rng: RngSpec, backend=None) -> SimulatedPaths:
    """Simulate ``n_paths`` replications; path j (1-based) uses stream j of ``base_rng.seed``."""
    if int(n_paths) != n_paths or n_paths < 1:
        raise ConfigError(f"n_paths must be a positive integer, got {n_paths}")
    streams = np.arange(1, int(n_paths) + 1, dtype=np.uint64)
    return _simulate(x0, params, grid, base_rng.seed, streams, backend)


def simulate_path(x0: float, params: JumpDiffusionParams, grid: TimeGrid, rng: RngSpec,
                  backend=None) -> SimulatedPath:
    streams = np.array([rng.stream_id], dtype=np.uint64)
    batch = _simulate(x0, params, grid, rng.seed, streams, backend)
    return batch[0]


def _simulate(x0, params, grid, seed, streams, backend) -> SimulatedPaths:
    x0 = _check_x0(x0)
    drift_dt, vol_dt, jump_prob = step_args(params, grid.dt)
    kind, jp = jump_kernel_args(params.jump_dist)
    fn = _kernels.simulate_numba if resolve_backend(backend) == "numba" else _kernels.simulate_numpy
    logs, jumps = fn(_kernels.as_u64(seed), streams, grid.n_steps, math.log(x0), drift_dt, vol_dt,
                     jump_prob, kind, jp)
    logs.flags.writeable = False
    return SimulatedPaths(logs, jumps, x0, grid, int(streams[0]))


def simulate_series(x0: float, params: JumpDiffusionParams, dt: float, n_steps: int,
                    rng: RngSpec, backend=None) -> tuple[np.ndarray, np.ndarray]:
    """One long path for synthetic data: returns prices (length n_steps + 1) and jump flags.

    The jump flags mark the returns (price i -> i+1) that contain a jump; they
    are reconstructed by re-running the Bernoulli draws of the same stream.
    """
    x0 = _check_x0(x0)
    drift_dt, vol_dt, jump_prob = step_args(params, dt)
    kind, jp = jump_kernel_args(params.jump_dist)
    streams = np.array([rng.stream_id], dtype=np.uint64)
    seed = _kernels.as_u64(rng.seed)
    fn = _kernels.simulate_numba if resolve_backend(backend) == "numba" else _kernels.simulate_numpy
    logs, _ = fn(seed, streams, n_steps, math.log(x0), drift_dt, vol_dt, jump_prob, kind, jp)
    keys = _kernels.stream_keys_np(seed, streams)
    flags = np.array([
        _kernels.uniform_np(keys, (i + 1) * _kernels.SLOTS + _kernels.SLOT_BERNOULLI)[0] < jump_prob
        for i in range(n_steps)
    ])
    prices = np.concatenate([[x0], np.exp(logs[0])])
    return prices, flags
