"""Hot loops: counter-based random streams, path simulation and payoff evaluation.

Every kernel exists twice: a numba version that loops path by path and a
numpy version vectorized across paths. Both consume the same random bits, so
their outputs agree to floating-point rounding of the transcendental calls.

Random numbers come from a counter-based generator: the SplitMix64 finalizer
applied to ``key(seed, stream) + (counter + 1) * golden``. A draw depends only
on (seed, stream, counter), which makes a path independent of evaluation
order or thread count.
"""

import math

import numpy as np

from adoptions._accel import HAVE_NUMBA, njit

if HAVE_NUMBA:
    from numba import prange
else:  # pragma: no cover
    prange = range

MASK64 = (1 << 64) - 1
_GOLDEN = 0x9E3779B97F4A7C15
_M1 = 0xBF58476D1CE4E5B9
_M2 = 0x94D049BB133111EB
_SEED_SALT = 0x5851F42D4C957F2D
_STREAM_SALT = 0x14057B7EF767814F

GOLDEN = np.uint64(_GOLDEN)
M1 = np.uint64(_M1)
M2 = np.uint64(_M2)
SEED_SALT = np.uint64(_SEED_SALT)
STREAM_SALT = np.uint64(_STREAM_SALT)
SH30 = np.uint64(30)
SH27 = np.uint64(27)
SH31 = np.uint64(31)
SH11 = np.uint64(11)
ONE = np.uint64(1)
TWO_M53 = 2.0**-53
TWO_PI = 2.0 * math.pi

# counter slots per step
SLOTS = 8
SLOT_NORMAL_A = 0
SLOT_NORMAL_B = 1
SLOT_BERNOULLI = 2
SLOT_JUMP_A = 3
SLOT_JUMP_B = 4

JUMP_LOGNORMAL = 0
JUMP_ADE = 1
JUMP_LAPLACIAN = 2


def as_u64(value: int) -> np.uint64:
    return np.uint64(int(value) & MASK64)


# ---------------------------------------------------------------- numba side


@njit
def mix64(z):
    z = (z ^ (z >> SH30)) * M1
    z = (z ^ (z >> SH27)) * M2
    return z ^ (z >> SH31)


@njit
def stream_key(seed, stream):
    return mix64(mix64(seed ^ SEED_SALT) + mix64(stream ^ STREAM_SALT))


@njit
def uniform(key, counter):
    """Uniform draw strictly inside (0, 1)."""
    x = mix64(key + (np.uint64(counter) + ONE) * GOLDEN)
    return (float(np.int64(x >> SH11)) + 0.5) * TWO_M53


@njit
def _box_muller(u1, u2):
    return math.sqrt(-2.0 * math.log(u1)) * math.cos(TWO_PI * u2)


@njit
def _jump_draw(key, base, kind, jp):
    ua = uniform(key, base + SLOT_JUMP_A)
    ub = uniform(key, base + SLOT_JUMP_B)
    if kind == JUMP_LOGNORMAL:
        return jp[0] + jp[1] * _box_muller(ua, ub)
    if kind == JUMP_ADE:
        if ua < jp[2]:
            return -math.log(ub) / jp[0]
        return math.log(ub) / jp[1]
    # Laplacian by inverse CDF
    if ua < 0.5:
        return jp[0] + jp[1] * math.log(2.0 * ua)
    return jp[0] - jp[1] * math.log(2.0 * (1.0 - ua))


@njit
def _fill_path(key, log_x0, drift_dt, vol_dt, jump_prob, kind, jp, out):
    """Write ln X_1 .. ln X_n into ``out``; returns the number of jumps."""
    lx = log_x0
    n_jumps = 0
    for i in range(out.shape[0]):
        base = (i + 1) * SLOTS
        z = _box_muller(uniform(key, base + SLOT_NORMAL_A), uniform(key, base + SLOT_NORMAL_B))
        lx += drift_dt + vol_dt * z
        if uniform(key, base + SLOT_BERNOULLI) < jump_prob:
            lx += _jump_draw(key, base, kind, jp)
            n_jumps += 1
        out[i] = lx
    return n_jumps


@njit
def simulate_numba(seed, streams, n_steps, log_x0, drift_dt, vol_dt, jump_prob, kind, jp):
    n_paths = streams.shape[0]
    out = np.empty((n_paths, n_steps))
    jumps = np.empty(n_paths, dtype=np.int64)
    for j in range(n_paths):
        key = stream_key(seed, streams[j])
        jumps[j] = _fill_path(key, log_x0, drift_dt, vol_dt, jump_prob, kind, jp, out[j])
    return out, jumps


@njit
def power_mean_numba(x, gamma):
    n = x.shape[0]
    if gamma == np.inf:
        return x.max()
    if gamma == -np.inf:
        return x.min()
    if gamma == 1.0:
        return x.sum() / n
    if gamma == -1.0:
        return n / (1.0 / x).sum()
    if gamma == 2.0:
        return math.sqrt((x * x).sum() / n)
    if abs(gamma) < 1e-8:
        return math.exp(np.log(x).sum() / n)
    lg = gamma * np.log(x)
    s = lg.max()
    acc = np.exp(lg - s).sum()
    return math.exp((s + math.log(acc / n)) / gamma)


@njit
def _power_mean_logs(logs, start, m, gamma):
    """power_mean_numba(exp(logs[start:start+m]), gamma) without a temporary array."""
    stop = start + m
    if gamma == np.inf or gamma == -np.inf:
        best = logs[start]
        for i in range(start + 1, stop):
            if (gamma > 0 and logs[i] > best) or (gamma < 0 and logs[i] < best):
                best = logs[i]
        return math.exp(best)
    if abs(gamma) < 1e-8:
        acc = 0.0
        for i in range(start, stop):
            acc += logs[i]
        return math.exp(acc / m)
    if gamma == 1.0 or gamma == -1.0 or gamma == 2.0:
        acc = 0.0
        for i in range(start, stop):
            acc += math.exp(gamma * logs[i])
        if gamma == 1.0:
            return acc / m
        if gamma == -1.0:
            return m / acc
        return math.sqrt(acc / m)
    s = gamma * logs[start]
    for i in range(start + 1, stop):
        s = max(s, gamma * logs[i])
    acc = 0.0
    for i in range(start, stop):
        acc += math.exp(gamma * logs[i] - s)
    return math.exp((s + math.log(acc / m)) / gamma)


MC_BLOCK = 1024


@njit(parallel=True)
def mc_payoffs_numba(seed, first_stream, n_paths, n_steps, m_tilde, m, log_x0, drift_dt,
                     vol_dt, jump_prob, kind, jp, gamma, theta, ratio, strike):
    payoffs = np.empty(n_paths)
    n_blocks = (n_paths + MC_BLOCK - 1) // MC_BLOCK
    # fixed-size blocks keep the stream-to-path mapping independent of thread count
    for b in prange(n_blocks):
        buf = np.empty(n_steps)
        stop = min((b + 1) * MC_BLOCK, n_paths)
        for j in range(b * MC_BLOCK, stop):
            key = stream_key(seed, np.uint64(first_stream + j))
            _fill_path(key, log_x0, drift_dt, vol_dt, jump_prob, kind, jp, buf)
            psi = _power_mean_logs(buf, m_tilde, m, gamma)
            payoffs[j] = theta * max(ratio * psi - strike, 0.0)
    return payoffs


@njit
def welford_numba(values):
    mean = 0.0
    m2 = 0.0
    for i in range(values.shape[0]):
        delta = values[i] - mean
        mean += delta / (i + 1)
        m2 += delta * (values[i] - mean)
    return mean, m2


# ---------------------------------------------------------------- numpy side


def mix64_np(z):
    with np.errstate(over="ignore"):
        z = (z ^ (z >> SH30)) * M1
        z = (z ^ (z >> SH27)) * M2
        return z ^ (z >> SH31)


def stream_keys_np(seed, streams):
    streams = np.asarray(streams, dtype=np.uint64)
    seed_key = mix64_np(np.full(streams.shape, seed, dtype=np.uint64) ^ SEED_SALT)
    return mix64_np(seed_key + mix64_np(streams ^ STREAM_SALT))


def uniform_np(keys, counter):
    offset = np.uint64(((counter + 1) * _GOLDEN) & MASK64)
    x = mix64_np(keys + offset)
    return ((x >> SH11).astype(np.float64) + 0.5) * TWO_M53


def _jump_draw_np(keys, base, kind, jp):
    ua = uniform_np(keys, base + SLOT_JUMP_A)
    ub = uniform_np(keys, base + SLOT_JUMP_B)
    if kind == JUMP_LOGNORMAL:
        return jp[0] + jp[1] * (np.sqrt(-2.0 * np.log(ua)) * np.cos(TWO_PI * ub))
    if kind == JUMP_ADE:
        return np.where(ua < jp[2], -np.log(ub) / jp[0], np.log(ub) / jp[1])
    return np.where(ua < 0.5, jp[0] + jp[1] * np.log(2.0 * ua),
                    jp[0] - jp[1] * np.log(2.0 * (1.0 - ua)))


def simulate_numpy(seed, streams, n_steps, log_x0, drift_dt, vol_dt, jump_prob, kind, jp):
    keys = stream_keys_np(seed, streams)
    n_paths = keys.shape[0]
    out = np.empty((n_paths, n_steps))
    jumps = np.zeros(n_paths, dtype=np.int64)
    lx = np.full(n_paths, float(log_x0))
    with np.errstate(over="ignore"):
        for i in range(n_steps):
            base = (i + 1) * SLOTS
            u1 = uniform_np(keys, base + SLOT_NORMAL_A)
            u2 = uniform_np(keys, base + SLOT_NORMAL_B)
            lx += drift_dt + vol_dt * (np.sqrt(-2.0 * np.log(u1)) * np.cos(TWO_PI * u2))
            hit = uniform_np(keys, base + SLOT_BERNOULLI) < jump_prob
            if hit.any():
                lx[hit] += _jump_draw_np(keys[hit], base, kind, jp)
                jumps += hit
            out[:, i] = lx
    return out, jumps


def power_mean_rows(x, gamma):
    """Power mean of each row of a 2-D positive array."""
    x = np.asarray(x, dtype=float)
    n = x.shape[1]
    if gamma == np.inf:
        return x.max(axis=1)
    if gamma == -np.inf:
        return x.min(axis=1)
    if gamma == 1.0:
        return x.sum(axis=1) / n
    if gamma == -1.0:
        return n / (1.0 / x).sum(axis=1)
    if gamma == 2.0:
        return np.sqrt((x * x).sum(axis=1) / n)
    if abs(gamma) < 1e-8:
        return np.exp(np.log(x).sum(axis=1) / n)
    lg = gamma * np.log(x)
    s = lg.max(axis=1)
    acc = np.exp(lg - s[:, None]).sum(axis=1)
    return np.exp((s + np.log(acc / n)) / gamma)


def mc_payoffs_numpy(seed, first_stream, n_paths, n_steps, m_tilde, m, log_x0, drift_dt,
                     vol_dt, jump_prob, kind, jp, gamma, theta, ratio, strike, chunk=8192):
    payoffs = np.empty(n_paths)
    for start in range(0, n_paths, chunk):
        stop = min(start + chunk, n_paths)
        streams = np.arange(first_stream + start, first_stream + stop, dtype=np.uint64)
        logs, _ = simulate_numpy(seed, streams, n_steps, log_x0, drift_dt, vol_dt,
                                 jump_prob, kind, jp)
        psi = power_mean_rows(np.exp(logs[:, m_tilde:m_tilde + m]), gamma)
        payoffs[start:stop] = theta * np.maximum(ratio * psi - strike, 0.0)
    return payoffs
