"""Monte Carlo simulation of the noise-perturbed flow.

The perturbed flow keeps actions fixed and moves angles as

    phi(t) = phi + g(I) t + sigma w(t),    sigma = sqrt(2 nu),

with ``w`` an n-dimensional Wiener process.  This amplitude makes
``E exp(i sigma k.w(t)) = exp(-nu |k|^2 t)``, the damping of the
stochastic average's coefficients.  Angles are sampled exactly on the
time grid; the only discretization is the trapezoid rule for the damped
time integral.

Every path draws from its own generator keyed by ``(seed, path_index)``,
so a path set is reproducible and independent of evaluation order.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, List, Optional, Sequence, Tuple

import numpy as np

from . import kernels
from .errors import InterpolationError, StepSizeError
from .fourier_core import FrequencyModel, PhaseSpaceFunction, norm2

HORIZON_FACTOR = 20.0
PATH_BLOCK = 32


def noise_amplitude(nu: float) -> float:
    return math.sqrt(2.0 * nu)


def path_generator(seed: int, path_index: int) -> np.random.Generator:
    """Generator for one path, keyed by ``(seed, path_index)`` via SeedSequence mixing."""
    ss = np.random.SeedSequence(int(seed) & 0xFFFFFFFFFFFFFFFF, spawn_key=(int(path_index),))
    return np.random.Generator(np.random.PCG64(ss))


def wiener_increments(seed: int, path_index: int, steps: int, n: int, dt) -> np.ndarray:
    """``(steps, n)`` Wiener increments; ``dt`` is a scalar or per-step array."""
    z = path_generator(seed, path_index).standard_normal((steps, n))
    scale = np.sqrt(np.asarray(dt, dtype=float))
    return z * (scale[:, None] if scale.ndim else scale)


@dataclass(frozen=True)
class NoisePath:
    seed: int
    times: np.ndarray
    w: np.ndarray
    path_index: int = 0

    def __post_init__(self):
        times = np.asarray(self.times, dtype=float)
        w = np.asarray(self.w, dtype=float)
        if times.ndim != 1 or times.size == 0 or times[0] != 0.0:
            raise ValueError("times must be a 1-d array starting at 0")
        if np.any(np.diff(times) <= 0):
            raise ValueError("times must be strictly increasing")
        if w.ndim != 2 or w.shape[0] != times.size:
            raise ValueError("w must have shape (len(times), n)")
        if np.any(w[0] != 0.0):
            raise ValueError("Wiener path must start at 0")
        object.__setattr__(self, "times", times)
        object.__setattr__(self, "w", w)

    @classmethod
    def sample(cls, seed: int, times, n: int, path_index: int = 0) -> "NoisePath":
        times = np.asarray(times, dtype=float)
        inc = wiener_increments(seed, path_index, times.size - 1, n, np.diff(times))
        w = np.vstack([np.zeros((1, n)), np.cumsum(inc, axis=0)])
        return cls(seed, times, w, path_index)

    @classmethod
    def zero(cls, times, n: int) -> "NoisePath":
        times = np.asarray(times, dtype=float)
        return cls(0, times, np.zeros((times.size, n)))

    @property
    def n(self) -> int:
        return self.w.shape[1]

    def at(self, t: float) -> np.ndarray:
        idx = int(np.searchsorted(self.times, t))
        for j in (idx - 1, idx):
            if 0 <= j < self.times.size and abs(self.times[j] - t) <= 1e-12 * max(1.0, abs(t)):
                return self.w[j]
        raise InterpolationError(f"time {t} is not a sampled time of the noise path")


def sample_flow(gm: FrequencyModel, I, phi, nu: float, path: NoisePath, t: float) -> np.ndarray:
    """Angle ``phi + g(I) t + sqrt(2 nu) w(t)`` of the perturbed flow; actions do not move."""
    if not nu >= 0:
        raise ValueError("nu must be nonnegative")
    I = gm.domain.check(np.asarray(I, dtype=float))
    phi = np.asarray(phi, dtype=float)
    w = path.at(t)
    return phi + gm.g(I) * t + noise_amplitude(nu) * w


@dataclass(frozen=True)
class McEstimate:
    mean: float
    std_error: float
    paths: int
    dt: float
    horizon: float
    tail_bound: float


def max_stable_dt(f: PhaseSpaceFunction, mu: float, nu: float) -> float:
    """Exclusive upper limit on the step: ``1 / (mu + nu K^2 n)``."""
    return 1.0 / (mu + nu * f.truncation_radius**2 * f.n)


def mc_estimate_many(
    f: PhaseSpaceFunction,
    gm: FrequencyModel,
    points: Sequence[Tuple[Sequence[float], Sequence[float]]],
    mu: float,
    nu: float,
    paths: int,
    dt: float,
    seed: int = 0,
    backend=None,
) -> List[McEstimate]:
    """Monte Carlo estimates of the stochastic damped average at several ``(I, phi)``.

    The same Wiener paths (keyed by ``seed``) drive every point, exactly as
    separate :func:`mc_estimate` calls with that seed would; batching only
    shares the noise phases between points.
    """
    if not mu > 0 or not nu > 0:
        raise ValueError("mu and nu must be positive")
    if paths < 100:
        raise ValueError("at least 100 paths are required")
    if not dt > 0:
        raise ValueError("dt must be positive")
    limit = max_stable_dt(f, mu, nu)
    if dt >= limit:
        raise StepSizeError(f"dt={dt} under-resolves the damping; need dt < {limit:.6g}")
    kernel = backend or kernels.damped_path_sums

    steps = int(math.ceil(HORIZON_FACTOR / (mu * dt) - 1e-9))
    horizon = steps * dt
    I_arr = np.array([np.asarray(I, dtype=float) for I, _ in points])
    phi_arr = np.array([np.asarray(p, dtype=float) for _, p in points])
    I_arr = gm.domain.check(I_arr)
    coeffs = f.coefficient_matrix(I_arr)
    modes = np.array(f.mode_list, dtype=np.int64)
    if f.real:
        # the -k term is the conjugate of the k term: keep one of each pair, doubled
        keep = np.array([k > tuple(-v for v in k) for k in f.mode_list])
        zero = np.array([not any(k) for k in f.mode_list])
        coeffs = np.where(keep, 2.0, 1.0) * coeffs
        sel = keep | zero
        modes, coeffs = modes[sel], coeffs[:, sel]
    kvec = modes.astype(float)
    amp = np.ascontiguousarray(coeffs * np.exp(1j * phi_arr @ kvec.T))
    freq = gm.g(I_arr) @ kvec.T
    step = np.ascontiguousarray(np.exp((1j * freq - mu) * dt))
    sigma = noise_amplitude(nu)

    sums = np.empty((paths, len(points)), dtype=complex)
    buf = np.empty((PATH_BLOCK, steps, f.n))
    scale = math.sqrt(dt)
    for b0 in range(0, paths, PATH_BLOCK):
        b1 = min(paths, b0 + PATH_BLOCK)
        inc = buf[: b1 - b0]
        for i in range(b0, b1):
            path_generator(seed, i).standard_normal(out=inc[i - b0])
        inc *= scale
        sums[b0:b1] = kernel(inc, modes, amp, step, sigma, dt)

    values = mu * (sums.real if f.real else sums)
    tail = math.exp(-mu * horizon) * f.sup_sum()
    out = []
    for p in range(len(points)):
        v = values[:, p]
        mean = np.sum(v) / paths
        if np.iscomplexobj(v):
            sd = math.sqrt(np.sum(np.abs(v - mean) ** 2) / (paths - 1))
        else:
            sd = float(np.std(v, ddof=1))
            mean = float(mean)
        out.append(McEstimate(mean, sd / math.sqrt(paths), paths, dt, horizon, tail))
    return out


def mc_estimate(f, gm, I, phi, mu: float, nu: float, paths: int, dt: float, seed: int = 0, backend=None) -> McEstimate:
    """Monte Carlo estimate of ``mu E int_0^inf f(flow_t) exp(-mu t) dt`` at one point.

    Horizon is ``20 / mu`` rounded up to a whole number of steps, so the
    discarded tail is at most ``exp(-20) |f|^inf``.
    """
    return mc_estimate_many(f, gm, [(I, phi)], mu, nu, paths, dt, seed, backend)[0]


def characteristic_check(nu: float, k, t: float, paths: int, seed: int = 0) -> Tuple[complex, float, float]:
    """Compare ``mean exp(i sqrt(2 nu) k.w(t))`` with ``exp(-nu |k|^2 t)``.

    Returns ``(empirical, analytic, z_score)``; the standard error is that
    of the complex sample mean.
    """
    if paths < 1000:
        raise ValueError("at least 1000 paths are required")
    kv = np.asarray(k, dtype=float)
    analytic = math.exp(-nu * norm2(k) ** 2 * t)
    if t == 0:
        return 1.0 + 0j, 1.0, 0.0
    w = np.stack([wiener_increments(seed, i, 1, kv.size, t)[0] for i in range(paths)])
    samples = np.exp(1j * noise_amplitude(nu) * (w @ kv))
    empirical = complex(np.sum(samples) / paths)
    se = math.sqrt(np.sum(np.abs(samples - empirical) ** 2) / (paths - 1) / paths)
    z = abs(empirical - analytic) / se if se > 0 else (0.0 if empirical == analytic else math.inf)
    return empirical, analytic, z
