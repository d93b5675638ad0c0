"""Mode-by-mode averaging transforms along the integrable flow.

Along ``phi^t(I, phi) = (I, phi + g(I) t)`` each Fourier mode only picks
up the phase ``exp(i k.g(I) t)``, so every average below acts on one
coefficient at a time through the small divisor ``d = k.g(I)``:

=====================  ==========================================
finite time ``T``      ``f_k (exp(i d T) - 1) / (i d T)``
damped ``mu``          ``-mu f_k / (i d - mu)``
stochastic ``mu, nu``  ``-mu f_k / (i d - mu - nu |k|^2)``
limit                  ``f_k`` if ``d == 0`` else ``0``
=====================  ==========================================

Resonance is decided with a tolerance (``tol``) rather than exact zero.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Union

import numpy as np

from .errors import SmallDivisorError
from .fourier_core import (
    TOL_CLASS_SCALE,
    CoefficientFn,
    FrequencyModel,
    Mode,
    PhaseSpaceFunction,
    divisor_gradient,
    is_zero_mode,
    norm2,
    tol_class,
)


@dataclass(frozen=True)
class FiniteTime:
    T: float

    def __post_init__(self):
        if not self.T > 0:
            raise ValueError(f"T must be positive, got {self.T}")


@dataclass(frozen=True)
class Damped:
    mu: float

    def __post_init__(self):
        if not self.mu > 0:
            raise ValueError(f"mu must be positive, got {self.mu}")


@dataclass(frozen=True)
class StochasticDamped:
    mu: float
    nu: float

    def __post_init__(self):
        if not self.mu > 0:
            raise ValueError(f"mu must be positive, got {self.mu}")
        if not self.nu >= 0:
            raise ValueError(f"nu must be nonnegative, got {self.nu}")


@dataclass(frozen=True)
class LimitAverage:
    pass


AverageKind = Union[FiniteTime, Damped, StochasticDamped, LimitAverage]


def _out(x):
    x = np.asarray(x, dtype=complex)
    return complex(x) if x.ndim == 0 else x


def _phase_average(x):
    """``(exp(i x) - 1) / (i x)`` without cancellation near ``x = 0``."""
    x = np.asarray(x, dtype=float)
    return np.exp(0.5j * x) * np.sinc(x / (2 * np.pi))


_SERIES_TERMS = np.array([(1j) ** m * m / math.factorial(m + 1) for m in range(1, 24)])


def _phase_average_derivative(x):
    """Derivative in ``x`` of ``(exp(i x) - 1) / (i x)``."""
    x = np.asarray(x, dtype=float)
    out = np.empty(x.shape, dtype=complex)
    small = np.abs(x) < 0.5
    xs = x[small]
    # sum_m i^m m x^(m-1) / (m+1)!, truncation error < 0.5^23 / 24!
    acc = np.zeros(xs.shape, dtype=complex)
    for c in _SERIES_TERMS[::-1]:
        acc = acc * xs + c
    out[small] = acc
    xl = x[~small]
    out[~small] = -1j * (1.0 + (1j * xl - 1.0) * np.exp(1j * xl)) / xl**2
    return out


def finite_time_coeff(f_k, divisor, T: float, tol: float = TOL_CLASS_SCALE):
    """Fourier coefficient of the finite-time average over ``[0, T]``."""
    if not T > 0:
        raise ValueError(f"T must be positive, got {T}")
    d = np.asarray(divisor, dtype=float)
    factor = np.where(np.abs(d) <= tol, 1.0 + 0j, _phase_average(d * T))
    return _out(np.asarray(f_k, dtype=complex) * factor)


def damped_coeff(f_k, divisor, mu: float):
    """Fourier coefficient of the exponentially damped average ``mu int f e^{-mu t}``."""
    if not mu > 0:
        raise ValueError(f"mu must be positive, got {mu}")
    d = np.asarray(divisor, dtype=float)
    return _out(-mu * np.asarray(f_k, dtype=complex) / (1j * d - mu))


def stochastic_damped_coeff(f_k, divisor, mu: float, nu: float, k):
    """Damped average along the noisy flow; the noise adds damping ``nu |k|^2``.

    With ``nu = 0`` this is exactly :func:`damped_coeff`.
    """
    if not mu > 0:
        raise ValueError(f"mu must be positive, got {mu}")
    if not nu >= 0:
        raise ValueError(f"nu must be nonnegative, got {nu}")
    d = np.asarray(divisor, dtype=float)
    k2 = norm2(k) ** 2
    return _out(-mu * np.asarray(f_k, dtype=complex) / (1j * d - mu - nu * k2))


def limit_average_coeff(f_k, divisor, tol: float = TOL_CLASS_SCALE):
    """Coefficient of the infinite-time average: survives only on resonances."""
    d = np.asarray(divisor, dtype=float)
    return _out(np.where(np.abs(d) <= tol, np.asarray(f_k, dtype=complex), 0.0))


def chi_coeff(f_k, divisor, tol: float = TOL_CLASS_SCALE):
    """Coefficient ``-f_k / (i k.g)`` of the first-order averaging generating function.

    Raises ``SmallDivisorError`` on a resonant divisor.
    """
    d = np.asarray(divisor, dtype=float)
    if np.any(np.abs(d) <= tol):
        raise SmallDivisorError(f"resonant divisor {d} (|d| <= {tol})")
    return _out(-np.asarray(f_k, dtype=complex) / (1j * d))


@dataclass(frozen=True)
class AveragedField(PhaseSpaceFunction):
    """Output of :func:`transform` or :func:`difference_field`; same layout as its source."""

    kind: Optional[AverageKind] = None
    source: Optional[PhaseSpaceFunction] = None
    model: Optional[FrequencyModel] = None
    difference: bool = False


def _mode_pieces(kind: AverageKind, k: Mode, fk: CoefficientFn, gm: FrequencyModel, h: float):
    """Value and gradient callables for one transformed coefficient."""
    kv = np.asarray(k, dtype=float)
    tol = tol_class(k, gm.C)
    zero = is_zero_mode(k)

    def divisor(I):
        return np.zeros(np.shape(I)[:-1]) if zero else gm.g(I) @ kv

    def ddiv(I):
        return np.zeros(np.shape(I)) if zero else divisor_gradient(gm, kv, I)

    if isinstance(kind, FiniteTime):
        T = kind.T

        def value(I):
            return finite_time_coeff(fk(I), divisor(I), T, tol)

        def gradient(I):
            x = divisor(I) * T
            return (fk.grad(I, h) * _phase_average(x)[..., None]
                    + (fk(I) * _phase_average_derivative(x) * T)[..., None] * ddiv(I))

    elif isinstance(kind, (Damped, StochasticDamped)):
        mu = kind.mu
        damping = mu + (kind.nu * norm2(k) ** 2 if isinstance(kind, StochasticDamped) else 0.0)

        def value(I):
            if isinstance(kind, StochasticDamped):
                return stochastic_damped_coeff(fk(I), divisor(I), mu, kind.nu, k)
            return damped_coeff(fk(I), divisor(I), mu)

        def gradient(I):
            den = 1j * divisor(I) - damping
            return -mu * (fk.grad(I, h) / den[..., None]
                          - (fk(I) * 1j / den**2)[..., None] * ddiv(I))

    elif isinstance(kind, LimitAverage):

        def value(I):
            return limit_average_coeff(fk(I), divisor(I), tol)

        def gradient(I):
            res = np.abs(divisor(I)) <= tol
            return np.where(res[..., None], fk.grad(I, h), 0.0)

    else:
        raise TypeError(f"unknown averaging kind {kind!r}")
    return value, gradient


def transform(f: PhaseSpaceFunction, gm: FrequencyModel, kind: AverageKind) -> AveragedField:
    """Apply one averaging transform mode by mode.

    Gradients of the derived coefficients follow from the product and
    quotient rules with ``d(k.g)/dI = (dg/dI)^T k``.  A source coefficient
    without an analytic gradient gives a derived one without it too, so
    the finite-difference policy of the caller applies.
    """
    if gm.n != f.n:
        raise ValueError("frequency model and function have different dimensions")
    h = f.fd_step
    modes = {}
    for k, fk in f.modes.items():
        value, gradient = _mode_pieces(kind, k, fk, gm, h)
        modes[k] = CoefficientFn(value, gradient if fk.gradient is not None else None, fk.sup_norm, None)
    return AveragedField(modes, f.domain, f.truncation_radius, real=f.real,
                         name=f"{type(kind).__name__}({f.name})", kind=kind, source=f, model=gm)


def difference_field(avg: AveragedField) -> AveragedField:
    """Mode-wise ``avg - fbar``; vanishes on resonances for the finite-time and damped kinds."""
    if isinstance(avg.kind, LimitAverage) or avg.kind is None:
        raise ValueError("difference_field needs a finite-time, damped or stochastic average")
    if avg.difference:
        raise ValueError("field is already a difference field")
    gm, f = avg.model, avg.source
    h = f.fd_step
    modes = {}
    for k, ak in avg.modes.items():
        lv, lg = _mode_pieces(LimitAverage(), k, f.modes[k], gm, h)
        av, ag = ak.value, ak.gradient

        def value(I, av=av, lv=lv):
            return np.asarray(av(I)) - np.asarray(lv(I))

        def gradient(I, ag=ag, lg=lg):
            return ag(I) - lg(I)

        modes[k] = CoefficientFn(value, gradient if ag is not None else None, ak.sup_norm, None)
    return AveragedField(modes, avg.domain, avg.truncation_radius, real=avg.real,
                         name=f"{avg.name}-fbar", kind=avg.kind, source=f, model=gm, difference=True)
