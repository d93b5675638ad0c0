"""Upper bounds on the averaging errors, lower-bound constants, elementary inequalities.

Notation: ``C = sup |g|``, ``D`` bounds the Jacobian entries, ``m`` and
``M`` bracket ``|det dg/dI|``, ``lam`` is a Lipschitz constant of ``g``.
Only nonzero modes enter the upper bounds (``k = 0`` is invariant under
every average).
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
from scipy.special import sici
from scipy.stats import norm as normal_dist
from scipy.stats import qmc

from .errors import BoundDomainWarning, DomainError, InequalityFailure, NotAWitnessError
from .fourier_core import FrequencyModel, Mode, PhaseSpaceFunction, ResonancePoint, as_mode, is_zero_mode, norm2


@dataclass(frozen=True)
class BoundInputs:
    """Model constants plus ``(sup |f_k|, [sup |d f_k / d I_j|]_j)`` per mode."""

    gm: FrequencyModel
    mode_data: Dict[Mode, Tuple[float, np.ndarray]]
    n: int

    def __post_init__(self):
        for k, (sup, grads) in self.mode_data.items():
            if len(k) != self.n:
                raise ValueError(f"mode {k} has wrong dimension")
            if sup < 0 or np.any(np.asarray(grads) < 0):
                raise ValueError(f"negative sup for mode {k}")

    @classmethod
    def from_function(cls, gm: FrequencyModel, f: PhaseSpaceFunction, nodes_per_dim: int = 64) -> "BoundInputs":
        """Take certified sups from ``f``; gradient sups missing there are grid-estimated."""
        data = {}
        pts = None
        for k, ck in f.modes.items():
            grads = ck.grad_sup_norms
            if grads is None:
                if pts is None:
                    pts = f.domain.grid_points(max(8, int(round(nodes_per_dim ** (2.0 / f.n)))))
                grads = np.max(np.abs(ck.grad(pts, f.fd_step)), axis=0)
            data[k] = (float(ck.sup_norm), np.asarray(grads, dtype=float).reshape(f.n))
        return cls(gm, data, f.n)

    def nonzero(self):
        return [(k, s, g) for k, (s, g) in sorted(self.mode_data.items()) if not is_zero_mode(k)]


def _floored_log(arg: float, what: str) -> float:
    if arg <= 1.0:
        warnings.warn(f"{what}: log argument {arg:.6g} <= 1, log term floored at 0", BoundDomainWarning,
                      stacklevel=3)
        return 0.0
    return math.log(arg)


def bound_finite_time(bi: BoundInputs, T: float, statement_form: bool = False) -> float:
    """``sum_k 4 |f_k| C^(n-1) / (m |k| T) (3 + log(|k| T C))``.

    ``statement_form=True`` drops the ``1/|k|`` factor.
    """
    if not T > 0:
        raise ValueError("T must be positive")
    gm = bi.gm
    pre = 4.0 * gm.C ** (bi.n - 1) / gm.m
    total = 0.0
    for k, sup, _ in bi.nonzero():
        kn = norm2(k)
        L = _floored_log(kn * T * gm.C, "finite-time bound")
        per = pre * sup * (3.0 + L) / T
        total += per if statement_form else per / kn
    return total


def bound_stochastic(bi: BoundInputs, mu: float, nu: float) -> float:
    """``sum_k 2 C^(n-1)/m |f_k| (mu/|k|) (1 + log(|k| C / (mu + nu |k|^2)))``."""
    if not mu > 0:
        raise ValueError("mu must be positive")
    if not nu >= 0:
        raise ValueError("nu must be nonnegative")
    gm = bi.gm
    pre = 2.0 * gm.C ** (bi.n - 1) / gm.m
    total = 0.0
    for k, sup, _ in bi.nonzero():
        kn = norm2(k)
        L = _floored_log(kn * gm.C / (mu + nu * kn * kn), "damped bound")
        total += pre * sup * (mu / kn) * (1.0 + L)
    return total


def bound_damped(bi: BoundInputs, mu: float) -> float:
    return bound_stochastic(bi, mu, 0.0)


def bound_w1(bi: BoundInputs, mu: float, nu: float) -> float:
    """Upper bound on ``|F^{mu,nu} - fbar|^1``.

    ``(2 C^(n-1)/m) sum_k [ mu (1 + log) ((1+n)|f_k| + sum_j |d_j f_k|)
    + n^2 pi D / 2 * mu / (mu + nu |k|^2) |f_k| ]``; the second term does
    not vanish unless ``mu / nu -> 0``.
    """
    if not (mu > 0 and nu > 0):
        raise ValueError("mu and nu must be positive")
    gm = bi.gm
    n = bi.n
    pre = 2.0 * gm.C ** (n - 1) / gm.m
    total = 0.0
    for k, sup, grads in bi.nonzero():
        kn = norm2(k)
        damp = mu + nu * kn * kn
        L = _floored_log(kn * gm.C / damp, "W1 bound")
        total += mu * (1.0 + L) * ((1 + n) * sup + float(np.sum(grads)))
        total += 0.5 * n * n * math.pi * gm.D * (mu / damp) * sup
    return pre * total


# ---------------------------------------------------------------- lower bounds

@dataclass(frozen=True)
class LowerBoundConstants:
    k: Mode
    I_bar: np.ndarray
    delta: float
    lambda1: float
    lambda2: float
    delta_tilde: float
    M: float
    capped: bool = False
    grad_sup_sum: float = 0.0

    @property
    def n(self) -> int:
        return len(self.k)

    @property
    def prefactor(self) -> float:
        """``(lambda1 lambda2 / M) delta_tilde^(n-1)``."""
        return self.lambda1 * self.lambda2 / self.M * self.delta_tilde ** (self.n - 1)


def sphere_directions(n: int, count: Optional[int] = None) -> np.ndarray:
    """Deterministic unit vectors: a Sobol set pushed to the sphere plus ``+-e_j``."""
    axes = np.vstack([np.eye(n), -np.eye(n)])
    if n == 1:
        return axes
    count = count or 1000 * n
    m = int(math.ceil(math.log2(count + 1)))
    # shift by half a cell so no coordinate sits at 0 or 1/2 (ppf of those is -inf or 0)
    pts = qmc.Sobol(d=n, scramble=False).random_base2(m)[:count] + 0.5 / 2**m
    z = normal_dist.ppf(pts)
    z /= np.linalg.norm(z, axis=1, keepdims=True)
    return np.vstack([z, axes])


def _ball_points(center: np.ndarray, delta: float, per_dim: int) -> np.ndarray:
    n = center.size
    ax = np.linspace(-delta, delta, per_dim)
    mesh = np.meshgrid(*([ax] * n), indexing="ij")
    offs = np.stack([x.ravel() for x in mesh], axis=-1)
    offs = offs[np.linalg.norm(offs, axis=1) <= delta * (1 + 1e-12)]
    if n > 1:
        # sample the bounding sphere too: the minimum of |f_k| often sits there
        offs = np.vstack([offs, delta * sphere_directions(n, 200 * n)])
    return center + offs


def _constants_on_ball(gm, ck, I_bar, delta, per_dim, dirs):
    pts = _ball_points(I_bar, delta, per_dim)
    lam1 = float(np.min(np.abs(ck(pts))))
    jac = gm.jacobian(pts)  # (N, n, n); J^T u has components sum_i J_ij u_i
    vals = np.abs(np.einsum("pij,di->pdj", jac, dirs)).sum(axis=-1)
    lam2 = float(np.min(vals))
    smin = float(np.min(np.linalg.svd(jac, compute_uv=False)[:, -1]))
    return lam1, lam2, smin


def estimate_lower_constants(gm: FrequencyModel, f: PhaseSpaceFunction, rp: ResonancePoint, delta: float,
                             per_dim: Optional[int] = None, directions: Optional[int] = None) -> LowerBoundConstants:
    """Constants of the non-convergence estimates around a witnessed resonance.

    ``lambda1 = min |f_k|`` and ``lambda2 = min_u |J^T u|_1`` over a dense
    grid of the closed ball ``B_delta(I_bar)``.  ``delta_tilde`` is the
    half-width of an axis box inside the image ball of radius
    ``delta * min sigma_min(J)``, i.e. ``delta sigma_min / sqrt(n)``
    (``delta / sqrt(n)`` for the linear model).  When the gradient sups of
    ``f_k`` are positive, ``delta`` is shrunk to at most
    ``lambda1 lambda2 / (2 lam sum_j |d_j f_k|)``.
    """
    if not delta > 0:
        raise ValueError("delta must be positive")
    k = as_mode(rp.k)
    if k not in f.modes:
        raise ValueError(f"mode {k} is not stored in f")
    I_bar = np.asarray(rp.I_bar, dtype=float)
    n = f.n
    dom = gm.domain
    if np.any(I_bar - delta <= dom.lower) or np.any(I_bar + delta >= dom.upper):
        raise DomainError(f"ball of radius {delta} around {I_bar} leaves the action box")
    ck = f.modes[k]
    if abs(complex(ck(I_bar[None, :])[0])) == 0.0:
        raise NotAWitnessError(f"f_{k} vanishes at {I_bar}")
    per_dim = per_dim or {1: 2001, 2: 81, 3: 21}.get(n, 9)
    dirs = sphere_directions(n, directions)
    grads = ck.grad_sup_norms
    if grads is None:
        pts = dom.grid_points(max(8, int(4096 ** (1.0 / n))))
        grads = np.max(np.abs(ck.grad(pts, f.fd_step)), axis=0)
    gsum = float(np.sum(grads))

    lam1, lam2, smin = _constants_on_ball(gm, ck, I_bar, delta, per_dim, dirs)
    if lam1 <= 0:
        raise NotAWitnessError(f"f_{k} vanishes in the ball of radius {delta} around {I_bar}")
    capped = False
    if gsum > 0:
        for _ in range(50):
            cap = lam1 * lam2 / (2.0 * gm.lam * gsum)
            if delta <= cap:
                break
            # shrinking the ball can only raise lambda1 and lambda2
            delta, capped = cap, True
            lam1, lam2, smin = _constants_on_ball(gm, ck, I_bar, delta, per_dim, dirs)
    return LowerBoundConstants(k, I_bar, float(delta), lam1, lam2, float(delta * smin / math.sqrt(n)),
                               float(gm.M), capped, gsum)


def lower_bound_w1_finite_time(lc: LowerBoundConstants, T: float) -> float:
    """``(lambda1 lambda2 / M) delta_tilde^(n-1) arcsinh(|k| T delta_tilde)``."""
    if not T > 0:
        raise ValueError("T must be positive")
    return lc.prefactor * math.asinh(norm2(lc.k) * T * lc.delta_tilde)


def lower_bound_w1_damped(lc: LowerBoundConstants, mu: float) -> float:
    """``(lambda1 lambda2 / M) delta_tilde^(n-1) arctan(|k| delta_tilde / mu)``.

    This is the capped-ball constant ``lambda1 lambda2 / (2M)`` times
    ``int_{-a}^{a} dy / (1 + y^2) = 2 arctan(a)``.
    """
    if not mu > 0:
        raise ValueError("mu must be positive")
    return lc.prefactor * math.atan(norm2(lc.k) * lc.delta_tilde / mu)


# ---------------------------------------------------------------- inequalities

_SERIES = [2.0 * (-1) ** m * (2 * m - 1) / math.factorial(2 * m) for m in range(2, 16)]


def quartic_gap_lhs(y) -> np.ndarray:
    """``2 + y^2 - 2 y sin y - 2 cos y``, by its Taylor series for ``|y| < 0.5``."""
    y = np.asarray(y, dtype=float)
    out = np.asarray(2.0 + y * y - 2.0 * y * np.sin(y) - 2.0 * np.cos(y))
    small = np.abs(y) < 0.5
    ys = y[small] ** 2
    acc = np.zeros_like(ys)
    for c in reversed(_SERIES):
        acc = acc * ys + c
    out[small] = acc * ys * ys
    return out


def quartic_gap_rhs(y) -> np.ndarray:
    y = np.asarray(y, dtype=float)
    return y**4 / (4.0 * (1.0 + y * y))


def quartic_gap_margin(y) -> np.ndarray:
    """``lhs - rhs`` without cancellation.

    For ``|y| < 0.5`` both sides start with ``y^4 / 4``; cancelling that
    term analytically leaves ``y^6 (sum_{m>=3} c_m y^(2m-6) + 1/(4(1+y^2)))``.
    """
    y = np.asarray(y, dtype=float)
    out = np.asarray(quartic_gap_lhs(y) - quartic_gap_rhs(y))
    small = np.abs(y) < 0.5
    ys = y[small] ** 2
    tail = np.zeros_like(ys)
    for c in reversed(_SERIES[1:]):
        tail = tail * ys + c
    out[small] = ys**3 * (tail + 0.25 / (1.0 + ys))
    return out


@dataclass
class CheckResult:
    name: str
    passed: bool
    detail: Dict[str, float] = field(default_factory=dict)


@dataclass
class InequalityReport:
    checks: List[CheckResult]
    l0: float
    l1: float

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)

    def __getitem__(self, name: str) -> CheckResult:
        for c in self.checks:
            if c.name == name:
                return c
        raise KeyError(name)


def _gl_integral(fn, a: float, b: float, panels: int, order: int = 16) -> float:
    x, w = np.polynomial.legendre.leggauss(order)
    edges = np.linspace(a, b, panels + 1)
    half = 0.5 * np.diff(edges)
    nodes = edges[:-1, None] + half[:, None] * (x[None, :] + 1)
    return float(np.sum(fn(nodes) * (half[:, None] * w[None, :])))


def l0_oracle() -> float:
    """``int_0^{2 pi} |sin y / y| dy = 2 Si(pi) - Si(2 pi)``."""
    return float(2.0 * sici(math.pi)[0] - sici(2 * math.pi)[0])


def inequality_suite(points: int = 200_001, y_max: float = 1000.0, raise_on_failure: bool = True) -> InequalityReport:
    """Check the elementary inequalities used by the lower-bound argument.

    (a) ``2 + y^2 - 2y sin y - 2cos y >= y^4 / (4(1+y^2))`` on a grid of
    ``[-y_max, y_max]`` (plus a log-spaced cluster near 0);
    (b) ``|exp(i t) - 1| = sqrt(2(1 - cos t))`` to 1e-12 on the same grid;
    (c) ``l0 = int_0^{2pi} |sin y / y| dy <= 3`` and ``l1 = arcsinh 1 <= 1``
    by quadrature.  With ``raise_on_failure`` a violation raises
    ``InequalityFailure`` carrying the offending ``y``.
    """
    if points < 3:
        raise ValueError("need at least 3 grid points")
    uniform = np.linspace(-y_max, y_max, points)
    near = np.logspace(-8, 0, 2001)
    y = np.unique(np.concatenate([uniform, near, -near, [0.0, math.pi, -math.pi]]))
    checks = []

    margin = quartic_gap_margin(y)
    # rounding allowance for the direct branch only
    slack = np.where(np.abs(y) < 0.5, 0.0, 8 * np.finfo(float).eps * (4.0 + y * y + 2 * np.abs(y)))
    i = int(np.argmin(margin + slack))
    a_ok = bool(margin[i] + slack[i] >= 0)
    checks.append(CheckResult("quartic_gap", a_ok, {"points": float(y.size), "worst_y": float(y[i]),
                                                    "worst_margin": float(margin[i])}))

    # 1 - cos t cancels near multiples of 2 pi; extended precision keeps the
    # rounding of both sides well below the 1e-12 tolerance on the uniform grid
    t = uniform.astype(np.longdouble)
    chord = np.abs(np.exp(1j * t.astype(np.clongdouble)) - 1)
    root = np.sqrt(2 * (1 - np.cos(t)))
    err = np.abs(chord - root).astype(float)
    j = int(np.argmax(err))
    b_ok = bool(err[j] <= 1e-12)
    checks.append(CheckResult("chord_identity", b_ok, {"points": float(t.size), "worst_y": float(t[j]),
                                                       "max_error": float(err[j])}))

    panels = max(1, points // 32)
    sinc_abs = lambda t: np.abs(np.sinc(t / math.pi))
    l0 = _gl_integral(sinc_abs, 0.0, math.pi, panels) + _gl_integral(sinc_abs, math.pi, 2 * math.pi, panels)
    l0_err = abs(l0 - l0_oracle())
    l1 = _gl_integral(lambda t: 1.0 / np.sqrt(1.0 + t * t), 0.0, 1.0, panels)
    l1_err = abs(l1 - math.asinh(1.0))
    c_ok = bool(l0 <= 3.0 and l1 <= 1.0 and l0_err <= 1e-6 and l1_err <= 1e-6)
    checks.append(CheckResult("log_constants", c_ok, {"l0": l0, "l0_error": l0_err, "l1": l1, "l1_error": l1_err}))

    report = InequalityReport(checks, l0, l1)
    if raise_on_failure:
        if not a_ok:
            raise InequalityFailure(f"quartic gap violated at y={y[i]}", witness=float(y[i]))
        if not b_ok:
            raise InequalityFailure(f"chord identity off by {err[j]:.3g} at t={t[j]}", witness=float(t[j]))
        if not c_ok:
            raise InequalityFailure(f"log constants out of range: l0={l0}, l1={l1}", witness=None)
    return report
