"""Action boxes, frequency maps and truncated Fourier functions on A x T^n.

A phase-space function is stored as a finite map from integer modes ``k``
to coefficient functions ``f_k(I)``::

    f(I, phi) = sum_k f_k(I) exp(i k . phi)

Every callable in this module is vectorized over leading axes: an action
array of shape ``(..., n)`` maps to coefficient values of shape ``(...)``
and gradients of shape ``(..., n)``.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from typing import Callable, Dict, Optional, Sequence, Tuple

import numpy as np

from .errors import DomainError

Mode = Tuple[int, ...]

TOL_RES = 1e-12
TOL_CLASS_SCALE = 1e-9
FD_STEP_SCALE = 1e-5


def as_mode(k) -> Mode:
    """Coerce a sequence of integers to a hashable mode tuple."""
    arr = np.atleast_1d(np.asarray(k))
    if arr.ndim != 1 or not np.all(np.equal(np.mod(arr, 1), 0)):
        raise ValueError(f"mode must be an integer vector, got {k!r}")
    return tuple(int(v) for v in arr)


def norm1(k) -> float:
    return float(sum(abs(int(v)) for v in k))


def norm2(k) -> float:
    return math.sqrt(sum(int(v) * int(v) for v in k))


def is_zero_mode(k) -> bool:
    return all(int(v) == 0 for v in k)


def tol_class(k, C: float) -> float:
    """Scale-aware threshold below which a divisor k.g(I) counts as resonant."""
    return TOL_CLASS_SCALE * norm2(k) * C


@dataclass(frozen=True)
class ActionDomain:
    """Open axis-aligned box ``A = prod_j (lower_j, upper_j)``."""

    lower: np.ndarray
    upper: np.ndarray
    quadrature_nodes_per_dim: int = 64

    def __post_init__(self):
        lo = np.atleast_1d(np.asarray(self.lower, dtype=float))
        hi = np.atleast_1d(np.asarray(self.upper, dtype=float))
        if lo.shape != hi.shape or lo.ndim != 1:
            raise ValueError("lower and upper must be 1-d arrays of equal length")
        if not np.all(np.isfinite(lo)) or not np.all(np.isfinite(hi)):
            raise ValueError("action box must be bounded")
        if not np.all(lo < hi):
            raise ValueError(f"empty action box: lower={lo}, upper={hi}")
        if int(self.quadrature_nodes_per_dim) < 1:
            raise ValueError("quadrature_nodes_per_dim must be positive")
        lo.setflags(write=False)
        hi.setflags(write=False)
        object.__setattr__(self, "lower", lo)
        object.__setattr__(self, "upper", hi)

    @classmethod
    def cube(cls, n: int, lo: float = -1.0, hi: float = 1.0, **kw) -> "ActionDomain":
        return cls(np.full(n, lo), np.full(n, hi), **kw)

    @property
    def n(self) -> int:
        return self.lower.size

    @property
    def widths(self) -> np.ndarray:
        return self.upper - self.lower

    @property
    def diameter(self) -> float:
        return float(np.linalg.norm(self.widths))

    @property
    def volume(self) -> float:
        return float(np.prod(self.widths))

    @property
    def center(self) -> np.ndarray:
        return 0.5 * (self.lower + self.upper)

    def contains(self, I) -> np.ndarray:
        I = np.asarray(I, dtype=float)
        return np.all((I > self.lower) & (I < self.upper), axis=-1)

    def check(self, I) -> np.ndarray:
        I = np.asarray(I, dtype=float)
        if I.shape[-1:] != (self.n,):
            raise DomainError(f"action has shape {I.shape}, expected (..., {self.n})")
        inside = self.contains(I)
        if not np.all(inside):
            bad = I[~inside] if I.ndim > 1 else I
            raise DomainError(f"action {np.asarray(bad).reshape(-1, self.n)[0]} outside open box A")
        return I

    def with_nodes(self, nodes_per_dim: int) -> "ActionDomain":
        return ActionDomain(self.lower, self.upper, nodes_per_dim)

    def grid_points(self, nodes_per_dim: Optional[int] = None) -> np.ndarray:
        """Cell-centred tensor grid of shape ``(N, n)`` strictly inside the box."""
        m = int(nodes_per_dim or self.quadrature_nodes_per_dim)
        axes = [lo + (np.arange(m) + 0.5) * (hi - lo) / m for lo, hi in zip(self.lower, self.upper)]
        mesh = np.meshgrid(*axes, indexing="ij")
        return np.stack([x.ravel() for x in mesh], axis=-1)


@dataclass(frozen=True)
class FrequencyModel:
    """Frequency map ``g = grad h`` with constants certified over ``domain``.

    ``C`` bounds ``|g|``, ``D`` bounds every Jacobian entry, ``m`` and ``M``
    bracket ``|det dg/dI|`` and ``lam`` is a Lipschitz constant of ``g``.
    """

    g: Callable[[np.ndarray], np.ndarray]
    jacobian: Callable[[np.ndarray], np.ndarray]
    C: float
    D: float
    m: float
    M: float
    lam: float
    domain: ActionDomain
    name: str = "user"

    def __post_init__(self):
        if self.C < 0 or self.D < 0:
            raise ValueError("C and D must be nonnegative")
        if not (self.m > 0 and self.M > 0 and self.lam > 0):
            raise ValueError("m, M and lam must be positive")
        if self.m > self.M:
            raise ValueError("m must not exceed M")

    @property
    def n(self) -> int:
        return self.domain.n

    def check_constants(self, nodes_per_dim: int = 32, pairs: int = 2000, seed: int = 0) -> Dict[str, float]:
        """Measure the certified constants on a grid.

        Returns the observed extremes; a consistent model has
        ``max_norm <= C``, ``max_entry <= D``, ``m <= min_det``,
        ``max_det <= M`` and ``max_lipschitz <= lam``.
        """
        pts = self.domain.grid_points(nodes_per_dim)
        gv = self.g(pts)
        jac = self.jacobian(pts)
        dets = np.abs(np.linalg.det(jac))
        rng = np.random.default_rng(seed)
        a = self.domain.lower + rng.random((pairs, self.n)) * self.domain.widths
        b = self.domain.lower + rng.random((pairs, self.n)) * self.domain.widths
        ratio = np.linalg.norm(self.g(a) - self.g(b), axis=-1) / np.linalg.norm(a - b, axis=-1)
        return {
            "max_norm": float(np.max(np.linalg.norm(gv, axis=-1))),
            "max_entry": float(np.max(np.abs(jac))),
            "min_det": float(np.min(dets)),
            "max_det": float(np.max(dets)),
            "max_lipschitz": float(np.max(ratio)),
        }


def affine_model(matrix, offset=None, domain: Optional[ActionDomain] = None, name: str = "affine") -> FrequencyModel:
    """``g(I) = matrix @ I + offset`` with exactly computable constants."""
    A = np.atleast_2d(np.asarray(matrix, dtype=float))
    n = A.shape[0]
    if A.shape != (n, n):
        raise ValueError("matrix must be square")
    b = np.zeros(n) if offset is None else np.asarray(offset, dtype=float).reshape(n)
    if domain is None:
        domain = ActionDomain.cube(n)
    if domain.n != n:
        raise ValueError("domain dimension does not match matrix")
    det = abs(float(np.linalg.det(A)))
    if det == 0.0:
        raise ValueError("affine frequency map must be invertible")
    # |g| is convex, so its sup over the box is attained at a vertex
    corners = np.array(list(itertools.product(*zip(domain.lower, domain.upper))))
    C = float(np.max(np.linalg.norm(corners @ A.T + b, axis=-1)))

    def g(I):
        return np.asarray(I, dtype=float) @ A.T + b

    def jacobian(I):
        I = np.asarray(I, dtype=float)
        return np.broadcast_to(A, I.shape[:-1] + (n, n)).copy()

    return FrequencyModel(
        g=g,
        jacobian=jacobian,
        C=C,
        D=float(np.max(np.abs(A))),
        m=det,
        M=det,
        lam=float(np.linalg.norm(A, 2)),
        domain=domain,
        name=name,
    )


def linear_model(n: int = 1, domain: Optional[ActionDomain] = None) -> FrequencyModel:
    """Default model: ``g(I) = I`` on ``(-1, 1)^n``; C = sqrt(n), D = m = M = lam = 1."""
    return affine_model(np.eye(n), domain=domain or ActionDomain.cube(n), name="linear")


@dataclass(frozen=True)
class CoefficientFn:
    """One Fourier coefficient ``f_k(I)`` with optional analytic gradient.

    ``sup_norm`` is ``sup_A |f_k|`` (certified or grid-estimated) and
    ``grad_sup_norms[j]`` is ``sup_A |d f_k / d I_j|``.
    """

    value: Callable[[np.ndarray], np.ndarray]
    gradient: Optional[Callable[[np.ndarray], np.ndarray]] = None
    sup_norm: float = 0.0
    grad_sup_norms: Optional[np.ndarray] = None

    def __call__(self, I) -> np.ndarray:
        return np.asarray(self.value(np.asarray(I, dtype=float)), dtype=complex)

    def grad(self, I, h: Optional[float] = None) -> np.ndarray:
        """Analytic gradient if present, else central differences with step ``h``."""
        I = np.asarray(I, dtype=float)
        if self.gradient is not None:
            return np.asarray(self.gradient(I), dtype=complex)
        if h is None:
            raise ValueError("no analytic gradient and no finite-difference step given")
        return fd_gradient(self.value, I, h)

    def conjugate(self) -> "CoefficientFn":
        value, gradient = self.value, self.gradient
        return CoefficientFn(
            value=lambda I: np.conj(value(I)),
            gradient=None if gradient is None else (lambda I: np.conj(gradient(I))),
            sup_norm=self.sup_norm,
            grad_sup_norms=self.grad_sup_norms,
        )

    def scaled(self, c: complex) -> "CoefficientFn":
        value, gradient = self.value, self.gradient
        return CoefficientFn(
            value=lambda I: c * np.asarray(value(I), dtype=complex),
            gradient=None if gradient is None else (lambda I: c * np.asarray(gradient(I), dtype=complex)),
            sup_norm=abs(c) * self.sup_norm,
            grad_sup_norms=None if self.grad_sup_norms is None else abs(c) * np.asarray(self.grad_sup_norms),
        )


def fd_gradient(fn, I: np.ndarray, h: float) -> np.ndarray:
    I = np.asarray(I, dtype=float)
    n = I.shape[-1]
    out = np.empty(I.shape, dtype=complex)
    for j in range(n):
        e = np.zeros(n)
        e[j] = h
        out[..., j] = (np.asarray(fn(I + e), dtype=complex) - np.asarray(fn(I - e), dtype=complex)) / (2 * h)
    return out


def constant_coefficient(c: complex, n: int) -> CoefficientFn:
    c = complex(c)

    def value(I):
        return np.full(np.shape(I)[:-1], c, dtype=complex)

    def gradient(I):
        return np.zeros(np.shape(I), dtype=complex)

    return CoefficientFn(value, gradient, abs(c), np.zeros(n))


def affine_coefficient(c0: complex, slope, domain: ActionDomain) -> CoefficientFn:
    """``c0 + slope . I`` with exact sups over the box (attained at vertices)."""
    slope = np.asarray(slope, dtype=complex).reshape(domain.n)
    c0 = complex(c0)

    def value(I):
        return c0 + np.asarray(I, dtype=float) @ slope

    def gradient(I):
        return np.broadcast_to(slope, np.shape(I)).astype(complex)

    corners = np.array(list(itertools.product(*zip(domain.lower, domain.upper))))
    sup = float(np.max(np.abs(value(corners))))
    return CoefficientFn(value, gradient, sup, np.abs(slope))


@dataclass(frozen=True)
class PhaseSpaceFunction:
    """Truncated Fourier representation ``{k: f_k}`` on ``domain x T^n``."""

    modes: Dict[Mode, CoefficientFn]
    domain: ActionDomain
    truncation_radius: int
    real: bool = False
    name: str = ""
    _mode_keys: Tuple[Mode, ...] = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        modes = {as_mode(k): v for k, v in self.modes.items()}
        n = self.domain.n
        K = int(self.truncation_radius)
        if K < 1:
            raise ValueError("truncation_radius must be a positive integer")
        for k in modes:
            if len(k) != n:
                raise ValueError(f"mode {k} has wrong dimension (n={n})")
            if max(abs(v) for v in k) > K:
                raise ValueError(f"mode {k} exceeds truncation radius {K}")
        object.__setattr__(self, "modes", modes)
        object.__setattr__(self, "_mode_keys", tuple(sorted(modes)))
        if self.real:
            self._check_reality()

    def _check_reality(self, nodes_per_dim: int = 5):
        pts = self.domain.grid_points(nodes_per_dim)
        for k, fk in self.modes.items():
            mk = tuple(-v for v in k)
            if mk not in self.modes:
                raise ValueError(f"real-flagged function lacks mode {mk} paired with {k}")
            a = fk(pts)
            b = np.conj(self.modes[mk](pts))
            scale = max(fk.sup_norm, 1.0)
            if not np.allclose(a, b, rtol=0.0, atol=1e-12 * scale):
                raise ValueError(f"reality symmetry violated between modes {k} and {mk}")

    @property
    def n(self) -> int:
        return self.domain.n

    @property
    def mode_list(self) -> Tuple[Mode, ...]:
        return self._mode_keys

    @property
    def fd_step(self) -> float:
        return FD_STEP_SCALE * self.domain.diameter

    def sup_sum(self) -> float:
        """Computable ``|f|^inf`` upper certificate: sum of coefficient sups."""
        return float(sum(c.sup_norm for c in self.modes.values()))

    def max_mode_norm(self) -> float:
        return max((norm2(k) for k in self.modes if not is_zero_mode(k)), default=0.0)

    def min_mode_norm(self) -> float:
        return min((norm2(k) for k in self.modes if not is_zero_mode(k)), default=0.0)

    def coefficient_matrix(self, I: np.ndarray) -> np.ndarray:
        """Values of every stored coefficient at ``I``; shape ``I.shape[:-1] + (n_modes,)``."""
        I = np.asarray(I, dtype=float)
        return np.stack([self.modes[k](I) for k in self.mode_list], axis=-1)


def evaluate(f: PhaseSpaceFunction, I, phi) -> complex:
    """``f(I, phi)``; returns a float when ``f`` is flagged real.

    Raises ``DomainError`` if ``I`` is not in the open box.
    """
    I = f.domain.check(np.asarray(I, dtype=float))
    phi = np.asarray(phi, dtype=float)
    if phi.shape[-1:] != (f.n,):
        raise ValueError(f"angle has shape {phi.shape}, expected (..., {f.n})")
    modes = np.array(f.mode_list, dtype=float)
    coeffs = f.coefficient_matrix(I)
    phases = np.exp(1j * (phi @ modes.T))
    total = np.sum(coeffs * phases, axis=-1)
    if f.real:
        total = total.real
    if np.ndim(total) == 0:
        return float(total) if f.real else complex(total)
    return total


def small_divisor(gm: FrequencyModel, k, I) -> np.ndarray:
    """``k . g(I)``; raises ``ValueError`` on the zero mode."""
    k = as_mode(k)
    if is_zero_mode(k):
        raise ValueError("small divisor is undefined for the zero mode")
    I = gm.domain.check(np.asarray(I, dtype=float))
    d = gm.g(I) @ np.asarray(k, dtype=float)
    return float(d) if np.ndim(d) == 0 else d


def divisor_gradient(gm: FrequencyModel, k, I) -> np.ndarray:
    """``d(k.g)/dI = (dg/dI)^T k``, shape ``I.shape``."""
    return np.einsum("...ij,i->...j", gm.jacobian(np.asarray(I, dtype=float)), np.asarray(k, dtype=float))


@dataclass(frozen=True)
class ResonancePoint:
    k: Mode
    I_bar: np.ndarray
    divisor_residual: float
    coeff_magnitude: float


def _bisect_root(fun, a: np.ndarray, b: np.ndarray, fa: float, tol: float):
    """Bisect ``fun`` on the segment [a, b] given a sign change; returns (point, |fun|)."""
    best_x, best_f = (a, fa) if abs(fa) <= abs(fun(b)) else (b, fun(b))
    for _ in range(200):
        mid = 0.5 * (a + b)
        if np.array_equal(mid, a) or np.array_equal(mid, b):
            break
        fm = fun(mid)
        if abs(fm) < abs(best_f):
            best_x, best_f = mid, fm
        if abs(fm) <= tol:
            return mid, abs(fm)
        if (fm < 0) == (fa < 0):
            a, fa = mid, fm
        else:
            b = mid
    return best_x, abs(best_f)


def find_resonance(
    gm: FrequencyModel,
    f: PhaseSpaceFunction,
    k,
    search_box: Optional[ActionDomain] = None,
    tol_res: float = TOL_RES,
) -> Optional[ResonancePoint]:
    """Locate a point of R_k by scanning grid lines for a sign change of k.g.

    Lines run parallel to each coordinate axis through the nodes of
    ``search_box``'s grid, starting with the lines closest to its centre.
    Among sign changes, the first one whose coefficient ``|f_k|`` is
    positive is returned; ``None`` if k.g never changes sign.
    """
    k = as_mode(k)
    if is_zero_mode(k):
        raise ValueError("resonances are defined for nonzero modes only")
    if k not in f.modes:
        raise ValueError(f"mode {k} is not stored in f")
    box = search_box or gm.domain
    kv = np.asarray(k, dtype=float)
    fk = f.modes[k]
    m = box.quadrature_nodes_per_dim
    n = box.n
    axes = [lo + (np.arange(m) + 0.5) * (hi - lo) / m for lo, hi in zip(box.lower, box.upper)]

    def divisor(x):
        return float(gm.g(np.asarray(x, dtype=float)[None, :])[0] @ kv)

    fallback = None
    for axis in range(n):
        others = [j for j in range(n) if j != axis]
        # order the transverse line offsets by distance from the box centre
        offsets = [sorted(range(m), key=lambda i: abs(i - (m - 1) / 2.0)) for _ in others]
        # grid nodes plus points just inside both faces
        line_pts = np.concatenate(([box.lower[axis] + 1e-6 * box.widths[axis]], axes[axis],
                                   [box.upper[axis] - 1e-6 * box.widths[axis]]))
        for idx in itertools.product(*offsets):
            base = np.empty(n)
            for j, i in zip(others, idx):
                base[j] = axes[j][i]
            pts = np.repeat(base[None, :], line_pts.size, axis=0)
            pts[:, axis] = line_pts
            d = gm.g(pts) @ kv
            for a_i in range(d.size - 1):
                da, db = d[a_i], d[a_i + 1]
                if da == 0.0:
                    x, res = pts[a_i], 0.0
                elif np.sign(da) != np.sign(db) and db != 0.0:
                    x, res = _bisect_root(divisor, pts[a_i].copy(), pts[a_i + 1].copy(), float(da), tol_res)
                else:
                    continue
                mag = float(np.abs(fk(x[None, :])[0]))
                rp = ResonancePoint(k, np.array(x, dtype=float), float(res), mag)
                if mag > 0:
                    return rp
                if fallback is None:
                    fallback = rp
            if d[-1] == 0.0:
                x = pts[-1]
                mag = float(np.abs(fk(x[None, :])[0]))
                rp = ResonancePoint(k, np.array(x), 0.0, mag)
                if mag > 0:
                    return rp
                fallback = fallback or rp
    return fallback


def lattice(n: int, K: int, include_zero: bool = True):
    """All integer modes with ``max_j |k_j| <= K`` in lexicographic order."""
    for k in itertools.product(range(-K, K + 1), repeat=n):
        if include_zero or any(k):
            yield k


def default_test_function(domain: Optional[ActionDomain] = None, K: Optional[int] = None, n: int = 1) -> PhaseSpaceFunction:
    """``f_k(I) = exp(-|k|_1) (1 + I_1 / 2)`` for every ``|k|_inf <= K``.

    Real coefficients make the function real-symmetric; every R_k(f)
    meets the default box wherever 1 + I_1/2 > 0.
    """
    domain = domain or ActionDomain.cube(n)
    n = domain.n
    if K is None:
        K = 8 if n <= 2 else 4
    modes = {}
    for k in lattice(n, K):
        c = math.exp(-norm1(k))
        slope = np.zeros(n)
        slope[0] = 0.5 * c
        modes[k] = affine_coefficient(c, slope, domain)
    return PhaseSpaceFunction(modes, domain, K, real=True, name="default")


def cosine_function(domain: Optional[ActionDomain] = None, n: int = 1, amplitude: float = 1.0) -> PhaseSpaceFunction:
    """``amplitude * cos(phi_1)``: modes ``+-e_1`` with coefficient ``amplitude / 2``."""
    domain = domain or ActionDomain.cube(n)
    n = domain.n
    e = [0] * n
    e[0] = 1
    modes = {
        tuple(e): constant_coefficient(amplitude / 2, n),
        tuple(-v for v in e): constant_coefficient(amplitude / 2, n),
    }
    return PhaseSpaceFunction(modes, domain, 1, real=True, name="cosine")


def single_mode_function(
    k,
    value: Callable,
    domain: ActionDomain,
    gradient: Optional[Callable] = None,
    sup_norm: Optional[float] = None,
    grad_sup_norms: Optional[Sequence[float]] = None,
) -> PhaseSpaceFunction:
    """Complex function with one stored mode; sups are grid-estimated when omitted."""
    k = as_mode(k)
    if sup_norm is None:
        pts = domain.grid_points(max(8, int(4096 ** (1.0 / domain.n))))
        sup_norm = float(np.max(np.abs(value(pts))))
    coeff = CoefficientFn(value, gradient, sup_norm,
                          None if grad_sup_norms is None else np.asarray(grad_sup_norms, dtype=float))
    K = max(1, max(abs(v) for v in k))
    return PhaseSpaceFunction({k: coeff}, domain, K, real=False)
