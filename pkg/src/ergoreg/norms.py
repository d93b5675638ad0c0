"""Quadrature over the action box and the three Fourier norms.

For ``u = sum_k u_k(I) exp(i k.phi)``:

    |u|^inf = sum_k sup_A |u_k|
    |u|^0   = sum_k int_A |u_k| dI
    |u|^1   = |u|^0 + sum_k sum_j int_A (|d u_k / d I_j| + |k_j u_k|) dI

Integrals are unnormalized (they scale with the volume of ``A``).
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import Callable, Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
from scipy.optimize import minimize_scalar

from .averaging import AveragedField, Damped, FiniteTime, StochasticDamped
from .errors import ConfigError, QuadratureError, ResolutionWarning
from .fourier_core import (
    ActionDomain,
    Mode,
    PhaseSpaceFunction,
    divisor_gradient,
    find_resonance,
    is_zero_mode,
    norm2,
    tol_class,
)

MAX_TOTAL_NODES = 2**20
MIN_NODES = 64
NODES_PER_WAVELENGTH = 8
_PANEL = 8

SCHEMES = ("midpoint", "gauss_legendre")


def _axis_rule(lo: float, hi: float, count: int, scheme: str) -> Tuple[np.ndarray, np.ndarray]:
    """Nodes and weights of a 1-d rule on (lo, hi)."""
    if scheme == "midpoint":
        h = (hi - lo) / count
        return lo + (np.arange(count) + 0.5) * h, np.full(count, h)
    if scheme == "gauss_legendre":
        if count <= 2 * _PANEL:
            x, w = np.polynomial.legendre.leggauss(count)
            return lo + 0.5 * (x + 1) * (hi - lo), 0.5 * (hi - lo) * w
        panels = count // _PANEL
        x, w = np.polynomial.legendre.leggauss(_PANEL)
        edges = np.linspace(lo, hi, panels + 1)
        half = 0.5 * np.diff(edges)
        nodes = (edges[:-1, None] + half[:, None] * (x[None, :] + 1)).ravel()
        weights = (half[:, None] * w[None, :]).ravel()
        return nodes, weights
    raise ValueError(f"unknown quadrature scheme {scheme!r}; expected one of {SCHEMES}")


def _legal_count(count: int, scheme: str) -> int:
    count = max(1, int(count))
    if scheme == "gauss_legendre" and count > 2 * _PANEL:
        # whole panels, and an even panel count so one coarsening keeps panels aligned
        return 2 * _PANEL * math.ceil(count / (2 * _PANEL))
    return count


@dataclass(frozen=True)
class QuadratureGrid:
    """Tensor-product rule on an open box; every node is strictly interior."""

    nodes: np.ndarray
    weights: np.ndarray
    scheme: str
    counts: Tuple[int, ...]
    domain: ActionDomain

    @property
    def nodes_per_dim(self) -> int:
        return max(self.counts)

    @property
    def size(self) -> int:
        return self.weights.size

    @property
    def axes(self) -> List[np.ndarray]:
        return [_axis_rule(lo, hi, c, self.scheme)[0]
                for lo, hi, c in zip(self.domain.lower, self.domain.upper, self.counts)]

    def coarsened(self) -> "QuadratureGrid":
        return make_grid(self.domain, [max(1, c // 2) for c in self.counts], self.scheme)

    def refined(self) -> "QuadratureGrid":
        return make_grid(self.domain, [2 * c for c in self.counts], self.scheme)


def make_grid(domain: ActionDomain, nodes_per_dim: Union[int, Sequence[int], None] = None,
              scheme: str = "gauss_legendre") -> QuadratureGrid:
    """Tensor grid with ``nodes_per_dim`` nodes per axis (int or per-axis sequence)."""
    if nodes_per_dim is None:
        nodes_per_dim = domain.quadrature_nodes_per_dim
    counts = [nodes_per_dim] * domain.n if np.isscalar(nodes_per_dim) else list(nodes_per_dim)
    if len(counts) != domain.n:
        raise ValueError("nodes_per_dim has the wrong length")
    if any(int(c) < 1 for c in counts):
        raise ValueError("nodes_per_dim must be positive")
    counts = tuple(_legal_count(c, scheme) for c in counts)
    rules = [_axis_rule(lo, hi, c, scheme) for lo, hi, c in zip(domain.lower, domain.upper, counts)]
    mesh = np.meshgrid(*[r[0] for r in rules], indexing="ij")
    wmesh = np.meshgrid(*[r[1] for r in rules], indexing="ij")
    nodes = np.stack([x.ravel() for x in mesh], axis=-1)
    weights = np.prod(np.stack([w.ravel() for w in wmesh], axis=-1), axis=-1)
    return QuadratureGrid(nodes, weights, scheme, counts, domain)


def _weighted_sum(values: np.ndarray, grid: QuadratureGrid) -> float:
    if not np.all(np.isfinite(values)):
        bad = int(np.flatnonzero(~np.isfinite(values))[0])
        raise QuadratureError(f"non-finite integrand at node {grid.nodes[bad]}", node=grid.nodes[bad])
    # np.sum on a contiguous array reduces pairwise in a fixed order
    return float(np.sum(grid.weights * values))


def integrate(fn: Callable[[np.ndarray], np.ndarray], grid: QuadratureGrid) -> float:
    """``sum_i w_i fn(x_i)``; ``fn`` takes an ``(N, n)`` array."""
    return _weighted_sum(np.asarray(fn(grid.nodes), dtype=float), grid)


def integrate_refined(fn: Callable[[np.ndarray], np.ndarray], grid: QuadratureGrid) -> Tuple[float, float]:
    """Integral on ``grid`` and the two-level estimate ``|Q(grid) - Q(grid / 2)|``."""
    fine = integrate(fn, grid)
    coarse = integrate(fn, grid.coarsened())
    return fine, abs(fine - coarse)


def _model_stretch(u: PhaseSpaceFunction) -> float:
    """Largest Jacobian operator norm on a probe grid (1 without a model)."""
    gm = getattr(u, "model", None)
    if gm is None:
        return 1.0
    pts = u.domain.grid_points(max(2, int(round(4096 ** (1.0 / u.n)))))
    return float(np.max(np.linalg.norm(gm.jacobian(pts), ord=2, axis=(-2, -1))))


def resolution_nodes(u: PhaseSpaceFunction, scheme: str = "gauss_legendre") -> int:
    """Nodes per axis that resolve the narrowest feature of ``u``'s coefficients.

    Finite-time averages oscillate on the scale ``2 pi / (|k| T)`` in the
    divisor; damped ones have a peak of width ``(mu + nu |k|^2) / |k|``.
    The count is capped so the full grid has at most ``2^20`` nodes.
    """
    kind = getattr(u, "kind", None)
    kmax = u.max_mode_norm()
    diam = u.domain.diameter
    stretch = _model_stretch(u)
    want = MIN_NODES
    if kmax > 0 and isinstance(kind, FiniteTime):
        want = max(want, NODES_PER_WAVELENGTH * kmax * stretch * kind.T * diam / (2 * math.pi))
    elif kmax > 0 and isinstance(kind, (Damped, StochasticDamped)):
        nu = kind.nu if isinstance(kind, StochasticDamped) else 0.0
        inv_width = max(norm2(k) * stretch / (kind.mu + nu * norm2(k) ** 2)
                        for k in u.modes if not is_zero_mode(k))
        want = max(want, NODES_PER_WAVELENGTH * diam * inv_width)
    count = _legal_count(math.ceil(want), scheme)
    cap = int(math.floor(MAX_TOTAL_NODES ** (1.0 / u.n) + 1e-9))
    if count > cap:
        capped = _legal_count(cap, scheme)
        if capped > cap:
            capped -= 2 * _PANEL if scheme == "gauss_legendre" else 0
        warnings.warn(f"quadrature needs {count} nodes per axis; capped at {capped}", ResolutionWarning,
                      stacklevel=2)
        count = capped
    return count


def resolution_grid(u: PhaseSpaceFunction, scheme: str = "gauss_legendre") -> QuadratureGrid:
    return make_grid(u.domain, resolution_nodes(u, scheme), scheme)


# ---------------------------------------------------------------- sup norm

def _witness_points(u: PhaseSpaceFunction, k: Mode) -> List[np.ndarray]:
    """Points at and just off a resonance of mode ``k``, if ``u`` carries a model."""
    gm = getattr(u, "model", None)
    src = getattr(u, "source", None)
    if gm is None or src is None or is_zero_mode(k) or k not in src.modes:
        return []
    rp = find_resonance(gm, src, k)
    if rp is None:
        return []
    I0 = rp.I_bar
    grad = divisor_gradient(gm, k, I0[None, :])[0]
    g2 = float(grad @ grad)
    pts = [I0]
    if g2 > 0:
        tol = tol_class(k, gm.C)
        for mult in (10.0, 1e3, 1e5):
            for sgn in (1.0, -1.0):
                pts.append(I0 + sgn * mult * tol * grad / g2)
    return [p for p in pts if u.domain.contains(p)]


def _refine_sup(fn, x0: np.ndarray, f0: float, domain: ActionDomain, spacing: np.ndarray,
                sweeps: int = 2) -> Tuple[np.ndarray, float]:
    """Coordinate-wise bounded Brent ascent within one cell of ``x0``."""
    x, best = x0.copy(), f0
    inner = 1e-12 * domain.widths
    for _ in range(sweeps):
        for j in range(domain.n):
            lo = max(x[j] - spacing[j], domain.lower[j] + inner[j])
            hi = min(x[j] + spacing[j], domain.upper[j] - inner[j])
            if not lo < hi:
                continue

            def neg(t, j=j):
                y = x.copy()
                y[j] = t
                return -fn(y)

            res = minimize_scalar(neg, bounds=(lo, hi), method="bounded",
                                  options={"xatol": 1e-12 * domain.widths[j]})
            for t, val in ((res.x, -res.fun), (lo, -neg(lo)), (hi, -neg(hi))):
                if val > best:
                    best = val
                    x = x.copy()
                    x[j] = t
    return x, best


@dataclass(frozen=True)
class SupEstimate:
    value: float
    argmax: np.ndarray
    boundary: bool


def mode_sup(u: PhaseSpaceFunction, k: Mode, grid: QuadratureGrid, refine: bool = True) -> SupEstimate:
    """Certified lower estimate of ``sup_A |u_k|``."""
    ck = u.modes[k]

    def mag(I):
        return float(np.abs(ck(np.asarray(I, dtype=float)[None, :])[0]))

    vals = np.abs(ck(grid.nodes))
    i = int(np.argmax(vals))
    x, best = grid.nodes[i].copy(), float(vals[i])
    idx = np.unravel_index(i, grid.counts)
    boundary = any(ii == 0 or ii == c - 1 for ii, c in zip(idx, grid.counts))
    if refine:
        spacing = grid.domain.widths / np.asarray(grid.counts)
        x, best = _refine_sup(mag, x, best, grid.domain, spacing)
        for p in _witness_points(u, k):
            val = mag(p)
            if val > best:
                x, best, boundary = p.copy(), val, False
    return SupEstimate(best, x, boundary)


def norm_uniform(u: PhaseSpaceFunction, grid: Optional[QuadratureGrid] = None, refine: bool = True) -> float:
    """``sum_k sup_A |u_k|`` estimated from below (grid max, local refinement, resonance probes)."""
    grid = grid or make_grid(u.domain)
    return float(sum(mode_sup(u, k, grid, refine).value for k in u.mode_list))


# ---------------------------------------------------------------- integral norms

def _mode_integrands(u: PhaseSpaceFunction, k: Mode, nodes: np.ndarray, with_gradient: bool,
                     allow_fd: bool) -> Tuple[np.ndarray, Optional[np.ndarray]]:
    ck = u.modes[k]
    mag = np.abs(ck(nodes))
    if not with_gradient:
        return mag, None
    if ck.gradient is None and not allow_fd:
        raise ConfigError("gradient", f"mode {k} has no analytic gradient and finite differences are disabled")
    grad = ck.grad(nodes, u.fd_step)
    kabs = float(np.sum(np.abs(k)))
    return mag, np.sum(np.abs(grad), axis=-1) + kabs * mag


def _mode_integrals(u, k, grid, with_gradient, allow_fd):
    mag, extra = _mode_integrands(u, k, grid.nodes, with_gradient, allow_fd)
    zero = _weighted_sum(mag, grid)
    one = zero + _weighted_sum(extra, grid) if with_gradient else zero
    return zero, one


def norm_zero(u: PhaseSpaceFunction, grid: Optional[QuadratureGrid] = None) -> float:
    grid = grid or make_grid(u.domain)
    return float(sum(_mode_integrals(u, k, grid, False, True)[0] for k in u.mode_list))


def norm_one(u: PhaseSpaceFunction, grid: Optional[QuadratureGrid] = None, allow_fd: bool = True) -> float:
    """``|u|^0`` plus action-gradient and ``|k_j u_k|`` integrals.

    Raises ``ConfigError`` if a mode lacks an analytic gradient and
    ``allow_fd`` is false.
    """
    grid = grid or make_grid(u.domain)
    return float(sum(_mode_integrals(u, k, grid, True, allow_fd)[1] for k in u.mode_list))


@dataclass(frozen=True)
class NormReport:
    norm_inf: float
    norm_0: float
    norm_1: float
    per_mode: Dict[Mode, Tuple[float, float, float]]
    refinement_estimate: float
    refinement_0: float = 0.0
    refinement_1: float = 0.0
    boundary_modes: Tuple[Mode, ...] = ()
    nodes_per_dim: int = 0
    scheme: str = "gauss_legendre"

    @property
    def boundary_flag(self) -> bool:
        return bool(self.boundary_modes)


def compute_norms(u: PhaseSpaceFunction, grid: Optional[QuadratureGrid] = None, refine_sup: bool = True,
                  allow_fd: bool = True, scheme: str = "gauss_legendre") -> NormReport:
    """All three norms with per-mode breakdown and a two-level error estimate.

    Without an explicit grid the resolution rule of :func:`resolution_nodes`
    picks one.  ``refinement_estimate`` is the larger of the ``|.|^0`` and
    ``|.|^1`` changes between the grid and its halved version.
    """
    grid = grid or resolution_grid(u, scheme)
    coarse = grid.coarsened()
    per_mode = {}
    boundary = []
    tot = np.zeros(3)
    ctot = np.zeros(2)
    for k in u.mode_list:
        s = mode_sup(u, k, grid, refine_sup)
        z, o = _mode_integrals(u, k, grid, True, allow_fd)
        cz, co = _mode_integrals(u, k, coarse, True, allow_fd)
        per_mode[k] = (s.value, z, o)
        if s.boundary:
            boundary.append(k)
        tot += (s.value, z, o)
        ctot += (cz, co)
    r0 = abs(tot[1] - ctot[0])
    r1 = abs(tot[2] - ctot[1])
    return NormReport(float(tot[0]), float(tot[1]), float(tot[2]), per_mode, max(r0, r1), r0, r1,
                      tuple(boundary), grid.nodes_per_dim, grid.scheme)


# ---------------------------------------------------------------- W^{1,1} sandwich

def _angle_grid(n: int, count: int) -> np.ndarray:
    ax = 2 * math.pi * np.arange(count) / count
    mesh = np.meshgrid(*([ax] * n), indexing="ij")
    return np.stack([m.ravel() for m in mesh], axis=-1)


def sobolev_sandwich_check(u: PhaseSpaceFunction, grid: Optional[QuadratureGrid] = None,
                           angle_nodes: Optional[int] = None, tol: float = 1e-6,
                           allow_fd: bool = True) -> Tuple[float, float, float, bool]:
    """Compare ``|u|^1`` with normalized ``W^{1,1}(A x T^n)`` norms.

    ``lhs`` is ``(2 pi)^-n ||u||_{W^{1,1}}`` and ``rhs`` the same norm taken
    mode by mode and summed; both use the action ``grid`` and a uniform
    angle grid (the rectangle rule, exact for trigonometric polynomials).
    """
    grid = grid or make_grid(u.domain)
    n = u.n
    K = u.truncation_radius
    count = angle_nodes or max(32, 8 * K)
    phi = _angle_grid(n, count)
    aw = 1.0 / phi.shape[0]  # (2 pi)^-n times the cell volume
    modes = u.mode_list
    if not modes:
        return 0.0, 0.0, 0.0, True
    kmat = np.array(modes, dtype=float)
    vals = np.stack([u.modes[k](grid.nodes) for k in modes], axis=0)  # (modes, N)
    grads = np.stack([_grad(u, k, grid.nodes, allow_fd) for k in modes], axis=0)  # (modes, N, n)
    waves = np.exp(1j * phi @ kmat.T)  # (P, modes)

    lhs = 0.0
    rhs = 0.0
    # node blocks keep the (block, P) temporaries small
    block = max(1, 2**22 // max(1, phi.shape[0] * len(modes)))
    for b0 in range(0, grid.size, block):
        sl = slice(b0, b0 + block)
        w = grid.weights[sl]
        field_ = waves @ vals[:, sl]  # (P, B)
        dens = np.abs(field_)
        for j in range(n):
            dens += np.abs(waves @ grads[:, sl, j])
            dens += np.abs((waves * (1j * kmat[:, j])) @ vals[:, sl])
        lhs += float(np.sum(dens.sum(axis=0) * w)) * aw
        per = np.abs(vals[:, sl]) + np.sum(np.abs(grads[:, sl, :]), axis=-1) \
            + np.abs(vals[:, sl]) * np.sum(np.abs(kmat), axis=1)[:, None]
        # |exp(i k.phi)| = 1, so the angle average of each mode is exact
        rhs += float(np.sum(per.sum(axis=0) * w))
    mid = norm_one(u, grid, allow_fd)
    ok = lhs <= mid + tol and mid <= rhs + tol
    return lhs, mid, rhs, ok


def _grad(u, k, nodes, allow_fd):
    ck = u.modes[k]
    if ck.gradient is None and not allow_fd:
        raise ConfigError("gradient", f"mode {k} has no analytic gradient and finite differences are disabled")
    return ck.grad(nodes, u.fd_step)
