"""Closed-form Gaussian propagator of the general linear Cauchy problem.

At time t the solution is

    u(t, x) = exp(alpha1) * int N(y; z, 2 tau) phi(y) dy,   z = x exp(alpha3) + shift,

with N the normal density.  Gaussian and delta initial data propagate in
closed form; anything else goes through tensorized Gauss-Legendre quadrature
in the eigenbasis of tau.  Eigen-directions of tau with (numerically) zero
variance are handled as pure transport.
"""

from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy.special import logsumexp

from . import _accel
from .coefficients import EPS_PSD, alphas
from .errors import (ConfigError, DegenerateKernelError, PointMassError,
                     UnsupportedDimensionError)

EPS_DEG = 1e-12
EPS_ABS = 1e-280
K_SIGMA = 8.0
QUAD_RTOL = 1e-10
_LOG_4PI = np.log(4.0 * np.pi)
_LOG_2PI = np.log(2.0 * np.pi)

# tensor Gauss-Legendre: nodes per panel, and the panel cap per axis for n = 1, 2, 3
_GL_ORDER = 8
_MAX_PANELS = {1: 1024, 2: 128, 3: 16}


@dataclass(frozen=True)
class RegularGrid:
    lo: np.ndarray
    hi: np.ndarray
    count: np.ndarray

    def __post_init__(self):
        lo = np.atleast_1d(np.asarray(self.lo, dtype=float))
        hi = np.atleast_1d(np.asarray(self.hi, dtype=float))
        count = np.atleast_1d(np.asarray(self.count, dtype=int))
        if not (lo.shape == hi.shape == count.shape) or lo.ndim != 1:
            raise ConfigError("grid lo/hi/count must be equal-length vectors")
        if np.any(count < 2) or np.any(lo >= hi):
            raise ConfigError("grid needs count >= 2 and lo < hi on every axis")
        object.__setattr__(self, "lo", lo)
        object.__setattr__(self, "hi", hi)
        object.__setattr__(self, "count", count)

    @property
    def dim(self):
        return self.lo.size

    @property
    def shape(self):
        return tuple(int(c) for c in self.count)

    @property
    def step(self):
        return (self.hi - self.lo) / (self.count - 1)

    @property
    def cell_volume(self):
        return float(np.prod(self.step))

    def axes(self):
        return [np.linspace(a, b, c) for a, b, c in zip(self.lo, self.hi, self.count)]

    def points(self):
        """All grid nodes, C-ordered, shape (N, n)."""
        mesh = np.meshgrid(*self.axes(), indexing="ij")
        return np.stack([m.ravel() for m in mesh], axis=-1)

    def same_as(self, other):
        return (self.dim == other.dim and np.array_equal(self.count, other.count)
                and np.allclose(self.lo, other.lo, rtol=1e-14, atol=1e-14)
                and np.allclose(self.hi, other.hi, rtol=1e-14, atol=1e-14))

    @classmethod
    def around(cls, mean, std, k, count):
        mean = np.atleast_1d(np.asarray(mean, dtype=float))
        std = np.broadcast_to(np.asarray(std, dtype=float), mean.shape)
        count = np.broadcast_to(np.asarray(count, dtype=int), mean.shape)
        return cls(mean - k * std, mean + k * std, count)


def _eig_psd(cov, eps_deg=EPS_DEG, eps_abs=EPS_ABS):
    """Eigen-decomposition with near-zero eigenvalues clamped to exactly 0."""
    lam, vec = np.linalg.eigh(cov)
    lmax = max(float(np.max(lam, initial=0.0)), 0.0)
    det = lam <= max(eps_deg * lmax, eps_abs)
    lam = np.where(det, 0.0, lam)
    return lam, vec, det


@dataclass(frozen=True)
class GaussianState:
    """``exp(log_weight) * N(x; mean, cov)``; ``cov`` may be singular."""

    log_weight: float
    mean: np.ndarray
    cov: np.ndarray

    def __post_init__(self):
        mean = np.atleast_1d(np.asarray(self.mean, dtype=float))
        cov = np.asarray(self.cov, dtype=float).reshape(mean.size, mean.size)
        if not np.allclose(cov, cov.T, rtol=1e-13, atol=1e-300):
            raise ConfigError("Gaussian covariance must be symmetric")
        cov = 0.5 * (cov + cov.T)
        lam = np.linalg.eigvalsh(cov)
        if lam[0] < -EPS_PSD * max(np.max(np.abs(lam)), 1e-300):
            raise ConfigError("Gaussian covariance must be non-negative definite")
        object.__setattr__(self, "mean", mean)
        object.__setattr__(self, "cov", cov)
        object.__setattr__(self, "log_weight", float(self.log_weight))

    @property
    def dim(self):
        return self.mean.size

    @property
    def weight(self):
        return float(np.exp(self.log_weight))

    def logpdf(self, x, match_tol=1e-10):
        """Log density at ``x`` (m, n) w.r.t. Lebesgue measure on the support.

        Along zero-variance directions the density is a delta: points off the
        support get -inf, points on it get the density of the remaining
        directions.
        """
        x = np.atleast_2d(np.asarray(x, dtype=float))
        lam, vec, det = _eig_psd(self.cov)
        w = (x - self.mean) @ vec
        nd = ~det
        out = self.log_weight - 0.5 * (np.sum(np.log(lam[nd])) + nd.sum() * _LOG_2PI)
        out = out - 0.5 * np.sum(w[:, nd] ** 2 / lam[nd], axis=1)
        if np.any(det):
            scale = 1.0 + np.max(np.abs(self.mean)) + np.max(np.abs(x), axis=1)
            off = np.any(np.abs(w[:, det]) > match_tol * scale[:, None], axis=1)
            out = np.where(off, -np.inf, out)
        return out

    def pdf(self, x):
        return np.exp(self.logpdf(x))

    @property
    def is_point_mass(self):
        return bool(np.all(_eig_psd(self.cov)[2]))


@dataclass(frozen=True)
class DiracDelta:
    center: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "center", np.atleast_1d(np.asarray(self.center, dtype=float)))

    @property
    def dim(self):
        return self.center.size

    def as_gaussian(self):
        n = self.dim
        return GaussianState(0.0, self.center, np.zeros((n, n)))


@dataclass(frozen=True)
class GaussianMixture:
    components: tuple

    def __post_init__(self):
        comps = tuple(self.components)
        if not comps:
            raise ConfigError("Gaussian mixture must be non-empty")
        if len({g.dim for g in comps}) != 1:
            raise ConfigError("mixture components disagree on dimension")
        object.__setattr__(self, "components", comps)

    @property
    def dim(self):
        return self.components[0].dim

    def __call__(self, x):
        x = np.atleast_2d(x)
        return np.exp(logsumexp([g.logpdf(x) for g in self.components], axis=0))

    def moments(self):
        """Total mass, mean and covariance of the (normalized) mixture."""
        w = np.array([g.weight for g in self.components])
        mass = w.sum()
        p = w / mass
        mean = sum(pi * g.mean for pi, g in zip(p, self.components))
        cov = sum(pi * (g.cov + np.outer(g.mean - mean, g.mean - mean))
                  for pi, g in zip(p, self.components))
        return mass, mean, cov


@dataclass(frozen=True)
class GridSampled:
    grid: RegularGrid
    values: np.ndarray
    outside: str = "zero"

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float).reshape(self.grid.shape)
        if not np.all(np.isfinite(v)):
            raise ConfigError("grid-sampled initial data must be finite")
        if self.outside not in ("zero", "error"):
            raise ConfigError("outside must be 'zero' or 'error'")
        object.__setattr__(self, "values", v)

    @property
    def dim(self):
        return self.grid.dim

    def __call__(self, x):
        x = np.atleast_2d(np.asarray(x, dtype=float))
        if self.outside == "error":
            tol = 1e-12 * (1.0 + np.abs(self.grid.hi - self.grid.lo))
            if np.any(x < self.grid.lo - tol) or np.any(x > self.grid.hi + tol):
                raise ConfigError("evaluation outside the support of grid-sampled data")
        return _accel.interp_multilinear(self.grid.lo, self.grid.step, self.values, x)


@dataclass(frozen=True)
class HostFunction:
    """Opaque ``phi``; called with (m, n) arrays when ``vectorized``, else per point."""

    fn: Callable
    dim: int
    vectorized: bool = False

    def __call__(self, x):
        x = np.atleast_2d(np.asarray(x, dtype=float))
        if self.vectorized:
            return np.asarray(self.fn(x), dtype=float).reshape(x.shape[0])
        return np.array([float(self.fn(row)) for row in x])


@dataclass(frozen=True)
class PropagatorKernel:
    t: float
    alpha1: float
    alpha3: float
    shift: np.ndarray
    tau: np.ndarray
    eigvals: np.ndarray
    eigvecs: np.ndarray
    deterministic: np.ndarray = field(repr=False)

    @property
    def dim(self):
        return self.shift.size

    @property
    def fully_deterministic(self):
        return bool(np.all(self.deterministic))

    def z(self, x):
        return np.asarray(x, dtype=float) * np.exp(self.alpha3) + self.shift


def build_kernel(c, t, eps_deg=EPS_DEG, eps_abs=EPS_ABS, tol_quad=None):
    ic = alphas(c, t) if tol_quad is None else alphas(c, t, tol_quad)
    return kernel_from_alphas(ic, eps_deg, eps_abs)


def kernel_from_alphas(ic, eps_deg=EPS_DEG, eps_abs=EPS_ABS):
    lam, vec, det = _eig_psd(ic.tau, eps_deg, eps_abs)
    return PropagatorKernel(ic.t, ic.alpha1, ic.alpha3, ic.shift, ic.tau, lam, vec, det)


def kernel_log_eval(k, x, y, match_tol=1e-10):
    """Log of the kernel for rows of ``x`` and ``y`` (broadcast, shape (..., n))."""
    if k.fully_deterministic:
        raise DegenerateKernelError(
            "tau vanishes: the propagator is a delta; use solve() / propagate_gaussian()"
        )
    d = k.z(x) - np.asarray(y, dtype=float)
    w = d @ k.eigvecs
    nd = ~k.deterministic
    lam = k.eigvals[nd]
    out = k.alpha1 - 0.5 * np.sum(_LOG_4PI + np.log(lam)) - np.sum(w[..., nd] ** 2 / (4.0 * lam), axis=-1)
    if np.any(k.deterministic):
        scale = 1.0 + np.max(np.abs(d), axis=-1, initial=0.0)
        off = np.any(np.abs(w[..., k.deterministic]) > match_tol * scale[..., None], axis=-1)
        out = np.where(off, -np.inf, out)
    return out


def kernel_eval(k, x, y):
    """Propagator value ``K(t, x, y)``.

    With partially deterministic tau this is the density on the affine
    support (zero off it).
    """
    out = np.exp(kernel_log_eval(k, x, y))
    return float(out) if np.ndim(out) == 0 else out


def propagate_gaussian(k, g):
    n = g.dim
    e = np.exp(-k.alpha3)
    return GaussianState(
        g.log_weight + k.alpha1 - n * k.alpha3,
        (g.mean - k.shift) * e,
        (g.cov + 2.0 * k.tau) * (e * e),
    )


def _box_rule(half_widths, panels):
    """Composite Gauss-Legendre nodes/weights on a product of symmetric boxes."""
    gx, gw = np.polynomial.legendre.leggauss(_GL_ORDER)
    nodes, weights = [], []
    for h in half_widths:
        edges = np.linspace(-h, h, panels + 1)
        half = 0.5 * np.diff(edges)
        mid = 0.5 * (edges[1:] + edges[:-1])
        nodes.append((mid[:, None] + half[:, None] * gx).ravel())
        weights.append((half[:, None] * gw).ravel())
    mesh = np.meshgrid(*nodes, indexing="ij")
    wmesh = np.meshgrid(*weights, indexing="ij")
    pts = np.stack([m.ravel() for m in mesh], axis=-1)
    w = np.prod(np.stack([m.ravel() for m in wmesh], axis=-1), axis=-1)
    return pts, w


def solve_quadrature(k, phi, x, k_sigma=K_SIGMA, rtol=QUAD_RTOL):
    """``u(t, x)`` by quadrature of the kernel against ``phi``; ``x`` is (m, n)."""
    n = k.dim
    if n > 3:
        raise UnsupportedDimensionError("quadrature paths support n <= 3")
    x = np.atleast_2d(np.asarray(x, dtype=float))
    z = k.z(x)
    if k.fully_deterministic:
        return np.exp(k.alpha1) * phi(z)
    nd = ~k.deterministic
    lam = k.eigvals[nd]
    sd = np.sqrt(2.0 * lam)
    vnd = k.eigvecs[:, nd]
    m = nd.sum()
    out = np.empty(x.shape[0])
    cache = {}

    def rule(panels):
        if panels not in cache:
            w_pts, w_w = _box_rule(k_sigma * sd, panels)
            dens = np.exp(-0.5 * np.sum(w_pts ** 2 / (sd * sd), axis=1)
                          - 0.5 * np.sum(np.log(2.0 * np.pi * sd * sd)))
            cache[panels] = (w_pts @ vnd.T, w_w * dens)
        return cache[panels]

    cap = _MAX_PANELS[m]
    for i, zi in enumerate(z):
        panels = 2
        off, wts = rule(panels)
        prev = np.dot(wts, phi(zi + off))
        while True:
            panels *= 2
            if panels > cap:
                break
            off, wts = rule(panels)
            val = np.dot(wts, phi(zi + off))
            done = abs(val - prev) <= rtol * abs(val) + 1e-300
            prev = val
            if done:
                break
        out[i] = prev
    return np.exp(k.alpha1) * out


def _initial_dim(phi):
    return phi.dim


def solve(c, phi, t, points, k_sigma=K_SIGMA, kernel=None):
    """Exact solution ``u(t, points)`` for initial data ``phi``.

    A delta whose propagated covariance vanishes entirely raises
    ``PointMassError`` carrying the weight and location.
    """
    points = np.atleast_2d(np.asarray(points, dtype=float))
    if points.shape[1] != c.dim or _initial_dim(phi) != c.dim:
        raise ConfigError("dimension mismatch between coefficients, data and points")
    k = build_kernel(c, t) if kernel is None else kernel
    if isinstance(phi, DiracDelta):
        g = propagate_gaussian(k, phi.as_gaussian())
        if g.is_point_mass:
            raise PointMassError(g.weight, g.mean)
        return g.pdf(points)
    if isinstance(phi, GaussianMixture):
        gs = [propagate_gaussian(k, g) for g in phi.components]
        return np.exp(logsumexp([g.logpdf(points) for g in gs], axis=0))
    if isinstance(phi, GaussianState):
        return propagate_gaussian(k, phi).pdf(points)
    if k.fully_deterministic:
        return np.exp(k.alpha1) * phi(k.z(points))
    return solve_quadrature(k, phi, points, k_sigma=k_sigma)


def pde_residual(c, u, t, x, h):
    """Finite-difference residual of the general-form PDE for a field ``u(t, x)``.

    All derivatives are second-order central differences with step ``h``;
    mixed second derivatives use the four-point cross stencil.
    """
    x = np.asarray(x, dtype=float)
    n = x.size
    a1, a2, a3, a4 = c.generator_at(t)
    eye = np.eye(n)
    u0 = u(t, x)
    ut = (u(t + h, x) - u(t - h, x)) / (2 * h)
    up = [u(t, x + h * eye[i]) for i in range(n)]
    um = [u(t, x - h * eye[i]) for i in range(n)]
    grad = np.array([(up[i] - um[i]) / (2 * h) for i in range(n)])
    lap = 0.0
    for i in range(n):
        lap += a4[i, i] * (up[i] - 2 * u0 + um[i]) / (h * h)
        for j in range(i + 1, n):
            cross = (u(t, x + h * (eye[i] + eye[j])) - u(t, x + h * (eye[i] - eye[j]))
                     - u(t, x - h * (eye[i] - eye[j])) + u(t, x - h * (eye[i] + eye[j])))
            lap += 2 * a4[i, j] * cross / (4 * h * h)
    return float(ut - a1 * u0 - np.dot(a2, grad) - a3 * np.dot(x, grad) - lap)
