"""Time-dependent coefficient schedules and their integrals.

The generator of the Cauchy problem

    du/dt = a1(t) u + a2(t).grad u + a3(t) x.grad u + A4(t) : grad grad u

is described by four schedules.  Everything downstream needs only a handful
of time integrals of them (``alphas``): the plain integrals of a1, a2, a3,
the drift shift ``int a2(s) exp(alpha3(s)) ds`` and the covariance tensor
``tau(t) = int A4(s) exp(2 alpha3(s)) ds``.
"""

from dataclasses import dataclass
from functools import cached_property

import numpy as np
from numpy.polynomial import Polynomial
from scipy import integrate, interpolate

from .errors import CoefficientError, DomainError

TOL_QUAD = 1e-10
EPS_PSD = 1e-12
PSD_SAMPLES = 64
ALPHA3_CACHE_POINTS = 1024

# relative slack on the right end of a finite domain
_DOMAIN_SLACK = 1e-12


class ScalarSchedule:
    """A real function of time on ``[0, t_max]``."""

    kind = "abstract"
    t_max = np.inf

    def __call__(self, t):
        t = self._check(t)
        return self._eval(t)

    def integral(self, t):
        """``int_0^t f(s) ds``, vectorized over ``t``."""
        t = self._check(t)
        return self._antiderivative(t)

    @property
    def breakpoints(self):
        """Interior points where the schedule may fail to be smooth."""
        return np.empty(0)

    @property
    def is_constant(self):
        return False

    def _check(self, t):
        t = np.asarray(t, dtype=float)
        hi = self.t_max * (1.0 + _DOMAIN_SLACK) if np.isfinite(self.t_max) else np.inf
        if np.any(t < 0.0) or np.any(t > hi) or np.any(np.isnan(t)):
            raise DomainError(
                f"{self.kind} schedule evaluated outside [0, {self.t_max}]: {t}"
            )
        return np.minimum(t, self.t_max)

    def scaled(self, k):
        raise NotImplementedError

    def shifted(self, t0):
        """The schedule ``s -> f(s + t0)``."""
        raise NotImplementedError

    def to_dict(self):
        raise NotImplementedError


class Constant(ScalarSchedule):
    kind = "constant"

    def __init__(self, value):
        self.value = float(value)

    @property
    def is_constant(self):
        return True

    def _eval(self, t):
        return np.full_like(t, self.value, dtype=float)

    def _antiderivative(self, t):
        return self.value * t

    def scaled(self, k):
        return Constant(k * self.value)

    def shifted(self, t0):
        return self

    def to_dict(self):
        return {"kind": "constant", "value": self.value}

    def __repr__(self):
        return f"Constant({self.value!r})"


class Poly(ScalarSchedule):
    """Polynomial in t; ``coeffs`` in ascending degree."""

    kind = "poly"

    def __init__(self, coeffs):
        coeffs = np.atleast_1d(np.asarray(coeffs, dtype=float))
        if coeffs.ndim != 1 or coeffs.size == 0:
            raise CoefficientError("poly schedule needs a non-empty coefficient list")
        self.coeffs = coeffs
        self._p = Polynomial(coeffs)
        self._P = self._p.integ(lbnd=0.0)

    @property
    def is_constant(self):
        return bool(np.all(self.coeffs[1:] == 0.0))

    def _eval(self, t):
        return self._p(t)

    def _antiderivative(self, t):
        return self._P(t)

    def scaled(self, k):
        return Poly(k * self.coeffs)

    def shifted(self, t0):
        return Poly(self._p(Polynomial([t0, 1.0])).coef)

    def to_dict(self):
        return {"kind": "poly", "coeffs": self.coeffs.tolist()}

    def __repr__(self):
        return f"Poly({self.coeffs.tolist()!r})"


class Table(ScalarSchedule):
    """Piecewise-linear interpolation of ``(t, value)`` knots starting at t = 0."""

    kind = "table"

    def __init__(self, t, values):
        t = np.asarray(t, dtype=float)
        v = np.asarray(values, dtype=float)
        if t.ndim != 1 or t.shape != v.shape or t.size < 2:
            raise CoefficientError("table schedule needs matching 1-D knot arrays, length >= 2")
        if t[0] != 0.0:
            raise CoefficientError("table schedule must start at t = 0")
        if np.any(np.diff(t) <= 0.0):
            raise CoefficientError("table knots must be strictly increasing")
        if not np.all(np.isfinite(v)):
            raise CoefficientError("table values must be finite")
        self.t = t
        self.values = v
        self.t_max = float(t[-1])
        self._cum = np.concatenate(([0.0], np.cumsum(0.5 * np.diff(t) * (v[1:] + v[:-1]))))

    @property
    def is_constant(self):
        return bool(np.all(self.values == self.values[0]))

    @property
    def breakpoints(self):
        return self.t[1:-1]

    def _eval(self, t):
        return np.interp(t, self.t, self.values)

    def _antiderivative(self, t):
        i = np.clip(np.searchsorted(self.t, t, side="right") - 1, 0, self.t.size - 2)
        dt = t - self.t[i]
        slope = (self.values[i + 1] - self.values[i]) / (self.t[i + 1] - self.t[i])
        return self._cum[i] + dt * (self.values[i] + 0.5 * slope * dt)

    def scaled(self, k):
        return Table(self.t, k * self.values)

    def shifted(self, t0):
        if not 0.0 <= t0 < self.t_max:
            raise DomainError(f"cannot shift table schedule by {t0}")
        keep = self.t > t0
        t = np.concatenate(([0.0], self.t[keep] - t0))
        v = np.concatenate(([float(self._eval(np.asarray(t0)))], self.values[keep]))
        return Table(t, v)

    def to_dict(self):
        return {"kind": "table", "t": self.t.tolist(), "values": self.values.tolist()}

    def __repr__(self):
        return f"Table(<{self.t.size} knots on [0, {self.t_max}]>)"


class Function(ScalarSchedule):
    """Host-supplied callable on a finite interval ``[0, t_max]``.

    Scalar integrals use adaptive quadrature; vectorized integrals (used
    inside the weighted integrands of ``alphas``) come from a cubic Hermite
    interpolant of the antiderivative built once at construction, with the
    exact derivative ``f`` at every node.
    """

    kind = "function"

    def __init__(self, fn, t_max, tol=TOL_QUAD, cache_points=ALPHA3_CACHE_POINTS):
        if not np.isfinite(t_max) or t_max <= 0:
            raise CoefficientError("function schedule needs a finite positive t_max")
        self.fn = fn
        self.t_max = float(t_max)
        self.tol = tol
        nodes = np.linspace(0.0, self.t_max, cache_points)
        gx, gw = np.polynomial.legendre.leggauss(12)
        a, b = nodes[:-1], nodes[1:]
        half = 0.5 * (b - a)
        s = (a + b)[:, None] * 0.5 + half[:, None] * gx[None, :]
        pieces = np.sum(self._raw(s.ravel()).reshape(s.shape) * gw, axis=1) * half
        cum = np.concatenate(([0.0], np.cumsum(pieces)))
        self._cache = interpolate.CubicHermiteSpline(nodes, cum, self._raw(nodes))

    def _raw(self, t):
        t = np.asarray(t, dtype=float)
        try:
            out = np.asarray(self.fn(t), dtype=float)
            if out.shape == t.shape:
                return out
        except (TypeError, ValueError):
            pass
        return np.vectorize(lambda s: float(self.fn(s)), otypes=[float])(t)

    def _eval(self, t):
        return self._raw(t)

    def _antiderivative(self, t):
        return self._cache(t)

    def quad(self, t):
        t = float(self._check(t))
        if t == 0.0:
            return 0.0
        val, _ = integrate.quad(lambda s: float(self._raw(s)), 0.0, t,
                                epsrel=self.tol, epsabs=0.0, limit=500)
        return val

    def scaled(self, k):
        return Function(lambda s: k * self._raw(s), self.t_max, self.tol)

    def shifted(self, t0):
        return Function(lambda s: self._raw(np.asarray(s) + t0), self.t_max - t0, self.tol)

    def to_dict(self):
        raise CoefficientError("function schedules cannot be serialized")


def as_schedule(x, t_max=None):
    """Coerce a number, callable, dict or schedule into a ScalarSchedule."""
    if isinstance(x, ScalarSchedule):
        return x
    if isinstance(x, dict):
        return schedule_from_dict(x)
    if callable(x):
        return Function(x, t_max if t_max is not None else np.inf)
    return Constant(x)


def schedule_from_dict(d):
    kind = d.get("kind")
    if kind == "constant":
        return Constant(d["value"])
    if kind == "poly":
        return Poly(d["coeffs"])
    if kind == "table":
        return Table(d["t"], d["values"])
    raise CoefficientError(f"unknown schedule kind {kind!r}")


def _common_t_max(schedules):
    return min((s.t_max for s in schedules), default=np.inf)


class VectorSchedule:
    def __init__(self, components):
        self.components = tuple(as_schedule(c) for c in components)
        if not self.components:
            raise CoefficientError("vector schedule needs at least one component")
        self.dim = len(self.components)
        self.t_max = _common_t_max(self.components)

    @classmethod
    def zeros(cls, n):
        return cls([Constant(0.0)] * n)

    def __call__(self, t):
        return np.stack([c(t) for c in self.components], axis=-1)

    def integral(self, t):
        return np.stack([c.integral(t) for c in self.components], axis=-1)

    @property
    def breakpoints(self):
        return np.unique(np.concatenate([c.breakpoints for c in self.components]))

    @property
    def is_constant(self):
        return all(c.is_constant for c in self.components)

    def scaled(self, k):
        return VectorSchedule([c.scaled(k) for c in self.components])

    def shifted(self, t0):
        return VectorSchedule([c.shifted(t0) for c in self.components])

    def to_list(self):
        return [c.to_dict() for c in self.components]


class TensorSchedule:
    """Symmetric n x n schedule stored by its upper triangle (row-major)."""

    def __init__(self, dim, upper):
        upper = [as_schedule(u) for u in upper]
        if len(upper) != dim * (dim + 1) // 2:
            raise CoefficientError(
                f"tensor schedule of dim {dim} needs {dim * (dim + 1) // 2} upper-triangle entries"
            )
        self.dim = dim
        self.upper = tuple(upper)
        self.t_max = _common_t_max(self.upper)
        self._iu = np.triu_indices(dim)

    @classmethod
    def from_matrix(cls, m):
        """Build from a nested list; the upper triangle is used and must mirror the lower."""
        n = len(m)
        for i in range(n):
            for j in range(i):
                a, b = m[i][j], m[j][i]
                if not (isinstance(a, (int, float)) and isinstance(b, (int, float))):
                    continue
                if a != b:
                    raise CoefficientError("tensor schedule must be symmetric")
        return cls(n, [m[i][j] for i in range(n) for j in range(i, n)])

    @classmethod
    def scalar_times(cls, f, matrix):
        """``f(t) * M`` for a fixed symmetric matrix ``M``."""
        f = as_schedule(f)
        matrix = np.asarray(matrix, dtype=float)
        n = matrix.shape[0]
        return cls(n, [f.scaled(matrix[i, j]) for i in range(n) for j in range(i, n)])

    @classmethod
    def zeros(cls, n):
        return cls(n, [Constant(0.0)] * (n * (n + 1) // 2))

    def upper_values(self, t):
        return np.stack([u(t) for u in self.upper], axis=-1)

    def __call__(self, t):
        up = self.upper_values(t)
        out = np.zeros(up.shape[:-1] + (self.dim, self.dim))
        out[..., self._iu[0], self._iu[1]] = up
        out[..., self._iu[1], self._iu[0]] = up
        return out

    @property
    def breakpoints(self):
        return np.unique(np.concatenate([u.breakpoints for u in self.upper]))

    @property
    def is_constant(self):
        return all(u.is_constant for u in self.upper)

    def validate_psd(self, horizon, eps_psd=EPS_PSD, samples=PSD_SAMPLES):
        """Check non-negative definiteness at ``samples`` times in [0, horizon]."""
        ts = np.linspace(0.0, horizon, samples)
        ts = np.union1d(ts, self.breakpoints[self.breakpoints <= horizon])
        mats = self(ts)
        eig = np.linalg.eigvalsh(mats)
        scale = np.maximum(np.abs(np.trace(mats, axis1=-2, axis2=-1)), np.max(np.abs(eig), axis=-1))
        bad = eig[:, 0] < -eps_psd * np.maximum(scale, 1e-300)
        if np.any(bad):
            t_bad = ts[np.argmax(bad)]
            raise CoefficientError(
                f"tensor schedule is not non-negative definite at t = {t_bad:.6g} "
                f"(min eigenvalue {eig[np.argmax(bad), 0]:.3e})"
            )

    def scaled(self, k):
        return TensorSchedule(self.dim, [u.scaled(k) for u in self.upper])

    def shifted(self, t0):
        return TensorSchedule(self.dim, [u.shifted(t0) for u in self.upper])

    def to_list(self):
        return [u.to_dict() for u in self.upper]


def _vector(x, n):
    if isinstance(x, VectorSchedule):
        return x
    if np.isscalar(x) and n == 1:
        return VectorSchedule([x])
    return VectorSchedule(list(x))


def _tensor(x, n):
    if isinstance(x, TensorSchedule):
        return x
    if np.isscalar(x) or isinstance(x, (ScalarSchedule, dict)) or callable(x):
        if n != 1:
            raise CoefficientError("scalar tensor entry only allowed for n = 1")
        return TensorSchedule(1, [x])
    arr = list(x)
    if arr and isinstance(arr[0], (list, tuple, np.ndarray)):
        return TensorSchedule.from_matrix([list(r) for r in arr])
    return TensorSchedule(n, arr)


def _horizon_for_checks(t_max, horizon):
    if horizon is not None:
        return horizon
    return t_max if np.isfinite(t_max) else 1.0


class CoefficientSet:
    """The coefficients ``(a1, a2, a3, A4)`` of the general-form equation."""

    def __init__(self, dim, a1, a2, a3, a4, horizon=None, eps_psd=EPS_PSD):
        self.dim = int(dim)
        if self.dim < 1:
            raise CoefficientError("dimension must be positive")
        self.a1 = as_schedule(a1)
        self.a2 = _vector(a2, self.dim)
        self.a3 = as_schedule(a3)
        self.a4 = _tensor(a4, self.dim)
        if self.a2.dim != self.dim or self.a4.dim != self.dim:
            raise CoefficientError(
                f"dimension mismatch: dim={self.dim}, a2 has {self.a2.dim}, a4 has {self.a4.dim}"
            )
        self.t_max = _common_t_max([self.a1, self.a3, self.a2, self.a4])
        if horizon is not None and horizon > self.t_max * (1 + _DOMAIN_SLACK):
            raise DomainError(f"horizon {horizon} exceeds schedule domain {self.t_max}")
        self.horizon = horizon
        self.eps_psd = eps_psd
        self.a4.validate_psd(_horizon_for_checks(self.t_max, horizon), eps_psd)

    @classmethod
    def zeros(cls, n):
        return cls(n, 0.0, VectorSchedule.zeros(n), 0.0, TensorSchedule.zeros(n))

    @property
    def breakpoints(self):
        return np.unique(np.concatenate([
            self.a1.breakpoints, self.a2.breakpoints, self.a3.breakpoints, self.a4.breakpoints,
        ]))

    @property
    def is_constant(self):
        return (self.a1.is_constant and self.a2.is_constant
                and self.a3.is_constant and self.a4.is_constant)

    def shifted(self, t0):
        """Coefficients of the same equation restarted at time ``t0``."""
        hz = None if self.horizon is None else self.horizon - t0
        return CoefficientSet(self.dim, self.a1.shifted(t0), self.a2.shifted(t0),
                              self.a3.shifted(t0), self.a4.shifted(t0), horizon=hz,
                              eps_psd=self.eps_psd)

    def generator_at(self, t):
        """Pointwise values ``(a1, a2, a3, A4)`` at time ``t``."""
        return float(self.a1(t)), self.a2(t), float(self.a3(t)), self.a4(t)

    def __repr__(self):
        return (f"CoefficientSet(dim={self.dim}, a1={self.a1!r}, a2={list(self.a2.components)!r}, "
                f"a3={self.a3!r}, a4={list(self.a4.upper)!r})")


class FpeCoefficients:
    """Linear Fokker-Planck data: drift ``b1 + b2 x`` and diffusion ``D``."""

    def __init__(self, dim, b1, b2, D, horizon=None, eps_psd=EPS_PSD):
        self.dim = int(dim)
        self.b1 = _vector(b1, self.dim)
        self.b2 = as_schedule(b2)
        self.D = _tensor(D, self.dim)
        if self.b1.dim != self.dim or self.D.dim != self.dim:
            raise CoefficientError("dimension mismatch in FPE coefficients")
        self.t_max = _common_t_max([self.b1, self.b2, self.D])
        self.horizon = horizon
        self.eps_psd = eps_psd
        self.D.validate_psd(_horizon_for_checks(self.t_max, horizon), eps_psd)


@dataclass(frozen=True)
class IntegratedCoefficients:
    t: float
    alpha1: float
    alpha2: np.ndarray
    alpha3: float
    shift: np.ndarray
    tau: np.ndarray

    @cached_property
    def tau_eigenvalues(self):
        return np.linalg.eigvalsh(self.tau)


def integrate_scalar(f, t):
    """``int_0^t f(s) ds``: closed form where possible, adaptive quadrature otherwise."""
    f = as_schedule(f)
    if isinstance(f, Function):
        return f.quad(t)
    return float(f.integral(float(t)))


def alphas(c, t, tol_quad=TOL_QUAD):
    """All time integrals of ``c`` needed by the propagator at time ``t``."""
    n = c.dim
    t = float(t)
    if c.horizon is not None and t > c.horizon * (1 + _DOMAIN_SLACK):
        raise DomainError(f"t = {t} beyond horizon {c.horizon}")
    if t == 0.0:
        return IntegratedCoefficients(0.0, 0.0, np.zeros(n), 0.0, np.zeros(n), np.zeros((n, n)))
    # domain checks happen inside the schedule integrals
    alpha1 = integrate_scalar(c.a1, t)
    alpha2 = np.array([integrate_scalar(a, t) for a in c.a2.components])
    alpha3 = integrate_scalar(c.a3, t)

    iu = np.triu_indices(n)
    a2, a3, a4 = c.a2, c.a3, c.a4

    def integrand(s):
        e = np.exp(a3.integral(s))
        return np.concatenate((a2(s) * e, a4.upper_values(s) * (e * e)))

    pts = c.breakpoints
    pts = pts[(pts > 0.0) & (pts < t)]
    val, _ = integrate.quad_vec(integrand, 0.0, t, epsrel=tol_quad, epsabs=1e-300,
                                norm="max", points=pts if pts.size else None)
    shift = val[:n]
    tau = np.zeros((n, n))
    tau[iu] = val[n:]
    tau[(iu[1], iu[0])] = val[n:]
    return IntegratedCoefficients(t, float(alpha1), alpha2, float(alpha3), shift, tau)


def z_map(c, t, x, ic=None):
    """Characteristic coordinate ``x exp(alpha3(t)) + shift(t)``; ``x`` is (n,) or (m, n)."""
    ic = alphas(c, t) if ic is None else ic
    return np.asarray(x, dtype=float) * np.exp(ic.alpha3) + ic.shift


def from_fpe(f):
    """General-form coefficients of the linear FPE ``-div[(b1 + b2 x) w] + D : grad grad w``."""
    n = f.dim
    return CoefficientSet(n, f.b2.scaled(-float(n)), f.b1.scaled(-1.0), f.b2.scaled(-1.0),
                          f.D, horizon=f.horizon, eps_psd=f.eps_psd)


def to_fpe(c, samples=256, rtol=1e-12):
    """Inverse of ``from_fpe``; requires ``a1 = n a3`` pointwise (checked on samples)."""
    hz = _horizon_for_checks(c.t_max, c.horizon)
    ts = np.linspace(0.0, hz, samples)
    ts = np.union1d(ts, c.breakpoints[c.breakpoints <= hz])
    a1 = c.a1(ts)
    na3 = c.dim * c.a3(ts)
    scale = max(np.max(np.abs(a1)), np.max(np.abs(na3)), 1.0)
    if np.max(np.abs(a1 - na3)) > rtol * scale:
        raise CoefficientError(
            "coefficients are not of Fokker-Planck form: a1 must equal n * a3 pointwise"
        )
    return FpeCoefficients(c.dim, c.a2.scaled(-1.0), c.a3.scaled(-1.0), c.a4,
                           horizon=c.horizon, eps_psd=c.eps_psd)
