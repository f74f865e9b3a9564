"""Operator identities behind the closed form, checked on polynomial spaces.

Both the first-order part ``A(t) = a2(t).grad + a3(t) x.grad`` and the
second-order part ``B(t) = A4(t) : grad grad`` map polynomials of total
degree <= d into themselves, so on that space they are exact finite
matrices acting on monomial coefficient vectors.  The commutator identity,
the Suzuki factorization of the time-ordered exponential and the
substitution action of the first-order flow then become matrix statements
that can be checked to integrator (or machine) precision.
"""

from dataclasses import dataclass
from functools import cached_property
from itertools import combinations_with_replacement
from math import comb

import numpy as np
from numpy.polynomial import chebyshev
from scipy.integrate import solve_ivp
from scipy.linalg import expm

from .coefficients import alphas
from .errors import ConfigError, StiffnessError

DEFAULT_DEGREE = 6
DEFAULT_TOL = 1e-10


def _monomials(n, d):
    out = []
    for k in range(d + 1):
        grade = []
        for combo in combinations_with_replacement(range(n), k):
            e = [0] * n
            for i in combo:
                e[i] += 1
            grade.append(tuple(e))
        out.extend(sorted(set(grade), reverse=True))
    return tuple(out)


class PolyBasis:
    """Monomials of total degree <= ``degree`` in ``dim`` variables, graded lex order."""

    def __init__(self, dim, degree=DEFAULT_DEGREE):
        if dim < 1 or degree < 0:
            raise ConfigError("basis needs dim >= 1 and degree >= 0")
        self.dim = dim
        self.degree = degree
        self.exponents = _monomials(dim, degree)
        self.index = {e: i for i, e in enumerate(self.exponents)}
        self.grades = np.array([sum(e) for e in self.exponents])

    def __len__(self):
        return len(self.exponents)

    def __repr__(self):
        return f"PolyBasis(dim={self.dim}, degree={self.degree}, size={len(self)})"

    @cached_property
    def d(self):
        """Matrices of the partial derivatives, one per axis."""
        N = len(self)
        mats = np.zeros((self.dim, N, N))
        for col, e in enumerate(self.exponents):
            for i in range(self.dim):
                if e[i]:
                    tgt = list(e)
                    tgt[i] -= 1
                    mats[i, self.index[tuple(tgt)], col] = e[i]
        return mats

    @cached_property
    def euler(self):
        """``x . grad``: each monomial scaled by its total degree."""
        return np.diag(self.grades.astype(float))

    @cached_property
    def dd(self):
        """``d_i d_j`` for all pairs, shape (n, n, N, N)."""
        return np.einsum("iab,jbc->ijac", self.d, self.d)

    def evaluate(self, coeffs, x):
        """Evaluate polynomials with coefficient columns ``coeffs`` at points ``x`` (m, n)."""
        x = np.atleast_2d(x)
        exps = np.array(self.exponents)
        mono = np.prod(x[:, None, :] ** exps[None, :, :], axis=-1)
        return mono @ coeffs


@dataclass(frozen=True)
class OperatorMatrix:
    basis: PolyBasis
    entries: np.ndarray

    def __matmul__(self, other):
        return OperatorMatrix(self.basis, self.entries @ _entries(other))

    def __add__(self, other):
        return OperatorMatrix(self.basis, self.entries + _entries(other))

    def __sub__(self, other):
        return OperatorMatrix(self.basis, self.entries - _entries(other))

    def __mul__(self, k):
        return OperatorMatrix(self.basis, self.entries * k)

    __rmul__ = __mul__


def _entries(m):
    return m.entries if isinstance(m, OperatorMatrix) else np.asarray(m)


def matrix_A(c, t, basis):
    if basis.dim != c.dim:
        raise ConfigError("basis dimension does not match coefficients")
    a2 = c.a2(t)
    a3 = float(c.a3(t))
    return OperatorMatrix(basis, np.tensordot(a2, basis.d, axes=1) + a3 * basis.euler)


def matrix_B(c, t, basis):
    if basis.dim != c.dim:
        raise ConfigError("basis dimension does not match coefficients")
    a4 = c.a4(t)
    return OperatorMatrix(basis, np.tensordot(a4, basis.dd, axes=2))


def commutator_coefficient(c, s):
    """Scalar with ``[A(s), B(s')] = commutator_coefficient(s) * B(s')``."""
    return -2.0 * float(c.a3(s))


def commutator_residual(c, s, s2, basis):
    """Max-norm of ``[A(s), B(s2)] + 2 a3(s) B(s2)``, relative to its rounding scale.

    The scale is the entrywise bound ``|A||B| + |B||A| + 2|a3||B|`` on the
    magnitudes that enter each floating-point sum, so a correct identity
    yields a value of order machine epsilon.
    """
    A = matrix_A(c, s, basis).entries
    B = matrix_B(c, s2, basis).entries
    k = commutator_coefficient(c, s)
    R = A @ B - B @ A - k * B
    S = np.abs(A) @ np.abs(B) + np.abs(B) @ np.abs(A) + abs(k) * np.abs(B)
    scale = float(np.max(S, initial=0.0))
    if scale == 0.0:
        return 0.0
    return float(np.max(np.abs(R)) / scale)


def t_exp(generator, t, tol=DEFAULT_TOL, t0=0.0, breakpoints=()):
    """Time-ordered exponential of ``generator`` over ``[t0, t]``.

    Solves ``U'(s) = C(s) U(s)``, ``U(t0) = I`` with an adaptive eighth-order
    Runge-Kutta method, so later-time factors end up on the left.  The
    integration restarts at each of ``breakpoints`` (kinks of the generator).
    """
    C0 = _entries(generator(t0))
    N = C0.shape[0]
    y = np.eye(N).ravel()
    if t == t0:
        return y.reshape(N, N)

    def rhs(s, y):
        return (_entries(generator(s)) @ y.reshape(N, N)).ravel()

    inner = [b for b in np.sort(np.asarray(breakpoints, dtype=float)) if t0 < b < t]
    edges = [t0, *inner, t]
    for a, b in zip(edges[:-1], edges[1:]):
        sol = solve_ivp(rhs, (a, b), y, method="DOP853", rtol=tol, atol=tol)
        if not sol.success:
            raise StiffnessError(f"time-ordered exponential failed: {sol.message}")
        y = sol.y[:, -1]
    return y.reshape(N, N)


def dyson_series(generator, t, order, nodes=48):
    """Dyson series truncated after ``order`` nested integrals.

    Computed by ``order`` Picard sweeps ``U_k(s) = I + int_0^s C U_{k-1}``,
    each of which adds exactly one Dyson term; the inner integrals use
    Chebyshev interpolation on ``nodes`` points of ``[0, t]``.
    """
    s = 0.5 * t * (1.0 - np.cos(np.pi * np.arange(nodes) / (nodes - 1)))
    Cs = np.stack([_entries(generator(si)) for si in s])
    N = Cs.shape[1]
    u = np.broadcast_to(np.eye(N), (nodes, N, N)).copy()
    x = 2.0 * s / t - 1.0
    for _ in range(order):
        integrand = np.einsum("kab,kbc->kac", Cs, u).reshape(nodes, N * N)
        coef = chebyshev.chebfit(x, integrand, nodes - 1)
        cum = chebyshev.chebval(x, chebyshev.chebint(coef, lbnd=-1.0)).T * (0.5 * t)
        u = np.eye(N) + cum.reshape(nodes, N, N)
    return u[-1]


def _relative(diff, ref):
    return float(np.max(np.abs(diff)) / max(1.0, float(np.max(np.abs(ref)))))


def suzuki_factorization_residual(c, t, basis, tol=DEFAULT_TOL, sign=1.0):
    """Difference between ``T-exp int (A + B)`` and its disentangled product.

    The second factor uses ``B(s) exp(2 sign alpha3(s))``; ``sign = -1`` is a
    deliberately wrong variant for mutation testing.  Returns the max-norm
    difference relative to ``max(1, |lhs|_max)``.
    """
    a3 = c.a3

    def full(s):
        return matrix_A(c, s, basis).entries + matrix_B(c, s, basis).entries

    def first(s):
        return matrix_A(c, s, basis).entries

    def second(s):
        return matrix_B(c, s, basis).entries * np.exp(2.0 * sign * float(a3.integral(s)))

    bp = c.breakpoints
    lhs = t_exp(full, t, tol, breakpoints=bp)
    rhs = t_exp(first, t, tol, breakpoints=bp) @ t_exp(second, t, tol, breakpoints=bp)
    return _relative(lhs - rhs, lhs)


def substitution_matrix(basis, scale, shift):
    """Coefficient map of ``g(x) -> g(scale * x + shift)`` on the basis."""
    N = len(basis)
    M = np.zeros((N, N))
    for col, e in enumerate(basis.exponents):
        ranges = [range(ei + 1) for ei in e]
        for k in np.ndindex(*[len(r) for r in ranges]):
            v = 1.0
            for i, ki in enumerate(k):
                v *= comb(e[i], ki) * scale ** ki * shift[i] ** (e[i] - ki)
            M[basis.index[tuple(k)], col] = v
    return M


def substitution_check(c, t, basis, tol=DEFAULT_TOL):
    """Flow of ``A`` versus substitution ``g(x exp(alpha3) + shift)`` on every monomial."""
    U = t_exp(lambda s: matrix_A(c, s, basis).entries, t, tol, breakpoints=c.breakpoints)
    ic = alphas(c, t)
    expected = substitution_matrix(basis, np.exp(ic.alpha3), ic.shift)
    return _relative(U - expected, expected)


def heat_factor(c, t, basis):
    """``exp(tau(t) : grad grad)`` on the basis: the commuting second factor in closed form."""
    ic = alphas(c, t)
    return expm(np.tensordot(ic.tau, basis.dd, axes=2))
