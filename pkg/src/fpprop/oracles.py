"""Independent reference solvers: theta-method finite differences and Euler-Maruyama."""

from dataclasses import dataclass

import numpy as np
from scipy import sparse
from scipy.sparse.linalg import bicgstab, splu

from . import _accel
from .errors import CoefficientError, ConfigError, GridMismatchError, UnsupportedDimensionError
from .propagator import DiracDelta, GaussianMixture, GaussianState, RegularGrid

BOUNDARY_SIGMAS = 10.0
MC_BLOCK = 1024


@dataclass(frozen=True)
class FdConfig:
    grid: RegularGrid
    dt: float
    theta: float = 0.5

    def __post_init__(self):
        if not 0.0 <= self.theta <= 1.0:
            raise ConfigError("theta must lie in [0, 1]")
        if self.dt <= 0.0:
            raise ConfigError("dt must be positive")


@dataclass(frozen=True)
class McConfig:
    n_paths: int
    dt: float
    seed: int = 0
    block: int = MC_BLOCK

    def __post_init__(self):
        if self.n_paths < 1 or self.dt <= 0.0 or self.block < 1:
            raise ConfigError("McConfig needs n_paths >= 1, dt > 0, block >= 1")


@dataclass(frozen=True)
class SolutionGrid:
    grid: RegularGrid
    t: float
    values: np.ndarray


def fd_grid(mean, std, h, k=BOUNDARY_SIGMAS):
    """Regular grid covering ``mean +- k std`` per axis with spacing close to ``h``."""
    mean = np.atleast_1d(np.asarray(mean, dtype=float))
    std = np.broadcast_to(np.asarray(std, dtype=float), mean.shape)
    count = np.ceil(2 * k * std / h).astype(int) + 1
    return RegularGrid(mean - k * std, mean - k * std + (count - 1) * h, count)


def _first_diff(m, h):
    return sparse.diags([-np.ones(m - 1), np.ones(m - 1)], [-1, 1]) / (2.0 * h)


def _second_diff(m, h):
    return sparse.diags([np.ones(m - 1), -2.0 * np.ones(m), np.ones(m - 1)], [-1, 0, 1]) / (h * h)


class _Operator:
    """Central-difference pieces of the generator on the interior nodes."""

    def __init__(self, grid):
        n = grid.dim
        if n not in (1, 2):
            raise UnsupportedDimensionError("finite differences support n = 1 or 2")
        self.n = n
        h = grid.step
        inner = [m - 2 for m in grid.count]
        axes = [ax[1:-1] for ax in grid.axes()]
        eyes = [sparse.identity(m, format="csr") for m in inner]
        if n == 1:
            self.d = [_first_diff(inner[0], h[0])]
            self.dd = [[_second_diff(inner[0], h[0])]]
            self.x = [axes[0]]
        else:
            d0, d1 = _first_diff(inner[0], h[0]), _first_diff(inner[1], h[1])
            self.d = [sparse.kron(d0, eyes[1]), sparse.kron(eyes[0], d1)]
            cross = sparse.kron(d0, d1)
            self.dd = [[sparse.kron(_second_diff(inner[0], h[0]), eyes[1]), cross],
                       [cross, sparse.kron(eyes[0], _second_diff(inner[1], h[1]))]]
            mesh = np.meshgrid(*axes, indexing="ij")
            self.x = [m.ravel() for m in mesh]
        self.size = int(np.prod(inner))
        self.eye = sparse.identity(self.size, format="csc")
        # all pieces share one sparsity pattern so assembly is a weighted sum of data arrays
        pieces = [self.eye]
        for i in range(n):
            pieces += [self.d[i], sparse.diags(self.x[i]) @ self.d[i]]
        pieces += [self.dd[i][j] for i in range(n) for j in range(i, n)]
        pattern = sum(abs(p) for p in pieces).tocsc()
        pattern.sort_indices()
        pattern.data[:] = 0.0
        cols = np.repeat(np.arange(self.size), np.diff(pattern.indptr))
        keys = cols.astype(np.int64) * self.size + pattern.indices
        self._pattern = pattern
        self._data = np.zeros((len(pieces), keys.size))
        for k, p in enumerate(pieces):
            q = p.tocoo()
            pos = np.searchsorted(keys, q.col.astype(np.int64) * self.size + q.row)
            np.add.at(self._data[k], pos, q.data)

    def assemble(self, a1, a2, a3, a4):
        w = [a1]
        for i in range(self.n):
            w += [a2[i], a3]
        w += [a4[i, j] * (1.0 if i == j else 2.0) for i in range(self.n) for j in range(i, self.n)]
        L = self._pattern.copy()
        L.data = np.asarray(w, dtype=float) @ self._data
        return L


def sample_initial(phi, grid):
    if isinstance(phi, DiracDelta):
        raise ConfigError("a delta cannot be sampled on a grid; start from a smoothed state")
    pts = grid.points()
    if isinstance(phi, GaussianState):
        vals = phi.pdf(pts)
    else:
        vals = phi(pts)
    return np.asarray(vals, dtype=float).reshape(grid.shape)


def fd_solve(c, phi, t, cfg, t0=0.0):
    """Solve the general-form PDE from ``t0`` (data ``phi``) to ``t`` on ``cfg.grid``.

    Zero Dirichlet boundary; coefficients are frozen at each half step.
    """
    grid = cfg.grid
    if grid.dim != c.dim:
        raise ConfigError("grid dimension does not match coefficients")
    op = _Operator(grid)
    n_steps = max(1, int(np.ceil((t - t0) / cfg.dt - 1e-9)))
    dt = (t - t0) / n_steps
    if cfg.theta < 0.5:
        ts = np.linspace(t0, t, 64)
        lmax = np.max(np.linalg.eigvalsh(c.a4(ts))[:, -1])
        bound = np.min(grid.step) ** 2 / (2.0 * max(lmax, 1e-300) * c.dim)
        if dt > bound:
            raise ConfigError(f"dt = {dt:.3g} violates the explicit stability bound {bound:.3g}")
    u = sample_initial(phi, grid)
    inner = tuple(slice(1, -1) for _ in range(grid.dim))
    v = u[inner].ravel()
    if t == t0:
        return SolutionGrid(grid, float(t), u)
    th = cfg.theta
    if c.is_constant:
        L = op.assemble(*c.generator_at(t0))
        lu = splu((op.eye - th * dt * L).tocsc())
        rhs_op = op.eye + (1.0 - th) * dt * L
        for _ in range(n_steps):
            v = lu.solve(rhs_op @ v)
    else:
        for k in range(n_steps):
            L = op.assemble(*c.generator_at(t0 + (k + 0.5) * dt))
            v = _implicit_step(op.eye - th * dt * L, (op.eye + (1.0 - th) * dt * L) @ v, v)
    out = np.zeros(grid.shape)
    out[inner] = v.reshape([m - 2 for m in grid.count])
    return SolutionGrid(grid, float(t), out)


def _implicit_step(A, b, guess):
    # Jacobi-preconditioned BiCGSTAB; LU only as a fallback
    if A.shape[0] > 4096:
        dinv = sparse.diags(1.0 / A.diagonal())
        x, info = bicgstab(A, b, x0=guess, rtol=1e-12, atol=0.0, M=dinv, maxiter=500)
        if info == 0:
            return x
    return splu(A.tocsc()).solve(b)


def _psd_sqrt(M, eps_psd):
    lam, vec = np.linalg.eigh(M)
    scale = max(float(np.max(np.abs(lam))), 1e-300)
    if lam[0] < -eps_psd * scale:
        raise CoefficientError(f"matrix not non-negative definite (eigenvalue {lam[0]:.3e})")
    return (vec * np.sqrt(np.clip(lam, 0.0, None))) @ vec.T


def _block_rng(seed, b):
    return np.random.Generator(np.random.Philox(np.random.SeedSequence([seed, b])))


def _draw_start(start, rng, size, n):
    if isinstance(start, DiracDelta):
        start = start.center
    if isinstance(start, GaussianState):
        start = GaussianMixture((start,))
    if isinstance(start, GaussianMixture):
        w = np.array([g.weight for g in start.components])
        pick = rng.choice(len(w), size=size, p=w / w.sum())
        out = np.empty((size, n))
        for i, g in enumerate(start.components):
            sel = pick == i
            out[sel] = g.mean + rng.standard_normal((sel.sum(), n)) @ _psd_sqrt(g.cov, 1e-12).T
        return out
    if callable(start):
        return np.asarray(start(rng, size), dtype=float).reshape(size, n)
    return np.broadcast_to(np.asarray(start, dtype=float), (size, n)).copy()


def mc_sample(f, start, t, cfg, t0=0.0):
    """Euler-Maruyama terminal states of ``dX = (b1 + b2 X) ds + sigma dW``.

    ``sigma`` is the principal square root of ``2 D``.  Paths are generated
    in fixed-size blocks, block ``b`` drawing from its own Philox stream keyed
    by ``(seed, b)``, so path ``i`` does not depend on ``n_paths``.
    """
    n = f.dim
    n_steps = max(1, int(np.ceil((t - t0) / cfg.dt - 1e-9)))
    dt = (t - t0) / n_steps
    s = t0 + dt * np.arange(n_steps)
    b1 = f.b1(s).reshape(n_steps, n)
    b2 = np.asarray(f.b2(s), dtype=float).reshape(n_steps)
    sig = np.stack([_psd_sqrt(2.0 * D, f.eps_psd) for D in f.D(s).reshape(n_steps, n, n)])
    out = np.empty((cfg.n_paths, n))
    for b in range(-(-cfg.n_paths // cfg.block)):
        rng = _block_rng(cfg.seed, b)
        x0 = _draw_start(start, rng, cfg.block, n)
        noise = rng.standard_normal((n_steps, cfg.block, n))
        xt = _accel.em_block(x0, b1, b2, sig, dt, noise)
        lo = b * cfg.block
        hi = min(lo + cfg.block, cfg.n_paths)
        out[lo:hi] = xt[: hi - lo]
    return out


@dataclass
class MomentReport:
    n_samples: int
    mean: np.ndarray
    cov: np.ndarray
    mean_z: np.ndarray
    cov_z: np.ndarray
    passed: object  # bool, or None when degenerate
    degenerate: bool
    threshold: float = 4.0

    @property
    def max_z(self):
        if self.degenerate:
            return float("nan")
        return float(max(np.max(np.abs(self.mean_z)), np.max(np.abs(self.cov_z))))


def _zscore(diff, se, ref):
    tiny = 1e-12 * (1.0 + np.abs(ref))
    with np.errstate(divide="ignore", invalid="ignore"):
        z = diff / se
    return np.where(se > 0, z, np.where(np.abs(diff) <= tiny, 0.0, np.inf))


def compare_moments(samples, reference, threshold=4.0):
    """Mean and covariance z-scores of ``samples`` against a Gaussian ``reference``.

    Covariance standard errors use the fourth central moments of the samples.
    """
    x = np.atleast_2d(np.asarray(samples, dtype=float))
    N, n = x.shape
    if N < 2:
        m = x.mean(axis=0) if N else np.full(n, np.nan)
        return MomentReport(N, m, np.full((n, n), np.nan), np.full(n, np.nan),
                            np.full((n, n), np.nan), None, True, threshold)
    mean = x.mean(axis=0)
    d = x - mean
    cov = d.T @ d / (N - 1)
    mean_se = np.sqrt(np.diag(cov) / N)
    m4 = np.einsum("ki,kj->ij", d * d, d * d) / N
    cov_se = np.sqrt(np.clip(m4 - cov * cov, 0.0, None) / N)
    mean_z = _zscore(mean - reference.mean, mean_se, reference.mean)
    cov_z = _zscore(cov - reference.cov, cov_se, reference.cov)
    ok = bool(np.all(np.abs(mean_z) <= threshold) and np.all(np.abs(cov_z) <= threshold))
    return MomentReport(N, mean, cov, mean_z, cov_z, ok, False, threshold)


def grid_error(a, b):
    """(L-inf, L1, L2) norms of ``a - b``; L1 and L2 weighted by the cell volume."""
    if not a.grid.same_as(b.grid) or not np.isclose(a.t, b.t, rtol=1e-12, atol=1e-14):
        raise GridMismatchError("solutions live on different grids or times")
    d = np.abs(np.asarray(a.values) - np.asarray(b.values))
    vol = a.grid.cell_volume
    return float(d.max()), float(d.sum() * vol), float(np.sqrt((d * d).sum() * vol))
