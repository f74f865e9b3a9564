"""Hot inner loops, compiled with numba when available.

Every kernel has a pure-numpy twin with identical semantics.  The numpy path
is used when numba is missing or when ``FPPROP_DISABLE_JIT`` is set to a
truthy value; ``FPPROP_THREADS`` caps the numba thread pool.
"""

import os

import numpy as np

_FALSY = ("", "0", "false", "no", "off")

try:
    import numba
    from numba import njit, prange

    HAS_NUMBA = True
    # the bundled TBB is too old on some systems; avoid the warning
    if numba.config.THREADING_LAYER == "default":
        numba.config.THREADING_LAYER = "workqueue"
except ImportError:  # pragma: no cover
    HAS_NUMBA = False

    def njit(*args, **kwargs):
        if args and callable(args[0]):
            return args[0]
        return lambda fn: fn

    prange = range


def jit_enabled():
    """True when the compiled kernels are selected."""
    return HAS_NUMBA and os.environ.get("FPPROP_DISABLE_JIT", "").lower() in _FALSY


def _apply_thread_cap():
    cap = os.environ.get("FPPROP_THREADS")
    if HAS_NUMBA and cap:
        try:
            numba.set_num_threads(max(1, min(int(cap), numba.config.NUMBA_NUM_THREADS)))
        except ValueError:
            pass


_apply_thread_cap()


# ---------------------------------------------------------------------------
# Euler-Maruyama for dX = (b1 + b2 X) ds + sigma dW, one block of paths

@njit(cache=True, parallel=True)
def _em_block_numba(x0, b1, b2, sigma, dt, noise):
    n_steps, n_paths, n = noise.shape
    x = x0.copy()
    nxt = np.empty_like(x)
    sq = np.sqrt(dt)
    # steps outermost so every step streams through contiguous noise
    for k in range(n_steps):
        for p in prange(n_paths):
            for i in range(n):
                acc = 0.0
                for j in range(n):
                    acc += sigma[k, i, j] * noise[k, p, j]
                nxt[p, i] = x[p, i] + (b1[k, i] + b2[k] * x[p, i]) * dt + acc * sq
        x, nxt = nxt, x
    return x


def _em_block_numpy(x0, b1, b2, sigma, dt, noise):
    x = np.array(x0, dtype=float, copy=True)
    sq = np.sqrt(dt)
    for k in range(noise.shape[0]):
        x = x + (b1[k] + b2[k] * x) * dt + (noise[k] @ sigma[k].T) * sq
    return x


def em_block(x0, b1, b2, sigma, dt, noise):
    """Advance a block of paths through all steps.

    ``x0`` is (paths, n); ``b1`` (steps, n); ``b2`` (steps,); ``sigma``
    (steps, n, n); ``noise`` (steps, paths, n) standard normals.
    """
    args = (
        np.ascontiguousarray(x0, dtype=float),
        np.ascontiguousarray(b1, dtype=float),
        np.ascontiguousarray(b2, dtype=float),
        np.ascontiguousarray(sigma, dtype=float),
        float(dt),
        np.ascontiguousarray(noise, dtype=float),
    )
    if jit_enabled():
        return _em_block_numba(*args)
    return _em_block_numpy(*args)


# ---------------------------------------------------------------------------
# multilinear interpolation on a regular grid (n <= 3), zero outside

@njit(cache=True, parallel=True)
def _interp_numba(lo, step, values, pts):
    m, n = pts.shape
    shape = values.shape
    flat = values.ravel()
    strides = np.empty(n, dtype=np.int64)
    s = 1
    for d in range(n - 1, -1, -1):
        strides[d] = s
        s *= shape[d]
    out = np.zeros(m)
    for p in prange(m):
        base = 0
        frac = np.empty(n)
        inside = True
        for d in range(n):
            u = (pts[p, d] - lo[d]) / step[d]
            if u < 0.0 or u > shape[d] - 1:
                inside = False
                break
            i = int(np.floor(u))
            if i >= shape[d] - 1:
                i = shape[d] - 2
            frac[d] = u - i
            base += i * strides[d]
        if not inside:
            continue
        acc = 0.0
        for corner in range(1 << n):
            w = 1.0
            off = 0
            for d in range(n):
                if (corner >> d) & 1:
                    w *= frac[d]
                    off += strides[d]
                else:
                    w *= 1.0 - frac[d]
            acc += w * flat[base + off]
        out[p] = acc
    return out


def _interp_numpy(lo, step, values, pts):
    m, n = pts.shape
    shape = np.array(values.shape)
    u = (pts - lo) / step
    inside = np.all((u >= 0.0) & (u <= shape - 1), axis=1)
    idx = np.clip(np.floor(u).astype(np.int64), 0, shape - 2)
    frac = u - idx
    out = np.zeros(m)
    for corner in range(1 << n):
        bits = np.array([(corner >> d) & 1 for d in range(n)])
        w = np.prod(np.where(bits, frac, 1.0 - frac), axis=1)
        ii = np.clip(idx + bits, 0, shape - 1)
        out += w * values[tuple(ii.T)]
    out[~inside] = 0.0
    return out


def interp_multilinear(lo, step, values, pts):
    """Multilinear interpolation of ``values`` (grid-shaped) at ``pts`` (m, n).

    Points outside the closed grid box get 0.
    """
    args = (
        np.ascontiguousarray(lo, dtype=float),
        np.ascontiguousarray(step, dtype=float),
        np.ascontiguousarray(values, dtype=float),
        np.ascontiguousarray(np.atleast_2d(pts), dtype=float),
    )
    if jit_enabled():
        return _interp_numba(*args)
    return _interp_numpy(*args)
