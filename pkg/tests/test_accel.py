import numpy as np
import pytest
from scipy.interpolate import RegularGridInterpolator

from fpprop import _accel

needs_numba = pytest.mark.skipif(not _accel.HAS_NUMBA, reason="numba not installed")


def _both(monkeypatch, fn, *args):
    monkeypatch.delenv("FPPROP_DISABLE_JIT", raising=False)
    fast = fn(*args)
    monkeypatch.setenv("FPPROP_DISABLE_JIT", "1")
    assert not _accel.jit_enabled()
    slow = fn(*args)
    return fast, slow


def test_flag_selects_fallback(monkeypatch):
    monkeypatch.setenv("FPPROP_DISABLE_JIT", "yes")
    assert not _accel.jit_enabled()
    monkeypatch.setenv("FPPROP_DISABLE_JIT", "0")
    assert _accel.jit_enabled() == _accel.HAS_NUMBA


@needs_numba
@pytest.mark.parametrize("n", [1, 2, 3])
def test_em_block_parity(monkeypatch, rng, n):
    steps, paths = 50, 300
    x0 = rng.normal(size=(paths, n))
    b1 = rng.normal(size=(steps, n))
    b2 = rng.normal(size=steps) * 0.5
    sigma = rng.normal(size=(steps, n, n)) * 0.3
    noise = rng.standard_normal((steps, paths, n))
    fast, slow = _both(monkeypatch, _accel.em_block, x0, b1, b2, sigma, 0.01, noise)
    assert fast == pytest.approx(slow, rel=1e-12, abs=1e-12)


def test_em_block_single_step(rng):
    x0 = rng.normal(size=(4, 2))
    b1 = np.array([[0.5, -1.0]])
    b2 = np.array([-0.3])
    sigma = np.array([[[1.0, 0.0], [0.2, 0.5]]])
    noise = rng.standard_normal((1, 4, 2))
    dt = 0.1
    expected = x0 + (b1[0] + b2[0] * x0) * dt + np.sqrt(dt) * noise[0] @ sigma[0].T
    assert _accel.em_block(x0, b1, b2, sigma, dt, noise) == pytest.approx(expected, rel=1e-13)


@pytest.mark.parametrize("n", [1, 2, 3])
def test_interp_matches_scipy(rng, n):
    counts = [7, 5, 4][:n]
    lo = rng.uniform(-1, 0, n)
    step = rng.uniform(0.2, 0.5, n)
    axes = [lo[i] + step[i] * np.arange(counts[i]) for i in range(n)]
    values = rng.normal(size=counts)
    pts = np.stack([rng.uniform(a[0], a[-1], 40) for a in axes], axis=-1)
    ref = RegularGridInterpolator(axes, values)(pts)
    assert _accel.interp_multilinear(lo, step, values, pts) == pytest.approx(ref, rel=1e-12, abs=1e-13)


def test_interp_zero_outside_and_exact_at_nodes(rng):
    values = rng.normal(size=(4, 3))
    lo, step = np.array([0.0, 0.0]), np.array([1.0, 0.5])
    out = _accel.interp_multilinear(lo, step, values, [[-0.1, 0.5], [1.0, 1.1], [3.0, 1.0]])
    assert out[0] == 0.0 and out[1] == 0.0
    assert out[2] == pytest.approx(values[3, 2])


@needs_numba
def test_interp_parity(monkeypatch, rng):
    values = rng.normal(size=(9, 8))
    lo, step = np.array([-1.0, 0.0]), np.array([0.25, 0.3])
    pts = rng.uniform(-1.5, 2.5, size=(500, 2))
    fast, slow = _both(monkeypatch, _accel.interp_multilinear, lo, step, values, pts)
    assert fast == pytest.approx(slow, rel=1e-13, abs=1e-14)
