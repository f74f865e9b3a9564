"""Random coefficient sets for the verification suites and property tests."""

import numpy as np

from .coefficients import (CoefficientSet, Constant, FpeCoefficients, Poly, Table,
                           TensorSchedule)


def random_scalar(rng, horizon, scale=1.0, kinds=("constant", "poly", "table")):
    kind = kinds[rng.integers(len(kinds))]
    if kind == "constant":
        return Constant(scale * rng.uniform(-1, 1))
    if kind == "poly":
        deg = rng.integers(1, 4)
        return Poly(scale * rng.uniform(-1, 1, deg + 1) / (1.0 + np.arange(deg + 1)))
    knots = np.concatenate(([0.0], np.sort(rng.uniform(0, horizon, rng.integers(1, 4))), [horizon]))
    knots = np.unique(knots)
    return Table(knots, scale * rng.uniform(-1, 1, knots.size))


def random_psd_tensor(rng, n, horizon, smooth=False):
    """``L(t) L(t)^T + eps I`` with affine ``L`` entries: polynomial and PSD for all t."""
    L0 = rng.normal(size=(n, n)) * 0.6
    L1 = rng.normal(size=(n, n)) * 0.3 / max(horizon, 1.0)
    ridge = rng.uniform(0.05, 0.3)
    upper = []
    for i in range(n):
        for j in range(i, n):
            c0 = L0[i] @ L0[j] + (ridge if i == j else 0.0)
            c1 = L0[i] @ L1[j] + L1[i] @ L0[j]
            c2 = L1[i] @ L1[j]
            upper.append(Poly([c0, c1, c2]))
    return TensorSchedule(n, upper)


def random_coefficients(rng, n, horizon=2.0, smooth=False, a3_scale=0.5):
    """Random general-form coefficients with an anisotropic diffusion tensor.

    ``smooth`` restricts scalar schedules to constants and polynomials (no
    table kinks), as needed for finite-difference checks in time.
    """
    kinds = ("constant", "poly") if smooth else ("constant", "poly", "table")
    a1 = random_scalar(rng, horizon, 0.5, kinds)
    a2 = [random_scalar(rng, horizon, 1.0, kinds) for _ in range(n)]
    a3 = random_scalar(rng, horizon, a3_scale, kinds)
    a4 = random_psd_tensor(rng, n, horizon)
    return CoefficientSet(n, a1, a2, a3, a4, horizon=horizon)


def random_fpe(rng, n, horizon=2.0, smooth=False):
    kinds = ("constant", "poly") if smooth else ("constant", "poly", "table")
    b1 = [random_scalar(rng, horizon, 1.0, kinds) for _ in range(n)]
    b2 = random_scalar(rng, horizon, 0.5, kinds)
    D = random_psd_tensor(rng, n, horizon)
    return FpeCoefficients(n, b1, b2, D, horizon=horizon)


def ou_fpe(n=1, rate=1.0, diffusion=1.0):
    """Ornstein-Uhlenbeck ``dX = -rate X dt + sqrt(2 D) dW``."""
    return FpeCoefficients(n, [0.0] * n, -rate, TensorSchedule.scalar_times(diffusion, np.eye(n)))
