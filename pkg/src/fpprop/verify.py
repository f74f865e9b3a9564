"""Randomized identity suites behind ``fpprop verify``."""

from dataclasses import dataclass, field

import numpy as np

from . import disentangle as dis
from .propagator import GaussianMixture, GaussianState, build_kernel, pde_residual, propagate_gaussian
from .randomized import ou_fpe, random_coefficients
from .coefficients import from_fpe

SUITES = ("commutator", "suzuki", "substitution", "residual")
COMMUTATOR_CONTRACT = 1e-13
RESIDUAL_STEPS = (1e-3, 5e-4)
RESIDUAL_POINTS = 50
RESIDUAL_RATIO = (3.5, 4.5)


@dataclass
class SuiteResult:
    name: str
    trials: int
    max_residual: float
    contract: float
    details: list = field(default_factory=list)

    @property
    def passed(self):
        return all(d["ok"] for d in self.details)

    def line(self):
        status = "PASS" if self.passed else "FAIL"
        worst = "n/a" if not self.details else f"{self.max_residual:.3e}"
        return (f"{self.name:<13} trials={self.trials:<4d} max={worst:<10} "
                f"contract={self.contract:.1e}  {status}")


def _commutator(rng, i, tol, mutate):
    n = int(rng.integers(1, 4))
    d = int(rng.integers(3, 7))
    c = random_coefficients(rng, n)
    s, s2 = rng.uniform(0, c.horizon, 2)
    r = dis.commutator_residual(c, s, s2, dis.PolyBasis(n, d))
    return {"n": n, "degree": d, "value": r, "ok": r <= COMMUTATOR_CONTRACT}


def _suzuki(rng, i, tol, mutate):
    n = 1 + i % 3
    d = 6 if n < 3 else 4
    c = random_coefficients(rng, n)
    t = float(rng.uniform(0.3, c.horizon))
    r = dis.suzuki_factorization_residual(c, t, dis.PolyBasis(n, d), tol, sign=-1.0 if mutate else 1.0)
    return {"n": n, "degree": d, "t": t, "value": r, "ok": r <= 100 * tol}


def _substitution(rng, i, tol, mutate):
    n = 1 + i % 3
    c = random_coefficients(rng, n)
    t = float(rng.uniform(0.3, c.horizon))
    r = dis.substitution_check(c, t, dis.PolyBasis(n, 5), tol)
    return {"n": n, "degree": 5, "t": t, "value": r, "ok": r <= 100 * tol}


def residual_problem(rng, i):
    """Trial 0 is the 1-D OU process from a Gaussian start; the rest are random smooth 2-D problems."""
    if i == 0:
        c = from_fpe(ou_fpe(1))
        g = GaussianState(0.0, [1.0], [[0.3]])
    else:
        c = random_coefficients(rng, 2, horizon=2.0, smooth=True, a3_scale=0.3)
        A = rng.normal(size=(2, 2)) * 0.3
        g = GaussianState(0.0, rng.normal(size=2) * 0.5, A @ A.T + 0.3 * np.eye(2))
    return c, g


def residual_ratio(c, g, t, points, steps=RESIDUAL_STEPS):
    """RMS PDE residual of the closed form at two steps; returns (rms_h, rms_h2, ratio)."""
    cache = {}

    def u(s, x):
        if s not in cache:
            cache[s] = propagate_gaussian(build_kernel(c, s), g)
        return float(cache[s].pdf(x)[0])

    rms = []
    for h in steps:
        r = np.array([pde_residual(c, u, t, x, h) for x in points])
        rms.append(float(np.sqrt(np.mean(r * r))))
    return rms[0], rms[1], rms[0] / rms[1]


def _residual(rng, i, tol, mutate):
    c, g = residual_problem(rng, i)
    t = float(rng.uniform(0.5, 1.5))
    k = propagate_gaussian(build_kernel(c, t), g)
    sd = np.sqrt(np.diag(k.cov))
    pts = k.mean + rng.uniform(-2.0, 2.0, size=(RESIDUAL_POINTS, c.dim)) * sd
    r1, r2, ratio = residual_ratio(c, g, t, pts)
    lo, hi = RESIDUAL_RATIO
    return {"n": c.dim, "t": t, "rms_h": r1, "rms_h2": r2, "ratio": ratio,
            "value": abs(ratio - 4.0), "ok": lo <= ratio <= hi}


_RUNNERS = {"commutator": _commutator, "suzuki": _suzuki,
            "substitution": _substitution, "residual": _residual}


def contract_for(name, tol):
    return {"commutator": COMMUTATOR_CONTRACT, "suzuki": 100 * tol,
            "substitution": 100 * tol, "residual": 0.5}[name]


def run_suite(name, trials, seed=0, tol=dis.DEFAULT_TOL, mutate_sign=False):
    rng = np.random.default_rng([seed, SUITES.index(name)])
    details = [_RUNNERS[name](rng, i, tol, mutate_sign) for i in range(trials)]
    worst = max((d["value"] for d in details), default=0.0)
    return SuiteResult(name, trials, worst, contract_for(name, tol), details)
