"""Problem-spec files (TOML, ``spec_version = 1``).

Layout::

    spec_version = 1
    dim = 1
    horizon = 2.0

    [coefficients]
    form = "fpe"                          # or "paper"
    b1 = [0.0]                            # fpe: b1 (vector), b2 (scalar), D (upper triangle)
    b2 = -1.0
    D = [1.0]
    # form = "paper" takes a1 (scalar), a2 (vector), a3 (scalar), a4 (upper triangle)

    [initial]
    kind = "delta"                        # delta | gaussian | mixture | grid | function
    center = [1.0]

    [output]
    times = [0.5, 1.0]
    grid = { lo = [-5.0], hi = [5.0], count = [201] }   # or points = [[0.0], [1.0]]
    outside = "zero"                      # grid data evaluated off its support: zero | error

A schedule is a number (constant) or a table ``{kind = "constant", value}``,
``{kind = "poly", coeffs = [c0, c1, ...]}`` (ascending powers) or
``{kind = "table", t = [...], values = [...]}`` (piecewise linear, t[0] = 0).
Tensor schedules list their upper triangle row by row; a single schedule
stands for that schedule times the identity.
"""

import importlib
import re
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import tomli_w

try:
    import tomllib
except ImportError:  # Python < 3.11
    import tomli as tomllib

from .coefficients import (CoefficientSet, Constant, FpeCoefficients, TensorSchedule, VectorSchedule,
                           from_fpe, schedule_from_dict)
from .errors import FpPropError, SpecParseError
from .propagator import (DiracDelta, GaussianMixture, GaussianState, GridSampled,
                         HostFunction, RegularGrid)

SPEC_VERSION = 1


@dataclass
class OutputSpec:
    times: list = field(default_factory=list)
    grid: RegularGrid = None
    points: np.ndarray = None
    outside: str = "zero"

    def eval_points(self):
        if self.points is not None:
            return self.points
        if self.grid is not None:
            return self.grid.points()
        raise SpecParseError("output block needs a grid or a point list", "[output]")


@dataclass
class ProblemSpec:
    dim: int
    horizon: float
    coefficients: CoefficientSet
    initial: object
    output: OutputSpec
    fpe: FpeCoefficients = None
    source: dict = field(default=None, repr=False)

    @property
    def form(self):
        return "fpe" if self.fpe is not None else "paper"


def _line_of(text, path):
    """Best-effort line number for a dotted key path inside TOML ``text``."""
    if text is None:
        return None
    lines = [ln.strip() for ln in text.splitlines()]
    if len(path) == 1:
        key = str(path[0])
        for i, s in enumerate(lines, 1):
            if s.startswith("[") and s.strip("[] ") == key:
                return i
        for i, s in enumerate(lines, 1):
            if s.startswith("["):
                break
            if re.match(rf"{re.escape(key)}\s*=", s):
                return i
        return None
    section, key = str(path[0]), str(path[-1])
    start = None
    for i, s in enumerate(lines, 1):
        if s.startswith("["):
            if start is not None:
                break
            if s.strip("[] ") == section:
                start = i
            continue
        if start is not None and re.match(rf"{re.escape(key)}\s*=", s):
            return i
    return start


class _Ctx:
    def __init__(self, text, base):
        self.text = text
        self.base = base

    def fail(self, msg, *path):
        line = _line_of(self.text, path) if path else None
        where = ".".join(str(p) for p in path) if path else None
        if line is not None:
            where = f"line {line} ({where})"
        raise SpecParseError(msg, where)

    def get(self, table, key, *path, default=...):
        if key not in table:
            if default is ...:
                self.fail(f"missing required key '{key}'", *path, key)
            return default
        return table[key]


def _schedule(ctx, value, *path):
    try:
        if isinstance(value, (int, float)) and not isinstance(value, bool):
            return schedule_from_dict({"kind": "constant", "value": float(value)})
        if isinstance(value, dict):
            return schedule_from_dict(value)
    except (KeyError, TypeError, ValueError) as exc:
        ctx.fail(f"bad schedule: {exc}", *path)
    ctx.fail(f"schedule must be a number or a table, got {type(value).__name__}", *path)


def _vector_sched(ctx, value, n, *path):
    if not isinstance(value, list) or len(value) != n:
        ctx.fail(f"expected a list of {n} schedules", *path)
    return VectorSchedule([_schedule(ctx, v, *path) for v in value])


def _tensor_sched(ctx, value, n, *path):
    m = n * (n + 1) // 2
    if not isinstance(value, list):
        if n == 1:
            value = [value]
        else:
            # a single schedule means that schedule times the identity
            return TensorSchedule(n, [_schedule(ctx, value, *path) if i == j else Constant(0.0)
                                      for i in range(n) for j in range(i, n)])
    if len(value) != m:
        ctx.fail(f"expected {m} upper-triangle schedules for dim {n}", *path)
    return TensorSchedule(n, [_schedule(ctx, v, *path) for v in value])


def _vec(ctx, value, n, *path):
    try:
        arr = np.asarray(value, dtype=float).reshape(n)
    except (TypeError, ValueError):
        ctx.fail(f"expected a numeric vector of length {n}", *path)
    return arr


def _mat(ctx, value, n, *path):
    try:
        arr = np.asarray(value, dtype=float)
        if arr.ndim == 0 or arr.size == 1:
            arr = arr.reshape(1, 1) * np.ones((n, n)) if n == 1 else arr * np.eye(n)
        return arr.reshape(n, n)
    except (TypeError, ValueError):
        ctx.fail(f"expected an {n}x{n} numeric matrix", *path)


def _grid(ctx, value, n, *path):
    if not isinstance(value, dict):
        ctx.fail("grid must be a table with lo, hi, count", *path)
    lo = _vec(ctx, ctx.get(value, "lo", *path), n, *path)
    hi = _vec(ctx, ctx.get(value, "hi", *path), n, *path)
    count = np.asarray(ctx.get(value, "count", *path), dtype=int).reshape(-1)
    if count.size == 1:
        count = np.repeat(count, n)
    try:
        return RegularGrid(lo, hi, count)
    except FpPropError as exc:
        ctx.fail(str(exc), *path)


def _gaussian(ctx, d, n, *path):
    if "weight" in d:
        lw = float(np.log(d["weight"]))
    else:
        lw = float(d.get("log_weight", 0.0))
    mean = _vec(ctx, ctx.get(d, "mean", *path), n, *path)
    cov = _mat(ctx, ctx.get(d, "cov", *path), n, *path)
    try:
        return GaussianState(lw, mean, cov)
    except FpPropError as exc:
        ctx.fail(str(exc), *path)


def _initial(ctx, d, n, outside):
    kind = ctx.get(d, "kind", "initial")
    if kind == "delta":
        return DiracDelta(_vec(ctx, ctx.get(d, "center", "initial"), n, "initial", "center"))
    if kind == "gaussian":
        return GaussianMixture((_gaussian(ctx, d, n, "initial"),))
    if kind == "mixture":
        comps = ctx.get(d, "components", "initial")
        if not isinstance(comps, list) or not comps:
            ctx.fail("mixture needs a non-empty components list", "initial", "components")
        return GaussianMixture(tuple(_gaussian(ctx, c, n, "initial", "components") for c in comps))
    if kind == "grid":
        grid = _grid(ctx, ctx.get(d, "grid", "initial"), n, "initial", "grid")
        if "values" in d:
            vals = np.asarray(d["values"], dtype=float)
        elif "values_file" in d:
            p = Path(d["values_file"])
            p = p if p.is_absolute() else ctx.base / p
            vals = np.load(p) if p.suffix == ".npy" else np.loadtxt(p, delimiter=",")
        else:
            ctx.fail("grid initial data needs 'values' or 'values_file'", "initial")
        if vals.size != int(np.prod(grid.count)):
            ctx.fail(f"expected {int(np.prod(grid.count))} grid values, got {vals.size}",
                     "initial", "values")
        try:
            return GridSampled(grid, vals.reshape(grid.shape), outside)
        except FpPropError as exc:
            ctx.fail(str(exc), "initial", "values")
    if kind == "function":
        ref = ctx.get(d, "callable", "initial")
        mod, _, attr = str(ref).partition(":")
        try:
            fn = getattr(importlib.import_module(mod), attr)
        except (ImportError, AttributeError, ValueError) as exc:
            ctx.fail(f"cannot import {ref!r}: {exc}", "initial", "callable")
        return HostFunction(fn, n, bool(d.get("vectorized", False)))
    ctx.fail(f"unknown initial kind {kind!r}", "initial", "kind")


def parse_spec(text, base_dir="."):
    ctx = _Ctx(text, Path(base_dir))
    try:
        doc = tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        raise SpecParseError(str(exc)) from exc
    return spec_from_dict(doc, ctx)


def load_spec(path):
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise SpecParseError(f"cannot read spec file: {exc}") from exc
    return parse_spec(text, path.parent)


def spec_from_dict(doc, ctx=None):
    ctx = ctx or _Ctx(None, Path("."))
    version = ctx.get(doc, "spec_version")
    if version != SPEC_VERSION:
        ctx.fail(f"unsupported spec_version {version!r} (expected {SPEC_VERSION})", "spec_version")
    n = ctx.get(doc, "dim")
    if not isinstance(n, int) or n < 1:
        ctx.fail("dim must be a positive integer", "dim")
    horizon = ctx.get(doc, "horizon")
    if not isinstance(horizon, (int, float)) or horizon <= 0:
        ctx.fail("horizon must be a positive number", "horizon")
    horizon = float(horizon)

    coef = ctx.get(doc, "coefficients")
    form = ctx.get(coef, "form", "coefficients")
    paper_keys, fpe_keys = {"a1", "a2", "a3", "a4"}, {"b1", "b2", "D"}
    present = set(coef) - {"form"}
    fpe = None
    try:
        if form == "paper":
            if present & fpe_keys:
                ctx.fail('form = "paper" must not contain b1/b2/D', "coefficients")
            c = CoefficientSet(
                n,
                _schedule(ctx, ctx.get(coef, "a1", "coefficients"), "coefficients", "a1"),
                _vector_sched(ctx, ctx.get(coef, "a2", "coefficients"), n, "coefficients", "a2"),
                _schedule(ctx, ctx.get(coef, "a3", "coefficients"), "coefficients", "a3"),
                _tensor_sched(ctx, ctx.get(coef, "a4", "coefficients"), n, "coefficients", "a4"),
                horizon=horizon,
            )
        elif form == "fpe":
            if present & paper_keys:
                ctx.fail("fpe form must not contain a1..a4", "coefficients")
            fpe = FpeCoefficients(
                n,
                _vector_sched(ctx, ctx.get(coef, "b1", "coefficients"), n, "coefficients", "b1"),
                _schedule(ctx, ctx.get(coef, "b2", "coefficients"), "coefficients", "b2"),
                _tensor_sched(ctx, ctx.get(coef, "D", "coefficients"), n, "coefficients", "D"),
                horizon=horizon,
            )
            c = from_fpe(fpe)
        else:
            ctx.fail(f"coefficients.form must be 'paper' or 'fpe', got {form!r}", "coefficients", "form")
    except SpecParseError:
        raise
    except FpPropError as exc:
        ctx.fail(str(exc), "coefficients")

    out = doc.get("output", {})
    outside = out.get("outside", "zero")
    if outside not in ("zero", "error"):
        ctx.fail("output.outside must be 'zero' or 'error'", "output", "outside")
    times = [float(t) for t in out.get("times", [])]
    if any(t < 0 or t > horizon for t in times):
        ctx.fail("output times must lie in [0, horizon]", "output", "times")
    grid = _grid(ctx, out["grid"], n, "output", "grid") if "grid" in out else None
    points = None
    if "points" in out:
        try:
            points = np.asarray(out["points"], dtype=float).reshape(-1, n)
        except ValueError:
            ctx.fail(f"points must be a list of {n}-vectors", "output", "points")
    initial = _initial(ctx, ctx.get(doc, "initial"), n, outside)
    return ProblemSpec(n, horizon, c, initial, OutputSpec(times, grid, points, outside), fpe, doc)


# --------------------------------------------------------------------------- writing

def _grid_dict(g):
    return {"lo": g.lo.tolist(), "hi": g.hi.tolist(), "count": [int(c) for c in g.count]}


def _gauss_dict(g):
    return {"log_weight": g.log_weight, "mean": g.mean.tolist(), "cov": g.cov.tolist()}


def spec_to_dict(spec):
    c = spec.coefficients
    if spec.fpe is not None:
        f = spec.fpe
        coef = {"form": "fpe", "b1": f.b1.to_list(), "b2": f.b2.to_dict(), "D": f.D.to_list()}
    else:
        coef = {"form": "paper", "a1": c.a1.to_dict(), "a2": c.a2.to_list(),
                "a3": c.a3.to_dict(), "a4": c.a4.to_list()}
    phi = spec.initial
    if isinstance(phi, DiracDelta):
        init = {"kind": "delta", "center": phi.center.tolist()}
    elif isinstance(phi, GaussianMixture):
        init = {"kind": "mixture", "components": [_gauss_dict(g) for g in phi.components]}
    elif isinstance(phi, GridSampled):
        init = {"kind": "grid", "grid": _grid_dict(phi.grid), "values": phi.values.ravel().tolist()}
    elif isinstance(phi, HostFunction):
        fn = phi.fn
        init = {"kind": "function", "callable": f"{fn.__module__}:{fn.__qualname__}",
                "vectorized": phi.vectorized}
    else:
        raise SpecParseError(f"cannot serialize initial data of type {type(phi).__name__}")
    out = {"times": list(spec.output.times), "outside": spec.output.outside}
    if spec.output.grid is not None:
        out["grid"] = _grid_dict(spec.output.grid)
    if spec.output.points is not None:
        out["points"] = spec.output.points.tolist()
    return {"spec_version": SPEC_VERSION, "dim": spec.dim, "horizon": spec.horizon,
            "coefficients": coef, "initial": init, "output": out}


def dump_spec(spec):
    return tomli_w.dumps(spec_to_dict(spec))
