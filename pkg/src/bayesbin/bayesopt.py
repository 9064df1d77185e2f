"""Bayesian optimization over a mixed continuous/integer box.

The GP sees points of the unit hypercube; rounding to integer or odd-integer
values happens only when a point is decoded for evaluation.
"""

from __future__ import annotations

import csv
import io
import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from . import gp
from .pipeline import BOUNDS, ParamVector

log = logging.getLogger(__name__)

CONTINUOUS, INTEGER, ODD = "continuous", "integer", "odd-integer"

DEFAULT_BUDGET = (10, 30)
DEFAULT_BETA = 2.0
DEFAULT_CANDIDATES = 2000
INCUMBENT_PERTURBATIONS = 50
PERTURBATION_SCALE = 0.05
DUPLICATE_TOL = 1e-9


@dataclass(frozen=True)
class Dim:
    name: str
    lower: float
    upper: float
    kind: str = CONTINUOUS

    def __post_init__(self):
        if not self.lower < self.upper:
            raise ValueError(f"{self.name}: lower {self.lower} must be < upper {self.upper}")
        if self.kind not in (CONTINUOUS, INTEGER, ODD):
            raise ValueError(f"{self.name}: unknown kind {self.kind!r}")
        if self.kind == ODD and self._odd_range()[0] > self._odd_range()[1]:
            raise ValueError(f"{self.name}: no odd integer in [{self.lower}, {self.upper}]")

    def _odd_range(self):
        lo = math.ceil(self.lower)
        hi = math.floor(self.upper)
        return (lo if lo % 2 else lo + 1), (hi if hi % 2 else hi - 1)

    def decode(self, p: float):
        p = min(1.0, max(0.0, float(p)))
        v = self.lower + p * (self.upper - self.lower)
        if self.kind == CONTINUOUS:
            return min(self.upper, max(self.lower, v))
        if self.kind == INTEGER:
            return int(min(math.floor(self.upper), max(math.ceil(self.lower), math.floor(v + 0.5))))
        lo, hi = self._odd_range()
        # nearest odd: every v in [2k, 2k+2) maps to 2k+1
        return int(min(hi, max(lo, 2 * math.floor(v / 2) + 1)))

    def encode(self, v) -> float:
        return (float(v) - self.lower) / (self.upper - self.lower)


@dataclass(frozen=True)
class SearchSpace:
    dims: tuple
    factory: Optional[Callable] = None

    def __post_init__(self):
        names = [d.name for d in self.dims]
        if len(set(names)) != len(names):
            raise ValueError("duplicate dimension names")
        object.__setattr__(self, "dims", tuple(self.dims))

    @property
    def d(self) -> int:
        return len(self.dims)

    @property
    def names(self):
        return [d.name for d in self.dims]

    def decode(self, point):
        values = {d.name: d.decode(p) for d, p in zip(self.dims, np.asarray(point, dtype=float))}
        return self.factory(**values) if self.factory else values

    def encode(self, values) -> np.ndarray:
        if not isinstance(values, dict):
            values = {n: getattr(values, n) for n in self.names}
        return np.clip([d.encode(values[d.name]) for d in self.dims], 0.0, 1.0)

    def values_of(self, decoded) -> list:
        if isinstance(decoded, dict):
            return [decoded[n] for n in self.names]
        return [getattr(decoded, n) for n in self.names]

    def contains(self, decoded) -> bool:
        return all(d.lower <= v <= d.upper for d, v in zip(self.dims, self.values_of(decoded)))


_KINDS = {"tau1": CONTINUOUS, "ws": ODD, "tau2": CONTINUOUS, "ms": INTEGER, "ws_h": ODD, "ws_l": ODD}


def default_space(overrides=None) -> SearchSpace:
    """The six-parameter binarization space; ``overrides`` maps name -> (lo, hi)."""
    bounds = dict(BOUNDS)
    for name, lohi in (overrides or {}).items():
        if name not in bounds:
            raise ValueError(f"unknown parameter {name!r}")
        bounds[name] = tuple(lohi)
    return SearchSpace(tuple(Dim(n, *bounds[n], _KINDS[n]) for n in BOUNDS), factory=ParamVector)


def unit_space(d: int) -> SearchSpace:
    return SearchSpace(tuple(Dim(f"x{i}", 0.0, 1.0) for i in range(d)))


@dataclass(frozen=True)
class Record:
    point: np.ndarray
    params: object
    observed: float
    predicted: float  # GP mean when the point was chosen; nan for the initial design


@dataclass
class OptimizationTrace:
    budget: tuple
    records: list = field(default_factory=list)

    @property
    def best_so_far(self) -> list:
        out, best = [], -math.inf
        for r in self.records:
            best = max(best, r.observed)
            out.append(best)
        return out

    @property
    def best_index(self) -> int:
        obs = [r.observed for r in self.records]
        return int(np.argmax(obs))

    def observed(self) -> np.ndarray:
        return np.array([r.observed for r in self.records])

    def predicted(self) -> np.ndarray:
        return np.array([r.predicted for r in self.records])

    def to_csv(self, space: SearchSpace) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["iteration", *space.names, "observed", "predicted"])
        for i, r in enumerate(self.records, 1):
            w.writerow([i, *(fmt(v) for v in space.values_of(r.params)), fmt(r.observed), fmt(r.predicted)])
        return buf.getvalue()


def fmt(v) -> str:
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    v = float(v)
    return "nan" if math.isnan(v) else f"{v:.10g}"


def latin_hypercube(n: int, d: int, seed=None) -> np.ndarray:
    """``n`` stratified points in [0, 1)^d: one per bin in every coordinate."""
    if n < 1 or d < 1:
        raise ValueError(f"latin_hypercube needs n >= 1 and d >= 1, got n={n}, d={d}")
    rng = np.random.default_rng(seed)
    u = rng.random((n, d))
    perms = np.stack([rng.permutation(n) for _ in range(d)], axis=1)
    return np.minimum((perms + u) / n, np.nextafter(1.0, 0.0))


def ucb(posterior, beta: float):
    """Upper confidence bound mean + beta * std (works on arrays too)."""
    if isinstance(posterior, gp.Posterior):
        return posterior.mean + beta * math.sqrt(max(posterior.variance, 0.0))
    mean, var = posterior
    return np.asarray(mean) + beta * np.sqrt(np.maximum(var, 0.0))


def candidate_set(model: gp.GpModel, n_candidates: int, rng, n_perturb: int = INCUMBENT_PERTURBATIONS):
    d = model.dim
    uniform = rng.random((n_candidates, d))
    if n_perturb <= 0:
        return uniform
    incumbent = model.X[int(np.argmax(model.y))]
    local = np.clip(incumbent + PERTURBATION_SCALE * rng.standard_normal((n_perturb, d)), 0.0, 1.0)
    return np.vstack([uniform, local])


def propose_next(model: gp.GpModel, space: SearchSpace, beta: float = DEFAULT_BETA,
                 n_candidates: int = DEFAULT_CANDIDATES, seed=None,
                 n_perturb: int = INCUMBENT_PERTURBATIONS):
    """Return ``(point, predicted_mean)`` maximizing UCB over a random candidate set."""
    if model.dim != space.d:
        raise ValueError(f"model dimension {model.dim} != space dimension {space.d}")
    rng = np.random.default_rng(seed)
    cands = candidate_set(model, n_candidates, rng, n_perturb)
    mean, var = gp.predict_many(model, cands)
    best = int(np.argmax(ucb((mean, var), beta)))
    return cands[best], float(mean[best])


def _safe_eval(objective, params) -> float:
    try:
        v = float(objective(params))
    except Exception as exc:  # a failing point scores as the worst case
        log.warning("objective failed at %s: %s", params, exc)
        return 0.0
    if not math.isfinite(v):
        log.warning("objective returned %r at %s; scoring 0", v, params)
        return 0.0
    return v


def optimize(objective: Callable, space: SearchSpace, budget: Sequence[int] = DEFAULT_BUDGET,
             beta: float = DEFAULT_BETA, seed=0, n_candidates: int = DEFAULT_CANDIDATES,
             workers: int = 1, thetas=gp.THETA_GRID):
    """Maximize ``objective`` over ``space``.

    Evaluates a Latin hypercube of ``budget[0]`` points, then ``budget[1]``
    rounds of GP refit and UCB proposal. Returns ``(best_params, trace)``.

    Each refit estimates the signal amplitude by maximum likelihood, so
    ``beta`` acts on the objective's own scale; the recorded prediction is in
    objective units.
    """
    n_init, n_iter = (int(b) for b in budget)
    if n_init < 2:
        raise ValueError("n_init must be >= 2")
    if n_iter < 0:
        raise ValueError("n_iter must be >= 0")
    design_seq, cand_seq = np.random.SeedSequence(seed).spawn(2)
    design_rng = np.random.default_rng(design_seq)
    cand_rng = np.random.default_rng(cand_seq)

    trace = OptimizationTrace((n_init, n_iter))
    X = latin_hypercube(n_init, space.d, design_rng)
    decoded = [space.decode(p) for p in X]
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            failed_flags = list(pool.map(lambda p: _eval_flagged(objective, p), decoded))
    else:
        failed_flags = [_eval_flagged(objective, p) for p in decoded]
    if all(failed for _, failed in failed_flags):
        raise RuntimeError("every initial-design evaluation failed")
    for p, params, (y, _) in zip(X, decoded, failed_flags):
        trace.records.append(Record(p, params, y, math.nan))

    for _ in range(n_iter):
        Xs = np.array([r.point for r in trace.records])
        ys = trace.observed()
        model, scale = gp.fit_profiled(Xs, ys, thetas)
        point, mu = propose_next(model, space, beta, n_candidates, cand_rng)
        if np.min(np.max(np.abs(Xs - point), axis=1)) < DUPLICATE_TOL:
            point = cand_rng.random(space.d)
            mu = float(gp.predict_many(model, point[None, :])[0][0])
        params = space.decode(point)
        y = _safe_eval(objective, params)
        trace.records.append(Record(point, params, y, mu * scale))
        log.debug("iter %d: %s -> %.4f (predicted %.4f)", len(trace.records), params, y, mu * scale)

    best = trace.records[trace.best_index]
    return best.params, trace


def _eval_flagged(objective, params):
    try:
        v = float(objective(params))
        if not math.isfinite(v):
            raise ValueError(f"non-finite objective {v!r}")
        return v, False
    except Exception as exc:
        log.warning("objective failed at %s: %s", params, exc)
        return 0.0, True


def random_search(objective: Callable, space: SearchSpace, n: int, seed=0):
    """Best of ``n`` uniform random points; used as a baseline."""
    rng = np.random.default_rng(seed)
    pts = rng.random((n, space.d))
    scores = [_safe_eval(objective, space.decode(p)) for p in pts]
    i = int(np.argmax(scores))
    return space.decode(pts[i]), scores[i]
