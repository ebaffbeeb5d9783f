"""Criterion minimization over the tuning box and boundary classification.

q = 1 uses a uniform grid followed by golden-section refinement of the best
bracket; q > 1 uses a product grid (capped at 1e4 points) followed by a
coordinate-wise pattern search. Ties are broken toward smaller lambda.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Tuple

import numpy as np

from .criteria import Method, evaluate_criterion
from .exceptions import CriterionFailure, EvaluationOutsideDomain, TunevarError
from .model import Dataset, LossSpec, ModelSpec
from .solver import solve_theta, theta_prime

GOLDEN = (np.sqrt(5.0) - 1.0) / 2.0
REL_WIDTH = 1e-6
BOUNDARY_PROXIMITY = 1e-9
SLOPE_STEP = 1e-5


class BoundaryStatus(enum.Enum):
    INTERIOR = "interior"
    LOWER_BOUNDARY = "lower_boundary"
    UPPER_BOUNDARY = "upper_boundary"


@dataclass(frozen=True)
class FitResult:
    """Tuned fit: theta_hat(lambda_hat), the implicit derivative, and diagnostics."""

    theta_hat: np.ndarray
    lambda_hat: np.ndarray
    D_hat: np.ndarray
    boundary_status: Tuple[BoundaryStatus, ...]
    criterion: Method
    criterion_value: float
    criterion_slope_at_opt: np.ndarray
    trace: Tuple[Tuple[Tuple[float, ...], float], ...]
    lambda_box: np.ndarray = None  # (q, 2) search box, echoed for reporting
    diagnostics: Dict[str, float] = field(default_factory=dict)

    @property
    def interior(self) -> bool:
        return all(s is BoundaryStatus.INTERIOR for s in self.boundary_status)


class _Evaluator:
    """Caching criterion evaluator with warm-start chaining and failure counts."""

    def __init__(self, model, loss, data, method, split, seed):
        self.model, self.loss, self.data = model, loss, data
        self.method, self.split, self.seed = method, split, seed
        self.cache: Dict[Tuple[float, ...], float] = {}
        self.trace: List[Tuple[Tuple[float, ...], float]] = []
        self.failures = 0
        self.attempts = 0
        self.warm: Optional[np.ndarray] = None

    def try_value(self, lam) -> Optional[float]:
        key = tuple(float(v) for v in np.atleast_1d(lam))
        if key in self.cache:
            return self.cache[key]
        self.attempts += 1
        try:
            solve = solve_theta(
                self.model, self.data, np.asarray(key),
                self.warm if self.warm is not None
                else self.model.theta_init,
            )
            cv = evaluate_criterion(
                self.method, self.model, self.loss, self.data, np.asarray(key),
                theta_init=self.warm, solve=solve,
                split=self.split, seed=self.seed,
            )
        except TunevarError:
            self.failures += 1
            self.cache[key] = None
            return None
        self.warm = solve.theta_hat
        self.cache[key] = cv.value
        self.trace.append((key, cv.value))
        return cv.value

    def value(self, lam) -> float:
        v = self.try_value(lam)
        if v is None:
            raise CriterionFailure(
                f"criterion {self.method.value} failed at lambda = {np.atleast_1d(lam)}"
            )
        return v


def _argmin_trace(trace):
    # ties toward (lexicographically) smaller lambda
    best = min(trace, key=lambda kv: (kv[1], kv[0]))
    return np.asarray(best[0]), best[1]


def _golden_section(ev: _Evaluator, lo: float, hi: float, width: float):
    c = hi - GOLDEN * (hi - lo)
    d = lo + GOLDEN * (hi - lo)
    fc, fd = ev.value([c]), ev.value([d])
    while hi - lo > REL_WIDTH * width:
        if fc <= fd:
            hi, d, fd = d, c, fc
            c = hi - GOLDEN * (hi - lo)
            fc = ev.value([c])
        else:
            lo, c, fc = c, d, fd
            d = lo + GOLDEN * (hi - lo)
            fd = ev.value([d])


def _pattern_search(ev: _Evaluator, start, box):
    widths = box[:, 1] - box[:, 0]
    steps = widths / 10.0
    lam = np.asarray(start, float).copy()
    flam = ev.value(lam)
    while np.any(steps >= REL_WIDTH * widths):
        moved = False
        for j in range(len(lam)):
            for sgn in (-1.0, 1.0):  # try the smaller lambda first
                cand = lam.copy()
                cand[j] = np.clip(cand[j] + sgn * steps[j], box[j, 0], box[j, 1])
                if cand[j] == lam[j]:
                    continue
                fc = ev.try_value(cand)
                if fc is not None and (fc < flam or (fc == flam and sgn < 0)):
                    lam, flam = cand, fc
                    moved = True
                    break
        if not moved:
            steps /= 2.0


def _slope_and_status(ev: _Evaluator, lam_hat, box, trace):
    """Central-difference criterion slope per axis plus boundary labels."""
    q = len(lam_hat)
    values = [v for _, v in trace]
    vrange = max(values) - min(values) if len(values) > 1 else 0.0
    slopes = np.zeros(q)
    status = []
    for j in range(q):
        lo, hi = box[j]
        width = hi - lo
        h = SLOPE_STEP * width
        at_lower = lam_hat[j] - lo <= BOUNDARY_PROXIMITY * width
        at_upper = hi - lam_hat[j] <= BOUNDARY_PROXIMITY * width
        up = lam_hat.copy()
        dn = lam_hat.copy()
        if at_lower:
            up[j] = lo + h
            slopes[j] = (ev.value(up) - ev.value(lam_hat)) / h
        elif at_upper:
            dn[j] = hi - h
            slopes[j] = (ev.value(lam_hat) - ev.value(dn)) / h
        else:
            up[j] = min(lam_hat[j] + h, hi)
            dn[j] = max(lam_hat[j] - h, lo)
            slopes[j] = (ev.value(up) - ev.value(dn)) / (up[j] - dn[j])
        slope_tol = max(1e-3 * vrange / width, 1e-12)
        if at_lower and slopes[j] > slope_tol:
            # increasing into the interior: the unconstrained minimum is outside
            status.append(BoundaryStatus.LOWER_BOUNDARY)
        elif at_upper and slopes[j] < -slope_tol:
            status.append(BoundaryStatus.UPPER_BOUNDARY)
        elif at_lower or at_upper:
            # sitting on the edge with a flat or inward slope: treat as boundary
            status.append(
                BoundaryStatus.LOWER_BOUNDARY if at_lower else BoundaryStatus.UPPER_BOUNDARY
            )
        else:
            status.append(BoundaryStatus.INTERIOR)
    return slopes, tuple(status)


def _resolve_box(model: ModelSpec, lambda_domain):
    if lambda_domain is not None:
        box = np.asarray(lambda_domain, float)
        if box.shape == (2,):
            box = np.tile(box, (model.q, 1))
    elif model.lambda_domain is not None:
        box = model.lambda_domain
    else:
        raise ValueError("no lambda_domain available")
    if box.shape != (model.q, 2) or not np.all(box[:, 0] < box[:, 1]):
        raise ValueError("lambda_domain must be a (q, 2) box with lower < upper")
    return box


def tune(
    model: ModelSpec, loss: LossSpec, data: Dataset, method: Method = Method.CV_EXACT,
    lambda_domain=None, grid_size: int = 20, seed: int = 0, split: float = 0.5,
) -> FitResult:
    """Minimize the criterion over the tuning box and classify the minimizer."""
    if grid_size < 5:
        raise ValueError("grid_size must be at least 5")
    box = _resolve_box(model, lambda_domain)
    ev = _Evaluator(model, loss, data, method, split, seed)

    if model.q == 1:
        lo, hi = box[0]
        grid = np.linspace(lo, hi, grid_size)
        for g in grid:
            ev.try_value([g])
        if ev.failures > 0.2 * ev.attempts:
            raise CriterionFailure(
                f"criterion failed on {ev.failures} of {ev.attempts} grid points"
            )
        if not ev.trace:
            raise CriterionFailure("criterion failed on every grid point")
        best, _ = _argmin_trace(ev.trace)
        k = int(np.argmin(np.abs(grid - best[0])))
        blo = grid[max(k - 1, 0)]
        bhi = grid[min(k + 1, grid_size - 1)]
        _golden_section(ev, blo, bhi, hi - lo)
    else:
        m = grid_size
        if m**model.q > 10_000:
            m = max(2, int(np.floor(10_000 ** (1.0 / model.q))))
        axes = [np.linspace(a, b, m) for a, b in box]
        mesh = np.meshgrid(*axes, indexing="ij")
        points = np.stack([g.ravel() for g in mesh], axis=-1)
        for pt in points:
            ev.try_value(pt)
        if ev.failures > 0.2 * ev.attempts:
            raise CriterionFailure(
                f"criterion failed on {ev.failures} of {ev.attempts} grid points"
            )
        if not ev.trace:
            raise CriterionFailure("criterion failed on every grid point")
        best, _ = _argmin_trace(ev.trace)
        _pattern_search(ev, best, box)

    lam_hat, value = _argmin_trace(ev.trace)
    lam_hat = np.clip(lam_hat, box[:, 0], box[:, 1])
    slopes, status = _slope_and_status(ev, lam_hat, box, ev.trace)

    init = ev.warm if ev.warm is not None else model.theta_init
    solve = solve_theta(model, data, lam_hat, init)
    D_hat = theta_prime(model, data, solve)
    return FitResult(
        theta_hat=solve.theta_hat,
        lambda_hat=lam_hat,
        D_hat=D_hat,
        boundary_status=status,
        criterion=method,
        criterion_value=float(value),
        criterion_slope_at_opt=slopes,
        trace=tuple(ev.trace),
        lambda_box=box,
        diagnostics={
            "grid_failures": float(ev.failures),
            "evaluations": float(len(ev.trace)),
            "solver_iterations": float(solve.iterations),
            "residual_norm": solve.residual_norm,
        },
    )


@dataclass(frozen=True)
class TruncatedResult:
    theta_hat: np.ndarray
    case_tag: str  # one of "a", "b", "c", "d", "interior"
    lambda_g: float
    lambda_clamped: float


def truncated_estimate(
    model: ModelSpec, loss: LossSpec, data: Dataset, method: Method = Method.CV_EXACT,
    lambda_domain=None, grid_size: int = 20, seed: int = 0, split: float = 0.5,
) -> TruncatedResult:
    """Clamped estimator with the boundary-case label of its minimizer.

    The criterion is searched over an interval extended by half a width on
    each side, where the model permits evaluation; the returned theta is the
    fit at the clamp of the extended minimizer into the original box. Labels:
    "a"/"b" for minimizers clearly below/above the box, "c"/"d" for within
    delta = 2 * n^{-1/2} * width of the lower/upper edge, "interior" otherwise.
    """
    if model.q != 1:
        raise ValueError("truncated_estimate requires q = 1")
    box = _resolve_box(model, lambda_domain)
    lo, hi = box[0]
    width = hi - lo
    delta = 2.0 * width / np.sqrt(data.n)

    ext_lo, ext_hi = lo - 0.5 * width, hi + 0.5 * width
    ev = _Evaluator(model, loss, data, method, split, seed)
    ext_grid = np.linspace(ext_lo, ext_hi, 2 * grid_size)
    for g in ext_grid:
        ev.try_value([g])
    outside_ok = any(
        (k[0] < lo or k[0] > hi) and v is not None for k, v in ev.cache.items()
    )

    if outside_ok and ev.trace:
        best, _ = _argmin_trace(ev.trace)
        k = int(np.argmin(np.abs(ext_grid - best[0])))
        _golden_section(
            ev, ext_grid[max(k - 1, 0)], ext_grid[min(k + 1, len(ext_grid) - 1)],
            ext_hi - ext_lo,
        )
        lam_g = float(_argmin_trace(ev.trace)[0][0])
    else:
        # model not evaluable outside the box: constrained search, then decide
        # the clear-exceedance cases from the boundary slope sign
        fit = tune(model, loss, data, method, lambda_domain, grid_size, seed, split)
        lam_g = float(fit.lambda_hat[0])
        slope = float(fit.criterion_slope_at_opt[0])
        if fit.boundary_status[0] is BoundaryStatus.LOWER_BOUNDARY and slope > 0:
            lam_g = lo - delta - width * 1e-6
        elif fit.boundary_status[0] is BoundaryStatus.UPPER_BOUNDARY and slope < 0:
            lam_g = hi + delta + width * 1e-6

    lam_c = float(np.clip(lam_g, lo, hi))
    if lam_g < lo - delta:
        tag = "a"
    elif lam_g > hi + delta:
        tag = "b"
    elif abs(lam_g - lo) <= delta:
        tag = "c"
    elif abs(lam_g - hi) <= delta:
        tag = "d"
    else:
        tag = "interior"

    init = ev.warm if ev.warm is not None else model.theta_init
    solve = solve_theta(model, data, np.array([lam_c]), init)
    return TruncatedResult(solve.theta_hat, tag, lam_g, lam_c)
