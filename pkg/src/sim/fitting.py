"""
Bounded nonlinear least squares for SignalCurve data.

Parameters are mapped to an unbounded internal space (sine transform for
two-sided bounds, square-root transform for one-sided bounds) and solved
with scipy's trust-region reflective least squares. A Nelder-Mead simplex
takes over when the trust-region step fails or the Jacobian is
ill-conditioned.
"""

from __future__ import annotations

import itertools
import logging
import math
from typing import Dict, List, Mapping, Optional, Sequence, Tuple

import numpy as np
from scipy.optimize import OptimizeResult, least_squares, minimize
from scipy.stats import norm

from .errors import ModelEvaluationError, NotConverged
from .models import FitOptions, FitProblem, FitResult, ModelFunction

logger = logging.getLogger(__name__)

ONE_SIGMA = 0.6827
CONDITION_LIMIT = 1e12


class _BoundTransform:
    """Smooth invertible map between bounded parameters and R^k."""

    def __init__(self, bounds: Sequence[Tuple[float, float]]):
        self.lo = np.array([b[0] for b in bounds], dtype=float)
        self.hi = np.array([b[1] for b in bounds], dtype=float)
        self.free = self.lo < self.hi

    def to_internal(self, params: np.ndarray) -> np.ndarray:
        p, lo, hi = params[self.free], self.lo[self.free], self.hi[self.free]
        u = p.copy()
        both = np.isfinite(lo) & np.isfinite(hi)
        low_only = np.isfinite(lo) & ~np.isfinite(hi)
        high_only = ~np.isfinite(lo) & np.isfinite(hi)
        with np.errstate(invalid="ignore", divide="ignore"):
            scaled = 2.0 * (p[both] - lo[both]) / (hi[both] - lo[both]) - 1.0
            u[both] = np.arcsin(np.clip(scaled, -1, 1))
            u[low_only] = np.sqrt((p[low_only] - lo[low_only] + 1.0) ** 2 - 1.0)
            u[high_only] = np.sqrt((hi[high_only] - p[high_only] + 1.0) ** 2 - 1.0)
        return u

    def to_external(self, internal: np.ndarray, template: np.ndarray) -> np.ndarray:
        params = template.astype(float).copy()
        lo, hi = self.lo[self.free], self.hi[self.free]
        u = np.asarray(internal, dtype=float)
        p = u.copy()
        both = np.isfinite(lo) & np.isfinite(hi)
        low_only = np.isfinite(lo) & ~np.isfinite(hi)
        high_only = ~np.isfinite(lo) & np.isfinite(hi)
        p[both] = lo[both] + (hi[both] - lo[both]) * (np.sin(u[both]) + 1.0) / 2.0
        p[low_only] = lo[low_only] - 1.0 + np.sqrt(u[low_only] ** 2 + 1.0)
        p[high_only] = hi[high_only] + 1.0 - np.sqrt(u[high_only] ** 2 + 1.0)
        params[self.free] = p
        return np.clip(params, self.lo, self.hi)


def _evaluate(problem: FitProblem, params: np.ndarray) -> np.ndarray:
    try:
        values = np.asarray(problem.model(problem.data.x, params), dtype=float)
    except Exception as e:
        raise ModelEvaluationError(
            f"model '{problem.name}' failed at {dict(zip(problem.param_names, params))}: {e}"
        ) from e
    if values.shape != problem.data.y.shape or not np.all(np.isfinite(values)):
        raise ModelEvaluationError(
            f"model '{problem.name}' returned invalid values at "
            f"{dict(zip(problem.param_names, params))}"
        )
    return values


def _residuals(problem: FitProblem, params: np.ndarray) -> np.ndarray:
    r = _evaluate(problem, params) - problem.data.y
    if problem.weights is not None:
        r = r * problem.weights
    return r


def _cost(problem: FitProblem, params: np.ndarray) -> float:
    r = _residuals(problem, params)
    return float(np.dot(r, r))


def numerical_jacobian(
    model: ModelFunction,
    x: np.ndarray,
    params: np.ndarray,
    step: Optional[Sequence[float]] = None,
    bounds: Optional[Sequence[Tuple[float, float]]] = None,
) -> np.ndarray:
    """
    Central-difference Jacobian d model / d params, shape (len(x), len(params)).

    Falls back to one-sided differences next to a bound.
    """
    params = np.asarray(params, dtype=float)
    if step is None:
        h = np.cbrt(np.finfo(float).eps) * np.maximum(np.abs(params), 1.0)
    else:
        h = np.asarray(step, dtype=float)
    columns = []
    for j in range(params.size):
        lo, hi = bounds[j] if bounds is not None else (-np.inf, np.inf)
        up, down = params.copy(), params.copy()
        if params[j] + h[j] > hi:
            up[j], down[j], span = params[j], params[j] - h[j], h[j]
        elif params[j] - h[j] < lo:
            up[j], down[j], span = params[j] + h[j], params[j], h[j]
        else:
            up[j], down[j], span = params[j] + h[j], params[j] - h[j], 2.0 * h[j]
        columns.append(
            (np.asarray(model(x, up), dtype=float) - np.asarray(model(x, down), dtype=float)) / span
        )
    return np.column_stack(columns) if columns else np.zeros((len(x), 0))


def _covariance(
    problem: FitProblem, params: np.ndarray, transform: _BoundTransform
) -> Tuple[np.ndarray, int]:
    p = params.size
    free = transform.free
    m = problem.data.y.size
    dof = max(m - int(free.sum()), 0)
    covariance = np.zeros((p, p))
    if not free.any():
        return covariance, dof

    def weighted(x: np.ndarray, q: np.ndarray) -> np.ndarray:
        out = np.asarray(problem.model(x, q), dtype=float)
        return out * problem.weights if problem.weights is not None else out

    jac = numerical_jacobian(weighted, problem.data.x, params, bounds=problem.bounds)[:, free]
    r = _residuals(problem, params)
    variance = float(np.dot(r, r)) / dof if dof > 0 else 0.0
    block = np.linalg.pinv(jac.T @ jac) * variance
    covariance[np.ix_(free, free)] = 0.5 * (block + block.T)
    return covariance, dof


def _simplex(
    problem: FitProblem,
    transform: _BoundTransform,
    start: np.ndarray,
    options: FitOptions,
) -> OptimizeResult:
    template = problem.params_init

    def objective(u: np.ndarray) -> float:
        return _cost(problem, transform.to_external(u, template))

    return minimize(
        objective,
        start,
        method="Nelder-Mead",
        options={
            "maxiter": options.max_iter * max(start.size, 1),
            "xatol": options.x_tol,
            "fatol": options.f_tol,
        },
    )


def fit(problem: FitProblem, options: Optional[FitOptions] = None) -> FitResult:
    """
    Local weighted least-squares minimiser.

    Args:
        problem: Model, data, bounds and initial parameters.
        options: Iteration budget and tolerances.

    Returns:
        FitResult; ``converged`` is False when the budget ran out, with the
        best parameters found so far.

    Raises:
        ModelEvaluationError: The model raised or returned non-finite values.
    """
    options = options or FitOptions()
    transform = _BoundTransform(problem.bounds)
    template = problem.params_init
    u0 = transform.to_internal(template)
    initial_cost = _cost(problem, template)

    def residual(u: np.ndarray) -> np.ndarray:
        return _residuals(problem, transform.to_external(u, template))

    method, message = "trust-region", ""
    converged, iterations = True, 0
    best_u, best_cost = u0, initial_cost

    if u0.size:
        use_simplex = False
        try:
            res = least_squares(
                residual,
                u0,
                jac="3-point",
                method="trf",
                x_scale="jac",
                xtol=options.x_tol,
                ftol=options.f_tol,
                max_nfev=options.max_iter,
            )
        except (ValueError, np.linalg.LinAlgError) as e:
            logger.debug("Trust-region step failed: %s", e)
            use_simplex = options.fallback
            message = str(e)
            res = None

        if res is not None:
            best_u, best_cost = res.x, 2.0 * float(res.cost)
            converged, iterations, message = res.status > 0, int(res.nfev), res.message
            condition = float(np.linalg.cond(res.jac)) if res.jac.size else 0.0
            logger.debug(
                "trf: status=%d nfev=%d cost=%.6g cond=%.3g",
                res.status,
                res.nfev,
                best_cost,
                condition,
            )
            if options.fallback and (not np.isfinite(condition) or condition > CONDITION_LIMIT):
                use_simplex = True

        if use_simplex:
            simplex = _simplex(problem, transform, best_u, options)
            logger.debug(
                "Simplex: success=%s nit=%d fun=%.6g", simplex.success, simplex.nit, simplex.fun
            )
            if simplex.fun <= best_cost or res is None:
                best_u, best_cost = simplex.x, float(simplex.fun)
                method = "simplex"
                converged = bool(simplex.success)
                iterations += int(simplex.nit)
                message = str(simplex.message)

    params = transform.to_external(best_u, template)
    if _cost(problem, params) > initial_cost:
        params = template.astype(float).copy()

    covariance, dof = _covariance(problem, params, transform)
    residual_norm = math.sqrt(_cost(problem, params))
    if not converged:
        logger.warning("Fit of '%s' stopped before convergence: %s", problem.name, message)
    return FitResult(
        params=params,
        param_names=list(problem.param_names),
        residual_norm=residual_norm,
        covariance=covariance,
        converged=converged,
        iterations=iterations,
        method=method,
        message=str(message),
        dof=dof,
    )


def grid_init(
    problem: FitProblem, grid_spec: Mapping[str, Sequence[float]]
) -> np.ndarray:
    """
    Grid point with the smallest residual, for use as params_init.

    Args:
        problem: Fit problem; parameters absent from ``grid_spec`` keep
            their initial values.
        grid_spec: Candidate values per parameter name.

    Returns:
        Parameter vector of the best grid point.
    """
    unknown = set(grid_spec) - set(problem.param_names)
    if unknown:
        raise KeyError(f"grid names unknown parameters: {sorted(unknown)}")
    names = [n for n in problem.param_names if n in grid_spec]
    index = {n: problem.param_names.index(n) for n in names}

    best, best_cost = problem.params_init.astype(float).copy(), math.inf
    for values in itertools.product(*(grid_spec[n] for n in names)):
        trial = problem.params_init.astype(float).copy()
        for name, value in zip(names, values):
            trial[index[name]] = value
        try:
            cost = _cost(problem, trial)
        except ModelEvaluationError:
            continue
        if cost < best_cost:
            best, best_cost = trial, cost
    logger.debug("Grid init: best cost %.6g at %s", best_cost, best)
    return best


def confidence_intervals(
    result: FitResult, level: float = ONE_SIGMA
) -> Dict[str, Tuple[float, float]]:
    """
    Symmetric Gaussian intervals from the covariance diagonal.

    Raises:
        NotConverged: The fit did not converge.
    """
    if not result.converged:
        raise NotConverged("confidence intervals need a converged fit")
    if not 0.0 < level < 1.0:
        raise ValueError("level must lie in (0, 1)")
    z = float(norm.ppf(0.5 + level / 2.0))
    sigma = np.sqrt(np.clip(np.diag(result.covariance), 0.0, None))
    return {
        name: (float(p - z * s), float(p + z * s))
        for name, p, s in zip(result.param_names, result.params, sigma)
    }


def format_report(result: FitResult, level: float = ONE_SIGMA, title: str = "Fit report") -> str:
    """Plain-text report of parameters, intervals and convergence."""
    lines: List[str] = [title, "=" * len(title)]
    sigma = np.sqrt(np.clip(np.diag(result.covariance), 0.0, None))
    intervals = confidence_intervals(result, level) if result.converged else {}
    label = f"{level * 100:.2f}%" + (" (1 sigma)" if abs(level - ONE_SIGMA) < 1e-4 else "")
    lines.append(f"confidence level: {label}")
    lines.append("")
    width = max([len(n) for n in result.param_names] + [9])
    lines.append(f"{'parameter':<{width}}  {'value':>14}  {'std_err':>12}  interval")
    for name, value, err in zip(result.param_names, result.params, sigma):
        if name in intervals:
            lo, hi = intervals[name]
            interval = f"[{lo:.6g}, {hi:.6g}]"
        else:
            interval = "n/a"
        lines.append(f"{name:<{width}}  {value:>14.8g}  {err:>12.4g}  {interval}")
    lines.append("")
    lines.append(f"residual_norm: {result.residual_norm:.6g}")
    lines.append(f"dof: {result.dof}")
    lines.append(f"converged: {'yes' if result.converged else 'no'}")
    lines.append(f"method: {result.method}")
    lines.append(f"iterations: {result.iterations}")
    return "\n".join(lines) + "\n"
