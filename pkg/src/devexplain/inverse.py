"""Bayesian inversion: which feature vector best explains a target label?

The log-posterior pairs a Gaussian misfit term -(y_target - f(x))^2/(2 sigma_e^2)
with the independent mixture log-prior.  Its maximizer is found by multistart
local optimization: draw starting points from the prior, polish each locally
(quasi-Newton for smooth models, simplex search for trees), deduplicate the
endpoints, and keep the argmax.  A probabilistic bound converts an assumed
number of basins and a minimum basin probability into a restart count.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.optimize import minimize

from .errors import NumericalError, SearchFailureError, ValidationError
from .mixtures import FeaturePriors, ModeInfo
from .models import PredictiveModel

_FD_STEP_FRAC = 1e-6
_DEDUP_FRAC = 1e-3


@dataclass(frozen=True)
class PosteriorObjective:
    """Log-posterior for one target label value.

    ``priors=None`` means an improper flat prior (log-prior identically 0),
    useful for pure-misfit studies and stubs.
    """

    model: PredictiveModel
    priors: FeaturePriors | None
    y_target: float
    sigma_e_squared: float

    def __post_init__(self):
        if not self.sigma_e_squared > 0:
            raise ValidationError("sigma_e_squared must be positive (clamp first)")


@dataclass(frozen=True)
class SearchBudget:
    """Restart budget plus the assumptions that produced it."""

    n_runs: int
    assumed_k: int
    min_basin_prob: float
    failure_prob: float

    def __post_init__(self):
        if self.n_runs < 1:
            raise ValidationError("n_runs must be >= 1")
        if not 0 < self.min_basin_prob < 1:
            raise ValidationError("min_basin_prob must be in (0, 1)")
        if not 0 < self.failure_prob < 1:
            raise ValidationError("failure_prob must be in (0, 1)")


@dataclass(frozen=True)
class LocalOptimum:
    point: np.ndarray
    log_posterior: float
    hit_count: int


@dataclass(frozen=True)
class MapResult:
    map_point: np.ndarray
    map_log_posterior: float
    local_optima: tuple[LocalOptimum, ...]
    n_runs_executed: int
    n_converged: int


@dataclass(frozen=True)
class LocalSettings:
    grad_tol: float = 1e-6
    step_tol: float = 1e-8
    max_iters: int = 500
    smooth: bool = True


def _fast_log_prior(priors: FeaturePriors | None):
    """Closure evaluating the log-prior with per-feature constants hoisted."""
    if priors is None:
        return lambda x: 0.0
    consts = []
    for gmm in priors.per_feature:
        log_w = np.log(gmm.weights) - 0.5 * np.log(2.0 * math.pi * gmm.variances)
        consts.append((log_w, gmm.means, 2.0 * gmm.variances))

    def log_prior(x: np.ndarray) -> float:
        total = 0.0
        for i, (log_w, means, two_var) in enumerate(consts):
            terms = log_w - (x[i] - means) ** 2 / two_var
            total += float(np.logaddexp.reduce(terms))
        return total

    return log_prior


def make_objective_fn(obj: PosteriorObjective):
    """Plain callable x -> log-posterior value, shapes unchecked (hot path)."""
    log_prior = _fast_log_prior(obj.priors)
    predict_one = obj.model.predict_one
    y = obj.y_target
    two_sigma2 = 2.0 * obj.sigma_e_squared

    def value(x: np.ndarray) -> float:
        misfit = y - predict_one(x)
        return -misfit * misfit / two_sigma2 + log_prior(x)

    return value


def log_posterior(obj: PosteriorObjective, x) -> float:
    """-(y_target - f(x))^2 / (2 sigma_e^2) + log p(x).

    The likelihood normalization constant is dropped; it shifts every value
    equally and cannot move the argmax.
    """
    x = np.asarray(x, dtype=float).reshape(-1)
    if x.size != obj.model.d_x:
        raise ValidationError(f"x has {x.size} entries, model expects {obj.model.d_x}")
    return make_objective_fn(obj)(x)


def required_runs(assumed_k: int, min_basin_prob: float, failure_prob: float) -> int:
    """Restarts needed to hit every basin with probability >= 1 - failure_prob.

    With K basins each of probability >= p, n independent starts miss some
    basin with probability <= K(1-p)^n; solving for n gives
    n >= (ln failure_prob - ln K) / ln(1 - p), rounded up, floor 1.
    """
    if assumed_k < 1:
        raise ValidationError("assumed_k must be >= 1")
    if not 0 < min_basin_prob < 1:
        raise ValidationError("min_basin_prob must be in (0, 1)")
    if not 0 < failure_prob < 1:
        raise ValidationError("failure_prob must be in (0, 1)")
    bound = (math.log(failure_prob) - math.log(assumed_k)) / math.log(
        1.0 - min_basin_prob
    )
    return max(1, math.ceil(bound))


def default_budget(priors: FeaturePriors, failure_prob: float = 0.01) -> SearchBudget:
    """Conservative budget: K = product of per-feature component counts,
    assumed minimum basin probability 1/(2K)."""
    k_hat = 1
    for gmm in priors.per_feature:
        k_hat *= gmm.k
    p_hat = 1.0 / (2.0 * k_hat)
    return SearchBudget(
        n_runs=required_runs(k_hat, p_hat, failure_prob),
        assumed_k=k_hat,
        min_basin_prob=p_hat,
        failure_prob=failure_prob,
    )


def _central_diff_grad(fn, x: np.ndarray) -> np.ndarray:
    grad = np.empty_like(x)
    for i in range(x.size):
        h = _FD_STEP_FRAC * (1.0 + abs(x[i]))
        hi = x.copy()
        lo = x.copy()
        hi[i] += h
        lo[i] -= h
        grad[i] = (fn(hi) - fn(lo)) / (2.0 * h)
    return grad


def local_maximize(
    obj: PosteriorObjective, x0, settings: LocalSettings | None = None
) -> tuple[np.ndarray, float, bool]:
    """Polish one starting point; returns (point, value, converged).

    Smooth path: BFGS with central-difference gradients, step
    h_I = 1e-6 (1 + |x_I|), stopping at gradient inf-norm < grad_tol.  A
    stop caused by line-search precision loss counts as converged: near the
    clamped-likelihood ridge the gradient tolerance is unreachable while the
    point is already stationary to machine precision.

    Non-smooth path (trees): Nelder-Mead on the negated objective, stopping
    at simplex diameter < step_tol; finite-difference gradients would be
    zero almost everywhere on a piecewise-constant surface.

    An exhausted iteration budget returns converged=False, not an error.
    The returned value never falls below the value at x0.
    """
    if settings is None:
        settings = LocalSettings(smooth=obj.model.kind == "linear")
    x0 = np.asarray(x0, dtype=float).reshape(-1)
    if x0.size != obj.model.d_x:
        raise ValidationError(f"x0 has {x0.size} entries, model expects {obj.model.d_x}")
    fn = make_objective_fn(obj)
    f0 = fn(x0)
    if not math.isfinite(f0):
        raise NumericalError(f"objective is not finite at the starting point {x0}")

    def neg(x):
        return -fn(x)

    if settings.smooth:
        res = minimize(
            neg,
            x0,
            method="BFGS",
            jac=lambda x: -_central_diff_grad(fn, x),
            options={"gtol": settings.grad_tol, "maxiter": settings.max_iters},
        )
        converged = res.status in (0, 2)
    else:
        res = minimize(
            neg,
            x0,
            method="Nelder-Mead",
            options={
                "xatol": settings.step_tol,
                "fatol": math.inf,
                "maxiter": settings.max_iters * x0.size,
            },
        )
        converged = res.status == 0
    point = np.asarray(res.x, dtype=float)
    value = float(-res.fun)
    if not math.isfinite(value) or value < f0:
        return x0, f0, converged
    return point, value, converged


def dedup_radius(point: np.ndarray) -> float:
    """1e-3 (1 + inf-norm of the point): optima closer than this coincide."""
    return _DEDUP_FRAC * (1.0 + float(np.abs(point).max()))


def direct_search_map(
    obj: PosteriorObjective,
    priors: FeaturePriors,
    budget: SearchBudget,
    seed: int,
    settings: LocalSettings | None = None,
) -> MapResult:
    """Multistart MAP search with deduplication and hit counting.

    Starting points are drawn i.i.d. from the prior, one per run in stream
    order, so a larger budget with the same seed reuses the smaller budget's
    starts as a prefix.  Converged endpoints are clustered in the inf-norm
    with radius 1e-3 (1 + inf-norm); each cluster keeps its best point and
    the number of runs that landed in it (an empirical basin-probability
    estimate for budget diagnostics).
    """
    rng = np.random.default_rng(seed)
    clusters: list[dict] = []
    n_converged = 0
    diagnostics = []
    for run in range(budget.n_runs):
        x0 = priors.sample(rng, 1)[0]
        try:
            point, value, converged = local_maximize(obj, x0, settings)
        except NumericalError as exc:
            diagnostics.append({"run": run, "start": x0.tolist(), "error": str(exc)})
            continue
        if not converged:
            diagnostics.append(
                {"run": run, "start": x0.tolist(), "error": "iteration budget exhausted"}
            )
            continue
        n_converged += 1
        for cluster in clusters:
            if np.abs(point - cluster["point"]).max() <= dedup_radius(point):
                cluster["hits"] += 1
                if value > cluster["value"]:
                    cluster["point"], cluster["value"] = point, value
                break
        else:
            clusters.append({"point": point, "value": value, "hits": 1})
    if n_converged == 0:
        raise SearchFailureError(
            f"all {budget.n_runs} restarts failed to converge",
            diagnostics=diagnostics,
        )
    clusters.sort(key=lambda c: c["value"], reverse=True)
    optima = tuple(
        LocalOptimum(
            point=c["point"], log_posterior=float(c["value"]), hit_count=c["hits"]
        )
        for c in clusters
    )
    return MapResult(
        map_point=optima[0].point,
        map_log_posterior=optima[0].log_posterior,
        local_optima=optima,
        n_runs_executed=budget.n_runs,
        n_converged=n_converged,
    )


def reference_point(
    model: PredictiveModel,
    priors: FeaturePriors,
    sigma_e_squared: float,
    reference,
    budget: SearchBudget,
    seed: int,
) -> MapResult:
    """MAP search with y_target set by the reference.

    ``reference`` is either a :class:`ModeInfo` (target its location) or a
    1-D sample vector (target its mean).
    """
    if isinstance(reference, ModeInfo):
        y_target = reference.location
    else:
        samples = np.asarray(reference, dtype=float).reshape(-1)
        if samples.size == 0:
            raise ValidationError("mean reference needs at least one sample")
        y_target = float(samples.mean())
    obj = PosteriorObjective(
        model=model, priors=priors, y_target=y_target, sigma_e_squared=sigma_e_squared
    )
    return direct_search_map(obj, priors, budget, seed)


def map_result_to_json(result: MapResult, budget: SearchBudget | None = None) -> dict:
    doc = {
        "map_point": result.map_point.tolist(),
        "map_log_posterior": result.map_log_posterior,
        "local_optima": [
            {
                "point": o.point.tolist(),
                "log_posterior": o.log_posterior,
                "hit_count": o.hit_count,
            }
            for o in result.local_optima
        ],
        "n_runs_executed": result.n_runs_executed,
        "n_converged": result.n_converged,
    }
    if budget is not None:
        doc["budget"] = {
            "n_runs": budget.n_runs,
            "assumed_k": budget.assumed_k,
            "min_basin_prob": budget.min_basin_prob,
            "failure_prob": budget.failure_prob,
        }
    return doc
