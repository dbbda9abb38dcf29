"""Responsible scores, interventional Shapley values, and the explain pipeline.

A responsible score is a deviation term divided by the total deviation:
s_I = delta_I / delta.  Scores are signed and unclamped; when the total
deviation is smaller than a fraction of the label spread the ratio is
meaningless and the result is flagged degenerate instead.

Shapley values are computed by exact subset enumeration with marginal
(interventional) expectations over a shared background sample, which keeps
the efficiency, dummy, and symmetry axioms testable to machine precision.
"""

from __future__ import annotations

import math
from contextlib import contextmanager
from dataclasses import dataclass

import numpy as np

from .anova import (
    BackgroundSample,
    DeviationDecomposition,
    decompose_deviation,
    decomposition_to_json,
    draw_background,
    f_zero,
)
from .dataset import Dataset
from .errors import DevexplainError, ValidationError
from .inverse import (
    MapResult,
    SearchBudget,
    default_budget,
    map_result_to_json,
    reference_point,
)
from .mixtures import (
    FeaturePriors,
    ModeInfo,
    fit_gmm,
    mode_z_score,
    modes,
    select_k,
    z_score,
)
from .models import PredictiveModel, clamp_sigma_e_squared, predict, residual_stats

REPORT_SCHEMA = 1

_ENUMERATION_LIMIT = 20


@dataclass(frozen=True)
class ResponsibleScores:
    """Fraction of the total deviation carried by each term.

    Degenerate results keep the flag set and NaN score entries; the raw
    delta terms stay available in the decomposition they came from.
    """

    first_order: np.ndarray
    second_order: np.ndarray | None
    residual_share: float
    reference_kind: str
    mode_index: int | None
    degenerate: bool


@dataclass(frozen=True)
class ShapleyAttribution:
    values: np.ndarray
    base_value: float
    np_used: int


def responsible_scores(
    decomp: DeviationDecomposition,
    degeneracy_tau: float,
    label_scale: float,
    reference_kind: str,
    mode_index: int | None = None,
) -> ResponsibleScores:
    """Divide every term of the decomposition by the total deviation.

    If |total| < degeneracy_tau * label_scale the observation sits too
    close to the reference for ratios to mean anything; the scores come
    back NaN with degenerate=True (a flagged state, not an error).
    """
    if degeneracy_tau <= 0:
        raise ValidationError("degeneracy_tau must be positive")
    if label_scale < 0:
        raise ValidationError("label_scale must be nonnegative")
    d = decomp.d_x
    if abs(decomp.total_delta) < degeneracy_tau * label_scale:
        return ResponsibleScores(
            first_order=np.full(d, math.nan),
            second_order=None
            if decomp.second_order is None
            else np.full((d, d), math.nan),
            residual_share=math.nan,
            reference_kind=reference_kind,
            mode_index=mode_index,
            degenerate=True,
        )
    total = decomp.total_delta
    return ResponsibleScores(
        first_order=decomp.first_order / total,
        second_order=None
        if decomp.second_order is None
        else decomp.second_order / total,
        residual_share=decomp.residual / total,
        reference_kind=reference_kind,
        mode_index=mode_index,
        degenerate=False,
    )


def shapley_values(model, bg: BackgroundSample, x_obs) -> ShapleyAttribution:
    """Interventional Shapley values by exact subset enumeration.

    v(S) is the mean prediction over the background with the coordinates in
    S pinned to the observation; every subset shares the same background
    rows.  v(empty) is f0 and v(full) is the plain prediction at x_obs.
    """
    x_obs = np.asarray(x_obs, dtype=float).reshape(-1)
    d = bg.d_x
    if x_obs.size != d:
        raise ValidationError(f"x_obs has {x_obs.size} entries, background has {d}")
    if d > _ENUMERATION_LIMIT:
        raise ValidationError(
            f"exact enumeration is limited to d_x <= {_ENUMERATION_LIMIT}, got {d}"
        )
    if model.d_x != d:
        raise ValidationError("model and background disagree on d_x")
    full = (1 << d) - 1
    v = np.empty(1 << d)
    for mask in range(1 << d):
        if mask == full:
            v[mask] = predict(model, x_obs)
            continue
        if mask == 0:
            pts = bg.points
        else:
            pts = bg.points.copy()
            for i in range(d):
                if mask >> i & 1:
                    pts[:, i] = x_obs[i]
        v[mask] = float(np.mean(model.predict_batch(pts)))
    fact = [math.factorial(i) for i in range(d + 1)]
    weight = [fact[s] * fact[d - s - 1] / fact[d] for s in range(d)]
    values = np.empty(d)
    for i in range(d):
        contrib = []
        for mask in range(1 << d):
            if mask >> i & 1:
                continue
            s = mask.bit_count()
            contrib.append(weight[s] * (v[mask | (1 << i)] - v[mask]))
        values[i] = math.fsum(contrib)
    return ShapleyAttribution(values=values, base_value=float(v[0]), np_used=bg.np_used)


def mean_based_scores_equal_shap_check(model, report: "ExplanationReport") -> float:
    """Max per-feature gap between normalized mean-based scores and SHAP.

    Only meaningful for linear models with a mean reference, where the two
    attributions coincide up to Monte Carlo and reference-fitting error.
    """
    if model.kind != "linear":
        raise ValidationError("check applies to linear models only")
    if report.reference_kind != "mean":
        raise ValidationError("check applies to mean-reference reports only")
    if report.scores.degenerate:
        raise ValidationError("scores are degenerate; comparison is undefined")
    s = report.scores.first_order
    phi = report.shap.values
    s_total = float(s.sum())
    phi_total = float(phi.sum())
    if s_total == 0 or phi_total == 0:
        raise ValidationError("zero-sum attribution; normalization is undefined")
    return float(np.max(np.abs(s / s_total - phi / phi_total)))


@dataclass(frozen=True)
class ExplainSettings:
    """Knobs for one explanation run; everything that affects the output."""

    seed: int
    np_count: int = 1000
    order: int = 1
    k_max: int = 6
    budget: SearchBudget | None = None
    degeneracy_tau: float = 0.05
    bg_source: str = "resample"

    def __post_init__(self):
        if self.np_count < 1:
            raise ValidationError("np_count must be >= 1")
        if self.order not in (1, 2):
            raise ValidationError("order must be 1 or 2")
        if self.k_max < 1:
            raise ValidationError("k_max must be >= 1")
        if self.bg_source not in ("resample", "prior"):
            raise ValidationError("bg_source must be 'resample' or 'prior'")


@dataclass(frozen=True)
class ExplanationReport:
    observation_index: int
    feature_names: tuple[str, ...]
    y_obs: float
    reference_kind: str
    mode_index: int | None
    y_ref: float
    x_ref: np.ndarray
    scores: ResponsibleScores
    shap: ShapleyAttribution
    z: float
    z_m: float | None
    decomposition: DeviationDecomposition
    map_result: MapResult | None
    settings: dict


@contextmanager
def _stage(name: str):
    """Tag pipeline errors with the stage that raised them."""
    try:
        yield
    except DevexplainError as exc:
        if getattr(exc, "stage", None) is None:
            exc.stage = name
            if exc.args:
                exc.args = (f"{name}: {exc.args[0]}",) + exc.args[1:]
            else:
                exc.args = (name,)
        raise


def explain(
    model: PredictiveModel,
    priors: FeaturePriors,
    data: Dataset,
    observation_index: int,
    reference,
    settings: ExplainSettings,
) -> ExplanationReport:
    """Full per-observation explanation against a mean or mode reference.

    ``reference`` is the string "mean" or a pair ("mode", m) selecting the
    m-th densest mode of a mixture fitted to the labels.

    The mean reference compares against the feature means with y_ref = label
    mean (for a least-squares linear model the two are consistent: f at the
    feature means equals the label mean).  The mode reference fits a label
    mixture, picks mode m, and solves the inverse problem for the feature
    vector that best explains that mode, so the reference point is
    mode-specific.

    The master seed is split into three child streams (label mixture, MAP
    search, background) so stages stay decoupled but reproducible.
    """
    reports = explain_many(
        model, priors, data, [observation_index], reference, settings
    )
    return reports[0]


def explain_many(
    model: PredictiveModel,
    priors: FeaturePriors,
    data: Dataset,
    indices,
    reference,
    settings: ExplainSettings,
) -> list[ExplanationReport]:
    """Explain several observations that share one reference.

    The reference itself does not depend on the observation, so the heavy
    stages (label mixture, MAP search, background draw) run once and are
    reused across ``indices``.  Each returned report is identical to what a
    single-index `explain` call would produce.
    """
    indices = [int(i) for i in indices]
    for observation_index in indices:
        if not 0 <= observation_index < data.n:
            raise ValidationError(
                f"observation index {observation_index} out of range 0..{data.n - 1}"
            )
    if isinstance(reference, str):
        ref_kind, mode_index = reference, None
        if ref_kind != "mean":
            raise ValidationError(f"unknown reference {reference!r}")
    else:
        try:
            ref_kind, mode_index = reference
        except (TypeError, ValueError):
            raise ValidationError(f"unknown reference {reference!r}") from None
        if ref_kind != "mode" or not isinstance(mode_index, int) or mode_index < 0:
            raise ValidationError(f"unknown reference {reference!r}")
    if not indices:
        return []

    gmm_seed, map_seed, bg_seed = (
        int(child.generate_state(1)[0])
        for child in np.random.SeedSequence(settings.seed).spawn(3)
    )

    with _stage("residuals"):
        stats = residual_stats(model, data)
        sigma2 = clamp_sigma_e_squared(stats.sigma_e_squared, data.labels)

    map_result = None
    mode = None
    budget = settings.budget
    if ref_kind == "mean":
        y_ref = float(data.labels.mean())
        x_ref = data.features.mean(axis=0)
    else:
        with _stage("label-mixture"):
            k = select_k(data.labels, settings.k_max, gmm_seed)
            label_gmm = fit_gmm(data.labels, k, gmm_seed)
            mode_list = modes(label_gmm)
            if mode_index >= len(mode_list):
                raise ValidationError(
                    f"mode {mode_index} requested but only {len(mode_list)} found"
                )
            mode = mode_list[mode_index]
        with _stage("map-search"):
            if budget is None:
                budget = default_budget(priors)
            map_result = reference_point(
                model, priors, sigma2, mode, budget, map_seed
            )
            x_ref = map_result.map_point
            y_ref = mode.location

    with _stage("background"):
        source = priors if settings.bg_source == "prior" else data
        bg = draw_background(source, settings.np_count, bg_seed)

    label_std = float(data.labels.std())
    reports = []
    for observation_index in indices:
        x_obs, y_obs = data.row(observation_index)

        with _stage("decompose"):
            decomp = decompose_deviation(
                model, bg, x_obs, x_ref, y_obs, y_ref, order=settings.order
            )

        with _stage("scores"):
            scores = responsible_scores(
                decomp,
                settings.degeneracy_tau,
                label_std,
                ref_kind,
                mode_index,
            )

        with _stage("shapley"):
            shap = shapley_values(model, bg, x_obs)

        echo = {
            "seed": settings.seed,
            "np": settings.np_count,
            "order": settings.order,
            "k_max": settings.k_max,
            "degeneracy_tau": settings.degeneracy_tau,
            "bg_source": settings.bg_source,
            "budget": None
            if budget is None
            else {
                "n_runs": budget.n_runs,
                "assumed_k": budget.assumed_k,
                "min_basin_prob": budget.min_basin_prob,
                "failure_prob": budget.failure_prob,
            },
        }
        reports.append(
            ExplanationReport(
                observation_index=observation_index,
                feature_names=data.feature_names,
                y_obs=y_obs,
                reference_kind=ref_kind,
                mode_index=mode_index,
                y_ref=y_ref,
                x_ref=np.asarray(x_ref, dtype=float),
                scores=scores,
                shap=shap,
                z=z_score(y_obs, data.labels),
                z_m=None if mode is None else mode_z_score(y_obs, mode),
                decomposition=decomp,
                map_result=map_result,
                settings=echo,
            )
        )
    return reports


def _finite_or_none(value: float) -> float | None:
    value = float(value)
    return value if math.isfinite(value) else None


def _vector_or_none(arr: np.ndarray | None) -> list | None:
    if arr is None:
        return None
    return [_finite_or_none(v) for v in np.asarray(arr).reshape(-1)]


def scores_to_json(scores: ResponsibleScores) -> dict:
    return {
        "first_order": _vector_or_none(scores.first_order),
        "second_order": None
        if scores.second_order is None
        else [[_finite_or_none(v) for v in row] for row in scores.second_order],
        "residual_share": _finite_or_none(scores.residual_share),
        "reference_kind": scores.reference_kind,
        "mode_index": scores.mode_index,
        "degenerate": scores.degenerate,
    }


def report_to_json(report: ExplanationReport) -> dict:
    return {
        "schema": REPORT_SCHEMA,
        "observation_index": report.observation_index,
        "feature_names": list(report.feature_names),
        "y_obs": report.y_obs,
        "reference_kind": report.reference_kind,
        "mode_index": report.mode_index,
        "y_ref": report.y_ref,
        "x_ref": report.x_ref.tolist(),
        "scores": scores_to_json(report.scores),
        "shap": {
            "values": report.shap.values.tolist(),
            "base_value": report.shap.base_value,
            "np_used": report.shap.np_used,
        },
        "z": report.z,
        "z_m": report.z_m,
        "decomposition": decomposition_to_json(report.decomposition),
        "map_result": None
        if report.map_result is None
        else map_result_to_json(report.map_result),
        "settings": report.settings,
    }


def report_rows(report: ExplanationReport) -> list[dict]:
    """One flat dict per feature, for CSV export and cross-report tables."""
    rows = []
    for i, name in enumerate(report.feature_names):
        rows.append(
            {
                "observation_index": report.observation_index,
                "feature": name,
                "reference_kind": report.reference_kind,
                "mode_index": "" if report.mode_index is None else report.mode_index,
                "y_obs": report.y_obs,
                "y_ref": report.y_ref,
                "z": report.z,
                "z_m": "" if report.z_m is None else report.z_m,
                "delta": report.decomposition.first_order[i],
                "score": ""
                if report.scores.degenerate
                else report.scores.first_order[i],
                "shap": report.shap.values[i],
                "degenerate": report.scores.degenerate,
            }
        )
    return rows
