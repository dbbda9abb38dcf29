"""1-D Gaussian mixtures: EM fitting, BIC model selection, mode finding.

Mixtures serve two roles here.  Fitted to the labels, their density modes
are the reference values that deviations are measured against, each with a
mode-local standard deviation for z-scoring.  Fitted to (or supplied for)
each feature column, they form the independent prior p(x) = prod_I p(x_I).
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.special import logsumexp

from .dataset import Dataset, MixtureSpec
from .errors import NumericalError, ValidationError

_EM_REL_TOL = 1e-8
_EM_MAX_ITERS = 500
_EM_RESTARTS = 5
# large enough that BIC cannot buy likelihood with singleton spike
# components on small samples, small next to any real component variance
_VARIANCE_FLOOR_FRAC = 1e-4
_MODE_STEP_TOL = 1e-10
_MODE_MAX_ITERS = 10_000

_LOG_2PI = math.log(2.0 * math.pi)


@dataclass(frozen=True)
class GaussianMixture1D:
    """Weighted sum of 1-D normals; components are (weight, mean, variance)."""

    components: tuple[tuple[float, float, float], ...]
    fitted_n: int = 0
    log_likelihood: float = math.nan
    # Total log-likelihood after each EM iteration of the winning restart;
    # empty for mixtures built directly from a MixtureSpec.
    history: tuple[float, ...] = ()

    def __post_init__(self):
        comps = tuple((float(w), float(m), float(v)) for w, m, v in self.components)
        object.__setattr__(self, "components", comps)
        object.__setattr__(self, "history", tuple(self.history))
        if not comps:
            raise ValidationError("mixture needs at least one component")
        if abs(math.fsum(w for w, _, _ in comps) - 1.0) > 1e-9:
            raise ValidationError("mixture weights must sum to 1 within 1e-9")
        if any(v <= 0 for _, _, v in comps):
            raise ValidationError("component variances must be positive")

    @property
    def k(self) -> int:
        return len(self.components)

    @property
    def weights(self) -> np.ndarray:
        return np.array([w for w, _, _ in self.components])

    @property
    def means(self) -> np.ndarray:
        return np.array([m for _, m, _ in self.components])

    @property
    def variances(self) -> np.ndarray:
        return np.array([v for _, _, v in self.components])

    @property
    def stds(self) -> np.ndarray:
        return np.sqrt(self.variances)

    def sample(self, rng: np.random.Generator, n: int) -> np.ndarray:
        comps = rng.choice(self.k, size=n, p=self.weights)
        return self.means[comps] + self.stds[comps] * rng.standard_normal(n)


@dataclass(frozen=True)
class ModeInfo:
    """One local maximum of a mixture density.

    ``sigma_m`` is the std of the component with the largest responsibility
    at the mode; ``weight`` is that component's mixing weight.
    """

    location: float
    density: float
    component_index: int
    sigma_m: float
    weight: float


@dataclass(frozen=True)
class FeaturePriors:
    """Independent per-feature priors: p(x) = prod_I p(x_I)."""

    per_feature: tuple[GaussianMixture1D, ...]

    def __post_init__(self):
        object.__setattr__(self, "per_feature", tuple(self.per_feature))
        if not self.per_feature:
            raise ValidationError("need at least one per-feature prior")

    @property
    def d_x(self) -> int:
        return len(self.per_feature)

    def sample(self, rng: np.random.Generator, n: int) -> np.ndarray:
        """Draw n feature vectors, columns independent per the prior."""
        out = np.empty((n, self.d_x))
        for i, gmm in enumerate(self.per_feature):
            out[:, i] = gmm.sample(rng, n)
        return out


def priors_from_specs(specs) -> FeaturePriors:
    """Build exact priors from known generating mixtures (no fitting)."""
    return FeaturePriors(per_feature=tuple(from_mixture_spec(s) for s in specs))


def from_mixture_spec(spec: MixtureSpec) -> GaussianMixture1D:
    comps = tuple((w, m, s * s) for w, m, s in spec.components)
    return GaussianMixture1D(components=comps)


def _component_log_pdfs(gmm: GaussianMixture1D, y: np.ndarray) -> np.ndarray:
    """n x k matrix of log(w_k) + log phi_k(y)."""
    y = np.atleast_1d(np.asarray(y, dtype=float))
    means = gmm.means
    variances = gmm.variances
    log_w = np.log(gmm.weights)
    z2 = (y[:, None] - means[None, :]) ** 2 / variances[None, :]
    return log_w[None, :] - 0.5 * (z2 + np.log(variances)[None, :] + _LOG_2PI)


def log_density(gmm: GaussianMixture1D, y) -> np.ndarray | float:
    lp = logsumexp(_component_log_pdfs(gmm, y), axis=1)
    return float(lp[0]) if np.isscalar(y) else lp


def density(gmm: GaussianMixture1D, y) -> np.ndarray | float:
    """Mixture pdf sum_k w_k phi((y - mu_k)/sigma_k)/sigma_k."""
    return np.exp(log_density(gmm, y))


def _total_log_likelihood(gmm: GaussianMixture1D, samples: np.ndarray) -> float:
    return float(np.sum(logsumexp(_component_log_pdfs(gmm, samples), axis=1)))


def _kmeanspp_centers(samples: np.ndarray, k: int, rng: np.random.Generator) -> np.ndarray:
    centers = [samples[rng.integers(samples.size)]]
    for _ in range(1, k):
        d2 = np.min((samples[:, None] - np.array(centers)[None, :]) ** 2, axis=1)
        total = d2.sum()
        if total <= 0:
            # remaining points coincide with a center; fall back to uniform
            centers.append(samples[rng.integers(samples.size)])
            continue
        centers.append(samples[rng.choice(samples.size, p=d2 / total)])
    return np.array(centers)


def _em_once(samples: np.ndarray, k: int, rng: np.random.Generator,
             floor: float) -> tuple[GaussianMixture1D, float]:
    n = samples.size
    centers = _kmeanspp_centers(samples, k, rng)
    assign = np.argmin(np.abs(samples[:, None] - centers[None, :]), axis=1)
    weights = np.empty(k)
    means = np.empty(k)
    variances = np.empty(k)
    for j in range(k):
        members = samples[assign == j]
        weights[j] = max(members.size, 1) / n
        means[j] = members.mean() if members.size else centers[j]
        variances[j] = max(members.var() if members.size else 0.0, floor)
    weights /= weights.sum()

    # raw-array EM loop; the frozen mixture object is built once at the end
    col = samples[:, None]
    log_l = -math.inf
    history = []
    for _ in range(_EM_MAX_ITERS):
        log_comp = (
            np.log(weights)
            - 0.5 * (np.log(variances) + _LOG_2PI)
            - (col - means) ** 2 / (2.0 * variances)
        )
        peak = log_comp.max(axis=1)
        resp = np.exp(log_comp - peak[:, None])
        norm = resp.sum(axis=1)
        new_log_l = float(np.sum(peak + np.log(norm)))
        history.append(new_log_l)
        if abs(new_log_l - log_l) <= _EM_REL_TOL * max(1.0, abs(new_log_l)):
            log_l = new_log_l
            break
        log_l = new_log_l
        resp /= norm[:, None]
        mass = np.maximum(resp.sum(axis=0), 1e-300)
        weights = mass / n
        means = resp.T @ samples / mass
        variances = np.maximum(
            np.einsum("nk,nk->k", resp, (col - means) ** 2) / mass, floor
        )
    fitted = GaussianMixture1D(
        components=tuple(zip(weights, means, variances)),
        fitted_n=n,
        log_likelihood=log_l,
        history=tuple(history),
    )
    return fitted, log_l


def fit_gmm(samples, k: int, seed: int) -> GaussianMixture1D:
    """Fit a k-component mixture by EM, best of 5 seeded restarts.

    Each restart is k-means++ seeded from its own child stream of ``seed``
    and iterated until the relative log-likelihood change drops below 1e-8
    (500 iterations cap).  Variances are floored at 1e-4 times the sample
    variance: this both prevents numerical collapse and keeps model
    selection from spending components on single points.

    Parameters
    ----------
    samples : array_like
        1-D observations, length >= 2k.
    k : int
        Number of components, >= 1.
    seed : int
        Restart stream seed; fixed (samples, k, seed) gives a fixed result.
    """
    samples = np.asarray(samples, dtype=float).reshape(-1)
    if k < 1:
        raise ValidationError("k must be >= 1")
    if samples.size < 2 * k:
        raise ValidationError(f"need at least {2 * k} samples to fit k={k}")
    if not np.all(np.isfinite(samples)):
        raise ValidationError("samples contain non-finite entries")
    spread = float(samples.var())
    if spread == 0.0:
        raise NumericalError("all samples identical; mixture fit is degenerate")
    floor = _VARIANCE_FLOOR_FRAC * spread
    best = None
    best_log_l = -math.inf
    for child in np.random.SeedSequence(seed).spawn(_EM_RESTARTS):
        fitted, log_l = _em_once(samples, k, np.random.default_rng(child), floor)
        if log_l > best_log_l:
            best, best_log_l = fitted, log_l
    return best


def bic(gmm: GaussianMixture1D) -> float:
    """-2 logL + (3k - 1) ln n; lower is better."""
    return -2.0 * gmm.log_likelihood + (3 * gmm.k - 1) * math.log(gmm.fitted_n)


def select_k(samples, k_max: int, seed: int) -> int:
    """Number of components minimizing BIC over k = 1..k_max."""
    if k_max < 1:
        raise ValidationError("k_max must be >= 1")
    samples = np.asarray(samples, dtype=float).reshape(-1)
    best_k, best_bic = 1, math.inf
    for k in range(1, k_max + 1):
        if samples.size < 2 * k:
            break  # larger k has no data support
        score = bic(fit_gmm(samples, k, seed))
        if score < best_bic:
            best_k, best_bic = k, score
    return best_k


def _mean_shift(gmm: GaussianMixture1D, y0: float) -> float:
    """Fixed point of m(y) = sum_k r_k(y) mu_k with r_k ~ w_k phi_k(y)/var_k.

    The weighting by 1/var_k makes the fixed points exactly the stationary
    points of the mixture density.
    """
    means = gmm.means
    variances = gmm.variances
    y = float(y0)
    for _ in range(_MODE_MAX_ITERS):
        log_r = _component_log_pdfs(gmm, y)[0] - np.log(variances)
        r = np.exp(log_r - logsumexp(log_r))
        y_next = float(np.dot(r, means))
        if abs(y_next - y) < _MODE_STEP_TOL:
            return y_next
        y = y_next
    return y


def modes(gmm: GaussianMixture1D) -> list[ModeInfo]:
    """Local maxima of the mixture density, sorted by density descending.

    Ascent starts from every component mean; converged points closer than
    1e-3 times the smallest component std are merged.  The first entry is
    the dominant mode.
    """
    dedup = 1e-3 * float(gmm.stds.min())
    found: list[float] = []
    for start in gmm.means:
        y = _mean_shift(gmm, float(start))
        if any(abs(y - other) <= dedup for other in found):
            continue
        found.append(y)
    out = []
    for y in found:
        resp = _component_log_pdfs(gmm, y)[0]
        comp = int(np.argmax(resp))
        sigma_m = float(gmm.stds[comp])
        # drop mean-shift fixed points that are not density maxima
        dens = float(density(gmm, y))
        probe = 1e-4 * sigma_m
        if dens < float(density(gmm, y - probe)) or dens < float(density(gmm, y + probe)):
            continue
        out.append(
            ModeInfo(
                location=float(y),
                density=dens,
                component_index=comp,
                sigma_m=sigma_m,
                weight=float(gmm.weights[comp]),
            )
        )
    out.sort(key=lambda m: m.density, reverse=True)
    return out


def z_score(y: float, samples) -> float:
    """(y - sample mean) / population (1/N) sample std."""
    samples = np.asarray(samples, dtype=float).reshape(-1)
    std = float(samples.std())
    if std <= 0:
        raise ValidationError("sample std must be positive for z-scores")
    return (float(y) - float(samples.mean())) / std


def mode_z_score(y: float, mode: ModeInfo) -> float:
    """(y - mode location) / sigma_m."""
    if mode.sigma_m <= 0:
        raise ValidationError("mode sigma_m must be positive")
    return (float(y) - mode.location) / mode.sigma_m


def fit_priors(data: Dataset, k_max: int, seed: int) -> FeaturePriors:
    """Per-column BIC-selected mixture fits; one child seed stream per column."""
    children = np.random.SeedSequence(seed).spawn(data.d_x)
    fitted = []
    for i in range(data.d_x):
        col_seed = int(children[i].generate_state(1)[0])
        col = data.features[:, i]
        k = select_k(col, k_max, col_seed)
        fitted.append(fit_gmm(col, k, col_seed))
    return FeaturePriors(per_feature=tuple(fitted))


def log_prior(priors: FeaturePriors, x) -> float:
    """sum_I ln p_I(x_I) under the independent per-feature priors."""
    x = np.asarray(x, dtype=float).reshape(-1)
    if x.size != priors.d_x:
        raise ValidationError(f"x has {x.size} entries, priors expect {priors.d_x}")
    return float(
        sum(log_density(gmm, float(v)) for gmm, v in zip(priors.per_feature, x))
    )


def mixture_to_json(gmm: GaussianMixture1D) -> dict:
    return {
        "weights": list(gmm.weights),
        "means": list(gmm.means),
        "stds": list(gmm.stds),
    }


def mixture_from_json(doc: dict) -> GaussianMixture1D:
    try:
        triples = list(zip(doc["weights"], doc["means"], doc["stds"], strict=True))
    except (KeyError, TypeError, ValueError) as exc:
        raise ValidationError(f"bad mixture document: {exc}") from exc
    return GaussianMixture1D(
        components=tuple((w, m, s * s) for w, m, s in triples)
    )


def save_mixture(gmm: GaussianMixture1D, path: str | Path) -> None:
    with open(path, "w") as fh:
        json.dump(mixture_to_json(gmm), fh, indent=2)
        fh.write("\n")


def load_mixture(path: str | Path) -> GaussianMixture1D:
    with open(path) as fh:
        return mixture_from_json(json.load(fh))
