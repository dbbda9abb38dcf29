"""Data model, synthetic multimodal generator, CSV ingestion, and splitting.

A :class:`Dataset` is an immutable bundle of an ``N x d`` feature matrix and
a length-``N`` label vector.  Synthetic data is drawn feature-by-feature from
1-D Gaussian mixtures and combined additively, which is the generating
process the rest of the package is demonstrated on.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass
from importlib import resources
from pathlib import Path

import numpy as np

from .errors import IngestionError, ValidationError

_WEIGHT_TOL = 1e-12


def _frozen_array(values, dtype=float) -> np.ndarray:
    arr = np.asarray(values, dtype=dtype)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class Dataset:
    """N observations of d_x features plus a scalar label per observation."""

    features: np.ndarray
    labels: np.ndarray
    feature_names: tuple[str, ...]
    label_name: str = "y"

    def __post_init__(self):
        feats = np.atleast_2d(np.asarray(self.features, dtype=float))
        labels = np.asarray(self.labels, dtype=float).reshape(-1)
        if feats.size == 0:
            feats = feats.reshape(labels.shape[0], len(self.feature_names))
        object.__setattr__(self, "features", _frozen_array(feats))
        object.__setattr__(self, "labels", _frozen_array(labels))
        object.__setattr__(self, "feature_names", tuple(self.feature_names))
        if self.features.ndim != 2:
            raise ValidationError("features must be a 2-D matrix")
        n, d = self.features.shape
        if labels.shape[0] != n:
            raise ValidationError(
                f"labels has {labels.shape[0]} entries for {n} feature rows"
            )
        if len(self.feature_names) != d:
            raise ValidationError(
                f"{len(self.feature_names)} feature names for {d} columns"
            )
        if not all(name for name in self.feature_names):
            raise ValidationError("feature names must be non-empty")
        if len(set(self.feature_names)) != d:
            raise ValidationError("feature names must be unique")
        if n and not np.all(np.isfinite(self.features)):
            raise ValidationError("features contain non-finite entries")
        if n and not np.all(np.isfinite(self.labels)):
            raise ValidationError("labels contain non-finite entries")

    @property
    def n(self) -> int:
        return self.features.shape[0]

    @property
    def d_x(self) -> int:
        return self.features.shape[1]

    def row(self, index: int) -> tuple[np.ndarray, float]:
        """Feature vector and label of one observation."""
        if not 0 <= index < self.n:
            raise ValidationError(f"observation index {index} out of range 0..{self.n - 1}")
        return self.features[index].copy(), float(self.labels[index])

    def save_csv(self, path: str | Path) -> None:
        """Write header plus rows; floats use shortest round-trip repr."""
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(list(self.feature_names) + [self.label_name])
            for i in range(self.n):
                writer.writerow(
                    [repr(float(v)) for v in self.features[i]]
                    + [repr(float(self.labels[i]))]
                )


@dataclass(frozen=True)
class MixtureSpec:
    """Exact 1-D Gaussian mixture: list of (weight, mean, std) components."""

    components: tuple[tuple[float, float, float], ...]

    def __post_init__(self):
        comps = tuple((float(w), float(m), float(s)) for w, m, s in self.components)
        object.__setattr__(self, "components", comps)
        if not comps:
            raise ValidationError("mixture needs at least one component")
        total = math.fsum(w for w, _, _ in comps)
        if abs(total - 1.0) > _WEIGHT_TOL:
            raise ValidationError(f"mixture weights sum to {total!r}, expected 1")
        if any(w < 0 for w, _, _ in comps):
            raise ValidationError("mixture weights must be nonnegative")
        if any(s <= 0 for _, _, s in comps):
            raise ValidationError("mixture stds must be positive")

    @property
    def weights(self) -> np.ndarray:
        return np.array([w for w, _, _ in self.components])

    @property
    def means(self) -> np.ndarray:
        return np.array([m for _, m, _ in self.components])

    @property
    def stds(self) -> np.ndarray:
        return np.array([s for _, _, s in self.components])

    def mean(self) -> float:
        """Mixture mean sum_k w_k * mu_k."""
        return float(np.dot(self.weights, self.means))

    def sample(self, rng: np.random.Generator, n: int) -> np.ndarray:
        comps = rng.choice(len(self.components), size=n, p=self.weights)
        return self.means[comps] + self.stds[comps] * rng.standard_normal(n)


@dataclass(frozen=True)
class SyntheticSpec:
    """Additive generator: each feature from its mixture, y = sum_I x_I + noise."""

    feature_specs: tuple[MixtureSpec, ...]
    label_noise_std: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "feature_specs", tuple(self.feature_specs))
        if len(self.feature_specs) < 1:
            raise ValidationError("need at least one feature spec")
        if self.label_noise_std < 0:
            raise ValidationError("label_noise_std must be nonnegative")

    @property
    def d_x(self) -> int:
        return len(self.feature_specs)


def generate_synthetic(spec: SyntheticSpec, n: int, seed: int) -> Dataset:
    """Draw ``n`` observations from ``spec``.

    Each feature column gets its own child stream of ``seed`` (spawned via
    ``numpy.random.SeedSequence``), so adding a column never perturbs the
    draws of existing columns.  The label-noise stream is the last child.
    """
    if n < 0:
        raise ValidationError("n must be nonnegative")
    d = spec.d_x
    children = np.random.SeedSequence(seed).spawn(d + 1)
    features = np.empty((n, d))
    for i, mix in enumerate(spec.feature_specs):
        features[:, i] = mix.sample(np.random.default_rng(children[i]), n)
    labels = features.sum(axis=1)
    if spec.label_noise_std > 0:
        noise_rng = np.random.default_rng(children[d])
        labels = labels + spec.label_noise_std * noise_rng.standard_normal(n)
    names = tuple(f"x{i}" for i in range(d))
    return Dataset(features=features, labels=labels, feature_names=names)


def load_csv(path: str | Path, label_column: str) -> Dataset:
    """Read a one-header-row, comma-delimited numeric CSV.

    The ``label_column`` becomes the labels; all remaining columns become
    features in header order.  Any cell that does not parse as a finite
    number raises :class:`IngestionError` naming its row and column.
    """
    path = Path(path)
    if not path.exists():
        raise IngestionError(f"no such file: {path}")
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise IngestionError(f"{path}: file is empty") from None
        header = [h.strip() for h in header]
        if label_column not in header:
            raise IngestionError(
                f"{path}: label column {label_column!r} not in header {header}"
            )
        label_idx = header.index(label_column)
        rows = []
        for r, row in enumerate(reader, start=2):  # header is line 1
            if not row:
                continue
            if len(row) != len(header):
                raise IngestionError(
                    f"{path}: line {r} has {len(row)} cells, header has {len(header)}"
                )
            parsed = []
            for c, cell in enumerate(row):
                try:
                    value = float(cell)
                except ValueError:
                    value = math.nan
                if not math.isfinite(value):
                    raise IngestionError(
                        f"{path}: non-numeric cell {cell.strip()!r} at line {r}, "
                        f"column {header[c]!r}"
                    )
                parsed.append(value)
            rows.append(parsed)
    feature_names = tuple(h for i, h in enumerate(header) if i != label_idx)
    if rows:
        data = np.array(rows)
        labels = data[:, label_idx]
        features = np.delete(data, label_idx, axis=1)
    else:
        features = np.empty((0, len(feature_names)))
        labels = np.empty(0)
    return Dataset(
        features=features,
        labels=labels,
        feature_names=feature_names,
        label_name=label_column,
    )


def split(data: Dataset, train_fraction: float, seed: int) -> tuple[Dataset, Dataset]:
    """Disjoint shuffled partition with round(train_fraction * N) training rows."""
    if data.n < 2:
        raise ValidationError("need at least 2 observations to split")
    if not 0.0 < train_fraction < 1.0:
        raise ValidationError("train_fraction must be in (0, 1)")
    rng = np.random.default_rng(seed)
    order = rng.permutation(data.n)
    n_train = int(round(train_fraction * data.n))
    picks = (order[:n_train], order[n_train:])
    return tuple(
        Dataset(
            features=data.features[idx],
            labels=data.labels[idx],
            feature_names=data.feature_names,
            label_name=data.label_name,
        )
        for idx in picks
    )


def mixture_spec_to_json(spec: MixtureSpec) -> dict:
    return {
        "weights": list(spec.weights),
        "means": list(spec.means),
        "stds": list(spec.stds),
    }


def mixture_spec_from_json(doc: dict) -> MixtureSpec:
    try:
        triples = list(zip(doc["weights"], doc["means"], doc["stds"], strict=True))
    except (KeyError, TypeError, ValueError) as exc:
        raise ValidationError(f"bad mixture document: {exc}") from exc
    return MixtureSpec(components=tuple(triples))


def synthetic_spec_to_json(spec: SyntheticSpec) -> dict:
    return {
        "features": [mixture_spec_to_json(m) for m in spec.feature_specs],
        "noise_std": spec.label_noise_std,
    }


def synthetic_spec_from_json(doc: dict) -> SyntheticSpec:
    if "features" not in doc:
        raise ValidationError("synthetic spec document needs a 'features' list")
    mixes = tuple(mixture_spec_from_json(m) for m in doc["features"])
    return SyntheticSpec(
        feature_specs=mixes, label_noise_std=float(doc.get("noise_std", 0.0))
    )


def load_synthetic_spec(path: str | Path) -> SyntheticSpec:
    try:
        with open(path) as fh:
            doc = json.load(fh)
    except FileNotFoundError:
        raise IngestionError(f"no such file: {path}") from None
    except json.JSONDecodeError as exc:
        raise IngestionError(f"{path}: invalid JSON ({exc})") from exc
    return synthetic_spec_from_json(doc)


def river_fixture_path() -> Path:
    """Path of the bundled 20-row river-flow style fixture CSV.

    Columns h, hp, ww are upstream level/precipitation/wastewater style
    features; njr is the label, close to 1.2 h + 0.6 hp + 1.02 ww plus
    small noise, with a 16-row low cluster, a 3-row high cluster, and one
    row whose label sits almost exactly on the overall mean.
    """
    return Path(resources.files("devexplain") / "data" / "river_fixture.csv")


def trimodal_benchmark_spec() -> SyntheticSpec:
    """The three-feature trimodal benchmark generator used throughout the docs.

    Features share components 0.3 N(0,1) + 0.3 N(4,1) + 0.4 N(8, s^2) with
    s = 0.5, 0.75, 1.  Labels are the plain feature sum (no noise), so a
    linear fit recovers unit coefficients.
    """
    stds = (0.5, 0.75, 1.0)
    mixes = tuple(
        MixtureSpec(components=((0.3, 0.0, 1.0), (0.3, 4.0, 1.0), (0.4, 8.0, s)))
        for s in stds
    )
    return SyntheticSpec(feature_specs=mixes, label_noise_std=0.0)
