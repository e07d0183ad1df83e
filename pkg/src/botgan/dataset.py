"""Labelled tabular account data: schema, CSV I/O, splitting, scaling, augmentation.

A :class:`Dataset` keeps the feature matrix, integer labels and a per-record
provenance tag as read-only numpy arrays. Every operation returns a new
dataset; nothing here mutates its inputs.
"""
from __future__ import annotations

import csv
import hashlib
import math
from fractions import Fraction
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterator, Mapping, NamedTuple, Sequence

import numpy as np

from .errors import (
    BadCovariance,
    ClassTooSmall,
    EmptyDataset,
    MissingColumn,
    NonNumericCell,
    SchemaMismatch,
    UnknownCategory,
    UnknownLabel,
    WidthMismatch,
)

DEFAULT_CATEGORIES = (
    ("content", 182),
    ("sentiment", 58),
    ("temporal", 29),
    ("user", 28),
    ("hashtag", 13),
)

# Table order of the source corpus; "other" is dropped from the experiment map.
FULL_LABELS = ("spam", "social", "political", "cyborg", "self-declared", "other", "human")
DEFAULT_LABELS = ("spam", "social", "political", "cyborg", "self-declared", "human")

PROVENANCE_TAGS = ("original", "cgan", "acgan", "adasyn", "smote_enn")

LABEL_COLUMN = "label"
PROVENANCE_COLUMN = "provenance"


@dataclass(frozen=True)
class FeatureSchema:
    """Ordered feature categories; columns are laid out category by category."""

    categories: tuple[tuple[str, int], ...] = DEFAULT_CATEGORIES

    def __post_init__(self):
        cats = tuple((str(name), int(width)) for name, width in self.categories)
        object.__setattr__(self, "categories", cats)
        names = [name for name, _ in cats]
        if not cats:
            raise ValueError("schema needs at least one category")
        if any(not name for name in names) or len(set(names)) != len(names):
            raise ValueError(f"category names must be unique and non-empty: {names}")
        if any(width < 1 for _, width in cats):
            raise ValueError("category widths must be >= 1")

    @property
    def total_width(self) -> int:
        return sum(width for _, width in self.categories)

    @property
    def names(self) -> list[str]:
        return [name for name, _ in self.categories]

    def columns(self) -> list[str]:
        return [f"{name}_{i}" for name, width in self.categories for i in range(width)]

    def category_slice(self, name: str) -> slice:
        start = 0
        for cat, width in self.categories:
            if cat == name:
                return slice(start, start + width)
            start += width
        raise UnknownCategory(f"unknown feature category {name!r}; have {self.names}")

    def digest(self) -> str:
        text = ";".join(f"{n}:{w}" for n, w in self.categories)
        return hashlib.sha256(text.encode()).hexdigest()[:16]

    @classmethod
    def proportional(cls, total_width: int) -> "FeatureSchema":
        """Shrink the default five-category layout to ``total_width`` columns.

        Widths follow the default proportions (largest-remainder rounding),
        each category keeping at least one column. The full width reproduces
        the default layout exactly.
        """
        k = len(DEFAULT_CATEGORIES)
        if total_width < k:
            raise ValueError(f"need at least {k} columns, got {total_width}")
        full = sum(w for _, w in DEFAULT_CATEGORIES)
        raw = [Fraction(w * total_width, full) for _, w in DEFAULT_CATEGORIES]
        widths = [int(math.floor(r)) for r in raw]
        leftover = total_width - sum(widths)
        order = sorted(range(k), key=lambda i: (-(raw[i] - math.floor(raw[i])), i))
        for i in order[:leftover]:
            widths[i] += 1
        for i in range(k):
            if widths[i] == 0:
                widths[i] = 1
                widths[int(np.argmax(widths))] -= 1
        return cls(tuple((name, w) for (name, _), w in zip(DEFAULT_CATEGORIES, widths)))


@dataclass(frozen=True)
class ClassMap:
    labels: tuple[str, ...] = DEFAULT_LABELS

    def __post_init__(self):
        labels = tuple(str(label) for label in self.labels)
        object.__setattr__(self, "labels", labels)
        if len(labels) < 2:
            raise ValueError("a class map needs at least two labels")
        if len(set(labels)) != len(labels) or any(not lab for lab in labels):
            raise ValueError(f"labels must be unique and non-empty: {labels}")

    @property
    def k(self) -> int:
        return len(self.labels)

    @property
    def encoding(self) -> dict[str, int]:
        return {label: i for i, label in enumerate(self.labels)}

    def index(self, label: str) -> int:
        return self.labels.index(label)

    @classmethod
    def generic(cls, k: int) -> "ClassMap":
        return cls(tuple(f"class_{i}" for i in range(k)))


class AccountRecord(NamedTuple):
    features: np.ndarray
    label: int
    provenance: str = "original"


def _readonly(a: np.ndarray) -> np.ndarray:
    a = np.array(a, copy=True)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class Dataset:
    schema: FeatureSchema
    classes: ClassMap
    features: np.ndarray
    labels: np.ndarray
    provenance: np.ndarray = field(default=None)

    def __post_init__(self):
        d = self.schema.total_width
        x = np.asarray(self.features, dtype=np.float64)
        if x.size == 0:
            x = x.reshape(0, d)
        if x.ndim != 2 or x.shape[1] != d:
            raise WidthMismatch(None, d, x.shape[-1] if x.ndim else 0)
        y = np.asarray(self.labels, dtype=np.int64).reshape(-1)
        if y.shape[0] != x.shape[0]:
            raise ValueError(f"{x.shape[0]} feature rows but {y.shape[0]} labels")
        if y.size and (y.min() < 0 or y.max() >= self.classes.k):
            raise ValueError(f"labels must lie in [0, {self.classes.k})")
        if not np.all(np.isfinite(x)):
            raise ValueError("features contain NaN or infinite values")
        prov = self.provenance
        if prov is None:
            prov = np.full(x.shape[0], "original", dtype="<U9")
        prov = np.asarray(prov, dtype="<U9").reshape(-1)
        if prov.shape[0] != x.shape[0]:
            raise ValueError("provenance length does not match record count")
        object.__setattr__(self, "features", _readonly(x))
        object.__setattr__(self, "labels", _readonly(y))
        object.__setattr__(self, "provenance", _readonly(prov))

    def __len__(self) -> int:
        return self.features.shape[0]

    @property
    def records(self) -> Iterator[AccountRecord]:
        for x, y, p in zip(self.features, self.labels, self.provenance):
            yield AccountRecord(x, int(y), str(p))

    def class_counts(self) -> np.ndarray:
        return np.bincount(self.labels, minlength=self.classes.k)

    def subset(self, index) -> "Dataset":
        index = np.asarray(index)
        if index.dtype != bool:
            index = index.astype(np.int64)
        return Dataset(self.schema, self.classes, self.features[index],
                       self.labels[index], self.provenance[index])

    def with_features(self, features: np.ndarray) -> "Dataset":
        return Dataset(self.schema, self.classes, features, self.labels, self.provenance)

    def with_provenance(self, tag: str) -> "Dataset":
        return Dataset(self.schema, self.classes, self.features, self.labels,
                       np.full(len(self), tag, dtype="<U9"))

    def equals(self, other: "Dataset") -> bool:
        return (self.schema == other.schema and self.classes == other.classes
                and np.array_equal(self.features, other.features)
                and np.array_equal(self.labels, other.labels)
                and np.array_equal(self.provenance, other.provenance))

    @classmethod
    def empty(cls, schema: FeatureSchema, classes: ClassMap) -> "Dataset":
        return cls(schema, classes, np.zeros((0, schema.total_width)), np.zeros(0, dtype=np.int64))


# --- CSV ---------------------------------------------------------------------

def load_csv(path, schema: FeatureSchema, classes: ClassMap) -> Dataset:
    """Read a dataset CSV.

    Every column other than ``label`` (and an optional ``provenance`` column)
    is a feature, in file order. Row and column numbers in errors are 0-based
    positions among data rows and feature columns.
    """
    path = Path(path)
    encoding = classes.encoding
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise MissingColumn(LABEL_COLUMN) from None
        header = [h.strip() for h in header]
        if LABEL_COLUMN not in header:
            raise MissingColumn(LABEL_COLUMN)
        label_at = header.index(LABEL_COLUMN)
        prov_at = header.index(PROVENANCE_COLUMN) if PROVENANCE_COLUMN in header else None
        feat_at = [i for i in range(len(header)) if i not in (label_at, prov_at)]
        width = schema.total_width
        if len(feat_at) != width:
            raise WidthMismatch(None, width, len(feat_at))

        rows, labels, prov = [], [], []
        for r, row in enumerate(reader):
            if not row:
                continue
            if len(row) != len(header):
                raise WidthMismatch(r, width, len(row) - (len(header) - width))
            values = np.empty(width)
            for c, at in enumerate(feat_at):
                cell = row[at]
                try:
                    v = float(cell)
                except ValueError:
                    raise NonNumericCell(r, c, cell) from None
                if not math.isfinite(v):
                    raise NonNumericCell(r, c, cell)
                values[c] = v
            name = row[label_at].strip()
            if name not in encoding:
                raise UnknownLabel(r, name)
            rows.append(values)
            labels.append(encoding[name])
            prov.append(row[prov_at].strip() if prov_at is not None else "original")

    x = np.vstack(rows) if rows else np.zeros((0, width))
    return Dataset(schema, classes, x, np.array(labels, dtype=np.int64), np.array(prov, dtype="<U9"))


def write_csv(d: Dataset, path, *, provenance: bool = False) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    header = d.schema.columns() + [LABEL_COLUMN]
    if provenance:
        header.append(PROVENANCE_COLUMN)
    with path.open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        for x, y, p in zip(d.features, d.labels, d.provenance):
            row = [repr(float(v)) for v in x] + [d.classes.labels[y]]
            if provenance:
                row.append(str(p))
            writer.writerow(row)
    return path


# --- split / scale -----------------------------------------------------------

def stratified_split(d: Dataset, train_fraction: float, seed: int) -> tuple[Dataset, Dataset]:
    """Per-class shuffled split; round-half-up on the train side.

    Each class keeps at least one record on both sides. Output rows keep
    their original relative order.
    """
    if not 0.0 < train_fraction < 1.0:
        raise ValueError("train_fraction must lie in (0, 1)")
    rng = np.random.default_rng(seed)
    counts = d.class_counts()
    train_idx, test_idx = [], []
    for c in range(d.classes.k):
        members = np.flatnonzero(d.labels == c)
        if members.size == 0:
            continue
        if members.size < 2:
            raise ClassTooSmall(d.classes.labels[c], int(members.size), 2)
        n_train = int(math.floor(train_fraction * counts[c] + 0.5))
        n_train = min(max(n_train, 1), int(counts[c]) - 1)
        perm = rng.permutation(members)
        train_idx.append(perm[:n_train])
        test_idx.append(perm[n_train:])
    train = np.sort(np.concatenate(train_idx)) if train_idx else np.zeros(0, dtype=np.int64)
    test = np.sort(np.concatenate(test_idx)) if test_idx else np.zeros(0, dtype=np.int64)
    return d.subset(train), d.subset(test)


@dataclass(frozen=True, eq=False)
class Standardizer:
    mean: np.ndarray
    std: np.ndarray

    def transform_array(self, x: np.ndarray) -> np.ndarray:
        return (np.asarray(x, dtype=np.float64) - self.mean) / self.std

    def inverse_array(self, z: np.ndarray) -> np.ndarray:
        return np.asarray(z, dtype=np.float64) * self.std + self.mean


def fit_standardizer(d: Dataset) -> Standardizer:
    if len(d) == 0:
        raise EmptyDataset("cannot fit a standardizer on an empty dataset")
    mean = d.features.mean(axis=0)
    std = d.features.std(axis=0)
    # zero-variance columns keep their scale
    std = np.where(std > 0.0, std, 1.0)
    return Standardizer(_readonly(mean), _readonly(std))


def transform(s: Standardizer, d: Dataset) -> Dataset:
    return d.with_features(s.transform_array(d.features))


def inverse_transform(s: Standardizer, d: Dataset) -> Dataset:
    return d.with_features(s.inverse_array(d.features))


# --- augmentation ------------------------------------------------------------

def augment(base: Dataset, synthetic: Dataset) -> Dataset:
    if base.schema != synthetic.schema or base.classes != synthetic.classes:
        raise SchemaMismatch("base and synthetic datasets use different schemas or class maps")
    return Dataset(
        base.schema,
        base.classes,
        np.vstack([base.features, synthetic.features]),
        np.concatenate([base.labels, synthetic.labels]),
        np.concatenate([base.provenance, synthetic.provenance]),
    )


def expansion_counts(d: Dataset, phi_a: int, phi_b: int) -> dict[int, int]:
    """Synthetic samples to request per class for an expansion multiple a:b."""
    if phi_b < 1 or phi_a < 0:
        raise ValueError(f"invalid expansion multiple {phi_a}:{phi_b}")
    return {c: int(n) * int(phi_a) // int(phi_b) for c, n in enumerate(d.class_counts())}


# --- fixtures ----------------------------------------------------------------

@dataclass(frozen=True)
class GaussianComponent:
    """One mixture component. ``cov`` may be a scalar variance, a diagonal or a full matrix.

    ``mean`` may be a scalar (repeated), a full vector, or a shorter vector
    that is zero-padded to the schema width.
    """

    mean: object = 0.0
    cov: object = 1.0
    weight: float = 1.0


def _component_factor(comp: GaussianComponent, width: int) -> tuple[np.ndarray, np.ndarray]:
    mean = np.asarray(comp.mean, dtype=np.float64)
    if mean.ndim == 1 and mean.size < width:
        mean = np.concatenate([mean, np.zeros(width - mean.size)])
    mean = np.broadcast_to(mean, (width,)).copy()
    cov = np.asarray(comp.cov, dtype=np.float64)
    if cov.ndim <= 1:
        diag = np.broadcast_to(cov, (width,))
        if not np.all(diag > 0) or not np.all(np.isfinite(diag)):
            raise BadCovariance("diagonal covariance entries must be positive and finite")
        return mean, np.diag(np.sqrt(diag))
    if cov.shape != (width, width) or not np.allclose(cov, cov.T):
        raise BadCovariance(f"covariance must be a symmetric {width}x{width} matrix")
    try:
        return mean, np.linalg.cholesky(cov)
    except np.linalg.LinAlgError:
        raise BadCovariance("covariance is not positive definite") from None


def make_fixture(
    spec: Sequence[Sequence[GaussianComponent]],
    n_per_class,
    schema: FeatureSchema,
    seed: int,
    classes: ClassMap | None = None,
) -> Dataset:
    """Sample a labelled Gaussian-mixture dataset, one mixture per class.

    ``n_per_class`` is a single count or one count per class. Records are
    emitted class by class.
    """
    k = len(spec)
    classes = classes or ClassMap.generic(k)
    if classes.k != k:
        raise ValueError(f"{k} class mixtures but class map has {classes.k} labels")
    sizes = [int(n_per_class)] * k if np.ndim(n_per_class) == 0 else [int(n) for n in n_per_class]
    if len(sizes) != k:
        raise ValueError("n_per_class must give one count per class")
    width = schema.total_width
    factors = [[_component_factor(comp, width) for comp in mixture] for mixture in spec]

    rng = np.random.default_rng(seed)
    xs, ys = [], []
    for c, (mixture, n) in enumerate(zip(spec, sizes)):
        if n == 0:
            continue
        w = np.array([comp.weight for comp in mixture], dtype=np.float64)
        which = rng.choice(len(mixture), size=n, p=w / w.sum())
        eps = rng.standard_normal((n, width))
        x = np.empty((n, width))
        for j, (mean, chol) in enumerate(factors[c]):
            sel = which == j
            x[sel] = mean + eps[sel] @ chol.T
        xs.append(x)
        ys.append(np.full(n, c, dtype=np.int64))
    if not xs:
        return Dataset.empty(schema, classes)
    return Dataset(schema, classes, np.vstack(xs), np.concatenate(ys))


def separable_spec(width: int, offset: float = 3.0) -> list[list[GaussianComponent]]:
    """Two unit-variance classes centred at -offset and +offset in every dimension."""
    return [[GaussianComponent(mean=-offset)], [GaussianComponent(mean=offset)]]


def sparse_spec(width: int, n_classes: int, density: float = 0.4, separation: float = 0.5,
                modes: int = 3, spike: float = 1e-6, seed: int = 0) -> list[list[GaussianComponent]]:
    """Zero-inflated classes, loosely shaped like engineered count features.

    Each class mixes ``modes`` components. A component leaves each feature
    active with probability ``density`` (mean N(0, separation^2), unit
    variance); inactive features sit at 0 with variance ``spike``.
    """
    if not 0 < density <= 1 or spike <= 0:
        raise BadCovariance("density must be in (0, 1] and spike > 0")
    if modes < 1:
        raise ValueError("modes must be >= 1")
    rng = np.random.default_rng(seed)
    out = []
    for _ in range(n_classes):
        mixture = []
        for _ in range(modes):
            active = rng.random(width) < density
            mean = np.where(active, rng.standard_normal(width) * separation, 0.0)
            mixture.append(GaussianComponent(mean=mean, cov=np.diag(np.where(active, 1.0, spike))))
        out.append(mixture)
    return out


def spec_from_mapping(classes: Sequence[Mapping]) -> list[list[GaussianComponent]]:
    """Build a fixture spec from config entries ``{components = [{mean, cov|std, weight}]}``."""
    out = []
    for entry in classes:
        comps = entry.get("components", [entry])
        mixture = []
        for comp in comps:
            if "std" in comp:
                cov = np.square(np.asarray(comp["std"], dtype=np.float64))
            else:
                cov = comp.get("cov", 1.0)
            mixture.append(GaussianComponent(mean=comp.get("mean", 0.0), cov=cov,
                                             weight=float(comp.get("weight", 1.0))))
        out.append(mixture)
    return out


def factor_spec(width: int, n_classes: int, latent_dim: int = 3, separation: float = 2.0,
                noise: float = 0.05, seed: int = 0, modes: int = 1) -> list[list[GaussianComponent]]:
    """Classes sharing a low-rank correlated covariance, shifted along the latent factors.

    Each class is an equal-weight mixture of ``modes`` components
    N(A m, A A^T + noise I) with a random (width, latent_dim) loading matrix A
    and latent means m of expected norm ``separation``.
    """
    if latent_dim < 1 or noise <= 0:
        raise BadCovariance("latent_dim must be >= 1 and noise > 0")
    if modes < 1:
        raise ValueError("modes must be >= 1")
    rng = np.random.default_rng(seed)
    a = rng.standard_normal((width, latent_dim)) / np.sqrt(latent_dim)
    cov = a @ a.T + noise * np.eye(width)
    means = rng.standard_normal((n_classes, modes, latent_dim)) * (separation / np.sqrt(latent_dim))
    return [[GaussianComponent(mean=a @ m, cov=cov) for m in class_means] for class_means in means]
