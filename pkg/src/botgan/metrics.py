"""Classification scores, synthetic-data fidelity scores and exploratory statistics."""
from __future__ import annotations

import json
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np

from . import kernels
from .dataset import Dataset
from .errors import DegenerateSample, EmptyDataset, LengthMismatch, SchemaMismatch

# --- classification ----------------------------------------------------------


@dataclass
class EvalReport:
    confusion: np.ndarray  # (K, K); rows are true labels
    accuracy: float
    precision_macro: float
    recall_macro: float
    f1_macro: float
    g_mean: float
    per_class_precision: np.ndarray
    per_class_recall: np.ndarray

    SCALARS = ("accuracy", "precision_macro", "recall_macro", "f1_macro", "g_mean")

    def scalars(self) -> dict[str, float]:
        return {name: float(getattr(self, name)) for name in self.SCALARS}

    def to_dict(self) -> dict:
        out = self.scalars()
        out["confusion"] = self.confusion.tolist()
        out["per_class_precision"] = [float(v) for v in self.per_class_precision]
        out["per_class_recall"] = [float(v) for v in self.per_class_recall]
        return out

    def to_json(self, path) -> Path:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n")
        return path


def confusion_matrix(pred, truth, k: int) -> np.ndarray:
    pred = np.asarray(pred, dtype=np.int64)
    truth = np.asarray(truth, dtype=np.int64)
    cm = np.zeros((k, k), dtype=np.int64)
    np.add.at(cm, (truth, pred), 1)
    return cm


def evaluate(pred, truth, k: int) -> EvalReport:
    """Accuracy, macro precision/recall/F1 and the geometric mean of class recalls.

    A class missing from both truth and predictions scores precision 1 and
    recall 1; missing from truth only, recall 0; never predicted, precision 0.
    """
    pred = np.asarray(pred)
    truth = np.asarray(truth)
    if pred.shape != truth.shape:
        raise LengthMismatch(f"{pred.shape[0]} predictions vs {truth.shape[0]} labels")
    if pred.size == 0:
        raise LengthMismatch("cannot evaluate zero predictions")
    cm = confusion_matrix(pred, truth, k)
    tp = np.diag(cm).astype(np.float64)
    n_true = cm.sum(axis=1)
    n_pred = cm.sum(axis=0)
    absent = (n_true == 0) & (n_pred == 0)
    recall = np.where(n_true > 0, tp / np.maximum(n_true, 1), 0.0)
    precision = np.where(n_pred > 0, tp / np.maximum(n_pred, 1), 0.0)
    recall[absent] = 1.0
    precision[absent] = 1.0
    denom = precision + recall
    f1 = np.where(denom > 0, 2.0 * precision * recall / np.where(denom > 0, denom, 1.0), 0.0)
    g_mean = float(np.prod(recall) ** (1.0 / k))
    return EvalReport(
        confusion=cm,
        accuracy=float(tp.sum() / cm.sum()),
        precision_macro=float(precision.mean()),
        recall_macro=float(recall.mean()),
        f1_macro=float(f1.mean()),
        g_mean=g_mean,
        per_class_precision=precision,
        per_class_recall=recall,
    )


# --- fidelity ----------------------------------------------------------------


@dataclass
class FidelityReport:
    ks_score: float
    kl_score: float
    ks_per_feature: np.ndarray
    kl_per_feature: np.ndarray

    def to_dict(self) -> dict:
        return {"ks_score": self.ks_score, "kl_score": self.kl_score,
                "ks_per_feature": [float(v) for v in self.ks_per_feature],
                "kl_per_feature": [float(v) for v in self.kl_per_feature]}


def _pair(real: Dataset, synth: Dataset) -> tuple[np.ndarray, np.ndarray]:
    if len(real) == 0 or len(synth) == 0:
        raise EmptyDataset("fidelity scores need two non-empty datasets")
    if real.schema != synth.schema:
        raise SchemaMismatch("real and synthetic datasets use different schemas")
    return real.features, synth.features


def ks_per_feature(real: Dataset, synth: Dataset) -> np.ndarray:
    a, b = _pair(real, synth)
    a = np.sort(a, axis=0)
    b = np.sort(b, axis=0)
    return np.array([1.0 - kernels.ks_statistic(np.ascontiguousarray(a[:, j]),
                                                np.ascontiguousarray(b[:, j]))
                     for j in range(a.shape[1])])


def ks_score(real: Dataset, synth: Dataset) -> float:
    """Mean over features of 1 - D, D the two-sample KS statistic."""
    return float(ks_per_feature(real, synth).mean())


def kl_divergence_binned(real_col: np.ndarray, synth_col: np.ndarray, bins: int = 50) -> float:
    """KL(synth || real) of equal-width histograms on the union range, +1 per bin."""
    lo = min(real_col.min(), synth_col.min())
    hi = max(real_col.max(), synth_col.max())
    if not hi > lo:
        return 0.0
    p, _ = np.histogram(real_col, bins=bins, range=(lo, hi))
    q, _ = np.histogram(synth_col, bins=bins, range=(lo, hi))
    p = (p + 1.0) / (p.sum() + bins)
    q = (q + 1.0) / (q.sum() + bins)
    return float(np.sum(q * np.log(q / p)))


def kl_per_feature(real: Dataset, synth: Dataset, bins: int = 50) -> np.ndarray:
    a, b = _pair(real, synth)
    return np.array([1.0 / (1.0 + kl_divergence_binned(a[:, j], b[:, j], bins))
                     for j in range(a.shape[1])])


def kl_score(real: Dataset, synth: Dataset, bins: int = 50) -> float:
    return float(kl_per_feature(real, synth, bins).mean())


def fidelity(real: Dataset, synth: Dataset, bins: int = 50) -> FidelityReport:
    ks = ks_per_feature(real, synth)
    kl = kl_per_feature(real, synth, bins)
    return FidelityReport(float(ks.mean()), float(kl.mean()), ks, kl)


# --- exploratory -------------------------------------------------------------


@dataclass
class PcaModel:
    category: str
    mean: np.ndarray
    scale: np.ndarray
    axis: np.ndarray
    eigenvalue: float
    explained: float


def pca_fit(d: Dataset, category: str) -> PcaModel:
    """First principal axis of one category's z-scored columns.

    The axis is signed so that its largest-magnitude component is positive.
    """
    sl = d.schema.category_slice(category)
    x = d.features[:, sl]
    if x.shape[0] < 2:
        raise EmptyDataset("PCA needs at least two records")
    mean = x.mean(axis=0)
    scale = x.std(axis=0)
    scale = np.where(scale > 0, scale, 1.0)
    z = (x - mean) / scale
    cov = np.atleast_2d(np.cov(z, rowvar=False, ddof=1))
    vals, vecs = np.linalg.eigh(cov)
    axis = vecs[:, -1]
    if axis[np.argmax(np.abs(axis))] < 0:
        axis = -axis
    total = float(np.trace(cov))
    top = float(vals[-1])
    return PcaModel(category, mean, scale, axis, top, top / total if total > 0 else 1.0)


def pca_project(m: PcaModel, d: Dataset) -> np.ndarray:
    x = d.features[:, d.schema.category_slice(m.category)]
    return ((x - m.mean) / m.scale) @ m.axis


def silverman_bandwidth(values: np.ndarray) -> float:
    v = np.asarray(values, dtype=np.float64)
    sigma = v.std(ddof=1)
    q75, q25 = np.percentile(v, [75, 25])
    spread = min(sigma, (q75 - q25) / 1.34)
    if not spread > 0:
        spread = sigma
    return 0.9 * spread * v.size ** (-0.2)


def kde_curve(values, grid_points: int = 200) -> np.ndarray:
    """Gaussian KDE evaluated on an even grid; returns an (grid_points, 2) array of (x, density)."""
    v = np.asarray(values, dtype=np.float64).ravel()
    if v.size < 2 or not v.max() > v.min():
        raise DegenerateSample("KDE needs at least two distinct values")
    h = silverman_bandwidth(v)
    grid = np.linspace(v.min() - 3 * h, v.max() + 3 * h, grid_points)
    dens = np.zeros(grid_points)
    norm = 1.0 / (v.size * h * np.sqrt(2 * np.pi))
    for lo in range(0, v.size, 4096):
        u = (grid[:, None] - v[None, lo:lo + 4096]) / h
        dens += np.exp(-0.5 * u * u).sum(axis=1)
    return np.column_stack([grid, dens * norm])
