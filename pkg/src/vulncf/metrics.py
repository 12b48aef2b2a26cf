"""Robustness and explanation-quality metrics over a paired test set.

Covers standard classification scores, pairwise contrast buckets over
original/counterfactual pairs, worst-group accuracy on k-means subgroups,
embedding neighborhood purity, attribution signature statistics, and a 2-D
projection for inspection.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .dataset import Label
from .lang.cpg import NODE_KINDS, KIND_INDEX, CodePropertyGraph


class MissingPair(ValueError):
    pass


class NoValidGroups(ValueError):
    pass


# --- standard metrics -------------------------------------------------------


def standard_metrics(preds: list[Label], labels: list[Label]) -> dict:
    """Accuracy/precision/recall/F1 with Vulnerable as the positive class.
    Undefined ratios are reported as 0.0 and flagged."""
    if len(preds) != len(labels):
        raise ValueError("preds and labels differ in length")
    n = len(labels)
    tp = sum(1 for p, y in zip(preds, labels) if p is Label.VULNERABLE and y is Label.VULNERABLE)
    fp = sum(1 for p, y in zip(preds, labels) if p is Label.VULNERABLE and y is Label.BENIGN)
    fn = sum(1 for p, y in zip(preds, labels) if p is Label.BENIGN and y is Label.VULNERABLE)
    correct = sum(1 for p, y in zip(preds, labels) if p is y)
    flags = []
    if tp + fp == 0:
        precision = 0.0
        flags.append("precision_undefined")
    else:
        precision = tp / (tp + fp)
    if tp + fn == 0:
        recall = 0.0
        flags.append("recall_undefined")
    else:
        recall = tp / (tp + fn)
    if precision + recall == 0:
        f1 = 0.0
        if "precision_undefined" in flags and "recall_undefined" in flags:
            flags.append("f1_undefined")
    else:
        f1 = 2 * precision * recall / (precision + recall)
    return {
        "accuracy": correct / n if n else 0.0,
        "precision": precision,
        "recall": recall,
        "f1": f1,
        "flags": flags,
    }


# --- pairwise contrast ------------------------------------------------------


PairPrediction = tuple[Label, Label, Label]  # (pred on original, pred on counterfactual, original label)


def pairwise_metrics(pair_preds: list[PairPrediction]) -> dict:
    """Bucket each pair into exactly one of: correct contrast, both
    vulnerable, both benign, or reversed; values are percentages."""
    if not pair_preds:
        raise MissingPair("no pairs to evaluate")
    buckets = {"P-C": 0, "P-V": 0, "P-B": 0, "P-R": 0}
    for pred_orig, pred_cf, label_orig in pair_preds:
        if pred_orig is label_orig and pred_cf is label_orig.flipped():
            buckets["P-C"] += 1
        elif pred_orig is Label.VULNERABLE and pred_cf is Label.VULNERABLE:
            buckets["P-V"] += 1
        elif pred_orig is Label.BENIGN and pred_cf is Label.BENIGN:
            buckets["P-B"] += 1
        else:
            buckets["P-R"] += 1
    total = len(pair_preds)
    return {k: 100.0 * v / total for k, v in buckets.items()}


def collect_pairs(
    ids_provenance: list[tuple[str, str]],
    preds: list[Label],
    labels: list[Label],
) -> list[PairPrediction]:
    """Group per-function predictions into (original, counterfactual) pairs."""
    by_id: dict[str, dict[str, tuple[Label, Label]]] = {}
    for (fid, prov), pred, label in zip(ids_provenance, preds, labels):
        by_id.setdefault(fid, {})[prov] = (pred, label)
    out: list[PairPrediction] = []
    for fid in sorted(by_id):
        members = by_id[fid]
        if "Original" not in members or "Counterfactual" not in members:
            raise MissingPair(f"id {fid} lacks both pair members")
        pred_o, label_o = members["Original"]
        pred_c, _ = members["Counterfactual"]
        out.append((pred_o, pred_c, label_o))
    return out


# --- k-means and worst-group accuracy ---------------------------------------


def kmeans(embeddings: np.ndarray, k: int, seed: int = 0,
           max_iter: int = 300, tol: float = 1e-8) -> np.ndarray:
    """Lloyd iterations from a k-means++ start; deterministic under seed."""
    x = np.asarray(embeddings, dtype=np.float64)
    n = x.shape[0]
    if not 1 <= k <= n:
        raise ValueError(f"k={k} out of range for {n} points")
    rng = np.random.default_rng(seed)

    centroids = np.empty((k, x.shape[1]))
    centroids[0] = x[int(rng.integers(n))]
    d2 = ((x - centroids[0]) ** 2).sum(axis=1)
    for j in range(1, k):
        total = d2.sum()
        if total <= 0:
            centroids[j] = x[int(rng.integers(n))]
        else:
            centroids[j] = x[int(rng.choice(n, p=d2 / total))]
        d2 = np.minimum(d2, ((x - centroids[j]) ** 2).sum(axis=1))

    assign = np.zeros(n, dtype=np.int64)
    for _ in range(max_iter):
        dists = ((x[:, None, :] - centroids[None, :, :]) ** 2).sum(axis=2)
        assign = np.argmin(dists, axis=1)
        new_centroids = centroids.copy()
        for j in range(k):
            member = assign == j
            if member.any():
                new_centroids[j] = x[member].mean(axis=0)
        shift = np.abs(new_centroids - centroids).max()
        centroids = new_centroids
        if shift < tol:
            break
    dists = ((x[:, None, :] - centroids[None, :, :]) ** 2).sum(axis=2)
    return np.argmin(dists, axis=1)


def group_accuracies(
    cluster_ids: np.ndarray, labels: list[Label], preds: list[Label], min_frac: float = 0.01
) -> dict[tuple[int, str], float]:
    """Accuracy per (cluster, true label) group larger than min_frac of the data."""
    n = len(labels)
    groups: dict[tuple[int, str], list[int]] = {}
    for i, (c, y) in enumerate(zip(cluster_ids, labels)):
        groups.setdefault((int(c), y.value), []).append(i)
    out = {}
    for key, idxs in groups.items():
        if len(idxs) > min_frac * n:
            out[key] = sum(1 for i in idxs if preds[i] is labels[i]) / len(idxs)
    return out


def worst_group_accuracy(
    embeddings: np.ndarray, labels: list[Label], preds: list[Label], k: int, seed: int = 0
) -> float:
    clusters = kmeans(embeddings, k, seed=seed)
    accs = group_accuracies(clusters, labels, preds)
    if not accs:
        raise NoValidGroups("every group fell under the 1% size filter")
    return min(accs.values())


# --- embedding-space neighborhood ------------------------------------------


def neighborhood_purity(embeddings: np.ndarray, labels: list[Label], k_nn: int = 10) -> float:
    """Mean fraction of each point's nearest neighbors sharing its label;
    Euclidean distance, self excluded, ties resolved by index."""
    x = np.asarray(embeddings, dtype=np.float64)
    n = x.shape[0]
    if n < 2:
        raise ValueError("purity needs at least two points")
    k_nn = min(k_nn, n - 1)
    lab = np.array([l.value for l in labels])
    d2 = ((x[:, None, :] - x[None, :, :]) ** 2).sum(axis=2)
    np.fill_diagonal(d2, np.inf)
    fractions = np.empty(n)
    for i in range(n):
        order = np.argsort(d2[i], kind="stable")[:k_nn]
        fractions[i] = float(np.mean(lab[order] == lab[i]))
    return float(fractions.mean())


# --- attribution signatures -------------------------------------------------


def attribution_signature(scores: np.ndarray, g: CodePropertyGraph,
                          normalize: bool = True) -> np.ndarray:
    """Fixed-length carrier for attribution comparisons: the mean score per
    node kind (zero where the kind is absent).

    By default each sample's scores are min-max rescaled first so the
    signature reflects where the explainer concentrates attribution rather
    than its overall mask level; constant score vectors pass through
    unchanged. Entries stay in [0, 1] either way.
    """
    if len(scores) != len(g.nodes):
        raise ValueError("score vector length must equal node count")
    s = np.asarray(scores, dtype=np.float64)
    if normalize:
        span = float(s.max() - s.min())
        if span > 1e-12:
            s = (s - s.min()) / span
    sums = np.zeros(len(NODE_KINDS))
    counts = np.zeros(len(NODE_KINDS))
    for node, value in zip(g.nodes, s):
        idx = KIND_INDEX[node.kind]
        sums[idx] += value
        counts[idx] += 1
    out = np.zeros(len(NODE_KINDS))
    present = counts > 0
    out[present] = sums[present] / counts[present]
    return out


def intra_class_variance(signatures: np.ndarray, labels: list[Label]) -> dict[str, float]:
    """Per class, the mean over signature coordinates of the population
    variance across samples of that class."""
    sig = np.asarray(signatures, dtype=np.float64)
    out = {}
    for label in (Label.BENIGN, Label.VULNERABLE):
        rows = sig[[i for i, l in enumerate(labels) if l is label]]
        key = "intra_benign" if label is Label.BENIGN else "intra_vulnerable"
        out[key] = float(rows.var(axis=0, ddof=0).mean()) if len(rows) else 0.0
    return out


def inter_class_distance(signatures: np.ndarray, labels: list[Label]) -> float:
    sig = np.asarray(signatures, dtype=np.float64)
    benign = sig[[i for i, l in enumerate(labels) if l is Label.BENIGN]]
    vuln = sig[[i for i, l in enumerate(labels) if l is Label.VULNERABLE]]
    if len(benign) == 0 or len(vuln) == 0:
        return 0.0
    return float(np.linalg.norm(benign.mean(axis=0) - vuln.mean(axis=0)))


# --- 2-D projection ---------------------------------------------------------


def project_2d(embeddings: np.ndarray) -> np.ndarray:
    """Top-2 principal components by power iteration with deflation; each
    component's largest-magnitude coordinate is made positive."""
    x = np.asarray(embeddings, dtype=np.float64)
    centered = x - x.mean(axis=0)
    cov = centered.T @ centered / max(1, x.shape[0])
    components = []
    for _ in range(2):
        v = np.ones(cov.shape[0]) / np.sqrt(cov.shape[0])
        for _ in range(1000):
            nv = cov @ v
            norm = np.linalg.norm(nv)
            if norm < 1e-15:
                break
            nv /= norm
            if np.linalg.norm(nv - v) < 1e-13 or np.linalg.norm(nv + v) < 1e-13:
                v = nv
                break
            v = nv
        pivot = int(np.argmax(np.abs(v)))
        if v[pivot] < 0:
            v = -v
        components.append(v)
        lam = float(v @ cov @ v)
        cov = cov - lam * np.outer(v, v)
    basis = np.stack(components, axis=1)  # d x 2
    return centered @ basis


# --- report -----------------------------------------------------------------


REPORT_COLUMNS = [
    "Split", "Accuracy", "Precision", "Recall", "F1-score",
    "P-C", "P-V", "P-B", "P-R",
    "WGA2", "WGA3", "WGA4", "WGA5", "WGA6", "WGA7",
    "Purity", "Intra-B", "Intra-V", "Inter-D",
]


@dataclass
class MetricsReport:
    split: str
    accuracy: float
    precision: float
    recall: float
    f1: float
    p_c: float
    p_v: float
    p_b: float
    p_r: float
    wga: dict[int, float]
    purity: float
    intra_benign: float
    intra_vulnerable: float
    inter_distance: float
    flags: list[str] = field(default_factory=list)

    def validate(self) -> None:
        if abs(self.p_c + self.p_v + self.p_b + self.p_r - 100.0) > 1e-9:
            raise ValueError("pairwise buckets must sum to 100")
        for k, v in self.wga.items():
            if not 0.0 <= v <= 1.0:
                raise ValueError(f"WGA{k} out of [0,1]")
        if not 0.0 <= self.purity <= 1.0:
            raise ValueError("purity out of [0,1]")
        if self.intra_benign < 0 or self.intra_vulnerable < 0 or self.inter_distance < 0:
            raise ValueError("variance and distance must be non-negative")

    def row(self) -> dict[str, object]:
        return {
            "Split": self.split,
            "Accuracy": self.accuracy,
            "Precision": self.precision,
            "Recall": self.recall,
            "F1-score": self.f1,
            "P-C": self.p_c, "P-V": self.p_v, "P-B": self.p_b, "P-R": self.p_r,
            **{f"WGA{k}": self.wga[k] for k in sorted(self.wga)},
            "Purity": self.purity,
            "Intra-B": self.intra_benign,
            "Intra-V": self.intra_vulnerable,
            "Inter-D": self.inter_distance,
        }

    def to_json_dict(self) -> dict:
        return {
            "split": self.split,
            "accuracy": self.accuracy, "precision": self.precision,
            "recall": self.recall, "f1": self.f1,
            "p_c": self.p_c, "p_v": self.p_v, "p_b": self.p_b, "p_r": self.p_r,
            "wga": {str(k): v for k, v in sorted(self.wga.items())},
            "purity": self.purity,
            "intra_benign": self.intra_benign,
            "intra_vulnerable": self.intra_vulnerable,
            "inter_distance": self.inter_distance,
            "flags": list(self.flags),
        }

    @classmethod
    def from_json_dict(cls, doc: dict) -> "MetricsReport":
        return cls(
            split=doc["split"],
            accuracy=doc["accuracy"], precision=doc["precision"],
            recall=doc["recall"], f1=doc["f1"],
            p_c=doc["p_c"], p_v=doc["p_v"], p_b=doc["p_b"], p_r=doc["p_r"],
            wga={int(k): v for k, v in doc["wga"].items()},
            purity=doc["purity"],
            intra_benign=doc["intra_benign"],
            intra_vulnerable=doc["intra_vulnerable"],
            inter_distance=doc["inter_distance"],
            flags=list(doc.get("flags", [])),
        )


def write_reports_csv(reports: list[MetricsReport], path: str | Path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=REPORT_COLUMNS)
        writer.writeheader()
        for r in reports:
            writer.writerow({k: (repr(v) if isinstance(v, float) else v) for k, v in r.row().items()})


def write_reports_json(reports: list[MetricsReport], path: str | Path) -> None:
    Path(path).write_text(json.dumps([r.to_json_dict() for r in reports], indent=2) + "\n")


def load_reports_json(path: str | Path) -> list[MetricsReport]:
    return [MetricsReport.from_json_dict(doc) for doc in json.loads(Path(path).read_text())]
