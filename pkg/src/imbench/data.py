"""Dataset ingestion (KEEL .dat, CSV), profiling, standardization, splits."""
from __future__ import annotations

import csv
import re
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

_MISSING_TOKENS = {"", "?", "<null>"}


@dataclass(frozen=True)
class ClassCounts:
    """Per-class sample counts for the binary problem (label 1 = minority)."""

    n0: int
    n1: int

    def __post_init__(self):
        if self.n0 < 0 or self.n1 < 0:
            raise ValueError("class counts must be non-negative")

    @property
    def total(self) -> int:
        return self.n0 + self.n1

    def of(self, label: int) -> int:
        if label == 0:
            return self.n0
        if label == 1:
            return self.n1
        raise ValueError(f"label must be 0 or 1, got {label}")

    @classmethod
    def from_labels(cls, labels) -> "ClassCounts":
        labels = np.asarray(labels)
        return cls(n0=int(np.sum(labels == 0)), n1=int(np.sum(labels == 1)))


@dataclass
class Dataset:
    name: str
    features: np.ndarray
    labels: np.ndarray
    feature_names: list[str]
    counts: ClassCounts = field(init=False)

    def __post_init__(self):
        self.features = np.asarray(self.features, dtype=float)
        self.labels = np.asarray(self.labels, dtype=int)
        if self.features.shape[0] != self.labels.shape[0]:
            raise ValueError("features and labels row counts differ")
        self.counts = ClassCounts.from_labels(self.labels)

    @property
    def n_samples(self) -> int:
        return self.features.shape[0]

    @property
    def n_features(self) -> int:
        return self.features.shape[1]


@dataclass
class DatasetProfile:
    name: str
    n_samples: int
    n_features: int
    percent_majority: float
    percent_minority: float
    imbalance_ratio: float
    silhouette: float

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "n_samples": self.n_samples,
            "n_features": self.n_features,
            "percent_majority": self.percent_majority,
            "percent_minority": self.percent_minority,
            "imbalance_ratio": self.imbalance_ratio,
            "silhouette": self.silhouette,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "DatasetProfile":
        return cls(**d)


@dataclass
class FoldSplit:
    folds: list[np.ndarray]
    stratified: bool = True

    @property
    def k(self) -> int:
        return len(self.folds)

    def train_test_indices(self, fold: int):
        test = self.folds[fold]
        train = np.concatenate([f for i, f in enumerate(self.folds) if i != fold])
        return np.sort(train), np.sort(test)


def _map_labels(raw: list[str], positive_label: str | None = None) -> np.ndarray:
    """Binary label mapping: explicit positive value, else positive/negative
    names, else the minority value becomes 1."""
    values = sorted(set(raw))
    if len(values) != 2:
        raise ValueError(f"expected exactly 2 class values, found {values}")
    if positive_label is not None:
        if positive_label not in values:
            raise ValueError(f"positive_label {positive_label!r} not among {values}")
        pos = positive_label
    else:
        lowered = {v.lower(): v for v in values}
        if set(lowered) == {"positive", "negative"}:
            pos = lowered["positive"]
        else:
            c0, c1 = raw.count(values[0]), raw.count(values[1])
            # minority -> 1; exact tie resolved to the lexicographically later value
            pos = values[0] if c0 < c1 else values[1]
    return np.array([1 if v == pos else 0 for v in raw], dtype=int)


_ATTR_RE = re.compile(r"@attribute\s+'?([^\s'{]+)'?\s*(.*)", re.IGNORECASE)


def load_keel_dat(path) -> Dataset:
    """Parse a KEEL-format .dat file into a Dataset.

    Header directives: @relation, @attribute, @inputs, @outputs, @data. The
    last output attribute is the class; categorical inputs are integer-encoded
    by declaration order; 'positive' maps to 1 and 'negative' to 0.
    """
    path = Path(path)
    lines = path.read_text(encoding="utf-8").splitlines()
    relation = path.stem
    attr_names: list[str] = []
    attr_domains: dict[str, list[str] | None] = {}
    inputs: list[str] | None = None
    outputs: list[str] | None = None
    data_start = None
    for i, line in enumerate(lines):
        stripped = line.strip()
        if not stripped:
            continue
        low = stripped.lower()
        if low.startswith("@relation"):
            parts = stripped.split(None, 1)
            if len(parts) == 2:
                relation = parts[1].strip().strip("'\"")
        elif low.startswith("@attribute"):
            m = _ATTR_RE.match(stripped)
            if not m:
                raise ValueError(f"{path}: malformed attribute line: {stripped!r}")
            name, rest = m.group(1), m.group(2).strip()
            brace = stripped.find("{")
            if brace != -1:
                close = stripped.rfind("}")
                if close == -1:
                    raise ValueError(f"{path}: unclosed categorical domain: {stripped!r}")
                domain = [v.strip() for v in stripped[brace + 1 : close].split(",")]
                attr_domains[name] = domain
            else:
                if not rest or not re.match(r"(real|integer|numeric)", rest, re.IGNORECASE):
                    raise ValueError(f"{path}: unsupported attribute type: {stripped!r}")
                attr_domains[name] = None
            attr_names.append(name)
        elif low.startswith("@inputs"):
            inputs = [v.strip() for v in stripped.split(None, 1)[1].split(",")]
        elif low.startswith("@outputs") or low.startswith("@output"):
            outputs = [v.strip() for v in stripped.split(None, 1)[1].split(",")]
        elif low.startswith("@data"):
            data_start = i + 1
            break
        else:
            raise ValueError(f"{path}: unrecognized header line: {stripped!r}")
    if data_start is None:
        raise ValueError(f"{path}: no @data section found")
    if not attr_names:
        raise ValueError(f"{path}: no attributes declared")
    if outputs is None:
        outputs = [attr_names[-1]]
    if inputs is None:
        inputs = [a for a in attr_names if a not in outputs]
    unknown = [a for a in inputs + outputs if a not in attr_names]
    if unknown:
        raise ValueError(f"{path}: @inputs/@outputs name undeclared attributes {unknown}")
    class_attr = outputs[-1]

    col_of = {name: j for j, name in enumerate(attr_names)}
    rows: list[list[str]] = []
    missing_rows: list[int] = []
    for line in lines[data_start:]:
        stripped = line.strip()
        if not stripped or stripped.startswith("%"):
            continue
        values = [v.strip() for v in stripped.split(",")]
        if len(values) != len(attr_names):
            raise ValueError(
                f"{path}: data row {len(rows)} has {len(values)} values, expected {len(attr_names)}"
            )
        if any(v.lower() in _MISSING_TOKENS for v in values):
            missing_rows.append(len(rows))
        rows.append(values)
    if missing_rows:
        raise ValueError(f"{path}: missing values in data rows {missing_rows}")
    if not rows:
        raise ValueError(f"{path}: empty data section")

    features = np.empty((len(rows), len(inputs)), dtype=float)
    for j, name in enumerate(inputs):
        col = [row[col_of[name]] for row in rows]
        domain = attr_domains[name]
        if domain is not None:
            code = {v: k for k, v in enumerate(domain)}
            try:
                features[:, j] = [code[v] for v in col]
            except KeyError as exc:
                raise ValueError(f"{path}: value {exc} not in domain of {name!r}") from exc
        else:
            try:
                features[:, j] = [float(v) for v in col]
            except ValueError as exc:
                raise ValueError(f"{path}: non-numeric value in column {name!r}: {exc}") from exc

    raw_labels = [row[col_of[class_attr]] for row in rows]
    labels = _map_labels(raw_labels)
    return Dataset(name=relation, features=features, labels=labels, feature_names=list(inputs))


def load_csv(path, label_column, positive_label: str | None = None) -> Dataset:
    """Load a headered CSV; the named/indexed column is the binary class."""
    path = Path(path)
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise ValueError(f"{path}: empty file") from None
        header = [h.strip() for h in header]
        if isinstance(label_column, int):
            label_idx = label_column if label_column >= 0 else len(header) + label_column
            if not 0 <= label_idx < len(header):
                raise ValueError(f"{path}: label column index {label_column} out of range")
        else:
            if label_column not in header:
                raise ValueError(f"{path}: no column named {label_column!r}")
            label_idx = header.index(label_column)
        rows = []
        missing_rows = []
        for i, row in enumerate(reader):
            if not row:
                continue
            if len(row) != len(header):
                raise ValueError(f"{path}: ragged row {i} ({len(row)} cells, expected {len(header)})")
            row = [c.strip() for c in row]
            if any(c in _MISSING_TOKENS for c in row):
                missing_rows.append(i)
            rows.append(row)
    if missing_rows:
        raise ValueError(f"{path}: missing values in data rows {missing_rows}")
    if not rows:
        raise ValueError(f"{path}: no data rows")
    feature_idx = [j for j in range(len(header)) if j != label_idx]
    features = np.empty((len(rows), len(feature_idx)), dtype=float)
    for out_j, j in enumerate(feature_idx):
        try:
            features[:, out_j] = [float(r[j]) for r in rows]
        except ValueError as exc:
            raise ValueError(f"{path}: non-numeric value in column {header[j]!r}: {exc}") from exc
    labels = _map_labels([r[label_idx] for r in rows], positive_label=positive_label)
    return Dataset(
        name=path.stem,
        features=features,
        labels=labels,
        feature_names=[header[j] for j in feature_idx],
    )


def imbalance_ratio(counts: ClassCounts) -> float:
    """Majority count over minority count."""
    n_min = min(counts.n0, counts.n1)
    n_maj = max(counts.n0, counts.n1)
    if n_min < 1:
        raise ValueError("imbalance ratio needs at least one sample per class")
    return n_maj / n_min


def _pairwise_distances(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    sq = (a * a).sum(axis=1)[:, None] + (b * b).sum(axis=1)[None, :] - 2.0 * (a @ b.T)
    np.maximum(sq, 0.0, out=sq)
    return np.sqrt(sq)


def silhouette_coefficient(
    features: np.ndarray,
    labels: np.ndarray,
    max_n: int = 5000,
    rng: np.random.Generator | None = None,
) -> float:
    """Mean silhouette s(i) = (b-a)/max(a,b) over samples, Euclidean metric.

    a(i): mean distance to the sample's own class (self excluded); b(i): mean
    distance to the other class. Datasets larger than max_n are profiled on a
    seeded stratified subsample (the full pairwise matrix is quadratic).
    """
    features = np.asarray(features, dtype=float)
    labels = np.asarray(labels, dtype=int)
    rng = rng if rng is not None else np.random.default_rng(0)
    for c in (0, 1):
        if np.sum(labels == c) < 2:
            raise ValueError(f"silhouette needs >= 2 samples in class {c}")
    n = len(labels)
    if n > max_n:
        keep = []
        for c in (0, 1):
            idx = np.flatnonzero(labels == c)
            target = max(2, int(round(max_n * len(idx) / n)))
            target = min(target, len(idx))
            keep.append(rng.choice(idx, size=target, replace=False))
        sel = np.sort(np.concatenate(keep))
        features, labels = features[sel], labels[sel]

    idx0 = np.flatnonzero(labels == 0)
    idx1 = np.flatnonzero(labels == 1)
    x0, x1 = features[idx0], features[idx1]
    scores = np.empty(len(labels))
    for own, other, own_idx in ((x0, x1, idx0), (x1, x0, idx1)):
        d_own = _pairwise_distances(own, own)
        d_other = _pairwise_distances(own, other)
        a = d_own.sum(axis=1) / (len(own) - 1)
        b = d_other.mean(axis=1)
        denom = np.maximum(a, b)
        s = np.where(denom > 0, (b - a) / np.where(denom > 0, denom, 1.0), 0.0)
        scores[own_idx] = s
    return float(scores.mean())


def standardize(train_features: np.ndarray, *apply_to: np.ndarray):
    """Z-score all given matrices with the training matrix's statistics.

    Returns (standardized matrices tuple, mean, std). Population std; columns
    with zero std map to 0 everywhere.
    """
    train_features = np.asarray(train_features, dtype=float)
    if train_features.shape[0] == 0:
        raise ValueError("training partition is empty")
    mean = train_features.mean(axis=0)
    std = train_features.std(axis=0)
    nonzero = std != 0
    safe = np.where(nonzero, std, 1.0)
    outs = tuple(
        ((np.asarray(m, dtype=float) - mean) / safe) * nonzero
        for m in (train_features, *apply_to)
    )
    return outs, mean, std


def stratified_kfold(labels: np.ndarray, k: int, rng: np.random.Generator) -> FoldSplit:
    """Stratified k-fold split: per-class indices shuffled, dealt round-robin."""
    labels = np.asarray(labels, dtype=int)
    if k < 2:
        raise ValueError("k must be >= 2")
    assignment = np.empty(len(labels), dtype=int)
    for c in (0, 1):
        idx = np.flatnonzero(labels == c)
        if len(idx) < k:
            raise ValueError(f"class {c} has {len(idx)} samples, fewer than k={k}")
        shuffled = rng.permutation(idx)
        assignment[shuffled] = np.arange(len(shuffled)) % k
    folds = [np.flatnonzero(assignment == f) for f in range(k)]
    return FoldSplit(folds=folds, stratified=True)


def train_val_split(
    train_indices: np.ndarray,
    labels: np.ndarray,
    val_fraction: float = 0.1,
    rng: np.random.Generator | None = None,
):
    """Carve a stratified early-stop validation subset out of train_indices."""
    if not 0.0 < val_fraction < 1.0:
        raise ValueError("val_fraction must be in (0, 1)")
    rng = rng if rng is not None else np.random.default_rng(0)
    train_indices = np.asarray(train_indices, dtype=int)
    labels = np.asarray(labels, dtype=int)
    sub = labels[train_indices]
    train_keep, val_keep = [], []
    for c in (0, 1):
        idx = train_indices[sub == c]
        if len(idx) == 0:
            raise ValueError(f"class {c} absent from train_indices")
        if len(idx) == 1:
            warnings.warn(
                f"class {c} has a single sample; keeping it in train, validation proceeds without it"
            )
            train_keep.append(idx)
            continue
        n_val = max(1, int(round(val_fraction * len(idx))))
        n_val = min(n_val, len(idx) - 1)
        perm = rng.permutation(idx)
        val_keep.append(perm[:n_val])
        train_keep.append(perm[n_val:])
    return (
        np.sort(np.concatenate(train_keep)),
        np.sort(np.concatenate(val_keep)) if val_keep else np.array([], dtype=int),
    )


def profile_dataset(dataset: Dataset, max_n: int = 5000, seed: int = 0) -> DatasetProfile:
    """Summary profile: size, class balance, IR, and silhouette on z-scored
    features (comparable scales keep the Euclidean metric meaningful)."""
    counts = dataset.counts
    n = counts.total
    n_min = min(counts.n0, counts.n1)
    n_maj = max(counts.n0, counts.n1)
    (scaled,), _, _ = standardize(dataset.features)
    sil = silhouette_coefficient(
        scaled, dataset.labels, max_n=max_n, rng=np.random.default_rng(seed)
    )
    return DatasetProfile(
        name=dataset.name,
        n_samples=n,
        n_features=dataset.n_features,
        percent_majority=100.0 * n_maj / n,
        percent_minority=100.0 * n_min / n,
        imbalance_ratio=imbalance_ratio(counts),
        silhouette=sil,
    )
