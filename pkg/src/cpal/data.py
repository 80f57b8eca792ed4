"""Datasets: synthetic generators, CSV I/O, seeded splits and metrics."""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from . import rng as _rng


@dataclass
class LabeledDataset:
    """Rows of X carry the bias column last when ``bias_appended`` is set."""

    X: np.ndarray
    y: np.ndarray
    bias_appended: bool
    train: np.ndarray
    test: np.ndarray
    task: str = "classification"

    def __post_init__(self):
        self.X = np.atleast_2d(np.asarray(self.X, dtype=float))
        self.y = np.asarray(self.y, dtype=float).ravel()
        self.train = np.asarray(self.train, dtype=int)
        self.test = np.asarray(self.test, dtype=int)
        n = self.X.shape[0]
        if self.y.shape[0] != n:
            raise ValueError("X and y disagree in length")
        both = np.concatenate([self.train, self.test])
        if both.size and (both.min() < 0 or both.max() >= n):
            raise ValueError("split index out of range")
        if np.unique(both).size != both.size:
            raise ValueError("train and test indices overlap")
        if self.task == "classification" and not np.all(np.isin(self.y, (-1.0, 1.0))):
            raise ValueError("classification labels must be -1 or +1")

    @property
    def n(self) -> int:
        return self.X.shape[0]

    @property
    def d(self) -> int:
        return self.X.shape[1]

    @property
    def raw(self) -> np.ndarray:
        return self.X[:, :-1] if self.bias_appended else self.X

    @property
    def X_train(self) -> np.ndarray:
        return self.X[self.train]

    @property
    def y_train(self) -> np.ndarray:
        return self.y[self.train]

    @property
    def X_test(self) -> np.ndarray:
        return self.X[self.test]

    @property
    def y_test(self) -> np.ndarray:
        return self.y[self.test]


def append_bias(X) -> np.ndarray:
    X = np.atleast_2d(np.asarray(X, dtype=float))
    return np.hstack([X, np.ones((X.shape[0], 1))])


def split_indices(n: int, test_frac: float = 0.2, seed: int = 0) -> tuple[np.ndarray, np.ndarray]:
    """Seeded shuffle; the test part has floor(n * test_frac) rows."""
    if not 0.0 <= test_frac < 1.0:
        raise ValueError("test_frac must lie in [0, 1)")
    perm = _rng.stream(seed, "split").permutation(n)
    n_test = int(np.floor(n * test_frac + 1e-12))
    return np.sort(perm[n_test:]), np.sort(perm[:n_test])


def gen_spiral(k1: float = 13.0, k2: float = 0.5, k3: float = 1.0, k4: float | None = None,
               k5: float | None = None, n_shape: int = 50, n_points: int = 100, seed: int = 0,
               turns: float = 3.0, test_frac: float = 0.2) -> LabeledDataset:
    """Two interleaved arms, labels +1 and -1.

    Arm point i (normalised to [0, n_shape - 1]) sits at radius
    r = k3 (k4 - i) / k4 and angle phi = k5 i pi; the label multiplies the
    offset from (k2, k2), so the arms are point-symmetric.  k4 defaults to
    n_shape and k5 to 2 * turns / n_shape.
    """
    k4 = float(n_shape) if k4 is None else k4
    k5 = 2.0 * turns / n_shape if k5 is None else k5
    if min(k1, k3, k4, k5) <= 0 or k2 < 0:
        raise ValueError("spiral constants must be positive")
    if n_points < 4 or n_points % 2:
        raise ValueError("n_points must be an even number >= 4")
    m = n_points // 2
    i = np.arange(m) * (n_shape - 1) / (m - 1)
    r = k3 * (k4 - i) / k4
    phi = k5 * i * np.pi
    pts, labels = [], []
    for y in (1.0, -1.0):
        pts.append(np.column_stack([r * np.cos(phi) * y / k1 + k2, r * np.sin(phi) * y / k1 + k2]))
        labels.append(np.full(m, y))
    X = np.vstack(pts)
    yv = np.concatenate(labels)
    tr, te = split_indices(n_points, test_frac, seed)
    return LabeledDataset(append_bias(X), yv, True, tr, te, "classification")


def gen_quadratic(n_points: int = 100, lo: float = -1.0, hi: float = 1.0, seed: int = 0,
                  test_frac: float = 0.2) -> LabeledDataset:
    """y = x^2 on a uniform grid, no noise."""
    if n_points < 5:
        raise ValueError("n_points must be at least 5")
    if not lo < hi:
        raise ValueError("lo must be smaller than hi")
    x = np.linspace(lo, hi, n_points)
    tr, te = split_indices(n_points, test_frac, seed)
    return LabeledDataset(append_bias(x[:, None]), x ** 2, True, tr, te, "regression")


def load_csv_dataset(path, label_col: str | int = "y", split_frac: float = 0.2, seed: int = 0,
                     task: str | None = None) -> LabeledDataset:
    """Numeric CSV with a header row; the bias column is appended."""
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise ValueError(f"{path}: empty file")
    header, body = rows[0], rows[1:]
    if isinstance(label_col, int):
        li = label_col
    elif label_col in header:
        li = header.index(label_col)
    else:
        raise ValueError(f"{path}: label column {label_col!r} not in header")
    if not body:
        raise ValueError(f"{path}: no data rows")
    vals = np.empty((len(body), len(header)))
    for r, row in enumerate(body):
        if len(row) != len(header):
            raise ValueError(f"{path}: row {r + 1} has {len(row)} cells, header has {len(header)}")
        for c, cell in enumerate(row):
            try:
                vals[r, c] = float(cell)
            except ValueError:
                raise ValueError(f"{path}: non-numeric value {cell!r} at row {r + 1}, "
                                 f"column {c} ({header[c]})") from None
    y = vals[:, li]
    X = np.delete(vals, li, axis=1)
    if task is None:
        task = "classification" if np.all(np.isin(y, (-1.0, 1.0))) else "regression"
    tr, te = split_indices(len(body), split_frac, seed)
    return LabeledDataset(append_bias(X), y, True, tr, te, task)


def save_csv(ds: LabeledDataset, path) -> None:
    """Raw features as f0..f{d-1} plus y, floats written with round-trip repr."""
    raw = ds.raw
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow([f"f{j}" for j in range(raw.shape[1])] + ["y"])
        for xi, yi in zip(raw, ds.y):
            w.writerow([repr(float(v)) for v in xi] + [repr(float(yi))])


def accuracy(pred, truth) -> float:
    pred, truth = np.asarray(pred, dtype=float).ravel(), np.asarray(truth, dtype=float).ravel()
    if pred.shape != truth.shape:
        raise ValueError("prediction and truth lengths differ")
    return float(np.mean(np.sign(pred) == np.sign(truth)))


def rmse(pred, truth) -> float:
    pred, truth = np.asarray(pred, dtype=float).ravel(), np.asarray(truth, dtype=float).ravel()
    if pred.shape != truth.shape:
        raise ValueError("prediction and truth lengths differ")
    return float(np.sqrt(np.mean((pred - truth) ** 2)))


def metrics(pred, truth, task: str) -> float:
    if task == "classification":
        return accuracy(pred, truth)
    if task == "regression":
        return rmse(pred, truth)
    raise ValueError(f"unknown task {task!r}")
