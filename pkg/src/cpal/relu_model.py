"""Linear (convex) reformulation of small ReLU networks.

Two-layer parameter layout
    theta = (u'_1, u_1, u'_2, u_2, ..., u'_P, u_P), each block a d-vector.
Block 2i is the positive block u'_i and block 2i+1 the negative block u_i, so
on a point x with activation bit b_i for pattern i

    f(x; theta) = sum_i b_i x.(u'_i - u_i)

which equals sum_i (x.u'_i)_+ - (x.u_i)_+ whenever theta meets the sign
constraints of x.  Inputs are expected to carry the bias column already.

Three-layer parameters are stored as an array of shape (P1, P2, 4, d) with the
last-but-one axis ordered (u, u', v, v').
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from . import rng as _rng
from .localization import Halfspace
from .patterns import PatternSet

CONVENTION = "theta=(u'_1,u_1,...,u'_P,u_P); f=sum_i D_i X (u'_i - u_i)"


def _bits_for(x: np.ndarray, patterns: PatternSet, bits) -> np.ndarray:
    if x.shape[-1] != patterns.d:
        raise ValueError(f"point has {x.shape[-1]} coordinates, patterns expect {patterns.d}")
    if bits is None:
        return patterns.bits(x)[0]
    bits = np.asarray(bits, dtype=bool).ravel()
    if bits.shape[0] != patterns.P:
        raise ValueError(f"expected {patterns.P} activation bits, got {bits.shape[0]}")
    return bits


def row_bits(patterns: PatternSet, row: int) -> np.ndarray:
    """Stored activation bits of training row ``row``."""
    return patterns.masks[:, row]


def _check_theta(theta, patterns: PatternSet) -> np.ndarray:
    theta = np.asarray(theta, dtype=float).ravel()
    if theta.shape[0] != 2 * patterns.P * patterns.d:
        raise ValueError(f"theta has length {theta.shape[0]}, expected {2 * patterns.P * patterns.d}")
    return theta


def feature_map(x, patterns: PatternSet, bits=None) -> np.ndarray:
    """Row r with prediction r.theta; block pair (b_i x, -b_i x) per pattern."""
    x = np.asarray(x, dtype=float).ravel()
    b = _bits_for(x, patterns, bits).astype(float)
    blk = b[:, None] * x[None, :]
    return np.stack([blk, -blk], axis=1).ravel()


def feature_matrix(X, patterns: PatternSet, bits=None) -> np.ndarray:
    """Stacked feature rows; ``bits`` is (m, P) or None to recompute from normals."""
    X = np.atleast_2d(np.asarray(X, dtype=float))
    if X.shape[1] != patterns.d:
        raise ValueError(f"points have {X.shape[1]} columns, patterns expect {patterns.d}")
    B = patterns.bits(X) if bits is None else np.asarray(bits, dtype=bool)
    blk = B[:, :, None].astype(float) * X[:, None, :]
    return np.stack([blk, -blk], axis=2).reshape(X.shape[0], -1)


def predict_two_layer(theta, patterns: PatternSet, x) -> np.ndarray | float:
    """sum_i (x.u'_i)_+ - (x.u_i)_+ ; accepts one point or a matrix of points."""
    theta = _check_theta(theta, patterns)
    X = np.asarray(x, dtype=float)
    single = X.ndim == 1
    X = np.atleast_2d(X)
    if X.shape[1] != patterns.d:
        raise ValueError(f"points have {X.shape[1]} columns, patterns expect {patterns.d}")
    W = theta.reshape(patterns.P, 2, patterns.d)
    Z = np.maximum(X @ W[:, 0].T, 0.0) - np.maximum(X @ W[:, 1].T, 0.0)
    out = Z.sum(axis=1)
    return float(out[0]) if single else out


@dataclass
class CutSet:
    """Halfspaces added for one queried row, kept as a sparse block A theta <= b."""

    A: sp.csr_matrix
    b: np.ndarray
    kind: str
    source_index: int | None = None

    @property
    def halfspaces(self) -> list[Halfspace]:
        dense = self.A.toarray()
        return [Halfspace(a, bi) for a, bi in zip(dense, self.b)]

    def __len__(self) -> int:
        return self.A.shape[0]

    def as_matrix(self):
        return self.A, self.b

    def satisfied_by(self, theta, tol: float = 0.0) -> np.ndarray:
        return self.A @ np.asarray(theta, dtype=float) <= self.b + tol


def _relu_block(x: np.ndarray, bits: np.ndarray) -> sp.csr_matrix:
    """2P sign rows; row 2i+k touches only block 2i+k."""
    P, d = bits.shape[0], x.shape[0]
    sgn = np.where(bits, -1.0, 1.0)
    data = np.repeat(sgn, 2)[:, None] * x[None, :]
    cols = np.arange(2 * P)[:, None] * d + np.arange(d)[None, :]
    return sp.csr_matrix((data.ravel(), cols.ravel(), np.arange(0, 2 * P * d + 1, d)),
                         shape=(2 * P, 2 * P * d))


def relu_constraints(x, patterns: PatternSet, bits=None) -> CutSet:
    """Sign constraints: bit 1 needs x.u >= 0 and x.u' >= 0, bit 0 needs both <= 0."""
    x = np.asarray(x, dtype=float).ravel()
    b = _bits_for(x, patterns, bits)
    A = _relu_block(x, b)
    return CutSet(A, np.zeros(A.shape[0]), "relu_consistency")


def classification_cut(x, y, patterns: PatternSet, margin: float = 0.0, bits=None,
                       source_index: int | None = None) -> CutSet:
    """-y r.theta <= -margin together with the sign constraints of x."""
    if y not in (-1, 1):
        raise ValueError(f"classification label must be -1 or +1, got {y!r}")
    x = np.asarray(x, dtype=float).ravel()
    b = _bits_for(x, patterns, bits)
    r = feature_map(x, patterns, b)
    if not np.any(r):
        raise ValueError("no pattern is active on this point; the label cut is degenerate")
    A = sp.vstack([sp.csr_matrix(-float(y) * r), _relu_block(x, b)], format="csr")
    rhs = np.zeros(A.shape[0])
    rhs[0] = -float(margin)
    return CutSet(A, rhs, "classification", source_index)


def regression_cut(x, y: float, patterns: PatternSet, eps: float, bits=None,
                   source_index: int | None = None) -> CutSet:
    """|r.theta - y| <= eps together with the sign constraints of x."""
    if not eps > 0:
        raise ValueError("eps must be positive")
    x = np.asarray(x, dtype=float).ravel()
    b = _bits_for(x, patterns, bits)
    r = feature_map(x, patterns, b)
    if not np.any(r):
        raise ValueError("no pattern is active on this point; the label cut is degenerate")
    A = sp.vstack([sp.csr_matrix(np.vstack([r, -r])), _relu_block(x, b)], format="csr")
    rhs = np.zeros(A.shape[0])
    rhs[0], rhs[1] = float(y) + eps, -(float(y) - eps)
    return CutSet(A, rhs, "regression", source_index)


def training_cuts(X, y, patterns: PatternSet, margin: float = 1.0, rows=None) -> CutSet:
    """All classification cuts for training rows (stored masks) stacked together."""
    X = np.atleast_2d(np.asarray(X, dtype=float))
    rows = range(X.shape[0]) if rows is None else rows
    parts = [classification_cut(X[i], int(y[i]), patterns, margin, row_bits(patterns, i), i)
             for i in rows]
    return CutSet(sp.vstack([c.A for c in parts], format="csr"),
                  np.concatenate([c.b for c in parts]), "classification")


# ---------------------------------------------------------------------------
# Weight reconstruction


@dataclass
class ReconstructedNetwork:
    """Explicit ReLU network; W1 is d x m, later layers as listed in ``weights``."""

    weights: list
    layers: int
    meta: dict = field(default_factory=dict)

    @property
    def W1(self) -> np.ndarray:
        return self.weights[0]

    @property
    def W2(self) -> np.ndarray:
        return self.weights[1]

    @property
    def width(self) -> int:
        return self.W1.shape[1]

    def forward(self, X) -> np.ndarray | float:
        X = np.asarray(X, dtype=float)
        single = X.ndim == 1
        H = np.atleast_2d(X)
        for W in self.weights[:-1]:
            H = np.maximum(H @ W, 0.0)
        out = H @ self.weights[-1]
        return float(out[0]) if single else out

    def to_dict(self) -> dict:
        d = dict(self.meta)
        d.update({"layers": self.layers, "convention": CONVENTION,
                  "W1_columns": self.W1.T.tolist(), "d": int(self.W1.shape[0])})
        d["W"] = [np.asarray(W).tolist() for W in self.weights[1:]]
        return d

    @classmethod
    def from_dict(cls, data: dict) -> "ReconstructedNetwork":
        d = int(data["d"])
        W1 = np.asarray(data["W1_columns"], dtype=float).reshape(-1, d).T
        rest = [np.asarray(W, dtype=float) for W in data["W"]]
        if rest and rest[0].ndim == 1:
            rest[0] = rest[0].reshape(W1.shape[1])
        meta = {k: v for k, v in data.items()
                if k not in ("layers", "convention", "W1_columns", "d", "W")}
        return cls([W1] + rest, int(data["layers"]), meta)

    def to_json(self, path) -> None:
        with open(path, "w") as fh:
            json.dump(self.to_dict(), fh)

    @classmethod
    def from_json(cls, path) -> "ReconstructedNetwork":
        with open(path) as fh:
            return cls.from_dict(json.load(fh))


def reconstruct_weights_two_layer(theta, patterns: PatternSet) -> ReconstructedNetwork:
    """Nonzero blocks become hidden units: u'_i with output weight +1, u_i with -1."""
    theta = _check_theta(theta, patterns)
    W = theta.reshape(2 * patterns.P, patterns.d)
    keep = np.flatnonzero(np.any(W != 0, axis=1))
    W1 = W[keep].T.copy()
    W2 = np.where(keep % 2 == 0, 1.0, -1.0)
    return ReconstructedNetwork([W1.reshape(patterns.d, keep.size), W2], 2,
                                {"P": patterns.P, "blocks": keep.tolist()})


def network_to_theta(W1, W2, X, patterns: PatternSet) -> np.ndarray:
    """Map an explicit two-layer network onto the pattern parameterisation.

    Each hidden unit j is matched to the stored pattern equal to its training
    activation 1{X w_j >= 0}; positive output weights go to u'_i, negative
    ones to u_i (scaled by |W2_j|).  Raises when a unit's pattern is missing.
    """
    W1 = np.asarray(W1, dtype=float)
    W2 = np.asarray(W2, dtype=float).ravel()
    X = np.atleast_2d(np.asarray(X, dtype=float))
    index = {m.tobytes(): i for i, m in enumerate(patterns.masks)}
    theta = np.zeros((patterns.P, 2, patterns.d))
    for j in range(W1.shape[1]):
        key = (X @ W1[:, j] >= 0).tobytes()
        if key not in index:
            raise KeyError(f"hidden unit {j} has an activation pattern not in the set")
        i = index[key]
        theta[i, 0 if W2[j] >= 0 else 1] += abs(W2[j]) * W1[:, j]
    return theta.ravel()


# ---------------------------------------------------------------------------
# Three layers


@dataclass
class SecondLayerPatterns:
    """Sign patterns of a random second layer acting on a random first layer.

    Pattern j is 1{(X V1_j)_+ . v2_j >= 0}; V1 is (P2, d, h), v2 is (P2, h).
    """

    masks: np.ndarray
    V1: np.ndarray
    v2: np.ndarray

    @property
    def P(self) -> int:
        return self.masks.shape[0]

    def bits(self, X) -> np.ndarray:
        X = np.atleast_2d(np.asarray(X, dtype=float))
        H = np.maximum(np.einsum("nd,pdh->nph", X, self.V1), 0.0)
        return np.einsum("nph,ph->np", H, self.v2) >= 0


def sample_second_layer_patterns(X, target: int, simulations: int = 1000, hidden: int = 8,
                                 seed: int = 0) -> SecondLayerPatterns:
    X = np.atleast_2d(np.asarray(X, dtype=float))
    gen = _rng.stream(seed, "second_layer_patterns")
    d = X.shape[1]
    V1 = gen.standard_normal((simulations, d, hidden))
    v2 = gen.standard_normal((simulations, hidden))
    M = (np.einsum("nph,ph->np", np.maximum(np.einsum("nd,pdh->nph", X, V1), 0.0), v2) >= 0).T
    seen: dict[bytes, int] = {}
    for j in range(simulations):
        key = M[j].tobytes()
        if key not in seen:
            seen[key] = j
            if len(seen) >= target:
                break
    idx = np.fromiter(seen.values(), dtype=int, count=len(seen))
    return SecondLayerPatterns(M[idx], V1[idx], v2[idx])


@dataclass
class ThreeLayerParam:
    blocks: np.ndarray  # (P1, P2, 4, d): u, u', v, v'

    @classmethod
    def zeros(cls, P1: int, P2: int, d: int) -> "ThreeLayerParam":
        return cls(np.zeros((P1, P2, 4, d)))

    @classmethod
    def from_flat(cls, flat, P1: int, P2: int, d: int) -> "ThreeLayerParam":
        flat = np.asarray(flat, dtype=float)
        if flat.size != 4 * P1 * P2 * d:
            raise ValueError(f"flat parameter has length {flat.size}, expected {4 * P1 * P2 * d}")
        return cls(flat.reshape(P1, P2, 4, d))

    @property
    def flat(self) -> np.ndarray:
        return self.blocks.ravel()

    @property
    def shape(self):
        return self.blocks.shape


_SIGN3 = np.array([1.0, -1.0, -1.0, 1.0])


def _three_bits(x, patterns1: PatternSet, patterns2: SecondLayerPatterns, bits1, bits2):
    x = np.asarray(x, dtype=float).ravel()
    if x.shape[0] != patterns1.d:
        raise ValueError(f"point has {x.shape[0]} coordinates, patterns expect {patterns1.d}")
    b1 = patterns1.bits(x)[0] if bits1 is None else np.asarray(bits1, dtype=bool).ravel()
    b2 = patterns2.bits(x)[0] if bits2 is None else np.asarray(bits2, dtype=bool).ravel()
    if b1.shape[0] != patterns1.P or b2.shape[0] != patterns2.P:
        raise ValueError("activation bits do not match the pattern counts")
    return x, b1.astype(float), b2.astype(float)


def three_layer_feature(x, patterns1: PatternSet, patterns2: SecondLayerPatterns,
                        bits1=None, bits2=None) -> np.ndarray:
    """Flat row r with linearised prediction r . param.flat."""
    x, b1, b2 = _three_bits(x, patterns1, patterns2, bits1, bits2)
    coef = b1[:, None, None] * b2[None, :, None] * _SIGN3[None, None, :]
    return (coef[..., None] * x).ravel()


def three_layer_cuts(x, y, patterns1: PatternSet, patterns2: SecondLayerPatterns,
                     margin: float = 1.0, bits1=None, bits2=None,
                     source_index: int | None = None) -> CutSet:
    """Label cut, per-block first-layer signs, and second-layer signs on the i-sums."""
    if y not in (-1, 1):
        raise ValueError(f"classification label must be -1 or +1, got {y!r}")
    x, b1, b2 = _three_bits(x, patterns1, patterns2, bits1, bits2)
    P1, P2, d = patterns1.P, patterns2.P, x.shape[0]
    n = 4 * P1 * P2 * d
    label = -float(y) * three_layer_feature(x, patterns1, patterns2, b1, b2)
    if not np.any(label):
        raise ValueError("no pattern pair is active on this point; the label cut is degenerate")
    # first layer: one row per block (i, j, k)
    nblk = P1 * P2 * 4
    sgn = np.repeat(np.where(b1 > 0, -1.0, 1.0), P2 * 4)
    first = sp.csr_matrix(((sgn[:, None] * x[None, :]).ravel(),
                           (np.arange(nblk)[:, None] * d + np.arange(d)[None, :]).ravel(),
                           np.arange(0, nblk * d + 1, d)), shape=(nblk, n))
    # second layer: T1_j = sum_i b1_i x.(u_ij - u'_ij), T2_j likewise with v
    second = []
    for j in range(P2):
        s2 = -1.0 if b2[j] > 0 else 1.0
        for pair in ((0, 1), (2, 3)):
            row = np.zeros((P1, P2, 4, d))
            row[:, j, pair[0]] = b1[:, None] * x
            row[:, j, pair[1]] = -b1[:, None] * x
            if np.any(row):
                second.append(s2 * row.ravel())
    blocks = [sp.csr_matrix(label), first]
    if second:
        blocks.append(sp.csr_matrix(np.vstack(second)))
    A = sp.vstack(blocks, format="csr")
    rhs = np.zeros(A.shape[0])
    rhs[0] = -float(margin)
    return CutSet(A, rhs, "classification", source_index)


def predict_three_layer(param: ThreeLayerParam, x) -> np.ndarray | float:
    """sum_j (sum_i (x.u_ij)_+ - (x.u'_ij)_+)_+ - (sum_i (x.v_ij)_+ - (x.v'_ij)_+)_+"""
    X = np.asarray(x, dtype=float)
    single = X.ndim == 1
    X = np.atleast_2d(X)
    Z = np.maximum(np.einsum("nd,ijkd->nijk", X, param.blocks), 0.0)
    T1 = (Z[..., 0] - Z[..., 1]).sum(axis=1)
    T2 = (Z[..., 2] - Z[..., 3]).sum(axis=1)
    out = (np.maximum(T1, 0.0) - np.maximum(T2, 0.0)).sum(axis=1)
    return float(out[0]) if single else out


def reconstruct_weights_three_layer(param: ThreeLayerParam) -> ReconstructedNetwork:
    """W1 holds every block; W2 sums blocks into (j, T1) and (j, T2) units; W3 = (+1, -1)."""
    P1, P2, _, d = param.shape
    W1 = param.blocks.reshape(-1, d).T
    W2 = np.zeros((P1, P2, 4, P2, 2))
    for j in range(P2):
        W2[:, j, 0, j, 0] = 1.0
        W2[:, j, 1, j, 0] = -1.0
        W2[:, j, 2, j, 1] = 1.0
        W2[:, j, 3, j, 1] = -1.0
    W3 = np.tile([1.0, -1.0], P2)
    return ReconstructedNetwork([W1, W2.reshape(P1 * P2 * 4, P2 * 2), W3], 3,
                                {"P1": P1, "P2": P2})
