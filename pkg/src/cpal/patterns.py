"""Hyperplane arrangement (activation) patterns of a data matrix.

A pattern is the 0/1 vector 1{X u >= 0} for some direction u; ties count as
active.  Each stored pattern keeps the direction that produced it so the
pattern can be evaluated on new points.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import linprog

from . import rng as _rng


def pattern_of(X, u) -> np.ndarray:
    """Boolean mask 1{X u >= 0}."""
    X = np.atleast_2d(np.asarray(X, dtype=float))
    u = np.asarray(u, dtype=float).ravel()
    if X.shape[1] != u.shape[0]:
        raise ValueError(f"direction has length {u.shape[0]}, data has {X.shape[1]} columns")
    return X @ u >= 0


def _mask_str(m: np.ndarray) -> str:
    return "".join("1" if v else "0" for v in m)


@dataclass(frozen=True)
class ActivationPattern:
    mask: np.ndarray
    normal: np.ndarray

    def bits(self, X) -> np.ndarray:
        return pattern_of(X, self.normal)


@dataclass
class PatternSet:
    """Distinct activation patterns of an n x d matrix.

    ``masks`` is (P, n) boolean, ``normals`` is (P, d) with one representative
    direction per pattern.
    """

    masks: np.ndarray
    normals: np.ndarray
    n: int
    d: int
    provenance: dict = field(default_factory=dict)
    shortfall: bool = False

    def __post_init__(self):
        self.masks = np.asarray(self.masks, dtype=bool).reshape(-1, self.n)
        self.normals = np.asarray(self.normals, dtype=float).reshape(-1, self.d)
        if self.masks.shape[0] != self.normals.shape[0]:
            raise ValueError("masks and normals disagree in count")

    def __len__(self) -> int:
        return self.masks.shape[0]

    @property
    def P(self) -> int:
        return len(self)

    def __getitem__(self, i) -> ActivationPattern:
        return ActivationPattern(self.masks[i], self.normals[i])

    def bits(self, X) -> np.ndarray:
        """(m, P) boolean activations of new points under each stored direction."""
        X = np.atleast_2d(np.asarray(X, dtype=float))
        if X.shape[1] != self.d:
            raise ValueError(f"points have {X.shape[1]} columns, patterns expect {self.d}")
        return X @ self.normals.T >= 0

    def as_set(self) -> set[str]:
        return {_mask_str(m) for m in self.masks}

    def subset(self, idx) -> "PatternSet":
        idx = np.asarray(idx)
        return PatternSet(self.masks[idx], self.normals[idx], self.n, self.d,
                          dict(self.provenance), self.shortfall)

    def to_dict(self) -> dict:
        return {"n": self.n, "d": self.d, "provenance": self.provenance,
                "shortfall": self.shortfall,
                "masks": [_mask_str(m) for m in self.masks],
                "normals": self.normals.tolist()}

    @classmethod
    def from_dict(cls, data: dict) -> "PatternSet":
        n, d = int(data["n"]), int(data["d"])
        masks = np.array([[c == "1" for c in s] for s in data["masks"]], dtype=bool).reshape(-1, n)
        normals = np.asarray(data.get("normals", []), dtype=float).reshape(-1, d)
        return cls(masks, normals, n, d, data.get("provenance", {}), bool(data.get("shortfall", False)))

    def to_json(self, path) -> None:
        with open(path, "w") as fh:
            json.dump(self.to_dict(), fh)

    @classmethod
    def from_json(cls, path) -> "PatternSet":
        with open(path) as fh:
            return cls.from_dict(json.load(fh))


def _check_X(X) -> np.ndarray:
    X = np.asarray(X, dtype=float)
    if X.ndim != 2 or X.shape[0] == 0 or X.shape[1] == 0:
        raise ValueError("X must be a non-empty 2-D array")
    if not np.all(np.isfinite(X)):
        raise ValueError("X contains non-finite values")
    return X


def sample_patterns(X, target: int | None = None, simulations: int = 1000,
                    seed: int = 0) -> PatternSet:
    """Distinct patterns from Gaussian directions, kept in first-seen order.

    Stops once ``target`` distinct patterns are found; ``shortfall`` is set
    when the simulations run out first.
    """
    X = _check_X(X)
    if simulations < 1:
        raise ValueError("simulations must be positive")
    if target is not None and target < 1:
        raise ValueError("target must be positive")
    n, d = X.shape
    U = _rng.stream(seed, "patterns").standard_normal((simulations, d))
    M = X @ U.T >= 0  # (n, simulations)
    seen: dict[bytes, int] = {}
    for j in range(simulations):
        key = np.packbits(M[:, j]).tobytes()
        if key not in seen:
            seen[key] = j
            if target is not None and len(seen) >= target:
                break
    cols = np.fromiter(seen.values(), dtype=int, count=len(seen))
    return PatternSet(M[:, cols].T, U[cols], n, d,
                      {"method": "sample", "seed": int(seed), "simulations": int(simulations),
                       "target": target},
                      shortfall=target is not None and len(seen) < target)


def enumerate_patterns_exact(X, limit: int = 20, tol: float = 1e-9) -> PatternSet:
    """All realisable patterns, for small n.

    Builds patterns row by row: a partial sign vector is kept when the open
    cone {u : s_i x_i u > 0} is non-empty, with ties broken towards "active"
    (a zero row always gives bit 1).  Cone feasibility is an LP.
    """
    X = _check_X(X)
    n, d = X.shape
    if n > limit:
        raise ValueError(f"exact enumeration limited to {limit} rows, got {n}")
    # each entry: (signs list, representative u)
    partial: list[tuple[list[int], np.ndarray]] = [([], np.zeros(d))]
    first = True
    for i in range(n):
        x = X[i]
        nxt = []
        for signs, u in partial:
            if not np.any(x):
                nxt.append((signs + [1], u))
                continue
            implied = 1 if (not first and x @ u > 0) else (0 if not first and x @ u < 0 else None)
            for s in (1, 0):
                if s == implied:
                    nxt.append((signs + [s], u))
                    continue
                cand = signs + [s]
                ok, v = _cone_point(X[: i + 1], cand, tol)
                if ok:
                    nxt.append((cand, v))
        partial = nxt
        first = first and not np.any(x)
    # masks reachable only on a measure-zero tie set (e.g. rows x and -x both
    # active at u orthogonal to x) fail the strict test and are left out
    masks = np.array([p[0] for p in partial], dtype=bool).reshape(-1, n)
    normals = np.array([p[1] for p in partial], dtype=float).reshape(-1, d)
    # order lexicographically for reproducibility
    order = np.lexsort(masks.T[::-1])
    return PatternSet(masks[order], normals[order], n, d, {"method": "exact", "tol": tol})


def _cone_point(X: np.ndarray, signs, tol: float):
    """Strictly feasible u in the open cone {(2s_i - 1) x_i . u > 0} for nonzero rows.

    Maximises the common normalised slack over the cube |u_j| <= 1; the cone is
    open and non-empty exactly when that optimum is positive, since any interior
    direction can be scaled into the cube.
    """
    sgn = 2.0 * np.asarray(signs, dtype=float) - 1.0
    nz = np.any(X != 0, axis=1)
    G = -(sgn[nz, None] * X[nz])
    G = G / np.linalg.norm(G, axis=1, keepdims=True)
    d = X.shape[1]
    cost = np.zeros(d + 1)
    cost[-1] = -1.0
    res = linprog(cost, A_ub=np.hstack([G, np.ones((G.shape[0], 1))]), b_ub=np.zeros(G.shape[0]),
                  bounds=[(-1.0, 1.0)] * d + [(None, 1.0)], method="highs")
    if res.status != 0 or -res.fun <= tol:
        return False, None
    u = res.x[:d]
    # confirm the recovered direction realises the signs
    if np.any((X[nz] @ u >= 0) != (sgn[nz] > 0)):
        return False, None
    return True, u
