"""Group-lasso convex program over a set of collected rows.

    minimise  1/2 |A theta - y|^2 + beta * sum_k |theta_k|_2
    s.t.      sign constraints of every row on every block

with A the stacked feature rows.  Each sign constraint touches one block, so
the program is solved by quadratic-penalty continuation with an accelerated
proximal-gradient inner loop, and every stage's iterate is projected onto the
per-block sign cones to obtain an exactly feasible candidate.  The best
feasible candidate is returned.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import nnls

from .patterns import PatternSet

log = logging.getLogger(__name__)


@dataclass
class SolveReport:
    theta: np.ndarray
    objective: float
    constraint_violation_max: float
    iterations: int
    converged: bool
    history: list = field(default_factory=list)
    stage_objectives: list = field(default_factory=list)

    def to_dict(self) -> dict:
        return {"objective": self.objective,
                "constraint_violation_max": self.constraint_violation_max,
                "iterations": self.iterations, "converged": self.converged,
                "stage_objectives": list(self.stage_objectives),
                "theta": self.theta.tolist()}


class _Problem:
    """Vectorised pieces; theta is viewed as Theta of shape (2P, d)."""

    def __init__(self, X, y, patterns: PatternSet, bits):
        self.X = np.atleast_2d(np.asarray(X, dtype=float))
        self.y = np.asarray(y, dtype=float).ravel()
        if self.X.shape[0] != self.y.shape[0]:
            raise ValueError("X and y disagree in length")
        if self.X.shape[0] == 0:
            raise ValueError("no rows to solve over")
        if self.X.shape[1] != patterns.d:
            raise ValueError(f"rows have {self.X.shape[1]} columns, patterns expect {patterns.d}")
        B = patterns.bits(self.X) if bits is None else np.asarray(bits, dtype=bool)
        if B.shape != (self.X.shape[0], patterns.P):
            raise ValueError(f"bits must have shape {(self.X.shape[0], patterns.P)}")
        self.P, self.d = patterns.P, patterns.d
        self.H = np.repeat(patterns.normals, 2, axis=0)  # a strictly feasible direction per block
        self.B = B.astype(float)
        # sign constraint rows: S * (X Theta^T) <= 0, S = -1 where active
        self.S = np.repeat(np.where(B, -1.0, 1.0), 2, axis=1)

    def residual(self, Th: np.ndarray) -> np.ndarray:
        Z = self.X @ Th.T
        return (self.B * (Z[:, 0::2] - Z[:, 1::2])).sum(axis=1) - self.y

    def violation(self, Th: np.ndarray) -> np.ndarray:
        return np.maximum(self.S * (self.X @ Th.T), 0.0)

    def smooth(self, Th: np.ndarray, rho: float):
        Z = self.X @ Th.T
        r = (self.B * (Z[:, 0::2] - Z[:, 1::2])).sum(axis=1) - self.y
        v = np.maximum(self.S * Z, 0.0)
        f = 0.5 * r @ r + 0.5 * rho * np.sum(v * v)
        G = rho * (self.S * v).T @ self.X
        Gr = (self.B * r[:, None]).T @ self.X
        G[0::2] += Gr
        G[1::2] -= Gr
        return f, G

    def project(self, Th: np.ndarray) -> np.ndarray:
        """Per-block Euclidean projection onto {u : S_k * (X u) <= 0}."""
        out = Th.copy()
        for k in range(Th.shape[0]):
            G = self.S[:, k, None] * self.X
            if np.all(G @ Th[k] <= 0):
                continue
            lam, _ = nnls(G.T, Th[k])
            out[k] = Th[k] - G.T @ lam
            v = G @ out[k]
            if np.any(v > 0):
                # NNLS leaves round-off violations; the pattern normal h has G h <= 0,
                # so the smallest shift along h that clears them keeps u in the cone
                gh = G @ self.H[k]
                bad = (v > 0) & (gh < 0)
                if np.any(bad):
                    out[k] = out[k] + 2.0 * np.max(v[bad] / -gh[bad]) * self.H[k]
        return out


def _group_norms(Th: np.ndarray) -> np.ndarray:
    return np.sqrt(np.einsum("kd,kd->k", Th, Th))


def _prox(V: np.ndarray, t: float) -> np.ndarray:
    n = _group_norms(V)
    scale = np.where(n > t, 1.0 - t / np.where(n > 0, n, 1.0), 0.0)
    return V * scale[:, None]


def objective_value(theta, X, y, patterns: PatternSet, beta: float, bits=None) -> float:
    """1/2 |A theta - y|^2 + beta * sum of block norms (no penalty terms)."""
    pr = _Problem(X, y, patterns, bits)
    Th = np.asarray(theta, dtype=float).reshape(2 * pr.P, pr.d)
    r = pr.residual(Th)
    return float(0.5 * r @ r + beta * _group_norms(Th).sum())


def constraint_violation(theta, X, patterns: PatternSet, bits=None) -> float:
    X = np.atleast_2d(np.asarray(X, dtype=float))
    pr = _Problem(X, np.zeros(X.shape[0]), patterns, bits)
    Th = np.asarray(theta, dtype=float).reshape(2 * pr.P, pr.d)
    return float(pr.violation(Th).max(initial=0.0))


def solve_group_lasso(X, y, patterns: PatternSet, beta: float = 1e-3, bits=None,
                      tol: float = 1e-9, rho0: float = 1.0, stages: int = 6,
                      max_iters: int = 5000, theta0=None) -> SolveReport:
    """Penalty continuation rho_k = rho0 * 10^k with monotone FISTA inside each stage."""
    if beta < 0:
        raise ValueError("beta must be non-negative")
    pr = _Problem(X, y, patterns, bits)
    scale = max(1.0, float(np.abs(pr.y).max()))
    Th = (np.zeros((2 * pr.P, pr.d)) if theta0 is None
          else np.asarray(theta0, dtype=float).reshape(2 * pr.P, pr.d).copy())

    def total(Th, rho):
        f, _ = pr.smooth(Th, rho)
        return f + beta * _group_norms(Th).sum()

    best, best_obj = np.zeros_like(Th), 0.5 * float(pr.y @ pr.y)
    history, stage_obj = [], []
    iters = 0
    Lip = 1.0
    converged = False
    for k in range(stages):
        rho = rho0 * 10.0 ** k
        Yk, Xk, tk = Th.copy(), Th.copy(), 1.0
        Fk = total(Xk, rho)
        stage_hist = [Fk]
        for _ in range(max_iters):
            iters += 1
            fy, gy = pr.smooth(Yk, rho)
            Lip *= 0.9  # let the step grow back after a conservative backtrack
            while True:
                Z = _prox(Yk - gy / Lip, beta / Lip)
                D = Z - Yk
                fz, _ = pr.smooth(Z, rho)
                if fz <= fy + np.sum(gy * D) + 0.5 * Lip * np.sum(D * D) + 1e-15 * abs(fy):
                    break
                Lip *= 2.0
            Fz = fz + beta * _group_norms(Z).sum()
            # monotone variant: keep the better of the new point and the old iterate
            Xn = Z if Fz <= Fk else Xk
            Fn = min(Fz, Fk)
            tn = 0.5 * (1.0 + np.sqrt(1.0 + 4.0 * tk * tk))
            Yk = Xn + (tk / tn) * (Z - Xn) + ((tk - 1.0) / tn) * (Xn - Xk)
            if Fz > Fk:
                tn = 1.0  # restart momentum
                Yk = Xn.copy()
            done = abs(Fk - Fn) <= tol * max(1.0, abs(Fk)) and Fz <= Fk
            Xk, Fk, tk = Xn, Fn, tn
            stage_hist.append(Fk)
            if done:
                break
        Th = Xk
        history.append(stage_hist)
        cand = pr.project(Th)
        obj = objective_value(cand.ravel(), pr.X, pr.y, patterns, beta, pr.B > 0)
        stage_obj.append(obj)
        if obj < best_obj:
            best, best_obj = cand, obj
        viol = float(pr.violation(Th).max(initial=0.0))
        log.debug("stage %d rho=%g penalised=%.6g projected=%.6g viol=%.2e", k, rho, Fk, obj, viol)
        settled = k > 0 and abs(stage_obj[-1] - stage_obj[-2]) <= 1e-6 * max(best_obj, 1e-12)
        if viol <= 1e-6 * scale and settled:
            converged = True
            break
    else:
        viol = float(pr.violation(Th).max(initial=0.0))
        converged = viol <= 1e-6 * scale
    best_viol = float(pr.violation(best).max(initial=0.0))
    return SolveReport(best.ravel(), float(best_obj), best_viol, iters, converged, history, stage_obj)
