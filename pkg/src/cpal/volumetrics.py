"""Monte-Carlo volume estimates for localization sets.

Used to check the volume-reduction behaviour of center cuts empirically:
uniform samples come from a hit-and-run chain, and cut ratios are sample
fractions with binomial standard errors.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import rng as _rng
from .localization import Halfspace, LocalizationSet, analytic_center

GRUNBAUM_BOUND = 1.0 - 1.0 / np.e


@dataclass
class VolumeReport:
    ratio: float
    stderr: float
    n_samples: int
    bound: float = GRUNBAUM_BOUND
    exact_bound: float = float("nan")
    passed: bool = True
    ratios: tuple = ()

    def to_dict(self) -> dict:
        return {"ratio": self.ratio, "stderr": self.stderr, "n_samples": self.n_samples,
                "bound": self.bound, "exact_bound": self.exact_bound,
                "passed": self.passed, "ratios": list(self.ratios)}


def _chord(L: LocalizationSet, A, x: np.ndarray, v: np.ndarray, Ax: np.ndarray, Av: np.ndarray):
    """Interval [lo, hi] of t with x + t v inside L (x must be inside)."""
    # ball: |x + t v|^2 <= r^2
    a = v @ v
    bq = 2.0 * (x @ v)
    c = x @ x - L.radius ** 2
    disc = max(bq * bq - 4.0 * a * c, 0.0)
    root = np.sqrt(disc)
    lo, hi = (-bq - root) / (2.0 * a), (-bq + root) / (2.0 * a)
    if A is not None and Av.size:
        slack = L.b - Ax
        pos, neg = Av > 0, Av < 0
        if np.any(pos):
            hi = min(hi, float(np.min(slack[pos] / Av[pos])))
        if np.any(neg):
            lo = max(lo, float(np.max(slack[neg] / Av[neg])))
    return lo, hi


def hit_and_run_samples(L: LocalizationSet, count: int, seed: int = 0, burn_in: int = 1000,
                        start=None, thin: int = 1) -> np.ndarray:
    """``count`` approximately uniform points of ``L`` from a hit-and-run chain."""
    if count < 0 or burn_in < 0 or thin < 1:
        raise ValueError("count and burn_in must be non-negative, thin positive")
    L = L.active()
    if start is None:
        c = analytic_center(L)
        if not c.feasible:
            raise ValueError(f"cannot sample from set (center status {c.status})")
        x = c.theta.copy()
    else:
        x = np.asarray(start, dtype=float).copy()
        if not L.contains(x):
            raise ValueError("start point is outside the set")
    gen = _rng.stream(seed, "hit_and_run")
    A = L.geometry().op if L.n_cuts else None
    Ax = A @ x if A is not None else np.zeros(0)
    out = np.empty((count, L.dim))
    steps = burn_in + count * thin
    dirs = gen.standard_normal((steps, L.dim))
    us = gen.random(steps)
    k = 0
    for i in range(steps):
        v = dirs[i]
        Av = A @ v if A is not None else np.zeros(0)
        lo, hi = _chord(L, A, x, v, Ax, Av)
        if hi > lo:
            t = lo + us[i] * (hi - lo)
            x = x + t * v
            Ax = Ax + t * Av
        if i >= burn_in and (i - burn_in) % thin == thin - 1:
            out[k] = x
            k += 1
    return out


def _split(samples: np.ndarray, h: Halfspace) -> tuple[float, float, int]:
    n = samples.shape[0]
    if n == 0:
        raise ValueError("no samples")
    inside = samples @ h.a <= h.b
    p = float(inside.mean())
    return p, float(np.sqrt(p * (1.0 - p) / n)), n


def estimate_cut_ratio(L: LocalizationSet, h: Halfspace, samples: int = 10_000,
                       seed: int = 0, burn_in: int = 1000, points=None) -> VolumeReport:
    """vol(L intersect h) / vol(L) as a sample fraction."""
    P = hit_and_run_samples(L, samples, seed, burn_in) if points is None else np.asarray(points)
    p, se, n = _split(P, h)
    return VolumeReport(p, se, n, ratios=(p, 1.0 - p))


def gruenbaum_check(L: LocalizationSet, samples: int = 10_000, seed: int = 0,
                    burn_in: int = 1000, points=None, direction=None) -> VolumeReport:
    """Cut through the estimated centroid with a random hyperplane.

    Passes when both sides hold at most 1 - 1/e of the samples, up to four
    standard errors.  ``exact_bound`` carries 1 - (d/(d+1))^d for reference.
    """
    P = hit_and_run_samples(L, samples, seed, burn_in) if points is None else np.asarray(points)
    d = L.dim
    if direction is None:
        direction = _rng.stream(seed, "gruenbaum_direction").standard_normal(d)
    a = np.asarray(direction, dtype=float)
    centroid = P.mean(axis=0)
    p, se, n = _split(P, Halfspace(a, float(a @ centroid)))
    ratios = (p, 1.0 - p)
    passed = max(ratios) <= GRUNBAUM_BOUND + 4.0 * se
    return VolumeReport(max(ratios), se, n, GRUNBAUM_BOUND,
                        1.0 - (d / (d + 1.0)) ** d, bool(passed), ratios)
