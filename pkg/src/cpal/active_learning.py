"""Cutting-plane training and active-learning loops.

All loops share one engine: keep a localization set over the parameters,
query rows of a pool by a selection rule evaluated at the analytic center,
and add the row's cut when the center mishandles it (or always, for the
inexact variant).  Rows that were queried without triggering a cut are set
aside until the next cut changes the center.

The budget counts cuts, i.e. the size of the collected set.  Loops stop on
budget, on ``max_iters`` queries, or when no row is left to query.
"""

from __future__ import annotations

import csv
import io
import logging
import time
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from . import rng as _rng
from .data import LabeledDataset, metrics
from .final_solve import SolveReport, solve_group_lasso
from .localization import LocalizationSet, analytic_center, init_ball
from .patterns import PatternSet
from .relu_model import (classification_cut, feature_matrix, predict_two_layer,
                         regression_cut)
from .volumetrics import hit_and_run_samples

log = logging.getLogger(__name__)

STRATEGIES = ("signed_extreme", "min_margin", "random")
TRACE_FIELDS = ("iter", "queried_row", "label", "prediction", "cut_performed",
                "center_status", "n_cuts_total", "train_metric", "test_metric", "wall_ms")


@dataclass
class ALConfig:
    budget: int = 20
    margin: float = 0.0
    eps: float = 1e-3
    center_tol: float = 1e-8
    strategy: str = "signed_extreme"
    max_iters: int = 1000
    seed: int = 0
    final_solve: bool = False
    beta: float = 1e-3
    record_timing: bool = True
    radius: float = 1.0
    hr_samples: int = 64
    hr_burn_in: int = 200
    keep_last: int | None = None

    def __post_init__(self):
        if self.budget < 1:
            raise ValueError("budget must be at least 1")
        if not self.eps > 0:
            raise ValueError("eps must be positive")
        if self.strategy not in STRATEGIES:
            raise ValueError(f"unknown strategy {self.strategy!r}; choose from {STRATEGIES}")
        if self.max_iters < 1:
            raise ValueError("max_iters must be positive")


@dataclass
class TraceRecord:
    iter: int
    queried_row: int
    label: float
    prediction: float
    cut_performed: bool
    center_status: str
    n_cuts_total: int
    train_metric: float
    test_metric: float
    wall_ms: float


class ALTrace:
    def __init__(self):
        self.records: list[TraceRecord] = []

    def append(self, rec: TraceRecord) -> None:
        self.records.append(rec)

    def __len__(self) -> int:
        return len(self.records)

    def __iter__(self):
        return iter(self.records)

    def column(self, name: str) -> list:
        return [getattr(r, name) for r in self.records]

    @property
    def n_cuts(self) -> int:
        return self.records[-1].n_cuts_total if self.records else 0

    def to_csv(self, path=None) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(TRACE_FIELDS)
        for r in self.records:
            w.writerow([r.iter, r.queried_row, repr(float(r.label)), repr(float(r.prediction)),
                        int(r.cut_performed), r.center_status, r.n_cuts_total,
                        repr(float(r.train_metric)), repr(float(r.test_metric)),
                        repr(float(r.wall_ms))])
        text = buf.getvalue()
        if path is not None:
            with open(path, "w", newline="") as fh:
                fh.write(text)
        return text

    @classmethod
    def from_csv(cls, path) -> "ALTrace":
        tr = cls()
        with open(path, newline="") as fh:
            for row in csv.DictReader(fh):
                tr.append(TraceRecord(int(row["iter"]), int(row["queried_row"]), float(row["label"]),
                                      float(row["prediction"]), bool(int(row["cut_performed"])),
                                      row["center_status"], int(row["n_cuts_total"]),
                                      float(row["train_metric"]), float(row["test_metric"]),
                                      float(row["wall_ms"])))
        return tr


@dataclass
class ALResult:
    theta: np.ndarray
    trace: ALTrace
    center_theta: np.ndarray
    rows: list
    status: str  # budget | max_iters | pool_exhausted | infeasible
    localization: LocalizationSet | None = None
    final_report: SolveReport | None = None
    metrics: dict = field(default_factory=dict)
    infeasible_row: int | None = None


class InfeasibleError(RuntimeError):
    """The localization set became empty; ``result`` holds the partial run."""

    def __init__(self, msg: str, result: ALResult):
        super().__init__(msg)
        self.result = result


@dataclass
class Pool:
    """Candidate rows: points, labels, and per-row activation bits (m, P)."""

    X: np.ndarray
    y: np.ndarray
    bits: np.ndarray | None = None
    ids: np.ndarray | None = None

    def __post_init__(self):
        self.X = np.atleast_2d(np.asarray(self.X, dtype=float))
        self.y = np.asarray(self.y, dtype=float).ravel()
        if self.X.shape[0] == 0:
            raise ValueError("pool is empty")
        if self.y.shape[0] != self.X.shape[0]:
            raise ValueError("pool points and labels disagree in length")
        if self.ids is None:
            self.ids = np.arange(self.X.shape[0])

    def __len__(self) -> int:
        return self.X.shape[0]


def train_pool(ds: LabeledDataset, patterns: PatternSet) -> Pool:
    """Training rows with their stored pattern bits (patterns built on X_train)."""
    if patterns.n != ds.train.size:
        raise ValueError(f"patterns describe {patterns.n} rows, train split has {ds.train.size}")
    return Pool(ds.X_train, ds.y_train, patterns.masks.T, ds.train)


def query_select(pred: np.ndarray, candidates: np.ndarray, strategy: str, s: int = 1,
                 gen: np.random.Generator | None = None) -> int:
    """Position (into ``pred``) of the chosen candidate; ties go to the lowest index."""
    cand = np.flatnonzero(candidates)
    if cand.size == 0:
        raise ValueError("no candidate rows left to query")
    if strategy == "signed_extreme":
        score = s * pred[cand]
    elif strategy == "min_margin":
        score = np.abs(pred[cand])
    elif strategy == "random":
        if gen is None:
            raise ValueError("random strategy needs a generator")
        return int(cand[gen.integers(cand.size)])
    else:
        raise ValueError(f"unknown strategy {strategy!r}")
    return int(cand[np.argmin(score)])


# ---------------------------------------------------------------------------
# engine


@dataclass
class _Model:
    """How a parameter vector maps pool rows to predictions and cuts."""

    dim: int
    block_size: int | None
    features: np.ndarray               # (m, dim) linearised rows for the pool
    make_cut: Callable[[int], object]  # position -> cut (CutSet or (A, b))
    evaluate: Callable[[np.ndarray], tuple[float, float]]
    # collected positions -> a point strictly inside their cuts, or None
    interior: Callable[[list], np.ndarray | None] | None = None

    def recenter(self, L: LocalizationSet, collected: list, previous: np.ndarray, tol: float):
        start = self.interior(collected) if self.interior is not None else None
        return analytic_center(L, tol, start=start, toward=previous)


def _trigger(kind: str, y: float, f: float, eps: float, margin: float = 0.0) -> bool:
    if kind == "classification":
        # zero counts as wrong: the origin predicts 0 everywhere
        return y * f <= 0.0 or y * f < margin
    return abs(y - f) > eps


def _engine(pool: Pool, model: _Model, config: ALConfig, kind: str, always_cut: bool,
            queries_per_round: int, select: Callable, L0: LocalizationSet | None,
            raise_on_infeasible: bool) -> ALResult:
    L = L0 if L0 is not None else init_ball(model.dim, config.radius, model.block_size,
                                             config.keep_last)
    c = analytic_center(L, config.center_tol)
    if not c.feasible:
        raise ValueError(f"initial localization set has no usable center ({c.status})")
    theta = c.theta
    pred = model.features @ theta
    trace = ALTrace()
    collected: list[int] = []
    used = np.zeros(len(pool), dtype=bool)
    parked = np.zeros(len(pool), dtype=bool)
    train_m, test_m = model.evaluate(theta)
    status, bad_row = "max_iters", None
    it = 0
    rnd = 0
    while True:
        if len(collected) >= config.budget:
            status = "budget"
            break
        if it >= config.max_iters:
            status = "max_iters"
            break
        if not np.any(~used & ~parked):
            status = "pool_exhausted"
            break
        picked: list[int] = []
        for q in range(queries_per_round):
            if len(collected) >= config.budget or it >= config.max_iters:
                break
            cand = ~used & ~parked
            if not np.any(cand):
                break
            s = 1 if q == 0 else -1
            j = select(theta, pred, cand, s, L, rnd)
            if j in picked:
                continue
            picked.append(j)
            it += 1
            t0 = time.perf_counter()
            y, f = float(pool.y[j]), float(pred[j])
            fire = always_cut or _trigger(kind, y, f, config.eps, config.margin)
            cstat = "unchanged"
            if fire:
                L = L.add_cuts(model.make_cut(j))
                used[j] = True
                parked[:] = False
                collected.append(j)
                c = model.recenter(L, collected, theta, config.center_tol)
                cstat = c.status
                if not c.feasible:
                    status, bad_row = "infeasible", int(pool.ids[j])
                else:
                    theta = c.theta
                    pred = model.features @ theta
                    train_m, test_m = model.evaluate(theta)
            else:
                parked[j] = True
            ms = (time.perf_counter() - t0) * 1e3 if config.record_timing else 0.0
            trace.append(TraceRecord(it, int(pool.ids[j]), y, f, bool(fire), cstat, len(collected),
                                     train_m, test_m, round(ms, 3)))
            if status == "infeasible":
                break
        rnd += 1
        if status == "infeasible":
            break
    res = ALResult(theta, trace, theta, [int(pool.ids[j]) for j in collected], status, L,
                   infeasible_row=bad_row)
    res.metrics = {"train": train_m, "test": test_m}
    if status == "infeasible":
        msg = f"localization set became empty after cutting on row {bad_row}"
        log.warning(msg)
        if raise_on_infeasible:
            raise InfeasibleError(msg, res)
    return res


def _default_select(config: ALConfig):
    gen = _rng.stream(config.seed, "query_random")

    def select(theta, pred, cand, s, L, rnd):
        return query_select(pred, cand, config.strategy, s, gen)
    return select


def _rounds(config: ALConfig) -> int:
    return 2 if config.strategy == "signed_extreme" else 1


def _two_layer_model(pool: Pool, patterns: PatternSet, config: ALConfig, kind: str,
                     evaluate) -> _Model:
    F = feature_matrix(pool.X, patterns, pool.bits)
    if kind == "classification":
        def make_cut(j):
            return classification_cut(pool.X[j], int(pool.y[j]), patterns, config.margin,
                                      None if pool.bits is None else pool.bits[j], int(pool.ids[j]))
    else:
        def make_cut(j):
            return regression_cut(pool.X[j], float(pool.y[j]), patterns, config.eps,
                                  None if pool.bits is None else pool.bits[j], int(pool.ids[j]))
    return _Model(2 * patterns.P * patterns.d, patterns.d, F, make_cut, evaluate,
                  _two_layer_interior(pool, patterns, config, kind))


def _cone_directions(G: np.ndarray, Z: np.ndarray, iters: int = 30) -> np.ndarray:
    """Per-pattern minimiser of -sum_j log(-g_ij . z) + m/2 |z|^2, batched.

    G is (P, m, d) with the sign rows g . z <= 0 of each pattern, Z a (P, d)
    start inside every cone.  The minimiser is the unit direction that the
    analytic center of a single block's sign cone points along.  Patterns whose
    start is not strictly inside keep it unchanged.
    """
    m = G.shape[1]
    s = -np.einsum("pmd,pd->pm", G, Z)
    live = np.all(s > 0, axis=1)
    Z, G, s = Z[live].copy(), G[live], s[live]
    eye = np.eye(Z.shape[1])
    for _ in range(iters):
        inv = 1.0 / s
        g = np.einsum("pmd,pm->pd", G, inv) + m * Z
        H = np.einsum("pmd,pm,pme->pde", G, inv ** 2, G) + m * eye
        dz = -np.linalg.solve(H, g[..., None])[..., 0]
        if np.max(-np.einsum("pd,pd->p", g, dz)) <= 1e-12:
            break
        ds = -np.einsum("pmd,pd->pm", G, dz)
        # largest step keeping every slack positive, damped
        ratio = np.where(ds < 0, -s / np.where(ds < 0, ds, -1.0), np.inf)
        t = np.minimum(1.0, 0.9 * ratio.min(axis=1))[:, None]
        Z, s = Z + t * dz, s + t * ds
    out = np.empty((live.size, Z.shape[1]))
    out[live] = Z
    out[~live] = 0.0
    return out, live


def _two_layer_interior(pool: Pool, patterns: PatternSet, config: ALConfig, kind: str):
    """Start point built from per-pattern cone directions.

    Both blocks of pattern i share the sign rows of the collected points, so
    u'_i = a_i z_i, u_i = c_i z_i with z_i strictly inside that cone and
    a_i, c_i > 0 satisfies every sign row.  The prediction on row j is then
    sum_i b_ji (x_j . z_i)(a_i - c_i), and the label rows only constrain
    w = a - c, which a least-squares solve supplies.  The common part of a and c
    is free; it is set so that blocks have about the norm they have at the
    center of the ball and sign rows alone, which keeps Newton from spending
    its iterations growing tiny blocks.
    """
    H = patterns.normals / np.linalg.norm(patterns.normals, axis=1, keepdims=True)

    def interior(collected):
        if not collected:
            return None
        pos = np.asarray(collected)
        Xc = pool.X[pos]
        Bb = patterns.bits(Xc) if pool.bits is None else pool.bits[pos]
        G = np.where(Bb.T, -1.0, 1.0)[:, :, None] * Xc[None, :, :]
        Z, live = _cone_directions(G, H)
        Z[~live] = H[~live]
        Z /= np.linalg.norm(Z, axis=1, keepdims=True)
        M = Bb.astype(float) * (Xc @ Z.T)
        y = pool.y[pos]
        target = y * (config.margin + 1.0) if kind == "classification" else y
        w = np.linalg.lstsq(M, target, rcond=None)[0]
        base = 0.5 * config.radius / np.sqrt(2 * patterns.P)
        a, c = np.maximum(w, 0.0) + base, np.maximum(-w, 0.0) + base
        theta = np.empty((2 * patterns.P, patterns.d))
        theta[0::2] = a[:, None] * Z
        theta[1::2] = c[:, None] * Z
        theta = theta.ravel()
        if kind == "classification" and config.margin == 0:
            # homogeneous cuts: any positive scaling stays inside
            theta *= 0.5 * config.radius / np.linalg.norm(theta)
        return theta
    return interior


def _evaluator(ds: LabeledDataset | None, predict):
    if ds is None:
        return lambda theta: (float("nan"), float("nan"))

    def evaluate(theta):
        tr = metrics(predict(theta, ds.X_train), ds.y_train, ds.task) if ds.train.size else float("nan")
        te = metrics(predict(theta, ds.X_test), ds.y_test, ds.task) if ds.test.size else float("nan")
        return tr, te
    return evaluate


def _finish(res: ALResult, pool: Pool, patterns: PatternSet, config: ALConfig,
            ds: LabeledDataset | None, predict) -> ALResult:
    if config.final_solve and res.rows:
        pos = [int(np.flatnonzero(pool.ids == r)[0]) for r in res.rows]
        rep = solve_group_lasso(pool.X[pos], pool.y[pos], patterns, config.beta,
                                None if pool.bits is None else pool.bits[pos])
        res.final_report = rep
        res.theta = rep.theta
    tr, te = _evaluator(ds, predict)(res.theta)
    res.metrics = {"train": tr, "test": te}
    return res


def _two_layer_run(pool: Pool, patterns: PatternSet, config: ALConfig, ds, kind: str,
                   always_cut: bool, L0, raise_on_infeasible=True) -> ALResult:
    predict = lambda th, X: predict_two_layer(th, patterns, X)  # noqa: E731
    model = _two_layer_model(pool, patterns, config, kind, _evaluator(ds, predict))
    res = _engine(pool, model, config, kind, always_cut, _rounds(config), _default_select(config),
                  L0, raise_on_infeasible)
    return _finish(res, pool, patterns, config, ds, predict)


# ---------------------------------------------------------------------------
# public loops


def train_cutting_plane(X, y, patterns: PatternSet, config: ALConfig | None = None,
                        bits=None, L0: LocalizationSet | None = None,
                        dataset: LabeledDataset | None = None, max_passes: int = 50) -> ALResult:
    """Sweep (X, y) in order, cutting on every row the current center gets wrong.

    Sweeps repeat until one makes no cut, so at termination every row is on
    the right side of the center with the configured margin (1 by default).
    The budget is not applied.
    """
    config = config or ALConfig(margin=1.0)
    X = np.atleast_2d(np.asarray(X, dtype=float))
    y = np.asarray(y, dtype=float).ravel()
    if not np.all(np.isin(y, (-1.0, 1.0))):
        raise ValueError("labels must be -1 or +1")
    if bits is None:
        bits = patterns.masks.T if patterns.n == X.shape[0] else patterns.bits(X)
    pool = Pool(X, y, bits)
    predict = lambda th, Z: predict_two_layer(th, patterns, Z)  # noqa: E731
    evaluate = _evaluator(dataset, predict)
    model = _two_layer_model(pool, patterns, config, "classification", evaluate)
    L = L0 if L0 is not None else init_ball(model.dim, config.radius, model.block_size,
                                             config.keep_last)
    c = analytic_center(L, config.center_tol)
    if not c.feasible:
        raise ValueError(f"initial localization set has no usable center ({c.status})")
    theta = c.theta
    trace, collected = ALTrace(), []
    train_m, test_m = evaluate(theta)
    status, it = "max_iters", 0
    for _ in range(max_passes):
        cuts_this_pass = 0
        for j in range(len(pool)):
            it += 1
            t0 = time.perf_counter()
            f = float(model.features[j] @ theta)
            fire = y[j] * f < config.margin or y[j] * f <= 0.0
            cstat = "unchanged"
            if fire:
                L = L.add_cuts(model.make_cut(j))
                collected.append(j)
                cuts_this_pass += 1
                c = model.recenter(L, collected, theta, config.center_tol)
                cstat = c.status
                if not c.feasible:
                    ms = (time.perf_counter() - t0) * 1e3 if config.record_timing else 0.0
                    trace.append(TraceRecord(it, j, float(y[j]), f, True, cstat, len(collected),
                                             train_m, test_m, round(ms, 3)))
                    res = ALResult(theta, trace, theta, collected, "infeasible", L, infeasible_row=j,
                                   metrics={"train": train_m, "test": test_m})
                    raise InfeasibleError(
                        f"row {j} cannot be fitted with the given patterns (empty set)", res)
                theta = c.theta
                train_m, test_m = evaluate(theta)
            ms = (time.perf_counter() - t0) * 1e3 if config.record_timing else 0.0
            trace.append(TraceRecord(it, j, float(y[j]), f, bool(fire), cstat, len(collected),
                                     train_m, test_m, round(ms, 3)))
        if cuts_this_pass == 0:
            status = "converged"
            break
    res = ALResult(theta, trace, theta, collected, status, L)
    return _finish(res, pool, patterns, config, dataset, predict)


def al_limited_queries(ds: LabeledDataset, patterns: PatternSet, config: ALConfig | None = None,
                       L0: LocalizationSet | None = None) -> ALResult:
    """Pool-based loop over the training rows; cut only on mishandled rows."""
    config = config or ALConfig()
    return _two_layer_run(train_pool(ds, patterns), patterns, config, ds, "classification", False, L0)


def al_query_synthesis(pool: Pool, patterns: PatternSet, config: ALConfig | None = None,
                       dataset: LabeledDataset | None = None,
                       L0: LocalizationSet | None = None) -> ALResult:
    """Same loop over a synthesised pool (e.g. a grid labelled by an oracle)."""
    config = config or ALConfig()
    if len(pool) == 0:
        raise ValueError("pool is empty")
    return _two_layer_run(pool, patterns, config, dataset, "classification", False, L0)


def al_inexact(ds: LabeledDataset, patterns: PatternSet, config: ALConfig | None = None,
               L0: LocalizationSet | None = None) -> ALResult:
    """Every queried row is cut on, right or wrong."""
    config = config or ALConfig()
    return _two_layer_run(train_pool(ds, patterns), patterns, config, ds, "classification", True, L0)


def al_regression(ds: LabeledDataset, patterns: PatternSet, config: ALConfig | None = None,
                  L0: LocalizationSet | None = None) -> ALResult:
    """Cut when |y - f| > eps with the two-sided eps band."""
    config = config or ALConfig()
    return _two_layer_run(train_pool(ds, patterns), patterns, config, ds, "regression", False, L0)


# ---------------------------------------------------------------------------
# linear baselines


def _linear_select(config: ALConfig, X: np.ndarray):
    def select(theta, pred, cand, s, L, rnd):
        pts = hit_and_run_samples(L, config.hr_samples, _seed_for(config.seed, rnd),
                                  config.hr_burn_in, start=theta)
        g = pts.mean(axis=0)
        score = X @ g
        idx = np.flatnonzero(cand)
        return int(idx[np.argmin(score[idx])])
    return select


def _seed_for(seed: int, rnd: int) -> int:
    # distinct, reproducible chain per round
    return int(_rng.stream(seed, "linear_query", rnd).integers(2 ** 63))


def _linear_run(ds: LabeledDataset, config: ALConfig, kind: str, raise_on_infeasible: bool) -> ALResult:
    X, y = ds.X_train, ds.y_train
    pool = Pool(X, y, None, ds.train)
    predict = lambda th, Z: np.atleast_2d(Z) @ th  # noqa: E731
    if kind == "classification":
        def make_cut(j):
            return (-y[j] * X[j][None, :], np.array([-config.margin]))
    else:
        def make_cut(j):
            return (np.vstack([X[j], -X[j]]), np.array([y[j] + config.eps, -(y[j] - config.eps)]))
    model = _Model(X.shape[1], None, X, make_cut, _evaluator(ds, predict))
    res = _engine(pool, model, config, kind, False, 1, _linear_select(config, X), None,
                  raise_on_infeasible)
    tr, te = _evaluator(ds, predict)(res.theta)
    res.metrics = {"train": tr, "test": te}
    return res


def linear_al_classification(ds: LabeledDataset, config: ALConfig | None = None) -> ALResult:
    """Linear model <theta, x>; query argmin <g, x> with g a hit-and-run mean."""
    return _linear_run(ds, config or ALConfig(), "classification", True)


def linear_al_regression(ds: LabeledDataset, config: ALConfig | None = None) -> ALResult:
    """Linear regression loop; an empty set is reported via ``status`` instead of raising."""
    return _linear_run(ds, config or ALConfig(), "regression", False)


def check_collected(res: ALResult, pool: Pool, kind: str, margin: float = 0.0, eps: float = 1e-3,
                    features: np.ndarray | None = None, slack: float = 0.0) -> np.ndarray:
    """Per collected row: does the last center satisfy that row's own label cut?"""
    pos = [int(np.flatnonzero(pool.ids == r)[0]) for r in res.rows]
    f = features[pos] @ res.center_theta
    y = pool.y[pos]
    if kind == "classification":
        return y * f >= margin - slack
    return np.abs(y - f) <= eps + slack
