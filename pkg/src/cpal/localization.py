"""Version space = ball of radius r intersected with linear cuts, and its
analytic center.

The analytic center minimises

    phi(theta) = -sum_i log(b_i - a_i . theta) - log(r^2 - |theta|^2)

with damped Newton steps.  Rows are normalised to unit length when they are
added, which leaves the set and its analytic center unchanged.

The Newton systems exploit the structure produced by the ReLU reformulation:
most rows touch a single coordinate block of size ``block_size`` (the sign
constraints on one ``u_i``), so the Hessian is block diagonal plus a low-rank
term from the remaining "global" rows and the ball.  That is solved with the
Woodbury identity; when the low-rank part is wide the dense Hessian is
assembled and Cholesky-factored instead.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass

import numpy as np
import scipy.linalg
import scipy.sparse as sp
from scipy.optimize import linprog, minimize_scalar

log = logging.getLogger(__name__)

ALPHA = 0.1
BETA = 0.5
STRICT_TOL = 1e-9
DENSE_LIMIT = 200_000


@dataclass(frozen=True)
class Halfspace:
    """The set {theta : a . theta <= b}."""

    a: np.ndarray
    b: float

    def __post_init__(self):
        a = np.asarray(self.a, dtype=float).ravel()
        if not np.all(np.isfinite(a)) or not np.isfinite(self.b):
            raise ValueError("halfspace coefficients must be finite")
        if not np.any(a):
            raise ValueError("halfspace normal must not be all-zero")
        object.__setattr__(self, "a", a)
        object.__setattr__(self, "b", float(self.b))

    def contains(self, theta, tol: float = 0.0) -> bool:
        return float(self.a @ np.asarray(theta, dtype=float)) <= self.b + tol


def _as_rows(cuts, dim: int) -> tuple[sp.csr_matrix, np.ndarray]:
    """Coerce halfspaces / CutSet-like objects / (A, b) pairs into a sparse block."""
    if hasattr(cuts, "as_matrix"):
        A, b = cuts.as_matrix()
    elif isinstance(cuts, tuple) and len(cuts) == 2:
        A, b = cuts
    else:
        cuts = list(cuts)
        if not cuts:
            return sp.csr_matrix((0, dim)), np.zeros(0)
        A = np.vstack([h.a for h in cuts])
        b = np.array([h.b for h in cuts], dtype=float)
    A = sp.csr_matrix(A, dtype=float)
    b = np.asarray(b, dtype=float).ravel()
    if A.shape[1] != dim:
        raise ValueError(f"cut dimension {A.shape[1]} does not match set dimension {dim}")
    if A.shape[0] != b.shape[0]:
        raise ValueError("cut matrix and offsets disagree in length")
    return A, b


def _normalise(A: sp.csr_matrix, b: np.ndarray) -> tuple[sp.csr_matrix, np.ndarray]:
    norms = np.sqrt(np.asarray(A.multiply(A).sum(axis=1)).ravel())
    if np.any(norms == 0):
        raise ValueError("cut with all-zero normal")
    if not (np.all(np.isfinite(A.data)) and np.all(np.isfinite(b))):
        raise ValueError("cut coefficients must be finite")
    inv = sp.diags(1.0 / norms)
    A = sp.csr_matrix(inv @ A)
    A.eliminate_zeros()
    return A, b / norms


class LocalizationSet:
    """{theta : |theta|_2 <= radius} intersected with normalised cuts A theta <= b.

    Instances are immutable; :meth:`add_cuts` returns a new set.  ``groups``
    tags each row with the index of the cut batch it arrived in, which is what
    the optional ``keep_last`` mode counts.
    """

    def __init__(self, dim: int, A=None, b=None, radius: float = 1.0,
                 block_size: int | None = None, groups=None,
                 keep_last: int | None = None):
        if dim < 1:
            raise ValueError("dim must be positive")
        if radius <= 0:
            raise ValueError("radius must be positive")
        self.dim = int(dim)
        self.radius = float(radius)
        self.block_size = block_size
        self.keep_last = keep_last
        if A is None:
            A, b = sp.csr_matrix((0, dim)), np.zeros(0)
        self.A = sp.csr_matrix(A)
        self.b = np.asarray(b, dtype=float)
        self.groups = (np.zeros(self.A.shape[0], dtype=int) if groups is None
                       else np.asarray(groups, dtype=int))
        self._geom = None

    @property
    def n_cuts(self) -> int:
        return self.A.shape[0]

    @property
    def n_groups(self) -> int:
        return int(self.groups.max()) + 1 if self.n_cuts else 0

    @property
    def cuts(self) -> list[Halfspace]:
        dense = self.A.toarray()
        return [Halfspace(a, bi) for a, bi in zip(dense, self.b)]

    def add_cuts(self, cuts) -> "LocalizationSet":
        A_new, b_new = _as_rows(cuts, self.dim)
        if A_new.shape[0] == 0:
            return self
        A_new, b_new = _normalise(A_new, b_new)
        g = np.full(A_new.shape[0], self.n_groups, dtype=int)
        return LocalizationSet(
            self.dim, sp.vstack([self.A, A_new], format="csr"),
            np.concatenate([self.b, b_new]), self.radius, self.block_size,
            np.concatenate([self.groups, g]), self.keep_last)

    def active(self) -> "LocalizationSet":
        """The set actually used for centering (applies ``keep_last``)."""
        if self.keep_last is None or self.n_groups <= self.keep_last:
            return self
        keep = self.groups >= self.n_groups - self.keep_last
        return LocalizationSet(self.dim, self.A[keep], self.b[keep], self.radius,
                               self.block_size, self.groups[keep], None)

    def slacks(self, theta) -> np.ndarray:
        return self.b - self.A @ np.asarray(theta, dtype=float)

    def contains(self, theta, tol: float = 0.0) -> bool:
        theta = np.asarray(theta, dtype=float)
        if theta @ theta > self.radius ** 2 + tol:
            return False
        return bool(np.all(self.slacks(theta) >= -tol))

    def contains_many(self, points, tol: float = 0.0) -> np.ndarray:
        P = np.atleast_2d(np.asarray(points, dtype=float))
        ok = np.einsum("ij,ij->i", P, P) <= self.radius ** 2 + tol
        if self.n_cuts:
            ok &= np.all(np.asarray(self.A @ P.T) <= self.b[:, None] + tol, axis=0)
        return ok

    def geometry(self) -> "_Geometry":
        if self._geom is None:
            self._geom = _Geometry(self.A, self.dim, self.block_size)
        return self._geom

    def to_dict(self) -> dict:
        dense = self.A.toarray()
        return {"dim": self.dim, "radius": self.radius,
                "block_size": self.block_size,
                "cuts": [{"a": a.tolist(), "b": float(bi)} for a, bi in zip(dense, self.b)]}

    @classmethod
    def from_dict(cls, data: dict) -> "LocalizationSet":
        L = cls(int(data["dim"]), radius=float(data.get("radius", 1.0)),
                block_size=data.get("block_size"))
        cuts = [Halfspace(np.asarray(c["a"], dtype=float), c["b"]) for c in data.get("cuts", [])]
        return L.add_cuts(cuts) if cuts else L

    def to_json(self, path) -> None:
        with open(path, "w") as fh:
            json.dump(self.to_dict(), fh)

    @classmethod
    def from_json(cls, path) -> "LocalizationSet":
        with open(path) as fh:
            return cls.from_dict(json.load(fh))

    def __repr__(self):
        return f"LocalizationSet(dim={self.dim}, cuts={self.n_cuts}, radius={self.radius})"


def init_ball(dim: int, radius: float = 1.0, block_size: int | None = None,
              keep_last: int | None = None) -> LocalizationSet:
    return LocalizationSet(dim, radius=radius, block_size=block_size, keep_last=keep_last)


def add_cuts(L: LocalizationSet, cuts) -> LocalizationSet:
    return L.add_cuts(cuts)


# ---------------------------------------------------------------------------
# Hessian structure


class _Geometry:
    """Split rows into block-local rows and global rows once per set."""

    def __init__(self, A: sp.csr_matrix, dim: int, block_size: int | None):
        bs = int(block_size) if block_size else 1
        self.dim, self.bs = dim, bs
        self.nb = -(-dim // bs)
        k = A.shape[0]
        counts = np.diff(A.indptr)
        rows = np.repeat(np.arange(k), counts)
        blk = A.indices // bs
        local = np.ones(k, dtype=bool)
        if k:
            lo = np.minimum.reduceat(blk, A.indptr[:-1])
            hi = np.maximum.reduceat(blk, A.indptr[:-1])
            local = lo == hi
            self.block_id = lo[local]
        else:
            self.block_id = np.zeros(0, dtype=int)
        self.local_rows = np.flatnonzero(local)
        self.global_rows = np.flatnonzero(~local)
        pos = np.full(k, -1)
        pos[self.local_rows] = np.arange(self.local_rows.size)
        self.L = np.zeros((self.local_rows.size, bs))
        sel = local[rows]
        self.L[pos[rows[sel]], A.indices[sel] % bs] = A.data[sel]
        self.G = A[self.global_rows].T.toarray()
        # small systems are cheaper with dense products than with sparse overhead
        self.op = A.toarray() if A.shape[0] * dim <= DENSE_LIMIT else A
        self.opT = self.op.T if isinstance(self.op, np.ndarray) else sp.csr_matrix(A.T)

    def scaled_global(self, inv_s: np.ndarray) -> np.ndarray:
        """Dense A_g^T diag(inv_s_g), the low-rank factor from global rows."""
        return self.G * inv_s[self.global_rows]


class _System:
    """Factorised H = blockdiag(sum w l l^T) + c I + V V^T."""

    def __init__(self, geom: _Geometry, w_local: np.ndarray, c: float, V: np.ndarray):
        bs, nb, dim = geom.bs, geom.nb, geom.dim
        self.dim, self.bs, self.nb = dim, bs, nb
        blocks = np.zeros((nb, bs, bs))
        if geom.L.shape[0]:
            for i in range(bs):
                for j in range(i, bs):
                    v = np.bincount(geom.block_id, weights=w_local * geom.L[:, i] * geom.L[:, j],
                                    minlength=nb)
                    blocks[:, i, j] = v
                    blocks[:, j, i] = v
        blocks[:, np.arange(bs), np.arange(bs)] += c
        pad = nb * bs - dim
        if pad:
            # padded coordinates are decoupled identity rows
            blocks[-1, bs - pad:, bs - pad:] = np.eye(pad)
        self.V = np.zeros((nb * bs, V.shape[1]))
        self.V[:dim] = V
        k = V.shape[1]
        self.dense = k > max(8, dim // 2)
        if self.dense:
            idx = np.arange(nb * bs).reshape(nb, bs)
            H = np.zeros((nb * bs, nb * bs))
            H[idx[:, :, None], idx[:, None, :]] = blocks
            H += self.V @ self.V.T
            self.chol = scipy.linalg.cho_factor(H)
        else:
            self.Binv = np.linalg.inv(blocks)
            if k:
                BV = self._binv(self.V)
                cap = np.eye(k) + self.V.T @ BV
                self.BV = BV
                self.cap = scipy.linalg.cho_factor(cap)

    def _binv(self, R: np.ndarray) -> np.ndarray:
        shape = R.shape
        Rb = R.reshape(self.nb, self.bs, -1)
        return np.einsum("kij,kjm->kim", self.Binv, Rb).reshape(shape)

    def solve(self, rhs: np.ndarray) -> np.ndarray:
        r = np.zeros((self.nb * self.bs,) + rhs.shape[1:])
        r[: self.dim] = rhs
        if self.dense:
            out = scipy.linalg.cho_solve(self.chol, r)
        else:
            out = self._binv(r)
            if self.V.shape[1]:
                out = out - self.BV @ scipy.linalg.cho_solve(self.cap, self.V.T @ out)
        return out[: self.dim]


def _is_finite_system(*arrays) -> bool:
    return all(np.all(np.isfinite(a)) for a in arrays)


# ---------------------------------------------------------------------------
# Centering


@dataclass
class CenterResult:
    theta: np.ndarray | None
    newton_iters: int
    final_decrement: float
    status: str  # "ok" | "infeasible" | "max_iters"
    phase1_iters: int = 0
    min_slack: float = float("nan")

    @property
    def ok(self) -> bool:
        return self.status == "ok"

    @property
    def feasible(self) -> bool:
        """A strictly interior point was found, centred or not."""
        return self.theta is not None


def _barrier(b_minus_Ax: np.ndarray, q: float) -> float:
    return -np.sum(np.log(b_minus_Ax)) - np.log(q)


def _center_newton(L: LocalizationSet, x: np.ndarray, tol: float, max_iters: int):
    geom = L.geometry()
    A, AT, b, r2 = geom.op, geom.opT, L.b, L.radius ** 2
    s = b - A @ x
    q = r2 - x @ x
    f = _barrier(s, q)
    dec = np.inf
    for it in range(1, max_iters + 1):
        x, s, q, f = _rescale(x, s, b, r2, f)
        inv_s = 1.0 / s
        g = AT @ inv_s + 2.0 * x / q
        V = np.column_stack([geom.scaled_global(inv_s), (2.0 / q) * x])
        try:
            system = _System(geom, inv_s[geom.local_rows] ** 2, 2.0 / q, V)
            dx = -system.solve(g)
            if not _is_finite_system(dx):
                raise np.linalg.LinAlgError("non-finite Newton step")
        except (np.linalg.LinAlgError, scipy.linalg.LinAlgError):
            log.debug("Cholesky failed, gradient step")
            dx = -g
        lam2 = float(-(g @ dx))
        if not lam2 > 0.0 and np.any(g):
            # a solve this inaccurate is no descent direction; fall back to the gradient
            dx = -g
            lam2 = float(g @ g)
        dec = lam2 / 2.0
        if dec <= tol:
            # inside the quadratic region: one more full step costs nothing and
            # squares the distance to the center
            xn = x + dx
            if np.all(s - A @ dx > 0) and xn @ xn < r2:
                return xn, it, dec, "ok"
            return x, it - 1, dec, "ok"
        Adx = A @ dx
        t = 1.0
        while True:
            xn = x + t * dx
            sn = s - t * Adx
            qn = r2 - xn @ xn
            if np.all(sn > 0) and qn > 0:
                fn = _barrier(sn, qn)
                if fn <= f + ALPHA * t * (g @ dx):
                    break
            t *= BETA
            if t < 1e-20:
                # no progress possible at double precision
                return x, it, dec, "ok" if dec <= 1e3 * tol else "max_iters"
        x, s, q, f = xn, sn, qn, fn
    return x, max_iters, dec, "max_iters"


def _rescale(x, s, b, r2, f):
    """Best multiple c x of the iterate.

    Sets made mostly of cuts through the origin have a barrier that changes
    like -m log c along rays, which Newton's quadratic model underestimates by
    a wide margin far from the center; one scalar search recovers that.
    """
    xx = x @ x
    if xx == 0.0:
        return x, s, r2, f
    Ax = b - s
    # b - c Ax > 0 and c^2 |x|^2 < r^2
    lo, hi = 0.0, np.sqrt(r2 / xx)
    pos, neg = Ax > 0, Ax < 0
    if np.any(pos):
        hi = min(hi, float(np.min(b[pos] / Ax[pos])))
    if np.any(neg):
        lo = max(lo, float(np.max(b[neg] / Ax[neg])))
    if not lo < 1.0 < hi:
        return x, s, r2 - xx, f

    def phi(c):
        return _barrier(b - c * Ax, r2 - c * c * xx)

    width = hi - lo
    res = minimize_scalar(phi, bounds=(lo + 1e-12 * width, hi - 1e-12 * width), method="bounded",
                          options={"xatol": 1e-9 * width})
    c = float(res.x)
    fc = phi(c)
    if not fc < f:
        return x, s, r2 - xx, f
    return c * x, b - c * Ax, r2 - c * c * xx, fc


def _center_conic(L: LocalizationSet, x: np.ndarray, tol: float, max_iters: int):
    """Analytic center when every cut passes through the origin (b = 0).

    With x = rho u, |u| = 1, the barrier separates into -m log rho - log(r^2 - rho^2)
    plus F(u) = -sum log(-a_i . u), so rho = r sqrt(m / (m + 2)).  The direction is
    the minimiser of F(z) + m/2 |z|^2, which lies on the unit sphere by
    homogeneity of F.  That objective has no ball term, so Newton does not have
    to creep along the sphere as it does on the original barrier.
    """
    geom = L.geometry()
    A, AT = geom.op, geom.opT
    m = float(L.n_cuts)
    z = x / np.linalg.norm(x)
    s = -(A @ z)

    def obj(s, z):
        return -np.sum(np.log(s)) + 0.5 * m * (z @ z)

    f = obj(s, z)
    dec, status, it = np.inf, "max_iters", 0
    for it in range(1, max_iters + 1):
        inv_s = 1.0 / s
        g = AT @ inv_s + m * z
        system = _System(geom, inv_s[geom.local_rows] ** 2, m, geom.scaled_global(inv_s))
        dz = -system.solve(g)
        dec = float(-(g @ dz)) / 2.0
        sdz = -(A @ dz)
        if dec <= tol:
            status = "ok"
            if np.all(s + sdz > 0):
                z = z + dz
            else:
                it -= 1
            break
        t = 1.0
        while t >= 1e-20:
            zn, sn = z + t * dz, s + t * sdz
            if np.all(sn > 0):
                fn = obj(sn, zn)
                if fn <= f + ALPHA * t * (g @ dz):
                    break
            t *= BETA
        else:
            # no progress possible at double precision
            status = "ok" if dec <= 1e3 * tol else "max_iters"
            break
        z, s, f = zn, sn, fn
    rho = L.radius * np.sqrt(m / (m + 2.0))
    return rho * z / np.linalg.norm(z), it, dec, status


def _pcg(apply, precondition, rhs: np.ndarray, rtol: float = 1e-12, max_iter: int = 25) -> np.ndarray:
    """Preconditioned conjugate gradients for an SPD operator."""
    z = np.zeros_like(rhs)
    res = rhs.copy()
    p = precondition(res)
    rz = res @ p
    if rz <= 0:
        return p
    d = p.copy()
    nrm = np.linalg.norm(rhs)
    for _ in range(max_iter):
        Kd = apply(d)
        dKd = d @ Kd
        if not dKd > 0:
            break
        a = rz / dKd
        z += a * d
        res -= a * Kd
        if np.linalg.norm(res) <= rtol * nrm:
            break
        p = precondition(res)
        rz_new = res @ p
        if not rz_new > 0:
            break
        d = p + (rz_new / rz) * d
        rz = rz_new
    return z


def _phase_one(L: LocalizationSet, strict_tol: float = STRICT_TOL, mu: float = 10.0,
               max_newton: int = 3000, inner_iters: int = 200, witness_only: bool = False):
    """Maximise the common slack sigma over {a_i theta + sigma <= b_i, |theta| <= r(1 - sigma)}.

    Returns (theta, sigma, feasible, newton_iters).  ``feasible`` is decided
    from the barrier duality gap, sigma* <= sigma + nu / t, which is only
    trusted at well-centred iterates.  With ``witness_only`` any iterate with
    sigma > strict_tol is returned at once, since it already certifies strict
    feasibility.
    """
    geom = L.geometry()
    A, AT, b, r = geom.op, geom.opT, L.b, L.radius
    k = A.shape[0]
    nu = k + 2.0
    x = np.zeros(L.dim)
    sig = min(float(b.min()) - 1.0, 0.0) if k else 0.0
    t = max(1.0, nu)
    total = 0

    def parts(x, sig):
        s = b - A @ x - sig
        w = r * (1.0 - sig)
        Q = w * w - x @ x
        return s, w, Q

    def value(t, x, sig, s, Q):
        return -t * sig - np.sum(np.log(s)) - np.log(Q)

    while total < max_newton:
        s, w, Q = parts(x, sig)
        f = value(t, x, sig, s, Q)
        centred = False
        for _ in range(inner_iters):
            if total >= max_newton:
                break
            total += 1
            inv_s = 1.0 / s
            inv_s2 = inv_s ** 2
            gx = AT @ inv_s + 2.0 * x / Q
            gs = -t + inv_s.sum() + 2.0 * r * w / Q
            h = AT @ inv_s2 + 4.0 * r * w * x / Q ** 2
            c = inv_s2.sum() - 2.0 * r * r / Q + 4.0 * r * r * w * w / Q ** 2
            V = np.column_stack([geom.scaled_global(inv_s), (2.0 / Q) * x])
            try:
                system = _System(geom, inv_s2[geom.local_rows], 2.0 / Q, V)

                def kkt_apply(z):
                    dx, ds = z[:-1], z[-1]
                    hx = AT @ (inv_s2 * (A @ dx)) + (2.0 / Q) * dx + (4.0 / Q ** 2) * x * (x @ dx)
                    return np.append(hx + h * ds, h @ dx + c * ds)

                def precondition(z):
                    return np.append(system.solve(z[:-1]), z[-1] / c)

                z = _pcg(kkt_apply, precondition, -np.append(gx, gs))
                dx, dsig = z[:-1], float(z[-1])
                if not _is_finite_system(z):
                    raise np.linalg.LinAlgError("non-finite step")
            except (np.linalg.LinAlgError, scipy.linalg.LinAlgError):
                dx, dsig = -gx, -gs
            slope = gx @ dx + gs * dsig
            if slope >= 0:
                dx, dsig = -gx, -gs
                slope = gx @ dx + gs * dsig
            if -slope / 2.0 <= 1e-8:
                centred = True
                break
            Adx = A @ dx
            step = 1.0
            while True:
                xn, sn_sig = x + step * dx, sig + step * dsig
                sn = s - step * (Adx + dsig)
                wn = r * (1.0 - sn_sig)
                Qn = wn * wn - xn @ xn
                if np.all(sn > 0) and wn > 0 and Qn > 0:
                    fn = value(t, xn, sn_sig, sn, Qn)
                    if fn <= f + ALPHA * step * slope:
                        break
                step *= BETA
                if step < 1e-20:
                    break
            if step < 1e-20:
                # no representable progress: as centred as double precision allows
                centred = -slope / 2.0 <= 1e-3
                break
            x, sig, s, w, Q, f = xn, sn_sig, sn, wn, Qn, fn
            if sig > strict_tol and (witness_only or nu / t <= sig):
                return x, sig, True, total
        gap = nu / t
        if centred:
            if sig > strict_tol and gap <= sig:
                return x, sig, True, total
            if sig + gap < strict_tol:
                return x, sig, False, total
            t *= mu
    return x, sig, bool(sig > strict_tol), total


def _slack_lp(L: LocalizationSet, extra_A, extra_b, bound: float):
    """max sigma s.t. A theta + sigma <= b, extra rows, |theta_j| <= bound, sigma <= 1."""
    n, k = L.dim, L.n_cuts
    A = sp.hstack([L.A, sp.csr_matrix(np.ones((k, 1)))], format="csr")
    b = L.b
    if extra_A:
        E = np.hstack([np.vstack(extra_A), np.zeros((len(extra_A), 1))])
        A = sp.vstack([A, sp.csr_matrix(E)], format="csr")
        b = np.concatenate([b, extra_b])
    cost = np.zeros(n + 1)
    cost[-1] = -1.0
    try:
        res = linprog(cost, A_ub=A, b_ub=b, bounds=[(-bound, bound)] * n + [(None, 1.0)],
                      method="highs")
    except ValueError:
        return None, float("nan")
    if res.status != 0:
        return None, float("nan")
    return res.x[:n], float(-res.fun)


def _lp_interior(L: LocalizationSet, strict_tol: float = STRICT_TOL, rounds: int = 60):
    """Strictly interior point from LPs: (theta, empty).

    The common slack of the cuts is maximised first over the cube inscribed in
    the ball, where a positive optimum certifies an interior point.  Otherwise
    the ball is replaced by an outer approximation, the enclosing cube plus
    tangent planes added at each LP point that lands outside the ball.  A
    non-positive optimum of an outer approximation certifies that the set has
    no interior; a positive one that lands inside the ball certifies an
    interior point.  ``theta`` is None and ``empty`` False when the rounds run
    out without either certificate.
    """
    n, r = L.dim, L.radius
    thresh = max(strict_tol, 1e-7)

    def accept(x):
        if x is not None and np.all(L.slacks(x) > 0) and x @ x < r * r:
            return x
        return None

    x, sig = _slack_lp(L, [], [], 0.999 * r / np.sqrt(n))
    if x is not None and sig > thresh and accept(x) is not None:
        return x, False
    tangents, rhs = [], []
    for _ in range(rounds):
        x, sig = _slack_lp(L, tangents, rhs, r)
        if x is None:
            return None, False
        if sig <= strict_tol:
            return None, True
        nx = float(np.linalg.norm(x))
        if sig > thresh and accept(x) is not None:
            return x, False
        # pulling x towards the origin may already clear the ball with every slack positive
        if nx > 0 and sig > thresh:
            y = accept(x * (r * (1.0 - 1e-9) / nx))
            if y is not None:
                return y, False
        if nx <= 0:
            return None, False
        tangents.append(x / nx)
        rhs.append(r)
    return None, False


def _toward(L: LocalizationSet, x0: np.ndarray, target: np.ndarray) -> np.ndarray:
    """Barrier minimiser on the segment x0 + a (target - x0), a in [0, 1]."""
    v = target - x0
    if not np.any(v):
        return x0
    s0, Av = L.slacks(x0), L.A @ v
    pos = Av > 0
    a_max = float(np.min(s0[pos] / Av[pos])) if np.any(pos) else np.inf
    # ball: |x0 + a v|^2 < r^2
    qa, qb, qc = v @ v, 2.0 * (x0 @ v), x0 @ x0 - L.radius ** 2
    a_max = min(a_max, (-qb + np.sqrt(qb * qb - 4.0 * qa * qc)) / (2.0 * qa), 1.0)

    def phi(a):
        return _barrier(s0 - a * Av, -(qa * a * a + qb * a + qc))

    res = minimize_scalar(phi, bounds=(0.0, a_max * (1.0 - 1e-9)), method="bounded",
                          options={"xatol": 1e-10 * max(a_max, 1e-300)})
    a = float(res.x)
    if not np.isfinite(phi(a)) or phi(a) > phi(0.0):
        return x0
    return x0 + a * v


def phase_one(L: LocalizationSet, strict_tol: float = STRICT_TOL, witness_only: bool = False):
    """Strictly interior point search; returns (theta, min_slack, feasible)."""
    L = L.active()
    if L.n_cuts == 0:
        return np.zeros(L.dim), 1.0, True
    x, sig, feas, _ = _phase_one(L, strict_tol, witness_only=witness_only)
    return x, sig, feas


def is_feasible(L: LocalizationSet, tol: float = STRICT_TOL) -> bool:
    """True when the set has a strictly interior point."""
    act = L.active()
    if act.n_cuts == 0:
        return True
    x, empty = _lp_interior(act, tol)
    if x is not None or empty:
        return x is not None
    return phase_one(L, tol, witness_only=True)[2]


def analytic_center(L: LocalizationSet, tol: float = 1e-8, max_iters: int = 5000,
                    start=None, toward=None, strict_tol: float = STRICT_TOL) -> CenterResult:
    """Analytic center of ``L`` (ball barrier included).

    ``start`` is used when it is strictly inside every cut and the ball;
    otherwise an interior point comes from an LP, or from phase I when the LP is
    inconclusive.  If ``toward`` is given, the start moves along the segment
    towards it to the barrier minimiser on that segment, so passing the
    previous center after a cut starts Newton close to the new center.
    """
    if tol <= 0:
        raise ValueError("tol must be positive")
    L = L.active()
    if L.n_cuts == 0:
        return CenterResult(np.zeros(L.dim), 0, 0.0, "ok", 0, L.radius)
    x0 = None
    p1 = 0
    sig = float("nan")
    if start is not None:
        start = np.asarray(start, dtype=float)
        if np.all(L.slacks(start) > 0) and start @ start < L.radius ** 2:
            x0 = start
    if x0 is None:
        x0, empty = _lp_interior(L, strict_tol)
        if empty:
            return CenterResult(None, 0, float("nan"), "infeasible", 0, float("nan"))
        if x0 is None:
            x0, sig, feasible, p1 = _phase_one(L, strict_tol)
            if not feasible:
                return CenterResult(None, 0, float("nan"), "infeasible", p1, sig)
        else:
            # LP points sit on the boundary of the slack polytope; move inwards
            x0 = _toward(L, x0, np.zeros(L.dim))
    if toward is not None:
        x0 = _toward(L, x0, np.asarray(toward, dtype=float))
    if not np.any(L.b):
        x, iters, dec, status = _center_conic(L, x0, tol, max_iters)
    else:
        x, iters, dec, status = _center_newton(L, x0, tol, max_iters)
    slack = min(float(L.slacks(x).min()), L.radius - float(np.linalg.norm(x)))
    return CenterResult(x, iters, dec, status, p1, slack)


def barrier_gradient(L: LocalizationSet, theta) -> np.ndarray:
    L = L.active()
    theta = np.asarray(theta, dtype=float)
    s = L.slacks(theta)
    q = L.radius ** 2 - theta @ theta
    return L.A.T @ (1.0 / s) + 2.0 * theta / q


def barrier_hessian(L: LocalizationSet, theta) -> np.ndarray:
    """Dense Hessian of the barrier; meant for small checks."""
    L = L.active()
    theta = np.asarray(theta, dtype=float)
    s = L.slacks(theta)
    q = L.radius ** 2 - theta @ theta
    Ad = L.A.toarray()
    return (Ad.T * (1.0 / s ** 2)) @ Ad + (2.0 / q) * np.eye(L.dim) + (4.0 / q ** 2) * np.outer(theta, theta)
