"""Anisotropic ROF denoising by an accelerated primal-dual (saddle-point) scheme.

The discrete objective over the unknown cells is

    R(u) + (delta**2 / lam) * sum (u - g)**2 / 2

with ``R`` either the pairwise stencil TV ``sum_k w_k |u(x+e_k) - u(x)|`` or
the per-cell form ``delta**2 * sum_x phi(grad u(x))``, where by default
phi is averaged over the four one-sided gradients so that no corner of the
grid is favoured. With ``huber_eps`` the
magnitude ``s`` inside ``R`` is replaced by its Huber smoothing.

The duality gap is the convergence certificate.
"""

from __future__ import annotations

import json
import math
import time
from dataclasses import asdict, dataclass

import numpy as np
import scipy.sparse as sp

from .anisotropy import Anisotropy
from .grid import BOUNDARY, INTERIOR, OUTSIDE, ScalarField, Stencil, edge_list


class RofError(ValueError):
    pass


@dataclass
class RofProblem:
    g: ScalarField
    lam: float
    stencil: Stencil | None = None
    anisotropy: Anisotropy | None = None
    huber_eps: float | None = None
    boundary: str = "neumann"
    trace: np.ndarray | None = None
    cell_scheme: str = "symmetric"

    def __post_init__(self) -> None:
        if not (self.lam > 0 and math.isfinite(self.lam)):
            raise RofError("lambda must be positive")
        if (self.stencil is None) == (self.anisotropy is None):
            raise RofError("give exactly one regularizer: a stencil (pairwise) or an anisotropy (per-cell)")
        if self.anisotropy is not None and self.anisotropy.crystalline:
            raise RofError("per-cell regularizer needs a smooth anisotropy; use a pairwise stencil for l1/linf")
        if self.cell_scheme not in _SCHEMES:
            raise RofError(f"unknown per-cell scheme {self.cell_scheme!r}; use 'forward' or 'symmetric'")
        if self.huber_eps is not None and not (self.huber_eps > 0 and math.isfinite(self.huber_eps)):
            raise RofError("huber epsilon must be positive")
        if self.boundary not in ("neumann", "dirichlet"):
            raise RofError("boundary must be 'neumann' or 'dirichlet'")
        if self.boundary == "dirichlet":
            bmask = self.g.mask == BOUNDARY
            if not np.any(bmask):
                raise RofError("dirichlet boundary needs boundary cells")
            trace = self.g.values if self.trace is None else np.asarray(self.trace, dtype=float)
            if trace.shape != self.g.shape or not np.all(np.isfinite(trace[bmask])):
                raise RofError("dirichlet trace must be finite on every boundary cell")
            self.trace = np.where(bmask, trace, 0.0)

    @property
    def pairwise(self) -> bool:
        return self.stencil is not None

    def free_mask(self) -> np.ndarray:
        if self.boundary == "dirichlet":
            return self.g.mask == INTERIOR
        return self.g.mask != OUTSIDE

    def fixed_mask(self) -> np.ndarray:
        if self.boundary == "dirichlet":
            return self.g.mask == BOUNDARY
        return np.zeros(self.g.shape, bool)


@dataclass
class SolverReport:
    primal: float
    dual: float
    gap: float
    rel_gap: float
    iterations: int
    converged: bool
    wall_time: float = 0.0

    def to_json(self, include_time: bool = False) -> str:
        d = asdict(self)
        if not include_time:
            d.pop("wall_time")
        return json.dumps(d, sort_keys=True)


# -- operator assembly -------------------------------------------------------


@dataclass
class _Operator:
    K: sp.csr_matrix
    KT: sp.csr_matrix
    b: np.ndarray
    group: int
    omega: np.ndarray
    norm: str
    q: float | None
    free_idx: np.ndarray
    fixed_vals: np.ndarray


_SCHEMES = {"forward": ((1, 1),), "symmetric": ((1, 1), (1, -1), (-1, 1), (-1, -1))}


def _cell_rows(prob: RofProblem):
    """Rows of P @ grad(u) per active cell and one-sided variant (P = M^1/2 or I).

    Each variant carries weight delta**2 / (number of variants).
    """
    g = prob.g
    h, w = g.shape
    idx = np.arange(h * w).reshape(h, w)
    act = g.active
    cells = idx[act]
    nc = len(cells)
    r, c = np.divmod(cells, w)
    d = g.delta
    dirs = _SCHEMES[prob.cell_scheme]
    blocks = []
    for sx, sy in dirs:
        rows, cols, vals = [], [], []
        for comp, (dr, dc, s) in enumerate(((0, sx, sx), (sy, 0, sy))):
            r2, c2 = r + dr, c + dc
            ok = (r2 >= 0) & (r2 < h) & (c2 >= 0) & (c2 < w)
            ok[ok] &= act[r2[ok], c2[ok]]
            k = np.flatnonzero(ok)
            rows += [2 * k + comp, 2 * k + comp]
            cols += [cells[k], idx[r2[k], c2[k]]]
            vals += [np.full(len(k), -s / d), np.full(len(k), s / d)]
        blocks.append(sp.csr_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
                                    shape=(2 * nc, h * w)))
    D = sp.vstack(blocks, format="csr")
    a = prob.anisotropy
    if a.kind == "weighted_l2":
        evals, evecs = np.linalg.eigh(np.asarray(a.matrix))
        P = evecs @ np.diag(np.sqrt(evals)) @ evecs.T
    else:
        P = np.eye(2)
    T = sp.kron(sp.identity(len(dirs) * nc, format="csr"), sp.csr_matrix(P), format="csr")
    omega = np.full(len(dirs) * nc, d * d / len(dirs))
    return (T @ D).tocsr(), omega


def _assemble(prob: RofProblem) -> _Operator:
    g = prob.g
    h, w = g.shape
    free = prob.free_mask().ravel()
    fixed = prob.fixed_mask().ravel()
    if prob.pairwise:
        i, j, wts = edge_list(g.mask, prob.stencil)
        m = len(i)
        ar = np.arange(m)
        full = sp.csr_matrix((np.r_[-np.ones(m), np.ones(m)], (np.r_[ar, ar], np.r_[i, j])), shape=(m, h * w))
        omega = wts.astype(float)
        group, norm, q = 1, "abs", None
    else:
        full, omega = _cell_rows(prob)
        group = 2
        a = prob.anisotropy
        if a.kind == "lp":
            norm, q = "lq", a.p / (a.p - 1.0)
        else:
            norm, q = "l2", None
    # scale each group by its weight so the dual sets are unit balls
    row_scale = np.repeat(omega, group)
    full = sp.diags(row_scale) @ full
    free_idx = np.flatnonzero(free)
    fixed_idx = np.flatnonzero(fixed)
    fixed_vals = prob.trace.ravel()[fixed_idx] if len(fixed_idx) else np.zeros(0)
    K = full[:, free_idx].tocsr()
    b = full[:, fixed_idx] @ fixed_vals if len(fixed_idx) else np.zeros(full.shape[0])
    return _Operator(K, K.T.tocsr(), np.asarray(b, dtype=float), group, omega, norm, q, free_idx, fixed_vals)


def operator_norm(K: sp.spmatrix, iters: int = 50, seed: int = 0) -> float:
    """Largest singular value of ``K`` by power iteration on K^T K."""
    if K.shape[0] == 0 or K.shape[1] == 0 or K.nnz == 0:
        return 0.0
    rng = np.random.default_rng(seed)
    x = rng.standard_normal(K.shape[1])
    x /= np.linalg.norm(x)
    est = 0.0
    for _ in range(iters):
        y = K.T @ (K @ x)
        nrm = np.linalg.norm(y)
        if nrm == 0:
            return 0.0
        est = math.sqrt(nrm)
        x = y / nrm
    return est


# -- group norms and projections --------------------------------------------


def _group_norms(z: np.ndarray, op: _Operator) -> np.ndarray:
    if op.group == 1:
        return np.abs(z)
    z2 = z.reshape(-1, 2)
    if op.norm == "l2":
        return np.hypot(z2[:, 0], z2[:, 1])
    p = op.q / (op.q - 1.0)
    a = np.abs(z2)
    s = a.max(axis=1)
    safe = np.where(s > 0, s, 1.0)
    return s * np.sum((a / safe[:, None]) ** p, axis=1) ** (1.0 / p)


def _project_lq(y2: np.ndarray, q: float) -> np.ndarray:
    """Euclidean projection of 2-vectors onto the unit lq ball (nested bisection)."""
    a = np.abs(y2)
    nq = np.sum(a ** q, axis=1)
    out = y2.copy()
    bad = nq > 1.0
    if not np.any(bad):
        return out
    ab = a[bad]

    def solve_z(mu):
        # z + mu*q*z^(q-1) = a, monotone in z on [0, a]
        lo = np.zeros_like(ab)
        hi = ab.copy()
        for _ in range(60):
            mid = 0.5 * (lo + hi)
            f = mid + mu[:, None] * q * mid ** (q - 1.0) - ab
            lo = np.where(f < 0, mid, lo)
            hi = np.where(f < 0, hi, mid)
        return 0.5 * (lo + hi)

    mlo = np.zeros(len(ab))
    mhi = np.ones(len(ab))
    while True:
        z = solve_z(mhi)
        over = np.sum(z ** q, axis=1) > 1.0
        if not np.any(over):
            break
        mhi = np.where(over, 2 * mhi, mhi)
    for _ in range(60):
        mid = 0.5 * (mlo + mhi)
        z = solve_z(mid)
        over = np.sum(z ** q, axis=1) > 1.0
        mlo = np.where(over, mid, mlo)
        mhi = np.where(over, mhi, mid)
    z = solve_z(mhi)
    out[bad] = np.sign(y2[bad]) * z
    return out


def _project(y: np.ndarray, op: _Operator) -> np.ndarray:
    if op.group == 1:
        return np.clip(y, -1.0, 1.0)
    y2 = y.reshape(-1, 2)
    if op.norm == "l2":
        n = np.hypot(y2[:, 0], y2[:, 1])
        return (y2 / np.maximum(1.0, n)[:, None]).ravel()
    return _project_lq(y2, op.q).ravel()


def _huber(s: np.ndarray, eps: float | None) -> np.ndarray:
    if eps is None:
        return s
    return np.where(s <= eps, s * s / (2 * eps), s - eps / 2)


# -- objective ---------------------------------------------------------------


def _regularizer(z: np.ndarray, op: _Operator, eps: float | None) -> float:
    # z = K u + b carries the omega factor; the magnitude inside f is |z|/omega
    s = _group_norms(z, op) / op.omega
    return float(np.dot(op.omega, _huber(s, eps)))


def _dual_conj(y: np.ndarray, op: _Operator, eps: float | None) -> float:
    if eps is None:
        return 0.0
    sq = np.sum(y.reshape(-1, op.group) ** 2, axis=1)
    return float(0.5 * eps * np.dot(op.omega, sq))


def _full_values(prob: RofProblem, op: _Operator, x: np.ndarray) -> np.ndarray:
    u = np.array(prob.g.values, dtype=float).ravel()
    u[op.free_idx] = x
    if prob.boundary == "dirichlet":
        fixed = np.flatnonzero(prob.fixed_mask().ravel())
        u[fixed] = op.fixed_vals
    out = u.reshape(prob.g.shape)
    return np.where(prob.g.active, out, np.nan)


def energy(p: RofProblem, u: ScalarField) -> float:
    """Discrete objective of ``u`` (Dirichlet trace pairs included)."""
    if u.shape != p.g.shape:
        raise RofError("field geometry does not match the problem")
    op = _assemble(p)
    x = u.values.ravel()[op.free_idx]
    gam = p.g.delta ** 2 / p.lam
    gf = p.g.values.ravel()[op.free_idx]
    return _regularizer(op.K @ x + op.b, op, p.huber_eps) + 0.5 * gam * float(np.sum((x - gf) ** 2))


# -- solver ------------------------------------------------------------------


def solve(p: RofProblem, tol: float = 1e-8, max_iter: int = 200000,
          check_every: int = 10) -> tuple[ScalarField, SolverReport]:
    """Accelerated primal-dual iterations until the relative duality gap is <= tol.

    The relative gap is ``gap / (1 + |primal|)``. On non-convergence the last
    iterate is returned with ``converged=False``.
    """
    if not tol > 0:
        raise RofError("tolerance must be positive")
    start = time.perf_counter()
    op = _assemble(p)
    eps = p.huber_eps
    gam = p.g.delta ** 2 / p.lam
    gf = p.g.values.ravel()[op.free_idx].astype(float)
    K, KT, b = op.K, op.KT, op.b

    def primal(x):
        return _regularizer(K @ x + b, op, eps) + 0.5 * gam * float(np.dot(x - gf, x - gf))

    def dual(y):
        kty = KT @ y
        return (float(np.dot(b, y)) - _dual_conj(y, op, eps)
                + float(np.dot(kty, gf)) - float(np.dot(kty, kty)) / (2 * gam))

    x = gf.copy()
    y = np.zeros(K.shape[0])
    L = operator_norm(K) * 1.05
    best_x, best_p = x, primal(x)
    d = dual(y)
    it = 0
    if L == 0.0:
        d = best_p
    else:
        xbar = x.copy()
        tau = sigma = 1.0 / L
        while it < max_iter:
            it += 1
            v = y + sigma * (K @ xbar + b)
            if eps is not None:
                v = v / (1.0 + sigma * eps * np.repeat(op.omega, op.group))
            y = _project(v, op)
            x_new = (x - tau * (KT @ y) + tau * gam * gf) / (1.0 + tau * gam)
            theta = 1.0 / math.sqrt(1.0 + 2.0 * gam * tau)
            tau *= theta
            sigma /= theta
            xbar = x_new + theta * (x_new - x)
            x = x_new
            if it % check_every == 0 or it == max_iter:
                d = dual(y)
                px = primal(x)
                xd = gf - (KT @ y) / gam
                pd = primal(xd)
                best_x, best_p = (x, px) if px <= pd else (xd, pd)
                if (best_p - d) / (1.0 + abs(best_p)) <= tol:
                    break
    gap = best_p - d
    rel = gap / (1.0 + abs(best_p))
    report = SolverReport(best_p, d, gap, rel, it, bool(rel <= tol), time.perf_counter() - start)
    u = ScalarField(_full_values(p, op, best_x), p.g.delta, p.g.mask)
    return u, report
