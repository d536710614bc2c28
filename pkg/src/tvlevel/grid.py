"""Discrete calculus on rectangular grids.

Cells are addressed ``[row, col]``; the physical position of a cell is
``(col * delta, row * delta)``, so stencil offsets are ``(dx, dy)`` with ``dx``
along columns and ``dy`` along rows.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
from scipy.optimize import linprog

from .anisotropy import Anisotropy

OUTSIDE, BOUNDARY, INTERIOR = 0, 1, 2

HALF_OFFSETS = {
    4: ((1, 0), (0, 1)),
    8: ((1, 0), (0, 1), (1, 1), (1, -1)),
    16: ((1, 0), (0, 1), (1, 1), (1, -1), (1, 2), (2, 1), (1, -2), (2, -1)),
}


class GridError(ValueError):
    pass


def full_mask(height: int, width: int) -> np.ndarray:
    return np.full((height, width), INTERIOR, dtype=np.int8)


def rectangle_mask(height: int, width: int) -> np.ndarray:
    """Full rectangle whose outer ring is marked as boundary."""
    mask = full_mask(height, width)
    mask[0, :] = mask[-1, :] = BOUNDARY
    mask[:, 0] = mask[:, -1] = BOUNDARY
    return mask


@dataclass
class ScalarField:
    values: np.ndarray
    delta: float = 1.0
    mask: np.ndarray | None = None

    def __post_init__(self) -> None:
        self.values = np.array(self.values, dtype=float)
        if self.values.ndim != 2 or self.values.size == 0:
            raise GridError("field values must be a non-empty 2-D array")
        if self.mask is None:
            self.mask = full_mask(*self.values.shape)
        self.mask = np.array(self.mask, dtype=np.int8)
        if self.mask.shape != self.values.shape:
            raise GridError("mask shape does not match values")
        if not np.all(np.isin(self.mask, (OUTSIDE, BOUNDARY, INTERIOR))):
            raise GridError("mask codes must be 0 (outside), 1 (boundary), 2 (interior)")
        if not (self.delta > 0 and math.isfinite(self.delta)):
            raise GridError("grid spacing must be positive")
        self.delta = float(self.delta)
        if not np.all(np.isfinite(self.values[self.active])):
            raise GridError("values must be finite on the domain")
        if not np.any(self.mask == INTERIOR):
            raise GridError("field needs at least one interior cell")

    @property
    def height(self) -> int:
        return self.values.shape[0]

    @property
    def width(self) -> int:
        return self.values.shape[1]

    @property
    def shape(self) -> tuple[int, int]:
        return self.values.shape

    @property
    def active(self) -> np.ndarray:
        return self.mask != OUTSIDE

    def with_values(self, values) -> ScalarField:
        return ScalarField(np.asarray(values, dtype=float), self.delta, self.mask.copy())

    def oscillation(self) -> float:
        v = self.values[self.active]
        return float(v.max() - v.min())


@dataclass
class BinarySet:
    bits: np.ndarray
    delta: float = 1.0
    mask: np.ndarray | None = None

    def __post_init__(self) -> None:
        self.bits = np.array(self.bits, dtype=bool)
        if self.mask is None:
            self.mask = full_mask(*self.bits.shape)
        self.mask = np.array(self.mask, dtype=np.int8)
        if self.mask.shape != self.bits.shape:
            raise GridError("mask shape does not match bits")
        self.bits = self.bits & (self.mask != OUTSIDE)

    @classmethod
    def superlevel(cls, u: ScalarField, t: float) -> BinarySet:
        """{u > t} restricted to the domain."""
        return cls(u.values > t, u.delta, u.mask)

    def __and__(self, other: BinarySet) -> BinarySet:
        return BinarySet(self.bits & other.bits, self.delta, self.mask)

    def __or__(self, other: BinarySet) -> BinarySet:
        return BinarySet(self.bits | other.bits, self.delta, self.mask)

    def __le__(self, other: BinarySet) -> bool:
        return bool(np.all(~self.bits | other.bits))

    def __eq__(self, other) -> bool:
        if not isinstance(other, BinarySet):
            return NotImplemented
        return bool(np.array_equal(self.bits, other.bits))

    def count(self) -> int:
        return int(self.bits.sum())


@dataclass(frozen=True)
class Stencil:
    offsets: tuple[tuple[int, int], ...]
    weights: tuple[float, ...]
    order: int = field(default=0)

    def __post_init__(self) -> None:
        if len(self.offsets) != len(self.weights) or not self.offsets:
            raise GridError("stencil needs one weight per offset")
        for w in self.weights:
            if not (w > 0 and math.isfinite(w)):
                raise GridError("stencil weights must be positive")
        for i, a in enumerate(self.offsets):
            if a == (0, 0):
                raise GridError("zero stencil offset")
            for b in self.offsets[i + 1:]:
                if a[0] * b[1] - a[1] * b[0] == 0:
                    raise GridError(f"parallel offsets {a} and {b}")

    def __iter__(self):
        return iter(zip(self.offsets, self.weights))

    def scaled(self, factor: float) -> Stencil:
        return Stencil(self.offsets, tuple(w * factor for w in self.weights), self.order)


# -- gradient / divergence ---------------------------------------------------


def _edge_valid(mask: np.ndarray) -> np.ndarray:
    """valid[d, r, c]: forward difference along axis direction d is kept."""
    act = mask != OUTSIDE
    valid = np.zeros((2,) + mask.shape, dtype=bool)
    valid[0, :, :-1] = act[:, :-1] & act[:, 1:]
    valid[1, :-1, :] = act[:-1, :] & act[1:, :]
    return valid


def forward_gradient(u: ScalarField) -> np.ndarray:
    """Forward differences, shape ``(2, H, W)``; component 0 is along columns.

    Differences leaving the grid or touching an outside cell are zero.
    """
    v = u.values
    g = np.zeros((2,) + v.shape)
    g[0, :, :-1] = v[:, 1:] - v[:, :-1]
    g[1, :-1, :] = v[1:, :] - v[:-1, :]
    g *= _edge_valid(u.mask)
    return g / u.delta


def divergence(p: np.ndarray, like: ScalarField) -> ScalarField:
    """Negative adjoint of :func:`forward_gradient` on the geometry of ``like``."""
    p = np.asarray(p, dtype=float)
    if p.shape != (2,) + like.shape:
        raise GridError("vector field shape does not match the grid")
    q = p * _edge_valid(like.mask)
    d = np.zeros(like.shape)
    d += q[0]
    d[:, 1:] -= q[0, :, :-1]
    d += q[1]
    d[1:, :] -= q[1, :-1, :]
    return ScalarField(d / like.delta, like.delta, like.mask)


# -- stencils ----------------------------------------------------------------


def _unit_dirs(offsets) -> tuple[np.ndarray, np.ndarray]:
    e = np.asarray(offsets, dtype=float)
    lengths = np.hypot(e[:, 0], e[:, 1])
    return e / lengths[:, None], lengths


def _normal_angles(units: np.ndarray) -> np.ndarray:
    normals = np.stack([-units[:, 1], units[:, 0]], axis=1)
    return np.mod(np.arctan2(normals[:, 1], normals[:, 0]), np.pi)


def _support(a: Anisotropy, angles: np.ndarray) -> np.ndarray:
    return np.asarray(a.eval(np.stack([np.cos(angles), np.sin(angles)], axis=-1)), dtype=float)


_GL_NODES, _GL_WEIGHTS = np.polynomial.legendre.leggauss(64)


def _integrate(a: Anisotropy, lo: float, hi: float) -> float:
    x = 0.5 * (hi - lo) * _GL_NODES + 0.5 * (hi + lo)
    return float(0.5 * (hi - lo) * np.dot(_GL_WEIGHTS, _support(a, x)))


def _sector_coefficients(a: Anisotropy, units: np.ndarray) -> np.ndarray:
    """Half the Wulff-boundary arc length owned by each direction.

    The sector of a direction spans the angular midpoints between its normal
    and the neighbouring normals; arc length is int(h + h'') over the sector.
    """
    ang = _normal_angles(units)
    order = np.argsort(ang, kind="stable")
    s = ang[order]
    ext = np.concatenate([s[-1:] - np.pi, s, s[:1] + np.pi])
    mids = 0.5 * (ext[:-1] + ext[1:])
    eps = 1e-6

    def dh(t):
        return float((_support(a, np.array([t + eps]))[0] - _support(a, np.array([t - eps]))[0]) / (2 * eps))

    coef = np.zeros(len(units))
    for i, k in enumerate(order):
        b1, b2 = mids[i], mids[i + 1]
        arc = _integrate(a, b1, s[i]) + _integrate(a, s[i], b2) + dh(b2) - dh(b1)
        coef[k] = 0.5 * arc
    return coef


def _interpolating_coefficients(a: Anisotropy, units: np.ndarray) -> np.ndarray:
    normals = np.stack([-units[:, 1], units[:, 0]], axis=1)
    mat = np.abs(normals @ units.T)
    return np.linalg.solve(mat, np.asarray(a.eval(normals), dtype=float))


def _minimax_coefficients(a: Anisotropy, units: np.ndarray, samples: int = 1440) -> np.ndarray:
    """Smallest worst-case relative error over all normals, then closest to the sector weights."""
    n = len(units)
    theta = np.arange(samples) * (np.pi / samples)
    normals = np.stack([np.cos(theta), np.sin(theta)], axis=1)
    rel = np.abs(normals @ units.T) / np.asarray(a.eval(normals), dtype=float)[:, None]
    ref = _sector_coefficients(a, units)
    floor = 1e-3 * float(ref.max())
    ones = np.ones(samples)

    a_ub = np.vstack([np.hstack([rel, -ones[:, None]]), np.hstack([-rel, -ones[:, None]])])
    b_ub = np.concatenate([ones, -ones])
    res = linprog(np.r_[np.zeros(n), 1.0], A_ub=a_ub, b_ub=b_ub,
                  bounds=[(floor, None)] * n + [(0, None)], method="highs")
    if not res.success:
        raise GridError(f"stencil fit failed: {res.message}")
    slack = float(res.x[-1]) + 1e-9

    eye = np.eye(n)
    zeros = np.zeros((samples, n))
    a2 = np.vstack([
        np.hstack([rel, zeros]),
        np.hstack([-rel, zeros]),
        np.hstack([eye, -eye]),
        np.hstack([-eye, -eye]),
    ])
    b2 = np.concatenate([(1 + slack) * ones, -(1 - slack) * ones, ref, -ref])
    res2 = linprog(np.r_[np.zeros(n), np.ones(n)], A_ub=a2, b_ub=b2,
                   bounds=[(floor, None)] * n + [(0, None)] * n, method="highs")
    if not res2.success:
        raise GridError(f"stencil fit failed: {res2.message}")
    return res2.x[:n]


@lru_cache(maxsize=64)
def _unit_coefficients(a: Anisotropy, order: int, method: str) -> tuple[float, ...]:
    units, _ = _unit_dirs(HALF_OFFSETS[order])
    if method == "sector":
        coef = _sector_coefficients(a, units)
    elif method == "interpolate":
        coef = _interpolating_coefficients(a, units)
    elif method == "minimax":
        coef = _minimax_coefficients(a, units)
    else:
        raise GridError(f"unknown weighting method {method!r}")
    floor = 1e-3 * float(np.max(coef))
    return tuple(float(max(c, floor)) for c in coef)


def crofton_weights(a: Anisotropy, order: int = 8, delta: float = 1.0,
                    method: str | None = None) -> Stencil:
    """Pairwise weights whose cut cost approximates the phi-perimeter.

    For a digitized half-plane with unit normal ``nu`` the cut cost per unit
    length is ``sum_k c_k |<nu, e_k/|e_k|>|`` with ``w_k = c_k * delta / |e_k|``.

    ``method``:
      * ``"interpolate"``: exact at the stencil normals (default for order 4,
        which then reproduces the classical axis weights);
      * ``"minimax"``: minimal worst-case relative error over all normals,
        tie-broken towards the sector weights (default for orders 8 and 16);
      * ``"sector"``: Cauchy-Crofton sectors bounded by angular midpoints.
    """
    if order not in HALF_OFFSETS:
        raise GridError("stencil order must be 4, 8 or 16")
    if not delta > 0:
        raise GridError("grid spacing must be positive")
    if method is None:
        method = "interpolate" if order == 4 else "minimax"
    coef = _unit_coefficients(a, order, method)
    _, lengths = _unit_dirs(HALF_OFFSETS[order])
    weights = tuple(c * delta / float(l) for c, l in zip(coef, lengths))
    return Stencil(HALF_OFFSETS[order], weights, order)


def stencil_line_density(s: Stencil, normal, delta: float = 1.0) -> float:
    """Continuum cut cost per unit length of a straight interface with ``normal``."""
    nu = np.asarray(normal, dtype=float)
    nu = nu / np.hypot(*nu)
    return float(sum(w * abs(nu[0] * dx + nu[1] * dy) for (dx, dy), w in s) / delta)


# -- pairwise sums -----------------------------------------------------------


def _shifted_pair(arr: np.ndarray, dx: int, dy: int) -> tuple[np.ndarray, np.ndarray]:
    """Views (a, b) with b[r, c] = arr[r + dy, c + dx] wherever both exist."""
    h, w = arr.shape
    r0, r1 = max(0, -dy), h - max(0, dy)
    c0, c1 = max(0, -dx), w - max(0, dx)
    return arr[r0:r1, c0:c1], arr[r0 + dy:r1 + dy, c0 + dx:c1 + dx]


def edge_list(mask: np.ndarray, stencil: Stencil):
    """Flat cell-index pairs (i, j) and weights for every active stencil pair.

    Ordered by stencil direction, then row-major on the first cell.
    """
    h, w = mask.shape
    idx = np.arange(h * w).reshape(h, w)
    act = mask != OUTSIDE
    heads, tails, weights = [], [], []
    for (dx, dy), wk in stencil:
        ia, ib = _shifted_pair(idx, dx, dy)
        aa, ab = _shifted_pair(act, dx, dy)
        keep = aa & ab
        heads.append(ia[keep])
        tails.append(ib[keep])
        weights.append(np.full(int(keep.sum()), wk))
    if not heads:
        return np.zeros(0, int), np.zeros(0, int), np.zeros(0)
    return np.concatenate(heads), np.concatenate(tails), np.concatenate(weights)


def _pair_sum(values: np.ndarray, active: np.ndarray, s: Stencil) -> float:
    total = 0.0
    for (dx, dy), wk in s:
        a, b = _shifted_pair(values, dx, dy)
        ma, mb = _shifted_pair(active, dx, dy)
        total += wk * float(np.sum(np.abs(b - a)[ma & mb]))
    return total


def pairwise_tv(u: ScalarField, s: Stencil) -> float:
    """sum over active pairs of w_k |u(x + e_k) - u(x)|."""
    return _pair_sum(u.values, u.active, s)


def pairwise_perimeter(e: BinarySet, s: Stencil) -> float:
    return _pair_sum(e.bits.astype(float), e.mask != OUTSIDE, s)


def one_sided_gradient(u: ScalarField, sx: int = 1, sy: int = 1) -> np.ndarray:
    """Differences toward the neighbour at (col + sx, row + sy), signed as a gradient.

    ``sx = sy = 1`` is :func:`forward_gradient`; differences leaving the
    domain are zero.
    """
    if sx not in (1, -1) or sy not in (1, -1):
        raise GridError("one-sided directions must be +1 or -1")
    v = np.where(u.active, u.values, 0.0)
    act = u.active
    g = np.zeros((2,) + v.shape)
    for comp, (dx, dy, s) in enumerate(((sx, 0, sx), (0, sy, sy))):
        a, b = _shifted_pair(v, dx, dy)
        ma, mb = _shifted_pair(act, dx, dy)
        rows = slice(max(0, -dy), v.shape[0] - max(0, dy))
        cols = slice(max(0, -dx), v.shape[1] - max(0, dx))
        g[comp, rows, cols] = s * (b - a) * (ma & mb)
    return g / u.delta


def cell_tv(u: ScalarField, a: Anisotropy, scheme: str = "forward") -> float:
    """Per-cell form delta^2 * sum_x phi(grad u(x)).

    ``scheme="symmetric"`` averages phi over the four one-sided gradients.
    """
    if scheme == "forward":
        dirs = [(1, 1)]
    elif scheme == "symmetric":
        dirs = [(1, 1), (1, -1), (-1, 1), (-1, -1)]
    else:
        raise GridError(f"unknown per-cell scheme {scheme!r}")
    total = 0.0
    for sx, sy in dirs:
        g = one_sided_gradient(u, sx, sy)
        vals = np.asarray(a.eval(np.moveaxis(g, 0, -1)))
        total += float(np.sum(vals[u.active]))
    return u.delta ** 2 * total / len(dirs)


def superlevel_sets(u: ScalarField):
    """Distinct values t_1 < ... < t_m of u on the domain and the sets {u > t_j}."""
    levels = np.unique(u.values[u.active])
    return levels, [BinarySet.superlevel(u, t) for t in levels]
