"""Independent reference computations.

Nothing here calls the energy, cut or solver code it is used to check:
energies are re-summed from the raw definitions, sets are enumerated, and
the reference max-flow is a plain BFS augmenting-path method.
"""

from __future__ import annotations

from collections import deque

import numpy as np

from ..geom import CutResult
from ..grid import OUTSIDE, BinarySet, ScalarField

MAX_FREE_CELLS = 18


class OracleError(ValueError):
    pass


def _raw_pairs(mask: np.ndarray, offsets, weights):
    """(cell_a, cell_b, weight) for every active stencil pair, by explicit loops."""
    h, w = mask.shape
    pairs = []
    for (dx, dy), wk in zip(offsets, weights):
        for r in range(h):
            for c in range(w):
                r2, c2 = r + dy, c + dx
                if 0 <= r2 < h and 0 <= c2 < w and mask[r, c] != OUTSIDE and mask[r2, c2] != OUTSIDE:
                    pairs.append(((r, c), (r2, c2), float(wk)))
    return pairs


def resum_set_energy(g: ScalarField, t: float, stencil, scale: float, bits: np.ndarray) -> float:
    total = 0.0
    for a, b, wk in _raw_pairs(g.mask, stencil.offsets, stencil.weights):
        if bits[a] != bits[b]:
            total += wk
    d2 = g.delta * g.delta
    for r, c in zip(*np.nonzero(bits & (g.mask != OUTSIDE))):
        total += scale * d2 * (t - g.values[r, c])
    return total


def resum_rof_energy(g: ScalarField, lam: float, stencil, u: np.ndarray) -> float:
    """Pairwise ROF objective with Neumann boundary, summed cell by cell."""
    total = 0.0
    for a, b, wk in _raw_pairs(g.mask, stencil.offsets, stencil.weights):
        total += wk * abs(u[b] - u[a])
    d2 = g.delta * g.delta
    for r, c in zip(*np.nonzero(g.mask != OUTSIDE)):
        total += d2 / lam * 0.5 * (u[r, c] - g.values[r, c]) ** 2
    return total


class _Enumeration:
    """All subsets of the free cells with their perimeter, sum of g and size."""

    def __init__(self, g: ScalarField, stencil, seeds=None):
        act = g.mask != OUTSIDE
        seeds = np.zeros(g.shape, np.int8) if seeds is None else np.asarray(seeds, np.int8)
        self.g = g
        self.forced_in = act & (seeds == 1)
        free = act & (seeds == 0)
        self.free_cells = [tuple(rc) for rc in np.argwhere(free)]
        n = len(self.free_cells)
        if n > MAX_FREE_CELLS:
            raise OracleError(f"{n} free cells; brute force is capped at {MAX_FREE_CELLS}")
        pos = {rc: k for k, rc in enumerate(self.free_cells)}
        codes = np.arange(2 ** n, dtype=np.int64)
        self.bits = ((codes[:, None] >> np.arange(n)) & 1).astype(bool)
        per = np.zeros(2 ** n)
        for a, b, wk in _raw_pairs(g.mask, stencil.offsets, stencil.weights):
            ia, ib = pos.get(a), pos.get(b)
            xa = self.bits[:, ia] if ia is not None else np.full(2 ** n, bool(self.forced_in[a]))
            xb = self.bits[:, ib] if ib is not None else np.full(2 ** n, bool(self.forced_in[b]))
            per += wk * (xa != xb)
        self.perimeter = per
        gv = np.array([g.values[rc] for rc in self.free_cells])
        self.gsum = self.bits @ gv if n else np.zeros(1)
        self.size = self.bits.sum(axis=1)
        self.fixed_gsum = float(g.values[self.forced_in].sum())
        self.fixed_size = int(self.forced_in.sum())

    def energies(self, t: float, scale: float) -> np.ndarray:
        d2 = self.g.delta ** 2
        vol = scale * d2 * (t * (self.size + self.fixed_size) - (self.gsum + self.fixed_gsum))
        return self.perimeter + vol

    def extremes(self, t: float, scale: float, rel_tol: float = 1e-10):
        en = self.energies(t, scale)
        best = float(en.min())
        tol = rel_tol * (1.0 + float(np.abs(self.perimeter).max()) + abs(scale) * float(np.abs(self.gsum).max() + abs(t) * len(self.free_cells)))
        opt = en <= best + tol
        inter = np.all(self.bits[opt], axis=0)
        union = np.any(self.bits[opt], axis=0)
        return best, inter, union

    def to_set(self, free_bits) -> BinarySet:
        out = self.forced_in.copy()
        for k, rc in enumerate(self.free_cells):
            out[rc] = bool(free_bits[k])
        return BinarySet(out, self.g.delta, self.g.mask)


def brute_force_curvature(g: ScalarField, t: float, stencil, seeds=None, scale: float = 1.0) -> CutResult:
    """Exhaustive minimization; minimal/maximal are the intersection/union of all optimal sets."""
    enum = _Enumeration(g, stencil, seeds)
    best, inter, union = enum.extremes(t, scale)
    return CutResult(enum.to_set(inter), enum.to_set(union), best,
                     {"subsets": int(2 ** len(enum.free_cells)), "oracle": "enumeration"})


def stacked_rof_oracle(g: ScalarField, lam: float, stencil, n_levels: int) -> ScalarField:
    """ROF minimizer rebuilt from enumerated level-set minimizers at n_levels thresholds.

    Thresholds sit at lo + j*h (j = 1..n_levels-1, h = range/n_levels); a cell
    lying in k maximal minimizers receives lo + (k + 1/2)*h, so the
    quantization error is at most h.
    """
    act = g.mask != OUTSIDE
    vals = g.values[act]
    lo, hi = float(vals.min()), float(vals.max())
    if hi == lo:
        return ScalarField(np.where(act, lo, np.nan), g.delta, g.mask)
    enum = _Enumeration(g, stencil)
    h = (hi - lo) / n_levels
    count = np.zeros(g.shape, np.int64)
    for j in range(1, n_levels):
        _, _, union = enum.extremes(lo + j * h, 1.0 / lam)
        count += enum.to_set(union).bits
    u = lo + (count + 0.5) * h
    return ScalarField(np.where(act, u, np.nan), g.delta, g.mask)


def _edmonds_karp(capacity: dict, source, sink):
    residual: dict = {}
    nbrs: dict = {}
    for (u, v), c in capacity.items():
        residual[(u, v)] = residual.get((u, v), 0) + c
        residual.setdefault((v, u), 0)
        nbrs.setdefault(u, set()).add(v)
        nbrs.setdefault(v, set()).add(u)
    order = {x: sorted(ys, key=repr) for x, ys in nbrs.items()}
    flow = 0
    while True:
        parent = {source: None}
        q = deque([source])
        while q and sink not in parent:
            x = q.popleft()
            for y in order.get(x, ()):
                if y not in parent and residual[(x, y)] > 0:
                    parent[y] = x
                    q.append(y)
        if sink not in parent:
            return flow, residual, nbrs
        path = []
        y = sink
        while parent[y] is not None:
            path.append((parent[y], y))
            y = parent[y]
        f = min(residual[e] for e in path)
        for a, b in path:
            residual[(a, b)] -= f
            residual[(b, a)] += f
        flow += f


def reference_maxflow(capacity: dict, source, sink) -> int:
    """Edmonds-Karp on a dict {(u, v): cap}; returns the max-flow value."""
    return _edmonds_karp(capacity, source, sink)[0]


def reference_min_cut_sets(g: ScalarField, t: float, stencil, seeds=None, scale: float = 1.0, quantum: int = 2 ** 32):
    """Minimal and maximal minimizers via the reference max-flow on a freshly built graph.

    Seeded cells become nodes tied to a terminal with a capacity larger than
    any finite cut, so the construction differs from the production solver.
    """
    act = g.mask != OUTSIDE
    seeds = np.zeros(g.shape, np.int8) if seeds is None else np.asarray(seeds, np.int8)
    cells = [tuple(rc) for rc in np.argwhere(act)]
    cap: dict = {}

    def add(u, v, c):
        if c > 0:
            cap[(u, v)] = cap.get((u, v), 0) + c

    pairs = _raw_pairs(g.mask, stencil.offsets, stencil.weights)
    big = 1 + sum(int(round(wk * quantum)) for _, _, wk in pairs)
    d2 = g.delta ** 2
    for rc in cells:
        big += abs(int(round(scale * d2 * (t - g.values[rc]) * quantum)))
    for a, b, wk in pairs:
        q = int(round(wk * quantum))
        add(a, b, q)
        add(b, a, q)
    for rc in cells:
        v = int(round(scale * d2 * (t - g.values[rc]) * quantum))
        if v > 0:
            add(rc, "T", v)
        elif v < 0:
            add("S", rc, -v)
        if seeds[rc] == 1:
            add("S", rc, big)
        elif seeds[rc] == -1:
            add(rc, "T", big)
    flow, residual, nbrs = _edmonds_karp(cap, "S", "T")
    from_s = _reach(residual, nbrs, "S", forward=True)
    to_t = _reach(residual, nbrs, "T", forward=False)
    minimal = np.zeros(g.shape, bool)
    maximal = np.zeros(g.shape, bool)
    for rc in cells:
        minimal[rc] = rc in from_s
        maximal[rc] = rc not in to_t
    return flow, BinarySet(minimal, g.delta, g.mask), BinarySet(maximal, g.delta, g.mask)


def _reach(residual, nbrs, start, forward: bool) -> set:
    seen = {start}
    q = deque([start])
    while q:
        x = q.popleft()
        for y in nbrs.get(x, ()):
            c = residual[(x, y)] if forward else residual[(y, x)]
            if c > 0 and y not in seen:
                seen.add(y)
                q.append(y)
    return seen
