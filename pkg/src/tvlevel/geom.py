"""Exact minimization of prescribed-curvature set energies by minimum cut.

The energy of a set ``E`` (cells of the domain) is

    Per_w(E) + scale * delta**2 * sum_{x in E} (t - g(x))

where ``Per_w`` is the pairwise stencil perimeter. Seeds force cells in or
out of ``E``. Both the smallest and the largest minimizer are extracted from
the residual graph of one max-flow run.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .grid import (BOUNDARY, OUTSIDE, BinarySet, ScalarField, Stencil,
                   _shifted_pair, pairwise_perimeter)
from .maxflow import DEFAULT_QUANTUM, FlowGraph, quantize

FREE, FORCED_IN, FORCED_OUT = 0, 1, -1


class GeomError(ValueError):
    pass


def make_seeds(shape, forced_in=None, forced_out=None) -> np.ndarray:
    """Combine two boolean masks into a seed array; overlapping cells are an error."""
    seeds = np.zeros(shape, dtype=np.int8)
    fin = np.zeros(shape, bool) if forced_in is None else np.asarray(forced_in, bool)
    fout = np.zeros(shape, bool) if forced_out is None else np.asarray(forced_out, bool)
    clash = fin & fout
    if np.any(clash):
        r, c = np.argwhere(clash)[0]
        raise GeomError(f"conflicting seeds at cell (row={r}, col={c})")
    seeds[fin] = FORCED_IN
    seeds[fout] = FORCED_OUT
    return seeds


@dataclass
class CurvatureProblem:
    g: ScalarField
    t: float
    stencil: Stencil
    scale: float = 1.0
    seeds: np.ndarray | None = None
    quantum: int = DEFAULT_QUANTUM

    def __post_init__(self) -> None:
        if not math.isfinite(self.t):
            raise GeomError("level t must be finite")
        if not (math.isfinite(self.scale) and self.scale >= 0):
            raise GeomError("volume scale must be finite and non-negative")
        if self.seeds is None:
            self.seeds = np.zeros(self.g.shape, dtype=np.int8)
        self.seeds = np.asarray(self.seeds, dtype=np.int8)
        if self.seeds.shape != self.g.shape:
            raise GeomError("seed array shape does not match the field")
        if not np.all(np.isin(self.seeds, (FREE, FORCED_IN, FORCED_OUT))):
            raise GeomError("seeds must be 0 (free), 1 (in) or -1 (out)")
        self.seeds = np.where(self.g.active, self.seeds, FREE).astype(np.int8)

    def volume_coefficients(self) -> np.ndarray:
        return self.scale * self.g.delta ** 2 * (self.t - self.g.values)


@dataclass
class CutResult:
    minimal: BinarySet
    maximal: BinarySet
    energy: float
    stats: dict = field(default_factory=dict)


def curvature_energy(p: CurvatureProblem, e: BinarySet) -> float:
    vol = p.volume_coefficients()
    return pairwise_perimeter(e, p.stencil) + float(np.sum(vol[e.bits]))


def _quantized_energy(p: CurvatureProblem, bits: np.ndarray, wq: list[int], vq: np.ndarray) -> int:
    act = p.g.active
    total = int(np.sum(vq[bits & act], dtype=object)) if np.any(bits & act) else 0
    for ((dx, dy), _), w in zip(p.stencil, wq):
        a, b = _shifted_pair(bits, dx, dy)
        ma, mb = _shifted_pair(act, dx, dy)
        total += w * int(np.sum((a != b) & ma & mb))
    return total


def solve_curvature(p: CurvatureProblem) -> CutResult:
    """Global minimizers of the seeded prescribed-curvature energy."""
    g = p.g
    act = g.active
    free = act & (p.seeds == FREE)
    forced_in = act & (p.seeds == FORCED_IN)
    h, w = g.shape
    node = -np.ones(g.shape, dtype=np.int64)
    node[free] = np.arange(int(free.sum()))
    n = int(free.sum())

    wq = [quantize(wk, p.quantum, f"stencil weight {off}") for off, wk in p.stencil]
    vol = p.volume_coefficients()
    vq = np.zeros(g.shape, dtype=object)
    for r, c in zip(*np.nonzero(act)):
        vq[r, c] = quantize(vol[r, c], p.quantum, f"volume term at (row={r}, col={c})")

    src = [0] * n
    snk = [0] * n
    offset = 0
    graph = FlowGraph(n, p.quantum)
    for r, c in zip(*np.nonzero(free)):
        i = node[r, c]
        v = vq[r, c]
        if v > 0:
            snk[i] += v
        elif v < 0:
            src[i] += -v
            offset += v
    offset += int(np.sum(vq[forced_in], dtype=object)) if np.any(forced_in) else 0

    for ((dx, dy), _), wk in zip(p.stencil, wq):
        for r in range(h):
            r2 = r + dy
            if not 0 <= r2 < h:
                continue
            for c in range(w):
                c2 = c + dx
                if not 0 <= c2 < w or not act[r, c] or not act[r2, c2]:
                    continue
                a_free, b_free = free[r, c], free[r2, c2]
                if a_free and b_free:
                    graph.add_edge_int(int(node[r, c]), int(node[r2, c2]), wk, wk)
                elif a_free or b_free:
                    fr, fc, sr, sc = (r, c, r2, c2) if a_free else (r2, c2, r, c)
                    i = node[fr, fc]
                    if p.seeds[sr, sc] == FORCED_IN:
                        src[i] += wk
                    else:
                        snk[i] += wk
                elif p.seeds[r, c] != p.seeds[r2, c2]:
                    offset += wk
    for i in range(n):
        graph.add_tedge_int(i, src[i], snk[i])

    flow = graph.maxflow()
    min_bits = forced_in.copy()
    max_bits = forced_in.copy()
    min_bits[free] = graph.source_side()[node[free]]
    max_bits[free] = ~graph.sink_side()[node[free]]
    minimal = BinarySet(min_bits, g.delta, g.mask)
    maximal = BinarySet(max_bits, g.delta, g.mask)

    qmin = _quantized_energy(p, min_bits, wq, vq)
    qmax = _quantized_energy(p, max_bits, wq, vq)
    energy = curvature_energy(p, minimal)
    stats = {
        "nodes": n,
        "edges": graph.num_edges,
        "flow_quanta": flow,
        "offset_quanta": offset,
        "quantum": p.quantum,
        "certificate": bool(qmin == qmax == flow + offset),
        "energy_maximal": curvature_energy(p, maximal),
    }
    return CutResult(minimal, maximal, energy, stats)


@dataclass
class DirichletResult:
    u: ScalarField
    levels: np.ndarray
    values: np.ndarray
    minimal: list[BinarySet]
    maximal: list[BinarySet]
    nested: bool


def default_levels(g_trace: ScalarField) -> np.ndarray:
    b = np.unique(g_trace.values[g_trace.mask == BOUNDARY])
    return 0.5 * (b[:-1] + b[1:])


def _level_values(levels: np.ndarray, bvals: np.ndarray) -> np.ndarray:
    """Value assigned to cells lying in exactly the first j level sets (j = 0..m).

    A band (t_j, t_{j+1}] holding exactly one boundary value gets that value;
    otherwise its midpoint. The outer bands get min/max of the trace.
    """
    lo, hi = float(bvals.min()), float(bvals.max())
    edges = np.concatenate([[-np.inf], levels, [np.inf]])
    out = np.empty(len(levels) + 1)
    for j in range(len(levels) + 1):
        a, b = edges[j], edges[j + 1]
        inside = bvals[(bvals > a) & (bvals <= b)]
        if len(inside) == 1:
            out[j] = inside[0]
        elif j == 0:
            out[j] = lo
        elif j == len(levels):
            out[j] = hi
        else:
            out[j] = 0.5 * (a + b)
    return np.clip(out, lo, hi)


def dirichlet_decomposition(g_trace: ScalarField, stencil: Stencil, levels=None) -> DirichletResult:
    """Solve the Dirichlet TV problem level by level and stack maximal minimizers."""
    bmask = g_trace.mask == BOUNDARY
    if not np.any(bmask):
        raise GeomError("Dirichlet problem needs boundary cells carrying the trace")
    bvals = np.unique(g_trace.values[bmask])
    if levels is None:
        levels = default_levels(g_trace)
    levels = np.asarray(levels, dtype=float).ravel()
    if not np.all(np.isfinite(levels)) or np.any(np.diff(levels) <= 0):
        raise GeomError("levels must be finite and strictly increasing")
    values = _level_values(levels, np.sort(bvals))

    mins, maxs = [], []
    for t in levels:
        seeds = make_seeds(g_trace.shape, bmask & (g_trace.values > t), bmask & ~(g_trace.values > t))
        res = solve_curvature(CurvatureProblem(g_trace, float(t), stencil, 0.0, seeds))
        mins.append(res.minimal)
        maxs.append(res.maximal)

    count = np.zeros(g_trace.shape, dtype=np.int64)
    for e in maxs:
        count += e.bits
    nested = all(maxs[j + 1] <= maxs[j] and mins[j + 1] <= mins[j] for j in range(len(levels) - 1))
    u = values[count]
    u = np.where(g_trace.active, u, np.nan)
    return DirichletResult(ScalarField(u, g_trace.delta, g_trace.mask), levels, values, mins, maxs, nested)


def solve_dirichlet_tv(g_trace: ScalarField, stencil: Stencil, levels=None) -> ScalarField:
    return dirichlet_decomposition(g_trace, stencil, levels).u
