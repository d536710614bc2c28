"""Property checks. Each check maps (params, seed) to a :class:`CheckReport`.

Checks never raise on a violated property: they return ``status="fail"``
with the measured metrics and, when a dump directory is given, the offending
fields written as CSV.
"""

from __future__ import annotations

import json
import math
import os
from dataclasses import asdict, dataclass, field

import numpy as np

from .. import fieldio
from ..anisotropy import Anisotropy
from ..geom import (CurvatureProblem, dirichlet_decomposition, make_seeds,
                    solve_curvature)
from ..grid import (OUTSIDE, BinarySet, ScalarField, Stencil, crofton_weights,
                    divergence, forward_gradient, full_mask, pairwise_perimeter,
                    pairwise_tv)
from ..maxflow import FlowGraph
from ..rof import RofProblem, solve
from . import fixtures as fx
from .oracles import (brute_force_curvature, reference_maxflow,
                      reference_min_cut_sets, resum_set_energy,
                      stacked_rof_oracle)

PASS, FAIL, REPORT = "pass", "fail", "report-only"


@dataclass
class CheckReport:
    name: str
    claim: str
    status: str
    metrics: dict = field(default_factory=dict)
    tolerance: dict = field(default_factory=dict)
    seed: int = 0
    artifacts: list = field(default_factory=list)

    def to_dict(self) -> dict:
        return _plain(asdict(self))

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)

    @property
    def failed(self) -> bool:
        return self.status == FAIL


def _plain(x):
    """Convert numpy scalars and arrays into JSON-ready Python values."""
    if isinstance(x, dict):
        return {str(k): _plain(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_plain(v) for v in x]
    if isinstance(x, np.ndarray):
        return _plain(x.tolist())
    if isinstance(x, (np.bool_, bool)):
        return bool(x)
    if isinstance(x, np.integer):
        return int(x)
    if isinstance(x, (np.floating, float)):
        v = float(x)
        return v if math.isfinite(v) else repr(v)
    return x


class _Ctx:
    def __init__(self, name: str, seed: int, dump_dir):
        self.name = name
        self.seed = seed
        self.dump_dir = dump_dir
        self.dumps: dict[str, ScalarField] = {}

    def keep(self, label: str, u: ScalarField) -> None:
        """Remember a field; it is written only if the check fails."""
        self.dumps.setdefault(label, u)

    def report(self, claim: str, ok: bool | None, metrics: dict, tolerance: dict) -> CheckReport:
        status = REPORT if ok is None else (PASS if ok else FAIL)
        artifacts = []
        if status == FAIL and self.dump_dir is not None:
            os.makedirs(self.dump_dir, exist_ok=True)
            for label, u in sorted(self.dumps.items()):
                path = os.path.join(str(self.dump_dir), f"{self.name}-{self.seed}-{label}.csv")
                fieldio.write_csv(path, u)
                artifacts.append(path)
        return CheckReport(self.name, claim, status, metrics, tolerance, self.seed, artifacts)


def _anisotropy(desc) -> Anisotropy:
    return Anisotropy.from_descriptor(desc) if isinstance(desc, dict) else desc


def lipschitz_constant(v: np.ndarray, active: np.ndarray, delta: float, polar: Anisotropy) -> float:
    """max |v(x) - v(y)| / polar(x - y) over all pairs of active cells."""
    h, w = v.shape
    vv = np.where(active, v, 0.0)
    best = 0.0
    for dy in range(h):
        for dx in range(-(w - 1), w):
            if dy == 0 and dx <= 0:
                continue
            r0, r1 = 0, h - dy
            c0, c1 = max(0, -dx), w - max(0, dx)
            ok = active[r0:r1, c0:c1] & active[r0 + dy:r1 + dy, c0 + dx:c1 + dx]
            if not ok.any():
                continue
            diff = np.abs(vv[r0 + dy:r1 + dy, c0 + dx:c1 + dx] - vv[r0:r1, c0:c1])
            dist = float(polar.eval(np.array([dx * delta, dy * delta])))
            best = max(best, float(diff[ok].max()) / dist)
    return best


# -- anisotropy ---------------------------------------------------------------


def _random_spd(rng) -> np.ndarray:
    q, _ = np.linalg.qr(rng.normal(size=(2, 2)))
    m = q @ np.diag(rng.uniform(0.2, 5.0, 2)) @ q.T
    return 0.5 * (m + m.T)


def check_anisotropy_identities(params: dict, seed: int, dump_dir=None) -> CheckReport:
    ctx = _Ctx("anisotropy_identities", seed, dump_dir)
    n = int(params.get("samples", 1000))
    id_tol = float(params.get("identity_tol", 1e-8))
    fd_tol = float(params.get("fd_tol", 1e-5))
    h = float(params.get("fd_step", 1e-6))
    rng = np.random.default_rng(seed)
    norms = [Anisotropy.euclidean(), Anisotropy.weighted(_random_spd(rng)),
             Anisotropy.weighted([[4.0, 0.0], [0.0, 1.0]]), Anisotropy.lp_norm(1.5),
             Anisotropy.lp_norm(3.0), Anisotropy("l1"), Anisotropy("linf")]
    metrics = {}
    ok = True
    for a in norms:
        label = a.kind if a.kind != "lp" else f"lp{a.p:g}"
        if a.kind == "weighted_l2":
            label += "_diag41" if np.allclose(a.matrix, [[4, 0], [0, 1]]) else "_random"
        pol = a.polar()
        x = rng.normal(size=(n, 2)) * rng.uniform(0.1, 10.0, (n, 1))
        xi = rng.normal(size=(n, 2))
        phi = np.asarray(a.eval(x))
        m = {}
        m["holder"] = float(np.max(np.sum(x * xi, axis=1) - phi * np.asarray(pol.eval(xi))))
        m["bipolar"] = float(np.max(np.abs(np.asarray(pol.polar().eval(x)) - phi) / phi))
        m["symmetry"] = float(np.max(np.abs(np.asarray(a.eval(-x)) - phi) / phi))
        s = rng.uniform(0.01, 100.0, (n, 1))
        m["homogeneity"] = float(np.max(np.abs(np.asarray(a.eval(s * x)) - s[:, 0] * phi) / (s[:, 0] * phi)))
        y = rng.normal(size=(n, 2))
        m["triangle"] = float(np.max(np.asarray(a.eval(x + y)) - phi - np.asarray(a.eval(y))))
        passed = (m["holder"] <= 1e-12 * float(np.max(phi)) and m["bipolar"] <= 1e-9
                  and m["symmetry"] <= 1e-12 and m["homogeneity"] <= 1e-12 and m["triangle"] <= 1e-9)
        if not a.crystalline:
            gr = a.grad(x)
            m["euler"] = float(np.max(np.abs(np.sum(gr * x, axis=1) - phi) / phi))
            m["polar_of_grad"] = float(np.max(np.abs(np.asarray(pol.eval(gr)) - 1.0)))
            yv = phi[:, None] * gr
            back = np.asarray(pol.eval(yv))[:, None] * pol.grad(yv)
            m["inversion"] = float(np.max(np.linalg.norm(back - x, axis=1) / np.linalg.norm(x, axis=1)))
            m["zero_homogeneity"] = float(np.max(np.abs(a.grad(s * x) - gr)))
            fd = np.empty_like(gr)
            for k in range(2):
                e = np.zeros(2)
                e[k] = h
                fd[:, k] = (np.asarray(a.eval(x + e * np.linalg.norm(x, axis=1, keepdims=True)))
                            - np.asarray(a.eval(x - e * np.linalg.norm(x, axis=1, keepdims=True)))) \
                    / (2 * h * np.linalg.norm(x, axis=1))
            m["fd_gradient"] = float(np.max(np.linalg.norm(fd - gr, axis=1) / np.linalg.norm(gr, axis=1)))
            passed = passed and (m["euler"] <= id_tol and m["polar_of_grad"] <= id_tol
                                 and m["inversion"] <= id_tol and m["zero_homogeneity"] <= id_tol
                                 and m["fd_gradient"] <= fd_tol)
        metrics[label] = m
        ok = ok and passed
    return ctx.report("phi, its polar and its gradient satisfy the duality identities", ok, metrics,
                      {"identity": id_tol, "fd_relative": fd_tol, "fd_step": h, "samples": n})


# -- discrete calculus ------------------------------------------------------------


def _random_mask(rng, h: int, w: int) -> np.ndarray:
    mask = full_mask(h, w)
    holes = rng.random((h, w)) < 0.15
    mask[holes] = OUTSIDE
    if not np.any(mask != OUTSIDE):
        mask[0, 0] = 2
    return mask


def check_discrete_calculus(params: dict, seed: int, dump_dir=None) -> CheckReport:
    ctx = _Ctx("discrete_calculus", seed, dump_dir)
    n_adj = int(params.get("adjoint_instances", 100))
    n_coarea = int(params.get("coarea_instances", 100))
    n_sub = int(params.get("submodular_pairs", 100))
    size = int(params.get("size", 16))
    adj_tol = float(params.get("adjoint_tol", 1e-12))
    coarea_tol = float(params.get("coarea_tol", 1e-10))
    rng = np.random.default_rng(seed)
    stencils = [crofton_weights(Anisotropy.euclidean(), 4), crofton_weights(Anisotropy.euclidean(), 8),
                crofton_weights(Anisotropy.weighted([[4.0, 0.0], [0.0, 1.0]]), 16),
                crofton_weights(Anisotropy("l1"), 8)]

    adj = 0.0
    for i in range(n_adj):
        mask = full_mask(size, size) if i % 2 == 0 else _random_mask(rng, size, size)
        delta = float(rng.uniform(0.1, 2.0))
        u = ScalarField(rng.normal(size=(size, size)), delta, mask)
        p = rng.normal(size=(2, size, size))
        gu = forward_gradient(u)
        dv = divergence(p, u).values
        lhs = float(np.sum(gu * p))
        rhs = -float(np.sum(np.where(u.active, u.values, 0.0) * dv))
        scale = float(np.linalg.norm(gu) * np.linalg.norm(p)) + 1.0
        adj = max(adj, abs(lhs - rhs) / scale)

    coarea = 0.0
    for i in range(n_coarea):
        s = stencils[i % len(stencils)]
        levels = int(rng.integers(2, 9))
        mask = full_mask(size, size) if i % 2 == 0 else _random_mask(rng, size, size)
        v = rng.integers(0, levels, (size, size)) * float(rng.uniform(0.1, 3.0)) + float(rng.normal())
        u = ScalarField(v, 1.0, mask)
        tv = pairwise_tv(u, s)
        ts = np.unique(u.values[u.active])
        layered = sum((ts[j + 1] - ts[j]) * pairwise_perimeter(BinarySet.superlevel(u, ts[j]), s)
                      for j in range(len(ts) - 1))
        coarea = max(coarea, abs(tv - layered) / max(tv, 1e-300))

    violations = 0
    worst = -math.inf
    for i in range(n_sub):
        s = stencils[i % len(stencils)]
        mask = full_mask(size, size) if i % 2 == 0 else _random_mask(rng, size, size)
        a = BinarySet(rng.random((size, size)) < 0.5, 1.0, mask)
        b = BinarySet(rng.random((size, size)) < 0.5, 1.0, mask)
        slack = (pairwise_perimeter(a & b, s) + pairwise_perimeter(a | b, s)
                 - pairwise_perimeter(a, s) - pairwise_perimeter(b, s))
        worst = max(worst, slack)
        violations += slack > 1e-12 * (pairwise_perimeter(a, s) + pairwise_perimeter(b, s))

    ok = adj <= adj_tol and coarea <= coarea_tol and violations == 0
    return ctx.report("gradient/divergence are adjoint; pairwise TV obeys exact coarea; perimeter is submodular",
                      ok, {"adjoint_residual": adj, "coarea_residual": coarea,
                           "submodular_violations": violations, "submodular_worst_slack": worst},
                      {"adjoint": adj_tol, "coarea_relative": coarea_tol, "submodular": 0})


# -- exact set minimization -----------------------------------------------------------


def check_curvature_exactness(params: dict, seed: int, dump_dir=None) -> CheckReport:
    ctx = _Ctx("curvature_exactness", seed, dump_dir)
    n_inst = int(params.get("instances", 50))
    size = int(params.get("size", 4))
    orders = params.get("orders", [4, 8])
    rng = np.random.default_rng(seed)
    mismatches = 0
    energy_err = 0.0
    certificates = True
    lattice = True
    for i in range(n_inst):
        order = int(orders[i % len(orders)])
        a = Anisotropy.euclidean() if i % 3 else Anisotropy.weighted(_random_spd(rng))
        s = crofton_weights(a, order)
        quantized = i % 2 == 0
        v = rng.integers(0, 8, (size, size)) / 8.0 if quantized else rng.random((size, size))
        g = ScalarField(v)
        t = float(np.median(v))
        scale = float(rng.choice([0.5, 1.0, 4.0]))
        seeds = None
        if i % 4 == 3:
            r = rng.random((size, size))
            seeds = make_seeds(g.shape, r < 0.1, r > 0.9)
        res = solve_curvature(CurvatureProblem(g, t, s, scale, seeds))
        ref = brute_force_curvature(g, t, s, seeds, scale)
        quantum_tol = (len(s.weights) * 2 * size * size + size * size) / res.stats["quantum"]
        energy_err = max(energy_err, abs(res.energy - ref.energy))
        same = (res.minimal == ref.minimal and res.maximal == ref.maximal
                and abs(res.energy - ref.energy) <= quantum_tol)
        certificates &= bool(res.stats["certificate"])
        # union and intersection of minimizers stay optimal
        for e in (res.minimal | res.maximal, res.minimal & res.maximal):
            lattice &= abs(resum_set_energy(g, t, s, scale, e.bits) - ref.energy) <= quantum_tol
        if not same:
            mismatches += 1
            ctx.keep(f"g{i}", g)
    ok = mismatches == 0 and certificates and lattice
    return ctx.report("max-flow returns the exact minimal and maximal minimizers", ok,
                      {"instances": n_inst, "mismatches": mismatches, "max_energy_error": energy_err,
                       "flow_certificates": certificates, "union_intersection_optimal": lattice},
                      {"energy": "one capacity quantum per term", "sets": "exact"})


def check_maxflow_reference(params: dict, seed: int, dump_dir=None) -> CheckReport:
    ctx = _Ctx("maxflow_reference", seed, dump_dir)
    n_graphs = int(params.get("graphs", 50))
    n_cut = int(params.get("cut_instances", 5))
    cut_size = int(params.get("cut_size", 8))
    rng = np.random.default_rng(seed)
    flow_mismatch = 0
    for _ in range(n_graphs):
        n = int(rng.integers(2, 12))
        graph = FlowGraph(n)
        cap: dict = {}
        for _ in range(int(rng.integers(n, 4 * n + 1))):
            u, v = (int(z) for z in rng.integers(0, n + 2, 2))
            if u == v or u == n + 1 or v == n:
                continue
            c = int(rng.integers(1, 20))
            graph.add_edge_int(u, v, c)
            cap[(u, v)] = cap.get((u, v), 0) + c
        flow_mismatch += graph.maxflow() != reference_maxflow(cap, n, n + 1)
    cut_mismatch = 0
    for i in range(n_cut):
        g = ScalarField(rng.integers(0, 6, (cut_size, cut_size)) / 6.0)
        s = crofton_weights(Anisotropy.euclidean(), 8)
        r = rng.random(g.shape)
        seeds = make_seeds(g.shape, r < 0.05, r > 0.95)
        t = 0.5
        res = solve_curvature(CurvatureProblem(g, t, s, 2.0, seeds))
        _, rmin, rmax = reference_min_cut_sets(g, t, s, seeds, 2.0)
        if not (res.minimal == rmin and res.maximal == rmax):
            cut_mismatch += 1
            ctx.keep(f"g{i}", g)
    ok = flow_mismatch == 0 and cut_mismatch == 0
    return ctx.report("Dinic max-flow agrees with a breadth-first augmenting-path reference", ok,
                      {"graphs": n_graphs, "flow_mismatches": int(flow_mismatch),
                       "cut_instances": n_cut, "cut_mismatches": cut_mismatch},
                      {"flow": "exact", "sets": "exact"})


# -- ROF and its level sets -----------------------------------------------------------


def _sandwich(u: ScalarField, g: ScalarField, lam: float, s: Stencil, thresholds, eta: float):
    """Count cells breaking minimal(t) ⊇ {u > t+eta} or maximal(t) ⊆ {u >= t-eta}."""
    weak = strong = 0
    act = u.active
    for t in thresholds:
        res = solve_curvature(CurvatureProblem(g, float(t), s, 1.0 / lam))
        above = act & (u.values > t + eta)
        below = act & (u.values < t - eta)
        weak += int(np.sum(above & ~res.maximal.bits) + np.sum(below & res.minimal.bits))
        strong += int(np.sum(above & ~res.minimal.bits) + np.sum(below & res.maximal.bits))
    return weak, strong


def check_levelset_equivalence(params: dict, seed: int, dump_dir=None) -> CheckReport:
    ctx = _Ctx("levelset_equivalence", seed, dump_dir)
    n_inst = int(params.get("instances", 20))
    size = int(params.get("size", 16))
    lams = [float(v) for v in params.get("lams", [0.25, 1.0])]
    gap_tol = float(params.get("gap_tol", 1e-9))
    order = int(params.get("order", 8))
    s = crofton_weights(_anisotropy(params.get("anisotropy", {"kind": "euclidean"})), order)
    weak_total = strong_total = 0
    worst_gap = 0.0
    for i in range(n_inst):
        g = fx.smooth_field(size, seed * 1000 + i)
        lam = lams[i % len(lams)]
        u, rep = solve(RofProblem(g, lam, stencil=s), tol=gap_tol)
        worst_gap = max(worst_gap, rep.rel_gap)
        eta = 10.0 * math.sqrt(gap_tol) * max(g.oscillation(), 1e-12)
        qs = np.quantile(u.values[u.active], np.linspace(0.1, 0.9, 9))
        weak, strong = _sandwich(u, g, lam, s, qs, eta)
        weak_total += weak
        strong_total += strong
        if weak:
            ctx.keep(f"g{i}", g)
            ctx.keep(f"u{i}", u)
    ok = weak_total == 0 and worst_gap <= gap_tol
    return ctx.report("every level set of the ROF minimizer lies between the extreme cut minimizers", ok,
                      {"instances": n_inst, "sandwich_violations": weak_total,
                       "strict_sandwich_violations": strong_total, "worst_rel_gap": worst_gap},
                      {"gap": gap_tol, "band": "10*sqrt(gap_tol)*osc(g)"})


def check_stacked_oracle(params: dict, seed: int, dump_dir=None) -> CheckReport:
    ctx = _Ctx("stacked_oracle", seed, dump_dir)
    n_inst = int(params.get("instances", 10))
    n_levels = int(params.get("levels", 256))
    shapes = [tuple(sh) for sh in params.get("shapes", [[4, 4], [3, 4], [2, 3], [1, 2], [3, 3]])]
    rng = np.random.default_rng(seed)
    worst = -math.inf
    errs = []
    for i in range(n_inst):
        shape = shapes[i % len(shapes)]
        order = 8 if i % 2 else 4
        s = crofton_weights(Anisotropy.euclidean(), order)
        g = ScalarField(rng.random(shape))
        lam = float(rng.choice([0.1, 0.3, 1.0]))
        u, _ = solve(RofProblem(g, lam, stencil=s), tol=1e-11)
        uo = stacked_rof_oracle(g, lam, s, n_levels)
        bound = g.oscillation() / n_levels + 1e-4
        err = float(np.max(np.abs(u.values - uo.values)))
        errs.append(err)
        worst = max(worst, err - bound)
        if err > bound:
            ctx.keep(f"g{i}", g)
    return ctx.report("ROF minimizer equals the stack of enumerated level-set minimizers", worst <= 0,
                      {"instances": n_inst, "max_error": max(errs), "worst_margin": worst},
                      {"bound": "range/levels + 1e-4", "levels": n_levels})


def _translation_slack(u: np.ndarray, delta: float, polar: Anisotropy, k: float, eps: float, radius: int) -> float:
    worst = -math.inf
    h, w = u.shape
    for dy in range(-radius, radius + 1):
        for dx in range(-radius, radius + 1):
            if dx == 0 and dy == 0:
                continue
            r0, r1 = max(0, -dy), h - max(0, dy)
            c0, c1 = max(0, -dx), w - max(0, dx)
            diff = u[r0 + dy:r1 + dy, c0 + dx:c1 + dx] - u[r0:r1, c0:c1]
            bound = k * (eps + float(polar.eval(np.array([dx * delta, dy * delta]))))
            worst = max(worst, float(diff.max()) - bound)
    return worst


def check_comparison(params: dict, seed: int, dump_dir=None) -> CheckReport:
    ctx = _Ctx("comparison", seed, dump_dir)
    n_pairs = int(params.get("pairs", 50))
    size = int(params.get("size", 8))
    gap_tol = float(params.get("gap_tol", 1e-9))
    order_tol = float(params.get("order_tol", 1e-6))
    trans_tol = float(params.get("translation_tol", 1e-4))
    eps = float(params.get("eps", 0.0))
    radius = int(params.get("radius", 3))
    a = _anisotropy(params.get("anisotropy", {"kind": "euclidean"}))
    s = crofton_weights(a, int(params.get("order", 8)))
    pol = a.polar()
    rng = np.random.default_rng(seed)
    order_viol = contraction = shift = 0.0
    trans = -math.inf
    for i in range(n_pairs):
        g = ScalarField(rng.random((size, size)))
        h = g.with_values(g.values + rng.random((size, size)) * float(rng.choice([0.0, 0.1, 0.5])))
        lam = float(rng.choice([0.1, 0.5, 2.0]))
        ug, _ = solve(RofProblem(g, lam, stencil=s), tol=gap_tol)
        uh, _ = solve(RofProblem(h, lam, stencil=s), tol=gap_tol)
        o = float(np.max(ug.values - uh.values))
        c = float(np.max(np.abs(ug.values - uh.values)) - np.max(np.abs(g.values - h.values)))
        order_viol = max(order_viol, o)
        contraction = max(contraction, c)
        if o > order_tol or c > order_tol:
            ctx.keep(f"g{i}", g)
            ctx.keep(f"h{i}", h)
        if i < 5:
            cst = float(rng.normal())
            us, _ = solve(RofProblem(g.with_values(g.values + cst), lam, stencil=s), tol=gap_tol)
            shift = max(shift, float(np.max(np.abs(us.values - ug.values - cst))))
            kg = lipschitz_constant(g.values, g.active, g.delta, pol)
            trans = max(trans, _translation_slack(ug.values, g.delta, pol, kg, eps, radius))

    # Dirichlet traces: raising the trace never shrinks a maximal minimizer
    dirichlet_ok = True
    n_dir = int(params.get("dirichlet_pairs", 5))
    for i in range(n_dir):
        n = 6
        base = rng.integers(0, 4, (n, n)) / 3.0
        lo = fx.trace_field(n, base)
        hi = fx.trace_field(n, np.minimum(base + rng.integers(0, 2, (n, n)) / 3.0, 1.0))
        levels = np.array([1 / 6, 1 / 2, 5 / 6])
        rl = dirichlet_decomposition(lo, s, levels)
        rh = dirichlet_decomposition(hi, s, levels)
        nested = all(a_ <= b_ for a_, b_ in zip(rl.maximal, rh.maximal))
        ordered = bool(np.all(rl.u.values[lo.active] <= rh.u.values[hi.active]))
        if not (nested and ordered):
            dirichlet_ok = False
            ctx.keep(f"trace_lo{i}", lo)
            ctx.keep(f"trace_hi{i}", hi)
    ok = (order_viol <= order_tol and contraction <= order_tol and shift <= order_tol
          and trans <= trans_tol and dirichlet_ok)
    return ctx.report("ordered data give ordered minimizers; the solution map is a max-norm contraction", ok,
                      {"pairs": n_pairs, "max_order_violation": order_viol,
                       "max_contraction_excess": contraction, "max_shift_error": shift,
                       "translation_slack": trans, "dirichlet_ordered": dirichlet_ok},
                      {"order": order_tol, "translation": trans_tol, "eps": eps, "gap": gap_tol})


# -- regularity ----------------------------------------------------------------


def _modulus_fixture(name: str, n: int, polar: Anisotropy, seed: int) -> ScalarField:
    d = 1.0 / n
    if name == "affine":
        return fx.affine_field(n, (1.0, 0.5), d)
    if name == "cone":
        return fx.cone_field(n, polar, clamp=0.3, delta=d)
    if name == "smooth":
        return ScalarField(fx.smooth_field(n, seed).values * 0.5, d)
    if name == "constant":
        return ScalarField(np.full((n, n), 0.5), d)
    raise ValueError(f"unknown modulus fixture {name!r}")


def check_modulus(params: dict, seed: int, dump_dir=None) -> CheckReport:
    ctx = _Ctx("modulus", seed, dump_dir)
    a = _anisotropy(params.get("anisotropy", {"kind": "euclidean"}))
    regularizer = params.get("regularizer", "cell")
    fixture = params.get("fixture", "affine")
    lam = float(params.get("lam", 0.01))
    sizes = [int(n) for n in params.get("sizes", [32, 64])]
    tol = float(params.get("tol", 1e-2))
    gap_tol = float(params.get("gap_tol", 1e-7))
    order = int(params.get("order", 16))
    report_only = bool(params.get("report_only", False))
    pol = a.polar()
    ratios, excess, iters = [], [], []
    rectangular = True
    for n in sizes:
        g = _modulus_fixture(fixture, n, pol, seed)
        rectangular &= bool(np.all(g.mask != OUTSIDE))
        if regularizer == "cell":
            prob = RofProblem(g, lam, anisotropy=a)
        else:
            prob = RofProblem(g, lam, stencil=crofton_weights(a, order, g.delta))
        u, rep = solve(prob, tol=gap_tol)
        iters.append(rep.iterations)
        kg = lipschitz_constant(g.values, g.active, g.delta, pol)
        ku = lipschitz_constant(u.values, u.active, u.delta, pol)
        r = ku / kg if kg > 0 else (0.0 if ku == 0 else math.inf)
        ratios.append(r)
        excess.append(max(0.0, r - 1.0))
        ctx.keep(f"u{n}", u)
    ok = ratios[0] <= 1.0 + tol and all(excess[j + 1] <= excess[j] for j in range(len(excess) - 1))
    if report_only or not rectangular:
        ok = None
    return ctx.report("the minimizer is no steeper than the data, measured with the polar norm", ok,
                      {"anisotropy": a.to_descriptor(), "regularizer": regularizer, "fixture": fixture,
                       "sizes": sizes, "ratios": ratios, "excess": excess, "iterations": iters},
                      {"ratio": 1.0 + tol, "refinement": "excess over 1 does not increase", "gap": gap_tol})


def _jump_fixture(name: str, n: int) -> ScalarField:
    return {"two_region": fx.two_region_image, "step": fx.step_image,
            "checkerboard": fx.checkerboard, "constant": fx.constant_image}[name](n)


def check_jump_inclusion(params: dict, seed: int, dump_dir=None) -> CheckReport:
    ctx = _Ctx("jump_inclusion", seed, dump_dir)
    names = params.get("fixtures", ["two_region", "step", "checkerboard"])
    n = int(params.get("size", 16))
    lam = float(params.get("lam", 1.0))
    theta = float(params.get("theta", 0.05))
    r = int(params.get("radius", 1))
    s = crofton_weights(_anisotropy(params.get("anisotropy", {"kind": "euclidean"})), int(params.get("order", 8)))
    per_fixture = {}
    ok = True
    for name in names:
        g = _jump_fixture(name, n)
        u, _ = solve(RofProblem(g, lam, stencil=s), tol=float(params.get("gap_tol", 1e-9)))
        near = fx.jump_pairs(g, [off for off, _ in s])
        if r > 0:
            pad = np.pad(near, r)
            near = np.zeros_like(near)
            for dy in range(-r, r + 1):
                for dx in range(-r, r + 1):
                    near |= pad[r + dy:r + dy + n, r + dx:r + dx + n]
        thresh = theta * max(g.oscillation(), 1e-300)
        bad = 0
        jumps = 0
        for (dx, dy), _ in s:
            h, w = g.shape
            r0, r1 = max(0, -dy), h - max(0, dy)
            c0, c1 = max(0, -dx), w - max(0, dx)
            j = np.abs(u.values[r0 + dy:r1 + dy, c0 + dx:c1 + dx] - u.values[r0:r1, c0:c1]) > thresh
            jumps += int(j.sum())
            inside = near[r0:r1, c0:c1] & near[r0 + dy:r1 + dy, c0 + dx:c1 + dx]
            bad += int(np.sum(j & ~inside))
        per_fixture[name] = {"u_jumps": jumps, "outside_g_jumps": bad}
        if bad:
            ok = False
            ctx.keep(name, g)
            ctx.keep(f"{name}_u", u)
    return ctx.report("jumps of the minimizer sit on jumps of the data", ok, per_fixture,
                      {"theta": theta, "radius": r, "lam": lam})


def check_dirichlet(params: dict, seed: int, dump_dir=None) -> CheckReport:
    ctx = _Ctx("dirichlet", seed, dump_dir)
    n = int(params.get("size", 8))
    ratio_tol = float(params.get("ratio_tol", 1.1))
    a = _anisotropy(params.get("anisotropy", {"kind": "euclidean"}))
    s = crofton_weights(a, int(params.get("order", 8)))
    pol = a.polar()
    rng = np.random.default_rng(seed)
    metrics = {}

    const = fx.trace_field(n, np.full((n, n), 0.25))
    rc = dirichlet_decomposition(const, s, [0.0, 0.5])
    const_ok = bool(np.all(rc.u.values[const.active] == 0.25)) and rc.nested
    metrics["constant"] = {"exact": const_ok}

    split = fx.split_trace(n)
    rs = dirichlet_decomposition(split, s)
    seeds = make_seeds(split.shape, (split.mask == 1) & (split.values > 0.5),
                       (split.mask == 1) & ~(split.values > 0.5))
    _, ref_min, ref_max = reference_min_cut_sets(split, 0.5, s, seeds, 0.0)
    half = BinarySet.superlevel(rs.u, 0.5)
    cols = rs.u.values[1:-1, :]
    monotone = bool(np.all(np.diff(cols, axis=1) >= 0))
    split_ok = rs.nested and half == ref_max and monotone
    metrics["split"] = {"nested": rs.nested, "matches_reference_cut": half == ref_max,
                        "reference_unique": ref_min == ref_max, "monotone_rows": monotone}

    aff = fx.affine_trace(n, tuple(params.get("slope", [1.0, 0.0])))
    ra = dirichlet_decomposition(aff, s)
    ext = fx.affine_field(n, tuple(params.get("slope", [1.0, 0.0])))
    ku = lipschitz_constant(ra.u.values, aff.active, 1.0, pol)
    ke = lipschitz_constant(ext.values, ext.active, 1.0, pol)
    ratio = ku / ke
    metrics["affine"] = {"nested": ra.nested, "lipschitz_ratio": ratio}

    random_nested = True
    for i in range(int(params.get("random_traces", 3))):
        tr = fx.trace_field(n, rng.integers(0, 5, (n, n)) / 4.0)
        rr = dirichlet_decomposition(tr, s)
        random_nested &= rr.nested
        if not rr.nested:
            ctx.keep(f"trace{i}", tr)
    metrics["random_nested"] = random_nested
    ok = const_ok and split_ok and ra.nested and ratio <= ratio_tol and random_nested
    if not ok:
        ctx.keep("split_u", rs.u)
        ctx.keep("affine_u", ra.u)
    return ctx.report("level-by-level Dirichlet cuts nest and reproduce the trace", ok, metrics,
                      {"lipschitz_ratio": ratio_tol, "nesting": "exact"})


# -- perimeter consistency ----------------------------------------------------------


def _chord(n: int, nu: np.ndarray) -> float:
    """Length of the line through the centre of [0, n]^2 with normal nu."""
    c = np.array([n / 2.0, n / 2.0])
    d = np.array([-nu[1], nu[0]])
    ts = []
    for i in range(2):
        if abs(d[i]) > 1e-15:
            ts += [(b - c[i]) / d[i] for b in (0.0, float(n))]
    ts = [t for t in ts if np.all(c + t * d >= -1e-9) and np.all(c + t * d <= n + 1e-9)]
    return max(ts) - min(ts)


def check_crofton_halfspace(params: dict, seed: int, dump_dir=None) -> CheckReport:
    ctx = _Ctx("crofton_halfspace", seed, dump_dir)
    n = int(params.get("size", 256))
    order = int(params.get("order", 16))
    n_normals = int(params.get("normals", 32))
    tol = float(params.get("tol", 0.05))
    descs = params.get("anisotropies", [{"kind": "euclidean"},
                                        {"kind": "weighted_l2", "matrix": [[4.0, 0.0], [0.0, 1.0]]}])
    yy, xx = np.mgrid[0:n, 0:n] + 0.5
    mask = full_mask(n, n)
    metrics = {}
    ok = True
    for desc in descs:
        a = _anisotropy(desc)
        s = crofton_weights(a, order, 1.0)
        errs = []
        for j in range(n_normals):
            th = math.pi * j / n_normals
            nu = np.array([math.cos(th), math.sin(th)])
            e = BinarySet((xx - n / 2) * nu[0] + (yy - n / 2) * nu[1] > 0, 1.0, mask)
            errs.append(pairwise_perimeter(e, s) / (float(a.eval(nu)) * _chord(n, nu)) - 1.0)
        worst = float(np.max(np.abs(errs)))
        metrics[a.kind if a.kind != "weighted_l2" else "weighted_l2"] = {"max_rel_error": worst,
                                                                        "errors": errs}
        ok = ok and worst <= tol
    return ctx.report("cut cost of digitized half-planes approximates the anisotropic perimeter", ok, metrics,
                      {"relative": tol, "size": n, "order": order})


# -- diagnostics ---------------------------------------------------------------------


def _edge_cells(e: np.ndarray, act: np.ndarray) -> np.ndarray:
    """Cells of e with a 4-neighbour (inside the domain) not in e."""
    out = np.zeros_like(e)
    for dx, dy in ((1, 0), (-1, 0), (0, 1), (0, -1)):
        nb = np.zeros_like(e)
        h, w = e.shape
        r0, r1 = max(0, -dy), h - max(0, dy)
        c0, c1 = max(0, -dx), w - max(0, dx)
        nb[r0:r1, c0:c1] = ~e[r0 + dy:r1 + dy, c0 + dx:c1 + dx] & act[r0 + dy:r1 + dy, c0 + dx:c1 + dx]
        out |= e & nb
    return out


def density_ratios(e: np.ndarray, act: np.ndarray, radius: int) -> tuple[float, float]:
    """Min/max of |B_r(x) ∩ E| / |B_r(x) ∩ domain| over edge cells x of E."""
    cells = np.argwhere(_edge_cells(e, act))
    if len(cells) == 0:
        return math.nan, math.nan
    yy, xx = np.mgrid[-radius:radius + 1, -radius:radius + 1]
    ball = yy ** 2 + xx ** 2 <= radius ** 2
    pe = np.pad(e & act, radius)
    pa = np.pad(act, radius)
    ratios = []
    for r, c in cells:
        win = slice(r, r + 2 * radius + 1), slice(c, c + 2 * radius + 1)
        inside = np.sum(pe[win] & ball)
        total = np.sum(pa[win] & ball)
        ratios.append(inside / total)
    return float(min(ratios)), float(max(ratios))


def separation(e: np.ndarray, f: np.ndarray, act: np.ndarray) -> float:
    """Chebyshev distance between the edge cells of two sets (inf if either is empty)."""
    a = np.argwhere(_edge_cells(e, act))
    b = np.argwhere(_edge_cells(f, act))
    if len(a) == 0 or len(b) == 0:
        return math.inf
    d = np.abs(a[:, None, :] - b[None, :, :]).max(axis=2)
    return float(d.min())


def check_density_separation(params: dict, seed: int, dump_dir=None) -> CheckReport:
    ctx = _Ctx("density_separation", seed, dump_dir)
    n = int(params.get("size", 32))
    lam = float(params.get("lam", 0.5))
    levels = [float(t) for t in params.get("levels", [-0.4, 0.0, 0.4])]
    radii = [int(r) for r in params.get("radii", [1, 2, 3])]
    s = crofton_weights(Anisotropy.euclidean(), 8)
    g = fx.smooth_field(n, seed)
    u, _ = solve(RofProblem(g, lam, stencil=s), tol=float(params.get("gap_tol", 1e-8)))
    act = u.active
    dens = {}
    for t in levels:
        e = act & (u.values > t)
        dens[f"{t:g}"] = {f"r{r}": list(density_ratios(e, act, r)) for r in radii}
    sep = {}
    for i in range(len(levels)):
        for j in range(i + 1, len(levels)):
            e = act & (u.values > levels[i])
            f = act & (u.values > levels[j])
            sep[f"{levels[i]:g}/{levels[j]:g}"] = separation(e, f, act)
    return ctx.report("level-set density bounds and boundary separation (measured only)", None,
                      {"density": dens, "separation": sep}, {})


CHECKS = {
    "anisotropy_identities": check_anisotropy_identities,
    "discrete_calculus": check_discrete_calculus,
    "curvature_exactness": check_curvature_exactness,
    "maxflow_reference": check_maxflow_reference,
    "levelset_equivalence": check_levelset_equivalence,
    "stacked_oracle": check_stacked_oracle,
    "comparison": check_comparison,
    "modulus": check_modulus,
    "jump_inclusion": check_jump_inclusion,
    "dirichlet": check_dirichlet,
    "crofton_halfspace": check_crofton_halfspace,
    "density_separation": check_density_separation,
}
