"""Command-line front end: ``tvlevel {denoise,dirichlet,levelset,weights,verify}``.

Settings come from defaults, then ``--config file.json``, then the
``TVLEVEL_SEED`` environment variable, then explicit flags (last wins).
Exit codes: 0 ok, 1 usage or I/O error, 2 solver did not converge,
3 verification failures.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from typing import Literal

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator

from . import fieldio
from .anisotropy import Anisotropy, AnisotropyError
from .geom import CurvatureProblem, GeomError, dirichlet_decomposition, make_seeds, solve_curvature
from .grid import BOUNDARY, GridError, ScalarField, crofton_weights, rectangle_mask
from .maxflow import CapacityOverflow
from .rof import RofError, RofProblem, solve
from .verify import suite

EXIT_OK, EXIT_USAGE, EXIT_NONCONVERGED, EXIT_FAILED = 0, 1, 2, 3


class Config(BaseModel):
    model_config = ConfigDict(extra="forbid")

    anisotropy: dict = Field(default_factory=lambda: {"kind": "euclidean"})
    regularizer: Literal["pairwise", "cell"] = "pairwise"
    cell_scheme: Literal["forward", "symmetric"] = "symmetric"
    order: Literal[4, 8, 16] = 8
    lam: float = Field(1.0, gt=0)
    f_kind: Literal["identity", "huber"] = "identity"
    eps: float = Field(0.1, gt=0)
    tol: float = Field(1e-6, gt=0)
    max_iter: int = Field(200000, gt=0)
    boundary: Literal["neumann", "dirichlet"] = "neumann"
    t: float | None = None
    scale: float = Field(1.0, ge=0)
    levels: list[float] | None = None
    seed: int = 0
    delta: float = Field(1.0, gt=0)
    lo: float = 0.0
    hi: float = 1.0
    input: str | None = None
    mask: str | None = None
    seeds_in: str | None = None
    seeds_out: str | None = None
    out: str = "out"
    write_sets: bool = False
    weight_method: Literal["interpolate", "minimax", "sector"] | None = None
    manifest: str | None = None
    tier: Literal["fast", "slow", "all"] = "fast"
    jobs: int = Field(1, ge=1)
    dump_dir: str | None = None

    @field_validator("anisotropy")
    @classmethod
    def _known_anisotropy(cls, v: dict) -> dict:
        Anisotropy.from_descriptor(v)
        return v

    def norm(self) -> Anisotropy:
        return Anisotropy.from_descriptor(self.anisotropy)


class UsageError(Exception):
    pass


# -- argument parsing -----------------------------------------------------------


def _common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="JSON file with settings; flags override it")
    p.add_argument("--seed", type=int)
    p.add_argument("--dry-run", action="store_true", help="print the resolved settings and exit")


def _json_arg(text: str):
    try:
        return json.loads(text)
    except json.JSONDecodeError as exc:
        raise argparse.ArgumentTypeError(f"not valid JSON: {exc}") from exc


def _field_args(p: argparse.ArgumentParser) -> None:
    p.add_argument("--input", "-i", help="PGM or CSV field")
    p.add_argument("--mask", help="mask PGM (0 outside, 128 boundary, 255 interior)")
    p.add_argument("--lo", type=float, help="value mapped to PGM black")
    p.add_argument("--hi", type=float, help="value mapped to PGM white")
    p.add_argument("--delta", type=float, help="grid spacing")
    p.add_argument("--out", "-o", help="output directory")


def _norm_args(p: argparse.ArgumentParser) -> None:
    p.add_argument("--anisotropy", type=_json_arg, help='JSON descriptor, e.g. \'{"kind": "lp", "p": 3}\'')
    p.add_argument("--order", type=int, choices=(4, 8, 16))
    p.add_argument("--weight-method", choices=("interpolate", "minimax", "sector"))


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="tvlevel", description="Anisotropic TV minimization by level sets.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("denoise", help="solve the ROF problem")
    _common(p)
    _field_args(p)
    _norm_args(p)
    p.add_argument("--lam", type=float)
    p.add_argument("--regularizer", choices=("pairwise", "cell"))
    p.add_argument("--cell-scheme", choices=("forward", "symmetric"))
    p.add_argument("--f-kind", choices=("identity", "huber"))
    p.add_argument("--eps", type=float, help="Huber parameter")
    p.add_argument("--tol", type=float)
    p.add_argument("--max-iter", type=int)
    p.add_argument("--boundary", choices=("neumann", "dirichlet"))

    p = sub.add_parser("dirichlet", help="TV minimization with a boundary trace, level by level")
    _common(p)
    _field_args(p)
    _norm_args(p)
    p.add_argument("--levels", type=float, nargs="+")
    p.add_argument("--write-sets", action="store_true", default=None, help="write every level set as PBM")

    p = sub.add_parser("levelset", help="exact minimal and maximal sets for one level")
    _common(p)
    _field_args(p)
    _norm_args(p)
    p.add_argument("--t", type=float, help="level")
    p.add_argument("--scale", type=float, help="volume weight (1/lambda for ROF)")
    p.add_argument("--seeds-in", help="PBM of cells forced into the set")
    p.add_argument("--seeds-out", help="PBM of cells forced out of the set")

    p = sub.add_parser("weights", help="print the pairwise stencil as CSV")
    _common(p)
    _norm_args(p)
    p.add_argument("--delta", type=float)

    p = sub.add_parser("verify", help="run the property-check suite")
    _common(p)
    p.add_argument("--manifest")
    p.add_argument("--tier", choices=("fast", "slow", "all"))
    p.add_argument("--jobs", type=int)
    p.add_argument("--out", "-o", help="directory for reports.jsonl and summary.csv")
    p.add_argument("--dump-dir", help="where failing checks write their fields")
    return parser


_NOT_SETTINGS = {"command", "config", "dry_run"}


def resolve_config(args: argparse.Namespace, environ=None) -> Config:
    environ = os.environ if environ is None else environ
    merged: dict = {}
    if args.config:
        try:
            with open(args.config, encoding="utf-8") as fh:
                merged = json.load(fh)
        except OSError as exc:
            raise UsageError(f"cannot read config {args.config}: {exc.strerror or exc}") from exc
        except json.JSONDecodeError as exc:
            raise UsageError(f"config {args.config} is not valid JSON: {exc}") from exc
        if not isinstance(merged, dict):
            raise UsageError("config file must hold a JSON object")
    if "TVLEVEL_SEED" in environ:
        try:
            merged["seed"] = int(environ["TVLEVEL_SEED"])
        except ValueError as exc:
            raise UsageError("TVLEVEL_SEED must be an integer") from exc
    for key, value in vars(args).items():
        if key not in _NOT_SETTINGS and value is not None:
            merged[key] = value
    try:
        return Config(**merged)
    except (ValidationError, AnisotropyError) as exc:
        raise UsageError(f"invalid settings: {exc}") from exc


# -- I/O helpers -------------------------------------------------------------------


def _load_field(cfg: Config, mask=None) -> tuple[ScalarField, float, float]:
    if not cfg.input:
        raise UsageError("--input is required")
    path = cfg.input
    if path.lower().endswith(".csv"):
        g, lo, hi = fieldio.read_csv(path, mask)
        if "delta" in cfg.model_fields_set:
            g = ScalarField(g.values, cfg.delta, g.mask)
        return g, lo, hi
    return fieldio.read_pgm(path, cfg.lo, cfg.hi, cfg.delta, mask), cfg.lo, cfg.hi


def _load_mask(cfg: Config):
    return fieldio.read_mask(cfg.mask) if cfg.mask else None


def _write_json(path: str, obj) -> None:
    fieldio.atomic_write(path, (json.dumps(obj, sort_keys=True, indent=1) + "\n").encode())


def _stencil(cfg: Config, delta: float):
    return crofton_weights(cfg.norm(), cfg.order, delta, cfg.weight_method)


def _write_field(cfg: Config, stem: str, u: ScalarField, lo: float, hi: float) -> list[str]:
    os.makedirs(cfg.out, exist_ok=True)
    pgm = os.path.join(cfg.out, stem + ".pgm")
    csvp = os.path.join(cfg.out, stem + ".csv")
    if hi > lo:
        fieldio.write_pgm(pgm, u, lo, hi)
    else:
        fieldio.write_pgm(pgm, u, lo, lo + 1.0)
    fieldio.write_csv(csvp, u, lo, hi)
    return [pgm, csvp]


# -- commands ----------------------------------------------------------------------


def cmd_denoise(cfg: Config) -> int:
    g, lo, hi = _load_field(cfg, _load_mask(cfg))
    kw = {"anisotropy": cfg.norm(), "cell_scheme": cfg.cell_scheme} if cfg.regularizer == "cell" \
        else {"stencil": _stencil(cfg, g.delta)}
    prob = RofProblem(g, cfg.lam, huber_eps=cfg.eps if cfg.f_kind == "huber" else None,
                      boundary=cfg.boundary, **kw)
    u, rep = solve(prob, tol=cfg.tol, max_iter=cfg.max_iter)
    files = _write_field(cfg, "u", u, lo, hi)
    meta = {"report": json.loads(rep.to_json()), "range": {"lo": lo, "hi": hi}, "files": files,
            "config": cfg.model_dump()}
    _write_json(os.path.join(cfg.out, "report.json"), meta)
    print(rep.to_json())
    if not rep.converged:
        print(f"tvlevel: no convergence after {rep.iterations} iterations (relative gap {rep.rel_gap:.3g})",
              file=sys.stderr)
        return EXIT_NONCONVERGED
    return EXIT_OK


def cmd_dirichlet(cfg: Config) -> int:
    mask = _load_mask(cfg)
    g, lo, hi = _load_field(cfg, mask)
    if mask is None:
        g = ScalarField(g.values, g.delta, rectangle_mask(*g.shape))
    if not np.any(g.mask == BOUNDARY):
        raise UsageError("the mask has no boundary cells to carry the trace")
    res = dirichlet_decomposition(g, _stencil(cfg, g.delta), cfg.levels)
    files = _write_field(cfg, "u", res.u, lo, hi)
    if cfg.write_sets:
        for j, (emin, emax) in enumerate(zip(res.minimal, res.maximal)):
            for tag, e in (("min", emin), ("max", emax)):
                path = os.path.join(cfg.out, f"level{j:03d}_{tag}.pbm")
                fieldio.write_pbm(path, e)
                files.append(path)
    meta = {"levels": res.levels.tolist(), "values": res.values.tolist(), "nested": res.nested,
            "range": {"lo": lo, "hi": hi}, "files": files, "config": cfg.model_dump()}
    _write_json(os.path.join(cfg.out, "dirichlet.json"), meta)
    print(json.dumps({"levels": len(res.levels), "nested": res.nested}, sort_keys=True))
    return EXIT_OK


def cmd_levelset(cfg: Config) -> int:
    mask = _load_mask(cfg)
    g, _, _ = _load_field(cfg, mask)
    if cfg.t is None:
        raise UsageError("--t is required")
    fin = fieldio.read_pbm(cfg.seeds_in).bits if cfg.seeds_in else None
    fout = fieldio.read_pbm(cfg.seeds_out).bits if cfg.seeds_out else None
    for name, arr in (("seeds-in", fin), ("seeds-out", fout)):
        if arr is not None and arr.shape != g.shape:
            raise UsageError(f"{name} size does not match the field")
    seeds = make_seeds(g.shape, fin, fout)
    res = solve_curvature(CurvatureProblem(g, cfg.t, _stencil(cfg, g.delta), cfg.scale, seeds))
    os.makedirs(cfg.out, exist_ok=True)
    pmin = os.path.join(cfg.out, "minimal.pbm")
    pmax = os.path.join(cfg.out, "maximal.pbm")
    fieldio.write_pbm(pmin, res.minimal)
    fieldio.write_pbm(pmax, res.maximal)
    meta = {"energy": res.energy, "stats": res.stats, "minimal_cells": res.minimal.count(),
            "maximal_cells": res.maximal.count(), "files": [pmin, pmax], "config": cfg.model_dump()}
    _write_json(os.path.join(cfg.out, "levelset.json"), meta)
    print(json.dumps({"energy": res.energy, "certificate": res.stats["certificate"]}, sort_keys=True))
    return EXIT_OK


def cmd_weights(cfg: Config) -> int:
    s = _stencil(cfg, cfg.delta)
    print("dx,dy,weight")
    for (dx, dy), w in s:
        print(f"{dx},{dy},{w!r}")
    return EXIT_OK


def cmd_verify(cfg: Config) -> int:
    path = cfg.manifest or suite.default_manifest_path()
    entries = suite.select(suite.load_manifest(path), cfg.tier)
    if "seed" in cfg.model_fields_set:
        entries = [dict(e, seed=cfg.seed) for e in entries]
    reports = suite.run_suite(entries, cfg.jobs, cfg.dump_dir)
    suite.write_outputs(reports, cfg.out)
    sys.stdout.write(suite.summary_table(reports))
    return EXIT_FAILED if any(r.failed for r in reports) else EXIT_OK


COMMANDS = {"denoise": cmd_denoise, "dirichlet": cmd_dirichlet, "levelset": cmd_levelset,
            "weights": cmd_weights, "verify": cmd_verify}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code == 0 else EXIT_USAGE
    try:
        cfg = resolve_config(args)
        if args.dry_run:
            print(json.dumps({"command": args.command, **cfg.model_dump()}, sort_keys=True, indent=1))
            return EXIT_OK
        return COMMANDS[args.command](cfg)
    except (UsageError, suite.ManifestError, fieldio.FieldIOError, GridError, GeomError, RofError,
            AnisotropyError, CapacityOverflow, OSError) as exc:
        print(f"tvlevel: error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
