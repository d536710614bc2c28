"""Manifest-driven runner for the property checks.

A manifest is a JSON list of ``{"check", "params", "seed", "tier"}`` objects.
Reports are written as JSON lines (one per entry, manifest order) plus a CSV
summary; neither contains timings, so equal seeds give equal bytes.
"""

from __future__ import annotations

import csv
import io
import json
import os
from concurrent.futures import ProcessPoolExecutor
from importlib import resources

from ..fieldio import atomic_write
from .checks import CHECKS, FAIL, CheckReport

TIERS = ("fast", "slow")


class ManifestError(ValueError):
    pass


def default_manifest_path() -> str:
    return str(resources.files("tvlevel").joinpath("data", "manifest.json"))


def parse_manifest(entries) -> list[dict]:
    if not isinstance(entries, list):
        raise ManifestError("manifest must be a JSON list")
    out = []
    for k, e in enumerate(entries):
        if not isinstance(e, dict):
            raise ManifestError(f"entry {k} is not an object")
        unknown = set(e) - {"check", "params", "seed", "tier"}
        if unknown:
            raise ManifestError(f"entry {k}: unknown keys {sorted(unknown)}")
        if e.get("check") not in CHECKS:
            raise ManifestError(f"entry {k}: unknown check {e.get('check')!r}")
        params = e.get("params", {})
        if not isinstance(params, dict):
            raise ManifestError(f"entry {k}: params must be an object")
        seed = e.get("seed", 0)
        if not isinstance(seed, int) or isinstance(seed, bool):
            raise ManifestError(f"entry {k}: seed must be an integer")
        tier = e.get("tier", "fast")
        if tier not in TIERS:
            raise ManifestError(f"entry {k}: tier must be one of {TIERS}")
        out.append({"check": e["check"], "params": params, "seed": seed, "tier": tier})
    return out


def load_manifest(path) -> list[dict]:
    try:
        with open(path, encoding="utf-8") as fh:
            data = json.load(fh)
    except OSError as exc:
        raise ManifestError(f"cannot read manifest {path}: {exc.strerror or exc}") from exc
    except json.JSONDecodeError as exc:
        raise ManifestError(f"manifest {path} is not valid JSON: {exc}") from exc
    return parse_manifest(data)


def select(entries: list[dict], tier: str) -> list[dict]:
    if tier == "all":
        return list(entries)
    if tier not in TIERS:
        raise ManifestError(f"tier must be one of {TIERS + ('all',)}")
    return [e for e in entries if e["tier"] == tier]


def run_entry(entry: dict, dump_dir=None) -> CheckReport:
    fn = CHECKS[entry["check"]]
    try:
        return fn(entry["params"], entry["seed"], dump_dir)
    except Exception as exc:  # a crashing check is a failed check
        return CheckReport(entry["check"], "check raised an exception", FAIL,
                           {"error": f"{type(exc).__name__}: {exc}"}, {}, entry["seed"], [])


def _run_packed(args) -> dict:
    entry, dump_dir = args
    return run_entry(entry, dump_dir).to_dict()


def run_suite(entries: list[dict], jobs: int = 1, dump_dir=None) -> list[CheckReport]:
    """Run every entry; results keep manifest order whatever ``jobs`` is."""
    if jobs <= 1 or len(entries) <= 1:
        return [run_entry(e, dump_dir) for e in entries]
    with ProcessPoolExecutor(max_workers=jobs) as pool:
        dicts = list(pool.map(_run_packed, [(e, dump_dir) for e in entries]))
    return [CheckReport(**d) for d in dicts]


def reports_jsonl(reports) -> str:
    return "".join(r.to_json() + "\n" for r in reports)


def summary_rows(reports) -> list[list[str]]:
    rows = [["check", "seed", "status", "failed_metrics"]]
    for r in reports:
        rows.append([r.name, str(r.seed), r.status, "error" if "error" in r.metrics else ""])
    return rows


def summary_csv(reports) -> str:
    buf = io.StringIO()
    csv.writer(buf, lineterminator="\n").writerows(summary_rows(reports))
    return buf.getvalue()


def summary_table(reports) -> str:
    rows = summary_rows(reports)[1:]
    if not rows:
        return "(no checks)\n"
    width = max(len(r[0]) for r in rows)
    lines = [f"{'check':<{width}}  {'seed':>6}  status"]
    lines += [f"{name:<{width}}  {seed:>6}  {status}" for name, seed, status, _ in rows]
    n_fail = sum(r[2] == FAIL for r in rows)
    lines.append(f"{len(rows)} checks, {n_fail} failed")
    return "\n".join(lines) + "\n"


def write_outputs(reports, out_dir) -> tuple[str, str]:
    os.makedirs(out_dir, exist_ok=True)
    jpath = os.path.join(str(out_dir), "reports.jsonl")
    cpath = os.path.join(str(out_dir), "summary.csv")
    atomic_write(jpath, reports_jsonl(reports).encode())
    atomic_write(cpath, summary_csv(reports).encode())
    return jpath, cpath
