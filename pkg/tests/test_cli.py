import json
import os
import subprocess
import sys

import numpy as np
import pytest

from tvlevel import fieldio
from tvlevel.cli import main
from tvlevel.anisotropy import Anisotropy
from tvlevel.grid import INTERIOR, BinarySet, ScalarField, crofton_weights, pairwise_tv

GOLDEN = os.path.join(os.path.dirname(__file__), "golden")


def _pgm(path, values):
    fieldio.write_pgm(path, ScalarField(np.asarray(values, float)), 0.0, 1.0)
    return str(path)


def _csv(path, values):
    fieldio.write_csv(path, ScalarField(np.asarray(values, float)), 0.0, 1.0)
    return str(path)


# -- denoise ----------------------------------------------------------------------


def test_denoise_constant_is_identity(tmp_path, capsys):
    src = _pgm(tmp_path / "c.pgm", np.full((8, 8), 128 / 255))
    out = tmp_path / "o"
    assert main(["denoise", "-i", src, "-o", str(out), "--lam", "5", "--tol", "1e-9"]) == 0
    assert (out / "u.pgm").read_bytes() == open(src, "rb").read()
    rep = json.loads((out / "report.json").read_text())
    assert rep["report"]["converged"] and "wall_time" not in rep["report"]
    assert json.loads(capsys.readouterr().out)["converged"]


def test_denoise_step_reduces_tv(tmp_path):
    v = np.zeros((10, 10))
    v[:, 5:] = 1.0
    src = _csv(tmp_path / "step.csv", v)
    out = tmp_path / "o"
    assert main(["denoise", "-i", src, "-o", str(out), "--lam", "20", "--tol", "1e-8"]) == 0
    u, _, _ = fieldio.read_csv(out / "u.csv")
    s = crofton_weights(Anisotropy.euclidean(), 8)
    assert pairwise_tv(u, s) < 0.5 * pairwise_tv(ScalarField(v), s)


def test_denoise_cell_regularizer_and_huber(tmp_path):
    src = _csv(tmp_path / "r.csv", np.random.default_rng(1).random((6, 6)))
    out = tmp_path / "o"
    args = ["denoise", "-i", src, "-o", str(out), "--regularizer", "cell", "--anisotropy",
            '{"kind": "lp", "p": 3}', "--f-kind", "huber", "--eps", "0.01"]
    assert main(args) == 0


def test_denoise_nonconvergence_exit_code(tmp_path, capsys):
    src = _csv(tmp_path / "r.csv", np.random.default_rng(1).random((6, 6)))
    assert main(["denoise", "-i", src, "-o", str(tmp_path / "o"), "--tol", "1e-15", "--max-iter", "5"]) == 2
    assert "no convergence" in capsys.readouterr().err


def test_outputs_are_byte_identical(tmp_path):
    src = _csv(tmp_path / "r.csv", np.random.default_rng(2).random((7, 7)))
    out = str(tmp_path / "o")
    blobs = []
    for _ in range(2):
        assert main(["denoise", "-i", src, "-o", out, "--lam", "0.5"]) == 0
        blobs.append([open(os.path.join(out, f), "rb").read() for f in ("u.pgm", "u.csv", "report.json")])
    assert blobs[0] == blobs[1]


# -- configuration & errors ------------------------------------------------------


@pytest.mark.parametrize("content", ['{"lam": -1}', '{"bogus": 1}', '[1, 2]', "{", '{"anisotropy": {"kind": "hex"}}'])
def test_malformed_config_exits_1(tmp_path, content, capsys):
    cfg = tmp_path / "c.json"
    cfg.write_text(content)
    src = _csv(tmp_path / "r.csv", np.zeros((3, 3)))
    assert main(["denoise", "--config", str(cfg), "-i", src, "-o", str(tmp_path / "o")]) == 1
    assert "tvlevel: error" in capsys.readouterr().err


def test_missing_input_and_bad_flag(tmp_path):
    assert main(["denoise", "-o", str(tmp_path)]) == 1
    assert main(["denoise", "--no-such-flag"]) == 1
    assert main(["denoise", "-i", str(tmp_path / "missing.pgm"), "-o", str(tmp_path)]) == 1


def test_dry_run_precedence(tmp_path, capsys, monkeypatch):
    cfg = tmp_path / "c.json"
    cfg.write_text('{"lam": 2.0, "seed": 4, "order": 16}')
    monkeypatch.setenv("TVLEVEL_SEED", "9")
    assert main(["denoise", "--config", str(cfg), "--lam", "3", "--dry-run"]) == 0
    d = json.loads(capsys.readouterr().out)
    assert d["lam"] == 3.0 and d["seed"] == 9 and d["order"] == 16 and d["command"] == "denoise"
    assert main(["denoise", "--config", str(cfg), "--seed", "11", "--dry-run"]) == 0
    assert json.loads(capsys.readouterr().out)["seed"] == 11
    monkeypatch.setenv("TVLEVEL_SEED", "x")
    assert main(["denoise", "--dry-run"]) == 1


# -- dirichlet -------------------------------------------------------------------------


def test_dirichlet_constant_trace(tmp_path):
    src = _csv(tmp_path / "c.csv", np.full((6, 6), 0.4))
    out = tmp_path / "o"
    assert main(["dirichlet", "-i", src, "-o", str(out)]) == 0
    u, _, _ = fieldio.read_csv(out / "u.csv")
    np.testing.assert_allclose(u.values, 0.4)


def test_dirichlet_split_and_sets(tmp_path):
    v = np.zeros((8, 8))
    v[:, 4:] = 1.0
    src = _csv(tmp_path / "s.csv", v)
    out = tmp_path / "o"
    assert main(["dirichlet", "-i", src, "-o", str(out), "--levels", "0.5", "--write-sets"]) == 0
    u, _, _ = fieldio.read_csv(out / "u.csv")
    assert set(np.unique(u.values)) == {0.0, 1.0}
    meta = json.loads((out / "dirichlet.json").read_text())
    assert meta["nested"] and meta["levels"] == [0.5]
    assert (out / "level000_min.pbm").exists() and (out / "level000_max.pbm").exists()


def test_dirichlet_mask_without_boundary(tmp_path):
    mpath = tmp_path / "m.pgm"
    fieldio.write_mask(mpath, np.full((4, 4), INTERIOR, np.int8))
    src = _csv(tmp_path / "c.csv", np.zeros((4, 4)))
    assert main(["dirichlet", "-i", src, "--mask", str(mpath), "-o", str(tmp_path / "o")]) == 1


# -- levelset -----------------------------------------------------------------------------


def test_levelset_matches_golden(tmp_path):
    golden = json.load(open(os.path.join(GOLDEN, "levelset4.json")))
    out = tmp_path / "o"
    args = ["levelset", "-i", os.path.join(GOLDEN, "levelset4.csv"), "-o", str(out), "--t", str(golden["t"]),
            "--scale", str(golden["scale"]), "--order", str(golden["order"])]
    assert main(args) == 0
    for tag in ("minimal", "maximal"):
        assert (out / f"{tag}.pbm").read_bytes() == open(os.path.join(GOLDEN, f"levelset4_{tag}.pbm"), "rb").read()
    meta = json.loads((out / "levelset.json").read_text())
    assert meta["energy"] == pytest.approx(golden["energy"], abs=1e-9)
    assert meta["stats"]["certificate"]


def test_levelset_above_max_is_empty(tmp_path):
    src = _csv(tmp_path / "r.csv", np.random.default_rng(3).random((5, 5)))
    out = tmp_path / "o"
    assert main(["levelset", "-i", src, "-o", str(out), "--t", "2"]) == 0
    assert fieldio.read_pbm(out / "maximal.pbm").count() == 0


def test_levelset_seeds(tmp_path, capsys):
    src = _csv(tmp_path / "r.csv", np.zeros((4, 4)))
    a = np.zeros((4, 4), bool)
    a[1, 1] = True
    fieldio.write_pbm(tmp_path / "in.pbm", BinarySet(a))
    out = tmp_path / "o"
    assert main(["levelset", "-i", src, "-o", str(out), "--t", "0.5", "--seeds-in", str(tmp_path / "in.pbm")]) == 0
    assert fieldio.read_pbm(out / "minimal.pbm").bits[1, 1]
    fieldio.write_pbm(tmp_path / "both.pbm", BinarySet(a))
    assert main(["levelset", "-i", src, "-o", str(out), "--t", "0.5", "--seeds-in", str(tmp_path / "in.pbm"),
                 "--seeds-out", str(tmp_path / "both.pbm")]) == 1
    assert "row=1, col=1" in capsys.readouterr().err
    assert main(["levelset", "-i", src, "-o", str(out)]) == 1


# -- weights & verify ---------------------------------------------------------------------


def test_weights_csv(capsys):
    assert main(["weights", "--order", "4"]) == 0
    lines = capsys.readouterr().out.strip().splitlines()
    assert lines[0] == "dx,dy,weight" and len(lines) == 3
    assert all(float(r.split(",")[2]) > 0 for r in lines[1:])


def test_verify_empty_manifest(tmp_path, capsys):
    m = tmp_path / "m.json"
    m.write_text("[]")
    assert main(["verify", "--manifest", str(m), "--out", str(tmp_path / "o")]) == 0
    assert (tmp_path / "o" / "summary.csv").read_text() == "check,seed,status,failed_metrics\n"


def test_verify_broken_tolerance_exits_3(tmp_path, capsys):
    m = tmp_path / "m.json"
    m.write_text(json.dumps([{"check": "crofton_halfspace", "params": {"size": 32, "normals": 4, "tol": 0.0}}]))
    assert main(["verify", "--manifest", str(m), "--out", str(tmp_path / "o")]) == 3
    assert "1 failed" in capsys.readouterr().out


def test_verify_bad_manifest_exits_1(tmp_path):
    m = tmp_path / "m.json"
    m.write_text('[{"check": "nope"}]')
    assert main(["verify", "--manifest", str(m), "--out", str(tmp_path / "o")]) == 1


def test_verify_seed_override(tmp_path):
    m = tmp_path / "m.json"
    m.write_text(json.dumps([{"check": "anisotropy_identities", "params": {"samples": 10}, "seed": 1}]))
    assert main(["verify", "--manifest", str(m), "--out", str(tmp_path / "o"), "--seed", "42"]) == 0
    assert json.loads((tmp_path / "o" / "reports.jsonl").read_text())["seed"] == 42


def test_console_script_default_fast_tier(tmp_path):
    out = tmp_path / "o"
    proc = subprocess.run([sys.executable, "-m", "tvlevel.cli", "verify", "--out", str(out), "--jobs", "4"],
                          capture_output=True, text=True, timeout=300)
    assert proc.returncode == 0, proc.stdout + proc.stderr
    assert "0 failed" in proc.stdout
