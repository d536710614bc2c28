"""Plain-text and binary Netpbm / CSV readers and writers for grid data.

PGM pixel values are mapped affinely onto a declared ``[lo, hi]`` range; the
range is never inferred from the data.
"""

from __future__ import annotations

import csv
import io
import os
import tempfile
from pathlib import Path

import numpy as np

from .grid import BOUNDARY, INTERIOR, OUTSIDE, BinarySet, ScalarField

MASK_CODES = {0: OUTSIDE, 128: BOUNDARY, 255: INTERIOR}


class FieldIOError(ValueError):
    pass


def atomic_write(path, data: bytes) -> None:
    """Write via a temp file in the target directory, then rename."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _tokens(data: bytes):
    """Yield (token, end offset) for a Netpbm header, skipping comments."""
    pos, n = 0, len(data)
    while pos < n:
        c = data[pos:pos + 1]
        if c == b"#":
            while pos < n and data[pos:pos + 1] not in (b"\n", b"\r"):
                pos += 1
        elif c.isspace():
            pos += 1
        else:
            start = pos
            while pos < n and not data[pos:pos + 1].isspace() and data[pos:pos + 1] != b"#":
                pos += 1
            yield data[start:pos], pos


def _read_netpbm(path) -> tuple[str, int, int, int, np.ndarray]:
    data = Path(path).read_bytes()
    toks = _tokens(data)
    try:
        magic = next(toks)[0].decode()
        if magic not in ("P1", "P2", "P5"):
            raise FieldIOError(f"{path}: unsupported Netpbm type {magic}")
        width = int(next(toks)[0])
        height = int(next(toks)[0])
        maxval, end = (1, None) if magic == "P1" else (lambda t: (int(t[0]), t[1]))(next(toks))
    except StopIteration as exc:
        raise FieldIOError(f"{path}: truncated header") from exc
    except ValueError as exc:
        raise FieldIOError(f"{path}: malformed header") from exc
    if width <= 0 or height <= 0:
        raise FieldIOError(f"{path}: bad dimensions")
    count = width * height
    if magic == "P5":
        if maxval not in (255, 65535):
            raise FieldIOError(f"{path}: maxval must be 255 or 65535")
        raw = data[end + 1:]
        dtype = np.dtype(">u2") if maxval > 255 else np.dtype("u1")
        if len(raw) < count * dtype.itemsize:
            raise FieldIOError(f"{path}: truncated raster")
        pix = np.frombuffer(raw[: count * dtype.itemsize], dtype=dtype).astype(np.int64)
    elif magic == "P2":
        if maxval not in (255, 65535):
            raise FieldIOError(f"{path}: maxval must be 255 or 65535")
        vals = [int(t) for t, _ in toks]
        if len(vals) < count:
            raise FieldIOError(f"{path}: truncated raster")
        pix = np.array(vals[:count], dtype=np.int64)
    else:
        body = b"".join(t for t, _ in toks)
        bits = [int(ch) for ch in body.decode() if ch in "01"]
        if len(bits) < count:
            raise FieldIOError(f"{path}: truncated raster")
        pix = np.array(bits[:count], dtype=np.int64)
    if np.any(pix > maxval):
        raise FieldIOError(f"{path}: pixel exceeds maxval")
    return magic, width, height, maxval, pix.reshape(height, width)


def read_pgm(path, lo: float = 0.0, hi: float = 1.0, delta: float = 1.0, mask=None) -> ScalarField:
    magic, _, _, maxval, pix = _read_netpbm(path)
    if magic == "P1":
        raise FieldIOError(f"{path}: expected a PGM, got PBM")
    values = lo + (hi - lo) * pix / maxval
    return ScalarField(values, delta, mask)


def pgm_bytes(u: ScalarField, lo: float, hi: float, maxval: int = 255, binary: bool = False) -> bytes:
    if maxval not in (255, 65535):
        raise FieldIOError("maxval must be 255 or 65535")
    if not hi > lo:
        raise FieldIOError("PGM range needs hi > lo")
    v = np.where(u.active, u.values, lo)
    pix = np.rint(np.clip((v - lo) / (hi - lo), 0.0, 1.0) * maxval).astype(np.int64)
    header = f"{'P5' if binary else 'P2'}\n{u.width} {u.height}\n{maxval}\n".encode()
    if binary:
        dtype = ">u2" if maxval > 255 else "u1"
        return header + pix.astype(dtype).tobytes()
    rows = "\n".join(" ".join(str(int(p)) for p in row) for row in pix)
    return header + rows.encode() + b"\n"


def write_pgm(path, u: ScalarField, lo: float, hi: float, maxval: int = 255, binary: bool = False) -> None:
    atomic_write(path, pgm_bytes(u, lo, hi, maxval, binary))


def read_mask(path) -> np.ndarray:
    magic, _, _, maxval, pix = _read_netpbm(path)
    if magic == "P1":
        raise FieldIOError(f"{path}: masks are PGM files")
    if maxval != 255:
        pix = np.rint(pix * 255 / maxval).astype(np.int64)
    bad = ~np.isin(pix, list(MASK_CODES))
    if np.any(bad):
        raise FieldIOError(f"{path}: mask codes must be 0, 128 or 255")
    out = np.zeros(pix.shape, dtype=np.int8)
    for code, label in MASK_CODES.items():
        out[pix == code] = label
    return out


def mask_bytes(mask: np.ndarray) -> bytes:
    inv = {v: k for k, v in MASK_CODES.items()}
    pix = np.vectorize(inv.get)(np.asarray(mask))
    h, w = pix.shape
    rows = "\n".join(" ".join(str(int(p)) for p in row) for row in pix)
    return f"P2\n{w} {h}\n255\n".encode() + rows.encode() + b"\n"


def write_mask(path, mask: np.ndarray) -> None:
    atomic_write(path, mask_bytes(mask))


def read_pbm(path, delta: float = 1.0, mask=None) -> BinarySet:
    magic, _, _, _, pix = _read_netpbm(path)
    if magic != "P1":
        raise FieldIOError(f"{path}: expected a plain PBM (P1)")
    return BinarySet(pix.astype(bool), delta, mask)


def pbm_bytes(e: BinarySet) -> bytes:
    h, w = e.bits.shape
    rows = "\n".join(" ".join("1" if b else "0" for b in row) for row in e.bits)
    return f"P1\n{w} {h}\n".encode() + rows.encode() + b"\n"


def write_pbm(path, e: BinarySet) -> None:
    atomic_write(path, pbm_bytes(e))


CSV_HEADER = ["width", "height", "delta", "lo", "hi"]


def csv_text(u: ScalarField, lo: float | None = None, hi: float | None = None) -> str:
    """Row-major CSV: header line, one metadata row, then ``height`` value rows."""
    vals = u.values[u.active]
    lo = float(vals.min()) if lo is None else float(lo)
    hi = float(vals.max()) if hi is None else float(hi)
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_HEADER)
    w.writerow([u.width, u.height, repr(u.delta), repr(lo), repr(hi)])
    for row in u.values:
        w.writerow([repr(float(x)) for x in row])
    return buf.getvalue()


def write_csv(path, u: ScalarField, lo: float | None = None, hi: float | None = None) -> None:
    atomic_write(path, csv_text(u, lo, hi).encode())


def read_csv(path, mask=None) -> tuple[ScalarField, float, float]:
    """Return the field together with its declared (lo, hi) range."""
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if len(rows) < 2 or [c.strip() for c in rows[0]] != CSV_HEADER:
        raise FieldIOError(f"{path}: header must be {','.join(CSV_HEADER)}")
    try:
        width, height = int(rows[1][0]), int(rows[1][1])
        delta, lo, hi = float(rows[1][2]), float(rows[1][3]), float(rows[1][4])
        body = [[float(x) for x in r] for r in rows[2:] if r]
    except (ValueError, IndexError) as exc:
        raise FieldIOError(f"{path}: malformed CSV field") from exc
    values = np.array(body, dtype=float)
    if values.shape != (height, width):
        raise FieldIOError(f"{path}: expected {height}x{width} values, got {values.shape}")
    return ScalarField(values, delta, mask), lo, hi
