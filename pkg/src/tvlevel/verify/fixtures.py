"""Seeded test fields: smooth data, piecewise-constant images, traces."""

from __future__ import annotations

import numpy as np

from ..grid import BOUNDARY, ScalarField, rectangle_mask


def smooth_field(n: int, seed: int, modes: int = 4, delta: float = 1.0, m: int | None = None) -> ScalarField:
    """Random sum of low-frequency sinusoids on an n x m grid, values in about [-1, 1]."""
    m = n if m is None else m
    rng = np.random.default_rng(seed)
    yy, xx = np.mgrid[0:n, 0:m] / max(n - 1, m - 1, 1)
    v = np.zeros((n, m))
    for _ in range(modes):
        kx, ky = rng.uniform(0.5, 3.0, 2)
        ph = rng.uniform(0, 2 * np.pi)
        v += rng.uniform(0.3, 1.0) * np.sin(2 * np.pi * (kx * xx + ky * yy) / 2 + ph)
    v /= max(np.abs(v).max(), 1e-12)
    return ScalarField(v, delta)


def random_field(shape, seed: int, quantize: int | None = None) -> ScalarField:
    rng = np.random.default_rng(seed)
    v = rng.random(shape)
    if quantize:
        v = np.floor(v * quantize) / quantize
    return ScalarField(v)


def constant_image(n: int = 16, c: float = 0.5) -> ScalarField:
    return ScalarField(np.full((n, n), c))


def step_image(n: int = 16, lo: float = 0.0, hi: float = 1.0) -> ScalarField:
    v = np.full((n, n), lo)
    v[:, n // 2:] = hi
    return ScalarField(v)


def two_region_image(n: int = 16, lo: float = 0.0, hi: float = 1.0) -> ScalarField:
    """A bright square on a dark background."""
    v = np.full((n, n), lo)
    a, b = n // 4, n - n // 4
    v[a:b, a:b] = hi
    return ScalarField(v)


def checkerboard(n: int = 16, block: int = 4, lo: float = 0.0, hi: float = 1.0) -> ScalarField:
    yy, xx = np.mgrid[0:n, 0:n]
    v = np.where(((yy // block) + (xx // block)) % 2 == 0, lo, hi)
    return ScalarField(v.astype(float))


def jump_pairs(g: ScalarField, offsets) -> np.ndarray:
    """Cells touching a stencil pair across which g jumps."""
    touched = np.zeros(g.shape, bool)
    h, w = g.shape
    for dx, dy in offsets:
        r0, r1 = max(0, -dy), h - max(0, dy)
        c0, c1 = max(0, -dx), w - max(0, dx)
        a = g.values[r0:r1, c0:c1]
        b = g.values[r0 + dy:r1 + dy, c0 + dx:c1 + dx]
        j = a != b
        touched[r0:r1, c0:c1] |= j
        touched[r0 + dy:r1 + dy, c0 + dx:c1 + dx] |= j
    return touched


def affine_field(n: int, slope=(1.0, 0.0), delta: float = 1.0, m: int | None = None) -> ScalarField:
    m = n if m is None else m
    yy, xx = np.mgrid[0:n, 0:m] * delta
    return ScalarField(slope[0] * xx + slope[1] * yy, delta)


def cone_field(n: int, polar, center=None, clamp: float | None = None, delta: float = 1.0) -> ScalarField:
    """g(x) = min(phi°(x - x0), clamp): Lipschitz 1 with respect to phi°."""
    yy, xx = np.mgrid[0:n, 0:n] * delta
    c = ((n - 1) * delta / 2,) * 2 if center is None else center
    v = np.asarray(polar.eval(np.stack([xx - c[0], yy - c[1]], axis=-1)))
    if clamp is not None:
        v = np.minimum(v, clamp)
    return ScalarField(v, delta)


def trace_field(n: int, values: np.ndarray, m: int | None = None) -> ScalarField:
    """Rectangle whose outer ring is boundary; ``values`` supplies the trace there."""
    m = n if m is None else m
    mask = rectangle_mask(n, m)
    v = np.where(mask == BOUNDARY, values, 0.0)
    return ScalarField(v, 1.0, mask)


def split_trace(n: int, lo: float = 0.0, hi: float = 1.0) -> ScalarField:
    """Trace lo on the left half of the boundary ring, hi on the right half."""
    vals = np.full((n, n), lo)
    vals[:, n // 2:] = hi
    return trace_field(n, vals)


def affine_trace(n: int, slope=(1.0, 0.0)) -> ScalarField:
    yy, xx = np.mgrid[0:n, 0:n].astype(float)
    return trace_field(n, slope[0] * xx + slope[1] * yy)
