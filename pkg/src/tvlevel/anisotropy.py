"""Planar norms used as anisotropies, with their polars and gradients.

All evaluation functions are vectorized over the last axis, so ``x`` may be a
single 2-vector or any array of shape ``(..., 2)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Any

import numpy as np

KINDS = ("euclidean", "weighted_l2", "lp", "l1", "linf")


class AnisotropyError(ValueError):
    """Invalid anisotropy descriptor or unsupported operation."""


class CrystallineError(AnisotropyError):
    """Raised when a smooth-norm operation is requested for l1/linf."""


@dataclass(frozen=True)
class Anisotropy:
    kind: str = "euclidean"
    matrix: tuple[tuple[float, float], tuple[float, float]] | None = None
    p: float | None = None

    def __post_init__(self) -> None:
        if self.kind not in KINDS:
            raise AnisotropyError(f"unknown anisotropy kind {self.kind!r}")
        if self.kind == "weighted_l2":
            if self.matrix is None:
                raise AnisotropyError("weighted_l2 requires a 2x2 matrix")
            m = np.asarray(self.matrix, dtype=float)
            if m.shape != (2, 2) or not np.all(np.isfinite(m)):
                raise AnisotropyError("matrix must be a finite 2x2 array")
            if m[0, 1] != m[1, 0]:
                raise AnisotropyError("matrix must be symmetric")
            if m[0, 0] <= 0 or np.linalg.det(m) <= 0:
                raise AnisotropyError("matrix must be positive definite")
            object.__setattr__(self, "matrix", tuple(tuple(float(v) for v in row) for row in m))
        elif self.matrix is not None:
            raise AnisotropyError(f"kind {self.kind!r} takes no matrix")
        if self.kind == "lp":
            if self.p is None or not math.isfinite(self.p) or self.p <= 1:
                raise AnisotropyError("lp requires a finite exponent p > 1")
            object.__setattr__(self, "p", float(self.p))
        elif self.p is not None:
            raise AnisotropyError(f"kind {self.kind!r} takes no exponent")

    # -- construction helpers -------------------------------------------------

    @classmethod
    def euclidean(cls) -> Anisotropy:
        return cls("euclidean")

    @classmethod
    def weighted(cls, matrix) -> Anisotropy:
        return cls("weighted_l2", matrix=tuple(tuple(float(v) for v in row) for row in matrix))

    @classmethod
    def lp_norm(cls, p: float) -> Anisotropy:
        return cls("lp", p=float(p))

    @classmethod
    def from_descriptor(cls, desc: dict[str, Any]) -> Anisotropy:
        """Parse the JSON descriptor ``{"kind": ..., "matrix": ..., "p": ...}``."""
        if not isinstance(desc, dict):
            raise AnisotropyError("anisotropy descriptor must be an object")
        unknown = set(desc) - {"kind", "matrix", "p"}
        if unknown:
            raise AnisotropyError(f"unknown anisotropy keys: {sorted(unknown)}")
        kind = desc.get("kind", "euclidean")
        matrix = desc.get("matrix")
        if matrix is not None:
            try:
                matrix = tuple(tuple(float(v) for v in row) for row in matrix)
            except (TypeError, ValueError) as exc:
                raise AnisotropyError("matrix must be [[m11,m12],[m21,m22]]") from exc
        p = desc.get("p")
        if p is not None and not isinstance(p, (int, float)):
            raise AnisotropyError("p must be a number")
        return cls(kind, matrix=matrix, p=p)

    def to_descriptor(self) -> dict[str, Any]:
        out: dict[str, Any] = {"kind": self.kind}
        if self.matrix is not None:
            out["matrix"] = [list(row) for row in self.matrix]
        if self.p is not None:
            out["p"] = self.p
        return out

    # -- capability flags -----------------------------------------------------

    @property
    def crystalline(self) -> bool:
        return self.kind in ("l1", "linf")

    @property
    def strongly_convex_square(self) -> bool:
        """True when phi^2 is strongly convex (lp qualifies only for p <= 2)."""
        if self.kind in ("euclidean", "weighted_l2"):
            return True
        if self.kind == "lp":
            return self.p <= 2.0
        return False

    # -- evaluation -----------------------------------------------------------

    def _m(self) -> np.ndarray:
        return np.asarray(self.matrix, dtype=float)

    def __call__(self, x) -> np.ndarray | float:
        return self.eval(x)

    def eval(self, x):
        x = np.asarray(x, dtype=float)
        return _norm(self.kind, x, self._m() if self.matrix is not None else None, self.p)

    def polar(self) -> Anisotropy:
        """Closed-form polar norm."""
        if self.kind == "euclidean":
            return self
        if self.kind == "weighted_l2":
            inv = np.linalg.inv(self._m())
            inv = 0.5 * (inv + inv.T)
            return Anisotropy.weighted(inv)
        if self.kind == "lp":
            return Anisotropy.lp_norm(self.p / (self.p - 1.0))
        return Anisotropy("linf" if self.kind == "l1" else "l1")

    def polar_eval(self, xi):
        return self.polar().eval(xi)

    def grad(self, x) -> np.ndarray:
        """Gradient of phi at nonzero ``x``."""
        if self.crystalline:
            raise CrystallineError(f"{self.kind} is crystalline; gradient undefined")
        x = np.asarray(x, dtype=float)
        val = np.asarray(self.eval(x))
        if np.any(val == 0):
            raise AnisotropyError("gradient undefined at the origin")
        v = val[..., None]
        if self.kind == "euclidean":
            return x / v
        if self.kind == "weighted_l2":
            return x @ self._m().T / v
        p = self.p
        return np.sign(x) * np.abs(x / v) ** (p - 1.0)

    def bounds(self) -> tuple[float, float]:
        """Constants (A, B) with A|x| <= phi(x) <= B|x|."""
        if self.kind == "euclidean":
            return 1.0, 1.0
        if self.kind == "weighted_l2":
            ev = np.linalg.eigvalsh(self._m())
            return float(math.sqrt(ev[0])), float(math.sqrt(ev[-1]))
        if self.kind == "lp":
            c = 2.0 ** (1.0 / self.p - 0.5)
            return (c, 1.0) if self.p >= 2 else (1.0, c)
        if self.kind == "l1":
            return 1.0, math.sqrt(2.0)
        return 1.0 / math.sqrt(2.0), 1.0


def _norm(kind: str, x: np.ndarray, m: np.ndarray | None, p: float | None):
    if x.shape[-1] != 2:
        raise AnisotropyError("anisotropies act on 2-vectors")
    if kind == "euclidean":
        out = np.hypot(x[..., 0], x[..., 1])
    elif kind == "weighted_l2":
        # scaled by max|x_i| so tiny or huge vectors neither underflow nor overflow
        s = np.max(np.abs(x), axis=-1)
        safe = np.where(s > 0, s, 1.0)
        y = x / safe[..., None]
        q = np.einsum("...i,ij,...j->...", y, m, y)
        out = s * np.sqrt(np.maximum(q, 0.0))
    elif kind == "lp":
        a = np.abs(x)
        s = np.max(a, axis=-1)
        safe = np.where(s > 0, s, 1.0)
        out = s * np.sum((a / safe[..., None]) ** p, axis=-1) ** (1.0 / p)
    elif kind == "l1":
        out = np.sum(np.abs(x), axis=-1)
    else:
        out = np.max(np.abs(x), axis=-1)
    return float(out) if np.ndim(out) == 0 else out
