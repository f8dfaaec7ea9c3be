"""Low-rank adapters with one-shot magnitude masks."""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from .errors import DimensionError, ParameterError, StateError
from .numcore import RandomStream, hadamard, matmul, sample_gaussian

INIT_STD = 0.02


def retained_count(density: float, n: int) -> int:
    """Number of entries kept at ``density`` out of ``n`` (round half up)."""
    return int(math.floor(density * n + 0.5))


def build_mask(x: np.ndarray, density: float) -> np.ndarray:
    """Binary mask keeping the ``round(density * x.size)`` largest-magnitude entries.

    Ties are broken toward the lower flat (row-major) index, so the kept set
    only grows as ``density`` grows.
    """
    if not 0.0 <= density <= 1.0:
        raise ParameterError(f"retained density must lie in [0, 1], got {density}")
    flat = np.abs(x).ravel()
    k = retained_count(density, flat.size)
    order = np.argsort(-flat, kind="stable")
    mask = np.zeros(flat.size)
    mask[order[:k]] = 1.0
    return mask.reshape(x.shape)


@dataclass
class LoraAdapter:
    """Factor pair ``(B, A)`` whose scaled product is the weight delta.

    ``B`` is p x r and ``A`` is r x q. Masks are optional binary float arrays
    of the same shapes; ``density_B``/``density_A`` record the retained
    fractions they were built with.
    """

    B: np.ndarray
    A: np.ndarray
    scaling: float = 1.0
    mask_B: np.ndarray | None = None
    mask_A: np.ndarray | None = None
    density_B: float | None = None
    density_A: float | None = None

    def __post_init__(self):
        if self.B.ndim != 2 or self.A.ndim != 2 or self.B.shape[1] != self.A.shape[0]:
            raise DimensionError(
                f"factor shapes {self.B.shape} and {self.A.shape} do not chain")
        if self.rank > min(self.shape):
            raise ParameterError(
                f"rank {self.rank} exceeds min(p, q) for shape {self.shape}")
        if self.scaling <= 0:
            raise ParameterError("scaling must be positive")
        for name, m, ref in (("mask_B", self.mask_B, self.B), ("mask_A", self.mask_A, self.A)):
            if m is None:
                continue
            if m.shape != ref.shape:
                raise DimensionError(f"{name} shape {m.shape} != factor shape {ref.shape}")
            if not np.all((m == 0) | (m == 1)):
                raise ParameterError(f"{name} must be binary")

    @property
    def rank(self) -> int:
        return self.B.shape[1]

    @property
    def shape(self) -> tuple[int, int]:
        return self.B.shape[0], self.A.shape[1]

    @property
    def has_masks(self) -> bool:
        return self.mask_B is not None and self.mask_A is not None

    def copy(self) -> LoraAdapter:
        def c(m):
            return None if m is None else m.copy()
        return replace(self, B=self.B.copy(), A=self.A.copy(),
                       mask_B=c(self.mask_B), mask_A=c(self.mask_A))

    def masked_factors(self) -> tuple[np.ndarray, np.ndarray]:
        if self.has_masks:
            return hadamard(self.mask_B, self.B), hadamard(self.mask_A, self.A)
        return self.B, self.A

    def product(self) -> np.ndarray:
        """Unscaled ``B~ A~`` (masked factors when masks exist)."""
        b, a = self.masked_factors()
        return matmul(b, a)

    def set_masks(self, density_B: float, density_A: float) -> None:
        """Build magnitude masks from the current factors (one-shot)."""
        self.mask_B = build_mask(self.B, density_B)
        self.mask_A = build_mask(self.A, density_A)
        self.density_B = density_B
        self.density_A = density_A

    def project(self) -> None:
        """Zero masked-out entries in place."""
        if not self.has_masks:
            raise StateError("adapter has no masks")
        self.B *= self.mask_B
        self.A *= self.mask_A


def apply_masks(adapter: LoraAdapter) -> LoraAdapter:
    if not adapter.has_masks:
        raise StateError("apply_masks called on an adapter without masks")
    b, a = adapter.masked_factors()
    return replace(adapter, B=b, A=a)


def delta_weight(adapter: LoraAdapter) -> np.ndarray:
    return adapter.scaling * adapter.product()


def merge(w0: np.ndarray, adapter: LoraAdapter) -> np.ndarray:
    if w0.shape != adapter.shape:
        raise DimensionError(f"base weight {w0.shape} does not match adapter {adapter.shape}")
    return w0 + delta_weight(adapter)


def pattern_density(mask_B: np.ndarray, mask_A: np.ndarray) -> float:
    """Fraction of product cells reachable through some shared rank index."""
    if mask_B.shape[1] != mask_A.shape[0]:
        raise DimensionError(f"patterns {mask_B.shape} and {mask_A.shape} do not chain")
    hits = mask_B.astype(np.int64) @ mask_A.astype(np.int64)
    return float(np.count_nonzero(hits)) / hits.size


def structural_sparsity(adapter: LoraAdapter) -> float:
    """Density of the boolean product of the two masks.

    Ignores numeric cancellation, so it upper-bounds the nonzero fraction of
    ``delta_weight``.
    """
    if not adapter.has_masks:
        raise StateError("structural_sparsity needs masks")
    return pattern_density(adapter.mask_B != 0, adapter.mask_A != 0)


def init_adapter(rng: RandomStream, p: int, q: int, r: int, scaling: float = 1.0) -> LoraAdapter:
    """``A ~ N(0, 0.02^2)``, ``B = 0``: the delta is exactly zero at init."""
    if r < 1 or r > min(p, q):
        raise ParameterError(f"rank {r} must lie in [1, min({p}, {q})]")
    a = sample_gaussian(rng, r, q, INIT_STD)
    return LoraAdapter(B=np.zeros((p, r)), A=a, scaling=scaling)
