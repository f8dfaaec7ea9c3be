"""Dense float64 matrix helpers and reproducible random streams.

Matrices are plain 2-D ``numpy.ndarray`` objects of dtype float64. The
helpers here fix the reduction order explicitly instead of delegating to
BLAS, so products are bit-stable across machines and thread counts.
"""

from __future__ import annotations

import math

import numpy as np

from .errors import DimensionError, ParameterError

_U53 = 1.0 / (1 << 53)


def as_matrix(x) -> np.ndarray:
    """Coerce ``x`` to a finite 2-D float64 array (copying only if needed)."""
    m = np.asarray(x, dtype=np.float64)
    if m.ndim != 2:
        raise DimensionError(f"expected a 2-D matrix, got shape {m.shape}")
    if not np.all(np.isfinite(m)):
        raise ParameterError("matrix contains non-finite entries")
    return m


def _shape(x: np.ndarray) -> str:
    return "x".join(str(d) for d in x.shape)


def matmul(lhs: np.ndarray, rhs: np.ndarray) -> np.ndarray:
    """Matrix product with a fixed ascending-k accumulation order.

    Each output entry is ``((l0*r0 + l1*r1) + l2*r2) + ...`` evaluated in
    IEEE double arithmetic, independent of the BLAS build.
    """
    if lhs.ndim != 2 or rhs.ndim != 2 or lhs.shape[1] != rhs.shape[0]:
        raise DimensionError(
            f"cannot multiply {_shape(lhs)} by {_shape(rhs)}")
    p, r = lhs.shape
    q = rhs.shape[1]
    if r == 0:
        return np.zeros((p, q))
    out = lhs[:, 0:1] * rhs[0:1, :]
    for k in range(1, r):
        out += lhs[:, k:k + 1] * rhs[k:k + 1, :]
    return out


def hadamard(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    if a.shape != b.shape:
        raise DimensionError(
            f"hadamard needs equal shapes, got {_shape(a)} and {_shape(b)}")
    return a * b


def frobenius_norm(x: np.ndarray) -> float:
    return math.sqrt(float(np.sum(np.square(x))))


def l1_norm(x: np.ndarray) -> float:
    return float(np.sum(np.abs(x)))


class RandomStream:
    """Counter-based random stream keyed by ``(seed, stream_id)``.

    Raw 64-bit words come from the Philox-4x64 counter generator keyed with
    the 128-bit value ``stream_id << 64 | seed``. Conversions to uniforms,
    Bernoulli bits and Gaussians are done here rather than by numpy's
    ``Generator`` so the derived sequences stay fixed across numpy releases.
    """

    def __init__(self, seed: int, stream_id: int = 0):
        if not (0 <= seed < 2**64 and 0 <= stream_id < 2**64):
            raise ParameterError("seed and stream_id must be 64-bit unsigned")
        self.seed = int(seed)
        self.stream_id = int(stream_id)
        self._bits = np.random.Philox(key=(self.stream_id << 64) | self.seed)

    def spawn(self, stream_id: int) -> RandomStream:
        """A fresh stream with the same seed and a different id."""
        return RandomStream(self.seed, stream_id)

    def raw(self, n: int) -> np.ndarray:
        return self._bits.random_raw(n).astype(np.uint64, copy=False)

    def uniform(self, n: int) -> np.ndarray:
        """``n`` doubles in [0, 1) with 53 random bits each."""
        return (self.raw(n) >> np.uint64(11)).astype(np.float64) * _U53

    def integers(self, n: int, high: int) -> np.ndarray:
        """``n`` integers in [0, high) (multiply-shift, bias < 2**-53 * high)."""
        return np.floor(self.uniform(n) * high).astype(np.int64)

    def bernoulli(self, n: int, prob: float | np.ndarray) -> np.ndarray:
        return self.uniform(n) < prob

    def normal(self, n: int) -> np.ndarray:
        """Standard normals by the Box-Muller transform."""
        m = (n + 1) // 2
        u1 = 1.0 - self.uniform(m)  # (0, 1]
        u2 = self.uniform(m)
        rad = np.sqrt(-2.0 * np.log(u1))
        ang = 2.0 * np.pi * u2
        z = np.empty(2 * m)
        z[0::2] = rad * np.cos(ang)
        z[1::2] = rad * np.sin(ang)
        return z[:n]

    def permutation(self, n: int) -> np.ndarray:
        """Uniform random permutation of ``range(n)`` (sort of random keys)."""
        return np.argsort(self.uniform(n), kind="stable")


def sample_gaussian(rng: RandomStream, rows: int, cols: int, std: float) -> np.ndarray:
    if std < 0:
        raise ParameterError(f"std must be non-negative, got {std}")
    if std == 0:
        return np.zeros((rows, cols))
    return rng.normal(rows * cols).reshape(rows, cols) * std


def identity(n: int) -> np.ndarray:
    return np.eye(n)
