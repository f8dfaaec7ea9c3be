"""Magnitude-guided retention masks built from pretrained weights."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import NormalizationError, ParameterError
from .numcore import frobenius_norm

DEFAULT_EPS = 1e-8
DEFAULT_OMEGA = 1.0
LOG_ARG_MAX = 1.0 - 1e-6
SCORE_CAP = 1e6
# tanh saturates to exactly 1.0 above ~19; keep entries strictly below one
_BELOW_ONE = np.nextafter(1.0, 0.0)


@dataclass(frozen=True)
class RetentionMask:
    m: np.ndarray
    omega: float
    epsilon: float
    norm_used: str = "frobenius"

    @property
    def shape(self) -> tuple[int, int]:
        return self.m.shape


def _normalize(w: np.ndarray, norm: str) -> np.ndarray:
    if norm == "frobenius":
        scale = frobenius_norm(w)
    elif norm == "spectral":
        scale = float(np.linalg.norm(w, 2))
    else:
        raise ParameterError(f"unknown norm {norm!r}")
    if scale == 0.0:
        raise NormalizationError("cannot normalize an all-zero weight matrix")
    return w / scale


def importance_scores(w: np.ndarray, eps: float = DEFAULT_EPS, norm: str = "frobenius") -> np.ndarray:
    """Log-compressed magnitude scores ``|1 / ln(|W/||W|| | + eps)|``.

    The log argument is clamped to ``1 - 1e-6`` and the score capped at 1e6,
    which only matters when a single entry carries almost all of the norm.
    """
    if eps <= 0:
        raise ParameterError(f"epsilon must be positive, got {eps}")
    x = np.minimum(np.abs(_normalize(w, norm)) + eps, LOG_ARG_MAX)
    return np.minimum(np.abs(1.0 / np.log(x)), SCORE_CAP)


def retention_mask(w: np.ndarray, omega: float = DEFAULT_OMEGA, eps: float = DEFAULT_EPS,
                   norm: str = "frobenius") -> RetentionMask:
    if omega <= 0:
        raise ParameterError(f"omega must be positive, got {omega}")
    s = importance_scores(w, eps, norm)
    m = np.minimum(np.tanh(omega * s), _BELOW_ONE)
    return RetentionMask(m=m, omega=omega, epsilon=eps, norm_used=norm)
