"""Conflict-mitigation penalties on the adapter product and their gradients.

Both penalties act on the unscaled product ``B~ A~`` weighted entrywise by a
retention mask: the Frobenius form for language-model layers and the L1
form for the connector. Gradients are returned with respect to the raw
factors, so when the adapter carries binary masks the chain rule through
``M_B * B`` and ``M_A * A`` is included.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .adapter import LoraAdapter
from .errors import DimensionError, ParameterError
from .numcore import frobenius_norm, hadamard, l1_norm, matmul
from .retention import RetentionMask

FROBENIUS = "frobenius"
L1 = "l1"
NONE = "none"
TAGS = (FROBENIUS, L1, NONE)

# below this norm the Frobenius penalty is treated as sitting at its kink
NORM_FLOOR = 1e-12


@dataclass
class RegularizerConfig:
    alpha: float = 1e-3
    beta: float = 1e-5
    tags: list[str] = field(default_factory=list)

    def __post_init__(self):
        if self.alpha < 0 or self.beta < 0:
            raise ParameterError("alpha and beta must be non-negative")
        bad = [t for t in self.tags if t not in TAGS]
        if bad:
            raise ParameterError(f"unknown regularizer tags {bad}")


@dataclass
class RegGrad:
    grad_B: np.ndarray
    grad_A: np.ndarray
    loss_value: float


def _mask_array(mask) -> np.ndarray:
    return mask.m if isinstance(mask, RetentionMask) else np.asarray(mask, dtype=np.float64)


def _weighted_product(mask, adapter: LoraAdapter) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    m = _mask_array(mask)
    if m.shape != adapter.shape:
        raise DimensionError(f"retention mask {m.shape} does not match adapter {adapter.shape}")
    b, a = adapter.masked_factors()
    return m, b, a, hadamard(m, matmul(b, a))


def _factor_grads(adapter: LoraAdapter, b: np.ndarray, a: np.ndarray,
                  g: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    # g is dL/d(BA); pull back through the product and the binary masks
    grad_B = matmul(g, a.T)
    grad_A = matmul(b.T, g)
    if adapter.has_masks:
        grad_B = grad_B * adapter.mask_B
        grad_A = grad_A * adapter.mask_A
    return grad_B, grad_A


def cmr_frobenius(mask, adapter: LoraAdapter) -> float:
    return frobenius_norm(_weighted_product(mask, adapter)[3])


def cmr_l1(mask, adapter: LoraAdapter) -> float:
    return l1_norm(_weighted_product(mask, adapter)[3])


def cmr_frobenius_grad(mask, adapter: LoraAdapter) -> RegGrad:
    """Gradient of ``||M * BA||_F``: ``P A^T / L`` and ``B^T P / L`` with ``P = M*M*BA``.

    Returns zero gradients when the norm is below ``NORM_FLOOR``.
    """
    m, b, a, weighted = _weighted_product(mask, adapter)
    value = frobenius_norm(weighted)
    if value <= NORM_FLOOR:
        return RegGrad(np.zeros_like(adapter.B), np.zeros_like(adapter.A), value)
    g = (m * weighted) / value
    grad_B, grad_A = _factor_grads(adapter, b, a, g)
    return RegGrad(grad_B, grad_A, value)


def cmr_l1_grad(mask, adapter: LoraAdapter) -> RegGrad:
    # sign(0) = 0, so cells with an exactly-zero product contribute nothing
    m, b, a, weighted = _weighted_product(mask, adapter)
    g = m * np.sign(weighted)
    grad_B, grad_A = _factor_grads(adapter, b, a, g)
    return RegGrad(grad_B, grad_A, l1_norm(weighted))


def squared_product_grad(adapter: LoraAdapter) -> RegGrad:
    """Plain ``||BA||_F^2`` and its gradient (the L2 baseline penalty)."""
    b, a = adapter.masked_factors()
    prod = matmul(b, a)
    grad_B, grad_A = _factor_grads(adapter, b, a, 2.0 * prod)
    return RegGrad(grad_B, grad_A, float(np.sum(np.square(prod))))


def total_loss(task_loss: float, frob_terms, l1_terms, cfg: RegularizerConfig) -> float:
    """``task + alpha * sum(frob_terms) + beta * sum(l1_terms)``.

    Terms are summed in the order given (callers pass them by layer index).
    """
    frob = 0.0
    for t in frob_terms:
        frob += t
    l1 = 0.0
    for t in l1_terms:
        l1 += t
    return task_loss + cfg.alpha * frob + cfg.beta * l1
