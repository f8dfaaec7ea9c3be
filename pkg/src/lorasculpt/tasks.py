"""Synthetic teacher tasks standing in for upstream and downstream datasets.

Every task owns a private subspace of the input space: inputs are
``x = U z`` with ``z ~ N(0, I)`` and ``U`` a block of orthonormal columns.
The teacher is a one-hidden-layer tanh network on ``z``. Source tasks use
disjoint blocks, and the target task uses the remaining block, so the
pretrained model never sees target-like inputs.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import ParameterError
from .numcore import RandomStream, matmul, sample_gaussian

TASK_STREAM = 1
EVAL_STREAM = 100
EVAL_SAMPLES = 1024


def orthonormal_columns(rng: RandomStream, n: int, k: int) -> np.ndarray:
    """``n x k`` matrix with orthonormal columns (modified Gram-Schmidt)."""
    if k > n:
        raise ParameterError(f"cannot fit {k} orthonormal columns in dimension {n}")
    g = sample_gaussian(rng, n, k, 1.0)
    q = np.zeros((n, k))
    for j in range(k):
        v = g[:, j].copy()
        for i in range(j):
            v -= float(np.sum(q[:, i] * v)) * q[:, i]
        q[:, j] = v / math.sqrt(float(np.sum(v * v)))
    return q


@dataclass
class Teacher:
    basis: np.ndarray   # input_dim x latent_dim
    hidden: np.ndarray  # width x latent_dim
    readout: np.ndarray  # output_dim x width

    def __call__(self, x: np.ndarray) -> np.ndarray:
        z = matmul(x, self.basis)
        return matmul(np.tanh(matmul(z, self.hidden.T)), self.readout.T)

    @property
    def latent_dim(self) -> int:
        return self.basis.shape[1]


@dataclass
class TaskSpec:
    sources: list[Teacher]
    target: Teacher
    input_dim: int
    output_dim: int
    noise: float
    seed: int

    def __post_init__(self):
        if not self.sources:
            raise ParameterError("at least one source task is required")
        for t in [*self.sources, self.target]:
            if t.basis.shape[0] != self.input_dim or t.readout.shape[0] != self.output_dim:
                raise ParameterError("teacher dimensions do not match the task")

    @property
    def teachers(self) -> list[Teacher]:
        return [*self.sources, self.target]

    def sample(self, rng: RandomStream, teacher: Teacher, n: int,
               noisy: bool = True) -> tuple[np.ndarray, np.ndarray]:
        z = rng.normal(n * teacher.latent_dim).reshape(n, teacher.latent_dim)
        x = matmul(z, teacher.basis.T)
        y = teacher(x)
        if noisy and self.noise > 0:
            y = y + self.noise * rng.normal(y.size).reshape(y.shape)
        return x, y

    def sample_sources(self, rng: RandomStream, n: int) -> tuple[np.ndarray, np.ndarray]:
        """Equal share of ``n`` from each source (remainder to the first ones)."""
        k = len(self.sources)
        xs, ys = [], []
        for i, t in enumerate(self.sources):
            m = n // k + (1 if i < n % k else 0)
            x, y = self.sample(rng, t, m)
            xs.append(x)
            ys.append(y)
        return np.concatenate(xs), np.concatenate(ys)

    def eval_batch(self, task_idx: int) -> tuple[np.ndarray, np.ndarray]:
        """Fixed noise-free evaluation batch; ``task_idx == len(sources)`` is the target."""
        rng = RandomStream(self.seed, EVAL_STREAM + task_idx)
        return self.sample(rng, self.teachers[task_idx], EVAL_SAMPLES, noisy=False)


def make_tasks(seed: int, input_dim: int = 16, output_dim: int = 8, n_sources: int = 4,
               source_latent: int = 3, target_latent: int = 4, width: int = 8,
               gain: float = 1.5, noise: float = 0.01) -> TaskSpec:
    """Random teachers on mutually orthogonal input subspaces."""
    dims = [source_latent] * n_sources + [target_latent]
    if sum(dims) > input_dim:
        raise ParameterError(f"{sum(dims)} latent dims do not fit input_dim={input_dim}")
    rng = RandomStream(seed, TASK_STREAM)
    basis = orthonormal_columns(rng, input_dim, sum(dims))
    teachers = []
    start = 0
    for d in dims:
        hidden = sample_gaussian(rng, width, d, gain / math.sqrt(d))
        readout = sample_gaussian(rng, output_dim, width, 1.0 / math.sqrt(width))
        teachers.append(Teacher(basis[:, start:start + d].copy(), hidden, readout))
        start += d
    return TaskSpec(sources=teachers[:-1], target=teachers[-1], input_dim=input_dim,
                    output_dim=output_dim, noise=noise, seed=seed)
