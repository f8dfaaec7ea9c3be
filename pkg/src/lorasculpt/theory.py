"""Closed-form sparsity of masked low-rank products and Monte Carlo checks.

Densities here follow the adapter convention: ``s`` is the fraction of
entries that are kept (nonzero), and the "sparsity" of a product is the
fraction of its cells that can be nonzero.
"""

from __future__ import annotations

import csv
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .adapter import retained_count
from .errors import DimensionError, ParameterError
from .numcore import RandomStream

BERNOULLI = "bernoulli"
EXACT_TOPK = "exact_topk"
SAMPLING_MODES = (BERNOULLI, EXACT_TOPK)


@dataclass(frozen=True)
class SparsitySpec:
    p: int
    q: int
    r: int
    s_A: float
    s_B: float
    sampling: str = BERNOULLI
    heterogeneous: bool = False
    # half-width of the per-row/per-column density band, relative to the average
    band: float = 0.9

    def __post_init__(self):
        if min(self.p, self.q, self.r) < 1:
            raise ParameterError("p, q and r must be positive")
        if not (0.0 <= self.s_A <= 1.0 and 0.0 <= self.s_B <= 1.0):
            raise ParameterError("densities must lie in [0, 1]")
        if self.sampling not in SAMPLING_MODES:
            raise ParameterError(f"unknown sampling mode {self.sampling!r}")
        if not 0.0 <= self.band <= 1.0:
            raise ParameterError("band must lie in [0, 1]")


@dataclass
class TheoryReport:
    expected_sparsity: float
    empirical_mean: float
    empirical_std: float
    per_trial: list[float]
    delta: float
    bound: float
    violations: int
    spec: SparsitySpec | None = field(default=None, repr=False)

    @property
    def trials(self) -> int:
        return len(self.per_trial)

    @property
    def violation_rate(self) -> float:
        return self.violations / self.trials


def expected_product_sparsity(spec: SparsitySpec) -> float:
    """``1 - (1 - s_B s_A)^r``."""
    return 1.0 - (1.0 - spec.s_B * spec.s_A) ** spec.r


def concentration_bound(spec: SparsitySpec, delta: float) -> float:
    """McDiarmid tail bound ``2 exp(-2 delta^2 pq / (r (p + q)))``, unclamped."""
    if delta < 0:
        raise ParameterError(f"delta must be non-negative, got {delta}")
    p, q, r = spec.p, spec.q, spec.r
    return 2.0 * math.exp(-2.0 * delta * delta * p * q / (r * (p + q)))


def _band_densities(rng: RandomStream, n: int, mean: float, band: float) -> np.ndarray:
    """``n`` densities uniform on ``mean * (1 +/- band)`` with sample mean exactly ``mean``.

    Antithetic pairs ``mean + d`` / ``mean - d`` keep the average fixed; an
    odd leftover sits at the mean. The order is shuffled afterwards.
    """
    half = band * min(mean, 1.0 - mean)
    d = (2.0 * rng.uniform(n // 2) - 1.0) * half
    vals = np.concatenate([mean + d, mean - d, np.full(n % 2, mean)])
    return vals[rng.permutation(n)]


def _sample_bits(rng: RandomStream, shape: tuple[int, int], density, sampling: str) -> np.ndarray:
    n = shape[0] * shape[1]
    if sampling == BERNOULLI:
        return rng.bernoulli(n, density).reshape(shape)
    bits = np.zeros(n, dtype=bool)
    bits[rng.permutation(n)[:retained_count(density, n)]] = True
    return bits.reshape(shape)


def _sample_rows(rng: RandomStream, rows: int, cols: int, densities: np.ndarray,
                 sampling: str) -> np.ndarray:
    if sampling == BERNOULLI:
        return rng.uniform(rows * cols).reshape(rows, cols) < densities[:, None]
    out = np.zeros((rows, cols), dtype=bool)
    for i in range(rows):
        out[i, rng.permutation(cols)[:retained_count(densities[i], cols)]] = True
    return out


def sample_mask_pair(rng: RandomStream, spec: SparsitySpec) -> tuple[np.ndarray, np.ndarray]:
    """Boolean patterns ``(mb, ma)`` of shapes p x r and r x q.

    In heterogeneous mode each row of ``mb`` and each column of ``ma`` gets
    its own density, drawn from a band whose mean is the stated average.
    """
    p, q, r = spec.p, spec.q, spec.r
    if not spec.heterogeneous:
        mb = _sample_bits(rng, (p, r), spec.s_B, spec.sampling)
        ma = _sample_bits(rng, (r, q), spec.s_A, spec.sampling)
        return mb, ma
    row_dens = _band_densities(rng, p, spec.s_B, spec.band)
    col_dens = _band_densities(rng, q, spec.s_A, spec.band)
    mb = _sample_rows(rng, p, r, row_dens, spec.sampling)
    ma = _sample_rows(rng, q, r, col_dens, spec.sampling).T.copy()
    return mb, ma


def product_pattern_sparsity(mb: np.ndarray, ma: np.ndarray) -> float:
    """Fraction of cells (i, j) with some k where ``mb[i, k]`` and ``ma[k, j]``.

    Rows of ``mb`` sharing a pattern reach the same columns, so each distinct
    row pattern is expanded once and weighted by its multiplicity.
    """
    if mb.shape[1] != ma.shape[0]:
        raise DimensionError(f"patterns {mb.shape} and {ma.shape} do not chain")
    p, q = mb.shape[0], ma.shape[1]
    mb = np.asarray(mb, dtype=bool)
    ma = np.asarray(ma, dtype=bool)
    patterns, counts = np.unique(mb, axis=0, return_counts=True)
    reached = 0
    for pat, cnt in zip(patterns, counts):
        if pat.any():
            reached += int(cnt) * int(np.count_nonzero(ma[pat].any(axis=0)))
    return reached / (p * q)


def _one_trial(seed: int, trial_id: int, spec: SparsitySpec) -> float:
    mb, ma = sample_mask_pair(RandomStream(seed, trial_id), spec)
    return product_pattern_sparsity(mb, ma)


def monte_carlo_validate(seed: int, spec: SparsitySpec, trials: int, delta: float,
                         workers: int = 1) -> TheoryReport:
    """Sample ``trials`` independent mask pairs and compare with the theory.

    Trial ``i`` uses ``RandomStream(seed, i)``, so the report does not depend
    on ``workers``.
    """
    if trials < 1:
        raise ParameterError("trials must be >= 1")
    bound = concentration_bound(spec, delta)
    expected = expected_product_sparsity(spec)
    if workers > 1:
        with ThreadPoolExecutor(workers) as pool:
            per_trial = list(pool.map(lambda t: _one_trial(seed, t, spec), range(trials)))
    else:
        per_trial = [_one_trial(seed, t, spec) for t in range(trials)]
    arr = np.array(per_trial)
    violations = int(np.count_nonzero(np.abs(arr - expected) >= delta))
    return TheoryReport(
        expected_sparsity=expected,
        empirical_mean=float(arr.mean()),
        empirical_std=float(arr.std()),
        per_trial=per_trial,
        delta=delta,
        bound=bound,
        violations=violations,
        spec=spec,
    )


def write_report_csv(report: TheoryReport, path) -> None:
    """``#``-prefixed metadata lines, then ``trial_id,sparsity`` rows."""
    with open(path, "w", newline="") as fh:
        fh.write(f"# expected,{report.expected_sparsity!r}\n")
        fh.write(f"# delta,{report.delta!r}\n")
        fh.write(f"# bound,{report.bound!r}\n")
        fh.write(f"# empirical_mean,{report.empirical_mean!r}\n")
        fh.write(f"# violations,{report.violations}\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["trial_id", "sparsity"])
        for i, v in enumerate(report.per_trial):
            w.writerow([i, repr(v)])


def read_report_csv(path) -> tuple[dict[str, float], list[float]]:
    meta: dict[str, float] = {}
    values: list[float] = []
    with open(path) as fh:
        for line in fh:
            line = line.rstrip("\n")
            if line.startswith("#"):
                key, val = line[1:].strip().split(",", 1)
                meta[key] = float(val)
            elif line and not line.startswith("trial_id"):
                values.append(float(line.split(",")[1]))
    return meta, values
