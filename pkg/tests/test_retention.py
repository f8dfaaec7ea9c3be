import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from lorasculpt.errors import NormalizationError, ParameterError
from lorasculpt.retention import importance_scores, retention_mask

from conftest import random_matrix


def test_score_at_e_minus_two():
    # a single normalized entry chosen so |W~| + eps = e^-2
    target = math.exp(-2.0) - 1e-8
    w = np.array([[target, math.sqrt(1.0 - target**2)]])
    s = importance_scores(w, eps=1e-8)
    assert s[0, 0] == pytest.approx(0.5, rel=1e-9)


def test_score_of_zero_entry():
    w = np.array([[0.0, 1.0, 2.0]])
    s = importance_scores(w, eps=1e-8)
    assert s[0, 0] == pytest.approx(0.05428681023790648, rel=1e-12)


def test_equal_magnitudes_equal_scores():
    w = np.array([[0.7, -0.7], [0.1, 0.3]])
    s = importance_scores(w)
    assert s[0, 0] == s[0, 1]


def test_mask_values():
    w = np.array([[0.0, 1.0, 2.0]])
    m = retention_mask(w, omega=1.0)
    s = importance_scores(w)
    np.testing.assert_array_equal(m.m, np.tanh(s))
    assert m.norm_used == "frobenius"


def test_tanh_of_half():
    assert math.tanh(0.5) == pytest.approx(0.46211715726000974, rel=1e-15)
    target = math.exp(-2.0) - 1e-8
    w = np.array([[target, math.sqrt(1.0 - target**2)]])
    assert retention_mask(w, omega=1.0).m[0, 0] == pytest.approx(0.46211715726000974, rel=1e-8)


def test_omega_saturation_monotone():
    w = random_matrix(0, 4, 4)
    vals = [retention_mask(w, omega=o).m for o in (0.5, 1, 2, 5, 20, 100)]
    for lo, hi in zip(vals, vals[1:]):
        assert np.all(hi >= lo)
    assert np.all(vals[-1] > 0.99)


def test_errors():
    with pytest.raises(NormalizationError):
        importance_scores(np.zeros((2, 2)))
    with pytest.raises(ParameterError):
        importance_scores(np.ones((2, 2)), eps=0.0)
    with pytest.raises(ParameterError):
        retention_mask(np.ones((2, 2)), omega=0.0)


def test_degenerate_single_entry_stays_below_one():
    m = retention_mask(np.array([[5.0]]), omega=1.0).m
    assert 0.0 <= m[0, 0] < 1.0


def test_spectral_option():
    w = random_matrix(3, 5, 4)
    m = retention_mask(w, norm="spectral")
    assert m.norm_used == "spectral"
    assert np.all((m.m > 0) & (m.m < 1))


@given(st.integers(0, 2**32), st.integers(1, 8), st.integers(1, 8),
       st.floats(0.01, 10.0), st.floats(1e-3, 1e3))
@settings(max_examples=60, deadline=None)
def test_properties(seed, p, q, omega, c):
    w = random_matrix(seed, p, q)
    m = retention_mask(w, omega).m
    assert np.all((m >= 0) & (m < 1))
    # monotone in |W|
    order = np.argsort(np.abs(w).ravel(), kind="stable")
    assert np.all(np.diff(m.ravel()[order]) >= 0)
    # Frobenius normalization cancels positive scale
    np.testing.assert_allclose(retention_mask(c * w, omega).m, m, rtol=1e-12, atol=0)
    # deterministic
    assert np.array_equal(retention_mask(w, omega).m, m)
