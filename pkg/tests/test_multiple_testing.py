#!/usr/bin/python3
"""
Tests for the spacing p-value sequence and BH rejection.

These tests validate that:
- BH rejects the expected steps on small hand-checked inputs.
- alpha = 0 never rejects and larger alpha never rejects less.
- The sequence p_k uses consecutive spacings of the knots.
- Null steps are read off the truth in orthogonal and general designs.
"""

from __future__ import annotations

import math

import numpy as np
import pytest

from conditional_law import frozen_geometry
from lar_engine import lar_path
from model_core import DesignMatrix, ResponseVector, build_correlation_state
from multiple_testing import (
    MultipleTestingError,
    PValueSequence,
    RejectionSet,
    bh_reject,
    fdp,
    null_set_from_truth,
    spacing_pvalue_sequence,
)


def _upper(x: float) -> float:
    return 0.5 * math.erfc(x / math.sqrt(2.0))


def _seq(*values: float) -> PValueSequence:
    return PValueSequence(
        values=np.asarray(values), methods=("closed-form",) * len(values)
    )


def test_bh_all_ones_rejects_nothing() -> None:
    """Ensure p = 1 everywhere gives an empty set."""
    result = bh_reject(_seq(1.0, 1.0, 1.0), 0.2)
    assert result.rejected == frozenset()
    assert result.k_hat == 0


def test_bh_all_zeros_rejects_everything() -> None:
    """Ensure p = 0 everywhere rejects every step with k_hat = K."""
    result = bh_reject(_seq(0.0, 0.0, 0.0, 0.0), 0.1)
    assert result.rejected == {1, 2, 3, 4}
    assert result.k_hat == 4


def test_bh_hand_checked_example() -> None:
    """Ensure (0.01, 0.04, 0.5) at alpha 0.2 rejects steps 1 and 2."""
    result = bh_reject(_seq(0.01, 0.04, 0.5), 0.2)
    assert result.rejected == {1, 2}
    assert result.k_hat == 2


def test_bh_step_up_on_unsorted_input() -> None:
    """Ensure the threshold rank is found on sorted values and mapped back."""
    result = bh_reject(_seq(0.03, 0.9, 0.02, 0.05), 0.2)
    assert result.k_hat == 3
    assert result.rejected == {1, 3, 4}


def test_bh_zero_alpha_never_rejects() -> None:
    """Ensure alpha = 0 gives an empty set even for zero p-values."""
    assert bh_reject(_seq(0.0, 0.0), 0.0).rejected == frozenset()


def test_bh_is_monotone_in_alpha() -> None:
    """Ensure raising alpha never shrinks the rejected set."""
    rng = np.random.default_rng(0)
    seq = _seq(*rng.uniform(size=12) ** 2)
    previous: frozenset[int] = frozenset()
    for alpha in np.linspace(0.0, 1.0, 21):
        current = bh_reject(seq, float(alpha)).rejected
        assert previous <= current
        previous = current


def test_bh_rejects_invalid_alpha() -> None:
    """Ensure alpha outside [0, 1] is rejected."""
    with pytest.raises(MultipleTestingError, match="alpha"):
        bh_reject(_seq(0.5), 1.5)


def test_pvalue_sequence_validates_entries() -> None:
    """Ensure values outside [0, 1] and missing method tags are rejected."""
    with pytest.raises(MultipleTestingError, match=r"\[0, 1\]"):
        _seq(0.2, 1.2)
    with pytest.raises(MultipleTestingError, match="method"):
        PValueSequence(values=np.array([0.1, 0.2]), methods=("qmc",))


def test_fdp_counts_false_rejections() -> None:
    """Ensure FDP = FP / (FP + TP) and zero without rejections."""
    rejected = RejectionSet(rejected=frozenset({1, 2, 3}), k_hat=3, alpha=0.1)
    assert fdp(rejected, {3, 5}) == pytest.approx(1.0 / 3.0)
    empty = RejectionSet(rejected=frozenset(), k_hat=0, alpha=0.1)
    assert fdp(empty, {1, 2}) == 0.0


def test_spacing_sequence_matches_consecutive_formula() -> None:
    """Ensure p_k = (Q(l_k) - Q(l_{k-1})) / (Q(l_{k+1}) - Q(l_{k-1}))."""
    y = np.array([3.0, 2.0, 1.0, 0.5])
    state = build_correlation_state(DesignMatrix(np.eye(4)), ResponseVector(y))
    path = lar_path(state, 4)
    seq = spacing_pvalue_sequence(path, frozen_geometry(state, path, 1.0), 1.0, K=3)

    lam = [math.inf, 3.0, 2.0, 1.0, 0.5]
    q = [0.0 if math.isinf(v) else _upper(v) for v in lam]
    expected = [(q[k] - q[k - 1]) / (q[k + 1] - q[k - 1]) for k in (1, 2, 3)]
    np.testing.assert_allclose(seq.values, expected, rtol=1e-10)
    assert seq.methods == ("closed-form",) * 3


def test_spacing_sequence_equal_knots_give_one() -> None:
    """Ensure lambda_k = lambda_{k+1} yields p_k = 1."""
    y = np.array([2.0, 1.0, -1.0, 0.5])
    state = build_correlation_state(DesignMatrix(np.eye(4)), ResponseVector(y))
    path = lar_path(state, 4)
    seq = spacing_pvalue_sequence(path, frozen_geometry(state, path, 1.0), 1.0, K=3)
    assert seq.values[1] == 1.0


def test_null_set_orthogonal_uses_support() -> None:
    """Ensure a step is null iff its variable has a zero coefficient."""
    y = np.array([5.0, -4.0, 0.1, 0.2, 0.3])
    truth = np.array([5.0, -4.0, 0.0, 0.0, 0.0])
    state = build_correlation_state(DesignMatrix(np.eye(5)), ResponseVector(y))
    path = lar_path(state, 5)
    assert null_set_from_truth(state, path, truth, K=4) == {3, 4}


def test_null_set_general_design() -> None:
    """Ensure the projected mean marks steps as null in a correlated design."""
    rng = np.random.default_rng(1)
    x = rng.standard_normal((40, 15))
    x /= np.linalg.norm(x, axis=0)
    truth = np.zeros(15)
    truth[0] = 10.0
    y = x @ truth + 0.1 * rng.standard_normal(40)
    state = build_correlation_state(DesignMatrix(x), ResponseVector(y))
    path = lar_path(state, 5)

    assert null_set_from_truth(state, path, np.zeros(15)) == {1, 2, 3, 4, 5}
    assert 1 not in null_set_from_truth(state, path, truth)


def test_null_set_rejects_wrong_length() -> None:
    """Ensure a truth vector of the wrong size is rejected."""
    state = build_correlation_state(
        DesignMatrix(np.eye(3)), ResponseVector(np.array([1.0, 2.0, 3.0]))
    )
    path = lar_path(state, 2)
    with pytest.raises(MultipleTestingError, match="does not match"):
        null_set_from_truth(state, path, np.zeros(4))
