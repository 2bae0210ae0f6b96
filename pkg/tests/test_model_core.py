#!/usr/bin/python3
"""
Tests for the linear-model types and correlation primitives.

These tests validate that:
- Designs and responses reject malformed input.
- Signed indices encode plain index and sign consistently.
- The correlation state answers signed covariance queries from the gram.
- Active sequences keep a valid Cholesky factor and refuse singular pivots.
- theta and Pi agree with direct linear algebra.
"""

from __future__ import annotations

import numpy as np
import pytest

from model_core import (
    ActiveSequence,
    DesignMatrix,
    ModelError,
    ResponseVector,
    SignedIndex,
    SingularityError,
    build_correlation_state,
    normalize_columns,
    pi_projection,
    theta,
    theta_all,
)


def _random_state(n: int = 30, p: int = 12, seed: int = 0):
    rng = np.random.default_rng(seed)
    design = DesignMatrix(rng.standard_normal((n, p)))
    response = ResponseVector(rng.standard_normal(n))
    return design, response, build_correlation_state(design, response)


@pytest.mark.parametrize(
    "entries, match",
    [
        (np.ones(5), "2-D"),
        (np.array([[1.0, np.nan], [0.0, 1.0]]), "non-finite"),
        (np.array([[1.0, 0.0], [2.0, 0.0]]), "all-zero columns"),
    ],
)
def test_design_rejects_malformed_entries(entries: np.ndarray, match: str) -> None:
    """Ensure malformed designs raise ModelError with a clear message."""
    with pytest.raises(ModelError, match=match):
        DesignMatrix(entries)


def test_response_rejects_non_finite() -> None:
    """Ensure responses with inf are rejected."""
    with pytest.raises(ModelError, match="non-finite"):
        ResponseVector(np.array([1.0, np.inf]))


def test_signed_index_round_trip_and_partner() -> None:
    """Ensure plain index, sign and partner follow the 0-based encoding."""
    pos = SignedIndex.from_plain(2, 1, p=5)
    neg = SignedIndex.from_plain(2, -1, p=5)

    assert pos.raw == 2 and neg.raw == 7
    assert pos.plain == neg.plain == 2
    assert (pos.sign, neg.sign) == (1, -1)
    assert pos.partner == neg
    assert neg.partner == pos


def test_signed_index_out_of_range_raises() -> None:
    """Ensure raw indices outside [0, 2p) are rejected."""
    with pytest.raises(ModelError, match="out of range"):
        SignedIndex(raw=10, p=5)


def test_correlation_state_doubles_correlations() -> None:
    """Ensure Z = (X'Y, -X'Y) and the gram is X'X."""
    design, response, state = _random_state()
    zbar = design.entries.T @ response.values

    np.testing.assert_allclose(state.z[: state.p], zbar)
    np.testing.assert_allclose(state.z[state.p :], -zbar)
    np.testing.assert_allclose(state.gram, design.entries.T @ design.entries)
    assert state.rank == design.rank


def test_correlation_state_dimension_mismatch_raises() -> None:
    """Ensure a response of the wrong length is rejected."""
    design = DesignMatrix(np.eye(4))
    with pytest.raises(ModelError, match="does not match"):
        build_correlation_state(design, ResponseVector(np.ones(3)))


def test_signed_covariance_follows_signs() -> None:
    """Ensure R_ij carries the product of the two signs."""
    _, _, state = _random_state()
    p = state.p
    assert state.cov(1, 3) == pytest.approx(state.gram[1, 3])
    assert state.cov(1, 3 + p) == pytest.approx(-state.gram[1, 3])
    assert state.cov(1 + p, 3 + p) == pytest.approx(state.gram[1, 3])

    block = state.cov_columns([0, 2 + p])
    assert block.shape == (2 * p, 2)
    assert block[5, 1] == pytest.approx(state.cov(5, 2 + p))


def test_active_sequence_factor_matches_cholesky() -> None:
    """Ensure the incremental factor equals the Cholesky factor of M."""
    _, _, state = _random_state()
    p = state.p
    indices = [3, 1 + p, 7, 10 + p]
    active = ActiveSequence.from_indices(state, indices)

    m = state.cov_block(indices, indices)
    np.testing.assert_allclose(active.chol, np.linalg.cholesky(m), atol=1e-10)
    rhs = np.arange(1.0, 5.0)
    np.testing.assert_allclose(active.solve(rhs), np.linalg.solve(m, rhs))


def test_active_sequence_rejects_partner() -> None:
    """Ensure the partner of an active index cannot enter."""
    _, _, state = _random_state()
    active = ActiveSequence.from_indices(state, [2])
    with pytest.raises(ModelError, match="already active"):
        active.extended(2 + state.p)


def test_active_sequence_dependent_column_raises() -> None:
    """Ensure a column equal to an active one fails the pivot check."""
    rng = np.random.default_rng(1)
    x = rng.standard_normal((20, 3))
    x[:, 2] = x[:, 0]
    state = build_correlation_state(
        DesignMatrix(x), ResponseVector(rng.standard_normal(20))
    )
    active = ActiveSequence.from_indices(state, [0])
    with pytest.raises(SingularityError, match="below tolerance"):
        active.extended(2)


def test_theta_single_active_is_correlation_ratio() -> None:
    """Ensure theta_j({i}) = R_ji / R_ii."""
    _, _, state = _random_state()
    active = ActiveSequence.from_indices(state, [4])
    expected = state.cov(6, 4) / state.cov(4, 4)
    assert theta(state, active, 6) == pytest.approx(expected)


def test_theta_all_marks_active_and_partners() -> None:
    """Ensure theta is 1 on active indices and -1 on their partners."""
    _, _, state = _random_state()
    p = state.p
    active = ActiveSequence.from_indices(state, [0, 5 + p])
    th = theta_all(state, active)
    assert th[0] == pytest.approx(1.0)
    assert th[5 + p] == pytest.approx(1.0)
    assert th[p] == pytest.approx(-1.0)
    assert th[5] == pytest.approx(-1.0)


def test_pi_projection_matches_direct_solve() -> None:
    """Ensure Pi(Z_j) = R_jA M^-1 Z_A."""
    _, _, state = _random_state()
    indices = [2, 9]
    active = ActiveSequence.from_indices(state, indices)
    row = state.cov_block([4], indices)[0]
    m = state.cov_block(indices, indices)
    expected = row @ np.linalg.solve(m, state.z[indices])
    assert pi_projection(state, active, 4) == pytest.approx(expected)


def test_theta_query_on_active_index_raises() -> None:
    """Ensure theta refuses indices whose plain index is active."""
    _, _, state = _random_state()
    active = ActiveSequence.from_indices(state, [3])
    with pytest.raises(ModelError, match="active"):
        theta(state, active, 3 + state.p)


def test_normalize_columns_gives_unit_norms() -> None:
    """Ensure every normalized column has unit norm."""
    design, _, _ = _random_state()
    norms = np.linalg.norm(normalize_columns(design).entries, axis=0)
    np.testing.assert_allclose(norms, 1.0)
