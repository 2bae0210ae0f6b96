#!/usr/bin/python3
"""
Linear-model data types and correlation primitives.

The model is Y = X beta0 + eta. Every other module works on the doubled
correlation vector Z = (X'Y, -X'Y) and its covariance structure R, which is
never stored as a 2p x 2p matrix: signed indices carry the sign and all
queries are answered from the p x p gram matrix X'X.

Signed indices are 0-based here: raw index i in [0, 2p) encodes the plain
index j = i mod p and the sign s = +1 when i < p, s = -1 otherwise.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from functools import cached_property
from typing import Iterable, Optional, Union

import numpy as np
from scipy.linalg import cho_solve, solve_triangular

logger = logging.getLogger(__name__)

# Relative pivot tolerance for the active-set Cholesky factor.
PIVOT_TOL = 1e-10


class ModelError(ValueError):
    """Raised when model inputs are inconsistent or rejected."""


class SingularityError(ArithmeticError):
    """Raised when a factorization pivot falls below tolerance."""


@dataclass(frozen=True, eq=False)
class DesignMatrix:
    """Design matrix X with n observations and p predictors.

    All-zero columns are rejected: their gram diagonal would be zero and the
    signed covariance structure degenerate.
    """

    entries: np.ndarray

    def __post_init__(self) -> None:
        x = np.asarray(self.entries, dtype=float)
        if x.ndim != 2 or x.shape[0] < 1 or x.shape[1] < 1:
            raise ModelError(
                f"Design must be a non-empty 2-D array, got shape {x.shape}"
            )
        if not np.all(np.isfinite(x)):
            raise ModelError("Design contains non-finite entries")
        zero_cols = np.flatnonzero(~np.any(x != 0.0, axis=0))
        if zero_cols.size:
            raise ModelError(
                f"Design has all-zero columns: {zero_cols.tolist()}"
            )
        object.__setattr__(self, "entries", x)

    @property
    def n(self) -> int:
        return int(self.entries.shape[0])

    @property
    def p(self) -> int:
        return int(self.entries.shape[1])

    @cached_property
    def rank(self) -> int:
        return int(np.linalg.matrix_rank(self.entries))


@dataclass(frozen=True, eq=False)
class ResponseVector:
    """Observed response Y (length n)."""

    values: np.ndarray

    def __post_init__(self) -> None:
        y = np.asarray(self.values, dtype=float).reshape(-1)
        if y.size < 1:
            raise ModelError("Response is empty")
        if not np.all(np.isfinite(y)):
            raise ModelError("Response contains non-finite entries")
        object.__setattr__(self, "values", y)

    def __len__(self) -> int:
        return int(self.values.size)


@dataclass(frozen=True)
class SignedIndex:
    """A predictor index together with the sign it entered with.

    Attributes:
        raw: Encoded index in [0, 2p).
        p: Number of predictors.
    """

    raw: int
    p: int

    def __post_init__(self) -> None:
        if self.p < 1 or not 0 <= self.raw < 2 * self.p:
            raise ModelError(
                f"Signed index {self.raw} out of range for p={self.p}"
            )

    @classmethod
    def from_plain(cls, j: int, sign: int, p: int) -> "SignedIndex":
        if sign not in (1, -1):
            raise ModelError(f"Sign must be +1 or -1, got {sign}")
        if not 0 <= j < p:
            raise ModelError(f"Plain index {j} out of range for p={p}")
        return cls(raw=j if sign == 1 else j + p, p=p)

    @property
    def plain(self) -> int:
        return self.raw % self.p

    @property
    def sign(self) -> int:
        return 1 if self.raw < self.p else -1

    @property
    def partner(self) -> "SignedIndex":
        return SignedIndex(raw=(self.raw + self.p) % (2 * self.p), p=self.p)


IndexLike = Union[SignedIndex, int]


def _raw(j: IndexLike) -> int:
    return j.raw if isinstance(j, SignedIndex) else int(j)


@dataclass(frozen=True, eq=False)
class CorrelationState:
    """Doubled correlation vector and gram matrix of an instance.

    Attributes:
        z: Z = (Zbar, -Zbar), length 2p.
        gram: Rbar = X'X, p x p.
        mu0: (Rbar beta0, -Rbar beta0) when the truth is known.
        rank: Rank of X when known; computed from the gram otherwise.
    """

    z: np.ndarray
    gram: np.ndarray
    mu0: Optional[np.ndarray] = None
    rank: Optional[int] = None

    @property
    def p(self) -> int:
        return int(self.gram.shape[0])

    @cached_property
    def pivot_floor(self) -> float:
        return PIVOT_TOL * float(np.max(np.diag(self.gram)))

    def plain_of(self, raw: np.ndarray) -> np.ndarray:
        return np.asarray(raw) % self.p

    def sign_of(self, raw: np.ndarray) -> np.ndarray:
        return np.where(np.asarray(raw) < self.p, 1.0, -1.0)

    def cov(self, i: IndexLike, j: IndexLike) -> float:
        """Signed covariance R_ij."""
        i, j = _raw(i), _raw(j)
        p = self.p
        si = 1.0 if i < p else -1.0
        sj = 1.0 if j < p else -1.0
        return si * sj * float(self.gram[i % p, j % p])

    def cov_columns(self, cols: Iterable[int]) -> np.ndarray:
        """Columns R[:, cols] for every signed row, shape (2p, k)."""
        cols = np.fromiter((_raw(c) for c in cols), dtype=int)
        block = self.gram[:, self.plain_of(cols)] * self.sign_of(cols)
        return np.vstack([block, -block])

    def cov_block(self, rows: Iterable[int], cols: Iterable[int]) -> np.ndarray:
        rows = np.fromiter((_raw(r) for r in rows), dtype=int)
        cols = np.fromiter((_raw(c) for c in cols), dtype=int)
        g = self.gram[np.ix_(self.plain_of(rows), self.plain_of(cols))]
        return g * np.outer(self.sign_of(rows), self.sign_of(cols))


@dataclass(frozen=True, eq=False)
class ActiveSequence:
    """Ordered signed indices with a lower Cholesky factor of M.

    M is the signed covariance submatrix R restricted to the active indices.
    Instances are immutable; `extended` returns a new sequence whose factor
    is the old one with a single row appended.
    """

    state: CorrelationState
    indices: tuple[int, ...] = ()
    chol: np.ndarray = field(default_factory=lambda: np.zeros((0, 0)))

    @classmethod
    def empty(cls, state: CorrelationState) -> "ActiveSequence":
        return cls(state=state)

    @classmethod
    def from_indices(
        cls, state: CorrelationState, indices: Iterable[IndexLike]
    ) -> "ActiveSequence":
        seq = cls.empty(state)
        for i in indices:
            seq = seq.extended(i)
        return seq

    def __len__(self) -> int:
        return len(self.indices)

    @property
    def plain(self) -> tuple[int, ...]:
        p = self.state.p
        return tuple(i % p for i in self.indices)

    def contains_plain(self, j: IndexLike) -> bool:
        return _raw(j) % self.state.p in self.plain

    def extended(self, i: IndexLike) -> "ActiveSequence":
        """Append one index and update the factor in O(k^2).

        Raises:
            ModelError: If the plain index is already active.
            SingularityError: If the new pivot is below tolerance.
        """
        i = _raw(i)
        if not 0 <= i < 2 * self.state.p:
            raise ModelError(f"Signed index {i} out of range")
        if self.contains_plain(i):
            raise ModelError(f"Plain index {i % self.state.p} already active")

        k = len(self.indices)
        diag = self.state.cov(i, i)
        if k:
            m_col = self.state.cov_block(self.indices, [i])[:, 0]
            row = solve_triangular(self.chol, m_col, lower=True)
            pivot = diag - float(row @ row)
        else:
            row = np.zeros(0)
            pivot = diag

        if pivot <= self.state.pivot_floor:
            raise SingularityError(
                f"Pivot {pivot:.3e} below tolerance when adding index {i}"
            )

        chol = np.zeros((k + 1, k + 1))
        chol[:k, :k] = self.chol
        chol[k, :k] = row
        chol[k, k] = np.sqrt(pivot)
        return ActiveSequence(
            state=self.state, indices=self.indices + (i,), chol=chol
        )

    def solve(self, rhs: np.ndarray) -> np.ndarray:
        """Return M^-1 rhs."""
        return cho_solve((self.chol, True), rhs)


def build_correlation_state(
    design: DesignMatrix,
    response: ResponseVector,
    truth: Optional[np.ndarray] = None,
) -> CorrelationState:
    """Build Z = (X'Y, -X'Y), the gram X'X and optionally mu0.

    Args:
        design: Design matrix X.
        response: Response Y, same row count as X.
        truth: Optional coefficient vector beta0 (simulation only).

    Returns:
        The correlation state of the instance.

    Raises:
        ModelError: On any dimension mismatch.
    """
    x = design.entries
    if len(response) != design.n:
        raise ModelError(
            f"Response length {len(response)} does not match "
            f"design rows {design.n}"
        )

    zbar = x.T @ response.values
    gram = x.T @ x
    gram = 0.5 * (gram + gram.T)

    mu0 = None
    if truth is not None:
        beta = np.asarray(truth, dtype=float).reshape(-1)
        if beta.size != design.p:
            raise ModelError(
                f"Truth length {beta.size} does not match p={design.p}"
            )
        mbar = gram @ beta
        mu0 = np.concatenate([mbar, -mbar])

    return CorrelationState(
        z=np.concatenate([zbar, -zbar]),
        gram=gram,
        mu0=mu0,
        rank=design.rank,
    )


def normalize_columns(design: DesignMatrix) -> DesignMatrix:
    """Scale every column of X to unit Euclidean norm."""
    x = design.entries
    return DesignMatrix(x / np.linalg.norm(x, axis=0))


def _check_query(active: ActiveSequence, j: IndexLike) -> int:
    j = _raw(j)
    if not len(active):
        raise ModelError("Active sequence is empty")
    if not 0 <= j < 2 * active.state.p:
        raise ModelError(f"Signed index {j} out of range")
    if active.contains_plain(j):
        raise ModelError(f"Index {j} is active (or its partner is)")
    return j


def theta_all(state: CorrelationState, active: ActiveSequence) -> np.ndarray:
    """theta_j(active) for every signed j, length 2p.

    Entries of active indices are 1 and those of their partners -1. An empty
    active sequence gives all zeros.
    """
    if not len(active):
        return np.zeros(2 * state.p)
    cols = state.cov_columns(active.indices)
    return cols @ active.solve(np.ones(len(active)))


def pi_all(state: CorrelationState, active: ActiveSequence) -> np.ndarray:
    """Projection Pi(Z_j) of every signed Z_j on the active Z's."""
    if not len(active):
        return np.zeros(2 * state.p)
    cols = state.cov_columns(active.indices)
    return cols @ active.solve(state.z[list(active.indices)])


def theta(
    state: CorrelationState, active: ActiveSequence, j: IndexLike
) -> float:
    """Return theta_j(active) = R_{j,A} M^-1 1.

    Raises:
        ModelError: If active is empty or j's plain index is active.
    """
    j = _check_query(active, j)
    row = state.cov_block([j], active.indices)[0]
    return float(row @ active.solve(np.ones(len(active))))


def pi_projection(
    state: CorrelationState, active: ActiveSequence, j: IndexLike
) -> float:
    """Return Pi(Z_j) = R_{j,A} M^-1 Z_A.

    Raises:
        ModelError: If active is empty or j's plain index is active.
    """
    j = _check_query(active, j)
    row = state.cov_block([j], active.indices)[0]
    return float(row @ active.solve(state.z[list(active.indices)]))
