#!/usr/bin/python3
"""
Spacing p-value sequence, Benjamini-Hochberg rejection and FDP accounting.

Hypotheses are indexed by LAR step k = 1..K: the k-th hypothesis tests the
variable entered at step k through p_k = alpha_{k-1,k,k+1}.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Any, Iterable, Optional

import numpy as np

from conditional_law import FrozenGeometry, frozen_geometry
from inference import gst_pvalue
from lar_engine import LarPath
from model_core import CorrelationState

logger = logging.getLogger(__name__)

# |projected mean| at or below this marks a null step in general designs.
NULL_MEAN_TOL = 1e-8


class MultipleTestingError(ValueError):
    """Raised on an invalid level or mismatched inputs."""


@dataclass(frozen=True, eq=False)
class PValueSequence:
    """p_1..p_K with the route that produced each value."""

    values: np.ndarray
    methods: tuple[str, ...]

    def __post_init__(self) -> None:
        v = np.asarray(self.values, dtype=float).reshape(-1)
        if v.size and (v.min() < 0.0 or v.max() > 1.0):
            raise MultipleTestingError("p-values must lie in [0, 1]")
        if len(self.methods) != v.size:
            raise MultipleTestingError("one method tag per p-value expected")
        object.__setattr__(self, "values", v)

    def __len__(self) -> int:
        return int(self.values.size)

    def to_dict(self) -> dict[str, Any]:
        return {
            "values": [float(x) for x in self.values],
            "methods": list(self.methods),
        }


@dataclass(frozen=True)
class RejectionSet:
    """Rejected steps (1-based) with the BH threshold rank k_hat."""

    rejected: frozenset[int]
    k_hat: int
    alpha: float

    def __len__(self) -> int:
        return len(self.rejected)

    def to_dict(self) -> dict[str, Any]:
        return {
            "rejected": sorted(self.rejected),
            "k_hat": self.k_hat,
            "alpha": self.alpha,
        }


def spacing_pvalue_sequence(
    path: LarPath,
    geometry: FrozenGeometry,
    sigma: float,
    K: Optional[int] = None,
) -> PValueSequence:
    """p_k = alpha_{k-1,k,k+1} for k = 1..K through the consecutive closed form.

    Raises:
        InferenceError: If the path holds fewer than K + 1 knots, sigma <= 0,
            or the irrepresentable check does not cover step K.
    """
    K = len(path) - 1 if K is None else K
    values = []
    methods = []
    for k in range(1, K + 1):
        report = gst_pvalue(path, geometry, sigma, k - 1, k, k + 1)
        values.append(report.p_value)
        methods.append(report.method)
    return PValueSequence(values=np.asarray(values), methods=tuple(methods))


def bh_reject(pvalues: PValueSequence, alpha: float) -> RejectionSet:
    """Benjamini-Hochberg step-up at level alpha.

    k_hat = max{k : p_(k) <= alpha k / K}; the rejected set is
    {k : p_k <= alpha k_hat / K}, empty when no rank qualifies. alpha = 0
    never rejects.
    """
    if not 0.0 <= alpha <= 1.0:
        raise MultipleTestingError(f"alpha must lie in [0, 1], got {alpha}")
    p = pvalues.values
    K = p.size
    if K == 0 or alpha == 0.0:
        return RejectionSet(rejected=frozenset(), k_hat=0, alpha=alpha)

    ordered = np.sort(p, kind="stable")
    thresholds = alpha * np.arange(1, K + 1) / K
    passing = np.flatnonzero(ordered <= thresholds)
    if not passing.size:
        return RejectionSet(rejected=frozenset(), k_hat=0, alpha=alpha)

    k_hat = int(passing[-1]) + 1
    cut = alpha * k_hat / K
    rejected = frozenset(int(k) + 1 for k in np.flatnonzero(p <= cut))
    logger.debug("BH: k_hat=%d, %d rejections", k_hat, len(rejected))
    return RejectionSet(rejected=rejected, k_hat=k_hat, alpha=alpha)


def fdp(rejected: RejectionSet, null_set: Iterable[int]) -> float:
    """FP / (FP + TP), zero when nothing is rejected."""
    if not rejected.rejected:
        return 0.0
    false_pos = len(rejected.rejected & frozenset(null_set))
    return false_pos / len(rejected.rejected)


def _is_orthogonal(gram: np.ndarray) -> bool:
    off = gram - np.diag(np.diag(gram))
    return bool(np.max(np.abs(off)) <= 1e-10 * float(np.max(np.diag(gram))))


def null_set_from_truth(
    state: CorrelationState,
    path: LarPath,
    truth: np.ndarray,
    K: Optional[int] = None,
) -> frozenset[int]:
    """Steps k in 1..K whose hypothesis is null under beta0 = truth.

    Orthogonal designs: k is null iff the variable entered at step k has a
    zero coefficient. Other designs: k is null iff the projected mean of the
    entered variable given the earlier ones vanishes.
    """
    beta = np.asarray(truth, dtype=float).reshape(-1)
    if beta.size != state.p:
        raise MultipleTestingError(
            f"Truth length {beta.size} does not match p={state.p}"
        )
    K = len(path) if K is None else min(K, len(path))

    if _is_orthogonal(state.gram):
        plain = path.plain_indices
        return frozenset(k for k in range(1, K + 1) if beta[plain[k - 1]] == 0.0)

    geometry = frozen_geometry(state, path, 1.0, truth=beta)
    scale = max(1.0, float(np.max(np.abs(state.gram @ beta))))
    return frozenset(
        k
        for k in range(1, K + 1)
        if abs(float(geometry.m[k - 1])) <= NULL_MEAN_TOL * scale
    )
