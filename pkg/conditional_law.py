#!/usr/bin/python3
"""
Frozen knots and the conditional law of the LAR knots.

Once the entered sequence i_1..i_k is fixed, the next knot coincides with the
frozen value (Z_j - Pi(Z_j)) / (1 - theta_j) of the next entered index, which
is a Gaussian variable independent of the previous ones. Its mean m_k and
unitless scale rho_k are computed here; every spacing test downstream is a
function of (knots, rho, sigma).
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Any, Optional

import numpy as np

from lar_engine import THETA_TOL, LarPath, RecursiveLar
from model_core import (
    ActiveSequence,
    CorrelationState,
    IndexLike,
    ModelError,
    SingularityError,
    pi_projection,
    theta,
)

logger = logging.getLogger(__name__)

ORDER_SLACK = 1e-9


class FrozenValueError(ModelError):
    """Raised when theta_j(active) is too close to one."""


@dataclass(frozen=True, eq=False)
class FrozenGeometry:
    """Conditional means and scales along an entered sequence.

    Attributes:
        m: Conditional means m_k, all zero under the null.
        rho: Unitless scales; the k-th frozen knot has sd sigma * rho_k.
        theta_k: theta of the k-th entered index w.r.t. the previous ones.
        sigma: Noise level the geometry was built for.
    """

    m: np.ndarray
    rho: np.ndarray
    theta_k: np.ndarray
    sigma: float

    def __len__(self) -> int:
        return int(self.rho.size)

    @property
    def sd(self) -> np.ndarray:
        return self.sigma * self.rho

    def to_dict(self) -> dict[str, Any]:
        return {
            "sigma": self.sigma,
            "m": [float(v) for v in self.m],
            "rho": [float(v) for v in self.rho],
            "theta_k": [float(v) for v in self.theta_k],
        }


def frozen_value(
    state: CorrelationState, active: ActiveSequence, j: IndexLike
) -> float:
    """(Z_j - Pi(Z_j)) / (1 - theta_j) for the given active sequence.

    Raises:
        FrozenValueError: If theta_j(active) > 1 - THETA_TOL.
        ModelError: If j is out of range or active.
    """
    if not len(active):
        raw = j if isinstance(j, int) else j.raw
        if not 0 <= raw < 2 * state.p:
            raise ModelError(f"Signed index {raw} out of range")
        return float(state.z[raw])

    th = theta(state, active, j)
    if th > 1.0 - THETA_TOL:
        raise FrozenValueError(
            f"theta={th:.12f} leaves the frozen value undefined"
        )
    raw = j if isinstance(j, int) else j.raw
    return (float(state.z[raw]) - pi_projection(state, active, j)) / (1.0 - th)


def frozen_geometry(
    state: CorrelationState,
    path: LarPath,
    sigma: float,
    truth: Optional[np.ndarray] = None,
) -> FrozenGeometry:
    """Compute m_k, rho_k and theta_k along the entered sequence of a path.

    rho_1 = sqrt(R_{i1,i1}) and, for k > 1,
    rho_k = sqrt(R_ii - R_{i,A} M^-1 R_{A,i}) / (1 - theta_i(A)).
    m_k uses the same denominator, taken as 1 for k = 1.

    Args:
        state: Correlation state the path was computed on.
        path: LAR path.
        sigma: Noise standard deviation.
        truth: beta0; when omitted m is exactly zero.

    Raises:
        SingularityError: If 1 - theta falls below tolerance at some step.
    """
    mu0 = None
    if truth is not None:
        beta = np.asarray(truth, dtype=float).reshape(-1)
        if beta.size != state.p:
            raise ModelError(
                f"Truth length {beta.size} does not match p={state.p}"
            )
        mbar = state.gram @ beta
        mu0 = np.concatenate([mbar, -mbar])

    size = len(path)
    m = np.zeros(size)
    rho = np.zeros(size)
    theta_k = np.zeros(size)
    active = ActiveSequence.empty(state)

    for k, i in enumerate(path.raw_indices):
        r_ii = state.cov(i, i)
        if k == 0:
            rho[0] = np.sqrt(r_ii)
            if mu0 is not None:
                m[0] = mu0[i]
        else:
            r = state.cov_block([i], active.indices)[0]
            w = active.solve(r)
            th = float(w.sum())
            denom = 1.0 - th
            if denom < THETA_TOL:
                raise SingularityError(
                    f"1 - theta = {denom:.3e} at step {k + 1}"
                )
            theta_k[k] = th
            rho[k] = np.sqrt(max(r_ii - float(r @ w), 0.0)) / denom
            if mu0 is not None:
                m[k] = (mu0[i] - float(w @ mu0[list(active.indices)])) / denom
        active = active.extended(i)

    return FrozenGeometry(m=m, rho=rho, theta_k=theta_k, sigma=float(sigma))


def _tau_update(
    prev: np.ndarray,
    pivot_value: float,
    t_prev: np.ndarray,
    t_new: np.ndarray,
) -> np.ndarray:
    # ratio = tau_j / tau_kk = 1 - (1 - theta_j(new)) / (1 - theta_j(prev))
    with np.errstate(divide="ignore", invalid="ignore"):
        ratio = 1.0 - (1.0 - t_new) / (1.0 - t_prev)
        return (prev - pivot_value * ratio) / (1.0 - ratio)


def frozen_values_path(state: CorrelationState, path: LarPath) -> np.ndarray:
    """Frozen values of every signed j after 0..L-1 entries.

    Row k holds Z^{(i_1..i_k)}_j, the values whose maximum is knot k + 1.
    Entries that are not admissible (active plain index, or theta above the
    tolerance) are NaN. Rows are updated with the tau-ratio recursion and
    fall back to Z(k)_j / (1 - T_j) from the deflated triple where the
    previous value was undefined.
    """
    p = state.p
    size = len(path)
    out = np.full((size, 2 * p), np.nan)
    if not size:
        return out

    rec = RecursiveLar(state)
    inactive = np.ones(2 * p, dtype=bool)
    current = state.z.astype(float).copy()
    t_prev = np.zeros(2 * p)
    out[0] = current

    for k in range(1, size):
        i = path.raw_indices[k - 1]
        pivot_value = float(current[i])
        rec.enter(i)
        inactive[i % p] = False
        inactive[i % p + p] = False

        t_new = rec.t_signed()
        updated = _tau_update(current, pivot_value, t_prev, t_new)
        with np.errstate(divide="ignore", invalid="ignore"):
            direct = rec.z_signed() / (1.0 - t_new)
        fallback = (t_prev > 1.0 - THETA_TOL) | ~np.isfinite(updated)
        current = np.where(fallback, direct, updated)

        admissible = inactive & (t_new <= 1.0 - THETA_TOL)
        out[k] = np.where(admissible, current, np.nan)
        t_prev = t_new

    return out


def verify_selection_event(state: CorrelationState, path: LarPath) -> bool:
    """Check the frozen-value ordering chain of a path.

    True iff for every step the entered index has the largest admissible
    frozen value, that value equals the recorded knot, and
    Z_{i1} >= Z^{(i1)}_{i2} >= ... holds, all within ORDER_SLACK.
    """
    try:
        frozen = frozen_values_path(state, path)
    except (SingularityError, ModelError) as exc:
        logger.debug("Selection event not verifiable: %s", exc)
        return False

    prev = float("inf")
    for k, i in enumerate(path.raw_indices):
        row = frozen[k]
        value = row[i]
        if not np.isfinite(value):
            return False
        if value < float(np.nanmax(row)) - ORDER_SLACK:
            return False
        if value > prev + ORDER_SLACK:
            return False
        knot = float(path.knots[k])
        if abs(value - knot) > ORDER_SLACK * max(1.0, abs(knot)):
            return False
        prev = value
    return True
