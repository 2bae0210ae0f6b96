#!/usr/bin/python3
"""
Least Angle Regression path.

Three formulations compute the same knots and entered signed indices:

- standard: residual correlations N are moved along the equiangular
  direction between knots and the next crossing is solved for.
- projected: each knot is the largest frozen value
  (Z_j - Pi(Z_j)) / (1 - theta_j) over admissible j.
- recursive: a (R, Z, T) triple is deflated by one pivot per step and each
  knot is max Z_j / (1 - T_j).

An index j is admissible when its plain index is inactive and
theta_j <= 1 - THETA_TOL. Paths that run out of admissible indices, reach the
design rank or hit a zero knot are returned truncated with a PathStatus
instead of raising.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from enum import Enum
from typing import Any, Callable, Optional, Sequence

import numpy as np

from model_core import (
    ActiveSequence,
    CorrelationState,
    DesignMatrix,
    ModelError,
    SignedIndex,
    SingularityError,
    pi_all,
    theta_all,
)

logger = logging.getLogger(__name__)

THETA_TOL = 1e-10
TIE_TOL = 1e-12
# Knots at or below ZERO_KNOT_RTOL * lambda_1 are treated as zero.
ZERO_KNOT_RTOL = 1e-13


class PathStatus(str, Enum):
    """Why a path stopped."""

    COMPLETE = "complete"
    NO_ADMISSIBLE = "no-admissible"
    RANK_EXHAUSTED = "rank-exhausted"
    ZERO_KNOT = "zero-knot"


@dataclass(frozen=True, eq=False)
class LarPath:
    """Knots and entered variables of a LAR run.

    Attributes:
        knots: lambda_1 >= lambda_2 >= ...
        signed: Entered signed indices, one per knot.
        theta_max_per_step: Entry k is the largest theta_j over inactive j
            with respect to the first k entered indices.
        irrepresentable_upto: Largest k such that every inactive theta_j
            stayed below one for the first 1..k entered indices.
        status: Truncation status.
        tie: True when some argmax was decided by the lowest-index rule.
        requested: Number of knots asked for.
        formulation: Which formulation produced the path.
    """

    knots: np.ndarray
    signed: tuple[SignedIndex, ...]
    theta_max_per_step: np.ndarray
    irrepresentable_upto: int
    status: PathStatus
    tie: bool
    requested: int
    formulation: str

    def __len__(self) -> int:
        return len(self.signed)

    @property
    def raw_indices(self) -> tuple[int, ...]:
        return tuple(s.raw for s in self.signed)

    @property
    def plain_indices(self) -> tuple[int, ...]:
        return tuple(s.plain for s in self.signed)

    @property
    def signs(self) -> tuple[int, ...]:
        return tuple(s.sign for s in self.signed)

    @property
    def truncated(self) -> bool:
        return self.status is not PathStatus.COMPLETE

    def knot(self, k: int) -> float:
        """lambda_k with 1-based k; lambda_0 is +inf."""
        if k == 0:
            return float("inf")
        return float(self.knots[k - 1])

    def to_dict(self) -> dict[str, Any]:
        return {
            "formulation": self.formulation,
            "requested": self.requested,
            "knots": [float(v) for v in self.knots],
            "plain_indices": list(self.plain_indices),
            "signs": list(self.signs),
            "raw_indices": list(self.raw_indices),
            "theta_max_per_step": [float(v) for v in self.theta_max_per_step],
            "irrepresentable_upto": self.irrepresentable_upto,
            "status": self.status.value,
            "tie": self.tie,
        }


@dataclass
class _PathBuilder:
    state: CorrelationState
    requested: int
    formulation: str
    knots: list[float] = field(default_factory=list)
    raw: list[int] = field(default_factory=list)
    theta_max: list[float] = field(default_factory=list)
    tie: bool = False

    def __post_init__(self) -> None:
        if self.requested < 1:
            raise ModelError(f"steps must be >= 1, got {self.requested}")
        self.active_mask = np.zeros(2 * self.state.p, dtype=bool)

    @property
    def limit(self) -> int:
        return min(self.requested, _rank(self.state))

    def _inactive_theta_max(self, theta_vec: np.ndarray) -> float:
        rest = theta_vec[~self.active_mask]
        return float(rest.max()) if rest.size else float("-inf")

    def choose(
        self, values: np.ndarray, theta_vec: np.ndarray
    ) -> Optional[tuple[int, float]]:
        admissible = (~self.active_mask) & (theta_vec <= 1.0 - THETA_TOL)
        if not admissible.any():
            return None
        cand = np.where(admissible, values, -np.inf)
        best = float(cand.max())
        if not np.isfinite(best):
            return None
        ties = np.flatnonzero(cand >= best - TIE_TOL * max(1.0, abs(best)))
        if ties.size > 1:
            self.tie = True
            logger.debug(
                "Tie among signed indices %s at step %d",
                ties.tolist(),
                len(self.knots) + 1,
            )
        self.theta_max.append(self._inactive_theta_max(theta_vec))
        i = int(ties[0])
        return i, float(cand[i])

    def push(self, i: int, knot: float) -> float:
        """Record an entry and return the stored knot.

        Non-positive knots, and round-off residues relative to lambda_1, are
        stored as an exact 0.
        """
        p = self.state.p
        scale = self.knots[0] if self.knots else 0.0
        if knot <= ZERO_KNOT_RTOL * scale:
            knot = 0.0
        self.raw.append(i)
        self.knots.append(knot)
        self.active_mask[i % p] = True
        self.active_mask[i % p + p] = True
        return knot

    def build(
        self, status: PathStatus, final_theta: Optional[np.ndarray]
    ) -> LarPath:
        upto = 0
        maxima = list(self.theta_max[1:])
        if final_theta is not None:
            maxima.append(self._inactive_theta_max(final_theta))
        for value in maxima:
            if value > 1.0 - THETA_TOL:
                break
            upto += 1
        upto = min(upto, len(self.raw))

        if status is not PathStatus.COMPLETE:
            logger.info(
                "%s path truncated after %d of %d knots (%s)",
                self.formulation,
                len(self.raw),
                self.requested,
                status.value,
            )
        p = self.state.p
        return LarPath(
            knots=np.asarray(self.knots, dtype=float),
            signed=tuple(SignedIndex(raw=i, p=p) for i in self.raw),
            theta_max_per_step=np.asarray(self.theta_max, dtype=float),
            irrepresentable_upto=upto,
            status=status,
            tie=self.tie,
            requested=self.requested,
            formulation=self.formulation,
        )


def _rank(state: CorrelationState) -> int:
    rank = getattr(state, "rank", None)
    if rank is None:
        rank = int(np.linalg.matrix_rank(state.gram, hermitian=True))
    return int(rank)


def _initial_status(builder: _PathBuilder) -> PathStatus:
    if builder.requested > builder.limit:
        return PathStatus.RANK_EXHAUSTED
    return PathStatus.COMPLETE


def lar_path_standard(state: CorrelationState, steps: int) -> LarPath:
    """LAR through the residual-correlation recursion.

    Between knots the residual correlations move as
    N(lambda) = N_prev - (lambda_prev - lambda) * theta, and the next knot is
    the largest lambda at which an admissible N_j(lambda) reaches lambda.

    Args:
        state: Correlation state of the instance.
        steps: Number of knots to compute.

    Returns:
        The LAR path, possibly truncated.

    Raises:
        SingularityError: If an entered index makes M singular.
    """
    builder = _PathBuilder(state, steps, "standard")
    status = _initial_status(builder)
    active = ActiveSequence.empty(state)
    resid = state.z.copy()
    lam_prev = float("inf")
    theta_vec = np.zeros(2 * state.p)

    for k in range(builder.limit):
        if k:
            with np.errstate(divide="ignore", invalid="ignore"):
                values = (resid - lam_prev * theta_vec) / (1.0 - theta_vec)
        else:
            values = resid

        choice = builder.choose(values, theta_vec)
        if choice is None:
            status = PathStatus.NO_ADMISSIBLE
            break
        i, lam = choice
        lam = builder.push(i, lam)

        if k:
            resid = resid - (lam_prev - lam) * theta_vec
        active = active.extended(i)
        lam_prev = lam
        theta_vec = theta_all(state, active)

        if lam == 0.0:
            status = PathStatus.ZERO_KNOT
            break

    return builder.build(status, theta_vec if len(active) else None)


def lar_path_projected(state: CorrelationState, steps: int) -> LarPath:
    """LAR as a sequence of maximal frozen values.

    Each knot is the max over admissible j of
    (Z_j - Pi(Z_j)) / (1 - theta_j) with respect to the current active set.
    """
    builder = _PathBuilder(state, steps, "projected")
    status = _initial_status(builder)
    active = ActiveSequence.empty(state)
    theta_vec = np.zeros(2 * state.p)

    for _ in range(builder.limit):
        with np.errstate(divide="ignore", invalid="ignore"):
            values = (state.z - pi_all(state, active)) / (1.0 - theta_vec)

        choice = builder.choose(values, theta_vec)
        if choice is None:
            status = PathStatus.NO_ADMISSIBLE
            break
        i, lam = choice
        lam = builder.push(i, lam)
        active = active.extended(i)
        theta_vec = theta_all(state, active)

        if lam == 0.0:
            status = PathStatus.ZERO_KNOT
            break

    return builder.build(status, theta_vec if len(active) else None)


class RecursiveLar:
    """Deflated (R, Z, T) triple in plain coordinates.

    The signed triple is recovered by sign bookkeeping: Z = (zbar, -zbar),
    T = (tbar, -tbar), and R keeps the block structure of the gram. After the
    indices i_1..i_k entered, T_j equals theta_j(i_1..i_k) and Z_j equals
    Z_j - Pi(Z_j).
    """

    def __init__(self, state: CorrelationState) -> None:
        self.state = state
        self.gram = state.gram.copy()
        self.zbar = state.z[: state.p].copy()
        self.tbar = np.zeros(state.p)
        self.entered: list[int] = []

    def t_signed(self) -> np.ndarray:
        return np.concatenate([self.tbar, -self.tbar])

    def z_signed(self) -> np.ndarray:
        return np.concatenate([self.zbar, -self.zbar])

    def values(self) -> np.ndarray:
        with np.errstate(divide="ignore", invalid="ignore"):
            return self.z_signed() / (1.0 - self.t_signed())

    def enter(self, raw: int) -> None:
        """Deflate the triple by the pivot of signed index raw.

        Raises:
            SingularityError: If the residual variance R_ii is below tolerance.
        """
        p = self.state.p
        j, s = raw % p, (1.0 if raw < p else -1.0)
        pivot = float(self.gram[j, j])
        if pivot <= self.state.pivot_floor:
            raise SingularityError(
                f"R_ii={pivot:.3e} below tolerance for index {raw}"
            )
        col = self.gram[:, j].copy()
        self.zbar = self.zbar - col * (self.zbar[j] / pivot)
        self.tbar = self.tbar + col * ((s - self.tbar[j]) / pivot)
        self.gram = self.gram - np.outer(col, col) / pivot
        self.entered.append(raw)


def lar_path_recursive(state: CorrelationState, steps: int) -> LarPath:
    """LAR via the deflation recursion x = R_i / R_ii.

    R <- R - x R_i', Z <- Z - x Z_i, T <- T + x (1 - T_i), and each knot is
    max over admissible j of Z_j / (1 - T_j).
    """
    builder = _PathBuilder(state, steps, "recursive")
    status = _initial_status(builder)
    rec = RecursiveLar(state)

    for _ in range(builder.limit):
        choice = builder.choose(rec.values(), rec.t_signed())
        if choice is None:
            status = PathStatus.NO_ADMISSIBLE
            break
        i, lam = choice
        lam = builder.push(i, lam)
        rec.enter(i)

        if lam == 0.0:
            status = PathStatus.ZERO_KNOT
            break

    return builder.build(status, rec.t_signed() if rec.entered else None)


FORMULATIONS: dict[str, Callable[[CorrelationState, int], LarPath]] = {
    "standard": lar_path_standard,
    "projected": lar_path_projected,
    "recursive": lar_path_recursive,
}


def lar_path(
    state: CorrelationState, steps: int, formulation: str = "recursive"
) -> LarPath:
    """Dispatch to a named formulation."""
    try:
        fn = FORMULATIONS[formulation]
    except KeyError as exc:
        raise ModelError(
            f"Unsupported formulation={formulation!r}. "
            f"Allowed: {sorted(FORMULATIONS)}"
        ) from exc
    return fn(state, steps)


def paths_agree(paths: Sequence[LarPath], rtol: float = 1e-8) -> bool:
    """True when all paths share indices and knots up to rtol."""
    first = paths[0]
    for other in paths[1:]:
        if other.raw_indices != first.raw_indices:
            return False
        if not np.allclose(other.knots, first.knots, rtol=rtol, atol=0.0):
            return False
    return True


def irrepresentable_check(
    state: CorrelationState, path: LarPath, upto: int
) -> int:
    """Largest k <= upto with theta_j(i_1..i_l) <= 1 - THETA_TOL for all l <= k.

    The maximum runs over every signed j whose plain index is not among the
    first l entered ones, so both signs of an inactive predictor count.
    `upto` is clamped to the path length.

    Returns:
        K_max, 0 when the check already fails after the first entry.
    """
    upto = min(int(upto), len(path))
    p = state.p
    active = ActiveSequence.empty(state)
    mask = np.ones(2 * p, dtype=bool)
    kmax = 0
    for ell in range(1, upto + 1):
        i = path.raw_indices[ell - 1]
        active = active.extended(i)
        mask[i % p] = False
        mask[i % p + p] = False
        th = theta_all(state, active)[mask]
        if th.size and float(th.max()) > 1.0 - THETA_TOL:
            logger.debug("Irrepresentable check fails at step %d", ell)
            break
        kmax = ell
    return kmax


def theta_x_space(
    design: DesignMatrix,
    active_plain: Sequence[int],
    signs: Sequence[int],
    j: int,
) -> float:
    """X_j' X_T (X_T' X_T)^-1 s, the design-space irrepresentable term."""
    x = design.entries
    xt = x[:, list(active_plain)]
    coef = np.linalg.solve(xt.T @ xt, np.asarray(signs, dtype=float))
    return float(x[:, j] @ (xt @ coef))
