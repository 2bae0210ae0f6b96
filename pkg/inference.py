#!/usr/bin/python3
"""
Spacing-test p-values, model-size selection and false-negative testing.

Variance is estimated on two orthogonal pieces of the residual space of the
first K + 1 entered predictors: sigma_select (n1 degrees of freedom) feeds
the selection stage, sigma_test (n2 degrees of freedom) the final test. The
two are independent of each other and of the knots.

A selection rule is a stopping time: when deciding at size a it sees the
knot prefix lambda_1..lambda_{a+2}, the entered indices and sigma_select, and
nothing else. StoppingView carries exactly those inputs.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Any, Optional, Sequence, Union

import numpy as np
from scipy import linalg
from scipy.special import ndtr

from conditional_law import FrozenGeometry, frozen_geometry
from lar_engine import LarPath, irrepresentable_check, lar_path
from model_core import (
    DesignMatrix,
    ResponseVector,
    SignedIndex,
    build_correlation_state,
)
from quadrature import (
    DegenerateRatioError,
    LatticeRule,
    QmcEstimate,
    gaussian_spacing_closed_form,
    gaussian_tail_ratio,
    ortho_pvalue_tails,
    student_spacing_closed_form,
    student_tail_ratio,
)

logger = logging.getLogger(__name__)

CLOSED_FORM = "closed-form"
QMC = "qmc"
BETA_SHORTCUT = "beta-shortcut"
STUDENTIZED_QMC = "studentized-qmc"

ORTHO_RTOL = 1e-12
SUBSPACE_TOL = 1e-10


class InferenceError(RuntimeError):
    """Raised when a test cannot be carried out on the given inputs."""


class RefusalError(InferenceError):
    """Raised when the irrepresentable check does not cover the test."""


class UnreliableEstimateError(InferenceError):
    """Raised when the QMC denominator is within noise of zero."""


@dataclass(frozen=True, eq=False)
class VarianceSplit:
    """Two independent residual-based estimates of sigma.

    Attributes:
        sigma_select: ||P_E1 Y|| / sqrt(n1).
        sigma_test: ||P_E2 Y|| / sqrt(n2).
        n1: dim E1, degrees of freedom of sigma_select.
        n2: dim E2, degrees of freedom of sigma_test.
        ell: Number of canonical vectors projected to span E1.
        orthogonality_residual: Largest |<u, v>| across E1, E2 and the
            active columns.
    """

    sigma_select: float
    sigma_test: float
    n1: int
    n2: int
    ell: int = 0
    orthogonality_residual: float = 0.0

    def to_dict(self) -> dict[str, Any]:
        return {
            "sigma_select": self.sigma_select,
            "sigma_test": self.sigma_test,
            "n1": self.n1,
            "n2": self.n2,
            "ell": self.ell,
            "orthogonality_residual": self.orthogonality_residual,
        }


@dataclass(frozen=True)
class SelectionDecision:
    """Chosen model size and the tests that led to it."""

    m_hat: int
    rule: str
    alpha_prime: Optional[float] = None
    gamma_fp: Optional[int] = None
    audit: tuple[tuple[int, float], ...] = ()

    def to_dict(self) -> dict[str, Any]:
        return {
            "m_hat": self.m_hat,
            "rule": self.rule,
            "alpha_prime": self.alpha_prime,
            "gamma_fp": self.gamma_fp,
            "audit": [{"a": a, "p_value": p} for a, p in self.audit],
        }


@dataclass(frozen=True)
class PValueReport:
    """Result of one generalized spacing test."""

    triple: tuple[int, int, int]
    p_value: float
    method: str
    qmc: Optional[QmcEstimate] = None
    nu: Optional[int] = None
    selection: Optional[SelectionDecision] = None

    def __post_init__(self) -> None:
        if not 0.0 <= self.p_value <= 1.0:
            raise InferenceError(f"p-value {self.p_value} outside [0, 1]")

    def to_dict(self) -> dict[str, Any]:
        return {
            "status": "ok",
            "triple": list(self.triple),
            "p_value": self.p_value,
            "method": self.method,
            "qmc": self.qmc.to_dict() if self.qmc else None,
            "nu": self.nu,
            "selection": self.selection.to_dict() if self.selection else None,
        }


@dataclass(frozen=True)
class Refusal:
    """The test was not run; this is not a p-value."""

    reason: str
    irrepresentable_upto: int
    required: int

    def to_dict(self) -> dict[str, Any]:
        return {
            "status": "refused",
            "reason": self.reason,
            "irrepresentable_upto": self.irrepresentable_upto,
            "required": self.required,
        }


TestOutcome = Union[PValueReport, Refusal]


@dataclass(frozen=True)
class SelectionRule:
    """Parameters of an admissible model-size procedure.

    kind is "fixed" (m_hat given) or "sequential" (consecutive t-spacing
    tests at level alpha_prime, stopping after gamma_fp misses in a row).
    """

    kind: str = "sequential"
    alpha_prime: float = 0.1
    gamma_fp: int = 1
    m_hat: int = 1

    def __post_init__(self) -> None:
        if self.kind not in {"fixed", "sequential"}:
            raise InferenceError(f"Unsupported selection rule {self.kind!r}")
        if not 0.0 < self.alpha_prime < 1.0:
            raise InferenceError("alpha_prime must lie in (0, 1)")
        if self.gamma_fp < 1:
            raise InferenceError("gamma_fp must be >= 1")


@dataclass(frozen=True)
class StoppingView:
    """What a stopping rule may look at when testing at size a."""

    knots: tuple[float, ...]
    signed: tuple[SignedIndex, ...]
    rho: tuple[float, ...]
    sigma_select: float
    nu: int = field(default=1)


def _residual_basis(xa: np.ndarray) -> np.ndarray:
    q, r, _ = linalg.qr(xa, mode="economic", pivoting=True)
    diag = np.abs(np.diag(r))
    if diag.size and diag.min() <= SUBSPACE_TOL * max(1.0, diag.max()):
        raise InferenceError(
            "Active columns are linearly dependent; "
            "residual projector is rank deficient"
        )
    return q


def split_variance(
    design: DesignMatrix,
    response: ResponseVector,
    active_plain_indices: Sequence[int],
    K: int,
) -> VarianceSplit:
    """Split the residual space of K + 1 active columns into E1 and E2.

    E1 is spanned by the residual projections of e_1..e_ell with ell minimal
    so that dim E1 = n1 = ceil((n - K - 1) / 2); E2 is the rest of the
    residual space, dim n2 = n - K - 1 - n1.

    Raises:
        InferenceError: If n <= K + 3, indices are not K + 1 distinct
            predictors, or the active columns are dependent.
    """
    cols = [int(j) for j in active_plain_indices]
    if len(cols) != K + 1 or len(set(cols)) != len(cols):
        raise InferenceError(
            f"Need {K + 1} distinct active indices, got {cols}"
        )
    n = design.n
    if n <= K + 3:
        raise InferenceError(f"n={n} too small for K={K} (need n > K + 3)")

    q = _residual_basis(design.entries[:, cols])
    dim_res = n - (K + 1)
    n1 = math.ceil(dim_res / 2)
    n2 = dim_res - n1

    basis: list[np.ndarray] = []
    ell = 0
    for i in range(n):
        if len(basis) == n1:
            break
        v = -q @ q[i]
        v[i] += 1.0
        for _ in range(2):
            for u in basis:
                v -= (u @ v) * u
        norm = float(np.linalg.norm(v))
        ell = i + 1
        if norm > SUBSPACE_TOL:
            basis.append(v / norm)
    b1 = np.column_stack(basis)

    full, _ = np.linalg.qr(np.hstack([q, b1]), mode="complete")
    b2 = full[:, K + 1 + n1 :]

    residual = max(
        float(np.abs(b1.T @ b2).max()),
        float(np.abs(q.T @ b1).max()),
        float(np.abs(q.T @ b2).max()),
    )
    if residual > 1e-8:
        raise InferenceError(
            f"Variance subspaces not orthogonal (residual {residual:.2e})"
        )

    y = response.values
    return VarianceSplit(
        sigma_select=float(np.linalg.norm(b1.T @ y) / np.sqrt(n1)),
        sigma_test=float(np.linalg.norm(b2.T @ y) / np.sqrt(n2)),
        n1=n1,
        n2=n2,
        ell=ell,
        orthogonality_residual=residual,
    )


def _check_request(path: LarPath, a: int, b: int, c: int) -> None:
    if not 0 <= a < b < c:
        raise InferenceError(f"Need 0 <= a < b < c, got ({a}, {b}, {c})")
    if c > len(path):
        raise InferenceError(
            f"Triple ({a}, {b}, {c}) needs {c} knots, path has {len(path)}"
        )
    if path.irrepresentable_upto < c - 1:
        raise RefusalError(
            f"Irrepresentable check holds up to {path.irrepresentable_upto}, "
            f"test ({a}, {b}, {c}) needs {c - 1}"
        )


def _equal_scales(rho: np.ndarray, a: int, c: int) -> bool:
    levels = rho[max(a, 1) - 1 : c]
    return bool(np.allclose(levels, levels[0], rtol=ORTHO_RTOL, atol=0.0))


def gst_pvalue(
    path: LarPath,
    geometry: FrozenGeometry,
    sigma: float,
    a: int,
    b: int,
    c: int,
    rule: Optional[LatticeRule] = None,
) -> PValueReport:
    """Generalized spacing test p-value 1 - F_abc(lambda_b) / F_abc(lambda_a).

    Consecutive triples use the closed form, equal scales on levels a..c use
    the Beta shortcut, everything else goes through QMC.

    Raises:
        RefusalError: If the irrepresentable check does not reach c - 1.
        UnreliableEstimateError: If F_abc(lambda_a) <= 3 std_error.
    """
    _check_request(path, a, b, c)
    if sigma <= 0:
        raise InferenceError(f"sigma must be positive, got {sigma}")

    rho = geometry.rho
    lam = path.knot
    triple = (a, b, c)

    if b == a + 1 and c == a + 2:
        p = gaussian_spacing_closed_form(lam(a), lam(b), lam(c), sigma * rho[b - 1])
        return PValueReport(triple=triple, p_value=p, method=CLOSED_FORM)

    if _equal_scales(rho, a, c):
        scale = sigma * rho[b - 1]
        tails = [float(_upper_tail(lam(k), scale)) for k in (a, b, c)]
        p = ortho_pvalue_tails(*tails, a, b, c)
        return PValueReport(triple=triple, p_value=p, method=BETA_SHORTCUT)

    rule = rule or LatticeRule.korobov(c - a - 1)
    try:
        ratio, den = gaussian_tail_ratio(rho, sigma, path.knots, a, b, c, rule)
    except DegenerateRatioError as exc:
        raise UnreliableEstimateError(f"{triple}: {exc}") from exc
    _check_denominator(den, triple)
    logger.debug(
        "GST %s p=%.6f se=%.2e", triple, ratio.value, ratio.std_error
    )
    return PValueReport(triple=triple, p_value=ratio.value, method=QMC, qmc=ratio)


def _upper_tail(lam: float, scale: float) -> float:
    return float(ndtr(-lam / scale))


def _check_denominator(den: QmcEstimate, triple: tuple[int, int, int]) -> None:
    if den.n_shifts and den.value <= 3.0 * den.std_error:
        raise UnreliableEstimateError(
            f"F at lambda_a for {triple} is {den.value:.3e} with "
            f"std_error {den.std_error:.3e}"
        )


def gtst_pvalue(
    path: LarPath,
    geometry: FrozenGeometry,
    split: VarianceSplit,
    a: int,
    b: int,
    c: int,
    rule: Optional[LatticeRule] = None,
) -> PValueReport:
    """Generalized t-spacing test with Lambda_k = lambda_k / sigma_test.

    Uses nu = n2; the selection stage has its own entry point and never
    touches sigma_test.
    """
    _check_request(path, a, b, c)
    if split.sigma_test <= 0:
        raise InferenceError("sigma_test is zero; studentized test undefined")

    return _studentized(
        path.knots, geometry.rho, split.sigma_test, split.n2, a, b, c, rule
    )


def _studentized(
    knots: Sequence[float],
    rho: Sequence[float],
    sigma_hat: float,
    nu: int,
    a: int,
    b: int,
    c: int,
    rule: Optional[LatticeRule],
) -> PValueReport:
    big = np.asarray(knots, dtype=float) / sigma_hat
    big_a = math.inf if a == 0 else float(big[a - 1])
    triple = (a, b, c)

    if b == a + 1 and c == a + 2:
        p = student_spacing_closed_form(
            big_a, float(big[b - 1]), float(big[c - 1]), float(rho[b - 1]), nu
        )
        return PValueReport(triple=triple, p_value=p, method=CLOSED_FORM, nu=nu)

    rule = rule or LatticeRule.korobov(c - a - 1)
    try:
        ratio, den = student_tail_ratio(rho, nu, big, a, b, c, rule)
    except DegenerateRatioError as exc:
        raise UnreliableEstimateError(f"{triple}: {exc}") from exc
    _check_denominator(den, triple)
    return PValueReport(
        triple=triple,
        p_value=ratio.value,
        method=STUDENTIZED_QMC,
        qmc=ratio,
        nu=nu,
    )


def selection_pvalue(view: StoppingView, a: int) -> float:
    """t-spacing p-value of T_{a,a+1,a+2} from a stopping view."""
    if len(view.knots) < a + 2:
        raise InferenceError(f"View holds {len(view.knots)} knots, need {a + 2}")
    big = np.asarray(view.knots, dtype=float) / view.sigma_select
    big_a = math.inf if a == 0 else float(big[a - 1])
    return student_spacing_closed_form(
        big_a, float(big[a]), float(big[a + 1]), view.rho[a], view.nu
    )


def select_model_fixed(m_hat: int, K: int) -> SelectionDecision:
    """The trivial admissible rule: a size chosen before seeing data."""
    if not 1 <= m_hat <= K - 1:
        raise InferenceError(f"m_hat must lie in [1, {K - 1}], got {m_hat}")
    return SelectionDecision(m_hat=m_hat, rule="fixed")


def select_model_sequential(
    path: LarPath,
    geometry: FrozenGeometry,
    split: VarianceSplit,
    alpha_prime: float,
    gamma_fp: int = 1,
    K: Optional[int] = None,
) -> SelectionDecision:
    """Sequential t-spacing selection at level alpha_prime.

    Starting at a = 0, T_{a,a+1,a+2} is run with sigma_select (nu = n1).
    A run of gamma_fp non-significant tests starting at a stops the
    procedure with m_hat = a + gamma_fp + 1; m_hat is capped at K - 1.

    Raises:
        InferenceError: If the path has fewer than K + 1 knots or the
            parameters are out of range.
    """
    K = len(path) - 1 if K is None else K
    if K < 2 or len(path) < K + 1:
        raise InferenceError(f"Path of {len(path)} knots too short for K={K}")
    if not 0.0 < alpha_prime < 1.0:
        raise InferenceError("alpha_prime must lie in (0, 1)")
    if gamma_fp < 1:
        raise InferenceError("gamma_fp must be >= 1")
    if split.sigma_select <= 0:
        raise InferenceError("sigma_select is zero; selection undefined")

    audit: list[tuple[int, float]] = []
    run_start: Optional[int] = None
    m_hat = K - 1

    for a in range(0, K - 1):
        view = StoppingView(
            knots=tuple(float(v) for v in path.knots[: a + 2]),
            signed=path.signed,
            rho=tuple(float(v) for v in geometry.rho[: a + 2]),
            sigma_select=split.sigma_select,
            nu=split.n1,
        )
        p = selection_pvalue(view, a)
        audit.append((a, p))
        if p <= alpha_prime:
            run_start = None
            continue
        if run_start is None:
            run_start = a
        if a - run_start + 1 == gamma_fp:
            m_hat = run_start + gamma_fp + 1
            break

    m_hat = max(1, min(m_hat, K - 1))
    tag = "sequential" if gamma_fp == 1 else "gamma-fp"
    return SelectionDecision(
        m_hat=m_hat,
        rule=tag,
        alpha_prime=alpha_prime,
        gamma_fp=gamma_fp,
        audit=tuple(audit),
    )


def false_negative_test(
    design: DesignMatrix,
    response: ResponseVector,
    K: int,
    selection: SelectionRule,
    sigma: Optional[float] = None,
    rule: Optional[LatticeRule] = None,
    formulation: str = "recursive",
) -> TestOutcome:
    """Exact test that no active variable was missed after selecting m_hat.

    Runs K + 1 LAR steps, refuses unless the path is complete and the
    irrepresentable check holds up to K, selects m_hat with `selection`, then
    tests (m_hat, m_hat + 1, K + 1): Gaussian when sigma is given, studentized
    with sigma_test otherwise.

    Raises:
        InferenceError: If K violates 1 <= K < min(n - 3, rank).
    """
    if not 1 <= K < min(design.n - 3, design.rank):
        raise InferenceError(
            f"K={K} must satisfy 1 <= K < min(n - 3, rank) = "
            f"{min(design.n - 3, design.rank)}"
        )

    state = build_correlation_state(design, response)
    path = lar_path(state, K + 1, formulation)
    if len(path) < K + 1:
        logger.info("Refusing: path truncated at %d knots", len(path))
        return Refusal(
            reason=f"path truncated ({path.status.value})",
            irrepresentable_upto=path.irrepresentable_upto,
            required=K,
        )

    k_max = irrepresentable_check(state, path, K)
    if k_max < K:
        logger.info("Refusing: irrepresentable check holds up to %d", k_max)
        return Refusal(
            reason="irrepresentable check failed",
            irrepresentable_upto=k_max,
            required=K,
        )

    split = split_variance(design, response, path.plain_indices, K)
    scale = sigma if sigma is not None else split.sigma_test
    geometry = frozen_geometry(state, path, scale)

    if selection.kind == "fixed":
        decision = select_model_fixed(selection.m_hat, K)
    else:
        decision = select_model_sequential(
            path,
            geometry,
            split,
            selection.alpha_prime,
            selection.gamma_fp,
            K=K,
        )

    a = decision.m_hat
    try:
        if sigma is not None:
            report = gst_pvalue(path, geometry, sigma, a, a + 1, K + 1, rule)
        else:
            report = gtst_pvalue(path, geometry, split, a, a + 1, K + 1, rule)
    except RefusalError as exc:
        return Refusal(
            reason=str(exc),
            irrepresentable_upto=path.irrepresentable_upto,
            required=K,
        )

    return PValueReport(
        triple=report.triple,
        p_value=report.p_value,
        method=report.method,
        qmc=report.qmc,
        nu=report.nu,
        selection=decision,
    )


# Stochastic orderings of generalized spacing p-values in the orthogonal
# design, most powerful first.
POWER_CHAINS: tuple[tuple[tuple[int, int, int], ...], ...] = (
    ((1, 2, 5), (1, 2, 4), (1, 2, 3)),
    ((1, 2, 5), (1, 3, 5), (2, 3, 5), (2, 3, 4)),
    ((1, 2, 5), (1, 3, 5), (1, 4, 5), (2, 4, 5)),
)


def power_ordering_pairs(
    max_c: int, min_a: int = 0
) -> list[tuple[tuple[int, int, int], tuple[int, int, int]]]:
    """(stronger, weaker) pairs among triples min_a <= a < b < c <= max_c.

    Widening the window gains power: (a, b, c+1), (a, b-1, c) and
    (a-1, b, c) each dominate (a, b, c).
    """
    pairs = []
    for a in range(min_a, max_c + 1):
        for b in range(a + 1, max_c + 1):
            for c in range(b + 1, max_c + 1):
                weaker = (a, b, c)
                for stronger in ((a, b, c + 1), (a, b - 1, c), (a - 1, b, c)):
                    x, y, z = stronger
                    if min_a <= x < y < z <= max_c:
                        pairs.append((stronger, weaker))
    return pairs


def power_ordering_chains(K: int) -> list[tuple[tuple[int, int, int], ...]]:
    """Ordering chains whose triples fit in a path of K + 1 knots."""
    return [
        chain
        for chain in POWER_CHAINS
        if all(c <= K + 1 for _, _, c in chain)
    ]
