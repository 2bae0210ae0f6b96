#!/usr/bin/python3
"""
Randomized rank-1 lattice cubature and the ordered-region integrals.

A LatticeRule is the point set {i * z / n} (i = 1..n) for a Korobov vector
z = (1, g, g^2, ...) mod n, shifted modulo one by n_shifts independent
uniform vectors. Each shift gives an unbiased estimate; their spread is the
reported standard error.

The spacing integrals run over ordered regions
lambda_a >= l_{a+1} >= ... >= l_{c-1} >= lambda_c. Each level is mapped to
[0, 1] through the upper-tail CDF of its own scale, so the Jacobian is a
running product of interval lengths and Gaussian tails far from zero keep
full relative precision.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, replace
from functools import lru_cache
from typing import Any, Callable, Sequence

import numpy as np
from scipy import stats
from scipy.special import ndtr, ndtri, stdtr, stdtrit

logger = logging.getLogger(__name__)

DEFAULT_POINTS = 4093
DEFAULT_SHIFTS = 16
SUPPORTED_PRIMES = (1021, 4093, 16381)

# Number of Korobov multipliers scored per (n, dim).
KOROBOV_CANDIDATES = 128

Integrand = Callable[[np.ndarray], np.ndarray]


class QuadratureError(RuntimeError):
    """Raised when an integrand produces a non-finite value."""

    def __init__(self, message: str, point: np.ndarray | None = None) -> None:
        super().__init__(message)
        self.point = point


class OrderingError(ValueError):
    """Raised when knot or CDF values are not in the required order."""


class DegenerateRatioError(QuadratureError):
    """Raised when some, but not all, shifts have a zero denominator."""


def korobov_vector(n_points: int, g: int, dim: int) -> tuple[int, ...]:
    """(1, g, g^2, ..., g^(dim-1)) mod n_points."""
    z = [1]
    for _ in range(dim - 1):
        z.append((z[-1] * g) % n_points)
    return tuple(z)


def _p2_criterion(n_points: int, z: Sequence[int]) -> float:
    # Weighted P_2 lattice criterion with product weights 0.8^d.
    k = np.arange(n_points, dtype=np.int64)[:, None]
    x = (k * np.asarray(z, dtype=np.int64)[None, :] % n_points) / n_points
    b2 = x * x - x + 1.0 / 6.0
    weights = 0.8 ** np.arange(len(z))
    return float(np.prod(1.0 + weights * 2.0 * np.pi**2 * b2, axis=1).mean())


@lru_cache(maxsize=None)
def korobov_generator(n_points: int, dim: int) -> int:
    """Pick the Korobov multiplier g for (n_points, dim).

    The candidates are a fixed evenly spaced set in [2, n/2]; the one with
    the smallest weighted P_2 criterion wins, ties to the smallest g.
    """
    if dim <= 1:
        return 1
    candidates = np.unique(
        np.linspace(2, n_points // 2, KOROBOV_CANDIDATES).astype(int)
    )
    best_g, best_score = int(candidates[0]), math.inf
    for g in candidates:
        score = _p2_criterion(n_points, korobov_vector(n_points, int(g), dim))
        if score < best_score:
            best_g, best_score = int(g), score
    logger.debug(
        "Korobov generator n=%d dim=%d -> g=%d", n_points, dim, best_g
    )
    return best_g


@dataclass(frozen=True)
class LatticeRule:
    """Randomly shifted rank-1 lattice rule.

    Attributes:
        dim: Cube dimension.
        n_points: Number of lattice points, prime.
        generating_vector: z, entries coprime with n_points.
        n_shifts: Independent random shifts.
        seed: Master seed; shift m uses the stream (seed, m).
    """

    dim: int
    n_points: int
    generating_vector: tuple[int, ...]
    n_shifts: int = DEFAULT_SHIFTS
    seed: int = 0

    def __post_init__(self) -> None:
        if self.dim < 1:
            raise ValueError(f"dim must be >= 1, got {self.dim}")
        if self.n_shifts < 1:
            raise ValueError(f"n_shifts must be >= 1, got {self.n_shifts}")
        if len(self.generating_vector) != self.dim:
            raise ValueError(
                f"generating vector has {len(self.generating_vector)} "
                f"entries for dim={self.dim}"
            )
        for zj in self.generating_vector:
            if not 1 <= zj < self.n_points or math.gcd(zj, self.n_points) != 1:
                raise ValueError(
                    f"generator entry {zj} not coprime with n={self.n_points}"
                )

    @classmethod
    def korobov(
        cls,
        dim: int,
        n_points: int = DEFAULT_POINTS,
        n_shifts: int = DEFAULT_SHIFTS,
        seed: int = 0,
    ) -> "LatticeRule":
        g = korobov_generator(n_points, dim)
        return cls(
            dim=dim,
            n_points=n_points,
            generating_vector=korobov_vector(n_points, g, dim),
            n_shifts=n_shifts,
            seed=seed,
        )

    def with_dim(self, dim: int) -> "LatticeRule":
        """Same point count, shifts and seed in another dimension."""
        if dim == self.dim:
            return self
        return LatticeRule.korobov(
            dim, n_points=self.n_points, n_shifts=self.n_shifts, seed=self.seed
        )

    def base_points(self) -> np.ndarray:
        i = np.arange(1, self.n_points + 1, dtype=np.int64)[:, None]
        z = np.asarray(self.generating_vector, dtype=np.int64)[None, :]
        return (i * z % self.n_points) / self.n_points

    def shift(self, m: int) -> np.ndarray:
        return np.random.default_rng([self.seed, m]).random(self.dim)


@dataclass(frozen=True)
class QmcEstimate:
    """Integral estimate with its Monte-Carlo-layer standard error."""

    value: float
    std_error: float
    n_points: int
    n_shifts: int
    seed: int
    shift_values: tuple[float, ...] = ()
    note: str = ""

    @classmethod
    def exact(cls, value: float, note: str = "exact") -> "QmcEstimate":
        return cls(
            value=float(value),
            std_error=0.0,
            n_points=0,
            n_shifts=0,
            seed=0,
            note=note,
        )

    @classmethod
    def from_shift_values(
        cls, values: Sequence[float], rule: LatticeRule, note: str = ""
    ) -> "QmcEstimate":
        arr = np.asarray(values, dtype=float)
        se = float(arr.std(ddof=1) / np.sqrt(arr.size)) if arr.size > 1 else 0.0
        return cls(
            value=float(arr.mean()),
            std_error=se,
            n_points=rule.n_points,
            n_shifts=rule.n_shifts,
            seed=rule.seed,
            shift_values=tuple(float(v) for v in arr),
            note=note,
        )

    def to_dict(self) -> dict[str, Any]:
        return {
            "value": self.value,
            "std_error": self.std_error,
            "n_points": self.n_points,
            "n_shifts": self.n_shifts,
            "seed": self.seed,
            "note": self.note,
        }


def _shift_means(integrand: Integrand, rule: LatticeRule) -> list[float]:
    base = rule.base_points()
    means = []
    for m in range(rule.n_shifts):
        x = (base + rule.shift(m)) % 1.0
        vals = np.asarray(integrand(x), dtype=float)
        bad = np.flatnonzero(~np.isfinite(vals))
        if bad.size:
            point = x[bad[0]]
            raise QuadratureError(
                f"Integrand is not finite at {point.tolist()} (shift {m})",
                point=point,
            )
        means.append(float(vals.mean()))
    return means


def lattice_integrate(integrand: Integrand, rule: LatticeRule) -> QmcEstimate:
    """Integrate a vectorized function over [0, 1]^dim.

    Args:
        integrand: Maps an (N, dim) array of points to N values.
        rule: Lattice rule to use.

    Returns:
        Mean over shifts with standard error sd / sqrt(n_shifts).

    Raises:
        QuadratureError: If the integrand returns a non-finite value.
    """
    return QmcEstimate.from_shift_values(_shift_means(integrand, rule), rule)


# Upper-tail coordinates: q = P(N(0, s^2) > lam) and back.
def _gauss_tail(lam: np.ndarray | float, scale: float) -> np.ndarray:
    return ndtr(-np.asarray(lam, dtype=float) / scale)


def _gauss_untail(q: np.ndarray, scale: float) -> np.ndarray:
    return -scale * ndtri(q)


def _descend_gauss(
    g: np.ndarray, upper: np.ndarray, lower: np.ndarray, scales: Sequence[float]
) -> tuple[np.ndarray, np.ndarray]:
    # Sequential affine substitution down an ordered chain.
    weight = np.ones(g.shape[0])
    lam = upper
    for col, s in enumerate(scales):
        q_top = _gauss_tail(lam, s)
        width = np.maximum(_gauss_tail(lower, s) - q_top, 0.0)
        lam = _gauss_untail(q_top + g[:, col] * width, s)
        weight = weight * width
    return weight, lam


def _check_triple(a: int, b: int, c: int, rho: Sequence[float]) -> None:
    if not 0 <= a < b < c:
        raise OrderingError(f"Need 0 <= a < b < c, got ({a}, {b}, {c})")
    if len(rho) < c - 1:
        raise OrderingError(
            f"rho has {len(rho)} entries, need at least {c - 1}"
        )


def nested_I(
    rho: Sequence[float],
    sigma: float,
    a: int,
    b: int,
    s: float,
    t: float,
    rule: LatticeRule,
) -> QmcEstimate:
    """Volume of {s > f_{a+1} > ... > f_{b-1} > t} in CDF coordinates.

    `s` is a CDF value on the scale of knot a (knot 1 when a = 0) and `t` on
    the scale of knot b; intermediate levels f_k = Phi(l_k / (sigma rho_k))
    are linked through Phi_i o Phi_j^-1. rho[k - 1] is rho_k.
    """
    if not 0 <= a < b:
        raise OrderingError(f"Need 0 <= a < b, got ({a}, {b})")
    if b == a + 1:
        return QmcEstimate.exact(1.0)
    if len(rho) < b:
        raise OrderingError(f"rho has {len(rho)} entries, need {b}")

    scale_a = sigma * rho[a - 1] if a else sigma * rho[0]
    upper = float(scale_a * ndtri(s))
    lower = float(sigma * rho[b - 1] * ndtri(t))
    if upper <= lower:
        return QmcEstimate.exact(0.0, note="empty-region")

    scales = [sigma * rho[k - 1] for k in range(a + 1, b)]

    def integrand(g: np.ndarray) -> np.ndarray:
        n = g.shape[0]
        w, _ = _descend_gauss(g, np.full(n, upper), np.full(n, lower), scales)
        return w

    return lattice_integrate(integrand, rule.with_dim(len(scales)))


def _gauss_region(
    rho: Sequence[float],
    sigma: float,
    lambda_a: float,
    lambda_c: float,
    lo: float,
    hi: float,
    a: int,
    b: int,
    c: int,
) -> Integrand:
    # l_b runs over [lo, hi]; levels a+1..b-1 between lambda_a and l_b;
    # levels b+1..c-1 between l_b and lambda_c.
    s_b = sigma * rho[b - 1]
    q_hi, q_lo = float(_gauss_tail(hi, s_b)), float(_gauss_tail(lo, s_b))
    above = [sigma * rho[k - 1] for k in range(a + 1, b)]
    below = [sigma * rho[k - 1] for k in range(b + 1, c)]
    n_above = len(above)

    def integrand(g: np.ndarray) -> np.ndarray:
        n = g.shape[0]
        width_b = q_lo - q_hi
        l_b = _gauss_untail(q_hi + g[:, 0] * width_b, s_b)
        w_up, _ = _descend_gauss(
            g[:, 1 : 1 + n_above], np.full(n, lambda_a), l_b, above
        )
        w_down, _ = _descend_gauss(
            g[:, 1 + n_above :], l_b, np.full(n, lambda_c), below
        )
        return width_b * w_up * w_down

    return integrand


def _support_guard(
    lambda_a: float, lambda_c: float, t: float
) -> QmcEstimate | None:
    if lambda_a <= lambda_c:
        return QmcEstimate.exact(0.0, note="degenerate")
    if not lambda_c <= t <= lambda_a:
        return QmcEstimate.exact(0.0, note="outside-support")
    if t == lambda_c:
        return QmcEstimate.exact(0.0, note="empty-region")
    return None


def F_abc(
    rho: Sequence[float],
    sigma: float,
    lambda_a: float,
    lambda_c: float,
    t: float,
    a: int,
    b: int,
    c: int,
    rule: LatticeRule,
) -> QmcEstimate:
    """Conditional distribution function of knot b given knots a and c.

    Unnormalized: the volume, in CDF coordinates, of the ordered region with
    l_b in [lambda_c, t]. The whole nesting is a single (c - a - 1)
    dimensional cube integral. lambda_a is +inf when a = 0.
    """
    _check_triple(a, b, c, rho)
    if a == 0:
        lambda_a = math.inf
    guard = _support_guard(lambda_a, lambda_c, t)
    if guard is not None:
        return guard
    integrand = _gauss_region(rho, sigma, lambda_a, lambda_c, lambda_c, t, a, b, c)
    return lattice_integrate(integrand, rule.with_dim(c - a - 1))


def _student_tail(x: np.ndarray | float, scale: float, nu: float) -> np.ndarray:
    return stdtr(nu, -np.asarray(x, dtype=float) / scale)


def _student_untail(q: np.ndarray, scale: float, nu: float) -> np.ndarray:
    return -scale * stdtrit(nu, q)


def _student_logpdf(x: np.ndarray, scale: float, nu: float) -> np.ndarray:
    return stats.t.logpdf(x, nu, scale=scale)


def _log_kernel(values: list[np.ndarray], scales: Sequence[float], nu: float,
                power: float) -> np.ndarray | float:
    if not values:
        return 0.0
    quad = sum((v / s) ** 2 for v, s in zip(values, scales))
    return -0.5 * (nu + power) * np.log1p(quad / nu)


def _descend_student(
    g: np.ndarray,
    upper: np.ndarray,
    lower: np.ndarray,
    scales: Sequence[float],
    nu: float,
) -> tuple[np.ndarray, list[np.ndarray]]:
    # Returns log(prod width / pdf) and the sampled l's.
    log_w = np.zeros(g.shape[0])
    lam = upper
    sampled = []
    for col, s in enumerate(scales):
        q_top = _student_tail(lam, s, nu)
        width = np.maximum(_student_tail(lower, s, nu) - q_top, 0.0)
        lam = _student_untail(q_top + g[:, col] * width, s, nu)
        with np.errstate(divide="ignore"):
            log_w = log_w + np.log(width) - _student_logpdf(lam, s, nu)
        sampled.append(lam)
    return log_w, sampled


def _student_region(
    rho: Sequence[float],
    nu: float,
    big_a: float,
    big_c: float,
    lo: float,
    hi: float,
    a: int,
    b: int,
    c: int,
) -> Integrand:
    r_b = rho[b - 1]
    q_hi = float(_student_tail(hi, r_b, nu))
    q_lo = float(_student_tail(lo, r_b, nu))
    above = [rho[k - 1] for k in range(a + 1, b)]
    below = [rho[k - 1] for k in range(b + 1, c)]
    n_above = len(above)

    def integrand(g: np.ndarray) -> np.ndarray:
        n = g.shape[0]
        width_b = q_lo - q_hi
        l_b = _student_untail(q_hi + g[:, 0] * width_b, r_b, nu)
        with np.errstate(divide="ignore"):
            log_w = np.log(width_b) - _student_logpdf(l_b, r_b, nu)
        log_w = log_w + _log_kernel([l_b], [r_b], nu, 1.0)

        lw_up, up = _descend_student(
            g[:, 1 : 1 + n_above], np.full(n, big_a), l_b, above, nu
        )
        lw_down, down = _descend_student(
            g[:, 1 + n_above :], l_b, np.full(n, big_c), below, nu
        )
        log_w = log_w + lw_up + _log_kernel(up, above, nu, float(b - a))
        log_w = log_w + lw_down + _log_kernel(down, below, nu, float(c - b))
        return np.exp(log_w)

    return integrand


def tilde_F_abc(
    rho: Sequence[float],
    nu: float,
    Lambda_a: float,
    Lambda_c: float,
    t: float,
    a: int,
    b: int,
    c: int,
    rule: LatticeRule,
) -> QmcEstimate:
    """Studentized counterpart of F_abc in knot/sigma_hat coordinates.

    Integrates I~_ab(Lambda_a, l) I~_bc(l, Lambda_c) (1 + (l/rho_b)^2/nu)^
    (-(nu+1)/2) over l in [Lambda_c, t], where I~ integrates the kernel
    (1 + sum (l_k/rho_k)^2 / nu)^(-(nu + width)/2) over the ordered region.
    Each level is sampled through its own Student tail, so the value carries
    a constant factor that cancels in every ratio.
    """
    if nu < 1:
        raise OrderingError(f"nu must be >= 1, got {nu}")
    _check_triple(a, b, c, rho)
    if a == 0:
        Lambda_a = math.inf
    guard = _support_guard(Lambda_a, Lambda_c, t)
    if guard is not None:
        return guard
    integrand = _student_region(rho, nu, Lambda_a, Lambda_c, Lambda_c, t, a, b, c)
    return lattice_integrate(integrand, rule.with_dim(c - a - 1))


def _ratio_estimate(
    top: Integrand, whole: Integrand, rule: LatticeRule
) -> tuple[QmcEstimate, QmcEstimate]:
    num = _shift_means(top, rule)
    den = _shift_means(whole, rule)
    return _ratio_from_shifts(num, den, rule)


def _ratio_from_shifts(
    num: Sequence[float], den: Sequence[float], rule: LatticeRule
) -> tuple[QmcEstimate, QmcEstimate]:
    """Per-shift ratios num / den combined into one estimate.

    An empty region (every denominator exactly 0) gives p = 1.

    Raises:
        DegenerateRatioError: If only some shifts have a zero denominator.
    """
    num_arr = np.asarray(num, dtype=float)
    den_arr = np.asarray(den, dtype=float)
    zero = den_arr == 0.0
    if zero.all():
        return (
            QmcEstimate.exact(1.0, note="degenerate"),
            QmcEstimate.exact(0.0, note="degenerate"),
        )
    if zero.any():
        raise DegenerateRatioError(
            f"Zero denominator on {int(zero.sum())} of {zero.size} shifts"
        )
    den_est = QmcEstimate.from_shift_values(den_arr, rule)
    ratios = num_arr / den_arr
    value = float(np.clip(num_arr.mean() / den_arr.mean(), 0.0, 1.0))
    est = QmcEstimate.from_shift_values(ratios, rule, note="ratio")
    return replace(est, value=value), den_est


def gaussian_tail_ratio(
    rho: Sequence[float],
    sigma: float,
    knots: Sequence[float],
    a: int,
    b: int,
    c: int,
    rule: LatticeRule,
) -> tuple[QmcEstimate, QmcEstimate]:
    """1 - F_abc(lambda_b) / F_abc(lambda_a) estimated on common shifts.

    `knots` holds lambda_1, lambda_2, ... so knots[k - 1] is lambda_k.

    Returns:
        (ratio estimate, denominator F_abc(lambda_a) estimate).
    """
    _check_triple(a, b, c, rho)
    lam_a = math.inf if a == 0 else float(knots[a - 1])
    lam_b, lam_c = float(knots[b - 1]), float(knots[c - 1])
    if not lam_a >= lam_b >= lam_c:
        raise OrderingError(f"knots not ordered: {lam_a}, {lam_b}, {lam_c}")
    if lam_a == lam_c:
        return (
            QmcEstimate.exact(1.0, note="degenerate"),
            QmcEstimate.exact(0.0, note="degenerate"),
        )
    cube = rule.with_dim(c - a - 1)
    top = _gauss_region(rho, sigma, lam_a, lam_c, lam_b, lam_a, a, b, c)
    whole = _gauss_region(rho, sigma, lam_a, lam_c, lam_c, lam_a, a, b, c)
    return _ratio_estimate(top, whole, cube)


def student_tail_ratio(
    rho: Sequence[float],
    nu: float,
    big_knots: Sequence[float],
    a: int,
    b: int,
    c: int,
    rule: LatticeRule,
) -> tuple[QmcEstimate, QmcEstimate]:
    """1 - F~_abc(Lambda_b) / F~_abc(Lambda_a) on common shifts."""
    _check_triple(a, b, c, rho)
    big_a = math.inf if a == 0 else float(big_knots[a - 1])
    big_b, big_c = float(big_knots[b - 1]), float(big_knots[c - 1])
    if not big_a >= big_b >= big_c:
        raise OrderingError(f"knots not ordered: {big_a}, {big_b}, {big_c}")
    if big_a == big_c:
        return (
            QmcEstimate.exact(1.0, note="degenerate"),
            QmcEstimate.exact(0.0, note="degenerate"),
        )
    cube = rule.with_dim(c - a - 1)
    top = _student_region(rho, nu, big_a, big_c, big_b, big_a, a, b, c)
    whole = _student_region(rho, nu, big_a, big_c, big_c, big_a, a, b, c)
    return _ratio_estimate(top, whole, cube)


def gaussian_spacing_closed_form(
    lambda_a: float, lambda_b: float, lambda_c: float, scale: float
) -> float:
    """(Phi(la) - Phi(lb)) / (Phi(la) - Phi(lc)) on upper tails.

    lambda_a may be +inf. Equal lambda_a and lambda_c give 1.
    """
    ta = float(_gauss_tail(lambda_a, scale))
    tb = float(_gauss_tail(lambda_b, scale))
    tc = float(_gauss_tail(lambda_c, scale))
    den = tc - ta
    if den <= 0.0:
        return 1.0
    return float(np.clip((tb - ta) / den, 0.0, 1.0))


def student_spacing_cdf(rho: float, nu: float, x: float) -> float:
    """T_k(x): Student CDF with nu degrees of freedom of x / rho_k."""
    return float(stdtr(nu, x / rho))


def student_spacing_closed_form(
    Lambda_a: float, Lambda_b: float, Lambda_c: float, rho: float, nu: float
) -> float:
    """(T(Lb) - T(La)) / (T(Lc) - T(La)) on upper tails."""
    ta = float(_student_tail(Lambda_a, rho, nu))
    tb = float(_student_tail(Lambda_b, rho, nu))
    tc = float(_student_tail(Lambda_c, rho, nu))
    den = tc - ta
    if den <= 0.0:
        return 1.0
    return float(np.clip((tb - ta) / den, 0.0, 1.0))


def ortho_pvalue_shortcut(
    F_a: float, F_b: float, F_c: float, a: int, b: int, c: int
) -> float:
    """Orthogonal-design p-value without cubature.

    With equal scales the ordered region factorizes and
    u = (F_b - F_c) / (F_a - F_c) has the law of the (c - b)-th smallest of
    c - a - 1 uniforms, i.e. Beta(c - b, b - a). The p-value is P(U >= u).

    Raises:
        OrderingError: Unless F_a > F_b > F_c and a < b < c.
    """
    if not 0 <= a < b < c:
        raise OrderingError(f"Need 0 <= a < b < c, got ({a}, {b}, {c})")
    if not F_a > F_b > F_c:
        raise OrderingError(
            f"Need F_a > F_b > F_c, got ({F_a}, {F_b}, {F_c})"
        )
    u = (F_b - F_c) / (F_a - F_c)
    return float(stats.beta.sf(u, c - b, b - a))


def ortho_pvalue_tails(
    q_a: float, q_b: float, q_c: float, a: int, b: int, c: int
) -> float:
    """ortho_pvalue_shortcut from upper tails q_k = 1 - F_k.

    Knots far in the tail have F_k == 1 in floating point while their tails
    still differ; q_a = 0 stands for a = 0. Ties give p = 1.
    """
    if not 0 <= a < b < c:
        raise OrderingError(f"Need 0 <= a < b < c, got ({a}, {b}, {c})")
    if not q_a <= q_b <= q_c:
        raise OrderingError(f"Need q_a <= q_b <= q_c, got ({q_a}, {q_b}, {q_c})")
    if q_c == q_a:
        return 1.0
    u = (q_c - q_b) / (q_c - q_a)
    return float(stats.beta.sf(u, c - b, b - a))
