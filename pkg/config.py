#!/usr/bin/python3
"""
Experiment configuration parsing.

This module defines the configuration schema of the Monte-Carlo harness and
a loader for JSON configuration files.

Parsing rules:
- Unknown keys are ignored.
- The 'experiment' key is required; every other key has a default.
- Booleans accept JSON true/false or the strings true/1/yes/y/on and
  false/0/no/n/off.
- Dimensions, levels and triples are validated.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Any

from quadrature import DEFAULT_POINTS, DEFAULT_SHIFTS

EXPERIMENTS = ("null-law", "power", "fdr", "kmax", "falseneg")
DESIGN_MODELS = ("identity", "iid-gaussian", "sphere-columns")
SELECTION_RULES = ("sequential", "fixed")
FORMULATIONS = ("standard", "projected", "recursive")


class ConfigError(ValueError):
    """Raised when the configuration file is missing
    required values or invalid."""


@dataclass(frozen=True)
class ExperimentConfig:
    """Parsed experiment configuration.

    Attributes:
        experiment: One of EXPERIMENTS.
        n: Number of observations.
        p: Number of predictors.
        K: Number of tested steps; paths are computed to K + 1 knots. For
            kmax it caps the irrepresentable check.
        design_model: identity (requires n == p), iid-gaussian or
            sphere-columns (unit-norm Gaussian columns).
        amplitudes: Nonzero coefficients in units of sigma, placed on the
            first predictors with alternating signs.
        sigma: Noise standard deviation.
        replicates: Number of Monte-Carlo replicates.
        seed: Master seed of the per-replicate streams.
        n_points: Lattice points per shift.
        n_shifts: Random shifts per estimate.
        triples: (a, b, c) triples tested by null-law.
        max_c: Largest c of the triple lattice scanned by power.
        alpha: BH level for fdr.
        selection: falseneg model-size rule, sequential or fixed.
        alpha_prime: Level of the sequential selection tests.
        gamma_fp: Consecutive misses that stop sequential selection.
        m_hat: Size used by the fixed rule.
        known_sigma: falseneg tests with the true sigma when True, with
            the split-variance estimate otherwise.
        large_nu_check: falseneg also reports the studentized p-value with
            sigma_test = sigma and nu = 10**6 next to the Gaussian one.
        bin_by_selection: fdr bins FDP by the entered index sequence.
        formulation: LAR formulation.
        workers: Worker threads.
        output: Output directory; the CLI --out overrides it.
    """

    experiment: str
    n: int = 100
    p: int = 150
    K: int = 3
    design_model: str = "sphere-columns"
    amplitudes: tuple[float, ...] = ()
    sigma: float = 1.0
    replicates: int = 1000
    seed: int = 0
    n_points: int = DEFAULT_POINTS
    n_shifts: int = DEFAULT_SHIFTS
    triples: tuple[tuple[int, int, int], ...] = ((0, 1, 2),)
    max_c: int = 5
    alpha: float = 0.2
    selection: str = "sequential"
    alpha_prime: float = 0.1
    gamma_fp: int = 1
    m_hat: int = 1
    known_sigma: bool = True
    large_nu_check: bool = False
    bin_by_selection: bool = False
    formulation: str = "recursive"
    workers: int = 1
    output: Path | None = field(default=None)

    def to_dict(self) -> dict[str, Any]:
        d = asdict(self)
        d["amplitudes"] = list(self.amplitudes)
        d["triples"] = [list(t) for t in self.triples]
        d["output"] = str(self.output) if self.output else None
        return d


def _parse_bool(value: Any) -> bool:
    """Parse a boolean config value.

    Accepted truthy values: true, 1, yes, y, on.
    Accepted falsy values: false, 0, no, n, off.

    Args:
        value: Raw value from the config file.

    Returns:
        Parsed boolean value.

    Raises:
        ConfigError: If the value cannot be interpreted as a boolean.
    """
    if isinstance(value, bool):
        return value
    v = str(value).strip().lower()
    if v in {"true", "1", "yes", "y", "on"}:
        return True
    if v in {"false", "0", "no", "n", "off"}:
        return False
    raise ConfigError(f"Invalid boolean value: {value!r}")


def _int(raw: dict[str, Any], key: str, default: int, minimum: int) -> int:
    value = raw.get(key, default)
    if isinstance(value, bool) or not isinstance(value, (int, str)):
        raise ConfigError(f"{key} must be an integer, got {value!r}")
    try:
        out = int(value)
    except ValueError as exc:
        raise ConfigError(f"{key} must be an integer, got {value!r}") from exc
    if out < minimum:
        raise ConfigError(f"{key} must be >= {minimum}, got {out}")
    return out


def _float(raw: dict[str, Any], key: str, default: float) -> float:
    value = raw.get(key, default)
    try:
        return float(value)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{key} must be a number, got {value!r}") from exc


def _choice(raw: dict[str, Any], key: str, default: str, allowed) -> str:
    value = str(raw.get(key, default)).strip()
    if value not in allowed:
        raise ConfigError(
            f"Unsupported {key}={value!r}. Allowed: {sorted(allowed)}"
        )
    return value


def _triples(value: Any) -> tuple[tuple[int, int, int], ...]:
    try:
        triples = tuple(tuple(int(v) for v in t) for t in value)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"triples must be a list of [a, b, c]: {exc}") from exc
    for t in triples:
        if len(t) != 3 or not 0 <= t[0] < t[1] < t[2]:
            raise ConfigError(f"triple {list(t)} must satisfy 0 <= a < b < c")
    return triples


def load_config(config_path: str | Path) -> ExperimentConfig:
    """Load and validate an experiment configuration from a JSON file.

    Supported keys:
        "experiment": "null-law|power|fdr|kmax|falseneg"      (required)
        "n": 100, "p": 150, "K": 3                            (optional)
        "design_model": "identity|iid-gaussian|sphere-columns"
        "amplitudes": [3.0, 3.0]                  (units of sigma)
        "sparsity": 10, "amplitude": 3.0          (shorthand for amplitudes)
        "sigma": 1.0, "replicates": 1000, "seed": 0
        "n_points": 4093, "n_shifts": 16
        "triples": [[0, 1, 2], [0, 1, 4]]         (null-law)
        "max_c": 5                                (power)
        "alpha": 0.2, "bin_by_selection": false   (fdr)
        "selection": "sequential|fixed", "alpha_prime": 0.1,
        "gamma_fp": 1, "m_hat": 1, "known_sigma": true,
        "large_nu_check": false                   (falseneg)
        "formulation": "recursive", "workers": 1, "output": "out/"

    Validation rules:
    - experiment must be one of the supported experiments.
    - n, p, replicates, n_points, n_shifts, workers are positive; K >= 1.
    - K < min(n - 3, p); identity designs need n == p.
    - power needs at least one nonzero amplitude.
    - Every triple satisfies 0 <= a < b < c <= K + 1.
    - alpha in [0, 1], alpha_prime in (0, 1), 1 <= m_hat <= K - 1 for the
      fixed rule.

    Args:
        config_path: Path to the configuration file.

    Returns:
        A validated ExperimentConfig instance.

    Raises:
        ConfigError: If the file cannot be read or parsed, required keys are
            missing, or values fail validation.
    """
    path = Path(config_path)

    try:
        text = path.read_text(encoding="utf-8")
    except FileNotFoundError as exc:
        raise ConfigError(f"Config file not found: {path}") from exc
    except OSError as exc:
        raise ConfigError(
            f"Failed to read config file: {path} ({exc})"
        ) from exc

    try:
        raw = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"Invalid JSON in {path}: {exc}") from exc
    if not isinstance(raw, dict):
        raise ConfigError(f"Config root must be an object: {path}")

    if "experiment" not in raw:
        raise ConfigError("Missing required config entry: experiment")
    experiment = _choice(raw, "experiment", "", EXPERIMENTS)

    n = _int(raw, "n", 100, 1)
    p = _int(raw, "p", 150, 1)
    K = _int(raw, "K", 3, 1)
    design_model = _choice(raw, "design_model", "sphere-columns", DESIGN_MODELS)

    if "amplitudes" in raw:
        try:
            amplitudes = tuple(float(v) for v in raw["amplitudes"])
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"amplitudes must be numbers: {exc}") from exc
    else:
        sparsity = _int(raw, "sparsity", 0, 0)
        amplitudes = (_float(raw, "amplitude", 3.0),) * sparsity
    if len(amplitudes) > p:
        raise ConfigError(f"{len(amplitudes)} amplitudes for p={p}")

    sigma = _float(raw, "sigma", 1.0)
    if sigma <= 0:
        raise ConfigError(f"sigma must be positive, got {sigma}")

    if K >= min(n - 3, p):
        raise ConfigError(
            f"K={K} must be < min(n - 3, p) = {min(n - 3, p)}"
        )
    if design_model == "identity" and n != p:
        raise ConfigError("design_model=identity requires n == p")
    if experiment == "power" and not any(amplitudes):
        raise ConfigError("experiment=power requires a nonzero signal")

    triples = _triples(raw.get("triples", [[0, 1, 2]]))
    for t in triples:
        if t[2] > K + 1:
            raise ConfigError(f"triple {list(t)} needs c <= K + 1 = {K + 1}")

    alpha = _float(raw, "alpha", 0.2)
    if not 0.0 <= alpha <= 1.0:
        raise ConfigError(f"alpha must lie in [0, 1], got {alpha}")
    alpha_prime = _float(raw, "alpha_prime", 0.1)
    if not 0.0 < alpha_prime < 1.0:
        raise ConfigError(f"alpha_prime must lie in (0, 1), got {alpha_prime}")

    selection = _choice(raw, "selection", "sequential", SELECTION_RULES)
    m_hat = _int(raw, "m_hat", 1, 1)
    if selection == "fixed" and m_hat > K - 1:
        raise ConfigError(f"m_hat must lie in [1, {K - 1}], got {m_hat}")
    if experiment == "falseneg" and K < 2:
        raise ConfigError("experiment=falseneg requires K >= 2")

    output = raw.get("output")

    return ExperimentConfig(
        experiment=experiment,
        n=n,
        p=p,
        K=K,
        design_model=design_model,
        amplitudes=amplitudes,
        sigma=sigma,
        replicates=_int(raw, "replicates", 1000, 0),
        seed=_int(raw, "seed", 0, 0),
        n_points=_int(raw, "n_points", DEFAULT_POINTS, 2),
        n_shifts=_int(raw, "n_shifts", DEFAULT_SHIFTS, 1),
        triples=triples,
        max_c=min(_int(raw, "max_c", 5, 2), K + 1),
        alpha=alpha,
        selection=selection,
        alpha_prime=alpha_prime,
        gamma_fp=_int(raw, "gamma_fp", 1, 1),
        m_hat=m_hat,
        known_sigma=_parse_bool(raw.get("known_sigma", True)),
        large_nu_check=_parse_bool(raw.get("large_nu_check", False)),
        bin_by_selection=_parse_bool(raw.get("bin_by_selection", False)),
        formulation=_choice(raw, "formulation", "recursive", FORMULATIONS),
        workers=_int(raw, "workers", 1, 1),
        output=Path(output) if output else None,
    )
