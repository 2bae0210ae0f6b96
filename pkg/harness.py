#!/usr/bin/python3
"""
Reproducible Monte-Carlo experiments.

Every replicate draws its design, truth and noise from its own stream
Generator(Philox(SeedSequence([seed, replicate]))), so results do not depend
on the number of workers or on scheduling. Records are sorted by replicate
index before anything is summarized or written.

A replicate ends in one of three states: "ok", "refused" (truncated path or
failed irrepresentable check) or "failed" (a singular step or an unreliable
QMC denominator). Summaries are computed over "ok" records only and report
the other two as rates over all replicates.
"""

from __future__ import annotations

import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from itertools import combinations
from pathlib import Path
from typing import Any, Callable

import numpy as np
from scipy import stats

from conditional_law import frozen_geometry
from config import ExperimentConfig
from dataio import write_csv, write_json
from inference import (
    InferenceError,
    Refusal,
    RefusalError,
    SelectionRule,
    VarianceSplit,
    false_negative_test,
    gst_pvalue,
    gtst_pvalue,
    power_ordering_chains,
    power_ordering_pairs,
)
from lar_engine import irrepresentable_check, lar_path
from model_core import (
    DesignMatrix,
    ModelError,
    ResponseVector,
    SingularityError,
    build_correlation_state,
)
from multiple_testing import (
    bh_reject,
    fdp,
    null_set_from_truth,
    spacing_pvalue_sequence,
)
from quadrature import LatticeRule, QuadratureError

logger = logging.getLogger(__name__)

SOFTWARE_VERSION = "0.1.0"
RNG_ALGORITHM = "numpy.random.Philox(SeedSequence([seed, replicate]))"

ECDF_GRID = np.linspace(0.01, 0.99, 99)
DOMINANCE_SLACK = 0.02
LARGE_NU = 10**6

Record = dict[str, Any]


class HarnessError(RuntimeError):
    """Raised when an experiment cannot be run as configured."""


@dataclass(frozen=True, eq=False)
class Instance:
    """One simulated data set."""

    index: int
    design: DesignMatrix
    response: ResponseVector
    truth: np.ndarray


@dataclass(eq=False)
class ExperimentReport:
    """Per-replicate records, their summary and the config that produced them."""

    experiment: str
    config: ExperimentConfig
    records: list[Record]
    summary: dict[str, Any] = field(default_factory=dict)
    version: str = SOFTWARE_VERSION

    @property
    def replicates(self) -> int:
        return len(self.records)

    def count(self, status: str) -> int:
        return sum(1 for r in self.records if r["status"] == status)

    @property
    def refusal_rate(self) -> float:
        if not self.records:
            return 0.0
        return self.count("refused") / len(self.records)

    def to_dict(self) -> dict[str, Any]:
        return {
            "experiment": self.experiment,
            "version": self.version,
            "rng": RNG_ALGORITHM,
            "config": self.config.to_dict(),
            "replicates": self.replicates,
            "summary": self.summary,
        }

    def write(self, out_dir: str | Path) -> tuple[Path, Path]:
        """Write summary.json and records.csv under out_dir."""
        out_dir = Path(out_dir)
        summary_path = out_dir / "summary.json"
        records_path = out_dir / "records.csv"
        write_json(summary_path, self.to_dict())
        write_csv(records_path, self.records)
        return summary_path, records_path


def replicate_rng(seed: int, index: int) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(np.random.SeedSequence([seed, index])))


def replicate_qmc_seed(seed: int, index: int) -> int:
    """Seed of the lattice shifts of one replicate."""
    ss = np.random.SeedSequence([seed, index, 1])
    return int(ss.generate_state(1, dtype=np.uint32)[0])


def draw_design(
    model: str, n: int, p: int, rng: np.random.Generator
) -> DesignMatrix:
    """Draw a design from a named model."""
    if model == "identity":
        if n != p:
            raise HarnessError("identity design requires n == p")
        return DesignMatrix(np.eye(n))
    x = rng.standard_normal((n, p))
    if model == "sphere-columns":
        x /= np.linalg.norm(x, axis=0)
    elif model != "iid-gaussian":
        raise HarnessError(f"Unsupported design model {model!r}")
    return DesignMatrix(x)


def draw_truth(cfg: ExperimentConfig) -> np.ndarray:
    """beta0 with the configured amplitudes (times sigma), signs alternating."""
    beta = np.zeros(cfg.p)
    for j, amp in enumerate(cfg.amplitudes):
        beta[j] = amp * cfg.sigma * (1.0 if j % 2 == 0 else -1.0)
    return beta


def draw_instance(cfg: ExperimentConfig, index: int) -> Instance:
    rng = replicate_rng(cfg.seed, index)
    design = draw_design(cfg.design_model, cfg.n, cfg.p, rng)
    truth = draw_truth(cfg)
    noise = cfg.sigma * rng.standard_normal(cfg.n)
    response = ResponseVector(design.entries @ truth + noise)
    return Instance(index=index, design=design, response=response, truth=truth)


def _lattice(cfg: ExperimentConfig, index: int) -> LatticeRule:
    return LatticeRule.korobov(
        1,
        n_points=cfg.n_points,
        n_shifts=cfg.n_shifts,
        seed=replicate_qmc_seed(cfg.seed, index),
    )


def ecdf(values: np.ndarray, grid: np.ndarray = ECDF_GRID) -> np.ndarray:
    """Empirical CDF of values evaluated on grid."""
    values = np.asarray(values, dtype=float)
    if not values.size:
        return np.full(grid.size, np.nan)
    return (values[:, None] <= grid[None, :]).mean(axis=0)


def ks_uniform(values: np.ndarray) -> float:
    """Kolmogorov-Smirnov distance to the uniform law on [0, 1]."""
    values = np.asarray(values, dtype=float)
    if not values.size:
        return float("nan")
    return float(stats.kstest(values, "uniform").statistic)


def central_interval(values: np.ndarray, level: float = 0.95) -> tuple[float, float]:
    tail = (1.0 - level) / 2.0
    lo, hi = np.quantile(np.asarray(values, dtype=float), [tail, 1.0 - tail])
    return float(lo), float(hi)


def _key(triple: tuple[int, int, int]) -> str:
    return "p_{}_{}_{}".format(*triple)


def _run_replicates(
    cfg: ExperimentConfig, fn: Callable[[int], Record]
) -> list[Record]:
    def guarded(index: int) -> Record:
        try:
            return fn(index)
        except (InferenceError, SingularityError) as exc:
            logger.debug("Replicate %d failed: %s", index, exc)
            return {"replicate": index, "status": "failed", "reason": str(exc)}
        except (ModelError, QuadratureError) as exc:
            raise HarnessError(f"Replicate {index}: {exc}") from exc

    if cfg.workers > 1:
        with ThreadPoolExecutor(max_workers=cfg.workers) as pool:
            records = list(pool.map(guarded, range(cfg.replicates)))
    else:
        records = [guarded(i) for i in range(cfg.replicates)]
    records.sort(key=lambda r: r["replicate"])
    return records


def _refused(index: int, reason: str, kmax: int) -> Record:
    return {
        "replicate": index,
        "status": "refused",
        "reason": reason,
        "irrepresentable_upto": kmax,
    }


def _status_block(records: list[Record]) -> dict[str, Any]:
    total = len(records)
    counts = {
        s: sum(1 for r in records if r["status"] == s)
        for s in ("ok", "refused", "failed")
    }
    return {
        "replicates": total,
        "ok": counts["ok"],
        "refused": counts["refused"],
        "failed": counts["failed"],
        "refusal_rate": counts["refused"] / total if total else 0.0,
        "failure_rate": counts["failed"] / total if total else 0.0,
    }


def _ok_values(records: list[Record], key: str) -> np.ndarray:
    vals = [r.get(key) for r in records if r["status"] == "ok"]
    arr = np.asarray([v for v in vals if v is not None], dtype=float)
    return arr[np.isfinite(arr)]


def _law_block(values: np.ndarray) -> dict[str, Any]:
    return {
        "count": int(values.size),
        "ks": ks_uniform(values),
        "ecdf": [float(v) for v in ecdf(values)],
    }


# null-law / power


def _pvalue_record(
    cfg: ExperimentConfig,
    index: int,
    triples: tuple[tuple[int, int, int], ...],
) -> Record:
    inst = draw_instance(cfg, index)
    state = build_correlation_state(inst.design, inst.response)
    path = lar_path(state, cfg.K + 1, cfg.formulation)
    if len(path) < cfg.K + 1:
        return _refused(index, f"path {path.status.value}", path.irrepresentable_upto)

    need = max(c for _, _, c in triples) - 1
    kmax = irrepresentable_check(state, path, need)
    if kmax < need:
        return _refused(index, "irrepresentable check failed", kmax)

    geometry = frozen_geometry(state, path, cfg.sigma)
    rule = _lattice(cfg, index)
    record: Record = {"replicate": index, "status": "ok"}
    for t in triples:
        record[_key(t)] = gst_pvalue(path, geometry, cfg.sigma, *t, rule).p_value
    return record


def summarize_null_law(cfg: ExperimentConfig, records: list[Record]) -> dict[str, Any]:
    return {
        **_status_block(records),
        "grid": [float(v) for v in ECDF_GRID],
        "laws": {
            _key(t): _law_block(_ok_values(records, _key(t))) for t in cfg.triples
        },
    }


def run_null_law(cfg: ExperimentConfig) -> ExperimentReport:
    """Law of GST p-values under the global null for the configured triples."""
    if any(cfg.amplitudes):
        raise HarnessError("null-law requires an empty signal")
    records = _run_replicates(
        cfg, lambda i: _pvalue_record(cfg, i, cfg.triples)
    )
    return ExperimentReport(
        "null-law", cfg, records, summarize_null_law(cfg, records)
    )


def power_triples(max_c: int) -> tuple[tuple[int, int, int], ...]:
    """Every 0 <= a < b < c <= max_c."""
    return tuple(combinations(range(max_c + 1), 3))


def _dominance_pairs(cfg: ExperimentConfig):
    pairs = set(power_ordering_pairs(cfg.max_c))
    for chain in power_ordering_chains(cfg.K):
        for stronger, weaker in zip(chain, chain[1:]):
            if stronger[2] <= cfg.max_c and weaker[2] <= cfg.max_c:
                pairs.add((stronger, weaker))
    for a0 in range(cfg.max_c - 1):
        if (a0, a0 + 1, cfg.max_c) != (a0, a0 + 1, a0 + 2):
            pairs.add(((a0, a0 + 1, cfg.max_c), (a0, a0 + 1, a0 + 2)))
    return sorted(pairs)


def summarize_power(cfg: ExperimentConfig, records: list[Record]) -> dict[str, Any]:
    triples = power_triples(cfg.max_c)
    curves = {t: ecdf(_ok_values(records, _key(t))) for t in triples}
    dominance = []
    for stronger, weaker in _dominance_pairs(cfg):
        gap = float(np.min(curves[stronger] - curves[weaker]))
        dominance.append(
            {
                "stronger": list(stronger),
                "weaker": list(weaker),
                "min_gap": gap,
                "holds": bool(gap >= -DOMINANCE_SLACK),
            }
        )
    return {
        **_status_block(records),
        "grid": [float(v) for v in ECDF_GRID],
        "laws": {
            _key(t): _law_block(_ok_values(records, _key(t))) for t in triples
        },
        "dominance": dominance,
        "slack": DOMINANCE_SLACK,
    }


def run_power(cfg: ExperimentConfig) -> ExperimentReport:
    """Laws of GST p-values under the configured alternative on the triple lattice."""
    triples = power_triples(cfg.max_c)
    records = _run_replicates(cfg, lambda i: _pvalue_record(cfg, i, triples))
    return ExperimentReport("power", cfg, records, summarize_power(cfg, records))


# kmax


def _kmax_record(cfg: ExperimentConfig, index: int) -> Record:
    inst = draw_instance(cfg, index)
    state = build_correlation_state(inst.design, inst.response)
    path = lar_path(state, cfg.K, cfg.formulation)
    return {
        "replicate": index,
        "status": "ok",
        "kmax": irrepresentable_check(state, path, cfg.K),
        "path_status": path.status.value,
    }


def summarize_kmax(cfg: ExperimentConfig, records: list[Record]) -> dict[str, Any]:
    values = _ok_values(records, "kmax")
    block: dict[str, Any] = {**_status_block(records), "cap": cfg.K}
    if values.size:
        lo, hi = central_interval(values)
        counts = np.bincount(values.astype(int), minlength=cfg.K + 1)
        block.update(
            {
                "mean": float(values.mean()),
                "interval_95": [lo, hi],
                "histogram": [int(c) for c in counts],
            }
        )
    return block


def run_kmax(cfg: ExperimentConfig) -> ExperimentReport:
    """Distribution of the irrepresentable-check depth K_max."""
    records = _run_replicates(cfg, lambda i: _kmax_record(cfg, i))
    return ExperimentReport("kmax", cfg, records, summarize_kmax(cfg, records))


# fdr


def _fdr_record(cfg: ExperimentConfig, index: int) -> Record:
    inst = draw_instance(cfg, index)
    state = build_correlation_state(inst.design, inst.response)
    path = lar_path(state, cfg.K + 1, cfg.formulation)
    if len(path) < cfg.K + 1:
        return _refused(index, f"path {path.status.value}", path.irrepresentable_upto)

    geometry = frozen_geometry(state, path, cfg.sigma)
    try:
        pvalues = spacing_pvalue_sequence(path, geometry, cfg.sigma, cfg.K)
    except RefusalError as exc:
        return _refused(index, str(exc), path.irrepresentable_upto)

    rejected = bh_reject(pvalues, cfg.alpha)
    nulls = null_set_from_truth(state, path, inst.truth, cfg.K)
    return {
        "replicate": index,
        "status": "ok",
        "fdp": fdp(rejected, nulls),
        "rejections": len(rejected),
        "false_positives": len(rejected.rejected & nulls),
        "k_hat": rejected.k_hat,
        "selection": "-".join(str(i) for i in path.raw_indices[: cfg.K]),
    }


def summarize_fdr(cfg: ExperimentConfig, records: list[Record]) -> dict[str, Any]:
    values = _ok_values(records, "fdp")
    block: dict[str, Any] = {**_status_block(records), "alpha": cfg.alpha}
    if values.size:
        se = float(values.std(ddof=1) / math.sqrt(values.size)) if values.size > 1 else 0.0
        fdr = float(values.mean())
        block.update(
            {
                "fdr": fdr,
                "std_error": se,
                "bound": cfg.alpha + 2.0 * se,
                "controlled": bool(fdr <= cfg.alpha + 2.0 * se),
                "any_rejection_rate": float(
                    np.mean(_ok_values(records, "rejections") > 0)
                ),
            }
        )
    if cfg.bin_by_selection:
        bins: dict[str, list[float]] = {}
        for r in records:
            if r["status"] == "ok":
                bins.setdefault(r["selection"], []).append(float(r["fdp"]))
        block["bins"] = {
            key: {
                "count": len(v),
                "fdr": float(np.mean(v)),
                "binomial_se": math.sqrt(cfg.alpha * (1.0 - cfg.alpha) / len(v)),
            }
            for key, v in sorted(bins.items())
        }
    return block


def run_fdr(cfg: ExperimentConfig) -> ExperimentReport:
    """FDP of spacing-BH per replicate and the resulting FDR estimate."""
    records = _run_replicates(cfg, lambda i: _fdr_record(cfg, i))
    return ExperimentReport("fdr", cfg, records, summarize_fdr(cfg, records))


# falseneg


def _selection_rule(cfg: ExperimentConfig) -> SelectionRule:
    return SelectionRule(
        kind=cfg.selection,
        alpha_prime=cfg.alpha_prime,
        gamma_fp=cfg.gamma_fp,
        m_hat=cfg.m_hat,
    )


def _falseneg_record(cfg: ExperimentConfig, index: int) -> Record:
    inst = draw_instance(cfg, index)
    rule = _lattice(cfg, index)
    sigma = cfg.sigma if cfg.known_sigma else None
    outcome = false_negative_test(
        inst.design,
        inst.response,
        cfg.K,
        _selection_rule(cfg),
        sigma=sigma,
        rule=rule,
        formulation=cfg.formulation,
    )
    if isinstance(outcome, Refusal):
        return _refused(index, outcome.reason, outcome.irrepresentable_upto)

    record: Record = {
        "replicate": index,
        "status": "ok",
        "p_value": outcome.p_value,
        "m_hat": outcome.selection.m_hat,
        "method": outcome.method,
    }
    if cfg.large_nu_check and cfg.known_sigma:
        state = build_correlation_state(inst.design, inst.response)
        path = lar_path(state, cfg.K + 1, cfg.formulation)
        geometry = frozen_geometry(state, path, cfg.sigma)
        forced = VarianceSplit(
            sigma_select=cfg.sigma, sigma_test=cfg.sigma, n1=LARGE_NU, n2=LARGE_NU
        )
        record["p_large_nu"] = gtst_pvalue(
            path, geometry, forced, *outcome.triple, rule
        ).p_value
    return record


def summarize_falseneg(cfg: ExperimentConfig, records: list[Record]) -> dict[str, Any]:
    values = _ok_values(records, "p_value")
    block: dict[str, Any] = {
        **_status_block(records),
        "mode": "known-sigma" if cfg.known_sigma else "split-variance",
        "grid": [float(v) for v in ECDF_GRID],
        "law": _law_block(values),
        "median": float(np.median(values)) if values.size else float("nan"),
    }
    m_hats = _ok_values(records, "m_hat").astype(int)
    block["by_m_hat"] = {
        str(m): _law_block(_ok_values(
            [r for r in records if r.get("m_hat") == m], "p_value"
        ))
        for m in sorted(set(m_hats.tolist()))
    }
    if cfg.large_nu_check and cfg.known_sigma:
        ok = [r for r in records if r["status"] == "ok"]
        diffs = [abs(r["p_value"] - r["p_large_nu"]) for r in ok]
        block["large_nu_max_abs_diff"] = float(max(diffs)) if diffs else float("nan")
    return block


def run_falseneg(cfg: ExperimentConfig) -> ExperimentReport:
    """Law of the false-negative p-value after model selection."""
    records = _run_replicates(cfg, lambda i: _falseneg_record(cfg, i))
    return ExperimentReport(
        "falseneg", cfg, records, summarize_falseneg(cfg, records)
    )


RUNNERS: dict[str, Callable[[ExperimentConfig], ExperimentReport]] = {
    "null-law": run_null_law,
    "power": run_power,
    "kmax": run_kmax,
    "fdr": run_fdr,
    "falseneg": run_falseneg,
}

SUMMARIZERS: dict[str, Callable[[ExperimentConfig, list[Record]], dict[str, Any]]] = {
    "null-law": summarize_null_law,
    "power": summarize_power,
    "kmax": summarize_kmax,
    "fdr": summarize_fdr,
    "falseneg": summarize_falseneg,
}


def run_experiment(cfg: ExperimentConfig) -> ExperimentReport:
    """Run the experiment named by cfg.experiment."""
    logger.info(
        "Running %s: %d replicates, seed=%d", cfg.experiment, cfg.replicates, cfg.seed
    )
    return RUNNERS[cfg.experiment](cfg)
