"""Replicated simulation study over a grid of effect sizes and dimensions.

Each cell of the grid fixes (tau11, J, n); every replication simulates a
dataset, fits the crossed model, and evaluates both EBF variants for all
four effect blocks.  Replication r of every cell uses the random stream
derived from (master_seed, r), so cells share common random numbers and
differences along the grid are not masked by between-cell noise.
"""

from __future__ import annotations

import csv
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .crossed_gibbs import (
    CrossedModelConfig,
    GibbsConfig,
    crossed_block_manifest,
    gibbs_fit,
    simulate_dataset,
)
from .ebf_core import VARIANT_FULL, VARIANT_MEAN, log_ebf
from .errors import EbfkitError, EmptyInput, TooManyFailures
from .posterior_io import block_tau, summarize_block

BLOCK_IDS = ("theta_11", "theta_12", "theta_21", "theta_22")
VARIANTS = (VARIANT_MEAN, VARIANT_FULL)

# Grid of the experimental design: effect scale, clusters in dimension 1,
# observations per cell.
DEFAULT_TAU11_GRID = (0.0, 0.03, 0.07, 0.13, 0.2, 0.29, 0.4, 0.55, 0.75, 0.8)
DEFAULT_J_VALUES = (10, 30, 100)
DEFAULT_N_VALUES = (10, 30, 100)

# Share of replications of one cell that may fail before the cell is invalid.
FAILURE_LIMIT = 0.1


def quantiles(values, probs) -> np.ndarray:
    """Linear-interpolation (type 7) quantiles of finite values."""
    values = np.asarray(values, dtype=float)
    if values.size == 0:
        raise EmptyInput("quantiles of an empty collection")
    if not np.all(np.isfinite(values)):
        raise ValueError("quantiles need finite values")
    probs = np.asarray(probs, dtype=float)
    if np.any((probs < 0.0) | (probs > 1.0)):
        raise ValueError("probabilities must lie in [0, 1]")
    return np.quantile(values, probs, method="linear")


@dataclass(frozen=True)
class CellKey:
    tau11: float
    J: int
    n: int


@dataclass
class SimStudyConfig:
    """Grid, generating truth, chain controls and execution options."""

    tau11_grid: tuple[float, ...] = DEFAULT_TAU11_GRID
    j_values: tuple[int, ...] = DEFAULT_J_VALUES
    n_values: tuple[int, ...] = DEFAULT_N_VALUES
    K: int = 20
    replications: int = 200
    alpha: float = 0.0
    sigma2: float = 1.0
    tau12: float = 0.5
    rho1: float = 0.3
    tau21: float = 0.5
    tau22: float = 0.0
    rho2: float = 0.3
    gibbs: GibbsConfig = field(default_factory=GibbsConfig)
    ridge: float = 0.0
    master_seed: int = 0
    jobs: int = 1

    def __post_init__(self):
        if isinstance(self.gibbs, dict):
            self.gibbs = GibbsConfig(**self.gibbs)
        self.tau11_grid = tuple(float(t) for t in self.tau11_grid)
        self.j_values = tuple(int(j) for j in self.j_values)
        self.n_values = tuple(int(n) for n in self.n_values)
        if not (self.tau11_grid and self.j_values and self.n_values):
            raise ValueError("grid axes must be non-empty")
        if any(t < 0.0 for t in self.tau11_grid):
            raise ValueError("tau11 values must be non-negative")
        if self.replications < 20:
            raise ValueError("need at least 20 replications per cell")
        if self.jobs < 1:
            raise ValueError("jobs must be >= 1")
        if self.ridge < 0.0:
            raise ValueError("ridge must be non-negative")

    def cells(self) -> list[CellKey]:
        return [
            CellKey(tau11=t, J=j, n=n)
            for t in self.tau11_grid
            for j in self.j_values
            for n in self.n_values
        ]


PSI_VARIANCE_COLUMNS = ("psi1_11", "psi1_22", "psi2_11", "psi2_22")


@dataclass(frozen=True)
class RepRecord:
    """Outcome of one replication; ``log_ebf`` keys are (block, variant) and
    ``psi_post_mean`` holds the posterior mean of each Psi variance column."""

    rep: int
    ok: bool
    log_ebf: dict
    psi_post_mean: dict
    error: str = ""

    @property
    def psi11_post_mean(self) -> float:
        return self.psi_post_mean.get("psi1_11", float("nan"))


@dataclass(frozen=True)
class BlockStats:
    q05: float
    q50: float
    q95: float
    selection_prop: float


@dataclass(frozen=True)
class CellSummary:
    """Aggregates of one grid cell over its successful replications."""

    tau11: float
    J: int
    n: int
    replications: int
    failures: int
    valid: bool
    stats: dict
    mean_psi11_post_mean: float


def _replicate(payload) -> RepRecord:
    """One replication: simulate, fit, evaluate all blocks and variants.

    Top-level so process pools can pickle it.  The random stream is fully
    determined by (master_seed, rep); the data and the chain get independent
    child streams.
    """
    model_kwargs, gibbs_kwargs, master_seed, rep, ridge = payload
    data_seed, chain_seed = np.random.SeedSequence([master_seed, rep]).spawn(2)
    try:
        data = simulate_dataset(CrossedModelConfig(**model_kwargs, seed=data_seed))
        draws = gibbs_fit(data, GibbsConfig(**gibbs_kwargs, seed=chain_seed))
        manifest = crossed_block_manifest(data.n_dim1, data.n_dim2, ridge=ridge)
        log_ebfs: dict = {}
        for block in manifest.blocks:
            summary, tau_mean = summarize_block(draws, block, ridge=ridge, variant=VARIANT_MEAN)
            tau_full = block_tau(draws, block, VARIANT_FULL)
            log_ebfs[(block.block_id, VARIANT_MEAN)] = log_ebf(
                summary, block.structure, tau_mean
            ).log_ebf01
            log_ebfs[(block.block_id, VARIANT_FULL)] = log_ebf(
                summary, block.structure, tau_full
            ).log_ebf01
        psi = {c: float(draws.column(c).mean()) for c in PSI_VARIANCE_COLUMNS}
        return RepRecord(rep=rep, ok=True, log_ebf=log_ebfs, psi_post_mean=psi)
    except EbfkitError as e:
        return RepRecord(rep=rep, ok=False, log_ebf={}, psi_post_mean={}, error=str(e))


def _cell_payloads(config: SimStudyConfig, key: CellKey) -> list[tuple]:
    model_kwargs = dict(
        J=key.J,
        K=config.K,
        n=key.n,
        alpha=config.alpha,
        sigma2=config.sigma2,
        tau11=key.tau11,
        tau12=config.tau12,
        rho1=config.rho1,
        tau21=config.tau21,
        tau22=config.tau22,
        rho2=config.rho2,
    )
    gibbs_kwargs = dict(
        iterations=config.gibbs.iterations,
        burn_in=config.gibbs.burn_in,
        thin=config.gibbs.thin,
    )
    return [
        (model_kwargs, gibbs_kwargs, config.master_seed, rep, config.ridge)
        for rep in range(config.replications)
    ]


def _run_cell(config: SimStudyConfig, key: CellKey) -> tuple[CellSummary, list[RepRecord]]:
    payloads = _cell_payloads(config, key)
    if config.jobs == 1:
        records = [_replicate(p) for p in payloads]
    else:
        with ProcessPoolExecutor(max_workers=config.jobs) as pool:
            records = list(pool.map(_replicate, payloads))
    records.sort(key=lambda r: r.rep)

    good = [r for r in records if r.ok]
    failures = len(records) - len(good)
    valid = failures <= FAILURE_LIMIT * len(records)
    stats = {}
    for block in BLOCK_IDS:
        for variant in VARIANTS:
            if good:
                vals = np.array([r.log_ebf[(block, variant)] for r in good])
                q05, q50, q95 = quantiles(vals, (0.05, 0.5, 0.95))
                sel = float(np.mean(vals < 0.0))
            else:
                q05 = q50 = q95 = sel = float("nan")
            stats[(block, variant)] = BlockStats(
                q05=float(q05), q50=float(q50), q95=float(q95), selection_prop=sel
            )
    mean_psi11 = float(np.mean([r.psi11_post_mean for r in good])) if good else float("nan")
    summary = CellSummary(
        tau11=key.tau11,
        J=key.J,
        n=key.n,
        replications=len(records),
        failures=failures,
        valid=valid,
        stats=stats,
        mean_psi11_post_mean=mean_psi11,
    )
    return summary, records


def run_cell(config: SimStudyConfig, key: CellKey) -> CellSummary:
    """Run one grid cell; raises :class:`TooManyFailures` beyond the 10%
    failure budget."""
    summary, _ = _run_cell(config, key)
    if not summary.valid:
        raise TooManyFailures(
            f"cell tau11={key.tau11:g} J={key.J} n={key.n}: "
            f"{summary.failures} of {summary.replications} replications failed"
        )
    return summary


def _cell_slug(key: CellKey) -> str:
    return f"tau11_{key.tau11:g}_J{key.J}_n{key.n}"


def _raw_header() -> list[str]:
    cols = ["rep", "ok"]
    cols += [f"log_ebf_{b}_{v}" for b in BLOCK_IDS for v in VARIANTS]
    cols += [f"{c}_post_mean" for c in PSI_VARIANCE_COLUMNS]
    cols += ["error"]
    return cols


def _write_raw(records: list[RepRecord], path: Path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(_raw_header())
        for r in records:
            row: list = [r.rep, int(r.ok)]
            for b in BLOCK_IDS:
                for v in VARIANTS:
                    row.append(repr(r.log_ebf[(b, v)]) if r.ok else "")
            for c in PSI_VARIANCE_COLUMNS:
                row.append(repr(r.psi_post_mean[c]) if r.ok else "")
            row.append(r.error)
            writer.writerow(row)


def _summary_rows(s: CellSummary):
    for b in BLOCK_IDS:
        for v in VARIANTS:
            bs = s.stats[(b, v)]
            yield (b, v, "q05", bs.q05)
            yield (b, v, "q50", bs.q50)
            yield (b, v, "q95", bs.q95)
            yield (b, v, "selection_prop", bs.selection_prop)
    yield ("psi1_11", "", "mean_post_mean", s.mean_psi11_post_mean)
    yield ("", "", "replications", float(s.replications))
    yield ("", "", "failures", float(s.failures))
    yield ("", "", "valid", float(int(s.valid)))


def run_grid(config: SimStudyConfig, out_dir) -> list[CellSummary]:
    """Run every cell of the grid, streaming results to ``out_dir``.

    Writes ``cells.csv`` (one aggregate statistic per row) plus one raw
    per-replication file per cell; rows are flushed as each cell finishes,
    so an interrupted run keeps its completed cells.  A cell over the
    failure budget is marked invalid and the grid continues.
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    summaries: list[CellSummary] = []
    with open(out_dir / "cells.csv", "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["tau11", "J", "n", "block", "variant", "statistic", "value"])
        fh.flush()
        for key in config.cells():
            summary, records = _run_cell(config, key)
            summaries.append(summary)
            _write_raw(records, out_dir / f"raw_logebf_{_cell_slug(key)}.csv")
            for block, variant, statistic, value in _summary_rows(summary):
                writer.writerow(
                    [repr(key.tau11), key.J, key.n, block, variant, statistic, repr(value)]
                )
            fh.flush()
    return summaries
