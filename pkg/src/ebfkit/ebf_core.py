"""Empirical Bayes factors for random-effect blocks.

The test of a J-dimensional block theta compares the model with the block
against the one without it through a Savage-Dickey density ratio evaluated
at theta = 0:

    log EBF01 = log q(0 | posterior) - log p(0 | prior covariance estimate)

The numerator is a Gaussian approximation built from the posterior mean and
covariance of the block.  The denominator is the height at zero of the
N(0, Psi(tau)) prior, with the variance parameters tau either plugged in at
their posterior mean ("mean" variant) or averaged over their posterior draws
("full" variant).  Both sides drop the common (2*pi)^(-J/2) factor, which
cancels in the ratio.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterator, Sequence

import numpy as np

from .covstruct import (
    CovarianceStructure,
    Diagonal,
    ScaledIdentity,
    VarianceParams,
    _chol,
    build_covariance,
    log_det,
)
from .errors import (
    AllDrawsDegenerate,
    DimensionMismatch,
    EmptyDraws,
    ExcessDegenerateDraws,
    NotPositiveDefinite,
)

VARIANT_MEAN = "mean"
VARIANT_FULL = "full"

# Share of degenerate draws above which the full-posterior average is
# considered unreliable.
DEGENERATE_DRAW_LIMIT = 0.01


@dataclass(frozen=True)
class RandomEffectSummary:
    """Posterior mean and covariance of one random-effect block.

    Parameters
    ----------
    block_id : str
    mean : (J,) ndarray
        Posterior mean of the block.
    covariance : (J, J) ndarray
        Posterior covariance (already regularised if a ridge was requested).
    n_draws_used : int
        Number of posterior draws behind the summary.
    """

    block_id: str
    mean: np.ndarray
    covariance: np.ndarray
    n_draws_used: int

    def __post_init__(self):
        mean = np.asarray(self.mean, dtype=float)
        cov = np.asarray(self.covariance, dtype=float)
        if mean.ndim != 1 or mean.shape[0] < 1:
            raise DimensionMismatch("summary mean must be a non-empty vector")
        if cov.shape != (mean.shape[0], mean.shape[0]):
            raise DimensionMismatch(
                f"summary covariance shape {cov.shape} does not match mean length {mean.shape[0]}"
            )
        if not (np.all(np.isfinite(mean)) and np.all(np.isfinite(cov))):
            raise DimensionMismatch("summary moments must be finite")
        object.__setattr__(self, "mean", mean)
        object.__setattr__(self, "covariance", cov)

    @property
    def dim(self) -> int:
        return self.mean.shape[0]


@dataclass(frozen=True)
class TauDraws:
    """Posterior draws of variance parameters in columnar form.

    ``values[s, i]`` is draw s of slot ``slots[i]``.  Iterating yields one
    :class:`VarianceParams` per draw.
    """

    slots: tuple[str, ...]
    values: np.ndarray

    def __post_init__(self):
        vals = np.asarray(self.values, dtype=float)
        if vals.ndim != 2 or vals.shape[1] != len(self.slots):
            raise DimensionMismatch("TauDraws values must be (n_draws, n_slots)")
        object.__setattr__(self, "slots", tuple(self.slots))
        object.__setattr__(self, "values", vals)

    def __len__(self) -> int:
        return self.values.shape[0]

    def __getitem__(self, s: int) -> VarianceParams:
        return VarianceParams(dict(zip(self.slots, self.values[s])))

    def __iter__(self) -> Iterator[VarianceParams]:
        for s in range(len(self)):
            yield self[s]


@dataclass(frozen=True)
class TauPosterior:
    """Posterior information about the variance parameters of one block.

    Exactly one of ``point`` (posterior means, for the mean variant) or
    ``draws`` (per-draw values, for the full variant) is set.
    """

    point: VarianceParams | None = None
    draws: TauDraws | None = None

    def __post_init__(self):
        if (self.point is None) == (self.draws is None):
            raise ValueError("exactly one of point/draws must be given")

    @property
    def variant(self) -> str:
        return VARIANT_MEAN if self.point is not None else VARIANT_FULL

    @classmethod
    def from_point(cls, values) -> "TauPosterior":
        return cls(point=VarianceParams(dict(values)))

    @classmethod
    def from_draws(cls, slots, values) -> "TauPosterior":
        return cls(draws=TauDraws(tuple(slots), values))


@dataclass(frozen=True)
class EbfResult:
    """One evaluated Bayes factor.

    ``log_ebf01`` is always ``log_numerator - log_denominator``; values above
    zero favour the model without the block.
    """

    block_id: str
    variant: str
    dim: int
    log_numerator: float
    log_denominator: float
    log_ebf01: float
    notes: dict = field(default_factory=dict)


def _chol_logdet_quad(cov: np.ndarray, v: np.ndarray) -> tuple[float, float]:
    """(log|cov|, v^T cov^-1 v) from a single Cholesky factorisation."""
    L = _chol(0.5 * (cov + cov.T), "posterior covariance")
    logdet = 2.0 * float(np.sum(np.log(np.diag(L))))
    z = np.linalg.solve(L, v)
    return logdet, float(z @ z)


def gaussian_log_density_at_zero(summary: RandomEffectSummary) -> float:
    """Log height at zero of N(mean, covariance), without the 2*pi factor.

    Returns -1/2 log|Sigma| - 1/2 mean^T Sigma^-1 mean.
    """
    logdet, quad = _chol_logdet_quad(summary.covariance, summary.mean)
    return -0.5 * logdet - 0.5 * quad


def log_prior_density_at_zero_mean(
    structure: CovarianceStructure, tau_bar: VarianceParams
) -> float:
    """Log prior height at zero with tau plugged in: -1/2 log|Psi(tau_bar)|.

    Evaluated through the dense build so that the determinant is computed by
    the same route as the numerator's; feeding the numerator the built
    matrix therefore cancels exactly.
    """
    cov = build_covariance(structure, tau_bar)
    logdet, _ = _chol_logdet_quad(cov, np.zeros(structure.dim))
    return -0.5 * logdet


def _draw_log_dets(structure: CovarianceStructure, draws) -> np.ndarray:
    """log|Psi(tau_s)| per draw; NaN marks a degenerate draw.

    Columnar draws hit vectorised paths for the structures whose
    determinant is a closed form in the slot values.
    """
    if isinstance(draws, TauDraws):
        cols = {name: i for i, name in enumerate(draws.slots)}
        if isinstance(structure, ScaledIdentity):
            if structure.variance not in cols:
                return np.array([log_det(structure, p) for p in draws])  # raises MissingSlot
            v = draws.values[:, cols[structure.variance]]
            with np.errstate(invalid="ignore", divide="ignore"):
                out = structure.dim * np.log(v)
            out[~np.isfinite(out)] = np.nan
            return out
        if isinstance(structure, Diagonal) and all(e in cols for e in structure.entries):
            v = draws.values[:, [cols[e] for e in structure.entries]]
            with np.errstate(invalid="ignore", divide="ignore"):
                out = np.sum(np.log(v), axis=1)
            out[~np.isfinite(out)] = np.nan
            return out
    out = np.empty(len(draws))
    for s, p in enumerate(draws):
        try:
            out[s] = log_det(structure, p)
        except NotPositiveDefinite:
            out[s] = np.nan
    return out


def log_prior_density_at_zero_full(
    structure: CovarianceStructure, tau_draws
) -> tuple[float, int, int]:
    """Log prior height at zero averaged over posterior draws of tau.

    Computes log( (1/S) sum_s |Psi(tau_s)|^(-1/2) ) with a stable
    log-sum-exp, skipping draws whose covariance is degenerate.

    Parameters
    ----------
    structure : CovarianceStructure
    tau_draws : TauDraws or sequence of VarianceParams

    Returns
    -------
    (value, n_used, n_degenerate)

    Raises
    ------
    EmptyDraws
        If no draws are supplied.
    AllDrawsDegenerate
        If every draw is degenerate.
    ExcessDegenerateDraws
        If more than 1% of draws are degenerate.
    """
    n = len(tau_draws)
    if n == 0:
        raise EmptyDraws("full-posterior variant needs at least one draw")
    log_dets = _draw_log_dets(structure, tau_draws)
    good = np.isfinite(log_dets)
    n_used = int(np.count_nonzero(good))
    n_bad = n - n_used
    if n_used == 0:
        raise AllDrawsDegenerate(f"all {n} draws gave a degenerate covariance")
    if n_bad > DEGENERATE_DRAW_LIMIT * n:
        raise ExcessDegenerateDraws(
            f"{n_bad} of {n} draws gave a degenerate covariance"
        )
    x = -0.5 * log_dets[good]
    m = float(np.max(x))
    value = m + math.log(float(np.sum(np.exp(x - m)))) - math.log(n_used)
    return value, n_used, n_bad


def log_ebf(
    summary: RandomEffectSummary,
    structure: CovarianceStructure,
    tau: TauPosterior,
) -> EbfResult:
    """Savage-Dickey log EBF01 for one block.

    The variant is inferred from ``tau``: a point estimate selects the
    plug-in denominator, draws select the full-posterior average.
    """
    if structure.dim != summary.dim:
        raise DimensionMismatch(
            f"structure dim {structure.dim} does not match block {summary.block_id!r} "
            f"dim {summary.dim}"
        )
    num = gaussian_log_density_at_zero(summary)
    notes = {"n_draws_used": summary.n_draws_used, "degenerate_draws": 0}
    if tau.point is not None:
        den = log_prior_density_at_zero_mean(structure, tau.point)
        variant = VARIANT_MEAN
    else:
        den, n_used, n_bad = log_prior_density_at_zero_full(structure, tau.draws)
        notes["tau_draws_used"] = n_used
        notes["degenerate_draws"] = n_bad
        variant = VARIANT_FULL
    return EbfResult(
        block_id=summary.block_id,
        variant=variant,
        dim=summary.dim,
        log_numerator=num,
        log_denominator=den,
        log_ebf01=num - den,
        notes=notes,
    )


def log_ebf_joint(
    blocks: Sequence[tuple[str, CovarianceStructure, VarianceParams]],
    joint_mean: np.ndarray,
    joint_cov: np.ndarray,
) -> EbfResult:
    """Joint EBF01 for several blocks tested together.

    The numerator uses the pooled posterior moments of the stacked blocks;
    the denominator is the product of the per-block plug-in prior heights,
    so only point estimates of tau are accepted.

    ``blocks`` lists (block_id, structure, tau_point) in stacking order.
    """
    if len(blocks) == 0:
        raise DimensionMismatch("joint EBF needs at least one block")
    joint_mean = np.asarray(joint_mean, dtype=float)
    joint_cov = np.asarray(joint_cov, dtype=float)
    total = sum(structure.dim for _, structure, _ in blocks)
    if joint_mean.shape != (total,) or joint_cov.shape != (total, total):
        raise DimensionMismatch(
            f"joint moments must cover {total} stacked effects, got mean "
            f"{joint_mean.shape} and covariance {joint_cov.shape}"
        )
    logdet, quad = _chol_logdet_quad(joint_cov, joint_mean)
    num = -0.5 * logdet - 0.5 * quad
    den = 0.0
    for _, structure, tau_point in blocks:
        den += log_prior_density_at_zero_mean(structure, tau_point)
    return EbfResult(
        block_id="+".join(bid for bid, _, _ in blocks),
        variant=VARIANT_MEAN,
        dim=total,
        log_numerator=num,
        log_denominator=den,
        log_ebf01=num - den,
        notes={"blocks": [bid for bid, _, _ in blocks]},
    )
