"""Two-way crossed random-effects model: simulation and Gibbs sampling.

The model for observation i in cell (j, k) is

    y = alpha + x11*theta11_j + x12*theta12_j + x21*theta21_k + x22*theta22_k + e

with (theta11_j, theta12_j) ~ N(0, Psi1) over the J clusters of the first
dimension, (theta21_k, theta22_k) ~ N(0, Psi2) over the K clusters of the
second, and e ~ N(0, sigma2).  The default prior is flat on alpha and both
Psi_d, and proportional to 1/sigma2 on sigma2; proper conjugate priors can
be injected through :class:`PriorSpec` (used by sampler validation tests).

Scans run over per-cell sufficient statistics, so fitting cost is driven by
J*K and the number of scans, not by the raw number of observations.  Two
interchangeable kernels exist: a compiled one and a numpy one.  Both consume
the same pre-generated random stream; see EBFKIT_BACKEND below.
"""

from __future__ import annotations

import csv
import math
import os
from dataclasses import dataclass, field, replace

import numpy as np

from . import _gibbs_py
from .errors import DegenerateConditional, DimensionMismatch, ParseError
from .posterior_io import BlockManifest, BlockSpec, DrawsMatrix
from .covstruct import ScaledIdentity

try:
    from . import _gibbs_core

    _COMPILED = _gibbs_core
except ImportError:  # extension not built; numpy kernel only
    _COMPILED = None

# Number of scans whose randomness is generated per batch.  Part of the
# reproducibility contract: changing it reorders the random stream.
CHUNK_SCANS = 256

BACKEND_ENV = "EBFKIT_BACKEND"


def available_backends() -> tuple[str, ...]:
    return ("python",) if _COMPILED is None else ("compiled", "python")


def resolve_backend(name: str | None = None) -> str:
    """Pick the scan kernel: explicit argument, then EBFKIT_BACKEND, then
    the compiled one when built."""
    choice = name or os.environ.get(BACKEND_ENV, "") or "auto"
    if choice == "auto":
        return "compiled" if _COMPILED is not None else "python"
    if choice == "compiled":
        if _COMPILED is None:
            raise ValueError("compiled backend requested but the extension is not built")
        return "compiled"
    if choice == "python":
        return "python"
    raise ValueError(f"unknown backend {choice!r}")


def _kernel(backend: str):
    return _COMPILED.scan_chunk if backend == "compiled" else _gibbs_py.scan_chunk


@dataclass
class CrossedModelConfig:
    """Generating truth for a simulated dataset.

    J and K are the cluster counts of the two crossed dimensions, n the
    observations per cell.  tau_d1/tau_d2 are the standard deviations of the
    two effects of dimension d (zero switches an effect off exactly) and
    rho_d their correlation.
    """

    J: int
    K: int
    n: int
    alpha: float = 0.0
    sigma2: float = 1.0
    tau11: float = 0.0
    tau12: float = 0.0
    rho1: float = 0.0
    tau21: float = 0.0
    tau22: float = 0.0
    rho2: float = 0.0
    seed: object = 0

    def __post_init__(self):
        if self.J < 1 or self.K < 1 or self.n < 1:
            raise ValueError("J, K and n must all be >= 1")
        if self.sigma2 <= 0.0:
            raise ValueError("sigma2 must be positive")
        for name in ("tau11", "tau12", "tau21", "tau22"):
            if getattr(self, name) < 0.0:
                raise ValueError(f"{name} must be non-negative")
        for name in ("rho1", "rho2"):
            if not -1.0 < getattr(self, name) < 1.0:
                raise ValueError(f"{name} must lie strictly inside (-1, 1)")


@dataclass(frozen=True)
class Dataset:
    """A fully crossed two-way dataset in long form (0-based cluster indices)."""

    y: np.ndarray
    x11: np.ndarray
    x12: np.ndarray
    x21: np.ndarray
    x22: np.ndarray
    j_idx: np.ndarray
    k_idx: np.ndarray
    i_idx: np.ndarray
    n_dim1: int
    n_dim2: int

    def __post_init__(self):
        n = self.y.shape[0]
        for name in ("y", "x11", "x12", "x21", "x22"):
            a = np.ascontiguousarray(getattr(self, name), dtype=float)
            if a.shape != (n,):
                raise DimensionMismatch(f"column {name} must have length {n}")
            if not np.all(np.isfinite(a)):
                raise ValueError(f"column {name} contains non-finite values")
            object.__setattr__(self, name, a)
        for name, limit in (("j_idx", self.n_dim1), ("k_idx", self.n_dim2), ("i_idx", None)):
            a = np.ascontiguousarray(getattr(self, name), dtype=np.int64)
            if a.shape != (n,):
                raise DimensionMismatch(f"index {name} must have length {n}")
            if a.min(initial=0) < 0 or (limit is not None and a.max(initial=-1) >= limit):
                raise ValueError(f"index {name} out of range")
            object.__setattr__(self, name, a)

    @property
    def n_obs(self) -> int:
        return self.y.shape[0]


def _pair_from_taus(z: np.ndarray, t1: float, t2: float, rho: float) -> np.ndarray:
    """Correlated effect pairs from iid normals; exact zeros when a tau is 0."""
    out = np.empty_like(z)
    out[:, 0] = t1 * z[:, 0]
    out[:, 1] = t2 * (rho * z[:, 0] + math.sqrt(1.0 - rho * rho) * z[:, 1])
    return out


def simulate_dataset(config: CrossedModelConfig) -> Dataset:
    """Draw a dataset from the generating model.

    Draw order is fixed (dimension-1 pairs, dimension-2 pairs, the four
    covariate columns, then noise), so output is bit-reproducible for a
    given seed and numpy version.
    """
    rng = np.random.default_rng(config.seed)
    jj, kk, n = config.J, config.K, config.n
    total = jj * kk * n
    u = _pair_from_taus(rng.standard_normal((jj, 2)), config.tau11, config.tau12, config.rho1)
    v = _pair_from_taus(rng.standard_normal((kk, 2)), config.tau21, config.tau22, config.rho2)
    x = rng.standard_normal((total, 4))
    eps = rng.standard_normal(total)
    j_idx = np.repeat(np.arange(jj, dtype=np.int64), kk * n)
    k_idx = np.tile(np.repeat(np.arange(kk, dtype=np.int64), n), jj)
    i_idx = np.tile(np.arange(n, dtype=np.int64), jj * kk)
    y = (
        config.alpha
        + x[:, 0] * u[j_idx, 0]
        + x[:, 1] * u[j_idx, 1]
        + x[:, 2] * v[k_idx, 0]
        + x[:, 3] * v[k_idx, 1]
        + math.sqrt(config.sigma2) * eps
    )
    return Dataset(
        y=y,
        x11=x[:, 0],
        x12=x[:, 1],
        x21=x[:, 2],
        x22=x[:, 3],
        j_idx=j_idx,
        k_idx=k_idx,
        i_idx=i_idx,
        n_dim1=jj,
        n_dim2=kk,
    )


DATASET_COLUMNS = ("y", "x11", "x12", "x21", "x22", "j", "k", "i")


def write_dataset(data: Dataset, path) -> None:
    """Write the long-form CSV (cluster and replicate indices 1-based)."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(DATASET_COLUMNS)
        for r in range(data.n_obs):
            writer.writerow(
                [
                    repr(float(data.y[r])),
                    repr(float(data.x11[r])),
                    repr(float(data.x12[r])),
                    repr(float(data.x21[r])),
                    repr(float(data.x22[r])),
                    int(data.j_idx[r]) + 1,
                    int(data.k_idx[r]) + 1,
                    int(data.i_idx[r]) + 1,
                ]
            )


def read_dataset(path) -> Dataset:
    """Read a long-form dataset CSV written by :func:`write_dataset`."""
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise ParseError("empty dataset file", line=1) from None
        if tuple(header) != DATASET_COLUMNS:
            raise ParseError(
                f"dataset header must be {','.join(DATASET_COLUMNS)}", line=1
            )
        floats: list[list[float]] = []
        ints: list[list[int]] = []
        for lineno, row in enumerate(reader, start=2):
            if len(row) != 8:
                raise ParseError(f"expected 8 fields, got {len(row)}", line=lineno)
            try:
                floats.append([float(t) for t in row[:5]])
            except ValueError:
                for col, tok in enumerate(row[:5], start=1):
                    try:
                        float(tok)
                    except ValueError:
                        raise ParseError(
                            f"bad numeric field {tok!r}", line=lineno, column=col
                        ) from None
                raise
            try:
                ints.append([int(t) for t in row[5:]])
            except ValueError:
                for col, tok in enumerate(row[5:], start=6):
                    try:
                        int(tok)
                    except ValueError:
                        raise ParseError(
                            f"bad index field {tok!r}", line=lineno, column=col
                        ) from None
                raise
    if not floats:
        raise ParseError("dataset has no rows")
    fmat = np.asarray(floats, dtype=float)
    imat = np.asarray(ints, dtype=np.int64)
    if imat.min() < 1:
        bad = int(np.argwhere(imat < 1)[0][0])
        raise ParseError("cluster/replicate indices are 1-based", line=bad + 2)
    return Dataset(
        y=fmat[:, 0],
        x11=fmat[:, 1],
        x12=fmat[:, 2],
        x21=fmat[:, 3],
        x22=fmat[:, 4],
        j_idx=imat[:, 0] - 1,
        k_idx=imat[:, 1] - 1,
        i_idx=imat[:, 2] - 1,
        n_dim1=int(imat[:, 0].max()),
        n_dim2=int(imat[:, 1].max()),
    )


@dataclass(frozen=True)
class CellStats:
    """Per-cell sufficient statistics; everything one scan needs.

    Cross-product matrices are (J, K); per-cluster Gram entries are packed
    as [g11, g12, g22].
    """

    J: int
    K: int
    x13: np.ndarray
    x14: np.ndarray
    x23: np.ndarray
    x24: np.ndarray
    g1: np.ndarray
    g2: np.ndarray
    hu: np.ndarray
    cu: np.ndarray
    hv: np.ndarray
    cv: np.ndarray
    n_total: float
    h0_sum: float
    q_total: float

    @classmethod
    def from_dataset(cls, data: Dataset) -> "CellStats":
        jj, kk = data.n_dim1, data.n_dim2
        cell = data.j_idx * kk + data.k_idx

        def per_cell(w):
            return np.ascontiguousarray(
                np.bincount(cell, weights=w, minlength=jj * kk).reshape(jj, kk)
            )

        def per_j(*ws):
            return np.ascontiguousarray(
                np.column_stack([np.bincount(data.j_idx, weights=w, minlength=jj) for w in ws])
            )

        def per_k(*ws):
            return np.ascontiguousarray(
                np.column_stack([np.bincount(data.k_idx, weights=w, minlength=kk) for w in ws])
            )

        x11, x12, x21, x22, y = data.x11, data.x12, data.x21, data.x22, data.y
        return cls(
            J=jj,
            K=kk,
            x13=per_cell(x11 * x21),
            x14=per_cell(x11 * x22),
            x23=per_cell(x12 * x21),
            x24=per_cell(x12 * x22),
            g1=per_j(x11 * x11, x11 * x12, x12 * x12),
            g2=per_k(x21 * x21, x21 * x22, x22 * x22),
            hu=per_j(y * x11, y * x12),
            cu=per_j(x11, x12),
            hv=per_k(y * x21, y * x22),
            cv=per_k(x21, x22),
            n_total=float(y.shape[0]),
            h0_sum=float(y.sum()),
            q_total=float(y @ y),
        )


def stats_with_response(stats: CellStats, data: Dataset, y: np.ndarray) -> CellStats:
    """Same design, new response: recompute only the y-dependent pieces."""
    y = np.asarray(y, dtype=float)
    hu = np.ascontiguousarray(
        np.column_stack(
            [
                np.bincount(data.j_idx, weights=y * data.x11, minlength=stats.J),
                np.bincount(data.j_idx, weights=y * data.x12, minlength=stats.J),
            ]
        )
    )
    hv = np.ascontiguousarray(
        np.column_stack(
            [
                np.bincount(data.k_idx, weights=y * data.x21, minlength=stats.K),
                np.bincount(data.k_idx, weights=y * data.x22, minlength=stats.K),
            ]
        )
    )
    return replace(stats, hu=hu, hv=hv, h0_sum=float(y.sum()), q_total=float(y @ y))


@dataclass
class PriorSpec:
    """Conjugate prior hyperparameters; the defaults give the flat prior
    (improper uniform on alpha and both Psi, 1/sigma2 on sigma2)."""

    alpha_mean: float = 0.0
    alpha_prec: float = 0.0
    nu0: float = -3.0
    scale1: tuple[float, float, float] = (0.0, 0.0, 0.0)
    scale2: tuple[float, float, float] = (0.0, 0.0, 0.0)
    sigma_shape: float = 0.0
    sigma_rate: float = 0.0


FLAT_PRIOR = PriorSpec()


@dataclass
class ChainState:
    """Mutable sampler state; ``scal`` packs [alpha, sigma2]."""

    scal: np.ndarray
    u: np.ndarray
    v: np.ndarray
    psi1: np.ndarray
    psi2: np.ndarray

    @classmethod
    def initial(cls, data: Dataset) -> "ChainState":
        var_y = float(np.var(data.y))
        if var_y <= 0.0:
            raise DegenerateConditional("response has zero variance")
        return cls(
            scal=np.array([float(np.mean(data.y)), var_y]),
            u=np.zeros((data.n_dim1, 2)),
            v=np.zeros((data.n_dim2, 2)),
            psi1=np.array([1.0, 0.0, 1.0]),
            psi2=np.array([1.0, 0.0, 1.0]),
        )

    @property
    def alpha(self) -> float:
        return float(self.scal[0])

    @property
    def sigma2(self) -> float:
        return float(self.scal[1])


def run_scans(
    stats: CellStats,
    state: ChainState,
    priors: PriorSpec,
    rng: np.random.Generator,
    n_scans: int,
    backend: str | None = None,
) -> np.ndarray:
    """Advance ``state`` by ``n_scans`` Gibbs scans, returning one recorded
    row per scan (layout: alpha, theta blocks, psi1, psi2, sigma2).

    Degrees of freedom of the Psi conditionals must be proper: nu0 + m > 1
    for m clusters.  Numerical breakdown inside a scan raises
    :class:`DegenerateConditional` carrying the scan index.
    """
    jj, kk = stats.J, stats.K
    df1 = priors.nu0 + jj
    df2 = priors.nu0 + kk
    if df1 <= 1.0 or df2 <= 1.0:
        raise DegenerateConditional(
            f"improper Psi conditional: need nu0 + clusters > 1, got {df1:g} and {df2:g}"
        )
    gamma_shape = priors.sigma_shape + 0.5 * stats.n_total
    if gamma_shape <= 0.0:
        raise DegenerateConditional("improper sigma2 conditional")
    kern = _kernel(resolve_backend(backend))
    dfs = np.array([df1, df1 - 1.0, df2, df2 - 1.0])
    s1 = np.asarray(priors.scale1, dtype=float)
    s2 = np.asarray(priors.scale2, dtype=float)
    width = 2 * jj + 2 * kk + 8
    out = np.empty((n_scans, width))
    for lo in range(0, n_scans, CHUNK_SCANS):
        b = min(CHUNK_SCANS, n_scans - lo)
        zmat = rng.standard_normal((b, 2 * jj + 2 * kk + 3))
        chimat = rng.chisquare(dfs, size=(b, 4))
        gam = rng.standard_gamma(gamma_shape, size=b)
        err = kern(
            stats,
            state,
            priors.alpha_mean,
            priors.alpha_prec,
            s1,
            s2,
            priors.sigma_rate,
            zmat,
            chimat,
            gam,
            out[lo : lo + b],
            lo,
        )
        if err >= 0:
            raise DegenerateConditional("conditional update broke down", iteration=int(err))
    return out


@dataclass
class GibbsConfig:
    """Chain length controls: ``iterations`` total scans, of which the first
    ``burn_in`` are dropped and the rest kept every ``thin``-th."""

    iterations: int = 6000
    burn_in: int = 1000
    thin: int = 1
    seed: object = None

    def __post_init__(self):
        if self.iterations < 1:
            raise ValueError("iterations must be >= 1")
        if not 0 <= self.burn_in < self.iterations:
            raise ValueError("burn_in must satisfy 0 <= burn_in < iterations")
        if self.thin < 1:
            raise ValueError("thin must be >= 1")

    @property
    def n_retained(self) -> int:
        return len(range(self.burn_in, self.iterations, self.thin))


def draw_columns(jj: int, kk: int) -> tuple[str, ...]:
    """Column names of a fitted chain, matching the recorded row layout."""
    cols = ["alpha"]
    cols += [f"theta_11_{j}" for j in range(1, jj + 1)]
    cols += [f"theta_12_{j}" for j in range(1, jj + 1)]
    cols += [f"theta_21_{k}" for k in range(1, kk + 1)]
    cols += [f"theta_22_{k}" for k in range(1, kk + 1)]
    cols += ["psi1_11", "psi1_12", "psi1_22", "psi2_11", "psi2_12", "psi2_22", "sigma2"]
    return tuple(cols)


def gibbs_fit(
    data: Dataset,
    config: GibbsConfig | None = None,
    backend: str | None = None,
    priors: PriorSpec = FLAT_PRIOR,
) -> DrawsMatrix:
    """Fit the crossed model by Gibbs sampling.

    Requires more than 5 clusters in the first dimension (and enough in the
    second for a proper Psi2 conditional).  Returns the retained draws with
    named columns; given the same seed and backend the output is
    bit-reproducible.
    """
    config = config or GibbsConfig(seed=0)
    if config.seed is None:
        raise ValueError("GibbsConfig.seed must be set for a fit")
    if data.n_dim1 <= 5:
        raise DegenerateConditional(
            f"need more than 5 clusters in dimension 1, got {data.n_dim1}"
        )
    if config.n_retained < 2:
        raise ValueError("fewer than 2 retained draws; adjust iterations/burn_in/thin")
    stats = CellStats.from_dataset(data)
    state = ChainState.initial(data)
    rng = np.random.default_rng(config.seed)
    rows = run_scans(stats, state, priors, rng, config.iterations, backend=backend)
    retained = np.ascontiguousarray(rows[config.burn_in :: config.thin])
    return DrawsMatrix(columns=draw_columns(data.n_dim1, data.n_dim2), values=retained)


def crossed_block_manifest(
    jj: int, kk: int, ridge: float = 0.0, variant: str = "mean"
) -> BlockManifest:
    """Manifest testing each of the four effect blocks against its own
    exchangeable (scaled-identity) prior, with slots bound to the matching
    Psi diagonal columns."""
    def block(name: str, m: int, slot: str) -> BlockSpec:
        return BlockSpec(
            block_id=name,
            effects=tuple(f"{name}_{i}" for i in range(1, m + 1)),
            structure=ScaledIdentity(dim=m, variance=slot),
            slots={slot: slot},
        )

    return BlockManifest(
        blocks=(
            block("theta_11", jj, "psi1_11"),
            block("theta_12", jj, "psi1_22"),
            block("theta_21", kk, "psi2_11"),
            block("theta_22", kk, "psi2_22"),
        ),
        ridge=ridge,
        variant=variant,
    )


def draw_invwishart2(rng: np.random.Generator, df: float, scale: np.ndarray) -> np.ndarray:
    """One 2x2 inverse-Wishart draw as packed [p11, p12, p22].

    Uses the same Bartlett construction as the scan kernels; needs df > 1
    and a positive-definite scale.
    """
    if df <= 1.0:
        raise DegenerateConditional(f"inverse-Wishart needs df > 1, got {df:g}")
    scale = np.asarray(scale, dtype=float)
    packed = _gibbs_py._draw_iw2(
        float(scale[0, 0]),
        float(scale[0, 1]),
        float(scale[1, 1]),
        rng.chisquare(df),
        rng.chisquare(df - 1.0),
        rng.standard_normal(),
    )
    if packed is None:
        raise DegenerateConditional("inverse-Wishart scale is not positive-definite")
    return np.array(packed)
