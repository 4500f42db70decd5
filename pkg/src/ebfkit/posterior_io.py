"""Posterior draws on disk, block manifests, summaries and diagnostics.

A draws file is a CSV with one named column per scalar parameter and one row
per retained MCMC draw.  An optional integer ``chain`` column tags rows with
their chain of origin.  A block manifest maps named groups of effect columns
to a prior covariance structure and binds the structure's parameter slots to
variance columns of the same file.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from . import covstruct
from .covstruct import CovarianceStructure, VarianceParams, validate_pd
from .ebf_core import (
    VARIANT_FULL,
    VARIANT_MEAN,
    EbfResult,
    RandomEffectSummary,
    TauPosterior,
)
from .errors import (
    DuplicateColumn,
    MissingColumn,
    NonFiniteValue,
    NotPositiveDefinite,
    ParseError,
    TooShort,
)

CHAIN_COLUMN = "chain"


@dataclass(frozen=True)
class DrawsMatrix:
    """Named columns of posterior draws.

    Parameters
    ----------
    columns : tuple of str
        Unique column names.
    values : (S, P) ndarray
        One row per draw, S >= 2; all entries finite.
    chain_id : (S,) int ndarray or None
        Chain tag per draw when the source had a ``chain`` column.
    """

    columns: tuple[str, ...]
    values: np.ndarray
    chain_id: np.ndarray | None = None

    def __post_init__(self):
        columns = tuple(self.columns)
        seen = set()
        for name in columns:
            if name in seen:
                raise DuplicateColumn(f"duplicate column {name!r}")
            seen.add(name)
        values = np.asarray(self.values, dtype=float)
        if values.ndim != 2 or values.shape[1] != len(columns):
            raise ValueError(
                f"values must be (n_draws, {len(columns)}), got {values.shape}"
            )
        if values.shape[0] < 2:
            raise ValueError("need at least 2 draws")
        if not np.all(np.isfinite(values)):
            s, p = np.argwhere(~np.isfinite(values))[0]
            raise NonFiniteValue(
                f"non-finite value in column {columns[p]!r} at draw {s}"
            )
        object.__setattr__(self, "columns", columns)
        object.__setattr__(self, "values", values)
        if self.chain_id is not None:
            cid = np.asarray(self.chain_id, dtype=np.int64)
            if cid.shape != (values.shape[0],):
                raise ValueError("chain_id must have one entry per draw")
            object.__setattr__(self, "chain_id", cid)
        object.__setattr__(self, "_index", {c: i for i, c in enumerate(columns)})

    @property
    def n_draws(self) -> int:
        return self.values.shape[0]

    def has_column(self, name: str) -> bool:
        return name in self._index

    def column(self, name: str) -> np.ndarray:
        try:
            return self.values[:, self._index[name]]
        except KeyError:
            raise MissingColumn(f"no column named {name!r}") from None

    def select(self, names: Sequence[str]) -> np.ndarray:
        return self.values[:, [self._column_index(n) for n in names]]

    def _column_index(self, name: str) -> int:
        try:
            return self._index[name]
        except KeyError:
            raise MissingColumn(f"no column named {name!r}") from None


def read_draws(path, fmt: str = "csv") -> DrawsMatrix:
    """Read a draws CSV.

    Raises :class:`ParseError` with 1-based line/column coordinates for
    malformed fields, :class:`NonFiniteValue` for NaN or infinite entries and
    :class:`DuplicateColumn` for repeated header names.
    """
    if fmt != "csv":
        raise ParseError(f"unsupported draws format {fmt!r}")
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise ParseError("empty draws file", line=1) from None
        header = [h.strip() for h in header]
        chain_pos = header.index(CHAIN_COLUMN) if CHAIN_COLUMN in header else -1
        value_pos = [i for i in range(len(header)) if i != chain_pos]
        columns = tuple(header[i] for i in value_pos)
        rows: list[list[float]] = []
        chains: list[int] = []
        for lineno, row in enumerate(reader, start=2):
            if len(row) != len(header):
                raise ParseError(
                    f"expected {len(header)} fields, got {len(row)}", line=lineno
                )
            try:
                rows.append([float(row[i]) for i in value_pos])
            except ValueError:
                for i in value_pos:
                    try:
                        float(row[i])
                    except ValueError:
                        raise ParseError(
                            f"bad numeric field {row[i]!r}", line=lineno, column=i + 1
                        ) from None
                raise
            if chain_pos >= 0:
                try:
                    chains.append(int(row[chain_pos]))
                except ValueError:
                    raise ParseError(
                        f"bad chain tag {row[chain_pos]!r}",
                        line=lineno,
                        column=chain_pos + 1,
                    ) from None
    if len(rows) < 2:
        raise ParseError(f"need at least 2 draws, file has {len(rows)}")
    values = np.asarray(rows, dtype=float)
    bad = np.argwhere(~np.isfinite(values))
    if bad.size:
        s, p = bad[0]
        raise NonFiniteValue(
            f"non-finite value in column {columns[p]!r}",
            line=int(s) + 2,
            column=value_pos[p] + 1,
        )
    chain_id = np.asarray(chains, dtype=np.int64) if chain_pos >= 0 else None
    return DrawsMatrix(columns=columns, values=values, chain_id=chain_id)


def write_draws(draws: DrawsMatrix, path) -> None:
    """Write a draws CSV readable by :func:`read_draws`; floats keep full
    round-trip precision."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        header = list(draws.columns)
        if draws.chain_id is not None:
            header.append(CHAIN_COLUMN)
        writer.writerow(header)
        for s in range(draws.n_draws):
            row = [repr(float(x)) for x in draws.values[s]]
            if draws.chain_id is not None:
                row.append(str(int(draws.chain_id[s])))
            writer.writerow(row)


@dataclass(frozen=True)
class BlockSpec:
    """One tested block: its effect columns, prior structure and the draws
    columns holding each structure slot."""

    block_id: str
    effects: tuple[str, ...]
    structure: CovarianceStructure
    slots: Mapping[str, str]

    def __post_init__(self):
        object.__setattr__(self, "effects", tuple(self.effects))
        object.__setattr__(self, "slots", dict(self.slots))
        if not self.block_id:
            raise ValueError("block_id must be non-empty")
        if len(self.effects) != self.structure.dim:
            raise ValueError(
                f"block {self.block_id!r}: {len(self.effects)} effect columns for a "
                f"structure of dim {self.structure.dim}"
            )
        declared = set(self.structure.slot_names())
        bound = set(self.slots)
        if bound != declared:
            missing = sorted(declared - bound)
            extra = sorted(bound - declared)
            parts = []
            if missing:
                parts.append(f"unbound slots {missing}")
            if extra:
                parts.append(f"unknown slots {extra}")
            raise ValueError(f"block {self.block_id!r}: " + ", ".join(parts))


@dataclass(frozen=True)
class BlockManifest:
    """Blocks to test plus shared evaluation options."""

    blocks: tuple[BlockSpec, ...]
    ridge: float = 0.0
    variant: str = VARIANT_MEAN

    def __post_init__(self):
        object.__setattr__(self, "blocks", tuple(self.blocks))
        ids = [b.block_id for b in self.blocks]
        if len(set(ids)) != len(ids):
            raise ValueError("block ids must be unique")
        used: set[str] = set()
        for b in self.blocks:
            overlap = used.intersection(b.effects)
            if overlap:
                raise DuplicateColumn(
                    f"effect columns claimed by two blocks: {sorted(overlap)}"
                )
            used.update(b.effects)
        if self.ridge < 0.0:
            raise ValueError("ridge must be non-negative")
        if self.variant not in (VARIANT_MEAN, VARIANT_FULL):
            raise ValueError(f"unknown variant {self.variant!r}")

    def block(self, block_id: str) -> BlockSpec:
        for b in self.blocks:
            if b.block_id == block_id:
                return b
        raise MissingColumn(f"no block named {block_id!r} in manifest")

    def validate_against(self, draws: DrawsMatrix) -> None:
        """Check that every referenced column exists in ``draws``."""
        for b in self.blocks:
            for name in b.effects:
                if not draws.has_column(name):
                    raise MissingColumn(
                        f"block {b.block_id!r}: effect column {name!r} not in draws"
                    )
            for slot, name in b.slots.items():
                if not draws.has_column(name):
                    raise MissingColumn(
                        f"block {b.block_id!r}: slot {slot!r} column {name!r} not in draws"
                    )


def _structure_to_json(s: CovarianceStructure) -> dict:
    if isinstance(s, covstruct.Diagonal):
        return {"kind": "diagonal", "dim": s.dim, "entries": list(s.entries)}
    if isinstance(s, covstruct.ScaledIdentity):
        return {"kind": "scaled_identity", "dim": s.dim, "variance": s.variance}
    if isinstance(s, covstruct.BlockKronecker):
        return {
            "kind": "block_kronecker",
            "dim": s.dim,
            "block_dim": s.block_dim,
            "copies": s.copies,
            "entries": list(s.entries),
        }
    if isinstance(s, covstruct.Car):
        return {
            "kind": "car",
            "dim": s.dim,
            "weights": s.weights.tolist(),
            "b": s.b.tolist(),
            "variance": s.variance,
        }
    if isinstance(s, covstruct.DenseSymmetric):
        return {"kind": "dense_symmetric", "dim": s.dim, "entries": list(s.entries)}
    raise TypeError(f"cannot serialise structure {type(s).__name__}")


def _structure_from_json(obj: dict) -> CovarianceStructure:
    try:
        kind = obj["kind"]
        dim = int(obj["dim"])
        if kind == "diagonal":
            s = covstruct.Diagonal(entries=tuple(obj["entries"]))
        elif kind == "scaled_identity":
            s = covstruct.ScaledIdentity(dim=dim, variance=obj["variance"])
        elif kind == "block_kronecker":
            s = covstruct.BlockKronecker(
                block_dim=int(obj["block_dim"]),
                copies=int(obj["copies"]),
                entries=tuple(obj["entries"]),
            )
        elif kind == "car":
            s = covstruct.Car(
                weights=np.asarray(obj["weights"], dtype=float),
                b=np.asarray(obj["b"], dtype=float),
                variance=obj["variance"],
            )
        elif kind == "dense_symmetric":
            s = covstruct.DenseSymmetric(dim=dim, entries=tuple(obj["entries"]))
        else:
            raise ParseError(f"unknown structure kind {kind!r}")
    except KeyError as e:
        raise ParseError(f"structure object missing key {e.args[0]!r}") from None
    if s.dim != dim:
        raise ParseError(f"structure kind {kind!r} declares dim {dim} but implies {s.dim}")
    return s


def manifest_to_json(manifest: BlockManifest) -> dict:
    return {
        "blocks": [
            {
                "id": b.block_id,
                "effects": list(b.effects),
                "structure": _structure_to_json(b.structure),
                "slots": dict(b.slots),
            }
            for b in manifest.blocks
        ],
        "options": {"ridge": manifest.ridge, "variant": manifest.variant},
    }


def manifest_from_json(obj: dict) -> BlockManifest:
    try:
        blocks = tuple(
            BlockSpec(
                block_id=entry["id"],
                effects=tuple(entry["effects"]),
                structure=_structure_from_json(entry["structure"]),
                slots=dict(entry["slots"]),
            )
            for entry in obj["blocks"]
        )
        options = obj.get("options", {})
        return BlockManifest(
            blocks=blocks,
            ridge=float(options.get("ridge", 0.0)),
            variant=str(options.get("variant", VARIANT_MEAN)),
        )
    except KeyError as e:
        raise ParseError(f"manifest missing key {e.args[0]!r}") from None
    except (TypeError, ValueError) as e:
        raise ParseError(f"malformed manifest: {e}") from None


def load_manifest(path) -> BlockManifest:
    with open(path) as fh:
        try:
            obj = json.load(fh)
        except json.JSONDecodeError as e:
            raise ParseError(f"manifest is not valid JSON: {e}", line=e.lineno) from None
    return manifest_from_json(obj)


def save_manifest(manifest: BlockManifest, path) -> None:
    with open(path, "w") as fh:
        json.dump(manifest_to_json(manifest), fh, indent=2, sort_keys=True)
        fh.write("\n")


def summarize_block(
    draws: DrawsMatrix,
    block: BlockSpec,
    ridge: float = 0.0,
    variant: str = VARIANT_MEAN,
) -> tuple[RandomEffectSummary, TauPosterior]:
    """Posterior moments of one block plus its tau posterior.

    The block covariance is the sample covariance of the effect columns
    (denominator S - 1), symmetrised and ridge-regularised before a
    positive-definiteness check.
    """
    v = draws.select(block.effects)
    theta_bar = v.mean(axis=0)
    centered = v - theta_bar
    cov = centered.T @ centered / (v.shape[0] - 1)
    try:
        cov = validate_pd(cov, ridge)
    except NotPositiveDefinite:
        raise NotPositiveDefinite(
            f"block {block.block_id!r}: posterior covariance is not positive-definite"
            + ("" if ridge else " (consider a ridge)")
        ) from None
    summary = RandomEffectSummary(
        block_id=block.block_id,
        mean=theta_bar,
        covariance=cov,
        n_draws_used=v.shape[0],
    )
    return summary, block_tau(draws, block, variant)


def block_tau(draws: DrawsMatrix, block: BlockSpec, variant: str) -> TauPosterior:
    """Tau posterior for ``block``: column means for the mean variant,
    per-draw values for the full variant."""
    slots = block.structure.slot_names()
    cols = draws.select([block.slots[s] for s in slots])
    if variant == VARIANT_MEAN:
        return TauPosterior.from_point(zip(slots, cols.mean(axis=0)))
    if variant == VARIANT_FULL:
        return TauPosterior.from_draws(slots, cols)
    raise ValueError(f"unknown variant {variant!r}")


@dataclass(frozen=True)
class EssDetail:
    value: float
    degenerate: bool


def ess_detail(series: np.ndarray) -> EssDetail:
    """Effective sample size with a flag for constant series.

    Uses the initial monotone positive-pair truncation of the empirical
    autocovariances.  The estimate is clamped to (0, S]; an exactly constant
    series returns S with ``degenerate`` set.
    """
    x = np.asarray(series, dtype=float)
    if x.ndim != 1:
        raise ValueError("ess expects a 1-D series")
    s = x.shape[0]
    if s < 10:
        raise TooShort(f"need at least 10 values for an ESS estimate, got {s}")
    d = x - x.mean()
    nfft = 1 << (2 * s - 1).bit_length()
    f = np.fft.rfft(d, nfft)
    acov = np.fft.irfft(f.real**2 + f.imag**2, nfft)[:s] / s
    g0 = acov[0]
    if g0 <= 0.0:
        return EssDetail(value=float(s), degenerate=True)
    # Sum adjacent-pair autocovariances while positive and non-increasing.
    pair_sum = 0.0
    prev = np.inf
    for m in range(s // 2):
        pair = acov[2 * m] + acov[2 * m + 1]
        if pair <= 0.0:
            break
        if pair > prev:
            pair = prev
        pair_sum += pair
        prev = pair
    var_est = 2.0 * pair_sum - g0
    if var_est <= 0.0:
        return EssDetail(value=float(s), degenerate=False)
    return EssDetail(value=float(min(float(s), s * g0 / var_est)), degenerate=False)


def ess(series: np.ndarray) -> float:
    """Effective sample size of a single chain; see :func:`ess_detail`."""
    return ess_detail(series).value


def pooled_ess(series: np.ndarray, chain_id: np.ndarray | None = None) -> float:
    """ESS pooled over chains: the sum of per-chain estimates."""
    if chain_id is None:
        return ess(series)
    series = np.asarray(series, dtype=float)
    total = 0.0
    for c in np.unique(chain_id):
        total += ess(series[chain_id == c])
    return total


def write_ebf_report(results: Sequence[EbfResult], path) -> None:
    """Write evaluated Bayes factors as CSV with full float precision."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(
            ["block_id", "variant", "dim", "log_numerator", "log_denominator", "log_ebf01"]
        )
        for r in results:
            writer.writerow(
                [
                    r.block_id,
                    r.variant,
                    r.dim,
                    "%.17g" % r.log_numerator,
                    "%.17g" % r.log_denominator,
                    "%.17g" % r.log_ebf01,
                ]
            )
