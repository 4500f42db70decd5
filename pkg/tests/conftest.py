"""Shared helpers: random admissible structure instances for property tests."""

from __future__ import annotations

import numpy as np

from ebfkit.covstruct import (
    BlockKronecker,
    Car,
    DenseSymmetric,
    Diagonal,
    ScaledIdentity,
    VarianceParams,
)
from ebfkit.ebf_core import TauDraws

STRUCTURE_KINDS = (
    "diagonal",
    "scaled_identity",
    "block_kronecker",
    "car",
    "dense_symmetric",
)


def rand_pd_matrix(rng: np.random.Generator, p: int) -> np.ndarray:
    """Random symmetric PD matrix with eigenvalues bounded away from zero."""
    a = rng.standard_normal((p, p))
    return a @ a.T + 0.25 * np.eye(p)


def _triu_values(m: np.ndarray) -> list[float]:
    r, c = np.triu_indices(m.shape[0])
    return [float(x) for x in m[r, c]]


def _triu_names(prefix: str, p: int) -> tuple[str, ...]:
    return tuple(f"{prefix}{i + 1}{j + 1}" for i, j in zip(*np.triu_indices(p)))


def make_structure(kind: str, rng: np.random.Generator, max_dim: int | None = None):
    """One random admissible (structure, params) pair of the given kind.

    ``max_dim`` caps the total dimension (useful where a dense oracle is
    evaluated against every instance).
    """

    def hi(default: int) -> int:
        return default if max_dim is None else min(default, max_dim)

    if kind == "diagonal":
        dim = int(rng.integers(1, hi(8) + 1))
        n_slots = dim if rng.random() < 0.7 else int(rng.integers(1, dim + 1))
        names = [f"v{i + 1}" for i in range(n_slots)]
        extra = [names[int(i)] for i in rng.integers(0, n_slots, size=dim - n_slots)]
        structure = Diagonal(entries=tuple(names + extra))
        params = {name: float(np.exp(rng.normal(0.0, 0.5))) for name in names}
        return structure, VarianceParams(params)
    if kind == "scaled_identity":
        structure = ScaledIdentity(dim=int(rng.integers(1, hi(40) + 1)), variance="tau2")
        return structure, VarianceParams({"tau2": float(np.exp(rng.normal(0.0, 0.5)))})
    if kind == "block_kronecker":
        p = int(rng.integers(2, 4))
        if max_dim is not None:
            p = min(p, max(2, max_dim))
        copies = int(rng.integers(1, hi(5 * p) // p + 1))
        names = _triu_names("b", p)
        structure = BlockKronecker(block_dim=p, copies=copies, entries=names)
        values = _triu_values(rand_pd_matrix(rng, p))
        return structure, VarianceParams(dict(zip(names, values)))
    if kind == "car":
        dim = int(rng.integers(2, hi(10) + 1))
        raw = rng.uniform(0.0, 1.0, size=(dim, dim))
        np.fill_diagonal(raw, 0.0)
        row_targets = rng.uniform(0.1, 0.9, size=(dim, 1))
        weights = raw / raw.sum(axis=1, keepdims=True) * row_targets
        structure = Car(
            weights=weights,
            b=np.exp(rng.normal(0.0, 0.5, size=dim)),
            variance="tau2",
        )
        return structure, VarianceParams({"tau2": float(np.exp(rng.normal(0.0, 0.5)))})
    if kind == "dense_symmetric":
        dim = int(rng.integers(1, 7))
        names = _triu_names("s", dim)
        structure = DenseSymmetric(dim=dim, entries=names)
        values = _triu_values(rand_pd_matrix(rng, dim))
        return structure, VarianceParams(dict(zip(names, values)))
    raise ValueError(kind)


def make_tau_draws(structure, rng: np.random.Generator, n_draws: int) -> TauDraws:
    """Admissible random draws of a structure's slots with real spread."""
    slots = structure.slot_names()
    if isinstance(structure, (Diagonal, ScaledIdentity, Car)):
        base = np.exp(rng.normal(0.0, 0.4, size=len(slots)))
        values = base * np.exp(rng.normal(0.0, 0.35, size=(n_draws, len(slots))))
        return TauDraws(slots, values)
    p = structure.block_dim if isinstance(structure, BlockKronecker) else structure.dim
    values = np.empty((n_draws, len(slots)))
    for s in range(n_draws):
        values[s] = _triu_values(rand_pd_matrix(rng, p))
    return TauDraws(slots, values)
