"""Covariance structures: hand-derived oracles, fast vs dense agreement,
and failure modes."""

import numpy as np
import pytest
from numpy.testing import assert_allclose

from ebfkit.covstruct import (
    BlockKronecker,
    Car,
    DenseSymmetric,
    Diagonal,
    ScaledIdentity,
    VarianceParams,
    build_covariance,
    log_det,
    quadratic_form,
    validate_pd,
)
from ebfkit.errors import (
    DimensionMismatch,
    MissingSlot,
    NotPositiveDefinite,
    SingularSystem,
)

from conftest import STRUCTURE_KINDS, make_structure


class TestDiagonal:
    def test_frozen_log_det(self):
        # diag(4, 9): log det = log 36
        s = Diagonal(entries=("a", "b"))
        p = VarianceParams({"a": 4.0, "b": 9.0})
        assert_allclose(log_det(s, p), 3.5835189384561099, rtol=1e-15)
        assert_allclose(build_covariance(s, p), np.diag([4.0, 9.0]), rtol=0)

    def test_broadcast_repeats_one_slot(self):
        s = Diagonal(entries=("v", "v", "w", "v"))
        assert s.dim == 4
        assert s.slot_names() == ("v", "w")
        m = build_covariance(s, VarianceParams({"v": 2.0, "w": 5.0}))
        assert_allclose(m, np.diag([2.0, 2.0, 5.0, 2.0]), rtol=0)

    def test_missing_slot(self):
        s = Diagonal(entries=("a", "b"))
        with pytest.raises(MissingSlot):
            build_covariance(s, VarianceParams({"a": 1.0}))

    def test_nonpositive_entry(self):
        s = Diagonal(entries=("a",))
        with pytest.raises(NotPositiveDefinite):
            log_det(s, VarianceParams({"a": 0.0}))
        with pytest.raises(NotPositiveDefinite):
            build_covariance(s, VarianceParams({"a": -1.0}))

    def test_needs_entries(self):
        with pytest.raises(DimensionMismatch):
            Diagonal(entries=())


class TestScaledIdentity:
    def test_frozen_log_det(self):
        # 2.5 * I_3: log det = 3 log 2.5
        s = ScaledIdentity(dim=3, variance="tau2")
        p = VarianceParams({"tau2": 2.5})
        assert_allclose(log_det(s, p), 2.7488721956224653, rtol=1e-15)
        assert_allclose(build_covariance(s, p), 2.5 * np.eye(3), rtol=0)

    def test_dim_validation(self):
        with pytest.raises(DimensionMismatch):
            ScaledIdentity(dim=0, variance="t")


class TestBlockKronecker:
    def test_frozen_log_det_and_layout(self):
        # block [[2, 1], [1, 2]] (det 3) with 3 copies: log det = 3 log 3
        s = BlockKronecker(block_dim=2, copies=3, entries=("b11", "b12", "b22"))
        p = VarianceParams({"b11": 2.0, "b12": 1.0, "b22": 2.0})
        assert s.dim == 6
        assert_allclose(log_det(s, p), 3.2958368660043291, rtol=1e-14)
        block = np.array([[2.0, 1.0], [1.0, 2.0]])
        assert_allclose(build_covariance(s, p), np.kron(block, np.eye(3)), rtol=0)

    def test_entry_count_checked(self):
        with pytest.raises(DimensionMismatch):
            BlockKronecker(block_dim=2, copies=2, entries=("a", "b"))

    def test_duplicate_entry_names_rejected(self):
        with pytest.raises(DimensionMismatch):
            BlockKronecker(block_dim=2, copies=1, entries=("a", "b", "a"))

    def test_non_pd_block(self):
        s = BlockKronecker(block_dim=2, copies=2, entries=("b11", "b12", "b22"))
        p = VarianceParams({"b11": 1.0, "b12": 2.0, "b22": 1.0})
        with pytest.raises(NotPositiveDefinite):
            build_covariance(s, p)
        with pytest.raises(NotPositiveDefinite):
            log_det(s, p)


class TestCar:
    def test_frozen_build_and_log_det(self):
        # W = [[0, 1/2], [1/2, 0]], b = 1, tau2 = 1:
        # (I-W)^-1 = (4/3) [[1, 1/2], [1/2, 1]], so Psi = [[20/9, 16/9], [16/9, 20/9]]
        # and log det = -2 log det(I-W) = -2 log(3/4) = log(16/9).
        s = Car(weights=[[0.0, 0.5], [0.5, 0.0]], b=[1.0, 1.0], variance="tau2")
        p = VarianceParams({"tau2": 1.0})
        want = np.array([[20.0, 16.0], [16.0, 20.0]]) / 9.0
        assert_allclose(build_covariance(s, p), want, rtol=1e-14)
        assert_allclose(log_det(s, p), 0.57536414490356139, rtol=1e-14)

    def test_zero_weights_is_scaled_diagonal(self):
        rng = np.random.default_rng(7)
        b = rng.uniform(0.5, 2.0, size=4)
        s = Car(weights=np.zeros((4, 4)), b=b, variance="t")
        p = VarianceParams({"t": 1.7})
        assert_allclose(build_covariance(s, p), np.diag(1.7 * b), rtol=1e-12)
        assert_allclose(log_det(s, p), np.sum(np.log(1.7 * b)), rtol=1e-12)

    def test_singular_system(self):
        s = Car(weights=[[0.0, 1.0], [1.0, 0.0]], b=[1.0, 1.0], variance="t")
        p = VarianceParams({"t": 1.0})
        with pytest.raises(SingularSystem):
            build_covariance(s, p)
        with pytest.raises(SingularSystem):
            log_det(s, p)

    def test_validation(self):
        with pytest.raises(DimensionMismatch):
            Car(weights=[[0.0, 0.2]], b=[1.0], variance="t")
        with pytest.raises(DimensionMismatch):
            Car(weights=[[0.1, 0.0], [0.0, 0.1]], b=[1.0, 1.0], variance="t")
        with pytest.raises(NotPositiveDefinite):
            Car(weights=np.zeros((2, 2)), b=[1.0, 0.0], variance="t")

    def test_arrays_are_copied_and_frozen(self):
        w = np.zeros((3, 3))
        s = Car(weights=w, b=np.ones(3), variance="t")
        w[0, 1] = 0.9
        assert s.weights[0, 1] == 0.0
        with pytest.raises(ValueError):
            s.weights[0, 1] = 0.5


class TestDenseSymmetric:
    def test_round_trip_upper_triangle(self):
        s = DenseSymmetric(dim=2, entries=("s11", "s12", "s22"))
        p = VarianceParams({"s11": 2.0, "s12": 1.0, "s22": 2.0})
        m = build_covariance(s, p)
        assert_allclose(m, [[2.0, 1.0], [1.0, 2.0]], rtol=0)
        assert_allclose(log_det(s, p), np.log(3.0), rtol=1e-15)

    def test_non_pd_rejected(self):
        s = DenseSymmetric(dim=2, entries=("s11", "s12", "s22"))
        p = VarianceParams({"s11": 1.0, "s12": 3.0, "s22": 1.0})
        with pytest.raises(NotPositiveDefinite):
            build_covariance(s, p)

    def test_entry_count_checked(self):
        with pytest.raises(DimensionMismatch):
            DenseSymmetric(dim=3, entries=("a", "b", "c"))


def test_quadratic_form_frozen():
    # [[2, 1], [1, 2]]^-1 (1, 1) = (1/3, 1/3), so the form is 2/3.
    q = quadratic_form(np.array([[2.0, 1.0], [1.0, 2.0]]), np.array([1.0, 1.0]))
    assert_allclose(q, 2.0 / 3.0, rtol=1e-15)


def test_quadratic_form_matches_direct_inverse():
    rng = np.random.default_rng(11)
    for _ in range(50):
        d = int(rng.integers(1, 7))
        a = rng.standard_normal((d, d))
        cov = a @ a.T + 0.3 * np.eye(d)
        v = rng.standard_normal(d)
        assert_allclose(quadratic_form(cov, v), v @ np.linalg.solve(cov, v), rtol=1e-9)


def test_quadratic_form_validation():
    with pytest.raises(DimensionMismatch):
        quadratic_form(np.eye(3), np.zeros(2))
    with pytest.raises(NotPositiveDefinite):
        quadratic_form(-np.eye(2), np.zeros(2))


def test_fast_log_det_matches_dense_route():
    """The structure-specific determinants agree with slogdet of the built
    matrix for every kind."""
    rng = np.random.default_rng(2024)
    for kind in STRUCTURE_KINDS:
        for _ in range(40):
            structure, params = make_structure(kind, rng)
            dense = build_covariance(structure, params)
            _, want = np.linalg.slogdet(dense)
            assert_allclose(log_det(structure, params), want, rtol=1e-9, atol=1e-9)


def test_build_covariance_always_symmetric_pd():
    rng = np.random.default_rng(5)
    for kind in STRUCTURE_KINDS:
        for _ in range(20):
            structure, params = make_structure(kind, rng)
            m = build_covariance(structure, params)
            assert m.shape == (structure.dim, structure.dim)
            assert_allclose(m, m.T, rtol=0, atol=0)
            np.linalg.cholesky(m)


def test_slot_names_cover_required_params():
    rng = np.random.default_rng(17)
    for kind in STRUCTURE_KINDS:
        structure, params = make_structure(kind, rng)
        for name in structure.slot_names():
            assert name in params


def test_validate_pd_ridge_rescues_singular_matrix():
    singular = np.ones((3, 3))
    with pytest.raises(NotPositiveDefinite):
        validate_pd(singular)
    fixed = validate_pd(singular, ridge=1e-6)
    assert_allclose(fixed, singular + 1e-6 * np.eye(3), rtol=0)
    with pytest.raises(ValueError):
        validate_pd(np.eye(2), ridge=-1e-9)


def test_validate_pd_symmetrises():
    m = np.array([[2.0, 0.4], [0.0, 1.0]])
    out = validate_pd(m)
    assert_allclose(out, [[2.0, 0.2], [0.2, 1.0]], rtol=0)
