"""Bayes factor evaluation: frozen oracles, the exact zero identity, Jensen
ordering and degenerate-draw handling."""

import math

import numpy as np
import pytest
from numpy.testing import assert_allclose

from ebfkit.covstruct import ScaledIdentity, VarianceParams, build_covariance
from ebfkit.ebf_core import (
    VARIANT_FULL,
    VARIANT_MEAN,
    RandomEffectSummary,
    TauDraws,
    TauPosterior,
    gaussian_log_density_at_zero,
    log_ebf,
    log_ebf_joint,
    log_prior_density_at_zero_full,
    log_prior_density_at_zero_mean,
)
from ebfkit.errors import (
    AllDrawsDegenerate,
    DimensionMismatch,
    EmptyDraws,
    ExcessDegenerateDraws,
)

from conftest import STRUCTURE_KINDS, make_structure, make_tau_draws


def _summary(mean, cov, block_id="b", n=1000):
    return RandomEffectSummary(block_id=block_id, mean=mean, covariance=cov, n_draws_used=n)


def test_gaussian_log_density_frozen():
    # mean (1/2, -1/2), cov [[2, 1], [1, 2]]: log|cov| = log 3 and the
    # quadratic form is 1/2, so the value is -log(3)/2 - 1/4.
    value = gaussian_log_density_at_zero(
        _summary([0.5, -0.5], [[2.0, 1.0], [1.0, 2.0]])
    )
    assert_allclose(value, -0.79930614433405487, rtol=1e-15)


def test_denominator_mean_frozen():
    # tau2 * I_2 at tau2 = 3/4: -1/2 log(9/16) = -log(3/4)
    s = ScaledIdentity(dim=2, variance="t")
    value = log_prior_density_at_zero_mean(s, VarianceParams({"t": 0.75}))
    assert_allclose(value, 0.28768207245178085, rtol=1e-14)


def test_denominator_full_frozen():
    # tau2 * I_2 over draws {1/2, 1}: |Psi|^(-1/2) = 1/tau2, so the average
    # is (2 + 1)/2 and the log is log(3/2).
    s = ScaledIdentity(dim=2, variance="t")
    draws = TauDraws(("t",), np.array([[0.5], [1.0]]))
    value, n_used, n_bad = log_prior_density_at_zero_full(s, draws)
    assert_allclose(value, 0.40546510810816438, rtol=1e-14)
    assert n_used == 2
    assert n_bad == 0


def test_log_ebf_frozen_both_variants():
    s = ScaledIdentity(dim=2, variance="t")
    summary = _summary([0.5, -0.5], [[2.0, 1.0], [1.0, 2.0]])

    mean_res = log_ebf(summary, s, TauPosterior.from_point({"t": 0.75}))
    assert mean_res.variant == VARIANT_MEAN
    assert mean_res.dim == 2
    assert_allclose(mean_res.log_ebf01, -1.0869882167858357, rtol=1e-14)
    assert mean_res.log_ebf01 == mean_res.log_numerator - mean_res.log_denominator

    full_res = log_ebf(summary, s, TauPosterior.from_draws(("t",), [[0.5], [1.0]]))
    assert full_res.variant == VARIANT_FULL
    assert_allclose(full_res.log_ebf01, -1.2047712524422192, rtol=1e-14)
    assert full_res.notes["tau_draws_used"] == 2


def test_two_pi_factors_cancel():
    """Dropping (2 pi)^(-J/2) on both sides leaves the ratio unchanged;
    compare against densities evaluated with the constant kept."""
    from scipy.stats import multivariate_normal

    rng = np.random.default_rng(42)
    for kind in STRUCTURE_KINDS:
        structure, params = make_structure(kind, rng)
        d = structure.dim
        a = rng.standard_normal((d, d))
        cov = a @ a.T + 0.5 * np.eye(d)
        mean = rng.standard_normal(d)
        res = log_ebf(_summary(mean, cov), structure, TauPosterior(point=params))
        zero = np.zeros(d)
        want = multivariate_normal(mean, cov).logpdf(zero) - multivariate_normal(
            zero, build_covariance(structure, params)
        ).logpdf(zero)
        assert_allclose(res.log_ebf01, want, rtol=1e-10, atol=1e-10)


def test_zero_mean_at_prior_covariance_is_exactly_zero():
    """theta_bar = 0 with Sigma_bar = Psi(tau_bar) gives log EBF01 == 0.0,
    not merely close to it."""
    rng = np.random.default_rng(123)
    for _ in range(60):
        kind = STRUCTURE_KINDS[int(rng.integers(len(STRUCTURE_KINDS)))]
        structure, params = make_structure(kind, rng)
        cov = build_covariance(structure, params)
        summary = _summary(np.zeros(structure.dim), cov)
        res = log_ebf(summary, structure, TauPosterior(point=params))
        assert res.log_ebf01 == 0.0


def test_full_variant_never_beats_mean_variant():
    """Jensen: the averaged prior height at zero is at least the plug-in
    height at the draw means, so the full-variant log EBF is never larger."""
    rng = np.random.default_rng(99)
    for _ in range(100):
        kind = STRUCTURE_KINDS[int(rng.integers(len(STRUCTURE_KINDS)))]
        structure, _ = make_structure(kind, rng)
        draws = make_tau_draws(structure, rng, int(rng.integers(2, 40)))
        tau_bar = VarianceParams(dict(zip(draws.slots, draws.values.mean(axis=0))))
        den_mean = log_prior_density_at_zero_mean(structure, tau_bar)
        den_full, _, _ = log_prior_density_at_zero_full(structure, draws)
        assert den_full >= den_mean - 1e-12


def test_constant_draws_match_plug_in():
    s = ScaledIdentity(dim=3, variance="t")
    draws = TauDraws(("t",), np.full((50, 1), 1.3))
    full, _, _ = log_prior_density_at_zero_full(s, draws)
    mean = log_prior_density_at_zero_mean(s, VarianceParams({"t": 1.3}))
    assert_allclose(full, mean, rtol=0, atol=1e-10)


class TestDegenerateDraws:
    def test_small_share_is_skipped_and_counted(self):
        s = ScaledIdentity(dim=2, variance="t")
        values = np.ones((1000, 1))
        values[::250] = 0.0  # 4 bad draws, under the 1% cap
        value, n_used, n_bad = log_prior_density_at_zero_full(s, TauDraws(("t",), values))
        assert (n_used, n_bad) == (996, 4)
        assert_allclose(value, 0.0, atol=1e-14)

    def test_value_averages_only_good_draws(self):
        s = ScaledIdentity(dim=2, variance="t")
        values = np.array([[0.5], [1.0], [0.0]] + [[1.0]] * 297)
        value, n_used, n_bad = log_prior_density_at_zero_full(s, TauDraws(("t",), values))
        assert (n_used, n_bad) == (299, 1)
        good = np.array([0.5] + [1.0] * 298)
        assert_allclose(value, math.log(np.mean(1.0 / good)), rtol=1e-13, atol=1e-15)

    def test_excess_share_raises(self):
        s = ScaledIdentity(dim=2, variance="t")
        values = np.ones((100, 1))
        values[:2] = -1.0
        with pytest.raises(ExcessDegenerateDraws):
            log_prior_density_at_zero_full(s, TauDraws(("t",), values))

    def test_all_degenerate_raises(self):
        s = ScaledIdentity(dim=2, variance="t")
        with pytest.raises(AllDrawsDegenerate):
            log_prior_density_at_zero_full(s, TauDraws(("t",), np.zeros((5, 1))))

    def test_empty_raises(self):
        s = ScaledIdentity(dim=2, variance="t")
        with pytest.raises(EmptyDraws):
            log_prior_density_at_zero_full(s, TauDraws(("t",), np.empty((0, 1))))

    def test_generic_loop_agrees_with_vectorised_path(self):
        rng = np.random.default_rng(3)
        structure, _ = make_structure("scaled_identity", rng)
        draws = make_tau_draws(structure, rng, 30)
        fast, used_f, bad_f = log_prior_density_at_zero_full(structure, draws)
        slow, used_s, bad_s = log_prior_density_at_zero_full(structure, list(draws))
        assert (used_f, bad_f) == (used_s, bad_s)
        assert_allclose(fast, slow, rtol=1e-13)


def test_log_ebf_dimension_check():
    s = ScaledIdentity(dim=3, variance="t")
    summary = _summary([0.0, 0.0], np.eye(2))
    with pytest.raises(DimensionMismatch):
        log_ebf(summary, s, TauPosterior.from_point({"t": 1.0}))


def test_summary_validation():
    with pytest.raises(DimensionMismatch):
        RandomEffectSummary("b", np.zeros((2, 2)), np.eye(2), 10)
    with pytest.raises(DimensionMismatch):
        RandomEffectSummary("b", np.zeros(2), np.eye(3), 10)
    with pytest.raises(DimensionMismatch):
        RandomEffectSummary("b", np.array([np.nan, 0.0]), np.eye(2), 10)


def test_tau_posterior_requires_exactly_one_side():
    with pytest.raises(ValueError):
        TauPosterior()
    with pytest.raises(ValueError):
        TauPosterior(
            point=VarianceParams({"t": 1.0}),
            draws=TauDraws(("t",), np.ones((2, 1))),
        )
    assert TauPosterior.from_point({"t": 1.0}).variant == VARIANT_MEAN
    assert TauPosterior.from_draws(("t",), np.ones((2, 1))).variant == VARIANT_FULL


def test_tau_draws_shape_check():
    with pytest.raises(DimensionMismatch):
        TauDraws(("a", "b"), np.ones((5, 3)))
    draws = TauDraws(("a", "b"), np.arange(6.0).reshape(3, 2))
    assert len(draws) == 3
    assert draws[1]["b"] == 3.0


class TestJoint:
    def test_joint_of_one_block_equals_single(self):
        rng = np.random.default_rng(8)
        structure, params = make_structure("dense_symmetric", rng)
        d = structure.dim
        a = rng.standard_normal((d, d))
        cov = a @ a.T + 0.4 * np.eye(d)
        mean = rng.standard_normal(d)
        single = log_ebf(_summary(mean, cov, block_id="x"), structure, TauPosterior(point=params))
        joint = log_ebf_joint([("x", structure, params)], mean, cov)
        assert joint.log_ebf01 == single.log_ebf01
        assert joint.block_id == "x"

    def test_block_diagonal_joint_is_sum_frozen(self):
        # Two 1-dimensional blocks with tau 2 and 1/2, pooled moments
        # mean (1, -1), cov diag(2, 1/2):
        #   numerator   = -1/2 (log 2 + log 1/2) - 1/2 (1/2 + 2) = -5/4
        #   denominator = -1/2 log 2 - 1/2 log 1/2 = 0
        blocks = [
            ("a", ScaledIdentity(dim=1, variance="t"), VarianceParams({"t": 2.0})),
            ("b", ScaledIdentity(dim=1, variance="t"), VarianceParams({"t": 0.5})),
        ]
        res = log_ebf_joint(blocks, [1.0, -1.0], np.diag([2.0, 0.5]))
        assert_allclose(res.log_ebf01, -1.25, rtol=1e-14)
        assert res.block_id == "a+b"
        assert res.dim == 2

    def test_block_diagonal_joint_decomposes(self):
        rng = np.random.default_rng(21)
        for _ in range(20):
            parts = []
            covs = []
            means = []
            total = 0.0
            for kind in ("scaled_identity", "dense_symmetric"):
                structure, params = make_structure(kind, rng)
                d = structure.dim
                a = rng.standard_normal((d, d))
                cov = a @ a.T + 0.4 * np.eye(d)
                mean = rng.standard_normal(d)
                parts.append((kind, structure, params))
                covs.append(cov)
                means.append(mean)
                total += log_ebf(
                    _summary(mean, cov), structure, TauPosterior(point=params)
                ).log_ebf01
            joint_cov = np.zeros((sum(c.shape[0] for c in covs),) * 2)
            lo = 0
            for cov in covs:
                hi = lo + cov.shape[0]
                joint_cov[lo:hi, lo:hi] = cov
                lo = hi
            res = log_ebf_joint(parts, np.concatenate(means), joint_cov)
            assert_allclose(res.log_ebf01, total, rtol=0, atol=1e-10)

    def test_joint_validation(self):
        with pytest.raises(DimensionMismatch):
            log_ebf_joint([], np.zeros(0), np.zeros((0, 0)))
        blocks = [("a", ScaledIdentity(dim=2, variance="t"), VarianceParams({"t": 1.0}))]
        with pytest.raises(DimensionMismatch):
            log_ebf_joint(blocks, np.zeros(3), np.eye(3))
