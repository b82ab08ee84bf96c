import math

import numpy as np
import pytest

from kernels import (
    GramSet, KernelConfig, KernelFamily, build_grams, combine, combine_row, combine_rows,
    gradient_quadform, rbf, rbf_matrix,
)

SUM = KernelConfig(KernelFamily.SUM)
PRODUCT = KernelConfig(KernelFamily.PRODUCT)


def _weights(rng, size):
    return rng.exponential(size=size)


# ── rbf ──────────────────────────────────────────────────────


def test_rbf_examples():
    assert rbf([1.5, -2.0], [1.5, -2.0], 3.0) == 1.0
    assert rbf([0, 0], [1, 0], 1.0) == pytest.approx(math.exp(-1))
    assert rbf([0, 0], [1, 0], 1e4) == pytest.approx(0.0, abs=1e-300)


def test_rbf_rejects_bad_input():
    with pytest.raises(ValueError):
        rbf([0, 0], [0, 0, 0], 1.0)
    with pytest.raises(ValueError):
        rbf([0, 0], [1, 0], 0.0)


def test_rbf_matrix_matches_scalar(rng):
    A, B = rng.normal(size=(4, 2)), rng.normal(size=(3, 2))
    M = rbf_matrix(A, B, 0.5)
    for i in range(4):
        for j in range(3):
            assert M[i, j] == pytest.approx(rbf(A[i], B[j], 0.5), rel=1e-12)


# ── KernelConfig ─────────────────────────────────────────────


def test_default_grid_has_eight_terms():
    assert SUM.size == 8
    assert PRODUCT.size == 8
    assert PRODUCT.terms[0] == (0, 2.0**-3)


def test_config_validation():
    with pytest.raises(ValueError):
        KernelConfig(KernelFamily.SUM, bandwidths=(1.0,), feature_dim=1)
    with pytest.raises(ValueError):
        KernelConfig(KernelFamily.PRODUCT, per_feature=False)
    with pytest.raises(ValueError):
        KernelConfig(KernelFamily.SUM, bandwidths=(1.0, -1.0))
    assert KernelConfig(KernelFamily.PRODUCT, bandwidths=(1.0,), feature_dim=1).size == 1
    assert KernelConfig("sum").family is KernelFamily.SUM


# ── build_grams / combine ────────────────────────────────────


def test_identical_samples():
    X = np.array([[0.3, -1.0], [0.3, -1.0]])
    assert np.all(build_grams(X, SUM).mats == 1.0)
    assert np.all(build_grams(X, PRODUCT).mats == 0.0)


def test_sum_grams_have_unit_diagonal(rng):
    grams = build_grams(rng.normal(size=(3, 2)), SUM)
    for K in grams.mats:
        assert np.all(np.diag(K) == 1.0)


def test_product_grams_non_negative_zero_diagonal(rng):
    grams = build_grams(rng.normal(size=(6, 2)), PRODUCT)
    assert np.all(grams.mats >= 0)
    for D in grams.mats:
        assert np.all(np.diag(D) == 0.0)
        assert np.array_equal(D, D.T)


def test_base_grams_are_psd(rng):
    grams = build_grams(rng.normal(size=(10, 2)), SUM)
    for K in grams.mats:
        assert np.linalg.eigvalsh(K).min() >= -1e-8


def test_combine_one_hot_sum(rng):
    grams = build_grams(rng.normal(size=(5, 2)), SUM)
    d = np.zeros(8)
    d[0] = 1.0
    assert np.allclose(combine(d, grams), grams.mats[0], rtol=0, atol=1e-15)


def test_combine_zero_product_is_all_ones(rng):
    grams = build_grams(rng.normal(size=(5, 2)), PRODUCT)
    assert np.all(combine(np.zeros(8), grams) == 1.0)


def test_combine_average_of_two():
    K1 = np.array([[1.0, 0.2], [0.2, 1.0]])
    K2 = np.array([[1.0, 0.6], [0.6, 1.0]])
    cfg = KernelConfig(KernelFamily.SUM, bandwidths=(1.0, 2.0), feature_dim=1, per_feature=False)
    grams = GramSet(cfg, np.stack([K1, K2]))
    assert np.allclose(combine([0.5, 0.5], grams), (K1 + K2) / 2)


def test_combine_rejects_negative_weight(rng):
    grams = build_grams(rng.normal(size=(3, 2)), SUM)
    d = np.ones(8)
    d[3] = -0.1
    with pytest.raises(ValueError):
        combine(d, grams)


@pytest.mark.parametrize("config", [SUM, PRODUCT], ids=["sum", "product"])
def test_combined_kernel_is_symmetric_psd(rng, config):
    for _ in range(100):
        n = int(rng.integers(2, 25))
        X = rng.normal(size=(n, 2)) * rng.uniform(0.1, 3.0)
        K = combine(_weights(rng, config.size), build_grams(X, config))
        assert np.array_equal(K, K.T)
        assert np.linalg.eigvalsh(K).min() >= -1e-8


# ── combine_row ──────────────────────────────────────────────


@pytest.mark.parametrize("config", [SUM, PRODUCT], ids=["sum", "product"])
def test_row_at_training_point_matches_gram_column(rng, config):
    X = rng.normal(size=(7, 2))
    d = _weights(rng, config.size)
    if config.family is KernelFamily.SUM:
        d /= d.sum()
    K = combine(d, build_grams(X, config))
    for i in range(7):
        assert np.allclose(combine_row(d, config, X, X[i]), K[:, i], rtol=0, atol=1e-12)


def test_row_far_from_training_data_vanishes(rng):
    X = rng.normal(size=(5, 2))
    row = combine_row(np.ones(8), PRODUCT, X, np.array([1e3, -1e3]))
    assert np.all(row < 1e-300)


def test_row_spot_value_matches_scalar_path(rng):
    X = rng.normal(size=(4, 2))
    q = rng.normal(size=2)
    d = _weights(rng, 8)
    want_sum = sum(
        w * rbf(X[2][[f]], q[[f]], g) for w, (f, g) in zip(d, SUM.terms)
    )
    want_product = math.prod(
        rbf(X[2][[f]], q[[f]], g) ** w for w, (f, g) in zip(d, PRODUCT.terms)
    )
    assert combine_row(d, SUM, X, q)[2] == pytest.approx(want_sum, rel=1e-12)
    assert combine_row(d, PRODUCT, X, q)[2] == pytest.approx(want_product, rel=1e-12)


def test_combine_rows_stacks_rows(rng):
    X, Q = rng.normal(size=(6, 2)), rng.normal(size=(3, 2))
    d = _weights(rng, 8)
    rows = combine_rows(d, PRODUCT, X, Q)
    assert rows.shape == (3, 6)
    assert np.allclose(rows[1], combine_row(d, PRODUCT, X, Q[1]))


# ── gradient_quadform ────────────────────────────────────────


def test_gradient_zero_beta(rng):
    grams = build_grams(rng.normal(size=(4, 2)), PRODUCT)
    assert np.all(gradient_quadform(np.ones(8), grams, np.zeros(4)) == 0)


def test_gradient_single_sum_kernel():
    a = 0.3
    cfg = KernelConfig(KernelFamily.SUM, bandwidths=(1.0, 2.0), feature_dim=1, per_feature=False)
    K1 = np.array([[1.0, a], [a, 1.0]])
    grams = GramSet(cfg, np.stack([K1, np.eye(2)]))
    g = gradient_quadform([1.0, 0.0], grams, np.array([1.0, 1.0]))
    assert g[0] == pytest.approx(2 + 2 * a)


@pytest.mark.parametrize("config", [SUM, PRODUCT], ids=["sum", "product"])
def test_gradient_matches_finite_differences(rng, config):
    for _ in range(20):
        X = rng.normal(size=(8, 2))
        grams = build_grams(X, config)
        d = rng.uniform(0.2, 1.0, size=config.size)
        beta = rng.normal(size=8)
        g = gradient_quadform(d, grams, beta)
        eps = 1e-5
        for m in range(config.size):
            e = np.zeros(config.size)
            e[m] = eps
            fd = (beta @ combine(d + e, grams) @ beta - beta @ combine(d - e, grams) @ beta) / (2 * eps)
            assert g[m] == pytest.approx(fd, rel=1e-4, abs=1e-7)
