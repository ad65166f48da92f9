import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from hsifuse.degradation import delta_kernel
from hsifuse.initialization import (
    InitConfig,
    bicubic_downsample,
    build_m_plus,
    init_hrhsi,
    init_kernels,
    keys_kernel,
    regression_weights,
)
from hsifuse.tensor import mode_n_product, unfold


def keys(t):
    t = abs(t)
    if t <= 1:
        return 1.5 * t**3 - 2.5 * t**2 + 1
    if t < 2:
        return -0.5 * t**3 + 2.5 * t**2 - 4 * t + 2
    return 0.0


def test_keys_kernel_values():
    t = np.linspace(-2.5, 2.5, 41)
    assert np.allclose(keys_kernel(t), [keys(v) for v in t], atol=1e-15)
    assert keys_kernel(np.array(0.0)) == 1.0
    assert np.allclose(keys_kernel(np.array([1.0, 2.0, -1.0])), 0.0)


def test_factor_one_is_identity(rng):
    m = rng.random((6, 6, 3))
    m_plus, m_d_plus = build_m_plus(m, 1)
    assert np.allclose(m_d_plus, m_plus, atol=1e-15)
    assert np.array_equal(m_plus[:, :, 3], np.ones((6, 6)))


@pytest.mark.parametrize("factor", [2, 3, 4])
def test_constants_preserved(factor):
    m = np.full((12, 12, 2), 3.7)
    _, m_d_plus = build_m_plus(m, factor)
    assert np.allclose(m_d_plus[:, :, :2], 3.7, atol=1e-13)


def test_ramp_matches_direct_convolution():
    n, d = 8, 2
    img = np.add.outer(np.arange(n, dtype=float), 0.5 * np.arange(n))
    out = bicubic_downsample(img[:, :, None], d)[:, :, 0]
    taps = range(-2 * d + 1, 2 * d)
    w = np.array([keys(t / d) for t in taps])
    w /= w.sum()

    def sample(line, c):
        return sum(wk * line[min(max(c + t, 0), n - 1)] for wk, t in zip(w, taps))

    centers = range(d // 2, n, d)
    rows = np.array([[sample(img[:, j], c) for j in range(n)] for c in centers])
    ref = np.array([[sample(rows[i], c) for c in centers] for i in range(len(centers))])
    assert np.allclose(out, ref, atol=1e-13)


def test_nondivisible_dims_rejected(rng):
    with pytest.raises(ValueError):
        build_m_plus(rng.random((10, 8, 2)), 4)


def test_exact_linear_model_is_recovered(rng):
    m = rng.random((16, 16, 3))
    _, m_d_plus = build_m_plus(m, 4)
    w = rng.normal(size=(4, 6))
    h = mode_n_product(m_d_plus, w.T, 3)
    w_hat = regression_weights(h, m_d_plus, 0.0)
    assert np.linalg.norm(h - mode_n_product(m_d_plus, w_hat.T, 3)) <= 1e-8 * np.linalg.norm(h)
    assert np.allclose(w_hat, w, atol=1e-8)


def test_weights_match_dense_normal_equations(rng):
    h = rng.random((4, 4, 5))
    m = rng.random((8, 8, 3))
    _, m_d_plus = build_m_plus(m, 2)
    gamma = 0.1
    w = regression_weights(h, m_d_plus, gamma)
    a = unfold(m_d_plus, 3)
    ref = np.linalg.inv(a @ a.T + gamma * np.eye(4)) @ a @ unfold(h, 3).T
    assert w.shape == (4, 5)
    assert np.allclose(w, ref, atol=1e-8)
    lhs = (a @ a.T + gamma * np.eye(4)) @ w
    rhs = a @ unfold(h, 3).T
    assert np.linalg.norm(lhs - rhs) <= 1e-8 * np.linalg.norm(rhs)


def test_ridge_limit(rng):
    h = rng.random((4, 4, 5))
    m = rng.random((8, 8, 3))
    s0 = init_hrhsi(h, m, 2, InitConfig(gamma=1e14))
    assert np.abs(s0).max() < 1e-8


def test_singular_system_without_ridge(rng):
    m = np.repeat(rng.random((8, 8, 1)), 2, axis=2)
    _, m_d_plus = build_m_plus(m, 2)
    with pytest.raises(np.linalg.LinAlgError, match="gamma > 0"):
        regression_weights(rng.random((4, 4, 3)), m_d_plus, 0.0)


def test_output_shape(rng):
    s0 = init_hrhsi(rng.random((4, 5, 7)), rng.random((16, 20, 3)), 4)
    assert s0.shape == (16, 20, 7)


def test_mismatched_hsi(rng):
    with pytest.raises(ValueError):
        init_hrhsi(rng.random((4, 4, 7)), rng.random((16, 20, 3)), 4)


@given(st.integers(0, 2**32 - 1), st.floats(0.1, 50.0))
def test_scale_equivariance(seed, c):
    r = np.random.default_rng(seed)
    h, m = r.random((4, 4, 5)), r.random((8, 8, 3))
    cfg = InitConfig(gamma=0.0)
    a = init_hrhsi(h, m, 2, cfg)
    b = init_hrhsi(c * h, c * m, 2, cfg)
    assert np.linalg.norm(b - c * a) <= 1e-10 * np.linalg.norm(c * a)


@given(st.integers(0, 2**32 - 1), st.floats(0.0, 10.0), st.floats(0.0, 10.0))
def test_ridge_monotone(seed, g1, g2):
    r = np.random.default_rng(seed)
    h, m = r.random((4, 4, 5)), r.random((8, 8, 3))
    _, m_d_plus = build_m_plus(m, 2)
    lo, hi = sorted((g1 + 1e-6, g2 + 1e-6))
    assert np.linalg.norm(regression_weights(h, m_d_plus, lo)) >= np.linalg.norm(regression_weights(h, m_d_plus, hi)) - 1e-12


def test_kernel_seeds():
    op1, op2, sr = init_kernels(16, 12, 2, [(0, 4), (5, 5)])
    assert np.allclose(sr.weights[0], 0.2, atol=1e-3)
    assert sr.weights[1].tolist() == [1.0]
    assert sr.n_bands == 6
    for b in (op1.b, op2.b, *sr.weights):
        assert b.min() >= 0 and abs(b.sum() - 1) <= 1e-12
    assert np.count_nonzero(op1.b) == 5


def test_narrow_spatial_seed_is_delta():
    op1, _, _ = init_kernels(8, 8, 2, [(0, 1)], InitConfig(sigma_s=1e-6))
    assert np.allclose(op1.b, delta_kernel(8), atol=1e-15)


def test_config_validation():
    with pytest.raises(ValueError):
        InitConfig(gamma=-1)
    with pytest.raises(ValueError):
        InitConfig(sigma_s=0)
