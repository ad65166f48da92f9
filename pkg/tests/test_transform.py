import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from hsifuse.tensor import mode_n_product, unfold
from hsifuse.transform import (
    KINDS,
    apply_transform,
    build_transform,
    prox_ttnn,
    t_svd,
    ttnn,
    unitarity_residual,
)


def make(kind, n3, rng):
    src = rng.normal(size=(4, 4, n3)) if kind == "data_svd" else None
    return build_transform(kind, n3, source=src)


def test_identity_kind():
    assert np.array_equal(build_transform("identity", 4).phi, np.eye(4))


def test_dft_two_bands_unitary():
    assert unitarity_residual(build_transform("dft", 2).phi) < 1e-12


def test_data_svd_orders_energy(rng):
    x = rng.normal(size=(4, 4, 3))
    t = build_transform("data_svd", source=x)
    assert unitarity_residual(t.phi) <= 1e-10
    energy = np.sum(np.abs(t.phi @ unfold(x, 3)) ** 2, axis=1)
    assert np.all(np.diff(energy) <= 1e-10)
    # same energies as the squared singular values of the unfolding
    assert np.allclose(energy, np.linalg.svd(unfold(x, 3), compute_uv=False) ** 2)


def test_data_svd_needs_source():
    with pytest.raises(ValueError):
        build_transform("data_svd", 3)


def test_unknown_kind():
    with pytest.raises(ValueError):
        build_transform("wavelet", 4)


@pytest.mark.parametrize("kind", KINDS)
def test_apply_roundtrip_and_mode_product(kind, rng):
    t = make(kind, 5, rng)
    x = rng.normal(size=(3, 4, 5))
    assert np.allclose(apply_transform(apply_transform(x, t), t, inverse=True), x, atol=1e-10)
    assert np.allclose(apply_transform(x, t), mode_n_product(x.astype(t.phi.dtype), t.phi, 3), atol=1e-12)


def test_apply_band_mismatch(rng):
    with pytest.raises(ValueError):
        apply_transform(rng.normal(size=(2, 2, 3)), build_transform("dct", 4))


def test_tsvd_zero_cube():
    t = build_transform("dct", 3)
    assert np.all(t_svd(np.zeros((3, 2, 3)), t).d == 0)


@pytest.mark.parametrize("kind", KINDS)
def test_tsvd_tube(kind, rng):
    t = make(kind, 4, rng)
    x = rng.normal(size=(1, 1, 4))
    sv = t_svd(x, t).singular_values()
    assert np.allclose(sv[:, 0], np.abs(t.phi @ x[0, 0]), atol=1e-12)


def test_tsvd_identity_matches_matrix_svd(rng):
    x = rng.normal(size=(4, 3, 2))
    sv = t_svd(x, build_transform("identity", 2)).singular_values()
    for k in range(2):
        assert np.allclose(sv[k], np.linalg.svd(x[:, :, k], compute_uv=False), atol=1e-10)


@pytest.mark.parametrize("kind", KINDS)
def test_tsvd_reconstruction_and_structure(kind, rng):
    t = make(kind, 5, rng)
    x = rng.normal(size=(4, 6, 5))
    dec = t_svd(x, t)
    rec = dec.reconstruct()
    assert np.linalg.norm(rec - x) / np.linalg.norm(x) <= 1e-8
    d_hat = apply_transform(dec.d, t)
    for k in range(5):
        sl = d_hat[:, :, k]
        assert np.allclose(sl[~np.eye(*sl.shape, dtype=bool)], 0, atol=1e-10)
    sv = dec.singular_values()
    assert np.all(sv >= -1e-12)
    assert np.all(np.diff(sv, axis=1) <= 1e-10)


def test_ttnn_values(rng):
    t = build_transform("identity", 3)
    assert ttnn(np.zeros((3, 3, 3)), t) == 0
    x = np.zeros((4, 3, 3))
    x[:, :, 1] = rng.normal(size=(4, 3))
    assert np.isclose(ttnn(x, t), np.linalg.svd(x[:, :, 1], compute_uv=False).sum(), rtol=1e-12)


def test_ttnn_unitary_invariance(rng):
    t = build_transform("dct", 3)
    x = rng.normal(size=(4, 5, 3))
    x_hat = apply_transform(x, t)
    q1, _ = np.linalg.qr(rng.normal(size=(4, 4)))
    q2, _ = np.linalg.qr(rng.normal(size=(5, 5)))
    rotated = np.einsum("ab,bck,cd->adk", q1, x_hat, q2)
    y = apply_transform(rotated, t, inverse=True).real
    assert np.isclose(ttnn(y, t), ttnn(x, t), rtol=1e-10)


def test_prox_zero_lambda(rng):
    y = rng.normal(size=(3, 3, 2))
    assert np.allclose(prox_ttnn(y, 0.0, build_transform("dct", 2)), y, atol=1e-10)


def test_prox_negative_lambda(rng):
    with pytest.raises(ValueError):
        prox_ttnn(rng.normal(size=(2, 2, 2)), -1.0, build_transform("dct", 2))


@pytest.mark.parametrize("kind", KINDS)
def test_prox_large_lambda_zeroes(kind, rng):
    t = make(kind, 3, rng)
    y = rng.normal(size=(4, 4, 3))
    smax = t_svd(y, t).singular_values().max()
    assert np.allclose(prox_ttnn(y, smax, t), 0, atol=1e-12)


def prox_objective(x, y, lam, t):
    return lam * ttnn(x, t) + 0.5 * np.sum((x - y) ** 2)


@pytest.mark.parametrize("kind", ["data_svd", "dft"])
def test_prox_random_candidate_optimality(kind, rng):
    t = make(kind, 3, rng)
    y = rng.normal(size=(4, 4, 3))
    x = prox_ttnn(y, 0.3, t)
    best = prox_objective(x, y, 0.3, t)
    for _ in range(1000):
        cand = x + rng.normal(scale=rng.choice([1e-3, 1e-2, 1e-1]), size=x.shape)
        assert best <= prox_objective(cand, y, 0.3, t) + 1e-12


@given(st.integers(0, 2**32 - 1), st.sampled_from(KINDS), st.floats(0.01, 3.0))
def test_prox_nonexpansive_and_shrinks(seed, kind, lam):
    r = np.random.default_rng(seed)
    t = make(kind, 3, r)
    a, b = r.normal(size=(3, 4, 3)), r.normal(size=(3, 4, 3))
    pa, pb = prox_ttnn(a, lam, t), prox_ttnn(b, lam, t)
    assert np.linalg.norm(pa - pb) <= np.linalg.norm(a - b) + 1e-10
    assert ttnn(pa, t) <= ttnn(a, t) + 1e-10
