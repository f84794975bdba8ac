"""Scenario generator: reproducibility, geometry, fading statistics, CSI error level."""
import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from conftest import make_params
from risee.channels import (FadingConfig, GeometryConfig, dbm_to_watt, error_ratio,
                            error_ratio_to_nev, generate_scenario, nev, nev_to_error_ratio,
                            noise_power, pathloss, place_nodes, rician_vector, watt_to_dbm)


def test_unit_conversions():
    assert dbm_to_watt(30.0) == pytest.approx(1.0)
    assert dbm_to_watt(0.0) == pytest.approx(1e-3)
    assert watt_to_dbm(1e-3) == pytest.approx(0.0)
    # -174 dBm/Hz + 73 dB (20 MHz) + 5 dB noise figure
    assert watt_to_dbm(noise_power(20e6)) == pytest.approx(-174 + 10 * np.log10(20e6) + 5)


def test_same_seed_same_channels():
    params = make_params(K=3, N=10)
    a, pa = generate_scenario(params, rng_seed=7)
    b, pb = generate_scenario(params, rng_seed=7)
    c, _ = generate_scenario(params, rng_seed=8)
    np.testing.assert_array_equal(a.h, b.h)
    np.testing.assert_array_equal(a.g_true, b.g_true)
    np.testing.assert_array_equal(pa.users, pb.users)
    assert not np.allclose(a.h, c.h)
    assert a.h.shape == (3, 10) and a.G_B.shape == (2, 10) and a.g_hat.shape == (10,)


def test_estimate_does_not_depend_on_error_level():
    params = make_params()
    lo, _ = generate_scenario(params, rng_seed=3, error_ratio=0.1)
    hi, _ = generate_scenario(params, rng_seed=3, error_ratio=10.0)
    np.testing.assert_array_equal(lo.g_hat, hi.g_hat)
    np.testing.assert_array_equal(lo.h, hi.h)
    assert error_ratio(lo) == pytest.approx(0.1)
    assert error_ratio(hi) == pytest.approx(10.0)
    exact, _ = generate_scenario(params, rng_seed=3, error_ratio=0.0)
    assert exact.sigma2_g == 0 and np.array_equal(exact.g_true, exact.g_hat)


def test_error_variance_matches_its_setting():
    params = make_params(N=4)
    errs = []
    for s in range(2000):
        ch, _ = generate_scenario(params, rng_seed=s, error_ratio=1.0)
        errs.append(np.mean(np.abs(ch.g_true - ch.g_hat) ** 2) / ch.sigma2_g)
    assert np.mean(errs) == pytest.approx(1.0, abs=0.05)


@given(st.floats(0.0, 0.999))
def test_nev_ratio_roundtrip(v):
    assert error_ratio_to_nev(nev_to_error_ratio(v)) == pytest.approx(v, abs=1e-12)


def test_nev_of_channel_set():
    params = make_params(N=8)
    ch, _ = generate_scenario(params, rng_seed=1, error_ratio=1.0)
    assert nev(ch) == pytest.approx(0.5)


def test_geometry_constraints():
    geom = GeometryConfig()
    for s in range(50):
        pos = place_nodes(geom, 4, s)
        d = np.linalg.norm(pos.users[:, :2] - pos.ris[:2], axis=1)
        assert np.all(d >= geom.min_user_ris_dist - 1e-9)
        assert np.all(d <= geom.cell_radius + 1e-9)
        assert np.all((pos.users[:, 2] >= 1.5) & (pos.users[:, 2] <= 2.5))


def test_rician_power_and_pathloss():
    rng = np.random.default_rng(0)
    v = np.stack([rician_vector(8, 3.0, rng) for _ in range(5000)])
    assert np.mean(np.abs(v) ** 2) == pytest.approx(1.0, rel=0.03)
    assert pathloss(10.0, 2.0) == pytest.approx(pathloss(1.0, 2.0) / 100)


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 2 ** 31))
def test_channels_finite(seed):
    ch, _ = generate_scenario(make_params(K=3, N=12, N_B=3), rng_seed=seed)
    for arr in (ch.h, ch.G_B, ch.g_hat, ch.g_true):
        assert np.all(np.isfinite(arr)) and np.all(np.abs(arr) > 0)


def test_config_validation():
    with pytest.raises(ValueError):
        GeometryConfig(min_user_ris_dist=100.0, cell_radius=50.0)
    with pytest.raises(ValueError):
        FadingConfig(n_h=1.0)
    with pytest.raises(ValueError):
        nev_to_error_ratio(1.0)
