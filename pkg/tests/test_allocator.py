"""Receive filters and the alternating optimization loop."""
import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from conftest import make_instance, random_alloc
from risee.allocator import (alternate, evaluate_allocation, initial_allocation, lmmse_filters,
                             max_sinr_objective, polish_gamma, restore_gamma)
from risee.fracprog import SolverConfig
from risee.model import (CsiMode, ObjectiveMode, RisMode, check_feasibility, link_terms, objective,
                         r_diag)


def test_lmmse_matches_generalized_eigenvector():
    # max SINR of user k = largest generalized eigenvalue of (p_k a a^H, M_k)
    params, ch, rng = make_instance(0, K=3, N_B=3)
    a = random_alloc(ch, params, rng)
    sinr = link_terms(a.gamma, a.p, a.C, ch, params, ch.eve(CsiMode.PERFECT)).sinr_b
    A = ch.G_B @ (ch.h * a.gamma[None, :]).T
    Gg = ch.G_B * a.gamma[None, :]
    W = params.sigma2_b * np.eye(3) + params.sigma2_ris * Gg @ Gg.conj().T
    for k in range(3):
        Mk = W + sum(a.p[m] * np.outer(A[:, m], A[:, m].conj()) for m in range(3) if m != k)
        best = a.p[k] * np.real(A[:, k].conj() @ np.linalg.solve(Mk, A[:, k]))
        assert sinr[k] == pytest.approx(best, rel=1e-9)


@settings(max_examples=25, deadline=None)
@given(seed=st.integers(0, 2 ** 31))
def test_lmmse_dominates_random_filters(seed):
    params, ch, rng = make_instance(seed)
    a = random_alloc(ch, params, rng)
    eve = ch.eve(CsiMode.PERFECT)
    best = link_terms(a.gamma, a.p, a.C, ch, params, eve).sinr_b
    for _ in range(20):
        C = rng.normal(size=a.C.shape) + 1j * rng.normal(size=a.C.shape)
        assert np.all(link_terms(a.gamma, a.p, C, ch, params, eve).sinr_b <= best * (1 + 1e-9))


def test_lmmse_without_receiver_noise_is_flagged():
    params, ch, rng = make_instance(1, sigma2_b=0.0)
    a = random_alloc(ch, params, rng, lmmse=False)
    flags = []
    C = lmmse_filters(a, ch, params, flags)
    assert np.all(np.isfinite(C)) and flags


@pytest.mark.parametrize("obj", list(ObjectiveMode))
@pytest.mark.parametrize("csi", list(CsiMode))
@pytest.mark.parametrize("mode", list(RisMode))
def test_max_sinr_objective_value_and_gradient(obj, csi, mode):
    params, ch, rng = make_instance(2, K=3, N_B=3, ris_mode=mode)
    a = random_alloc(ch, params, rng)
    eve = ch.eve(csi)
    v, g = max_sinr_objective(a.gamma, a.p, ch, params, eve, obj)
    assert v == pytest.approx(objective(a.gamma, a.p, a.C, ch, params, csi, obj), rel=1e-9)

    def f(z):
        b = a.replace(gamma=z)
        return objective(z, a.p, lmmse_filters(b, ch, params), ch, params, csi, obj)

    h = 1e-6 * np.linalg.norm(a.gamma)
    for _ in range(3):
        d = rng.normal(size=ch.N) + 1j * rng.normal(size=ch.N)
        fd = (f(a.gamma + h * d) - f(a.gamma - h * d)) / (2 * h)
        assert np.real(np.vdot(g, d)) == pytest.approx(fd, rel=1e-4, abs=1e-9 * abs(v))


def test_polish_never_lowers_objective():
    params, ch, rng = make_instance(3)
    a = random_alloc(ch, params, rng)
    before = objective(a.gamma, a.p, a.C, ch, params)
    b = polish_gamma(a, ch, params)
    assert objective(b.gamma, b.p, b.C, ch, params) >= before
    assert check_feasibility(b, ch, params).feasible


def test_restore_gamma_scales_into_the_feasible_set():
    params, ch, rng = make_instance(4)
    a = random_alloc(ch, params, rng)
    for factor in (1e-3, 1e3):
        b = restore_gamma(a.replace(gamma=a.gamma * factor), ch, params)
        assert check_feasibility(b, ch, params).feasible
        np.testing.assert_allclose(np.angle(b.gamma), np.angle(a.gamma), atol=1e-12)
    same = restore_gamma(a, ch, params)
    np.testing.assert_array_equal(same.gamma, a.gamma)


@pytest.mark.parametrize("csi", list(CsiMode))
@pytest.mark.parametrize("obj", list(ObjectiveMode))
@pytest.mark.parametrize("mode", list(RisMode))
def test_alternate_monotone_feasible_converged(csi, obj, mode):
    params, ch, _ = make_instance(5, ris_mode=mode)
    alloc, tr = alternate(ch, params, csi, obj, SolverConfig(max_sca=20))
    assert np.all(np.diff(tr.objective) >= -1e-9)
    assert all(tr.feasible) and tr.converged
    assert tr.objective[-1] == pytest.approx(objective(alloc.gamma, alloc.p, alloc.C, ch, params, csi, obj))
    for values in tr.gamma_values + tr.power_values:
        assert np.all(np.diff(values) >= -1e-9)


def test_alternate_improves_on_start():
    params, ch, _ = make_instance(6, p_tmax_dbm=30.0)
    start = initial_allocation(ch, params)
    alloc, tr = alternate(ch, params)
    assert tr.objective[-1] > objective(start.gamma, start.p, start.C, ch, params)
    rep = evaluate_allocation(alloc, ch, params)
    assert rep.see_true == pytest.approx(tr.see[-1])
    assert rep.p_tot > 0


def test_alternate_warm_start_does_not_go_below_it():
    params, ch, rng = make_instance(7)
    init = random_alloc(ch, params, rng)
    _, tr = alternate(ch, params, init=init)
    assert tr.objective[0] == pytest.approx(objective(init.gamma, init.p, init.C, ch, params))
    assert tr.objective[-1] >= tr.objective[0]


def test_r_diag_matches_dense_sum():
    params, ch, rng = make_instance(8)
    p = rng.uniform(0, 1, ch.K)
    dense = sum(p[k] * np.diag(ch.h[k]).conj().T @ np.diag(ch.h[k]) for k in range(ch.K)) \
        + params.sigma2_ris * np.eye(ch.N)
    np.testing.assert_allclose(r_diag(p, ch, params), np.real(np.diag(dense)), rtol=1e-12)
