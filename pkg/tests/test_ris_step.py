"""Reflection step: scalar bounds, surrogates, gradients and the sequential loop."""
import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from conftest import make_instance, random_alloc, random_gamma
from risee.fracprog import SolverConfig
from risee.model import (CsiMode, ObjectiveMode, RisMode, check_feasibility, objective,
                         r_diag, secrecy_rates)
from risee.ris_step import (ExactParametricSolver, GammaContext, SurrogatePoint, _pga_parametric,
                            build_subproblem, linearized_sqrt, log_bound_lower, log_bound_upper,
                            objective_gradient, optimize_gamma, surrogate_quadratic,
                            surrogate_secrecy_rate, surrogate_terms)

pos = st.floats(1e-6, 1e6)


@given(x=pos, y=pos, xb=pos, yb=pos)
def test_log_lower_bound(x, y, xb, yb):
    truth = np.log2(1 + x / y)
    assert log_bound_lower(x, y, xb, yb) <= truth + 1e-9 * max(1.0, truth)
    assert log_bound_lower(xb, yb, xb, yb) == pytest.approx(np.log2(1 + xb / yb), rel=1e-12, abs=1e-15)


@given(x=pos, y=pos, xb=pos, yb=pos, s=pos)
def test_log_upper_bound(x, y, xb, yb, s):
    truth = np.log2(s + x + y)
    assert log_bound_upper(x, y, xb, yb, s) >= truth - 1e-9 * max(1.0, abs(truth))
    assert log_bound_upper(xb, yb, xb, yb, s) == pytest.approx(np.log2(s + xb + yb), rel=1e-12)


@settings(max_examples=50, deadline=None)
@given(seed=st.integers(0, 2 ** 31))
def test_linearized_sqrt_minorant(seed):
    rng = np.random.default_rng(seed)
    B = rng.normal(size=(4, 4)) + 1j * rng.normal(size=(4, 4))
    M = B.conj().T @ B
    g0, g1 = (rng.normal(size=4) + 1j * rng.normal(size=4) for _ in range(2))
    assert linearized_sqrt(M, g1, g0) <= np.sqrt(np.real(g1.conj() @ M @ g1)) + 1e-9
    assert linearized_sqrt(M, g0, g0) == pytest.approx(np.sqrt(np.real(g0.conj() @ M @ g0)))


def directional_fd(f, z, d, h=1e-6):
    return (f(z + h * d) - f(z - h * d)) / (2 * h)


@pytest.mark.parametrize("csi", list(CsiMode))
@pytest.mark.parametrize("seed", range(4))
def test_surrogate_is_tight_with_matching_gradient(seed, csi):
    params, ch, rng = make_instance(seed)
    a = random_alloc(ch, params, rng)
    sp = SurrogatePoint.at(GammaContext.build(a.p, a.C, ch, params, ch.eve(csi)), a.gamma)
    truth = secrecy_rates(a, ch, params, csi)
    scale = np.linalg.norm(a.gamma)
    for k in range(ch.K):
        v, g = surrogate_secrecy_rate(k, a.gamma, sp)
        assert v == pytest.approx(truth[k], rel=1e-8, abs=1e-12)
        d = rng.normal(size=ch.N) + 1j * rng.normal(size=ch.N)
        fd = directional_fd(lambda z: surrogate_secrecy_rate(k, z, sp)[0], a.gamma, d, 1e-6 * scale)
        assert np.real(np.vdot(g, d)) == pytest.approx(fd, rel=1e-4, abs=1e-9)


@pytest.mark.parametrize("seed", range(4))
def test_surrogate_quadratic_equals_sum_of_user_surrogates(seed):
    params, ch, rng = make_instance(seed)
    a = random_alloc(ch, params, rng)
    sp = SurrogatePoint.at(GammaContext.build(a.p, a.C, ch, params, ch.eve(CsiMode.STATISTICAL)), a.gamma)
    q = surrogate_quadratic(sp)
    assert np.all(np.linalg.eigvalsh(q.P) >= -1e-12 * np.abs(q.P).max())
    for _ in range(5):
        z = random_gamma(r_diag(a.p, ch, params), params, rng)
        total = sum(surrogate_secrecy_rate(k, z, sp)[0] for k in range(ch.K))
        assert q.value(z) == pytest.approx(total, rel=1e-9, abs=1e-10)
        grad = sum(surrogate_secrecy_rate(k, z, sp)[1] for k in range(ch.K))
        np.testing.assert_allclose(q.grad(z), grad, rtol=1e-8, atol=1e-10 * np.abs(grad).max())


def test_surrogate_terms_forms():
    params, ch, rng = make_instance(5, K=3)
    a = random_alloc(ch, params, rng)
    for csi in CsiMode:
        for k in range(ch.K):
            t = surrogate_terms(k, a, ch, params, csi, a.gamma)
            assert np.real(a.gamma.conj() @ t["M_B"] @ a.gamma) == pytest.approx(t["x_B"], rel=1e-10)
            assert np.real(a.gamma.conj() @ t["M_E"] @ a.gamma) == pytest.approx(t["y_E"], rel=1e-10)


@pytest.mark.parametrize("obj", list(ObjectiveMode))
@pytest.mark.parametrize("mode", list(RisMode))
def test_objective_gradient_fd(obj, mode):
    params, ch, rng = make_instance(6, ris_mode=mode)
    a = random_alloc(ch, params, rng)
    ctx = GammaContext.build(a.p, a.C, ch, params, ch.eve(CsiMode.STATISTICAL))
    R = r_diag(a.p, ch, params)
    v, g = objective_gradient(a.gamma, ctx, R, params, obj)
    assert v == pytest.approx(objective(a.gamma, a.p, a.C, ch, params, CsiMode.STATISTICAL, obj), rel=1e-10)
    for _ in range(3):
        d = rng.normal(size=ch.N) + 1j * rng.normal(size=ch.N)
        fd = directional_fd(lambda z: objective_gradient(z, ctx, R, params, obj)[0], a.gamma, d,
                            1e-6 * np.linalg.norm(a.gamma))
        assert np.real(np.vdot(g, d)) == pytest.approx(fd, rel=1e-4, abs=1e-9 * abs(v))


@pytest.mark.parametrize("seed", range(5))
def test_exact_parametric_solver_beats_gradient_ascent(seed):
    params, ch, rng = make_instance(seed)
    a = random_alloc(ch, params, rng)
    sub, _ = build_subproblem(a.gamma, a.p, a.C, ch, params, CsiMode.PERFECT, ObjectiveMode.SEE)
    x0 = np.ascontiguousarray(sub.z_bar).view(float).copy()
    lam = sub.num(x0)[0] / sub.den(x0)[0]
    val = lambda x: sub.num(x)[0] - lam * sub.den(x)[0]
    exact = ExactParametricSolver(sub)(lam, x0)
    pga = _pga_parametric(sub, lam, x0, SolverConfig(eps_inner=1e-12, max_inner=20000))
    assert np.allclose(sub.project(exact), exact, atol=1e-9 * np.linalg.norm(exact))
    assert val(exact) >= val(pga) - 1e-8 * abs(val(pga))
    assert val(exact) >= val(x0) - 1e-12


@pytest.mark.parametrize("csi", list(CsiMode))
@pytest.mark.parametrize("obj", list(ObjectiveMode))
@pytest.mark.parametrize("mode", list(RisMode))
def test_optimize_gamma_monotone_and_feasible(csi, obj, mode):
    params, ch, rng = make_instance(7, ris_mode=mode)
    a = random_alloc(ch, params, rng)
    res = optimize_gamma(a, ch, params, csi, obj, SolverConfig(max_sca=20))
    assert np.all(np.diff(res.values) >= -1e-9)
    assert res.values[-1] >= res.values[0]
    assert check_feasibility(a.replace(gamma=res.gamma), ch, params).feasible
    assert res.values[-1] == pytest.approx(objective(res.gamma, a.p, a.C, ch, params, csi, obj))


def test_pga_method_agrees_with_exact():
    params, ch, rng = make_instance(8)
    a = random_alloc(ch, params, rng)
    cfg = SolverConfig(max_sca=10, refine=False)
    ex = optimize_gamma(a, ch, params, cfg=cfg, method="exact")
    pg = optimize_gamma(a, ch, params, cfg=cfg, method="pga")
    assert ex.values[-1] >= pg.values[-1] * (1 - 1e-3)
    with pytest.raises(ValueError):
        optimize_gamma(a, ch, params, cfg=cfg, method="nope")

