"""Element-wise search and random-phase reference schemes."""
import numpy as np
import pytest

from conftest import make_instance, random_alloc
from risee.allocator import alternate, lmmse_filters
from risee.baselines import (ElementEvaluator, element_candidates, elementwise_gamma_step,
                             random_allocation)
from risee.fracprog import SolverConfig
from risee.model import (Allocation, CsiMode, ObjectiveMode, RisMode, check_feasibility, objective,
                         r_diag)


@pytest.mark.parametrize("obj", list(ObjectiveMode))
@pytest.mark.parametrize("csi", list(CsiMode))
@pytest.mark.parametrize("mode", list(RisMode))
def test_element_evaluator_matches_objective_with_lmmse(obj, csi, mode):
    params, ch, rng = make_instance(0, K=3, N_B=2, ris_mode=mode)
    a = random_alloc(ch, params, rng)
    ev = ElementEvaluator(a.p, ch, params, csi, obj)
    n = 3
    cands = element_candidates(a.gamma, n, ev.R, params, 4, 3)
    vals = ev.values(ev.state(a.gamma), a.gamma, n, cands)
    for c, v in zip(cands, vals):
        g = a.gamma.copy()
        g[n] = c
        b = Allocation(g, a.p, a.C)
        ref = objective(g, a.p, lmmse_filters(b, ch, params), ch, params, csi, obj)
        assert v == pytest.approx(ref, rel=1e-9, abs=1e-12)


@pytest.mark.parametrize("mode", list(RisMode))
def test_candidates_are_feasible(mode):
    params, ch, rng = make_instance(1, ris_mode=mode)
    a = random_alloc(ch, params, rng)
    R = r_diag(a.p, ch, params)
    for n in range(ch.N):
        for c in element_candidates(a.gamma, n, R, params, 8, 4):
            g = a.gamma.copy()
            g[n] = c
            assert check_feasibility(a.replace(gamma=g), ch, params).feasible


def test_elementwise_scheme_monotone_and_feasible():
    params, ch, _ = make_instance(2)
    _, tr = alternate(ch, params, cfg=SolverConfig(refine=False), gamma_step=elementwise_gamma_step(8, 4))
    assert np.all(np.diff(tr.objective) >= -1e-9) and all(tr.feasible)
    with pytest.raises(ValueError):
        elementwise_gamma_step(0, 4)


@pytest.mark.parametrize("mode", list(RisMode))
def test_random_allocation(mode):
    params, ch, _ = make_instance(3, ris_mode=mode)
    a = random_allocation(ch, params, 5)
    b = random_allocation(ch, params, 5)
    np.testing.assert_array_equal(a.gamma, b.gamma)
    assert check_feasibility(a, ch, params).feasible
    np.testing.assert_allclose(a.p, np.sum(params.p_max) / ch.K)
    assert np.ptp(np.abs(a.gamma)) < 1e-12 * np.max(np.abs(a.gamma))
