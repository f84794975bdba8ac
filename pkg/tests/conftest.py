"""Shared fixtures and helpers: small random instances and feasible points."""
from __future__ import annotations

import numpy as np
import pytest

from risee import experiment
from risee.allocator import IterateTrace, lmmse_filters
from risee.channels import dbm_to_watt, generate_scenario, noise_power
from risee.model import Allocation, RisMode, SystemParams, check_feasibility, r_diag

ACCEPTANCE_LINES: list[str] = []
# Every optimizer iterate and every scheme output produced during the run.
FEASIBILITY_AUDIT = {"checked": 0, "violations": []}


def make_params(K=2, N_B=2, N=8, p_tmax_dbm=10.0, ris_mode=RisMode.ACTIVE, p_r_max_dbm=10.0,
                **kw) -> SystemParams:
    s2 = noise_power(20e6)
    base = dict(K=K, N_B=N_B, N=N, bandwidth=20e6, sigma2_b=s2, sigma2_ris=s2, sigma2_e=s2,
                p_max=float(dbm_to_watt(p_tmax_dbm)), p_r_max=float(dbm_to_watt(p_r_max_dbm)),
                ris_mode=ris_mode, p_c_n=1e-3, p_0_ris=1.0, p_0=0.1)
    base.update(kw)
    return SystemParams(**base)


def make_instance(seed, error_ratio=1.0, **kw):
    """Params and one channel draw; the transmit budget is drawn in -10..40 dBm."""
    rng = np.random.default_rng(seed)
    kw.setdefault("p_tmax_dbm", float(rng.uniform(-10, 40)))
    params = make_params(**kw)
    channels, _ = generate_scenario(params, rng_seed=int(rng.integers(2 ** 32)),
                                    error_ratio=error_ratio)
    return params, channels, rng


def random_gamma(R, params: SystemParams, rng) -> np.ndarray:
    """Random reflection vector meeting the reflection constraints for the diagonal ``R``."""
    N = R.size
    gamma = rng.uniform(0.2, 1.0, N) * np.exp(1j * rng.uniform(0, 2 * np.pi, N))
    tr_r = float(np.sum(R))
    lo = tr_r if params.ris_mode is RisMode.ACTIVE else 0.0
    target = lo + rng.uniform() * (tr_r + params.amp_budget - lo)
    return gamma * np.sqrt(target / float(R @ np.abs(gamma) ** 2))


def random_alloc(channels, params: SystemParams, rng, lmmse=True) -> Allocation:
    p = params.p_max * rng.uniform(0.05, 1.0, channels.K)
    gamma = random_gamma(r_diag(p, channels, params), params, rng)
    C = rng.standard_normal((channels.N_B, channels.K)) + 1j * rng.standard_normal((channels.N_B, channels.K))
    alloc = Allocation(gamma, p, C)
    return alloc.replace(C=lmmse_filters(alloc, channels, params)) if lmmse else alloc


def report(line: str) -> None:
    """Queue one line for the acceptance summary printed at the end of the run."""
    ACCEPTANCE_LINES.append(line)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


def _audit(alloc, channels, params, where):
    FEASIBILITY_AUDIT["checked"] += 1
    rep = check_feasibility(alloc, channels, params, tol=1e-8)
    if not rep.feasible:
        FEASIBILITY_AUDIT["violations"].append(f"{where}: min slack {rep.min_slack:.3e}")


@pytest.fixture(autouse=True, scope="session")
def feasibility_audit():
    mp = pytest.MonkeyPatch()
    record = IterateTrace.record
    make_record = experiment._record

    def audited_record(self, alloc, channels, params, *args, **kwargs):
        _audit(alloc, channels, params, "iterate")
        return record(self, alloc, channels, params, *args, **kwargs)

    def audited_make_record(trial, seed, tag, mode, value, alloc, channels, params, *args):
        _audit(alloc, channels, params, f"scheme {tag} output")
        return make_record(trial, seed, tag, mode, value, alloc, channels, params, *args)

    mp.setattr(IterateTrace, "record", audited_record)
    mp.setattr(experiment, "_record", audited_make_record)
    yield FEASIBILITY_AUDIT
    mp.undo()


def pytest_collection_modifyitems(items):
    items.sort(key=lambda item: item.get_closest_marker("run_last") is not None)
