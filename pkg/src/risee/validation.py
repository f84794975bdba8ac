"""Quick invariant checks on random instances, run by the ``validate`` subcommand."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .allocator import alternate, lmmse_filters
from .channels import dbm_to_watt, generate_scenario, noise_power
from .fracprog import SolverConfig
from .model import (Allocation, ChannelSet, CsiMode, ObjectiveMode, RisMode, SystemParams,
                    check_feasibility, link_terms, objective, r_diag, secrecy_rates)
from .power_step import power_coefficients, surrogate_see_power
from .quantize import QuantizationConfig, modulus_interval, quantize_gamma
from .ris_step import GammaContext, SurrogatePoint, surrogate_secrecy_rate


@dataclass(frozen=True)
class Check:
    name: str
    passed: bool
    detail: str


def small_params(K: int = 2, N_B: int = 2, N: int = 8, p_tmax_dbm: float = 10.0,
                 ris_mode: RisMode = RisMode.ACTIVE) -> SystemParams:
    s2 = noise_power(20e6)
    return SystemParams(K=K, N_B=N_B, N=N, bandwidth=20e6, sigma2_b=s2, sigma2_ris=s2,
                        sigma2_e=s2, p_max=float(dbm_to_watt(p_tmax_dbm)),
                        p_r_max=float(dbm_to_watt(10.0)), ris_mode=ris_mode,
                        p_c_n=1e-3, p_0_ris=1.0, p_0=0.1)


def random_feasible(channels: ChannelSet, params: SystemParams, rng) -> Allocation:
    """Random powers, random phases and a random fill of the reflection budget."""
    p = params.p_max * rng.uniform(0.05, 1.0, channels.K)
    R = r_diag(p, channels, params)
    gamma = rng.uniform(0.2, 1.0, channels.N) * np.exp(1j * rng.uniform(0, 2 * np.pi, channels.N))
    out = float(R @ np.abs(gamma) ** 2)
    tr_r = float(np.sum(R))
    lo = tr_r if params.ris_mode is RisMode.ACTIVE else 0.0
    target = lo + rng.uniform(0.0, 1.0) * (tr_r + params.amp_budget - lo)
    gamma = gamma * np.sqrt(target / out)
    alloc = Allocation(gamma, p, np.zeros((channels.N_B, channels.K), dtype=complex))
    return alloc.replace(C=lmmse_filters(alloc, channels, params))


def _instances(n, seed, **kw):
    rng = np.random.default_rng(seed)
    for i in range(n):
        params = small_params(p_tmax_dbm=float(rng.uniform(-10, 40)), **kw)
        channels, _ = generate_scenario(params, rng_seed=int(rng.integers(2 ** 32)))
        yield params, channels, rng


def check_surrogate_tightness(n: int = 20, seed: int = 0) -> Check:
    worst = 0.0
    for params, ch, rng in _instances(n, seed):
        for csi in CsiMode:
            a = random_feasible(ch, params, rng)
            sp = SurrogatePoint.at(GammaContext.build(a.p, a.C, ch, params, ch.eve(csi)), a.gamma)
            truth = secrecy_rates(a, ch, params, csi)
            for k in range(ch.K):
                v, _ = surrogate_secrecy_rate(k, a.gamma, sp)
                worst = max(worst, abs(v - truth[k]) / max(abs(truth[k]), 1e-12))
            co = power_coefficients(a, ch, params, csi)
            v, _ = surrogate_see_power(a.p, a.p, co)
            t = objective(a.gamma, a.p, a.C, ch, params, csi)
            worst = max(worst, abs(v - t) / abs(t))
    return Check("surrogate tightness", worst <= 1e-8, f"max relative gap {worst:.2e}")


def check_minorant(n: int = 10, points: int = 100, seed: int = 1) -> Check:
    worst = -np.inf
    for params, ch, rng in _instances(n, seed):
        for csi in CsiMode:
            a = random_feasible(ch, params, rng)
            sp = SurrogatePoint.at(GammaContext.build(a.p, a.C, ch, params, ch.eve(csi)), a.gamma)
            co = power_coefficients(a, ch, params, csi)
            for _ in range(points):
                b = random_feasible(ch, params, rng)
                truth = secrecy_rates(a.replace(gamma=b.gamma), ch, params, csi)
                for k in range(ch.K):
                    worst = max(worst, surrogate_secrecy_rate(k, b.gamma, sp)[0] - truth[k])
                t = objective(a.gamma, b.p, a.C, ch, params, csi)
                worst = max(worst, surrogate_see_power(b.p, a.p, co)[0] - t)
    return Check("minorant property", worst <= 1e-8, f"max excess {worst:.2e}")


def check_alternating(n: int = 10, seed: int = 2) -> Check:
    bad, stalls = [], 0
    cfg = SolverConfig(max_sca=20)
    for i, (params, ch, _) in enumerate(_instances(n, seed)):
        for csi in CsiMode:
            for obj in ObjectiveMode:
                _, tr = alternate(ch, params, csi, obj, cfg)
                if np.any(np.diff(tr.objective) < -1e-9) or not all(tr.feasible):
                    bad.append(i)
                stalls += not tr.converged
    ok = not bad and stalls <= 0.05 * 4 * n
    return Check("alternating loop", ok, f"violations on {sorted(set(bad))}, "
                                         f"{stalls} of {4 * n} runs hit the round cap")


def check_csi_reduction(n: int = 5, seed: int = 3) -> Check:
    worst = 0.0
    for params, ch, _ in _instances(n, seed):
        exact = ChannelSet(ch.h, ch.G_B, ch.g_hat, 0.0, ch.g_hat)
        _, t1 = alternate(exact, params, CsiMode.PERFECT, ObjectiveMode.SEE, SolverConfig(max_sca=20))
        _, t2 = alternate(exact, params, CsiMode.STATISTICAL, ObjectiveMode.SEE, SolverConfig(max_sca=20))
        if len(t1.objective) != len(t2.objective):
            return Check("CSI reduction", False, "trace lengths differ")
        worst = max(worst, float(np.max(np.abs(np.subtract(t1.objective, t2.objective)))))
    return Check("CSI reduction", worst <= 1e-9, f"max trace difference {worst:.2e}")


def check_lmmse(n: int = 10, seed: int = 4) -> Check:
    losses = 0
    for params, ch, rng in _instances(n, seed):
        a = random_feasible(ch, params, rng)
        best = link_terms(a.gamma, a.p, a.C, ch, params, ch.eve(CsiMode.PERFECT)).sinr_b
        for _ in range(100):
            C = rng.standard_normal(a.C.shape) + 1j * rng.standard_normal(a.C.shape)
            C /= np.linalg.norm(C, axis=0)
            other = link_terms(a.gamma, a.p, C, ch, params, ch.eve(CsiMode.PERFECT)).sinr_b
            losses += int(np.any(other > best * (1 + 1e-9)))
    return Check("LMMSE dominance", losses == 0, f"{losses} random filters beat LMMSE")


def check_quantizer(n: int = 20, seed: int = 5) -> Check:
    bad = 0
    for params, ch, rng in _instances(n, seed):
        a = random_feasible(ch, params, rng)
        iv = modulus_interval(r_diag(a.p, ch, params), params.amp_budget)
        for bits in (1, 2, 3, 4):
            q = quantize_gamma(a.gamma, iv, QuantizationConfig(bits, bits))
            bad += int(not np.allclose(quantize_gamma(q, iv, QuantizationConfig(bits, bits)), q))
    return Check("quantizer projection", bad == 0, f"{bad} non-idempotent cases")


def check_feasible_start(n: int = 20, seed: int = 6) -> Check:
    bad = 0
    for params, ch, rng in _instances(n, seed):
        bad += int(not check_feasibility(random_feasible(ch, params, rng), ch, params).feasible)
    return Check("random feasible sampler", bad == 0, f"{bad} infeasible samples")


ALL_CHECKS = (check_feasible_start, check_surrogate_tightness, check_minorant, check_lmmse,
              check_quantizer, check_csi_reduction, check_alternating)


def run_all(seed: int = 0) -> list[Check]:
    return [fn(seed=seed + i) for i, fn in enumerate(ALL_CHECKS)]
