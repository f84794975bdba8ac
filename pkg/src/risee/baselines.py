"""Reference allocations: element-wise exhaustive reflection search and the
random-phase, uniform-power heuristic."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .allocator import lmmse_filters
from .fracprog import SolverConfig
from .model import (LN2, Allocation, ChannelSet, CsiMode, ObjectiveMode, RisMode, SystemParams,
                    objective, r_diag)
from .ris_step import GammaStepResult


@dataclass
class _ElementState:
    """Aggregates of the objective that change linearly (or via ``|.|^2``) in one ``gamma_n``."""

    A: np.ndarray        # columns a_m = G_B H_m gamma
    M: np.ndarray        # sum_m p_m a_m a_m^H + W
    lin_e: np.ndarray    # g^H H_m gamma per user
    stat_e: np.ndarray   # error-variance part of the eavesdropper gains
    noise_e: float
    amp: float           # tr((gamma gamma^H - I) R)


class ElementEvaluator:
    """Objective of many candidate values of a single reflection coefficient at once.

    Every candidate is scored with its own LMMSE filters, i.e. with the
    largest legitimate SINRs ``q_k / (1 - q_k)``, ``q_k = p_k a_k^H M^{-1} a_k``.
    """

    def __init__(self, p, channels: ChannelSet, params: SystemParams, csi: CsiMode,
                 obj: ObjectiveMode):
        self.p = np.asarray(p, dtype=float)
        self.params = params
        self.obj = ObjectiveMode(obj)
        self.h = channels.h
        self.G = channels.G_B
        eve = channels.eve(csi)
        self.g, self.s = eve.g, eve.sigma2
        self.R = r_diag(self.p, channels, params)

    def state(self, gamma) -> _ElementState:
        par, p = self.params, self.p
        g2 = np.abs(gamma) ** 2
        A = self.G @ (self.h * gamma[None, :]).T
        Gg = self.G * gamma[None, :]
        M = (A * p) @ A.conj().T + par.sigma2_b * np.eye(self.G.shape[0]) \
            + par.sigma2_ris * (Gg @ Gg.conj().T)
        if par.sigma2_b == 0:
            M = M + 1e-12 * float(np.real(np.trace(M))) * np.eye(self.G.shape[0])
        lin_e = (np.conj(self.g)[None, :] * self.h) @ gamma
        stat_e = self.s * (np.abs(self.h) ** 2 @ g2)
        noise_e = par.sigma2_e + par.sigma2_ris * float((np.abs(self.g) ** 2 + self.s) @ g2)
        amp = float((g2 - 1.0) @ self.R)
        return _ElementState(A, M, lin_e, stat_e, noise_e, amp)

    def values(self, st: _ElementState, gamma, n: int, cands) -> np.ndarray:
        """Objective for ``gamma`` with entry ``n`` replaced by each of ``cands``."""
        par, p = self.params, self.p
        d = cands - gamma[n]
        d2 = np.abs(cands) ** 2 - abs(gamma[n]) ** 2
        gn = self.G[:, n]
        A = st.A[None] + d[:, None, None] * (gn[:, None] * self.h[:, n][None, :])[None]
        M = (A * p) @ np.conj(np.swapaxes(A, 1, 2)) + st.M[None] \
            - ((st.A * p) @ st.A.conj().T)[None] \
            + par.sigma2_ris * d2[:, None, None] * np.outer(gn, gn.conj())[None]
        X = np.linalg.solve(M, A)
        q = np.clip(p * np.real(np.sum(np.conj(A) * X, axis=1)), 0.0, 1.0 - 1e-15)
        sinr_b = q / (1.0 - q)
        lin = st.lin_e[None] + d[:, None] * (np.conj(self.g[n]) * self.h[:, n])[None]
        e = p * (np.abs(lin) ** 2 + st.stat_e[None] + self.s * d2[:, None] * np.abs(self.h[:, n]) ** 2)
        noise_e = st.noise_e + par.sigma2_ris * (abs(self.g[n]) ** 2 + self.s) * d2
        inter_e = e.sum(axis=1, keepdims=True) - e
        rate = np.sum(np.log1p(sinr_b) - np.log1p(e / (noise_e[:, None] + inter_e)), axis=1) / LN2
        if self.obj is ObjectiveMode.SSR:
            return rate
        p_tot = float(np.sum(p)) + par.p_c
        if par.ris_mode is RisMode.ACTIVE:
            p_tot = p_tot + st.amp + d2 * self.R[n]
        return rate / p_tot


def element_candidates(gamma, n: int, R, params: SystemParams, n_phase: int,
                       n_modulus: int) -> np.ndarray:
    """Phase x modulus grid for entry ``n`` spanning its feasible modulus range.

    The range keeps the reflection constraints satisfied with the other
    entries fixed; the current value is always included.
    """
    tr_r = float(np.sum(R))
    rest = float(R @ np.abs(gamma) ** 2) - R[n] * abs(gamma[n]) ** 2
    hi2 = (tr_r + params.amp_budget - rest) / R[n]
    lo2 = (tr_r - rest) / R[n] if params.ris_mode is RisMode.ACTIVE else 0.0
    lo2, hi2 = max(lo2, 0.0), max(hi2, 0.0)
    if lo2 > hi2:
        return np.array([gamma[n]])
    mods = np.linspace(np.sqrt(lo2), np.sqrt(hi2), n_modulus)
    phases = 2 * np.pi * np.arange(n_phase) / n_phase
    grid = (mods[:, None] * np.exp(1j * phases)[None, :]).ravel()
    return np.concatenate([[gamma[n]], grid])


def elementwise_gamma_step(n_phase: int = 16, n_modulus: int = 8):
    """Gamma step that sweeps the entries once, each set to its best grid point.

    Candidates are scored with re-optimized receive filters, so the step is
    meant to be followed by a filter update (as :func:`alternate` does).
    """
    if min(n_phase, n_modulus) < 1:
        raise ValueError("grid sizes must be >= 1")

    def step(alloc: Allocation, channels: ChannelSet, params: SystemParams,
             csi: CsiMode = CsiMode.PERFECT, obj: ObjectiveMode = ObjectiveMode.SEE,
             cfg: SolverConfig = SolverConfig()) -> GammaStepResult:
        ev = ElementEvaluator(alloc.p, channels, params, csi, obj)
        gamma = alloc.gamma.copy()
        values = [objective(gamma, alloc.p, alloc.C, channels, params, csi, obj)]
        for n in range(gamma.size):
            cands = element_candidates(gamma, n, ev.R, params, n_phase, n_modulus)
            vals = ev.values(ev.state(gamma), gamma, n, cands)
            best = int(np.nanargmax(vals))
            if vals[best] > vals[0]:
                gamma[n] = cands[best]
        C = lmmse_filters(alloc.replace(gamma=gamma), channels, params)
        values.append(objective(gamma, alloc.p, C, channels, params, csi, obj))
        return GammaStepResult(gamma, values, 1, True, [])

    return step


def random_allocation(channels: ChannelSet, params: SystemParams, rng) -> Allocation:
    """Uniform random phases, equal moduli filling the amplifier budget and an even
    split ``p_k = P_tmax / K`` of the total budget ``P_tmax = sum(P_max)``."""
    rng = np.random.default_rng(rng)
    p = np.full(channels.K, float(np.sum(params.p_max)) / channels.K)
    R = r_diag(p, channels, params)
    mod2 = 1.0 + params.amp_budget / float(np.sum(R))
    gamma = np.sqrt(mod2) * np.exp(1j * rng.uniform(0.0, 2 * np.pi, channels.N))
    base = Allocation(gamma, p, np.zeros((channels.N_B, channels.K), dtype=complex))
    return base.replace(C=lmmse_filters(base, channels, params))
