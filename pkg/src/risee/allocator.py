"""LMMSE receive filters and the alternating (gamma, p, C) optimization loop."""
from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Callable

import numpy as np

from .fracprog import SolverConfig
from .model import (LN2, Allocation, ChannelSet, CsiMode, EveModel, ObjectiveMode, RisMode,
                    SystemParams, check_feasibility, objective, power_total, r_diag, see, ssr)
from .power_step import optimize_power
from .ris_step import GammaStepResult, optimize_gamma, reflection_slsqp

GammaStep = Callable[..., GammaStepResult]


def lmmse_filters(alloc: Allocation, channels: ChannelSet, params: SystemParams,
                  flags: list[str] | None = None) -> np.ndarray:
    """``c_k = sqrt(p_k) (sum_{m != k} p_m a_m a_m^H + W)^{-1} a_k`` with ``a_m = A_m gamma``.

    When ``W`` is singular (no receiver noise) a ``1e-12`` relative ridge is
    added and a note is appended to ``flags``.
    """
    gamma, p = alloc.gamma, alloc.p
    a = channels.G_B @ (channels.h * gamma[None, :]).T          # N_B x K
    Gg = channels.G_B * gamma[None, :]
    W = params.sigma2_b * np.eye(channels.N_B) + params.sigma2_ris * (Gg @ Gg.conj().T)
    full = (a * p) @ a.conj().T + W
    C = np.zeros((channels.N_B, channels.K), dtype=complex)
    ridge = 0.0
    if params.sigma2_b == 0:
        ridge = 1e-12 * max(float(np.real(np.trace(full))), np.finfo(float).tiny)
        if flags is not None:
            flags.append("lmmse: regularized")
    for k in range(channels.K):
        if p[k] == 0:
            continue
        M = full - p[k] * np.outer(a[:, k], a[:, k].conj()) + ridge * np.eye(channels.N_B)
        C[:, k] = np.sqrt(p[k]) * np.linalg.solve(M, a[:, k])
    return C


def _noise_cov(gamma, channels: ChannelSet, params: SystemParams) -> np.ndarray:
    Gg = channels.G_B * gamma[None, :]
    W = params.sigma2_b * np.eye(channels.N_B) + params.sigma2_ris * (Gg @ Gg.conj().T)
    if params.sigma2_b == 0:
        W = W + 1e-12 * max(float(np.real(np.trace(W))), np.finfo(float).tiny) * np.eye(channels.N_B)
    return W


def max_sinr_objective(gamma, p, channels: ChannelSet, params: SystemParams, eve: EveModel,
                       obj: ObjectiveMode) -> tuple[float, np.ndarray]:
    """Objective with every receive filter at its LMMSE optimum, and its gradient in ``gamma``.

    With ``M = sum_m p_m a_m a_m^H + W`` the best legitimate rate of user k is
    ``log2 det M - log2 det(M - p_k a_k a_k^H)``; the gradient is
    ``2 d/d conj(gamma)``, as for the fixed-filter objective.
    """
    gamma = np.asarray(gamma, dtype=complex)
    p = np.asarray(p, dtype=float)
    G, h = channels.G_B, channels.h
    K = h.shape[0]
    A = G @ (h * gamma[None, :]).T                      # N_B x K
    M = (A * p) @ A.conj().T + _noise_cov(gamma, channels, params)
    Minv = np.linalg.inv(M)
    Gc = G.conj()

    MA = Minv @ A
    q = p * np.real(np.sum(A.conj() * MA, axis=0))
    rate = float(-np.sum(np.log2(np.clip(1.0 - q, np.finfo(float).tiny, None))))
    # Inverses of M - p_k a_k a_k^H for every k (Sherman-Morrison), stacked.
    Mk = Minv[None] + (p / (1.0 - q))[:, None, None] * np.einsum("ik,jk->kij", MA, MA.conj())
    Ms = np.concatenate([Minv[None], Mk])              # (K+1) x N_B x N_B
    weights = np.concatenate([p[None, :], p[None, :] * (1.0 - np.eye(K))])
    V = Gc.T[None] @ (Ms @ A)                           # (K+1) x N x K
    lin_part = 2 * np.sum(V * np.conj(h).T[None] * weights[:, None, :], axis=2)
    diag_part = np.real(np.sum(Gc[None] * (Ms @ G[None]), axis=1))
    grads = lin_part + 2 * params.sigma2_ris * diag_part * gamma[None, :]
    active = p > 0
    grad = (np.count_nonzero(active) * grads[0] - np.sum(grads[1:][active], axis=0)) / LN2

    w = eve.user_vectors(h)                             # g^H H_m gamma = w_m^H gamma
    lin = np.conj(w) @ gamma
    habs = np.abs(h) ** 2
    e = p * (np.abs(lin) ** 2 + eve.sigma2 * (habs @ np.abs(gamma) ** 2))
    de = 2 * p[:, None] * (w * lin[:, None] + eve.sigma2 * habs * gamma[None, :])
    nd = eve.noise_diag
    noise = params.sigma2_e + params.sigma2_ris * float(nd @ np.abs(gamma) ** 2)
    dnoise = 2 * params.sigma2_ris * nd * gamma
    tot = noise + e.sum()
    dtot = dnoise + de.sum(axis=0)
    rest = tot - e
    rate -= float(np.sum(np.log1p(e / rest))) / LN2
    grad -= (K * dtot / tot - np.sum((dtot[None, :] - de) / rest[:, None], axis=0)) / LN2

    if ObjectiveMode(obj) is ObjectiveMode.SSR:
        return rate, grad
    R = r_diag(p, channels, params)
    den = float(np.sum(p)) + params.p_c
    d_den = np.zeros(gamma.size)
    if params.ris_mode is RisMode.ACTIVE:
        den += float(R @ (np.abs(gamma) ** 2 - 1.0))
        d_den = 2 * R * gamma
    return rate / den, (grad * den - rate * d_den) / den ** 2


def polish_gamma(alloc: Allocation, channels: ChannelSet, params: SystemParams,
                 csi: CsiMode = CsiMode.PERFECT, obj: ObjectiveMode = ObjectiveMode.SEE,
                 max_iter: int = 200) -> Allocation:
    """Quasi-Newton ascent in ``gamma`` with the filters following at their LMMSE optimum.

    Returns ``alloc`` unchanged unless the result is feasible and strictly
    better; otherwise the new ``gamma`` with its LMMSE filters.
    """
    eve = channels.eve(csi)
    R = r_diag(alloc.p, channels, params)
    cand = reflection_slsqp(lambda g: max_sinr_objective(g, alloc.p, channels, params, eve, obj),
                            alloc.gamma, R, params, max_iter)
    if cand is None:
        return alloc
    new = alloc.replace(gamma=cand)
    new = new.replace(C=lmmse_filters(new, channels, params))
    if not check_feasibility(new, channels, params).feasible:
        return alloc
    before = objective(alloc.gamma, alloc.p, alloc.C, channels, params, csi, obj)
    after = objective(new.gamma, new.p, new.C, channels, params, csi, obj)
    return new if after > before else alloc


@dataclass
class IterateTrace:
    """One row per outer iteration; row 0 is the initial point.

    ``objective`` is the design objective in the design CSI mode
    (bit/s/Hz/J or bit/s/Hz); ``see``/``ssr`` are in bit/J and bit/s.
    """

    objective: list[float] = field(default_factory=list)
    see: list[float] = field(default_factory=list)
    ssr: list[float] = field(default_factory=list)
    power: list[float] = field(default_factory=list)
    min_slack: list[float] = field(default_factory=list)
    feasible: list[bool] = field(default_factory=list)
    gamma_iters: list[int] = field(default_factory=list)
    power_iters: list[int] = field(default_factory=list)
    gamma_values: list[list[float]] = field(default_factory=list)
    power_values: list[list[float]] = field(default_factory=list)
    flags: list[str] = field(default_factory=list)
    converged: bool = False

    @property
    def iterations(self) -> int:
        return len(self.objective) - 1

    def record(self, alloc, channels, params, csi, obj, n_gamma=0, n_power=0, feasible=True):
        rep = check_feasibility(alloc, channels, params)
        self.objective.append(objective(alloc.gamma, alloc.p, alloc.C, channels, params, csi, obj))
        self.see.append(see(alloc, channels, params, csi))
        self.ssr.append(ssr(alloc, channels, params, csi))
        self.power.append(power_total(alloc, channels, params))
        self.min_slack.append(rep.min_slack)
        self.feasible.append(bool(feasible and rep.feasible))
        self.gamma_iters.append(n_gamma)
        self.power_iters.append(n_power)


def initial_allocation(channels: ChannelSet, params: SystemParams) -> Allocation:
    """Unit reflection, full power, LMMSE filters."""
    base = Allocation(np.ones(channels.N, dtype=complex), params.p_max.copy(),
                      np.zeros((channels.N_B, channels.K), dtype=complex))
    return base.replace(C=lmmse_filters(base, channels, params))


def restore_gamma(alloc: Allocation, channels: ChannelSet, params: SystemParams) -> Allocation:
    """Scale ``gamma`` by the scalar closest to 1 that meets the reflection constraints."""
    R = r_diag(alloc.p, channels, params)
    tr_r = float(np.sum(R))
    out = float(R @ np.abs(alloc.gamma) ** 2)
    if out <= 0:
        return alloc.replace(gamma=np.full(channels.N, 1.0 + 0j))
    lo = tr_r / out if params.ris_mode is RisMode.ACTIVE else 0.0
    hi = (tr_r + params.amp_budget) / out
    c2 = min(max(1.0, lo), hi)
    return alloc.replace(gamma=alloc.gamma * np.sqrt(c2))


def _refresh_filters(alloc: Allocation, channels: ChannelSet, params: SystemParams,
                     csi: CsiMode, obj: ObjectiveMode, flags: list[str]) -> Allocation:
    """LMMSE filters for the current ``gamma`` and ``p``.

    LMMSE maximizes every legitimate SINR, so in exact arithmetic this never
    lowers the objective. At very high SNR the solve can lose a few ulps of
    the rate; the old filters are then kept.
    """
    new = alloc.replace(C=lmmse_filters(alloc, channels, params, flags))
    before = objective(alloc.gamma, alloc.p, alloc.C, channels, params, csi, obj)
    after = objective(new.gamma, new.p, new.C, channels, params, csi, obj)
    return new if after >= before or not np.isfinite(before) else alloc


def alternate(channels: ChannelSet, params: SystemParams, csi: CsiMode = CsiMode.PERFECT,
              obj: ObjectiveMode = ObjectiveMode.SEE, cfg: SolverConfig = SolverConfig(),
              gamma_step: GammaStep | None = None,
              init: Allocation | None = None) -> tuple[Allocation, IterateTrace]:
    """Alternate reflection, power and filter updates until the objective settles.

    Filters are refreshed after the reflection step and again after the
    power step. Every step keeps or improves the objective, so the trace is
    non-decreasing. Stops when one full round changes the objective by
    less than ``cfg.eps`` or after ``cfg.max_alt`` rounds.
    """
    channels.check(params)
    csi, obj = CsiMode(csi), ObjectiveMode(obj)
    step = gamma_step or optimize_gamma
    alloc = init if init is not None else initial_allocation(channels, params)
    trace = IterateTrace()
    trace.record(alloc, channels, params, csi, obj)
    for _ in range(cfg.max_alt):
        before = trace.objective[-1]
        # With refinement on, the joint polish below supersedes the fixed-filter one.
        g_res = step(alloc, channels, params, csi, obj, replace(cfg, refine=False))
        trace.flags.extend(g_res.flags)
        trace.gamma_values.append(g_res.values)
        alloc = alloc.replace(gamma=g_res.gamma)
        if cfg.refine:
            # Joint polish of gamma with the filters kept at their LMMSE optimum;
            # removes the slow zigzag between the gamma and filter blocks.
            alloc = polish_gamma(alloc, channels, params, csi, obj, cfg.max_refine)
        ok = check_feasibility(alloc, channels, params).feasible
        # The power step should see filters matched to the new gamma.
        alloc = _refresh_filters(alloc, channels, params, csi, obj, trace.flags)

        p_res = optimize_power(alloc, channels, params, csi, obj, cfg)
        trace.flags.extend(p_res.flags)
        trace.power_values.append(p_res.values)
        alloc = alloc.replace(p=p_res.p)
        if not check_feasibility(alloc, channels, params).feasible:
            alloc = restore_gamma(alloc, channels, params)
            trace.flags.append("gamma rescaled after power step")

        alloc = _refresh_filters(alloc, channels, params, csi, obj, trace.flags)
        trace.record(alloc, channels, params, csi, obj, g_res.iterations, p_res.iterations, ok)
        if abs(trace.objective[-1] - before) < cfg.eps:
            trace.converged = True
            break
    return alloc, trace


@dataclass(frozen=True)
class EvaluationReport:
    see_true: float
    see_stat: float
    ssr_true: float
    ssr_stat: float
    p_tot: float


def evaluate_allocation(alloc: Allocation, channels: ChannelSet,
                        params: SystemParams) -> EvaluationReport:
    """Score one allocation on the realized and on the estimated eavesdropper channel."""
    return EvaluationReport(
        see_true=see(alloc, channels, params, CsiMode.PERFECT),
        see_stat=see(alloc, channels, params, CsiMode.STATISTICAL),
        ssr_true=ssr(alloc, channels, params, CsiMode.PERFECT),
        ssr_stat=ssr(alloc, channels, params, CsiMode.STATISTICAL),
        p_tot=power_total(alloc, channels, params))
