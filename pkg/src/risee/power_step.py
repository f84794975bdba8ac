"""Transmit-power step: difference-of-concave surrogate of the secrecy rate in
``p`` and the sequential loop over the power box with ``gamma`` and ``C`` fixed.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import minimize

from .fracprog import RatioProblem, SolverConfig, SolverError, dinkelbach_maximize, project_box_slab
from .model import (LN2, Allocation, ChannelSet, CsiMode, ObjectiveMode, RisMode, SystemParams,
                    check_feasibility, link_terms, objective)


@dataclass(frozen=True)
class PowerCoefficients:
    """Everything the objective needs as a function of ``p`` for fixed ``gamma``, ``C``.

    ``a_b[k, m] = |c_k^H A_m gamma|^2``, ``d_b[k] = c_k^H W c_k``,
    ``a_e[m]`` the eavesdropper gain of user ``m`` and ``d_e`` its noise
    floor (expectations over the CSI error in statistical mode). The total
    power is ``mu @ p + p_c_eq``; the amplifier output over its input is
    ``amp_slope @ p + amp_offset``.
    """

    a_b: np.ndarray
    d_b: np.ndarray
    a_e: np.ndarray
    d_e: float
    mu: np.ndarray
    p_c_eq: float
    amp_slope: np.ndarray
    amp_offset: float
    amp_budget: float
    active: bool

    @property
    def legit(self) -> np.ndarray:
        """Users whose receive filter is non-zero; the others carry no legitimate rate."""
        return self.d_b > 0

    def rates(self, p) -> np.ndarray:
        """Per-user secrecy rates (bit/s/Hz) at ``p``."""
        p = np.asarray(p, dtype=float)
        sig = self.a_b @ p
        own = np.diag(self.a_b) * p
        leg = self.legit
        r = np.zeros(self.d_b.size)
        r[leg] = np.log1p(own[leg] / (self.d_b[leg] + sig[leg] - own[leg])) / LN2
        own_e = self.a_e * p
        r -= np.log1p(own_e / (self.d_e + self.a_e @ p - own_e)) / LN2
        return r

    def power(self, p) -> float:
        return float(self.mu @ p) + self.p_c_eq


def power_coefficients(alloc: Allocation, channels: ChannelSet, params: SystemParams,
                       csi: CsiMode = CsiMode.PERFECT) -> PowerCoefficients:
    gamma, C = alloc.gamma, alloc.C
    eve = channels.eve(csi)
    unit = np.ones(channels.K)
    lt = link_terms(gamma, unit, C, channels, params, eve)
    U = channels.G_B.conj().T @ C
    T = U.conj().T @ (channels.h * gamma[None, :]).T
    a_b = np.abs(T) ** 2
    d_b = lt.noise_b
    a_e = lt.sig_e
    d_e = float(lt.noise_e)
    g2 = np.abs(gamma) ** 2
    slope = (np.abs(channels.h) ** 2) @ (g2 - 1.0)
    offset = params.sigma2_ris * float(np.sum(g2 - 1.0))
    active = params.ris_mode is RisMode.ACTIVE
    if active:
        mu, p_c_eq = 1.0 + slope, offset + params.p_c
    else:
        mu, p_c_eq = np.ones(channels.K), params.p_c
    return PowerCoefficients(a_b, d_b, a_e, d_e, mu, p_c_eq, slope, offset,
                             params.amp_budget, active)


def _concave_parts(p, co: PowerCoefficients):
    """Values and gradients of ``f1`` and ``f2`` with rate ``= f1 - f2``, both concave."""
    p = np.asarray(p, dtype=float)
    leg = co.legit
    ab = co.a_b[leg]
    own = np.diag(co.a_b)[leg]
    idx = np.flatnonzero(leg)
    tot_b = co.d_b[leg] + ab @ p
    oth_b = tot_b - own * p[idx]
    ab_oth = ab.copy()
    ab_oth[np.arange(idx.size), idx] = 0.0
    tot_e = co.d_e + co.a_e @ p
    oth_e = tot_e - co.a_e * p
    K = p.size
    ae_oth = np.broadcast_to(co.a_e, (K, K)).copy()
    np.fill_diagonal(ae_oth, 0.0)

    f1 = float(np.sum(np.log2(tot_b)) + np.sum(np.log2(oth_e)))
    g1 = (ab / tot_b[:, None]).sum(axis=0) / LN2 + (ae_oth / oth_e[:, None]).sum(axis=0) / LN2
    f2 = float(np.sum(np.log2(oth_b)) + K * np.log2(tot_e))
    g2 = (ab_oth / oth_b[:, None]).sum(axis=0) / LN2 + K * co.a_e / (tot_e * LN2)
    return f1, g1, f2, g2


def _denominator(p, co: PowerCoefficients, obj: ObjectiveMode):
    if ObjectiveMode(obj) is ObjectiveMode.SSR:
        return 1.0, np.zeros(p.size)
    return co.power(p), co.mu.copy()


def surrogate_see_power(p, p_bar, co: PowerCoefficients,
                        obj: ObjectiveMode = ObjectiveMode.SEE) -> tuple[float, np.ndarray]:
    """Ratio minorant of the objective in ``p`` (tight at ``p_bar``) and its gradient.

    The subtracted concave part is replaced by its tangent at ``p_bar``; the
    denominator is exact because it is affine in ``p``.
    """
    p = np.asarray(p, dtype=float)
    num, gnum = _surrogate_numerator(p, p_bar, co)
    den, gden = _denominator(p, co, obj)
    return num / den, (gnum * den - num * gden) / den ** 2


def _surrogate_numerator(p, p_bar, co: PowerCoefficients):
    # Evaluated as rate(p_bar) + [f1(p) - f1(p_bar)] - tangent term, with the
    # increment of f1 taken through log1p, so tiny rates keep full precision.
    p = np.asarray(p, dtype=float)
    p_bar = np.asarray(p_bar, dtype=float)
    _, g1, _, _ = _concave_parts(p, co)
    _, _, _, g2b = _concave_parts(p_bar, co)
    dp = p - p_bar
    leg = co.legit
    tot_b = co.d_b[leg] + co.a_b[leg] @ p_bar
    inc = np.sum(np.log1p((co.a_b[leg] @ dp) / tot_b))
    oth_e = co.d_e + co.a_e @ p_bar - co.a_e * p_bar
    inc += np.sum(np.log1p((co.a_e @ dp - co.a_e * dp) / oth_e))
    value = float(np.sum(co.rates(p_bar))) + inc / LN2 - float(g2b @ dp)
    return value, g1 - g2b


@dataclass
class PowerStepResult:
    p: np.ndarray
    values: list[float]
    iterations: int
    converged: bool
    flags: list[str] = field(default_factory=list)


def _sqp_parametric(num, den, project, c, s_lo, s_hi):
    """Exact solver of the concave parametric problem ``max num - lam*den`` by SLSQP.

    The feasible set is ``[0, 1]^n`` intersected with ``s_lo <= c.x <= s_hi``.
    Falls back to the start point whenever the result does not improve it.
    """
    cons = []
    if np.isfinite(s_lo):
        cons.append({"type": "ineq", "fun": lambda x: c @ x - s_lo, "jac": lambda x: c})
    if np.isfinite(s_hi):
        cons.append({"type": "ineq", "fun": lambda x: s_hi - c @ x, "jac": lambda x: -c})

    def solve(lam, x0):
        def fun(x):
            nv, ng = num(x)
            dv, dg = den(x)
            return -(nv - lam * dv), -(ng - lam * dg)
        try:
            res = minimize(fun, x0, jac=True, bounds=[(0.0, 1.0)] * x0.size, constraints=cons,
                           method="SLSQP", options=dict(maxiter=500, ftol=1e-15))
            x = project(res.x)
        except (ValueError, SolverError, np.linalg.LinAlgError):
            return x0
        if not np.all(np.isfinite(x)) or fun(x)[0] > fun(x0)[0]:
            return x0
        return x
    return solve


def optimize_power(alloc: Allocation, channels: ChannelSet, params: SystemParams,
                   csi: CsiMode = CsiMode.PERFECT, obj: ObjectiveMode = ObjectiveMode.SEE,
                   cfg: SolverConfig = SolverConfig(), method: str = "sqp") -> PowerStepResult:
    """Sequential surrogate maximization of the objective over ``p``.

    Powers are optimized in units of ``P_max``. Besides the box, the
    amplifier output constraint of the current ``gamma`` is kept as a linear
    slab in ``p``, so the allocation stays feasible without touching
    ``gamma``. ``method`` picks the parametric solver of each Dinkelbach
    step: ``"sqp"`` (SLSQP, exact for this concave problem) or ``"pga"``
    (projected gradient ascent). With ``cfg.refine`` the sequential loop is
    followed by :func:`refine_power`, recorded as one extra entry of ``values``.
    """
    if method not in ("sqp", "pga"):
        raise ValueError(f"unknown method {method!r}")
    co = power_coefficients(alloc, channels, params, csi)
    res = _sequential_power(alloc, channels, params, csi, obj, cfg, method, co)
    if cfg.refine:
        cand = refine_power(res.p, co, params, obj, cfg.max_refine)
        if cand is not res.p and check_feasibility(alloc.replace(p=cand), channels, params).feasible:
            new = objective(alloc.gamma, cand, alloc.C, channels, params, csi, obj)
            if new > res.values[-1]:
                res.p = cand
                res.values.append(new)
    return res


def _slab(co: PowerCoefficients, scale, free, p):
    """Amplifier slab ``s_lo <= c.x <= s_hi`` in the scaled free coordinates ``x``."""
    c = co.amp_slope[free] * scale[free]
    fixed = co.amp_offset + float(co.amp_slope[~free] @ p[~free])
    if co.active:
        return c, -fixed, co.amp_budget - fixed
    return c, -np.inf, -fixed


def refine_power(p, co: PowerCoefficients, params: SystemParams,
                 obj: ObjectiveMode = ObjectiveMode.SEE, max_iter: int = 200) -> np.ndarray:
    """Quasi-Newton (SLSQP) ascent on the exact objective over the box and amplifier slab.

    Returns the input unless the result is finite and strictly better.
    """
    p = np.asarray(p, dtype=float)
    scale = np.asarray(params.p_max, dtype=float) * np.ones(p.size)
    free = scale > 0
    if not np.any(free):
        return p
    c, s_lo, s_hi = _slab(co, scale, free, p)

    def full(x):
        q = p.copy()
        q[free] = x * scale[free]
        return q

    def neg(x):
        f1, g1, f2, g2 = _concave_parts(full(x), co)
        den, gden = _denominator(full(x), co, obj)
        num, gnum = f1 - f2, g1 - g2
        return -num / den, -((gnum * den - num * gden) / den ** 2)[free] * scale[free]

    cons = []
    if np.isfinite(s_lo):
        cons.append({"type": "ineq", "fun": lambda x: c @ x - s_lo, "jac": lambda x: c})
    if np.isfinite(s_hi):
        cons.append({"type": "ineq", "fun": lambda x: s_hi - c @ x, "jac": lambda x: -c})
    x0 = p[free] / scale[free]
    try:
        res = minimize(neg, x0, jac=True, bounds=[(0.0, 1.0)] * x0.size, constraints=cons,
                       method="SLSQP", options=dict(maxiter=max_iter, ftol=1e-15))
        x = project_box_slab(res.x, 0.0, 1.0, c, s_lo, s_hi)
    except (ValueError, SolverError, np.linalg.LinAlgError):
        return p
    if not np.all(np.isfinite(x)) or not neg(x)[0] < neg(x0)[0]:
        return p
    return full(x)


def _sequential_power(alloc, channels, params, csi, obj, cfg, method, co) -> PowerStepResult:
    p = alloc.p.copy()
    cur = objective(alloc.gamma, p, alloc.C, channels, params, csi, obj)
    values = [cur]
    scale = np.asarray(params.p_max, dtype=float)
    free = scale > 0
    if not np.any(free):
        return PowerStepResult(np.zeros_like(p), values, 0, True)

    c, s_lo, s_hi = _slab(co, scale, free, p)

    def full(x):
        q = p.copy()
        q[free] = x * scale[free]
        return q

    def project(x):
        return project_box_slab(x, 0.0, 1.0, c, s_lo, s_hi)

    flags: list[str] = []
    for it in range(1, cfg.max_sca + 1):
        p_bar = p.copy()

        def num(x):
            v, g = _surrogate_numerator(full(x), p_bar, co)
            return v, g[free] * scale[free]

        def den(x):
            v, g = _denominator(full(x), co, obj)
            return v, g[free] * scale[free]

        x0 = p_bar[free] / scale[free]
        try:
            parametric = _sqp_parametric(num, den, project, c, s_lo, s_hi) if method == "sqp" else None
            res = dinkelbach_maximize(RatioProblem(num, den, project, parametric), x0, cfg)
        except SolverError as exc:
            flags.append(f"power-step: {exc}")
            return PowerStepResult(p, values, it, False, flags)
        flags.extend(f"power-step: {f}" for f in res.flags)
        cand = full(res.x)
        if not check_feasibility(alloc.replace(p=cand), channels, params).feasible:
            flags.append("power-step: infeasible candidate rejected")
            return PowerStepResult(p, values, it, False, flags)
        new = objective(alloc.gamma, cand, alloc.C, channels, params, csi, obj)
        if not new >= cur:
            return PowerStepResult(p, values, it, True, flags)
        p, gain, cur = cand, new - cur, new
        values.append(cur)
        if gain < cfg.eps:
            return PowerStepResult(p, values, it, True, flags)
    flags.append("power-step: max_sca reached")
    return PowerStepResult(p, values, cfg.max_sca, False, flags)
