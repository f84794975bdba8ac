"""Reflection-vector step: concave surrogate of the secrecy rate in ``gamma``
and the sequential loop that maximizes SEE (or SSR) over ``gamma`` with
``p`` and ``C`` held fixed.

The surrogate of every user is a concave quadratic in ``gamma``. Summed over
users it is stored as ``c0 + Re{w^H gamma} - gamma^H P gamma``, which lets the
fractional subproblem be solved exactly from one eigendecomposition per
sequential step (see :class:`ExactParametricSolver`).
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy.optimize import brentq, minimize

from .fracprog import (RatioProblem, SolverConfig, SolverError, dinkelbach_maximize,
                       project_annulus_halfspace)
from .model import (LN2, Allocation, ChannelSet, CsiMode, EveModel, ObjectiveMode,
                    RisMode, SystemParams, check_feasibility, objective, r_diag)


# ------------------------------------------------------------ scalar bounds

def log_bound_lower(x, y, x_bar, y_bar):
    """Concave minorant of ``log2(1 + x/y)`` that is tight at ``(x_bar, y_bar)``.

    Returns 0 when ``x_bar = 0`` (the limit of the bound).
    """
    x, y, x_bar, y_bar = np.broadcast_arrays(*(np.asarray(v, dtype=float) for v in (x, y, x_bar, y_bar)))
    out = np.zeros(x.shape)
    ok = x_bar > 0
    s = x_bar[ok] / y_bar[ok]
    out[ok] = np.log2(1 + s) + s * (2 * np.sqrt(x[ok] / x_bar[ok])
                                    - (x[ok] + y[ok]) / (x_bar[ok] + y_bar[ok]) - 1) / LN2
    return out if out.ndim else float(out)


def log_bound_upper(x, y, x_bar, y_bar, sigma2_e):
    """Affine majorant of ``log2(sigma2_e + x + y)``, tight at ``(x_bar, y_bar)``."""
    base = sigma2_e + np.asarray(x_bar, dtype=float) + np.asarray(y_bar, dtype=float)
    out = np.log2(base) + (np.asarray(x) + np.asarray(y) - x_bar - y_bar) / (base * LN2)
    return out if np.ndim(out) else float(out)


def linearized_sqrt(M, gamma, gamma_bar) -> float:
    """First-order expansion of ``sqrt(gamma^H M gamma)`` around ``gamma_bar``.

    A minorant because the square root of a PSD form is a convex norm.
    Returns 0 when the form vanishes at ``gamma_bar``.
    """
    Mg = M @ gamma_bar
    q = float(np.real(np.vdot(gamma_bar, Mg)))
    if q <= 0:
        return 0.0
    return float(np.real(np.vdot(Mg, gamma))) / np.sqrt(q)


# ------------------------------------------------------------ quadratic forms

@dataclass(frozen=True)
class GammaContext:
    """Quadratic forms of the link terms as functions of ``gamma`` for fixed ``p``, ``C``.

    ``t_rows[k, m] @ gamma = c_k^H A_m gamma`` and
    ``eve_rows[m] @ gamma = g^H H_m gamma``.
    """

    p: np.ndarray
    t_rows: np.ndarray      # (K, K, N)
    nb_const: np.ndarray    # sigma2_B ||c_k||^2
    nb_diag: np.ndarray     # (K, N) sigma2_RIS |G_B^H c_k|^2
    eve_rows: np.ndarray    # (K, N)
    eve_diag: np.ndarray    # (K, N) sigma2_g |h_m|^2
    e_noise: np.ndarray     # (N,) sigma2_RIS (|g|^2 + sigma2_g)
    sigma2_e: float

    @classmethod
    def build(cls, p, C, channels: ChannelSet, params: SystemParams, eve: EveModel) -> "GammaContext":
        p = np.asarray(p, dtype=float)
        U = channels.G_B.conj().T @ C
        t_rows = U.conj().T[:, None, :] * channels.h[None, :, :]
        return cls(
            p=p, t_rows=t_rows,
            nb_const=params.sigma2_b * np.sum(np.abs(C) ** 2, axis=0),
            nb_diag=params.sigma2_ris * (np.abs(U) ** 2).T,
            eve_rows=np.conj(eve.g)[None, :] * channels.h,
            eve_diag=eve.sigma2 * np.abs(channels.h) ** 2,
            e_noise=params.sigma2_ris * eve.noise_diag,
            sigma2_e=params.sigma2_e)

    @property
    def K(self) -> int:
        return self.p.size

    def forms(self, gamma):
        """``(x_B, y_B, x_E, y_E)`` per user at ``gamma``; ``y_E`` excludes ``sigma2_E``."""
        g2 = np.abs(gamma) ** 2
        T = self.t_rows @ gamma
        a = np.abs(T) ** 2
        x_b = self.p * np.diag(a)
        y_b = self.nb_const + self.nb_diag @ g2 + a @ self.p - x_b
        e = np.abs(self.eve_rows @ gamma) ** 2 + self.eve_diag @ g2
        x_e = self.p * e
        y_e = np.sum(x_e) - x_e + self.e_noise @ g2
        return x_b, y_b, x_e, y_e

    def rates(self, gamma) -> np.ndarray:
        """Per-user secrecy rates (bit/s/Hz) evaluated through the forms."""
        x_b, y_b, x_e, y_e = self.forms(gamma)
        with np.errstate(divide="ignore", invalid="ignore"):
            sinr_b = np.where(x_b > 0, x_b / y_b, 0.0)
        return (np.log1p(sinr_b) - np.log1p(x_e / (self.sigma2_e + y_e))) / LN2

    def q_apply(self, m: int, v):
        """``Q_m v`` with ``Q_m = H_m^H R_E H_m``."""
        r = self.eve_rows[m]
        return np.conj(r) * (r @ v) + self.eve_diag[m] * v

    def q_total_apply(self, v):
        """``(sum_m p_m Q_m + diag(e_noise)) v``; its form at ``v`` is ``x_E + y_E``."""
        lin = self.eve_rows @ v
        return (np.conj(self.eve_rows).T @ (self.p * lin)
                + (self.p @ self.eve_diag + self.e_noise) * v)

    def q_total_matrix(self) -> np.ndarray:
        R = self.eve_rows
        Q = (np.conj(R).T * self.p) @ R
        Q[np.diag_indices_from(Q)] += self.p @ self.eve_diag + self.e_noise
        return Q

    def q_matrix(self, m: int) -> np.ndarray:
        r = self.eve_rows[m]
        Q = np.outer(np.conj(r), r)
        Q[np.diag_indices_from(Q)] += self.eve_diag[m]
        return Q

    def legit_matrix(self, k: int) -> np.ndarray:
        """Matrix of ``x_B + y_B - sigma2_B ||c_k||^2`` as a form in ``gamma``."""
        R = self.t_rows[k]
        M = (np.conj(R).T * self.p) @ R
        M[np.diag_indices_from(M)] += self.nb_diag[k]
        return M


@dataclass(frozen=True)
class SurrogatePoint:
    """Expansion data of the per-user surrogates at ``gamma_bar``."""

    gamma_bar: np.ndarray
    x_b: np.ndarray
    y_b: np.ndarray
    x_e: np.ndarray
    y_e: np.ndarray
    t_bar: np.ndarray        # c_k^H A_k gamma_bar
    me_gamma: np.ndarray     # (K, N) M_{k,E} gamma_bar
    ctx: GammaContext = field(repr=False)

    @classmethod
    def at(cls, ctx: GammaContext, gamma_bar) -> "SurrogatePoint":
        gamma_bar = np.asarray(gamma_bar, dtype=complex)
        x_b, y_b, x_e, y_e = ctx.forms(gamma_bar)
        t_bar = np.einsum("kkn,n->k", ctx.t_rows, gamma_bar)
        q_tot = ctx.q_total_apply(gamma_bar)
        me = np.stack([q_tot - ctx.p[k] * ctx.q_apply(k, gamma_bar) for k in range(ctx.K)])
        return cls(gamma_bar, x_b, y_b, x_e, y_e, t_bar, me, ctx)


def surrogate_terms(k: int, alloc: Allocation, channels: ChannelSet, params: SystemParams,
                    csi: CsiMode, gamma_bar) -> dict:
    """Expansion scalars and matrices of user ``k`` at ``gamma_bar``.

    Returns ``x_B, y_B, x_E, y_E`` and the PSD matrices ``M_B`` (so that
    ``x_B = gamma^H M_B gamma``) and ``M_E`` (so that ``y_E = gamma^H M_E gamma``).
    """
    ctx = GammaContext.build(alloc.p, alloc.C, channels, params, channels.eve(csi))
    sp = SurrogatePoint.at(ctx, gamma_bar)
    r = ctx.t_rows[k, k]
    M_b = ctx.p[k] * np.outer(np.conj(r), r)
    M_e = ctx.q_total_matrix() - ctx.p[k] * ctx.q_matrix(k)
    return dict(x_B=float(sp.x_b[k]), y_B=float(sp.y_b[k]), x_E=float(sp.x_e[k]),
                y_E=float(sp.y_e[k]), M_B=M_b, M_E=M_e)


def surrogate_secrecy_rate(k: int, gamma, sp: SurrogatePoint) -> tuple[float, np.ndarray]:
    """Concave minorant of user ``k``'s secrecy rate (bit/s/Hz) and its gradient.

    The gradient is ``2 d/d conj(gamma)``. The minorant is built from the
    lower bound on ``log2(1 + x_B/y_B)``, the lower bound on
    ``log2(1 + y_E/sigma2_E)`` and the upper bound on
    ``log2(sigma2_E + x_E + y_E)``, with the square roots linearized.
    """
    ctx = sp.ctx
    gamma = np.asarray(gamma, dtype=complex)
    s2 = ctx.sigma2_e
    x_b, y_b, x_e, y_e = (v[k] for v in ctx.forms(gamma))
    xb0, yb0, xe0, ye0 = sp.x_b[k], sp.y_b[k], sp.x_e[k], sp.y_e[k]
    # rate at the expansion point, kept in log1p form for tiny SINRs
    value = -np.log1p(xe0 / (s2 + ye0)) / LN2
    grad = np.zeros_like(gamma)

    if xb0 > 0:
        sB = xb0 / yb0
        tb = sp.t_bar[k]
        lin = 2 * np.real(np.conj(tb) * (ctx.t_rows[k, k] @ gamma)) / abs(tb) ** 2
        den = xb0 + yb0
        value += (np.log1p(sB) + sB * (lin - (x_b + y_b) / den - 1)) / LN2
        T = ctx.t_rows[k] @ gamma
        d_xy = (2 * np.conj(ctx.t_rows[k]).T @ (ctx.p * T) + 2 * ctx.nb_diag[k] * gamma)
        grad += sB / LN2 * (2 * tb * np.conj(ctx.t_rows[k, k]) / abs(tb) ** 2 - d_xy / den)

    if ye0 > 0:
        sE = ye0 / s2
        me = sp.me_gamma[k]
        lin = 2 * np.real(np.vdot(me, gamma)) / ye0
        value += sE * (lin - (y_e + s2) / (ye0 + s2) - 1) / LN2
        d_ye = 2 * (ctx.q_total_apply(gamma) - ctx.p[k] * ctx.q_apply(k, gamma))
        grad += sE / LN2 * (2 * me / ye0 - d_ye / (ye0 + s2))

    base = s2 + xe0 + ye0
    value -= (x_e + y_e - xe0 - ye0) / (base * LN2)
    grad -= 2 * ctx.q_total_apply(gamma) / (base * LN2)
    return float(value), grad


@dataclass(frozen=True)
class QuadraticModel:
    """``c0 + Re{w^H gamma} - gamma^H P gamma`` with ``P`` Hermitian PSD."""

    c0: float
    w: np.ndarray
    P: np.ndarray

    def value(self, gamma) -> float:
        return float(self.c0 + np.real(np.vdot(self.w, gamma))
                     - np.real(np.vdot(gamma, self.P @ gamma)))

    def grad(self, gamma) -> np.ndarray:
        return self.w - 2 * (self.P @ gamma)


def surrogate_quadratic(sp: SurrogatePoint) -> QuadraticModel:
    """Sum over users of :func:`surrogate_secrecy_rate` as an explicit quadratic."""
    ctx = sp.ctx
    s2 = ctx.sigma2_e
    N = sp.gamma_bar.size
    P = np.zeros((N, N), dtype=complex)
    w = np.zeros(N, dtype=complex)
    c0 = 0.0
    q_tot = ctx.q_total_matrix()
    for k in range(ctx.K):
        xb0, yb0, xe0, ye0 = sp.x_b[k], sp.y_b[k], sp.x_e[k], sp.y_e[k]
        if xb0 > 0:
            sB = xb0 / yb0
            kap = sB / ((xb0 + yb0) * LN2)
            P += kap * ctx.legit_matrix(k)
            tb = sp.t_bar[k]
            w += (2 * sB / LN2) * tb * np.conj(ctx.t_rows[k, k]) / abs(tb) ** 2
            c0 += np.log2(1 + sB) - sB / LN2 - kap * ctx.nb_const[k]
        if ye0 > 0:
            sE = ye0 / s2
            kap = sE / ((ye0 + s2) * LN2)
            P += kap * (q_tot - ctx.p[k] * ctx.q_matrix(k))
            w += (2 * sE / (ye0 * LN2)) * sp.me_gamma[k]
            c0 += np.log2(1 + sE) - sE / LN2 - kap * s2
        base = s2 + xe0 + ye0
        P += q_tot / (base * LN2)
        c0 += np.log2(s2 / base) + (xe0 + ye0) / (base * LN2)
    P = 0.5 * (P + P.conj().T)
    return QuadraticModel(float(c0), w, P)


def objective_gradient(gamma, ctx: GammaContext, R: np.ndarray, params: SystemParams,
                       obj: ObjectiveMode) -> tuple[float, np.ndarray]:
    """Exact objective and its gradient ``2 d/d conj(gamma)`` for fixed ``p`` and ``C``."""
    gamma = np.asarray(gamma, dtype=complex)
    x_b, y_b, x_e, y_e = ctx.forms(gamma)
    s2 = ctx.sigma2_e
    T = ctx.t_rows @ gamma
    q_tot = ctx.q_total_apply(gamma)
    rate = 0.0
    grad = np.zeros_like(gamma)
    for k in range(ctx.K):
        if y_b[k] > 0:
            rate += np.log1p(x_b[k] / y_b[k]) / LN2
            d_all = 2 * (np.conj(ctx.t_rows[k]).T @ (ctx.p * T[k]) + ctx.nb_diag[k] * gamma)
            d_y = d_all - 2 * ctx.p[k] * np.conj(ctx.t_rows[k, k]) * T[k, k]
            grad += (d_all / (x_b[k] + y_b[k]) - d_y / y_b[k]) / LN2
        d_ye = 2 * (q_tot - ctx.p[k] * ctx.q_apply(k, gamma))
        rate -= np.log1p(x_e[k] / (s2 + y_e[k])) / LN2
        grad += (d_ye / (s2 + y_e[k]) - 2 * q_tot / (s2 + x_e[k] + y_e[k])) / LN2
    if ObjectiveMode(obj) is ObjectiveMode.SSR:
        return float(rate), grad
    den = float(np.sum(ctx.p)) + params.p_c
    d_den = np.zeros(gamma.size)
    if params.ris_mode is RisMode.ACTIVE:
        den += float(R @ (np.abs(gamma) ** 2 - 1.0))
        d_den = 2 * R * gamma
    return float(rate / den), (grad * den - rate * d_den) / den ** 2


def reflection_slsqp(value_grad: Callable, gamma, R: np.ndarray, params: SystemParams,
                     max_iter: int = 200, ftol: float = 1e-10) -> np.ndarray | None:
    """SLSQP maximization of ``value_grad`` over the reflection set, from ``gamma``.

    ``value_grad(gamma)`` returns the value and the gradient ``2 d/d conj(gamma)``.
    Works in ``x = sqrt(R/U) * gamma`` so the set is ``tr(R)/U <= ||x||^2 <= 1``
    (upper bound only for a nearly-passive surface). Returns ``None`` on
    numerical failure; the caller checks feasibility and improvement.
    """
    tr_r = float(np.sum(R))
    U = tr_r + params.amp_budget
    s = np.sqrt(R / U)
    N = gamma.size

    def unpack(x):
        return (x[:N] + 1j * x[N:]) / s

    # Scaled by the starting value so that ``ftol`` acts as a relative tolerance.
    scale = max(abs(value_grad(gamma)[0]), np.finfo(float).tiny)

    def fun(x):
        v, g = value_grad(unpack(x))
        g = g / (s * scale)
        return -v / scale, -np.concatenate([g.real, g.imag])

    cons = [{"type": "ineq", "fun": lambda x: 1.0 - x @ x, "jac": lambda x: -2 * x}]
    if params.ris_mode is RisMode.ACTIVE:
        lo = tr_r / U
        cons.append({"type": "ineq", "fun": lambda x: (x @ x - lo) / lo, "jac": lambda x: 2 * x / lo})
    z = s * gamma
    try:
        res = minimize(fun, np.concatenate([z.real, z.imag]), jac=True, constraints=cons,
                       method="SLSQP", options=dict(maxiter=max_iter, ftol=ftol))
    except (ValueError, np.linalg.LinAlgError):
        return None
    return unpack(res.x) if np.all(np.isfinite(res.x)) else None


def refine_gamma(gamma, p, C, channels: ChannelSet, params: SystemParams, csi: CsiMode,
                 obj: ObjectiveMode, max_iter: int = 200) -> np.ndarray:
    """Quasi-Newton (SLSQP) ascent on the exact objective over the exact reflection set.

    Returns the input unless the result is feasible and strictly better.
    """
    ctx = GammaContext.build(p, C, channels, params, channels.eve(csi))
    R = r_diag(p, channels, params)
    cand = reflection_slsqp(lambda g: objective_gradient(g, ctx, R, params, obj),
                            gamma, R, params, max_iter)
    if cand is None or not check_feasibility(Allocation(cand, p, C), channels, params).feasible:
        return gamma
    start = objective(gamma, p, C, channels, params, csi, obj)
    return cand if objective(cand, p, C, channels, params, csi, obj) > start else gamma


# ------------------------------------------------------------ subproblem

@dataclass(frozen=True)
class ScaledSubproblem:
    """Surrogate subproblem in ``z = sqrt(R) * gamma``.

    maximize ``(c0 + Re{w^H z} - z^H P z) / (a_d ||z||^2 + b_d)``
    subject to ``||z||^2 <= U`` and, if ``beta`` is set,
    ``2 Re{z_bar^H z} >= beta``.
    """

    model: QuadraticModel
    a_d: float
    b_d: float
    U: float
    z_bar: np.ndarray
    beta: float | None

    def num(self, x):
        z = x.view(complex)
        return self.model.value(z), self.model.grad(z).view(float)

    def den(self, x):
        z = x.view(complex)
        return self.a_d * float(np.vdot(z, z).real) + self.b_d, (2 * self.a_d * z).view(float)

    def project(self, x):
        if self.beta is None:
            n2 = float(x @ x)
            return x * np.sqrt(self.U / n2) if n2 > self.U else x.copy()
        res = project_annulus_halfspace(x, 1.0, 2 * self.z_bar.view(float), self.beta, self.U)
        return res.x


class ExactParametricSolver:
    """Exact maximizer of ``num(z) - lam * den(z)`` over the ball-halfspace set.

    Stationarity reads ``(P + lam a_d I + mu I) z = w/2 + nu z_bar`` with
    multipliers ``mu >= 0`` (ball) and ``nu >= 0`` (halfspace). One
    eigendecomposition of ``P`` turns the inner solve for ``mu`` into a scalar
    secular equation; the outer multiplier ``nu`` is found by bracketing the
    monotone halfspace residual.
    """

    def __init__(self, sub: ScaledSubproblem):
        self.sub = sub
        lam, V = np.linalg.eigh(sub.model.P)
        self.eig = np.maximum(lam, 0.0)
        self.V = V
        self.rho0 = V.conj().T @ (sub.model.w / 2)
        self.zeta = V.conj().T @ sub.z_bar
        self.fallbacks = 0

    def _inner(self, shifted, rho):
        U = self.sub.U
        nr = float(np.linalg.norm(rho))
        if nr == 0:
            return np.zeros_like(rho)
        with np.errstate(divide="ignore", invalid="ignore"):
            n2 = float(np.sum(np.abs(rho) ** 2 / shifted ** 2))
        if np.min(shifted) > 0 and n2 <= U:
            return rho / shifted

        def phi(mu):
            with np.errstate(divide="ignore"):
                v = float(np.sum(np.abs(rho) ** 2 / (shifted + mu) ** 2))
            return 1.0 / np.sqrt(U) - (1.0 / np.sqrt(v) if v > 0 else np.inf)

        hi = nr / np.sqrt(U)
        mu = brentq(phi, 0.0, hi, xtol=1e-14 * hi, rtol=4 * np.finfo(float).eps, maxiter=200)
        return rho / (shifted + mu)

    def __call__(self, lam: float, x_start: np.ndarray) -> np.ndarray:
        sub = self.sub
        shift = lam * sub.a_d
        if shift < 0 and shift + self.eig.min() < 0:
            # indefinite parametric problem; leave it to the ascent method
            self.fallbacks += 1
            return _pga_parametric(sub, lam, x_start)
        shifted = self.eig + shift
        y = self._inner(shifted, self.rho0)
        if sub.beta is not None:
            def resid(nu):
                yv = self._inner(shifted, self.rho0 + nu * self.zeta)
                return 2 * float(np.real(np.vdot(self.zeta, yv))) - sub.beta
            if resid(0.0) < 0:
                scale = (np.linalg.norm(self.rho0) + shifted.max() * np.linalg.norm(self.zeta)
                         ) / max(np.linalg.norm(self.zeta), 1e-300) + 1e-300
                hi = scale
                for _ in range(200):
                    if resid(hi) >= 0:
                        break
                    hi *= 2
                else:
                    return x_start
                nu = brentq(resid, 0.0, hi, xtol=1e-15 * hi, rtol=4 * np.finfo(float).eps, maxiter=200)
                y = self._inner(shifted, self.rho0 + nu * self.zeta)
        z = self.V @ y
        return sub.project(np.ascontiguousarray(z).view(float))


def _pga_parametric(sub: ScaledSubproblem, lam: float, x_start, cfg=SolverConfig()):
    from .fracprog import projected_gradient_max

    def F(x):
        n, gn = sub.num(x)
        d, gd = sub.den(x)
        return n - lam * d, gn - lam * gd
    return projected_gradient_max(F, sub.project, x_start, cfg).x


def build_subproblem(gamma_bar, p, C, channels: ChannelSet, params: SystemParams,
                     csi: CsiMode, obj: ObjectiveMode) -> tuple[ScaledSubproblem, np.ndarray]:
    """Surrogate subproblem at ``gamma_bar`` and the scaling vector ``sqrt(R)``."""
    ctx = GammaContext.build(p, C, channels, params, channels.eve(csi))
    sp = SurrogatePoint.at(ctx, gamma_bar)
    q = surrogate_quadratic(sp)
    R = r_diag(p, channels, params)
    s = np.sqrt(R)
    tr_r = float(np.sum(R))
    scaled = QuadraticModel(q.c0, q.w / s, q.P / np.outer(s, s))
    active = params.ris_mode is RisMode.ACTIVE
    static = float(np.sum(p)) + params.p_c
    if ObjectiveMode(obj) is ObjectiveMode.SSR:
        a_d, b_d = 0.0, 1.0
    elif active:
        a_d, b_d = 1.0, static - tr_r
    else:
        a_d, b_d = 0.0, static
    z_bar = s * np.asarray(gamma_bar, dtype=complex)
    beta = tr_r + float(np.vdot(z_bar, z_bar).real) if active else None
    U = tr_r + params.amp_budget
    return ScaledSubproblem(scaled, a_d, b_d, U, z_bar, beta), s


# ------------------------------------------------------------ sequential loop

@dataclass
class GammaStepResult:
    gamma: np.ndarray
    values: list[float]
    iterations: int
    converged: bool
    flags: list[str] = field(default_factory=list)


def optimize_gamma(alloc: Allocation, channels: ChannelSet, params: SystemParams,
                   csi: CsiMode = CsiMode.PERFECT, obj: ObjectiveMode = ObjectiveMode.SEE,
                   cfg: SolverConfig = SolverConfig(), method: str = "exact") -> GammaStepResult:
    """Sequential surrogate maximization of the objective over ``gamma``.

    ``method`` selects the parametric solver: ``"exact"`` (eigen/secular) or
    ``"pga"`` (projected gradient ascent). Iterates that would lower the true
    objective are rejected, so the returned value never falls below the
    starting one. With ``cfg.refine`` the sequential loop is followed by
    :func:`refine_gamma`, recorded as one extra entry of ``values``.
    """
    res = _sequential_gamma(alloc, channels, params, csi, obj, cfg, method)
    if cfg.refine:
        cand = refine_gamma(res.gamma, alloc.p, alloc.C, channels, params, csi, obj, cfg.max_refine)
        if cand is not res.gamma:
            res.gamma = cand
            res.values.append(objective(cand, alloc.p, alloc.C, channels, params, csi, obj))
    return res


def _sequential_gamma(alloc, channels, params, csi, obj, cfg, method) -> GammaStepResult:
    if method not in ("exact", "pga"):
        raise ValueError(f"unknown method {method!r}")
    p, C = alloc.p, alloc.C
    gamma = alloc.gamma.copy()
    cur = objective(gamma, p, C, channels, params, csi, obj)
    values = [cur]
    flags: list[str] = []
    for it in range(1, cfg.max_sca + 1):
        sub, s = build_subproblem(gamma, p, C, channels, params, csi, obj)
        parametric = ExactParametricSolver(sub) if method == "exact" else None
        prob = RatioProblem(sub.num, sub.den, sub.project, parametric)
        try:
            res = dinkelbach_maximize(prob, np.ascontiguousarray(sub.z_bar).view(float).copy(), cfg)
        except SolverError as exc:
            flags.append(f"gamma-step: {exc}")
            return GammaStepResult(gamma, values, it, False, flags)
        flags.extend(f"gamma-step: {f}" for f in res.flags)
        cand = res.x.view(complex) / s
        if not check_feasibility(Allocation(cand, p, C), channels, params).feasible:
            flags.append("gamma-step: infeasible candidate rejected")
            return GammaStepResult(gamma, values, it, False, flags)
        new = objective(cand, p, C, channels, params, csi, obj)
        if not new >= cur:
            return GammaStepResult(gamma, values, it, True, flags)
        gamma, gain, cur = cand, new - cur, new
        values.append(cur)
        if gain < cfg.eps:
            return GammaStepResult(gamma, values, it, True, flags)
    flags.append("gamma-step: max_sca reached")
    return GammaStepResult(gamma, values, cfg.max_sca, False, flags)
