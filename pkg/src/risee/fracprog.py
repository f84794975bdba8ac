"""Fractional programming engine: Dinkelbach outer loop, projected-gradient inner loop,
and the projections used by the reflection and power subproblems.

Decision vectors are real. Complex vectors are handled by the callers through
the interleaved ``(Re, Im)`` view ``z.view(float)``; with that embedding the
real gradient of ``f(z)`` is ``(2 df/dconj(z)).view(float)``.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy.optimize import brentq

ValueGrad = Callable[[np.ndarray], tuple[float, np.ndarray]]


class SolverError(RuntimeError):
    pass


@dataclass(frozen=True)
class SolverConfig:
    """Tolerances and iteration caps for every iterative loop.

    ``eps`` is the stopping gap of the sequential (SCA) loops and of the
    alternating orchestrator, measured on the bandwidth-normalized objective
    (bit/s/Hz/J for SEE, bit/s/Hz for SSR). ``refine`` appends a
    quasi-Newton pass on the exact objective to each power step and, in the
    alternating loop, a joint reflection/filter polish to each reflection step.
    """

    eps: float = 1e-4
    max_alt: int = 30
    max_sca: int = 50
    eps_outer: float = 1e-6
    eps_inner: float = 1e-7
    max_outer: int = 50
    max_inner: int = 2000
    armijo_c: float = 1e-4
    armijo_shrink: float = 0.5
    init_step: float = 1.0
    refine: bool = True
    max_refine: int = 200

    def __post_init__(self):
        if min(self.eps, self.eps_outer, self.eps_inner) <= 0:
            raise ValueError("tolerances must be positive")


@dataclass(frozen=True)
class RatioProblem:
    """``max num(x) / den(x)`` over a convex set given by its projection.

    ``parametric`` optionally solves ``max num(x) - lam * den(x)`` exactly,
    given ``(lam, x_start)``; when absent the projected-gradient method is used.
    """

    numerator: ValueGrad
    denominator: ValueGrad
    project: Callable[[np.ndarray], np.ndarray]
    parametric: Callable[[float, np.ndarray], np.ndarray] | None = None


@dataclass
class AscentResult:
    x: np.ndarray
    value: float
    iterations: int
    converged: bool
    flag: str = ""
    values: list[float] = field(default_factory=list, repr=False)


@dataclass
class FracResult:
    x: np.ndarray
    ratio: float
    iterations: int
    converged: bool
    lambdas: list[float] = field(default_factory=list)
    inner_iterations: int = 0
    flags: list[str] = field(default_factory=list)


def _finite(*vals):
    for v in vals:
        if not np.all(np.isfinite(v)):
            raise SolverError("non-finite value returned by callback")


def projected_gradient_max(F: ValueGrad, project, x0: np.ndarray,
                           cfg: SolverConfig = SolverConfig()) -> AscentResult:
    """Maximize a concave ``F`` over a convex set by projected gradient ascent.

    The trial step is a Barzilai-Borwein estimate (``cfg.init_step`` on the
    first iteration); the ascent direction ``project(x + s*grad) - x`` is then
    backtracked with the Armijo rule, so ``F`` never decreases.
    """
    x = project(np.asarray(x0, dtype=float))
    f, g = F(x)
    _finite(f, g)
    values = [f]
    step = cfg.init_step
    tol = cfg.eps_inner * max(1.0, float(np.linalg.norm(g)))
    for it in range(1, cfg.max_inner + 1):
        d = project(x + step * g) - x
        if np.linalg.norm(d) / step <= tol:
            return AscentResult(x, f, it - 1, True, values=values)
        slope = float(g @ d)
        if slope <= 0:
            return AscentResult(x, f, it - 1, True, values=values)
        t = 1.0
        for _ in range(60):
            x_new = x + t * d
            f_new, g_new = F(x_new)
            _finite(f_new, g_new)
            if f_new >= f + cfg.armijo_c * t * slope:
                break
            t *= cfg.armijo_shrink
        else:
            # increase below rounding of F: stationary to working precision
            flag = "" if abs(slope) <= 1e-13 * max(1.0, abs(f)) else "line-search failure"
            return AscentResult(x, f, it, not flag, flag, values)
        s = x_new - x
        y = g - g_new
        x, f, g = x_new, f_new, g_new
        values.append(f)
        sy = float(s @ y)
        step = float(s @ s) / sy if sy > 0 else step * 2.0
        step = min(max(step, 1e-12), 1e12)
    return AscentResult(x, f, cfg.max_inner, False, "max_inner reached", values)


def dinkelbach_maximize(prob: RatioProblem, x0: np.ndarray,
                        cfg: SolverConfig = SolverConfig()) -> FracResult:
    """Dinkelbach iteration for a concave-over-convex ratio.

    Each inner problem is started at the current iterate, so the ratio
    sequence is non-decreasing.
    """
    x = np.asarray(x0, dtype=float)
    n, _ = prob.numerator(x)
    d, _ = prob.denominator(x)
    _finite(n, d)
    if d <= 0:
        raise SolverError("denominator must be positive at the start point")
    lam = n / d
    lambdas = [lam]
    flags: list[str] = []
    inner_total = 0
    for it in range(1, cfg.max_outer + 1):
        if prob.parametric is not None:
            x_new = prob.parametric(lam, x)
        else:
            def F(y, lam=lam):
                nv, ng = prob.numerator(y)
                dv, dg = prob.denominator(y)
                return nv - lam * dv, ng - lam * dg
            res = projected_gradient_max(F, prob.project, x, cfg)
            inner_total += res.iterations
            if res.flag:
                flags.append(res.flag)
            x_new = res.x
        n, _ = prob.numerator(x_new)
        d, _ = prob.denominator(x_new)
        _finite(n, d)
        if d <= 0:
            raise SolverError("denominator became non-positive")
        gap = n - lam * d
        if gap <= 0:
            # no improvement over the current iterate: it is optimal to tolerance
            return FracResult(x, lam, it, True, lambdas, inner_total, flags)
        x, lam = x_new, n / d
        lambdas.append(lam)
        if gap < cfg.eps_outer * d:
            return FracResult(x, lam, it, True, lambdas, inner_total, flags)
    flags.append("not converged")
    return FracResult(x, lam, cfg.max_outer, False, lambdas, inner_total, flags)


# ---------------------------------------------------------------- projections

def project_box(x, lo, hi) -> np.ndarray:
    return np.minimum(np.maximum(np.asarray(x, dtype=float), lo), hi)


def project_box_slab(x, lo, hi, c, s_lo=-np.inf, s_hi=np.inf) -> np.ndarray:
    """Euclidean projection onto ``{lo <= x <= hi, s_lo <= c.x <= s_hi}``.

    The solution is ``clip(x + nu*c)`` for the scalar ``nu`` that puts ``c.x``
    on the violated bound; ``c.clip(x + nu*c)`` is piecewise linear and
    non-decreasing in ``nu``, so the root is located exactly between
    breakpoints.
    """
    x = np.asarray(x, dtype=float)
    c = np.asarray(c, dtype=float)
    y = project_box(x, lo, hi)
    v = float(c @ y)
    if s_lo <= v <= s_hi:
        return y
    target = s_lo if v < s_lo else s_hi
    lo = np.broadcast_to(lo, x.shape)
    hi = np.broadcast_to(hi, x.shape)
    nz = c != 0
    bps = np.concatenate([(lo[nz] - x[nz]) / c[nz], (hi[nz] - x[nz]) / c[nz]])
    bps = np.unique(np.concatenate([bps, [0.0]]))
    vals = np.array([c @ project_box(x + nu * c, lo, hi) for nu in bps])
    if target < vals[0] - 1e-12 * max(1.0, abs(target)) or target > vals[-1] + 1e-12 * max(1.0, abs(target)):
        raise SolverError("box and slab do not intersect")
    j = int(np.searchsorted(vals, target))
    j = min(max(j, 1), len(bps) - 1)
    v0, v1 = vals[j - 1], vals[j]
    nu = bps[j - 1] if v1 == v0 else bps[j - 1] + (target - v0) * (bps[j] - bps[j - 1]) / (v1 - v0)
    return project_box(x + nu * c, lo, hi)


def project_ellipsoid(x, w, U) -> np.ndarray:
    """Euclidean projection onto ``{sum_i w_i x_i^2 <= U}`` (``w > 0``).

    Solves the secular equation ``sum w y^2/(1+lam w)^2 = U`` for the
    multiplier; reduces to radial scaling when ``w`` is constant.
    """
    x = np.asarray(x, dtype=float)
    w = np.broadcast_to(np.asarray(w, dtype=float), x.shape)
    q = float(w @ (x * x))
    if q <= U:
        return x.copy()
    if U <= 0:
        return np.zeros_like(x)
    if np.ptp(w) == 0:
        return x * np.sqrt(U / q)

    def phi(lam):
        return float(w @ (x / (1 + lam * w)) ** 2) - U

    lam_hi = np.sqrt(q / U) / np.min(w)
    lam = brentq(phi, 0.0, lam_hi, xtol=1e-300, rtol=4 * np.finfo(float).eps, maxiter=500)
    y = x / (1 + lam * w)
    q = float(w @ (y * y))
    return y * np.sqrt(U / q) if q > U else y


def project_halfspace(x, a, b) -> np.ndarray:
    """Projection onto ``{a.x >= b}``."""
    x = np.asarray(x, dtype=float)
    r = b - float(a @ x)
    if r <= 0:
        return x.copy()
    return x + (r / float(a @ a)) * a


@dataclass
class ProjectionResult:
    x: np.ndarray
    sweeps: int
    converged: bool


def project_annulus_halfspace(x, w, a, b, U, tol: float = 1e-10, max_sweeps: int = 500,
                              feas_tol: float = 1e-8) -> ProjectionResult:
    """Dykstra projection onto ``{sum w x^2 <= U} ∩ {a.x >= b}``.

    Stops once successive iterates move less than ``tol`` (relative to the
    point's norm) and the point meets both constraints within ``feas_tol``
    (relative). A capped run is reported through ``converged=False``.
    """
    x = np.asarray(x, dtype=float)
    w = np.broadcast_to(np.asarray(w, dtype=float), x.shape)
    a = np.asarray(a, dtype=float)

    def feasible(y):
        return (float(w @ (y * y)) <= U * (1 + feas_tol)
                and float(a @ y) >= b - feas_tol * max(abs(b), 1e-300))

    if feasible(x):
        return ProjectionResult(x.copy(), 0, True)
    y = x.copy()
    p = np.zeros_like(x)
    q = np.zeros_like(x)
    scale = max(float(np.linalg.norm(x)), 1e-300)
    for sweep in range(1, max_sweeps + 1):
        u = project_ellipsoid(y + p, w, U)
        p = y + p - u
        y_new = project_halfspace(u + q, a, b)
        q = u + q - y_new
        moved = float(np.linalg.norm(y_new - y))
        y = y_new
        if moved <= tol * scale and feasible(y):
            return ProjectionResult(y, sweep, True)
    return ProjectionResult(y, max_sweeps, feasible(y))
