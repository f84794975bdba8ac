"""System model: SINRs, secrecy sum-rate, power consumption, SEE and feasibility.

All powers are linear (W). Rates returned by :func:`ssr` include the bandwidth
factor (bit/s); :func:`see` is in bit/J.

Every diagonal channel matrix ``H_k = diag(h_k)`` is kept as the vector
``h_k``, so all quadratic forms below are evaluated in O(N) per term.
"""
from __future__ import annotations

import enum
from dataclasses import dataclass, field

import numpy as np

LN2 = np.log(2.0)


class ModelError(ValueError):
    """Inconsistent dimensions or degenerate model quantities."""


class RisMode(str, enum.Enum):
    ACTIVE = "active"
    PASSIVE = "nearly_passive"


class CsiMode(str, enum.Enum):
    PERFECT = "perfect"
    STATISTICAL = "statistical"


@dataclass(frozen=True)
class SystemParams:
    K: int
    N_B: int
    N: int
    bandwidth: float
    sigma2_b: float
    sigma2_ris: float
    sigma2_e: float
    p_max: np.ndarray
    p_r_max: float
    ris_mode: RisMode = RisMode.ACTIVE
    p_c_n: float = 1e-3
    p_0_ris: float = 1.0
    p_0: float = 0.1

    def __post_init__(self):
        p_max = np.broadcast_to(np.asarray(self.p_max, dtype=float), (self.K,)).copy()
        p_max.setflags(write=False)
        object.__setattr__(self, "p_max", p_max)
        object.__setattr__(self, "ris_mode", RisMode(self.ris_mode))
        if min(self.K, self.N, self.N_B) < 1:
            raise ModelError("K, N and N_B must be >= 1")
        if self.bandwidth <= 0:
            raise ModelError("bandwidth must be positive")
        powers = [self.sigma2_b, self.sigma2_ris, self.sigma2_e, self.p_r_max,
                  self.p_c_n, self.p_0_ris, self.p_0]
        if min(powers) < 0 or np.any(p_max < 0):
            raise ModelError("powers must be non-negative")

    @property
    def p_c(self) -> float:
        """Total static power ``N*P_c,n + P_0,RIS + P_0``."""
        return self.N * self.p_c_n + self.p_0_ris + self.p_0

    @property
    def amp_budget(self) -> float:
        """RIS amplifier budget; a nearly-passive surface has none."""
        return self.p_r_max if self.ris_mode is RisMode.ACTIVE else 0.0

    def replace(self, **changes) -> "SystemParams":
        from dataclasses import replace
        return replace(self, **changes)


@dataclass(frozen=True)
class ChannelSet:
    """One realization of the propagation channels.

    ``h`` stacks the user->RIS channels as rows (K x N), ``G_B`` is the
    RIS->receiver matrix (N_B x N). The eavesdropper channel is
    ``g_true = g_hat + delta`` with ``delta ~ CN(0, sigma2_g I)``.
    """

    h: np.ndarray
    G_B: np.ndarray
    g_hat: np.ndarray
    sigma2_g: float = 0.0
    g_true: np.ndarray | None = None

    def __post_init__(self):
        h = np.atleast_2d(np.asarray(self.h, dtype=complex))
        G_B = np.atleast_2d(np.asarray(self.G_B, dtype=complex))
        g_hat = np.asarray(self.g_hat, dtype=complex).ravel()
        g_true = g_hat.copy() if self.g_true is None else np.asarray(self.g_true, dtype=complex).ravel()
        if self.sigma2_g < 0:
            raise ModelError("sigma2_g must be non-negative")
        if self.sigma2_g == 0 and not np.array_equal(g_true, g_hat):
            raise ModelError("sigma2_g = 0 requires g_true == g_hat")
        N = h.shape[1]
        if G_B.shape[1] != N or g_hat.shape != (N,) or g_true.shape != (N,):
            raise ModelError(f"inconsistent channel shapes: h{h.shape} G_B{G_B.shape} g{g_hat.shape}")
        for name, arr in (("h", h), ("G_B", G_B), ("g_hat", g_hat), ("g_true", g_true)):
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)

    @property
    def K(self) -> int:
        return self.h.shape[0]

    @property
    def N(self) -> int:
        return self.h.shape[1]

    @property
    def N_B(self) -> int:
        return self.G_B.shape[0]

    def eve(self, csi: CsiMode) -> "EveModel":
        """Eavesdropper channel as seen by the designer under ``csi``."""
        if CsiMode(csi) is CsiMode.PERFECT:
            return EveModel(self.g_true, 0.0)
        return EveModel(self.g_hat, float(self.sigma2_g))

    def check(self, params: SystemParams) -> None:
        if (self.K, self.N, self.N_B) != (params.K, params.N, params.N_B):
            raise ModelError(
                f"channels (K={self.K}, N={self.N}, N_B={self.N_B}) do not match "
                f"params (K={params.K}, N={params.N}, N_B={params.N_B})")


@dataclass(frozen=True)
class EveModel:
    """Eavesdropper channel mean ``g`` and per-element error variance.

    Quadratic forms are the expectations over the error:
    ``E|g^H H_m gamma|^2 = gamma^H H_m^H (g g^H + s I) H_m gamma`` and
    ``E[g^H Gamma Gamma^H g] = sum_n (|g_n|^2 + s) |gamma_n|^2``.
    With ``s = 0`` these are the perfect-CSI quantities.
    """

    g: np.ndarray
    sigma2: float

    @property
    def noise_diag(self) -> np.ndarray:
        return np.abs(self.g) ** 2 + self.sigma2

    def user_vectors(self, h: np.ndarray) -> np.ndarray:
        """Rows ``w_m = g * conj(h_m)`` so that ``g^H H_m gamma = w_m^H gamma``."""
        return self.g[None, :] * np.conj(h)

    def signal_forms(self, h: np.ndarray, gamma: np.ndarray) -> np.ndarray:
        """``gamma^H H_m^H R_E H_m gamma`` for every user m."""
        w = self.user_vectors(h)
        lin = np.conj(w) @ gamma
        out = np.abs(lin) ** 2
        if self.sigma2 > 0:
            out = out + self.sigma2 * (np.abs(h) ** 2 @ (np.abs(gamma) ** 2))
        return out

    def noise_form(self, gamma: np.ndarray) -> float:
        return float(self.noise_diag @ (np.abs(gamma) ** 2))


@dataclass(frozen=True)
class Allocation:
    gamma: np.ndarray
    p: np.ndarray
    C: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "gamma", np.asarray(self.gamma, dtype=complex).ravel())
        object.__setattr__(self, "p", np.asarray(self.p, dtype=float).ravel())
        object.__setattr__(self, "C", np.atleast_2d(np.asarray(self.C, dtype=complex)))

    def replace(self, **changes) -> "Allocation":
        from dataclasses import replace
        return replace(self, **changes)


@dataclass(frozen=True)
class DerivedMatrices:
    """Per-allocation matrices. R and R_E are stored implicitly."""

    A: np.ndarray
    R: np.ndarray
    R_E_diag_shift: float
    R_E_rank1: np.ndarray


def _check_alloc(alloc: Allocation, channels: ChannelSet) -> None:
    K, N, N_B = channels.K, channels.N, channels.N_B
    if alloc.gamma.shape != (N,) or alloc.p.shape != (K,) or alloc.C.shape != (N_B, K):
        raise ModelError(
            f"allocation shapes gamma{alloc.gamma.shape} p{alloc.p.shape} C{alloc.C.shape} "
            f"do not match K={K}, N={N}, N_B={N_B}")


def composite_channel(k: int, channels: ChannelSet) -> np.ndarray:
    """``A_k = G_B diag(h_k)`` (0-based user index)."""
    if not 0 <= k < channels.K:
        raise ModelError(f"user index {k} out of range")
    return channels.G_B * channels.h[k][None, :]


def r_diag(p: np.ndarray, channels: ChannelSet, params: SystemParams) -> np.ndarray:
    """Diagonal of ``R = sum_k p_k H_k^H H_k + sigma2_RIS I``."""
    return np.asarray(p, dtype=float) @ (np.abs(channels.h) ** 2) + params.sigma2_ris


def derived_matrices(alloc: Allocation, channels: ChannelSet, params: SystemParams,
                     csi: CsiMode = CsiMode.PERFECT) -> DerivedMatrices:
    eve = channels.eve(csi)
    A = channels.G_B[None, :, :] * channels.h[:, None, :]
    return DerivedMatrices(A=A, R=r_diag(alloc.p, channels, params),
                           R_E_diag_shift=eve.sigma2, R_E_rank1=eve.g)


@dataclass(frozen=True)
class LinkTerms:
    """Signal/interference/noise split of every user's SINR at both receivers."""

    sig_b: np.ndarray
    int_b: np.ndarray
    noise_b: np.ndarray
    sig_e: np.ndarray
    int_e: np.ndarray
    noise_e: float

    @property
    def sinr_b(self) -> np.ndarray:
        den = self.noise_b + self.int_b
        with np.errstate(divide="ignore", invalid="ignore"):
            out = np.where(self.sig_b > 0, self.sig_b / np.where(den > 0, den, 1.0), 0.0)
        if np.any((self.sig_b > 0) & (den <= 0)):
            raise ModelError("zero SINR denominator with non-zero signal")
        return out

    @property
    def sinr_e(self) -> np.ndarray:
        return self.sig_e / (self.noise_e + self.int_e)


def link_terms(gamma, p, C, channels: ChannelSet, params: SystemParams, eve: EveModel) -> LinkTerms:
    gamma = np.asarray(gamma, dtype=complex)
    p = np.asarray(p, dtype=float)
    U = channels.G_B.conj().T @ C                       # u_k = G_B^H c_k, N x K
    T = U.conj().T @ (channels.h * gamma[None, :]).T    # T[k, m] = c_k^H A_m gamma
    g2 = np.abs(T) ** 2
    sig_b = p * np.diag(g2)
    int_b = g2 @ p - sig_b
    noise_b = (params.sigma2_b * np.sum(np.abs(C) ** 2, axis=0)
               + params.sigma2_ris * (np.abs(gamma) ** 2 @ np.abs(U) ** 2))
    e = eve.signal_forms(channels.h, gamma)
    sig_e = p * e
    int_e = np.sum(sig_e) - sig_e
    noise_e = params.sigma2_e + params.sigma2_ris * eve.noise_form(gamma)
    return LinkTerms(sig_b, int_b, noise_b, sig_e, int_e, noise_e)


def sinr_legit(k: int, alloc: Allocation, channels: ChannelSet, params: SystemParams) -> float:
    """Legitimate-receiver SINR of user ``k`` using the diagonal noise form."""
    _check_alloc(alloc, channels)
    lt = link_terms(alloc.gamma, alloc.p, alloc.C, channels, params, channels.eve(CsiMode.PERFECT))
    return float(lt.sinr_b[k])


def sinr_eve(k: int, alloc: Allocation, channels: ChannelSet, params: SystemParams) -> float:
    """Eavesdropper SINR of user ``k`` on the realized channel ``g_true``."""
    _check_alloc(alloc, channels)
    lt = link_terms(alloc.gamma, alloc.p, alloc.C, channels, params, channels.eve(CsiMode.PERFECT))
    return float(lt.sinr_e[k])


def sinr_eve_stat(k: int, alloc: Allocation, channels: ChannelSet, params: SystemParams) -> float:
    """Eavesdropper SINR with expectations over the CSI error taken inside the log."""
    _check_alloc(alloc, channels)
    lt = link_terms(alloc.gamma, alloc.p, alloc.C, channels, params, channels.eve(CsiMode.STATISTICAL))
    return float(lt.sinr_e[k])


def secrecy_rates(alloc: Allocation, channels: ChannelSet, params: SystemParams,
                  csi: CsiMode = CsiMode.PERFECT) -> np.ndarray:
    """Per-user secrecy rates in bit/s/Hz (not clipped at zero)."""
    lt = link_terms(alloc.gamma, alloc.p, alloc.C, channels, params, channels.eve(csi))
    return (np.log1p(lt.sinr_b) - np.log1p(lt.sinr_e)) / LN2


def ssr(alloc: Allocation, channels: ChannelSet, params: SystemParams,
        csi: CsiMode = CsiMode.PERFECT) -> float:
    """Secrecy sum-rate in bit/s."""
    _check_alloc(alloc, channels)
    return params.bandwidth * float(np.sum(secrecy_rates(alloc, channels, params, csi)))


def sum_rate(alloc: Allocation, channels: ChannelSet, params: SystemParams) -> float:
    """Legitimate sum-rate in bit/s, ignoring the eavesdropper."""
    lt = link_terms(alloc.gamma, alloc.p, alloc.C, channels, params, channels.eve(CsiMode.PERFECT))
    return params.bandwidth * float(np.sum(np.log1p(lt.sinr_b))) / LN2


def amplification_power(gamma, p, channels: ChannelSet, params: SystemParams) -> float:
    """``tr((gamma gamma^H - I) R)``, the RF power added by the RIS amplifier."""
    R = r_diag(p, channels, params)
    return float((np.abs(gamma) ** 2 - 1.0) @ R)


def power_total(alloc: Allocation, channels: ChannelSet, params: SystemParams) -> float:
    p_tot = float(np.sum(alloc.p)) + params.p_c
    if params.ris_mode is RisMode.ACTIVE:
        p_tot += amplification_power(alloc.gamma, alloc.p, channels, params)
    if not p_tot > 0:
        raise ModelError(f"non-positive total power {p_tot}")
    return p_tot


def see(alloc: Allocation, channels: ChannelSet, params: SystemParams,
        csi: CsiMode = CsiMode.PERFECT) -> float:
    """Secrecy energy efficiency in bit/J."""
    return ssr(alloc, channels, params, csi) / power_total(alloc, channels, params)


def gee(alloc: Allocation, channels: ChannelSet, params: SystemParams) -> float:
    """Global energy efficiency (sum-rate over total power) in bit/J."""
    return sum_rate(alloc, channels, params) / power_total(alloc, channels, params)


@dataclass(frozen=True)
class FeasibilityReport:
    feasible: bool
    slack_lower: float
    slack_upper: float
    slack_p_low: np.ndarray = field(repr=False)
    slack_p_high: np.ndarray = field(repr=False)

    @property
    def min_slack(self) -> float:
        return float(min(self.slack_lower, self.slack_upper,
                         np.min(self.slack_p_low), np.min(self.slack_p_high)))


def check_feasibility(alloc: Allocation, channels: ChannelSet, params: SystemParams,
                      tol: float = 1e-8) -> FeasibilityReport:
    """Reflection and power-box constraints with per-constraint slacks.

    Tolerances are relative to the size of each bound, since ``tr(R)`` can be
    many orders of magnitude below one watt. Active surfaces need
    ``tr(R) <= gamma^H R gamma <= P_R,max + tr(R)``; nearly-passive ones only
    the upper bound with zero budget.
    """
    R = r_diag(alloc.p, channels, params)
    tr_r = float(np.sum(R))
    out = float(R @ np.abs(alloc.gamma) ** 2)
    upper = tr_r + params.amp_budget
    slack_upper = upper - out
    slack_lower = out - tr_r if params.ris_mode is RisMode.ACTIVE else np.inf
    slack_p_low = alloc.p.copy()
    slack_p_high = params.p_max - alloc.p
    p_scale = max(float(np.max(params.p_max)), np.finfo(float).tiny)
    feasible = (slack_upper >= -tol * upper
                and slack_lower >= -tol * tr_r
                and np.all(slack_p_low >= -tol * p_scale)
                and np.all(slack_p_high >= -tol * p_scale))
    return FeasibilityReport(bool(feasible), float(slack_lower), float(slack_upper), slack_p_low, slack_p_high)


class ObjectiveMode(str, enum.Enum):
    SEE = "see"
    SSR = "ssr"


def objective(gamma, p, C, channels: ChannelSet, params: SystemParams,
              csi: CsiMode = CsiMode.PERFECT, obj: ObjectiveMode = ObjectiveMode.SEE) -> float:
    """Bandwidth-normalized design objective (bit/s/Hz/J for SEE, bit/s/Hz for SSR).

    This is the quantity every optimizer in the package increases and on which
    its stopping tolerances are measured.
    """
    lt = link_terms(gamma, p, C, channels, params, channels.eve(csi))
    rate = float(np.sum(np.log1p(lt.sinr_b) - np.log1p(lt.sinr_e))) / LN2
    if ObjectiveMode(obj) is ObjectiveMode.SSR:
        return rate
    p_tot = float(np.sum(p)) + params.p_c
    if params.ris_mode is RisMode.ACTIVE:
        p_tot += amplification_power(gamma, p, channels, params)
    if not p_tot > 0:
        raise ModelError(f"non-positive total power {p_tot}")
    return rate / p_tot
