"""Post-hoc snapping of continuous reflection coefficients to discrete
phase and modulus codebooks, followed by filter re-design."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .allocator import EvaluationReport, evaluate_allocation, lmmse_filters, restore_gamma
from .model import Allocation, ChannelSet, SystemParams, check_feasibility, r_diag


@dataclass(frozen=True)
class QuantizationConfig:
    bits_phase: int
    bits_modulus: int

    def __post_init__(self):
        if min(self.bits_phase, self.bits_modulus) < 1:
            raise ValueError("bit counts must be >= 1")

    @property
    def n_phase(self) -> int:
        return 2 ** self.bits_phase

    @property
    def n_modulus(self) -> int:
        return 2 ** self.bits_modulus


def modulus_interval(R_diag, p_r_max: float, N: int | None = None) -> tuple[float, float]:
    """Range of moduli an equal-modulus feasible reflection vector can take.

    ``lo = sqrt(tr(R) / (R_max N))`` and ``hi = sqrt((tr(R) + P_R,max) / (R_min N))``.
    """
    R = np.asarray(R_diag, dtype=float)
    N = R.size if N is None else N
    if np.any(R <= 0):
        raise ValueError("R diagonal entries must be positive")
    tr_r = float(np.sum(R))
    lo = np.sqrt(tr_r / (R.max() * N))
    hi = np.sqrt((tr_r + p_r_max) / (R.min() * N))
    assert lo <= hi * (1 + 1e-12)
    return float(lo), float(hi)


def phase_codebook(n: int) -> np.ndarray:
    return 2 * np.pi * np.arange(n) / n


def modulus_codebook(interval: tuple[float, float], n: int) -> np.ndarray:
    return np.linspace(interval[0], interval[1], n)


def quantize_gamma(gamma, interval: tuple[float, float], qcfg: QuantizationConfig) -> np.ndarray:
    """Snap each phase and each modulus independently to its nearest codeword."""
    gamma = np.asarray(gamma, dtype=complex)
    n_ph = qcfg.n_phase
    step = 2 * np.pi / n_ph
    idx = np.rint(np.mod(np.angle(gamma), 2 * np.pi) / step).astype(int) % n_ph
    phase = phase_codebook(n_ph)[idx]
    mods = modulus_codebook(interval, qcfg.n_modulus)
    mod = mods[np.argmin(np.abs(np.abs(gamma)[:, None] - mods[None, :]), axis=1)]
    return mod * np.exp(1j * phase)


@dataclass(frozen=True)
class QuantizedResult:
    alloc: Allocation
    report: EvaluationReport
    rescaled: bool


def quantized_evaluate(alloc: Allocation, channels: ChannelSet, params: SystemParams,
                       qcfg: QuantizationConfig) -> QuantizedResult:
    """Quantize ``gamma``, restore feasibility by a scalar if needed, re-derive the filters.

    Powers are kept. The report scores the quantized allocation.
    """
    R = r_diag(alloc.p, channels, params)
    q = alloc.replace(gamma=quantize_gamma(alloc.gamma, modulus_interval(R, params.amp_budget), qcfg))
    rescaled = not check_feasibility(q, channels, params).feasible
    if rescaled:
        q = restore_gamma(q, channels, params)
    q = q.replace(C=lmmse_filters(q, channels, params))
    return QuantizedResult(q, evaluate_allocation(q, channels, params), rescaled)
