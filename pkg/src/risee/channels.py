"""Random scenario synthesis: node placement, path loss, Rician fading, eavesdropper CSI error."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .model import ChannelSet, SystemParams


@dataclass(frozen=True)
class GeometryConfig:
    cell_radius: float = 50.0
    min_user_ris_dist: float = 20.0
    user_height_range: tuple[float, float] = (1.5, 2.5)
    bs_ris_dist: float = 20.0
    eve_radius_around_bs: float = 30.0
    ris_height: float = 10.0
    bs_height: float = 10.0
    eve_height_range: tuple[float, float] = (1.5, 2.5)

    def __post_init__(self):
        dists = (self.cell_radius, self.min_user_ris_dist, self.bs_ris_dist,
                 self.eve_radius_around_bs, self.ris_height, self.bs_height)
        if min(dists) <= 0:
            raise ValueError("all distances must be positive")
        if self.min_user_ris_dist > self.cell_radius:
            raise ValueError("min_user_ris_dist exceeds cell_radius")
        for lo, hi in (self.user_height_range, self.eve_height_range):
            if lo > hi:
                raise ValueError("height ranges must be ordered")


@dataclass(frozen=True)
class FadingConfig:
    n_h: float = 4.0
    n_gE: float = 4.0
    n_gB: float = 2.0
    K_t: float = 4.0
    K_r: float = 2.0
    noise_psd_dbm: float = -174.0
    noise_figure_db: float = 5.0
    ref_loss_db: float = 30.0

    def __post_init__(self):
        if min(self.n_h, self.n_gE, self.n_gB) < 2:
            raise ValueError("path-loss exponents must be >= 2")
        if min(self.K_t, self.K_r) < 0:
            raise ValueError("Rician factors must be >= 0")


@dataclass(frozen=True)
class NodePositions:
    users: np.ndarray  # (K, 3)
    bs: np.ndarray
    ris: np.ndarray
    eve: np.ndarray


def dbm_to_watt(dbm):
    return 10.0 ** ((np.asarray(dbm, dtype=float) - 30.0) / 10.0)


def watt_to_dbm(w):
    return 10.0 * np.log10(np.asarray(w, dtype=float)) + 30.0


def noise_power(bandwidth: float, psd_dbm_hz: float = -174.0, noise_figure_db: float = 5.0) -> float:
    """Thermal noise power in W over ``bandwidth`` Hz."""
    return float(dbm_to_watt(psd_dbm_hz + noise_figure_db + 10.0 * np.log10(bandwidth)))


def _rng(seed) -> np.random.Generator:
    return seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)


def place_nodes(geom: GeometryConfig, K: int, rng_seed) -> NodePositions:
    """RIS at the origin, BS ``bs_ris_dist`` away along x.

    Users are uniform (in area) over the annulus around the RIS footprint,
    the eavesdropper uniform over the disc around the BS footprint.
    """
    rng = _rng(rng_seed)
    ris = np.array([0.0, 0.0, geom.ris_height])
    bs = np.array([geom.bs_ris_dist, 0.0, geom.bs_height])

    r = np.sqrt(rng.uniform(geom.min_user_ris_dist ** 2, geom.cell_radius ** 2, size=K))
    phi = rng.uniform(0.0, 2 * np.pi, size=K)
    z = rng.uniform(*geom.user_height_range, size=K)
    users = np.column_stack([r * np.cos(phi), r * np.sin(phi), z])

    r_e = geom.eve_radius_around_bs * np.sqrt(rng.uniform())
    phi_e = rng.uniform(0.0, 2 * np.pi)
    eve = np.array([bs[0] + r_e * np.cos(phi_e), bs[1] + r_e * np.sin(phi_e),
                    rng.uniform(*geom.eve_height_range)])
    return NodePositions(users=users, bs=bs, ris=ris, eve=eve)


def steering(dim: int, angle: float, phase0: float = 0.0) -> np.ndarray:
    """Unit-modulus vector with a linear phase progression (half-wavelength spacing)."""
    return np.exp(1j * (phase0 + np.pi * np.arange(dim) * np.sin(angle)))


def rician_vector(dim: int, K_factor: float, rng, los: np.ndarray | None = None) -> np.ndarray:
    """Rician vector with unit average power per entry.

    ``los`` defaults to a steering vector with a random angle and initial
    phase drawn from ``rng``.
    """
    if K_factor < 0:
        raise ValueError("K_factor must be non-negative")
    rng = _rng(rng)
    if los is None:
        los = steering(dim, rng.uniform(-np.pi / 2, np.pi / 2), rng.uniform(0, 2 * np.pi))
    nlos = (rng.standard_normal(dim) + 1j * rng.standard_normal(dim)) / np.sqrt(2)
    return np.sqrt(K_factor / (1 + K_factor)) * los + np.sqrt(1 / (1 + K_factor)) * nlos


def rician_matrix(rows: int, cols: int, K_factor: float, rng) -> np.ndarray:
    """Rician matrix whose LOS part is an outer product of two steering vectors."""
    rng = _rng(rng)
    a_rx = steering(rows, rng.uniform(-np.pi / 2, np.pi / 2))
    a_tx = steering(cols, rng.uniform(-np.pi / 2, np.pi / 2), rng.uniform(0, 2 * np.pi))
    los = np.outer(a_rx, a_tx.conj()).ravel()
    return rician_vector(rows * cols, K_factor, rng, los=los).reshape(rows, cols)


def pathloss(d, exponent: float, ref_loss_db: float = 0.0):
    """Power attenuation ``10^(-ref_loss_db/10) d^-n``; ``ref_loss_db`` is the loss at 1 m."""
    return 10.0 ** (-ref_loss_db / 10.0) * np.asarray(d, dtype=float) ** (-exponent)


def nev(channels: ChannelSet) -> float:
    """Normalized error variance ``N s / (||g_hat||^2 + N s)`` with ``s = sigma2_g``.

    The denominator is the mean energy of ``g = g_hat + delta``, so the
    value lies in ``[0, 1]``.
    """
    err = channels.N * channels.sigma2_g
    if err == 0:
        return 0.0
    return err / (float(np.sum(np.abs(channels.g_hat) ** 2)) + err)


def error_ratio(channels: ChannelSet) -> float:
    """Error-to-estimate energy ratio ``N sigma2_g / ||g_hat||^2`` (unbounded above)."""
    err = channels.N * channels.sigma2_g
    if err == 0:
        return 0.0
    energy = float(np.sum(np.abs(channels.g_hat) ** 2))
    return err / energy if energy > 0 else np.inf


def nev_to_error_ratio(nev_value: float) -> float:
    if not 0 <= nev_value < 1:
        raise ValueError("NEV must lie in [0, 1)")
    return nev_value / (1.0 - nev_value)


def error_ratio_to_nev(ratio: float) -> float:
    if ratio < 0:
        raise ValueError("error ratio must be non-negative")
    return ratio / (1.0 + ratio)


def sigma2_from_error_ratio(g_hat: np.ndarray, ratio: float) -> float:
    if ratio < 0:
        raise ValueError("error ratio must be non-negative")
    return float(ratio * np.sum(np.abs(g_hat) ** 2) / g_hat.size)


def generate_scenario(params: SystemParams, geom: GeometryConfig = GeometryConfig(),
                      fading: FadingConfig = FadingConfig(), rng_seed=0,
                      error_ratio: float = 1.0) -> tuple[ChannelSet, NodePositions]:
    """Draw positions and channels for one trial.

    ``error_ratio`` sets the eavesdropper CSI error through
    ``N sigma2_g = error_ratio * ||g_hat||^2``; ``g_hat`` is drawn before the
    error, so a fixed seed gives the same estimate for every error level.
    Returns the channel set and the node positions it was drawn from.
    """
    rng = _rng(rng_seed)
    pos = place_nodes(geom, params.K, rng)
    K, N, N_B = params.K, params.N, params.N_B

    d_users = np.linalg.norm(pos.users - pos.ris, axis=1)
    beta_h = pathloss(d_users, fading.n_h, fading.ref_loss_db)
    h = np.stack([np.sqrt(beta_h[k]) * rician_vector(N, fading.K_r, rng) for k in range(K)])

    d_bs = np.linalg.norm(pos.bs - pos.ris)
    G_B = np.sqrt(pathloss(d_bs, fading.n_gB, fading.ref_loss_db)) * rician_matrix(N_B, N, fading.K_t, rng)

    d_eve = np.linalg.norm(pos.eve - pos.ris)
    g_hat = np.sqrt(pathloss(d_eve, fading.n_gE, fading.ref_loss_db)) * rician_vector(N, fading.K_r, rng)
    sigma2_g = sigma2_from_error_ratio(g_hat, error_ratio)
    if sigma2_g > 0:
        delta = np.sqrt(sigma2_g / 2) * (rng.standard_normal(N) + 1j * rng.standard_normal(N))
        g_true = g_hat + delta
    else:
        g_true = g_hat
    return ChannelSet(h=h, G_B=G_B, g_hat=g_hat, sigma2_g=sigma2_g, g_true=g_true), pos
