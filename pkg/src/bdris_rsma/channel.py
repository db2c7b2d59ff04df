"""Geometric Rician channel model for a RIS-assisted multi-user downlink.

Positions live in a 2-D plane (meters). The base station and the RIS sit at
fixed points; users are drawn uniformly inside a disk once per seed. Each
link combines a geometric line-of-sight steering component with an i.i.d.
complex Gaussian scattered component under a distance power law.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

TWO_PI = 2.0 * np.pi


@dataclass(frozen=True)
class Geometry:
    """Node placement: BS and RIS positions plus the user disk."""

    bs: tuple[float, float] = (0.0, 0.0)
    ris: tuple[float, float] = (50.0, 10.0)
    disk_center: tuple[float, float] = (50.0, 0.0)
    disk_radius: float = 10.0


@dataclass(frozen=True)
class FadingParams:
    """Rician factors, pathloss exponents and the 1 m reference loss."""

    zeta_br: float = 5.0
    zeta_rm: float = 5.0
    zeta_bm: float = 3.0
    alpha_br: float = 2.0
    alpha_rm: float = 2.5
    alpha_bm: float = 4.0
    pathloss_ref: float = 1e-3


@dataclass(frozen=True)
class ChannelSet:
    r"""One realization of every physical link.

    g_br : (L, K) complex
        BS array -> RIS element channel.
    h_rm : (M, L) complex
        RIS -> user channels, one row per user.
    f_bm : (M, K) complex
        Direct BS -> user channels, one row per user.
    user_pos : (M, 2) float
        Drawn user positions, fixed for the life of the set.
    """

    g_br: np.ndarray
    h_rm: np.ndarray
    f_bm: np.ndarray
    user_pos: np.ndarray

    @property
    def n_ris(self) -> int:
        return self.g_br.shape[0]

    @property
    def n_tx(self) -> int:
        return self.g_br.shape[1]

    @property
    def n_users(self) -> int:
        return self.h_rm.shape[0]


@dataclass(frozen=True)
class EquivalentChannel:
    """Per-user effective channel seen through the RIS for a fixed Theta.

    h : (K,) complex equivalent vector channel.
    H : (K, K) rank-one outer product h h^H.
    delta_sq : spectral-norm radius of the channel-error ball.
    """

    h: np.ndarray
    H: np.ndarray
    delta_sq: float


def pathloss(distance: float, alpha: float, ref: float = 1e-3) -> float:
    """Distance power law ref * d^-alpha; d must be positive."""
    if distance <= 0.0:
        raise ValueError(f"distance must be positive, got {distance}")
    return ref * distance ** (-alpha)


def steering_vector(n: int, progression: float) -> np.ndarray:
    """Uniform linear array response exp(1j * k * progression), k = 0..n-1."""
    if n < 1:
        raise ValueError(f"array size must be positive, got {n}")
    return np.exp(1j * progression * np.arange(n))


def _azimuth(src: np.ndarray, dst: np.ndarray) -> float:
    return float(np.arctan2(dst[1] - src[1], dst[0] - src[0]))


def _steer(n: int, src: np.ndarray, dst: np.ndarray) -> np.ndarray:
    # half-wavelength spacing: phase progression pi * sin(azimuth)
    return steering_vector(n, np.pi * np.sin(_azimuth(src, dst)))


def _rician(rho: float, zeta: float, los: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    nlos = (rng.standard_normal(los.shape) + 1j * rng.standard_normal(los.shape)) / np.sqrt(2.0)
    return np.sqrt(rho) * (
        np.sqrt(zeta / (1.0 + zeta)) * los + np.sqrt(1.0 / (1.0 + zeta)) * nlos
    )


def gen_channels(config, rng: np.random.Generator) -> ChannelSet:
    """Draw one full channel realization for the configured system.

    ``config`` provides L, K, M plus ``geometry`` and ``fading``. The draw
    order (user positions, BS-RIS link, then per-user RIS and direct links)
    is fixed so a given generator state always yields the same set.
    """
    geo: Geometry = config.geometry
    fad: FadingParams = config.fading
    L, K, M = config.L, config.K, config.M

    bs = np.asarray(geo.bs, dtype=float)
    ris = np.asarray(geo.ris, dtype=float)
    center = np.asarray(geo.disk_center, dtype=float)

    radii = geo.disk_radius * np.sqrt(rng.uniform(0.0, 1.0, M))
    angles = rng.uniform(0.0, TWO_PI, M)
    user_pos = center + np.stack([radii * np.cos(angles), radii * np.sin(angles)], axis=1)

    d_br = float(np.linalg.norm(ris - bs))
    los_br = np.outer(_steer(L, ris, bs), _steer(K, bs, ris).conj())
    g_br = _rician(pathloss(d_br, fad.alpha_br, fad.pathloss_ref), fad.zeta_br, los_br, rng)

    h_rm = np.empty((M, L), dtype=complex)
    f_bm = np.empty((M, K), dtype=complex)
    for m in range(M):
        pos = user_pos[m]
        d_rm = float(np.linalg.norm(pos - ris))
        d_bm = float(np.linalg.norm(pos - bs))
        h_rm[m] = _rician(
            pathloss(d_rm, fad.alpha_rm, fad.pathloss_ref), fad.zeta_rm, _steer(L, ris, pos), rng
        )
        f_bm[m] = _rician(
            pathloss(d_bm, fad.alpha_bm, fad.pathloss_ref), fad.zeta_bm, _steer(K, bs, pos), rng
        )
    return ChannelSet(g_br=g_br, h_rm=h_rm, f_bm=f_bm, user_pos=user_pos)


def equivalent_channel(cs: ChannelSet, theta: np.ndarray, rho_tilde: float) -> list[EquivalentChannel]:
    """Per-user equivalent channel h = f + G^H Theta h_r under scattering Theta.

    The error radius is proportional to the channel strength:
    delta_sq = rho_tilde * ||h h^H||_2 = rho_tilde * ||h||^2.
    """
    L = cs.n_ris
    if theta.shape != (L, L):
        raise ValueError(f"theta must be {(L, L)}, got {theta.shape}")
    drift = float(np.linalg.norm(theta @ theta.conj().T - np.eye(L)))
    if drift > 1e-6:
        raise ValueError(f"theta is not unitary: ||Theta Theta^H - I||_F = {drift:.3e}")
    if not 0.0 <= rho_tilde < 1.0:
        raise ValueError(f"rho_tilde must lie in [0, 1), got {rho_tilde}")

    gh_theta = cs.g_br.conj().T @ theta  # (K, L)
    out = []
    for m in range(cs.n_users):
        h = cs.f_bm[m] + gh_theta @ cs.h_rm[m]
        big = np.outer(h, h.conj())
        out.append(EquivalentChannel(h=h, H=big, delta_sq=rho_tilde * float(np.vdot(h, h).real)))
    return out
