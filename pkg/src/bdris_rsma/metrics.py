"""Worst-case rate and energy-harvesting figures of merit.

Rates are evaluated against the worst channel-estimation error inside a
spectral-norm ball of radius delta_sq: desired-signal terms see H - delta_sq*I
and interference terms see H + delta_sq*I, with the signal trace clamped at
zero. The harvester is a normalized logistic curve; its inverse gives the
minimum received RF power that meets a DC harvest target.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .channel import ChannelSet, EquivalentChannel, equivalent_channel

LN2 = float(np.log(2.0))


# ---------------------------------------------------------------------------
# containers


@dataclass(frozen=True)
class EhParams:
    """Logistic harvester: steepness c (1/W), center d (W), saturation cap (W)."""

    c: float = 6400.0
    d: float = 0.003
    cap: float = 2e-4

    @property
    def dark(self) -> float:
        """Zero-input level of the raw logistic, removed by normalization."""
        return 1.0 / (1.0 + np.exp(self.c * self.d))


@dataclass(frozen=True)
class RobustRateInputs:
    """Everything needed to score one user's worst-case rates.

    H : (K, K) Hermitian equivalent-channel outer product for this user.
    delta_sq : error-ball radius for this user.
    V0 : (K, K) common-stream covariance.
    V : tuple of (K, K) private-stream covariances, all users.
    beta : this user's power-splitting ratio (share routed to decoding).
    sigma_ant_sq / sigma_dec_sq : antenna and decoding noise powers (W).
    """

    H: np.ndarray
    delta_sq: float
    V0: np.ndarray
    V: tuple
    beta: float
    sigma_ant_sq: float
    sigma_dec_sq: float

    @property
    def sigma_bar_sq(self) -> float:
        return self.beta * self.sigma_ant_sq + self.sigma_dec_sq


@dataclass
class DesignState:
    """Current design point of the alternating optimization.

    V0, V : common / private precoder covariances (V may be None before the
    first precoder solve). beta, r_common : per-user splits and common-rate
    shares. theta : RIS scattering matrix.
    """

    theta: np.ndarray
    beta: np.ndarray
    V0: np.ndarray | None = None
    V: tuple | None = None
    r_common: np.ndarray | None = None


@dataclass(frozen=True)
class ResidualReport:
    """Constraint violations of a design: absolute and scale-relative.

    qos/common/power/eh are max-over-users absolute violations; the _rel
    twins divide by the constraint's own scale (minimum rate, power budget,
    harvest threshold, claimed common sum). beta and unitarity are reported
    absolute; both are already dimensionless.
    """

    qos: float
    common: float
    power: float
    eh: float
    beta: float
    unitarity: float
    qos_rel: float
    common_rel: float
    power_rel: float
    eh_rel: float

    def worst(self) -> float:
        return max(self.qos_rel, self.common_rel, self.power_rel, self.eh_rel,
                   self.beta, self.unitarity)


# ---------------------------------------------------------------------------
# worst-case rates


def _rtr(a: np.ndarray, b: np.ndarray) -> float:
    """Re tr(a @ b) without forming the product."""
    return float(np.einsum("ij,ji->", a, b).real)


def worst_case_private_rate(x: RobustRateInputs, m: int) -> float:
    """Worst-case achievable rate of user m's private stream (bits/s/Hz)."""
    k = x.H.shape[0]
    eye = np.eye(k)
    hm = x.H - x.delta_sq * eye
    hp = x.H + x.delta_sq * eye
    signal = max(0.0, x.beta * _rtr(hm, x.V[m]))
    interf = x.beta * sum(_rtr(hp, x.V[i]) for i in range(len(x.V)) if i != m)
    return float(np.log2(1.0 + signal / (interf + x.sigma_bar_sq)))


def worst_case_common_rate(x: RobustRateInputs) -> float:
    """Worst-case rate at which this user can decode the common stream."""
    k = x.H.shape[0]
    eye = np.eye(k)
    hm = x.H - x.delta_sq * eye
    hp = x.H + x.delta_sq * eye
    signal = max(0.0, x.beta * _rtr(hm, x.V0))
    interf = x.beta * sum(_rtr(hp, vi) for vi in x.V)
    return float(np.log2(1.0 + signal / (interf + x.sigma_bar_sq)))


def sum_rate(r_common: np.ndarray, r_private: np.ndarray) -> float:
    """Total of common-rate shares and private rates; all entries must be >= 0."""
    rc = np.asarray(r_common, dtype=float)
    rp = np.asarray(r_private, dtype=float)
    if rc.shape != rp.shape:
        raise ValueError(f"shape mismatch: {rc.shape} vs {rp.shape}")
    if (rc < 0).any() or (rp < 0).any():
        raise ValueError("negative rate entry")
    return float(rc.sum() + rp.sum())


def worst_case_received(x: RobustRateInputs) -> float:
    """Worst-case RF power entering the splitter (W), before the beta split.

    Sum of all stream powers through H - delta_sq*I plus antenna noise,
    clamped at zero.
    """
    k = x.H.shape[0]
    hm = x.H - x.delta_sq * np.eye(k)
    total = _rtr(hm, x.V0) + sum(_rtr(hm, vi) for vi in x.V)
    return max(0.0, total + x.sigma_ant_sq)


# ---------------------------------------------------------------------------
# energy harvesting


def harvested_power(received_w: float, p: EhParams) -> float:
    """Harvested DC power (W) for a given received RF power (W >= 0)."""
    if received_w < 0.0:
        raise ValueError(f"received power must be nonnegative, got {received_w}")
    dark = p.dark
    logistic = p.cap / (1.0 + np.exp(-p.c * (received_w - p.d)))
    return float((logistic - p.cap * dark) / (1.0 - dark))


def psi_threshold(target_w: float, p: EhParams) -> float:
    """Smallest received RF power whose harvest meets ``target_w`` (W).

    Inverts the normalized logistic in closed form. The target must sit
    strictly below the saturation cap, otherwise no finite received power
    reaches it.
    """
    if target_w < 0.0:
        raise ValueError(f"harvest target must be nonnegative, got {target_w}")
    if target_w >= p.cap:
        raise ValueError(f"harvest target {target_w} is not below the saturation cap {p.cap}")
    dark = p.dark
    arg = p.cap / (p.cap * dark + (1.0 - dark) * target_w) - 1.0
    if arg <= 0.0:
        raise ValueError("harvest target outside the invertible range")
    return max(0.0, float(p.d - np.log(arg) / p.c))


# ---------------------------------------------------------------------------
# bounded-error oracle


def error_ball_oracle(
    y: np.ndarray, delta_sq: float, samples: int, rng: np.random.Generator
) -> tuple[float, float]:
    """Sampled maximum of tr(Y Z) over Hermitian ||Z||_2 <= delta_sq.

    For rank-one PSD Y the analytic maximum is delta_sq * tr(Y), attained at
    Z = delta_sq * I. Each sample blends a random unit-spectral-norm
    Hermitian direction with the identity (Z = delta_sq * (t I + (1-t) Zhat),
    t uniform), which stays inside the ball by the triangle inequality and
    sweeps close to the maximizer. Returns (analytic, sampled_max).
    """
    if delta_sq <= 0.0:
        raise ValueError(f"delta_sq must be positive, got {delta_sq}")
    w = np.linalg.eigvalsh(y)
    if w[-1] <= 0.0:
        raise ValueError("Y must be nonzero PSD")
    if w[0] < -1e-10 * w[-1] or (y.shape[0] > 1 and w[-2] > 1e-10 * w[-1]):
        raise ValueError("Y must be rank one within eigenvalue ratio 1e-10")
    n = y.shape[0]
    analytic = delta_sq * float(np.trace(y).real)

    g = rng.standard_normal((samples, n, n)) + 1j * rng.standard_normal((samples, n, n))
    z = 0.5 * (g + np.conj(np.swapaxes(g, 1, 2)))
    norms = np.abs(np.linalg.eigvalsh(z)).max(axis=1)
    t = rng.uniform(0.0, 1.0, samples)
    # tr(Y Z_s) for the blended samples, vectorized over s
    cross = np.einsum("ij,sji->s", y, z).real / norms
    vals = delta_sq * (t * float(np.trace(y).real) + (1.0 - t) * cross)
    return analytic, float(vals.max())


# ---------------------------------------------------------------------------
# feasibility


def feasibility_residuals(state: DesignState, cs: ChannelSet, config) -> ResidualReport:
    """Constraint violations of a full design under the configured scenario."""
    eq = equivalent_channel(cs, state.theta, config.rho_tilde)
    return residuals_from_equivalent(state, eq, config)


def residuals_from_equivalent(
    state: DesignState, eq: list[EquivalentChannel], config
) -> ResidualReport:
    """Same as :func:`feasibility_residuals` for precomputed equivalent channels."""
    m_users = len(eq)
    psi = psi_threshold(config.target_w, config.eh)
    tiny = 1e-30

    qos = common = eh = beta_viol = 0.0
    rc = np.zeros(m_users) if state.r_common is None else np.asarray(state.r_common, float)
    r_priv = np.zeros(m_users)
    r_comm = np.zeros(m_users)
    for m in range(m_users):
        x = RobustRateInputs(
            H=eq[m].H, delta_sq=eq[m].delta_sq, V0=state.V0, V=state.V,
            beta=float(state.beta[m]), sigma_ant_sq=config.sigma_ant_sq,
            sigma_dec_sq=config.sigma_dec_sq,
        )
        r_priv[m] = worst_case_private_rate(x, m)
        r_comm[m] = worst_case_common_rate(x)
        qos = max(qos, config.r_min - (rc[m] + r_priv[m]))
        common = max(common, rc.sum() - r_comm[m])
        received = worst_case_received(x)
        eh = max(eh, psi - (1.0 - x.beta) * received)
        beta_viol = max(beta_viol, -float(state.beta[m]), float(state.beta[m]) - 1.0)
    qos = max(0.0, qos)
    common = max(0.0, common)
    eh = max(0.0, eh)
    beta_viol = max(0.0, beta_viol)

    power = max(0.0, float(np.trace(state.V0).real)
                + sum(float(np.trace(v).real) for v in state.V) - config.p_max)
    ll = state.theta.shape[0]
    unitarity = float(np.linalg.norm(state.theta @ state.theta.conj().T - np.eye(ll)))

    return ResidualReport(
        qos=qos, common=common, power=power, eh=eh, beta=beta_viol, unitarity=unitarity,
        qos_rel=qos / max(config.r_min, tiny),
        common_rel=common / max(rc.sum(), tiny),
        power_rel=power / max(config.p_max, tiny),
        eh_rel=eh / max(psi, tiny),
    )
