"""Receive power splitting and common-rate allocation, both in closed form.

For fixed precoders and scattering, every user's private and common rates are
strictly increasing in its splitting ratio beta (the decoding noise floor
sigma_dec_sq > 0 guarantees this), so the harvest constraint pins the optimum:
each beta sits at the largest value that still meets the per-user energy
target. The common-rate budget equals the smallest worst-case common rate and
is shared deficit-first, remainder split evenly.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .channel import EquivalentChannel
from .metrics import (
    DesignState,
    RobustRateInputs,
    psi_threshold,
    worst_case_common_rate,
    worst_case_private_rate,
    worst_case_received,
)

BETA_MARGIN = 1e-6


class EhInfeasibleError(RuntimeError):
    """Raised when no splitting ratio can meet the harvest target."""

    def __init__(self, user: int, received: float, psi: float):
        super().__init__(
            f"user {user}: worst-case received power {received:.3e} W cannot meet "
            f"the harvest threshold {psi:.3e} W at any beta > 0"
        )
        self.user = user
        self.received = received
        self.psi = psi


class QosInfeasibleError(RuntimeError):
    """Raised when the common budget cannot cover the minimum-rate deficits."""

    def __init__(self, gap: float, total: float, deficits: np.ndarray):
        super().__init__(
            f"common-rate budget {total:.6g} is short of the QoS deficits by {gap:.6g}"
        )
        self.gap = gap
        self.total = total
        self.deficits = deficits


@dataclass(frozen=True)
class SplitSolution:
    """Stage-2 output: splits, common shares, objective, feasibility flag."""

    beta: np.ndarray
    r_common: np.ndarray
    r_private: np.ndarray
    r_common_cap: np.ndarray
    objective: float
    feasible: bool
    detail: str = ""


def beta_upper_bound(received_wc: float, psi: float) -> float:
    """Largest beta meeting (1 - beta) * received >= psi, capped below 1.

    received_wc is the worst-case received RF power (clamped nonnegative by
    the caller). A bound <= 0 means even beta -> 0 cannot harvest enough.
    """
    if received_wc < 0.0:
        raise ValueError(f"received power must be nonnegative, got {received_wc}")
    if psi < 0.0:
        raise ValueError(f"threshold must be nonnegative, got {psi}")
    if psi == 0.0:
        return 1.0 - BETA_MARGIN
    if received_wc == 0.0 or 1.0 - psi / received_wc <= 0.0:
        raise EhInfeasibleError(-1, received_wc, psi)
    return min(1.0 - BETA_MARGIN, 1.0 - psi / received_wc)


def allocate_common_rate(
    r_common_caps: np.ndarray, r_private: np.ndarray, r_min: float
) -> np.ndarray:
    """Split the common budget min_m(caps): QoS deficits first, rest evenly."""
    caps = np.asarray(r_common_caps, dtype=float)
    rp = np.asarray(r_private, dtype=float)
    if caps.shape != rp.shape:
        raise ValueError(f"shape mismatch: {caps.shape} vs {rp.shape}")
    total = float(caps.min())
    if total < 0.0:
        raise ValueError(f"negative common-rate cap {total}")
    deficits = np.maximum(0.0, r_min - rp)
    gap = float(deficits.sum() - total)
    if gap > 1e-12:
        raise QosInfeasibleError(gap, total, deficits)
    return deficits + (total - deficits.sum()) / len(caps)


def optimize_beta(state: DesignState, eq: list[EquivalentChannel], config) -> SplitSolution:
    """Optimal splits for fixed precoders: each beta at its harvest bound.

    Monotonicity makes the box corner optimal; the common budget and the
    deficit-first allocation then maximize the sum rate among QoS-feasible
    points. Infeasibility (harvest or QoS) is reported on the flag rather
    than raised, with the failing user or gap in ``detail``.
    """
    m_users = len(eq)
    psi = psi_threshold(config.target_w, config.eh)
    beta = np.empty(m_users)
    for m in range(m_users):
        probe = RobustRateInputs(
            H=eq[m].H, delta_sq=eq[m].delta_sq, V0=state.V0, V=state.V, beta=1.0,
            sigma_ant_sq=config.sigma_ant_sq, sigma_dec_sq=config.sigma_dec_sq,
        )
        received = worst_case_received(probe)  # beta-independent
        try:
            beta[m] = beta_upper_bound(received, psi)
        except EhInfeasibleError:
            return SplitSolution(
                beta=np.full(m_users, np.nan), r_common=np.zeros(m_users),
                r_private=np.zeros(m_users), r_common_cap=np.zeros(m_users),
                objective=float("nan"), feasible=False,
                detail=f"eh: user {m} received {received:.3e} W < threshold {psi:.3e} W",
            )

    r_private, r_caps = rates_at_beta(state, eq, beta, config)
    try:
        r_common = allocate_common_rate(r_caps, r_private, config.r_min)
    except QosInfeasibleError as err:
        return SplitSolution(
            beta=beta, r_common=np.zeros(m_users), r_private=r_private,
            r_common_cap=r_caps, objective=float("nan"), feasible=False,
            detail=f"qos: deficit gap {err.gap:.6g}",
        )
    return SplitSolution(
        beta=beta, r_common=r_common, r_private=r_private, r_common_cap=r_caps,
        objective=float(r_common.sum() + r_private.sum()), feasible=True,
    )


def rates_at_beta(
    state: DesignState, eq: list[EquivalentChannel], beta: np.ndarray, config
) -> tuple[np.ndarray, np.ndarray]:
    """Worst-case private rates and common-rate caps at given splits."""
    m_users = len(eq)
    r_private = np.empty(m_users)
    r_caps = np.empty(m_users)
    for m in range(m_users):
        x = RobustRateInputs(
            H=eq[m].H, delta_sq=eq[m].delta_sq, V0=state.V0, V=state.V,
            beta=float(beta[m]), sigma_ant_sq=config.sigma_ant_sq,
            sigma_dec_sq=config.sigma_dec_sq,
        )
        r_private[m] = worst_case_private_rate(x, m)
        r_caps[m] = worst_case_common_rate(x)
    return r_private, r_caps


def grid_search_beta(
    state: DesignState, eq: list[EquivalentChannel], config, step: float = 1e-3
) -> tuple[np.ndarray, float]:
    """Exhaustive grid oracle for the stage-2 problem (one or two users).

    Scans the open box (0, 1)^M on the given step, scoring every QoS-feasible
    and harvest-feasible point. Kept deliberately independent of the
    closed-form path so the two can check each other.
    """
    m_users = len(eq)
    if m_users > 2:
        raise ValueError("grid oracle only supports one or two users")
    psi = psi_threshold(config.target_w, config.eh)
    grid = np.arange(step, 1.0, step)

    per_user = []
    for m in range(m_users):
        probe = RobustRateInputs(
            H=eq[m].H, delta_sq=eq[m].delta_sq, V0=state.V0, V=state.V, beta=1.0,
            sigma_ant_sq=config.sigma_ant_sq, sigma_dec_sq=config.sigma_dec_sq,
        )
        received = worst_case_received(probe)
        rp = np.empty(grid.size)
        rc = np.empty(grid.size)
        for i, b in enumerate(grid):
            x = RobustRateInputs(
                H=eq[m].H, delta_sq=eq[m].delta_sq, V0=state.V0, V=state.V,
                beta=float(b), sigma_ant_sq=config.sigma_ant_sq,
                sigma_dec_sq=config.sigma_dec_sq,
            )
            rp[i] = worst_case_private_rate(x, m)
            rc[i] = worst_case_common_rate(x)
        ok = (1.0 - grid) * received >= psi
        per_user.append((rp, rc, ok))

    if m_users == 1:
        rp, rc, ok = per_user[0]
        deficit = np.maximum(0.0, config.r_min - rp)
        obj = np.where(ok & (deficit <= rc), rc + rp, -np.inf)
        best = int(np.argmax(obj))
        return np.array([grid[best]]), float(obj[best])

    rp1, rc1, ok1 = per_user[0]
    rp2, rc2, ok2 = per_user[1]
    total = np.minimum(rc1[:, None], rc2[None, :])
    d1 = np.maximum(0.0, config.r_min - rp1)[:, None]
    d2 = np.maximum(0.0, config.r_min - rp2)[None, :]
    feas = ok1[:, None] & ok2[None, :] & (d1 + d2 <= total)
    obj = np.where(feas, total + rp1[:, None] + rp2[None, :], -np.inf)
    flat = int(np.argmax(obj))
    i, j = np.unravel_index(flat, obj.shape)
    return np.array([grid[i], grid[j]]), float(obj[i, j])
