"""Scattering-matrix optimization by conjugate gradients on a matrix manifold.

Precoders, splits, and common shares stay fixed here; only the reconfigurable
surface moves. The stage minimizes a partial Lagrangian in which the rate
slack variables are pinned to their defining values at the current iterate
and treated as constants, so the only moving part is the scattering matrix.
With the rate duals refreshed from the pins, the negative Lagrangian gradient
coincides with the gradient of the (unclamped) sum of worst-case rates at the
pin point, which is what makes the stage a genuine ascent method.

The error-ball radii are frozen at stage entry for the Lagrangian and its
gradient. Candidate matrices are scored by an exact repair pass (splits
re-optimized, common shares re-allocated) at the radii each candidate itself
implies, never by the surrogate, so the kept matrix cannot look good only
because its radii went stale.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .channel import ChannelSet, EquivalentChannel, equivalent_channel
from .metrics import LN2, DesignState, psi_threshold
from .numerics import inv_sqrt_psd, random_unitary
from .power_split import optimize_beta

ARMIJO_C = 1e-4
MAX_HALVINGS = 30
RESID_TOL = 1e-6


# ---------------------------------------------------------------------------
# manifolds


class UnitaryManifold:
    """Square matrices with orthonormal columns, fully connected surface."""

    name = "unitary"

    @staticmethod
    def project(theta: np.ndarray, ambient: np.ndarray) -> np.ndarray:
        sym = theta.conj().T @ ambient
        return ambient - theta @ (0.5 * (sym + sym.conj().T))

    @staticmethod
    def retract(theta: np.ndarray, tangent: np.ndarray) -> np.ndarray:
        # polar factor of theta + tangent; for a tangent step this equals
        # (theta + tangent)(I + tangent^H tangent)^(-1/2) but, unlike that
        # form, it also absorbs accumulated unitarity drift in theta itself
        moved = theta + tangent
        return moved @ inv_sqrt_psd(moved.conj().T @ moved)

    @staticmethod
    def random(n: int, rng: np.random.Generator) -> np.ndarray:
        return random_unitary(n, rng)


class DiagonalPhaseManifold:
    """Diagonal unit-modulus scattering, the single-connected benchmark."""

    name = "diagonal"

    @staticmethod
    def project(theta: np.ndarray, ambient: np.ndarray) -> np.ndarray:
        th = np.diag(theta)
        g = np.diag(ambient)
        radial = (th.conj() * g).real * th
        return np.diag(g - radial)

    @staticmethod
    def retract(theta: np.ndarray, tangent: np.ndarray) -> np.ndarray:
        moved = np.diag(theta) + np.diag(tangent)
        mag = np.abs(moved)
        safe = mag > 1e-14
        out = np.where(safe, moved / np.where(safe, mag, 1.0), np.diag(theta))
        return np.diag(out)

    @staticmethod
    def random(n: int, rng: np.random.Generator) -> np.ndarray:
        return np.diag(np.exp(2j * math.pi * rng.uniform(size=n)))


# ---------------------------------------------------------------------------
# frozen stage context


@dataclass(frozen=True)
class ScatteringProblem:
    """Everything stage 3 holds fixed: links, covariances, splits, radii."""

    g_br: np.ndarray
    h_rm: np.ndarray
    f_bm: np.ndarray
    V0: np.ndarray
    V: tuple[np.ndarray, ...]
    beta: np.ndarray
    sigma_bar_sq: np.ndarray
    delta_sq: np.ndarray  # frozen error-ball radii, one per user
    sigma_ant_sq: float
    psi: float
    r_min: float
    tr_v: np.ndarray  # traces of V0, V1, ... in stream order
    v_priv_sum: np.ndarray
    v_all_sum: np.ndarray

    @property
    def n_users(self) -> int:
        return self.beta.size


def freeze_problem(state: DesignState, cs: ChannelSet, config) -> ScatteringProblem:
    """Freeze the stage context at the entry scattering matrix."""
    beta = np.asarray(state.beta, dtype=float)
    h = user_channels(cs, state.theta)
    delta_sq = config.rho_tilde * np.einsum("km,km->m", h.conj(), h).real
    streams = (state.V0,) + tuple(state.V)
    tr_v = np.array([float(np.trace(v).real) for v in streams])
    v_priv = np.sum(np.stack(state.V), axis=0)
    return ScatteringProblem(
        g_br=cs.g_br, h_rm=cs.h_rm, f_bm=cs.f_bm, V0=state.V0, V=tuple(state.V),
        beta=beta, sigma_bar_sq=beta * config.sigma_ant_sq + config.sigma_dec_sq,
        delta_sq=delta_sq, sigma_ant_sq=config.sigma_ant_sq,
        psi=psi_threshold(config.target_w, config.eh), r_min=config.r_min,
        tr_v=tr_v, v_priv_sum=v_priv, v_all_sum=state.V0 + v_priv,
    )


def user_channels(cs: ChannelSet, theta: np.ndarray) -> np.ndarray:
    """Stacked equivalent channels, one column per user."""
    gh = cs.g_br.conj().T @ theta
    return cs.f_bm.T + gh @ cs.h_rm.T


def _scalar_terms(prob: ScatteringProblem, theta: np.ndarray):
    """Per-user quadratic terms x, y, w, z and worst-case received power."""
    h = prob.f_bm.T + (prob.g_br.conj().T @ theta) @ prob.h_rm.T
    streams = (prob.V0,) + prob.V
    s = np.stack([np.einsum("km,kl,lm->m", h.conj(), v, h).real for v in streams])
    m_users = prob.n_users
    beta = prob.beta
    d2 = prob.delta_sq

    s_priv = s[1:]
    sum_priv = s_priv.sum(axis=0)
    tr_priv = prob.tr_v[1:]
    sum_tr_priv = tr_priv.sum()
    own = s_priv[np.arange(m_users), np.arange(m_users)]
    own_tr = tr_priv

    x = beta * (sum_priv + d2 * (sum_tr_priv - 2.0 * own_tr)) + prob.sigma_bar_sq
    y = beta * (sum_priv - own + d2 * (sum_tr_priv - own_tr)) + prob.sigma_bar_sq
    w = beta * (s[0] + sum_priv + d2 * (sum_tr_priv - prob.tr_v[0])) + prob.sigma_bar_sq
    z = beta * (sum_priv + d2 * sum_tr_priv) + prob.sigma_bar_sq
    recv = s.sum(axis=0) - d2 * prob.tr_v.sum() + prob.sigma_ant_sq
    return h, x, y, w, z, recv


# ---------------------------------------------------------------------------
# duals and pinned slacks


@dataclass
class DualState:
    """Multipliers and pinned slack values for the stage Lagrangian.

    lam columns: signal floor, interference cap, slack consistency,
    linearization bookkeeping, minimum rate. mu columns: decodability,
    common signal floor, common interference cap. nu columns: common slack
    consistency, linearization bookkeeping. The bookkeeping entries never
    touch the scattering gradient; they stay at their initial value.
    """

    rho: np.ndarray
    lam: np.ndarray
    mu: np.ndarray
    nu: np.ndarray
    chi: np.ndarray
    pi: np.ndarray
    eta_p: np.ndarray
    eta_c: np.ndarray
    lr0: float = 0.1


def init_duals(prob: ScatteringProblem, theta: np.ndarray) -> DualState:
    m = prob.n_users
    duals = DualState(
        rho=np.zeros(m), lam=np.zeros((m, 5)), mu=np.zeros((m, 3)),
        nu=np.ones((m, 2)), chi=np.ones((m, 2)), pi=np.ones((m, 2)),
        eta_p=np.zeros(m), eta_c=np.zeros(m),
    )
    duals.lam[:, 2] = 1.0
    duals.lam[:, 3] = 1.0
    pin_slacks(duals, prob, theta)
    return duals


def pin_slacks(duals: DualState, prob: ScatteringProblem, theta: np.ndarray) -> None:
    """Pin slacks to their defining values and refresh the rate duals.

    The refreshed multipliers are the reciprocals the logarithm tangents
    would carry, so minimizing the Lagrangian locally maximizes the sum of
    worst-case rates.
    """
    _, x, y, w, z, _ = _scalar_terms(prob, theta)
    if np.any(x <= 0.0) or np.any(y <= 0.0) or np.any(w <= 0.0) or np.any(z <= 0.0):
        raise ValueError("slack pins require strictly positive rate terms")
    duals.chi = np.column_stack([x, y])
    duals.pi = np.column_stack([w, z])
    duals.eta_p = x / y - 1.0
    duals.eta_c = w / z - 1.0
    duals.lam[:, 0] = 1.0 / (LN2 * x)
    duals.lam[:, 1] = 1.0 / (LN2 * y)
    duals.mu[:, 1] = 1.0 / (LN2 * w)
    duals.mu[:, 2] = 1.0 / (LN2 * z)


def lagrangian(theta: np.ndarray, prob: ScatteringProblem, duals: DualState,
               r_common: np.ndarray) -> float:
    """Stage Lagrangian with pinned slacks, minimization orientation."""
    _, x, y, w, z, recv = _scalar_terms(prob, theta)
    if np.any(1.0 + duals.eta_p <= 0.0) or np.any(1.0 + duals.eta_c <= 0.0):
        raise ValueError("pinned slacks must keep rate arguments positive")
    rp = np.log2(1.0 + duals.eta_p)
    rc_cap = np.log2(1.0 + duals.eta_c)
    rc_sum = float(np.sum(r_common))

    val = float(-np.sum(r_common + rp))
    val += float(np.sum(duals.lam[:, 0] * (duals.chi[:, 0] - x)))
    val += float(np.sum(duals.lam[:, 1] * (y - duals.chi[:, 1])))
    val += float(np.sum(duals.mu[:, 1] * (duals.pi[:, 0] - w)))
    val += float(np.sum(duals.mu[:, 2] * (z - duals.pi[:, 1])))
    val += float(np.sum(duals.lam[:, 4] * (prob.r_min - r_common - rp)))
    val += float(np.sum(duals.mu[:, 0] * (rc_sum - rc_cap)))
    val += float(np.sum(duals.lam[:, 2] * ((1.0 + duals.eta_p) * duals.chi[:, 1]
                                           - duals.chi[:, 0])))
    val += float(np.sum(duals.nu[:, 0] * ((1.0 + duals.eta_c) * duals.pi[:, 1]
                                          - duals.pi[:, 0])))
    if prob.psi > 0.0:
        val += float(np.sum(duals.rho * (prob.psi - (1.0 - prob.beta) * recv)) / prob.psi)
    return val


def euclidean_grad(theta: np.ndarray, prob: ScatteringProblem,
                   duals: DualState) -> np.ndarray:
    """Conjugate-coordinate gradient of the pinned Lagrangian."""
    h, *_ = _scalar_terms(prob, theta)
    m_users = prob.n_users
    acc = np.zeros((prob.g_br.shape[1], prob.h_rm.shape[1]), dtype=complex)
    for m in range(m_users):
        b = prob.beta[m]
        v_int = prob.v_priv_sum - prob.V[m]
        w_m = (-duals.lam[m, 0] * b * (prob.V[m] + v_int)
               + duals.lam[m, 1] * b * v_int
               - duals.mu[m, 1] * b * (prob.V0 + prob.v_priv_sum)
               + duals.mu[m, 2] * b * prob.v_priv_sum)
        if prob.psi > 0.0:
            w_m = w_m - (duals.rho[m] * (1.0 - b) / prob.psi) * prob.v_all_sum
        acc += np.outer(w_m @ h[:, m], prob.h_rm[m].conj())
    return prob.g_br @ acc


# ---------------------------------------------------------------------------
# exact rates at the frozen radii


def frozen_equivalents(prob: ScatteringProblem, theta: np.ndarray) -> list[EquivalentChannel]:
    h = prob.f_bm.T + (prob.g_br.conj().T @ theta) @ prob.h_rm.T
    return [EquivalentChannel(h=h[:, m], H=np.outer(h[:, m], h[:, m].conj()),
                              delta_sq=float(prob.delta_sq[m]))
            for m in range(prob.n_users)]


def exact_rates(prob: ScatteringProblem, theta: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Clamped worst-case private rates and common caps at the stage splits."""
    _, x, y, w, z, _ = _scalar_terms(prob, theta)
    rp = np.log2(np.maximum(1.0, x / y))
    ro = np.log2(np.maximum(1.0, w / z))
    return rp, ro


def coupling_residuals(prob: ScatteringProblem, theta: np.ndarray,
                     r_common: np.ndarray) -> dict[str, float]:
    """Signed violations of the coupling constraints at the stage splits."""
    rp, ro = exact_rates(prob, theta)
    _, _, _, _, _, recv = _scalar_terms(prob, theta)
    rc_sum = float(np.sum(r_common))
    out = {
        "qos": float(np.max(prob.r_min - r_common - rp)),
        "decode": float(np.max(rc_sum - ro)),
    }
    if prob.psi > 0.0:
        out["harvest"] = float(np.max(
            (prob.psi - (1.0 - prob.beta) * recv) / prob.psi))
    else:
        out["harvest"] = float("-inf")
    return out


def dual_update(duals: DualState, prob: ScatteringProblem, theta: np.ndarray,
                r_common: np.ndarray, iteration: int) -> np.ndarray:
    """Subgradient step on the violation-driven multipliers and shares."""
    step = duals.lr0 / math.sqrt(max(1, iteration))
    rp, ro = exact_rates(prob, theta)
    _, _, _, _, _, recv = _scalar_terms(prob, theta)
    rc_sum = float(np.sum(r_common))

    if prob.psi > 0.0:
        viol_eh = (prob.psi - (1.0 - prob.beta) * recv) / prob.psi
        duals.rho = np.maximum(0.0, duals.rho + step * viol_eh)
    duals.lam[:, 4] = np.maximum(0.0, duals.lam[:, 4]
                                 + step * (prob.r_min - r_common - rp))
    duals.mu[:, 0] = np.maximum(0.0, duals.mu[:, 0] + step * (rc_sum - ro))
    drift = 1.0 + duals.lam[:, 4] - float(np.sum(duals.mu[:, 0]))
    return np.maximum(0.0, r_common + step * drift)


# ---------------------------------------------------------------------------
# stage driver


@dataclass
class ScatteringResult:
    theta: np.ndarray
    beta: np.ndarray
    r_common: np.ndarray
    objective: float
    trace: list[float]
    grad_norm: float
    n_iter: int
    converged: bool
    detail: str = ""


def _repair(cs: ChannelSet, theta: np.ndarray, state: DesignState, prob, config):
    """Exact feasibility repair at the radii this matrix actually implies."""
    probe = DesignState(theta=theta, beta=state.beta, V0=prob.V0, V=prob.V)
    return optimize_beta(probe, equivalent_channel(cs, theta, config.rho_tilde), config)


def refine_scattering(state: DesignState, cs: ChannelSet, config, manifold=UnitaryManifold,
           duals: DualState | None = None) -> ScatteringResult:
    """Conjugate-gradient descent of the pinned Lagrangian on the manifold."""
    prob = freeze_problem(state, cs, config)
    theta = state.theta
    r_common = np.asarray(state.r_common, dtype=float).copy()
    if duals is None:
        duals = init_duals(prob, theta)
    else:
        pin_slacks(duals, prob, theta)

    entry = _repair(cs, theta, state, prob, config)
    if not entry.feasible:
        return ScatteringResult(theta=theta, beta=state.beta, r_common=r_common,
                            objective=float("nan"), trace=[], grad_norm=float("nan"),
                            n_iter=0, converged=False,
                            detail=f"entry point infeasible ({entry.detail})")
    best = (entry.objective, theta, entry.beta, entry.r_common)
    trace = [entry.objective]

    restart_every = 2 * theta.shape[0]
    g_prev = None
    omega_prev = None
    grad_norm = float("inf")
    converged = False
    detail = ""
    it = 0

    for it in range(1, config.max_cg + 1):
        l_val = lagrangian(theta, prob, duals, r_common)
        g = manifold.project(theta, euclidean_grad(theta, prob, duals))
        grad_norm = float(np.linalg.norm(g))
        resid = coupling_residuals(prob, theta, r_common)
        if grad_norm < config.tol_cg_grad and max(resid.values()) < RESID_TOL:
            converged = True
            break

        if g_prev is None or it % restart_every == 0:
            omega = -g
        else:
            denom = float(np.vdot(g_prev, g_prev).real)
            eps = 0.0 if denom <= 0.0 else max(0.0, float(
                np.vdot(g, g - manifold.project(theta, g_prev)).real) / denom)
            carried = manifold.project(theta, omega_prev)
            # duals move between iterations, so the gradient can jump in a
            # way conjugacy theory never anticipated; keep the momentum term
            # from dwarfing the steepest-descent term
            cap = 2.0 * float(np.linalg.norm(g))
            nc = float(np.linalg.norm(carried))
            if eps * nc > cap and nc > 0.0:
                eps = cap / nc
            omega = -g + eps * carried
            if float(np.vdot(g, omega).real) >= 0.0:
                omega = -g

        slope = 2.0 * float(np.vdot(g, omega).real)
        if slope >= 0.0:
            converged = grad_norm < config.tol_cg_grad
            detail = "no descent direction"
            break
        phi = 1.0
        accepted = False
        for _ in range(MAX_HALVINGS + 1):
            trial = manifold.retract(theta, phi * omega)
            if lagrangian(trial, prob, duals, r_common) <= l_val + ARMIJO_C * phi * slope:
                accepted = True
                break
            phi *= 0.5
        if not accepted:
            detail = "line search stalled"
            break

        theta = trial
        g_prev, omega_prev = g, omega
        pin_slacks(duals, prob, theta)
        r_common = dual_update(duals, prob, theta, r_common, it)

        repaired = _repair(cs, theta, state, prob, config)
        if repaired.feasible:
            trace.append(repaired.objective)
            if repaired.objective > best[0]:
                best = (repaired.objective, theta, repaired.beta, repaired.r_common)

    return ScatteringResult(theta=best[1], beta=best[2], r_common=best[3],
                        objective=best[0], trace=trace, grad_norm=grad_norm,
                        n_iter=it, converged=converged, detail=detail)
