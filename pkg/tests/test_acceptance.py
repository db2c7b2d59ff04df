"""End-to-end acceptance gate.

One test per shipped guarantee, numbered and independent. Each prints a
single PASS line with the measured margin so a verbose log doubles as an
acceptance report. Timed criteria assert their own wall-clock budget.
"""

import functools
import time

import numpy as np
import pytest
from numpy.testing import assert_allclose
from scipy.optimize import brentq

from bdris_rsma.channel import ChannelSet, EquivalentChannel, equivalent_channel, gen_channels
from bdris_rsma.harness import (
    SystemConfig,
    dbm_to_watt,
    initial_state,
    run_once,
    sweep,
    trend_means,
)
from bdris_rsma.manifold_opt import (
    DiagonalPhaseManifold,
    UnitaryManifold,
    euclidean_grad,
    freeze_problem,
    init_duals,
    lagrangian,
    refine_scattering,
)
from bdris_rsma.metrics import DesignState, EhParams, error_ball_oracle, harvested_power, psi_threshold
from bdris_rsma.numerics import random_unitary
from bdris_rsma.power_split import grid_search_beta, optimize_beta
from bdris_rsma.precoder_sdp import design_precoders


def report(criterion, text):
    print(f"criterion {criterion}: PASS  {text}")


def cplx(rng, *shape):
    return rng.standard_normal(shape) + 1j * rng.standard_normal(shape)


# ---------------------------------------------------------------------------
# shared fixtures


def synthetic_stage3(seed, n_ris, n_users, n_tx=2):
    """Hand-built unit-scale stage-3 instance with a live harvest term."""
    rng = np.random.default_rng(seed)
    cs = ChannelSet(g_br=cplx(rng, n_ris, n_tx), h_rm=cplx(rng, n_users, n_ris),
                    f_bm=cplx(rng, n_users, n_tx),
                    user_pos=np.zeros((n_users, 2)))
    vs = []
    for _ in range(n_users + 1):
        g = cplx(rng, n_tx, n_tx)
        vs.append(g @ g.conj().T / n_tx)
    state = DesignState(theta=random_unitary(n_ris, rng),
                        beta=np.full(n_users, 0.5), V0=vs[0], V=tuple(vs[1:]),
                        r_common=np.full(n_users, 0.05))
    config = SystemConfig.desk(n_ris=n_ris, n_tx=n_tx, n_users=n_users,
                               rho_tilde=0.02, harvest_dbm=-120.0,
                               sigma_ant_sq=1e-3, sigma_dec_sq=1e-3)
    return freeze_problem(state, cs, config), state, rng


def desk_entry(seed, config):
    """Feasible stage-3 entry point built by the first two stages."""
    rng = np.random.default_rng(seed)
    cs = gen_channels(config, rng)
    state = initial_state(cs, config, rng, aligned=True)
    eq = equivalent_channel(cs, state.theta, config.rho_tilde)
    pre = design_precoders(state, eq, config, rng)
    probe = DesignState(theta=state.theta, beta=state.beta, V0=pre.V0, V=pre.V)
    split = optimize_beta(probe, eq, config)
    assert split.feasible
    return cs, DesignState(theta=state.theta, beta=split.beta, V0=pre.V0,
                           V=pre.V, r_common=split.r_common)


@functools.lru_cache(maxsize=None)
def desk_census(seed):
    return run_once(SystemConfig.desk(), seed)


# ---------------------------------------------------------------------------
# criteria


def test_criterion_01_error_ball_oracle():
    """Sampled maxima of tr(YZ) over the spectral-norm ball never beat the
    closed form delta^2 tr(Y), and the identity matrix attains it."""
    start = time.perf_counter()
    rng = np.random.default_rng(2024)
    worst_ratio = 1.0
    for _ in range(100):
        n = int(rng.integers(1, 5))
        v = cplx(rng, n)
        y = np.outer(v, v.conj())
        delta_sq = float(rng.uniform(0.1, 2.0))
        analytic, sampled = error_ball_oracle(y, delta_sq, 10_000, rng)
        assert sampled <= analytic + 1e-12
        attained = float(np.trace(y @ (delta_sq * np.eye(n))).real)
        assert abs(attained - analytic) <= 1e-12
        worst_ratio = min(worst_ratio, sampled / analytic)
    assert worst_ratio > 0.8  # the sampler actually probes near the maximizer
    elapsed = time.perf_counter() - start
    assert elapsed < 10.0
    report(1, f"100 instances x 1e4 samples, closest ratio {worst_ratio:.4f}, "
              f"{elapsed:.1f} s")


def test_criterion_02_gradient_gate():
    """Analytic scattering gradient against central finite differences."""
    start = time.perf_counter()
    rng = np.random.default_rng(77)
    shapes = [(2, 1), (2, 2), (4, 1), (4, 2)]
    step = 1e-6
    worst = 0.0
    for k in range(10):
        n_ris, n_users = shapes[k % len(shapes)]
        prob, state, _ = synthetic_stage3(300 + k, n_ris, n_users)
        theta = state.theta
        duals = init_duals(prob, theta)
        for col in (0, 1):
            duals.lam[:, col] = rng.uniform(0.0, 1.0, n_users)
        for col in (1, 2):
            duals.mu[:, col] = rng.uniform(0.0, 1.0, n_users)
        duals.rho[:] = rng.uniform(0.0, 1.0, n_users)
        grad = euclidean_grad(theta, prob, duals)
        for _ in range(20):
            d = cplx(rng, n_ris, n_ris)
            d /= np.linalg.norm(d)
            num = (lagrangian(theta + step * d, prob, duals, state.r_common)
                   - lagrangian(theta - step * d, prob, duals, state.r_common)
                   ) / (2.0 * step)
            ana = 2.0 * float(np.vdot(grad, d).real)
            rel = abs(num - ana) / max(1.0, abs(num))
            worst = max(worst, rel)
            assert rel <= 1e-5
    elapsed = time.perf_counter() - start
    assert elapsed < 30.0
    report(2, f"10 instances x 20 directions, worst relative error "
              f"{worst:.2e}, {elapsed:.1f} s")


def test_criterion_03_manifold_integrity():
    """A long CG run must not drift off the manifold, and the tangent
    projections must be idempotent."""
    rng = np.random.default_rng(5)
    for n in (3, 6):
        for manifold in (UnitaryManifold, DiagonalPhaseManifold):
            theta = manifold.random(n, rng)
            ambient = cplx(rng, n, n)
            once = manifold.project(theta, ambient)
            twice = manifold.project(theta, once)
            assert np.linalg.norm(twice - once) <= 1e-12

    # squeeze the gradient tolerance so the run uses its full iteration budget
    config = SystemConfig.desk(max_cg=100, tol_cg_grad=1e-18)
    cs, entry = desk_entry(0, config)
    res = refine_scattering(entry, cs, config)
    drift = float(np.linalg.norm(
        res.theta @ res.theta.conj().T - np.eye(config.n_ris)))
    assert res.n_iter == 100
    assert drift <= 1e-8
    report(3, f"unitarity drift {drift:.2e} after {res.n_iter} CG steps, "
              f"projections idempotent to 1e-12")


def test_criterion_04_sca_monotone_and_convergent():
    """Inner SCA objective never decreases and converges on 90 percent of
    seeded instances inside the iteration budget."""
    config = SystemConfig.desk()  # 3 tx antennas, 2 users, 8 elements
    assert (config.n_tx, config.n_users, config.n_ris) == (3, 2, 8)
    assert config.max_sca == 50 and config.tol_sca == 1e-4
    converged = 0
    worst_drop = 0.0
    for seed in range(20):
        rng = np.random.default_rng(seed)
        cs = gen_channels(config, rng)
        state = initial_state(cs, config, rng, aligned=True)
        eq = equivalent_channel(cs, state.theta, config.rho_tilde)
        res = design_precoders(state, eq, config, rng)
        drops = np.diff(res.trace)
        if drops.size:
            worst_drop = min(worst_drop, float(drops.min()))
        assert (drops >= -1e-6).all()
        converged += res.converged and res.n_iter <= 50
    assert converged >= 18
    report(4, f"{converged}/20 converged within 50 iterations, worst "
              f"per-step drop {worst_drop:.1e}")


def test_criterion_05_scalar_oracle():
    """Single-antenna, single-user, error-free instance against a 1-D grid.

    With unit channel gain 2, unit decoder noise, no antenna noise, and the
    full budget split between the common and private streams, the worst-case
    sum rate equals log2(3) for every full-power split; the solver must land
    there."""
    config = SystemConfig.desk(n_ris=1, n_tx=1, n_users=1, p_max=1.0,
                               rho_tilde=0.0, sigma_ant_sq=0.0,
                               sigma_dec_sq=1.0, harvest_dbm=-300.0,
                               r_min_mbps=0.1)
    assert psi_threshold(config.target_w, config.eh) == 0.0  # harvesting off
    h = np.array([np.sqrt(2.0) + 0j])
    eq = [EquivalentChannel(h=h, H=np.outer(h, h.conj()), delta_sq=0.0)]
    state = DesignState(theta=np.eye(1, dtype=complex), beta=np.array([1.0]))
    res = design_precoders(state, eq, config, np.random.default_rng(0))

    # independent oracle: sweep the fraction t of power on the common stream
    t = np.linspace(0.0, 1.0, 1001)
    rates = (np.log2(1.0 + 2.0 * t / (2.0 * (1.0 - t) + 1.0))
             + np.log2(1.0 + 2.0 * (1.0 - t)))
    oracle = float(rates.max())
    assert_allclose(oracle, np.log2(3.0), rtol=1e-12)
    gap = abs(res.objective - oracle)
    assert gap <= 1e-3
    report(5, f"solver {res.objective:.6f} vs grid {oracle:.6f} "
              f"(log2 3), gap {gap:.1e}")


def test_criterion_06_power_split_matches_grid():
    """Closed-form splits against the exhaustive beta grid on 50 random
    feasible instances."""
    worst_gap = 0.0
    compared = 0
    seed = 0
    while compared < 50:
        rng = np.random.default_rng(seed)
        seed += 1
        config = SystemConfig(n_tx=2, n_users=2, sigma_ant_sq=0.01,
                              sigma_dec_sq=0.1, r_min_mbps=0.05,
                              rho_tilde=0.02)
        eq = []
        for _ in range(config.n_users):
            h = cplx(rng, config.n_tx)
            eq.append(EquivalentChannel(
                h=h, H=np.outer(h, h.conj()),
                delta_sq=config.rho_tilde * float(np.vdot(h, h).real)))
        blocks = []
        for _ in range(config.n_users + 1):
            v = cplx(rng, config.n_tx)
            v *= np.sqrt(config.p_max / (config.n_users + 1) / np.vdot(v, v).real)
            blocks.append(np.outer(v, v.conj()))
        state = DesignState(theta=np.eye(config.n_ris, dtype=complex),
                            beta=np.full(config.n_users, 0.5),
                            V0=blocks[0], V=tuple(blocks[1:]))
        closed = optimize_beta(state, eq, config)
        if not closed.feasible:
            continue
        _, grid_obj = grid_search_beta(state, eq, config, step=1e-3)
        gap = abs(closed.objective - grid_obj)
        assert gap <= 1e-3
        assert closed.objective >= grid_obj - 1e-12  # closed form never loses
        worst_gap = max(worst_gap, gap)
        compared += 1
    report(6, f"50 feasible instances from {seed} draws, worst gap "
              f"{worst_gap:.2e} bits/s/Hz")


def test_criterion_07_qualitative_trends():
    """Seed-paired means must reproduce the qualitative behavior: more
    elements, more power help; tighter error bounds, stricter QoS hurt;
    designed beats diagonal beats random."""
    start = time.perf_counter()

    def fixture():
        return SystemConfig.desk(max_sca=12, max_cg=60, max_outer=30)

    means_l = trend_means(sweep(fixture(), "L", [8.0, 16.0], 20))
    assert means_l[16.0] > means_l[8.0]

    p_values = [0.1, 0.5, 1.0, 2.0]
    means_p = trend_means(sweep(fixture(), "P_max", p_values, 20))
    budget_curve = [means_p[v] for v in p_values]
    assert (np.diff(budget_curve) >= 0.0).all()

    rho_values = [0.0, 0.01, 0.05]
    means_rho = trend_means(sweep(fixture(), "rho_tilde", rho_values, 20))
    error_curve = [means_rho[v] for v in rho_values]
    assert (np.diff(error_curve) <= 0.0).all()

    means_q = trend_means(sweep(fixture(), "R_min", [1.0, 2.0], 20))
    assert means_q[2.0] <= means_q[1.0]

    arms = ("opt-bdris", "diag-ris", "all-random")
    rows = sweep(fixture(), "P_max", [1.0], 20, arms=arms)
    by_arm = {arm: {} for arm in arms}
    for row in rows:
        by_arm[row["arm"]][row["seed"]] = row["sum_rate"]
    shared = [s for s in range(20)
              if all(np.isfinite(by_arm[a][s]) for a in arms)]
    assert len(shared) >= 10
    arm_mean = {a: float(np.mean([by_arm[a][s] for s in shared])) for a in arms}
    assert arm_mean["opt-bdris"] >= arm_mean["diag-ris"] >= arm_mean["all-random"]

    elapsed = time.perf_counter() - start
    assert elapsed < 300.0
    report(7, f"L {means_l[8.0]:.2f}->{means_l[16.0]:.2f}, budget "
              f"{budget_curve[0]:.2f}->{budget_curve[-1]:.2f}, error "
              f"{error_curve[0]:.2f}->{error_curve[-1]:.2f}, qos "
              f"{means_q[1.0]:.2f}->{means_q[2.0]:.2f}, arms "
              f"{arm_mean['opt-bdris']:.2f}/{arm_mean['diag-ris']:.2f}/"
              f"{arm_mean['all-random']:.2f}, {elapsed:.0f} s")


def test_criterion_08_outer_loop_convergence():
    """Alternating loop settles within the iteration budget on at least 90
    percent of seeds, without ever giving back sum rate."""
    runs = [desk_census(seed) for seed in range(20)]
    converged = sum(r.converged and r.n_outer <= 30 for r in runs)
    worst_drop = 0.0
    for r in runs:
        rates = [t.sum_rate for t in r.trace]
        drops = np.diff(rates)
        if drops.size:
            worst_drop = min(worst_drop, float(drops.min()))
        assert (drops >= -1e-6).all()
    assert converged >= 18
    report(8, f"{converged}/20 converged within 30 outer iterations, worst "
              f"inter-iteration drop {worst_drop:.1e}")


def test_criterion_09_feasibility_residuals():
    """Every converged run certifies its own feasibility."""
    worst = 0.0
    checked = 0
    for seed in range(20):
        res = desk_census(seed)
        if not res.converged:
            continue
        rep = res.residuals
        for value in (rep.qos_rel, rep.common_rel, rep.power_rel, rep.eh_rel,
                      rep.beta, rep.unitarity):
            assert value <= 1e-6
        assert rep.worst() <= 1e-6
        worst = max(worst, rep.worst())
        checked += 1
    assert checked >= 18
    report(9, f"{checked} converged runs, worst residual {worst:.2e}")


def test_criterion_10_harvest_threshold_roundtrip():
    """Closed-form logistic inverse against a bisection oracle."""
    eh = EhParams()
    target = dbm_to_watt(-28.0)
    psi = psi_threshold(target, eh)
    roundtrip = harvested_power(psi, eh)
    assert abs(roundtrip - target) <= 1e-9 * target
    root = brentq(lambda x: harvested_power(x, eh) - target, 0.0, 1.0,
                  xtol=1e-15)
    assert abs(psi - root) <= 1e-6 * root
    assert abs(psi - 2.245e-3) <= 1e-3 * 2.245e-3
    report(10, f"threshold {psi:.6e} W, bisection gap {abs(psi - root):.1e}, "
               f"roundtrip error {abs(roundtrip - target):.1e}")
