"""Scenario configuration, the alternating optimizer, benchmarks and sweeps.

Everything here either prepares inputs for the three design stages
(precoders, splits, scattering) or records what they produced. Each outer
iteration closes with an exact repair pass at the refreshed error radii, and
an iterate is kept only if the repaired worst-case sum rate did not regress,
so the iteration trace is monotone by construction and reported designs are
feasible to working precision.

Physical quantities are in watts, meters, and bits/s/Hz throughout.
"""

from __future__ import annotations

import csv
import json
import math
import time
from dataclasses import asdict, dataclass, fields, replace
from pathlib import Path

import numpy as np

from .channel import (
    ChannelSet,
    FadingParams,
    Geometry,
    equivalent_channel,
    gen_channels,
)
from .manifold_opt import DiagonalPhaseManifold, UnitaryManifold, refine_scattering
from .metrics import (
    DesignState,
    ResidualReport,
    RobustRateInputs,
    psi_threshold,
    residuals_from_equivalent,
    worst_case_received,
)
from .numerics import random_unitary
from .power_split import (
    EhInfeasibleError,
    QosInfeasibleError,
    allocate_common_rate,
    beta_upper_bound,
    optimize_beta,
    rates_at_beta,
)
from .precoder_sdp import SubproblemError, design_precoders

VERSION = "0.1.0"

CSV_HEADER = [
    "iter", "arm", "param", "value", "seed", "sum_rate", "qos_resid",
    "eh_resid", "pow_resid", "common_resid", "unitary_resid", "wall_ms",
]

BENCH_ARMS = ("opt-bdris", "diag-ris", "random-beta", "random-precoder", "all-random")

SWEEP_ALIASES = {
    "P_max": "p_max",
    "R_min": "r_min_mbps",
    "L": "n_ris",
    "K": "n_tx",
    "M": "n_users",
}


def dbm_to_watt(dbm: float) -> float:
    return 1e-3 * 10.0 ** (dbm / 10.0)


class InfeasibleScenario(RuntimeError):
    """The scenario admits no design meeting the named constraint."""

    def __init__(self, constraint: str, detail: str = ""):
        super().__init__(f"{constraint} infeasible" + (f": {detail}" if detail else ""))
        self.constraint = constraint
        self.detail = detail


# ---------------------------------------------------------------------------
# configuration


@dataclass
class SystemConfig:
    """Scenario and solver knobs.

    Defaults describe the reference deployment: a 3-antenna transmitter, a
    30-element surface 50 m out, two users in a 10 m disk around the surface
    foot, and a -28 dBm harvest target. At this geometry the received RF
    power is orders of magnitude below that target, so running the defaults
    reports the harvest constraint infeasible; :meth:`desk` scales noise and
    harvest target down to where every constraint binds but a design exists.
    """

    n_ris: int = 30
    n_tx: int = 3
    n_users: int = 2
    p_max: float = 1.0
    bandwidth_hz: float = 1e6
    r_min_mbps: float = 0.1
    harvest_dbm: float = -28.0
    sigma_ant_sq: float = 1e-8
    sigma_dec_sq: float = 1e-8
    rho_tilde: float = 0.01
    zeta_br: float = 5.0
    zeta_rm: float = 5.0
    zeta_bm: float = 3.0
    alpha_br: float = 2.0
    alpha_rm: float = 2.5
    alpha_bm: float = 4.0
    pathloss_ref: float = 1e-3
    bs_x: float = 0.0
    bs_y: float = 0.0
    ris_x: float = 50.0
    ris_y: float = 10.0
    disk_x: float = 50.0
    disk_y: float = 0.0
    disk_radius: float = 10.0
    eh_c: float = 6400.0
    eh_d: float = 0.003
    eh_cap: float = 2e-4
    tol_sca: float = 1e-4
    tol_cg_grad: float = 1e-6
    tol_outer: float = 1e-3
    max_sca: int = 50
    max_cg: int = 100
    max_outer: int = 30
    beta_grid_step: float = 1e-3
    seed: int = 0

    @property
    def L(self) -> int:
        return self.n_ris

    @property
    def K(self) -> int:
        return self.n_tx

    @property
    def M(self) -> int:
        return self.n_users

    @property
    def r_min(self) -> float:
        return self.r_min_mbps * 1e6 / self.bandwidth_hz

    @property
    def target_w(self) -> float:
        return dbm_to_watt(self.harvest_dbm)

    @property
    def eh(self):
        from .metrics import EhParams

        return EhParams(c=self.eh_c, d=self.eh_d, cap=self.eh_cap)

    @property
    def geometry(self) -> Geometry:
        return Geometry(bs=(self.bs_x, self.bs_y), ris=(self.ris_x, self.ris_y),
                        disk_center=(self.disk_x, self.disk_y),
                        disk_radius=self.disk_radius)

    @property
    def fading(self) -> FadingParams:
        return FadingParams(zeta_br=self.zeta_br, zeta_rm=self.zeta_rm,
                            zeta_bm=self.zeta_bm, alpha_br=self.alpha_br,
                            alpha_rm=self.alpha_rm, alpha_bm=self.alpha_bm,
                            pathloss_ref=self.pathloss_ref)

    def validate(self) -> None:
        """Reject parameter combinations the optimizer cannot even start on."""
        checks = [
            (self.n_ris >= 1, "n_ris must be at least 1"),
            (self.n_tx >= 1, "n_tx must be at least 1"),
            (self.n_users >= 1, "n_users must be at least 1"),
            (self.p_max > 0.0, "p_max must be positive"),
            (self.bandwidth_hz > 0.0, "bandwidth_hz must be positive"),
            (self.r_min_mbps >= 0.0, "r_min_mbps must be nonnegative"),
            (self.sigma_ant_sq >= 0.0, "sigma_ant_sq must be nonnegative"),
            (self.sigma_dec_sq > 0.0, "sigma_dec_sq must be positive"),
            (0.0 <= self.rho_tilde < 1.0, "rho_tilde must lie in [0, 1)"),
            (self.eh_c > 0.0, "eh_c must be positive"),
            (self.eh_d >= 0.0, "eh_d must be nonnegative"),
            (self.eh_cap > 0.0, "eh_cap must be positive"),
            (self.target_w < self.eh_cap,
             "harvest target must stay below the harvester saturation level"),
            (min(self.zeta_br, self.zeta_rm, self.zeta_bm) >= 0.0,
             "Rician factors must be nonnegative"),
            (min(self.alpha_br, self.alpha_rm, self.alpha_bm) > 0.0,
             "pathloss exponents must be positive"),
            (self.pathloss_ref > 0.0, "pathloss_ref must be positive"),
            (self.disk_radius > 0.0, "disk_radius must be positive"),
            (min(self.tol_sca, self.tol_cg_grad, self.tol_outer) > 0.0,
             "tolerances must be positive"),
            (min(self.max_sca, self.max_cg, self.max_outer) >= 1,
             "iteration caps must be at least 1"),
            (0.0 < self.beta_grid_step < 0.5, "beta_grid_step must lie in (0, 0.5)"),
        ]
        for ok, msg in checks:
            if not ok:
                raise ValueError(msg)

    @classmethod
    def desk(cls, **overrides) -> "SystemConfig":
        """Small self-consistent scenario for tests and quick studies.

        Noise floors drop to 1e-11 W and the harvest target to -158 dBm so
        the harvest bound stays active at the 50 m geometry yet weak draws
        remain satisfiable down to a tenth of the power budget.
        """
        base = dict(n_ris=8, n_tx=3, n_users=2,
                    sigma_ant_sq=1e-11, sigma_dec_sq=1e-11, harvest_dbm=-158.0)
        base.update(overrides)
        return cls(**base)


_FIELD_TYPES = {"int": int, "float": float}


def parse_config_file(path) -> SystemConfig:
    """Read ``key = value`` lines into a validated configuration.

    ``#`` starts a comment, blank lines are skipped, unknown keys are a hard
    error. A ``preset`` key (``default`` or ``desk``) selects the baseline
    the remaining keys override.
    """
    entries: dict[str, tuple[str, int]] = {}
    for lineno, raw in enumerate(Path(path).read_text().splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, val = line.partition("=")
        key, val = key.strip(), val.strip()
        if not sep or not key or not val:
            raise ValueError(f"{path}:{lineno}: expected 'key = value', got {raw!r}")
        if key in entries:
            raise ValueError(f"{path}:{lineno}: duplicate key {key!r}")
        entries[key] = (val, lineno)

    preset = entries.pop("preset", ("default", 0))[0]
    if preset == "default":
        config = SystemConfig()
    elif preset == "desk":
        config = SystemConfig.desk()
    else:
        raise ValueError(f"{path}: unknown preset {preset!r}")

    types = {f.name: f.type for f in fields(SystemConfig)}
    for key, (val, lineno) in entries.items():
        if key not in types:
            raise ValueError(f"{path}:{lineno}: unknown config key {key!r}")
        caster = _FIELD_TYPES[str(types[key])]
        try:
            setattr(config, key, caster(val))
        except ValueError:
            raise ValueError(
                f"{path}:{lineno}: cannot parse {val!r} as {types[key]} for {key!r}"
            ) from None
    config.validate()
    return config


# ---------------------------------------------------------------------------
# the alternating optimizer


@dataclass(frozen=True)
class IterationTrace:
    outer: int
    precoder_obj: float
    split_obj: float
    scatter_obj: float
    sum_rate: float
    n_sca: int
    n_cg: int


@dataclass
class RunResult:
    state: DesignState
    sum_rate: float
    residuals: ResidualReport
    trace: list[IterationTrace]
    converged: bool
    n_outer: int
    wall_ms: float
    detail: str = ""


def aligned_start(cs: ChannelSet) -> np.ndarray:
    """Diagonal phases greedily co-phasing the bottleneck user's paths.

    Element by element, the reflected contribution is rotated onto the
    accumulated channel of the user with the least total path strength. The
    result is diagonal, so it is a valid start on either manifold.
    """
    n_ris = cs.g_br.shape[0]
    contrib = cs.g_br.conj() * cs.h_rm[:, :, None]  # (M, L, K) per-element paths
    strength = np.abs(cs.f_bm).sum(axis=1) + np.abs(contrib).sum(axis=(1, 2))
    m = int(np.argmin(strength))
    acc = cs.f_bm[m].copy()
    phases = np.empty(n_ris)
    for el in range(n_ris):
        c = contrib[m, el]
        inner = complex(np.vdot(c, acc))
        phases[el] = np.angle(inner) if abs(inner) > 0.0 else 0.0
        acc += np.exp(1j * phases[el]) * c
    return np.diag(np.exp(1j * phases))


def initial_state(cs: ChannelSet, config: SystemConfig, rng: np.random.Generator,
                  manifold=UnitaryManifold, aligned: bool = False) -> DesignState:
    """Scattering start (aligned or random), harvest-aware splits.

    Splits start at half the harvest bound implied by best-case full-power
    beaming, capped at 0.5. A blind 0.5 start makes the first precoder
    subproblem infeasible whenever the harvest constraint is tight, which
    the split stage would have repaired anyway; starting inside the bound
    avoids the false alarm.
    """
    theta = aligned_start(cs) if aligned else manifold.random(config.L, rng)
    psi = psi_threshold(config.target_w, config.eh)
    beta = np.full(config.M, 0.5)
    if psi > 0.0:
        eq = equivalent_channel(cs, theta, config.rho_tilde)
        for m, e in enumerate(eq):
            gain = float((e.h.conj() @ e.h).real) - e.delta_sq
            cap = config.p_max * max(0.0, gain) + config.sigma_ant_sq
            room = max(0.0, 1.0 - psi / cap) if cap > 0.0 else 0.0
            beta[m] = min(0.5, max(1e-3, 0.5 * room))
    return DesignState(theta=theta, beta=beta, r_common=np.zeros(config.M))


def _clone(state: DesignState) -> DesignState:
    return DesignState(
        theta=state.theta.copy(), beta=state.beta.copy(),
        V0=None if state.V0 is None else state.V0.copy(),
        V=None if state.V is None else tuple(v.copy() for v in state.V),
        r_common=None if state.r_common is None else state.r_common.copy(),
    )


def _harvest_diagnosis(eq, config: SystemConfig) -> InfeasibleScenario | None:
    """Attribute a first-iteration failure to the harvest constraint if even
    beaming everything at one user cannot reach the threshold."""
    psi = psi_threshold(config.target_w, config.eh)
    if psi <= 0.0:
        return None
    for m, e in enumerate(eq):
        gain = float((e.h.conj() @ e.h).real) - e.delta_sq
        cap = config.p_max * max(0.0, gain) + config.sigma_ant_sq
        if cap < psi:
            return InfeasibleScenario(
                "harvest",
                f"user {m} best-case received power {cap:.3e} W is below the "
                f"threshold {psi:.3e} W at this geometry",
            )
    return None


def run_once(config: SystemConfig, seed: int | None = None,
             manifold=UnitaryManifold) -> RunResult:
    """Full alternating optimization of one drawn scenario.

    A first-iteration infeasibility verdict depends on the random scattering
    start, so the optimization is retried from a few fresh starts before the
    scenario itself is declared infeasible.
    """
    config.validate()
    t0 = time.perf_counter()
    rng = np.random.default_rng(config.seed if seed is None else seed)
    cs = gen_channels(config, rng)

    starts = 4
    for attempt in range(starts):
        state = initial_state(cs, config, rng, manifold, aligned=attempt == 0)
        try:
            return _alternate(cs, state, config, rng, manifold, t0)
        except InfeasibleScenario as err:
            last = err
    raise InfeasibleScenario(
        last.constraint, f"{last.detail} ({starts} scattering starts)")


def _alternate(cs: ChannelSet, state: DesignState, config: SystemConfig,
               rng: np.random.Generator, manifold, t0: float) -> RunResult:
    trace: list[IterationTrace] = []
    prev_sum: float | None = None
    converged = False
    detail = ""

    for outer in range(1, config.max_outer + 1):
        snapshot = _clone(state)
        eq = equivalent_channel(cs, state.theta, config.rho_tilde)

        # precoder stage proposes covariances; they are adopted only if the
        # exact repair score (splits re-optimized) does not drop, since the
        # stage optimizes at fixed splits and can trade away harvest headroom
        # the split stage needed
        pre_obj, n_sca = float("nan"), 0
        split_obj = float("nan") if prev_sum is None else prev_sum
        try:
            pre = design_precoders(state, eq, config, rng)
        except SubproblemError as err:
            if outer == 1:
                diag = _harvest_diagnosis(eq, config)
                raise diag if diag is not None else InfeasibleScenario(
                    "precoder", err.detail or err.status)
            pre = None
        if pre is not None:
            pre_obj, n_sca = pre.objective, pre.n_iter
            trial = _clone(state)
            trial.V0, trial.V = pre.V0, pre.V
            split = optimize_beta(trial, eq, config)
            if outer == 1:
                if not split.feasible:
                    name = "harvest" if split.detail.startswith("eh") else "qos"
                    raise InfeasibleScenario(name, split.detail)
                accept = True
            else:
                accept = split.feasible and split.objective >= prev_sum - 1e-12
            if accept:
                state.V0, state.V = pre.V0, pre.V
                state.beta, state.r_common = split.beta, split.r_common
                split_obj = split.objective

        scat = refine_scattering(state, cs, config, manifold)
        state.theta = scat.theta
        state.beta, state.r_common = scat.beta, scat.r_common

        # the scattering stage vetted its matrix at refreshed radii already;
        # this recomputation just re-derives the splits for the final state
        eq_new = equivalent_channel(cs, state.theta, config.rho_tilde)
        repaired = optimize_beta(state, eq_new, config)
        if not repaired.feasible:
            if outer == 1:
                name = "harvest" if repaired.detail.startswith("eh") else "qos"
                raise InfeasibleScenario(name, repaired.detail)
            state = snapshot
            detail = "repair at refreshed radii infeasible, keeping previous design"
            break
        state.beta, state.r_common = repaired.beta, repaired.r_common
        sum_now = repaired.objective

        if prev_sum is not None and sum_now < prev_sum - 1e-9:
            state = snapshot
            detail = "outer step regressed, keeping previous design"
            break
        trace.append(IterationTrace(outer=outer, precoder_obj=pre_obj,
                                    split_obj=split_obj,
                                    scatter_obj=scat.objective, sum_rate=sum_now,
                                    n_sca=n_sca, n_cg=scat.n_iter))
        if prev_sum is not None and abs(sum_now - prev_sum) <= config.tol_outer * max(
                1.0, abs(prev_sum)):
            prev_sum = sum_now
            converged = True
            break
        prev_sum = sum_now

    report = residuals_from_equivalent(
        state, equivalent_channel(cs, state.theta, config.rho_tilde), config)
    return RunResult(state=state, sum_rate=float(prev_sum), residuals=report,
                     trace=trace, converged=converged, n_outer=len(trace),
                     wall_ms=(time.perf_counter() - t0) * 1e3, detail=detail)


# ---------------------------------------------------------------------------
# benchmark arms


@dataclass
class ArmResult:
    arm: str
    sum_rate: float
    residuals: ResidualReport | None
    n_outer: int
    wall_ms: float
    detail: str = ""


def _random_covariances(config: SystemConfig, rng: np.random.Generator):
    blocks = []
    for _ in range(config.M + 1):
        g = rng.standard_normal(config.K) + 1j * rng.standard_normal(config.K)
        blocks.append(config.p_max / (config.M + 1)
                      * np.outer(g, g.conj()) / float((g.conj() @ g).real))
    return blocks[0], tuple(blocks[1:])


def _beta_bounds(state: DesignState, eq, config: SystemConfig) -> np.ndarray:
    psi = psi_threshold(config.target_w, config.eh)
    bounds = np.empty(len(eq))
    for m, e in enumerate(eq):
        probe = RobustRateInputs(H=e.H, delta_sq=e.delta_sq, V0=state.V0, V=state.V,
                                 beta=1.0, sigma_ant_sq=config.sigma_ant_sq,
                                 sigma_dec_sq=config.sigma_dec_sq)
        bounds[m] = beta_upper_bound(worst_case_received(probe), psi)
    return bounds


def _lenient_shares(caps: np.ndarray, rp: np.ndarray, r_min: float) -> np.ndarray:
    """Common shares for benchmark arms: honest even when QoS cannot be met."""
    try:
        return allocate_common_rate(caps, rp, r_min)
    except QosInfeasibleError:
        total = max(0.0, float(np.min(caps)))
        deficits = np.maximum(0.0, r_min - rp)
        return total * deficits / deficits.sum()


def _finish(state: DesignState, cs: ChannelSet, config: SystemConfig
            ) -> tuple[float, ResidualReport]:
    eq = equivalent_channel(cs, state.theta, config.rho_tilde)
    rp, caps = rates_at_beta(state, eq, state.beta, config)
    state.r_common = _lenient_shares(caps, rp, config.r_min)
    report = residuals_from_equivalent(state, eq, config)
    return float(state.r_common.sum() + rp.sum()), report


def _arm_all_random(config: SystemConfig, seed: int):
    rng = np.random.default_rng(seed)
    cs = gen_channels(config, rng)
    state = DesignState(theta=random_unitary(config.L, rng),
                        beta=np.full(config.M, 0.5))
    state.V0, state.V = _random_covariances(config, rng)
    eq = equivalent_channel(cs, state.theta, config.rho_tilde)
    draw = rng.uniform(0.05, 0.95, config.M)
    state.beta = np.minimum(draw, _beta_bounds(state, eq, config))
    rate, report = _finish(state, cs, config)
    return rate, report, 0


def _arm_random_precoder(config: SystemConfig, seed: int):
    """Scattering and splits optimized around precoders nobody designed."""
    rng = np.random.default_rng(seed)
    cs = gen_channels(config, rng)
    state = DesignState(theta=random_unitary(config.L, rng),
                        beta=np.full(config.M, 0.5))
    state.V0, state.V = _random_covariances(config, rng)
    eq = equivalent_channel(cs, state.theta, config.rho_tilde)
    split = optimize_beta(state, eq, config)
    if not split.feasible:
        raise InfeasibleScenario("harvest" if split.detail.startswith("eh") else "qos",
                                 split.detail)
    state.beta, state.r_common = split.beta, split.r_common
    scat = refine_scattering(state, cs, config)
    state.theta, state.beta, state.r_common = scat.theta, scat.beta, scat.r_common
    eq2 = equivalent_channel(cs, state.theta, config.rho_tilde)
    repaired = optimize_beta(state, eq2, config)
    if repaired.feasible:
        state.beta, state.r_common = repaired.beta, repaired.r_common
    rate, report = _finish(state, cs, config)
    return rate, report, 1


def _arm_random_beta(config: SystemConfig, seed: int):
    """Precoders and scattering optimized around splits nobody optimized."""
    rng = np.random.default_rng(seed)
    cs = gen_channels(config, rng)
    state = initial_state(cs, config, rng)
    draw = rng.uniform(0.05, 0.95, config.M)
    state.beta = draw.copy()
    eq = equivalent_channel(cs, state.theta, config.rho_tilde)
    pre = design_precoders(state, eq, config, rng)
    state.V0, state.V = pre.V0, pre.V
    state.beta = np.minimum(draw, _beta_bounds(state, eq, config))
    rp, caps = rates_at_beta(state, eq, state.beta, config)
    state.r_common = _lenient_shares(caps, rp, config.r_min)
    scat = refine_scattering(state, cs, config)
    state.theta = scat.theta  # splits stay at the committed draw
    eq2 = equivalent_channel(cs, state.theta, config.rho_tilde)
    state.beta = np.minimum(draw, _beta_bounds(state, eq2, config))
    rate, report = _finish(state, cs, config)
    return rate, report, 1


def run_arm(arm: str, config: SystemConfig, seed: int) -> ArmResult:
    """One benchmark arm on one drawn scenario, never raising on infeasibility."""
    t0 = time.perf_counter()
    try:
        if arm == "opt-bdris":
            res = run_once(config, seed)
            out = ArmResult(arm, res.sum_rate, res.residuals, res.n_outer, 0.0,
                            res.detail)
        elif arm == "diag-ris":
            res = run_once(config, seed, manifold=DiagonalPhaseManifold)
            out = ArmResult(arm, res.sum_rate, res.residuals, res.n_outer, 0.0,
                            res.detail)
        elif arm == "random-beta":
            rate, report, iters = _arm_random_beta(config, seed)
            out = ArmResult(arm, rate, report, iters, 0.0)
        elif arm == "random-precoder":
            rate, report, iters = _arm_random_precoder(config, seed)
            out = ArmResult(arm, rate, report, iters, 0.0)
        elif arm == "all-random":
            rate, report, iters = _arm_all_random(config, seed)
            out = ArmResult(arm, rate, report, iters, 0.0)
        else:
            raise ValueError(f"unknown benchmark arm {arm!r}")
    except (InfeasibleScenario, EhInfeasibleError, SubproblemError) as err:
        out = ArmResult(arm, float("nan"), None, 0, 0.0, str(err))
    out.wall_ms = (time.perf_counter() - t0) * 1e3
    return out


# ---------------------------------------------------------------------------
# sweeps and result files


def _row(result: ArmResult, param: str, value: float, seed: int) -> dict:
    r = result.residuals
    nan = float("nan")
    return {
        "iter": result.n_outer, "arm": result.arm, "param": param,
        "value": float(value), "seed": seed, "sum_rate": result.sum_rate,
        "qos_resid": r.qos_rel if r else nan,
        "eh_resid": r.eh_rel if r else nan,
        "pow_resid": r.power_rel if r else nan,
        "common_resid": r.common_rel if r else nan,
        "unitary_resid": r.unitarity if r else nan,
        "wall_ms": result.wall_ms,
    }


def resolve_sweep_param(name: str) -> str:
    field_name = SWEEP_ALIASES.get(name, name)
    valid = {f.name for f in fields(SystemConfig)}
    if field_name not in valid:
        raise ValueError(f"unknown sweep parameter {name!r}")
    return field_name


def _apply_param(config: SystemConfig, field_name: str, value: float) -> SystemConfig:
    kind = {f.name: str(f.type) for f in fields(SystemConfig)}[field_name]
    if kind == "int":
        if value != int(value):
            raise ValueError(f"{field_name} must be an integer, got {value}")
        out = replace(config, **{field_name: int(value)})
    else:
        out = replace(config, **{field_name: float(value)})
    out.validate()
    return out


def sweep(config: SystemConfig, param: str, values, n_seeds: int,
          arms=("opt-bdris",), workers: int | None = None) -> list[dict]:
    """Benchmark grid over one parameter, a seed range, and arm set.

    Every (value, seed, arm) cell draws its scenario from a fresh generator
    seeded with the cell's seed, so cells are paired across values and arms.
    Rows come back sorted by (param, value, seed, arm); wall_ms is the only
    nondeterministic column.
    """
    field_name = resolve_sweep_param(param)
    cells = [(v, s, a) for v in values for s in range(n_seeds) for a in arms]

    def run_cell(cell):
        value, seed, arm = cell
        cfg = _apply_param(config, field_name, value)
        return _row(run_arm(arm, cfg, seed), param, value, seed)

    if workers is not None and workers > 1:
        from concurrent.futures import ThreadPoolExecutor

        with ThreadPoolExecutor(max_workers=workers) as pool:
            rows = list(pool.map(run_cell, cells))
    else:
        rows = [run_cell(c) for c in cells]
    rows.sort(key=lambda r: (r["param"], r["value"], r["seed"], r["arm"]))
    return rows


def run_bench(config: SystemConfig, arms, seed: int) -> list[dict]:
    """All requested arms on the same scenario draw."""
    rows = [_row(run_arm(arm, config, seed), "bench", 0.0, seed) for arm in arms]
    rows.sort(key=lambda r: (r["param"], r["value"], r["seed"], r["arm"]))
    return rows


def _fmt(value) -> str:
    if isinstance(value, str):
        return value
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    return f"{float(value):.10g}"


def write_rows(path, rows: list[dict]) -> None:
    with open(path, "w", newline="") as fh:
        out = csv.writer(fh)
        out.writerow(CSV_HEADER)
        for row in rows:
            out.writerow([_fmt(row[key]) for key in CSV_HEADER])


def write_metadata(path, config: SystemConfig, **extra) -> None:
    payload = {"version": VERSION, "config": asdict(config)}
    payload.update(extra)
    with open(path, "w") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")


def trend_means(rows: list[dict], arm: str = "opt-bdris") -> dict[float, float]:
    """Mean sum rate per swept value, skipping scenarios the arm found
    infeasible so compared values average over the same seed set."""
    by_value: dict[float, dict[int, float]] = {}
    for row in rows:
        if row["arm"] != arm:
            continue
        by_value.setdefault(row["value"], {})[row["seed"]] = row["sum_rate"]
    shared = None
    for value, seeds in by_value.items():
        good = {s for s, rate in seeds.items() if not math.isnan(rate)}
        shared = good if shared is None else shared & good
    shared = shared or set()
    return {value: float(np.mean([seeds[s] for s in sorted(shared)]))
            for value, seeds in by_value.items() if shared}
