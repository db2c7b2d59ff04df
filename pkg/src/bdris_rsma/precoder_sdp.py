"""Precoder design by successive convex approximation over PSD covariances.

Each round linearizes both logarithms of every worst-case rate at the current
iterate, which leaves a problem with an affine objective, affine constraints,
and PSD cones. That subproblem is handed to Clarabel through a direct
translation layer (no modeling framework): Hermitian blocks are parameterized
by their real degrees of freedom and embedded as real symmetric cones.

The double tangent is not a minorant of the true rate, so ascent is enforced
operationally: a candidate iterate is accepted only if the exact worst-case
objective does not decrease.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
import clarabel

from .channel import EquivalentChannel
from .metrics import (
    LN2,
    DesignState,
    RobustRateInputs,
    worst_case_common_rate,
    worst_case_private_rate,
)

RANK_RATIO = 1e6
N_RANDOMIZE = 200
# matches the feasibility bar reported at output; a stricter gate here only
# rejects near-solved iterates the split stage would repair anyway
POST_CHECK_TOL = 1e-6


class SubproblemError(RuntimeError):
    """Conic subproblem failed: infeasible or solver breakdown."""

    def __init__(self, status: str, detail: str = ""):
        super().__init__(f"conic subproblem {status}: {detail}" if detail else
                         f"conic subproblem {status}")
        self.status = status
        self.detail = detail


# ---------------------------------------------------------------------------
# problem containers


@dataclass(frozen=True)
class PsdBlock:
    name: str
    n: int


@dataclass(frozen=True)
class ScalarVar:
    name: str
    nonneg: bool = False


class LinExpr:
    """Real-valued affine function of Hermitian blocks and scalar variables.

    Matrix terms enter as tr(C X) with C Hermitian; coefficients accumulate
    across repeated adds so constraint builders can stay incremental.
    """

    def __init__(self, const: float = 0.0):
        self.mats: dict[str, np.ndarray] = {}
        self.scalars: dict[str, float] = {}
        self.const = float(const)

    def add_mat(self, name: str, coef: np.ndarray) -> "LinExpr":
        c = np.asarray(coef, dtype=complex)
        if c.ndim != 2 or c.shape[0] != c.shape[1]:
            raise ValueError(f"coefficient for {name} must be square, got {c.shape}")
        c = 0.5 * (c + c.conj().T)  # symmetrize: only the Hermitian part matters
        if name in self.mats:
            self.mats[name] = self.mats[name] + c
        else:
            self.mats[name] = c
        return self

    def add_scalar(self, name: str, coef: float) -> "LinExpr":
        self.scalars[name] = self.scalars.get(name, 0.0) + float(coef)
        return self

    def eval(self, blocks: dict[str, np.ndarray], scalars: dict[str, float]) -> float:
        total = self.const
        for name, c in self.mats.items():
            total += float(np.einsum("ij,ji->", c, blocks[name]).real)
        for name, w in self.scalars.items():
            total += w * scalars[name]
        return total


@dataclass(frozen=True)
class LinConstraint:
    expr: LinExpr
    sense: str  # "==", "<=", ">="
    rhs: float
    label: str = ""


@dataclass
class ConicProblem:
    blocks: list[PsdBlock] = field(default_factory=list)
    scalars: list[ScalarVar] = field(default_factory=list)
    constraints: list[LinConstraint] = field(default_factory=list)
    objective: LinExpr = field(default_factory=LinExpr)
    maximize: bool = True


@dataclass(frozen=True)
class SolverSolution:
    status: str  # "optimal", "infeasible", "numerical-failure"
    objective: float
    blocks: dict[str, np.ndarray]
    scalars: dict[str, float]
    detail: str = ""


# ---------------------------------------------------------------------------
# Clarabel translation

# Hermitian n x n block -> n*n real parameters: the n diagonal entries first,
# then (Re, Im) pairs of the strict upper triangle in column-major order.


def _offdiag_pos(i: int, j: int) -> int:
    return j * (j - 1) // 2 + i


def _svec_pos(i: int, j: int) -> int:
    return j * (j + 1) // 2 + i


def _coef_entries(c: np.ndarray, offset: int) -> tuple[list[int], list[float]]:
    """Columns and values of tr(C X) over the block's parameter slots."""
    n = c.shape[0]
    cols: list[int] = []
    vals: list[float] = []
    for i in range(n):
        v = c[i, i].real
        if v != 0.0:
            cols.append(offset + i)
            vals.append(v)
    for j in range(1, n):
        for i in range(j):
            k = offset + n + 2 * _offdiag_pos(i, j)
            re, im = 2.0 * c[i, j].real, 2.0 * c[i, j].imag
            if re != 0.0:
                cols.append(k)
                vals.append(re)
            if im != 0.0:
                cols.append(k + 1)
                vals.append(im)
    return cols, vals


def _psd_triplets(n: int, offset: int, row0: int):
    """Triplets of -M where M maps block params to svec of the real embedding.

    X = A + iB maps to [[A, -B], [B, A]], which is PSD iff X is. Rows follow
    Clarabel's upper-triangle column-major svec with sqrt(2) off-diagonal
    scaling.
    """
    rows: list[int] = []
    cols: list[int] = []
    vals: list[float] = []
    rt2 = math.sqrt(2.0)

    def put(i: int, j: int, col: int, val: float):
        rows.append(row0 + _svec_pos(i, j))
        cols.append(col)
        vals.append(-val)

    for i in range(n):
        put(i, i, offset + i, 1.0)
        put(n + i, n + i, offset + i, 1.0)
    for j in range(1, n):
        for i in range(j):
            k = offset + n + 2 * _offdiag_pos(i, j)
            put(i, j, k, rt2)
            put(n + i, n + j, k, rt2)
            put(i, n + j, k + 1, -rt2)
            put(j, n + i, k + 1, rt2)
    return rows, cols, vals


def solve_conic(problem: ConicProblem) -> SolverSolution:
    """Solve an affine-objective problem over PSD blocks and scalars."""
    offsets: dict[str, int] = {}
    cursor = 0
    for blk in problem.blocks:
        offsets[blk.name] = cursor
        cursor += blk.n * blk.n
    for var in problem.scalars:
        offsets[var.name] = cursor
        cursor += 1
    n_params = cursor

    def expr_row(expr: LinExpr) -> tuple[list[int], list[float]]:
        cols: list[int] = []
        vals: list[float] = []
        for name, c in expr.mats.items():
            cc, vv = _coef_entries(c, offsets[name])
            cols += cc
            vals += vv
        for name, w in expr.scalars.items():
            if w != 0.0:
                cols.append(offsets[name])
                vals.append(w)
        return cols, vals

    eqs = [c for c in problem.constraints if c.sense == "=="]
    ineqs = [c for c in problem.constraints if c.sense in ("<=", ">=")]
    bad = [c.sense for c in problem.constraints if c.sense not in ("==", "<=", ">=")]
    if bad:
        raise ValueError(f"unknown constraint sense {bad[0]!r}")

    rows: list[int] = []
    cols: list[int] = []
    vals: list[float] = []
    b: list[float] = []
    cones = []
    row = 0

    for c in eqs:
        cc, vv = expr_row(c.expr)
        rows += [row] * len(cc)
        cols += cc
        vals += vv
        b.append(c.rhs - c.expr.const)
        row += 1
    if eqs:
        cones.append(clarabel.ZeroConeT(len(eqs)))

    n_nonneg = 0
    for c in ineqs:
        sign = 1.0 if c.sense == "<=" else -1.0
        cc, vv = expr_row(c.expr)
        rows += [row] * len(cc)
        cols += cc
        vals += [sign * v for v in vv]
        b.append(sign * (c.rhs - c.expr.const))
        row += 1
        n_nonneg += 1
    for var in problem.scalars:
        if var.nonneg:
            rows.append(row)
            cols.append(offsets[var.name])
            vals.append(-1.0)
            b.append(0.0)
            row += 1
            n_nonneg += 1
    if n_nonneg:
        cones.append(clarabel.NonnegativeConeT(n_nonneg))

    for blk in problem.blocks:
        rr, cc, vv = _psd_triplets(blk.n, offsets[blk.name], row)
        rows += rr
        cols += cc
        vals += vv
        dim = 2 * blk.n
        b += [0.0] * (dim * (dim + 1) // 2)
        row += dim * (dim + 1) // 2
        cones.append(clarabel.PSDTriangleConeT(dim))

    q = np.zeros(n_params)
    obj_cols, obj_vals = expr_row(problem.objective)
    for c, v in zip(obj_cols, obj_vals):
        q[c] += -v if problem.maximize else v

    a_mat = sp.csc_matrix((vals, (rows, cols)), shape=(row, n_params))
    p_mat = sp.csc_matrix((n_params, n_params))
    settings = clarabel.DefaultSettings()
    settings.verbose = False
    solver = clarabel.DefaultSolver(p_mat, q, a_mat, np.array(b), cones, settings)
    sol = solver.solve()
    status = str(sol.status)

    if status in ("PrimalInfeasible", "AlmostPrimalInfeasible"):
        return SolverSolution("infeasible", float("nan"), {}, {}, detail=status)
    if status in ("DualInfeasible", "AlmostDualInfeasible"):
        return SolverSolution("numerical-failure", float("nan"), {}, {},
                              detail=f"unbounded ({status})")
    if status not in ("Solved", "AlmostSolved"):
        return SolverSolution("numerical-failure", float("nan"), {}, {}, detail=status)

    x = np.asarray(sol.x)
    blocks: dict[str, np.ndarray] = {}
    for blk in problem.blocks:
        off = offsets[blk.name]
        n = blk.n
        m = np.zeros((n, n), dtype=complex)
        for i in range(n):
            m[i, i] = x[off + i]
        for j in range(1, n):
            for i in range(j):
                k = off + n + 2 * _offdiag_pos(i, j)
                m[i, j] = x[k] + 1j * x[k + 1]
                m[j, i] = x[k] - 1j * x[k + 1]
        blocks[blk.name] = m
    scalars = {var.name: float(x[offsets[var.name]]) for var in problem.scalars}

    # the translation is hand-rolled, so verify the solution actually satisfies
    # what was asked before anyone downstream trusts it
    worst = ""
    for c in problem.constraints:
        ev = c.expr.eval(blocks, scalars)
        tol = POST_CHECK_TOL * max(1.0, abs(c.rhs))
        viol = abs(ev - c.rhs) if c.sense == "==" else (
            ev - c.rhs if c.sense == "<=" else c.rhs - ev)
        if viol > tol:
            worst = f"constraint {c.label or c.sense} off by {viol:.3e}"
            break
    if not worst:
        for blk in problem.blocks:
            w = np.linalg.eigvalsh(blocks[blk.name])
            floor = -POST_CHECK_TOL * max(1.0, abs(float(np.trace(blocks[blk.name]).real)))
            if w[0] < floor:
                worst = f"block {blk.name} min eigenvalue {w[0]:.3e}"
                break
        for var in problem.scalars:
            if var.nonneg and scalars[var.name] < -POST_CHECK_TOL:
                worst = f"scalar {var.name} = {scalars[var.name]:.3e} < 0"
                break
    if worst:
        return SolverSolution("numerical-failure", float("nan"), blocks, scalars,
                              detail=f"post-check: {worst} (solver said {status})")

    detail = "" if status == "Solved" else status
    return SolverSolution("optimal", problem.objective.eval(blocks, scalars),
                          blocks, scalars, detail=detail)


# ---------------------------------------------------------------------------
# rate tangents

# Stream block names: "V0" is the common stream, "V{m+1}" is user m's private
# stream. Both tangents keep every covariance in the signal-log gradient, so
# the surrogate touches the true rate exactly at the expansion point.


def block_name(i: int) -> str:
    return f"V{i}"


def _trace_pm(eq: EquivalentChannel, v: np.ndarray) -> tuple[float, float]:
    h_minus = eq.H - eq.delta_sq * np.eye(eq.H.shape[0])
    lo = float(np.einsum("ij,ji->", h_minus, v).real)
    return lo, lo + 2.0 * eq.delta_sq * float(np.trace(v).real)


def rate_tangent_private(eq: EquivalentChannel, m: int, hat: DesignState, beta: float,
                sigma_ant_sq: float, sigma_dec_sq: float) -> LinExpr:
    """Tangent of user m's worst-case private rate at the expansion point."""
    n_users = len(hat.V)
    eye = np.eye(eq.H.shape[0])
    sigma_bar = beta * sigma_ant_sq + sigma_dec_sq
    lo_m, _ = _trace_pm(eq, hat.V[m])
    interf = sum(_trace_pm(eq, hat.V[i])[1] for i in range(n_users) if i != m)
    x_hat = beta * (lo_m + interf) + sigma_bar
    y_hat = beta * interf + sigma_bar
    if x_hat <= 0.0 or y_hat <= 0.0:
        raise ValueError(f"expansion point has nonpositive denominator terms "
                         f"(x={x_hat:.3e}, y={y_hat:.3e})")

    expr = LinExpr(math.log2(x_hat / y_hat))
    cx = beta / (x_hat * LN2)
    cy = beta / (y_hat * LN2)
    expr.const -= cx * (lo_m + interf)
    expr.const += cy * interf
    expr.add_mat(block_name(m + 1), cx * (eq.H - eq.delta_sq * eye))
    for i in range(n_users):
        if i == m:
            continue
        expr.add_mat(block_name(i + 1), (cx - cy) * (eq.H + eq.delta_sq * eye))
    return expr


def rate_tangent_common(eq: EquivalentChannel, hat: DesignState, beta: float,
               sigma_ant_sq: float, sigma_dec_sq: float) -> LinExpr:
    """Tangent of a user's worst-case common rate at the expansion point."""
    n_users = len(hat.V)
    eye = np.eye(eq.H.shape[0])
    sigma_bar = beta * sigma_ant_sq + sigma_dec_sq
    lo_0, _ = _trace_pm(eq, hat.V0)
    interf = sum(_trace_pm(eq, hat.V[i])[1] for i in range(n_users))
    x_hat = beta * (lo_0 + interf) + sigma_bar
    y_hat = beta * interf + sigma_bar
    if x_hat <= 0.0 or y_hat <= 0.0:
        raise ValueError(f"expansion point has nonpositive denominator terms "
                         f"(x={x_hat:.3e}, y={y_hat:.3e})")

    expr = LinExpr(math.log2(x_hat / y_hat))
    cx = beta / (x_hat * LN2)
    cy = beta / (y_hat * LN2)
    expr.const -= cx * (lo_0 + interf)
    expr.const += cy * interf
    expr.add_mat(block_name(0), cx * (eq.H - eq.delta_sq * eye))
    for i in range(n_users):
        expr.add_mat(block_name(i + 1), (cx - cy) * (eq.H + eq.delta_sq * eye))
    return expr


# ---------------------------------------------------------------------------
# subproblem assembly


def build_subproblem(hat: DesignState, eq: list[EquivalentChannel], beta: np.ndarray,
             config, psi: float) -> ConicProblem:
    """One SCA round: affine surrogate rates, exact power/harvest/cut terms.

    Variables are the stream covariances, per-user common-rate shares, and
    per-user private-rate epigraph scalars. The harvest constraint is affine
    in the covariances because the splitting ratios stay fixed here.
    """
    m_users = len(eq)
    k_tx = hat.V0.shape[0]
    eye = np.eye(k_tx)
    prob = ConicProblem(maximize=True)
    for i in range(m_users + 1):
        prob.blocks.append(PsdBlock(block_name(i), k_tx))
    for m in range(m_users):
        prob.scalars.append(ScalarVar(f"rc{m}", nonneg=True))
        prob.scalars.append(ScalarVar(f"phi{m}", nonneg=False))

    for m in range(m_users):
        prob.objective.add_scalar(f"rc{m}", 1.0)
        prob.objective.add_scalar(f"phi{m}", 1.0)

    power = LinExpr()
    for i in range(m_users + 1):
        power.add_mat(block_name(i), eye)
    prob.constraints.append(LinConstraint(power, "<=", config.p_max, label="power"))

    for m in range(m_users):
        b = float(beta[m])
        h_minus = eq[m].H - eq[m].delta_sq * eye

        surr_p = rate_tangent_private(eq[m], m, hat, b, config.sigma_ant_sq, config.sigma_dec_sq)
        gap = LinExpr(-surr_p.const)
        for name, c in surr_p.mats.items():
            gap.add_mat(name, -c)
        gap.add_scalar(f"phi{m}", 1.0)
        prob.constraints.append(LinConstraint(gap, "<=", 0.0, label=f"private-rate{m}"))

        surr_c = rate_tangent_common(eq[m], hat, b, config.sigma_ant_sq, config.sigma_dec_sq)
        cap = LinExpr(-surr_c.const)
        for name, c in surr_c.mats.items():
            cap.add_mat(name, -c)
        for j in range(m_users):
            cap.add_scalar(f"rc{j}", 1.0)
        prob.constraints.append(LinConstraint(cap, "<=", 0.0, label=f"common-cap{m}"))

        qos = LinExpr()
        qos.add_scalar(f"rc{m}", 1.0)
        qos.add_scalar(f"phi{m}", 1.0)
        prob.constraints.append(LinConstraint(qos, ">=", config.r_min, label=f"qos{m}"))

        if psi > 0.0:
            harvest = LinExpr()
            for i in range(m_users + 1):
                harvest.add_mat(block_name(i), h_minus)
            need = psi / (1.0 - b) - config.sigma_ant_sq
            prob.constraints.append(LinConstraint(harvest, ">=", need, label=f"harvest{m}"))

        # keep worst-case signal terms nonnegative so the tangents stay valid
        cut_p = LinExpr().add_mat(block_name(m + 1), h_minus)
        prob.constraints.append(LinConstraint(cut_p, ">=", 0.0, label=f"cut-private{m}"))
        cut_c = LinExpr().add_mat(block_name(0), h_minus)
        prob.constraints.append(LinConstraint(cut_c, ">=", 0.0, label=f"cut-common{m}"))

    return prob


# ---------------------------------------------------------------------------
# rank-one recovery


def extract_rank_one(v: np.ndarray, rng: np.random.Generator,
                     candidates: int = N_RANDOMIZE, score=None) -> np.ndarray:
    """Beamforming vector from a PSD covariance.

    Dominant eigenvector when the spectrum is effectively rank one, Gaussian
    randomization otherwise; every candidate is rescaled to the original
    trace so transmit power is preserved exactly. ``score`` ranks candidates
    (higher is better); the default prefers energy aligned with ``v``.
    """
    v = np.asarray(v, dtype=complex)
    n = v.shape[0]
    tr = float(np.trace(v).real)
    if tr <= 1e-14:
        return np.zeros(n, dtype=complex)
    w, u = np.linalg.eigh(v)
    w = np.maximum(w[::-1], 0.0)
    u = u[:, ::-1]
    if n == 1 or w[1] <= w[0] / RANK_RATIO:
        return math.sqrt(w[0]) * u[:, 0]

    factor = u * np.sqrt(w)
    g = (rng.standard_normal((n, candidates)) + 1j * rng.standard_normal((n, candidates)))
    cand = factor @ (g / math.sqrt(2.0))
    norms = np.linalg.norm(cand, axis=0)
    norms[norms < 1e-14] = 1.0
    cand *= math.sqrt(tr) / norms
    if score is None:
        scores = np.einsum("ij,jk,ki->i", cand.conj().T, v, cand).real
    else:
        scores = np.array([score(cand[:, k]) for k in range(candidates)])
    return cand[:, int(np.argmax(scores))]


# ---------------------------------------------------------------------------
# stage driver


@dataclass
class PrecoderResult:
    V0: np.ndarray
    V: tuple[np.ndarray, ...]
    r_common: np.ndarray
    objective: float
    trace: list[float]
    n_iter: int
    converged: bool
    detail: str = ""


def initial_covariances(eq: list[EquivalentChannel], p_max: float) -> tuple[np.ndarray, tuple[np.ndarray, ...]]:
    """Equal-power matched-filter start; common stream toward the best user."""
    m_users = len(eq)
    share = p_max / (m_users + 1)
    vs = []
    for e in eq:
        g = float((e.h.conj() @ e.h).real)
        if g <= 0.0:
            raise ValueError("zero equivalent channel, cannot build start point")
        vs.append(share * np.outer(e.h, e.h.conj()) / g)
    best = int(np.argmax([float((e.h.conj() @ e.h).real) for e in eq]))
    v0 = vs[best].copy()
    return v0, tuple(vs)


def true_inner_objective(v0: np.ndarray, v: tuple[np.ndarray, ...], rc_sum: float,
                         eq: list[EquivalentChannel], beta: np.ndarray, config) -> float:
    """Exact worst-case sum rate achievable with the given common-share total."""
    total_p = 0.0
    caps = []
    for m in range(len(eq)):
        x = RobustRateInputs(
            H=eq[m].H, delta_sq=eq[m].delta_sq, V0=v0, V=v, beta=float(beta[m]),
            sigma_ant_sq=config.sigma_ant_sq, sigma_dec_sq=config.sigma_dec_sq,
        )
        total_p += worst_case_private_rate(x, m)
        caps.append(worst_case_common_rate(x))
    return total_p + min(max(0.0, rc_sum), min(caps))


def design_precoders(state: DesignState, eq: list[EquivalentChannel], config,
           rng: np.random.Generator) -> PrecoderResult:
    """SCA loop over covariances at fixed splits and fixed scattering."""
    from .metrics import psi_threshold

    beta = np.asarray(state.beta, dtype=float)
    psi = psi_threshold(config.target_w, config.eh)
    if state.V0 is None:
        v0, v = initial_covariances(eq, config.p_max)
    else:
        v0, v = state.V0, state.V
    hat = DesignState(theta=state.theta, beta=beta, V0=v0, V=v)

    rc = np.zeros(len(eq))
    obj = true_inner_objective(v0, v, float(rc.sum()), eq, beta, config)
    trace = [obj]
    converged = False
    detail = ""

    for it in range(1, config.max_sca + 1):
        prob = build_subproblem(hat, eq, beta, config, psi)
        sol = solve_conic(prob)
        if sol.status == "infeasible":
            if it == 1:
                raise SubproblemError("infeasible", "no covariance meets the "
                                      "power, rate, and harvest constraints")
            detail = "subproblem turned infeasible, keeping last iterate"
            break
        if sol.status != "optimal":
            if it == 1:
                raise SubproblemError(sol.status, sol.detail)
            detail = f"solver breakdown ({sol.detail}), keeping last iterate"
            break

        cand_v0 = sol.blocks[block_name(0)]
        cand_v = tuple(sol.blocks[block_name(i + 1)] for i in range(len(eq)))
        cand_rc = np.array([max(0.0, sol.scalars[f"rc{m}"]) for m in range(len(eq))])

        # The tangent model overestimates away from the expansion point, so
        # the full step can lose exact objective; the step direction is still
        # ascent (the model is tangent there), so damping restores it. All
        # constraints are convex, hence blends stay inside the relaxed set.
        accepted = False
        for t in (1.0, 0.5, 0.25, 0.125, 0.0625, 2**-5, 2**-6, 2**-7, 2**-8):
            mix_v0 = (1.0 - t) * v0 + t * cand_v0
            mix_v = tuple((1.0 - t) * a + t * b for a, b in zip(v, cand_v))
            mix_rc = (1.0 - t) * rc + t * cand_rc
            mix_obj = true_inner_objective(mix_v0, mix_v, float(mix_rc.sum()),
                                           eq, beta, config)
            if mix_obj >= obj - 1e-12:
                cand_v0, cand_v, cand_rc, cand_obj = mix_v0, mix_v, mix_rc, mix_obj
                accepted = True
                break
        if not accepted:
            converged = True
            detail = "no damping of the surrogate step improved the exact objective"
            break
        prev = obj
        v0, v, rc, obj = cand_v0, cand_v, cand_rc, cand_obj
        hat = DesignState(theta=state.theta, beta=beta, V0=v0, V=v)
        trace.append(obj)
        if abs(obj - prev) <= config.tol_sca * max(1.0, abs(prev)):
            converged = True
            break

    rc_sum = float(rc.sum())

    def joint_score(blocks: list[np.ndarray]):
        return true_inner_objective(blocks[0], tuple(blocks[1:]), rc_sum, eq, beta, config)

    final = [v0] + list(v)
    for i in range(len(final)):
        def score(w, i=i):
            cand = list(final)
            cand[i] = np.outer(w, w.conj())
            return joint_score(cand)
        vec = extract_rank_one(final[i], rng, score=score)
        final[i] = np.outer(vec, vec.conj())
    if joint_score(final) >= obj - 1e-9 and _harvest_ok(final, eq, beta, psi, config):
        v0, v = final[0], tuple(final[1:])
        obj = joint_score(final)
    else:
        detail = (detail + "; " if detail else "") + "rank-one recovery degraded the design, keeping full-rank covariances"

    return PrecoderResult(V0=v0, V=v, r_common=rc, objective=obj, trace=trace,
                        n_iter=len(trace) - 1, converged=converged, detail=detail)


def _harvest_ok(blocks: list[np.ndarray], eq: list[EquivalentChannel],
                beta: np.ndarray, psi: float, config) -> bool:
    if psi <= 0.0:
        return True
    for m, e in enumerate(eq):
        h_minus = e.H - e.delta_sq * np.eye(e.H.shape[0])
        got = sum(float(np.einsum("ij,ji->", h_minus, blk).real) for blk in blocks)
        if (1.0 - float(beta[m])) * (got + config.sigma_ant_sq) < psi * (1.0 - 1e-9):
            return False
    return True
