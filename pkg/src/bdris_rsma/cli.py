"""Command line front end: single runs, sweeps, benchmarks, and a selftest.

Exit codes: 0 on success, 2 when the scenario is reported infeasible, 1 for
anything else (bad usage, bad config, solver breakdown).
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

import numpy as np

from .harness import (
    BENCH_ARMS,
    CSV_HEADER,
    InfeasibleScenario,
    SystemConfig,
    parse_config_file,
    run_bench,
    run_once,
    sweep,
    write_metadata,
    write_rows,
)


class _Parser(argparse.ArgumentParser):
    """argparse alias whose usage errors exit 1, leaving 2 for infeasibility."""

    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


def build_parser() -> _Parser:
    parser = _Parser(prog="bdris-rsma",
                     description="Robust sum-rate optimization for a "
                                 "scattering-surface assisted downlink with "
                                 "rate splitting and energy harvesting.")
    sub = parser.add_subparsers(dest="command", metavar="command",
                                parser_class=_Parser)

    run_p = sub.add_parser("run", help="optimize one drawn scenario")
    run_p.add_argument("--config", help="key = value configuration file")
    run_p.add_argument("--seed", type=int, help="override the configured seed")
    run_p.add_argument("--out", help="directory for results.csv and run_meta.json")

    sweep_p = sub.add_parser("sweep", help="grid over one parameter and many seeds")
    sweep_p.add_argument("--param", required=True,
                         help="config field or alias (P_max, R_min, rho_tilde, L, K, M)")
    sweep_p.add_argument("--values", required=True,
                         help="comma-separated values for the swept parameter")
    sweep_p.add_argument("--seeds", required=True, type=int,
                         help="number of seeds (0 .. N-1) per value")
    sweep_p.add_argument("--arms", default="opt-bdris",
                         help=f"comma-separated subset of {', '.join(BENCH_ARMS)}")
    sweep_p.add_argument("--config", help="key = value configuration file")
    sweep_p.add_argument("--workers", type=int, help="parallel cell workers")
    sweep_p.add_argument("--out", default=".",
                         help="directory for sweep_results.csv and sweep_meta.json")

    bench_p = sub.add_parser("bench", help="compare design arms on one scenario")
    bench_p.add_argument("--arms", default=",".join(BENCH_ARMS),
                         help=f"comma-separated subset of {', '.join(BENCH_ARMS)}")
    bench_p.add_argument("--config", help="key = value configuration file")
    bench_p.add_argument("--seed", type=int, default=0)
    bench_p.add_argument("--out", default=".",
                         help="directory for bench_results.csv and bench_meta.json")

    sub.add_parser("selftest", help="quick end-to-end sanity checks")
    return parser


def _load_config(path: str | None) -> SystemConfig:
    if path is None:
        config = SystemConfig()
        config.validate()
        return config
    return parse_config_file(path)


def _parse_arms(text: str) -> tuple[str, ...]:
    arms = tuple(a.strip() for a in text.split(",") if a.strip())
    if not arms:
        raise ValueError("no benchmark arms given")
    unknown = [a for a in arms if a not in BENCH_ARMS]
    if unknown:
        raise ValueError(f"unknown benchmark arm {unknown[0]!r}; "
                         f"choose from {', '.join(BENCH_ARMS)}")
    return arms


def _parse_values(text: str) -> list[float]:
    try:
        values = [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise ValueError(f"cannot parse sweep values {text!r}") from None
    if not values:
        raise ValueError("no sweep values given")
    return values


def _cmd_run(args) -> int:
    config = _load_config(args.config)
    seed = config.seed if args.seed is None else args.seed
    result = run_once(config, seed)
    r = result.residuals
    if args.out is not None:
        out_dir = Path(args.out)
        out_dir.mkdir(parents=True, exist_ok=True)
        row = {
            "iter": result.n_outer, "arm": "opt-bdris", "param": "single",
            "value": 0.0, "seed": seed, "sum_rate": result.sum_rate,
            "qos_resid": r.qos_rel, "eh_resid": r.eh_rel, "pow_resid": r.power_rel,
            "common_resid": r.common_rel, "unitary_resid": r.unitarity,
            "wall_ms": result.wall_ms,
        }
        write_rows(out_dir / "results.csv", [row])
        write_metadata(out_dir / "run_meta.json", config, command="run", seed=seed,
                       converged=result.converged, detail=result.detail)
    print(f"sum_rate={result.sum_rate:.6f} bits/s/Hz "
          f"outer={result.n_outer} converged={result.converged} "
          f"worst_residual={r.worst():.3e}"
          + (f" note={result.detail}" if result.detail else ""))
    return 0


def _cmd_sweep(args) -> int:
    config = _load_config(args.config)
    values = _parse_values(args.values)
    arms = _parse_arms(args.arms)
    if args.seeds < 1:
        raise ValueError("--seeds must be at least 1")
    rows = sweep(config, args.param, values, args.seeds, arms=arms,
                 workers=args.workers)
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    write_rows(out_dir / "sweep_results.csv", rows)
    write_metadata(out_dir / "sweep_meta.json", config, command="sweep",
                   param=args.param, values=values, seeds=args.seeds, arms=list(arms))
    feasible = sum(1 for row in rows if not np.isnan(row["sum_rate"]))
    print(f"wrote {len(rows)} rows ({feasible} feasible) to "
          f"{out_dir / 'sweep_results.csv'}")
    return 0


def _cmd_bench(args) -> int:
    config = _load_config(args.config)
    arms = _parse_arms(args.arms)
    rows = run_bench(config, arms, args.seed)
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    write_rows(out_dir / "bench_results.csv", rows)
    write_metadata(out_dir / "bench_meta.json", config, command="bench",
                   seed=args.seed, arms=list(arms))
    for row in rows:
        print(f"{row['arm']:>16}  sum_rate={row['sum_rate']:.6f}  "
              f"qos_resid={row['qos_resid']:.3e}  wall_ms={row['wall_ms']:.0f}")
    return 0


# ---------------------------------------------------------------------------
# selftest


def _check_threshold_roundtrip():
    from .harness import dbm_to_watt
    from .metrics import EhParams, harvested_power, psi_threshold

    p = EhParams()
    target = dbm_to_watt(-28.0)
    psi = psi_threshold(target, p)
    assert 2.0e-3 < psi < 2.5e-3, f"threshold {psi} outside the expected range"
    back = harvested_power(psi, p)
    assert abs(back - target) <= 1e-9 * target, f"roundtrip error {back - target}"


def _check_error_ball():
    from .metrics import error_ball_oracle

    rng = np.random.default_rng(0)
    h = rng.standard_normal(3) + 1j * rng.standard_normal(3)
    y = np.outer(h, h.conj())
    analytic, sampled = error_ball_oracle(y, 0.3, 2000, rng)
    assert sampled <= analytic + 1e-12, f"sampled {sampled} beats analytic {analytic}"
    assert sampled >= 0.8 * analytic, f"sampler too far off ({sampled} vs {analytic})"


def _check_beta_bound():
    from .power_split import beta_upper_bound

    assert abs(beta_upper_bound(4.0, 1.0) - 0.75) < 1e-15
    assert abs(beta_upper_bound(5.0, 0.0) - (1.0 - 1e-6)) < 1e-15


def _check_rate_tangency():
    from .channel import EquivalentChannel
    from .metrics import DesignState, RobustRateInputs, worst_case_private_rate
    from .precoder_sdp import rate_tangent_private

    rng = np.random.default_rng(1)
    h = rng.standard_normal(2) + 1j * rng.standard_normal(2)
    eq = EquivalentChannel(h=h, H=np.outer(h, h.conj()), delta_sq=0.05)
    vs = []
    for _ in range(3):
        g = rng.standard_normal(2) + 1j * rng.standard_normal(2)
        vs.append(0.3 * np.outer(g, g.conj()) / float((g.conj() @ g).real))
    hat = DesignState(theta=np.eye(1), beta=np.array([0.7]), V0=vs[0],
                      V=(vs[1], vs[2]))
    expr = rate_tangent_private(eq, 0, hat, 0.7, 0.0, 1.0)
    at_hat = expr.eval({f"V{i}": v for i, v in enumerate(vs)}, {})
    truth = worst_case_private_rate(RobustRateInputs(
        H=eq.H, delta_sq=eq.delta_sq, V0=vs[0], V=(vs[1], vs[2]), beta=0.7,
        sigma_ant_sq=0.0, sigma_dec_sq=1.0), 0)
    assert abs(at_hat - truth) < 1e-10, f"tangency gap {at_hat - truth}"


def _synthetic_scatter_problem(rng, n_ris=4, n_tx=2, n_users=2):
    from .channel import ChannelSet
    from .harness import SystemConfig
    from .manifold_opt import freeze_problem
    from .metrics import DesignState
    from .numerics import random_unitary

    def cplx(*shape):
        return rng.standard_normal(shape) + 1j * rng.standard_normal(shape)

    cs = ChannelSet(g_br=cplx(n_ris, n_tx), h_rm=cplx(n_users, n_ris),
                    f_bm=cplx(n_users, n_tx), user_pos=np.zeros((n_users, 2)))
    vs = []
    for _ in range(n_users + 1):
        g = cplx(n_tx, n_tx)
        vs.append(g @ g.conj().T / n_tx)
    theta = random_unitary(n_ris, rng)
    state = DesignState(theta=theta, beta=np.full(n_users, 0.5), V0=vs[0],
                        V=tuple(vs[1:]), r_common=np.full(n_users, 0.05))
    # -120 dBm keeps the harvest threshold positive, so the rho term below
    # actually participates; anything much lower collapses it to zero
    config = SystemConfig.desk(n_ris=n_ris, n_tx=n_tx, n_users=n_users,
                               harvest_dbm=-120.0, sigma_ant_sq=1e-3,
                               sigma_dec_sq=1e-3)
    return freeze_problem(state, cs, config), state, theta


def _check_scatter_gradient():
    from .manifold_opt import euclidean_grad, init_duals, lagrangian

    rng = np.random.default_rng(2)
    prob, state, theta = _synthetic_scatter_problem(rng)
    duals = init_duals(prob, theta)
    duals.rho[:] = 0.3  # exercise the harvest term too
    grad = euclidean_grad(theta, prob, duals)
    step = 1e-6
    for _ in range(5):
        d = rng.standard_normal(theta.shape) + 1j * rng.standard_normal(theta.shape)
        d /= np.linalg.norm(d)
        num = (lagrangian(theta + step * d, prob, duals, state.r_common)
               - lagrangian(theta - step * d, prob, duals, state.r_common)) / (2 * step)
        ana = 2.0 * float(np.vdot(grad, d).real)
        assert abs(num - ana) <= 1e-5 * max(1.0, abs(num)), \
            f"gradient mismatch {num} vs {ana}"


def _check_retraction():
    from .manifold_opt import UnitaryManifold
    from .numerics import random_unitary

    rng = np.random.default_rng(3)
    theta = random_unitary(5, rng)
    for _ in range(20):
        amb = rng.standard_normal((5, 5)) + 1j * rng.standard_normal((5, 5))
        theta = UnitaryManifold.retract(theta, 0.3 * UnitaryManifold.project(theta, amb))
    drift = np.linalg.norm(theta @ theta.conj().T - np.eye(5))
    assert drift < 1e-10, f"unitarity drift {drift}"


def _check_conic():
    from .precoder_sdp import ConicProblem, LinConstraint, LinExpr, PsdBlock, solve_conic

    rng = np.random.default_rng(4)
    a = rng.standard_normal((3, 3)) + 1j * rng.standard_normal((3, 3))
    c = 0.5 * (a + a.conj().T)
    prob = ConicProblem(maximize=False)
    prob.blocks.append(PsdBlock("X", 3))
    prob.objective.add_mat("X", c)
    trace = LinExpr().add_mat("X", np.eye(3))
    prob.constraints.append(LinConstraint(trace, "==", 1.0, label="trace"))
    sol = solve_conic(prob)
    lo = float(np.linalg.eigvalsh(c)[0])
    assert sol.status == "optimal", sol.detail
    assert abs(sol.objective - lo) < 1e-6, f"{sol.objective} vs eig {lo}"


def selftest() -> int:
    checks = [
        ("harvest-threshold-roundtrip", _check_threshold_roundtrip),
        ("bounded-error-oracle", _check_error_ball),
        ("split-upper-bound", _check_beta_bound),
        ("rate-tangency", _check_rate_tangency),
        ("scattering-gradient", _check_scatter_gradient),
        ("manifold-retraction", _check_retraction),
        ("conic-translation", _check_conic),
    ]
    failures = 0
    for name, check in checks:
        try:
            check()
        except Exception as err:  # noqa: BLE001 - report, do not crash
            failures += 1
            print(f"FAIL {name}: {err}")
        else:
            print(f"PASS {name}")
    return 1 if failures else 0


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.command is None:
        parser.error("a command is required")
    try:
        if args.command == "run":
            return _cmd_run(args)
        if args.command == "sweep":
            return _cmd_sweep(args)
        if args.command == "bench":
            return _cmd_bench(args)
        return selftest()
    except InfeasibleScenario as err:
        print(f"infeasible: {err}", file=sys.stderr)
        return 2
    except Exception as err:  # noqa: BLE001 - map internal errors to exit 1
        print(f"error: {err}", file=sys.stderr)
        return 1


def entry() -> None:
    sys.exit(main())


if __name__ == "__main__":
    entry()
