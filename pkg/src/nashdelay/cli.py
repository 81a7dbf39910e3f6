"""Command-line front end: ``nashdelay simulate|analyze|sweep|reproduce``."""

from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import replace
from fractions import Fraction
from pathlib import Path

import numpy as np

from . import game as gm
from . import seeking as sk
from . import stability as st
from . import topology as tp

log = logging.getLogger("nashdelay")

EXIT_OK = 0
EXIT_ERROR = 1
EXIT_DIVERGED = 2
EXIT_MARGINAL = 3

SIM_EXIT = {sk.CONVERGED: EXIT_OK, sk.DIVERGED: EXIT_DIVERGED, sk.MAX_STAGES: EXIT_MARGINAL}
VERDICT_EXIT = {st.CONVERGES: EXIT_OK, st.DIVERGES: EXIT_DIVERGED, st.MARGINAL: EXIT_MARGINAL}

DEFAULT_GRAPH = {"example1": "wheel:5", "example3": "ring:20"}

# only Case 2 is fully pinned down; other cases are left as user-configurable slots
EXAMPLE3_CASES = {2: {"graph": "ring", "tau": 4, "xi": 0.2, "stages": 50}}


def _game_and_graph(args):
    game = gm.resolve_game(args.game)
    graph_src = args.graph or DEFAULT_GRAPH.get(args.game.partition(":")[0])
    if graph_src is None:
        graph_src = f"ring:{game.n}"
    graph = tp.resolve_graph(graph_src)
    return game, graph


def _initial(game, args):
    if args.init == "split":
        return sk.split_initial(game.n)
    return sk.default_initial(game.n, args.seed)


def _out_dir(args) -> Path:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def cmd_simulate(args) -> int:
    game, graph = _game_and_graph(args)
    cfg = sk.SeekingConfig(xi=args.xi, tau=args.tau, max_stages=args.max_stages,
                           termination_delta=args.delta, record_estimations=args.record_estimations,
                           blowup=args.blowup)
    s0, e0 = _initial(game, args)
    traj = sk.simulate(game, graph, cfg, s0, e0)
    path = _out_dir(args) / "trajectory.csv"
    traj.to_csv(path)
    last = int(traj.stages[-1])
    print(f"status: {traj.status}")
    if traj.converged:
        print(f"terminal stage T_delta = {traj.terminal_stage}")
    elif traj.status == sk.DIVERGED:
        print(f"blow-up threshold exceeded at stage {last}")
    else:
        print(f"no termination within {last} stages (final error {traj.profile_errors[-1]:.6g})")
    print(f"trajectory written to {path}")
    return SIM_EXIT[traj.status]


def cmd_analyze(args) -> int:
    if args.table1:
        ok = print_table1(range(3, 11))
        return EXIT_OK if ok else EXIT_ERROR
    game, graph = _game_and_graph(args)
    report = st.analyze(game, graph, args.xi, args.tau, lmi=args.lmi, budget=args.budget, seed=args.seed)
    d1, d2 = st.delta1_exact(graph), st.delta2_exact(graph)
    print(f"delta1 = {d1} ({float(d1):.6g})")
    print(f"delta2 = {d2} ({float(d2):.6g})")
    if report.rho_H is not None:
        print(f"rho(H) = {report.rho_H:.10g}")
    print(f"rho(companion) = {report.rho_companion:.10g}")
    print(f"verdict: {report.verdict}")
    print(f"lmi: {report.lmi}")
    path = _out_dir(args) / "report.json"
    path.write_text(json.dumps(report.to_dict(), indent=2))
    print(f"report written to {path}")
    return VERDICT_EXIT[report.verdict]


def print_table1(sizes) -> bool:
    ok = True
    print(f"{'graph':9s} {'n':>3s} {'delta1':>8s} {'closed':>8s} {'delta2':>10s} {'closed':>10s}")
    for kind, (f1, f2) in st.CLOSED_FORMS.items():
        for n in sizes:
            if kind == "wheel" and n < 4:
                print(f"{kind:9s} {n:3d} undefined (a wheel needs a rim of at least 3 nodes)")
                continue
            g = tp.make_graph(kind, n)
            d1, d2 = st.delta1_exact(g), st.delta2_exact(g)
            match = d1 == f1(n) and d2 == f2(n)
            ok &= match
            print(f"{kind:9s} {n:3d} {str(d1):>8s} {str(f1(n)):>8s} {str(d2):>10s} {str(f2(n)):>10s}"
                  f" {'ok' if match else 'MISMATCH'}")
    return ok


def _frange(args) -> list[float]:
    if args.values:
        return [float(v) for v in args.values.split(",")]
    if args.start is None or args.stop is None or args.step is None:
        raise ValueError("sweep needs --values or --start/--stop/--step")
    vals = np.arange(args.start, args.stop + args.step / 2, args.step)
    return [round(float(v), 12) for v in vals]


def _sweep_xi_point(task):
    game, graph, cfg, s0, e0 = task
    traj = sk.simulate(game, graph, cfg, s0, e0)
    rho = st.companion_radius(game, graph, cfg.xi, cfg.tau)
    return traj.status, traj.terminal_stage, int(traj.stages[-1]), rho


def _xi_max_point(task):
    game, graph, tau, method, width = task
    if method == "simulation":
        return sk.xi_max_by_simulation(game, graph, tau, width=width)
    return st.xi_max_by_spectrum(game, graph, tau, width=width)


def _map(fn, tasks, workers: int):
    if workers <= 1:
        return [fn(t) for t in tasks]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, tasks))


def cmd_sweep(args) -> int:
    values = _frange(args)
    if not values:
        raise ValueError("empty sweep range")
    out = _out_dir(args) / f"sweep_{args.param}.csv"
    if args.param == "xi":
        game, graph = _game_and_graph(args)
        s0, e0 = _initial(game, args)
        base = sk.SeekingConfig(xi=values[0], tau=args.tau, max_stages=args.max_stages,
                                termination_delta=args.delta, blowup=args.blowup)
        tasks = [(game, graph, replace(base, xi=v), s0, e0) for v in values]
        rows = _map(_sweep_xi_point, tasks, args.workers)
        header = ["xi", "status", "terminal_stage", "last_stage", "rho_companion"]
        lines = [[v, status, "" if T is None else T, last, f"{rho:.17g}"]
                 for v, (status, T, last, rho) in zip(values, rows)]
    else:
        if args.param == "tau":
            game, graph = _game_and_graph(args)
            tasks = [(game, graph, int(v), args.method, args.width) for v in values]
        else:
            family = args.game.partition(":")[0]
            kind = (args.graph or "ring").partition(":")[0]
            tasks = []
            for v in values:
                n = int(v)
                game = gm.example3(n) if family == "example3" else gm.random_game(n, args.seed)
                tasks.append((game, tp.make_graph(kind, n), args.tau, args.method, args.width))
        xis = _map(_xi_max_point, tasks, args.workers)
        header = [args.param, "xi_max"]
        lines = [[int(v), f"{x:.6f}"] for v, x in zip(values, xis)]
    with out.open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        writer.writerows(lines)
    for line in lines:
        print(*line, sep="\t")
    print(f"sweep written to {out}")
    return EXIT_OK


def cmd_reproduce(args) -> int:
    out = _out_dir(args)
    which = args.which
    if which == "table1":
        return EXIT_OK if print_table1(range(3, 11)) else EXIT_ERROR
    if which in ("example1", "example2"):
        game, graph = gm.example1(), tp.make_graph("wheel", 5)
        s_star = gm.nash_equilibrium(game)
        print("NE:", " ".join(f"{Fraction(v).limit_denominator(10000)}" for v in s_star))
        s0, e0 = sk.split_initial(5)
    if which == "example1":
        for tau in (3, 4):
            cfg = sk.SeekingConfig(xi=0.08, tau=tau, max_stages=args.max_stages)
            traj = sk.simulate(game, graph, cfg, s0, e0)
            traj.to_csv(out / f"example1_tau{tau}.csv")
            rho = st.companion_radius(game, graph, 0.08, tau)
            res = st.feasibility_search(st.delay_lmi_blocks(game, graph, tau, 0.08), budget=args.budget, seed=args.seed)
            print(f"tau={tau}: {traj.status} (last stage {traj.stages[-1]}), rho(companion)={rho:.6f}, "
                  f"LMI {'feasible' if res.found else 'search failed'}")
        return EXIT_OK
    if which == "example2":
        print(f"delta1 = {st.delta1_exact(graph)}, delta2 = {st.delta2_exact(graph)}")
        cfg = sk.SeekingConfig(xi=0.18, tau=1, max_stages=args.max_stages)
        traj = sk.simulate(game, graph, cfg, s0, e0)
        traj.to_csv(out / "example2_xi018.csv")
        print(f"xi=0.18: {traj.status}, T_delta={traj.terminal_stage}, log-error slope={traj.log_error_slope():.4f}")
        rows = []
        for xi in np.round(np.arange(0.05, 1.0001, 0.05), 10):
            t = sk.simulate(game, graph, replace(cfg, xi=float(xi)), s0, e0)
            rho = st.spectral_radius(st.build_H(game, graph, float(xi)))
            rows.append([float(xi), t.status, "" if t.terminal_stage is None else t.terminal_stage, f"{rho:.17g}"])
            print(f"xi={xi:.2f}: {t.status:18s} T={t.terminal_stage} rho(H)={rho:.4f}")
        with (out / "example2_terminal_stages.csv").open("w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["xi", "status", "terminal_stage", "rho_H"])
            w.writerows(rows)
        return EXIT_OK
    if which == "example3":
        game = gm.example3()
        s_star = gm.nash_equilibrium(game)
        print(f"total utility at NE: {gm.total_payoff(game, s_star):.4f}")
        case = EXAMPLE3_CASES[2]
        graph = tp.make_graph(case["graph"], 20)
        cfg = sk.SeekingConfig(xi=case["xi"], tau=case["tau"], max_stages=case["stages"])
        s0, e0 = sk.split_initial(20)
        traj = sk.simulate(game, graph, cfg, s0, e0)
        traj.to_csv(out / "example3_case2.csv")
        rho = st.companion_radius(game, graph, case["xi"], case["tau"])
        print(f"case 2 (ring, tau=4, xi=0.2): error {traj.profile_errors[0]:.4g} -> {traj.profile_errors[-1]:.4g} "
              f"over {case['stages']} stages, rho(companion)={rho:.4f}")
        return EXIT_OK
    raise ValueError(f"unknown reproduction target {which!r}")


def _common(p, sim=True):
    p.add_argument("--game", default="example1", help="game file or preset (example1, example3[:N], random:N[:SEED])")
    p.add_argument("--graph", default=None, help="graph file or kind:n (ring, complete, star, wheel)")
    p.add_argument("--xi", type=float, default=0.08)
    p.add_argument("--tau", type=int, default=1)
    p.add_argument("--out", default="out")
    p.add_argument("--seed", type=int, default=0)
    if sim:
        p.add_argument("--delta", type=float, default=1e-4)
        p.add_argument("--max-stages", type=int, default=5000)
        p.add_argument("--blowup", type=float, default=1e6)
        p.add_argument("--init", choices=("split", "random"), default="split",
                       help="split: first half at -1, rest at +1; random: seeded uniform")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="nashdelay", description=__doc__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="run the delayed seeking dynamics")
    _common(p)
    p.add_argument("--record-estimations", action="store_true")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("analyze", help="stability bounds, spectral radii and the delay LMI")
    _common(p, sim=False)
    p.add_argument("--lmi", action="store_true", help="run the LMI feasibility search (tau >= 3)")
    p.add_argument("--budget", type=int, default=5000)
    p.add_argument("--table1", action="store_true", help="compare delta bounds with closed forms, n = 3..10")
    p.set_defaults(func=cmd_analyze)

    p = sub.add_parser("sweep", help="sweep xi, tau or n")
    _common(p)
    p.add_argument("--param", choices=("xi", "tau", "n"), default="xi")
    p.add_argument("--values", default=None, help="comma-separated grid")
    p.add_argument("--start", type=float)
    p.add_argument("--stop", type=float)
    p.add_argument("--step", type=float)
    p.add_argument("--method", choices=("spectrum", "simulation"), default="spectrum")
    p.add_argument("--width", type=float, default=1e-3)
    p.add_argument("--workers", type=int, default=1)
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("reproduce", help="rerun a worked example")
    p.add_argument("which", choices=("example1", "example2", "example3", "table1"))
    p.add_argument("--out", default="out")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--max-stages", type=int, default=5000)
    p.add_argument("--budget", type=int, default=5000)
    p.set_defaults(func=cmd_reproduce)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
