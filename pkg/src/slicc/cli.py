"""Command-line entry point: ``slicc {train,solve-game,report,dump-trajectory}``.

Exit codes: 0 success, 1 usage, 2 config/input, 3 runtime failure.
"""
from __future__ import annotations

import argparse
import json
import logging
import math
import os
import sys
from pathlib import Path

import numpy as np

from . import config as config_mod
from .env import TransportEnv, dump_trajectory
from .errors import ConfigError, DimensionError, InputError, SliccError
from .report import ReportError, build_report, load_run, plot_report
from .stackelberg import PayoffBimatrix, solve
from .trainer import TrainConfig, greedy_policy, load_networks, run_episode, save_run, train

EXIT_OK, EXIT_USAGE, EXIT_CONFIG, EXIT_RUNTIME = 0, 1, 2, 3
OUT_ENV_VAR = "SLICC_OUT"

log = logging.getLogger("slicc")


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def default_out_root() -> Path:
    return Path(os.environ.get(OUT_ENV_VAR, "runs"))


def cmd_train(args) -> int:
    overrides = {"seed": args.seed, "algorithm": args.algorithm, "prototype": args.prototype,
                 "episodes": args.episodes}
    spec = config_mod.load_spec(args.config, overrides)
    out_root = Path(args.out) if args.out else (Path(spec.out_dir) if spec.out_dir
                                                 else default_out_root() / spec.name)
    run_dirs = []
    for cfg in spec.variants:
        log.info("training %s (%d episodes)", cfg.name, cfg.episodes)
        result = train(cfg, progress_every=args.progress)
        run_dir = save_run(result, out_root / cfg.name, fixed_timestamp=args.fixed_timestamp)
        run_dirs.append(run_dir)
        last = result.stats[-min(100, len(result.stats)):]
        log.info("%s done: trailing success %.2f, combined reward %.3f, %.0fs", cfg.name,
                 np.mean([s.success for s in last]), np.mean([s.r_combined for s in last]),
                 result.wall_time)
    if spec.plots and len(run_dirs) > 0:
        runs = [load_run(d) for d in run_dirs]
        try:
            report = build_report(runs, window=min(args.window, min(len(r.stats) for r in runs)))
        except ReportError as exc:
            log.warning("skipping experiment report: %s", exc)
        else:
            (out_root / "report.json").write_text(report.to_json())
            plot_report(runs, out_root, smooth_window=args.smooth, success_window=args.window)
    print(json.dumps({"runs": [str(d) for d in run_dirs]}))
    return EXIT_OK


def _parse_game(text: str) -> PayoffBimatrix:
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise InputError(f"invalid JSON at line {exc.lineno}, column {exc.colno}: {exc.msg}") from None
    if not isinstance(data, dict) or "leader" not in data or "follower" not in data:
        raise InputError('expected an object with "leader" and "follower" keys')
    leader, follower = data["leader"], data["follower"]
    if (not isinstance(leader, list) or not leader
            or not all(isinstance(row, list) for row in leader)):
        raise InputError('"leader" must be a non-empty list of rows')
    widths = {len(row) for row in leader}
    if len(widths) != 1:
        raise InputError(f'"leader" is ragged (row lengths {sorted(widths)})')
    if not isinstance(follower, list):
        raise InputError('"follower" must be a list')
    for v in [x for row in leader for x in row] + follower:
        if isinstance(v, bool) or not isinstance(v, (int, float)):
            raise InputError(f"non-numeric payoff {v!r}")
        if not math.isfinite(v):
            raise InputError(f"non-finite payoff {v!r}")
    return PayoffBimatrix(np.array(leader, dtype=float), np.array(follower, dtype=float))


def cmd_solve_game(args) -> int:
    text = Path(args.input).read_text() if args.input and args.input != "-" else sys.stdin.read()
    played, expected = solve(_parse_game(text))
    print(json.dumps({"leader_action": played.leader_action,
                      "follower_action": played.follower_action,
                      "expected": [expected.leader_action, expected.follower_action]}))
    return EXIT_OK


def cmd_report(args) -> int:
    runs = []
    for d in args.runs:
        d = Path(d)
        if (d / "metrics.csv").exists():
            runs.append(load_run(d))
        else:
            runs.extend(load_run(sub) for sub in sorted(d.iterdir()) if (sub / "metrics.csv").exists())
    if not runs:
        raise ReportError("no completed runs found")
    report = build_report(runs, window=args.window)
    text = report.to_json()
    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        (out / "report.json").write_text(text)
        if not args.no_plots:
            plot_report(runs, out, smooth_window=args.smooth, success_window=args.window)
    sys.stdout.write(text)
    return EXIT_OK


def cmd_dump_trajectory(args) -> int:
    if args.run:
        cfg = TrainConfig.from_dict(json.loads((Path(args.run) / "config.json").read_text()))
        act = greedy_policy(cfg, load_networks(args.run))
    else:
        cfg = (config_mod.load_spec(args.config).variants[0] if args.config else TrainConfig())
        act = None
    if args.seed is not None:
        cfg.env.seed = args.seed
    env = TransportEnv(cfg.env)
    rng = np.random.default_rng(cfg.env.seed)
    if act is None:
        from .stackelberg import ActionPair

        def act(o_p, o_i, epsilon, rng, _a=ActionPair(args.action, args.action)):
            return _a
    out = open(args.out, "w") if args.out and args.out != "-" else sys.stdout
    try:
        for _ in range(args.episodes):
            trajectory, _ = run_episode(cfg, env, act, 0.0, rng)
            dump_trajectory(trajectory, out)
    finally:
        if out is not sys.stdout:
            out.close()
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="slicc", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("train", help="train every variant of an experiment config")
    p.add_argument("--config", required=True)
    p.add_argument("--seed", type=int)
    p.add_argument("--out", help=f"output root (default: ${OUT_ENV_VAR} or ./runs)")
    p.add_argument("--algorithm", choices=("slicc", "centralized"))
    p.add_argument("--prototype", choices=("alpha", "beta", "centralized_g"))
    p.add_argument("--episodes", type=int)
    p.add_argument("--fixed-timestamp", action="store_true",
                   help="write a constant manifest timestamp for byte-identical outputs")
    p.add_argument("--progress", type=int, default=100, help="log every N episodes (0: off)")
    p.add_argument("--window", type=int, default=100)
    p.add_argument("--smooth", type=int, default=50)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("solve-game", help="solve one bimatrix game read as JSON")
    p.add_argument("--input", help="JSON file (default: stdin)")
    p.set_defaults(func=cmd_solve_game)

    p = sub.add_parser("report", help="aggregate completed runs")
    p.add_argument("runs", nargs="+", help="run directories or directories containing runs")
    p.add_argument("--out", help="write report.json and figures here")
    p.add_argument("--window", type=int, default=100)
    p.add_argument("--smooth", type=int, default=50)
    p.add_argument("--no-plots", action="store_true")
    p.add_argument("--fixed-timestamp", action="store_true", help="accepted for symmetry; reports carry no timestamp")
    p.set_defaults(func=cmd_report)

    p = sub.add_parser("dump-trajectory", help="roll out episodes and print JSON lines")
    p.add_argument("--run", help="run directory; uses its checkpoints greedily")
    p.add_argument("--config", help="config file (ignored with --run)")
    p.add_argument("--seed", type=int, help="environment seed")
    p.add_argument("--episodes", type=int, default=1)
    p.add_argument("--action", type=int, default=0, choices=range(9),
                   help="fixed action for both robots when no --run is given")
    p.add_argument("--out", help="output file (default: stdout)")
    p.set_defaults(func=cmd_dump_trajectory)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.INFO,
                        format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)
    try:
        return args.func(args)
    except (ConfigError, InputError, DimensionError, ReportError) as exc:
        print(f"slicc: error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (SliccError, OSError, FloatingPointError) as exc:
        print(f"slicc: runtime error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
