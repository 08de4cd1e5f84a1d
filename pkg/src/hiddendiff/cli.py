"""Command line entry point: ``hiddendiff {simulate,pf,mbw,bench}``.

Every configuration key may come from ``--config FILE`` (``key=value`` lines)
and be overridden by a flag of the same name.  Exit codes: 0 success, 2
configuration or input error, 3 numerical failure.
"""
from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

from . import bench
from .config import KEYS, ExperimentConfig, build_config, read_pairs
from .errors import ConfigError, HiddenDiffError
from .model import Trajectory, write_trajectory_csv

MAX_THETA_FLAGS = 9

log = logging.getLogger("hiddendiff")


def _options() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", type=Path, help="key=value configuration file")
    common.add_argument("--out-dir", "--out_dir", dest="out_dir", type=Path, default=Path("."))
    common.add_argument("--trajectory", type=Path, help="input t,x,y CSV (pf, mbw)")
    common.add_argument("-v", "--verbose", action="store_true")
    group = common.add_argument_group("configuration overrides")
    for n in range(MAX_THETA_FLAGS + 1):
        group.add_argument(f"--theta{n}", dest=f"theta{n}", default=None, help=argparse.SUPPRESS if n > 1 else None)
    for key in KEYS:
        flags = [f"--{key}"]
        if "_" in key:
            flags.append(f"--{key.replace('_', '-')}")
        group.add_argument(*flags, dest=key, default=None, metavar=key.upper())
    return common


def make_parser() -> argparse.ArgumentParser:
    common = _options()
    parser = argparse.ArgumentParser(prog="hiddendiff", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    sub.add_parser("simulate", parents=[common], help="generate a trajectory CSV")
    sub.add_parser("pf", parents=[common], help="particle filter estimate trace and density snapshots")
    sub.add_parser("mbw", parents=[common], help="modified Baum-Welch fit")
    sub.add_parser("bench", parents=[common], help="particle-filter divergence table")
    return parser


def resolve_config(args) -> ExperimentConfig:
    pairs = {}
    if args.config is not None:
        try:
            pairs.update(read_pairs(args.config.read_text()))
        except OSError as exc:
            raise ConfigError(f"cannot read config {args.config}: {exc}") from exc
    for key in KEYS + [f"theta{n}" for n in range(MAX_THETA_FLAGS + 1)]:
        value = getattr(args, key, None)
        if value is not None:
            pairs[key] = value
    return build_config(pairs)


def _load_or_simulate(args, cfg, out_dir):
    path = args.trajectory or out_dir / "trajectory.csv"
    if path.exists():
        return Trajectory.from_csv(path)
    if args.trajectory is not None:
        raise ConfigError(f"trajectory file not found: {path}")
    traj = bench.generate(cfg)
    write_trajectory_csv(traj, path)
    return traj


def cmd_simulate(cfg, args, out_dir):
    traj = bench.generate(cfg)
    path = out_dir / "trajectory.csv"
    write_trajectory_csv(traj, path)
    (out_dir / "model.txt").write_text(cfg.model().to_text())
    print(f"wrote {path} ({len(traj)} rows)")


def cmd_pf(cfg, args, out_dir):
    traj = _load_or_simulate(args, cfg, out_dir)
    res = bench.filter_trajectory(cfg, traj)
    bench.write_pf_outputs(res, out_dir)
    est = bench.pf_final_estimates(res)
    print("final estimates: " + " ".join(f"{k}={v:.6g}" for k, v in est.items()))


def cmd_mbw(cfg, args, out_dir):
    traj = _load_or_simulate(args, cfg, out_dir)
    res = bench.fit_trajectory(cfg, traj)
    bench.write_mbw_outputs(res, cfg, out_dir)
    rep = res.report
    print(
        f"converged={rep.converged} iterations={rep.n_iterations} "
        f"theta_hat={[round(float(v), 6) for v in res.theta_hat]} "
        f"mirrored={[round(float(v), 6) for v in res.theta_hat_mirrored]} D_hat={res.D_mean:.6g}"
    )


def cmd_bench(cfg, args, out_dir):
    result = bench.run_bench(cfg)
    bench.write_bench_outputs(result, cfg, out_dir)
    header, rows = result.table.rows()
    print(",".join(header))
    for row in rows:
        print(",".join(str(v) for v in row))


COMMANDS = {"simulate": cmd_simulate, "pf": cmd_pf, "mbw": cmd_mbw, "bench": cmd_bench}


def main(argv=None) -> int:
    parser = make_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = resolve_config(args)
        out_dir = args.out_dir
        out_dir.mkdir(parents=True, exist_ok=True)
        (out_dir / "config_resolved.txt").write_text(cfg.to_text())
        print(cfg.to_text(), end="")
        COMMANDS[args.command](cfg, args, out_dir)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except HiddenDiffError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 3
    except OSError as exc:
        print(f"I/O error: {exc.filename or ''}: {exc.strerror or exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
