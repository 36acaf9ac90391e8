"""Command line entry point: ``tlf <subcommand> ...``.

Exit status is 0 on success, 1 on invalid input or usage, 2 on I/O failure.
"""

from __future__ import annotations

import argparse
import dataclasses
import logging
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

from . import stages
from .config import Config
from .ingest import FRAMES_DIR, load_episode, read_truth, write_episode, write_frames
from .model import Activity, TlfError
from .synth import default_scenario, generate_episode, generate_frames, load_scenario

logger = logging.getLogger("tlf")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(f"{self.prog}: error: {message}")


def _common() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(add_help=False)
    p.add_argument("--config", metavar="PATH", help="flat key = value configuration file")
    p.add_argument("--jobs", type=int, default=1, metavar="N", help="episodes processed in parallel")
    p.add_argument("--fps", type=float, metavar="F", help="target frame rate (default 15)")
    p.add_argument("--threshold", action="append", default=[], metavar="A=V",
                   help="detection threshold for activity A; repeatable")
    p.add_argument("--out", metavar="DIR", help="output directory")
    p.add_argument("-v", "--verbose", action="store_true")
    return p


def build_parser() -> argparse.ArgumentParser:
    common = _common()
    parser = _Parser(prog="tlf", description="Object tracks, analysis regions and activity "
                     "timelines from detection and classifier-score records.")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("simulate", parents=[common], help="write a synthetic episode")
    p.add_argument("--scenario", metavar="FILE", help="scenario JSON (default: built-in)")
    p.add_argument("--seed", type=int, help="override the scenario seed")
    p.add_argument("--duration", type=float, help="duration of the built-in scenario in seconds")
    p.add_argument("--frames", action="store_true", help="also render raw frames")

    for name, help_ in [("track", "tracks and object regions"),
                        ("fuse", "activity timelines and HCP counts"),
                        ("report", "SVG figures and summary tables")]:
        p = sub.add_parser(name, parents=[common], help=help_)
        p.add_argument("episode", help="episode directory")

    p = sub.add_parser("regions", parents=[common], help="object regions; newborn region")
    p.add_argument("episode")
    p.add_argument("--newborn", action="store_true", help="also select the newborn region")

    p = sub.add_parser("resample", parents=[common], help="resample tracks, regions, frames")
    p.add_argument("episode")
    p.add_argument("--crops", action="store_true", help="write region crops of resampled frames")

    p = sub.add_parser("evaluate", parents=[common], help="score artifacts against ground truth")
    p.add_argument("episode")
    p.add_argument("--truth", metavar="FILE", help="ground truth file (default: episode's)")

    p = sub.add_parser("kfcv", parents=[common], help="cross-validated thresholds")
    p.add_argument("episodes", nargs="+")
    p.add_argument("--k", default="auto", help="number of folds or 'auto' (one per episode)")
    p.add_argument("--grid", type=float, help="threshold grid step (default 0.01)")

    p = sub.add_parser("pipeline", parents=[common],
                       help="track, regions, resample, fuse and evaluate")
    p.add_argument("episodes", nargs="+")

    p = sub.add_parser("config", parents=[common], help="show the effective configuration")
    p.add_argument("--dump", action="store_true", help="print every key with its value")
    return parser


def load_config(args) -> Config:
    config = Config.load(args.config)
    pairs = {}
    if args.fps is not None:
        pairs["target_fps"] = str(args.fps)
    for item in args.threshold:
        name, sep, value = item.partition("=")
        if not sep:
            raise UsageError(f"--threshold expects ACTIVITY=VALUE, got {item!r}")
        pairs[f"threshold.{Activity(name.strip()).value}"] = value
    if getattr(args, "grid", None) is not None:
        pairs["kfcv_grid_step"] = str(args.grid)
    return config.updated(pairs) if pairs else config


def _out(args, default: str | None = None) -> Path:
    if args.out:
        return Path(args.out)
    if default is None:
        raise UsageError("--out is required")
    return Path(default)


def _episode(path, config: Config, truth=None):
    ep = load_episode(path, config)
    if truth is not None:
        ep = dataclasses.replace(ep, truth=read_truth(truth, ep.meta.frame_count))
    return ep


def _pipeline_one(path: str, outdir: str, config: Config) -> str:
    ep = load_episode(path, config)
    stages.run_pipeline(ep, outdir, config)
    return outdir


def cmd_simulate(args, config):
    scenario = load_scenario(args.scenario) if args.scenario else default_scenario(
        args.duration or 300.0, seed=args.seed or 0)
    if args.seed is not None:
        scenario.seed = args.seed
    out = _out(args)
    episode, _ = generate_episode(scenario)
    write_episode(out, episode)
    if args.frames:
        write_frames(out / FRAMES_DIR, generate_frames(scenario))
    print(out)


def cmd_track(args, config):
    stages.run_track(_episode(args.episode, config), _out(args, args.episode), config)


def cmd_regions(args, config):
    region = stages.run_regions(_episode(args.episode, config), _out(args, args.episode),
                                config, newborn=args.newborn)
    if region is not None:
        x, y = region.top_left
        print(f"newborn region top-left {x} {y} side {region.side_px}")


def cmd_resample(args, config):
    grid = stages.run_resample(_episode(args.episode, config), _out(args, args.episode),
                               config, crops=args.crops)
    print(f"{len(grid)} samples at {grid.target_fps:g} fps")


def cmd_fuse(args, config):
    stages.run_fuse(_episode(args.episode, config), _out(args, args.episode), config)


def cmd_evaluate(args, config):
    ep = _episode(args.episode, config, args.truth)
    out = _out(args, args.episode)
    stages.run_evaluate(ep, out, config)
    sys.stdout.write((out / stages.REPORT_TXT).read_text(encoding="utf-8"))


def cmd_report(args, config):
    print(stages.run_report(_episode(args.episode, config), _out(args, args.episode), config))


def cmd_kfcv(args, config):
    k = None if args.k == "auto" else int(args.k)
    episodes = [load_episode(p, config) for p in args.episodes]
    reports = stages.kfcv_episodes(episodes, config, k)
    out = _out(args)
    stages.write_kfcv(out, reports)
    sys.stdout.write((out / "kfcv.txt").read_text(encoding="utf-8"))


def cmd_pipeline(args, config):
    out = _out(args)
    if len(args.episodes) == 1:
        jobs = [(args.episodes[0], str(out))]
    else:
        ids = [load_episode(p, config).meta.episode_id for p in args.episodes]
        if len(set(ids)) != len(ids):
            raise UsageError("episode ids must be unique")
        jobs = [(p, str(out / i)) for p, i in zip(args.episodes, ids)]
    if args.jobs > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=args.jobs) as pool:
            done = list(pool.map(_pipeline_one, *zip(*jobs), [config] * len(jobs)))
    else:
        done = [_pipeline_one(p, o, config) for p, o in jobs]
    for d in done:
        report = Path(d) / stages.REPORT_TXT
        if report.exists():
            sys.stdout.write(report.read_text(encoding="utf-8"))


def cmd_config(args, config):
    sys.stdout.write(config.dumps())


COMMANDS = {
    "simulate": cmd_simulate, "track": cmd_track, "regions": cmd_regions,
    "resample": cmd_resample, "fuse": cmd_fuse, "evaluate": cmd_evaluate,
    "report": cmd_report, "kfcv": cmd_kfcv, "pipeline": cmd_pipeline, "config": cmd_config,
}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                            format="%(levelname)s: %(message)s")
        config = load_config(args)
        COMMANDS[args.command](args, config)
    except UsageError as exc:
        print(exc, file=sys.stderr)
        return 1
    except (TlfError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
