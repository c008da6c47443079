"""Command-line entry point: ``mrfm-spincat run|sweep|analyze|validate``."""

import argparse
import sys
from collections.abc import Sequence

from loguru import logger

from . import __version__
from .bridges import LoguruBridge
from .config import apply_overrides, load_config, render_config, sweep_members
from .enums import RunMode
from .errors import ConfigError, SpinCatError
from .managers import SimulationSignalManager
from .runner import analyze_directory, run

EXIT_OK = 0
EXIT_SIMULATION_ERROR = 2
EXIT_IO_ERROR = 3


def _tau_list(text: str) -> list[float]:
    try:
        return [float(item) for item in text.split(",") if item.strip()]
    except ValueError as ex:
        raise argparse.ArgumentTypeError(f"not a comma-separated list of times: {text!r}") from ex


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="mrfm-spincat",
        description="Single-spin MRFM cantilever simulator",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    verbosity = parser.add_mutually_exclusive_group()
    verbosity.add_argument("-v", "--verbose", action="store_true", help="debug logging")
    verbosity.add_argument("-q", "--quiet", action="store_true", help="warnings only")

    sub = parser.add_subparsers(dest="command", required=True)
    for name, help_text in (
        ("run", "execute a configuration"),
        ("sweep", "execute a sweep configuration"),
        ("validate", "check a configuration and print its effective form"),
    ):
        cmd = sub.add_parser(name, help=help_text)
        cmd.add_argument("config", help="YAML run configuration")
        cmd.add_argument("--out", help="output directory (overrides outputs.dir)")
        cmd.add_argument("--workers", type=int, help="worker count (overrides run.workers)")
        cmd.add_argument("--dt", type=float, help="time step (overrides run.dt)")
        cmd.add_argument(
            "--snapshots", type=_tau_list, help="comma-separated snapshot times"
        )

    analyze = sub.add_parser("analyze", help="re-analyse stored snapshots")
    analyze.add_argument("directory", help="directory holding snapshot_*.tsv files")
    analyze.add_argument("--threshold", type=float, help="peak threshold fraction")
    return parser


def configure_logging(verbose: bool = False, quiet: bool = False) -> None:
    level = "DEBUG" if verbose else "WARNING" if quiet else "INFO"
    logger.remove()
    logger.add(sys.stderr, level=level, format="<level>{level: <8}</level> {message}")
    logger.enable("mrfm_spincat")


def _load(args: argparse.Namespace):
    cfg = load_config(args.config)
    return apply_overrides(
        cfg, out=args.out, workers=args.workers, dt=args.dt, snapshots=args.snapshots
    )


def _dispatch(args: argparse.Namespace) -> int:
    match args.command:
        case "validate":
            cfg = _load(args)
            sys.stdout.write(render_config(cfg))
            if cfg.mode is RunMode.SWEEP:
                logger.info("sweep expands to {} runs", len(sweep_members(cfg)))
            logger.info("configuration is valid")
        case "run" | "sweep":
            cfg = _load(args)
            if args.command == "sweep" and cfg.mode is not RunMode.SWEEP:
                raise ConfigError("run.mode: the sweep verb needs mode: sweep", field="run.mode")
            result = run(cfg)
            logger.info("wrote {} files to {}", len(result.files), result.out_dir)
            return result.exit_status
        case "analyze":
            rows = analyze_directory(args.directory, args.threshold)
            logger.info("analysed {} snapshots in {}", len(rows), args.directory)
    return EXIT_OK


def main(argv: Sequence[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    configure_logging(args.verbose, args.quiet)
    bridge = LoguruBridge()
    if args.verbose:
        bridge.connect(SimulationSignalManager())
        bridge.start()
    try:
        return _dispatch(args)
    except SpinCatError as ex:
        logger.error("{}: {}", type(ex).__name__, ex)
        return EXIT_SIMULATION_ERROR
    except OSError as ex:
        logger.error("I/O error: {}", ex)
        return EXIT_IO_ERROR
    finally:
        bridge.stop()
        bridge.disconnect()


if __name__ == "__main__":
    sys.exit(main())
