"""Command line entry point: ``mldt {bounds,simulate,capacity,raptor,check}``.

Exit status: 0 on success, 1 on a configuration error, 2 when ``check``
finds a point outside the analytic bounds.
"""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

from ..analysis import CAPACITY_MODES
from ..errors import ConfigurationError
from .config import Scenario, load_scenarios, parse_snr_grid
from .engine import compare_to_bounds, csv_text, run_scenario, write_dat

log = logging.getLogger("mldt")

EXIT_OK, EXIT_CONFIG, EXIT_CHECK = 0, 1, 2


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_CONFIG, f"{self.prog}: error: {message}\n")


def _common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", type=Path, help="INI file with one scenario per section")
    p.add_argument("--scenario", action="append", help="run only the named section (repeatable)")
    p.add_argument("--seed", type=int, help="override the scenario seed")
    p.add_argument("--out", type=Path, help="CSV output path (default: stdout)")
    p.add_argument("--dat", type=Path, help="also write gnuplot .dat files with this path prefix")
    p.add_argument("--threads", type=int, help="worker threads per scenario")
    p.add_argument("--strict-iterations", action="store_true", help="disable decoder early exit")
    p.add_argument("--timing", action="store_true", help="fill the seconds column (output no longer byte-stable)")
    p.add_argument("-v", "--verbose", action="store_true")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="mldt", description="Multilevel detection simulations")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("bounds", help="closed-form BER bounds")
    _common(p)
    p.add_argument("--p", type=int, action="append", dest="p_users", help="users per resource (default 1, 2, 3)")
    p.add_argument("--snr", default="0:25:5", help="grid in dB: list or start:stop:step")

    p = sub.add_parser("simulate", help="Monte Carlo scenarios from a config file")
    _common(p)

    p = sub.add_parser("capacity", help="Monte Carlo capacity estimates")
    _common(p)
    p.add_argument("--mode", action="append", choices=CAPACITY_MODES)
    p.add_argument("--snr", default="0:20:2")
    p.add_argument("--samples", type=int, default=200_000)

    p = sub.add_parser("raptor", help="Raptor-coded throughput")
    _common(p)
    p.add_argument("--snr", default="0:20:5")
    p.add_argument("--blocks", type=int, default=20)
    p.add_argument("--receiver", choices=("gspa", "spa"), default="gspa")

    p = sub.add_parser("check", help="uncoded MLDT simulation against the analytic bounds")
    _common(p)
    p.add_argument("--p", type=int, action="append", dest="p_users")
    p.add_argument("--snr", default="0:20:5")
    return parser


def _inline_scenarios(args) -> list[Scenario]:
    if args.command == "simulate":
        raise ConfigurationError("simulate needs --config")
    snr = parse_snr_grid(args.snr)
    if args.command == "bounds":
        return [Scenario(name=f"bounds_p{p}", kind="bounds", p_users=p, snr_db=snr) for p in args.p_users or (1, 2, 3)]
    if args.command == "capacity":
        modes = args.mode or ("two_user_bpsk_rayleigh", "qpsk_rayleigh")
        return [Scenario(name=m, kind="capacity", mode=m, snr_db=snr, samples=args.samples) for m in modes]
    if args.command == "raptor":
        return [Scenario(name=f"raptor_{args.receiver}", kind="raptor_mldt", p_users=2, snr_db=snr,
                         blocks=args.blocks, receiver=args.receiver)]
    if args.command == "check":
        return [Scenario(name=f"uncoded_p{p}", kind="uncoded_mldt", p_users=p, snr_db=snr)
                for p in args.p_users or (1, 2, 3)]
    raise ConfigurationError(f"unknown command {args.command!r}")


_COMMAND_KINDS = {
    "bounds": ("bounds",),
    "capacity": ("capacity",),
    "raptor": ("raptor_mldt",),
    "check": ("uncoded_mldt",),
}


def _scenarios(args) -> list[Scenario]:
    if args.config is None:
        scens = _inline_scenarios(args)
    else:
        scens = load_scenarios(args.config)
        if args.scenario:
            missing = set(args.scenario) - {s.name for s in scens}
            if missing:
                raise ConfigurationError(f"no such scenario(s) in {args.config}: {sorted(missing)}")
            scens = [s for s in scens if s.name in args.scenario]
        kinds = _COMMAND_KINDS.get(args.command)
        if kinds is not None:
            scens = [s for s in scens if s.kind in kinds]
            if not scens:
                raise ConfigurationError(f"{args.config} has no scenario of kind {kinds} for '{args.command}'")
    over = {"seed": args.seed, "threads": args.threads}
    if args.strict_iterations:
        over["early_exit"] = False
    return [s.with_overrides(**over) for s in scens]


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    try:
        scens = _scenarios(args)
        chunks, failed = [], False
        for s in scens:
            log.info("running %s (%s, P=%d)", s.name, s.kind, s.p_users)
            res = run_scenario(s, progress=lambda sc, pt: log.info("  %s %g dB: ber=%s", sc.name, pt.snr_db, pt.ber))
            chunks.append(csv_text(res, timing=args.timing))
            if args.dat is not None:
                write_dat(res, Path(f"{args.dat}_{s.name}.dat"))
            if args.command == "check":
                report = compare_to_bounds(res)
                for line in report.lines:
                    print(f"{s.name}: {line}", file=sys.stderr)
                failed |= not report.passed
    except ConfigurationError as exc:
        print(f"mldt: configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    text = "".join(chunks)
    if args.out is None:
        sys.stdout.write(text)
    else:
        args.out.write_text(text)
    return EXIT_CHECK if failed else EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
