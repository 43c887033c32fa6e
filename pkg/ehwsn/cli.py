#!/usr/bin/python3
import logging
import os.path
import sys
from dataclasses import replace
from optparse import OptionParser

import numpy as np
import pandas as pd
from tqdm import tqdm

import ehwsn
from ehwsn import consts
from ehwsn.errors import ConfigError, EhwsnError

COMMANDS = ["solve", "round", "oracle", "check"]


def main(argv=None):
    """
    ehwsn can be called from command-line. Please type `ehwsn` without input arguments or `ehwsn --help` for
    command-line arguments

    :param argv: list of str, arguments (default: sys.argv[1:])
    :return: int, exit code
    """
    argv = sys.argv[1:] if argv is None else argv
    parser = create_parser()
    if len(argv) == 0:
        print("No arguments supplied")
        parser.print_help()
        sys.exit()
    (options, args) = parser.parse_args(argv)
    logging.basicConfig(
        level=logging.DEBUG if options.verbose else logging.WARNING,
        format="%(asctime)s %(levelname)s %(name)s: %(message)s",
    )
    try:
        if len(args) != 1 or args[0] not in COMMANDS:
            raise ConfigError(f"Please provide one command out of {', '.join(COMMANDS)}")
        command = args[0]
        if command == "check":
            run_check(options)
        else:
            scenario = ehwsn.Scenario(make_config(options))
            if not os.path.isdir(options.outpath):
                print(f"Output path {options.outpath} does not exist, creating path...")
                os.makedirs(options.outpath)
            if command == "solve":
                run_solve(scenario, options)
            elif command == "round":
                run_round(scenario, options)
            else:
                run_oracle(scenario, options)
    except EhwsnError as e:
        print(f"error[{e.category}]: {e}", file=sys.stderr)
        return e.exit_code
    return 0


def make_config(options):
    """
    Read the scenario and apply the command-line overrides.

    :param options: parsed options
    :return: ScenarioConfig
    """
    if not options.config:
        raise ConfigError("No scenario provided, please use -c option with a config file or bundled scenario name")
    config = ehwsn.io.read_config(options.config)
    overrides = {}
    if options.channel is not None:
        overrides["channel"] = options.channel
    if options.transfer is not None:
        overrides["transfer"] = options.transfer
    for name in ("seed_gains", "seed_flows", "seed_energy", "slots"):
        if getattr(options, name) is not None:
            overrides[name] = getattr(options, name)
    if options.tol is not None:
        if options.tol <= 0:
            raise ConfigError(f"Tolerance must be positive, got {options.tol}")
        overrides["solver"] = replace(config.solver, tol=options.tol)
    config = config.replace(**overrides)
    config.validate()
    print(f"Scenario          : {options.config}")
    print(f"Channel           : {config.channel}")
    print(f"Energy transfer   : {'enabled' if config.transfer else 'disabled'}")
    print(f"Seeds             : gains {config.seed_gains}, flows {config.seed_flows}, energy {config.seed_energy}")
    print(f"Carry-over        : {'enabled' if config.carry_over else 'disabled'}")
    print(f"Tolerance         : {config.solver.tol:g}")
    print(f"Output path       : {options.outpath}")
    print(f"File prefix       : {options.prefix}")
    return config


def slot_index(scenario, options):
    if options.slot < 1 or options.slot > scenario.n_slots:
        raise ConfigError(f"Slot {options.slot} is outside the round of {scenario.n_slots} slots")
    return options.slot - 1


def run_solve(scenario, options):
    k = slot_index(scenario, options)
    print(f"Slot              : {k + 1} of {scenario.n_slots}")
    result = scenario.run_slot(k, strict=True)
    s = result.solution
    print(f"Total delay       : {s.objective:.6g} (exact capacities: {s.exact_objective:.6g})")
    print(f"KKT residual      : {result.kkt.max_residual:.3g}")
    if s.low_sinr:
        print(f"Low SINR links    : {', '.join(s.low_sinr)}")
    fns = ehwsn.api.export_results(result, path=options.outpath, prefix=options.prefix)
    fns.append(
        ehwsn.io.write_solution(
            os.path.join(options.outpath, f"{options.prefix}_solution.json"),
            result.problem,
            s,
            meta={"scenario": scenario.config.name, "slot": k + 1},
        )
    )
    for fn in fns:
        print(f"Written           : {fn}")


def run_round(scenario, options):
    print(f"Slots             : {scenario.n_slots}")
    print(f"====================")
    print(f"Start processing:")
    print(f"====================")
    slots = []
    work = tqdm(scenario.iter_round(), total=scenario.n_slots)
    for result in work:
        work.set_description("Solved slot {:4d}".format(result.index + 1))
        slots.append(result)
    result = ehwsn.RoundResult(slots=slots)
    infeasible = [s.index + 1 for s in slots if not s.feasible]
    if infeasible:
        print(f"Infeasible slots  : {infeasible}")
    print(f"Cumulative delay  : {result.cumulative[-1]:.6g} over {len(slots) - len(infeasible)} feasible slots")
    for fn in result.to_file(path=options.outpath, prefix=options.prefix):
        print(f"Written           : {fn}")


def run_oracle(scenario, options):
    k = slot_index(scenario, options)
    problem = scenario.slot_problem(k)
    best = ehwsn.oracle.brute_force_solve(problem, transfer=scenario.config.transfer)
    row = {"slot": k + 1, "objective": best.objective}
    row.update({f"power_{label}": p for label, p in zip(problem.labels, best.p)})
    row.update({f"transfer_{i}_{j}": x for (i, j), x in zip(problem.energy_links, best.x)})
    df = pd.DataFrame([row])
    print(df.to_csv(index=False, float_format=consts.FLOAT_FORMAT), end="")
    fn = ehwsn.io.write_frame(df, os.path.join(options.outpath, f"{options.prefix}_oracle.csv"))
    print(f"Written           : {fn}")


def run_check(options):
    if not options.solution:
        raise ConfigError("No stored solution provided, please use -s option")
    problem, solution, meta = ehwsn.io.read_solution(options.solution)
    report = ehwsn.kkt_report(problem, solution)
    print(f"Solution          : {options.solution}")
    if meta:
        print(f"Stored from       : scenario {meta.get('scenario', '?')}, slot {meta.get('slot', '?')}")
    for k, v in report.summary().items():
        print(f"{k:<18}: {'not applicable' if v is None else f'{v:.3g}'}")
    print(f"KKT conditions    : {'satisfied' if report.ok() else 'VIOLATED'} (tolerance 1e-5, relative 1e-3)")
    df = pd.DataFrame(
        {
            "link": problem.labels,
            "stationarity": report.stationarity[:problem.n_links],
            "relative_stationarity": report.relative_stationarity,
            "marginal": report.marginal,
            "lambda_node": np.asarray(solution.lam)[problem.owner],
            "lambda_residual": report.lambda_residual,
        }
    )
    if os.path.isdir(options.outpath):
        fn = ehwsn.io.write_frame(df, os.path.join(options.outpath, f"{options.prefix}_kkt.csv"))
        print(f"Written           : {fn}")


def create_parser():
    parser = OptionParser(usage=f"%prog [{'|'.join(COMMANDS)}] [options]")
    parser.add_option(
        "-c",
        "--config",
        dest="config",
        nargs=1,
        help='Scenario config file (JSON) or name of a bundled scenario, e.g. "tree14", "first_slot" or "small". Place path between " " to ensure spaces are interpreted correctly.',
    )
    parser.add_option(
        "--channel",
        dest="channel",
        nargs=1,
        help='Channel mode, "oc" (orthogonal) or "ifc" (interference) (default: taken from config).',
    )
    parser.add_option(
        "--transfer",
        dest="transfer",
        nargs=1,
        help='Energy transfer, "on" or "off" (default: taken from config).',
    )
    parser.add_option(
        "--seed-gains",
        dest="seed_gains",
        nargs=1,
        type="int",
        help="Seed of the channel gains (default: taken from config).",
    )
    parser.add_option(
        "--seed-flows",
        dest="seed_flows",
        nargs=1,
        type="int",
        help="Seed of the link flows (default: taken from config).",
    )
    parser.add_option(
        "--seed-energy",
        dest="seed_energy",
        nargs=1,
        type="int",
        help="Seed of the energy arrivals (default: taken from config).",
    )
    parser.add_option(
        "-o",
        "--out",
        dest="outpath",
        nargs=1,
        help='Directory to write output files (default: "."). Place path between " " to ensure spaces are interpreted correctly.',
        default=".",
    )
    parser.add_option(
        "-p",
        "--prefix",
        dest="prefix",
        nargs=1,
        help='Prefix to use for written files (default: "ehwsn").',
        default="ehwsn",
    )
    parser.add_option(
        "--tol",
        dest="tol",
        nargs=1,
        type="float",
        help="Duality gap tolerance of the solver (default: 1e-8).",
    )
    parser.add_option(
        "--slots",
        dest="slots",
        nargs=1,
        type="int",
        help="Number of slots per round (default: length of the schedule). The schedule repeats when longer.",
    )
    parser.add_option(
        "--slot",
        dest="slot",
        nargs=1,
        type="int",
        help="Slot to solve, counted from 1 (default: 1). Used by solve and oracle.",
        default=1,
    )
    parser.add_option(
        "-s",
        "--solution",
        dest="solution",
        nargs=1,
        help="Stored solution (JSON written by solve) to check. Used by check.",
    )
    parser.add_option(
        "-v",
        "--verbose",
        dest="verbose",
        action="store_true",
        help="Log solver progress (default: not set).",
        default=False,
    )
    return parser


if __name__ == '__main__':
    sys.exit(main())
