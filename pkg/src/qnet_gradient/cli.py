"""Command-line front end.

    qnet-gradient simulate --config net.json --theta 0.5 --seed 3 --output csv
    qnet-gradient estimate --config net.json --estimator lr-corrected --theta 0.5 --reps 100000
    qnet-gradient estimate --estimator naive-ipa --sweep 0.1:0.9:9
    qnet-gradient oracle --theta 0.5 --grid 2000
    qnet-gradient toy --sweep 0.1:0.9:9

Without --config the two-branch toy network is used, observed through the raw service-time
functional F. Results go to --out (or stdout) as JSON or CSV; every record carries the seed
and the SHA-256 hash of the network description.

Exit codes: 0 on success, 1 for invalid networks, estimator parameters or command lines,
2 for any other failure during a run.
"""

import argparse
import csv
from dataclasses import dataclass
import io
import json
import logging
import sys

import numpy as np

from qnet_gradient.criteria import CriterionException, CriterionKind, criterion_from_name
from qnet_gradient.estimators import (DEFAULT_FD_STEP, EstimatorException, EstimatorTag, PsiMode,
                                      alg51_estimate, corrected_estimate,
                                      finite_difference_estimate, naive_ipa_estimate)
from qnet_gradient.network import (NetworkException, load_network_spec, spec_hash,
                                   validate_network)
from qnet_gradient.oracle import OracleException, mixture_report, toy_exact, toy_network
from qnet_gradient.recursions import RecursionException
from qnet_gradient.routing import RoutingException
from qnet_gradient.simulator import (SimulationException, TRAJECTORY_COLUMNS, simulate_network,
                                     trajectory_rows, write_trajectory_csv)
from qnet_gradient.streams import RandomStream

logger = logging.getLogger('qnet_gradient.cli')

COMMANDS = ('simulate', 'estimate', 'oracle', 'toy')
DEFAULT_GRID = 2000

EXIT_OK = 0
EXIT_INVALID = 1
EXIT_RUNTIME = 2


class ConfigError(Exception):
    pass


@dataclass(frozen=True)
class RunConfig(object):
    """One command-line invocation."""

    command: str
    spec_path: str = None
    estimator: EstimatorTag = EstimatorTag.LR_CORRECTED
    criterion: CriterionKind = None
    theta: float = 0.5
    reps: int = 1000
    seed: int = 0
    fd_step: float = DEFAULT_FD_STEP
    crn: bool = True
    psi_mode: PsiMode = PsiMode.FIXED_HORIZON
    output_format: str = 'json'
    out: str = None
    theta_sweep: tuple = None
    grid_m: int = DEFAULT_GRID
    workers: int = None
    verbose: bool = False


class _Parser(argparse.ArgumentParser):
    """Argument parser that exits with the validation error code."""

    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_INVALID, '{}: error: {}\n'.format(self.prog, message))


def _sweep(text):
    try:
        lo, hi, steps = text.split(':')
        return float(lo), float(hi), int(steps)
    except ValueError:
        raise argparse.ArgumentTypeError("sweep must be LO:HI:N, got '{}'".format(text))


def build_parser():
    common = _Parser(add_help=False)
    common.add_argument('--config', dest='spec_path', default=None,
                        help='network description (JSON); the toy network if omitted')
    common.add_argument('--estimator', choices=[tag.value for tag in EstimatorTag],
                        default=EstimatorTag.LR_CORRECTED.value)
    common.add_argument('--criterion', choices=[kind.value for kind in CriterionKind],
                        default=None,
                        help='defaults to U with --config and F without; '
                             'F needs the toy network')
    common.add_argument('--theta', type=float, default=0.5)
    common.add_argument('--reps', type=int, default=1000)
    common.add_argument('--seed', type=int, default=0)
    common.add_argument('--fd-step', type=float, default=DEFAULT_FD_STEP)
    common.add_argument('--no-crn', action='store_true',
                        help='independent streams for the two finite difference runs')
    common.add_argument('--psi-mode', choices=[mode.value for mode in PsiMode],
                        default=PsiMode.FIXED_HORIZON.value)
    common.add_argument('--output', choices=['csv', 'json'], default='json')
    common.add_argument('--out', default=None, help='output file; stdout if omitted')
    common.add_argument('--sweep', type=_sweep, default=None, metavar='LO:HI:N')
    common.add_argument('--grid', type=int, default=DEFAULT_GRID,
                        help='quadrature points per axis for the oracle')
    common.add_argument('--workers', type=int, default=None)
    common.add_argument('-v', '--verbose', action='store_true')

    parser = _Parser(prog='qnet-gradient',
                     description='Gradient estimation for closed queueing networks')
    commands = parser.add_subparsers(dest='command', metavar='command')
    commands.required = True
    for command in COMMANDS:
        commands.add_parser(command, parents=[common])
    return parser


def config_from_args(args):
    """Build the RunConfig of a parsed command line.

    :raises ConfigError: for values no command can run with
    """
    if args.seed < 0:
        raise ConfigError("--seed must be nonnegative, got {}".format(args.seed))
    if args.reps < 1:
        raise ConfigError("--reps must be positive, got {}".format(args.reps))
    if args.grid < 1:
        raise ConfigError("--grid must be positive, got {}".format(args.grid))
    if args.workers is not None and args.workers < 1:
        raise ConfigError("--workers must be positive, got {}".format(args.workers))
    return RunConfig(command=args.command, spec_path=args.spec_path,
                     estimator=EstimatorTag(args.estimator),
                     criterion=criterion_from_name(args.criterion) if args.criterion else None,
                     theta=args.theta, reps=args.reps, seed=args.seed, fd_step=args.fd_step,
                     crn=not args.no_crn, psi_mode=PsiMode(args.psi_mode),
                     output_format=args.output, out=args.out, theta_sweep=args.sweep,
                     grid_m=args.grid, workers=args.workers, verbose=args.verbose)


def load_network(config):
    """The validated network of a run and the criterion it is observed through."""
    if config.spec_path is None:
        return toy_network(), config.criterion or CriterionKind.F
    if config.criterion is not None and config.criterion.oracle_only:
        raise ConfigError("Criterion {} applies to the built-in toy network only".format(
            config.criterion.value))
    net = validate_network(load_network_spec(config.spec_path))
    return net, config.criterion or CriterionKind.U


def sweep_points(config, net):
    """(theta, seed) per grid point; each point gets a seed derived from (seed, index)."""
    if config.theta_sweep is None:
        return [(config.theta, config.seed)]
    lo, hi, steps = config.theta_sweep
    if steps < 1 or lo > hi:
        raise ConfigError("Sweep needs LO <= HI and N >= 1")
    if not (net.theta_domain.contains(lo) and net.theta_domain.contains(hi)):
        raise ConfigError("Sweep [{}, {}] leaves the domain [{}, {}]".format(
            lo, hi, net.theta_domain.lo, net.theta_domain.hi))
    points = []
    for index, theta in enumerate(np.linspace(lo, hi, steps)):
        state = np.random.SeedSequence((config.seed, index)).generate_state(1, dtype=np.uint64)
        points.append((float(theta), int(state[0])))
    return points


def _estimate(config, net, kind, theta, seed):
    tag = config.estimator
    if tag is EstimatorTag.NAIVE_IPA:
        return naive_ipa_estimate(net, kind, theta, config.reps, seed, config.workers)
    if tag is EstimatorTag.LR_CORRECTED:
        return corrected_estimate(net, kind, theta, config.reps, seed, config.psi_mode,
                                  config.workers)
    if tag is EstimatorTag.ALG51:
        return alg51_estimate(net, kind, theta, config.reps, seed, config.workers)
    return finite_difference_estimate(net, kind, theta, config.fd_step, config.reps, seed,
                                      config.crn, config.workers)


def estimate_record(summary, kind, theta, seed, digest):
    return {
        'estimator': summary.estimator_tag.value,
        'criterion': kind.value,
        'theta': theta,
        'reps': summary.reps,
        'mean': summary.mean,
        'variance': summary.sample_variance,
        'ci95': summary.ci95_halfwidth,
        'psi_mode': summary.psi_mode.value if summary.psi_mode else None,
        'ties': summary.ties,
        'seed': seed,
        'spec_hash': digest,
        'value_mean': summary.value_mean,
        'psi_gap': summary.psi_gap,
    }


def theta_sweep(config):
    """Run the configured command once per theta point and return its records."""
    net, kind = load_network(config)
    digest = spec_hash(net)
    records = []
    for theta, seed in sweep_points(config, net):
        if config.command == 'estimate':
            summary = _estimate(config, net, kind, theta, seed)
            records.append(estimate_record(summary, kind, theta, seed, digest))
        elif config.command == 'oracle':
            record = {'command': 'oracle', 'criterion': kind.value, 'grid_m': config.grid_m}
            record.update(mixture_report(net, kind, theta, config.grid_m).to_record())
            record['spec_hash'] = digest
            records.append(record)
        elif config.command == 'toy':
            EF, dEF, EdF, EG = toy_exact(theta)
            records.append({'command': 'toy', 'theta': theta, 'EF': EF, 'dEF': dEF,
                            'EdF': EdF, 'EG': EG})
        else:
            raise ConfigError("Command '{}' does not sweep".format(config.command))
    return records


def _simulate(config, out):
    if config.theta_sweep is not None:
        raise ConfigError("simulate runs a single theta; drop --sweep")
    net, _ = load_network(config)
    traj, _ = simulate_network(net, config.theta, RandomStream(config.seed))
    if config.output_format == 'csv':
        write_trajectory_csv(traj, out)
    else:
        rows = [dict(zip(TRAJECTORY_COLUMNS, row)) for row in trajectory_rows(traj)]
        json.dump(rows, out, indent=2)
        out.write('\n')


def write_records(records, out, output_format):
    """Write records as a JSON list or as CSV with the first record's keys as header."""
    if output_format == 'json':
        json.dump(records, out, indent=2)
        out.write('\n')
        return
    if not records:
        return
    writer = csv.DictWriter(out, fieldnames=list(records[0]), lineterminator='\n')
    writer.writeheader()
    for record in records:
        writer.writerow({key: '' if value is None else value for key, value in record.items()})


def run(config):
    """Execute a run and write its output; returns the exit code."""
    buffer = io.StringIO()
    try:
        if config.command == 'simulate':
            _simulate(config, buffer)
        else:
            write_records(theta_sweep(config), buffer, config.output_format)
    except (NetworkException, EstimatorException, ConfigError) as error:
        logger.error("%s: %s", type(error).__name__, error)
        return EXIT_INVALID
    except (SimulationException, CriterionException, RecursionException, RoutingException,
            OracleException) as error:
        logger.error("%s: %s", type(error).__name__, error)
        return EXIT_RUNTIME

    if config.out is None:
        sys.stdout.write(buffer.getvalue())
    else:
        with open(config.out, 'w') as out_file:
            out_file.write(buffer.getvalue())
    return EXIT_OK


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format='%(levelname)s %(name)s: %(message)s')
    try:
        config = config_from_args(args)
    except (ValueError, ConfigError) as error:
        logger.error("%s", error)
        return EXIT_INVALID
    return run(config)


if __name__ == '__main__':
    sys.exit(main())
