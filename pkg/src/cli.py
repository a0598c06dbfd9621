import argparse
import json
import logging
import os
import sys
from dataclasses import dataclass

import numpy as np

from src.constructive import SignBooster, bibo_single, sign_of
from src.export import ReportWriter, load_test_function, read_test_function_csv
from src.kernel_operator import build_grid, grid_from_header, operator_from_spec
from src.kernels import KernelSpecError, load_spec, parse_spec, zoo
from src.norms import MAX_ENUMERATION, EnumerationLimitError, NormEstimator
from src.truncation import StabilityAnalyzer, default_horizons

SEED_ENV = "KSTAB_SEED"
COMMANDS = ("zoo", "norm", "single", "boost", "stability")


class UsageError(ValueError):
    """Bad command-line usage; reported with the subcommand synopsis."""

    def __init__(self, message, parser=None):
        super().__init__(message)
        self.parser = parser


class ArgumentParser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message, parser=self)


@dataclass(frozen=True)
class RunConfig:
    """Validated parameters of one invocation."""
    command: str
    spec: object = None
    grid: object = None
    horizons: tuple = None
    step: float = None
    restarts: int = 16
    seed: int = 20240607
    eps: float = None
    enum_limit: int = 20
    input_path: str = None
    out_json: str = None
    out_csv: str = None
    quiet: bool = False

    DEFAULT_SEED = 20240607
    DEFAULT_RESTARTS = NormEstimator.DEFAULT_RESTARTS
    DEFAULT_ENUM_LIMIT = NormEstimator.DEFAULT_ENUM_LIMIT
    DEFAULT_STEP = 0.01
    DEFAULT_STABILITY_STEP = 0.05
    DEFAULT_HORIZON = {"continuous": 20.0, "discrete": 64}


def _add_kernel_args(parser):
    group = parser.add_mutually_exclusive_group(required=True)
    group.add_argument('--spec', type=str, help='Kernel spec file (key=value tokens or JSON)')
    group.add_argument('--matrix', type=str, help='Inline symmetric matrix as JSON, e.g. "[[2,1],[1,2]]"')


def _add_grid_args(parser, multiple=False):
    if multiple:
        group = parser.add_mutually_exclusive_group()
        group.add_argument('--horizon', type=float, help='Final horizon T (continuous) or n (discrete); doubling sequence of 4')
        group.add_argument('--horizons', type=str, help='Comma-separated increasing horizons, e.g. 5,10,20,40')
    else:
        parser.add_argument('--horizon', type=float, help='Horizon T (continuous) or node count n (discrete)')
    parser.add_argument('--step', type=float, help='Quadrature step h (continuous kernels only)')


def _add_eps_arg(parser):
    parser.add_argument('--eps', type=float,
                        help=f'Signification tolerance (default: {SignBooster.RELATIVE_EPS:g} * entrywise norm bound)')


def _add_solver_args(parser, enumeration=False):
    parser.add_argument('--restarts', type=int, default=RunConfig.DEFAULT_RESTARTS,
                        help=f'Random restarts of the alternating ascent (default: {RunConfig.DEFAULT_RESTARTS})')
    parser.add_argument('--seed', type=int, default=RunConfig.DEFAULT_SEED,
                        help=f'Base seed; {SEED_ENV} overrides it (default: {RunConfig.DEFAULT_SEED})')
    if enumeration:
        parser.add_argument('--enum-limit', type=int, default=RunConfig.DEFAULT_ENUM_LIMIT,
                            help=f'Exact enumeration up to this many nodes, hard maximum {MAX_ENUMERATION} '
                                 f'(default: {RunConfig.DEFAULT_ENUM_LIMIT})')


def _add_output_args(parser):
    parser.add_argument('--out-json', type=str, help='Write the JSON result here')
    parser.add_argument('--out-csv', type=str, help='Write the CSV result here')
    parser.add_argument('--quiet', action='store_true', help='Only warnings and errors on stderr, no progress bars')


def build_parser():
    parser = ArgumentParser(
        prog="kstab",
        description="BIBO stability of positive-definite kernels via the (inf,1) kernel-operator norm over sign inputs."
    )
    sub = parser.add_subparsers(dest="command", metavar="{" + ",".join(COMMANDS) + "}", parser_class=ArgumentParser)
    sub.required = True

    p = sub.add_parser("zoo", help="List builtin kernel families and parameters")
    _add_output_args(p)

    p = sub.add_parser("norm", help="Estimate ||K||_(inf,1) on one grid")
    _add_kernel_args(p)
    _add_grid_args(p)
    _add_solver_args(p, enumeration=True)
    _add_output_args(p)

    p = sub.add_parser("single", help="1-norm of a single impulse response (sign-input supremum)")
    p.add_argument('input', type=str, help='Impulse response CSV (single value column)')
    _add_grid_args(p)
    _add_output_args(p)

    p = sub.add_parser("boost", help="Lift a test function to a sign pattern without losing more than eps")
    p.add_argument('input', type=str, help='Test function CSV with max |u| <= 1')
    _add_kernel_args(p)
    _add_grid_args(p)
    _add_eps_arg(p)
    _add_output_args(p)

    p = sub.add_parser("stability", help="Truncation-norm sequence and heuristic stability verdict")
    _add_kernel_args(p)
    _add_grid_args(p, multiple=True)
    _add_solver_args(p)
    _add_output_args(p)
    parser.commands = sub.choices
    return parser


def _load_kernel(args):
    if getattr(args, "spec", None):
        return load_spec(args.spec)
    try:
        rows = json.loads(args.matrix)
    except json.JSONDecodeError as e:
        raise UsageError(f"--matrix is not valid JSON: {e.msg}")
    return parse_spec(json.dumps({"family": "matrix", "rows": rows}))


def _resolve_seed(args):
    env = os.environ.get(SEED_ENV)
    if env is None:
        return args.seed
    try:
        return int(env)
    except ValueError:
        raise UsageError(f"{SEED_ENV}={env!r} is not an integer")


def _grid_for(spec, horizon, step, default_step):
    mode = spec.time_mode
    if mode == "discrete":
        if step is not None:
            raise UsageError("--step only applies to continuous kernels")
        if spec.family == "matrix":
            size = spec.matrix.shape[0]
            if horizon is not None and horizon != size:
                raise UsageError(f"--horizon {horizon:g} does not match the {size}x{size} matrix")
            horizon = size
        return build_grid(horizon if horizon is not None else RunConfig.DEFAULT_HORIZON[mode], mode=mode)
    return build_grid(horizon if horizon is not None else RunConfig.DEFAULT_HORIZON[mode],
                      step if step is not None else default_step, mode)


def _parse_horizons(text, mode):
    try:
        horizons = [float(h) for h in text.split(",") if h.strip()]
    except ValueError:
        raise UsageError(f"--horizons must be comma-separated numbers, got '{text}'")
    if mode == "discrete":
        if any(h != int(h) for h in horizons):
            raise UsageError("discrete horizons must be integers")
        horizons = [int(h) for h in horizons]
    return tuple(horizons)


def _check_length(grid, values):
    if grid.n != len(values):
        raise UsageError(f"test function has {len(values)} values but the grid has {grid.n} nodes")


def make_config(args):
    """Validates everything before any computation starts."""
    command = args.command
    fields = {"command": command, "out_json": args.out_json, "out_csv": args.out_csv, "quiet": args.quiet}
    if command == "zoo":
        return RunConfig(**fields)

    if command in ("norm", "boost", "stability"):
        fields["spec"] = spec = _load_kernel(args)
    if command in ("norm", "stability"):
        fields["restarts"] = args.restarts
        fields["seed"] = _resolve_seed(args)
        if args.restarts < 0:
            raise UsageError(f"--restarts must be >= 0, got {args.restarts}")

    if command == "norm":
        if args.enum_limit < 1:
            raise UsageError(f"--enum-limit must be >= 1, got {args.enum_limit}")
        fields["enum_limit"] = args.enum_limit
        fields["grid"] = _grid_for(spec, args.horizon, args.step, RunConfig.DEFAULT_STEP)

    elif command == "single":
        header, values = read_test_function_csv(args.input)
        if header is not None:
            grid = grid_from_header(header)
        elif args.step is not None:
            grid = build_grid(args.horizon if args.horizon is not None else len(values) * args.step,
                              args.step, "continuous")
        else:
            grid = build_grid(len(values), mode="discrete")
        _check_length(grid, values)
        fields["grid"] = grid
        fields["input_path"] = args.input

    elif command == "boost":
        header, values = read_test_function_csv(args.input)
        if np.max(np.abs(values)) > 1.0:
            raise UsageError(f"test function must satisfy max |u| <= 1, got {np.max(np.abs(values)):g}")
        grid = grid_from_header(header) if header is not None else \
            _grid_for(spec, args.horizon, args.step, RunConfig.DEFAULT_STEP)
        if grid.mode != spec.time_mode:
            raise UsageError(f"test function grid is {grid.mode} but the kernel is {spec.time_mode}")
        _check_length(grid, values)
        if args.eps is not None and args.eps <= 0:
            raise UsageError(f"--eps must be > 0, got {args.eps}")
        fields.update(grid=grid, eps=args.eps, input_path=args.input)

    elif command == "stability":
        if args.restarts < 1:
            raise UsageError("--restarts must be >= 1 for stability sequences")
        mode = spec.time_mode
        if args.horizons:
            horizons = _parse_horizons(args.horizons, mode)
        else:
            horizons = tuple(default_horizons(
                args.horizon if args.horizon is not None else RunConfig.DEFAULT_HORIZON[mode], mode))
        if len(horizons) < StabilityAnalyzer.MIN_HORIZONS:
            raise UsageError(f"classification needs at least {StabilityAnalyzer.MIN_HORIZONS} horizons, got {len(horizons)}")
        if any(b <= a for a, b in zip(horizons, horizons[1:])) or horizons[0] <= 0:
            raise UsageError(f"horizons must be positive and strictly increasing, got {list(horizons)}")
        if mode == "discrete" and args.step is not None:
            raise UsageError("--step only applies to continuous kernels")
        if spec.family == "matrix" and horizons[-1] > spec.matrix.shape[0]:
            raise UsageError(f"horizon {horizons[-1]} exceeds the {spec.matrix.shape[0]}x{spec.matrix.shape[0]} matrix")
        step = args.step if args.step is not None else RunConfig.DEFAULT_STABILITY_STEP
        if mode == "continuous":
            for horizon in horizons:
                build_grid(horizon, step, mode)
            fields["step"] = step
        fields["horizons"] = horizons

    return RunConfig(**fields)


def _emit(config, writer, data, frame=None, pattern=None):
    sys.stdout.write(writer.dumps_json(data))
    if config.out_json:
        writer.save_json(data, config.out_json)
    if config.out_csv and frame is not None:
        writer.save_csv(frame, config.out_csv)
    if config.out_csv and pattern is not None:
        writer.save_test_function(pattern, config.out_csv)


def run_zoo(config, writer):
    table = zoo()
    sys.stdout.write(table.to_string(index=False) + "\n")
    if config.out_json:
        writer.save_json(table.to_dict(orient="records"), config.out_json)
    if config.out_csv:
        writer.save_csv(table, config.out_csv)


def run_norm(config, writer):
    op = operator_from_spec(config.spec, config.grid)
    estimator = NormEstimator(enum_limit=config.enum_limit, restarts=config.restarts,
                              seed=config.seed, progress=not config.quiet)
    estimate = estimator.estimate(op)
    data = estimate.to_dict()
    data["grid"] = config.grid.header()
    data["kernel"] = config.spec.describe()
    logging.info(f"Norm ({estimate.method}): lower {estimate.lower:.6g}, upper {estimate.upper:.6g}")
    _emit(config, writer, data, pattern=estimate.argmax)


def run_single(config, writer):
    f = load_test_function(config.input_path, config.grid)
    value = bibo_single(f)
    data = {"grid": config.grid.header(), "l1_norm": value, "nodes": config.grid.n}
    logging.info(f"||f||_1 = {value:.6g}")
    _emit(config, writer, data, pattern=sign_of(f))


def run_boost(config, writer):
    u = load_test_function(config.input_path, config.grid)
    op = operator_from_spec(config.spec, config.grid)
    s, trace, eps = SignBooster(eps=config.eps).process(op, u)
    data = trace.to_dict()
    data["eps"] = eps
    data["grid"] = config.grid.header()
    _emit(config, writer, data, pattern=s)


def run_stability(config, writer):
    analyzer = StabilityAnalyzer(restarts=config.restarts, seed=config.seed, step=config.step,
                                 progress=not config.quiet)
    report = analyzer.analyze(config.spec, list(config.horizons))
    _emit(config, writer, report.verdict(), frame=report.to_frame())


RUNNERS = {
    "zoo": run_zoo,
    "norm": run_norm,
    "single": run_single,
    "boost": run_boost,
    "stability": run_stability,
}


def _usage_failure(error, parser):
    sys.stderr.write(f"kstab: error: {error}\n")
    target = getattr(error, "parser", None) or parser
    sys.stderr.write(target.format_usage())
    return 1


def _configure_logging(quiet):
    logging.basicConfig(
        level=logging.INFO,
        format='%(asctime)s - %(levelname)s - %(message)s',
        datefmt='%H:%M:%S'
    )
    logging.getLogger().setLevel(logging.WARNING if quiet else logging.INFO)


def run(argv=None):
    """
    Entry point. Returns the exit code: 0 success, 1 usage or input error,
    2 computation guard (enumeration limit).
    """
    parser = build_parser()
    argv = sys.argv[1:] if argv is None else list(argv)
    try:
        args = parser.parse_args(argv)
    except UsageError as e:
        return _usage_failure(e, parser)
    except SystemExit as e:
        return e.code if isinstance(e.code, int) else 0

    _configure_logging(args.quiet)
    subparser = parser.commands[args.command]
    try:
        config = make_config(args)
    except (UsageError, KernelSpecError, ValueError) as e:
        return _usage_failure(e, subparser)

    try:
        RUNNERS[config.command](config, ReportWriter())
    except EnumerationLimitError as e:
        logging.error(f"Computation guard: {e}")
        return 2
    except (UsageError, KernelSpecError) as e:
        return _usage_failure(e, subparser)
    except ValueError as e:
        logging.error(f"Invalid input: {e}")
        return 1
    except Exception as e:
        logging.error(f"Critical error: {e}")
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(run())
