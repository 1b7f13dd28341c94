"""
This is free software: you can redistribute it and/or modify
it under the terms of the GNU General Public License as published by
the Free Software Foundation, either version 3 of the License, or
(at your option) any later version.

This package is distributed in the hope that it will be useful,
but WITHOUT ANY WARRANTY; without even the implied warranty of
MERCHANTABILITY or FITNESS FOR A PARTICULAR PURPOSE. See the
GNU General Public License for more details.

You should have received a copy of the GNU General Public License
along with this package. If not, you can get the GNU GPL from
https://www.gnu.org/licenses/gpl-3.0.en.html.
"""

# Command-line front end: run, compare, sweep, gap and validate.

try:
	from __init__ import *
	from __init__ import __package_name__, __version__
	from argparse import RawDescriptionHelpFormatter
	from dataclasses import replace
	from os import path
	from class_console_printer import Console_printer, tag_string, tag_print, unix_path
	from class_progress_bar import Progress_bar
	from class_timing import Timer, time_hms
	from class_logger import Logger
	from mdp_core import validate
	from optimizers import OPTIMIZERS
	from environments import BUILTIN_ENVIRONMENTS, builtin_environment, load_mdp, save_mdp
	from harness import run, compare, lambda_sweep, gap_series, optimal_objective, resolve_config, \
		serialize_trace, summary_table, load_experiment_config, config_from_flags, csv_table, CSV_FMT
	from utilities import InvalidInputError, ConvergenceError, parse_list, ensure_folder, atomic_write, \
		present_exception_and_exit, EXIT_OK, EXIT_FAILURE, EXIT_USAGE

	import json
	import sys

except Exception as ex:
	from utilities import present_exception_and_exit
	present_exception_and_exit('Import failed! For more information see traceback below. Please report this issue to the maintainers:')


TRACE_FORMATS = ('csv', 'json')
LOG_NAME = 'pg_bench.log'
SUMMARY_NAME = 'summary.txt'


class UsageError(Exception):
	pass


class Bench_argument_parser(ArgumentParser):
	"""Raises UsageError instead of exiting, so main() owns the exit status."""

	def error(self, message):
		raise UsageError(f'{self.prog}: {message}')


class Run_display:
	"""
	Console progress block for harness runs. Call with (t, T, record) after
	every iteration; a new block starts whenever t == 1.
	"""

	def __init__(self, quiet: bool, total_runs: int = 1):
		self.quiet = quiet
		self.total_runs = total_runs
		self.run_index = 0
		self.console_printer = Console_printer()

	def __call__(self, t, T, record):
		if self.quiet:
			return

		if t == 1:
			self.run_index += 1
			self.timer = Timer(total_iter=T)
			self.progress_bar = Progress_bar(total=T, prefix=tag_string('info', f'Run {self.run_index}/{self.total_runs} '))
			self.every = max(1, T // 200)
			self.objective = None
			self.console_printer.reset()

		self.timer.update()
		if record is not None:
			self.objective = record.reported

		if t % self.every and t != T:
			return

		he, me, se = time_hms(self.timer.elapsed())
		hr, mr, sr = time_hms(self.timer.remaining())

		self.console_printer.add_line(self.progress_bar.get(t - 1))
		if self.objective is not None:
			self.console_printer.add_line(tag_string('info', f'Objective      = {self.objective:.10f}'))
		self.console_printer.add_line(tag_string('info', f'Elapsed time   = {he} hr {me} min {se} sec'))
		self.console_printer.add_line(tag_string('info', f'Remaining time ~ {hr} hr {mr} min {sr} sec'))
		self.console_printer.overwrite()


def trace_format(args, destination: str) -> str:
	if args.format is not None:
		return args.format
	return 'json' if destination.lower().endswith('.json') else 'csv'


def experiment_flags(args) -> dict:
	"""Flag values keyed like ExperimentConfig fields and hyperparameters, None when not given."""
	return {
		'environment':   args.env,
		'init':          args.init,
		'logits':        args.logits,
		'iterations':    args.iters,
		'gamma':         args.gamma,
		'record_every':  args.record_every,
		'seed':          args.seed,
		'gradient_mode': args.gradient,
		'batch':         args.batch,
		'horizon':       args.horizon,
		'baseline':      args.baseline,
		'wall_time':     args.wall_time,
		'eta':           args.eta,
		'beta':          args.beta,
		'beta1':         args.beta1,
		'beta2':         args.beta2,
		'epsilon':       args.epsilon,
		'lambda':        getattr(args, 'lam', None),
	}


def check_optimizer(name: str):
	if name is not None and name not in OPTIMIZERS:
		raise InvalidInputError(f'Unknown optimizer [{name}], valid identifiers are: {", ".join(OPTIMIZERS)}')


def base_config(args, optimizer: str = None):
	check_optimizer(optimizer)
	base = load_experiment_config(args.cfg) if args.cfg else None
	flags = experiment_flags(args)
	flags['optimizer'] = optimizer
	return config_from_flags(flags, base)


def optimizer_list(args, base) -> list:
	opts = parse_list(args.opts, str) if args.opts else [base.optimizer]
	if not opts:
		raise UsageError('--opts needs at least one optimizer')
	for o in opts:
		check_optimizer(o)
	duplicates = sorted({o for o in opts if opts.count(o) > 1})
	if duplicates:
		raise UsageError(f'Optimizers listed more than once: {", ".join(duplicates)}')
	return opts


def preflight(configs: list):
	"""Resolves every config before anything is written. Returns the shared environment."""
	environments = [resolve_config(c)[0] for c in configs]
	return environments[0]


def open_logger(log_path: str, argv: list, configs: list) -> Logger:
	ensure_folder(path.dirname(path.abspath(log_path)))
	logger = Logger(log_path)
	logger.log(f'{__package_name__} {__version__}')
	logger.log(f'Command: pg_bench {" ".join(argv)}')
	for config in configs:
		logger.log(f'Resolved config: {json.dumps(resolve_config(config)[2])}')
	return logger


def report_run(trace, v_star: float, logger: Logger = None):
	final = trace.records[-1].reported if trace.records else trace.initial_objective
	message = f'{trace.label}: final objective = {final:.10f}, final gap = {v_star - final:.3e}'

	rate = trace.acceptance_rate()
	if rate is not None:
		message += f', acceptance rate = {rate:.3f}'

	if trace.failed:
		tag_print('failed', f'{message} ({trace.failure})')
	else:
		tag_print('success', message)

	if logger is not None:
		logger.log(message + (f' FAILED: {trace.failure}' if trace.failed else ''))


def write_traces(traces: list, names: list, mdp, v_star: float, folder: str, fmt: str):
	for trace, name in zip(traces, names):
		destination = unix_path(f'{folder}/{name}.{fmt}')
		serialize_trace(trace, fmt, destination, gap_series(trace, mdp, v_star))


def gap_table(traces: list, names: list, mdp, v_star: float) -> str:
	"""One CSV, column gap_<name> per trace, row t = 0 holds the initial gaps."""
	series = [gap_series(trace, mdp, v_star) for trace in traces]
	columns = [{0: s.initial_gap, **dict(zip(s.iterations.tolist(), s.gaps.tolist()))} for s in series]
	iterations = sorted(set().union(*columns))

	header = ['t'] + [f'gap_{name}' for name in names]
	rows = [[str(t)] + [CSV_FMT % c[t] if t in c else '' for c in columns] for t in iterations]

	return csv_table(header, rows)


def cmd_run(args, argv) -> int:
	config = base_config(args, args.opt)
	env = preflight([config])

	logger = None
	if args.out:
		fmt = trace_format(args, args.out)
		logger = open_logger(path.splitext(args.out)[0] + '.log', argv, [config])

	if not args.quiet:
		tag_print('start', f'Running [{config.optimizer}] on [{config.environment}]\n')

	try:
		trace = run(config, logger, Run_display(args.quiet))
		v_star = optimal_objective(env.mdp)

		if args.out:
			serialize_trace(trace, fmt, args.out, gap_series(trace, env.mdp, v_star))
			if not args.quiet:
				tag_print('info', f'Trace written to [{unix_path(args.out)}]')

		report_run(trace, v_star, logger)
	finally:
		if logger is not None:
			logger.close()

	return EXIT_FAILURE if trace.failed else EXIT_OK


def run_many(args, argv, configs: list, names: list, runner) -> int:
	env = preflight(configs)
	fmt = trace_format(args, '')

	ensure_folder(args.out)
	logger = open_logger(unix_path(f'{args.out}/{LOG_NAME}'), argv, configs)

	if not args.quiet:
		tag_print('start', f'Running {len(configs)} configurations on [{configs[0].environment}]\n')

	try:
		traces = runner(logger, Run_display(args.quiet, len(configs)))
		v_star = optimal_objective(env.mdp)

		write_traces(traces, names, env.mdp, v_star, args.out, fmt)
		summary = summary_table(traces, v_star, args.threshold)
		atomic_write(unix_path(f'{args.out}/{SUMMARY_NAME}'), summary)

		for trace in traces:
			report_run(trace, v_star, logger)

		if not args.quiet:
			print()
			print(summary, end='')
	finally:
		logger.close()

	return EXIT_FAILURE if any(t.failed for t in traces) else EXIT_OK


def cmd_compare(args, argv) -> int:
	base = base_config(args, parse_list(args.opts, str)[0] if args.opts else None)
	opts = optimizer_list(args, base)
	configs = [replace(base, optimizer=o) for o in opts]

	return run_many(args, argv, configs, opts, lambda logger, display: compare(configs, logger=logger, progress=display))


def cmd_sweep(args, argv) -> int:
	lambdas = parse_list(args.lambdas, float)
	if not lambdas:
		raise UsageError('--lambdas needs at least one value')

	base = base_config(args, 'spg-nm')
	configs = [replace(base, hyper={**base.hyper, 'lambda': lam}) for lam in lambdas]
	names = [f'lambda_{lam:g}' for lam in lambdas]

	if len(set(names)) != len(names):
		raise UsageError('Lambdas listed more than once')

	return run_many(args, argv, configs, names, lambda logger, display: lambda_sweep(base, lambdas, logger=logger, progress=display))


def cmd_gap(args, argv) -> int:
	base = base_config(args, parse_list(args.opts, str)[0] if args.opts else None)
	opts = optimizer_list(args, base)
	configs = [replace(base, optimizer=o) for o in opts]
	env = preflight(configs)

	logger = open_logger(path.splitext(args.out)[0] + '.log', argv, configs)

	if not args.quiet:
		tag_print('start', f'Sub-optimality gaps of {", ".join(opts)} on [{base.environment}]\n')

	try:
		traces = compare(configs, logger=logger, progress=Run_display(args.quiet, len(configs)))
		v_star = optimal_objective(env.mdp)
		atomic_write(args.out, gap_table(traces, opts, env.mdp, v_star))

		for trace in traces:
			report_run(trace, v_star, logger)

		if not args.quiet:
			tag_print('info', f'V*(rho) = {v_star:.10f}')
			tag_print('info', f'Gap table written to [{unix_path(args.out)}]')
	finally:
		logger.close()

	return EXIT_FAILURE if any(t.failed for t in traces) else EXIT_OK


def cmd_validate(args, argv) -> int:
	hard = None

	if args.env in BUILTIN_ENVIRONMENTS:
		env = builtin_environment(args.env)
		mdp = env.mdp
		hard = env.inits.get('hard') if args.env.endswith('-hard') else None
	else:
		try:
			mdp, hard = load_mdp(args.env, check=False)
		except (OSError, InvalidInputError) as ex:
			tag_print('error', f'Cannot read MDP file [{unix_path(args.env)}]: {ex}')
			return EXIT_FAILURE

	report = validate(mdp)

	if not report:
		tag_print('failed', f'[{unix_path(args.env)}] is not a valid MDP:')
		for violation in report.violations:
			tag_print('failed', violation)
		return EXIT_FAILURE

	tag_print('success', f'[{unix_path(args.env)}] is a valid MDP with {mdp.n_states} states and {mdp.n_actions} actions, gamma = {mdp.discount:g}')

	if args.export:
		save_mdp(mdp, args.export, hard)
		tag_print('info', f'MDP written to [{unix_path(args.export)}]')

	return EXIT_OK


def add_experiment_flags(parser):
	g = parser.add_argument_group('experiment')
	g.add_argument('--cfg', type=str, help='Path to experiment configuration file, flags given override its values')
	g.add_argument('--env', type=str, help=f'Built-in environment ({", ".join(BUILTIN_ENVIRONMENTS)}) or MDP file path')
	g.add_argument('--init', type=str, choices=['uniform', 'hard', 'explicit'], help='Initial logits')
	g.add_argument('--logits', type=str, help='Explicit initial logits, rows separated by ";", entries by ","')
	g.add_argument('--iters', type=int, help='Number of iterations T (default 500 for bandits, 5000 for MDPs)')
	g.add_argument('--gamma', type=float, help='Discount override')
	g.add_argument('--record-every', type=int, help='Record stride (default 1)')
	g.add_argument('--gradient', type=str, choices=['exact', 'sampled'], help='Gradient mode (default exact)')
	g.add_argument('--batch', type=int, help='Sampled mode: trajectories per gradient (default 1000)')
	g.add_argument('--horizon', type=int, help='Sampled mode: trajectory length (default 100)')
	g.add_argument('--seed', type=int, help='Sampled mode: seed (default 0)')
	g.add_argument('--baseline', action='store_const', const=True, help='Sampled mode: subtract the state value baseline')
	g.add_argument('--wall-time', action='store_const', const=True, help='Record wall-clock milliseconds in the trace')

	h = parser.add_argument_group('hyperparameters')
	h.add_argument('--eta', type=float, help='Learning rate (default 0.1)')
	h.add_argument('--beta', type=float, help='Heavy ball momentum (default 0.9)')
	h.add_argument('--beta1', type=float, help='Adam first moment decay (default 0.9)')
	h.add_argument('--beta2', type=float, help='Adam second moment decay (default 0.999)')
	h.add_argument('--epsilon', type=float, help='Adam denominator offset (default 1e-8)')

	parser.add_argument('--quiet', action='store_true', help='No progress display')


def build_parser():
	parser = Bench_argument_parser(prog='pg_bench', description=f'{__package_name__} {__version__}', formatter_class=RawDescriptionHelpFormatter)
	parser.add_argument('--version', action='version', version=__version__)
	sub = parser.add_subparsers(dest='command', metavar='command', required=True)

	p = sub.add_parser('run', help='Run one optimizer and write its trace')
	add_experiment_flags(p)
	p.add_argument('--opt', type=str, help=f'Optimizer: {", ".join(OPTIMIZERS)}')
	p.add_argument('--lambda', dest='lam', type=float, help='SPG-NM negative momentum lambda (default 1000)')
	p.add_argument('--out', type=str, help='Trace destination')
	p.add_argument('--format', type=str, choices=TRACE_FORMATS, help='Trace format (default from --out extension, else csv)')
	p.set_defaults(func=cmd_run)

	p = sub.add_parser('compare', help='Run several optimizers on one environment')
	add_experiment_flags(p)
	p.add_argument('--opts', type=str, help='Comma separated optimizers')
	p.add_argument('--lambda', dest='lam', type=float, help='SPG-NM negative momentum lambda (default 1000)')
	p.add_argument('--out', type=str, required=True, help='Output folder')
	p.add_argument('--format', type=str, choices=TRACE_FORMATS, help='Trace format (default csv)')
	p.add_argument('--threshold', type=float, help='Report first iteration with objective >= threshold V*(rho)')
	p.set_defaults(func=cmd_compare)

	p = sub.add_parser('sweep', help='Run SPG-NM for several lambdas')
	add_experiment_flags(p)
	p.add_argument('--lambdas', type=str, required=True, help='Comma separated lambdas, e.g. 1e3,1e4,1e5,1e6')
	p.add_argument('--out', type=str, required=True, help='Output folder')
	p.add_argument('--format', type=str, choices=TRACE_FORMATS, help='Trace format (default csv)')
	p.add_argument('--threshold', type=float, help='Report first iteration with objective >= threshold V*(rho)')
	p.set_defaults(func=cmd_sweep)

	p = sub.add_parser('gap', help='Sub-optimality gap table of several optimizers')
	add_experiment_flags(p)
	p.add_argument('--opts', type=str, help='Comma separated optimizers')
	p.add_argument('--lambda', dest='lam', type=float, help='SPG-NM negative momentum lambda (default 1000)')
	p.add_argument('--out', type=str, required=True, help='Gap CSV destination')
	p.set_defaults(func=cmd_gap)

	p = sub.add_parser('validate', help='Check an MDP file or built-in environment, optionally export it')
	p.add_argument('--env', type=str, required=True, help='MDP file path or built-in environment')
	p.add_argument('--export', type=str, help='Write the MDP definition file here when valid')
	p.set_defaults(func=cmd_validate)

	parser.epilog = flag_overview(sub.choices)

	return parser


def flag_overview(subparsers: dict) -> str:
	lines = ['flags per command:']
	for name, p in subparsers.items():
		flags = [s for a in p._actions for s in a.option_strings if s.startswith('--') and s != '--help']
		lines.append(f'  {name:<9} {" ".join(flags)}')
	lines.append(f'\nworkers for compare/sweep/gap: environment variable PGNM_WORKERS (default 1)')
	return '\n'.join(lines)


def main(argv: list = None) -> int:
	argv = sys.argv[1:] if argv is None else list(argv)
	parser = build_parser()

	try:
		args = parser.parse_args(argv)
	except UsageError as ex:
		parser.print_usage(sys.stderr)
		tag_print('error', str(ex))
		return EXIT_USAGE
	except SystemExit as ex:
		# --help, --version
		return ex.code if isinstance(ex.code, int) else EXIT_OK

	try:
		return args.func(args, argv)
	except (UsageError, InvalidInputError) as ex:
		tag_print('error', str(ex))
		return EXIT_USAGE
	except (OSError, ConvergenceError) as ex:
		tag_print('error', str(ex))
		return EXIT_FAILURE


if __name__ == '__main__':
	try:
		sys.exit(main())
	except Exception as ex:
		present_exception_and_exit()
