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

# Experiment configuration, optimizer run loop, traces and their serialization.

try:
	from __init__ import *
	from collections import OrderedDict
	from concurrent.futures import ThreadPoolExecutor
	from io import StringIO
	from dataclasses import dataclass, field, replace, asdict
	from os import environ, path
	from typing import Optional
	from class_timing import Timer
	from mdp_core import TabularMdp, PolicyParams, softmax_policy, policy_evaluation, objective, optimal_values
	from gradient import exact_gradient, sampled_gradient
	from optimizers import OPTIMIZERS, DEFAULT_HYPER, StepContext, make_stepper, resolve_hyper
	from environments import resolve_environment, INITS, BUILTIN_ENVIRONMENTS
	from utilities import InvalidInputError, NumericalFailure, atomic_write, cfg_get

	import json

except Exception as ex:
	from utilities import present_exception_and_exit
	present_exception_and_exit('Import failed! For more information see traceback below. Please report this issue to the maintainers:')


GRADIENT_MODES = ('exact', 'sampled')
DEFAULT_ITERATIONS_BANDIT = 500
DEFAULT_ITERATIONS_MDP = 5000
GAP_TOL = 1e-10
WORKERS_ENV = 'PGNM_WORKERS'
CSV_FMT = '%.17g'


@dataclass(frozen=True)
class ExperimentConfig:
	environment: str
	optimizer: str
	hyper: dict = field(default_factory=dict)
	init: Optional[str] = None			# uniform | hard | explicit, None = the environment's own
	logits: Optional[tuple] = None		# rows of explicit initial logits
	iterations: Optional[int] = None	# None = 500 for bandits, 5000 otherwise
	gamma: Optional[float] = None
	record_every: int = 1
	seed: int = 0
	gradient_mode: str = 'exact'
	batch: int = 1000
	horizon: int = 100
	baseline: bool = False
	wall_time: bool = False


@dataclass(frozen=True)
class TraceRecord:
	t: int
	objective: float					# V(mu) of theta(t)
	values: tuple						# V(s) of theta(t), rho @ values == objective
	omega_objective: Optional[float] = None
	accepted: Optional[bool] = None
	wall_ms: Optional[float] = None

	@property
	def reported(self) -> float:
		"""Objective of the iterate the algorithm keeps: omega for SPG-NM, theta otherwise."""
		return self.objective if self.omega_objective is None else self.omega_objective


@dataclass
class RunTrace:
	records: list
	metadata: dict
	final_params: PolicyParams
	initial_objective: float
	failed: bool = False
	failure: Optional[str] = None

	@property
	def iterations(self) -> np.ndarray:
		return np.array([r.t for r in self.records], dtype=int)

	@property
	def objectives(self) -> np.ndarray:
		return np.array([r.objective for r in self.records])

	@property
	def reported(self) -> np.ndarray:
		return np.array([r.reported for r in self.records])

	@property
	def label(self) -> str:
		opt = self.metadata['optimizer']
		if opt == 'spg-nm':
			return f'{opt} (lambda={self.metadata["hyper"]["lambda"]:g})'
		return opt

	def acceptance_rate(self) -> Optional[float]:
		flags = [r.accepted for r in self.records if r.accepted is not None]
		return float(np.mean(flags)) if flags else None

	def to_dict(self) -> dict:
		return {
			'metadata': self.metadata,
			'failed': self.failed,
			'failure': self.failure,
			'initial_objective': self.initial_objective,
			'final_params': self.final_params.logits.tolist(),
			'records': [asdict(r) for r in self.records],
		}


@dataclass(frozen=True)
class GapSeries:
	iterations: np.ndarray
	gaps: np.ndarray
	initial_gap: float
	v_star: float

	def final(self) -> float:
		return float(self.gaps[-1]) if self.gaps.size else self.initial_gap


def _default_iterations(mdp: TabularMdp) -> int:
	return DEFAULT_ITERATIONS_BANDIT if mdp.n_states == 1 else DEFAULT_ITERATIONS_MDP


def _positive_int(name, value) -> int:
	try:
		ok = int(value) == value and value >= 1
	except (TypeError, ValueError):
		ok = False
	if not ok:
		raise InvalidInputError(f'{name} must be a positive count, got {value}')
	return int(value)


def resolve_config(config: ExperimentConfig) -> tuple:
	"""
	Checks config and resolves every default. Returns (environment,
	initial params, resolved metadata dict).
	"""
	if config.optimizer not in OPTIMIZERS:
		raise InvalidInputError(f'Unknown optimizer [{config.optimizer}], valid identifiers are: {", ".join(OPTIMIZERS)}')

	hyper = resolve_hyper(config.optimizer, config.hyper)

	if config.gradient_mode not in GRADIENT_MODES:
		raise InvalidInputError(f'Gradient mode must be one of {GRADIENT_MODES}, got [{config.gradient_mode}]')

	init = config.init
	if init is not None and init not in INITS + ('explicit',):
		raise InvalidInputError(f'Init must be uniform, hard or explicit, got [{init}]')
	if init == 'explicit' and config.logits is None:
		raise InvalidInputError('Explicit init needs a logits table')
	if config.logits is not None and init not in (None, 'explicit'):
		raise InvalidInputError(f'Logits given together with init [{init}]')

	env = resolve_environment(config.environment, config.gamma, None if init == 'explicit' else init)

	if config.logits is not None:
		params = PolicyParams(config.logits)
		if params.shape != env.mdp.shape:
			raise InvalidInputError(f'Explicit logits shape {params.shape} does not match MDP shape {env.mdp.shape}')
		init = 'explicit'
	else:
		init = env.init
		params = env.initial_params(init)

	iterations = _default_iterations(env.mdp) if config.iterations is None else _positive_int('iterations', config.iterations)
	record_every = _positive_int('record_every', config.record_every)

	if config.gradient_mode == 'sampled':
		_positive_int('batch', config.batch)
		_positive_int('horizon', config.horizon)

	metadata = {
		'environment': config.environment,
		'optimizer': config.optimizer,
		'hyper': hyper,
		'init': init,
		'logits': params.logits.tolist() if init == 'explicit' else None,
		'iterations': iterations,
		'gamma': env.mdp.discount,
		'record_every': record_every,
		'seed': int(config.seed),
		'gradient_mode': config.gradient_mode,
		'batch': int(config.batch),
		'horizon': int(config.horizon),
		'baseline': bool(config.baseline),
		'wall_time': bool(config.wall_time),
		'n_states': env.mdp.n_states,
		'n_actions': env.mdp.n_actions,
		'rho': env.mdp.initial_dist.tolist(),
	}

	return env, params, metadata


class Evaluator:
	"""
	Gradient and objective oracles of one run. Keeps the last few policy
	evaluations, since SPG-NM and the recorder ask for the same iterates.
	"""

	def __init__(self, mdp: TabularMdp, metadata: dict, cache_size: int = 8):
		self.mdp = mdp
		self.start = mdp.initial_dist
		self.mode = metadata['gradient_mode']
		self.seed = metadata['seed']
		self.batch = metadata['batch']
		self.horizon = metadata['horizon']
		self.baseline = metadata['baseline']
		self.cache = OrderedDict()
		self.cache_size = cache_size

	def values(self, params: PolicyParams) -> np.ndarray:
		key = params.logits.tobytes()

		if key in self.cache:
			self.cache.move_to_end(key)
			return self.cache[key]

		V = policy_evaluation(self.mdp, softmax_policy(params))
		self.cache[key] = V
		if len(self.cache) > self.cache_size:
			self.cache.popitem(last=False)

		return V

	def objective(self, params: PolicyParams) -> float:
		return objective(self.mdp, self.values(params), self.start)

	def gradient(self, params: PolicyParams, iteration: int):
		if self.mode == 'exact':
			return exact_gradient(self.mdp, params, self.start)

		# one independent stream per iteration
		seed = int(np.random.SeedSequence([self.seed, iteration]).generate_state(1)[0])
		return sampled_gradient(self.mdp, params, self.start, self.batch, self.horizon, seed, self.baseline)

	def context(self, iteration: int) -> StepContext:
		return StepContext(
			gradient_at=lambda p: self.gradient(p, iteration),
			objective_at=self.objective,
			iteration=iteration,
		)


def run(config: ExperimentConfig, logger=None, progress=None) -> RunTrace:
	"""
	Runs config.iterations optimizer steps and records every record_every-th
	iteration (and the last one). A NumericalFailure ends the run early; the
	partial trace is returned with failed set.
	progress(t, T, record) is called after every step, record is None
	for iterations that are not recorded.
	"""
	env, params, metadata = resolve_config(config)
	mdp = env.mdp
	T = metadata['iterations']
	stride = metadata['record_every']

	evaluator = Evaluator(mdp, metadata)
	stepper = make_stepper(config.optimizer, metadata['hyper'], params)
	timer = Timer(total_iter=T) if metadata['wall_time'] else None

	trace = RunTrace(records=[], metadata=metadata, final_params=params, initial_objective=evaluator.objective(params))

	if logger is not None:
		logger.log(f'Run {trace.label} on [{config.environment}], init = {metadata["init"]}, T = {T}, hyper = {metadata["hyper"]}')

	for t in range(1, T + 1):
		try:
			state = stepper.step(evaluator.context(t))
		except NumericalFailure as ex:
			trace.failed = True
			trace.failure = str(ex)
			if logger is not None:
				logger.log(f'Run {trace.label} failed at iteration {t}: {ex}')
			break

		trace.final_params = stepper.iterate
		record = None

		if t % stride == 0 or t == T:
			if timer is not None:
				timer.update()

			if config.optimizer == 'spg-nm':
				theta_objective, omega_objective, accepted = state.theta_value, state.omega_value, bool(state.accepted)
			else:
				theta_objective, omega_objective, accepted = evaluator.objective(state.theta), None, None

			record = TraceRecord(
				t=t,
				objective=float(theta_objective),
				values=tuple(float(v) for v in evaluator.values(state.theta)),
				omega_objective=None if omega_objective is None else float(omega_objective),
				accepted=accepted,
				wall_ms=timer.elapsed_ms() if timer is not None else None,
			)
			trace.records.append(record)

		if progress is not None:
			progress(t, T, record)

	if logger is not None and not trace.failed and trace.records:
		logger.log(f'Run {trace.label} finished, final objective = {trace.records[-1].reported:.10f}')

	return trace


def _trace_mdp_matches(trace: RunTrace, mdp: TabularMdp) -> bool:
	m = trace.metadata
	return (m['n_states'], m['n_actions']) == mdp.shape and np.allclose(m['rho'], mdp.initial_dist)


def optimal_objective(mdp: TabularMdp, tol: float = GAP_TOL) -> float:
	"""V*(rho)"""
	V_star, _ = optimal_values(mdp, tol)
	return float(mdp.initial_dist @ V_star)


def gap_series(trace: RunTrace, mdp: TabularMdp, v_star: float = None) -> GapSeries:
	"""Sub-optimality gap V*(rho) - V(rho) of the reported iterate at every record."""
	if not _trace_mdp_matches(trace, mdp):
		raise InvalidInputError(f'Trace of a {trace.metadata["n_states"]}x{trace.metadata["n_actions"]} MDP does not match the given {mdp.n_states}x{mdp.n_actions} MDP')

	v_star = optimal_objective(mdp) if v_star is None else v_star

	return GapSeries(
		iterations=trace.iterations,
		gaps=v_star - trace.reported,
		initial_gap=v_star - trace.initial_objective,
		v_star=v_star,
	)


def iterations_to_threshold(trace: RunTrace, threshold: float, v_star: float) -> Optional[int]:
	"""First recorded t with reported objective >= threshold V*(rho), None if never reached."""
	hits = np.nonzero(trace.reported >= threshold * v_star)[0]
	return int(trace.records[hits[0]].t) if hits.size else None


def default_workers() -> int:
	try:
		return max(1, int(environ.get(WORKERS_ENV, '1')))
	except ValueError:
		raise InvalidInputError(f'{WORKERS_ENV} must be a positive integer, got [{environ.get(WORKERS_ENV)}]')


def compare(configs: list, workers: int = None, logger=None, progress=None) -> list:
	"""
	Runs every config on one shared environment. Runs share no state, so
	with workers > 1 they execute concurrently; results keep input order.
	"""
	configs = list(configs)
	if not configs:
		raise InvalidInputError('Nothing to compare, the config list is empty')

	environments = {(c.environment, c.gamma) for c in configs}
	if len(environments) > 1:
		raise InvalidInputError(f'Compared runs must share one environment, got {sorted(environments, key=str)}')

	workers = default_workers() if workers is None else max(1, int(workers))

	if workers == 1 or len(configs) == 1:
		return [run(c, logger, progress) for c in configs]

	with ThreadPoolExecutor(max_workers=workers) as pool:
		return list(pool.map(lambda c: run(c, logger), configs))


def lambda_sweep(base: ExperimentConfig, lambdas: list, workers: int = None, logger=None, progress=None) -> list:
	if base.optimizer != 'spg-nm':
		raise InvalidInputError(f'Lambda sweep needs an spg-nm base config, got [{base.optimizer}]')

	lambdas = list(lambdas)
	if not lambdas:
		raise InvalidInputError('Lambda sweep needs at least one lambda')

	for lam in lambdas:
		if not lam > 0:
			raise InvalidInputError(f'lambda must be positive, got {lam}')

	configs = [replace(base, hyper={**base.hyper, 'lambda': float(lam)}) for lam in lambdas]
	return compare(configs, workers, logger, progress)


def _fmt(value) -> str:
	return '' if value is None else CSV_FMT % value


def csv_table(header: list, rows: list) -> str:
	"""Comma separated table of pre-formatted cells, empty strings for missing values."""
	cells = np.array(rows, dtype=str).reshape(len(rows), len(header))
	buffer = StringIO()
	np.savetxt(buffer, cells, fmt='%s', delimiter=',', header=','.join(header), comments='')
	return buffer.getvalue()


def trace_to_csv(trace: RunTrace, gaps: GapSeries = None) -> str:
	n_states = trace.metadata['n_states']
	header = ['t', 'objective', 'omega_objective'] + [f'V_s{i}' for i in range(n_states)] + ['gap', 'wall_ms']

	rows = []
	for i, r in enumerate(trace.records):
		gap = float(gaps.gaps[i]) if gaps is not None else None
		rows.append([str(r.t), _fmt(r.objective), _fmt(r.omega_objective)] + [_fmt(v) for v in r.values] + [_fmt(gap), _fmt(r.wall_ms)])

	return csv_table(header, rows)


def trace_to_json(trace: RunTrace, gaps: GapSeries = None) -> str:
	data = trace.to_dict()
	if gaps is not None:
		data['v_star'] = gaps.v_star
		data['initial_gap'] = gaps.initial_gap
		data['gaps'] = gaps.gaps.tolist()
	# repr() of a float is the shortest string that round-trips exactly
	return json.dumps(data, indent=1) + '\n'


def serialize_trace(trace: RunTrace, format: str, destination: str, gaps: GapSeries = None):
	if format == 'csv':
		text = trace_to_csv(trace, gaps)
	elif format == 'json':
		text = trace_to_json(trace, gaps)
	else:
		raise InvalidInputError(f'Trace format must be csv or json, got [{format}]')

	atomic_write(destination, text)


def trace_from_dict(data: dict) -> RunTrace:
	records = []
	for r in data['records']:
		r = dict(r)
		r['values'] = tuple(r['values'])
		records.append(TraceRecord(**r))

	return RunTrace(
		records=records,
		metadata=data['metadata'],
		final_params=PolicyParams(data['final_params']),
		initial_objective=data['initial_objective'],
		failed=data['failed'],
		failure=data['failure'],
	)


def load_trace(file_path: str) -> RunTrace:
	with open(file_path, 'r', encoding='utf-8') as f:
		return trace_from_dict(json.load(f))


# Experiment configuration files

EXPERIMENT_KEYS = {
	'Environment':  ('environment', str),
	'Optimizer':    ('optimizer', str),
	'Init':         ('init', str),
	'Logits':       ('logits', str),
	'Iterations':   ('iterations', int),
	'Gamma':        ('gamma', float),
	'RecordEvery':  ('record_every', int),
	'Seed':         ('seed', int),
	'GradientMode': ('gradient_mode', str),
	'Batch':        ('batch', int),
	'Horizon':      ('horizon', int),
	'Baseline':     ('baseline', bool),
	'WallTime':     ('wall_time', bool),
}

HYPER_KEYS = {
	'Eta':     'eta',
	'Beta':    'beta',
	'Lambda':  'lambda',
	'Beta1':   'beta1',
	'Beta2':   'beta2',
	'Epsilon': 'epsilon',
}


def parse_logits(string: str) -> tuple:
	"""Rows separated by ';', entries by ','. "1, 3, 5" is a single-state table."""
	try:
		rows = [tuple(float(x) for x in row.split(',')) for row in string.split(';') if row.strip() != '']
	except ValueError:
		raise InvalidInputError(f'Cannot parse logits [{string}]')
	return tuple(rows)


def config_from_parser(cfg: configparser.ConfigParser) -> ExperimentConfig:
	sections = set(cfg.sections())
	unknown = sorted(sections - {'Experiment', 'Hyperparameters'})
	if unknown:
		raise InvalidInputError(f'Unknown config sections {unknown}')
	if 'Experiment' not in sections:
		raise InvalidInputError('Config has no [Experiment] section')

	for section, allowed in (('Experiment', EXPERIMENT_KEYS), ('Hyperparameters', HYPER_KEYS)):
		if section in sections:
			bad = sorted(set(cfg[section]) - set(allowed))
			if bad:
				raise InvalidInputError(f'Unknown keys {bad} in section [{section}]')

	kwargs = {}
	for key, (name, type) in EXPERIMENT_KEYS.items():
		if key in cfg['Experiment']:
			value = cfg_get(cfg, 'Experiment', key, type, None)
			if value is not None:
				kwargs[name] = value

	for required in ('environment', 'optimizer'):
		if required not in kwargs:
			raise InvalidInputError(f'Config is missing [{required.capitalize()}] in section [Experiment]')

	if 'logits' in kwargs:
		kwargs['logits'] = parse_logits(kwargs['logits'])

	hyper = {}
	if 'Hyperparameters' in sections:
		for key, name in HYPER_KEYS.items():
			value = cfg_get(cfg, 'Hyperparameters', key, float, None) if key in cfg['Hyperparameters'] else None
			if value is not None:
				hyper[name] = value

	return ExperimentConfig(hyper=hyper, **kwargs)


CONFIG_FIELDS = tuple(name for name, _ in EXPERIMENT_KEYS.values())


def config_from_flags(flags: dict, base: ExperimentConfig = None) -> ExperimentConfig:
	"""
	Builds a config from command-line values. Keys are ExperimentConfig field
	names or hyperparameter names, None means "not given". Given values
	override base (a config file), everything else is kept.
	"""
	given = {k: v for k, v in flags.items() if v is not None}

	unknown = sorted(set(given) - set(CONFIG_FIELDS) - set(DEFAULT_HYPER))
	if unknown:
		raise InvalidInputError(f'Unknown experiment settings {unknown}')

	settings = {k: v for k, v in given.items() if k in CONFIG_FIELDS}
	hyper = {k: float(v) for k, v in given.items() if k in DEFAULT_HYPER}

	if isinstance(settings.get('logits'), str):
		settings['logits'] = parse_logits(settings['logits'])

	if base is None:
		for required in ('environment', 'optimizer'):
			if required not in settings:
				raise InvalidInputError(f'Missing experiment setting [{required}]')
		return ExperimentConfig(hyper=hyper, **settings)

	return replace(base, hyper={**base.hyper, **hyper}, **settings)


def load_experiment_config(file_path: str) -> ExperimentConfig:
	cfg = configparser.ConfigParser()
	cfg.optionxform = str

	try:
		read = cfg.read(file_path, encoding='utf-8-sig')
	except configparser.Error as ex:
		raise InvalidInputError(f'Cannot parse config file [{file_path}]: {ex}')

	if not read:
		raise InvalidInputError(f'Config file [{file_path}] not found')

	config = config_from_parser(cfg)

	# MDP files are looked up next to the config file first
	env = config.environment
	if env not in BUILTIN_ENVIRONMENTS and not path.isabs(env):
		candidate = path.join(path.dirname(path.abspath(file_path)), env)
		if path.isfile(candidate):
			config = replace(config, environment=candidate.replace('\\', '/'))

	return config


def summary_table(traces: list, v_star: float, threshold: float = None) -> str:
	"""Fixed-width text summary: final objective, final gap, iterations-to-threshold."""
	header = f'{"run":<28} {"final objective":>18} {"final gap":>12} {"status":>8}'
	if threshold is not None:
		header += f' {"t(>=" + format(threshold, "g") + " V*)":>14}'
	if any(t.metadata['optimizer'] == 'spg-nm' for t in traces):
		header += f' {"accept rate":>12}'

	lines = [header, '-' * len(header)]

	for trace in traces:
		final = trace.records[-1].reported if trace.records else trace.initial_objective
		line = f'{trace.label:<28} {final:>18.10f} {v_star - final:>12.3e} {"failed" if trace.failed else "ok":>8}'

		if threshold is not None:
			hit = iterations_to_threshold(trace, threshold, v_star)
			line += f' {"never" if hit is None else str(hit):>14}'

		if 'accept rate' in header:
			rate = trace.acceptance_rate()
			line += f' {"-" if rate is None else format(rate, ".3f"):>12}'

		lines.append(line)

	return '\n'.join(lines) + '\n'
