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

# Policy gradient update rules. All of them ascend V(mu), so gradients enter with a plus sign.

try:
	from __init__ import *
	from dataclasses import dataclass, replace
	from fractions import Fraction
	from math import isfinite
	from typing import Callable, Optional
	from mdp_core import PolicyParams, compact_logits
	from gradient import GradientTable
	from utilities import InvalidInputError, NumericalFailure

except Exception as ex:
	from utilities import present_exception_and_exit
	present_exception_and_exit('Import failed! For more information see traceback below. Please report this issue to the maintainers:')


OPTIMIZERS = ('pg', 'pg-hb', 'apg', 'pg-adam', 'spg-nm')

DEFAULT_HYPER = {
	'eta':     0.1,
	'beta':    0.9,
	'beta1':   0.9,
	'beta2':   0.999,
	'epsilon': 1e-8,
	'lambda':  1000.0,
}

# Hyperparameters each optimizer reads, the rest are ignored
HYPER_NAMES = {
	'pg':      ('eta',),
	'pg-hb':   ('eta', 'beta'),
	'apg':     ('eta',),
	'pg-adam': ('eta', 'beta1', 'beta2', 'epsilon'),
	'spg-nm':  ('eta', 'lambda'),
}


@dataclass(frozen=True)
class StepContext:
	gradient_at: Callable
	objective_at: Callable
	iteration: int

	def __post_init__(self):
		if int(self.iteration) != self.iteration or self.iteration < 1:
			raise InvalidInputError(f'Iteration counter starts at 1, got {self.iteration}')


def _check_eta(eta):
	if not (isfinite(eta) and eta >= 0):
		raise InvalidInputError(f'Learning rate must be a non-negative finite number, got {eta}')


def _check_unit(name, value):
	if not 0 <= value < 1:
		raise InvalidInputError(f'{name} must lie in [0, 1), got {value}')


@dataclass(frozen=True)
class PgState:
	theta: PolicyParams
	eta: float

	def __post_init__(self):
		_check_eta(self.eta)


@dataclass(frozen=True)
class HeavyBallState:
	theta: PolicyParams
	theta_prev: PolicyParams
	eta: float
	beta: float

	def __post_init__(self):
		_check_eta(self.eta)
		_check_unit('beta', self.beta)


@dataclass(frozen=True)
class NagState:
	theta: PolicyParams
	lookahead: PolicyParams
	eta: float

	def __post_init__(self):
		_check_eta(self.eta)


@dataclass(frozen=True)
class AdamState:
	theta: PolicyParams
	first_moment: np.ndarray
	second_moment: np.ndarray
	eta: float
	beta1: float = 0.9
	beta2: float = 0.999
	epsilon: float = 1e-8

	def __post_init__(self):
		_check_eta(self.eta)
		_check_unit('beta1', self.beta1)
		_check_unit('beta2', self.beta2)
		if not self.epsilon > 0:
			raise InvalidInputError(f'epsilon must be positive, got {self.epsilon}')


@dataclass(frozen=True)
class SpgNmState:
	"""
	theta: last gradient iterate, theta_prev: the one before it,
	omega: kept solution (phi or theta). theta_value/omega_value are the
	objectives computed by the acceptance test of the last step.
	"""
	theta: PolicyParams
	theta_prev: PolicyParams
	omega: PolicyParams
	eta: float
	lam: float
	theta_value: Optional[float] = None
	omega_value: Optional[float] = None
	accepted: Optional[bool] = None

	def __post_init__(self):
		_check_eta(self.eta)
		if not (isfinite(self.lam) and self.lam > 0):
			raise InvalidInputError(f'lambda must be positive, got {self.lam}')


def _gradient(ctx: StepContext, params: PolicyParams, lam=None) -> np.ndarray:
	g = ctx.gradient_at(params)
	g = g.partials if isinstance(g, GradientTable) else np.asarray(g, dtype=float)

	if not np.all(np.isfinite(g)):
		raise NumericalFailure(f'Non-finite gradient at iteration {ctx.iteration}', iteration=ctx.iteration, lam=lam)

	return g


def _params(array: np.ndarray, ctx: StepContext, what='theta', lam=None) -> PolicyParams:
	if not np.all(np.isfinite(array)):
		message = f'Non-finite {what} at iteration {ctx.iteration}'
		if lam is not None:
			message += f' (lambda = {lam:g})'
		raise NumericalFailure(message, iteration=ctx.iteration, lam=lam)

	return PolicyParams(array)


def nag_coefficient(t: int) -> Fraction:
	"""Momentum multiplier (t - 1)/(t + 2) of step t."""
	return Fraction(t - 1, t + 2)


def pg_step(state: PgState, ctx: StepContext) -> PgState:
	g = _gradient(ctx, state.theta)
	theta = state.theta.logits + state.eta * g
	return replace(state, theta=_params(theta, ctx))


def heavy_ball_step(state: HeavyBallState, ctx: StepContext) -> HeavyBallState:
	g = _gradient(ctx, state.theta)
	x = state.theta.logits
	theta = x + state.eta * g + state.beta * (x - state.theta_prev.logits)
	return replace(state, theta=_params(theta, ctx), theta_prev=state.theta)


def nag_step(state: NagState, ctx: StepContext) -> NagState:
	g = _gradient(ctx, state.lookahead)
	theta = state.lookahead.logits + state.eta * g
	momentum = float(nag_coefficient(ctx.iteration))
	lookahead = theta + momentum * (theta - state.theta.logits)
	return replace(state, theta=_params(theta, ctx), lookahead=_params(lookahead, ctx, 'lookahead'))


def adam_step(state: AdamState, ctx: StepContext) -> AdamState:
	g = _gradient(ctx, state.theta)
	t = ctx.iteration

	m = state.beta1 * state.first_moment + (1 - state.beta1) * g
	v = state.beta2 * state.second_moment + (1 - state.beta2) * g**2
	m_hat = m / (1 - state.beta1**t)
	v_hat = v / (1 - state.beta2**t)

	theta = state.theta.logits + state.eta * m_hat / (np.sqrt(v_hat) + state.epsilon)
	return replace(state, theta=_params(theta, ctx), first_moment=m, second_moment=v)


def spg_nm_step(state: SpgNmState, ctx: StepContext) -> SpgNmState:
	"""
	Gradient step from omega, then the negative momentum candidate
	phi = lam theta_new + (1 - lam)(theta_new - theta), kept as omega when
	V(phi) >= V(theta_new). phi is stored compacted (see compact_logits),
	which keeps its logits finite for any lambda with a finite lam * theta.
	Costs one gradient and two objective evaluations.
	"""
	lam = state.lam
	g = _gradient(ctx, state.omega, lam)

	theta_new = _params(state.omega.logits + state.eta * g, ctx, 'theta', lam)

	# overflow surfaces as NumericalFailure below
	with np.errstate(over='ignore', invalid='ignore'):
		phi = lam * theta_new.logits + (1 - lam) * (theta_new.logits - state.theta.logits)

	# same policy, bounded logits
	phi = compact_logits(_params(phi, ctx, 'phi', lam))

	phi_value = ctx.objective_at(phi)
	theta_value = ctx.objective_at(theta_new)

	if not (isfinite(phi_value) and isfinite(theta_value)):
		raise NumericalFailure(f'Non-finite objective at iteration {ctx.iteration} (lambda = {lam:g})', iteration=ctx.iteration, lam=lam)

	accepted = phi_value >= theta_value

	return replace(
		state,
		theta=theta_new,
		theta_prev=state.theta,
		omega=phi if accepted else theta_new,
		theta_value=theta_value,
		omega_value=phi_value if accepted else theta_value,
		accepted=accepted,
	)


STEP_FUNCTIONS = {
	'pg':      pg_step,
	'pg-hb':   heavy_ball_step,
	'apg':     nag_step,
	'pg-adam': adam_step,
	'spg-nm':  spg_nm_step,
}


def resolve_hyper(name: str, hyper: dict = None) -> dict:
	"""
	Fills the hyperparameters optimizer [name] reads from hyper, falling back
	to DEFAULT_HYPER, and validates them.
	"""
	if name not in OPTIMIZERS:
		raise InvalidInputError(f'Unknown optimizer [{name}], valid identifiers are: {", ".join(OPTIMIZERS)}')

	hyper = dict(hyper or {})
	unknown = sorted(set(hyper) - set(DEFAULT_HYPER))
	if unknown:
		raise InvalidInputError(f'Unknown hyperparameters {unknown}, valid names are: {", ".join(DEFAULT_HYPER)}')

	resolved = {}
	for key in HYPER_NAMES[name]:
		value = hyper.get(key)
		try:
			resolved[key] = float(DEFAULT_HYPER[key] if value is None else value)
		except (TypeError, ValueError):
			raise InvalidInputError(f'Hyperparameter [{key}] must be a number, got [{value}]')

	if not (isfinite(resolved['eta']) and resolved['eta'] > 0):
		raise InvalidInputError(f'eta must be positive, got {resolved["eta"]}')

	for key in ('beta', 'beta1', 'beta2'):
		if key in resolved:
			_check_unit(key, resolved[key])

	if 'epsilon' in resolved and not resolved['epsilon'] > 0:
		raise InvalidInputError(f'epsilon must be positive, got {resolved["epsilon"]}')

	if 'lambda' in resolved and not (isfinite(resolved['lambda']) and resolved['lambda'] > 0):
		raise InvalidInputError(f'lambda must be positive, got {resolved["lambda"]}')

	return resolved


class Stepper:
	"""
	One optimizer run: holds the algorithm state and advances it with
	step(ctx). Use .start(params) to initialize from theta(0).
	"""

	def __init__(self, name: str, hyper: dict):
		self.name = name
		self.hyper = hyper
		self.step_fn = STEP_FUNCTIONS[name]
		self.state = None

	def start(self, params: PolicyParams):
		h = self.hyper

		if self.name == 'pg':
			self.state = PgState(params, h['eta'])
		elif self.name == 'pg-hb':
			self.state = HeavyBallState(params, params, h['eta'], h['beta'])
		elif self.name == 'apg':
			self.state = NagState(params, params, h['eta'])
		elif self.name == 'pg-adam':
			zeros = np.zeros(params.shape)
			self.state = AdamState(params, zeros, zeros, h['eta'], h['beta1'], h['beta2'], h['epsilon'])
		elif self.name == 'spg-nm':
			self.state = SpgNmState(params, params, params, h['eta'], h['lambda'])

		return self

	def step(self, ctx: StepContext):
		if self.state is None:
			raise InvalidInputError('Stepper has not been started, call .start(params) first')
		self.state = self.step_fn(self.state, ctx)
		return self.state

	__call__ = step

	@property
	def iterate(self) -> PolicyParams:
		"""The iterate the algorithm reports: omega for SPG-NM, theta otherwise."""
		return self.state.omega if self.name == 'spg-nm' else self.state.theta


def make_stepper(name: str, hyper: dict = None, params: PolicyParams = None) -> Stepper:
	stepper = Stepper(name, resolve_hyper(name, hyper))
	if params is not None:
		stepper.start(params)
	return stepper
