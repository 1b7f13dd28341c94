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

# Policy gradient of V(mu) w.r.t. the softmax logits: exact, finite-difference and sampled.

try:
	from __init__ import *
	from dataclasses import dataclass
	from mdp_core import TabularMdp, PolicyParams, evaluate, softmax_policy, policy_evaluation, objective
	from utilities import InvalidInputError

except Exception as ex:
	from utilities import present_exception_and_exit
	present_exception_and_exit('Import failed! For more information see traceback below. Please report this issue to the maintainers:')


DEFAULT_FD_STEP = 1e-5


@dataclass(frozen=True)
class GradientTable:
	"""partials[s, a] = dV(mu)/dtheta[s, a]"""
	partials: np.ndarray

	def __post_init__(self):
		partials = np.array(self.partials, dtype=float)
		partials.setflags(write=False)
		object.__setattr__(self, 'partials', partials)

	@property
	def shape(self) -> tuple:
		return self.partials.shape

	def is_finite(self) -> bool:
		return bool(np.all(np.isfinite(self.partials)))


@dataclass(frozen=True)
class SampleBatch:
	"""
	Rolled-out trajectories stored as (batch, horizon) arrays; row i of
	states/actions/rewards is trajectory i.
	"""
	states: np.ndarray
	actions: np.ndarray
	rewards: np.ndarray
	horizon: int
	seed: int

	def __len__(self) -> int:
		return self.states.shape[0]

	def trajectory(self, i: int) -> list:
		return list(zip(self.states[i].tolist(), self.actions[i].tolist(), self.rewards[i].tolist()))


def _check_params(mdp: TabularMdp, params: PolicyParams):
	if params.shape != mdp.shape:
		raise InvalidInputError(f'Logits shape {params.shape} does not match MDP shape {mdp.shape}')


def _start(mdp: TabularMdp, start) -> np.ndarray:
	start = mdp.initial_dist if start is None else np.asarray(start, dtype=float)
	if start.shape != (mdp.n_states,):
		raise InvalidInputError(f'Start distribution must have {mdp.n_states} entries, got shape {start.shape}')
	return start


def exact_gradient(mdp: TabularMdp, params: PolicyParams, start=None) -> GradientTable:
	"""
	dV(mu)/dtheta[s, a] = d_mu(s) pi(a|s) A(s, a) / (1 - gamma)
	"""
	_check_params(mdp, params)
	bundle = evaluate(mdp, params, _start(mdp, start))
	partials = bundle.visitation[:, None] * bundle.policy.probs * bundle.advantages / (1 - mdp.discount)
	return GradientTable(partials)


def objective_of(mdp: TabularMdp, params: PolicyParams, start=None) -> float:
	V = policy_evaluation(mdp, softmax_policy(params))
	return objective(mdp, V, _start(mdp, start))


def finite_difference_gradient(mdp: TabularMdp, params: PolicyParams, start=None, h: float = DEFAULT_FD_STEP) -> GradientTable:
	if not h > 0:
		raise InvalidInputError(f'Finite difference step must be positive, got {h}')

	_check_params(mdp, params)
	start = _start(mdp, start)
	theta = params.logits
	partials = np.zeros(theta.shape)

	for s, a in np.ndindex(*theta.shape):
		e = np.zeros(theta.shape)
		e[s, a] = h
		f_plus = objective_of(mdp, PolicyParams(theta + e), start)
		f_minus = objective_of(mdp, PolicyParams(theta - e), start)
		partials[s, a] = (f_plus - f_minus) / (2*h)

	return GradientTable(partials)


def make_rng(seed: int) -> np.random.Generator:
	# Philox4x64-10: counter-based, identical streams on every platform
	return np.random.Generator(np.random.Philox(int(seed)))


def _draw(rng, probs: np.ndarray) -> np.ndarray:
	"""One categorical draw per row of probs."""
	u = rng.random(probs.shape[0])
	idx = (u[:, None] >= np.cumsum(probs, axis=1)).sum(axis=1)
	return np.minimum(idx, probs.shape[1] - 1)


def _check_counts(batch, horizon):
	for name, value in (('batch', batch), ('horizon', horizon)):
		if int(value) != value or value < 1:
			raise InvalidInputError(f'{name} must be a positive count, got {value}')


def sample_trajectories(mdp: TabularMdp, params: PolicyParams, start, batch: int, horizon: int, seed: int) -> SampleBatch:
	_check_counts(batch, horizon)
	_check_params(mdp, params)
	batch, horizon = int(batch), int(horizon)

	rng = make_rng(seed)
	pi = softmax_policy(params).probs

	states = np.zeros([batch, horizon], dtype=int)
	actions = np.zeros([batch, horizon], dtype=int)
	rewards = np.zeros([batch, horizon])

	s = _draw(rng, np.broadcast_to(_start(mdp, start), (batch, mdp.n_states)))

	for t in range(horizon):
		a = _draw(rng, pi[s])
		states[:, t] = s
		actions[:, t] = a
		rewards[:, t] = mdp.reward[s, a]

		if t < horizon - 1:
			s = _draw(rng, mdp.transition[s, a])

	return SampleBatch(states, actions, rewards, horizon, int(seed))


def trajectory_gradients(mdp: TabularMdp, params: PolicyParams, samples: SampleBatch, baseline: bool = False) -> np.ndarray:
	"""
	Per-trajectory REINFORCE terms sum_t gamma^t (G_t - b(s_t)) grad log pi(a_t|s_t),
	shape (batch, n_states, n_actions). G_t is the return-to-go within the horizon,
	b the exact state value when baseline is on.
	"""
	pi = softmax_policy(params).probs
	gamma = mdp.discount
	n, H = samples.states.shape

	returns = np.zeros([n, H])
	running = np.zeros(n)
	for t in reversed(range(H)):
		running = samples.rewards[:, t] + gamma * running
		returns[:, t] = running

	if baseline:
		returns = returns - policy_evaluation(mdp, softmax_policy(params))[samples.states]

	rows = np.arange(n)
	eye = np.eye(mdp.n_actions)
	contrib = np.zeros([n, mdp.n_states, mdp.n_actions])

	for t in range(H):
		discount = gamma ** t
		if discount == 0:
			break
		s = samples.states[:, t]
		score = eye[samples.actions[:, t]] - pi[s]
		contrib[rows, s] += (discount * returns[:, t])[:, None] * score

	return contrib


def sampled_gradient_stats(mdp: TabularMdp, params: PolicyParams, start=None, batch: int = 1000, horizon: int = 100, seed: int = 0, baseline: bool = False) -> tuple:
	"""Sampled gradient together with the per-entry standard error of the batch mean."""
	samples = sample_trajectories(mdp, params, start, batch, horizon, seed)
	contrib = trajectory_gradients(mdp, params, samples, baseline)

	mean = contrib.mean(axis=0)
	stderr = contrib.std(axis=0, ddof=1) / np.sqrt(len(samples)) if len(samples) > 1 else np.full(mean.shape, np.inf)

	return GradientTable(mean), stderr


def sampled_gradient(mdp: TabularMdp, params: PolicyParams, start=None, batch: int = 1000, horizon: int = 100, seed: int = 0, baseline: bool = False) -> GradientTable:
	return sampled_gradient_stats(mdp, params, start, batch, horizon, seed, baseline)[0]
