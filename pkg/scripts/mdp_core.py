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

# Finite MDPs, softmax policies and exact Bellman solvers.

try:
	from __init__ import *
	from dataclasses import dataclass, field
	from itertools import product
	from scipy.linalg import solve
	from scipy.special import softmax
	from utilities import InvalidInputError, ConvergenceError

except Exception as ex:
	from utilities import present_exception_and_exit
	present_exception_and_exit('Import failed! For more information see traceback below. Please report this issue to the maintainers:')


PROB_TOL = 1e-9
MAX_SWEEPS = 10**6

# exp(x) underflows to exactly 0 below about -745
MIN_LOGIT_SPAN = 746.0
LOGIT_SPAN = 1000.0


def _frozen(array, dtype=float) -> np.ndarray:
	a = np.array(array, dtype=dtype)
	a.setflags(write=False)
	return a


@dataclass(frozen=True)
class TabularMdp:
	"""
	Finite MDP. reward[s, a] is the one step reward, transition[s, a, s'] the
	probability of moving to s', initial_dist the start distribution rho.
	Shapes are checked here; probability axioms are reported by validate().
	"""
	reward: np.ndarray
	transition: np.ndarray
	discount: float
	initial_dist: np.ndarray

	def __post_init__(self):
		reward = _frozen(self.reward)
		transition = _frozen(self.transition)
		initial_dist = _frozen(self.initial_dist)

		if reward.ndim != 2 or reward.shape[0] < 1 or reward.shape[1] < 1:
			raise InvalidInputError(f'Reward table must be a non-empty (n_states, n_actions) table, got shape {reward.shape}')

		n_states, n_actions = reward.shape

		if transition.shape != (n_states, n_actions, n_states):
			raise InvalidInputError(f'Transition table must have shape {(n_states, n_actions, n_states)}, got {transition.shape}')
		if initial_dist.shape != (n_states,):
			raise InvalidInputError(f'Initial distribution must have {n_states} entries, got shape {initial_dist.shape}')

		object.__setattr__(self, 'reward', reward)
		object.__setattr__(self, 'transition', transition)
		object.__setattr__(self, 'initial_dist', initial_dist)
		object.__setattr__(self, 'discount', float(self.discount))

	@property
	def n_states(self) -> int:
		return self.reward.shape[0]

	@property
	def n_actions(self) -> int:
		return self.reward.shape[1]

	@property
	def shape(self) -> tuple:
		return self.reward.shape


@dataclass(frozen=True)
class PolicyParams:
	"""Logit table theta[s, a] of a tabular softmax policy."""
	logits: np.ndarray

	def __post_init__(self):
		logits = _frozen(self.logits)

		if logits.ndim != 2:
			raise InvalidInputError(f'Logits must be a (n_states, n_actions) table, got shape {logits.shape}')
		if not np.all(np.isfinite(logits)):
			bad = [tuple(int(i) for i in x) for x in np.argwhere(~np.isfinite(logits))]
			raise InvalidInputError(f'Logits must be finite, non-finite entries at {bad[:5]}')

		object.__setattr__(self, 'logits', logits)

	@property
	def shape(self) -> tuple:
		return self.logits.shape

	@classmethod
	def zeros(cls, n_states: int, n_actions: int):
		return cls(np.zeros([n_states, n_actions]))


@dataclass(frozen=True)
class PolicyDistribution:
	probs: np.ndarray

	def __post_init__(self):
		object.__setattr__(self, 'probs', _frozen(self.probs))

	@property
	def shape(self) -> tuple:
		return self.probs.shape


@dataclass(frozen=True)
class EvaluationBundle:
	"""Everything a gradient step needs for one policy."""
	policy: PolicyDistribution
	state_values: np.ndarray
	action_values: np.ndarray
	advantages: np.ndarray
	visitation: np.ndarray
	objective: float


@dataclass
class ValidationReport:
	violations: list = field(default_factory=list)

	@property
	def ok(self) -> bool:
		return not self.violations

	def __bool__(self) -> bool:
		return self.ok

	def __str__(self) -> str:
		if self.ok:
			return 'MDP is valid'
		return '\n'.join(self.violations)


def validate(mdp: TabularMdp) -> ValidationReport:
	report = ValidationReport()
	v = report.violations

	if not np.all(np.isfinite(mdp.reward)):
		v.append('reward contains non-finite entries')

	for s, a in zip(*np.nonzero((mdp.reward < 0) | (mdp.reward > 1))):
		v.append(f'reward[s={s}, a={a}] = {mdp.reward[s, a]:g} lies outside [0, 1]')

	for s, a, sp in zip(*np.nonzero(~(mdp.transition >= 0))):
		v.append(f'transition[s={s}, a={a}, s\'={sp}] = {mdp.transition[s, a, sp]:g} is negative')

	row_sums = mdp.transition.sum(axis=2)
	for s, a in zip(*np.nonzero(~(np.abs(row_sums - 1) <= PROB_TOL))):
		v.append(f'transition[s={s}, a={a}] sums to {row_sums[s, a]:.12g} (expected 1)')

	for s in np.nonzero(~(mdp.initial_dist >= 0))[0]:
		v.append(f'initial_dist[s={s}] = {mdp.initial_dist[s]:g} is negative')

	rho_sum = mdp.initial_dist.sum()
	if not abs(rho_sum - 1) <= PROB_TOL:
		v.append(f'initial_dist sums to {rho_sum:.12g} (expected 1)')

	if not 0 <= mdp.discount < 1:
		v.append(f'discount = {mdp.discount:g} violates 0 <= gamma < 1')

	return report


def softmax_policy(params: PolicyParams) -> PolicyDistribution:
	# scipy subtracts the row max before exponentiating
	return PolicyDistribution(softmax(params.logits, axis=1))


def compact_logits(params: PolicyParams, span: float = LOGIT_SPAN) -> PolicyParams:
	"""
	Logits of the same softmax policy, kept bounded. Rows whose spread or
	largest entry exceeds span are shifted to a zero max and floored at
	-span; narrower rows are left as they are. exp(-span) is 0 in float64,
	so softmax_policy gives bit-identical probabilities.
	"""
	if not span >= MIN_LOGIT_SPAN:
		raise InvalidInputError(f'Logit span must be at least {MIN_LOGIT_SPAN}, got {span}')

	x = params.logits
	row_max = x.max(axis=1, keepdims=True)
	wide = (row_max - x.min(axis=1, keepdims=True) > span) | (np.abs(row_max) > span)

	if not wide.any():
		return params

	return PolicyParams(np.where(wide, np.maximum(x - row_max, -span), x))


def _check_policy(mdp: TabularMdp, policy: PolicyDistribution):
	if policy.shape != mdp.shape:
		raise InvalidInputError(f'Policy shape {policy.shape} does not match MDP shape {mdp.shape}')


def _check_state_vector(mdp: TabularMdp, vector, name: str) -> np.ndarray:
	vector = np.asarray(vector, dtype=float)
	if vector.shape != (mdp.n_states,):
		raise InvalidInputError(f'{name} must have {mdp.n_states} entries, got shape {vector.shape}')
	return vector


def policy_matrices(mdp: TabularMdp, policy: PolicyDistribution) -> tuple:
	"""Policy-averaged reward r_pi[s] and transition P_pi[s, s']."""
	_check_policy(mdp, policy)
	r_pi = np.einsum('sa,sa->s', policy.probs, mdp.reward)
	P_pi = np.einsum('sa,sat->st', policy.probs, mdp.transition)
	return r_pi, P_pi


def policy_evaluation(mdp: TabularMdp, policy: PolicyDistribution) -> np.ndarray:
	"""Solves (I - gamma P_pi) V = r_pi directly."""
	r_pi, P_pi = policy_matrices(mdp, policy)
	return solve(np.eye(mdp.n_states) - mdp.discount * P_pi, r_pi)


def action_values(mdp: TabularMdp, state_values) -> np.ndarray:
	V = _check_state_vector(mdp, state_values, 'State values')
	return mdp.reward + mdp.discount * np.einsum('sat,t->sa', mdp.transition, V)


def visitation_distribution(mdp: TabularMdp, policy: PolicyDistribution, start) -> np.ndarray:
	"""
	Normalized discounted occupancy d(s) = (1 - gamma) sum_t gamma^t Pr(s_t = s),
	from d^T = (1 - gamma) start^T (I - gamma P_pi)^-1.
	"""
	start = _check_state_vector(mdp, start, 'Start distribution')
	_, P_pi = policy_matrices(mdp, policy)
	gamma = mdp.discount

	d = (1 - gamma) * solve((np.eye(mdp.n_states) - gamma * P_pi).T, start)
	return np.maximum(d, 0.0)


def objective(mdp: TabularMdp, state_values, start) -> float:
	V = _check_state_vector(mdp, state_values, 'State values')
	start = _check_state_vector(mdp, start, 'Start distribution')
	return float(start @ V)


def evaluate(mdp: TabularMdp, params: PolicyParams, start=None) -> EvaluationBundle:
	start = mdp.initial_dist if start is None else start
	policy = softmax_policy(params)
	V = policy_evaluation(mdp, policy)
	Q = action_values(mdp, V)

	return EvaluationBundle(
		policy=policy,
		state_values=V,
		action_values=Q,
		advantages=Q - V[:, None],
		visitation=visitation_distribution(mdp, policy, start),
		objective=objective(mdp, V, start),
	)


def optimal_values(mdp: TabularMdp, tol: float) -> tuple:
	"""
	Value iteration on the Bellman optimality equation.
	Stops when ||V_k+1 - V_k|| <= tol (1 - gamma) / (2 gamma), which bounds
	||V_k+1 - V*|| by tol. Returns V* and the greedy action per state,
	ties going to the lowest action index.
	"""
	if not tol > 0:
		raise InvalidInputError(f'Tolerance must be positive, got {tol}')

	gamma = mdp.discount
	V = np.max(mdp.reward, axis=1)

	if gamma > 0:
		threshold = tol * (1 - gamma) / (2 * gamma)

		for _ in range(MAX_SWEEPS):
			V_next = np.max(action_values(mdp, V), axis=1)
			delta = np.max(np.abs(V_next - V))
			V = V_next

			if delta <= threshold:
				break
		else:
			raise ConvergenceError(f'Value iteration did not converge to tol={tol:g} within {MAX_SWEEPS} sweeps')

	greedy = np.argmax(action_values(mdp, V), axis=1)
	return V, greedy


def bandit_as_mdp(rewards) -> TabularMdp:
	"""Multi-armed bandit as a single-state, gamma = 0 MDP with self-loops."""
	rewards = np.asarray(rewards, dtype=float).ravel()

	if rewards.size == 0:
		raise InvalidInputError('Bandit needs at least one arm')
	if not np.all((rewards >= 0) & (rewards <= 1)):
		raise InvalidInputError(f'Bandit rewards must lie in [0, 1], got {rewards.tolist()}')

	n_actions = rewards.size
	return TabularMdp(
		reward=rewards[None, :],
		transition=np.ones([1, n_actions, 1]),
		discount=0.0,
		initial_dist=np.ones(1),
	)


def deterministic_policy(actions, n_actions: int) -> PolicyDistribution:
	actions = np.asarray(actions, dtype=int)
	return PolicyDistribution(np.eye(n_actions)[actions])


# Reference routines, used as oracles by the tests and the gap cross-check

def iterative_policy_evaluation(mdp: TabularMdp, policy: PolicyDistribution, tol: float = 1e-12, max_sweeps: int = MAX_SWEEPS) -> np.ndarray:
	r_pi, P_pi = policy_matrices(mdp, policy)
	V = np.zeros(mdp.n_states)

	for _ in range(max_sweeps):
		V_next = r_pi + mdp.discount * P_pi @ V
		if np.max(np.abs(V_next - V)) <= tol:
			return V_next
		V = V_next

	raise ConvergenceError(f'Iterative evaluation did not converge to tol={tol:g} within {max_sweeps} sweeps')


def truncated_visitation(mdp: TabularMdp, policy: PolicyDistribution, start, steps: int = 200) -> np.ndarray:
	"""sum_{t <= steps} gamma^t Pr(s_t = s), normalized to a distribution."""
	_, P_pi = policy_matrices(mdp, policy)
	p = _check_state_vector(mdp, start, 'Start distribution').copy()
	d = np.zeros(mdp.n_states)
	weight = 1.0

	for _ in range(steps + 1):
		d += weight * p
		p = P_pi.T @ p
		weight *= mdp.discount

	return d / d.sum()


def enumerate_deterministic_policies(mdp: TabularMdp) -> tuple:
	"""
	Evaluates all n_actions ** n_states deterministic policies by linear solve.
	Returns the statewise maximum of their values and the policy greedy on it.
	"""
	best_V = np.full(mdp.n_states, -np.inf)

	for actions in product(range(mdp.n_actions), repeat=mdp.n_states):
		V = policy_evaluation(mdp, deterministic_policy(actions, mdp.n_actions))
		best_V = np.maximum(best_V, V)

	return best_V, np.argmax(action_values(mdp, best_V), axis=1)
