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

# Built-in benchmark environments and the MDP definition file format.

try:
	from __init__ import *
	from dataclasses import dataclass
	from os import path
	from mdp_core import TabularMdp, PolicyParams, bandit_as_mdp, validate
	from utilities import InvalidInputError, atomic_write

	import json

except Exception as ex:
	from utilities import present_exception_and_exit
	present_exception_and_exit('Import failed! For more information see traceback below. Please report this issue to the maintainers:')


DEFAULT_GAMMA = 0.9
INITS = ('uniform', 'hard')

BANDIT_REWARDS = [1.0, 0.99, 0.0]
BANDIT_HARD_LOGITS = [[1.0, 3.0, 5.0]]

MDP_RHO = [0.3, 0.2, 0.1, 0.15, 0.25]

MDP_REWARD = [
	[1.0, 0.8, 0.6, 0.7, 0.4],
	[0.5, 0.3, 0.1, 1.0, 0.6],
	[0.6, 0.9, 0.8, 0.7, 1.0],
	[0.1, 0.2, 0.6, 0.7, 0.4],
	[0.8, 0.4, 0.6, 0.2, 0.9],
]

MDP_HARD_LOGITS = [
	[1, 2, 3, 4, 5],
	[3, 4, 5, 1, 2],
	[5, 2, 3, 4, 1],
	[5, 4, 2, 1, 3],
	[2, 4, 3, 5, 1],
]

# One table per source state, as printed: row = next state, column = action.
# Columns sum to 1, so transition[s][a][s'] = MDP_NEXT_STATE_TABLES[s][s'][a].
MDP_NEXT_STATE_TABLES = [
	[[0.1, 0.6, 0.5, 0.4, 0.2],
	 [0.5, 0.1, 0.1, 0.3, 0.1],
	 [0.1, 0.1, 0.1, 0.1, 0.1],
	 [0.2, 0.1, 0.2, 0.1, 0.1],
	 [0.1, 0.1, 0.1, 0.1, 0.5]],

	[[0.1, 0.4, 0.1, 0.4, 0.2],
	 [0.5, 0.1, 0.4, 0.1, 0.2],
	 [0.2, 0.2, 0.3, 0.1, 0.2],
	 [0.1, 0.2, 0.1, 0.1, 0.2],
	 [0.1, 0.1, 0.1, 0.3, 0.2]],

	[[0.6, 0.2, 0.3, 0.1, 0.2],
	 [0.1, 0.4, 0.3, 0.4, 0.1],
	 [0.1, 0.1, 0.2, 0.3, 0.1],
	 [0.1, 0.2, 0.1, 0.1, 0.1],
	 [0.1, 0.1, 0.1, 0.1, 0.5]],

	[[0.6, 0.1, 0.2, 0.4, 0.5],
	 [0.1, 0.5, 0.1, 0.3, 0.1],
	 [0.1, 0.1, 0.1, 0.1, 0.1],
	 [0.1, 0.2, 0.1, 0.1, 0.2],
	 [0.1, 0.1, 0.5, 0.1, 0.1]],

	[[0.2, 0.4, 0.4, 0.1, 0.2],
	 [0.2, 0.1, 0.1, 0.4, 0.5],
	 [0.2, 0.2, 0.1, 0.2, 0.1],
	 [0.2, 0.2, 0.3, 0.1, 0.1],
	 [0.2, 0.1, 0.1, 0.2, 0.1]],
]

BUILTIN_ENVIRONMENTS = ('bandit-uniform', 'bandit-hard', 'mdp-uniform', 'mdp-hard')


@dataclass(frozen=True)
class Environment:
	"""An MDP with its named initial logit tables and the init used by default."""
	name: str
	mdp: TabularMdp
	inits: dict
	init: str

	@property
	def params(self) -> PolicyParams:
		return self.inits[self.init]

	def initial_params(self, init: str = None) -> PolicyParams:
		init = self.init if init is None else init
		if init not in self.inits:
			raise InvalidInputError(f'Environment [{self.name}] has no [{init}] initialization, available: {", ".join(self.inits)}')
		return self.inits[init]


def five_state_mdp(gamma: float = DEFAULT_GAMMA) -> TabularMdp:
	transition = np.transpose(np.array(MDP_NEXT_STATE_TABLES), (0, 2, 1))
	return TabularMdp(MDP_REWARD, transition, gamma, MDP_RHO)


def builtin_environment(name: str, gamma: float = None) -> Environment:
	"""
	bandit-uniform, bandit-hard: 3-armed bandit, zero logits / logits [1, 3, 5].
	mdp-uniform, mdp-hard: 5-state 5-action MDP, zero logits / the hard table.
	gamma overrides the discount of the MDP pair (the bandits stay at gamma = 0
	unless overridden).
	"""
	if name not in BUILTIN_ENVIRONMENTS:
		raise InvalidInputError(f'Unknown environment [{name}], built-in environments are: {", ".join(BUILTIN_ENVIRONMENTS)}')

	family, init = name.split('-')

	if family == 'bandit':
		mdp = bandit_as_mdp(BANDIT_REWARDS)
		if gamma is not None:
			mdp = TabularMdp(mdp.reward, mdp.transition, gamma, mdp.initial_dist)
		hard = PolicyParams(BANDIT_HARD_LOGITS)
	else:
		mdp = five_state_mdp(DEFAULT_GAMMA if gamma is None else gamma)
		hard = PolicyParams(MDP_HARD_LOGITS)

	inits = {'uniform': PolicyParams.zeros(*mdp.shape), 'hard': hard}
	return Environment(name, mdp, inits, init)


def mdp_to_dict(mdp: TabularMdp, hard_logits: PolicyParams = None) -> dict:
	data = {
		'n_states': mdp.n_states,
		'n_actions': mdp.n_actions,
		'gamma': mdp.discount,
		'rho': mdp.initial_dist.tolist(),
		'reward': mdp.reward.tolist(),
		'transition': mdp.transition.tolist(),
	}
	if hard_logits is not None:
		data['hard_logits'] = hard_logits.logits.tolist()
	return data


def save_mdp(mdp: TabularMdp, destination: str, hard_logits: PolicyParams = None):
	atomic_write(destination, json.dumps(mdp_to_dict(mdp, hard_logits), indent=2) + '\n')


MDP_FILE_KEYS = {'n_states', 'n_actions', 'gamma', 'rho', 'reward', 'transition', 'hard_logits'}


def mdp_from_dict(data: dict) -> tuple:
	"""Returns (mdp, hard logits or None). Shapes are checked, probabilities are not."""
	if not isinstance(data, dict):
		raise InvalidInputError('MDP file must hold a single object')

	unknown = sorted(set(data) - MDP_FILE_KEYS)
	if unknown:
		raise InvalidInputError(f'Unknown MDP file fields {unknown}')

	missing = sorted({'n_states', 'n_actions', 'gamma', 'rho', 'reward', 'transition'} - set(data))
	if missing:
		raise InvalidInputError(f'MDP file is missing fields {missing}')

	n_states, n_actions = int(data['n_states']), int(data['n_actions'])

	try:
		reward = np.array(data['reward'], dtype=float)
		transition = np.array(data['transition'], dtype=float)
		rho = np.array(data['rho'], dtype=float)
		gamma = float(data['gamma'])
	except (TypeError, ValueError) as ex:
		raise InvalidInputError(f'MDP file holds non-numeric or ragged tables: {ex}')

	if reward.shape != (n_states, n_actions):
		raise InvalidInputError(f'reward must be {n_states} rows x {n_actions} columns, got shape {reward.shape}')
	if transition.shape != (n_states, n_actions, n_states):
		raise InvalidInputError(f'transition must be {n_states} blocks of {n_actions} rows x {n_states} columns, got shape {transition.shape}')

	mdp = TabularMdp(reward, transition, gamma, rho)
	hard = PolicyParams(data['hard_logits']) if data.get('hard_logits') is not None else None

	return mdp, hard


def load_mdp(file_path: str, check: bool = True) -> tuple:
	"""
	Reads an MDP definition file. With check on, probability violations
	raise InvalidInputError carrying the validation report.
	"""
	try:
		with open(file_path, 'r', encoding='utf-8-sig') as f:
			data = json.load(f)
	except json.JSONDecodeError as ex:
		raise InvalidInputError(f'MDP file [{file_path}] is not valid JSON: {ex}')

	mdp, hard = mdp_from_dict(data)

	if check:
		report = validate(mdp)
		if not report:
			raise InvalidInputError(f'MDP file [{file_path}] is invalid:\n{report}')

	return mdp, hard


def resolve_environment(ref: str, gamma: float = None, init: str = None) -> Environment:
	"""Built-in name or path to an MDP definition file."""
	if ref in BUILTIN_ENVIRONMENTS:
		env = builtin_environment(ref, gamma)
	elif path.isfile(ref):
		mdp, hard = load_mdp(ref)
		if gamma is not None:
			mdp = TabularMdp(mdp.reward, mdp.transition, gamma, mdp.initial_dist)
			report = validate(mdp)
			if not report:
				raise InvalidInputError(f'Discount override makes [{ref}] invalid:\n{report}')
		inits = {'uniform': PolicyParams.zeros(*mdp.shape)}
		if hard is not None:
			if hard.shape != mdp.shape:
				raise InvalidInputError(f'hard_logits shape {hard.shape} does not match MDP shape {mdp.shape}')
			inits['hard'] = hard
		env = Environment(ref, mdp, inits, 'uniform')
	else:
		raise InvalidInputError(f'Environment [{ref}] is neither a built-in ({", ".join(BUILTIN_ENVIRONMENTS)}) nor an existing MDP file')

	if init is not None:
		env.initial_params(init)
		env = Environment(env.name, env.mdp, env.inits, init)

	return env
