import sys

from os import path

import numpy as np
import pytest

sys.path.insert(0, path.join(path.dirname(path.dirname(path.abspath(__file__))), 'scripts'))

from mdp_core import TabularMdp, bandit_as_mdp
from environments import five_state_mdp as build_five_state_mdp, BANDIT_REWARDS


def make_random_mdp(rng, n_states, n_actions, gamma):
	"""Random MDP with Dirichlet transition rows and rewards in [0, 1]."""
	reward = rng.random((n_states, n_actions))
	transition = rng.dirichlet(np.ones(n_states), size=(n_states, n_actions))
	rho = rng.dirichlet(np.ones(n_states))
	return TabularMdp(reward, transition, gamma, rho)


@pytest.fixture
def bandit():
	return bandit_as_mdp(BANDIT_REWARDS)


@pytest.fixture
def five_state_mdp():
	return build_five_state_mdp(0.9)


@pytest.fixture
def rng():
	return np.random.default_rng(20231017)


@pytest.fixture
def random_mdp(rng):
	def factory(n_states=3, n_actions=2, gamma=0.9):
		return make_random_mdp(rng, n_states, n_actions, gamma)
	return factory
