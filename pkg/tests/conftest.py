import numpy as np
import pytest

from dialoforge.agent import AgentHyperParams
from dialoforge.dialogue import train_dm
from dialoforge.ontology import bundled_ontology, generate_kb

# Reported optimal hyperparameters used by the DM regression suite.
DQN_HYPER = dict(learning_rate=1.365e-3, batch_size=256, hidden_size=60,
                 initial_epsilon=0.10577)
DDQN_HYPER = dict(learning_rate=5.1e-4, batch_size=64, hidden_size=100,
                  initial_epsilon=0.15678)

REGRESSION_SEEDS = (1, 2, 3)
REGRESSION_EPISODES = 2000


@pytest.fixture(scope="session")
def ontology():
    return bundled_ontology()


@pytest.fixture(scope="session")
def kb(ontology):
    return generate_kb(ontology, 7, 50)


@pytest.fixture
def rng():
    return np.random.default_rng(0)


@pytest.fixture(scope="session")
def dm_regression(ontology, kb):
    """Train DQN and DDQN at the reported optimal hyperparameters over three
    seeds; shared by the acceptance regression, curve, and chat suites."""
    results = {}
    for variant, params in (("dqn", DQN_HYPER), ("ddqn", DDQN_HYPER)):
        hyper = AgentHyperParams(**params)
        runs = []
        for seed in REGRESSION_SEEDS:
            report, agent = train_dm(
                variant, hyper, episodes=REGRESSION_EPISODES, seed=seed,
                measure_every=1000, ontology=ontology, kb=kb,
                interim_eval_episodes=100, final_eval_episodes=500,
            )
            runs.append({"report": report, "agent": agent})
        results[variant] = runs
    return results
