"""Shared fixtures.

Trained models are expensive, so every test that needs one goes through the
session-wide ``trained`` cache; the acceptance tests and the slower unit tests
then reuse the same models instead of retraining them.
"""

import numpy as np
import pytest

from i2sb.eval.experiments import Budget, train_for
from i2sb.tasks import make_task


class ModelCache:
    def __init__(self, budget: Budget):
        self.budget = budget
        self._models = {}
        self._tasks = {}

    def task(self, name: str, **params):
        key = (name, tuple(sorted(params.items())))
        if key not in self._tasks:
            self._tasks[key] = make_task(name, params or None)
        return self._tasks[key]

    def model(self, task, mode: str, seed: int, proposal_mix: float = 0.0, budget: Budget | None = None):
        budget = budget or self.budget
        return self.train(task, mode, seed, budget, proposal_mix)

    def train(self, task, mode: str, seed: int, budget: Budget, proposal_mix: float = 0.0):
        """Drop-in for ``train_for`` that memoizes on the full training recipe."""
        key = (task.name, repr(sorted(task.params.items())), mode, seed, proposal_mix, repr(budget))
        if key not in self._models:
            self._models[key] = train_for(task, mode, seed, budget, proposal_mix)
        return self._models[key]


@pytest.fixture(scope="session")
def trained():
    return ModelCache(Budget())


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
