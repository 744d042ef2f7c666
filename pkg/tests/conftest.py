import math

import pytest

from mixsearch.dp import SolverSettings, solve
from mixsearch.model import ModelParams, toy_pair
from mixsearch.policy import MixedPolicy

# log-ratio grid on which every toy-model trajectory of length <= 3 lands on nodes
TOY_SETTINGS = SolverSettings(grid_m=4, loglr_bound=3 * math.log(4.0), loglr_points=7)


@pytest.fixture(scope="session")
def default_params():
    return ModelParams(pi=0.05, c=0.01)


@pytest.fixture(scope="session")
def coarse_solution(default_params):
    """Default model on a coarse grid: (params, settings, mixed, ref, scan)."""
    settings = SolverSettings(grid_m=40)
    mixed, ref, scan = solve(default_params, settings)
    return default_params, settings, mixed, ref, scan


@pytest.fixture(scope="session")
def coarse_policy(coarse_solution):
    params, _, mixed, ref, scan = coarse_solution
    return MixedPolicy.build(params, mixed, ref, scan)


@pytest.fixture
def toy_params():
    return ModelParams(pi=0.3, c=0.05, pair=toy_pair())
