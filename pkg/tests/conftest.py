from dataclasses import dataclass

import pytest

from lagnet import oracle
from lagnet.fixtures import get_fixture
from lagnet.problem import LiftedProblem, StationaryPoint


@dataclass(frozen=True)
class Solved:
    name: str
    problem: LiftedProblem
    solution: oracle.OracleSolution
    point: StationaryPoint
    oracle_init: object


def _solve(name: str) -> Solved:
    fx = get_fixture(name)
    sol = oracle.solve_centralized(fx.problem, x_init=fx.oracle_init, seed=0)
    point = oracle.lifted_multipliers(fx.problem, sol)
    return Solved(name, fx.problem, sol, point, fx.oracle_init)


@pytest.fixture(scope="session")
def path2() -> Solved:
    return _solve("tp-path2")


@pytest.fixture(scope="session")
def affine2() -> Solved:
    return _solve("tp-affine2")


@pytest.fixture(scope="session")
def nonconv3() -> Solved:
    return _solve("tp-nonconv3")


@pytest.fixture(scope="session")
def all_solved(path2, affine2, nonconv3):
    return (path2, affine2, nonconv3)
