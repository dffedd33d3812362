import numpy as np
import pytest

from ergogames import (GameSpec, MaxOption, MinAction, builtin_operator,
                       markov_chain_operator)


@pytest.fixture(scope="session")
def example1():
    return builtin_operator("example1")


@pytest.fixture(scope="session")
def example2():
    return builtin_operator("example2")


@pytest.fixture(scope="session")
def identity2():
    return builtin_operator("identity", n=2)


@pytest.fixture(scope="session")
def identity3():
    return builtin_operator("identity", n=3)


def make_absorbing_chain():
    """One-player chain with two absorbing states: rows e1, (1/2, 0, 1/2), e3."""
    P = np.array([[1.0, 0.0, 0.0], [0.5, 0.0, 0.5], [0.0, 0.0, 1.0]])
    return markov_chain_operator(P, np.zeros(3))


@pytest.fixture(scope="session")
def absorbing_chain():
    return make_absorbing_chain()


@pytest.fixture(scope="session")
def single_state_chain():
    return markov_chain_operator(np.array([[1.0]]), np.array([3.0]))


def random_small_game(rng) -> GameSpec:
    """Random game with n <= 4 states and <= 3 actions/options."""
    n = int(rng.integers(1, 5))
    states = []
    for _ in range(n):
        actions = []
        for _ in range(int(rng.integers(1, 4))):
            options = []
            for _ in range(int(rng.integers(1, 4))):
                raw = rng.uniform(0.0, 1.0, n) + 1e-3
                row = raw / raw.sum()
                row = row / row.sum()  # enforce the 1e-12 row-sum contract
                options.append(MaxOption(float(rng.uniform(-5, 5)), row))
            actions.append(MinAction(tuple(options)))
        states.append(tuple(actions))
    return GameSpec(n, tuple(states))


def two_cycle_game(pay_a: float = 1.0, pay_b: float = 3.0) -> GameSpec:
    """Deterministic 2-cycle: state 1 -> 2 paying pay_a, state 2 -> 1 paying pay_b."""
    e1 = np.array([1.0, 0.0])
    e2 = np.array([0.0, 1.0])
    return GameSpec(2, (
        (MinAction((MaxOption(pay_a, e2),)),),
        (MinAction((MaxOption(pay_b, e1),)),),
    ))
