from __future__ import annotations

import itertools

import numpy as np
import pytest

from segdyn import IntegratorConfig, LinearDiagonal, Lorenz, QuadraticGeneric
from segdyn.transitions import TransitionTensor

# one line per acceptance criterion, printed after the run
ACCEPTANCE_RESULTS: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_RESULTS:
        terminalreporter.write_sep("=", "acceptance criteria")
        for line in ACCEPTANCE_RESULTS:
            terminalreporter.write_line(line)


@pytest.fixture(scope="session")
def cfg():
    return IntegratorConfig(step=1e-3)


@pytest.fixture(scope="session")
def linear1():
    return LinearDiagonal(rates=[1.0])


@pytest.fixture(scope="session")
def lorenz():
    return Lorenz()


@pytest.fixture(scope="session")
def expanding1d():
    return QuadraticGeneric(linear=[[1.0]], quadratic=np.zeros((1, 1, 1)), forcing=[0.0])


@pytest.fixture(scope="session")
def zero_field_1d():
    return QuadraticGeneric(linear=[[0.0]], quadratic=np.zeros((1, 1, 1)), forcing=[0.0])


@pytest.fixture(scope="session")
def rotation2d():
    return QuadraticGeneric(linear=[[0.0, -1.0], [1.0, 0.0]],
                            quadratic=np.zeros((2, 2, 2)), forcing=[0.0, 0.0])


def make_markov_tensors(gamma: np.ndarray, depth: int) -> list[TransitionTensor]:
    """Tensors of orders 2..depth holding exactly the Gamma-admissible paths."""
    gamma = np.asarray(gamma, dtype=bool)
    n = gamma.shape[0]
    pairs = {(i + 1, j + 1) for i, j in zip(*np.nonzero(gamma))}
    tensors = [TransitionTensor(order=2, admissible_tuples=frozenset(pairs), n_cells=n)]
    current = pairs
    for order in range(3, depth + 1):
        current = {t + (c,) for t in current for (b, c) in pairs if b == t[-1]}
        tensors.append(TransitionTensor(order=order, admissible_tuples=frozenset(current),
                                        n_cells=n))
    return tensors


def brute_force_words(gamma: np.ndarray, n0: int, length: int) -> set:
    """Filter all N^(m-1) continuations by the pairwise admissibility rule."""
    gamma = np.asarray(gamma, dtype=bool)
    n = gamma.shape[0]
    if length == 1:
        return {(n0,)}
    words = set()
    for tail in itertools.product(range(1, n + 1), repeat=length - 1):
        word = (n0,) + tail
        if all(gamma[a - 1, b - 1] for a, b in zip(word, word[1:])):
            words.add(word)
    return words
