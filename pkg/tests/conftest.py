"""Shared test helpers, including the independent forward-pass oracle."""

import numpy as np
import pytest

from netred.networks import LayerwiseNetwork, ReducedNetwork


def forward_oracle(weights, biases, x, activation="relu"):
    """Straight-line forward pass, independent of the package evaluators."""
    act = {
        "relu": lambda s: np.maximum(s, 0.0),
        "tanh": np.tanh,
        "shifted-sigmoid": lambda s: 1.0 / (1.0 + np.exp(-s)) - 0.5,
    }[activation]
    a = np.asarray(x, dtype=float)
    hidden = []
    for W, b in zip(weights[:-1], biases[:-1]):
        a = act(np.asarray(W) @ a + np.asarray(b))
        hidden.append(a)
    return np.concatenate(hidden), np.asarray(weights[-1]) @ a + np.asarray(biases[-1])


def random_network(rng, n_x=None, sizes=None, n_f=None, activation="relu"):
    n_x = n_x or int(rng.integers(1, 4))
    n_f = n_f or int(rng.integers(1, 3))
    if sizes is None:
        sizes = [int(s) for s in rng.integers(1, 6, size=int(rng.integers(1, 4)))]
    dims = [n_x] + list(sizes) + [n_f]
    weights = tuple(rng.standard_normal((dims[i + 1], dims[i])) for i in range(len(dims) - 1))
    biases = tuple(rng.standard_normal(dims[i + 1]) for i in range(len(dims) - 1))
    return LayerwiseNetwork(weights, biases, activation=activation)


def reduced_with_fixed_point(rng, n_x, partition, n_f, x, activation="relu", psi_scale=1.0):
    """Random reduced network plus an exact hidden fixed point at input x.

    The bias is back-solved from randomly drawn pre-activations, so the
    returned hidden vector satisfies the implicit equation exactly without
    any iteration.
    """
    m = sum(partition)
    act = {
        "relu": lambda s: np.maximum(s, 0.0),
        "tanh": np.tanh,
        "shifted-sigmoid": lambda s: 1.0 / (1.0 + np.exp(-s)) - 0.5,
    }[activation]
    Psi = psi_scale * rng.standard_normal((m, m))
    Psi0 = rng.standard_normal((m, n_x))
    pre = 2.0 * rng.standard_normal(m)
    z = act(pre)
    beta = pre - Psi @ z - Psi0 @ np.asarray(x, dtype=float)
    red = ReducedNetwork(Psi, Psi0, beta, rng.standard_normal((n_f, m)),
                         rng.standard_normal(n_f), tuple(partition), activation=activation)
    return red, z, pre


@pytest.fixture
def rng():
    return np.random.default_rng(20240817)
