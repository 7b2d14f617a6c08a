"""Feed-forward networks in layerwise and implicit (stacked) form.

The full-order network is a plain feed-forward chain

    x^{k+1} = phi(W^k x^k + b^k),   f(x) = W^l x^l + b^l,

and is equivalently represented in implicit form by stacking all hidden
activations into one vector ``xc`` satisfying

    xc = phi(W xc + W0 x + b),      f(x) = W_f xc + b_out,

where ``W`` is strictly block-lower-shift (only the inter-layer weights sit
on the block subdiagonal).  Reduced-order networks use the same implicit
template with a general square coupling matrix, so they may contain skip or
even implicit (cyclic) connections.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

__all__ = [
    "ActivationKind",
    "ACTIVATIONS",
    "LayerwiseNetwork",
    "ImplicitForm",
    "ReducedNetwork",
    "Box",
    "to_implicit",
    "eval_layerwise",
    "eval_implicit",
    "eval_reduced",
    "build_mu",
    "network_to_dict",
    "network_from_dict",
    "reduced_to_dict",
    "reduced_from_dict",
    "box_to_dict",
    "box_from_dict",
    "load_json",
    "save_json",
]

PICARD_TOL = 1e-10


def _relu(s):
    return np.maximum(s, 0.0)


def _shifted_sigmoid(s):
    return 1.0 / (1.0 + np.exp(-s)) - 0.5


@dataclass(frozen=True)
class ActivationKind:
    """A scalar activation together with the function properties it satisfies.

    ``sector`` is the upper sector gain (phi(s)/s in [0, sector]), ``slope``
    the slope-restriction interval, ``bounds`` the range interval or None if
    unbounded.  The three flags record positivity of phi, positivity of
    phi(s) - s, and the complementarity identity (phi(s) - s) phi(s) = 0.
    """

    tag: str
    fn: callable
    sector: float
    slope: tuple
    bounds: tuple | None
    positive: bool
    positive_complement: bool
    complementarity: bool


ACTIVATIONS = {
    "relu": ActivationKind("relu", _relu, 1.0, (0.0, 1.0), None, True, True, True),
    "tanh": ActivationKind("tanh", np.tanh, 1.0, (0.0, 1.0), (-1.0, 1.0), False, False, False),
    "shifted-sigmoid": ActivationKind(
        "shifted-sigmoid", _shifted_sigmoid, 0.25, (0.0, 0.25), (-0.5, 0.5), False, False, False
    ),
}


def activation(tag: str) -> ActivationKind:
    """Look up an activation by tag, raising ValueError for unknown tags."""
    try:
        return ACTIVATIONS[tag]
    except KeyError:
        raise ValueError(f"unknown activation {tag!r}; expected one of {sorted(ACTIVATIONS)}") from None


def _as_matrix(a, name):
    m = np.asarray(a, dtype=float)
    if m.ndim != 2:
        raise ValueError(f"{name} must be a 2-d array, got shape {m.shape}")
    if not np.all(np.isfinite(m)):
        raise ValueError(f"{name} contains non-finite entries")
    return m


def _as_vector(a, name):
    v = np.asarray(a, dtype=float)
    if v.ndim != 1:
        raise ValueError(f"{name} must be a 1-d array, got shape {v.shape}")
    if not np.all(np.isfinite(v)):
        raise ValueError(f"{name} contains non-finite entries")
    return v


@dataclass(frozen=True)
class LayerwiseNetwork:
    """A feed-forward network given as a chain of (weight, bias) layers.

    ``weights[k], biases[k]`` for k < depth are the hidden layers; the last
    pair is the affine output map.  Consecutive dimensions must chain.

    Parameters
    ----------
    weights : sequence of 2-d arrays
        W^0 .. W^l with W^k of shape (n_{k+1}, n_k); the last entry maps the
        final hidden layer to the output.
    biases : sequence of 1-d arrays
        b^0 .. b^l matching the row counts of ``weights``.
    activation : str
        One of ``ACTIVATIONS``.
    """

    weights: tuple = ()
    biases: tuple = ()
    activation: str = "relu"

    def __post_init__(self):
        weights = tuple(_as_matrix(W, f"weights[{k}]") for k, W in enumerate(self.weights))
        biases = tuple(_as_vector(b, f"biases[{k}]") for k, b in enumerate(self.biases))
        object.__setattr__(self, "weights", weights)
        object.__setattr__(self, "biases", biases)
        activation(self.activation)
        if len(weights) != len(biases):
            raise ValueError("weights and biases must have equal length")
        if len(weights) < 2:
            raise ValueError("need at least one hidden layer plus the output map")
        for k, (W, b) in enumerate(zip(weights, biases)):
            if b.shape[0] != W.shape[0]:
                raise ValueError(f"bias {k} has {b.shape[0]} entries, weight has {W.shape[0]} rows")
            if k > 0 and W.shape[1] != weights[k - 1].shape[0]:
                raise ValueError(
                    f"layer {k} expects {W.shape[1]} inputs but layer {k - 1} outputs {weights[k - 1].shape[0]}"
                )

    @property
    def depth(self) -> int:
        """Number of hidden layers."""
        return len(self.weights) - 1

    @property
    def n_x(self) -> int:
        return self.weights[0].shape[1]

    @property
    def n_f(self) -> int:
        return self.weights[-1].shape[0]

    @property
    def hidden_sizes(self) -> tuple:
        return tuple(W.shape[0] for W in self.weights[:-1])

    @property
    def n_hidden(self) -> int:
        """Total neuron count across hidden layers."""
        return sum(self.hidden_sizes)


@dataclass(frozen=True)
class ImplicitForm:
    """Stacked single-equation form of a layerwise network.

    Zero patterns are structural: ``W`` carries the inter-layer weights on
    its block subdiagonal only, ``W0`` feeds the input into the first block,
    ``W_f`` reads the output from the last block.
    """

    W: np.ndarray
    W0: np.ndarray
    b: np.ndarray
    W_f: np.ndarray
    b_out: np.ndarray
    partition: tuple
    activation: str = "relu"

    def __post_init__(self):
        object.__setattr__(self, "W", _as_matrix(self.W, "W"))
        object.__setattr__(self, "W0", _as_matrix(self.W0, "W0"))
        object.__setattr__(self, "b", _as_vector(self.b, "b"))
        object.__setattr__(self, "W_f", _as_matrix(self.W_f, "W_f"))
        object.__setattr__(self, "b_out", _as_vector(self.b_out, "b_out"))
        object.__setattr__(self, "partition", tuple(int(p) for p in self.partition))
        activation(self.activation)
        n = sum(self.partition)
        if self.W.shape != (n, n):
            raise ValueError(f"W must be {n}x{n}")
        if self.W0.shape[0] != n or self.W_f.shape[1] != n:
            raise ValueError("W0/W_f dimensions inconsistent with partition")
        if self.b.shape[0] != n:
            raise ValueError("b length inconsistent with partition")
        if self.b_out.shape[0] != self.W_f.shape[0]:
            raise ValueError("b_out length inconsistent with W_f")
        self._check_zero_pattern()

    def _check_zero_pattern(self):
        offs = block_offsets(self.partition)
        mask = np.ones_like(self.W, dtype=bool)
        for k in range(1, len(self.partition)):
            mask[offs[k]:offs[k + 1], offs[k - 1]:offs[k]] = False
        if np.any(self.W[mask] != 0.0):
            raise ValueError("W has entries off the block subdiagonal")
        if len(self.partition) > 1 and np.any(self.W0[offs[1]:, :] != 0.0):
            raise ValueError("W0 must feed the first block only")
        if len(self.partition) > 1 and np.any(self.W_f[:, : offs[-2]] != 0.0):
            raise ValueError("W_f must read the last block only")

    @property
    def n_x(self) -> int:
        return self.W0.shape[1]

    @property
    def n_f(self) -> int:
        return self.W_f.shape[0]

    @property
    def n_hidden(self) -> int:
        return sum(self.partition)


STRUCTURES = ("general-implicit", "strict-feedforward")


@dataclass(frozen=True)
class ReducedNetwork:
    """A (possibly implicit) reduced-order network in stacked form.

    The hidden vector solves ``z = phi(Psi z + Psi0 x + beta)`` and the
    output is ``Psi_f z + beta_out``.  With ``structure='strict-feedforward'``
    the coupling matrix must be strictly block-lower-triangular with respect
    to ``partition``, which makes the fixed point computable by one forward
    substitution sweep.
    """

    Psi: np.ndarray
    Psi0: np.ndarray
    beta: np.ndarray
    Psi_f: np.ndarray
    beta_out: np.ndarray
    partition: tuple
    structure: str = "general-implicit"
    activation: str = "relu"

    def __post_init__(self):
        object.__setattr__(self, "Psi", _as_matrix(self.Psi, "Psi"))
        object.__setattr__(self, "Psi0", _as_matrix(self.Psi0, "Psi0"))
        object.__setattr__(self, "beta", _as_vector(self.beta, "beta"))
        object.__setattr__(self, "Psi_f", _as_matrix(self.Psi_f, "Psi_f"))
        object.__setattr__(self, "beta_out", _as_vector(self.beta_out, "beta_out"))
        object.__setattr__(self, "partition", tuple(int(p) for p in self.partition))
        activation(self.activation)
        if self.structure not in STRUCTURES:
            raise ValueError(f"structure must be one of {STRUCTURES}")
        m = sum(self.partition)
        if self.Psi.shape != (m, m):
            raise ValueError(f"Psi must be {m}x{m}")
        if self.Psi0.shape[0] != m or self.beta.shape[0] != m or self.Psi_f.shape[1] != m:
            raise ValueError("Psi0/beta/Psi_f dimensions inconsistent with partition")
        if self.beta_out.shape[0] != self.Psi_f.shape[0]:
            raise ValueError("beta_out length inconsistent with Psi_f")
        if self.structure == "strict-feedforward":
            if np.any(self.Psi[~strict_lower_block_mask(self.partition)] != 0.0):
                raise ValueError("strict-feedforward structure requires strictly block-lower-triangular Psi")

    @property
    def n_x(self) -> int:
        return self.Psi0.shape[1]

    @property
    def n_f(self) -> int:
        return self.Psi_f.shape[0]

    @property
    def n_hidden(self) -> int:
        return sum(self.partition)


@dataclass(frozen=True)
class Box:
    """Axis-aligned input box {x : lower <= x <= upper} (componentwise)."""

    lower: np.ndarray
    upper: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "lower", _as_vector(self.lower, "lower"))
        object.__setattr__(self, "upper", _as_vector(self.upper, "upper"))
        if self.lower.shape != self.upper.shape:
            raise ValueError("lower and upper must have equal length")
        if np.any(self.lower > self.upper):
            raise ValueError("box requires lower <= upper componentwise")

    @property
    def n_x(self) -> int:
        return self.lower.shape[0]

    @property
    def midpoint(self) -> np.ndarray:
        return 0.5 * (self.lower + self.upper)

    @property
    def sup_norm_sq(self) -> float:
        """max over the box of ||x||_2^2 (attained at a vertex)."""
        return float(np.sum(np.maximum(self.lower**2, self.upper**2)))

    def contains(self, x, tol: float = 0.0) -> bool:
        x = np.asarray(x, dtype=float)
        return bool(np.all(x >= self.lower - tol) and np.all(x <= self.upper + tol))


def block_offsets(partition) -> list:
    """Cumulative offsets [0, p_1, p_1+p_2, ...] of a block partition."""
    offs = [0]
    for p in partition:
        offs.append(offs[-1] + int(p))
    return offs


def strict_lower_block_mask(partition) -> np.ndarray:
    """Boolean mask of entries below the block diagonal of a partition."""
    n = sum(partition)
    offs = block_offsets(partition)
    mask = np.zeros((n, n), dtype=bool)
    for k in range(1, len(partition)):
        mask[offs[k]:, : offs[k]] = True
    return mask


def to_implicit(net: LayerwiseNetwork) -> ImplicitForm:
    """Stack a layerwise network into its implicit block form.

    The blocks are placed structurally: inter-layer weights on the block
    subdiagonal of ``W``, the input weight in the first block row of ``W0``,
    the output weight in the last block column of ``W_f``.
    """
    sizes = net.hidden_sizes
    n = net.n_hidden
    offs = block_offsets(sizes)
    W = np.zeros((n, n))
    for k in range(1, net.depth):
        W[offs[k]:offs[k + 1], offs[k - 1]:offs[k]] = net.weights[k]
    W0 = np.zeros((n, net.n_x))
    W0[: sizes[0], :] = net.weights[0]
    b = np.concatenate([net.biases[k] for k in range(net.depth)])
    W_f = np.zeros((net.n_f, n))
    W_f[:, offs[-2]:] = net.weights[-1]
    return ImplicitForm(W, W0, b, W_f, net.biases[-1].copy(), sizes, net.activation)


def eval_layerwise(net: LayerwiseNetwork, x) -> tuple:
    """Forward pass returning (stacked hidden activations, output)."""
    x = _as_vector(np.atleast_1d(np.asarray(x, dtype=float)), "x")
    if x.shape[0] != net.n_x:
        raise ValueError(f"input has {x.shape[0]} entries, network expects {net.n_x}")
    phi = activation(net.activation).fn
    hidden = []
    a = x
    for W, b in zip(net.weights[:-1], net.biases[:-1]):
        a = phi(W @ a + b)
        hidden.append(a)
    output = net.weights[-1] @ a + net.biases[-1]
    return np.concatenate(hidden), output


def eval_implicit(imp: ImplicitForm, x) -> tuple:
    """Evaluate the implicit form by block forward substitution (exact)."""
    x = _as_vector(np.atleast_1d(np.asarray(x, dtype=float)), "x")
    if x.shape[0] != imp.n_x:
        raise ValueError(f"input has {x.shape[0]} entries, network expects {imp.n_x}")
    phi = activation(imp.activation).fn
    offs = block_offsets(imp.partition)
    xc = np.zeros(imp.n_hidden)
    for k in range(len(imp.partition)):
        rows = slice(offs[k], offs[k + 1])
        xc[rows] = phi(imp.W[rows, :] @ xc + imp.W0[rows, :] @ x + imp.b[rows])
    return xc, imp.W_f @ xc + imp.b_out


def eval_reduced(red: ReducedNetwork, x) -> tuple:
    """Evaluate a reduced network, returning (hidden, output, converged).

    Strict-feedforward networks are evaluated exactly by block forward
    substitution.  General implicit networks use Picard iteration from zero
    with tolerance 1e-10 and an iteration cap of 10 * depth * size; failure
    to converge is reported through the flag (the last iterate is still
    returned).
    """
    x = _as_vector(np.atleast_1d(np.asarray(x, dtype=float)), "x")
    if x.shape[0] != red.n_x:
        raise ValueError(f"input has {x.shape[0]} entries, network expects {red.n_x}")
    phi = activation(red.activation).fn
    drive = red.Psi0 @ x + red.beta
    if red.structure == "strict-feedforward":
        offs = block_offsets(red.partition)
        z = np.zeros(red.n_hidden)
        for k in range(len(red.partition)):
            rows = slice(offs[k], offs[k + 1])
            z[rows] = phi(red.Psi[rows, :] @ z + drive[rows])
        converged = True
    else:
        z = np.zeros(red.n_hidden)
        cap = 10 * len(red.partition) * max(red.n_hidden, 1)
        converged = False
        for _ in range(cap):
            z_next = phi(red.Psi @ z + drive)
            step = float(np.max(np.abs(z_next - z))) if z.size else 0.0
            z = z_next
            if step <= PICARD_TOL:
                converged = True
                break
    return z, red.Psi_f @ z + red.beta_out, converged


def build_mu(x, hidden_full, hidden_reduced) -> np.ndarray:
    """Concatenate [x, full hidden, reduced hidden, 1] into one vector."""
    x = np.atleast_1d(np.asarray(x, dtype=float))
    return np.concatenate([x, np.asarray(hidden_full, dtype=float),
                           np.asarray(hidden_reduced, dtype=float), [1.0]])


# --- JSON schemas -----------------------------------------------------------
#
# Layerwise network:  {"activation": "relu",
#                      "layers": [{"W": [[...]], "b": [...]}, ...]}
# with the final entry being the affine output map; matrices row-major.
#
# Reduced network:    {"activation": "relu", "structure": "general-implicit",
#                      "partition": [...], "Psi": [[...]], "Psi0": [[...]],
#                      "beta": [...], "Psi_f": [[...]], "beta_out": [...]}
#
# Box:                {"lower": [...], "upper": [...]}


def network_to_dict(net: LayerwiseNetwork) -> dict:
    return {
        "activation": net.activation,
        "layers": [
            {"W": W.tolist(), "b": b.tolist()} for W, b in zip(net.weights, net.biases)
        ],
    }


def network_from_dict(obj: dict) -> LayerwiseNetwork:
    layers = obj["layers"]
    return LayerwiseNetwork(
        weights=tuple(np.asarray(layer["W"], dtype=float) for layer in layers),
        biases=tuple(np.asarray(layer["b"], dtype=float) for layer in layers),
        activation=obj.get("activation", "relu"),
    )


def reduced_to_dict(red: ReducedNetwork) -> dict:
    return {
        "activation": red.activation,
        "structure": red.structure,
        "partition": list(red.partition),
        "Psi": red.Psi.tolist(),
        "Psi0": red.Psi0.tolist(),
        "beta": red.beta.tolist(),
        "Psi_f": red.Psi_f.tolist(),
        "beta_out": red.beta_out.tolist(),
    }


def reduced_from_dict(obj: dict) -> ReducedNetwork:
    return ReducedNetwork(
        Psi=np.asarray(obj["Psi"], dtype=float),
        Psi0=np.asarray(obj["Psi0"], dtype=float),
        beta=np.asarray(obj["beta"], dtype=float),
        Psi_f=np.asarray(obj["Psi_f"], dtype=float),
        beta_out=np.asarray(obj["beta_out"], dtype=float),
        partition=tuple(obj["partition"]),
        structure=obj.get("structure", "general-implicit"),
        activation=obj.get("activation", "relu"),
    )


def box_to_dict(box: Box) -> dict:
    return {"lower": box.lower.tolist(), "upper": box.upper.tolist()}


def box_from_dict(obj: dict) -> Box:
    return Box(np.asarray(obj["lower"], dtype=float), np.asarray(obj["upper"], dtype=float))


def load_json(path):
    with open(path, "r", encoding="utf-8") as fh:
        return json.load(fh)


def save_json(obj: dict, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(obj, fh, indent=2)
        fh.write("\n")
