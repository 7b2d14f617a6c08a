"""Empirical evaluation: sampling, architecture search, pruning, demo setups.

This module closes the loop on synthesis: sample the input box to measure
the worst observed squared error of a (full, reduced) pair, search over
reduced architectures until a certified or empirical target is met, and
reproduce the two packaged demonstration experiments with CSV output.
"""

from __future__ import annotations

import csv
import time
from dataclasses import dataclass, field

import numpy as np

from .networks import (
    PICARD_TOL,
    Box,
    LayerwiseNetwork,
    ReducedNetwork,
    activation,
    block_offsets,
)
from .sdp import SolverSettings
from .synthesis import (
    SynthesisInfeasibleError,
    SynthesisOptions,
    synthesize,
)

__all__ = [
    "grid",
    "uniform",
    "default_sampler",
    "empirical_worst_error",
    "SearchIteration",
    "SearchTrace",
    "SearchSchedule",
    "SearchFailedError",
    "architecture_search",
    "prune_magnitude",
    "weight_entry_count",
    "make_example1_network",
    "make_example2_network",
    "EXAMPLE1_SEED",
    "emit_curves",
    "run_example1",
    "run_example2",
]

EXAMPLE1_SEED = 5


# --- samplers ---------------------------------------------------------------

def grid(n: int):
    """Sampler factory: a regular grid of ~n points inside the box (exactly
    n for one-dimensional boxes, the nearest per-axis power otherwise)."""
    if n < 1:
        raise ValueError("need at least one sample")

    def sample(box: Box) -> np.ndarray:
        d = box.n_x
        if d == 1:
            pts = np.linspace(box.lower[0], box.upper[0], n) if n > 1 else box.midpoint.reshape(1, 1)
            return pts.reshape(-1, 1)
        per_axis = max(2, int(round(n ** (1.0 / d))))
        axes = [np.linspace(box.lower[i], box.upper[i], per_axis) for i in range(d)]
        mesh = np.meshgrid(*axes, indexing="ij")
        return np.stack([m.ravel() for m in mesh], axis=1)

    sample.kind = ("grid", n)
    return sample


def uniform(n: int, seed: int):
    """Sampler factory: n uniform points with a fixed seed (deterministic)."""
    if n < 1:
        raise ValueError("need at least one sample")

    def sample(box: Box) -> np.ndarray:
        rng = np.random.default_rng(seed)
        return rng.uniform(box.lower, box.upper, size=(n, box.n_x))

    sample.kind = ("uniform", n, seed)
    return sample


def default_sampler(n_x: int):
    """Grid of 1e4 points for scalar inputs, 1e5 seeded uniform otherwise."""
    return grid(10_000) if n_x == 1 else uniform(100_000, seed=0)


# --- batched forward passes (internal; the public API is single-point) ------

def _forward_batch(net: LayerwiseNetwork, X: np.ndarray) -> np.ndarray:
    phi = activation(net.activation).fn
    A = X.T
    for W, b in zip(net.weights[:-1], net.biases[:-1]):
        A = phi(W @ A + b[:, None])
    return (net.weights[-1] @ A + net.biases[-1][:, None]).T


def _reduced_batch(red: ReducedNetwork, X: np.ndarray):
    phi = activation(red.activation).fn
    drive = red.Psi0 @ X.T + red.beta[:, None]
    m = red.n_hidden
    Z = np.zeros((m, X.shape[0]))
    if red.structure == "strict-feedforward":
        offs = block_offsets(red.partition)
        for k in range(len(red.partition)):
            rows = slice(offs[k], offs[k + 1])
            Z[rows] = phi(red.Psi[rows, :] @ Z + drive[rows])
        converged = np.ones(X.shape[0], dtype=bool)
    else:
        cap = 10 * len(red.partition) * max(m, 1)
        converged = np.zeros(X.shape[0], dtype=bool)
        for _ in range(cap):
            Z_next = phi(red.Psi @ Z + drive)
            step = np.max(np.abs(Z_next - Z), axis=0) if m else np.zeros(X.shape[0])
            Z = Z_next
            converged |= step <= PICARD_TOL
            if converged.all():
                break
    out = (red.Psi_f @ Z + red.beta_out[:, None]).T
    return out, converged


def empirical_worst_error(full: LayerwiseNetwork, reduced: ReducedNetwork, box: Box,
                          sampler=None) -> tuple:
    """Largest sampled squared output error and the input attaining it.

    Returns (q, x_star) with q = max over samples of ||f(x) - g(x)||_2^2.
    Deterministic for a given sampler (ties resolve to the first sample).
    """
    sampler = sampler or default_sampler(full.n_x)
    X = sampler(box)
    if X.size == 0:
        raise ValueError("sampler produced no points")
    F = _forward_batch(full, X)
    G, _ = _reduced_batch(reduced, X)
    errs = np.sum((F - G) ** 2, axis=1)
    best = int(np.argmax(errs))
    return float(errs[best]), X[best].copy()


# --- architecture search ------------------------------------------------------

@dataclass
class SearchIteration:
    partition: tuple
    certified_bound: float | None  # sup over the box of the certified budget
    empirical_worst: float | None
    status: str
    wall_time: float


@dataclass
class SearchTrace:
    iterations: list = field(default_factory=list)

    def append(self, item: SearchIteration) -> None:
        if (item.certified_bound is not None and item.empirical_worst is not None
                and item.certified_bound < item.empirical_worst - 1e-6):
            raise ValueError("certified bound fell below the sampled worst error")
        self.iterations.append(item)

    def __len__(self) -> int:
        return len(self.iterations)


@dataclass
class SearchSchedule:
    """Architecture update policy for the search loop.

    Starts from ``initial`` and grows every layer by one neuron per
    iteration; once every layer reaches ``layer_ceiling`` a fresh one-neuron
    layer is appended instead (growing the depth).
    """

    initial: tuple = (1,)
    layer_ceiling: int = 16

    def first(self) -> tuple:
        return tuple(int(p) for p in self.initial)

    def next(self, partition) -> tuple:
        if all(p >= self.layer_ceiling for p in partition):
            return tuple(partition) + (1,)
        return tuple(p + 1 for p in partition)


class SearchFailedError(RuntimeError):
    """No searched architecture admitted a certificate; carries the trace."""

    def __init__(self, message: str, trace: SearchTrace):
        super().__init__(message)
        self.trace = trace


def architecture_search(full: LayerwiseNetwork, box: Box, eps1: float, eps2: float,
                        schedule: SearchSchedule | None = None, max_iters: int = 10,
                        opts: SynthesisOptions | None = None, sampler=None,
                        stop_mode: str = "or", synthesis_fn=synthesize) -> tuple:
    """Grow the reduced architecture until a bound or error target is met.

    Stops at the first iteration where the certified bound is <= eps1
    and/or the sampled worst error is <= eps2 (``stop_mode`` picks the
    combination, default 'or'), or after ``max_iters`` iterations, in which
    case the feasible iterate with the smallest certified bound is
    returned.  Infeasible iterations stay in the trace and the search moves
    on; if nothing is feasible a SearchFailedError carries the trace out.
    """
    if eps1 <= 0.0 or eps2 <= 0.0:
        raise ValueError("stopping tolerances must be positive")
    if stop_mode not in ("or", "and"):
        raise ValueError("stop_mode must be 'or' or 'and'")
    schedule = schedule or SearchSchedule()
    trace = SearchTrace()
    partition = schedule.first()
    best = None
    best_bound = np.inf
    for _ in range(max_iters):
        start = time.perf_counter()
        try:
            result = synthesis_fn(full, partition, box, opts)
        except SynthesisInfeasibleError as exc:
            trace.append(SearchIteration(partition, None, None,
                                         exc.solution.status, time.perf_counter() - start))
            partition = schedule.next(partition)
            continue
        p = result.bound_sup
        q, _ = empirical_worst_error(full, result.reduced, box, sampler)
        trace.append(SearchIteration(partition, p, q, result.solver.status,
                                     time.perf_counter() - start))
        if p < best_bound:
            best, best_bound = result, p
        hit_p, hit_q = p <= eps1, q <= eps2
        if (hit_p or hit_q) if stop_mode == "or" else (hit_p and hit_q):
            return result, trace
        partition = schedule.next(partition)
    if best is None:
        raise SearchFailedError("no searched architecture admitted a certificate", trace)
    return best, trace


# --- pruning baseline --------------------------------------------------------

def weight_entry_count(net: LayerwiseNetwork) -> int:
    """Number of weight-matrix entries (biases excluded)."""
    return sum(W.size for W in net.weights)


def prune_magnitude(full: LayerwiseNetwork, count: int) -> LayerwiseNetwork:
    """Zero the ``count`` smallest-magnitude weight-matrix entries.

    Entries are ranked globally by |value| with ties broken by layer index
    then row-major position, so the zero set grows monotonically with
    ``count``.  Biases are untouched.
    """
    total = weight_entry_count(full)
    if not 0 <= count <= total:
        raise ValueError(f"count must be in [0, {total}]")
    order = []
    for layer, W in enumerate(full.weights):
        flat = np.abs(W).ravel()
        for pos in range(flat.size):
            order.append((flat[pos], layer, pos))
    order.sort(key=lambda t: (t[0], t[1], t[2]))
    new_weights = [W.copy() for W in full.weights]
    for _, layer, pos in order[:count]:
        new_weights[layer].ravel()[pos] = 0.0
    return LayerwiseNetwork(tuple(new_weights), full.biases, full.activation)


# --- packaged experiments ------------------------------------------------------

def make_example1_network(seed: int = EXAMPLE1_SEED, width: int = 10) -> LayerwiseNetwork:
    """Scalar-in scalar-out single-hidden-layer relu net with standard
    normal weights and biases, drawn from a fixed seed."""
    rng = np.random.default_rng(seed)
    W0 = rng.standard_normal((width, 1))
    b0 = rng.standard_normal(width)
    W1 = rng.standard_normal((1, width))
    b1 = rng.standard_normal(1)
    return LayerwiseNetwork((W0, W1), (b0, b1))


def make_example2_network() -> LayerwiseNetwork:
    """Deterministic 4x4 relu network built from trigonometric weights.

    Layer construction uses the vector v = (1, ..., n+1)/n for layer width
    n = 4, which has one entry too many for the stated shapes; this
    constructor resolves the mismatch by truncating v to its first n
    entries.  Hidden weights are scaled outer products cos(2 pi v)
    sin(2 pi v)^T, the input weight is cos(2 pi v), the output weight
    sin(2 pi v)^T, with matching scaled sine biases and zero first/last
    biases.  The weight-matrix entry count is 56.
    """
    n = 4
    depth = 4
    v = (np.arange(1, n + 2) / n)[:n]
    c = np.cos(2 * np.pi * v)
    s = np.sin(2 * np.pi * v)
    weights = [c.reshape(n, 1)]
    biases = [np.zeros(n)]
    for k in range(1, depth):
        weights.append(np.outer(c, s) / (k + 1))
        biases.append(s / (k + 1))
    weights.append(s.reshape(1, n))
    biases.append(np.zeros(1))
    return LayerwiseNetwork(tuple(weights), tuple(biases))


def _fmt(value: float) -> str:
    return format(float(value), ".17g")


def emit_curves(source, path, box: Box | None = None, samples: int = 1000) -> None:
    """Write curve data as CSV.

    A SearchTrace becomes rows (m1, bound, empirical) over its iterations;
    a (full, reduced) pair becomes a function sweep (x, f, g, abs_err) over
    a regular grid of ``samples`` points (scalar-input networks only).
    Output is deterministic for identical inputs.
    """
    if isinstance(source, SearchTrace):
        with open(path, "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh)
            writer.writerow(["m1", "bound", "empirical"])
            for it in source.iterations:
                writer.writerow([sum(it.partition),
                                 "" if it.certified_bound is None else _fmt(it.certified_bound),
                                 "" if it.empirical_worst is None else _fmt(it.empirical_worst)])
        return
    full, reduced = source
    if box is None:
        raise ValueError("a box is required for function sweeps")
    if full.n_x != 1:
        raise ValueError("function sweeps are only defined for scalar inputs")
    X = grid(samples)(box)
    F = _forward_batch(full, X)
    G, _ = _reduced_batch(reduced, X)
    err = np.linalg.norm(F - G, axis=1)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["x", "f", "g", "abs_err"])
        for i in range(X.shape[0]):
            writer.writerow([_fmt(X[i, 0]), _fmt(F[i, 0]), _fmt(G[i, 0]), _fmt(err[i])])


def run_example1(out_dir, seed: int = EXAMPLE1_SEED, samples: int = 10_000,
                 solver: SolverSettings | None = None) -> dict:
    """First packaged experiment: bound and error versus reduced width.

    Synthesizes width-m reduced networks for m = 1..10 against the fixed
    random single-hidden-layer net, minimizing the certified sup bound
    directly (weights sup ||x||^2 and 1).  Writes the bound/error curve and
    one function sweep per width; returns a summary dict.
    """
    import os

    os.makedirs(out_dir, exist_ok=True)
    net = make_example1_network(seed)
    box = Box(np.array([-10.0]), np.array([10.0]))
    solver = solver or SolverSettings(backend="scs", tol=1e-9)
    sampler = grid(samples)
    trace = SearchTrace()
    results = []
    for m in range(1, 11):
        opts = SynthesisOptions(w1=box.sup_norm_sq, w2=1.0,
                                structure="strict-feedforward", solver=solver)
        start = time.perf_counter()
        result = synthesize(net, (m,), box, opts)
        q, _ = empirical_worst_error(net, result.reduced, box, sampler)
        trace.append(SearchIteration((m,), result.bound_sup, q,
                                     result.solver.status, time.perf_counter() - start))
        results.append(result)
        emit_curves((net, result.reduced), os.path.join(out_dir, f"example1_fit_m{m}.csv"),
                    box=box, samples=samples)
    emit_curves(trace, os.path.join(out_dir, "example1_curve.csv"))
    return {
        "bounds": [it.certified_bound for it in trace.iterations],
        "empirical": [it.empirical_worst for it in trace.iterations],
        "statuses": [it.status for it in trace.iterations],
        "trace": trace,
        "results": results,
    }


def run_example2(out_dir, box_lower: float = 0.0, box_upper: float = 1.0,
                 samples: int = 1000, prune_count: int = 32,
                 solver: SolverSettings | None = None) -> dict:
    """Second packaged experiment: reduction versus magnitude pruning.

    Synthesizes a 3x3x3 strictly feed-forward reduced network for the
    deterministic trigonometric net (once with full cross multipliers, once
    in the cheaper diagonal-multiplier mode), prunes the original down by
    its 32 smallest weights, and writes one CSV comparing all outputs over
    the input interval.  Feed-forward structure keeps the synthesized
    networks exactly evaluable; general implicit couplings from this
    instance are far from contractive and defeat fixed-point iteration.
    """
    import os

    os.makedirs(out_dir, exist_ok=True)
    net = make_example2_network()
    box = Box(np.array([float(box_lower)]), np.array([float(box_upper)]))
    solver = solver or SolverSettings()
    partition = (3, 3, 3)
    results = {}
    for label, diag in (("reduced", False), ("reduced_diag", True)):
        opts = SynthesisOptions(w1=box.sup_norm_sq, w2=1.0, diagonal_multipliers=diag,
                                structure="strict-feedforward", solver=solver)
        results[label] = synthesize(net, partition, box, opts)
    pruned = prune_magnitude(net, prune_count)

    X = grid(samples)(box)
    F = _forward_batch(net, X)
    curves = {
        "f": F[:, 0],
        "g_reduced": _reduced_batch(results["reduced"].reduced, X)[0][:, 0],
        "g_reduced_diag": _reduced_batch(results["reduced_diag"].reduced, X)[0][:, 0],
        "g_pruned": _forward_batch(pruned, X)[:, 0],
    }
    path = os.path.join(out_dir, "example2_outputs.csv")
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["x"] + list(curves))
        for i in range(X.shape[0]):
            writer.writerow([_fmt(X[i, 0])] + [_fmt(curves[k][i]) for k in curves])
    pruned_vals = curves["g_pruned"]
    return {
        "results": results,
        "pruned": pruned,
        "csv": path,
        "pruned_mean": float(np.mean(pruned_vals)),
        "pruned_std": float(np.std(pruned_vals)),
        "bounds": {label: results[label].bound_sup for label in results},
    }
