"""netred: reduced-order neural network synthesis with certified error bounds.

Given a trained feed-forward relu network f and an axis-aligned input box,
this package solves a semidefinite program whose solution yields a smaller
network g (fewer neurons) together with constants gamma_x, gamma >= 0 such
that

    || f(x) - g(x) ||_2^2  <=  gamma_x ||x||_2^2 + gamma

for every x in the box.  The same machinery certifies bounds for fixed
network pairs, drives an architecture search, and backs a magnitude-pruning
baseline for comparison.
"""

from .networks import (
    ACTIVATIONS,
    Box,
    ImplicitForm,
    LayerwiseNetwork,
    ReducedNetwork,
    build_mu,
    eval_implicit,
    eval_layerwise,
    eval_reduced,
    to_implicit,
)
from .sdp import SolverSettings, Solution, check_nsd, solve
from .synthesis import (
    SynthesisInfeasibleError,
    SynthesisOptions,
    SynthesisResult,
    synthesize,
    verify_pair_bound,
)
from .lab import (
    SearchSchedule,
    SearchTrace,
    architecture_search,
    empirical_worst_error,
    make_example1_network,
    make_example2_network,
    prune_magnitude,
)

__version__ = "0.1.0"

__all__ = [
    "ACTIVATIONS",
    "Box",
    "ImplicitForm",
    "LayerwiseNetwork",
    "ReducedNetwork",
    "SearchSchedule",
    "SearchTrace",
    "Solution",
    "SolverSettings",
    "SynthesisInfeasibleError",
    "SynthesisOptions",
    "SynthesisResult",
    "architecture_search",
    "build_mu",
    "check_nsd",
    "empirical_worst_error",
    "eval_implicit",
    "eval_layerwise",
    "eval_reduced",
    "make_example1_network",
    "make_example2_network",
    "prune_magnitude",
    "solve",
    "synthesize",
    "to_implicit",
    "verify_pair_bound",
]
