"""One-shot synthesis of reduced-order networks and fixed-pair verification.

``synthesize`` builds the certificate SDP for a full-order ReLU network and
a requested reduced architecture, minimizes the weighted error budget
w1 * gamma_x + w2 * gamma subject to the certificate matrix being negative
definite, and recovers the reduced network's weights from the substituted
blocks.  On success the returned bound is sound by construction:

    || f(x) - g(x) ||_2^2  <=  gamma_x ||x||_2^2 + gamma

for every x in the input box.

``verify_pair_bound`` runs the same machinery with the reduced network held
fixed, which certifies a bound for an externally supplied pair.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .expressions import VarSpace
from .networks import (
    Box,
    ImplicitForm,
    LayerwiseNetwork,
    ReducedNetwork,
    reduced_to_dict,
    to_implicit,
)
from .qc import (
    DEFAULT_EPS_T0R,
    MultiplierSet,
    SignalLayout,
    activation_qc_expr,
    error_terms,
    input_qc_expr,
    relu_qc_expr,
)
from .sdp import (
    DEFAULT_EPS_PSD,
    Solution,
    SolverSettings,
    assemble_schur,
    solve,
    to_standard_form,
)

__all__ = [
    "SynthesisOptions",
    "SynthesisResult",
    "SynthesisInfeasibleError",
    "default_input_coupling",
    "default_bias_coupling",
    "synthesize",
    "recover",
    "verify_pair_bound",
]


class SynthesisInfeasibleError(RuntimeError):
    """Raised when the certificate SDP has no solution at the requested
    architecture; carries the failed Solution for inspection."""

    def __init__(self, message: str, solution: Solution):
        super().__init__(message)
        self.solution = solution


def default_input_coupling(n_full: int, n_red: int) -> np.ndarray:
    """Default cross-coupling selector: identity over the first n_red full
    neurons, zero elsewhere (requires n_red <= n_full)."""
    if n_red > n_full:
        raise ValueError("default coupling needs the reduced size <= full size")
    J1 = np.zeros((n_full, n_red))
    J1[:n_red, :] = np.eye(n_red)
    return J1


def default_bias_coupling(n_red: int) -> np.ndarray:
    """Default bias-coupling selector: the all-ones vector."""
    return np.ones(n_red)


@dataclass
class SynthesisOptions:
    """Options for :func:`synthesize`.

    w1, w2 weight the objective w1 * gamma_x + w2 * gamma (not both zero).
    J1 (n_full x n_red, entrywise >= 0) and J2 (n_red, >= 0) fix the two
    reduced-side multipliers that the linearizing substitution pins; None
    selects the identity-over-the-first-block / all-ones defaults.  The
    slope-restriction constraints are a documented extension point and are
    not part of the synthesized certificate; requesting them raises.
    """

    w1: float = 1.0
    w2: float = 1.0
    J1: np.ndarray | None = None
    J2: np.ndarray | None = None
    structure: str = "general-implicit"
    diagonal_multipliers: bool = False
    use_slope_qc: bool = False
    eps_psd: float = DEFAULT_EPS_PSD
    eps_t0r: float = DEFAULT_EPS_T0R
    solver: SolverSettings = field(default_factory=SolverSettings)

    def validate(self):
        if self.w1 < 0.0 or self.w2 < 0.0 or (self.w1 == 0.0 and self.w2 == 0.0):
            raise ValueError("objective weights must be nonnegative and not both zero")
        if self.structure not in ("general-implicit", "strict-feedforward"):
            raise ValueError("unknown reduced-network structure")
        if self.use_slope_qc:
            raise NotImplementedError(
                "slope-restriction multipliers are a documented extension and are "
                "not included in the synthesized certificate"
            )


@dataclass
class SynthesisResult:
    """A recovered reduced network together with its certified bound."""

    reduced: ReducedNetwork
    gamma_x: float
    gamma: float
    multipliers: MultiplierSet
    solver: Solution
    bound_sup: float

    def to_dict(self) -> dict:
        out = reduced_to_dict(self.reduced)
        out.update({
            "gamma_x": self.gamma_x,
            "gamma": self.gamma,
            "bound_sup": self.bound_sup,
            "solver_status": self.solver.status,
        })
        return out


def _resolve_coupling(opts: SynthesisOptions, n_full: int, n_red: int):
    J1 = opts.J1 if opts.J1 is not None else default_input_coupling(n_full, n_red)
    J2 = opts.J2 if opts.J2 is not None else default_bias_coupling(n_red)
    return J1, J2


def synthesize(full: LayerwiseNetwork, reduced_partition, box: Box,
               opts: SynthesisOptions | None = None) -> SynthesisResult:
    """Synthesize a reduced-order network approximating ``full`` over ``box``.

    Parameters
    ----------
    full : LayerwiseNetwork
        The network to approximate; must use the relu activation.
    reduced_partition : sequence of int
        Hidden-layer sizes of the reduced network.
    box : Box
        The input set over which the bound is certified.
    opts : SynthesisOptions, optional

    Raises
    ------
    SynthesisInfeasibleError
        If the SDP is infeasible at this architecture; try a larger
        reduced partition.
    """
    opts = opts or SynthesisOptions()
    opts.validate()
    if full.activation != "relu":
        raise ValueError("synthesis is only derived for relu networks")
    partition = tuple(int(p) for p in reduced_partition)
    if not partition or any(p <= 0 for p in partition):
        raise ValueError("reduced partition must be positive layer sizes")
    imp = to_implicit(full)
    if box.n_x != full.n_x:
        raise ValueError("box dimension does not match the network input")
    n_red = sum(partition)
    J1, J2 = _resolve_coupling(opts, imp.n_hidden, n_red)

    space = VarSpace()
    layout = _layout_of(imp, n_red)
    lam = relu_qc_expr(space, imp, partition, J1, J2,
                       feedforward=(opts.structure == "strict-feedforward"),
                       diagonal_multipliers=opts.diagonal_multipliers,
                       eps_t0r=opts.eps_t0r)
    pi = input_qc_expr(space, box, layout)
    err = error_terms(space, imp, n_red)
    omega = assemble_schur(pi, lam, err, imp)
    objective = space.zeros()
    objective[space.ids("gamma_x")[0]] = opts.w1
    objective[space.ids("gamma")[0]] = opts.w2
    problem = to_standard_form(omega, objective, space.lower_bounds(), opts.eps_psd)
    solution = solve(problem, opts.solver)
    if solution.status != "optimal":
        hint = ("a larger reduced architecture may admit a certificate"
                if solution.status == "infeasible"
                else "try a looser solver tolerance or another backend")
        raise SynthesisInfeasibleError(
            f"certificate SDP returned {solution.status!r} for partition {partition}; {hint}",
            solution,
        )
    reduced = recover(solution, space, partition, imp.n_x, imp.n_f,
                      structure=opts.structure, activation=full.activation)
    gamma_x = float(space.value("gamma_x", solution.values)[0])
    gamma = float(space.value("gamma", solution.values)[0])
    return SynthesisResult(
        reduced=reduced,
        gamma_x=gamma_x,
        gamma=gamma,
        multipliers=MultiplierSet.from_space(space, solution.values),
        solver=solution,
        bound_sup=gamma_x * box.sup_norm_sq + gamma,
    )


def _layout_of(imp: ImplicitForm, n_red: int) -> SignalLayout:
    return SignalLayout(imp.n_x, imp.n_hidden, n_red)


def recover(solution: Solution, space: VarSpace, partition, n_x: int, n_f: int,
            structure: str = "general-implicit", activation: str = "relu") -> ReducedNetwork:
    """Recover the reduced network from the substituted weight blocks.

    The substitution stores T0_r * (Psi, Psi0, beta); the constraint
    T0_r >= eps * I keeps the diagonal invertible, so the weights come back
    by a row-wise division.
    """
    values = solution.values
    t0_r = space.value("t0_r", values)
    if np.any(np.abs(t0_r) < 1e-12):
        raise ValueError("reduced-side complementarity multiplier is numerically singular")
    f_psi = space.value("f_psi", values)
    f_0 = space.value("f_0", values)
    f_beta = space.value("f_beta", values)
    inv = 1.0 / t0_r
    return ReducedNetwork(
        Psi=inv[:, None] * f_psi,
        Psi0=inv[:, None] * f_0,
        beta=inv * f_beta,
        Psi_f=space.value("psi_f", values),
        beta_out=space.value("beta_out", values),
        partition=tuple(int(p) for p in partition),
        structure=structure,
        activation=activation,
    )


def verify_pair_bound(full: LayerwiseNetwork, reduced: ReducedNetwork, box: Box,
                      w1: float = 1.0, w2: float = 1.0,
                      solver: SolverSettings | None = None,
                      eps_psd: float = DEFAULT_EPS_PSD) -> tuple:
    """Certify an error bound for a fixed (full, reduced) pair.

    Returns (gamma_x, gamma, status); the bound is valid when status is
    'optimal'.  Status 'infeasible' means no certificate exists at this
    relaxation tightness, not that the pair has unbounded error.
    """
    if w1 < 0.0 or w2 < 0.0 or (w1 == 0.0 and w2 == 0.0):
        raise ValueError("objective weights must be nonnegative and not both zero")
    imp = to_implicit(full)
    if reduced.n_x != full.n_x or reduced.n_f != full.n_f:
        raise ValueError("network pair has inconsistent input/output dimensions")
    if box.n_x != full.n_x:
        raise ValueError("box dimension does not match the network input")
    space = VarSpace()
    lam = activation_qc_expr(space, imp, reduced)
    pi = input_qc_expr(space, box, _layout_of(imp, reduced.n_hidden))
    err = error_terms(space, imp, reduced.n_hidden, fixed_reduced=reduced)
    omega = assemble_schur(pi, lam, err, imp)
    objective = space.zeros()
    objective[space.ids("gamma_x")[0]] = w1
    objective[space.ids("gamma")[0]] = w2
    problem = to_standard_form(omega, objective, space.lower_bounds(), eps_psd)
    solution = solve(problem, solver or SolverSettings())
    if solution.status != "optimal":
        return np.nan, np.nan, solution.status
    gamma_x = float(space.value("gamma_x", solution.values)[0])
    gamma = float(space.value("gamma", solution.values)[0])
    return gamma_x, gamma, solution.status
