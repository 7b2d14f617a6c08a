"""Quadratic-constraint building blocks for the reduction certificate.

Three ingredients enter the certificate matrix:

* an input-set constraint: for x inside an axis-aligned box, the interval
  quadratic sum_i tau_i (upper_i - x_i)(x_i - lower_i) is nonnegative;
* activation constraints: multiplier-weighted quadratic inequalities that
  every true (input, full hidden, reduced hidden) signal triple satisfies,
  aggregated into one symmetric matrix that is affine in the multipliers
  (and, for synthesis, in the substituted reduced-network weight blocks);
* error terms: the output error f(x) - g(x) as a linear read-out row, and
  the quadratic budget gamma_x ||x||^2 + gamma.

All expressions live in the coordinates mu = [x, full hidden, reduced
hidden, 1].  Builders register their decision variables in a shared
VarSpace and return affine expressions over it.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .expressions import AffineMatrixExpr, AffineRowExpr, VarSpace
from .networks import (
    ACTIVATIONS,
    Box,
    ImplicitForm,
    ReducedNetwork,
    activation,
    strict_lower_block_mask,
)

__all__ = [
    "SignalLayout",
    "MultiplierSet",
    "ErrorTerms",
    "input_qc_expr",
    "relu_qc_expr",
    "activation_qc_expr",
    "error_terms",
    "qc_value",
    "DEFAULT_EPS_T0R",
]

DEFAULT_EPS_T0R = 1e-6

QC_KINDS = ("sector", "slope", "bounded", "positive", "positive-complement",
            "complementarity", "cross")


@dataclass(frozen=True)
class SignalLayout:
    """Offsets of the [x, full hidden, reduced hidden, 1] coordinates."""

    n_x: int
    n_full: int
    n_red: int

    @property
    def x_off(self) -> int:
        return 0

    @property
    def full_off(self) -> int:
        return self.n_x

    @property
    def red_off(self) -> int:
        return self.n_x + self.n_full

    @property
    def one_off(self) -> int:
        return self.n_x + self.n_full + self.n_red

    @property
    def dim(self) -> int:
        return self.one_off + 1


def input_qc_expr(space: VarSpace, box: Box, layout: SignalLayout) -> AffineMatrixExpr:
    """Input-set constraint matrix, affine in the nonnegative diagonal tau.

    For any tau >= 0 and x in the box, mu^T P mu equals
    sum_i tau_i (upper_i - x_i)(x_i - lower_i) >= 0; the hidden blocks are
    untouched.
    """
    if box.n_x != layout.n_x:
        raise ValueError("box dimension does not match layout")
    tau = space.add_group("tau_inf", (layout.n_x,), sign="nonneg", role="diagonal-entry")
    expr = AffineMatrixExpr(layout.dim)
    eye = np.eye(layout.n_x)
    # -x^T tau x: one-sided -tau/... diagonal block needs half form: P + P^T = -2*(tau/2)
    expr.add_product(tau, -0.5 * eye, eye, layout.x_off, layout.x_off, diag=True)
    mid = 0.5 * (box.lower + box.upper)
    expr.add_product(tau, eye, mid.reshape(-1, 1), layout.x_off, layout.one_off, diag=True)
    expr.add_product(tau, -0.5 * box.lower.reshape(1, -1), box.upper.reshape(-1, 1),
                     layout.one_off, layout.one_off, diag=True)
    return expr


def _validate_coupling(J1, J2, n_full, n_red):
    J1 = np.asarray(J1, dtype=float)
    J2 = np.asarray(J2, dtype=float)
    if J1.shape != (n_full, n_red):
        raise ValueError(f"J1 must be {n_full}x{n_red}")
    if J2.shape != (n_red,):
        raise ValueError(f"J2 must have {n_red} entries")
    if np.any(J1 < 0.0) or np.any(J2 < 0.0):
        raise ValueError("J1 and J2 must be entrywise nonnegative")
    return J1, J2


def _add_full_relu_stack(expr, space_ids, full: ImplicitForm, layout: SignalLayout):
    """Full-network ReLU constraints: complementarity, positivity and
    positive complement, written against xi = W xc + W0 x + b."""
    t0, tplus, tcplus = space_ids
    n = full.n_hidden
    eye = np.eye(n)
    one = np.ones((1, 1))
    # 2 xc^T T0 (W xc + W0 x + b - xc)
    expr.add_product(t0, eye, full.W, layout.full_off, layout.full_off, diag=True)
    expr.add_product(t0, eye, eye, layout.full_off, layout.full_off, sign=-1.0, diag=True)
    expr.add_product(t0, eye, full.W0, layout.full_off, layout.x_off, diag=True)
    expr.add_product(t0, eye, full.b.reshape(-1, 1), layout.full_off, layout.one_off, diag=True)
    # 2 Tplus^T xc
    expr.add_product(tplus.reshape(-1, 1), eye, one, layout.full_off, layout.one_off)
    # 2 Tcplus^T (xc - xi) = 2 Tcplus^T ((I - W) xc - W0 x - b)
    expr.add_product(tcplus.reshape(-1, 1), (eye - full.W).T, one, layout.full_off, layout.one_off)
    expr.add_product(tcplus.reshape(-1, 1), full.W0.T, one, layout.x_off, layout.one_off, sign=-1.0)
    expr.add_product(tcplus.reshape(-1, 1), full.b.reshape(1, -1), one, layout.one_off, layout.one_off, sign=-1.0)


def relu_qc_expr(space: VarSpace, full: ImplicitForm, reduced_partition, J1, J2,
                 *, feedforward: bool = False, diagonal_multipliers: bool = False,
                 eps_t0r: float = DEFAULT_EPS_T0R) -> AffineMatrixExpr:
    """Aggregated ReLU constraint matrix, linear in multipliers and in the
    substituted weight blocks of the reduced network.

    The reduced network's weights enter through the products
    F_psi = T0_r Psi, F_0 = T0_r Psi0, F_beta = T0_r beta, and the two
    reduced-side multipliers that would multiply those weights are pinned to
    T0_r J1^T and T0_r J2 (J1, J2 entrywise nonnegative, chosen by the
    caller).  That substitution is what makes the expression affine; the
    weights are recovered after the solve by inverting the strictly positive
    diagonal T0_r.

    With ``feedforward`` the F_psi block is restricted to the strictly
    block-lower-triangular pattern of ``reduced_partition`` (structural
    zeros), so the recovered coupling matrix inherits the pattern.  With
    ``diagonal_multipliers`` the full-to-reduced cross multiplier keeps only
    its leading square diagonal (a cheaper, sparser relaxation).
    """
    if full.activation != "relu":
        raise ValueError("the linearized constraint stack is only derived for relu")
    n = full.n_hidden
    m = int(sum(reduced_partition))
    J1, J2 = _validate_coupling(J1, J2, n, m)
    layout = SignalLayout(full.n_x, n, m)

    t0 = space.add_group("t0", (n,), sign="free", role="diagonal-entry")
    t0_r = space.add_group("t0_r", (m,), sign="geq-epsilon", role="diagonal-entry", eps=eps_t0r)
    tplus = space.add_group("tplus", (n,), sign="nonneg", role="vector-entry")
    tplus_r = space.add_group("tplus_r", (m,), sign="nonneg", role="vector-entry")
    tcplus = space.add_group("tcplus", (n,), sign="nonneg", role="vector-entry")
    cross_mask = None
    if diagonal_multipliers:
        cross_mask = np.zeros((n, m), dtype=bool)
        k = min(n, m)
        cross_mask[:k, :k] = np.eye(k, dtype=bool)
    tcross = space.add_group("tcross", (n, m), sign="nonneg", mask=cross_mask)
    f_mask = strict_lower_block_mask(reduced_partition) if feedforward else None
    f_psi = space.add_group("f_psi", (m, m), sign="free", mask=f_mask)
    f_0 = space.add_group("f_0", (m, full.n_x), sign="free")
    f_beta = space.add_group("f_beta", (m,), sign="free", role="vector-entry")

    expr = AffineMatrixExpr(layout.dim)
    _add_full_relu_stack(expr, (t0, tplus, tcplus), full, layout)

    eye_n = np.eye(n)
    eye_m = np.eye(m)
    eye_x = np.eye(full.n_x)
    one = np.ones((1, 1))

    # 2 zc^T (F_psi zc + F_0 x + F_beta - T0_r zc)
    expr.add_product(f_psi, eye_m, eye_m, layout.red_off, layout.red_off)
    expr.add_product(t0_r, eye_m, eye_m, layout.red_off, layout.red_off, sign=-1.0, diag=True)
    expr.add_product(f_0, eye_m, eye_x, layout.red_off, layout.x_off)
    expr.add_product(f_beta.reshape(-1, 1), eye_m, one, layout.red_off, layout.one_off)
    # 2 Tplus_r^T zc
    expr.add_product(tplus_r.reshape(-1, 1), eye_m, one, layout.red_off, layout.one_off)
    # 2 J2^T (T0_r zc - F_psi zc - F_0 x - F_beta)
    expr.add_product(t0_r, eye_m, J2.reshape(-1, 1), layout.red_off, layout.one_off, diag=True)
    expr.add_product(f_psi, eye_m, J2.reshape(-1, 1), layout.red_off, layout.one_off,
                     sign=-1.0, transpose=True)
    expr.add_product(f_0, eye_x, J2.reshape(-1, 1), layout.x_off, layout.one_off,
                     sign=-1.0, transpose=True)
    expr.add_product(f_beta.reshape(-1, 1), J2.reshape(1, -1), one, layout.one_off,
                     layout.one_off, sign=-1.0)
    # 2 ((I - W) xc - W0 x - b)^T Tcross zc
    expr.add_product(tcross, (eye_n - full.W).T, eye_m, layout.full_off, layout.red_off)
    expr.add_product(tcross, full.W0.T, eye_m, layout.x_off, layout.red_off, sign=-1.0)
    expr.add_product(tcross, eye_m, full.b.reshape(-1, 1), layout.red_off, layout.one_off,
                     sign=-1.0, transpose=True)
    # 2 (zc^T T0_r - zc^T F_psi^T - x^T F_0^T - F_beta^T) J1^T xc
    expr.add_product(t0_r, eye_m, J1.T, layout.red_off, layout.full_off, diag=True)
    expr.add_product(f_psi, eye_m, J1.T, layout.red_off, layout.full_off,
                     sign=-1.0, transpose=True)
    expr.add_product(f_0, eye_x, J1.T, layout.x_off, layout.full_off,
                     sign=-1.0, transpose=True)
    expr.add_product(f_beta.reshape(-1, 1), J1, one, layout.full_off, layout.one_off, sign=-1.0)
    return expr


def activation_qc_expr(space: VarSpace, full: ImplicitForm, reduced: ReducedNetwork) -> AffineMatrixExpr:
    """Aggregated activation constraint matrix for a fixed network pair.

    The reduced network's weights are data here, so every product with a
    multiplier is linear and no substitution is needed.  ReLU uses the
    complementarity / positivity / positive-complement / cross constraints
    (sector is implied by complementarity); tanh and shifted-sigmoid use
    their sector and range constraints.
    """
    if full.activation != reduced.activation:
        raise ValueError("full and reduced networks must share an activation")
    act = activation(full.activation)
    n = full.n_hidden
    m = reduced.n_hidden
    if reduced.n_x != full.n_x:
        raise ValueError("input dimensions differ")
    layout = SignalLayout(full.n_x, n, m)
    expr = AffineMatrixExpr(layout.dim)
    eye_n = np.eye(n)
    eye_m = np.eye(m)
    one = np.ones((1, 1))

    if act.complementarity:
        t0 = space.add_group("t0", (n,), sign="free", role="diagonal-entry")
        t0_r = space.add_group("t0_r", (m,), sign="free", role="diagonal-entry")
        tplus = space.add_group("tplus", (n,), sign="nonneg", role="vector-entry")
        tplus_r = space.add_group("tplus_r", (m,), sign="nonneg", role="vector-entry")
        tcplus = space.add_group("tcplus", (n,), sign="nonneg", role="vector-entry")
        tcplus_r = space.add_group("tcplus_r", (m,), sign="nonneg", role="vector-entry")
        tcross = space.add_group("tcross", (n, m), sign="nonneg")
        tcross_r = space.add_group("tcross_r", (m, n), sign="nonneg")

        _add_full_relu_stack(expr, (t0, tplus, tcplus), full, layout)
        # 2 zc^T T0_r (Psi zc + Psi0 x + beta - zc)
        expr.add_product(t0_r, eye_m, reduced.Psi, layout.red_off, layout.red_off, diag=True)
        expr.add_product(t0_r, eye_m, eye_m, layout.red_off, layout.red_off, sign=-1.0, diag=True)
        expr.add_product(t0_r, eye_m, reduced.Psi0, layout.red_off, layout.x_off, diag=True)
        expr.add_product(t0_r, eye_m, reduced.beta.reshape(-1, 1), layout.red_off,
                         layout.one_off, diag=True)
        # 2 Tplus_r^T zc
        expr.add_product(tplus_r.reshape(-1, 1), eye_m, one, layout.red_off, layout.one_off)
        # 2 Tcplus_r^T ((I - Psi) zc - Psi0 x - beta)
        expr.add_product(tcplus_r.reshape(-1, 1), (eye_m - reduced.Psi).T, one,
                         layout.red_off, layout.one_off)
        expr.add_product(tcplus_r.reshape(-1, 1), reduced.Psi0.T, one,
                         layout.x_off, layout.one_off, sign=-1.0)
        expr.add_product(tcplus_r.reshape(-1, 1), reduced.beta.reshape(1, -1), one,
                         layout.one_off, layout.one_off, sign=-1.0)
        # 2 ((I - W) xc - W0 x - b)^T Tcross zc
        expr.add_product(tcross, (eye_n - full.W).T, eye_m, layout.full_off, layout.red_off)
        expr.add_product(tcross, full.W0.T, eye_m, layout.x_off, layout.red_off, sign=-1.0)
        expr.add_product(tcross, eye_m, full.b.reshape(-1, 1), layout.red_off, layout.one_off,
                         sign=-1.0, transpose=True)
        # 2 ((I - Psi) zc - Psi0 x - beta)^T Tcross_r xc
        expr.add_product(tcross_r, (eye_m - reduced.Psi).T, eye_n, layout.red_off, layout.full_off)
        expr.add_product(tcross_r, reduced.Psi0.T, eye_n, layout.x_off, layout.full_off, sign=-1.0)
        expr.add_product(tcross_r, eye_n, reduced.beta.reshape(-1, 1), layout.full_off,
                         layout.one_off, sign=-1.0, transpose=True)
        return expr

    # sector + range constraints (tanh, shifted-sigmoid)
    delta = act.sector
    tsec = space.add_group("tsec", (n,), sign="nonneg", role="diagonal-entry")
    tsec_r = space.add_group("tsec_r", (m,), sign="nonneg", role="diagonal-entry")
    # 2 (delta xi - xc)^T Tsec xc
    expr.add_product(tsec, delta * full.W.T, eye_n, layout.full_off, layout.full_off, diag=True)
    expr.add_product(tsec, eye_n, eye_n, layout.full_off, layout.full_off, sign=-1.0, diag=True)
    expr.add_product(tsec, delta * full.W0.T, eye_n, layout.x_off, layout.full_off, diag=True)
    expr.add_product(tsec, eye_n, delta * full.b.reshape(-1, 1), layout.full_off,
                     layout.one_off, diag=True)
    # 2 (delta zeta - zc)^T Tsec_r zc
    expr.add_product(tsec_r, delta * reduced.Psi.T, eye_m, layout.red_off, layout.red_off, diag=True)
    expr.add_product(tsec_r, eye_m, eye_m, layout.red_off, layout.red_off, sign=-1.0, diag=True)
    expr.add_product(tsec_r, delta * reduced.Psi0.T, eye_m, layout.x_off, layout.red_off, diag=True)
    expr.add_product(tsec_r, eye_m, delta * reduced.beta.reshape(-1, 1), layout.red_off,
                     layout.one_off, diag=True)
    if act.bounds is not None:
        lo, hi = act.bounds
        tbnd = space.add_group("tbnd", (n,), sign="nonneg", role="diagonal-entry")
        tbnd_r = space.add_group("tbnd_r", (m,), sign="nonneg", role="diagonal-entry")
        for ids, size, off in ((tbnd, n, layout.full_off), (tbnd_r, m, layout.red_off)):
            eye = np.eye(size)
            ones_col = np.ones((size, 1))
            # 2 (hi - phi)^T T (phi - lo)
            expr.add_product(ids, eye, eye, off, off, sign=-1.0, diag=True)
            expr.add_product(ids, eye, (hi + lo) * ones_col, off, layout.one_off, diag=True)
            expr.add_product(ids, -hi * lo * ones_col.T, ones_col, layout.one_off,
                             layout.one_off, diag=True)
    return expr


@dataclass
class ErrorTerms:
    """Error read-out row L (so that L mu = f(x) - g(x)) and the quadratic
    budget matrix carrying gamma_x on the input block and gamma in the
    corner."""

    L: AffineRowExpr
    gamma: AffineMatrixExpr
    layout: SignalLayout
    n_f: int


def error_terms(space: VarSpace, full: ImplicitForm, n_red: int,
                fixed_reduced: ReducedNetwork | None = None) -> ErrorTerms:
    """Build the error read-out and budget expressions.

    With ``fixed_reduced`` the read-out weights are data (analysis mode);
    otherwise free groups 'psi_f' and 'beta_out' are registered so synthesis
    can optimize them.  Either way 'gamma_x' and 'gamma' are registered as
    nonnegative scalars.
    """
    layout = SignalLayout(full.n_x, full.n_hidden, int(n_red))
    n_f = full.n_f
    L = AffineRowExpr((n_f, layout.dim))
    L.const[:, layout.full_off:layout.full_off + full.n_hidden] = full.W_f
    L.const[:, layout.one_off] = full.b_out
    if fixed_reduced is None:
        psi_f = space.add_group("psi_f", (n_f, n_red), sign="free")
        beta_out = space.add_group("beta_out", (n_f,), sign="free", role="vector-entry")
        for i in range(n_f):
            for j in range(n_red):
                L.coeff(psi_f[i, j])[i, layout.red_off + j] = -1.0
            L.coeff(beta_out[i])[i, layout.one_off] = -1.0
    else:
        if fixed_reduced.n_hidden != n_red or fixed_reduced.n_f != n_f:
            raise ValueError("fixed reduced network has inconsistent dimensions")
        L.const[:, layout.red_off:layout.red_off + n_red] = -fixed_reduced.Psi_f
        L.const[:, layout.one_off] -= fixed_reduced.beta_out
    gamma_x = space.add_group("gamma_x", (1,), sign="nonneg", role="diagonal-entry")
    gamma = space.add_group("gamma", (1,), sign="nonneg", role="diagonal-entry")
    budget = AffineMatrixExpr(layout.dim)
    budget.add_scalar_diag(gamma_x[0], layout.x_off, layout.n_x)
    budget.add_scalar_diag(gamma[0], layout.one_off, 1)
    return ErrorTerms(L, budget, layout, n_f)


@dataclass
class MultiplierSet:
    """Numeric multiplier values extracted from a solved problem.

    Synthesis problems populate the first block of fields; analysis problems
    may also carry the reduced-side cross multipliers and, for sector-type
    activations, the sector and range multipliers.
    """

    T0: np.ndarray | None = None
    T0_r: np.ndarray | None = None
    Tplus: np.ndarray | None = None
    Tplus_r: np.ndarray | None = None
    Tcplus: np.ndarray | None = None
    Tcplus_r: np.ndarray | None = None
    Tcross: np.ndarray | None = None
    Tcross_r: np.ndarray | None = None
    tau_inf: np.ndarray | None = None
    Tsec: np.ndarray | None = None
    Tsec_r: np.ndarray | None = None
    TB: np.ndarray | None = None
    TB_r: np.ndarray | None = None

    _GROUPS = {
        "t0": "T0", "t0_r": "T0_r", "tplus": "Tplus", "tplus_r": "Tplus_r",
        "tcplus": "Tcplus", "tcplus_r": "Tcplus_r", "tcross": "Tcross",
        "tcross_r": "Tcross_r", "tau_inf": "tau_inf", "tsec": "Tsec",
        "tsec_r": "Tsec_r", "tbnd": "TB", "tbnd_r": "TB_r",
    }

    @classmethod
    def from_space(cls, space: VarSpace, assignment) -> "MultiplierSet":
        values = {}
        for group, attr in cls._GROUPS.items():
            if group in space.group_names:
                values[attr] = space.value(group, assignment)
        return cls(**values)

    def min_sign_margin(self) -> float:
        """Smallest margin over all sign-constrained entries (>= 0 means
        every nonnegativity constraint holds)."""
        margins = [np.inf]
        for arr in (self.Tplus, self.Tplus_r, self.Tcplus, self.Tcplus_r,
                    self.Tcross, self.Tcross_r, self.tau_inf,
                    self.Tsec, self.Tsec_r, self.TB, self.TB_r):
            if arr is not None and arr.size:
                margins.append(float(np.min(arr)))
        return min(margins)


def _phi(tag, y):
    return activation(tag).fn(np.asarray(y, dtype=float))


def qc_value(kind: str, *, multiplier, y=None, y1=None, upsilon=None,
             activation: str = "relu") -> float:
    """Evaluate the left-hand side of one activation quadratic constraint.

    ``multiplier`` is a vector for the diagonal and entrywise families and a
    matrix for the cross family; its sign/shape requirements are checked
    against the chosen constraint kind.  Bounds, sector gains and slopes are
    looked up from the activation table.
    """
    if kind not in QC_KINDS:
        raise ValueError(f"kind must be one of {QC_KINDS}")
    act = ACTIVATIONS.get(activation)
    if act is None:
        raise ValueError(f"unknown activation {activation!r}")
    T = np.asarray(multiplier, dtype=float)

    def _diag(name, sign_free=False):
        if T.ndim != 1:
            raise ValueError(f"{name} multiplier must be a vector of diagonal entries")
        if not sign_free and np.any(T < 0.0):
            raise ValueError(f"{name} multiplier must be nonnegative")
        return T

    if kind == "sector":
        yv = np.asarray(y, dtype=float)
        t = _diag("sector")
        p = _phi(activation, yv)
        return float((act.sector * yv - p) @ (t * p))
    if kind == "slope":
        yv = np.asarray(y, dtype=float)
        y1v = np.asarray(y1, dtype=float)
        t = _diag("slope")
        lo, hi = act.slope
        dp = _phi(activation, yv) - _phi(activation, y1v)
        dy = yv - y1v
        return float((hi * dy - dp) @ (t * (dp - lo * dy)))
    if kind == "bounded":
        if act.bounds is None:
            raise ValueError(f"{activation} is not a bounded activation")
        yv = np.asarray(y, dtype=float)
        t = _diag("bounded")
        lo, hi = act.bounds
        p = _phi(activation, yv)
        return float((hi - p) @ (t * (p - lo)))
    if kind == "positive":
        if not act.positive:
            raise ValueError(f"{activation} is not positive")
        if np.any(T < 0.0):
            raise ValueError("positive multiplier must be nonnegative")
        return float(T @ _phi(activation, y))
    if kind == "positive-complement":
        if not act.positive_complement:
            raise ValueError(f"{activation} does not have a positive complement")
        if np.any(T < 0.0):
            raise ValueError("positive-complement multiplier must be nonnegative")
        yv = np.asarray(y, dtype=float)
        return float(T @ (_phi(activation, yv) - yv))
    if kind == "complementarity":
        if not act.complementarity:
            raise ValueError(f"{activation} does not satisfy complementarity")
        yv = np.asarray(y, dtype=float)
        t = _diag("complementarity", sign_free=True)
        p = _phi(activation, yv)
        return float((p - yv) @ (t * p))
    # cross: phi(upsilon)^T T (phi(y) - y), needs positivity of both factors
    if not (act.positive and act.positive_complement):
        raise ValueError(f"cross constraints need a positive activation with positive complement")
    if T.ndim != 2 or np.any(T < 0.0):
        raise ValueError("cross multiplier must be an entrywise nonnegative matrix")
    yv = np.asarray(y, dtype=float)
    uv = np.asarray(upsilon, dtype=float)
    if T.shape != (uv.shape[0], yv.shape[0]):
        raise ValueError("cross multiplier shape must match (len(upsilon), len(y))")
    return float(_phi(activation, uv) @ T @ (_phi(activation, yv) - yv))
