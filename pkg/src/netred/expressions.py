"""Scalar decision-variable registry and affine symmetric-matrix expressions.

Every optimization problem in this package is assembled over one `VarSpace`:
a flat registry of scalar variables organized into named groups (diagonal
multipliers, entrywise-nonnegative matrices, free weight blocks, ...).  An
`AffineMatrixExpr` is a symmetric matrix that depends affinely on those
scalars: a constant part plus one symmetric coefficient matrix per variable.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

__all__ = ["VarSpace", "AffineMatrixExpr", "AffineRowExpr"]

SIGNS = ("free", "nonneg", "geq-epsilon")
ROLES = ("diagonal-entry", "matrix-entry", "vector-entry")


@dataclass(frozen=True)
class GroupInfo:
    name: str
    shape: tuple
    sign: str
    role: str
    ids: np.ndarray  # -1 marks a structurally pinned zero (no variable)


class VarSpace:
    """Registry of scalar decision variables grouped by name.

    Each group has a shape, a sign constraint ('free', 'nonneg' or
    'geq-epsilon' with a group-level epsilon) and a structural role.  An
    optional boolean mask pins entries to zero structurally (no variable is
    created for them); the id array stores -1 at those positions.
    """

    def __init__(self):
        self._groups: dict[str, GroupInfo] = {}
        self._lower: list[float] = []

    @property
    def n_vars(self) -> int:
        return len(self._lower)

    @property
    def group_names(self) -> tuple:
        return tuple(self._groups)

    def add_group(self, name, shape, sign="free", role="matrix-entry", eps=0.0, mask=None):
        """Register a group and return its (possibly masked) id array."""
        if name in self._groups:
            raise ValueError(f"group {name!r} already registered")
        if sign not in SIGNS:
            raise ValueError(f"sign must be one of {SIGNS}")
        if role not in ROLES:
            raise ValueError(f"role must be one of {ROLES}")
        shape = tuple(int(s) for s in shape)
        if sign == "geq-epsilon" and eps <= 0.0:
            raise ValueError("geq-epsilon groups need a positive eps")
        lower = {"free": -np.inf, "nonneg": 0.0, "geq-epsilon": eps}[sign]
        ids = np.full(shape, -1, dtype=int)
        if mask is None:
            mask = np.ones(shape, dtype=bool)
        else:
            mask = np.asarray(mask, dtype=bool)
            if mask.shape != shape:
                raise ValueError("mask shape must match group shape")
        flat_ids = ids.reshape(-1)
        flat_mask = mask.reshape(-1)
        for pos in range(flat_ids.size):
            if flat_mask[pos]:
                flat_ids[pos] = len(self._lower)
                self._lower.append(lower)
        info = GroupInfo(name, shape, sign, role, ids)
        self._groups[name] = info
        return ids

    def ids(self, name) -> np.ndarray:
        return self._groups[name].ids

    def info(self, name) -> GroupInfo:
        return self._groups[name]

    def lower_bounds(self) -> np.ndarray:
        """Per-variable lower bound: -inf for free, 0 or epsilon otherwise."""
        return np.asarray(self._lower, dtype=float)

    def zeros(self) -> np.ndarray:
        return np.zeros(self.n_vars)

    def value(self, name, assignment) -> np.ndarray:
        """Extract a group's values from a flat assignment (masked -> 0)."""
        ids = self._groups[name].ids
        assignment = np.asarray(assignment, dtype=float)
        out = np.zeros(ids.shape)
        live = ids >= 0
        out[live] = assignment[ids[live]]
        return out

    def assign(self, name, values, assignment) -> None:
        """Write a group's values into a flat assignment (masked ignored)."""
        ids = self._groups[name].ids
        values = np.broadcast_to(np.asarray(values, dtype=float), ids.shape)
        live = ids >= 0
        assignment[ids[live]] = values[live]


def _live_pairs(ids):
    ids = np.asarray(ids)
    for idx in np.ndindex(ids.shape):
        v = ids[idx]
        if v >= 0:
            yield v, idx


class AffineMatrixExpr:
    """Symmetric matrix depending affinely on the scalars of a VarSpace.

    Stored as a constant plus a sparse map var-id -> symmetric coefficient
    matrix.  All mutating helpers keep every stored matrix exactly symmetric
    by writing mirrored entries with identical floating-point values.
    """

    def __init__(self, dim: int):
        self.dim = int(dim)
        self.const = np.zeros((self.dim, self.dim))
        self.coeffs: dict[int, np.ndarray] = {}

    def coeff(self, var_id: int) -> np.ndarray:
        c = self.coeffs.get(var_id)
        if c is None:
            c = np.zeros((self.dim, self.dim))
            self.coeffs[var_id] = c
        return c

    # -- construction helpers ------------------------------------------------

    def add_const(self, block, row: int, col: int) -> None:
        """Add a constant block at (row, col); mirrored when off-diagonal.

        Diagonal placements (row == col) must pass a symmetric block.
        """
        block = np.atleast_2d(np.asarray(block, dtype=float))
        r, c = block.shape
        if row == col:
            if r != c or not np.array_equal(block, block.T):
                raise ValueError("diagonal block must be symmetric")
            self.const[row:row + r, col:col + c] += block
        else:
            self.const[row:row + r, col:col + c] += block
            self.const[col:col + c, row:row + r] += block.T

    def add_product(self, ids, left, right, row: int, col: int, sign: float = 1.0,
                    diag: bool = False, transpose: bool = False) -> None:
        """Add the symmetrized one-sided product  sign * L X R  at (row, col).

        X is the variable matrix addressed by ``ids`` (2-d id array, or 1-d
        for a diagonal matrix when ``diag``; use shape (n, 1) for column
        vectors).  ``transpose`` uses X^T in place of X.  For every scalar
        variable the contribution P placed at (row, col) is mirrored to
        (col, row) as P^T, so the overall quadratic form gains
        u^T (sign L X R) v + its transpose; diagonal-block formulas must
        therefore be written in one-sided (half) form.
        """
        left = np.atleast_2d(np.asarray(left, dtype=float))
        right = np.atleast_2d(np.asarray(right, dtype=float))
        ids = np.asarray(ids)
        if diag:
            pairs = ((ids[i], (i, i)) for i in range(ids.shape[0]) if ids[i] >= 0)
        else:
            pairs = _live_pairs(ids)
        for var_id, idx in pairs:
            i, j = (idx[1], idx[0]) if transpose else idx
            piece = sign * np.outer(left[:, i], right[j, :])
            target = self.coeff(var_id)
            r, c = piece.shape
            if row == col:
                # overlapping writes: add the (exactly symmetric) sum once so
                # mirrored entries accumulate identical values in identical order
                if r != c:
                    raise ValueError("diagonal-block contribution must be square")
                target[row:row + r, col:col + c] += piece + piece.T
            else:
                target[row:row + r, col:col + c] += piece
                target[col:col + c, row:row + r] += piece.T

    def add_diag_entries(self, ids, offset: int, scale: float = 1.0) -> None:
        """Add scale * diag(vars) starting at a diagonal offset."""
        ids = np.asarray(ids)
        for i in range(ids.shape[0]):
            if ids[i] >= 0:
                self.coeff(ids[i])[offset + i, offset + i] += scale

    def add_scalar_diag(self, var_id: int, offset: int, size: int, scale: float = 1.0) -> None:
        """Add scale * var * I_size starting at a diagonal offset."""
        if var_id < 0:
            return
        target = self.coeff(var_id)
        for i in range(size):
            target[offset + i, offset + i] += scale

    # -- evaluation ------------------------------------------------------------

    def value(self, assignment) -> np.ndarray:
        assignment = np.asarray(assignment, dtype=float)
        out = self.const.copy()
        for var_id, coeff in self.coeffs.items():
            v = assignment[var_id]
            if v != 0.0:
                out += v * coeff
        return out

    def __add__(self, other: "AffineMatrixExpr") -> "AffineMatrixExpr":
        if self.dim != other.dim:
            raise ValueError("dimension mismatch")
        out = AffineMatrixExpr(self.dim)
        out.const = self.const + other.const
        for src in (self, other):
            for var_id, coeff in src.coeffs.items():
                out.coeff(var_id)[...] += coeff
        return out

    def scaled(self, factor: float) -> "AffineMatrixExpr":
        out = AffineMatrixExpr(self.dim)
        out.const = factor * self.const
        for var_id, coeff in self.coeffs.items():
            out.coeffs[var_id] = factor * coeff
        return out

    def embedded(self, dim: int, offset: int = 0) -> "AffineMatrixExpr":
        """Embed this expression into the top-left of a larger space."""
        if offset + self.dim > dim:
            raise ValueError("embedding does not fit")
        out = AffineMatrixExpr(dim)
        sl = slice(offset, offset + self.dim)
        out.const[sl, sl] = self.const
        for var_id, coeff in self.coeffs.items():
            out.coeff(var_id)[sl, sl] = coeff
        return out

    def max_asymmetry(self) -> float:
        worst = float(np.max(np.abs(self.const - self.const.T))) if self.dim else 0.0
        for coeff in self.coeffs.values():
            worst = max(worst, float(np.max(np.abs(coeff - coeff.T))))
        return worst


class AffineRowExpr:
    """A rectangular matrix depending affinely on VarSpace scalars.

    Used for the error read-out row block; no symmetry involved.
    """

    def __init__(self, shape):
        self.shape = tuple(int(s) for s in shape)
        self.const = np.zeros(self.shape)
        self.coeffs: dict[int, np.ndarray] = {}

    def coeff(self, var_id: int) -> np.ndarray:
        c = self.coeffs.get(var_id)
        if c is None:
            c = np.zeros(self.shape)
            self.coeffs[var_id] = c
        return c

    def value(self, assignment) -> np.ndarray:
        assignment = np.asarray(assignment, dtype=float)
        out = self.const.copy()
        for var_id, coeff in self.coeffs.items():
            v = assignment[var_id]
            if v != 0.0:
                out += v * coeff
        return out
