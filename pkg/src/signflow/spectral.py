"""Eigenpairs of the discrete diffusion operator and the mild-solution propagator."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np
from scipy.linalg import LinAlgError, eigh_tridiagonal

from .errors import EigenFailure, UnsupportedPropagation
from .grid import BoundarySpec, CoefficientField, StateProfile
from .solver import DiscreteOperator, NonlinearitySpec, assemble_operator, format_float


@dataclass(frozen=True, eq=False)
class EigenSystem:
    """Operator eigenvalues are -lambdas; modes are orthonormal with weight dx."""

    lambdas: np.ndarray
    modes: np.ndarray  # shape (m, n)
    dx: float

    @property
    def m(self) -> int:
        return len(self.lambdas)

    def coefficients(self, values) -> np.ndarray:
        return self.modes @ np.asarray(values, dtype=float) * self.dx

    def tail_fraction(self, values) -> float:
        """Share of ||u||^2 not captured by the m retained modes."""
        values = np.asarray(values, dtype=float)
        total = float(values @ values) * self.dx
        if total == 0.0:
            return 0.0
        captured = float(np.sum(self.coefficients(values) ** 2))
        return max(0.0, 1.0 - captured / total)


def eigenpairs_of_operator(op: DiscreteOperator, m: int) -> EigenSystem:
    n = op.grid.n
    if not 1 <= m <= n // 4:
        raise ValueError(f"m must lie in [1, n/4] = [1, {n // 4}], got {m}")
    try:
        vals, vecs = eigh_tridiagonal(
            -op.diag, -op.off, select="i", select_range=(0, m - 1), check_finite=False
        )
    except LinAlgError as exc:
        raise EigenFailure(f"tridiagonal eigensolver failed: {exc}") from exc
    modes = vecs.T / math.sqrt(op.grid.dx)
    for row in modes:
        first = np.flatnonzero(np.abs(row) > 1e-12 * np.max(np.abs(row)))[0]
        if row[first] < 0:
            row *= -1.0
    # the kernel of a zero-flux operator may come out at -1e-13; clamp round-off only
    vals = np.where(np.abs(vals) < 1e-9, 0.0, vals)
    vals.setflags(write=False)
    modes.setflags(write=False)
    return EigenSystem(vals, modes, op.grid.dx)


def eigenpairs(a: CoefficientField, bc: BoundarySpec, m: int) -> EigenSystem:
    """The m smallest eigenvalues lambda_p >= 0 of -L with L2-normalised modes."""
    return eigenpairs_of_operator(assemble_operator(a, bc), m)


def propagate_mild(
    u0: StateProfile,
    alpha_const: float,
    f: NonlinearitySpec,
    t1: float,
    es: EigenSystem,
    *,
    trajectory_at: Callable[[float], StateProfile] | None = None,
    quadrature_nodes: int = 16,
) -> StateProfile:
    """Truncated mild solution at time u0.time + t1.

    The linear part is sum_p exp((alpha - lambda_p) t1) <u0, w_p> w_p. For f != 0
    the Duhamel integral is added by Gauss-Legendre quadrature in time; the
    state at each node comes from `trajectory_at` (absolute time in, profile out).
    """
    if t1 < 0:
        raise ValueError("t1 must be nonnegative")
    growth = np.exp((alpha_const - es.lambdas) * t1)
    out = (growth * es.coefficients(u0.values)) @ es.modes
    if not f.is_zero:
        if trajectory_at is None:
            raise UnsupportedPropagation("nonzero f needs a trajectory callback for the Duhamel term")
        nodes, weights = np.polynomial.legendre.leggauss(quadrature_nodes)
        s_nodes = 0.5 * t1 * (nodes + 1.0)
        grid = u0.grid
        for s, wgt in zip(s_nodes, weights):
            state = trajectory_at(u0.time + s)
            forcing = f(grid.centers, u0.time + s, state.values)
            kernel = np.exp((alpha_const - es.lambdas) * (t1 - s))
            out = out + 0.5 * t1 * wgt * ((kernel * es.coefficients(forcing)) @ es.modes)
    return StateProfile(u0.grid, out, u0.time + t1)


def write_eigen_csv(es: EigenSystem, path) -> None:
    with open(path, "w", newline="\n") as fh:
        fh.write("p,lambda\n")
        for p, lam in enumerate(es.lambdas, start=1):
            fh.write(f"{p},{format_float(lam)}\n")


def write_mode_csv(es: EigenSystem, centers, p: int, path) -> None:
    with open(path, "w", newline="\n") as fh:
        fh.write("x,mode\n")
        for x, v in zip(centers, es.modes[p - 1]):
            fh.write(f"{format_float(x)},{format_float(v)}\n")
