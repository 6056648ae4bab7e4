"""Spatial grid on (-1, 1), degenerate diffusion coefficients, boundary descriptors, norms."""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from typing import Callable, NamedTuple

import numpy as np
from scipy import integrate
from scipy.interpolate import CubicSpline

from .errors import InvalidBoundary, InvalidCoefficient, UnderResolvedGrid

MIN_CELLS = 8


def _frozen(values) -> np.ndarray:
    arr = np.array(values, dtype=float)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class SpatialGrid:
    n: int
    centers: np.ndarray
    faces: np.ndarray
    dx: float

    def __repr__(self) -> str:
        return f"SpatialGrid(n={self.n}, dx={self.dx!r})"


def build_grid(n: int, *, min_cells: int = MIN_CELLS) -> SpatialGrid:
    """Uniform cell-centred grid with `n` cells on (-1, 1).

    `min_cells` exists only so illustrations can use tiny grids; solver code keeps the default.
    """
    if not isinstance(n, (int, np.integer)) or n < max(1, min_cells):
        raise UnderResolvedGrid(f"need at least {min_cells} cells, got {n!r}")
    n = int(n)
    faces = np.linspace(-1.0, 1.0, n + 1)
    faces[0], faces[-1] = -1.0, 1.0
    centers = 0.5 * (faces[:-1] + faces[1:])
    return SpatialGrid(n=n, centers=_frozen(centers), faces=_frozen(faces), dx=2.0 / n)


class Degeneracy(str, enum.Enum):
    WDP = "WDP"  # 1/a integrable
    SDP = "SDP"  # 1/a not integrable


@dataclass(frozen=True)
class CoefficientSpec:
    """Closed-form or tabulated description of a(x) on [-1, 1]."""

    kind: str
    value: Callable[[np.ndarray], np.ndarray] = field(repr=False, compare=False)
    derivative: Callable[[np.ndarray], np.ndarray] = field(repr=False, compare=False)

    def __call__(self, x):
        return self.value(np.asarray(x, dtype=float))

    @classmethod
    def legendre(cls) -> "CoefficientSpec":
        return cls("legendre", lambda x: 1.0 - x * x, lambda x: -2.0 * x)

    @classmethod
    def sqrt(cls) -> "CoefficientSpec":
        def value(x):
            return np.sqrt(np.clip(1.0 - x * x, 0.0, None))

        def derivative(x):
            with np.errstate(divide="ignore", invalid="ignore"):
                return -x / np.sqrt(1.0 - x * x)

        return cls("sqrt", value, derivative)

    @classmethod
    def power(cls, exponent: float) -> "CoefficientSpec":
        """a(x) = (1 - x^2)^exponent; WDP for exponent < 1."""
        p = float(exponent)

        def value(x):
            return np.clip(1.0 - x * x, 0.0, None) ** p

        def derivative(x):
            with np.errstate(divide="ignore", invalid="ignore"):
                return -2.0 * p * x * np.clip(1.0 - x * x, 0.0, None) ** (p - 1.0)

        return cls(f"power:{p!r}", value, derivative)

    @classmethod
    def table(cls, xs, values) -> "CoefficientSpec":
        xs = np.asarray(xs, dtype=float)
        values = np.asarray(values, dtype=float)
        if xs.ndim != 1 or xs.shape != values.shape or xs.size < 3:
            raise InvalidCoefficient("table needs matching 1-D x and value arrays of length >= 3")
        if not np.all(np.diff(xs) > 0) or xs[0] != -1.0 or xs[-1] != 1.0:
            raise InvalidCoefficient("table abscissae must increase from -1 to 1")
        spline = CubicSpline(xs, values)
        deriv = spline.derivative()
        return cls("table", lambda x: spline(x), lambda x: deriv(x))

    @classmethod
    def named(cls, name: str) -> "CoefficientSpec":
        try:
            return {"legendre": cls.legendre, "sqrt": cls.sqrt}[name]()
        except KeyError:
            raise InvalidCoefficient(f"unknown coefficient form {name!r}") from None


def classify_degeneracy(spec: CoefficientSpec, j_min: int = 4, j_max: int = 20, rtol: float = 1e-6):
    """Decide WDP/SDP from the integrals of 1/a over (-1+2^-j, 1-2^-j).

    The raw partial integrals of an integrable 1/a ~ (1-|x|)^-p converge
    geometrically but too slowly to settle at 1e-6 by j=20, so the Cauchy test
    is applied to their (repeatedly) Aitken-accelerated sequence. A divergent log-type
    sequence has constant increments and is rejected by the same test.
    Returns (degeneracy, sequence of partial integrals).
    """

    def inv(x):
        return 1.0 / float(spec(x))

    opts = dict(epsabs=0.0, epsrel=1e-13, limit=200)
    h0 = 2.0 ** -j_min
    total = integrate.quad(inv, -1.0 + h0, 1.0 - h0, **opts)[0]
    partial = [total]
    for j in range(j_min + 1, j_max + 1):
        lo, hi = 2.0 ** -j, 2.0 ** -(j - 1)
        total += integrate.quad(inv, -1.0 + lo, -1.0 + hi, **opts)[0]
        total += integrate.quad(inv, 1.0 - hi, 1.0 - lo, **opts)[0]
        partial.append(total)
    seq = np.array(partial)
    d1 = np.diff(seq)
    # geometric increments shrink; log-divergence keeps them constant
    ratios = d1[1:] / d1[:-1]
    if not np.all(np.isfinite(ratios)) or ratios[-1] > 1.0 - 1e-3:
        return Degeneracy.SDP, seq
    # repeated Aitken passes strip successive geometric correction terms
    accel = seq
    converged = False
    for _ in range(3):
        e1 = np.diff(accel)
        e2 = np.diff(e1)
        if accel.size < 5 or np.any(e2 == 0):
            break
        accel = accel[2:] - e1[1:] ** 2 / e2
        tail = accel[-3:]
        if np.all(np.abs(np.diff(tail)) <= rtol * np.abs(tail[-1])):
            converged = True
            break
    return (Degeneracy.WDP if converged else Degeneracy.SDP), seq


def _xi_moment(spec: CoefficientSpec, theta: float) -> float:
    """Integral over (-1,1) of |xi_a|^(2 theta - 1), xi_a(x) = int_0^x ds / a(s)."""
    power = 2.0 * theta - 1.0

    def xi(x):
        return integrate.quad(lambda s: 1.0 / float(spec(s)), 0.0, x, limit=200)[0]

    def integrand(x):
        return abs(xi(x)) ** power

    left = integrate.quad(integrand, -1.0, 0.0, limit=200)[0]
    right = integrate.quad(integrand, 0.0, 1.0, limit=200)[0]
    return left + right


@dataclass(frozen=True, eq=False)
class CoefficientField:
    spec: CoefficientSpec
    grid: SpatialGrid
    values_at_faces: np.ndarray
    values_at_centers: np.ndarray
    derivative_at_centers: np.ndarray
    degeneracy: Degeneracy
    xi_a_moment: float | None

    def value(self, x):
        return self.spec(x)

    def derivative(self, x):
        return self.spec.derivative(np.asarray(x, dtype=float))

    def half_cell_resistance(self, side: str) -> float:
        """Integral of 1/a from the boundary face to the adjacent cell centre.

        Finite exactly in the WDP case; it is the face-to-centre resistance of the
        boundary half cell used by the Robin closure.
        """
        if side == "left":
            lo, hi = -1.0, float(self.grid.centers[0])
        else:
            lo, hi = float(self.grid.centers[-1]), 1.0
        val, _ = integrate.quad(lambda s: 1.0 / float(self.spec(s)), lo, hi, limit=200)
        return val


def eval_coefficient(spec: CoefficientSpec | str, grid: SpatialGrid, *, theta: float = 1.0) -> CoefficientField:
    if isinstance(spec, str):
        spec = CoefficientSpec.named(spec)
    faces = np.asarray(spec(grid.faces), dtype=float).copy()
    centers = np.asarray(spec(grid.centers), dtype=float)
    if not (np.all(np.isfinite(centers)) and np.all(np.isfinite(faces[1:-1]))):
        raise InvalidCoefficient("coefficient is not finite inside (-1, 1)")
    if np.any(faces[1:-1] <= 0.0) or np.any(centers <= 0.0):
        raise InvalidCoefficient("coefficient must be strictly positive inside (-1, 1)")
    if abs(faces[0]) > 1e-12 or abs(faces[-1]) > 1e-12:
        raise InvalidCoefficient("coefficient must vanish at both endpoints")
    faces[0] = faces[-1] = 0.0
    derivative = np.asarray(spec.derivative(grid.centers), dtype=float)
    degeneracy, _ = classify_degeneracy(spec)
    moment = _xi_moment(spec, theta) if degeneracy is Degeneracy.SDP else None
    return CoefficientField(
        spec=spec,
        grid=grid,
        values_at_faces=_frozen(faces),
        values_at_centers=_frozen(centers),
        derivative_at_centers=_frozen(derivative),
        degeneracy=degeneracy,
        xi_a_moment=moment,
    )


class BoundaryKind(str, enum.Enum):
    ROBIN = "Robin"
    WEIGHTED_NEUMANN = "WeightedNeumann"


@dataclass(frozen=True)
class BoundarySpec:
    """Boundary conditions.

    Robin: beta0 u + beta1 (a u_x) = 0 at -1 and gamma0 u + gamma1 (a u_x) = 0 at +1.
    """

    kind: BoundaryKind
    beta0: float = 0.0
    beta1: float = 0.0
    gamma0: float = 0.0
    gamma1: float = 0.0

    def __post_init__(self):
        if self.kind is BoundaryKind.ROBIN:
            if self.beta0 ** 2 + self.beta1 ** 2 <= 0 or self.gamma0 ** 2 + self.gamma1 ** 2 <= 0:
                raise InvalidBoundary("Robin coefficients must not vanish together")
            if self.beta0 * self.beta1 > 0 or self.gamma0 * self.gamma1 < 0:
                raise InvalidBoundary("Robin coefficients violate the sign condition")

    @classmethod
    def weighted_neumann(cls) -> "BoundarySpec":
        return cls(BoundaryKind.WEIGHTED_NEUMANN)

    @classmethod
    def robin(cls, beta0: float, beta1: float, gamma0: float, gamma1: float) -> "BoundarySpec":
        return cls(BoundaryKind.ROBIN, float(beta0), float(beta1), float(gamma0), float(gamma1))

    @classmethod
    def dirichlet(cls) -> "BoundarySpec":
        return cls.robin(1.0, 0.0, 1.0, 0.0)

    def check_compatible(self, a: CoefficientField) -> None:
        if self.kind is BoundaryKind.ROBIN and a.degeneracy is not Degeneracy.WDP:
            raise InvalidBoundary("Robin conditions need a weakly degenerate coefficient")
        if self.kind is BoundaryKind.WEIGHTED_NEUMANN and a.degeneracy is not Degeneracy.SDP:
            raise InvalidBoundary("weighted Neumann conditions need a strongly degenerate coefficient")


def natural_boundary(a: CoefficientField) -> BoundarySpec:
    """Weighted Neumann for SDP, Dirichlet for WDP."""
    return BoundarySpec.weighted_neumann() if a.degeneracy is Degeneracy.SDP else BoundarySpec.dirichlet()


@dataclass(frozen=True, eq=False)
class StateProfile:
    grid: SpatialGrid
    values: np.ndarray
    time: float = 0.0

    def __post_init__(self):
        vals = np.array(self.values, dtype=float)
        if vals.shape != (self.grid.n,):
            raise ValueError(f"profile has shape {vals.shape}, grid has {self.grid.n} cells")
        if self.time < 0:
            raise ValueError("time must be nonnegative")
        vals.setflags(write=False)
        object.__setattr__(self, "values", vals)

    @classmethod
    def from_function(cls, grid: SpatialGrid, func, time: float = 0.0) -> "StateProfile":
        return cls(grid, func(np.asarray(grid.centers)), time)

    def with_values(self, values, time: float | None = None) -> "StateProfile":
        return StateProfile(self.grid, values, self.time if time is None else time)

    def l2(self) -> float:
        return l2_norm(self.values, self.grid.dx)


def l2_norm(values, dx: float) -> float:
    values = np.asarray(values)
    return math.sqrt(float(np.dot(values, values)) * dx)


class Norms(NamedTuple):
    l2: float
    seminorm_1a: float
    norm_1a: float


def weighted_norms(u: StateProfile, a: CoefficientField) -> Norms:
    if u.grid.n != a.grid.n:
        raise ValueError("profile and coefficient live on different grids")
    dx = u.grid.dx
    l2 = l2_norm(u.values, dx)
    grad = np.diff(u.values) / dx
    semi_sq = float(np.sum(a.values_at_faces[1:-1] * grad * grad) * dx)
    semi = math.sqrt(semi_sq)
    return Norms(l2, semi, math.sqrt(l2 * l2 + semi_sq))
