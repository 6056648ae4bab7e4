"""IMEX finite-volume solver for u_t = (a u_x)_x + alpha u + f(x, t, u)."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy.linalg import cho_solve_banded, cholesky_banded

from .errors import BlowUp, RegistrationRejected, StepRejected
from .grid import BoundaryKind, BoundarySpec, CoefficientField, SpatialGrid, StateProfile

BLOWUP_LEVEL = 1e150


@dataclass(frozen=True)
class NonlinearitySpec:
    """Reaction term f(x, t, u) with growth |f| <= gamma_star |u|^theta.

    `nu` bounds |df/du| on the registered range; the time-step rule and the
    perturbation bounds use it. `u_range` is the half-width of the state range
    sampled by the registration spot check.
    """

    func: Callable[[np.ndarray, float, np.ndarray], np.ndarray] = field(repr=False)
    theta: float = 1.0
    gamma_star: float = 0.0
    nu: float = 0.0
    u_range: float = 1.0
    name: str = "custom"
    is_zero: bool = False

    def __post_init__(self):
        if self.theta < 1 or self.gamma_star < 0 or self.nu < 0:
            raise RegistrationRejected("need theta >= 1, gamma_star >= 0, nu >= 0")
        xs = np.linspace(-1.0, 1.0, 33)
        us = np.linspace(-self.u_range, self.u_range, 41)
        xx, uu = np.meshgrid(xs, us)
        xx, uu = xx.ravel(), uu.ravel()
        for t in (0.0, 0.5, 1.0):
            at_zero = np.asarray(self.func(xs, t, np.zeros_like(xs)), dtype=float)
            if np.any(at_zero != 0.0):
                raise RegistrationRejected(f"{self.name}: f(x, t, 0) must vanish")
            vals = np.asarray(self.func(xx, t, uu), dtype=float)
            bound = self.gamma_star * np.abs(uu) ** self.theta
            if np.any(np.abs(vals) > bound * (1 + 1e-9) + 1e-300):
                raise RegistrationRejected(f"{self.name}: growth bound violated on samples")

    def __call__(self, x, t, u) -> np.ndarray:
        if self.is_zero:
            return np.zeros_like(np.asarray(u, dtype=float))
        return np.asarray(self.func(x, t, u), dtype=float)


def zero_nonlinearity() -> NonlinearitySpec:
    return NonlinearitySpec(lambda x, t, u: np.zeros_like(u), name="zero", is_zero=True)


def linear_decay(rate: float, u_range: float = 10.0) -> NonlinearitySpec:
    """f = -rate * u, the Budyko-linear reaction with zero insolation."""
    rate = float(rate)
    return NonlinearitySpec(
        lambda x, t, u: -rate * np.asarray(u, dtype=float),
        theta=1.0,
        gamma_star=abs(rate),
        nu=abs(rate),
        u_range=u_range,
        name="linear",
    )


def cubic_damping(strength: float = 1.0, u_range: float = 2.0) -> NonlinearitySpec:
    """f = -strength * u^3 (superlinear growth exponent 3)."""
    s = float(strength)
    return NonlinearitySpec(
        lambda x, t, u: -s * np.asarray(u, dtype=float) ** 3,
        theta=3.0,
        gamma_star=s,
        nu=3.0 * s * u_range ** 2,
        u_range=u_range,
        name="cubic",
    )


# ---------------------------------------------------------------- schedules


@dataclass(frozen=True, eq=False)
class SchedulePiece:
    t_start: float
    t_end: float
    alpha_profile: np.ndarray

    def __post_init__(self):
        alpha = np.array(self.alpha_profile, dtype=float)
        alpha.setflags(write=False)
        object.__setattr__(self, "alpha_profile", alpha)

    @property
    def duration(self) -> float:
        return self.t_end - self.t_start


@dataclass(frozen=True, eq=False)
class ControlSchedule:
    """Piecewise-static multiplicative control: contiguous static pieces."""

    pieces: tuple[SchedulePiece, ...]

    def __post_init__(self):
        pieces = tuple(self.pieces)
        if not pieces:
            raise ValueError("a schedule needs at least one piece")
        size = pieces[0].alpha_profile.shape
        for i, piece in enumerate(pieces):
            if not piece.t_end > piece.t_start:
                raise ValueError(f"piece {i} has non-positive duration")
            if piece.alpha_profile.shape != size or not np.all(np.isfinite(piece.alpha_profile)):
                raise ValueError(f"piece {i} has an invalid control profile")
            if i and pieces[i - 1].t_end != piece.t_start:
                raise ValueError(f"pieces {i - 1} and {i} do not tile")
        object.__setattr__(self, "pieces", pieces)

    @property
    def t_start(self) -> float:
        return self.pieces[0].t_start

    @property
    def t_end(self) -> float:
        return self.pieces[-1].t_end

    @classmethod
    def from_durations(cls, t0: float, segments: Sequence[tuple[float, np.ndarray]]) -> "ControlSchedule":
        pieces = []
        t = float(t0)
        for duration, alpha in segments:
            t_next = t + float(duration)
            pieces.append(SchedulePiece(t, t_next, alpha))
            t = t_next
        return cls(tuple(pieces))

    @classmethod
    def constant(cls, grid: SpatialGrid, t0: float, t1: float, value: float = 0.0) -> "ControlSchedule":
        return cls((SchedulePiece(float(t0), float(t1), np.full(grid.n, float(value))),))

    def then(self, other: "ControlSchedule") -> "ControlSchedule":
        return ControlSchedule(self.pieces + other.pieces)


# ---------------------------------------------------------------- operator


@dataclass(frozen=True, eq=False)
class DiscreteOperator:
    """Symmetric tridiagonal discretisation of u -> (a u_x)_x."""

    grid: SpatialGrid
    diag: np.ndarray
    off: np.ndarray
    bc: BoundarySpec

    def apply(self, u) -> np.ndarray:
        u = np.asarray(u, dtype=float)
        out = self.diag * u
        out[:-1] += self.off * u[1:]
        out[1:] += self.off * u[:-1]
        return out

    def dense(self) -> np.ndarray:
        return np.diag(self.diag) + np.diag(self.off, 1) + np.diag(self.off, -1)

    @property
    def spectral_radius_bound(self) -> float:
        return float(np.max(np.abs(self.diag)) + 2 * np.max(np.abs(self.off), initial=0.0))


def _robin_conductance(rate: float | None, resistance: float) -> float:
    """Boundary flux per unit boundary-cell value.

    `rate` is k in (a u_x) = k u_b (outward sense); None means Dirichlet.
    """
    conductance = 1.0 / resistance
    if rate is None:
        return conductance
    if rate == 0.0:
        return 0.0
    return rate * conductance / (rate + conductance)


def assemble_operator(a: CoefficientField, bc: BoundarySpec) -> DiscreteOperator:
    bc.check_compatible(a)
    grid = a.grid
    dx = grid.dx
    coupling = a.values_at_faces[1:-1] / dx ** 2
    diag = np.zeros(grid.n)
    diag[:-1] -= coupling
    diag[1:] -= coupling
    if bc.kind is BoundaryKind.ROBIN:
        left_rate = None if bc.beta1 == 0 else -bc.beta0 / bc.beta1
        right_rate = None if bc.gamma1 == 0 else bc.gamma0 / bc.gamma1
        if left_rate != 0.0:
            diag[0] -= _robin_conductance(left_rate, a.half_cell_resistance("left")) / dx
        if right_rate != 0.0:
            diag[-1] -= _robin_conductance(right_rate, a.half_cell_resistance("right")) / dx
    diag.setflags(write=False)
    coupling.setflags(write=False)
    return DiscreteOperator(grid, diag, coupling, bc)


# ---------------------------------------------------------------- stepping


def dt_max(alpha_profile, f: NonlinearitySpec) -> float:
    """Explicit-reaction bound 1 / (2 (sup|alpha| + nu)); inf when both vanish."""
    rate = float(np.max(np.abs(alpha_profile), initial=0.0)) + f.nu
    return math.inf if rate == 0.0 else 1.0 / (2.0 * rate)


class ImplicitSolver:
    """Solves (I - dt L) v = r, caching the banded Cholesky factor per dt."""

    def __init__(self, op: DiscreteOperator):
        self.op = op
        self._dt = None
        self._factor = None

    def solve(self, rhs: np.ndarray, dt: float) -> np.ndarray:
        if dt != self._dt:
            band = np.zeros((2, self.op.grid.n))
            band[0, 1:] = -dt * self.op.off
            band[1] = 1.0 - dt * self.op.diag
            self._factor = cholesky_banded(band, lower=False, check_finite=False)
            self._dt = dt
        return cho_solve_banded((self._factor, False), rhs, check_finite=False)


def advance(values, t, dt, alpha, f, grid, implicit: ImplicitSolver) -> np.ndarray:
    """Raw IMEX update on arrays; callers own the step-size checks."""
    rhs = values + dt * (alpha * values + f(grid.centers, t, values))
    return implicit.solve(rhs, dt)


def step(
    u: StateProfile,
    dt: float,
    alpha_profile,
    f: NonlinearitySpec,
    op: DiscreteOperator,
    *,
    dt_cap: float = math.inf,
) -> StateProfile:
    """One IMEX step: implicit diffusion, explicit reaction and control."""
    alpha = np.asarray(alpha_profile, dtype=float)
    bound = min(dt_max(alpha, f), dt_cap)
    if not dt > 0 or dt > bound * (1 + 1e-12):
        raise StepRejected(f"dt={dt!r} outside (0, {bound!r}]")
    new = advance(u.values, u.time, dt, alpha, f, u.grid, ImplicitSolver(op))
    return StateProfile(u.grid, new, u.time + dt)


@dataclass(frozen=True, eq=False)
class Trajectory:
    times: np.ndarray
    profiles: tuple[StateProfile, ...]
    snapshot_stride: int
    stopped_early: bool = False

    @property
    def final(self) -> StateProfile:
        return self.profiles[-1]

    def values(self) -> np.ndarray:
        return np.stack([p.values for p in self.profiles])

    def extend(self, other: "Trajectory") -> "Trajectory":
        """Concatenate, dropping `other`'s first snapshot when it repeats our last time."""
        skip = 1 if other.times[0] == self.times[-1] else 0
        return Trajectory(
            np.concatenate([self.times, other.times[skip:]]),
            self.profiles + other.profiles[skip:],
            self.snapshot_stride,
            other.stopped_early,
        )


def piece_step_count(duration: float, dt_limit: float) -> int:
    return max(1, math.ceil(duration / dt_limit - 1e-9))


def evolve(
    u0: StateProfile,
    schedule: ControlSchedule,
    f: NonlinearitySpec,
    op: DiscreteOperator,
    dt_target: float,
    snapshot_stride: int = 1,
    *,
    stop: Callable[[StateProfile], bool] | None = None,
) -> Trajectory:
    """Integrate over every schedule piece, landing exactly on piece boundaries.

    Snapshots are kept every `snapshot_stride` steps and at each piece end.
    `stop`, if given, is called after every step; returning True ends the run
    with that state as the final snapshot.
    """
    if not dt_target > 0:
        raise StepRejected("dt_target must be positive")
    if snapshot_stride < 1:
        raise ValueError("snapshot_stride must be >= 1")
    if abs(u0.time - schedule.t_start) > 1e-12 * max(1.0, abs(schedule.t_start)):
        raise ValueError(f"initial time {u0.time!r} differs from schedule start {schedule.t_start!r}")
    grid = u0.grid
    implicit = ImplicitSolver(op)
    values = np.array(u0.values)
    times = [schedule.t_start]
    profiles = [StateProfile(grid, values, schedule.t_start)]
    count = 0
    for piece in schedule.pieces:
        alpha = piece.alpha_profile
        n_steps = piece_step_count(piece.duration, min(dt_target, dt_max(alpha, f)))
        dt = piece.duration / n_steps
        t = piece.t_start
        for i in range(n_steps):
            values = advance(values, t, dt, alpha, f, grid, implicit)
            t_next = piece.t_end if i == n_steps - 1 else piece.t_start + (i + 1) * dt
            if not np.all(np.isfinite(values)) or np.max(np.abs(values)) > BLOWUP_LEVEL:
                raise BlowUp(f"state blew up during step ending at t={t_next!r}", last_finite_time=t)
            t = t_next
            count += 1
            halt = stop is not None and stop(StateProfile(grid, values, t))
            if count % snapshot_stride == 0 or i == n_steps - 1 or halt:
                times.append(t)
                profiles.append(StateProfile(grid, values, t))
            if halt:
                return Trajectory(np.array(times), tuple(profiles), snapshot_stride, True)
    return Trajectory(np.array(times), tuple(profiles), snapshot_stride)


def format_float(value: float) -> str:
    """Shortest round-trip decimal representation."""
    return repr(float(value))


def write_trajectory_csv(traj: Trajectory, path) -> None:
    centers = [format_float(x) for x in traj.profiles[0].grid.centers]
    with open(path, "w", newline="\n") as fh:
        fh.write("t,x,u\n")
        for t, prof in zip(traj.times, traj.profiles):
            ts = format_float(t)
            for xs, u in zip(centers, prof.values):
                fh.write(f"{ts},{xs},{format_float(u)}\n")
