"""Sign-change detection, curve tracking, and the gap and target-distance functionals."""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy.optimize import brentq

from .errors import SlopeFault
from .grid import CoefficientField, StateProfile
from .solver import Trajectory, format_float

SLOPE_FLOOR = 1e-6


@dataclass(frozen=True)
class SignChangePattern:
    """Ordered interior zeros plus the sign on (-1, zeros[0]); 0 marks indeterminate."""

    zeros: tuple[float, ...]
    leading_sign: int

    def __post_init__(self):
        object.__setattr__(self, "zeros", tuple(float(z) for z in self.zeros))
        if any(b <= a for a, b in zip(self.zeros, self.zeros[1:])):
            raise ValueError("zeros must be strictly increasing")
        if self.leading_sign not in (-1, 0, 1):
            raise ValueError("leading_sign must be -1, 0 or +1")

    @property
    def count(self) -> int:
        return len(self.zeros)

    @property
    def indeterminate(self) -> bool:
        return self.leading_sign == 0

    def interval_signs(self) -> list[int]:
        """Sign on each of the count+1 intervals, left to right."""
        return [self.leading_sign * (-1) ** i for i in range(self.count + 1)]

    def slope_signs(self) -> list[int]:
        """Sign of the derivative at each zero (the sign to its right)."""
        return self.interval_signs()[1:]


def _local_cubic_root(x: np.ndarray, u: np.ndarray, i: int) -> float:
    """Root in [x[i], x[i+1]] of the cubic through up to four neighbouring samples."""
    lo, hi = max(0, i - 1), min(len(x), i + 3)
    xs, us = x[lo:hi], u[lo:hi]
    coeffs = np.polyfit(xs - x[i], us, len(xs) - 1)
    a, b = 0.0, x[i + 1] - x[i]
    fa, fb = np.polyval(coeffs, a), np.polyval(coeffs, b)
    linear = x[i] + b * u[i] / (u[i] - u[i + 1])
    if fa * fb > 0:
        return linear
    root = x[i] + brentq(lambda s: np.polyval(coeffs, s), a, b, xtol=1e-15)
    return root


def _crossing(x: np.ndarray, u: np.ndarray, i: int, j: int) -> float:
    """Position of the single crossing between significant samples i < j."""
    if j == i + 1:
        return _local_cubic_root(x, u, i)
    # collapsed run of small values: take the middle raw crossing, else the run midpoint
    seg = u[i : j + 1]
    flips = [k for k in range(len(seg) - 1) if seg[k] * seg[k + 1] < 0]
    if flips:
        k = i + flips[len(flips) // 2]
        return x[k] + (x[k + 1] - x[k]) * u[k] / (u[k] - u[k + 1])
    return 0.5 * (x[i + 1] + x[j - 1])


def detect_sign_changes(u: StateProfile | np.ndarray, tol: float = 0.0, x: np.ndarray | None = None) -> SignChangePattern:
    """Interior sign changes of a sampled profile.

    Samples with |u| <= tol are treated as zero; a run of them counts as one
    crossing only when the samples flanking it have opposite signs.
    """
    if isinstance(u, StateProfile):
        x = np.asarray(u.grid.centers)
        values = np.asarray(u.values)
    else:
        values = np.asarray(u, dtype=float)
        if x is None:
            raise ValueError("sample positions are required for a bare array")
        x = np.asarray(x, dtype=float)
    significant = np.flatnonzero(np.abs(values) > tol)
    if significant.size == 0:
        return SignChangePattern((), 0)
    signs = np.sign(values[significant])
    zeros = []
    for k in np.flatnonzero(signs[1:] != signs[:-1]):
        zeros.append(_crossing(x, values, int(significant[k]), int(significant[k + 1])))
    return SignChangePattern(tuple(zeros), int(signs[0]))


def same_order(p: SignChangePattern, q: SignChangePattern) -> bool:
    return p.count == q.count and p.leading_sign == q.leading_sign


def curve_ode_rhs(w_x: float, w_xx: float, a_val: float, a_prime: float, slope_floor: float = SLOPE_FLOOR) -> float:
    """Velocity of a zero of w under pure diffusion: -(a' + a w_xx / w_x)."""
    if abs(w_x) < slope_floor:
        raise SlopeFault(f"|w_x| = {abs(w_x)!r} below floor {slope_floor!r}")
    return -(a_prime + a_val * w_xx / w_x)


class CurveStatus(str, enum.Enum):
    ACTIVE = "active"
    REACHED_TARGET = "reached_target"
    LOST = "lost"


@dataclass
class CurveTrace:
    index: int
    times: list[float] = field(default_factory=list)
    positions: list[float] = field(default_factory=list)
    status: CurveStatus = CurveStatus.ACTIVE
    ode_positions: list[float] = field(default_factory=list)
    flagged: bool = False
    lost_time: float | None = None

    @property
    def samples(self) -> list[tuple[float, float]]:
        return list(zip(self.times, self.positions))


@dataclass(frozen=True)
class TargetSpec:
    targets: tuple[float, ...]
    epsilon: float

    def __post_init__(self):
        object.__setattr__(self, "targets", tuple(float(t) for t in self.targets))
        if any(b <= a for a, b in zip(self.targets, self.targets[1:])):
            raise ValueError("targets must be strictly increasing")
        if any(not -1.0 < t < 1.0 for t in self.targets):
            raise ValueError("targets must lie in (-1, 1)")
        if not self.epsilon > 0:
            raise ValueError("epsilon must be positive")


def locate_zero_near(values: np.ndarray, x: np.ndarray, guess: float, window: float, tol: float = 0.0) -> float | None:
    """Detected zero closest to `guess` within +-window, or None."""
    lo = np.searchsorted(x, guess - window, side="left")
    hi = np.searchsorted(x, guess + window, side="right")
    lo, hi = max(lo - 1, 0), min(hi + 1, len(x))
    if hi - lo < 2:
        return None
    pattern = detect_sign_changes(values[lo:hi], tol, x=x[lo:hi])
    candidates = [z for z in pattern.zeros if abs(z - guess) <= window]
    if not candidates:
        return None
    return min(candidates, key=lambda z: abs(z - guess))


def spatial_derivatives_at(values: np.ndarray, x: np.ndarray, point: float) -> tuple[float, float]:
    """Centred finite-difference w_x and w_xx linearly interpolated to `point`."""
    wx = np.gradient(values, x)
    wxx = np.gradient(wx, x)
    return float(np.interp(point, x, wx)), float(np.interp(point, x, wxx))


def track_curves(
    traj: Trajectory,
    initial: SignChangePattern,
    *,
    a: CoefficientField | None = None,
    rho: float = 0.5,
    tol: float = 0.0,
    slope_floor: float = SLOPE_FLOOR,
) -> list[CurveTrace]:
    """Follow each zero of `initial` through the trajectory's snapshots.

    Roots are bracketed within +-rho/2 of the previous position. When `a` is
    given the curve ODE is integrated alongside by explicit Euler as a
    cross-check; a gap above 5 dx sets `flagged`.
    """
    x = np.asarray(traj.profiles[0].grid.centers)
    dx = traj.profiles[0].grid.dx
    traces = [CurveTrace(l, [float(traj.times[0])], [z], ode_positions=[z]) for l, z in enumerate(initial.zeros)]
    for k in range(1, len(traj.profiles)):
        prev_vals = traj.profiles[k - 1].values
        vals = traj.profiles[k].values
        t_prev, t = float(traj.times[k - 1]), float(traj.times[k])
        for trace in traces:
            if trace.status is CurveStatus.LOST:
                continue
            found = locate_zero_near(vals, x, trace.positions[-1], rho / 2, tol)
            if found is None:
                trace.status = CurveStatus.LOST
                trace.lost_time = t
                continue
            if a is not None:
                xi_ode = trace.ode_positions[-1]
                try:
                    wx, wxx = spatial_derivatives_at(prev_vals, x, xi_ode)
                    speed = curve_ode_rhs(wx, wxx, float(a.value(xi_ode)), float(a.derivative(xi_ode)), slope_floor)
                except SlopeFault:
                    trace.status = CurveStatus.LOST
                    trace.lost_time = t
                    continue
                trace.ode_positions.append(xi_ode + (t - t_prev) * speed)
                if abs(trace.ode_positions[-1] - found) > 5 * dx:
                    trace.flagged = True
            trace.times.append(t)
            trace.positions.append(found)
    return traces


def gap_functional(traces: Sequence[CurveTrace] | np.ndarray, a0_star: float, b0_star: float) -> float:
    """Smallest spacing between neighbouring curves, endpoints proxied by a0*, b0*.

    Accepts traces with aligned sample times or a (times, curves) array.
    """
    if isinstance(traces, np.ndarray):
        positions = np.atleast_2d(traces)
    else:
        if not traces:
            return b0_star - a0_star
        positions = np.array([tr.positions for tr in traces]).T
    rows = positions.shape[0]
    padded = np.column_stack([np.full(rows, a0_star), positions, np.full(rows, b0_star)])
    return float(np.min(np.diff(padded, axis=1)))


def target_distance(final_positions: Sequence[float], spec: TargetSpec) -> float:
    if len(final_positions) != len(spec.targets):
        raise ValueError("position and target counts differ")
    return float(sum(abs(p - t) for p, t in zip(final_positions, spec.targets)))


def write_traces_csv(traces: Sequence[CurveTrace], path) -> None:
    with open(path, "w", newline="\n") as fh:
        fh.write("l,t,xi,status\n")
        for tr in traces:
            for t, xi in zip(tr.times, tr.positions):
                fh.write(f"{tr.index + 1},{format_float(t)},{format_float(xi)},{tr.status.value}\n")
