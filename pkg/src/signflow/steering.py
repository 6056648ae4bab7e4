"""Order-processing steering: alternate pure-diffusion runs with preserving-controller runs."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.special import zeta

from .errors import ControllerFailure, SignPatternMismatch, SlopeFault, SteeringFailure
from .grid import CoefficientField, StateProfile, l2_norm
from .solver import (
    ControlSchedule,
    DiscreteOperator,
    ImplicitSolver,
    NonlinearitySpec,
    SchedulePiece,
    Trajectory,
    advance,
    dt_max,
)
from .synthesis import DatumPrescription, build_initial_datum, preserving_controller
from .zeros import (
    CurveStatus,
    CurveTrace,
    SignChangePattern,
    TargetSpec,
    curve_ode_rhs,
    detect_sign_changes,
    locate_zero_near,
    same_order,
    spatial_derivatives_at,
    target_distance,
)


def s_beta(beta: float) -> float:
    """sum_k k^-(1 + beta/2), evaluated exactly via the Riemann zeta function."""
    return float(zeta(1.0 + beta / 2.0, 1.0))


def min_spacing(points, lo: float = -1.0, hi: float = 1.0) -> float:
    return float(np.min(np.diff([lo, *sorted(points), hi])))


def rho0_star(initial_zeros, targets) -> float:
    """Smallest spacing across the initial and target sets, endpoints included."""
    return min(min_spacing(initial_zeros), min_spacing(targets))


@dataclass(frozen=True)
class SteeringConfig:
    epsilon: float
    rho0_star: float
    M0_star: float
    beta: float = 0.5
    N_max: int = 200
    eta_odd: float | None = None
    dt: float = 1e-5
    snapshot_stride: int = 10
    max_retries: int = 3
    schedule_scale: float = 1.0  # multiplies tilde tau_k; 1.0 is the faithful schedule

    def __post_init__(self):
        if not 0 < self.epsilon < 1:
            raise ValueError("epsilon must lie in (0, 1)")
        if not 0 < self.beta < 1:
            raise ValueError("beta must lie in (0, 1)")
        if not self.rho0_star > 0:
            raise ValueError("rho0_star must be positive")
        if not self.M0_star > 0:
            raise ValueError("M0_star must be positive")
        if self.N_max < 1:
            raise ValueError("N_max must be >= 1")
        if not self.schedule_scale > 0:
            raise ValueError("schedule_scale must be positive")

    @property
    def s_beta(self) -> float:
        return s_beta(self.beta)

    @property
    def a0_star(self) -> float:
        return -1.0 + self.rho0_star / 2

    @property
    def b0_star(self) -> float:
        return 1.0 - self.rho0_star / 2


def plan_times(cfg: SteeringConfig, k: int) -> float:
    """tilde tau_k = (eps rho0* / (4 M0* s_beta))^(2/(2+beta)) / k."""
    if k < 1:
        raise ValueError("k starts at 1")
    base = cfg.epsilon * cfg.rho0_star / (4.0 * cfg.M0_star * cfg.s_beta)
    return cfg.schedule_scale * base ** (2.0 / (2.0 + cfg.beta)) / k


def estimate_interval_count(cfg: SteeringConfig, initial_distance: float, n_curves: int) -> int:
    """Smallest N at which the continuum bound on J* drops below epsilon, capped at N_max."""
    c1 = cfg.epsilon * cfg.rho0_star * n_curves / (4.0 * cfg.s_beta)
    c2 = plan_times(cfg, 1)
    growth = c1 * cfg.s_beta
    bound = initial_distance + growth
    if bound <= cfg.epsilon:
        return 1
    # harmonic sum from n+1 to N ~ log(N / n); solve and cap
    needed = (bound - cfg.epsilon) / c2
    log_n = math.log(max(n_curves, 1)) + needed
    if log_n > math.log(cfg.N_max):
        return cfg.N_max
    return max(1, min(cfg.N_max, math.ceil(math.exp(log_n))))


# ---------------------------------------------------------------- even intervals


class CurveLost(Exception):
    def __init__(self, index: int, time: float):
        super().__init__(f"curve {index} lost at t={time!r}")
        self.index = index
        self.time = time


@dataclass
class EvenRun:
    start_state: StateProfile
    final_state: StateProfile
    trajectory: Trajectory
    positions: tuple[float, ...]
    tau: float
    tau_tilde: float
    hits: frozenset[int]
    stop_time: float | None
    traces: list[CurveTrace]


def run_even_interval(
    state: StateProfile,
    positions,
    targets: TargetSpec,
    active,
    tau_tilde: float,
    f: NonlinearitySpec,
    op: DiscreteOperator,
    *,
    dt: float,
    window: float,
    snapshot_stride: int = 10,
    a: CoefficientField | None = None,
) -> EvenRun:
    """Pure diffusion (alpha = 0) for at most tau_tilde, tracking every zero each step.

    Stops at the first time an active curve reaches its target; the last step
    is shortened to land on the linearly interpolated hitting time.
    """
    grid = state.grid
    x = np.asarray(grid.centers)
    alpha = np.zeros(grid.n)
    implicit = ImplicitSolver(op)
    n_steps = max(1, math.ceil(tau_tilde / min(dt, dt_max(alpha, f)) - 1e-9))
    h = tau_tilde / n_steps
    t0 = state.time
    values = np.array(state.values)
    xi = [float(p) for p in positions]
    goal = targets.targets
    traces = [CurveTrace(l, [t0], [xi[l]], ode_positions=[xi[l]]) for l in range(len(xi))]
    times, profiles = [t0], [state]

    def relocate(vals, guess, t):
        found = []
        for l, g in enumerate(guess):
            z = locate_zero_near(vals, x, g, window)
            if z is None:
                raise CurveLost(l, t)
            found.append(z)
        return found

    t = t0
    for i in range(n_steps):
        t_next = t0 + tau_tilde if i == n_steps - 1 else t0 + (i + 1) * h
        new = advance(values, t, t_next - t, alpha, f, grid, implicit)
        new_xi = relocate(new, xi, t_next)
        crossings = {}
        for l in active:
            before, after = xi[l] - goal[l], new_xi[l] - goal[l]
            if after == 0.0 or before * after < 0:
                crossings[l] = before / (before - after)
        if crossings:
            frac = min(crossings.values())
            hits = frozenset(l for l, c in crossings.items() if c <= frac + 1e-9)
            stop_time = t + frac * (t_next - t)
            if stop_time > t:
                new = advance(values, t, stop_time - t, alpha, f, grid, ImplicitSolver(op))
                new_xi = relocate(new, xi, stop_time)
            else:
                new, new_xi = values, xi
            _append(traces, stop_time, new_xi, values, x, a)
            final = StateProfile(grid, new, stop_time)
            times.append(stop_time)
            profiles.append(final)
            traj = Trajectory(np.array(times), tuple(profiles), snapshot_stride, True)
            return EvenRun(state, final, traj, tuple(new_xi), stop_time - t0, tau_tilde, hits, stop_time, traces)
        _append(traces, t_next, new_xi, values, x, a)
        values, xi, t = new, new_xi, t_next
        if (i + 1) % snapshot_stride == 0 or i == n_steps - 1:
            times.append(t)
            profiles.append(StateProfile(grid, values, t))
    traj = Trajectory(np.array(times), tuple(profiles), snapshot_stride)
    return EvenRun(state, profiles[-1], traj, tuple(xi), tau_tilde, tau_tilde, frozenset(), None, traces)


def _append(traces, t, positions, prev_values, x, a):
    for tr, p in zip(traces, positions):
        if a is not None:
            xi_ode = tr.ode_positions[-1]
            wx, wxx = spatial_derivatives_at(prev_values, x, xi_ode)
            try:
                speed = curve_ode_rhs(wx, wxx, float(a.value(xi_ode)), float(a.derivative(xi_ode)))
            except SlopeFault:
                speed = 0.0
                tr.flagged = True
            tr.ode_positions.append(xi_ode + (t - tr.times[-1]) * speed)
            if abs(tr.ode_positions[-1] - p) > 5 * (x[1] - x[0]):
                tr.flagged = True
        tr.times.append(t)
        tr.positions.append(p)


def steering_prescription(positions, slope_signs, x0, targets: TargetSpec, inactive, rho: float) -> DatumPrescription:
    """Data for w_k: slopes lambda a(x_l), launch velocity sgn(x* - x0) for active curves."""
    mus = []
    for l, (start, goal) in enumerate(zip(x0, targets.targets)):
        mus.append(0 if l in inactive else int(np.sign(goal - start)))
    spacing = min_spacing(positions)
    return DatumPrescription(tuple(positions), tuple(slope_signs), tuple(mus), min(rho, spacing))


def ops_even_step(
    current_pattern: SignChangePattern,
    targets: TargetSpec,
    inactive,
    k: int,
    cfg: SteeringConfig,
    a: CoefficientField,
    op: DiscreteOperator,
    f: NonlinearitySpec,
    *,
    x0=None,
    slope_signs=None,
    start_state: StateProfile | None = None,
    time: float = 0.0,
):
    """Build w_k, run it by pure diffusion, and update the inactive set.

    Returns (w_k, EvenRun, updated inactive set, tau_k). When `start_state` is
    given the run starts from it instead of w_k (the odd interval has steered
    the true state close to w_k). A lost curve halves tilde tau and retries.
    """
    positions = current_pattern.zeros
    x0 = positions if x0 is None else x0
    slope_signs = current_pattern.slope_signs() if slope_signs is None else slope_signs
    inactive = frozenset(inactive)
    for l, (p, goal) in enumerate(zip(positions, targets.targets)):
        if p == goal:
            inactive |= {l}
    active = [l for l in range(len(positions)) if l not in inactive]
    prescription = steering_prescription(positions, slope_signs, x0, targets, inactive, cfg.rho0_star)
    start_time = start_state.time if start_state is not None else time
    w_k = build_initial_datum(prescription, a, a.grid, start_time)
    run_from = w_k if start_state is None else start_state
    tau_tilde = plan_times(cfg, k)
    if start_state is not None:
        tol = 1e-9 * float(np.max(np.abs(start_state.values)))
        observed = detect_sign_changes(start_state, tol)
        if observed.count != len(positions):
            raise SteeringFailure("state lost a sign change before the even interval")
        positions = observed.zeros
    for attempt in range(cfg.max_retries + 1):
        try:
            run = run_even_interval(
                run_from,
                positions,
                targets,
                active,
                tau_tilde,
                f,
                op,
                dt=cfg.dt,
                window=cfg.rho0_star / 4,
                snapshot_stride=cfg.snapshot_stride,
                a=a,
            )
            break
        except CurveLost:
            if attempt == cfg.max_retries:
                raise
            tau_tilde /= 2
    return w_k, run, inactive | run.hits, run.tau


# ---------------------------------------------------------------- calibration


def calibrate_speed_constant(
    u0: StateProfile,
    targets: TargetSpec,
    a: CoefficientField,
    op: DiscreteOperator,
    f: NonlinearitySpec,
    *,
    beta: float = 0.5,
    dt: float = 1e-5,
    horizon: float | None = None,
) -> float:
    """Twice the larger of the peak curve speed and the beta/2-Hoelder quotient of the speed,
    measured on one pure-diffusion run from the first planned datum.
    """
    pattern = detect_sign_changes(u0, 1e-9 * float(np.max(np.abs(u0.values))))
    rho = rho0_star(pattern.zeros, targets.targets)
    horizon = (rho / 4) ** 2 if horizon is None else horizon
    prescription = steering_prescription(pattern.zeros, pattern.slope_signs(), pattern.zeros, targets, frozenset(), rho)
    w = build_initial_datum(prescription, a, a.grid)
    # no active indices, so the run never stops early
    run = run_even_interval(w, pattern.zeros, targets, [], horizon, f, op, dt=dt, window=rho / 4, snapshot_stride=10**9)
    worst = 0.0
    stride = 10
    for tr in run.traces:
        t = np.array(tr.times[::stride])
        p = np.array(tr.positions[::stride])
        if len(t) < 3:
            continue
        speed = np.diff(p) / np.diff(t)
        mid = 0.5 * (t[1:] + t[:-1])
        worst = max(worst, float(np.max(np.abs(speed))))
        lag = mid[1:] - mid[0]
        holder = np.abs(speed[1:] - speed[0]) / lag ** (beta / 2)
        worst = max(worst, float(np.max(holder)))
    return 2.0 * worst if worst > 0 else 2.0


# ---------------------------------------------------------------- drivers


@dataclass
class SteeringFamily:
    taus: list[float] = field(default_factory=list)
    tau_tildes: list[float] = field(default_factory=list)
    data: list[StateProfile] = field(default_factory=list)
    inactive: list[frozenset[int]] = field(default_factory=list)
    stop_events: list[dict] = field(default_factory=list)
    traces: list[CurveTrace] = field(default_factory=list)
    J_history: list[float] = field(default_factory=list)
    positions: list[tuple[float, ...]] = field(default_factory=list)

    @property
    def N(self) -> int:
        return len(self.taus)

    def absorb(self, k: int, w_k: StateProfile, run: EvenRun, inactive: frozenset[int], targets: TargetSpec) -> float:
        self.taus.append(run.tau)
        self.tau_tildes.append(run.tau_tilde)
        self.data.append(w_k)
        self.inactive.append(inactive)
        if run.stop_time is not None:
            for l in sorted(run.hits):
                self.stop_events.append({"k": k, "curve": l + 1, "time": run.stop_time})
        self._merge_traces(run.traces)
        self.positions.append(run.positions)
        J = target_distance(run.positions, targets)
        self.J_history.append(J)
        return J

    def _merge_traces(self, traces: list[CurveTrace]) -> None:
        if not self.traces:
            self.traces = [CurveTrace(tr.index) for tr in traces]
        for acc, tr in zip(self.traces, traces):
            skip = 1 if acc.times and acc.times[-1] == tr.times[0] else 0
            acc.times.extend(tr.times[skip:])
            acc.positions.extend(tr.positions[skip:])
            acc.ode_positions.extend(tr.ode_positions[skip:])
            acc.flagged = acc.flagged or tr.flagged

    def finalize_status(self) -> None:
        final = self.inactive[-1] if self.inactive else frozenset()
        for tr in self.traces:
            tr.status = CurveStatus.REACHED_TARGET if tr.index in final else CurveStatus.ACTIVE

    def summary(self) -> dict:
        return {
            "N": self.N,
            "J_history": list(self.J_history),
            "taus": list(self.taus),
            "stop_events": list(self.stop_events),
            "inactive_growth": [len(s) for s in self.inactive],
        }


def _pattern_of(u: StateProfile) -> SignChangePattern:
    return detect_sign_changes(u, 1e-9 * float(np.max(np.abs(u.values), initial=0.0)))


def steer_diffusion(
    u0: StateProfile,
    targets: TargetSpec,
    cfg: SteeringConfig,
    a: CoefficientField,
    op: DiscreteOperator,
    f: NonlinearitySpec,
) -> tuple[SteeringFamily, StateProfile]:
    """Chain pure-diffusion runs from rebuilt data w_k until J* <= epsilon."""
    p0 = _pattern_of(u0)
    if p0.count != len(targets.targets):
        raise SignPatternMismatch("initial zero count differs from the target count")
    family = SteeringFamily()
    if target_distance(p0.zeros, targets) <= targets.epsilon:
        return family, u0
    pattern = p0
    inactive: frozenset[int] = frozenset()
    state = u0
    t = u0.time
    for k in range(1, cfg.N_max + 1):
        try:
            w_k, run, inactive, _ = ops_even_step(
                pattern, targets, inactive, k, cfg, a, op, f, x0=p0.zeros, slope_signs=p0.slope_signs(), time=t
            )
        except CurveLost as exc:
            family.finalize_status()
            raise SteeringFailure(f"even interval {k}: {exc}", family) from exc
        J = family.absorb(k, w_k, run, inactive, targets)
        state, t = run.final_state, run.final_state.time
        pattern = SignChangePattern(run.positions, p0.leading_sign)
        if J <= targets.epsilon:
            family.finalize_status()
            final_pattern = _pattern_of(state)
            if not same_order(final_pattern, p0):
                raise SteeringFailure("final state changed its sign-change order", family)
            return family, state
    family.finalize_status()
    raise SteeringFailure(f"J* = {family.J_history[-1]!r} after N_max={cfg.N_max} intervals", family)


@dataclass
class FullSteeringResult:
    schedule: ControlSchedule
    trajectory: Trajectory
    family: SteeringFamily
    plans: list
    final_error: float
    eta: float


def steer_full(
    u0: StateProfile,
    u_star: StateProfile,
    eta: float,
    cfg: SteeringConfig,
    a: CoefficientField,
    op: DiscreteOperator,
    f: NonlinearitySpec,
    *,
    controller_dt: float | None = None,
) -> FullSteeringResult:
    """Odd intervals steer the true state onto w_k; even intervals run it with alpha = 0.

    Once the zeros sit within epsilon of those of u_star, a final odd interval
    targets u_star itself. Raises SteeringFailure with the partial record otherwise.
    """
    p0, p_star = _pattern_of(u0), _pattern_of(u_star)
    if not same_order(p0, p_star) or p0.indeterminate:
        raise SignPatternMismatch("initial and target states have different sign-change orders")
    targets = TargetSpec(p_star.zeros, cfg.epsilon)
    eta_odd = cfg.eta_odd
    if eta_odd is None:
        n_est = estimate_interval_count(cfg, target_distance(p0.zeros, targets), p0.count)
        eta_odd = eta / (2 * n_est)
    cdt = cfg.dt if controller_dt is None else controller_dt
    family = SteeringFamily()
    pieces: list[SchedulePiece] = []
    traj: Trajectory | None = None
    plans = []
    state = u0
    pattern = p0
    inactive: frozenset[int] = frozenset()

    def record(schedule: ControlSchedule, sub: Trajectory):
        nonlocal traj
        pieces.extend(schedule.pieces)
        traj = sub if traj is None else traj.extend(sub)

    def partial(message: str, failed_plan=None):
        diagnostics = {"family": family, "plans": plans, "failed_plan": failed_plan}
        if pieces:
            diagnostics["schedule"] = ControlSchedule(tuple(pieces))
            diagnostics["trajectory"] = traj
        return SteeringFailure(message, diagnostics)

    k = 0
    while target_distance(pattern.zeros, targets) > cfg.epsilon:
        k += 1
        if k > cfg.N_max:
            raise partial(f"J* = {family.J_history[-1]!r} after N_max={cfg.N_max} intervals")
        prescription = steering_prescription(pattern.zeros, p0.slope_signs(), p0.zeros, targets, inactive, cfg.rho0_star)
        w_k = build_initial_datum(prescription, a, a.grid, state.time)
        try:
            plan, schedule, state = preserving_controller(state, w_k, eta_odd, f, op, dt=cdt, snapshot_stride=cfg.snapshot_stride)
        except (ControllerFailure, SignPatternMismatch) as exc:
            raise partial(f"odd interval {k} failed: {exc}", getattr(exc, "plan", None)) from exc
        plans.append(plan)
        record(schedule, plan.trajectory)
        try:
            _, run, inactive, _ = ops_even_step(
                pattern, targets, inactive, k, cfg, a, op, f,
                x0=p0.zeros, slope_signs=p0.slope_signs(), start_state=state,
            )
        except CurveLost as exc:
            raise partial(f"even interval {k}: {exc}") from exc
        family.absorb(k, w_k, run, inactive, targets)
        record(ControlSchedule.from_durations(state.time, [(run.tau, np.zeros(a.grid.n))]), run.trajectory)
        state = run.final_state
        pattern = SignChangePattern(run.positions, p0.leading_sign)
    family.finalize_status()
    try:
        plan, schedule, state = preserving_controller(state, u_star, eta, f, op, dt=cdt, snapshot_stride=cfg.snapshot_stride)
    except (ControllerFailure, SignPatternMismatch) as exc:
        raise partial(f"final odd interval failed: {exc}", getattr(exc, "plan", None)) from exc
    plans.append(plan)
    record(schedule, plan.trajectory)
    final_error = l2_norm(state.values - u_star.values, a.grid.dx)
    return FullSteeringResult(ControlSchedule(tuple(pieces)), traj, family, plans, final_error, eta)
