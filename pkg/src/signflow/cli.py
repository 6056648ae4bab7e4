"""Scenario runner: `signflow eigen|evolve|steer --config F` and `signflow suite --dir D`.

A scenario is one JSON document. Every domain object is built from it before
anything runs, so a bad config exits with status 1 and leaves no files behind.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from numpy.polynomial import legendre as npleg

from . import climate
from .errors import ConfigError, SignflowError, SteeringFailure
from .grid import (
    BoundarySpec,
    CoefficientField,
    CoefficientSpec,
    StateProfile,
    build_grid,
    eval_coefficient,
    natural_boundary,
)
from .solver import (
    ControlSchedule,
    DiscreteOperator,
    NonlinearitySpec,
    assemble_operator,
    cubic_damping,
    evolve,
    linear_decay,
    write_trajectory_csv,
    zero_nonlinearity,
)
from .spectral import eigenpairs_of_operator, write_eigen_csv, write_mode_csv
from .steering import SteeringConfig, calibrate_speed_constant, rho0_star, steer_full
from .synthesis import DatumPrescription, build_initial_datum
from .zeros import TargetSpec, detect_sign_changes, track_curves, write_traces_csv

EXIT_OK, EXIT_CONFIG, EXIT_FAILURE = 0, 1, 2
COMMANDS = ("eigen", "evolve", "steer")
DEFAULT_OUT = "signflow_out"


@dataclass
class Scenario:
    """A validated config with its domain objects already built."""

    command: str
    raw: dict
    a: CoefficientField
    op: DiscreteOperator
    f: NonlinearitySpec
    out_dir: Path
    seed: int
    dt: float
    snapshot_stride: int
    u0: StateProfile | None = None
    u_star: StateProfile | None = None
    schedule: ControlSchedule | None = None
    eigen_m: int = 6
    eigen_modes: tuple[int, ...] = ()
    steering: dict = field(default_factory=dict)


# ---------------------------------------------------------------- parsing


def _section(cfg: dict, key: str, default=None):
    value = cfg.get(key, default)
    if value is None:
        raise ConfigError(f"missing required field {key!r}")
    return value


def _number(value, name: str, *, positive: bool = False, integer: bool = False):
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ConfigError(f"{name} must be a number")
    if integer and int(value) != value:
        raise ConfigError(f"{name} must be an integer")
    if positive and not value > 0:
        raise ConfigError(f"{name} must be positive")
    return int(value) if integer else float(value)


def _coefficient(spec) -> CoefficientSpec:
    if isinstance(spec, str):
        return CoefficientSpec.named(spec)
    if isinstance(spec, dict) and "table" in spec:
        table = spec["table"]
        return CoefficientSpec.table(table["x"], table["values"])
    if isinstance(spec, dict) and "power" in spec:
        return CoefficientSpec.power(_number(spec["power"], "coefficient.power", positive=True))
    raise ConfigError(f"unrecognised coefficient {spec!r}")


def _boundary(spec, a: CoefficientField) -> BoundarySpec:
    if spec in (None, "natural"):
        bc = natural_boundary(a)
    elif spec == "weighted_neumann":
        bc = BoundarySpec.weighted_neumann()
    elif spec == "dirichlet":
        bc = BoundarySpec.dirichlet()
    elif isinstance(spec, dict) and "robin" in spec:
        coeffs = spec["robin"]
        if not isinstance(coeffs, list) or len(coeffs) != 4:
            raise ConfigError("robin needs [beta0, beta1, gamma0, gamma1]")
        bc = BoundarySpec.robin(*(_number(c, "robin coefficient") for c in coeffs))
    else:
        raise ConfigError(f"unrecognised boundary {spec!r}")
    bc.check_compatible(a)
    return bc


def _ebm(block: dict) -> NonlinearitySpec:
    model = block.get("model")
    common = {
        "Q": _number(_section(block, "Q"), "ebm.Q"),
        "a_i": _number(_section(block, "a_i"), "ebm.a_i"),
        "a_f": _number(_section(block, "a_f"), "ebm.a_f"),
        "u_s": _number(block.get("u_s", climate.SNOW_LINE_K), "ebm.u_s"),
        "eta_smooth": _number(block.get("eta", 5.0), "ebm.eta", positive=True),
        "S_profile": block.get("S", "constant"),
    }
    if model == "budyko":
        params = climate.BudykoParams(A=_number(_section(block, "A"), "ebm.A"), B=_number(_section(block, "B"), "ebm.B"), **common)
    elif model == "sellers":
        params = climate.SellersParams(
            sigma_sb=_number(block.get("sigma", 5.67e-8), "ebm.sigma", positive=True),
            m_opacity=_number(block.get("m", 0.5), "ebm.m"),
            **common,
        )
    else:
        raise ConfigError("ebm.model must be 'budyko' or 'sellers'")
    u_range = _number(block.get("u_range", 350.0), "ebm.u_range", positive=True)
    return climate.make_ebm_nonlinearity(params, u_range=u_range)


def _nonlinearity(spec) -> NonlinearitySpec:
    if spec in (None, "zero"):
        return zero_nonlinearity()
    if isinstance(spec, dict):
        if "linear" in spec:
            return linear_decay(_number(spec["linear"], "nonlinearity.linear"))
        if "cubic" in spec:
            return cubic_damping(_number(spec["cubic"], "nonlinearity.cubic", positive=True))
        if "ebm" in spec:
            return _ebm(spec["ebm"])
    raise ConfigError(f"unrecognised nonlinearity {spec!r}")


def _prescription(block: dict, rng: np.random.Generator) -> DatumPrescription:
    if "random" in block:
        count = _number(block["random"], "datum.random", positive=True, integer=True)
        zeros = np.sort(rng.uniform(-0.8, 0.8, size=count))
        while count > 1 and np.min(np.diff(zeros)) < 0.1:
            zeros = np.sort(rng.uniform(-0.8, 0.8, size=count))
        leading = int(rng.choice([-1, 1]))
        mus = tuple(int(m) for m in rng.integers(-1, 2, size=count))
    else:
        zeros = [_number(z, "datum.zeros") for z in _section(block, "zeros")]
        leading = int(block.get("leading_sign", 1))
        if leading not in (-1, 1):
            raise ConfigError("datum.leading_sign must be -1 or 1")
        mus = tuple(block.get("mus", [0] * len(zeros)))
    count = len(zeros)
    lambdas = block.get("lambdas", [leading * (-1) ** (i + 1) for i in range(count)])
    spacing = np.diff(np.concatenate([[-1.0], zeros, [1.0]]))
    rho = block.get("rho", float(np.min(spacing)))
    return DatumPrescription(tuple(zeros), tuple(lambdas), mus, _number(rho, "datum.rho", positive=True))


def _profile(spec, a: CoefficientField, rng: np.random.Generator) -> StateProfile:
    grid = a.grid
    x = np.asarray(grid.centers)
    if isinstance(spec, dict) and "datum" in spec:
        return build_initial_datum(_prescription(spec["datum"], rng), a, grid)
    if isinstance(spec, dict) and "table" in spec:
        xs = np.asarray(spec["table"]["x"], dtype=float)
        vals = np.asarray(spec["table"]["values"], dtype=float)
        if xs.ndim != 1 or xs.shape != vals.shape or xs.size < 2 or np.any(np.diff(xs) <= 0):
            raise ConfigError("profile table needs increasing x and matching values")
        return StateProfile(grid, np.interp(x, xs, vals))
    if isinstance(spec, dict) and "named" in spec:
        name = spec["named"]
        if name == "zero":
            return StateProfile(grid, np.zeros_like(x))
        if name == "constant":
            return StateProfile(grid, np.full_like(x, _number(spec.get("value", 1.0), "profile.value")))
        if name == "legendre":
            degree = _number(spec.get("degree", 1), "profile.degree", integer=True)
            if degree < 0:
                raise ConfigError("profile.degree must be >= 0")
            return StateProfile(grid, npleg.legval(x, [0] * degree + [1]))
        if name == "cosine":
            k = _number(spec.get("frequency", 1.0), "profile.frequency")
            return StateProfile(grid, np.cos(0.5 * np.pi * k * x))
        raise ConfigError(f"unknown named profile {name!r}")
    raise ConfigError(f"unrecognised profile {spec!r}")


def _control(spec, grid, t1: float) -> ControlSchedule:
    if spec is None or isinstance(spec, (int, float)) and not isinstance(spec, bool):
        return ControlSchedule.constant(grid, 0.0, t1, float(spec or 0.0))
    if isinstance(spec, list):
        segments = []
        for piece in spec:
            duration = _number(_section(piece, "duration"), "control.duration", positive=True)
            segments.append((duration, np.full(grid.n, _number(piece.get("alpha", 0.0), "control.alpha"))))
        return ControlSchedule.from_durations(0.0, segments)
    raise ConfigError(f"unrecognised control {spec!r}")


def output_dir(cfg: dict, override: str | None = None) -> Path:
    env = os.environ.get("SIGNFLOW_OUT")
    return Path(env or override or cfg.get("output") or DEFAULT_OUT)


def load_scenario(cfg: dict, command: str, *, out_override: str | None = None) -> Scenario:
    """Build every domain object the command needs; raises ConfigError on any problem."""
    if not isinstance(cfg, dict):
        raise ConfigError("config must be a JSON object")
    if command not in COMMANDS:
        raise ConfigError(f"unknown command {command!r}")
    try:
        solver = cfg.get("solver", {})
        n = _number(solver.get("n", 512), "solver.n", integer=True)
        dt = _number(solver.get("dt", 1e-5), "solver.dt", positive=True)
        stride = _number(solver.get("snapshot_stride", 10), "solver.snapshot_stride", positive=True, integer=True)
        seed = _number(cfg.get("seed", 0), "seed", integer=True)
        rng = np.random.default_rng(seed)
        grid = build_grid(n)
        a = eval_coefficient(_coefficient(cfg.get("coefficient", "legendre")), grid)
        bc = _boundary(cfg.get("boundary"), a)
        op = assemble_operator(a, bc)
        f = _nonlinearity(cfg.get("nonlinearity"))
        sc = Scenario(command, cfg, a, op, f, output_dir(cfg, out_override), seed, dt, stride)
        if command == "eigen":
            eig = cfg.get("eigen", {})
            sc.eigen_m = _number(eig.get("m", 6), "eigen.m", positive=True, integer=True)
            if sc.eigen_m > n // 4:
                raise ConfigError(f"eigen.m = {sc.eigen_m} exceeds n/4 = {n // 4}")
            sc.eigen_modes = tuple(_number(p, "eigen.modes", integer=True) for p in eig.get("modes", []))
            if any(not 1 <= p <= sc.eigen_m for p in sc.eigen_modes):
                raise ConfigError("eigen.modes must lie in 1..m")
        else:
            sc.u0 = _profile(_section(cfg, "initial"), a, rng)
        if command == "evolve":
            T = _number(solver.get("T", 0.1), "solver.T", positive=True)
            sc.schedule = _control(cfg.get("control"), grid, T)
        if command == "steer":
            sc.u_star = _profile(_section(cfg, "target"), a, rng)
            sc.steering = _steering_params(cfg.get("steering", {}), sc)
    except ConfigError:
        raise
    except (SignflowError, ValueError, TypeError, KeyError) as exc:
        raise ConfigError(f"{type(exc).__name__}: {exc}") from exc
    return sc


def _steering_params(block: dict, sc: Scenario) -> dict:
    p0 = detect_sign_changes(sc.u0, 1e-9 * float(np.max(np.abs(sc.u0.values), initial=0.0)))
    p_star = detect_sign_changes(sc.u_star, 1e-9 * float(np.max(np.abs(sc.u_star.values), initial=0.0)))
    if p0.count != p_star.count or p0.leading_sign != p_star.leading_sign or p0.indeterminate:
        raise ConfigError("initial and target profiles have different sign-change orders")
    if p0.count == 0:
        raise ConfigError("steering needs at least one sign change")
    out = {
        "epsilon": _number(block.get("epsilon", 0.02), "steering.epsilon", positive=True),
        "beta": _number(block.get("beta", 0.5), "steering.beta", positive=True),
        "N_max": _number(block.get("N_max", 200), "steering.N_max", positive=True, integer=True),
        "schedule_scale": _number(block.get("schedule_scale", 1.0), "steering.schedule_scale", positive=True),
    }
    if not out["beta"] < 1:
        raise ConfigError("steering.beta must lie in (0, 1)")
    if "eta" in block:
        out["eta"] = _number(block["eta"], "steering.eta", positive=True)
    else:
        rel = _number(block.get("eta_rel", 0.05), "steering.eta_rel", positive=True)
        out["eta"] = rel * sc.u_star.l2()
    for key in ("eta_odd", "M0_star", "controller_dt"):
        if key in block:
            out[key] = _number(block[key], f"steering.{key}", positive=True)
    out["rho0_star"] = rho0_star(p0.zeros, p_star.zeros)
    return out


# ---------------------------------------------------------------- running


def _write_json(path: Path, payload: dict) -> None:
    path.write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n")


def run_eigen(sc: Scenario) -> tuple[int, dict]:
    es = eigenpairs_of_operator(sc.op, sc.eigen_m)
    sc.out_dir.mkdir(parents=True, exist_ok=True)
    write_eigen_csv(es, sc.out_dir / "eigen.csv")
    for p in sc.eigen_modes:
        write_mode_csv(es, sc.a.grid.centers, p, sc.out_dir / f"mode_{p}.csv")
    return EXIT_OK, {"status": "success", "n": sc.a.grid.n, "m": es.m, "lambdas": [float(v) for v in es.lambdas]}


def run_evolve(sc: Scenario) -> tuple[int, dict]:
    traj = evolve(sc.u0, sc.schedule, sc.f, sc.op, sc.dt, sc.snapshot_stride)
    tol = 1e-9 * float(np.max(np.abs(sc.u0.values), initial=0.0))
    initial = detect_sign_changes(sc.u0, tol)
    traces = track_curves(traj, initial, tol=tol)
    final = traj.final
    summary = {
        "status": "success",
        "n": sc.a.grid.n,
        "T": float(final.time),
        "snapshots": len(traj.times),
        "final_l2": final.l2(),
        "min_u": float(np.min(traj.values())),
        "max_u": float(np.max(traj.values())),
        "sign_changes_initial": initial.count,
        "sign_changes_final": detect_sign_changes(final, tol).count,
    }
    sc.out_dir.mkdir(parents=True, exist_ok=True)
    write_trajectory_csv(traj, sc.out_dir / "trajectory.csv")
    write_traces_csv(traces, sc.out_dir / "traces.csv")
    return EXIT_OK, summary


def run_steer(sc: Scenario) -> tuple[int, dict]:
    p = sc.steering
    targets = TargetSpec(detect_sign_changes(sc.u_star, 1e-9 * float(np.max(np.abs(sc.u_star.values)))).zeros, p["epsilon"])
    M0 = p.get("M0_star") or calibrate_speed_constant(sc.u0, targets, sc.a, sc.op, sc.f, beta=p["beta"], dt=sc.dt)
    cfg = SteeringConfig(
        p["epsilon"],
        p["rho0_star"],
        M0,
        beta=p["beta"],
        N_max=p["N_max"],
        eta_odd=p.get("eta_odd"),
        dt=sc.dt,
        snapshot_stride=sc.snapshot_stride,
        schedule_scale=p["schedule_scale"],
    )
    summary = {
        "epsilon": p["epsilon"],
        "eta": p["eta"],
        "beta": p["beta"],
        "M0_star": M0,
        "rho0_star": p["rho0_star"],
        "schedule_scale": p["schedule_scale"],
        "targets": list(targets.targets),
    }
    try:
        result = steer_full(sc.u0, sc.u_star, p["eta"], cfg, sc.a, sc.op, sc.f, controller_dt=p.get("controller_dt"))
    except SteeringFailure as exc:
        diag = exc.diagnostics if isinstance(exc.diagnostics, dict) else {"family": exc.diagnostics}
        family = diag.get("family")
        summary.update(status="failure", message=str(exc))
        if family is not None:
            summary.update(family.summary())
            summary["final_positions"] = list(family.positions[-1]) if family.positions else None
        summary["plans"] = [plan.summary() for plan in diag.get("plans", [])]
        if diag.get("failed_plan") is not None:
            summary["failed_plan"] = diag["failed_plan"].summary()
        traj = diag.get("trajectory")
        sc.out_dir.mkdir(parents=True, exist_ok=True)
        if traj is not None:
            write_trajectory_csv(traj, sc.out_dir / "trajectory.csv")
        write_traces_csv(family.traces if family is not None else [], sc.out_dir / "traces.csv")
        return EXIT_FAILURE, summary
    family = result.family
    summary.update(family.summary())
    summary.update(
        status="success" if result.final_error <= result.eta else "failure",
        final_error=result.final_error,
        final_positions=list(family.positions[-1]) if family.positions else list(targets.targets),
        T=float(result.trajectory.times[-1]),
        plans=[plan.summary() for plan in result.plans],
    )
    sc.out_dir.mkdir(parents=True, exist_ok=True)
    write_trajectory_csv(result.trajectory, sc.out_dir / "trajectory.csv")
    write_traces_csv(family.traces, sc.out_dir / "traces.csv")
    return (EXIT_OK if summary["status"] == "success" else EXIT_FAILURE), summary


RUNNERS = {"eigen": run_eigen, "evolve": run_evolve, "steer": run_steer}


def _error(kind: str, message: str, **extra) -> None:
    sys.stderr.write(json.dumps({"error": kind, "message": message, **extra}, sort_keys=True) + "\n")


def run_config(path: str | Path, command: str, *, out_override: str | None = None) -> int:
    """Validate, run and write artifacts for one scenario file; returns the exit status."""
    try:
        with open(path) as fh:
            cfg = json.load(fh)
        sc = load_scenario(cfg, command, out_override=out_override)
    except (OSError, json.JSONDecodeError) as exc:
        _error("config", f"cannot read config: {exc}", path=str(path))
        return EXIT_CONFIG
    except ConfigError as exc:
        _error("config", str(exc), path=str(path))
        return EXIT_CONFIG
    started = time.perf_counter()
    try:
        status, summary = RUNNERS[command](sc)
    except SignflowError as exc:
        status, summary = EXIT_FAILURE, {"status": "failure", "message": f"{type(exc).__name__}: {exc}"}
        _error("run", summary["message"], path=str(path))
    summary.update(command=command, seed=sc.seed)
    summary["timing"] = {"wallclock_s": time.perf_counter() - started}
    sc.out_dir.mkdir(parents=True, exist_ok=True)
    _write_json(sc.out_dir / "summary.json", summary)
    return status


def _suite_job(args: tuple[str, str, str]) -> tuple[str, int]:
    path, command, out = args
    return path, run_config(path, command, out_override=out)


def run_suite(directory: str | Path, *, jobs: int = 1, out_base: str | None = None) -> int:
    """Run every *.json scenario in `directory`; each must name its "command".

    Outputs go to <base>/<config stem>/. The status is the worst of the runs.
    """
    directory = Path(directory)
    base = Path(os.environ.get("SIGNFLOW_OUT") or out_base or DEFAULT_OUT)
    configs = sorted(directory.glob("*.json"))
    work = []
    for path in configs:
        try:
            command = json.loads(path.read_text()).get("command")
        except (OSError, json.JSONDecodeError, AttributeError) as exc:
            _error("config", f"cannot read config: {exc}", path=str(path))
            return EXIT_CONFIG
        if command not in COMMANDS:
            _error("config", f"config must name a command from {COMMANDS}", path=str(path))
            return EXIT_CONFIG
        work.append((str(path), command, str(base / path.stem)))
    # per-scenario runs read SIGNFLOW_OUT themselves; the suite already resolved it
    saved = os.environ.pop("SIGNFLOW_OUT", None)
    try:
        if jobs > 1:
            with ProcessPoolExecutor(max_workers=jobs) as pool:
                results = list(pool.map(_suite_job, work))
        else:
            results = [_suite_job(w) for w in work]
    finally:
        if saved is not None:
            os.environ["SIGNFLOW_OUT"] = saved
    for path, status in results:
        print(json.dumps({"config": path, "status": status}))
    return max((status for _, status in results), default=EXIT_OK)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="signflow", description="Degenerate parabolic control scenarios.")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, help_text in (
        ("eigen", "eigenpairs of the discrete operator"),
        ("evolve", "integrate under a piecewise-static control"),
        ("steer", "steer sign changes toward a target profile"),
    ):
        p = sub.add_parser(name, help=help_text)
        p.add_argument("--config", required=True, help="scenario JSON file")
        p.add_argument("--out", help="output directory (SIGNFLOW_OUT takes precedence)")
    suite = sub.add_parser("suite", help="run every scenario JSON in a directory")
    suite.add_argument("--dir", required=True)
    suite.add_argument("--out", help="base output directory")
    suite.add_argument("--jobs", type=int, default=1, help="scenarios to run concurrently")
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    if args.command == "suite":
        return run_suite(args.dir, jobs=max(1, args.jobs), out_base=args.out)
    return run_config(args.config, args.command, out_override=args.out)


if __name__ == "__main__":
    sys.exit(main())
