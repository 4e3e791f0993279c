"""Command-line entry point: ``burgers-vortex <group> <action> [options]``.

Groups: ``vortex solve|sweep``, ``stability run``, ``phi evolve|shift``,
``semigroup check``, ``biot-savart check`` and ``verify``.

Run directories default to ``$BURGERS_OUTPUT_ROOT/<group>-<action>-<digest>``
(``./burgers_runs`` when the variable is unset). Every run directory receives
exactly one ``manifest.json``. Floats are written with 17 significant digits.

Exit codes: 0 success, 1 a pass flag or check failed, 2 usage error,
3 solver or integrator error, 4 contraction breakdown, 5 unreadable input.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import io
import json
import os
import sys
import time
import warnings
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from .checks import TIERS
from .weighted_fields import Axis, Grid2D, Grid3D, read_snapshot, write_snapshot

EXIT_OK, EXIT_FAILED, EXIT_USAGE, EXIT_SOLVER, EXIT_CONTRACTION, EXIT_INPUT = 0, 1, 2, 3, 4, 5
OUTPUT_ROOT_ENV = "BURGERS_OUTPUT_ROOT"


class UsageError(Exception):
    """Invalid user input; reported with exit code 2."""


class InputError(Exception):
    """Unreadable input file; reported with exit code 5."""


def fmt(v) -> str:
    return "%.17g" % float(v)


# -------------------------------------------------------------- config records

@dataclass
class RunConfig:
    command: str
    params: dict
    tier: str = "standard"
    seed: int = 0
    out_dir: str | None = None

    def digest(self) -> str:
        key = json.dumps({"command": self.command, "params": self.params, "tier": self.tier,
                          "seed": self.seed}, sort_keys=True, default=str)
        return hashlib.sha256(key.encode()).hexdigest()[:12]


@dataclass
class RunManifest:
    config: dict
    version: str
    grid_digests: dict
    wall_clock_seconds: float
    flags: dict
    outputs: list = field(default_factory=list)
    threads: dict = field(default_factory=dict)

    def write(self, run_dir: Path) -> Path:
        missing = [o for o in self.outputs if not (run_dir / o).exists()]
        if missing:
            raise RuntimeError(f"manifest references missing outputs {missing}")
        path = run_dir / "manifest.json"
        tmp = run_dir / "manifest.json.tmp"
        tmp.write_text(json.dumps(asdict(self), indent=2, sort_keys=True, default=str) + "\n")
        os.replace(tmp, path)
        return path


def _thread_env() -> dict:
    keys = ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS")
    return {k: os.environ.get(k, "") for k in keys}


def run_directory(cfg: RunConfig) -> Path:
    if cfg.out_dir:
        path = Path(cfg.out_dir)
    else:
        root = Path(os.environ.get(OUTPUT_ROOT_ENV, "burgers_runs"))
        path = root / f"{cfg.command.replace(' ', '-')}-{cfg.digest()}"
    path.mkdir(parents=True, exist_ok=True)
    return path


def finish_run(cfg: RunConfig, run_dir: Path, started: float, grids: dict, flags: dict,
               outputs: list[Path]) -> Path:
    manifest = RunManifest(
        config=asdict(cfg),
        version=__version__,
        grid_digests={k: g.digest() for k, g in grids.items()},
        wall_clock_seconds=round(time.perf_counter() - started, 3),
        flags=flags,
        outputs=sorted(str(Path(p).relative_to(run_dir)) for p in outputs),
        threads=_thread_env(),
    )
    return manifest.write(run_dir)


def write_csv(path: Path, header: list[str], rows) -> Path:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([fmt(v) if isinstance(v, (float, np.floating)) else v for v in row])
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_text(buf.getvalue())
    os.replace(tmp, path)
    return path


def write_json(path: Path, obj) -> Path:
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n")
    os.replace(tmp, path)
    return path


def emit(args, table: list[tuple[str, object]], payload: dict) -> None:
    """Human table on stdout, or ``payload`` as JSON with ``--json``."""
    if args.json:
        print(json.dumps(payload, sort_keys=True, default=str))
        return
    width = max((len(k) for k, _ in table), default=0)
    for k, v in table:
        s = fmt(v) if isinstance(v, (float, np.floating)) else str(v)
        print(f"{k:<{width}}  {s}")


# ----------------------------------------------------------------- arg helpers

def parse_grid(text: str) -> tuple[int, float]:
    try:
        n, L = text.split(":")
        n, L = int(n), float(L)
    except ValueError:
        raise argparse.ArgumentTypeError(f"--grid expects N:L, got {text!r}") from None
    if n < 8 or L <= 0:
        raise argparse.ArgumentTypeError("--grid needs N >= 8 and L > 0")
    return n, L


def parse_floats(text: str) -> list[float]:
    try:
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None


def transverse_grid(args) -> Grid2D:
    if getattr(args, "grid", None):
        n, L = args.grid
        return Grid2D(L, n)
    return Grid2D(12.0, TIERS[args.tier][0])


# ---------------------------------------------------------------------- vortex

def _solution_record(sol) -> dict:
    return {
        "lambda": sol.params.lam,
        "rho": sol.params.rho,
        "m": sol.params.m,
        "correction_norm": sol.correction_norm,
        "residual": sol.residual,
        "iterations": sol.iterations,
        "contraction_estimate": sol.contraction_estimate,
        "update_norms": list(sol.update_norms),
        "update_ratios": list(sol.update_ratios),
    }


def cmd_vortex(args) -> int:
    from .vortex_solver import VortexParams, VortexSolverError, solve_vortex

    grid = transverse_grid(args)
    if args.action == "solve":
        try:
            params = VortexParams(args.lam, args.rho, args.m)
        except ValueError as exc:
            raise UsageError(str(exc)) from None
        cfg = RunConfig("vortex solve", {"lambda": args.lam, "rho": args.rho, "m": args.m,
                                         "tol": args.tol, "max_iter": args.max_iter,
                                         "grid": [grid.N, grid.L],
                                         "derivatives": not args.no_derivatives},
                        args.tier, 0, args.out)
        started = time.perf_counter()
        try:
            with warnings.catch_warnings(record=True) as caught:
                warnings.simplefilter("always")
                sol = solve_vortex(params, grid, tol=args.tol, max_iter=args.max_iter,
                                   derivatives=not args.no_derivatives)
        except ValueError as exc:
            emit(args, [("status", "failed"), ("error", str(exc))], {"error": str(exc)})
            return EXIT_SOLVER
        except VortexSolverError as exc:
            ratios = [b / a for a, b in zip(exc.trace[:-1], exc.trace[1:]) if a > 0]
            worst = max(ratios, default=float("nan"))
            diag = {"error": str(exc), "max_update_ratio": worst,
                    "contraction_breakdown": bool(worst >= 1.0)}
            emit(args, [("status", "failed"), ("error", str(exc)),
                        ("max update ratio", worst)], diag)
            return EXIT_CONTRACTION if worst >= 1.0 else EXIT_SOLVER
        run_dir = run_directory(cfg)
        outputs = [
            write_snapshot(run_dir / "omega_core.bvsnap", sol.omega_core.values, grid),
            write_snapshot(run_dir / "Omega_B.bvsnap", sol.Omega_B.values, grid),
            write_snapshot(run_dir / "U_B.bvsnap", np.stack([sol.U_B.u1, sol.U_B.u2]), grid),
        ]
        if sol.dOmega_drho is not None:
            outputs.append(write_snapshot(run_dir / "dOmega_drho.bvsnap", sol.dOmega_drho.values, grid))
            outputs.append(write_snapshot(run_dir / "d2Omega_drho2.bvsnap", sol.d2Omega_drho2.values, grid))
        record = _solution_record(sol)
        record["warnings"] = [str(w.message) for w in caught]
        outputs.append(write_json(run_dir / "solution.json", record))
        flags = {"converged": True, "contraction": bool(sol.certified)}
        finish_run(cfg, run_dir, started, {"transverse": grid}, flags, outputs)
        emit(args, [("run directory", run_dir), ("correction_norm", sol.correction_norm),
                    ("residual", sol.residual), ("iterations", sol.iterations),
                    ("contraction_estimate", sol.contraction_estimate)],
             {"run_dir": str(run_dir), **record})
        return EXIT_OK if sol.certified else EXIT_CONTRACTION

    # sweep
    lams, rhos = args.lambdas, args.rhos
    if not lams or not rhos:
        raise UsageError("--lambdas and --rhos need at least one value each")
    for lam in lams:
        for rho in rhos:
            try:
                VortexParams(lam, rho, args.m)
            except ValueError as exc:
                raise UsageError(f"point (lambda={lam}, rho={rho}): {exc}") from None
    cfg = RunConfig("vortex sweep", {"lambdas": lams, "rhos": rhos, "m": args.m, "tol": args.tol,
                                     "max_iter": args.max_iter, "grid": [grid.N, grid.L]},
                    args.tier, 0, args.out)
    started = time.perf_counter()
    rows, failed = [], 0
    for lam in lams:
        for rho in rhos:
            try:
                with warnings.catch_warnings():
                    warnings.simplefilter("ignore")
                    sol = solve_vortex(VortexParams(lam, rho, args.m), grid, tol=args.tol,
                                       max_iter=args.max_iter, derivatives=False)
                c = sol.correction_norm
                rows.append([float(lam), float(rho), c, c / rho**2 if rho else float("nan"),
                             sol.residual, sol.iterations, sol.contraction_estimate,
                             "converged" if sol.certified else "contraction>=1"])
            except (VortexSolverError, ValueError) as exc:
                failed += 1
                nan = float("nan")
                rows.append([float(lam), float(rho), nan, nan, nan, len(getattr(exc, "trace", ())),
                             nan, "failed"])
    run_dir = run_directory(cfg)
    header = ["lambda", "rho", "correction_norm", "correction_norm_over_rho2", "residual",
              "iterations", "contraction_estimate", "status"]
    out = write_csv(run_dir / "sweep.csv", header, rows)
    finish_run(cfg, run_dir, started, {"transverse": grid}, {"all_converged": failed == 0}, [out])
    emit(args, [("run directory", run_dir), ("points", len(rows)), ("failed", failed)],
         {"run_dir": str(run_dir), "points": len(rows), "failed": failed})
    return EXIT_OK


# ------------------------------------------------------------------- stability

def load_config(path: Path) -> dict:
    try:
        cfg = json.loads(Path(path).read_text())
    except FileNotFoundError:
        raise UsageError(f"config file {path} not found") from None
    except json.JSONDecodeError as exc:
        raise UsageError(f"config file {path}: {exc}") from None
    if not isinstance(cfg, dict):
        raise UsageError("config must be a JSON object")
    return cfg


CONFIG_KEYS = {"lambda", "rho", "m", "grid", "tier", "dt", "T", "initial", "measure",
               "checkpoint_every", "seed"}


def _field(cfg: dict, key: str, kind, default=None, required=False):
    if key not in cfg:
        if required:
            raise UsageError(f"config field '{key}' is required")
        return default
    try:
        return kind(cfg[key])
    except (TypeError, ValueError):
        raise UsageError(f"config field '{key}' must be {kind.__name__}, got {cfg[key]!r}") from None


def random_perturbation(grid: Grid3D, amplitude: float, seed: int, count: int = 3,
                        m: float = 2.0) -> np.ndarray:
    """Sum of divergence-free bumps curl(f1, f2, 0) with random centers (seeded)."""
    from .perturbation_dynamics import _x2_norm
    from .weighted_fields import project_slices_zero_mean

    rng = np.random.default_rng(seed)
    x1, x2 = grid.transverse.mesh()
    x3 = grid.x3[:, None, None]
    omega = np.zeros((3,) + grid.shape)
    for _ in range(count):
        c = rng.uniform(-1.5, 1.5, size=3)
        s = rng.uniform(0.8, 1.4)
        w = rng.uniform(1.5, 2.5)
        a1, a2 = rng.normal(size=2)
        g = np.exp(-((x1 - c[0]) ** 2 + (x2 - c[1]) ** 2) / (2 * s * s))
        e = np.exp(-(x3 - c[2]) ** 2 / (2 * w * w))
        f = g * e
        dz = -(x3 - c[2]) / w**2 * f
        # curl(a1 f, a2 f, 0) = (-a2 d3 f, a1 d3 f, a2 d1 f - a1 d2 f)
        omega[0] += -a2 * dz
        omega[1] += a1 * dz
        omega[2] += (-a2 * (x1 - c[0]) + a1 * (x2 - c[1])) / (s * s) * f
    omega[2] = project_slices_zero_mean(omega[2], grid.transverse,
                                        np.exp(-(x1**2 + x2**2) / 4.0))
    scale = _x2_norm(omega, grid.transverse, m)
    return omega * (amplitude / scale)


def profile_from_spec(spec: str, axis: Axis, scale: float = 1.0):
    """``builtin:<name>``, ``zero`` or a CSV path with columns x3,phi."""
    from .axial_dynamics import AxialProfile, builtin_profile

    if spec in ("zero", "builtin:zero"):
        return AxialProfile(axis, np.zeros(axis.N))
    if spec.startswith("builtin:"):
        try:
            p = builtin_profile(spec.split(":", 1)[1], axis)
        except ValueError as exc:
            raise UsageError(str(exc)) from None
        return AxialProfile(axis, scale * p.values)
    x, v = read_profile_csv(Path(spec))
    if len(x) != axis.N or not np.allclose(x, axis.x, atol=1e-9 * axis.L):
        from scipy.interpolate import CubicSpline

        v = CubicSpline(x, v)(np.clip(axis.x, x[0], x[-1]))
    return AxialProfile(axis, scale * np.asarray(v))


def read_profile_csv(path: Path) -> tuple[np.ndarray, np.ndarray]:
    try:
        data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    except (OSError, ValueError) as exc:
        raise InputError(f"cannot read profile {path}: {exc}") from None
    if data.shape[1] < 2 or data.shape[0] < 4:
        raise InputError(f"profile {path} needs columns x3,phi and at least 4 rows")
    x, v = data[:, 0], data[:, 1]
    if not (np.all(np.isfinite(data[:, :2])) and np.all(np.diff(x) > 0)):
        raise InputError(f"profile {path} must be finite with increasing x3")
    return x, v


def axis_from_samples(x: np.ndarray) -> Axis:
    h = float(np.mean(np.diff(x)))
    L = 0.5 * (x[-1] - x[0] + h)
    axis = Axis(L, len(x))
    if not np.allclose(axis.x, x, atol=1e-6 * h):
        raise InputError("profile samples must lie on a symmetric cell-centered grid")
    return axis


def build_stability(cfg: dict, tier: str, base_dir: Path | None = None):
    """Validate a stability config; returns (EvolutionConfig, phi0, omega0, seed, echo)."""
    from .perturbation_dynamics import (
        EvolutionConfig,
        bump_perturbation,
        decompose_initial,
        make_family,
    )
    from .axial_dynamics import AxialProfile

    unknown = sorted(set(cfg) - CONFIG_KEYS)
    if unknown:
        raise UsageError(f"unknown config fields {unknown}")
    tier = _field(cfg, "tier", str, tier)
    if tier not in TIERS:
        raise UsageError(f"config field 'tier' must be one of {sorted(TIERS)}")
    N, N3, dt_tier = TIERS[tier]
    g = cfg.get("grid", {}) or {}
    if not isinstance(g, dict):
        raise UsageError("config field 'grid' must be an object {N, L, N3, L3}")
    try:
        grid = Grid3D(Grid2D(float(g.get("L", 12.0)), int(g.get("N", N))),
                      float(g.get("L3", 8.0)), int(g.get("N3", N3)))
    except (TypeError, ValueError) as exc:
        raise UsageError(f"config field 'grid': {exc}") from None
    lam = _field(cfg, "lambda", float, required=True)
    rho = _field(cfg, "rho", float, required=True)
    m = _field(cfg, "m", float, 2.0)
    dt = _field(cfg, "dt", float, dt_tier)
    T = _field(cfg, "T", float, required=True)
    seed = _field(cfg, "seed", int, 0)
    meas = cfg.get("measure", {}) or {}
    if not isinstance(meas, dict):
        raise UsageError("config field 'measure' must be an object")
    interval = meas.get("interval")
    if interval is not None:
        if not (isinstance(interval, list) and len(interval) == 2):
            raise UsageError("config field 'measure.interval' must be [lo, hi]")
        interval = (float(interval[0]), float(interval[1]))
    slices = tuple(float(s) for s in meas.get("slices", (-4.0, -2.0, 0.0, 2.0, 4.0)))
    try:
        ec = EvolutionConfig(lam=lam, rho=rho, grid=grid, dt=dt, T=T, m=m, interval=interval,
                             sample_every=int(meas.get("sample_every", 10)),
                             checkpoint_every=_field(cfg, "checkpoint_every", int, 0),
                             slices=slices)
    except ValueError as exc:
        raise UsageError(f"config: {exc}") from None

    init = cfg.get("initial", {}) or {}
    if not isinstance(init, dict):
        raise UsageError("config field 'initial' must be an object")
    kind = init.get("type", "builtin")
    amp = float(init.get("amplitude", 0.01))
    phi_spec = init.get("phi", "zero")
    if isinstance(phi_spec, str) and not phi_spec.startswith("builtin:") and phi_spec != "zero" \
            and base_dir is not None and not Path(phi_spec).is_absolute():
        phi_spec = str(base_dir / phi_spec)
    if kind == "builtin":
        phi0 = profile_from_spec(phi_spec, grid.axial, float(init.get("phi_scale", 1.0)))
        shape = init.get("omega", "bump")
        if shape == "bump":
            omega0 = bump_perturbation(grid, amp, m)
        elif shape == "zero":
            omega0 = np.zeros((3,) + grid.shape)
        else:
            raise UsageError("config field 'initial.omega' must be 'bump' or 'zero'")
    elif kind == "random":
        phi0 = profile_from_spec(phi_spec, grid.axial, float(init.get("phi_scale", 1.0)))
        omega0 = random_perturbation(grid, amp, seed, int(init.get("count", 3)), m)
    elif kind == "file":
        if "path" not in init:
            raise UsageError("config field 'initial.path' is required for type 'file'")
        path = Path(init["path"])
        if base_dir is not None and not path.is_absolute():
            path = base_dir / path
        Omega0 = load_field(path)
        if Omega0.shape != (3,) + grid.shape:
            raise InputError(f"{path}: shape {Omega0.shape} does not match the grid {(3,) + grid.shape}")
        from .axial_dynamics import profile_from_vorticity
        from .weighted_fields import SlicedField3D

        prof = profile_from_vorticity(SlicedField3D(grid, Omega0[2]))
        trial = AxialProfile(grid.axial, prof.values - rho)
        fam = make_family(lam, rho, trial, grid.transverse)
        phi0, omega0 = decompose_initial(Omega0, fam, rho, grid)
    else:
        raise UsageError("config field 'initial.type' must be builtin, random or file")
    echo = dict(cfg, tier=tier)
    return ec, phi0, omega0, seed, echo


def load_field(path: Path) -> np.ndarray:
    try:
        values, _ = read_snapshot(path)
    except FileNotFoundError:
        raise InputError(f"field file {path} not found") from None
    except (ValueError, OSError) as exc:
        raise InputError(f"cannot load field file {path}: {exc}") from None
    return values


SCENARIOS = {
    "sym-shift": {"lambda": 0.0, "rho": 0.1, "T": 10.0,
                  "initial": {"type": "builtin", "phi": "builtin:gauss-bump",
                              "omega": "bump", "amplitude": 0.01}},
    "equilibrium": {"lambda": 0.0, "rho": 0.1, "T": 1.0,
                    "initial": {"type": "builtin", "phi": "zero", "omega": "zero"}},
    "bump": {"lambda": 0.0, "rho": 0.1, "T": 10.0,
             "initial": {"type": "builtin", "phi": "zero", "omega": "bump", "amplitude": 0.01}},
}


def cmd_stability(args) -> int:
    from .perturbation_dynamics import EvolutionError, run_evolution, write_outputs

    if args.config:
        raw = load_config(args.config)
        base = Path(args.config).resolve().parent
    elif args.scenario:
        raw = json.loads(json.dumps(SCENARIOS[args.scenario]))
        base = None
    else:
        raise UsageError("stability run needs --config FILE or --scenario NAME")
    if args.T is not None:
        raw["T"] = args.T
    if args.dt is not None:
        raw["dt"] = args.dt
    ec, phi0, omega0, seed, echo = build_stability(raw, args.tier, base)
    cfg = RunConfig("stability run", echo, echo["tier"], seed, args.out)
    run_dir = run_directory(cfg)
    started = time.perf_counter()

    def progress(state, diags):
        if args.progress:
            r = diags.rows[-1]
            print(" ".join(f"{c}={fmt(v)}" for c, v in zip(diags.columns, r)
                           if c in ("t", "omega_norm", "distance")), file=sys.stderr, flush=True)

    try:
        result = run_evolution(ec, phi0, omega0, out_dir=run_dir, progress=progress)
    except EvolutionError as exc:
        emit(args, [("status", "failed"), ("error", str(exc))], {"error": str(exc)})
        return EXIT_SOLVER
    outputs = write_outputs(result, run_dir)
    outputs += sorted(run_dir.glob("omega_step*.bvsnap"))
    flags = result.summary["pass_flags"]
    finish_run(cfg, run_dir, started, {"grid": ec.grid}, flags, outputs)
    s = result.summary
    emit(args, [("run directory", run_dir), ("delta_rho_formula", s["delta_rho_formula"]),
                ("delta_rho_measured", s["delta_rho_measured"]),
                ("fitted_decay_exponent", s["fitted_decay_exponent"]),
                ("pass_flags", json.dumps(flags, sort_keys=True))],
         {"run_dir": str(run_dir), **s})
    return EXIT_OK if all(flags.values()) else EXIT_FAILED


# ------------------------------------------------------------------------- phi

def _profile_arg(args):
    if args.profile.startswith("builtin:"):
        axis = Axis(args.L, args.N)
        return profile_from_spec(args.profile, axis)
    x, v = read_profile_csv(Path(args.profile))
    from .axial_dynamics import AxialProfile

    return AxialProfile(axis_from_samples(x), v)


def cmd_phi(args) -> int:
    from .axial_dynamics import check_bounds, phi_evolve_exact, phi_evolve_fd, shift_delta_rho

    phi0 = _profile_arg(args)
    if args.action == "shift":
        with warnings.catch_warnings(record=True) as caught:
            warnings.simplefilter("always")
            dr = shift_delta_rho(phi0)
        emit(args, [("delta_rho", dr)] + [("warning", str(w.message)) for w in caught],
             {"delta_rho": dr, "warnings": [str(w.message) for w in caught]})
        return EXIT_OK
    if args.t < 0:
        raise UsageError("--t must be non-negative")
    cfg = RunConfig("phi evolve", {"profile": args.profile, "t": args.t, "N": phi0.axis.N,
                                   "L": phi0.axis.L, "scheme": args.scheme}, "n/a", 0, args.out)
    started = time.perf_counter()
    exact = phi_evolve_exact(phi0, args.t)
    try:
        fd = phi_evolve_fd(phi0, args.t, scheme=args.scheme)
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    diff = np.abs(exact.values - fd.values)
    run_dir = run_directory(cfg)
    out = write_csv(run_dir / "phi.csv", ["x3", "phi_exact", "phi_fd", "abs_diff"],
                    zip(phi0.axis.x.tolist(), exact.values.tolist(), fd.values.tolist(),
                        diff.tolist()))
    be, bf = check_bounds(phi0, exact, args.t), check_bounds(phi0, fd, args.t)
    flags = {"bounds_exact": be.all_ok, "bounds_fd": bf.all_ok}
    finish_run(cfg, run_dir, started, {"axis": Grid2D(phi0.axis.L, phi0.axis.N)}, flags, [out])
    sup = float(diff.max())
    emit(args, [("run directory", run_dir), ("sup |exact - fd|", sup),
                ("bounds (exact)", be.all_ok), ("bounds (fd)", bf.all_ok)],
         {"run_dir": str(run_dir), "sup_diff": sup, **flags})
    return EXIT_OK if all(flags.values()) else EXIT_FAILED


# ------------------------------------------------------- semigroup, Biot-Savart

def cmd_semigroup(args) -> int:
    from .semigroup_kernels import spectrum_check

    cfg = RunConfig("semigroup check", {"alphas": args.alphas}, "n/a", 0, args.out)
    started = time.perf_counter()
    rows, ok = [], True
    for alpha in args.alphas:
        if alpha <= 0:
            raise UsageError("alpha must be positive")
        for n in (0, 1, 2, 3):
            rate = spectrum_check(alpha, n)
            expected = 0.5 * n * alpha
            err = abs(rate) if n == 0 else abs(rate / expected - 1.0)
            ok &= err <= (1e-3 if n == 0 else 0.02)
            rows.append([n, float(alpha), rate, expected, err])
    run_dir = run_directory(cfg)
    out = write_csv(run_dir / "spectrum.csv",
                    ["n", "alpha", "fitted_rate", "expected_rate", "rel_error"], rows)
    finish_run(cfg, run_dir, started, {}, {"spectrum": bool(ok)}, [out])
    emit(args, [("run directory", run_dir)] + [(f"n={r[0]} alpha={fmt(r[1])}", r[2]) for r in rows],
         {"run_dir": str(run_dir), "passed": bool(ok),
          "rows": [dict(zip(["n", "alpha", "fitted_rate", "expected_rate", "rel_error"], r))
                   for r in rows]})
    return EXIT_OK if ok else EXIT_FAILED


def cmd_biot_savart(args) -> int:
    from .biot_savart import gaussian_vortex_speed

    grid = transverse_grid(args)
    cfg = RunConfig("biot-savart check", {"grid": [grid.N, grid.L]}, args.tier, 0, args.out)
    started = time.perf_counter()
    r, num, ana = gaussian_vortex_speed(grid)
    rel = np.abs(num / ana - 1.0)
    run_dir = run_directory(cfg)
    out = write_csv(run_dir / "profile.csv", ["r", "numeric", "analytic", "rel_error"],
                    zip(r.tolist(), num.tolist(), ana.tolist(), rel.tolist()))
    ok = bool(rel.max() <= 1e-3)
    finish_run(cfg, run_dir, started, {"transverse": grid}, {"profile": ok}, [out])
    emit(args, [("run directory", run_dir), ("max rel error", float(rel.max()))],
         {"run_dir": str(run_dir), "max_rel_error": float(rel.max()), "passed": ok})
    return EXIT_OK if ok else EXIT_FAILED


# ---------------------------------------------------------------------- verify

def cmd_verify(args) -> int:
    from .checks import CHECKS, CheckResult, run_checks

    names = []
    for item in args.only or []:
        names += [n for n in item.split(",") if n]
    unknown = [n for n in names if n not in CHECKS]
    if unknown:
        raise UsageError(f"unknown checks {unknown}; available: {', '.join(CHECKS)}")
    pre = []
    if args.field:
        # load before any compute: a bad file aborts with no partial results
        values = load_field(Path(args.field))
        finite = bool(np.all(np.isfinite(values)))
        pre.append(CheckResult("field-load", finite, float(finite), 1.0,
                               {"shape": list(values.shape)}))
    results = pre + run_checks(names or None, args.tier)
    failed = [r.name for r in results if not r.passed]
    if args.json:
        print(json.dumps({"tier": args.tier, "failed": failed,
                          "checks": [asdict(r) for r in results]}, sort_keys=True, default=float))
    else:
        w = max(len(r.name) for r in results)
        for r in results:
            print(f"{r.name:<{w}}  {'PASS' if r.passed else 'FAIL'}  "
                  f"value={fmt(r.value)}  threshold={fmt(r.threshold)}")
        if failed:
            print("failed: " + ", ".join(failed))
    return EXIT_OK if not failed else EXIT_FAILED


# ---------------------------------------------------------------------- parser

def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="burgers-vortex",
                                description="Burgers vortex construction and stability experiments.")
    p.add_argument("--json", action="store_true", help="machine-readable output")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = p.add_subparsers(dest="group", required=True)

    def common(sp, grid=True):
        sp.add_argument("--tier", choices=sorted(TIERS), default="standard")
        sp.add_argument("--out", help="run directory (default: under $%s)" % OUTPUT_ROOT_ENV)
        if grid:
            sp.add_argument("--grid", type=parse_grid, help="transverse grid N:L")

    v = sub.add_parser("vortex", help="construct Burgers vortices")
    vs = v.add_subparsers(dest="action", required=True)
    solve = vs.add_parser("solve", help="solve the fixed-point problem at one (lambda, rho)")
    solve.add_argument("--lambda", dest="lam", type=float, required=True)
    solve.add_argument("--rho", type=float, required=True)
    solve.add_argument("--no-derivatives", action="store_true", help="skip rho-derivatives")
    sweep = vs.add_parser("sweep", help="solve on a (lambda, rho) grid, write sweep.csv")
    sweep.add_argument("--lambdas", type=parse_floats, required=True, help="e.g. 0,0.25,0.5")
    sweep.add_argument("--rhos", type=parse_floats, required=True, help="e.g. 0.1,0.2,0.4")
    for sp in (solve, sweep):
        sp.add_argument("--m", type=float, default=2.0)
        sp.add_argument("--tol", type=float, default=1e-9)
        sp.add_argument("--max-iter", type=int, default=200)
        common(sp)

    s = sub.add_parser("stability", help="evolve perturbations of a vortex")
    ss = s.add_subparsers(dest="action", required=True)
    run = ss.add_parser("run", help="run an evolution from a config or builtin scenario")
    src = run.add_mutually_exclusive_group(required=True)
    src.add_argument("--config", type=Path, help="JSON config file")
    src.add_argument("--scenario", choices=sorted(SCENARIOS))
    run.add_argument("--T", type=float, help="override the final time")
    run.add_argument("--dt", type=float, help="override the time step")
    run.add_argument("--progress", action="store_true", help="print samples to stderr")
    common(run, grid=False)

    ph = sub.add_parser("phi", help="axial mode evolution")
    phs = ph.add_subparsers(dest="action", required=True)
    ev = phs.add_parser("evolve", help="closed form against the finite-difference oracle")
    ev.add_argument("--t", type=float, required=True)
    ev.add_argument("--scheme", choices=("centered", "upwind"), default="centered")
    ev.add_argument("--out")
    sh = phs.add_parser("shift", help="print the circulation shift")
    for sp in (ev, sh):
        sp.add_argument("--profile", required=True, help="builtin:<name> or CSV with x3,phi")
        sp.add_argument("--N", type=int, default=1024, help="nodes for builtin profiles")
        sp.add_argument("--L", type=float, default=8.0, help="half-width for builtin profiles")

    sg = sub.add_parser("semigroup", help="semigroup checks")
    sgs = sg.add_subparsers(dest="action", required=True)
    chk = sgs.add_parser("check", help="fitted decay rates of Hermite modes")
    chk.add_argument("--alphas", type=parse_floats, default=[1.0])
    chk.add_argument("--out")

    bs = sub.add_parser("biot-savart", help="Biot-Savart checks")
    bss = bs.add_subparsers(dest="action", required=True)
    common(bss.add_parser("check", help="azimuthal speed of the Gaussian vortex"))

    ver = sub.add_parser("verify", help="run the invariant battery")
    ver.add_argument("--only", action="append", help="check names (repeat or comma-separate)")
    ver.add_argument("--tier", choices=sorted(TIERS), default="standard")
    ver.add_argument("--field", help="also validate a snapshot file")
    return p


HANDLERS = {
    "vortex": cmd_vortex,
    "stability": cmd_stability,
    "phi": cmd_phi,
    "semigroup": cmd_semigroup,
    "biot-savart": cmd_biot_savart,
    "verify": cmd_verify,
}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return HANDLERS[args.group](args)
    except UsageError as exc:
        parser.print_usage(sys.stderr)
        print(f"{parser.prog}: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except InputError as exc:
        print(f"{parser.prog}: error: {exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
