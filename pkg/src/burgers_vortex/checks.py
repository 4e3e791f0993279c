"""Invariant battery shared by the ``verify`` command, the tests and the gallery.

Every check returns a CheckResult with the measured value and the threshold it
was compared against.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .axial_dynamics import (
    AxialProfile,
    builtin_profile,
    check_bounds,
    phi_evolve_exact,
    phi_evolve_fd,
    phi_exact_at,
    shift_delta_rho,
    sup_estimates,
)
from .biot_savart import bs2d_operator, bs3d_operator, gaussian_vortex_speed
from .semigroup_kernels import AlphaPair, mean_free_decay_ratios, sg2d_values, spectrum_check
from .vortex_solver import VortexFamily, VortexParams, gaussian_profile, solve_vortex
from .weighted_fields import Axis, Grid2D, Grid3D, slice_integrals

TIERS = {
    "coarse": (64, 32, 0.02),
    "standard": (128, 64, 0.01),
    "fine": (256, 128, 0.005),
}


def tier_grid(tier: str, L: float = 12.0, L3: float = 8.0) -> Grid3D:
    if tier not in TIERS:
        raise ValueError(f"unknown tier {tier!r}; choose from {sorted(TIERS)}")
    N, N3, _ = TIERS[tier]
    return Grid3D(Grid2D(L, N), L3, N3)


@dataclass
class CheckResult:
    name: str
    passed: bool
    value: float
    threshold: float
    detail: dict = field(default_factory=dict)


# ------------------------------------------------------------------ semigroups

def check_spectrum() -> CheckResult:
    rates = {n: spectrum_check(1.0, n) for n in (0, 1, 2, 3)}
    expected = {n: 0.5 * n for n in rates}
    err = {n: abs(rates[n]) if n == 0 else abs(rates[n] / expected[n] - 1.0) for n in rates}
    ok = err[0] <= 1e-3 and all(err[n] <= 0.02 for n in (1, 2, 3))
    return CheckResult("spectrum", ok, max(err.values()), 0.02,
                       {"rates": [rates[n] for n in sorted(rates)]})


def random_fields(grid: Grid2D, count: int, seed: int, mean_free: bool = True,
                  lam: float = 0.0) -> np.ndarray:
    """Smooth random fields: sums of Gaussian blobs with random centers and widths."""
    rng = np.random.default_rng(seed)
    x1, x2 = grid.mesh()
    G = gaussian_profile(lam).field(grid).values
    out = np.zeros((count,) + grid.shape)
    for k in range(count):
        for _ in range(4):
            c = rng.uniform(-2.5, 2.5, size=2)
            s = rng.uniform(0.6, 1.5)
            a = rng.normal()
            out[k] += a * np.exp(-((x1 - c[0]) ** 2 + (x2 - c[1]) ** 2) / (2 * s * s))
        if mean_free:
            mass = out[k].sum() * grid.h**2
            out[k] -= mass / (G.sum() * grid.h**2) * G
    return out


def check_mass_and_decay(grid: Grid2D, count: int = 50, seed: int = 7,
                         m: float = 2.0) -> CheckResult:
    times = (0.5, 1.0, 2.0, 4.0)
    worst_mass = 0.0
    C = 0.0
    detail = {}
    for lam in (0.0, 0.5):
        ap = AlphaPair.from_lambda(lam)
        f = random_fields(grid, count, seed, mean_free=True, lam=lam)
        g = random_fields(grid, count, seed + 1, mean_free=False, lam=lam)
        mass_g = slice_integrals(g, grid)
        scale_f = np.abs(f).sum(axis=(1, 2)) * grid.h**2
        for t in times:
            Sg = slice_integrals(sg2d_values(grid, ap, t, g), grid)
            Sf = slice_integrals(sg2d_values(grid, ap, t, f), grid)
            worst_mass = max(worst_mass, float(np.max(np.abs(Sg - mass_g) / np.abs(mass_g))),
                             float(np.max(np.abs(Sf) / scale_f)))
        ratios = mean_free_decay_ratios(grid, ap, f, times, m)
        growth = np.exp(0.5 * (1.0 - lam) * np.asarray(times))[:, None]
        consts = [float(c) for c in np.max(ratios * growth, axis=1)]
        detail[f"C_lambda_{lam}"] = consts
        C = max(C, max(consts))
    ok = worst_mass <= 1e-10 and C < 10.0
    return CheckResult("mass-decay", ok, worst_mass, 1e-10, {"C": C, **detail})


# ------------------------------------------------------------------ Biot-Savart

def check_bs2d(grid: Grid2D) -> CheckResult:
    r, num, ana = gaussian_vortex_speed(grid)
    err = float(np.max(np.abs(num / ana - 1.0)))
    return CheckResult("biot-savart-2d", err <= 1e-3, err, 1e-3)


def check_bs3d_consistency(grid: Grid3D) -> CheckResult:
    tg = grid.transverse
    G = gaussian_profile(0.0).field(tg).values
    w3 = np.broadcast_to(G, grid.shape).copy()
    u1, u2, u3 = bs3d_operator(grid).velocity(None, None, w3)
    v1, v2 = bs2d_operator(tg).velocity(G)
    x = tg.x
    inner = np.abs(x) <= (2.0 / 3.0) * tg.L
    sel = np.ix_(inner, inner)
    ref = np.hypot(v1, v2)[sel].max()
    err = max(float(np.abs(u1[k][sel] - v1[sel]).max()) for k in range(grid.N3))
    err = max(err, max(float(np.abs(u2[k][sel] - v2[sel]).max()) for k in range(grid.N3)))
    err = max(err, float(np.abs(u3).max()))
    rel = err / ref
    return CheckResult("biot-savart-3d", rel <= 1e-3, rel, 1e-3)


# ------------------------------------------------------------------------ axial

def check_phi_oracle(N: int = 1024, L: float = 8.0, t: float = 1.0) -> CheckResult:
    ax = Axis(L, N)
    p = builtin_profile("gauss-bump", ax)
    e = phi_evolve_exact(p, t)
    f = phi_evolve_fd(p, t)
    diff = float(np.abs(e.values - f.values).max())
    bounds = {}
    for name in ("gauss-bump", "sine", "constant", "linear", "square"):
        prof = builtin_profile(name, ax)
        for tt in (0.5, 1.0, 2.0):
            bounds[f"{name}@{tt}"] = check_bounds(prof, phi_evolve_exact(prof, tt), tt).all_ok
        bounds[f"{name}@fd"] = sup_estimates(prof, t, "fd").all_ok
    ok = diff <= 1e-4 and all(bounds.values())
    return CheckResult("phi-oracle", ok, diff, 1e-4,
                       {"bounds_failed": sorted(k for k, v in bounds.items() if not v)})


def check_phi_limit(L: float = 8.0, N: int = 256) -> CheckResult:
    ax = Axis(L, N)
    p = builtin_profile("gauss-bump", ax)
    dr = shift_delta_rho(p)
    pts = np.linspace(-2.0, 2.0, 41)
    ts = np.linspace(2.0, 6.0, 9)
    dev = [float(np.abs(phi_exact_at(p, t, pts)[0] - dr).max()) for t in ts]
    rate = -np.polyfit(ts, np.log(dev), 1)[0]
    return CheckResult("phi-limit", rate >= 0.95, float(rate), 0.95)


# ---------------------------------------------------------------------- vortex

def check_vortex_symmetric(grid: Grid2D) -> CheckResult:
    sol = solve_vortex(VortexParams(0.0, 0.3), grid, derivatives=False)
    c = sol.correction_norm
    return CheckResult("vortex-symmetric", c <= 1e-6, c, 1e-6,
                       {"iterations": sol.iterations, "residual": sol.residual})


def check_vortex_quadratic(grid: Grid2D, rhos=(0.1, 0.2, 0.4), lam: float = 0.5) -> CheckResult:
    ratios, contr = [], []
    for rho in rhos:
        sol = solve_vortex(VortexParams(lam, rho), grid, derivatives=False)
        ratios.append(sol.correction_norm / rho**2)
        contr.append(max(sol.update_ratios, default=0.0))
    spread = (max(ratios) - min(ratios)) / min(ratios)
    return CheckResult("vortex-quadratic", spread < 0.1, float(spread), 0.1,
                       {"ratios": ratios, "max_update_ratio": contr})


def check_contraction(grid: Grid2D, lam: float = 0.5, rhos=(0.1, 0.2, 0.4)) -> CheckResult:
    worst = 0.0
    for rho in rhos:
        sol = solve_vortex(VortexParams(lam, rho), grid, derivatives=False)
        worst = max(worst, max(sol.update_ratios, default=0.0))
    return CheckResult("contraction", worst <= 0.75, worst, 0.75)


def check_velocity_gap(grid: Grid3D, lam: float = 0.5, rho: float = 0.1,
                       eps=(0.04, 0.02, 0.01)) -> CheckResult:
    from .perturbation_dynamics import velocity_gap

    fam = VortexFamily(lam, rho, 1.25 * max(eps), grid=grid.transverse)
    gaps = [velocity_gap(fam, grid, rho, e * np.sin(grid.x3)) for e in eps]
    slope = float(np.polyfit(np.log(eps), np.log(gaps), 1)[0])
    return CheckResult("velocity-gap", abs(slope - 1.0) <= 0.1, slope, 1.0, {"gaps": gaps})


def check_equilibrium(grid: Grid3D, steps: int = 5, dt: float = 0.02) -> CheckResult:
    from .perturbation_dynamics import EvolutionConfig, run_evolution

    cfg = EvolutionConfig(lam=0.0, rho=0.1, grid=grid, dt=dt, T=steps * dt, sample_every=1)
    phi0 = AxialProfile(grid.axial, np.full(grid.N3, 0.01))
    res = run_evolution(cfg, phi0, np.zeros((3,) + grid.shape))
    drift = float(np.max(res.diagnostics.column("omega_norm")))
    return CheckResult("equilibrium", drift <= 1e-8, drift, 1e-8)


CHECKS = {
    "spectrum": lambda tier: check_spectrum(),
    "mass-decay": lambda tier: check_mass_and_decay(tier_grid(tier).transverse),
    "biot-savart-2d": lambda tier: check_bs2d(tier_grid(tier).transverse),
    "biot-savart-3d": lambda tier: check_bs3d_consistency(tier_grid(tier)),
    "phi-oracle": lambda tier: check_phi_oracle(),
    "phi-limit": lambda tier: check_phi_limit(),
    "vortex-symmetric": lambda tier: check_vortex_symmetric(tier_grid(tier).transverse),
    "vortex-quadratic": lambda tier: check_vortex_quadratic(tier_grid(tier).transverse),
    "contraction": lambda tier: check_contraction(tier_grid(tier).transverse),
    "velocity-gap": lambda tier: check_velocity_gap(tier_grid(tier)),
    "equilibrium": lambda tier: check_equilibrium(tier_grid("coarse")),
}


def run_checks(names=None, tier: str = "standard") -> list[CheckResult]:
    names = list(CHECKS) if not names else list(names)
    unknown = [n for n in names if n not in CHECKS]
    if unknown:
        raise ValueError(f"unknown checks {unknown}; available: {list(CHECKS)}")
    return [CHECKS[n](tier) for n in names]
