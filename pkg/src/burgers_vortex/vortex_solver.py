"""Stationary vortices in an asymmetric strain by Picard iteration.

The vortex is written Omega^B = rho G_lambda + omega with omega mean-free, and
omega is the fixed point of

    omega -> (L_perp + lambda M)^{-1} div((rho V_lambda + u[omega]) (rho G_lambda + omega)),

where V_lambda and u[omega] are the 2D Biot-Savart velocities of G_lambda and
omega. The inverse is applied with the Laplace-formula resolvent in divergence
form, so the derivative always sits on the semigroup kernel.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
from numpy.polynomial import chebyshev as cheb

from .biot_savart import Velocity2D, bs2d_operator
from .semigroup_kernels import AlphaPair, resolvent_kernels
from .weighted_fields import (
    Field2D,
    Grid2D,
    diff4,
    laplacian4,
    norm_L2m,
    transverse_integral,
)


class VortexSolverError(RuntimeError):
    """Picard iteration failed; ``trace`` holds the update norms."""

    def __init__(self, message: str, trace=()):
        super().__init__(message)
        self.trace = tuple(trace)


@dataclass(frozen=True)
class VortexParams:
    lam: float
    rho: float
    m: float = 2.0

    def __post_init__(self):
        if not (0.0 <= self.lam < 1.0):
            raise ValueError(f"lambda must lie in [0, 1), got {self.lam}")
        if not np.isfinite(self.rho):
            raise ValueError("rho must be finite")
        if not (self.m > 1.5):
            raise ValueError(f"m must exceed 3/2, got {self.m}")

    @property
    def alpha(self) -> AlphaPair:
        return AlphaPair.from_lambda(self.lam)


@dataclass(frozen=True)
class GaussianProfile:
    """G_lambda = sqrt(1 - lam^2)/(4 pi) exp(-((1+lam) x1^2 + (1-lam) x2^2)/4)."""

    lam: float

    def __post_init__(self):
        if not (0.0 <= self.lam < 1.0):
            raise ValueError(f"lambda must lie in [0, 1), got {self.lam}")

    def __call__(self, x1, x2):
        a1, a2 = 1.0 + self.lam, 1.0 - self.lam
        c = np.sqrt(a1 * a2) / (4.0 * np.pi)
        return c * np.exp(-(a1 * np.asarray(x1) ** 2 + a2 * np.asarray(x2) ** 2) / 4.0)

    def d1(self, x1, x2):
        return -0.5 * (1.0 + self.lam) * np.asarray(x1) * self(x1, x2)

    def d2(self, x1, x2):
        return -0.5 * (1.0 - self.lam) * np.asarray(x2) * self(x1, x2)

    def field(self, grid: Grid2D) -> Field2D:
        x1, x2 = grid.mesh()
        return Field2D(grid, self(x1, x2))


def gaussian_profile(lam: float) -> GaussianProfile:
    return GaussianProfile(float(lam))


# ------------------------------------------------------------- fixed-point map

class _Operators:
    """Everything the map needs for one (grid, lambda)."""

    def __init__(self, grid: Grid2D, lam: float):
        self.grid = grid
        self.ap = AlphaPair.from_lambda(lam)
        self.G = gaussian_profile(lam).field(grid).values
        self.bs = bs2d_operator(grid)
        self.V1, self.V2 = self.bs.velocity(self.G)
        self.res = resolvent_kernels(grid, self.ap)
        self.gmass = float(self.G.sum() * grid.h**2)

    def project(self, values: np.ndarray) -> np.ndarray:
        mass = values.sum() * self.grid.h**2
        return values - (mass / self.gmass) * self.G

    def apply(self, rho: float, w: np.ndarray) -> np.ndarray:
        u1, u2 = self.bs.velocity(w)
        W = rho * self.G + w
        out = self.res.div((rho * self.V1 + u1) * W, (rho * self.V2 + u2) * W)
        # the kernel-side derivative leaves a quadrature-level mass; drop it
        # along G_lambda, which spans the kernel of the generator
        return self.project(out)


@lru_cache(maxsize=8)
def _operators(grid: Grid2D, lam: float) -> _Operators:
    return _Operators(grid, lam)


def default_grid() -> Grid2D:
    return Grid2D(12.0, 128)


def fixed_point_map(params: VortexParams, omega: Field2D) -> Field2D:
    """One Picard step; omega must be mean-free."""
    grid = omega.grid
    mass = transverse_integral(omega)
    scale = np.abs(omega.values).sum() * grid.h**2
    if abs(mass) > 1e-8 * max(scale, 1e-300) and abs(mass) > 1e-14:
        raise ValueError(f"omega is not mean-free (integral {mass:.3e})")
    ops = _operators(grid, float(params.lam))
    return Field2D(grid, ops.apply(float(params.rho), omega.values))


# ---------------------------------------------------------------------- solver

@dataclass(frozen=True, eq=False)
class VortexSolution:
    params: VortexParams
    omega_core: Field2D
    Omega_B: Field2D
    U_B: Velocity2D
    dOmega_drho: Field2D | None
    d2Omega_drho2: Field2D | None
    residual: float
    iterations: int
    contraction_estimate: float
    update_norms: tuple = field(default=())
    update_ratios: tuple = field(default=())

    @property
    def grid(self) -> Grid2D:
        return self.Omega_B.grid

    @property
    def correction_norm(self) -> float:
        """||Omega_B - rho G_lambda||_{L^2(m)}."""
        return norm_L2m(self.omega_core, self.params.m)

    @property
    def certified(self) -> bool:
        return self.contraction_estimate < 1.0


def fp1_residual(lam: float, Omega: np.ndarray, U1: np.ndarray, U2: np.ndarray,
                 grid: Grid2D) -> np.ndarray:
    """(L_perp + lam M) Omega - U . grad Omega with fourth-order differences."""
    x1, x2 = grid.mesh()
    h = grid.h
    d1 = diff4(Omega, 0, h)
    d2 = diff4(Omega, 1, h)
    gen = (laplacian4(Omega, h) + 0.5 * (1.0 + lam) * x1 * d1
           + 0.5 * (1.0 - lam) * x2 * d2 + Omega)
    return gen - (U1 * d1 + U2 * d2)


def _iterate(ops: _Operators, params: VortexParams, tol: float, max_iter: int):
    grid, m = ops.grid, params.m
    rho = float(params.rho)
    w = np.zeros(grid.shape)
    wgt = grid.weight(m)
    h = grid.h
    norm = lambda v: float(np.sqrt(np.sum((wgt * v) ** 2)) * h)  # noqa: E731
    updates: list[float] = []
    for k in range(1, max_iter + 1):
        new = ops.apply(rho, w)
        if not np.all(np.isfinite(new)):
            raise VortexSolverError("non-finite iterate", updates)
        d = norm(new - w)
        updates.append(d)
        w = new
        scale = norm(rho * ops.G + w)
        if d <= tol * scale:
            return w, k, updates
        if len(updates) >= 4 and all(updates[-i] > updates[-i - 1] for i in (1, 2, 3)):
            raise VortexSolverError(
                f"Picard iteration diverges at lambda={params.lam}, rho={rho}", updates)
    raise VortexSolverError(f"no convergence in {max_iter} iterations", updates)


def _ratios(updates) -> list[float]:
    # ratios of successive update norms, starting with the second iterate
    return [b / a for a, b in zip(updates[:-1], updates[1:]) if a > 0]


def check_domain(ops: "_Operators", lam: float, limit: float = 1e-6) -> None:
    """Refuse boxes that cut off more than ``limit`` of the unit mass of G_lambda."""
    lost = abs(1.0 - ops.gmass)
    if lost > limit:
        raise VortexSolverError(
            f"transverse box too small for lambda={lam}: G_lambda loses {lost:.2e} of its mass")


def solve_vortex(params: VortexParams, grid: Grid2D | None = None, tol: float = 1e-9,
                 max_iter: int = 200, derivatives: bool = True,
                 h_rho: float | None = None) -> VortexSolution:
    """Picard iteration from omega = 0 until the relative L^2(m) update is below tol.

    The update is measured relative to ||Omega_B||_{L^2(m)}, which stays
    meaningful in the symmetric case where omega vanishes.
    """
    if not (tol > 0):
        raise ValueError("tol must be positive")
    grid = grid or default_grid()
    ops = _operators(grid, float(params.lam))
    check_domain(ops, params.lam)
    rho = float(params.rho)
    if rho == 0.0:
        w, its, updates = np.zeros(grid.shape), 0, []
    else:
        w, its, updates = _iterate(ops, params, tol, max_iter)
    ratios = _ratios(updates)
    contraction = float(max(ratios)) if ratios else 0.0
    if contraction >= 1.0:
        warnings.warn(f"update ratio {contraction:.3f} >= 1: outside the certified "
                      f"contraction regime (lambda={params.lam}, rho={rho})", RuntimeWarning)
    Omega = rho * ops.G + w
    u1, u2 = ops.bs.velocity(w)
    U1, U2 = rho * ops.V1 + u1, rho * ops.V2 + u2
    res = fp1_residual(params.lam, Omega, U1, U2, grid)
    residual = norm_L2m(Field2D(grid, res), params.m)
    d1 = d2 = None
    if derivatives:
        d1, d2 = rho_derivatives(params, grid, h_rho=h_rho)
    return VortexSolution(
        params=params,
        omega_core=Field2D(grid, w),
        Omega_B=Field2D(grid, Omega),
        U_B=Velocity2D(grid, U1, U2),
        dOmega_drho=d1,
        d2Omega_drho2=d2,
        residual=float(residual),
        iterations=int(its),
        contraction_estimate=contraction,
        update_norms=tuple(updates),
        update_ratios=tuple(ratios),
    )


def _omega_b(grid: Grid2D, lam: float, rho: float, tol: float, m: float = 2.0) -> np.ndarray:
    ops = _operators(grid, float(lam))
    check_domain(ops, lam)
    if rho == 0.0:
        return np.zeros(grid.shape)
    w, _, _ = _iterate(ops, VortexParams(lam, rho, m), tol, 500)
    return rho * ops.G + w


def rho_derivatives(params: VortexParams, grid: Grid2D | None = None,
                    h_rho: float | None = None,
                    tol: float = 1e-12) -> tuple[Field2D, Field2D]:
    """Centered differences of Omega_B in rho at fixed lambda.

    Default step h_rho = max(1e-3, 1e-2 |rho|). The inner solves use a
    tolerance well below h_rho^2 so the second difference is not swamped by
    iteration error.
    """
    grid = grid or default_grid()
    rho, lam = float(params.rho), float(params.lam)
    if h_rho is None:
        h_rho = max(1e-3, 1e-2 * abs(rho))
    if not (h_rho > 0):
        raise ValueError("h_rho must be positive")
    tol_in = min(tol, 1e-12)
    try:
        plus = _omega_b(grid, lam, rho + h_rho, tol_in, params.m)
        minus = _omega_b(grid, lam, rho - h_rho, tol_in, params.m)
    except VortexSolverError as exc:
        raise ValueError(f"rho +- h_rho leaves the convergent range: {exc}") from exc
    mid = _omega_b(grid, lam, rho, tol_in, params.m)
    d1 = (plus - minus) / (2.0 * h_rho)
    d2 = (plus - 2.0 * mid + minus) / (h_rho * h_rho)
    return Field2D(grid, d1), Field2D(grid, d2)


# --------------------------------------------------------------------- family

class VortexFamily:
    """Omega_B(rho') and U_B(rho') for rho' in [center - halfwidth, center + halfwidth].

    The vortex is solved at Chebyshev points in rho and interpolated by the
    polynomial through them; rho-derivatives are derivatives of that
    polynomial. Every query is a small matrix product over the node stack.
    """

    def __init__(self, lam: float, center: float, halfwidth: float,
                 grid: Grid2D | None = None, nodes: int = 7, tol: float = 1e-12,
                 m: float = 2.0):
        if not (halfwidth > 0):
            raise ValueError("halfwidth must be positive")
        self.grid = grid or default_grid()
        self.lam, self.center, self.halfwidth = float(lam), float(center), float(halfwidth)
        self.nodes_s = np.cos(np.pi * (np.arange(nodes) + 0.5) / nodes)[::-1]
        self.rho_nodes = self.center + self.halfwidth * self.nodes_s
        ops = _operators(self.grid, self.lam)
        stack = [_omega_b(self.grid, self.lam, float(r), tol, m) for r in self.rho_nodes]
        self.Omega = np.stack(stack)
        vel = [ops.bs.velocity(o) for o in stack]
        self.U1 = np.stack([v[0] for v in vel])
        self.U2 = np.stack([v[1] for v in vel])
        # coefficient map: nodal values -> Chebyshev coefficients
        self._to_coef = np.linalg.inv(cheb.chebvander(self.nodes_s, nodes - 1))
        self.G = ops.G

    @property
    def rho_range(self) -> tuple[float, float]:
        return self.center - self.halfwidth, self.center + self.halfwidth

    def weights(self, rho, order: int = 0) -> np.ndarray:
        """Interpolation weights (len(rho), nodes) for the given rho-derivative order."""
        rho = np.atleast_1d(np.asarray(rho, dtype=float))
        s = (rho - self.center) / self.halfwidth
        if np.any(np.abs(s) > 1.0 + 1e-12):
            raise ValueError(f"rho outside the family range {self.rho_range}")
        n = len(self.nodes_s)
        V = cheb.chebvander(s, n - 1)
        if order:
            D = cheb.chebder(np.eye(n), m=order, axis=0)
            D = np.vstack([D, np.zeros((order, n))])
            V = V @ D / self.halfwidth**order
        return V @ self._to_coef

    def _eval(self, stack: np.ndarray, rho, order: int = 0) -> np.ndarray:
        W = self.weights(rho, order)
        n = stack.shape[0]
        return (W @ stack.reshape(n, -1)).reshape((W.shape[0],) + stack.shape[1:])

    def omega(self, rho, order: int = 0) -> np.ndarray:
        return self._eval(self.Omega, rho, order)

    def velocity(self, rho) -> tuple[np.ndarray, np.ndarray]:
        return self._eval(self.U1, rho), self._eval(self.U2, rho)
