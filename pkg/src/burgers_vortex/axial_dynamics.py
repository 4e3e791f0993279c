"""The axial mode phi(x3, t).

phi obeys d_t phi + x3 d_3 phi = d_3^2 phi, solved by

    phi(x3, t) = (G_t * phi0)(x3 e^{-t}),   G_t Gaussian of variance 1 - e^{-2t}.

Profiles are sampled on a cell-centered axis and read through a cubic spline
that is extended by the end values (clamped) beyond the end nodes. The
convolution is done by Gauss-Legendre quadrature on every spline interval plus
exact erf tails for the constant extension, so it is accurate for any width of
the Gaussian that the panels resolve.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass
from functools import cached_property

import numpy as np
from numpy.polynomial.legendre import leggauss
from scipy.interpolate import CubicSpline
from scipy.special import ndtr

from .weighted_fields import Axis, SlicedField3D, slice_integrals


@dataclass(frozen=True, eq=False)
class AxialProfile:
    axis: Axis
    values: np.ndarray
    derivative_values: np.ndarray | None = None

    def __post_init__(self):
        v = np.array(self.values, dtype=float, copy=True)
        if v.shape != (self.axis.N,):
            raise ValueError(f"profile has shape {v.shape}, expected ({self.axis.N},)")
        if not np.all(np.isfinite(v)):
            raise ValueError("profile contains non-finite values")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)
        if self.derivative_values is not None:
            d = np.array(self.derivative_values, dtype=float, copy=True)
            if d.shape != v.shape or not np.all(np.isfinite(d)):
                raise ValueError("derivative samples must be finite and match the profile")
            d.setflags(write=False)
            object.__setattr__(self, "derivative_values", d)

    @classmethod
    def from_function(cls, axis: Axis, func, dfunc=None) -> "AxialProfile":
        x = axis.x
        return cls(axis, func(x), None if dfunc is None else dfunc(x))

    @property
    def x(self) -> np.ndarray:
        return self.axis.x

    @cached_property
    def spline(self) -> CubicSpline:
        if self.axis.N < 4:
            raise ValueError("at least 4 axial nodes are needed")
        return CubicSpline(self.axis.x, self.values)

    def __call__(self, y) -> np.ndarray:
        """Clamped evaluation at arbitrary points."""
        x = self.axis.x
        y = np.clip(np.asarray(y, dtype=float), x[0], x[-1])
        return self.spline(y)

    def derivative(self) -> np.ndarray:
        """d_3 phi at the nodes (given samples, else the spline derivative)."""
        if self.derivative_values is not None:
            return self.derivative_values
        return self.spline(self.axis.x, 1)

    def sup(self) -> float:
        return float(np.abs(self.values).max())


def _panels(axis: Axis, sigma: float, order: int = 6):
    """Gauss-Legendre nodes/weights over [x_0, x_{N-1}], refined so panels <= sigma/2."""
    x = axis.x
    sub = max(1, int(np.ceil(2.0 * axis.h / max(sigma, 1e-300))))
    sub = min(sub, 64)
    edges = np.linspace(x[0], x[-1], (len(x) - 1) * sub + 1)
    xg, wg = leggauss(order)
    half = 0.5 * np.diff(edges)
    mid = 0.5 * (edges[1:] + edges[:-1])
    nodes = (mid[:, None] + half[:, None] * xg).ravel()
    weights = (half[:, None] * wg).ravel()
    return nodes, weights


def gauss_smooth(phi: AxialProfile, centers: np.ndarray, sigma: float,
                 derivative: bool = False) -> np.ndarray:
    """(G_sigma * phi)(centers) with clamped extension; G_sigma has std sigma.

    With ``derivative`` the profile's derivative is convolved instead (zero
    beyond the end nodes).
    """
    centers = np.asarray(centers, dtype=float)
    x = phi.axis.x
    nodes, weights = _panels(phi.axis, sigma)
    f = phi.spline(nodes, 1 if derivative else 0)
    out = np.empty(centers.shape)
    flat_c, flat_o = centers.ravel(), out.reshape(-1)
    # chunk over targets to bound memory
    step = max(1, 2_000_000 // max(len(nodes), 1))
    for a in range(0, flat_c.size, step):
        c = flat_c[a:a + step]
        z = (c[:, None] - nodes[None, :]) / sigma
        g = np.exp(-0.5 * z * z) / (sigma * np.sqrt(2.0 * np.pi))
        flat_o[a:a + step] = (g * weights) @ f
    if not derivative:
        # tails: y < x_0 carries phi(x_0), y > x_{N-1} carries phi(x_{N-1})
        out += phi.values[0] * ndtr((x[0] - centers) / sigma)
        out += phi.values[-1] * ndtr((centers - x[-1]) / sigma)
    return out


def phi_exact_at(phi0: AxialProfile, t: float, points) -> tuple[np.ndarray, np.ndarray]:
    """(phi, d_3 phi) of the closed-form solution at arbitrary points, t > 0."""
    if not (t > 0):
        raise ValueError("t must be positive")
    sigma = np.sqrt(-np.expm1(-2.0 * t))
    y = np.asarray(points, dtype=float) * np.exp(-t)
    vals = gauss_smooth(phi0, y, sigma)
    dvals = np.exp(-t) * gauss_smooth(phi0, y, sigma, derivative=True)
    return vals, dvals


def phi_evolve_exact(phi0: AxialProfile, t: float) -> AxialProfile:
    """Closed-form evolution to time t on the profile's nodes (identity for t <= 0)."""
    if t <= 0:
        return phi0
    vals, dvals = phi_exact_at(phi0, t, phi0.axis.x)
    return AxialProfile(phi0.axis, vals, dvals)


def fd_time_step(axis: Axis) -> float:
    """Default step 0.4 min(h^2/2, h/L) of the explicit oracle."""
    h = axis.h
    return 0.4 * min(0.5 * h * h, h / axis.L)


def phi_evolve_fd(phi0: AxialProfile, t: float, dt: float | None = None,
                  scheme: str = "centered") -> AxialProfile:
    """Explicit finite-difference oracle for d_t phi + x d_x phi = d_x^2 phi.

    ``scheme="centered"``: second-order centered differences with Heun's
    method. ``scheme="upwind"``: first-order upwind advection with forward
    Euler. Ghost values copy the end values (clamped).
    """
    if t <= 0:
        return phi0
    axis = phi0.axis
    h, x = axis.h, axis.x
    if dt is None:
        dt = fd_time_step(axis)
    limit = min(0.5 * h * h, h / max(axis.L, h))
    if not (0 < dt <= limit):
        raise ValueError(f"time step {dt:.3e} violates the stability limit {limit:.3e}")
    if scheme not in ("centered", "upwind"):
        raise ValueError(f"unknown scheme {scheme!r}")
    nsteps = int(np.ceil(t / dt - 1e-9))
    dt = t / nsteps
    xp, xm = np.maximum(x, 0.0), np.minimum(x, 0.0)

    def rhs(p):
        q = np.concatenate(([p[0]], p, [p[-1]]))
        lap = (q[2:] - 2.0 * p + q[:-2]) / (h * h)
        if scheme == "centered":
            adv = x * (q[2:] - q[:-2]) / (2.0 * h)
        else:
            adv = xp * (p - q[:-2]) / h + xm * (q[2:] - p) / h
        return lap - adv

    p = np.array(phi0.values, dtype=float)
    for _ in range(nsteps):
        if scheme == "centered":
            k1 = rhs(p)
            k2 = rhs(p + dt * k1)
            p = p + 0.5 * dt * (k1 + k2)
        else:
            p = p + dt * rhs(p)
    q = np.concatenate(([p[0]], p, [p[-1]]))
    return AxialProfile(axis, p, (q[2:] - q[:-2]) / (2.0 * h))


@dataclass(frozen=True)
class SupEstimates:
    t: float
    sup_phi: float
    sup_dphi: float
    max_principle: bool
    slope_decay: bool
    smoothing: bool

    @property
    def all_ok(self) -> bool:
        return self.max_principle and self.slope_decay and self.smoothing


def check_bounds(phi0: AxialProfile, phit: AxialProfile, t: float,
                 rtol: float = 1e-9) -> SupEstimates:
    """Test the three sup-norm bounds for an evolved profile."""
    s0 = phi0.sup()
    d0 = float(np.abs(phi0.derivative()).max())
    sp = phit.sup()
    sd = float(np.abs(phit.derivative()).max())
    slack = rtol * max(s0, d0, 1e-300)
    e = np.exp(-t)
    smooth = e / np.sqrt(-np.expm1(-2.0 * t)) * s0 if t > 0 else np.inf
    return SupEstimates(
        t=float(t), sup_phi=sp, sup_dphi=sd,
        max_principle=bool(sp <= s0 + slack),
        slope_decay=bool(sd <= e * d0 + slack),
        smoothing=bool(sd <= smooth + slack),
    )


FD_BOUND_RTOL = 1e-6


def sup_estimates(phi0: AxialProfile, t: float, method: str = "exact") -> SupEstimates:
    """Bounds for the closed form (slack 1e-9) or the FD oracle (slack 1e-6).

    Linear data attain the slope bound with equality; the explicit time
    stepping then overshoots it by O(dt^2), hence the larger FD slack.
    """
    if method == "exact":
        return check_bounds(phi0, phi_evolve_exact(phi0, t), t)
    if method == "fd":
        return check_bounds(phi0, phi_evolve_fd(phi0, t), t, rtol=FD_BOUND_RTOL)
    raise ValueError(f"unknown method {method!r}")


def shift_delta_rho(phi0: AxialProfile) -> float:
    """delta rho = (2 pi)^{-1/2} int exp(-x^2/2) phi0(x) dx (clamped extension)."""
    if phi0.axis.L < 8.0:
        warnings.warn("axial half-width below 8: the shift is not certified", RuntimeWarning)
    return float(gauss_smooth(phi0, np.zeros(1), 1.0)[0])


def profile_from_vorticity(omega3: SlicedField3D) -> AxialProfile:
    """phi0(x3) = int omega3 dx_perp for every slice."""
    grid = omega3.grid
    return AxialProfile(grid.axial, slice_integrals(omega3.values, grid.transverse))


def shift_delta_rho_from_vorticity(omega3: SlicedField3D, rho: float = 0.0) -> float:
    """Shift computed from raw third-component vorticity data.

    ``rho`` is subtracted from the slice circulations first, so passing the
    full perturbed vorticity and the base circulation gives the shift.
    """
    prof = profile_from_vorticity(omega3)
    return shift_delta_rho(AxialProfile(prof.axis, prof.values - rho))


BUILTIN_PROFILES = {
    "gauss-bump": lambda x: 0.02 * np.exp(-x * x),
    "linear": lambda x: x,
    "sine": np.sin,
    "constant": lambda x: np.full_like(x, 0.02),
    "square": lambda x: x * x,
}


def builtin_profile(name: str, axis: Axis) -> AxialProfile:
    if name not in BUILTIN_PROFILES:
        raise ValueError(f"unknown builtin profile {name!r}; "
                         f"choose from {sorted(BUILTIN_PROFILES)}")
    return AxialProfile.from_function(axis, BUILTIN_PROFILES[name])
