"""Explicit Fokker-Planck propagators and the Laplace-formula resolvent.

One-dimensional operator: L_alpha = d^2/dx^2 + (alpha/2) x d/dx + alpha/2, whose
semigroup is

    (e^{tL} f)(x) = (4 pi a)^{-1/2} int exp(-(x - s y)^2 / (4a)) f(y) dy,
    s = exp(-alpha t / 2),  a = (1 - exp(-alpha t)) / alpha.

On a grid this is an N x N matrix. Once the Gaussian is resolved by the grid
(sqrt(2a) >= 2h) the integral is summed directly at the nodes and the columns
are normalized so that mass is conserved to round-off. For shorter times the
equivalent form e^{tL}f = s^{-1} (g * f)(x / s) is evaluated spectrally on a
twice-padded periodic box. Derivative variants e^{tL} d/dx always put the
derivative on the kernel.

The 2D operator is the tensor product along (x1, x2); the 3D operator adds the
axial factor (G_c * w)(x3 e^{-t}), c = 1 - e^{-2t}, evaluated with a cosine
series (even reflection at the axial box ends, i.e. bounded data with zero
end slope).
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from numpy.polynomial.hermite import hermval
from numpy.polynomial.legendre import leggauss

from .weighted_fields import (
    Axis,
    Field2D,
    Grid2D,
    Grid3D,
    SlicedField3D,
    slice_norms_L2m,
    spectral_derivative,
)


@dataclass(frozen=True)
class AlphaPair:
    alpha1: float
    alpha2: float

    def __post_init__(self):
        if not (self.alpha2 > 0):
            raise ValueError("alpha2 must be positive")
        if self.alpha1 < self.alpha2:
            raise ValueError("expected alpha1 >= alpha2")

    @classmethod
    def from_lambda(cls, lam: float) -> "AlphaPair":
        if not (0.0 <= lam < 1.0):
            raise ValueError(f"lambda must lie in [0, 1), got {lam}")
        return cls(1.0 + lam, 1.0 - lam)


def semigroup_time(alpha: float, t: float) -> tuple[float, float]:
    """Return (s, a) = (e^{-alpha t/2}, (1 - e^{-alpha t})/alpha)."""
    return float(np.exp(-0.5 * alpha * t)), float(-np.expm1(-alpha * t) / alpha)


def _check_time(t: float) -> None:
    if not (t > 0):
        raise ValueError("t must be positive (t = 0 is the identity)")


# ------------------------------------------------------------------ 1D matrices

@lru_cache(maxsize=128)
def kernel_matrices_1d(L: float, N: int, alpha: float, t: float):
    """Matrices (A, D) with A f ~ e^{tL_alpha} f and D f ~ e^{tL_alpha} f'."""
    if not (alpha > 0):
        raise ValueError("alpha must be positive")
    _check_time(t)
    x = Axis(L, N).x
    h = 2.0 * L / N
    if 2.0 / alpha < 4.0 * h * h:
        raise ValueError(f"grid spacing {h:.3g} does not resolve the stationary Gaussian "
                         f"of L_alpha at alpha={alpha:.3g}")
    s, a = semigroup_time(alpha, t)
    if 2.0 * a >= 4.0 * h * h:
        diff = x[:, None] - s * x[None, :]
        g = np.exp(-diff * diff / (4.0 * a))
        norm = g.sum(axis=0)
        A = g / norm
        D = (-s / (2.0 * a)) * diff * A
        # derivative of anything carries no mass
        D = D - D.sum(axis=0) * A
    else:
        # spectral pullback on a periodic box of twice the width
        P = 2 * N
        n = np.arange(N + 1)
        k = 2.0 * np.pi * n / (P * h)
        beta = a / (s * s)
        damp = np.exp(-beta * k * k)
        c = np.full(N + 1, 2.0)
        c[0] = c[-1] = 1.0
        cd = c * damp / (P * s)
        u = np.outer(x / s, k)
        v = np.outer(x, k)
        cu, su, cv, sv = np.cos(u), np.sin(u), np.cos(v), np.sin(v)
        A = (cu * cd) @ cv.T + (su * cd) @ sv.T
        kd = -k * cd
        kd[-1] = 0.0
        D = (su * kd) @ cv.T - (cu * kd) @ sv.T
    A.setflags(write=False)
    D.setflags(write=False)
    return A, D


def apply_sg_1d(alpha: float, t: float, f: np.ndarray, axis: Axis) -> np.ndarray:
    """e^{t L_alpha} applied to samples of f on a cell-centered axis."""
    f = np.asarray(f, dtype=float)
    if not np.all(np.isfinite(f)):
        raise ValueError("profile contains non-finite values")
    if t == 0:
        return f.copy()
    A, _ = kernel_matrices_1d(axis.L, axis.N, float(alpha), float(t))
    return A @ f


# ------------------------------------------------------------------ 2D operators

def _pair_matrices(grid: Grid2D, ap: AlphaPair, t: float):
    A1, D1 = kernel_matrices_1d(grid.L, grid.N, float(ap.alpha1), float(t))
    A2, D2 = kernel_matrices_1d(grid.L, grid.N, float(ap.alpha2), float(t))
    return A1, D1, A2, D2


def sg2d_values(grid: Grid2D, ap: AlphaPair, t: float, values: np.ndarray) -> np.ndarray:
    """e^{tL} on the last two axes of an array (..., N, N)."""
    if t == 0:
        return np.array(values, dtype=float)
    A1, _, A2, _ = _pair_matrices(grid, ap, t)
    return np.matmul(np.matmul(A1, values), A2.T)


def sg2d_div_values(grid: Grid2D, ap: AlphaPair, t: float, g1, g2) -> np.ndarray:
    """e^{tL}(d1 g1 + d2 g2) with the derivatives on the kernel."""
    _check_time(t)
    A1, D1, A2, D2 = _pair_matrices(grid, ap, t)
    out = 0.0
    if g1 is not None:
        out = out + np.matmul(np.matmul(D1, g1), A2.T)
    if g2 is not None:
        out = out + np.matmul(np.matmul(A1, g2), D2.T)
    return out


def apply_sg_2d(ap: AlphaPair, t: float, f: Field2D) -> Field2D:
    if t == 0:
        return f
    _check_time(t)
    return Field2D(f.grid, sg2d_values(f.grid, ap, t, f.values))


def apply_sg_2d_div(ap: AlphaPair, t: float, g1: Field2D, g2: Field2D,
                    m: float = 2.0, p: float = 2.0) -> Field2D:
    """e^{tL}(d1 g1 + d2 g2); (m, p) only describe the intended function space."""
    grid = g1.grid
    if g2.grid != grid:
        raise ValueError("g1 and g2 live on different grids")
    return Field2D(grid, sg2d_div_values(grid, ap, t, g1.values, g2.values))


def generator_values(grid: Grid2D, ap: AlphaPair, values: np.ndarray) -> np.ndarray:
    """Spectral evaluation of L f = Lap f + (a1/2) x1 d1 f + (a2/2) x2 d2 f + (a1+a2)/2 f."""
    x1, x2 = grid.mesh()
    h = grid.h
    lap = spectral_derivative(values, h, (2, 0)) + spectral_derivative(values, h, (0, 2))
    d1 = spectral_derivative(values, h, (1, 0))
    d2 = spectral_derivative(values, h, (0, 1))
    return (lap + 0.5 * ap.alpha1 * x1 * d1 + 0.5 * ap.alpha2 * x2 * d2
            + 0.5 * (ap.alpha1 + ap.alpha2) * values)


# -------------------------------------------------------------------- resolvent

class LaplaceQuadrature:
    """Nodes and weights for int_0^inf F(t) dt with F ~ e^{-mu t}.

    A first panel [0, t0] followed by geometric panels of ratio 2 up to the
    time where e^{-mu t} < cutoff, Gauss-Legendre of order ``order`` on each.
    """

    def __init__(self, mu: float, t0: float = 1e-4, cutoff: float = 1e-12, order: int = 8):
        if not (mu > 0):
            raise ValueError("decay rate must be positive")
        tmax = np.log(1.0 / cutoff) / mu
        edges = [0.0, t0]
        while edges[-1] < tmax:
            edges.append(2.0 * edges[-1])
        xg, wg = leggauss(order)
        nodes, weights = [], []
        for lo, hi in zip(edges[:-1], edges[1:]):
            nodes.append(0.5 * (hi - lo) * xg + 0.5 * (hi + lo))
            weights.append(0.5 * (hi - lo) * wg)
        self.nodes = np.concatenate(nodes)
        self.weights = np.concatenate(weights)
        self.tmax = tmax


class _ResolventKernels:
    def __init__(self, grid: Grid2D, ap: AlphaPair):
        self.quad = LaplaceQuadrature(0.5 * ap.alpha2)
        mats = [_pair_matrices(grid, ap, t) for t in self.quad.nodes]
        # weights folded into the x1 factors
        w = self.quad.weights[:, None, None]
        self.A1 = np.stack([m[0] for m in mats]) * w
        self.D1 = np.stack([m[1] for m in mats]) * w
        self.A2T = np.ascontiguousarray(np.stack([m[2].T for m in mats]))
        self.D2T = np.ascontiguousarray(np.stack([m[3].T for m in mats]))

    @staticmethod
    def _contract(left: np.ndarray, right: np.ndarray) -> np.ndarray:
        # sum_q left[q] @ right[q] as a single matrix product
        q, n, k = left.shape
        return left.transpose(1, 0, 2).reshape(n, q * k) @ right.reshape(q * k, -1)

    def plain(self, f: np.ndarray) -> np.ndarray:
        return -self._contract(np.matmul(self.A1, f), self.A2T)

    def div(self, g1, g2) -> np.ndarray:
        out = 0.0
        if g1 is not None:
            out = out + self._contract(np.matmul(self.D1, g1), self.A2T)
        if g2 is not None:
            out = out + self._contract(np.matmul(self.A1, g2), self.D2T)
        return -out


@lru_cache(maxsize=4)
def resolvent_kernels(grid: Grid2D, ap: AlphaPair) -> _ResolventKernels:
    return _ResolventKernels(grid, ap)


def resolvent_apply(ap: AlphaPair, rhs: Field2D | None = None, mode: str = "plain",
                    g: tuple[Field2D, Field2D] | None = None, p: float = 2.0,
                    tol: float = 1e-10, return_residual: bool = False, m: float = 2.0):
    """Solve L_{a1,a2} u = rhs on mean-free fields as u = -int_0^inf e^{tL} rhs dt.

    ``mode="plain"`` takes a mean-free ``rhs``; ``mode="div"`` takes
    ``g = (g1, g2)`` and solves with rhs = d1 g1 + d2 g2, the derivatives
    being carried by the kernel. With ``return_residual`` the relative
    L^2(m) residual of the spectrally evaluated generator is returned too.
    """
    if mode == "plain":
        if rhs is None:
            raise ValueError("plain mode needs rhs")
        grid = rhs.grid
        mass = rhs.values.sum() * grid.h**2
        scale = max(np.abs(rhs.values).sum() * grid.h**2, 1e-300)
        if abs(mass) > tol * scale and abs(mass) > 1e-14:
            raise ValueError(f"rhs is not mean-free (integral {mass:.3e}); "
                             "the operator is not invertible off the mean-free subspace")
        kern = resolvent_kernels(grid, ap)
        out = kern.plain(rhs.values)
        target = rhs.values
    elif mode == "div":
        if g is None:
            raise ValueError("div mode needs g = (g1, g2)")
        g1, g2 = g
        grid = g1.grid
        kern = resolvent_kernels(grid, ap)
        out = kern.div(g1.values, g2.values)
        target = None
    else:
        raise ValueError(f"unknown mode {mode!r}")
    result = Field2D(grid, out)
    if not return_residual:
        return result
    if target is None:
        target = (spectral_derivative(g1.values, grid.h, (1, 0))
                  + spectral_derivative(g2.values, grid.h, (0, 1)))
    res = generator_values(grid, ap, out) - target
    w = grid.weight(m)
    denom = np.linalg.norm(w * target)
    rel = float(np.linalg.norm(w * res) / denom) if denom > 0 else float(np.linalg.norm(w * res))
    return result, rel


# --------------------------------------------------------------------- 3D parts

@lru_cache(maxsize=64)
def axial_matrices(L3: float, N3: int, t: float):
    """Matrices (B, B3) for w -> (G_c * w)(x3 e^{-t}) and its derivative variant.

    B3 w = -(1/sqrt c) int G'(z) w(x3 e^{-t} + sqrt(c) z) dz = (G_c * w')(x3 e^{-t}).
    Data are expanded in the cosine basis of the cell-centered axis.
    """
    _check_time(t)
    ax = Axis(L3, N3)
    x, h = ax.x, ax.h
    c = -np.expm1(-2.0 * t)
    n = np.arange(N3)
    k = np.pi * n / (N3 * h)
    # analysis: coefficients of f = sum_n F_n cos(k_n (x + L3))
    basis = np.cos(np.outer(x + L3, k))
    wts = np.full(N3, 2.0 / N3)
    wts[0] = 1.0 / N3
    analysis = (basis * wts).T
    damp = np.exp(-0.5 * c * k * k)
    y = x * np.exp(-t) + L3
    B = (np.cos(np.outer(y, k)) * damp) @ analysis
    B3 = (-np.sin(np.outer(y, k)) * (k * damp)) @ analysis
    B.setflags(write=False)
    B3.setflags(write=False)
    return B, B3


def _axial_apply(M: np.ndarray, values: np.ndarray) -> np.ndarray:
    # contract the x3 axis (third from the end)
    shp = values.shape
    n3 = shp[-3]
    v = np.moveaxis(values, -3, 0).reshape(n3, -1)
    out = (M @ v).reshape((n3,) + shp[:-3] + shp[-2:])
    return np.moveaxis(out, 0, -3)


def sg3d_values(grid: Grid3D, ap: AlphaPair, t: float, values: np.ndarray) -> np.ndarray:
    """S_t on arrays (..., N3, N, N)."""
    if t == 0:
        return np.array(values, dtype=float)
    out = sg2d_values(grid.transverse, ap, t, values)
    if grid.N3 > 1:
        B, _ = axial_matrices(grid.L3, grid.N3, float(t))
        out = _axial_apply(B, out)
    return out


def apply_sg_3d(ap: AlphaPair, t: float, w: SlicedField3D) -> SlicedField3D:
    if t == 0:
        return w
    _check_time(t)
    return SlicedField3D(w.grid, sg3d_values(w.grid, ap, t, w.values))


def apply_sg_3d_div(ap: AlphaPair, t: float, g: SlicedField3D, axis: int,
                    m: float = 2.0, p: float = 2.0) -> SlicedField3D:
    """S_t d_axis g with the derivative on the kernel (axis in {1, 2, 3})."""
    _check_time(t)
    grid = g.grid
    if axis == 1:
        out = sg2d_div_values(grid.transverse, ap, t, g.values, None)
    elif axis == 2:
        out = sg2d_div_values(grid.transverse, ap, t, None, g.values)
    elif axis == 3:
        out = sg2d_values(grid.transverse, ap, t, g.values)
        if grid.N3 == 1:
            return SlicedField3D(grid, np.zeros_like(out))
        _, B3 = axial_matrices(grid.L3, grid.N3, float(t))
        return SlicedField3D(grid, _axial_apply(B3, out))
    else:
        raise ValueError("axis must be 1, 2 or 3")
    if grid.N3 > 1:
        B, _ = axial_matrices(grid.L3, grid.N3, float(t))
        out = _axial_apply(B, out)
    return SlicedField3D(grid, out)


# ---------------------------------------------------------------- spectrum check

def hermite_mode(alpha: float, n: int, x: np.ndarray) -> np.ndarray:
    """d^n/dx^n exp(-alpha x^2/4), the n-th eigenfunction of L_alpha."""
    r = 0.5 * np.sqrt(alpha)
    coef = np.zeros(n + 1)
    coef[n] = 1.0
    return (-r) ** n * hermval(r * x, coef) * np.exp(-(r * x) ** 2)


def spectrum_check(alpha: float, n: int, axis: Axis | None = None, T: float = 1.0,
                   samples: int = 10) -> float:
    """Propagate the n-th eigenfunction over [0, T] and fit its decay rate."""
    if n not in (0, 1, 2, 3):
        raise ValueError("n must be in {0, 1, 2, 3}")
    axis = axis or Axis(12.0 / np.sqrt(alpha), 256)
    f0 = hermite_mode(alpha, n, axis.x)
    ts = T * np.arange(1, samples + 1) / samples
    norms = [np.linalg.norm(apply_sg_1d(alpha, t, f0, axis)) for t in ts]
    ts = np.concatenate([[0.0], ts])
    logs = np.log(np.concatenate([[np.linalg.norm(f0)], norms]))
    slope = np.polyfit(ts, logs, 1)[0]
    return float(-slope)


def mean_free_decay_ratios(grid: Grid2D, ap: AlphaPair, fields: np.ndarray,
                           times, m: float = 2.0) -> np.ndarray:
    """||e^{tL} f||_{L^2(m)} / ||f||_{L^2(m)} for a batch of fields, shape (T, B)."""
    base = slice_norms_L2m(fields, grid, m)
    return np.array([slice_norms_L2m(sg2d_values(grid, ap, t, fields), grid, m) / base
                     for t in times])
