"""Velocity from vorticity.

2D law: u = (d2 psi, -d1 psi) with -Lap psi = omega, i.e. convolution with
(x - y)^perp / (2 pi |x - y|^2). The discrete convolution kernel is the
Fourier series of the log kernel truncated at a radius R exceeding the box
diameter,

    G_R^(k) = (1 - J0(kR)) / k^2 - R log(R) J1(kR) / k,

sampled on a 4x oversampled periodic box. Because the truncated kernel fits in
that box the convolution with the trigonometric interpolant of omega is exact,
so the velocity is spectrally accurate; the kernel is then applied to the
data with a zero-padded (doubled box) FFT convolution.

3D law: u = curl Psi, Psi = (4 pi |x|)^{-1} * omega. Every target slice x3_i is
split as
    Psi(x3_i) = Psi_2D[omega(x3_i)] + int K(x3_i - y3) (omega(y3) - omega(x3_i)) dy3,
where the first term is the exact 2D law applied to the slice and the second
(the axial correction) vanishes for x3-independent data. The correction uses
the transverse Fourier transform of the 3D kernel, exp(-k|z|)/(2k), integrated
exactly against piecewise-linear interpolation in x3 with constant extension
beyond the axial box; it is evaluated on the unpadded periodic transverse box.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np
import scipy.fft as sfft
from scipy.special import j0, j1

from .weighted_fields import Field2D, Grid2D, Grid3D, SlicedField3D, diff4


@dataclass(frozen=True, eq=False)
class Velocity2D:
    grid: Grid2D
    u1: np.ndarray
    u2: np.ndarray

    def speed(self) -> np.ndarray:
        return np.hypot(self.u1, self.u2)

    def divergence(self) -> np.ndarray:
        h = self.grid.h
        return diff4(self.u1, 0, h) + diff4(self.u2, 1, h)

    def curl(self) -> np.ndarray:
        h = self.grid.h
        return diff4(self.u2, 0, h) - diff4(self.u1, 1, h)


@dataclass(frozen=True, eq=False)
class Velocity3D:
    grid: Grid3D
    u1: np.ndarray
    u2: np.ndarray
    u3: np.ndarray

    def components(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        return self.u1, self.u2, self.u3

    def divergence(self) -> np.ndarray:
        h, h3 = self.grid.transverse.h, self.grid.h3
        return (diff4(self.u1, 1, h) + diff4(self.u2, 2, h)
                + diff4(self.u3, 0, h3, boundary="clamp"))


# ------------------------------------------------------------------------ 2D law

class BiotSavart2D:
    """Precomputed free-space kernels for one transverse grid."""

    def __init__(self, grid: Grid2D, oversample: int = 4):
        self.grid = grid
        N, h = grid.N, grid.h
        M = oversample * N
        R = 2.0 * np.sqrt(2.0) * grid.L + 2.0 * h
        if M * h < 2.0 * grid.L + R:
            raise ValueError("oversampled box too small for the truncated kernel")
        k = 2.0 * np.pi * np.fft.fftfreq(M, d=h)
        k1, k2 = np.meshgrid(k, k, indexing="ij")
        kk = np.hypot(k1, k2)
        kr = kk * R
        with np.errstate(divide="ignore", invalid="ignore"):
            gk = (1.0 - j0(kr)) / kk**2 - R * np.log(R) * j1(kr) / kk
        gk[0, 0] = 0.25 * R * R * (1.0 - 2.0 * np.log(R))
        # kernels of d2 psi and d1 psi as functions of the offset
        kd2 = np.real(np.fft.ifft2(1j * k2 * gk))
        kd1 = np.real(np.fft.ifft2(1j * k1 * gk))
        self.kpsi = self._fold(np.real(np.fft.ifft2(gk)), N, M)
        self.kd1 = self._fold(kd1, N, M)
        self.kd2 = self._fold(kd2, N, M)
        self.shape2 = (2 * N, 2 * N)
        self.fd1 = sfft.rfft2(self.kd1)
        self.fd2 = sfft.rfft2(self.kd2)
        self.fpsi = sfft.rfft2(self.kpsi)

    @staticmethod
    def _fold(kern: np.ndarray, N: int, M: int) -> np.ndarray:
        # offsets -(N-1)..(N-1) placed on a periodic 2N box
        idx = np.r_[0:N, M - N:M]
        out = kern[np.ix_(idx, idx)].copy()
        out[N, :] = 0.0
        out[:, N] = 0.0
        return out

    def spectra(self, values: np.ndarray) -> np.ndarray:
        """Spectra on the doubled box; the zero rows are skipped in the first pass."""
        n2 = 2 * self.grid.N
        return sfft.fft(sfft.rfft(values, n=n2, axis=-1), n=n2, axis=-2)

    def from_spectrum(self, spec: np.ndarray) -> np.ndarray:
        N = self.grid.N
        rows = sfft.ifft(spec, axis=-2)[..., :N, :]
        return sfft.irfft(rows, n=2 * N, axis=-1)[..., :N]

    def velocity(self, values: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """(u1, u2) = (d2 psi, -d1 psi) for arrays (..., N, N)."""
        fw = self.spectra(values)
        return self.from_spectrum(fw * self.fd2), -self.from_spectrum(fw * self.fd1)

    def stream(self, values: np.ndarray) -> np.ndarray:
        return self.from_spectrum(self.spectra(values) * self.fpsi)


@lru_cache(maxsize=8)
def bs2d_operator(grid: Grid2D) -> BiotSavart2D:
    return BiotSavart2D(grid)


def biot_savart_2d(omega: Field2D) -> Velocity2D:
    if not np.all(np.isfinite(omega.values)):
        raise ValueError("vorticity contains non-finite values")
    u1, u2 = bs2d_operator(omega.grid).velocity(omega.values)
    return Velocity2D(omega.grid, u1, u2)


def gaussian_vortex_speed(grid: Grid2D, rmin: float = 0.25, rmax: float = 6.0):
    """Numeric and analytic azimuthal speed of G_0 at every node with rmin <= r <= rmax.

    Returns (r, numeric, analytic), sorted by r.
    """
    x1, x2 = grid.mesh()
    G0 = np.exp(-(x1**2 + x2**2) / 4.0) / (4.0 * np.pi)
    u1, u2 = bs2d_operator(grid).velocity(G0)
    r = np.hypot(x1, x2)
    sel = (r >= rmin) & (r <= rmax)
    # azimuthal component (-x2, x1)/r . u
    numeric = ((-x2 * u1 + x1 * u2) / np.where(r > 0, r, 1.0))[sel]
    rr = r[sel]
    analytic = (1.0 - np.exp(-rr**2 / 4.0)) / (2.0 * np.pi * rr)
    order = np.argsort(rr, kind="stable")
    return rr[order], numeric[order], analytic[order]


# ------------------------------------------------------------------------ 3D law

def _axial_weights(k: np.ndarray, h3: float, N3: int):
    """Hat-integrated axial kernels for every transverse wavenumber.

    Returns dict of arrays:
      W[d]   int hat_d(z) e^{-k|z|}/(2k) dz,           d = 1..N3-1 (even in d)
      Wp[d]  int hat_d(z) (-sign z) e^{-k|z|}/2 dz,     odd in d
      EL, ER, ELp, ERp  (N3,) per target slice: weight of the left/right end
                        value coming from its outer half-hat plus the
                        constant tail beyond the axial box.
    Shapes: (..., ) broadcast over k; k must be > 0.
    """
    kh = k * h3
    # int_{-h}^{h} (1 - |s|/h) e^{-k s} ds / h = 2 (cosh kh - 1) / (kh)^2
    hatf = h3 * (2.0 * np.sinh(0.5 * kh) / kh) ** 2
    # int_0^h (1 - s/h) e^{k s} ds = (e^{kh} - 1 - kh) / (k^2 h)
    halfp = (np.expm1(kh) - kh) / (k * kh)
    d = np.arange(1, N3)
    decay = np.exp(-np.multiply.outer(k, d * h3))
    W = decay * (hatf / (2.0 * k))[..., None]
    Wp = -0.5 * decay * hatf[..., None]
    # target slice i, right end node at distance D_i = (N3 - 1 - i) h3 >= 0
    Dist = (N3 - 1 - np.arange(N3)) * h3
    e = np.exp(-np.multiply.outer(k, Dist))
    ER = e * ((halfp / (2.0 * k)) + 1.0 / (2.0 * k * k))[..., None]
    ERp = e * (0.5 * halfp + 1.0 / (2.0 * k))[..., None]
    return W, Wp, ER, ERp


def axial_difference_matrices(k: np.ndarray, h3: float, N3: int):
    """Dense form of the axial correction for a 1D array of wavenumbers.

    Returns (M, Mp), each (len(k), N3, N3), such that for nodal values w_j
        sum_j M[i, j] w_j  = int e^{-k|x3_i - y|}/(2k) (w(y) - w_i) dy,
        sum_j Mp[i, j] w_j = d/dx3 of the same integral with w_i frozen,
    where w(y) is the piecewise-linear interpolant, constant beyond the box.
    """
    k = np.asarray(k, dtype=float)
    W, Wp, ER, ERp = _axial_weights(k, h3, N3)
    nk = k.size
    M = np.zeros((nk, N3, N3))
    Mp = np.zeros((nk, N3, N3))
    idx = np.arange(N3)
    d = idx[:, None] - idx[None, :]
    off = d != 0
    inner = off & (idx[None, :] > 0) & (idx[None, :] < N3 - 1)
    ii, jj = np.nonzero(inner)
    dd = d[ii, jj]
    M[:, ii, jj] = W[:, np.abs(dd) - 1]
    Mp[:, ii, jj] = np.sign(dd) * Wp[:, np.abs(dd) - 1]
    rows = idx[1:]
    M[:, rows, 0] = ER[:, ::-1][:, rows]
    Mp[:, rows, 0] = -ERp[:, ::-1][:, rows]
    rows = idx[:-1]
    M[:, rows, N3 - 1] = ER[:, rows]
    Mp[:, rows, N3 - 1] = ERp[:, rows]
    M[:, idx, idx] = -M.sum(axis=2)
    Mp[:, idx, idx] = -Mp.sum(axis=2)
    return M, Mp


class _RadialCorrection:
    """Axial correction for slices of the form m(x3) G_0(x_perp), in free space.

    G_0 = exp(-r^2/4)/(4 pi) has transform exp(-k^2); the transverse inverse
    transform is a Hankel integral evaluated by Gauss-Legendre in k and
    tabulated at the distinct node radii.
    """

    def __init__(self, grid: Grid3D, kmax: float = 6.5, panels: int = 64, order: int = 8):
        from numpy.polynomial.legendre import leggauss
        from scipy.special import j0 as J0, j1 as J1

        xg, wg = leggauss(order)
        edges = np.linspace(0.0, kmax, panels + 1)
        kq = (0.5 * np.diff(edges)[:, None] * xg + 0.5 * (edges[1:] + edges[:-1])[:, None]).ravel()
        wq = (0.5 * np.diff(edges)[:, None] * wg).ravel()
        self.M, self.Mp = axial_difference_matrices(kq, grid.h3, grid.N3)
        x1, x2 = grid.transverse.mesh()
        r2 = x1 * x1 + x2 * x2
        uniq, inv = np.unique(np.round(r2, 10), return_inverse=True)
        r = np.sqrt(uniq)
        ghat = np.exp(-kq * kq)
        kr = np.multiply.outer(r, kq)
        # d/dr psi = -(1/2pi) int J1(kr) k^2 g^ C dk ;  psi_3 = (1/2pi) int J0(kr) k g^ D dk
        self.TJ1 = -J1(kr) * (wq * kq * kq * ghat) / (2.0 * np.pi)
        self.TJ0 = J0(kr) * (wq * kq * ghat) / (2.0 * np.pi)
        self.inv = inv.reshape(x1.shape)
        self.rgrid = np.sqrt(r2)
        self.x1, self.x2 = x1, x2

    def tables(self, m: np.ndarray):
        """Return (dpsi/dr, dpsi/dx3) on the grid, shape (N3, N, N)."""
        C = self.M @ m
        D = self.Mp @ m
        # (N3, radii) tables gathered onto the grid, slice axis first
        dr = (C.T @ self.TJ1.T)[:, self.inv]
        d3 = (D.T @ self.TJ0.T)[:, self.inv]
        return dr, d3


class BiotSavart3D:
    """3D law on a sliced grid: exact 2D part plus an axial correction."""

    def __init__(self, grid: Grid3D, single: bool = False):
        self.grid = grid
        self.single = bool(single)
        tg = grid.transverse
        self.bs2 = bs2d_operator(tg)
        self.fd1, self.fd2 = self.bs2.fd1, self.bs2.fd2
        N, N3, h, h3 = tg.N, grid.N3, tg.h, grid.h3
        k = 2.0 * np.pi * np.fft.fftfreq(N, d=h)
        kr = 2.0 * np.pi * np.fft.rfftfreq(N, d=h)
        k1, k2 = np.meshgrid(k, kr, indexing="ij")
        k1[N // 2, :] = 0.0
        k2[:, -1] = 0.0
        self.ik1 = 1j * k1
        self.ik2 = 1j * k2
        kk = np.hypot(*np.meshgrid(k, kr, indexing="ij"))
        kk[0, 0] = 1.0
        self.N3 = N3
        x1, x2 = tg.mesh()
        g0 = np.exp(-(x1**2 + x2**2) / 4.0)
        self.g0 = g0 / (g0.sum() * h * h)
        if N3 > 1:
            self.radial = _RadialCorrection(grid)
            W, Wp, ER, ERp = _axial_weights(kk, h3, N3)
            W[0, 0] = 0.0
            Wp[0, 0] = 0.0
            ER[0, 0] = 0.0
            ERp[0, 0] = 0.0
            # the interior weights are geometric in the slice offset,
            # W[d-1] = cw q^d and Wp[d-1] = cwp q^d with q = exp(-k h3)
            kh = kk * h3
            hatf = h3 * (2.0 * np.sinh(0.5 * kh) / kh) ** 2
            self.q = np.exp(-kh)
            self.cw = hatf / (2.0 * kk)
            self.cwp = -0.5 * hatf
            self.cw[0, 0] = 0.0
            self.cwp[0, 0] = 0.0
            # per-slice row sums over interior nodes and end weights
            idx = np.arange(N3)
            full = np.concatenate([W[..., ::-1], np.zeros(kk.shape + (1,)), W], axis=-1)
            fullp = np.concatenate([-Wp[..., ::-1], np.zeros(kk.shape + (1,)), Wp], axis=-1)
            # weight of node j seen from slice i is full[..., N3 - 1 + (i - j)]
            wfirst = full[..., N3 - 1 + idx]          # j = 0
            wlast = full[..., idx]                    # j = N3 - 1
            self.S = full[..., N3 - 1 + idx[:, None] - idx[None, 1:-1]].sum(-1)
            self.W0, self.WN = wfirst, wlast
            self.Wp0 = fullp[..., N3 - 1 + idx]
            self.WpN = fullp[..., idx]
            self.Sp = fullp[..., N3 - 1 + idx[:, None] - idx[None, 1:-1]].sum(-1)
            # end contributions (outer half-hat + tail); left end by symmetry
            self.ER, self.EL = ER, ER[..., ::-1]
            self.ERp, self.ELp = ERp, -ERp[..., ::-1]
            # move slice axis first: arrays (N3, N, N//2+1)
            for name in ("S", "W0", "WN", "Wp0", "WpN", "Sp", "ER", "EL", "ERp", "ELp"):
                setattr(self, name, np.ascontiguousarray(np.moveaxis(getattr(self, name), -1, 0)))
            self.A0, self.AN = self.EL - self.W0, self.ER - self.WN
            self.Sd = self.S + self.EL + self.ER
            self.A0p, self.ANp = self.ELp - self.Wp0, self.ERp - self.WpN
            self.Sdp = self.Sp + self.ELp + self.ERp
        if self.single:
            # transforms and spectral arithmetic in single precision
            for name in ("fd1", "fd2", "ik1", "ik2", "g0", "q", "cw", "cwp",
                         "A0", "AN", "Sd", "A0p", "ANp", "Sdp"):
                if hasattr(self, name):
                    a = getattr(self, name)
                    setattr(self, name, a.astype(np.complex64 if np.iscomplexobj(a) else np.float32))
        self.rdtype = np.float32 if self.single else np.float64
        self.cdtype = np.complex64 if self.single else np.complex128

    # -- axial correction of the stream function and of its x3-derivative
    def _correction(self, wh: np.ndarray, with_derivative):
        """wh: transverse spectra (C, N3, N, N//2+1) of C components.

        Returns psi for every component and d/dx3 psi for the components
        flagged in ``with_derivative``.
        """
        N3 = self.N3
        # fwd[i] = sum_{j<i} q^{i-j} w_j and bwd[i] = sum_{j>i} q^{j-i} w_j
        fwd = np.empty_like(wh)
        bwd = np.empty_like(wh)
        fwd[:, 0] = 0.0
        bwd[:, -1] = 0.0
        q = self.q
        for i in range(1, N3):
            np.add(fwd[:, i - 1], wh[:, i - 1], out=fwd[:, i])
            fwd[:, i] *= q
        for i in range(N3 - 2, -1, -1):
            np.add(bwd[:, i + 1], wh[:, i + 1], out=bwd[:, i])
            bwd[:, i] *= q
        w0, wN = wh[:, :1], wh[:, -1:]
        # the recursions use full hats at both end nodes; the precomputed
        # end weights swap in the half-hat + tail and subtract the slice value
        psi = fwd + bwd
        psi *= self.cw
        psi += self.A0 * w0
        psi += self.AN * wN
        psi -= self.Sd * wh
        sel = np.flatnonzero(with_derivative)
        dpsi = None
        if sel.size:
            dpsi = fwd[sel] - bwd[sel]
            dpsi *= self.cwp
            dpsi += self.A0p * w0[sel]
            dpsi += self.ANp * wN[sel]
            dpsi -= self.Sdp * wh[sel]
        return psi, dpsi, sel

    def correction_velocity(self, w1, w2, w3):
        """Axial correction of (u1, u2, u3); pass None for zero components.

        Each slice is split into (slice integral) x G_0 plus a mean-free
        remainder; the first part is handled in free space by the radial
        tables, the remainder on the periodic transverse box.
        """
        N = self.grid.transverse.N
        h = self.grid.transverse.h
        shape = self.grid.shape
        if self.N3 == 1:
            return [np.zeros(shape), np.zeros(shape), np.zeros(shape)]
        comps = [c for c, w in enumerate((w1, w2, w3)) if w is not None]
        if not comps:
            return [np.zeros(shape), np.zeros(shape), np.zeros(shape)]
        ws = np.stack([(w1, w2, w3)[c] for c in comps])
        m = ws.sum(axis=(2, 3)) * (h * h)
        rest = (ws - m[:, :, None, None] * self.g0).astype(self.rdtype, copy=False)
        ph, dph, sel = self._correction(sfft.rfft2(rest, axes=(-2, -1)),
                                        [c != 2 for c in comps])
        dmap = {comps[i]: dph[j] for j, i in enumerate(sel)}
        pmap = {c: ph[i] for i, c in enumerate(comps)}
        # curl of the correction potential, in spectral space
        uh = np.zeros((3,) + ph.shape[1:], dtype=self.cdtype)
        if 2 in pmap:
            uh[0] += self.ik2 * pmap[2]
            uh[1] -= self.ik1 * pmap[2]
        if 0 in pmap:
            uh[1] += dmap[0]
            uh[2] -= self.ik2 * pmap[0]
        if 1 in pmap:
            uh[0] -= dmap[1]
            uh[2] += self.ik1 * pmap[1]
        out = sfft.irfft2(uh, s=(N, N), axes=(-2, -1)).astype(np.float64)
        # free-space part of the G_0 modes
        rad = self.radial
        xr1, xr2 = rad.x1 / rad.rgrid, rad.x2 / rad.rgrid
        for i, c in enumerate(comps):
            dr, d3 = rad.tables(m[i])
            if c == 2:
                # (d2 psi, -d1 psi) for a radial psi
                out[0] += xr2 * dr
                out[1] -= xr1 * dr
            elif c == 0:
                out[1] += d3
                out[2] -= xr2 * dr
            else:
                out[0] -= d3
                out[2] += xr1 * dr
        return [out[0], out[1], out[2]]

    def local_velocity(self, w1, w2, w3):
        """Slice-wise 2D part of the 3D law."""
        shape = self.grid.shape
        bs = self.bs2
        comps = [c for c, w in enumerate((w1, w2, w3)) if w is not None]
        if not comps:
            return np.zeros(shape), np.zeros(shape), np.zeros(shape)
        spec = bs.spectra(np.stack([(w1, w2, w3)[c] for c in comps]).astype(self.rdtype))
        smap = {c: spec[i] for i, c in enumerate(comps)}
        uh = np.zeros((3,) + spec.shape[1:], dtype=self.cdtype)
        if 2 in smap:
            np.multiply(smap[2], self.fd2, out=uh[0])
            np.multiply(smap[2], self.fd1, out=uh[1])
            uh[1] *= -1
        # u3 = d1 psi2 - d2 psi1
        if 1 in smap:
            uh[2] += smap[1] * self.fd1
        if 0 in smap:
            uh[2] -= smap[0] * self.fd2
        u = bs.from_spectrum(uh)
        return u[0], u[1], u[2]

    def velocity(self, w1, w2, w3):
        loc = self.local_velocity(w1, w2, w3)
        cor = self.correction_velocity(w1, w2, w3)
        return tuple(b + a for a, b in zip(loc, cor))


@lru_cache(maxsize=4)
def bs3d_operator(grid: Grid3D, single: bool = False) -> BiotSavart3D:
    """Cached 3D operator; ``single`` runs the transforms in single precision."""
    return BiotSavart3D(grid, single)


def biot_savart_3d(w) -> Velocity3D:
    """3D law for a vorticity triple of SlicedField3D."""
    w1, w2, w3 = w
    grid = w1.grid
    if w2.grid != grid or w3.grid != grid:
        raise ValueError("vorticity components live on different grids")
    u = bs3d_operator(grid).velocity(w1.values, w2.values, w3.values)
    return Velocity3D(grid, *u)


def modulated_vortex_velocity(grid: Grid3D, Omega: np.ndarray, U1: np.ndarray,
                              U2: np.ndarray, single: bool = False):
    """3D velocity of the axial vorticity field (0, 0, Omega(x_perp, x3)).

    ``Omega`` holds the slices (N3, N, N) of an x3-modulated vortex and
    (U1, U2) their slice-wise 2D velocities, which are the local part of the
    3D law. Returns (Ut1, Ut2, gap1, gap2) where gap = Ut - U is the axial
    correction; the third velocity component vanishes identically.
    """
    g1, g2, _ = bs3d_operator(grid, single).correction_velocity(None, None, Omega)
    return U1 + g1, U2 + g2, g1, g2
