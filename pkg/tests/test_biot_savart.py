import numpy as np
import pytest
from scipy.integrate import quad
from scipy.special import erfcx, j1

from burgers_vortex.biot_savart import (
    biot_savart_2d,
    biot_savart_3d,
    bs2d_operator,
    bs3d_operator,
    gaussian_vortex_speed,
    modulated_vortex_velocity,
)
from burgers_vortex.weighted_fields import Field2D, Grid2D, Grid3D, SlicedField3D, diff4


def test_gaussian_vortex_profile_standard_grid():
    r, num, ana = gaussian_vortex_speed(Grid2D(12.0, 128))
    assert r.min() >= 0.25 and r.max() <= 6.0
    assert np.abs(num / ana - 1).max() <= 1e-3


def _curl_div_errors(grid):
    x1, x2 = grid.mesh()
    w = np.exp(-((x1 - 1) ** 2 + x2**2) / 2) - np.exp(-((x1 + 1) ** 2 + (x2 - 0.5) ** 2) / 2)
    u = biot_savart_2d(Field2D(grid, w))
    inner = np.abs(grid.x) < 8
    sel = np.ix_(inner, inner)
    return np.abs(u.curl()[sel] - w[sel]).max(), np.abs(u.divergence()[sel]).max()


def test_velocity_is_solenoidal_with_the_right_curl():
    # fourth-order differences of a spectrally accurate velocity
    c64, d64 = _curl_div_errors(Grid2D(12.0, 64))
    c128, d128 = _curl_div_errors(Grid2D(12.0, 128))
    assert c128 < 3e-4 and d128 < 3e-4
    assert c64 / c128 > 10 and d64 / d128 > 10


def test_stream_function_of_gaussian(grid2):
    # u = (d2 psi, -d1 psi) for psi the stream function
    x1, x2 = grid2.mesh()
    G = np.exp(-(x1**2 + x2**2) / 4) / (4 * np.pi)
    op = bs2d_operator(grid2)
    psi = op.stream(G)
    u1, u2 = op.velocity(G)
    d2psi = diff4(psi, 1, grid2.h)
    inner = (np.abs(x1) < 6) & (np.abs(x2) < 6)
    assert np.abs(d2psi - u1)[inner].max() < 1e-3 * np.abs(u1).max()


def _hankel_oracle(r, z):
    # azimuthal speed of the field induced by omega3 = exp(-|x|^2/2) in free space
    def H(k):
        return np.exp(-z * z / 2) * np.sqrt(np.pi / 2) * (
            erfcx((k - z) / np.sqrt(2)) + erfcx((k + z) / np.sqrt(2))) / (2 * k)
    return quad(lambda k: j1(k * r) * k * k * np.exp(-k * k / 2) * H(k), 0, 40, limit=400)[0]


def test_3d_law_against_free_space_oracle():
    grid = Grid3D(Grid2D(12.0, 128), 8.0, 64)
    x = grid.transverse.x
    x3 = grid.x3
    X1, X2 = grid.transverse.mesh()
    w3 = np.exp(-x3**2 / 2)[:, None, None] * np.exp(-(X1**2 + X2**2) / 2)
    u1, u2, u3 = bs3d_operator(grid).velocity(None, None, w3)
    N, N3 = 128, 64
    worst = 0.0
    for k3 in (N3 // 2, N3 // 2 + 8):
        for i in (N // 2 + 2, N // 2 + 8, N // 2 + 16):
            j = N // 2
            r, z = np.hypot(x[i], x[j]), x3[k3]
            num = (-x[j] * u1[k3, i, j] + x[i] * u2[k3, i, j]) / r
            worst = max(worst, abs(num / _hankel_oracle(r, z) - 1))
    assert worst < 1e-2
    assert np.abs(u3).max() < 1e-14


def test_x3_independent_data_reduce_to_2d_law(grid3):
    tg = grid3.transverse
    x1, x2 = tg.mesh()
    G = np.exp(-(x1**2 + x2**2) / 4) / (4 * np.pi)
    u1, u2, _ = bs3d_operator(grid3).velocity(None, None, np.broadcast_to(G, grid3.shape).copy())
    v1, v2 = bs2d_operator(tg).velocity(G)
    assert np.abs(u1 - v1).max() < 1e-12
    assert np.abs(u2 - v2).max() < 1e-12


def test_3d_velocity_is_solenoidal(grid3):
    tg = grid3.transverse
    x1, x2 = tg.mesh()
    x3 = grid3.x3[:, None, None]
    f = np.exp(-((x1 - 0.5) ** 2 + x2**2) / 2) * np.exp(-x3**2 / 4)
    # divergence-free vorticity curl(0, f, 0)
    w1 = x3 / 2 * f
    w3 = -(x1 - 0.5) * f
    comps = [SlicedField3D(grid3, w1), SlicedField3D(grid3, np.zeros(grid3.shape)),
             SlicedField3D(grid3, w3)]
    u = biot_savart_3d(comps)
    div = u.divergence()
    inner = (np.abs(x1) < 6) & (np.abs(x2) < 6)
    speed = max(np.abs(c).max() for c in u.components())
    assert np.abs(div[2:-2][:, inner]).max() < 2e-2 * speed


def test_single_precision_option_is_close(grid3):
    tg = grid3.transverse
    x1, x2 = tg.mesh()
    x3 = grid3.x3[:, None, None]
    w = np.exp(-(x1**2 + x2**2) / 2) * (1 + 0.3 * np.sin(x3))
    a = bs3d_operator(grid3).velocity(None, None, w)
    b = bs3d_operator(grid3, single=True).velocity(None, None, w)
    for p, q in zip(a, b):
        assert q.dtype == np.float64
        assert np.abs(p - q).max() <= 1e-5 * np.abs(a[0]).max()


def test_modulated_velocity_gap_vanishes_for_constant_modulation(grid3):
    tg = grid3.transverse
    x1, x2 = tg.mesh()
    G = np.exp(-(x1**2 + x2**2) / 4) / (4 * np.pi)
    Om = np.broadcast_to(0.1 * G, grid3.shape).copy()
    U1, U2 = bs2d_operator(tg).velocity(0.1 * G)
    Ut1, Ut2, g1, g2 = modulated_vortex_velocity(grid3, Om, np.broadcast_to(U1, grid3.shape),
                                                 np.broadcast_to(U2, grid3.shape))
    assert np.abs(g1).max() < 1e-14 and np.abs(g2).max() < 1e-14
