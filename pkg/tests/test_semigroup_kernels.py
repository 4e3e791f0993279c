import numpy as np
import pytest

from burgers_vortex.semigroup_kernels import (
    AlphaPair,
    apply_sg_1d,
    apply_sg_3d_div,
    axial_matrices,
    generator_values,
    hermite_mode,
    kernel_matrices_1d,
    resolvent_apply,
    sg2d_div_values,
    sg2d_values,
    sg3d_values,
    spectrum_check,
)
from burgers_vortex.weighted_fields import Axis, Field2D, Grid2D, SlicedField3D, slice_integrals


def gauss(grid, lam):
    x1, x2 = grid.mesh()
    return np.sqrt(1 - lam**2) / (4 * np.pi) * np.exp(-((1 + lam) * x1**2 + (1 - lam) * x2**2) / 4)


def test_alpha_pair_validation():
    assert AlphaPair.from_lambda(0.5) == AlphaPair(1.5, 0.5)
    with pytest.raises(ValueError):
        AlphaPair.from_lambda(1.0)
    with pytest.raises(ValueError):
        AlphaPair(0.5, 1.5)


@pytest.mark.parametrize("lam", [0.0, 0.5])
def test_gaussian_is_stationary(grid2, lam):
    ap = AlphaPair.from_lambda(lam)
    G = gauss(grid2, lam)
    for t in (0.01, 0.3, 2.0):
        assert np.abs(sg2d_values(grid2, ap, t, G) - G).max() < 1e-6 * G.max()


def test_semigroup_law_and_mass(grid2, rng):
    ap = AlphaPair.from_lambda(0.3)
    x1, x2 = grid2.mesh()
    f = np.exp(-((x1 - 1) ** 2 + (x2 + 0.5) ** 2) / 2) * (1 + 0.3 * x1)
    a = sg2d_values(grid2, ap, 0.7, sg2d_values(grid2, ap, 0.5, f))
    b = sg2d_values(grid2, ap, 1.2, f)
    assert np.abs(a - b).max() < 1e-6 * np.abs(b).max()
    m0 = f.sum()
    assert abs(b.sum() / m0 - 1) < 1e-12


def test_derivative_on_kernel_matches_fd(grid2):
    ap = AlphaPair.from_lambda(0.2)
    x1, x2 = grid2.mesh()
    g = np.exp(-(x1**2 + x2**2) / 2)
    d1g = -x1 * g
    a = sg2d_div_values(grid2, ap, 0.5, g, None)
    b = sg2d_values(grid2, ap, 0.5, d1g)
    assert np.abs(a - b).max() < 1e-6
    assert abs(a.sum()) * grid2.h**2 < 1e-12


def test_small_time_pullback_branch():
    ax = Axis(12.0, 64)
    f = np.exp(-ax.x**2)
    out = apply_sg_1d(1.0, 1e-4, f, ax)  # spectral branch
    assert np.abs(out - f).max() < 1e-3
    assert np.all(np.isfinite(kernel_matrices_1d(12.0, 64, 1.0, 1e-4)[0]))


def test_unresolved_kernel_is_rejected():
    with pytest.raises(ValueError, match="does not resolve"):
        kernel_matrices_1d(60.0, 64, 1.95, 1.0)
    with pytest.raises(ValueError):
        kernel_matrices_1d(12.0, 64, 1.0, 0.0)


@pytest.mark.parametrize("n", [0, 1, 2, 3])
def test_hermite_modes_decay_at_their_eigenvalue(n):
    rate = spectrum_check(1.0, n)
    if n == 0:
        assert abs(rate) <= 1e-3
    else:
        assert rate == pytest.approx(0.5 * n, rel=0.02)


def test_hermite_mode_is_eigenfunction():
    ax = Axis(14.0, 256)
    f = hermite_mode(2.0, 2, ax.x)
    out = apply_sg_1d(2.0, 0.4, f, ax)
    np.testing.assert_allclose(out, np.exp(-2.0 * 0.4) * f, atol=1e-8 * np.abs(f).max())


def test_resolvent_inverts_generator(grid2):
    ap = AlphaPair.from_lambda(0.5)
    x1, x2 = grid2.mesh()
    g1 = Field2D(grid2, np.exp(-((x1 - 0.5) ** 2 + x2**2) / 2))
    g2 = Field2D(grid2, x1 * np.exp(-(x1**2 + x2**2) / 3))
    u, rel = resolvent_apply(ap, mode="div", g=(g1, g2), return_residual=True)
    assert rel < 1e-5
    f = Field2D(grid2, x1 * np.exp(-(x1**2 + x2**2) / 2))
    u, rel = resolvent_apply(ap, f, return_residual=True)
    assert rel < 1e-5
    with pytest.raises(ValueError, match="mean-free"):
        resolvent_apply(ap, Field2D(grid2, np.exp(-(x1**2 + x2**2))))


def test_generator_kills_gaussian(grid2):
    ap = AlphaPair.from_lambda(0.5)
    G = gauss(grid2, 0.5)
    assert np.abs(generator_values(grid2, ap, G)).max() < 1e-6 * G.max()


def test_axial_factor_is_exact_on_gaussians(grid3):
    # (G_c * e^{-x^2/2})(x e^{-t}) is a Gaussian of variance 1 + c, evaluated at x e^{-t}
    t = 0.6
    B, B3 = axial_matrices(grid3.L3, 128, t)
    x = Axis(grid3.L3, 128).x
    f = np.exp(-x**2 / 2)
    c = 1 - np.exp(-2 * t)
    y = x * np.exp(-t)
    exact = np.exp(-y**2 / (2 * (1 + c))) / np.sqrt(1 + c)
    assert np.abs(B @ f - exact).max() < 1e-6
    d_exact = -y / (1 + c) * exact
    assert np.abs(B3 @ f - d_exact).max() < 1e-5


def test_3d_semigroup_conserves_slice_masses_for_constant_axial_data(grid3):
    ap = AlphaPair.from_lambda(0.0)
    G = gauss(grid3.transverse, 0.0)
    w = np.broadcast_to(G, grid3.shape)
    out = sg3d_values(grid3, ap, 0.5, w)
    np.testing.assert_allclose(slice_integrals(out, grid3.transverse), 1.0, atol=1e-8)
    d3 = apply_sg_3d_div(ap, 0.5, SlicedField3D(grid3, w), 3)
    assert np.abs(d3.values).max() < 1e-8
