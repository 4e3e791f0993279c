import numpy as np
import pytest

from burgers_vortex.weighted_fields import (
    Axis,
    Field2D,
    Grid2D,
    Grid3D,
    SlicedField3D,
    diff4,
    laplacian4,
    norm_L2m,
    norm_Lpm,
    norm_X2m,
    project_zero_mean,
    read_snapshot,
    slice_integrals,
    spectral_derivative,
    transverse_integral,
    weight_b,
    write_snapshot,
)


def test_axis_is_cell_centered():
    ax = Axis(2.0, 4)
    np.testing.assert_allclose(ax.x, [-1.5, -0.5, 0.5, 1.5])
    with pytest.raises(ValueError):
        Axis(-1.0, 4)


def test_gaussian_mass_and_weighted_norm(grid2):
    g = Field2D.from_function(grid2, lambda a, b: np.exp(-(a**2 + b**2) / 4) / (4 * np.pi))
    assert transverse_integral(g) == pytest.approx(1.0, abs=1e-12)
    # ||G||^2_{L^2(2)} = int (1+x^2)^2 e^{-x^2/2} dx squared / (4 pi)^2 = (sqrt(2 pi) * 4)^2 / (16 pi^2)
    one_d = np.sqrt(2 * np.pi) * (1 + 2 * 1 + 3)
    assert norm_L2m(g, 2.0) == pytest.approx(one_d / (4 * np.pi), rel=1e-10)
    assert norm_Lpm(g, 0.0, np.inf) == pytest.approx(g.values.max())


def test_weight_and_validation(grid2):
    assert weight_b(0.0, 0.0) == 1.0
    assert weight_b(1.0, 1.0) == pytest.approx(2.0)
    with pytest.raises(ValueError):
        Field2D(grid2, np.full(grid2.shape, np.nan))
    with pytest.raises(ValueError):
        Field2D(grid2, np.zeros((3, 3)))
    with pytest.raises(ValueError):
        norm_L2m(Field2D.zeros(grid2), -1.0)


def test_norm_X2m_is_sup_over_slices(grid3):
    vals = np.zeros(grid3.shape)
    vals[3] = 1e-3
    vals[5] = 2e-3
    f = SlicedField3D(grid3, vals)
    assert norm_X2m(f, 0.0) == pytest.approx(norm_L2m(f.slice(5), 0.0))
    assert norm_X2m([f, f], 0.0) == pytest.approx(np.sqrt(2) * norm_L2m(f.slice(5), 0.0))


def test_projection_removes_mass(grid2, rng):
    f = Field2D(grid2, rng.normal(size=grid2.shape))
    g = Field2D.from_function(grid2, lambda a, b: np.exp(-(a**2 + b**2) / 4))
    p = project_zero_mean(f, g)
    assert abs(transverse_integral(p)) < 1e-12


def test_fourth_order_derivatives():
    ax = Axis(6.0, 128)
    x = ax.x
    f = np.exp(-x**2)
    err = np.abs(diff4(f, 0, ax.h) - (-2 * x * f)).max()
    assert err < 1e-4
    err_coarse = np.abs(diff4(np.exp(-Axis(6.0, 64).x ** 2), 0, Axis(6.0, 64).h)
                        - (-2 * Axis(6.0, 64).x * np.exp(-Axis(6.0, 64).x ** 2))).max()
    assert err_coarse / err > 10  # fourth order: ratio ~ 16
    lap = laplacian4(np.exp(-x[:, None] ** 2 - x[None, :] ** 2), ax.h)
    exact = (4 * (x[:, None] ** 2 + x[None, :] ** 2) - 4) * np.exp(-x[:, None] ** 2 - x[None, :] ** 2)
    assert np.abs(lap - exact).max() < 1e-3
    d = spectral_derivative(np.exp(-x[:, None] ** 2) * np.ones((1, 4)), ax.h, (1, 0))
    assert np.abs(d[:, 0] + 2 * x * np.exp(-x**2)).max() < 1e-8


def test_slice_integrals(grid3):
    x1, x2 = grid3.transverse.mesh()
    g = np.exp(-(x1**2 + x2**2) / 4) / (4 * np.pi)
    vals = np.stack([k * g for k in range(grid3.N3)])
    np.testing.assert_allclose(slice_integrals(vals, grid3.transverse), np.arange(grid3.N3), atol=1e-12)


def test_snapshot_roundtrip_and_corruption(tmp_path, grid3, rng):
    vals = rng.normal(size=(2,) + grid3.shape)
    p = write_snapshot(tmp_path / "a.bvsnap", vals, grid3, {"t": "1"})
    back, header = read_snapshot(p)
    np.testing.assert_array_equal(back, vals)
    assert header["N_3"] == grid3.N3 and header["meta"] == {"t": "1"}
    raw = p.read_bytes()
    (tmp_path / "trunc.bvsnap").write_bytes(raw[:-8])
    with pytest.raises(ValueError):
        read_snapshot(tmp_path / "trunc.bvsnap")
    (tmp_path / "junk.bvsnap").write_bytes(b"hello")
    with pytest.raises(ValueError):
        read_snapshot(tmp_path / "junk.bvsnap")


def test_grid_digests_differ():
    assert Grid2D(12.0, 64).digest() != Grid2D(12.0, 128).digest()
    assert Grid3D(Grid2D(12.0, 64), 8.0, 32).digest() != Grid3D(Grid2D(12.0, 64), 8.0, 64).digest()
