import warnings

import numpy as np
import pytest

from burgers_vortex.vortex_solver import (
    VortexFamily,
    VortexParams,
    VortexSolverError,
    fixed_point_map,
    gaussian_profile,
    rho_derivatives,
    solve_vortex,
)
from burgers_vortex.weighted_fields import Field2D, Grid2D, norm_L2m, transverse_integral


def test_params_validation():
    with pytest.raises(ValueError):
        VortexParams(1.0, 0.1)
    with pytest.raises(ValueError):
        VortexParams(0.5, 0.1, m=1.0)
    with pytest.raises(ValueError):
        VortexParams(0.5, float("nan"))


def test_gaussian_profile_unit_mass_and_derivatives(grid2):
    G = gaussian_profile(0.4)
    assert transverse_integral(G.field(grid2)) == pytest.approx(1.0, abs=1e-8)
    x = np.array([0.3, -1.2])
    y = np.array([0.7, 0.1])
    eps = 1e-6
    np.testing.assert_allclose(G.d1(x, y), (G(x + eps, y) - G(x - eps, y)) / (2 * eps), rtol=1e-6)
    np.testing.assert_allclose(G.d2(x, y), (G(x, y + eps) - G(x, y - eps)) / (2 * eps), rtol=1e-6)


def test_symmetric_case_has_no_correction(grid2):
    sol = solve_vortex(VortexParams(0.0, 0.3), grid2)
    assert sol.correction_norm <= 1e-12
    assert sol.iterations <= 2
    np.testing.assert_allclose(sol.Omega_B.values, 0.3 * gaussian_profile(0.0).field(grid2).values,
                               atol=1e-14)


def test_asymmetric_vortex_is_mean_free_and_quadratic(grid2):
    ratios = []
    for rho in (0.1, 0.2, 0.4):
        sol = solve_vortex(VortexParams(0.5, rho), grid2, derivatives=False)
        assert abs(transverse_integral(sol.omega_core)) < 1e-12
        assert transverse_integral(sol.Omega_B) == pytest.approx(rho, abs=1e-8)
        assert max(sol.update_ratios) <= 0.75
        assert sol.certified
        ratios.append(sol.correction_norm / rho**2)
    assert (max(ratios) - min(ratios)) / min(ratios) < 0.1


def test_solution_is_a_fixed_point(grid2):
    sol = solve_vortex(VortexParams(0.5, 0.3), grid2, tol=1e-12, derivatives=False)
    again = fixed_point_map(sol.params, sol.omega_core)
    diff = norm_L2m(again - sol.omega_core, 2.0)
    assert diff <= 1e-10 * norm_L2m(sol.Omega_B, 2.0)


def test_fixed_point_map_requires_mean_free_input(grid2):
    x1, x2 = grid2.mesh()
    with pytest.raises(ValueError, match="mean-free"):
        fixed_point_map(VortexParams(0.5, 0.1), Field2D(grid2, np.exp(-(x1**2 + x2**2))))


def test_rho_derivatives_carry_unit_and_zero_mass(grid2):
    d1, d2 = rho_derivatives(VortexParams(0.5, 0.2), grid2)
    assert transverse_integral(d1) == pytest.approx(1.0, abs=1e-7)
    assert abs(transverse_integral(d2)) < 1e-7
    # d^2 Omega / d rho^2 is twice the quadratic coefficient, nearly rho-independent
    sol = solve_vortex(VortexParams(0.5, 0.2), grid2, derivatives=False)
    assert norm_L2m(d2, 2.0) == pytest.approx(2 * sol.correction_norm / 0.2**2, rel=0.05)


def test_divergent_iteration_raises(grid2):
    with pytest.raises(VortexSolverError) as info:
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            solve_vortex(VortexParams(0.5, 60.0), grid2, max_iter=60, derivatives=False)
    assert len(info.value.trace) >= 4


def test_box_too_small_for_lambda_is_refused(grid2):
    with pytest.raises(VortexSolverError, match="too small"):
        solve_vortex(VortexParams(0.9, 0.1), grid2)


def test_family_interpolates_direct_solves(grid2):
    fam = VortexFamily(0.5, 0.2, 0.05, grid=grid2, nodes=7)
    lo, hi = fam.rho_range
    assert lo == pytest.approx(0.15) and hi == pytest.approx(0.25)
    rho = 0.2137
    direct = solve_vortex(VortexParams(0.5, rho), grid2, tol=1e-12, derivatives=False)
    err = np.abs(fam.omega(rho) - direct.Omega_B.values).max()
    assert err < 1e-10
    u1, u2 = fam.velocity(rho)
    assert np.abs(u1 - direct.U_B.u1).max() < 1e-10
    # derivative of the interpolant has unit mass
    assert fam.omega(rho, order=1).sum() * grid2.h**2 == pytest.approx(1.0, abs=1e-8)
    vals = fam.omega(np.array([0.18, 0.22]))
    assert vals.shape == (2,) + grid2.shape
