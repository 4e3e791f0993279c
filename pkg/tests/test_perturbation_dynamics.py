import numpy as np
import pytest

from burgers_vortex.axial_dynamics import AxialProfile
from burgers_vortex.perturbation_dynamics import (
    EvolutionConfig,
    Stepper,
    _x2_norm,
    bump_perturbation,
    component_factors,
    decompose_initial,
    fit_rate,
    forcing,
    linear_propagator,
    make_family,
    modulated_vortex,
    run_evolution,
    scenario,
    term_H,
    term_N,
    term_P,
    velocity_gap,
    write_outputs,
)
from burgers_vortex.semigroup_kernels import AlphaPair
from burgers_vortex.vortex_solver import VortexFamily
from burgers_vortex.weighted_fields import diff4, slice_integrals


@pytest.fixture(scope="module")
def family(grid3):
    return VortexFamily(0.3, 0.1, 0.02, grid=grid3.transverse, nodes=5)


@pytest.fixture(scope="module")
def mv(grid3, family):
    phi = 0.01 * np.exp(-grid3.x3**2)
    dphi = -2 * grid3.x3 * phi
    return modulated_vortex(family, grid3, 0.1, phi, dphi)


def test_config_validation(grid3):
    with pytest.raises(ValueError, match="multiple"):
        EvolutionConfig(0.0, 0.1, grid3, dt=0.3, T=1.0)
    with pytest.raises(ValueError):
        EvolutionConfig(1.0, 0.1, grid3, dt=0.1, T=1.0)
    cfg = EvolutionConfig(0.0, 0.1, grid3, dt=0.02, T=0.1)
    assert cfg.nsteps == 5 and cfg.measure_interval == (-4.0, 4.0)


def test_bump_is_divergence_free_and_mean_free(grid3):
    w = bump_perturbation(grid3, 0.01)
    tg = grid3.transverse
    assert _x2_norm(w, tg, 2.0) == pytest.approx(0.01, rel=1e-12)
    assert np.abs(slice_integrals(w[2], tg)).max() < 1e-15
    div = diff4(w[0], 1, tg.h) + diff4(w[2], 0, grid3.h3, boundary="clamp")
    assert np.abs(div[2:-2]).max() < 5e-3 * np.abs(w).max()  # fd4 truncation at h = 0.375


def test_forcing_is_sum_of_terms(grid3, mv):
    w = bump_perturbation(grid3, 0.01)
    F, u = forcing(grid3, w, mv)
    P, N, H = term_P(grid3, w, mv, u), term_N(grid3, w, u), term_H(grid3, mv)
    assert np.abs(F - (P + N + H)).max() < 1e-14 * max(np.abs(F).max(), 1e-30) + 1e-18
    tg = grid3.transverse
    # third components carry no circulation
    for term in (P[2], N[2]):
        assert np.abs(slice_integrals(term, tg)).max() < 1e-12
    assert np.abs(slice_integrals(H[2], tg)).max() < 1e-10


def test_equilibrium_forcing_vanishes(grid3, family):
    phi = np.full(grid3.N3, 0.005)
    mv0 = modulated_vortex(family, grid3, 0.1, phi, np.zeros(grid3.N3))
    F, _ = forcing(grid3, np.zeros((3,) + grid3.shape), mv0)
    assert np.abs(F).max() < 1e-14


def test_velocity_gap_is_linear_in_modulation(grid3):
    fam = VortexFamily(0.5, 0.1, 0.05, grid=grid3.transverse)
    eps = np.array([0.04, 0.02, 0.01])
    gaps = [velocity_gap(fam, grid3, 0.1, e * np.sin(grid3.x3)) for e in eps]
    slope = np.polyfit(np.log(eps), np.log(gaps), 1)[0]
    assert slope == pytest.approx(1.0, abs=0.1)


def test_linear_propagator_factors(grid3):
    lam = 0.3
    np.testing.assert_allclose(component_factors(lam, 1.0),
                               [np.exp(-1.65), np.exp(-1.35), 1.0])
    w = bump_perturbation(grid3, 0.01)
    out = linear_propagator(grid3, AlphaPair.from_lambda(lam), lam, 0.5, w)
    assert np.abs(slice_integrals(out[2], grid3.transverse)).max() < 1e-14


def test_decompose_initial_roundtrip(grid3):
    phi0 = AxialProfile(grid3.axial, 0.01 * np.exp(-grid3.x3**2))
    fam = make_family(0.0, 0.1, phi0, grid3.transverse, nodes=5)
    W = bump_perturbation(grid3, 0.01)
    Omega0 = W.copy()
    Omega0[2] += fam.omega(0.1 + phi0.values)
    phi, w = decompose_initial(Omega0, fam, 0.1, grid3)
    np.testing.assert_allclose(phi.values, phi0.values, atol=1e-12)
    assert np.abs(w - W).max() < 1e-12
    with pytest.raises(ValueError, match="range"):
        decompose_initial(Omega0 * 3, fam, 0.1, grid3)


def test_fit_rate_on_exponential():
    t = np.linspace(0, 5, 11)
    assert fit_rate(t, 3 * np.exp(-0.7 * t)) == pytest.approx(0.7, rel=1e-12)


def test_equilibrium_has_no_drift(grid3):
    cfg = EvolutionConfig(0.0, 0.1, grid3, dt=0.02, T=0.1, sample_every=1)
    phi0 = AxialProfile(grid3.axial, np.full(grid3.N3, 0.01))
    res = run_evolution(cfg, phi0, np.zeros((3,) + grid3.shape))
    assert np.max(res.diagnostics.column("omega_norm")) <= 1e-8
    assert res.summary["pass_flags"] == {"drift": True, "shift": True}


def test_t_zero_gives_immediate_summary(grid3):
    cfg, phi0, omega0 = scenario("sym-shift", grid3, dt=0.02, T=0.0)
    res = run_evolution(cfg, phi0, omega0)
    assert len(res.diagnostics.rows) == 1
    assert res.summary["pass_flags"] == {}
    assert res.summary["delta_rho_formula"] == pytest.approx(0.02 / np.sqrt(3), rel=1e-3)


def test_short_runs_are_deterministic_and_prefix_consistent(grid3, tmp_path):
    cfg, phi0, omega0 = scenario("sym-shift", grid3, dt=0.02, T=0.12)
    cfg = EvolutionConfig(**{**cfg.__dict__, "sample_every": 2})
    a = run_evolution(cfg, phi0, omega0)
    b = run_evolution(cfg, phi0, omega0)
    pa = write_outputs(a, tmp_path / "a")
    pb = write_outputs(b, tmp_path / "b")
    for x, y in zip(pa, pb):
        assert x.read_bytes() == y.read_bytes()
    short = EvolutionConfig(**{**cfg.__dict__, "T": 0.08})
    c = run_evolution(short, phi0, omega0)
    lines_full = a.diagnostics.to_csv().splitlines()
    lines_short = c.diagnostics.to_csv().splitlines()
    assert lines_full[:len(lines_short)] == lines_short


def test_perturbation_decays_initially(grid3):
    cfg, phi0, omega0 = scenario("bump", grid3, dt=0.02, T=0.2)
    res = run_evolution(cfg, phi0, omega0)
    norms = res.diagnostics.column("omega_norm")
    assert norms[-1] < norms[0]
    assert np.all(np.isfinite(norms))


def test_checkpoints_are_written(grid3, tmp_path):
    cfg, phi0, omega0 = scenario("bump", grid3, dt=0.02, T=0.04)
    cfg = EvolutionConfig(**{**cfg.__dict__, "checkpoint_every": 1})
    run_evolution(cfg, phi0, omega0, out_dir=tmp_path)
    assert sorted(p.name for p in tmp_path.glob("*.bvsnap")) == [
        "omega_step000001.bvsnap", "omega_step000002.bvsnap"]


def test_stepper_caches_vortex(grid3):
    cfg, phi0, omega0 = scenario("sym-shift", grid3, dt=0.02, T=0.02)
    fam = make_family(0.0, 0.1, phi0, grid3.transverse, nodes=5)
    st = Stepper(cfg, fam, phi0)
    assert st.vortex_at(0.02) is st.vortex_at(0.02)
