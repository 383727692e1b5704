import math

import numpy as np
import pytest

from qcrit.errors import SingularSymbolError, UnstableSteadyStateError
from qcrit.entanglement import is_dark_state
from qcrit.model import NoiseKind, build_preset, preset_noise, preset_xy_fermion
from qcrit.steady import (
    correlations, covariance_symbol, evolve_symbol, initial_symbol, momentum_grid, physicality,
    solve_sylvester_at, sylvester_operator,
)
from qcrit.symbols import drift_and_forcing, drift_eigenvalues


def test_momentum_grid_is_symmetric():
    phi = momentum_grid(8)
    np.testing.assert_allclose(phi, -math.pi + 2 * math.pi * np.arange(8) / 8)
    assert 0.0 in phi
    np.testing.assert_allclose(momentum_grid(5), 2 * math.pi * np.arange(-2, 3) / 5)
    with pytest.raises(ValueError):
        momentum_grid(1)


def test_sylvester_operator_matches_matrix_action():
    rng = np.random.default_rng(0)
    a, b, g = (rng.normal(size=(2, 2)) + 1j * rng.normal(size=(2, 2)) for _ in range(3))
    op = sylvester_operator(a, b)
    np.testing.assert_allclose(op @ g.reshape(4), (a @ g + g @ b).reshape(4), atol=1e-13)


def test_single_momentum_solve(xy_two_site):
    x, y = drift_and_forcing(xy_two_site())
    phi = 0.9
    gamma = solve_sylvester_at((x(phi), x(-phi)), y(phi))
    np.testing.assert_allclose(x(-phi).T @ gamma + gamma @ x(phi), y(phi), atol=1e-13)


def test_single_momentum_solve_refuses_singular_systems(xy_two_site):
    x, y = drift_and_forcing(xy_two_site(g=0.0))
    with pytest.raises(SingularSymbolError):
        solve_sylvester_at((x(math.pi), x(-math.pi)), y(math.pi))


def test_fermionic_symbol_matches_closed_form(xy_two_site, fermion_closed_form):
    sym = covariance_symbol(xy_two_site(B=0.5, Gamma=1.0, eps=0.5, g=0.7), 256)
    assert not sym.singular.any()
    assert sym.residual < 1e-12
    np.testing.assert_allclose(sym.values, fermion_closed_form(sym.phi, 0.7), atol=1e-12)


def test_fermionic_real_space_blocks_are_real_odd_and_geometric(xy_two_site):
    g = 0.6
    cov = correlations(covariance_symbol(xy_two_site(g=g), 1024), 20)
    assert cov.imaginary_residue < 1e-12
    for r in range(0, 21):
        np.testing.assert_allclose(cov.block(-r), -cov.block(r), atol=1e-13)
    ratio = cov.block(6)[0, 0] / cov.block(5)[0, 0]
    z = -math.exp(-math.acosh(1 / math.cos(g)))
    assert ratio == pytest.approx(z, rel=1e-9)


def test_fermionic_steady_state_is_physical(xy_two_site):
    cov = correlations(covariance_symbol(xy_two_site(B=1.3, Gamma=0.4, eps=0.9, g=1.1), 512), 32)
    ok, margin = physicality(cov)
    assert ok
    assert margin >= -1e-8


def test_bosonic_on_site_closed_form(boson_on_site):
    t, v, eps, g = 1.0, 0.3, 0.8, 0.9
    sym = covariance_symbol(boson_on_site(t, v, eps, g), 128)
    s, c = math.sin(g), math.cos(g)
    h = t * (np.cos(sym.phi) - v)
    denominator = eps ** 4 * s ** 2 + h ** 2
    d = -eps ** 4 * s * c / denominator
    b = -eps ** 2 * h * c / denominator
    expected = (np.eye(2) / s)[None] + b[:, None, None] * np.diag([1.0, -1.0]) \
        + d[:, None, None] * np.array([[0.0, 1.0], [1.0, 0.0]])
    np.testing.assert_allclose(sym.values, expected, atol=1e-12)


def test_bosonic_steady_state_respects_uncertainty(boson_on_site):
    cov = correlations(covariance_symbol(boson_on_site(v=0.4, g=0.5), 1024), 64)
    ok, margin = physicality(cov)
    assert ok, margin


@pytest.mark.parametrize("g", [-0.5, -1.5, -3.0])
def test_negative_phase_boson_is_unstable(boson_on_site, g):
    with pytest.raises(UnstableSteadyStateError) as excinfo:
        covariance_symbol(boson_on_site(g=g), 64)
    assert len(excinfo.value.momenta) == 64


@pytest.mark.parametrize("g", [0.3, 1.2, -0.8])
def test_two_site_boson_damping_relaxes_to_the_vacuum(g):
    spec = build_preset("boson-hopping", "two-site", {"g": g, "v": 0.2})
    sym = covariance_symbol(spec, 64)
    assert not sym.singular.any()
    np.testing.assert_allclose(sym.values, np.broadcast_to(np.eye(2), (64, 2, 2)), atol=1e-9)
    pure, deviation = is_dark_state(correlations(sym, 16))
    assert pure and deviation <= 1e-8

    # drift is stable everywhere and gapless at phi = +-(pi - g)
    x, _ = drift_and_forcing(spec)
    phi = np.linspace(-math.pi, math.pi, 401)
    assert drift_eigenvalues(x, phi).real.min() >= -1e-12
    closing = np.array([math.pi - g, g - math.pi])
    assert np.abs(drift_eigenvalues(x, closing).real).min(axis=-1).max() <= 1e-12


def test_singular_node_is_refined(xy_two_site):
    sym = covariance_symbol(xy_two_site(g=0.0), 256)
    assert sym.singular.sum() == 1
    assert sym.phi[sym.singular][0] == pytest.approx(-math.pi)
    cov = correlations(sym, 16)
    assert cov.refined == 1
    for block in cov.blocks.values():
        np.testing.assert_allclose(block, 0, atol=1e-14)


def test_zero_noise_has_no_unique_steady_state():
    spec = preset_xy_fermion(0.5, 1.0).with_noise(preset_noise(NoiseKind.TWO_SITE_FERMION, 0.0, 0.5))
    sym = covariance_symbol(spec, 64)
    assert sym.singular.all()
    with pytest.raises(SingularSymbolError):
        correlations(sym, 4)


def test_correlation_range_is_checked(xy_two_site):
    sym = covariance_symbol(xy_two_site(), 64)
    with pytest.raises(ValueError):
        correlations(sym, 40)


def test_bosonic_relaxation_is_exponential(boson_on_site):
    spec = boson_on_site(t=1.0, v=0.0, eps=1.0, g=math.pi / 2)
    steady = covariance_symbol(spec, 64)
    np.testing.assert_allclose(steady.values, np.broadcast_to(np.eye(2), (64, 2, 2)), atol=1e-12)
    for T in (0.25, 1.0):
        evolved = evolve_symbol(spec, initial_symbol(spec, 64), T, 400)
        distance = np.linalg.norm(evolved.values - steady.values, axis=(1, 2))
        initial = np.linalg.norm(steady.values, axis=(1, 2))
        np.testing.assert_allclose(distance / initial, math.exp(-4 * T), rtol=1e-6)


def test_fermionic_relaxation_reaches_fixed_point(xy_two_site):
    # underdamped regime: every mode relaxes at rate 2 a(phi) >= 0.33
    spec = xy_two_site(eps=0.3, g=1.5)
    steady = covariance_symbol(spec, 64)
    evolved = evolve_symbol(spec, initial_symbol(spec, 64), 80.0, 4000)
    np.testing.assert_allclose(evolved.values, steady.values, atol=1e-8)
    assert evolved.residual < 1e-8


def test_evolution_rejects_bad_arguments(xy_two_site):
    spec = xy_two_site()
    with pytest.raises(ValueError):
        evolve_symbol(spec, initial_symbol(spec, 16), 1.0, 0)
