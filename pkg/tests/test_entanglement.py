import math

import numpy as np
import pytest

from qcrit.entanglement import (
    BlockPartition, area_law_scan, assemble_restriction, is_dark_state, log_negativity, partial_transpose,
    symplectic_form, symplectic_spectrum,
)
from qcrit.errors import NotPositiveError, TailTooFatError
from qcrit.steady import correlations, covariance_symbol


def _two_mode_squeezed(r):
    """Pure two-mode squeezed vacuum in (u1, u2) site-major order."""
    c, s = math.cosh(2 * r), math.sinh(2 * r)
    return np.array([
        [c, 0, s, 0],
        [0, c, 0, -s],
        [s, 0, c, 0],
        [0, -s, 0, c],
    ])


def _random_covariance(n, seed):
    rng = np.random.default_rng(seed)
    a = rng.normal(size=(2 * n, 2 * n))
    return a @ a.T + 2 * n * np.eye(2 * n)


def test_symplectic_spectrum_of_thermal_state():
    gamma = np.diag([3.0, 3.0, 1.5, 1.5])
    np.testing.assert_allclose(symplectic_spectrum(gamma), [1.5, 3.0])


def test_symplectic_spectrum_is_invariant_under_symplectic_maps():
    gamma = np.diag([2.0, 2.0, 1.2, 1.2])
    r = 0.4
    squeeze = np.diag([math.exp(r), math.exp(-r), 1.0, 1.0])
    sigma = symplectic_form(2)
    np.testing.assert_allclose(squeeze @ sigma @ squeeze.T, sigma)
    np.testing.assert_allclose(symplectic_spectrum(squeeze @ gamma @ squeeze.T), [1.2, 2.0], atol=1e-12)


def test_symplectic_spectrum_requires_positive_matrix():
    with pytest.raises(NotPositiveError):
        symplectic_spectrum(np.diag([1.0, -1.0]))


def test_partial_transpose_flips_second_quadrature_of_block():
    gamma = np.arange(36, dtype=float).reshape(6, 6)
    flipped = partial_transpose(gamma, BlockPartition(3, 1, 2))
    assert flipped[3, 0] == -gamma[3, 0]
    assert flipped[3, 3] == gamma[3, 3]
    assert flipped[2, 0] == gamma[2, 0]


def test_block_partition_is_checked():
    with pytest.raises(ValueError):
        BlockPartition(4, 2, 2)
    part = BlockPartition.centered(40, 10)
    assert (part.start, part.stop, part.size) == (15, 25, 10)


@pytest.mark.parametrize("r", [0.2, 0.7])
def test_negativity_of_two_mode_squeezed_state(r):
    result = log_negativity(_two_mode_squeezed(r), BlockPartition(2, 0, 1))
    assert result.e_n == pytest.approx(2 * r / math.log(2), rel=1e-10)
    assert result.chain_holds


def test_product_state_has_no_negativity():
    result = log_negativity(np.eye(6), BlockPartition(3, 0, 2))
    assert result.e_n == 0
    assert result.l1_bound == pytest.approx(0, abs=1e-12)


@pytest.mark.parametrize("seed", range(4))
def test_bound_chain_on_random_states(seed):
    gamma = _random_covariance(3, seed)
    result = log_negativity(gamma, BlockPartition(3, 0, 1))
    assert result.chain_holds
    assert result.trace_bound == pytest.approx(result.spectrum_bound, rel=1e-8)


def test_k_matrix_spectrum_matches_symplectic_values():
    gamma = _random_covariance(2, 11)
    part = BlockPartition(2, 1, 2)
    transposed = partial_transpose(gamma, part)
    spectrum = symplectic_spectrum(transposed)
    w, v = np.linalg.eigh(transposed)
    root = (v * np.sqrt(w)) @ v.T
    sigma = symplectic_form(2)
    k = root @ sigma.T @ transposed @ sigma @ root
    np.testing.assert_allclose(np.sort(np.sqrt(np.linalg.eigvalsh(k))), np.repeat(spectrum, 2), rtol=1e-10)


def test_restriction_refuses_fat_tails(xy_two_site):
    cov = correlations(covariance_symbol(xy_two_site(g=0.1), 256), 8)
    with pytest.raises(TailTooFatError):
        assemble_restriction(cov, 20)


def test_restriction_is_toeplitz(xy_two_site):
    cov = correlations(covariance_symbol(xy_two_site(g=0.9), 256), 8)
    gamma = assemble_restriction(cov, 5)
    np.testing.assert_allclose(gamma[4:6, 0:2], cov.block(2))
    np.testing.assert_allclose(gamma[0:2, 4:6], cov.block(-2))
    np.testing.assert_allclose(gamma, -gamma.T, atol=1e-13)


def test_pure_bosonic_noise_gives_dark_state(boson_on_site):
    cov = correlations(covariance_symbol(boson_on_site(eps=1.0, g=math.pi / 2), 256), 16)
    pure, deviation = is_dark_state(cov)
    assert pure, deviation


def test_mixed_bosonic_state_is_not_dark(boson_on_site):
    cov = correlations(covariance_symbol(boson_on_site(eps=1.0, g=math.pi / 4), 256), 16)
    pure, deviation = is_dark_state(cov)
    assert not pure
    assert deviation > 1e-3


def test_fermionic_vacuum_pumping_is_dark(xy_on_site):
    # number-conserving hopping with L proportional to a single creation operator
    cov = correlations(covariance_symbol(xy_on_site(B=0.5, Gamma=0.0, eps=0.7, g=math.pi / 2), 256), 16)
    pure, deviation = is_dark_state(cov)
    assert pure, deviation


def test_two_site_fermionic_noise_is_mixed(xy_two_site):
    cov = correlations(covariance_symbol(xy_two_site(g=0.8), 256), 16)
    assert not is_dark_state(cov)[0]


def test_gapped_bosonic_chain_has_area_law(boson_on_site):
    table = area_law_scan(boson_on_site(t=1.0, v=2.0, eps=1.0, g=math.pi / 4), 40, range(2, 11))
    bounds = [row.l1_bound for row in table.rows]
    negativities = [row.e_n for row in table.rows]
    assert max(bounds) / min(bounds) <= 1.2
    assert max(negativities) - min(negativities) <= 0.2 * max(negativities) + 1e-12
    assert all(row.chain_holds for row in table.rows)
    assert table.saturated()


def test_area_law_scan_is_bosonic_only(xy_two_site):
    with pytest.raises(ValueError):
        area_law_scan(xy_two_site(), 10, [2])


def test_vacuum_has_no_entanglement(boson_on_site):
    table = area_law_scan(boson_on_site(t=1.0, v=0.0, eps=1.0, g=math.pi / 2), 24, range(2, 9))
    for row in table.rows:
        assert row.e_n == pytest.approx(0, abs=1e-10)
        assert row.l1_bound == pytest.approx(0, abs=1e-8)


def _deficit(table):
    return abs(table.rows[0].l1_bound - table.plateau) / table.plateau


def test_plateau_is_reached_later_for_longer_correlations(boson_on_site):
    short = area_law_scan(boson_on_site(t=1.0, v=2.0, eps=1.0, g=math.pi / 4), 40, range(2, 11))
    long = area_law_scan(boson_on_site(t=1.0, v=1.0, eps=1.0, g=0.2), 40, range(2, 11))
    assert _deficit(long) > _deficit(short)
