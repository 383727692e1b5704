import math

import numpy as np
import pytest

from qcrit.model import NoiseKind, preset_boson_hopping, preset_noise, preset_xy_fermion


@pytest.fixture
def xy_two_site():
    def build(B=0.5, Gamma=1.0, eps=0.5, g=0.7):
        return preset_xy_fermion(B, Gamma).with_noise(preset_noise(NoiseKind.TWO_SITE_FERMION, eps, g))
    return build


@pytest.fixture
def xy_on_site():
    def build(B=2.0, Gamma=1.0, eps=1.0, g=0.7):
        return preset_xy_fermion(B, Gamma).with_noise(preset_noise(NoiseKind.ON_SITE_FERMION, eps, g))
    return build


@pytest.fixture
def boson_on_site():
    def build(t=1.0, v=0.0, eps=1.0, g=math.pi / 4):
        return preset_boson_hopping(t, v).with_noise(preset_noise(NoiseKind.ON_SITE_BOSON, eps, g))
    return build


@pytest.fixture
def fermion_closed_form():
    """Covariance symbol of the two-site fermionic noise, independent of the Hamiltonian."""
    def value(phi, g):
        scalar = -1j * math.sin(g) * np.sin(phi) / (1 + math.cos(g) * np.cos(phi))
        return scalar[..., None, None] * np.eye(2)
    return value
