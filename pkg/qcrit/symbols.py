"""Fourier symbols of the Hamiltonian, the bath and the linear relaxation problem.

A symbol is a 2x2-matrix-valued trigonometric polynomial
``p(phi) = sum_j p(j) exp(-i phi j)`` and is evaluated at complex momenta as well.
"""
import logging
from dataclasses import dataclass
from typing import Dict, Mapping, Tuple

import numpy as np

from .model import ModelSpec, Statistics, SYMPLECTIC_UNIT, require_valid

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class TrigPolynomial:
    offsets: np.ndarray       # (K,) int
    coefficients: np.ndarray  # (K, 2, 2) complex

    @classmethod
    def from_blocks(cls, blocks: Mapping[int, np.ndarray]) -> "TrigPolynomial":
        if not blocks:
            return cls.zero()
        offsets = np.array(sorted(blocks), dtype=int)
        coefficients = np.array([np.asarray(blocks[j], dtype=complex) for j in offsets])
        return cls(offsets, coefficients)

    @classmethod
    def zero(cls) -> "TrigPolynomial":
        return cls(np.zeros(1, dtype=int), np.zeros((1, 2, 2), dtype=complex))

    def blocks(self) -> Dict[int, np.ndarray]:
        return {int(j): c for j, c in zip(self.offsets, self.coefficients)}

    def __call__(self, phi) -> np.ndarray:
        phi = np.asarray(phi, dtype=complex)
        phases = np.exp(-1j * phi[..., None] * self.offsets)
        return np.einsum("...k,kab->...ab", phases, self.coefficients)

    def __add__(self, other: "TrigPolynomial") -> "TrigPolynomial":
        merged = {j: c.copy() for j, c in self.blocks().items()}
        for j, c in other.blocks().items():
            merged[j] = merged.get(j, 0) + c
        return TrigPolynomial.from_blocks(merged)

    def __sub__(self, other: "TrigPolynomial") -> "TrigPolynomial":
        return self + (-1.0) * other

    def __rmul__(self, scalar: complex) -> "TrigPolynomial":
        return TrigPolynomial(self.offsets, scalar * self.coefficients)

    def left(self, matrix: np.ndarray) -> "TrigPolynomial":
        """``matrix @ p(phi)``."""
        return TrigPolynomial(self.offsets, np.einsum("ab,kbc->kac", matrix, self.coefficients))

    def right(self, matrix: np.ndarray) -> "TrigPolynomial":
        """``p(phi) @ matrix``."""
        return TrigPolynomial(self.offsets, np.einsum("kab,bc->kac", self.coefficients, matrix))

    def reflect_transpose(self) -> "TrigPolynomial":
        """The polynomial ``p(-phi)^T``, i.e. coefficients ``p(-j)^T``."""
        return TrigPolynomial(-self.offsets[::-1], np.swapaxes(self.coefficients[::-1], 1, 2))

    def is_real_space_real(self, tol: float = 1e-12) -> bool:
        return bool(np.abs(self.coefficients.imag).max() <= tol)


def hamiltonian_symbol(spec: ModelSpec) -> TrigPolynomial:
    require_valid(spec)
    return TrigPolynomial.from_blocks(spec.hamiltonian_blocks())


def bath_symbol(spec: ModelSpec) -> TrigPolynomial:
    """``m(phi) = sum_channels l(phi) l(phi)^dagger`` built from real-space coefficients.

    ``m(d)_{ab} = sum_k l_a(k + d) conj(l_b(k))``; the symbol is Hermitian PSD
    at every real momentum.
    """
    require_valid(spec)
    blocks: Dict[int, np.ndarray] = {}
    for coefficients in spec.lindblad_coefficients():
        for j, lj in coefficients.items():
            for k, lk in coefficients.items():
                blocks[j - k] = blocks.get(j - k, 0) + np.outer(lj, np.conj(lk))
    return TrigPolynomial.from_blocks(blocks)


def split_bath(m: TrigPolynomial) -> Tuple[TrigPolynomial, TrigPolynomial]:
    """Real-space real and imaginary parts ``(m_r, m_i)`` with ``m = m_r + i m_i``."""
    mirrored = m.reflect_transpose()
    m_r = 0.5 * (m + mirrored)
    m_i = -0.5j * (m - mirrored)
    return m_r, m_i


def drift_and_forcing(spec: ModelSpec) -> Tuple[TrigPolynomial, TrigPolynomial]:
    """The pair ``(x, y)`` of the relaxation equation ``d gamma/dt = -x^T(-phi) gamma - gamma x(phi) + y``."""
    h = hamiltonian_symbol(spec)
    m_r, m_i = split_bath(bath_symbol(spec))
    if spec.statistics == Statistics.FERMION:
        x = -2j * h + 2.0 * m_r
        y = 4.0 * m_i
    else:
        x = (2.0 * h + 2.0 * m_i).left(SYMPLECTIC_UNIT)
        y = (4.0 * m_r).left(SYMPLECTIC_UNIT.T).right(SYMPLECTIC_UNIT)
    if not (x.is_real_space_real(1e-10) and y.is_real_space_real(1e-10)):
        logger.warning("Drift or forcing has complex real-space coefficients; check the model")
    return x, y


def eigenvalues_2x2(matrices: np.ndarray) -> np.ndarray:
    """Closed-form eigenvalues of a stack of 2x2 matrices, ordered lexicographically (Re, Im)."""
    matrices = np.asarray(matrices, dtype=complex)
    a, b = matrices[..., 0, 0], matrices[..., 0, 1]
    c, d = matrices[..., 1, 0], matrices[..., 1, 1]
    half_trace = 0.5 * (a + d)
    disc = np.sqrt(0.25 * (a - d) ** 2 + b * c)
    pair = np.stack([half_trace - disc, half_trace + disc], axis=-1)
    return np.sort(pair, axis=-1)


def drift_eigenvalues(x: TrigPolynomial, phi) -> np.ndarray:
    """Eigenvalues ``(beta_1, beta_2)`` of ``x(phi)``; shape ``phi.shape + (2,)``."""
    return eigenvalues_2x2(x(phi))
