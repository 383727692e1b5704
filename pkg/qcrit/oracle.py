"""Independent cross-checks on a finite periodic ring.

``dense_lyapunov`` solves the real-space fixed-point equation with a dense
Bartels-Stewart solve; ``exact_master_equation`` builds the many-body Liouvillian
of a small fermionic ring and reads the covariance off its kernel.
"""
import logging
from dataclasses import dataclass
from typing import Dict, List, Mapping

import numpy as np
from scipy import linalg, sparse

from .errors import DegenerateKernelError, ModelError, SingularSymbolError
from .model import ModelSpec, Statistics, require_valid
from .steady import CovarianceField
from .symbols import drift_and_forcing

logger = logging.getLogger(__name__)

MAX_EXACT_SITES = 5
PAIR_SUM_TOL = 1e-10
KERNEL_TOL = 1e-9
COMPARE_TOL = 1e-8


def _fold(blocks: Mapping[int, np.ndarray], L: int, width: int) -> np.ndarray:
    """Circulant ring matrix with block ``(i, j)`` equal to the sum of ``blocks[d]`` over ``d = i - j mod L``."""
    matrix = np.zeros((width * L, width * L), dtype=complex)
    for d, block in blocks.items():
        block = np.asarray(block).reshape(width, -1)
        for j in range(L):
            i = (j + d) % L
            matrix[width * i:width * i + width, width * j:width * j + block.shape[1]] += block
    return matrix


@dataclass(frozen=True)
class FiniteRing:
    L: int
    statistics: Statistics
    x: np.ndarray
    y: np.ndarray

    @classmethod
    def from_spec(cls, spec: ModelSpec, L: int) -> "FiniteRing":
        if L < 1:
            raise ValueError(f"Ring length must be positive, got {L}")
        x_sym, y_sym = drift_and_forcing(spec)
        x = _fold(x_sym.blocks(), L, 2)
        y = _fold(y_sym.blocks(), L, 2)
        if max(np.abs(x.imag).max(), np.abs(y.imag).max()) > 1e-10:
            logger.warning("Ring drift or forcing has a non-negligible imaginary part")
        return cls(L, spec.statistics, x.real, y.real)


@dataclass(frozen=True)
class DenseSolution:
    statistics: Statistics
    covariance: np.ndarray
    residual: float
    physical: bool
    margin: float

    @property
    def L(self) -> int:
        return self.covariance.shape[0] // 2


def _physical(statistics: Statistics, gamma: np.ndarray):
    if statistics == Statistics.BOSON:
        sigma = np.kron(np.eye(len(gamma) // 2), np.array([[0.0, 1.0], [-1.0, 0.0]]))
        margin = float(np.linalg.eigvalsh(gamma + 1j * sigma).min())
    else:
        margin = float(1.0 - linalg.svdvals(gamma).max())
    return margin >= -1e-8, margin


def dense_lyapunov(ring: FiniteRing) -> DenseSolution:
    """Solve ``X^T gamma + gamma X = Y`` directly."""
    eigenvalues = linalg.eigvals(ring.x)
    pair_sums = np.abs(eigenvalues[:, None] + eigenvalues[None, :])
    scale = 1.0 + np.abs(eigenvalues).max()
    if pair_sums.min() < PAIR_SUM_TOL * scale:
        raise SingularSymbolError(
            f"Ring fixed-point equation is singular (min |lambda_a + lambda_b| = {pair_sums.min():.2e})"
        )
    gamma = linalg.solve_sylvester(ring.x.T, ring.x, ring.y)
    residual = float(np.abs(ring.x.T @ gamma + gamma @ ring.x - ring.y).max())
    if residual > 1e-10 * max(1.0, np.abs(ring.y).max()):
        logger.warning(f"Dense Sylvester solve left residual {residual:.2e}")
    physical, margin = _physical(ring.statistics, gamma)
    if not physical:
        logger.warning(f"Dense ring solution is unphysical (margin {margin:.2e})")
    return DenseSolution(ring.statistics, gamma, residual, physical, margin)


@dataclass(frozen=True)
class ComparisonReport:
    ok: bool
    max_deviation: float
    r_range: int
    message: str = ""


def compare(field: CovarianceField, dense: DenseSolution, tol: float = COMPARE_TOL) -> ComparisonReport:
    """Max deviation between symbol-route blocks and the dense ring for ``|r| <= L/4``."""
    if field.statistics != dense.statistics:
        raise ValueError(
            f"Cannot compare a {field.statistics.value}ic field with a {dense.statistics.value}ic ring"
        )
    L = dense.L
    r_range = min(L // 4, field.r_max)
    deviation = 0.0
    for r in range(-r_range, r_range + 1):
        i = r % L
        block = dense.covariance[2 * i:2 * i + 2, 0:2]
        deviation = max(deviation, float(np.abs(block - field.block(r)).max()))
    ok = deviation <= tol
    message = "" if ok else f"symbol and dense routes differ by {deviation:.3e} (> {tol:g})"
    return ComparisonReport(ok, deviation, r_range, message)


# --- Exact master equation for small fermionic rings ---

_LOWER = sparse.csr_matrix(np.array([[0.0, 1.0], [0.0, 0.0]]))
_PARITY = sparse.csr_matrix(np.diag([1.0, -1.0]))
_ID2 = sparse.identity(2, format="csr")


def majorana_operators(L: int) -> List[sparse.csr_matrix]:
    """``[w_{1,0}, w_{2,0}, w_{1,1}, ...]`` via Jordan-Wigner strings."""
    operators = []
    for site in range(L):
        factors = [_PARITY] * site + [_LOWER] + [_ID2] * (L - site - 1)
        f = factors[0]
        for factor in factors[1:]:
            f = sparse.kron(f, factor, format="csr")
        operators.append((f + f.conj().T).tocsr())
        operators.append((1j * (f - f.conj().T)).tocsr())
    return operators


@dataclass(frozen=True)
class ExactSolution:
    rho: np.ndarray
    covariance: np.ndarray
    kernel_dimension: int
    lyapunov: DenseSolution
    deviation: float


def _liouvillian(hamiltonian, jumps) -> np.ndarray:
    """Column-stacking superoperator: ``vec(A rho B) = (B^T kron A) vec(rho)``."""
    dim = hamiltonian.shape[0]
    eye = sparse.identity(dim, format="csr")
    generator = -1j * (sparse.kron(eye, hamiltonian) - sparse.kron(hamiltonian.T, eye))
    for jump in jumps:
        decay = (jump.conj().T @ jump).tocsr()
        generator = generator + sparse.kron(jump.conj(), jump) \
            - 0.5 * sparse.kron(eye, decay) - 0.5 * sparse.kron(decay.T, eye)
    return generator.toarray()


def exact_master_equation(spec: ModelSpec, L: int) -> ExactSolution:
    """Many-body steady state of a fermionic ring of ``L <= 5`` sites and its covariance."""
    require_valid(spec)
    if spec.statistics != Statistics.FERMION:
        raise ModelError("The exact master-equation oracle is implemented for fermionic models only")
    if not 1 <= L <= MAX_EXACT_SITES:
        raise ValueError(f"Exact oracle supports 1 <= L <= {MAX_EXACT_SITES}, got {L}")

    w = majorana_operators(L)
    couplings = _fold(spec.hamiltonian_blocks(), L, 2)
    hamiltonian = sum(0.5 * couplings[a, b] * (w[a] @ w[b])
                      for a in range(2 * L) for b in range(2 * L) if couplings[a, b] != 0)
    if isinstance(hamiltonian, int):
        hamiltonian = sparse.csr_matrix((2 ** L, 2 ** L), dtype=complex)

    jumps = []
    for coefficients in spec.lindblad_coefficients():
        for site in range(L):
            vector: Dict[int, complex] = {}
            for d, l in coefficients.items():
                target = (site + d) % L
                for nu in range(2):
                    vector[2 * target + nu] = vector.get(2 * target + nu, 0) + l[nu]
            jumps.append(sum(c * w[a] for a, c in vector.items() if c != 0))
    jumps = [j for j in jumps if not isinstance(j, int)]

    generator = _liouvillian(hamiltonian, jumps)
    _, singular_values, vh = linalg.svd(generator)
    kernel = int(np.sum(singular_values < KERNEL_TOL * singular_values[0]))
    if kernel != 1:
        raise DegenerateKernelError(f"Liouvillian kernel has dimension {kernel}", kernel)

    dim = 2 ** L
    rho = vh[-1].conj().reshape(dim, dim, order="F")
    rho = rho / np.trace(rho)
    rho = 0.5 * (rho + rho.conj().T)

    covariance = np.zeros((2 * L, 2 * L))
    for a in range(2 * L):
        for b in range(2 * L):
            commutator = (w[a] @ w[b] - w[b] @ w[a]).toarray()
            covariance[a, b] = (0.5j * np.trace(rho @ commutator)).real

    lyapunov = dense_lyapunov(FiniteRing.from_spec(spec, L))
    deviation = float(np.abs(covariance - lyapunov.covariance).max())
    logger.info(f"Exact {L}-site steady state agrees with the Lyapunov route to {deviation:.2e}")
    return ExactSolution(rho, covariance, kernel, lyapunov, deviation)
