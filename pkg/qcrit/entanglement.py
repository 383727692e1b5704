"""Restricted covariance matrices, symplectic spectra and logarithmic negativity."""
import logging
from dataclasses import dataclass
from typing import List, Optional, Sequence, Tuple

import numpy as np
from scipy import linalg

from .errors import NotPositiveError, TailTooFatError
from .model import ModelSpec, Statistics
from .steady import CovarianceField, correlations, covariance_symbol

logger = logging.getLogger(__name__)

TAIL_TOL = 1e-12
DARK_TOL = 1e-6
CHAIN_TOL = 1e-9


@dataclass(frozen=True)
class BlockPartition:
    """Sites ``[start, stop)`` of an ``n``-site chain form subsystem A."""
    n_sites: int
    start: int
    stop: int

    def __post_init__(self):
        if not 0 <= self.start < self.stop <= self.n_sites:
            raise ValueError(f"Block [{self.start}, {self.stop}) does not fit a {self.n_sites}-site chain")

    @classmethod
    def centered(cls, n_sites: int, size: int) -> "BlockPartition":
        start = (n_sites - size) // 2
        return cls(n_sites, start, start + size)

    @property
    def size(self) -> int:
        return self.stop - self.start


def symplectic_form(n_sites: int) -> np.ndarray:
    return np.kron(np.eye(n_sites), np.array([[0.0, 1.0], [-1.0, 0.0]]))


def assemble_restriction(cov: CovarianceField, n_sites: int) -> np.ndarray:
    """``2n x 2n`` covariance of ``n`` consecutive sites."""
    if n_sites - 1 > cov.r_max:
        norms = cov.norms()
        tail = norms[-1] / max(norms.max(), 1e-300)
        if tail > TAIL_TOL:
            raise TailTooFatError(
                f"Need offsets up to {n_sites - 1} but only {cov.r_max} were computed and "
                f"|gamma(r_max)|/|gamma(0)| = {tail:.2e}"
            )
        logger.debug(f"Treating offsets beyond {cov.r_max} as zero (relative tail {tail:.1e})")
    return cov.restriction(n_sites)


def symplectic_spectrum(gamma: np.ndarray) -> np.ndarray:
    """Williamson values of a bosonic covariance: positive eigenvalues of ``i sigma gamma``, ascending."""
    gamma = np.asarray(gamma, dtype=float)
    n = gamma.shape[0] // 2
    if np.linalg.eigvalsh(0.5 * (gamma + gamma.T)).min() <= 0:
        raise NotPositiveError("Covariance matrix is not positive definite")
    eigenvalues = np.linalg.eigvals(1j * symplectic_form(n) @ gamma).real
    return np.sort(np.sort(eigenvalues)[n:])


def partial_transpose(gamma: np.ndarray, part: BlockPartition) -> np.ndarray:
    """Bosonic partial transpose: ``u_2 -> -u_2`` on the sites of A."""
    signs = np.ones(gamma.shape[0])
    signs[2 * part.start + 1:2 * part.stop:2] = -1.0
    return signs[:, None] * gamma * signs[None, :]


def _symmetric_power(matrix: np.ndarray, power: float) -> np.ndarray:
    w, v = linalg.eigh(0.5 * (matrix + matrix.T))
    return (v * w ** power) @ v.T


@dataclass(frozen=True)
class NegativityResult:
    e_n: float
    l1_bound: float
    trace_bound: float
    spectrum_bound: float
    spectrum: Tuple[float, ...]

    @property
    def chain_holds(self) -> bool:
        return (self.e_n <= self.spectrum_bound + CHAIN_TOL
                and self.spectrum_bound <= self.trace_bound * (1 + 1e-6) + CHAIN_TOL
                and self.trace_bound <= self.l1_bound + CHAIN_TOL)


def log_negativity(gamma: np.ndarray, part: BlockPartition) -> NegativityResult:
    """``E_N = sum log2 max(1, 1/lambda)`` over the partially transposed spectrum, with its l1 bound."""
    if gamma.shape != (2 * part.n_sites, 2 * part.n_sites):
        raise ValueError(f"Covariance shape {gamma.shape} does not match a {part.n_sites}-site chain")
    transposed = partial_transpose(gamma, part)
    spectrum = symplectic_spectrum(transposed)
    e_n = float(np.sum(np.log2(np.maximum(1.0, 1.0 / spectrum))))

    root = _symmetric_power(transposed, 0.5)
    sigma = symplectic_form(part.n_sites)
    k = root @ sigma.T @ transposed @ sigma @ root
    deviation = _symmetric_power(k, -0.5) - np.eye(len(k))
    l1_bound = float(np.abs(deviation).sum())
    trace_bound = float(np.abs(linalg.eigvalsh(0.5 * (deviation + deviation.T))).sum())
    # K^{-1/2} has eigenvalues 1/lambda, each twice
    spectrum_bound = float(2 * np.abs(1.0 / spectrum - 1.0).sum())

    result = NegativityResult(e_n, l1_bound, trace_bound, spectrum_bound, tuple(float(s) for s in spectrum))
    if not result.chain_holds:
        logger.error(f"Negativity bound chain violated: E_N={e_n:.6g}, bounds "
                     f"{spectrum_bound:.6g} <= {trace_bound:.6g} <= {l1_bound:.6g}")
    return result


def is_dark_state(cov: CovarianceField, n_sites: Optional[int] = None) -> Tuple[bool, float]:
    """Purity test: all symplectic values (bosons) or singular values (fermions) equal one."""
    n_sites = n_sites or min(cov.r_max + 1, 16)
    gamma = assemble_restriction(cov, n_sites)
    if cov.statistics == Statistics.BOSON:
        values = symplectic_spectrum(gamma)
    else:
        values = linalg.svdvals(gamma)
    deviation = float(np.abs(values - 1.0).max())
    return deviation <= DARK_TOL, deviation


@dataclass(frozen=True)
class AreaLawRow:
    size: int
    e_n: float
    l1_bound: float
    chain_holds: bool = True


@dataclass(frozen=True)
class AreaLawTable:
    n_sites: int
    rows: Tuple[AreaLawRow, ...]
    plateau: float

    def saturated(self, tol: float = 0.2) -> bool:
        """Whether the l1 bound stays within ``tol`` of its value at the largest block."""
        bounds = np.array([row.l1_bound for row in self.rows])
        return bool(np.all(np.abs(bounds - self.plateau) <= tol * max(self.plateau, 1e-12) + 1e-12))


def area_law_scan(spec: ModelSpec, n_sites: int, sizes: Sequence[int], n_grid: Optional[int] = None) -> AreaLawTable:
    """Negativity of centred blocks of each size inside an ``n_sites`` chain."""
    if spec.statistics != Statistics.BOSON:
        raise ValueError("Logarithmic negativity is implemented for bosonic models only")
    n_grid = n_grid or max(1024, 1 << int(np.ceil(np.log2(8 * n_sites))))
    cov = correlations(covariance_symbol(spec, n_grid), n_sites - 1)
    gamma = assemble_restriction(cov, n_sites)
    rows: List[AreaLawRow] = []
    for size in sizes:
        result = log_negativity(gamma, BlockPartition.centered(n_sites, size))
        rows.append(AreaLawRow(size, result.e_n, result.l1_bound, result.chain_holds))
        logger.debug(f"|A|={size}: E_N={result.e_n:.6g}, l1={result.l1_bound:.6g}")
    return AreaLawTable(n_sites, tuple(rows), rows[-1].l1_bound if rows else 0.0)
