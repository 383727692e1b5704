"""Steady-state covariance: per-momentum Sylvester solves, inverse transform, relaxation."""
import logging
from dataclasses import dataclass, field, replace
from typing import Dict, Optional, Tuple

import numpy as np

from .errors import SingularSymbolError, UnstableSteadyStateError
from .model import ModelSpec, Statistics
from .symbols import TrigPolynomial, drift_and_forcing, drift_eigenvalues

logger = logging.getLogger(__name__)

SINGULAR_CONDITION = 1e12
REFINE_SUBNODES = 8
STABILITY_TOL = 1e-12
PHYSICALITY_TOL = 1e-8
_EYE2 = np.eye(2)


def momentum_grid(n: int) -> np.ndarray:
    """``phi_k = 2 pi (k - floor(n/2)) / n``: symmetric, contains 0 and -pi for even n."""
    if n < 2:
        raise ValueError(f"Grid size must be at least 2, got {n}")
    return 2 * np.pi * (np.arange(n) - n // 2) / n


def sylvester_operator(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Matrix of ``G -> a G + G b`` on row-major ``vec(G)``: ``kron(a, I) + kron(I, b^T)``."""
    a = np.asarray(a, dtype=complex)
    b = np.asarray(b, dtype=complex)
    op = np.einsum("...ik,jl->...ijkl", a, _EYE2) + np.einsum("ik,...lj->...ijkl", _EYE2, b)
    return op.reshape(a.shape[:-2] + (4, 4))


def solve_sylvester_at(x_pair: Tuple[np.ndarray, np.ndarray], y: np.ndarray) -> np.ndarray:
    """Solve ``x(-phi)^T G + G x(phi) = y`` at a single momentum.

    ``x_pair`` is ``(x(phi), x(-phi))``.
    """
    x_plus, x_minus = (np.asarray(m, dtype=complex) for m in x_pair)
    op = sylvester_operator(x_minus.T, x_plus)
    condition = np.linalg.cond(op)
    if not np.isfinite(condition) or condition > SINGULAR_CONDITION:
        raise SingularSymbolError(f"Sylvester system is singular (condition {condition:.3e})")
    return np.linalg.solve(op, np.asarray(y, dtype=complex).reshape(4)).reshape(2, 2)


def _solve_nodes(x: TrigPolynomial, y: TrigPolynomial, phi: np.ndarray
                 ) -> Tuple[np.ndarray, np.ndarray, float]:
    """Vectorised solves; returns values (NaN where singular), the singular mask and the max residual."""
    phi = np.asarray(phi, dtype=complex)
    op = sylvester_operator(np.swapaxes(x(-phi), -1, -2), x(phi))
    rhs = y(phi).reshape(phi.shape + (4,))
    with np.errstate(all="ignore"):
        condition = np.linalg.cond(op)
    singular = ~np.isfinite(condition) | (condition > SINGULAR_CONDITION)

    values = np.full(phi.shape + (2, 2), np.nan, dtype=complex)
    residual = 0.0
    if (~singular).any():
        solved = np.linalg.solve(op[~singular], rhs[~singular][..., None])[..., 0]
        values[~singular] = solved.reshape(-1, 2, 2)
        mismatch = np.einsum("nij,nj->ni", op[~singular], solved) - rhs[~singular]
        scale = np.maximum(np.linalg.norm(rhs[~singular], axis=-1), 1e-300)
        residual = float((np.linalg.norm(mismatch, axis=-1) / scale).max())
    return values, singular, residual


def check_stability(x: TrigPolynomial, phi: np.ndarray) -> np.ndarray:
    """Raise if any drift eigenvalue on ``phi`` has negative real part; returns the eigenvalues."""
    beta = drift_eigenvalues(x, phi)
    unstable = (beta.real < -STABILITY_TOL).any(axis=-1)
    if unstable.any():
        momenta = [float(p) for p in np.asarray(phi)[unstable]]
        raise UnstableSteadyStateError(
            f"Drift has eigenvalues with negative real part at {len(momenta)} momenta "
            f"(min Re = {beta.real.min():.3e}); no physical steady state exists",
            momenta,
        )
    return beta


@dataclass(frozen=True)
class CovarianceSymbol:
    statistics: Statistics
    phi: np.ndarray
    values: np.ndarray
    singular: np.ndarray
    residual: float
    x: TrigPolynomial = field(repr=False)
    y: TrigPolynomial = field(repr=False)

    @property
    def grid_size(self) -> int:
        return len(self.phi)


def covariance_symbol(spec: ModelSpec, n: int = 1024) -> CovarianceSymbol:
    """Steady-state symbol on the ``n``-point momentum grid."""
    x, y = drift_and_forcing(spec)
    phi = momentum_grid(n)
    if spec.statistics == Statistics.BOSON:
        check_stability(x, phi)
    values, singular, residual = _solve_nodes(x, y, phi)
    if singular.any():
        logger.warning(f"{int(singular.sum())} of {n} momenta are singular and will be refined")
    logger.info(f"Solved {n} momenta ({spec.statistics.value}), max relative residual {residual:.2e}")
    return CovarianceSymbol(spec.statistics, phi, values, singular, residual, x, y)


@dataclass(frozen=True)
class CovarianceField:
    statistics: Statistics
    blocks: Dict[int, np.ndarray]
    grid_size: int
    refined: int = 0
    imaginary_residue: float = 0.0

    @property
    def r_max(self) -> int:
        return max(self.blocks)

    def block(self, r: int) -> np.ndarray:
        return self.blocks.get(r, np.zeros((2, 2)))

    def norms(self) -> np.ndarray:
        """Frobenius norm of ``gamma(r)`` for ``r = 0..r_max``."""
        return np.array([np.linalg.norm(self.blocks[r]) for r in range(self.r_max + 1)])

    def restriction(self, n_sites: int) -> np.ndarray:
        """The ``2n x 2n`` matrix with blocks ``gamma(i - j)``; offsets beyond ``r_max`` are zero."""
        matrix = np.zeros((2 * n_sites, 2 * n_sites))
        for i in range(n_sites):
            for j in range(n_sites):
                matrix[2 * i:2 * i + 2, 2 * j:2 * j + 2] = self.block(i - j)
        return matrix


def correlations(sym: CovarianceSymbol, r_max: int) -> CovarianceField:
    """Real-space blocks ``gamma(r) = (1/n) sum_k gamma~(phi_k) exp(i phi_k r)`` for ``|r| <= r_max``.

    Flagged momenta are replaced by a midpoint rule on their grid cell.
    """
    n = sym.grid_size
    if r_max < 0 or r_max > n // 2:
        raise ValueError(f"r_max must lie in [0, {n // 2}] for a {n}-point grid, got {r_max}")
    if n < 8 * r_max:
        logger.warning(f"Grid of {n} points is coarse for r_max={r_max}; aliasing may be visible")

    phi = sym.phi[~sym.singular]
    values = sym.values[~sym.singular]
    weights = np.full(len(phi), 1.0 / n)
    refined = int(sym.singular.sum())
    if refined:
        spacing = 2 * np.pi / n
        offsets = spacing * ((np.arange(REFINE_SUBNODES) + 0.5) / REFINE_SUBNODES - 0.5)
        sub_phi = (sym.phi[sym.singular][:, None] + offsets).ravel()
        sub_values, sub_singular, _ = _solve_nodes(sym.x, sym.y, sub_phi)
        if sub_singular.any():
            raise SingularSymbolError(
                "Sylvester system stays singular after refinement; the steady state is not unique",
                [float(p) for p in sym.phi[sym.singular]],
            )
        phi = np.concatenate([phi, sub_phi])
        values = np.concatenate([values, sub_values])
        weights = np.concatenate([weights, np.full(len(sub_phi), 1.0 / (n * REFINE_SUBNODES))])
        logger.info(f"Refined {refined} singular momenta with {REFINE_SUBNODES} sub-nodes each")

    r = np.arange(-r_max, r_max + 1)
    kernel = weights[None, :] * np.exp(1j * np.outer(r, phi))
    raw = np.einsum("rk,kab->rab", kernel, values)
    imaginary = float(np.abs(raw.imag).max())
    if imaginary > 1e-8:
        logger.warning(f"Real-space blocks carry an imaginary part of {imaginary:.2e}")
    blocks = {int(ri): raw[i].real for i, ri in enumerate(r)}
    return CovarianceField(sym.statistics, blocks, n, refined, imaginary)


def physicality(cov: CovarianceField, n_sites: Optional[int] = None) -> Tuple[bool, float]:
    """Bosons: ``Gamma + i sigma >= 0``; fermions: singular values at most one.

    Returns the verdict and the margin (min eigenvalue, resp. ``1 - max singular value``).
    """
    n_sites = n_sites or min(cov.r_max + 1, 32)
    gamma = cov.restriction(n_sites)
    if cov.statistics == Statistics.BOSON:
        sigma = np.kron(np.eye(n_sites), np.array([[0.0, 1.0], [-1.0, 0.0]]))
        margin = float(np.linalg.eigvalsh(gamma + 1j * sigma).min())
    else:
        margin = float(1.0 - np.linalg.svd(gamma, compute_uv=False).max())
    return margin >= -PHYSICALITY_TOL, margin


def initial_symbol(spec: ModelSpec, n: int, value: Optional[np.ndarray] = None) -> CovarianceSymbol:
    """A momentum-independent symbol (zero by default) to start a relaxation from."""
    x, y = drift_and_forcing(spec)
    phi = momentum_grid(n)
    block = np.zeros((2, 2), dtype=complex) if value is None else np.asarray(value, dtype=complex)
    values = np.broadcast_to(block, (n, 2, 2)).copy()
    return CovarianceSymbol(spec.statistics, phi, values, np.zeros(n, dtype=bool), float("nan"), x, y)


def evolve_symbol(spec: ModelSpec, gamma0: CovarianceSymbol, T: float, steps: int) -> CovarianceSymbol:
    """Integrate ``d gamma~/dt = -x^T(-phi) gamma~ - gamma~ x(phi) + y(phi)`` with fixed-step RK4."""
    if T < 0 or steps < 1:
        raise ValueError(f"Need T >= 0 and steps >= 1, got T={T}, steps={steps}")
    x, y = drift_and_forcing(spec)
    phi = gamma0.phi
    beta = check_stability(x, phi) if spec.statistics == Statistics.BOSON else drift_eigenvalues(x, phi)

    a = np.swapaxes(x(-phi), -1, -2)
    b = x(phi)
    forcing = y(phi)
    dt = T / steps
    if dt * 2 * np.abs(beta).max() > 2.7:
        logger.warning(f"Step {dt:.3g} is near the RK4 stability limit; increase steps")

    def rate(g: np.ndarray) -> np.ndarray:
        return -a @ g - g @ b + forcing

    gamma = np.nan_to_num(gamma0.values.astype(complex))
    for _ in range(steps):
        k1 = rate(gamma)
        k2 = rate(gamma + 0.5 * dt * k1)
        k3 = rate(gamma + 0.5 * dt * k2)
        k4 = rate(gamma + dt * k3)
        gamma = gamma + dt / 6 * (k1 + 2 * k2 + 2 * k3 + k4)

    residual = float(np.abs(a @ gamma + gamma @ b - forcing).max())
    logger.debug(f"Evolved {len(phi)} momenta to T={T}; fixed-point residual {residual:.2e}")
    return replace(gamma0, values=gamma, singular=np.zeros(len(phi), dtype=bool), residual=residual, x=x, y=y)
