"""Declarative quasi-free lattice models: stencils, named parameters and presets.

Coordinates are ordered site-major, ``(u_{1,j}, u_{2,j})`` for bosons with
``u_1 = b + b†`` and ``u_2 = i(b - b†)``, and ``(w_{1,j}, w_{2,j})`` for fermions with
``w_1 = f + f†`` and ``w_2 = i(f - f†)``. A stencil entry at offset ``j`` is the 2x2
block coupling site ``j`` to site ``0``.
"""
import logging
import math
from enum import Enum
from typing import Dict, Iterable, List, Mapping, Optional, Set, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, Field

from .errors import ModelError

logger = logging.getLogger(__name__)

# Couplings farther apart than this are not "finite range" for our purposes.
MAX_RANGE = 64

PAULI_X = np.array([[0, 1], [1, 0]], dtype=complex)
PAULI_Y = np.array([[0, -1j], [1j, 0]], dtype=complex)
IDENTITY = np.eye(2, dtype=complex)
# sigma_2 = i sigma_y
SYMPLECTIC_UNIT = np.array([[0.0, 1.0], [-1.0, 0.0]])

Matrix2 = Tuple[Tuple[float, float], Tuple[float, float]]
_ZERO2: Matrix2 = ((0.0, 0.0), (0.0, 0.0))


class Statistics(str, Enum):
    BOSON = "boson"
    FERMION = "fermion"


class NoiseKind(str, Enum):
    ON_SITE_FERMION = "on-site-fermion"
    TWO_SITE_FERMION = "two-site-fermion"
    ON_SITE_BOSON = "on-site-boson"
    TWO_SITE_BOSON = "two-site-boson"

    @property
    def statistics(self) -> Statistics:
        return Statistics.FERMION if self.value.endswith("fermion") else Statistics.BOSON


class _Frozen(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)


class Block(_Frozen):
    """A 2x2 complex matrix stored as separate real and imaginary parts."""
    re: Matrix2 = _ZERO2
    im: Matrix2 = _ZERO2

    @classmethod
    def from_array(cls, matrix: np.ndarray) -> "Block":
        matrix = np.asarray(matrix, dtype=complex)
        if matrix.shape != (2, 2):
            raise ValueError(f"Blocks must be 2x2, got shape {matrix.shape}")
        as_pairs = lambda m: tuple(tuple(float(v) for v in row) for row in m)
        return cls(re=as_pairs(matrix.real), im=as_pairs(matrix.imag))

    def to_array(self) -> np.ndarray:
        return np.array(self.re, dtype=float) + 1j * np.array(self.im, dtype=float)


def _product(names: Iterable[str], params: Mapping[str, float]) -> float:
    value = 1.0
    for name in names:
        try:
            value *= params[name]
        except KeyError:
            raise ModelError(f"Parameter '{name}' is referenced but not bound") from None
    return value


class HamiltonianTerm(_Frozen):
    """``prod(params[f] for f in factors) * blocks``."""
    factors: Tuple[str, ...] = ()
    blocks: Dict[int, Block]


class HamiltonianStencil(_Frozen):
    terms: Tuple[HamiltonianTerm, ...] = ()

    def parameter_names(self) -> Set[str]:
        return {name for term in self.terms for name in term.factors}

    def offsets(self) -> List[int]:
        return sorted({j for term in self.terms for j in term.blocks})

    def blocks(self, params: Mapping[str, float]) -> Dict[int, np.ndarray]:
        """Assembled blocks ``h(j)`` for the given parameter values."""
        assembled: Dict[int, np.ndarray] = {}
        for term in self.terms:
            scale = _product(term.factors, params)
            for offset, block in term.blocks.items():
                assembled.setdefault(offset, np.zeros((2, 2), dtype=complex))
                assembled[offset] = assembled[offset] + scale * block.to_array()
        return dict(sorted(assembled.items()))


class LindbladTerm(_Frozen):
    """``prod(params[f]) * exp(i params[phase]) * vectors``; vectors are [re1, im1, re2, im2]."""
    factors: Tuple[str, ...] = ()
    phase: Optional[str] = None
    vectors: Dict[int, Tuple[float, float, float, float]]


class LindbladStencil(_Frozen):
    """One Lindblad channel ``L = l^T r`` acting around site 0; translates give the rest."""
    name: str = "channel"
    statistics: Optional[Statistics] = None
    terms: Tuple[LindbladTerm, ...] = ()
    params: Dict[str, float] = Field(default_factory=dict)

    def parameter_names(self) -> Set[str]:
        names = {name for term in self.terms for name in term.factors}
        names.update(term.phase for term in self.terms if term.phase)
        return names

    def offsets(self) -> List[int]:
        return sorted({j for term in self.terms for j in term.vectors})

    def coefficients(self, params: Optional[Mapping[str, float]] = None) -> Dict[int, np.ndarray]:
        """Length-2 complex coefficient vectors per offset (own bindings by default)."""
        params = self.params if params is None else params
        assembled: Dict[int, np.ndarray] = {}
        for term in self.terms:
            scale = complex(_product(term.factors, params))
            if term.phase is not None:
                scale *= np.exp(1j * _product((term.phase,), params))
            for offset, (re1, im1, re2, im2) in term.vectors.items():
                vector = np.array([re1 + 1j * im1, re2 + 1j * im2])
                assembled[offset] = assembled.get(offset, np.zeros(2, dtype=complex)) + scale * vector
        return dict(sorted(assembled.items()))


class ModelSpec(_Frozen):
    statistics: Statistics
    dimension: int = Field(1, ge=1)
    hamiltonian: HamiltonianStencil = HamiltonianStencil()
    lindblads: Tuple[LindbladStencil, ...] = ()
    params: Dict[str, float] = Field(default_factory=dict)

    def with_params(self, **updates: float) -> "ModelSpec":
        return self.model_copy(update={"params": {**self.params, **updates}})

    def with_noise(self, channel: LindbladStencil) -> "ModelSpec":
        if channel.statistics is not None and channel.statistics != self.statistics:
            raise ModelError(
                f"Channel '{channel.name}' is {channel.statistics.value}ic but the model is "
                f"{self.statistics.value}ic"
            )
        return self.model_copy(update={
            "lindblads": self.lindblads + (channel,),
            "params": {**channel.params, **self.params},
        })

    def hamiltonian_blocks(self) -> Dict[int, np.ndarray]:
        return self.hamiltonian.blocks(self.params)

    def lindblad_coefficients(self) -> List[Dict[int, np.ndarray]]:
        return [channel.coefficients(self.params) for channel in self.lindblads]

    def parameter_names(self) -> Set[str]:
        names = set(self.hamiltonian.parameter_names())
        for channel in self.lindblads:
            names |= channel.parameter_names()
        return names

    def to_json(self) -> str:
        return self.model_dump_json(indent=2)

    @classmethod
    def from_json(cls, text: str) -> "ModelSpec":
        try:
            return cls.model_validate_json(text)
        except ValueError as e:
            raise ModelError(f"Invalid model description: {e}") from e


# --- 1. Validation ---

class ValidationReport(_Frozen):
    checks: Dict[str, bool]
    messages: Tuple[str, ...] = ()

    @property
    def passed(self) -> bool:
        return all(self.checks.values())


def validate(spec: ModelSpec, tol: float = 1e-12, grid: int = 256) -> ValidationReport:
    """Check the structural assumptions every downstream operation relies on."""
    checks: Dict[str, bool] = {}
    messages: List[str] = []

    checks["dimension"] = spec.dimension == 1
    if not checks["dimension"]:
        messages.append(f"dimension is {spec.dimension}; only d=1 models can be analysed")

    offsets = spec.hamiltonian.offsets() + [j for ch in spec.lindblads for j in ch.offsets()]
    checks["finite_support"] = all(abs(j) <= MAX_RANGE for j in offsets)
    if not checks["finite_support"]:
        messages.append(f"stencil offsets exceed the finite range {MAX_RANGE}")

    mismatched = [ch.name for ch in spec.lindblads
                  if ch.statistics is not None and ch.statistics != spec.statistics]
    checks["channel_statistics"] = not mismatched
    if mismatched:
        messages.append(f"channels {mismatched} do not match {spec.statistics.value} statistics")

    unbound = sorted(spec.parameter_names() - set(spec.params))
    checks["parameter_binding"] = not unbound
    if unbound:
        messages.append(f"unbound parameters: {', '.join(unbound)}")
        checks["block_type"] = checks["symmetry"] = checks["hermitian_symbol"] = False
        return ValidationReport(checks=checks, messages=tuple(messages))

    blocks = spec.hamiltonian_blocks()
    if spec.statistics == Statistics.BOSON:
        checks["block_type"] = all(np.abs(b.imag).max() <= tol for b in blocks.values())
        sign = 1.0
    else:
        checks["block_type"] = all(np.abs(b.real).max() <= tol for b in blocks.values())
        sign = -1.0
    if not checks["block_type"]:
        kind = "real" if sign > 0 else "purely imaginary"
        messages.append(f"{spec.statistics.value}ic Hamiltonian blocks must be {kind}")

    zero = np.zeros((2, 2), dtype=complex)
    asymmetric = [j for j, b in blocks.items()
                  if np.abs(blocks.get(-j, zero) - sign * b.T).max() > tol]
    checks["symmetry"] = not asymmetric
    if asymmetric:
        rule = "h(-j) = h(j)^T" if sign > 0 else "h(-j) = -h(j)^T"
        messages.append(f"{rule} violated at offsets {asymmetric}")

    phi = -np.pi + 2 * np.pi * np.arange(grid) / grid
    symbol = np.zeros((grid, 2, 2), dtype=complex)
    for j, b in blocks.items():
        symbol += np.exp(-1j * phi * j)[:, None, None] * b
    deviation = np.abs(symbol - np.conj(np.swapaxes(symbol, 1, 2))).max() if blocks else 0.0
    checks["hermitian_symbol"] = deviation <= tol * max(1.0, np.abs(symbol).max())
    if not checks["hermitian_symbol"]:
        messages.append(f"Hamiltonian symbol is not Hermitian (deviation {deviation:.3e})")

    return ValidationReport(checks=checks, messages=tuple(messages))


def require_valid(spec: ModelSpec) -> None:
    report = validate(spec)
    if not report.passed:
        raise ModelError("Model failed validation: " + "; ".join(report.messages))


# --- 2. Presets ---

def _blocks(mapping: Mapping[int, np.ndarray]) -> Dict[int, Block]:
    return {j: Block.from_array(m) for j, m in mapping.items()}


def preset_xy_fermion(B: float, Gamma: float) -> ModelSpec:
    """XY chain after Jordan-Wigner: h(phi) = (B - cos phi)/2 sigma_y + Gamma/2 sin phi sigma_x."""
    terms = (
        HamiltonianTerm(factors=("B",), blocks=_blocks({0: PAULI_Y / 2})),
        HamiltonianTerm(blocks=_blocks({1: -PAULI_Y / 4, -1: -PAULI_Y / 4})),
        HamiltonianTerm(factors=("Gamma",),
                        blocks=_blocks({1: 0.25j * PAULI_X, -1: -0.25j * PAULI_X})),
    )
    return ModelSpec(statistics=Statistics.FERMION, hamiltonian=HamiltonianStencil(terms=terms),
                     params={"B": B, "Gamma": Gamma})


def preset_boson_hopping(t: float, v: float) -> ModelSpec:
    """Nearest-neighbour hopping chain with symbol t (cos phi - v) times the identity block."""
    terms = (
        HamiltonianTerm(factors=("t",), blocks=_blocks({1: IDENTITY / 2, -1: IDENTITY / 2})),
        HamiltonianTerm(factors=("t", "v"), blocks=_blocks({0: -IDENTITY})),
    )
    return ModelSpec(statistics=Statistics.BOSON, hamiltonian=HamiltonianStencil(terms=terms),
                     params={"t": t, "v": v})


def preset_noise(kind: NoiseKind, eps: float, g: float) -> LindbladStencil:
    """Single-channel noise; on-site ``L = eps r_1 + eps e^{ig} r_2``,
    two-site fermion ``L = eps r_{1,j} + eps e^{ig} r_{1,j+1}``.

    The two-site boson channel damps the mode ``a_j = r_{1,j} + i r_{2,j}`` on a bond,
    ``L = eps a_j + eps e^{ig} a_{j+1}``: its steady state is the vacuum for every ``g``,
    and the drift closes at ``phi = +-(pi - g)``.
    """
    kind = NoiseKind(kind)
    if eps < 0:
        raise ValueError(f"Noise strength must be non-negative, got eps={eps}")
    first = LindbladTerm(factors=("eps",), vectors={0: (1.0, 0.0, 0.0, 0.0)})
    if kind in (NoiseKind.ON_SITE_FERMION, NoiseKind.ON_SITE_BOSON):
        second = LindbladTerm(factors=("eps",), phase="g", vectors={0: (0.0, 0.0, 1.0, 0.0)})
    elif kind is NoiseKind.TWO_SITE_BOSON:
        first = LindbladTerm(factors=("eps",), vectors={0: (1.0, 0.0, 0.0, 1.0)})
        second = LindbladTerm(factors=("eps",), phase="g", vectors={1: (1.0, 0.0, 0.0, 1.0)})
    else:
        second = LindbladTerm(factors=("eps",), phase="g", vectors={1: (1.0, 0.0, 0.0, 0.0)})
    return LindbladStencil(name=kind.value, statistics=kind.statistics, terms=(first, second),
                           params={"eps": eps, "g": g})


PRESET_DEFAULTS: Dict[str, Dict[str, float]] = {
    "xy-fermion": {"B": 0.5, "Gamma": 1.0, "eps": 0.5, "g": 0.7},
    "boson-hopping": {"t": 1.0, "v": 0.0, "eps": 1.0, "g": math.pi / 4},
}
PRESET_NOISE: Dict[str, Dict[str, NoiseKind]] = {
    "xy-fermion": {"on-site": NoiseKind.ON_SITE_FERMION, "two-site": NoiseKind.TWO_SITE_FERMION},
    "boson-hopping": {"on-site": NoiseKind.ON_SITE_BOSON, "two-site": NoiseKind.TWO_SITE_BOSON},
}
DEFAULT_NOISE = {"xy-fermion": "two-site", "boson-hopping": "on-site"}


def build_preset(name: str, noise: Optional[str] = None,
                 overrides: Optional[Mapping[str, float]] = None) -> ModelSpec:
    """A preset Hamiltonian with one of its noise channels attached."""
    if name not in PRESET_DEFAULTS:
        raise ModelError(f"Unknown preset '{name}'. Available: {', '.join(sorted(PRESET_DEFAULTS))}")
    values = {**PRESET_DEFAULTS[name], **(overrides or {})}
    unknown = set(values) - set(PRESET_DEFAULTS[name])
    if unknown:
        raise ModelError(f"Preset '{name}' has no parameters {sorted(unknown)}")
    noise = noise or DEFAULT_NOISE[name]
    if noise not in PRESET_NOISE[name]:
        raise ModelError(f"Unsupported noise '{noise}' for preset '{name}'")

    if name == "xy-fermion":
        spec = preset_xy_fermion(values["B"], values["Gamma"])
    else:
        spec = preset_boson_hopping(values["t"], values["v"])
    spec = spec.with_noise(preset_noise(PRESET_NOISE[name][noise], values["eps"], values["g"]))
    logger.debug(f"Built preset '{name}' with {noise} noise and params {spec.params}")
    return spec
