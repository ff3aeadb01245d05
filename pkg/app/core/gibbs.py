"""
Gibbs engine: spectral decomposition and everything downstream of it.

This module provides pure functions for:
- Exact diagonalization with a deterministic eigenvector phase convention
- Partition functions, psi_N = (1/N) log Z_N and Gibbs expectations
- Duhamel products and truncated Duhamel products
- Harris (Bogolyubov-type) bounds on the Duhamel self-product
- A classical fast path for Hamiltonians diagonal in the product basis
- Finite-difference derivatives of Z used as oracles for the identities above

Duhamel normalization:
    With H(x) = H - x_1 O_1 - x_2 O_2 and Z(x) = Tr exp(-beta H(x)),

        beta * <O>            = d(log Z)/dx
        beta^2 * (O_1, O_2)   = (1/Z) d^2 Z / dx_1 dx_2

    In the eigenbasis (O_1, O_2) = sum_mn (O_1)_mn (O_2)_nm k_mn with the
    divided-difference kernel k_mn = (w_m - w_n) / (beta (E_n - E_m)), where
    w are the Gibbs weights. It is evaluated as w_lo (1 - exp(-y)) / y with
    y = beta |E_m - E_n| and w_lo the larger of the two weights, and replaced
    by w_lo (1 - y/2) when |E_m - E_n| is below the degeneracy threshold.
"""

from dataclasses import dataclass, field
from typing import Dict, Mapping, Optional, Sequence, Tuple, Union

import logging

import numpy as np
from scipy import linalg
from scipy.special import logsumexp

from app.core.config import settings
from app.core.spin_algebra import (
    DimensionMismatchError,
    ManyBodyOperator,
    _hermitian_defect,
    commutator,
)

logger = logging.getLogger(__name__)


# ============================================================================
# Exceptions
# ============================================================================


class GibbsEngineError(Exception):
    """Base exception for Gibbs-engine errors."""
    pass


class NonHermitianError(GibbsEngineError):
    """Diagonalization was asked for a non-Hermitian operator."""
    pass


class RealityCheckError(GibbsEngineError):
    """An expectation of a Hermitian observable carried an imaginary residue."""
    pass


class NonDiagonalError(GibbsEngineError):
    """Classical fast path received an operator that is not diagonal."""
    pass


# ============================================================================
# Data Classes
# ============================================================================


@dataclass(frozen=True, eq=False)
class SpectralDecomposition:
    """
    Eigen-decomposition H = V diag(E) V^dagger.

    Attributes:
        eigenvalues: Real eigenvalues, ascending
        eigenvectors: Unitary matrix whose columns are the eigenvectors
        n_sites: Number of tensor factors of the source operator
        local_dim: Local dimension of the source operator
    """
    eigenvalues: np.ndarray = field(repr=False)
    eigenvectors: np.ndarray = field(repr=False)
    n_sites: int
    local_dim: int

    @property
    def dim(self) -> int:
        return int(self.eigenvalues.shape[0])

    @property
    def norm(self) -> float:
        """||H|| = max |E_k|."""
        return float(np.max(np.abs(self.eigenvalues), initial=0.0))

    def to_eigenbasis(self, o: ManyBodyOperator) -> np.ndarray:
        """Matrix elements <v_m| o |v_n>."""
        if o.dim != self.dim:
            raise DimensionMismatchError(
                f"Operator dimension {o.dim} does not match spectrum dimension {self.dim}"
            )
        v = self.eigenvectors
        return v.conj().T @ o.entries @ v


@dataclass(frozen=True)
class FreeEnergyDensity:
    """psi_N = (1/N) log Z_N for one sample and one lambda."""
    psi: float


@dataclass(frozen=True, eq=False)
class GibbsState:
    """
    Gibbs state exp(-beta H) / Z in the eigenbasis of H.

    Attributes:
        beta: Inverse temperature
        decomp: Spectral decomposition of H
        log_z: log Z_N
        weights: Boltzmann weights over eigenstates (sum to 1)
        n_sites: N used for the density psi_N
    """
    beta: float
    decomp: SpectralDecomposition
    log_z: float
    weights: np.ndarray = field(repr=False)
    n_sites: int

    @property
    def psi(self) -> float:
        return self.log_z / self.n_sites

    @property
    def free_energy(self) -> FreeEnergyDensity:
        return FreeEnergyDensity(psi=self.psi)


@dataclass(frozen=True)
class HarrisBounds:
    """
    Sandwich lower <= duhamel <= upper for the Duhamel self-product (o, o).

    Attributes:
        lower: <o^2> - (beta/12) <[o, [h, o]]>
        duhamel: (o, o)
        upper: <o^2>
    """
    lower: float
    duhamel: float
    upper: float

    def holds(self, slack: float = 1e-9) -> bool:
        return self.lower - self.duhamel <= slack and self.duhamel - self.upper <= slack


@dataclass(frozen=True)
class ObservableMoments:
    """<o>, <o^2> and (o, o) of one Hermitian observable in one state."""
    mean: float
    second_moment: float
    duhamel: float

    @property
    def gibbs_variance(self) -> float:
        """<(o - <o>)^2>."""
        return max(self.second_moment - self.mean ** 2, 0.0)

    @property
    def truncated_duhamel(self) -> float:
        return self.duhamel - self.mean ** 2


# ============================================================================
# Diagonalization and Gibbs States
# ============================================================================


def _fix_phases(vectors: np.ndarray) -> np.ndarray:
    """Rotate each column so that its first significant component is real positive."""
    magnitudes = np.abs(vectors)
    threshold = 1e-8 * np.max(magnitudes, axis=0, keepdims=True)
    first = np.argmax(magnitudes > threshold, axis=0)
    pivots = vectors[first, np.arange(vectors.shape[1])]
    phases = np.where(np.abs(pivots) > 0, np.abs(pivots) / np.where(pivots == 0, 1, pivots), 1.0)
    return vectors * phases[None, :]


def diagonalize(h: ManyBodyOperator) -> SpectralDecomposition:
    """
    Exact diagonalization of a Hermitian operator.

    Eigenvalues are ascending; each eigenvector's first significant component
    is made real positive so repeated runs give identical matrices.

    Args:
        h: Hermitian operator

    Returns:
        SpectralDecomposition

    Raises:
        NonHermitianError: h is not flagged Hermitian or fails the entrywise check

    Examples:
        >>> from app.core.spin_algebra import ManyBodyOperator
        >>> h = ManyBodyOperator(1, 3, np.diag([3.0, 1.0, 2.0]).astype(complex), True)
        >>> diagonalize(h).eigenvalues.tolist()
        [1.0, 2.0, 3.0]
    """
    scale = max(1.0, float(np.max(np.abs(h.entries), initial=0.0)))
    defect = _hermitian_defect(h.entries)
    if not h.hermitian or defect > settings.ALGEBRA_TOLERANCE * scale:
        raise NonHermitianError(f"Cannot diagonalize non-Hermitian operator (defect {defect:.3e})")

    eigenvalues, eigenvectors = linalg.eigh(h.entries)
    logger.debug("Diagonalized operator", extra={"dim": h.dim, "n_sites": h.n_sites})
    eigenvectors = _fix_phases(eigenvectors)
    eigenvalues.setflags(write=False)
    eigenvectors.setflags(write=False)
    return SpectralDecomposition(eigenvalues, eigenvectors, h.n_sites, h.local_dim)


def gibbs_state(decomp: SpectralDecomposition, beta: float, n_sites: Optional[int] = None) -> GibbsState:
    """
    Gibbs state at inverse temperature beta.

    log Z = -beta E_min + log sum_k exp(-beta (E_k - E_min)), evaluated by
    max-shifted log-sum-exp.

    Args:
        decomp: Spectral decomposition of H
        beta: Inverse temperature (> 0)
        n_sites: N for psi_N (defaults to the operator's site count)

    Examples:
        >>> from app.core.spin_algebra import SiteSet, zero_operator
        >>> state = gibbs_state(diagonalize(zero_operator(SiteSet.chain(3), 2)), 1.0)
        >>> round(state.psi, 12) == round(float(np.log(2)), 12)
        True
    """
    if not beta > 0:
        raise GibbsEngineError(f"beta must be positive, got {beta}")
    n = decomp.n_sites if n_sites is None else n_sites
    exponents = -beta * decomp.eigenvalues
    log_z = float(logsumexp(exponents))
    weights = np.exp(exponents - log_z)
    weights /= weights.sum()
    weights.setflags(write=False)
    return GibbsState(beta=beta, decomp=decomp, log_z=log_z, weights=weights, n_sites=n)


def _real_part(value: complex, scale: float, what: str) -> float:
    limit = settings.REALITY_TOLERANCE * max(1.0, scale)
    if abs(np.imag(value)) > limit:
        raise RealityCheckError(f"{what} has imaginary residue {np.imag(value):.3e} > {limit:.1e}")
    return float(np.real(value))


def _entry_scale(*operators: ManyBodyOperator) -> float:
    return float(np.prod([max(1.0, np.max(np.abs(o.entries), initial=0.0)) for o in operators]))


def expectation(state: GibbsState, o: ManyBodyOperator) -> float:
    """
    <o> = sum_k w_k <v_k| o |v_k>.

    Raises:
        RealityCheckError: imaginary part above REALITY_TOLERANCE (scaled by max |o_ij|)
    """
    v = state.decomp.eigenvectors
    if o.dim != state.decomp.dim:
        raise DimensionMismatchError(
            f"Operator dimension {o.dim} does not match state dimension {state.decomp.dim}"
        )
    diagonal = np.einsum("im,ij,jm->m", v.conj(), o.entries, v)
    return _real_part(np.dot(state.weights, diagonal), _entry_scale(o), "expectation")


# ============================================================================
# Duhamel Products
# ============================================================================


def duhamel_kernel(state: GibbsState) -> np.ndarray:
    """
    Kernel matrix k_mn with (o1, o2) = sum_mn (o1)_mn (o2)_nm k_mn.

    Symmetric, nonnegative, and k_mm = w_m.
    """
    energies = state.decomp.eigenvalues
    weights = state.weights
    gaps = np.abs(energies[:, None] - energies[None, :])
    y = state.beta * gaps
    w_lo = np.maximum(weights[:, None], weights[None, :])

    degenerate = gaps < settings.DEGENERACY_THRESHOLD * max(1.0, state.decomp.norm)
    safe_y = np.where(degenerate, 1.0, y)
    split = w_lo * (-np.expm1(-safe_y)) / safe_y
    return np.where(degenerate, w_lo * (1.0 - 0.5 * y), split)


def duhamel_pair(state: GibbsState, o1: ManyBodyOperator, o2: ManyBodyOperator) -> float:
    """
    Duhamel product (o1, o2) = int_0^1 <o1(t) o2> dt in imaginary time.

    Normalized so that beta^2 (o1, o2) = (1/Z) d^2 Z / dx_1 dx_2 at x = 0
    for Z(x) = Tr exp(-beta (H - x_1 o1 - x_2 o2)).

    Examples:
        >>> from app.core.spin_algebra import SiteSet, identity, zero_operator
        >>> sites = SiteSet.chain(1)
        >>> state = gibbs_state(diagonalize(zero_operator(sites, 2)), 1.0)
        >>> round(duhamel_pair(state, identity(sites, 2), identity(sites, 2)), 12)
        1.0
    """
    o1e = state.decomp.to_eigenbasis(o1)
    o2e = state.decomp.to_eigenbasis(o2)
    value = np.sum(o1e * o2e.T * duhamel_kernel(state))
    return _real_part(value, _entry_scale(o1, o2), "Duhamel product")


def truncated_duhamel_pair(state: GibbsState, o1: ManyBodyOperator, o2: ManyBodyOperator) -> float:
    """(o1, o2) - <o1><o2> = (1/beta^2) d^2 (log Z) / dx_1 dx_2."""
    return duhamel_pair(state, o1, o2) - expectation(state, o1) * expectation(state, o2)


def moments(state: GibbsState, o: ManyBodyOperator) -> ObservableMoments:
    """
    <o>, <o^2> and (o, o) from a single change of basis.

    For Hermitian o, <o^2> = sum_m w_m sum_n |o_mn|^2 and
    (o, o) = sum_mn |o_mn|^2 k_mn.
    """
    oe = state.decomp.to_eigenbasis(o)
    scale = _entry_scale(o)
    mean = _real_part(np.dot(state.weights, np.diag(oe)), scale, "expectation")
    squared = np.abs(oe) ** 2
    second = float(np.dot(state.weights, squared.sum(axis=1)))
    duhamel = float(np.sum(squared * duhamel_kernel(state)))
    return ObservableMoments(mean=mean, second_moment=second, duhamel=duhamel)


def harris_bounds(state: GibbsState, h: ManyBodyOperator, o: ManyBodyOperator) -> HarrisBounds:
    """
    Harris inequality of Bogolyubov type for the Duhamel self-product.

    <o^2> - (beta/12) <[o, [h, o]]>  <=  (o, o)  <=  <o^2>

    Args:
        state: Gibbs state of h
        h: Hamiltonian of the state
        o: Hermitian observable

    Examples:
        >>> from app.core.spin_algebra import SiteSet, identity, zero_operator
        >>> sites = SiteSet.chain(2)
        >>> h = zero_operator(sites, 2)
        >>> bounds = harris_bounds(gibbs_state(diagonalize(h), 1.0), h, identity(sites, 2))
        >>> round(bounds.lower, 12), round(bounds.upper, 12)
        (1.0, 1.0)
    """
    stats = moments(state, o)
    double = commutator(o, commutator(h, o))
    curvature = expectation(state, double)
    return HarrisBounds(
        lower=stats.second_moment - state.beta / 12.0 * curvature,
        duhamel=stats.duhamel,
        upper=stats.second_moment,
    )


# ============================================================================
# Partition-Function Oracles
# ============================================================================


def log_partition(h: ManyBodyOperator, beta: float) -> float:
    """log Tr exp(-beta h) from eigenvalues only."""
    return float(logsumexp(-beta * linalg.eigvalsh(h.entries)))


def perturbed_log_partition(
    h: ManyBodyOperator,
    beta: float,
    perturbations: Sequence[Tuple[float, ManyBodyOperator]],
) -> float:
    """log Z of h - sum_i x_i o_i."""
    shifted = h
    for x, o in perturbations:
        if x != 0.0:
            shifted = shifted - o.scale(x)
    return log_partition(shifted, beta)


def log_z_first_difference(
    h: ManyBodyOperator,
    o: ManyBodyOperator,
    beta: float,
    step: Optional[float] = None,
) -> float:
    """Central difference of log Z(x) at x = 0; approximates beta <o>."""
    dx = settings.FIRST_DIFFERENCE_STEP if step is None else step
    plus = perturbed_log_partition(h, beta, [(dx, o)])
    minus = perturbed_log_partition(h, beta, [(-dx, o)])
    return (plus - minus) / (2.0 * dx)


def z_second_difference(
    h: ManyBodyOperator,
    o1: ManyBodyOperator,
    o2: ManyBodyOperator,
    beta: float,
    step: Optional[float] = None,
) -> float:
    """
    Mixed central difference of Z(x_1, x_2) / Z(0) at the origin.

    Approximates beta^2 (o1, o2).
    """
    dx = settings.SECOND_DIFFERENCE_STEP if step is None else step
    base = log_partition(h, beta)

    def ratio(x1: float, x2: float) -> float:
        return float(np.exp(perturbed_log_partition(h, beta, [(x1, o1), (x2, o2)]) - base))

    return (ratio(dx, dx) - ratio(dx, -dx) - ratio(-dx, dx) + ratio(-dx, -dx)) / (4.0 * dx * dx)


# ============================================================================
# Classical Fast Path
# ============================================================================


DiagonalInput = Union[np.ndarray, Sequence[float], ManyBodyOperator]


def as_diagonal(values: DiagonalInput) -> np.ndarray:
    """
    Real vector over basis states.

    Raises:
        NonDiagonalError: an operator with off-diagonal entries, a complex
            diagonal, or an input that is not one-dimensional
    """
    if isinstance(values, ManyBodyOperator):
        if not values.is_diagonal():
            raise NonDiagonalError("Operator is not diagonal in the product basis")
        values = np.diag(values.entries)
    array = np.asarray(values)
    if array.ndim != 1:
        raise NonDiagonalError(f"Expected a vector over basis states, got shape {array.shape}")
    if np.iscomplexobj(array):
        scale = max(1.0, float(np.max(np.abs(array), initial=0.0)))
        if np.max(np.abs(array.imag), initial=0.0) > settings.REALITY_TOLERANCE * scale:
            raise NonDiagonalError("Diagonal carries imaginary entries")
        array = array.real
    return array.astype(float)


@dataclass(frozen=True, eq=False)
class ClassicalGibbs:
    """
    Gibbs state of a diagonal Hamiltonian as a distribution over basis states.

    Attributes:
        beta: Inverse temperature
        energies: H as a vector over basis states
        log_z: log Z_N
        weights: Boltzmann weights over basis states
        n_sites: N used for psi_N
    """
    beta: float
    energies: np.ndarray = field(repr=False)
    log_z: float
    weights: np.ndarray = field(repr=False)
    n_sites: int

    @property
    def psi(self) -> float:
        return self.log_z / self.n_sites

    def expectation(self, values: DiagonalInput) -> float:
        vector = as_diagonal(values)
        if vector.shape != self.weights.shape:
            raise DimensionMismatchError(
                f"Observable length {vector.shape[0]} does not match {self.weights.shape[0]} states"
            )
        return float(np.dot(self.weights, vector))

    def duhamel_pair(self, a: DiagonalInput, b: DiagonalInput) -> float:
        """Commuting case: (a, b) = <a b>."""
        return self.expectation(as_diagonal(a) * as_diagonal(b))

    def truncated_duhamel_pair(self, a: DiagonalInput, b: DiagonalInput) -> float:
        return self.duhamel_pair(a, b) - self.expectation(a) * self.expectation(b)

    def moments(self, values: DiagonalInput) -> ObservableMoments:
        vector = as_diagonal(values)
        second = self.expectation(vector * vector)
        return ObservableMoments(mean=self.expectation(vector), second_moment=second, duhamel=second)

    def harris_bounds(self, values: DiagonalInput) -> HarrisBounds:
        """All three coincide: the double commutator of diagonal operators vanishes."""
        second = self.moments(values).second_moment
        return HarrisBounds(lower=second, duhamel=second, upper=second)


def classical_gibbs_state(h_diag: DiagonalInput, beta: float, n_sites: int) -> ClassicalGibbs:
    """Gibbs weights over basis states by direct enumeration."""
    if not beta > 0:
        raise GibbsEngineError(f"beta must be positive, got {beta}")
    energies = as_diagonal(h_diag)
    exponents = -beta * energies
    log_z = float(logsumexp(exponents))
    weights = np.exp(exponents - log_z)
    weights /= weights.sum()
    weights.setflags(write=False)
    return ClassicalGibbs(beta=beta, energies=energies, log_z=log_z, weights=weights, n_sites=n_sites)


@dataclass(frozen=True)
class ClassicalSummary:
    """
    Outputs of the classical fast path.

    Attributes:
        state: The classical Gibbs state
        observables: Moments per named observable
    """
    state: ClassicalGibbs
    observables: Dict[str, ObservableMoments]

    @property
    def log_z(self) -> float:
        return self.state.log_z

    @property
    def psi(self) -> float:
        return self.state.psi


def classical_fast_path(
    h_diag: DiagonalInput,
    observables: Mapping[str, DiagonalInput],
    beta: float,
    n_sites: int,
) -> ClassicalSummary:
    """
    Z, psi_N, <o> and <o^2> for a diagonal Hamiltonian by weighted sums.

    Args:
        h_diag: Hamiltonian diagonal (or a diagonal ManyBodyOperator)
        observables: Named diagonal observables
        beta: Inverse temperature
        n_sites: N

    Raises:
        NonDiagonalError: any input is not diagonal

    Examples:
        >>> summary = classical_fast_path(np.zeros(8), {"zero": np.zeros(8)}, 1.0, 3)
        >>> round(float(np.exp(summary.log_z)), 10)
        8.0
    """
    state = classical_gibbs_state(h_diag, beta, n_sites)
    return ClassicalSummary(
        state=state,
        observables={name: state.moments(values) for name, values in observables.items()},
    )
