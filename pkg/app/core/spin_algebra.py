"""
Spin-S matrices, tensor embedding onto N-site systems, and operator arithmetic.

Conventions shared by every module:
- Local basis: S^z diagonal with entries S, S-1, ..., -S (index 0 is m = S).
- Tensor ordering: site 0 is the leftmost (most significant) Kronecker factor,
  so basis index b encodes site j in digit (b // d**(N-1-j)) % d.
- Storage: dense complex matrices; dimension D = d**N is capped by
  ``settings.MAX_DIMENSION`` where operators are built from models.

All values are immutable after construction and every function is pure.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import reduce
from typing import Dict, Iterable, List, Optional, Sequence, Tuple

import numpy as np
from scipy import linalg

from app.core.config import settings


# ============================================================================
# Exceptions
# ============================================================================


class SpinAlgebraError(Exception):
    """Base exception for operator-algebra errors."""
    pass


class DimensionMismatchError(SpinAlgebraError):
    """Operands live on spaces of different dimension."""
    pass


class DuplicateSiteError(SpinAlgebraError):
    """The same site was listed twice in one embedding."""
    pass


class InvalidAxisError(SpinAlgebraError):
    """Rotation axis is not a unit 3-vector."""
    pass


# ============================================================================
# Data Classes
# ============================================================================


@dataclass(frozen=True)
class SpinMagnitude:
    """
    Spin magnitude S stored as the integer 2S.

    Attributes:
        two_s: Twice the spin (0, 1, 2, ...); S = two_s / 2
    """
    two_s: int

    def __post_init__(self):
        if self.two_s < 0:
            raise SpinAlgebraError(f"two_s must be nonnegative, got {self.two_s}")

    @classmethod
    def from_spin(cls, s: float) -> "SpinMagnitude":
        """Build from S given as a (half-)integer float."""
        two_s = int(round(2 * s))
        if abs(two_s - 2 * s) > 1e-12:
            raise SpinAlgebraError(f"S must be a half integer, got {s}")
        return cls(two_s)

    @property
    def s(self) -> float:
        return self.two_s / 2

    @property
    def dim(self) -> int:
        """Local dimension d = 2S + 1."""
        return self.two_s + 1

    @property
    def casimir(self) -> float:
        """S(S+1)."""
        return self.s * (self.s + 1)


def _hermitian_defect(entries: np.ndarray) -> float:
    if entries.size == 0:
        return 0.0
    return float(np.max(np.abs(entries - entries.conj().T)))


@dataclass(frozen=True, eq=False)
class LocalOperator:
    """
    Single-site operator on C^d.

    Attributes:
        entries: Dense complex d x d matrix
        hermitian: True when entries equal their adjoint to ALGEBRA_TOLERANCE
    """
    entries: np.ndarray
    hermitian: bool

    @classmethod
    def from_matrix(cls, matrix: np.ndarray) -> "LocalOperator":
        entries = np.array(matrix, dtype=complex)
        if entries.ndim != 2 or entries.shape[0] != entries.shape[1]:
            raise DimensionMismatchError(f"Local operator must be square, got {entries.shape}")
        entries.setflags(write=False)
        scale = max(1.0, float(np.max(np.abs(entries))) if entries.size else 1.0)
        return cls(entries, _hermitian_defect(entries) <= settings.ALGEBRA_TOLERANCE * scale)

    @property
    def dim(self) -> int:
        return self.entries.shape[0]

    def __matmul__(self, other: "LocalOperator") -> "LocalOperator":
        if self.dim != other.dim:
            raise DimensionMismatchError(f"Local dims differ: {self.dim} vs {other.dim}")
        return LocalOperator.from_matrix(self.entries @ other.entries)


@dataclass(frozen=True, eq=False)
class ManyBodyOperator:
    """
    Dense operator on the (local_dim ** n_sites)-dimensional tensor space.

    Replica systems reuse this type with n_sites = n_replicas * N
    (replica index most significant).

    Attributes:
        n_sites: Number of tensor factors
        local_dim: Dimension of each factor
        entries: Dense complex D x D matrix
        hermitian: Hermiticity flag
    """
    n_sites: int
    local_dim: int
    entries: np.ndarray = field(repr=False)
    hermitian: bool

    def __post_init__(self):
        expected = self.local_dim ** self.n_sites
        if self.entries.shape != (expected, expected):
            raise DimensionMismatchError(
                f"Entries shape {self.entries.shape} does not match "
                f"{self.local_dim}**{self.n_sites} = {expected}"
            )
        if self.entries.flags.writeable:
            self.entries.setflags(write=False)
        if settings.DEBUG_CHECKS and self.hermitian:
            defect = _hermitian_defect(self.entries)
            if defect > settings.ALGEBRA_TOLERANCE * max(1.0, _scale(self.entries)):
                raise SpinAlgebraError(f"Hermitian flag set but defect is {defect:.3e}")

    @property
    def dim(self) -> int:
        return self.entries.shape[0]

    def _check_same_space(self, other: "ManyBodyOperator") -> None:
        if (self.n_sites, self.local_dim) != (other.n_sites, other.local_dim):
            raise DimensionMismatchError(
                f"Operators live on different spaces: "
                f"({self.n_sites}, {self.local_dim}) vs ({other.n_sites}, {other.local_dim})"
            )

    def with_entries(self, entries: np.ndarray, hermitian: bool) -> "ManyBodyOperator":
        """Same space, new matrix."""
        return ManyBodyOperator(self.n_sites, self.local_dim, np.asarray(entries, dtype=complex), hermitian)

    def __add__(self, other: "ManyBodyOperator") -> "ManyBodyOperator":
        self._check_same_space(other)
        return self.with_entries(self.entries + other.entries, self.hermitian and other.hermitian)

    def __sub__(self, other: "ManyBodyOperator") -> "ManyBodyOperator":
        self._check_same_space(other)
        return self.with_entries(self.entries - other.entries, self.hermitian and other.hermitian)

    def __matmul__(self, other: "ManyBodyOperator") -> "ManyBodyOperator":
        self._check_same_space(other)
        product_entries = self.entries @ other.entries
        hermitian = False
        if self.hermitian and other.hermitian:
            # A product of Hermitian operators is Hermitian iff they commute.
            hermitian = _hermitian_defect(product_entries) <= settings.ALGEBRA_TOLERANCE * max(
                1.0, _scale(product_entries)
            )
        return self.with_entries(product_entries, hermitian)

    def scale(self, factor: complex) -> "ManyBodyOperator":
        """Multiply by a scalar; real factors keep the Hermitian flag."""
        real = float(np.imag(factor)) == 0.0
        return self.with_entries(self.entries * factor, self.hermitian and real)

    def power(self, exponent: int) -> "ManyBodyOperator":
        """Integer matrix power (exponent >= 0)."""
        if exponent < 0:
            raise SpinAlgebraError("Only nonnegative powers are supported")
        return self.with_entries(np.linalg.matrix_power(self.entries, exponent), self.hermitian)

    def adjoint(self) -> "ManyBodyOperator":
        return self.with_entries(self.entries.conj().T, self.hermitian)

    def is_diagonal(self, tolerance: Optional[float] = None) -> bool:
        tol = settings.ALGEBRA_TOLERANCE if tolerance is None else tolerance
        off = self.entries - np.diag(np.diag(self.entries))
        return bool(np.max(np.abs(off), initial=0.0) <= tol * max(1.0, _scale(self.entries)))

    def allclose(self, other: "ManyBodyOperator", atol: float = 1e-10) -> bool:
        self._check_same_space(other)
        return bool(np.max(np.abs(self.entries - other.entries), initial=0.0) <= atol)


def _scale(entries: np.ndarray) -> float:
    return float(np.max(np.abs(entries), initial=0.0))


@dataclass(frozen=True)
class SiteSet:
    """
    Finite site set V_N, optionally carrying a d-dimensional box shape.

    Attributes:
        n_sites: N = |V_N|
        shape: Optional box side lengths (L_1, ..., L_d) with prod = N
    """
    n_sites: int
    shape: Optional[Tuple[int, ...]] = None

    def __post_init__(self):
        if self.n_sites < 1:
            raise SpinAlgebraError(f"A site set needs at least one site, got {self.n_sites}")
        if self.shape is not None and int(np.prod(self.shape)) != self.n_sites:
            raise SpinAlgebraError(f"Shape {self.shape} does not hold {self.n_sites} sites")

    @classmethod
    def chain(cls, n_sites: int) -> "SiteSet":
        return cls(n_sites, (n_sites,))

    @classmethod
    def box(cls, shape: Sequence[int]) -> "SiteSet":
        shape = tuple(int(length) for length in shape)
        return cls(int(np.prod(shape)), shape)

    def coordinates(self, site: int) -> Tuple[int, ...]:
        """1-based box coordinates (j_1, ..., j_d) of a site (row-major)."""
        self._check_site(site)
        shape = self.shape or (self.n_sites,)
        return tuple(int(c) + 1 for c in np.unravel_index(site, shape))

    def site_index(self, coordinates: Sequence[int]) -> int:
        """Inverse of ``coordinates``."""
        shape = self.shape or (self.n_sites,)
        return int(np.ravel_multi_index(tuple(c - 1 for c in coordinates), shape))

    def _check_site(self, site: int) -> None:
        if not 0 <= site < self.n_sites:
            raise SpinAlgebraError(f"Site {site} outside [0, {self.n_sites})")

    def nearest_neighbor_bonds(self, periodic: bool = False) -> List[Tuple[int, int]]:
        """Bonds |i - j| = 1 along each box axis, in site order."""
        shape = self.shape or (self.n_sites,)
        bonds = set()
        for site in range(self.n_sites):
            coords = np.unravel_index(site, shape)
            for axis, length in enumerate(shape):
                neighbor = list(coords)
                neighbor[axis] += 1
                if neighbor[axis] >= length:
                    if not periodic or length <= 2:
                        continue
                    neighbor[axis] = 0
                other = int(np.ravel_multi_index(tuple(neighbor), shape))
                bonds.add((min(site, other), max(site, other)))
        return sorted(bonds)

    def all_pairs(self) -> List[Tuple[int, int]]:
        """Every unordered pair i < j."""
        return [(i, j) for i in range(self.n_sites) for j in range(i + 1, self.n_sites)]

    def staggered_signs(self) -> np.ndarray:
        """a_j = (-1)^(j_1 + ... + j_d) with 1-based coordinates."""
        return np.array(
            [(-1.0) ** sum(self.coordinates(site)) for site in range(self.n_sites)]
        )


# ============================================================================
# Spin Matrices
# ============================================================================


def spin_matrices(spin: SpinMagnitude) -> Tuple[LocalOperator, LocalOperator, LocalOperator]:
    """
    Spin-S matrices (Sx, Sy, Sz).

    Built from the ladder operator <m+1|S+|m> = sqrt(S(S+1) - m(m+1)) in the
    basis m = S, S-1, ..., -S.

    Args:
        spin: Spin magnitude

    Returns:
        Hermitian (Sx, Sy, Sz) with [Sx, Sy] = i Sz cyclically

    Examples:
        >>> sx, sy, sz = spin_matrices(SpinMagnitude(2))
        >>> np.diag(sz.entries).real.tolist()
        [1.0, 0.0, -1.0]
    """
    s = spin.s
    m = s - np.arange(spin.dim)
    raising = np.zeros((spin.dim, spin.dim), dtype=complex)
    for k in range(1, spin.dim):
        raising[k - 1, k] = np.sqrt(s * (s + 1) - m[k] * (m[k] + 1))
    lowering = raising.conj().T

    sx = 0.5 * (raising + lowering)
    sy = -0.5j * (raising - lowering)
    sz = np.diag(m).astype(complex)
    return (
        LocalOperator(_frozen(sx), True),
        LocalOperator(_frozen(sy), True),
        LocalOperator(_frozen(sz), True),
    )


def spin_component(spin: SpinMagnitude, axis: str) -> LocalOperator:
    """Single spin matrix S^p for p in {x, y, z}."""
    index = {"x": 0, "y": 1, "z": 2}.get(axis)
    if index is None:
        raise SpinAlgebraError(f"Unknown spin axis {axis!r}")
    return spin_matrices(spin)[index]


def _frozen(matrix: np.ndarray) -> np.ndarray:
    matrix.setflags(write=False)
    return matrix


# ============================================================================
# Embedding and Arithmetic
# ============================================================================


def embed(
    locals_: Iterable[Tuple[int, LocalOperator]],
    sites: SiteSet,
    local_dim: Optional[int] = None,
) -> ManyBodyOperator:
    """
    Tensor-embed single-site operators onto an N-site space.

    Unlisted sites receive the identity; site 0 is the most significant factor.

    Args:
        locals_: (site index, local operator) pairs with distinct sites
        sites: Site set
        local_dim: Local dimension, required only when ``locals_`` is empty

    Returns:
        Kronecker product, Hermitian when all inputs are Hermitian

    Raises:
        DuplicateSiteError: A site appears twice
        DimensionMismatchError: Local dimensions differ
    """
    placed: Dict[int, LocalOperator] = {}
    for site, operator in locals_:
        sites._check_site(site)
        if site in placed:
            raise DuplicateSiteError(f"Site {site} listed twice")
        placed[site] = operator

    dims = {operator.dim for operator in placed.values()}
    if local_dim is not None:
        dims.add(local_dim)
    if len(dims) > 1:
        raise DimensionMismatchError(f"Local dimensions differ: {sorted(dims)}")
    if not dims:
        raise DimensionMismatchError("local_dim is required for an empty embedding")
    d = dims.pop()

    identity = np.eye(d, dtype=complex)
    factors = [placed[j].entries if j in placed else identity for j in range(sites.n_sites)]
    entries = reduce(np.kron, factors)
    hermitian = all(operator.hermitian for operator in placed.values())
    return ManyBodyOperator(sites.n_sites, d, entries, hermitian)


def identity(sites: SiteSet, local_dim: int) -> ManyBodyOperator:
    """Identity on the N-site space."""
    dim = local_dim ** sites.n_sites
    return ManyBodyOperator(sites.n_sites, local_dim, np.eye(dim, dtype=complex), True)


def zero_operator(sites: SiteSet, local_dim: int) -> ManyBodyOperator:
    dim = local_dim ** sites.n_sites
    return ManyBodyOperator(sites.n_sites, local_dim, np.zeros((dim, dim), dtype=complex), True)


def commutator(a: ManyBodyOperator, b: ManyBodyOperator) -> ManyBodyOperator:
    """
    [a, b] = ab - ba.

    The result is anti-Hermitian for Hermitian inputs, so its Hermitian
    flag is cleared unless it vanishes.
    """
    a._check_same_space(b)
    entries = a.entries @ b.entries - b.entries @ a.entries
    hermitian = _hermitian_defect(entries) <= settings.ALGEBRA_TOLERANCE * max(1.0, _scale(entries))
    return a.with_entries(entries, hermitian)


def operator_norm(a: ManyBodyOperator) -> float:
    """
    Spectral norm ||a|| = sup ||a phi|| over unit phi.

    For Hermitian input this is max |eigenvalue|.
    """
    if a.dim == 0:
        return 0.0
    if a.hermitian:
        eigenvalues = linalg.eigvalsh(a.entries)
        return float(np.max(np.abs(eigenvalues)))
    return float(np.linalg.norm(a.entries, ord=2))


def local_operator_norm(a: LocalOperator) -> float:
    return float(np.linalg.norm(a.entries, ord=2))


def su2_rotation(spin: SpinMagnitude, axis: Sequence[float], angle: float) -> np.ndarray:
    """
    Single-site rotation U = exp(-i angle n.S).

    Raises:
        InvalidAxisError: |axis| deviates from 1 by more than AXIS_TOLERANCE
    """
    n = np.asarray(axis, dtype=float)
    if n.shape != (3,) or abs(np.linalg.norm(n) - 1.0) > settings.AXIS_TOLERANCE:
        raise InvalidAxisError(f"Rotation axis must be a unit 3-vector, got {axis}")
    sx, sy, sz = spin_matrices(spin)
    generator = n[0] * sx.entries + n[1] * sy.entries + n[2] * sz.entries
    return linalg.expm(-1j * angle * generator)


def su2_rotate(a: ManyBodyOperator, axis: Sequence[float], angle: float) -> ManyBodyOperator:
    """
    Conjugate by the global rotation U = (x)_j U_j with identical U_j.

    Args:
        a: Hermitian operator
        axis: Unit rotation axis
        angle: Rotation angle in radians

    Returns:
        U a U^dagger (same spectrum as a)
    """
    if not a.hermitian:
        raise SpinAlgebraError("su2_rotate expects a Hermitian operator")
    spin = SpinMagnitude(a.local_dim - 1)
    single = su2_rotation(spin, axis, angle)
    u = reduce(np.kron, [single] * a.n_sites)
    return a.with_entries(u @ a.entries @ u.conj().T, True)


# ============================================================================
# Diagonal helpers (classical path)
# ============================================================================


def basis_digits(n_sites: int, local_dim: int) -> np.ndarray:
    """
    Local basis index of every site for every basis state.

    Returns:
        Integer array of shape (n_sites, local_dim ** n_sites)
    """
    states = np.arange(local_dim ** n_sites)
    powers = local_dim ** np.arange(n_sites - 1, -1, -1)
    return (states[None, :] // powers[:, None]) % local_dim


def sz_diagonals(n_sites: int, spin: SpinMagnitude) -> np.ndarray:
    """m-values of S_j^z on each basis state, shape (n_sites, d ** n_sites)."""
    return spin.s - basis_digits(n_sites, spin.dim).astype(float)
