"""
Model Builder Service

Assembles unperturbed Hamiltonians H_N(S, J) = sum_k J_k phi_k, order
operators O_N, perturbed Hamiltonians H_lambda = H - N lambda O_N, and the
double-commutator diagnostic ||[O, [H, O]]||.

Two representations are produced:
1. Dense ManyBodyOperator matrices (D <= settings.MAX_DIMENSION)
2. Real diagonal vectors for models diagonal in the S^z basis (classical path)

A HamiltonianTemplate realizes every phi_k once per (catalog, N) so that an
ensemble only pays for the weighted sum per sample.
"""

from dataclasses import dataclass, field
from functools import reduce
from typing import List, Optional, Sequence, Tuple

import numpy as np

from app.core.config import settings
from app.core.spin_algebra import (
    LocalOperator,
    ManyBodyOperator,
    SiteSet,
    SpinMagnitude,
    basis_digits,
    commutator,
    embed,
    local_operator_norm,
    operator_norm,
    spin_component,
    spin_matrices,
    zero_operator,
)
from app.models.disorder import (
    CouplingDistribution,
    InteractionCatalog,
    InteractionTerm,
    PhiSpec,
)
from app.models.study import ModelFamily, OrderOperatorSpec
from app.services.disorder_sampler import DisorderSample
from app.utils.logging import get_logger

logger = get_logger(__name__)


# ============================================================================
# Exceptions
# ============================================================================


class ModelBuildError(Exception):
    """Base exception for model construction errors."""
    pass


class DimensionOverflowError(ModelBuildError):
    """Requested Hilbert-space dimension exceeds the configured cap."""
    pass


class NormBoundError(ModelBuildError):
    """A realized operator exceeds its asserted norm bound."""
    pass


def check_dimension(n_sites: int, local_dim: int, cap: Optional[int] = None) -> int:
    """Return D = local_dim ** n_sites or raise DimensionOverflowError."""
    limit = settings.MAX_DIMENSION if cap is None else cap
    dim = local_dim ** n_sites
    if dim > limit:
        raise DimensionOverflowError(
            f"Dimension {local_dim}**{n_sites} = {dim} exceeds cap {limit}"
        )
    return dim


# ============================================================================
# Catalog Builders
# ============================================================================


def heisenberg_catalog(
    bonds: Sequence[Tuple[int, int]],
    dist: CouplingDistribution,
) -> InteractionCatalog:
    """
    One term per bond: J_ij sum_p S_i^p S_j^p with one J shared by all axes.

    Examples:
        >>> from app.models.disorder import GaussianCoupling
        >>> heisenberg_catalog([(0, 1), (1, 2)], GaussianCoupling()).n_terms
        2
    """
    return InteractionCatalog(terms=[
        InteractionTerm(
            axis="xyz",
            support=tuple(bond),
            distribution=dist,
            phi=PhiSpec(kind="heisenberg"),
        )
        for bond in bonds
    ])


def xyz_catalog(
    bonds: Sequence[Tuple[int, int]],
    dist: CouplingDistribution,
) -> InteractionCatalog:
    """Independent J_X^p for every (bond, axis): three terms per bond."""
    return InteractionCatalog(terms=[
        InteractionTerm(axis=axis, support=tuple(bond), distribution=dist)
        for bond in bonds
        for axis in ("x", "y", "z")
    ])


def ising_catalog(
    bonds: Sequence[Tuple[int, int]],
    dist: CouplingDistribution,
) -> InteractionCatalog:
    """J_ij S_i^z S_j^z on the given bonds."""
    return InteractionCatalog(terms=[
        InteractionTerm(axis="z", support=tuple(bond), distribution=dist) for bond in bonds
    ])


def sk_catalog(sites: SiteSet, dist: CouplingDistribution) -> InteractionCatalog:
    """
    Sherrington-Kirkpatrick couplings: all pairs with J_ij scaled by 1/sqrt(N).

    With unit-variance J the budget is sum Var = (N-1)/2 <= N/2.
    """
    scaled = dist.scaled(1.0 / np.sqrt(sites.n_sites))
    return ising_catalog(sites.all_pairs(), scaled)


def random_field_catalog(
    sites: SiteSet,
    dist: CouplingDistribution,
    axis: str = "z",
) -> InteractionCatalog:
    """Single-site fields h_j S_j^axis."""
    return InteractionCatalog(terms=[
        InteractionTerm(
            axis=axis, support=(site,), distribution=dist, phi=PhiSpec(kind="single_site")
        )
        for site in range(sites.n_sites)
    ])


def family_sites(family: ModelFamily, n_sites: int) -> SiteSet:
    """Site set of the family at size N."""
    if family.lattice == "square":
        side = int(round(np.sqrt(n_sites)))
        return SiteSet.box((side, side))
    return SiteSet.chain(n_sites)


def family_bonds(family: ModelFamily, sites: SiteSet) -> List[Tuple[int, int]]:
    if family.lattice == "complete":
        return sites.all_pairs()
    return sites.nearest_neighbor_bonds(periodic=family.lattice == "ring")


def family_catalog(family: ModelFamily, sites: SiteSet) -> InteractionCatalog:
    """
    Catalog of a model family at one size.

    Bond terms come first (in bond order), then random fields (in site order).
    """
    bonds = family_bonds(family, sites)
    if family.coupling == "heisenberg":
        catalog = heisenberg_catalog(bonds, family.distribution)
    elif family.coupling == "xyz":
        catalog = xyz_catalog(bonds, family.distribution)
    elif family.coupling == "ising":
        catalog = ising_catalog(bonds, family.distribution)
    elif family.coupling == "sk":
        catalog = sk_catalog(sites, family.distribution)
    else:
        catalog = InteractionCatalog()

    if family.random_field is not None:
        catalog = catalog.extended(random_field_catalog(sites, family.random_field))
    return catalog


# ============================================================================
# Interaction Functions
# ============================================================================


def _phi_locals(term: InteractionTerm, spin: SpinMagnitude) -> List[List[Tuple[int, LocalOperator]]]:
    """
    phi as a sum of products of local operators: list of [(site, op), ...].
    """
    if term.phi.kind == "heisenberg":
        i, j = term.support
        return [[(i, op), (j, op)] for op in spin_matrices(spin)]
    if term.phi.kind == "custom":
        matrices = term.phi.local_matrices()
        locals_ = []
        for site, matrix in zip(term.support, matrices):
            if matrix.shape != (spin.dim, spin.dim):
                raise ModelBuildError(
                    f"custom phi matrix shape {matrix.shape} does not match local dim {spin.dim}"
                )
            locals_.append((site, LocalOperator.from_matrix(matrix)))
        return [locals_]
    op = spin_component(spin, term.axis)
    return [[(site, op) for site in term.support]]


def phi_norm(term: InteractionTerm, spin: SpinMagnitude) -> float:
    """
    Exact ||phi_X^p||, computed on the support only.

    Tensoring with identities preserves the spectral norm, so the norm of the
    |X|-site operator equals the norm of its N-site embedding.
    """
    products = _phi_locals(term, spin)
    if term.phi.kind != "heisenberg":
        # a tensor product has the product of the local norms
        return float(np.prod([local_operator_norm(op) for _, op in products[0]]))

    support_sites = SiteSet(len(term.support))
    relabel = {site: k for k, site in enumerate(term.support)}
    local = reduce(
        lambda acc, op: acc + op,
        (
            embed([(relabel[site], op) for site, op in product_], support_sites)
            for product_ in products
        ),
    )
    return operator_norm(local)


def realize_phi(term: InteractionTerm, sites: SiteSet, spin: SpinMagnitude) -> ManyBodyOperator:
    """Dense N-site matrix of phi_X^p."""
    if max(term.support) >= sites.n_sites:
        raise ModelBuildError(f"Term support {term.support} outside {sites.n_sites} sites")
    operator = None
    for product_ in _phi_locals(term, spin):
        piece = embed(product_, sites)
        operator = piece if operator is None else operator + piece
    if not operator.hermitian:
        raise ModelBuildError(f"phi on support {term.support} is not Hermitian")
    return operator


def _phi_diagonal(term: InteractionTerm, digits: np.ndarray, spin: SpinMagnitude) -> np.ndarray:
    """Diagonal of phi over all basis states (diagonal terms only)."""
    (product_,) = _phi_locals(term, spin)
    diagonal = np.ones(digits.shape[1])
    for site, op in product_:
        local_diag = np.real(np.diag(op.entries))
        diagonal = diagonal * local_diag[digits[site]]
    return diagonal


# ============================================================================
# Hamiltonian Templates
# ============================================================================


@dataclass(frozen=True, eq=False)
class HamiltonianTemplate:
    """
    Realized interaction functions of one catalog at one size.

    Attributes:
        catalog: Source catalog
        sites: Site set
        spin: Spin magnitude
        c_phi: max_k ||phi_k|| (exact, 0 for an empty catalog)
        term_norms: ||phi_k|| per term
        dense_terms: Dense phi_k (None on the diagonal-only path)
        diagonal_terms: Array (M, D) of phi_k diagonals (None if not diagonal)
    """
    catalog: InteractionCatalog
    sites: SiteSet
    spin: SpinMagnitude
    c_phi: float
    term_norms: Tuple[float, ...]
    dense_terms: Optional[Tuple[ManyBodyOperator, ...]] = field(default=None, repr=False)
    diagonal_terms: Optional[np.ndarray] = field(default=None, repr=False)

    @property
    def dim(self) -> int:
        return self.spin.dim ** self.sites.n_sites

    @property
    def is_diagonal(self) -> bool:
        return self.diagonal_terms is not None

    def dense(self, sample: DisorderSample) -> ManyBodyOperator:
        """H = sum_k J_k phi_k as a dense matrix."""
        sample.check_aligned(self.catalog)
        if self.dense_terms is None:
            check_dimension(self.sites.n_sites, self.spin.dim)
            return ManyBodyOperator(
                self.sites.n_sites,
                self.spin.dim,
                np.diag(self.diagonal(sample)).astype(complex),
                True,
            )
        entries = np.zeros((self.dim, self.dim), dtype=complex)
        for coupling, term in zip(sample.values, self.dense_terms):
            entries += coupling * term.entries
        return ManyBodyOperator(self.sites.n_sites, self.spin.dim, entries, True)

    def diagonal(self, sample: DisorderSample) -> np.ndarray:
        """H as a real vector over basis states (diagonal models only)."""
        sample.check_aligned(self.catalog)
        if self.diagonal_terms is None:
            raise ModelBuildError("Catalog is not diagonal in the S^z basis")
        if self.catalog.n_terms == 0:
            return np.zeros(self.dim)
        return np.asarray(sample.values) @ self.diagonal_terms


def build_template(
    catalog: InteractionCatalog,
    sites: SiteSet,
    spin: SpinMagnitude,
    dense: Optional[bool] = None,
) -> HamiltonianTemplate:
    """
    Realize a catalog at one size.

    Args:
        catalog: Interaction catalog
        sites: Site set
        spin: Spin magnitude
        dense: Force (True) or skip (False) dense realization; by default dense
            matrices are built unless the catalog is diagonal

    Raises:
        DimensionOverflowError: Dense or diagonal dimension above its cap
        NormBoundError: A realized phi exceeds its asserted c_phi
    """
    if catalog.max_site() >= sites.n_sites:
        raise ModelBuildError(
            f"Catalog references site {catalog.max_site()} but N = {sites.n_sites}"
        )

    norms = []
    for index, term in enumerate(catalog.terms):
        norm = phi_norm(term, spin)
        if term.phi.c_phi is not None and norm > term.phi.c_phi * (1 + settings.ALGEBRA_TOLERANCE):
            raise NormBoundError(
                f"Term {index} has ||phi|| = {norm:.6g} above asserted c_phi = {term.phi.c_phi}"
            )
        norms.append(norm)

    diagonal = catalog.is_diagonal()
    want_dense = (not diagonal) if dense is None else dense

    diagonal_terms = None
    if diagonal:
        check_dimension(sites.n_sites, spin.dim, cap=spin.dim ** settings.MAX_CLASSICAL_SPINS)
        digits = basis_digits(sites.n_sites, spin.dim)
        diagonal_terms = np.array(
            [_phi_diagonal(term, digits, spin) for term in catalog.terms]
        ).reshape(catalog.n_terms, spin.dim ** sites.n_sites)

    dense_terms = None
    if want_dense:
        check_dimension(sites.n_sites, spin.dim)
        dense_terms = tuple(realize_phi(term, sites, spin) for term in catalog.terms)

    c_phi = max(norms, default=0.0)
    logger.debug(
        "Built Hamiltonian template",
        extra={"n_sites": sites.n_sites, "n_terms": catalog.n_terms, "c_phi": c_phi,
               "diagonal": diagonal},
    )
    return HamiltonianTemplate(
        catalog=catalog,
        sites=sites,
        spin=spin,
        c_phi=c_phi,
        term_norms=tuple(norms),
        dense_terms=dense_terms,
        diagonal_terms=diagonal_terms,
    )


def build_hamiltonian(
    catalog: InteractionCatalog,
    sample: DisorderSample,
    sites: SiteSet,
    spin: SpinMagnitude,
) -> ManyBodyOperator:
    """
    H_N(S, J) = sum_k J_k phi_k as a dense Hermitian matrix.

    Examples:
        >>> from app.models.disorder import ConstantCoupling
        >>> from app.services.disorder_sampler import draw_sample
        >>> cat = heisenberg_catalog([(0, 1)], ConstantCoupling(value=1.0))
        >>> h = build_hamiltonian(cat, draw_sample(cat, 0, 0), SiteSet.chain(2), SpinMagnitude(1))
        >>> np.round(np.linalg.eigvalsh(h.entries), 12).tolist()
        [-0.75, 0.25, 0.25, 0.25]
    """
    check_dimension(sites.n_sites, spin.dim)
    if catalog.n_terms == 0:
        return zero_operator(sites, spin.dim)
    # supports and c_phi bounds only; terms are realized one at a time below
    build_template(catalog, sites, spin, dense=False)
    sample.check_aligned(catalog)

    entries = np.zeros((spin.dim ** sites.n_sites,) * 2, dtype=complex)
    for coupling, term in zip(sample.values, catalog.terms):
        entries += coupling * realize_phi(term, sites, spin).entries
    return ManyBodyOperator(sites.n_sites, spin.dim, entries, True)


# ============================================================================
# Order Operators
# ============================================================================


def order_weights(spec: OrderOperatorSpec, sites: SiteSet) -> np.ndarray:
    """Weights a_j of a spin-density order operator."""
    if spec.weights == "uniform":
        return np.ones(sites.n_sites)
    if spec.weights == "staggered":
        return sites.staggered_signs()
    weights = np.asarray(spec.weights, dtype=float)
    if weights.shape != (sites.n_sites,):
        raise ModelBuildError(
            f"Order weights have length {weights.shape[0]} but N = {sites.n_sites}"
        )
    return weights


def order_norm(spec: OrderOperatorSpec, sites: SiteSet, spin: SpinMagnitude) -> float:
    """
    Exact ||O_N|| for a spin density: (S / N) sum_j |a_j|.

    The S_j^p along one axis commute and each has spectrum {-S, ..., S}, so the
    extreme eigenvalue aligns every m_j with sign(a_j).
    """
    weights = order_weights(spec, sites)
    return spin.s * float(np.sum(np.abs(weights))) / sites.n_sites


def _check_order_bound(spec: OrderOperatorSpec, norm: float) -> None:
    if spec.c_o is not None and norm > spec.c_o * (1 + settings.ALGEBRA_TOLERANCE):
        raise NormBoundError(f"||O_N|| = {norm:.6g} exceeds asserted c_o = {spec.c_o}")


def build_order_operator(
    spec: OrderOperatorSpec,
    sites: SiteSet,
    spin: SpinMagnitude,
) -> ManyBodyOperator:
    """
    O_N = (1/N) sum_j a_j S_j^axis, or an explicit custom matrix.

    Raises:
        NormBoundError: ||O_N|| > c_o
    """
    check_dimension(sites.n_sites, spin.dim)
    if spec.kind == "custom":
        entries = np.array(spec.matrix_real, dtype=complex)
        if spec.matrix_imag is not None:
            entries = entries + 1j * np.array(spec.matrix_imag, dtype=float)
        operator = ManyBodyOperator(sites.n_sites, spin.dim, entries, True)
        defect = float(np.max(np.abs(entries - entries.conj().T), initial=0.0))
        if defect > settings.ALGEBRA_TOLERANCE * max(1.0, float(np.max(np.abs(entries)))):
            raise ModelBuildError("custom order operator is not Hermitian")
        _check_order_bound(spec, operator_norm(operator))
        return operator

    weights = order_weights(spec, sites)
    _check_order_bound(spec, order_norm(spec, sites, spin))
    if spec.axis == "z":
        return ManyBodyOperator(
            sites.n_sites,
            spin.dim,
            np.diag(order_diagonal(spec, sites, spin)).astype(complex),
            True,
        )
    component = spin_component(spin, spec.axis)
    entries = np.zeros((spin.dim ** sites.n_sites,) * 2, dtype=complex)
    for site, weight in enumerate(weights):
        if weight != 0.0:
            entries += weight * embed([(site, component)], sites).entries
    return ManyBodyOperator(sites.n_sites, spin.dim, entries / sites.n_sites, True)


def order_diagonal(spec: OrderOperatorSpec, sites: SiteSet, spin: SpinMagnitude) -> np.ndarray:
    """Diagonal of a z-axis spin density over basis states."""
    if spec.kind != "spin_density" or spec.axis != "z":
        raise ModelBuildError("Only z-axis spin densities have a diagonal form")
    weights = order_weights(spec, sites)
    _check_order_bound(spec, order_norm(spec, sites, spin))
    m_values = spin.s - basis_digits(sites.n_sites, spin.dim)
    return weights @ m_values / sites.n_sites


# ============================================================================
# Perturbation and Diagnostics
# ============================================================================


@dataclass(frozen=True, eq=False)
class PerturbedModel:
    """
    H_lambda = h0 - N lambda O_N.

    Attributes:
        h0: Unperturbed Hamiltonian H_N(S, J)
        order_op: Order operator O_N
        n_sites: N
        lam: Perturbation strength lambda
    """
    h0: ManyBodyOperator
    order_op: ManyBodyOperator
    n_sites: int
    lam: float


def perturb(model: PerturbedModel) -> ManyBodyOperator:
    """
    H_lambda = h0 - N lambda O_N.

    Examples:
        >>> sites = SiteSet.chain(2)
        >>> spin = SpinMagnitude(1)
        >>> o = build_order_operator(OrderOperatorSpec(), sites, spin)
        >>> h = perturb(PerturbedModel(zero_operator(sites, 2), o, 2, 1.0))
        >>> np.diag(h.entries).real.tolist()
        [-1.0, 0.0, 0.0, 1.0]
    """
    if model.lam == 0.0:
        return model.h0
    return model.h0 - model.order_op.scale(model.n_sites * model.lam)


def assumption2_norm(h: ManyBodyOperator, o: ManyBodyOperator) -> float:
    """||[O, [H, O]]||, which must vanish as N grows for short-range H."""
    return operator_norm(commutator(o, commutator(h, o)))
