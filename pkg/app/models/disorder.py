"""
Disorder and interaction models.

Pydantic v2 models for:
- Coupling distributions (law of each random coupling J)
- Interaction functions phi attached to a support X
- Interaction terms and the ordered catalog that numbers them 1..M

The catalog's list order is the fixed numbering of the couplings; a catalog
serialized to JSON and read back yields the same numbering.
"""
from typing import Annotated, List, Literal, Optional, Tuple, Union

import numpy as np
from pydantic import BaseModel, Field, field_validator, model_validator

from app.core.config import settings


# ==============================================================================
# Coupling Distributions
# ==============================================================================


class GaussianCoupling(BaseModel):
    """Normal law N(mean, std^2)."""

    kind: Literal["gaussian"] = "gaussian"
    mean: float = Field(default=0.0, description="Expectation of J")
    std: float = Field(default=1.0, ge=0.0, description="Standard deviation of J")

    def expectation(self) -> float:
        return self.mean

    def variance(self) -> float:
        return self.std ** 2

    def draw(self, rng: np.random.Generator, size: Optional[int] = None):
        return rng.normal(loc=self.mean, scale=self.std, size=size)

    def scaled(self, factor: float) -> "GaussianCoupling":
        return GaussianCoupling(mean=self.mean * factor, std=self.std * abs(factor))


class TwoPointCoupling(BaseModel):
    """Symmetric-support law: +value with probability prob_plus, -value otherwise."""

    kind: Literal["two_point"] = "two_point"
    value: float = Field(..., description="Magnitude of the two atoms +/-value")
    prob_plus: float = Field(default=0.5, ge=0.0, le=1.0, description="P(J = +value)")

    def expectation(self) -> float:
        return self.value * (2.0 * self.prob_plus - 1.0)

    def variance(self) -> float:
        return 4.0 * self.prob_plus * (1.0 - self.prob_plus) * self.value ** 2

    def draw(self, rng: np.random.Generator, size: Optional[int] = None):
        signs = np.where(rng.random(size=size) < self.prob_plus, 1.0, -1.0)
        return signs * self.value

    def scaled(self, factor: float) -> "TwoPointCoupling":
        if factor >= 0:
            return TwoPointCoupling(value=self.value * factor, prob_plus=self.prob_plus)
        return TwoPointCoupling(value=-self.value * factor, prob_plus=1.0 - self.prob_plus)


class UniformCoupling(BaseModel):
    """Uniform law on [lo, hi]."""

    kind: Literal["uniform"] = "uniform"
    lo: float = Field(..., description="Lower end of the support")
    hi: float = Field(..., description="Upper end of the support")

    @model_validator(mode="after")
    def validate_interval(self) -> "UniformCoupling":
        if self.lo > self.hi:
            raise ValueError(f"lo ({self.lo}) must not exceed hi ({self.hi})")
        return self

    def expectation(self) -> float:
        return 0.5 * (self.lo + self.hi)

    def variance(self) -> float:
        return (self.hi - self.lo) ** 2 / 12.0

    def draw(self, rng: np.random.Generator, size: Optional[int] = None):
        return rng.uniform(low=self.lo, high=self.hi, size=size)

    def scaled(self, factor: float) -> "UniformCoupling":
        ends = sorted((self.lo * factor, self.hi * factor))
        return UniformCoupling(lo=ends[0], hi=ends[1])


class ConstantCoupling(BaseModel):
    """Degenerate law: J = value (no disorder)."""

    kind: Literal["constant"] = "constant"
    value: float = Field(..., description="Fixed coupling value")

    def expectation(self) -> float:
        return self.value

    def variance(self) -> float:
        return 0.0

    def draw(self, rng: np.random.Generator, size: Optional[int] = None):
        if size is None:
            return self.value
        return np.full(size, self.value)

    def scaled(self, factor: float) -> "ConstantCoupling":
        return ConstantCoupling(value=self.value * factor)


CouplingDistribution = Annotated[
    Union[GaussianCoupling, TwoPointCoupling, UniformCoupling, ConstantCoupling],
    Field(discriminator="kind"),
]


# ==============================================================================
# Interaction Functions and Terms
# ==============================================================================


SpinAxis = Literal["x", "y", "z"]


class PhiSpec(BaseModel):
    """
    Interaction function phi_X^p attached to a support X.

    - axis_product: prod_{j in X} S_j^p
    - single_site: S_j^p (|X| = 1)
    - heisenberg: sum_p S_i^p S_j^p (|X| = 2, one coupling shared by all axes)
    - custom: explicit local matrices, one per support site, embedded as a product

    The realized norm is always computed at build time; ``c_phi``, when given,
    is an asserted upper bound that the build verifies.
    """

    kind: Literal["axis_product", "single_site", "heisenberg", "custom"] = "axis_product"
    c_phi: Optional[float] = Field(
        default=None, gt=0.0, description="Asserted bound ||phi|| <= c_phi"
    )
    custom_real: Optional[List[List[List[float]]]] = Field(
        default=None, description="Real parts of the per-site local matrices (custom only)"
    )
    custom_imag: Optional[List[List[List[float]]]] = Field(
        default=None, description="Imaginary parts of the per-site local matrices (custom only)"
    )

    @model_validator(mode="after")
    def validate_custom(self) -> "PhiSpec":
        if self.kind == "custom" and not self.custom_real:
            raise ValueError("custom phi requires custom_real matrices")
        if self.custom_imag is not None and self.custom_real is not None:
            if len(self.custom_imag) != len(self.custom_real):
                raise ValueError("custom_imag must match custom_real in length")
        return self

    def local_matrices(self) -> List[np.ndarray]:
        """Per-site complex matrices of a custom phi."""
        real = self.custom_real or []
        imag = self.custom_imag or [None] * len(real)
        matrices = []
        for re_part, im_part in zip(real, imag):
            matrix = np.array(re_part, dtype=complex)
            if im_part is not None:
                matrix = matrix + 1j * np.array(im_part, dtype=float)
            matrices.append(matrix)
        return matrices


class InteractionTerm(BaseModel):
    """
    One random coupling J_X^p paired with its interaction function.

    ``axis`` is "xyz" for the shared-coupling Heisenberg bond.
    """

    axis: Literal["x", "y", "z", "xyz"] = "z"
    support: Tuple[int, ...] = Field(..., description="Ordered site subset X")
    distribution: CouplingDistribution
    phi: PhiSpec = Field(default_factory=PhiSpec)

    @field_validator("support")
    @classmethod
    def validate_support(cls, v: Tuple[int, ...]) -> Tuple[int, ...]:
        if not v:
            raise ValueError("support must be nonempty")
        if len(set(v)) != len(v):
            raise ValueError(f"support sites must be distinct, got {v}")
        if any(site < 0 for site in v):
            raise ValueError(f"support sites must be nonnegative, got {v}")
        if len(v) > settings.MAX_SUPPORT_SIZE:
            raise ValueError(
                f"support size {len(v)} exceeds MAX_SUPPORT_SIZE={settings.MAX_SUPPORT_SIZE}"
            )
        return v

    @model_validator(mode="after")
    def validate_shape(self) -> "InteractionTerm":
        kind = self.phi.kind
        if kind == "single_site" and len(self.support) != 1:
            raise ValueError("single_site phi needs a one-site support")
        if kind == "heisenberg" and (len(self.support) != 2 or self.axis != "xyz"):
            raise ValueError("heisenberg phi needs a bond support and axis 'xyz'")
        if kind != "heisenberg" and self.axis == "xyz":
            raise ValueError("axis 'xyz' is reserved for heisenberg terms")
        if kind == "custom" and len(self.phi.custom_real or []) != len(self.support):
            raise ValueError("custom phi needs one local matrix per support site")
        return self

    def is_diagonal(self) -> bool:
        """True when phi is diagonal in the S^z product basis."""
        if self.phi.kind in ("axis_product", "single_site"):
            return self.axis == "z"
        if self.phi.kind == "custom":
            return all(
                np.count_nonzero(m - np.diag(np.diag(m))) == 0 for m in self.phi.local_matrices()
            )
        return False


class InteractionCatalog(BaseModel):
    """
    Ordered list of interaction terms.

    Term k (0-based) carries coupling J_{k+1}; the order is the numbering of
    the couplings and survives JSON round trips.
    """

    terms: List[InteractionTerm] = Field(default_factory=list)

    @property
    def n_terms(self) -> int:
        """M, the number of random couplings."""
        return len(self.terms)

    def max_site(self) -> int:
        """Largest site index referenced (-1 for an empty catalog)."""
        return max((max(term.support) for term in self.terms), default=-1)

    def is_diagonal(self) -> bool:
        return all(term.is_diagonal() for term in self.terms)

    def extended(self, other: "InteractionCatalog") -> "InteractionCatalog":
        """Concatenation; terms of ``other`` are numbered after ours."""
        return InteractionCatalog(terms=[*self.terms, *other.terms])

    def to_text(self) -> str:
        """Serialize to structured JSON text."""
        return self.model_dump_json(indent=2)

    @classmethod
    def from_text(cls, text: str) -> "InteractionCatalog":
        return cls.model_validate_json(text)
