"""
Study configuration models.

Pydantic v2 models validating the TOML study configs:
- ModelFamily: lattice, spin, coupling ensemble and order operator
- OverlapSpec / ReplicaSection: replica systems and RSB operators
- StudyConfig: size ladder, beta, lambda grid, sample counts and seed
"""
import math
from typing import List, Literal, Optional, Tuple, Union

from pydantic import BaseModel, Field, field_validator, model_validator

from app.models.disorder import CouplingDistribution, GaussianCoupling


# ==============================================================================
# Model Family
# ==============================================================================


class OrderOperatorSpec(BaseModel):
    """
    Order operator O_N.

    spin_density: O_N = (1/N) sum_j a_j S_j^axis with a_j uniform (ferromagnetic),
    staggered (antiferromagnetic, (-1)^(j_1+...+j_d)) or an explicit list.
    custom: an explicit D x D Hermitian matrix (fixed N only).
    """

    kind: Literal["spin_density", "custom"] = "spin_density"
    axis: Literal["x", "y", "z"] = "z"
    weights: Union[Literal["uniform", "staggered"], List[float]] = "uniform"
    c_o: Optional[float] = Field(default=None, gt=0.0, description="Asserted bound ||O_N|| <= c_o")
    matrix_real: Optional[List[List[float]]] = None
    matrix_imag: Optional[List[List[float]]] = None

    @model_validator(mode="after")
    def validate_custom(self) -> "OrderOperatorSpec":
        if self.kind == "custom" and self.matrix_real is None:
            raise ValueError("custom order operator requires matrix_real")
        return self


class ModelFamily(BaseModel):
    """A family of disordered Hamiltonians indexed by N."""

    spin_two_s: int = Field(default=1, ge=0, description="Twice the spin magnitude (1 -> S=1/2)")
    lattice: Literal["chain", "ring", "square", "complete"] = Field(
        default="chain",
        description="Site geometry; 'square' needs N = L^2, 'complete' gives all pairs",
    )
    coupling: Literal["heisenberg", "xyz", "ising", "sk", "none"] = Field(
        default="heisenberg",
        description=(
            "heisenberg: one J per bond shared by all axes; xyz: an independent J per "
            "(bond, axis); ising: J S^z S^z; sk: ising on all pairs with J/sqrt(N); "
            "none: no two-site couplings"
        ),
    )
    distribution: CouplingDistribution = Field(default_factory=GaussianCoupling)
    random_field: Optional[CouplingDistribution] = Field(
        default=None, description="Optional random field h_j S_j^z added to the couplings"
    )
    order: OrderOperatorSpec = Field(default_factory=OrderOperatorSpec)


# ==============================================================================
# Replica Systems
# ==============================================================================


class OverlapSpec(BaseModel):
    """
    Spin overlap R^p_{ab} and the RSB operator sum_a c_a (R^p_{ab})^a.

    supports: "sites" (Edwards-Anderson choice, X = {j}), "bonds" (X ranges over
    the interaction supports of the model) or an explicit list of site subsets.
    """

    axis: Literal["x", "y", "z"] = "z"
    supports: Union[Literal["sites", "bonds"], List[List[int]]] = "sites"
    replica_pair: Tuple[int, int] = (1, 2)
    powers_and_coeffs: List[Tuple[int, float]] = Field(default_factory=lambda: [(1, 1.0)])

    @field_validator("replica_pair")
    @classmethod
    def validate_pair(cls, v: Tuple[int, int]) -> Tuple[int, int]:
        if v[0] == v[1]:
            raise ValueError("replica_pair needs two different replicas")
        if min(v) < 1:
            raise ValueError("replica labels are 1-based")
        return v

    @field_validator("powers_and_coeffs")
    @classmethod
    def validate_powers(cls, v: List[Tuple[int, float]]) -> List[Tuple[int, float]]:
        if not v:
            raise ValueError("powers_and_coeffs must be nonempty")
        for power, _ in v:
            if power < 1:
                raise ValueError(f"overlap powers must be >= 1, got {power}")
        return v

    @field_validator("supports")
    @classmethod
    def validate_supports(cls, v):
        if isinstance(v, list):
            if not v:
                raise ValueError("explicit supports must be nonempty")
            for subset in v:
                if not subset or len(set(subset)) != len(subset):
                    raise ValueError(f"invalid support subset {subset}")
        return v

    @property
    def spec_id(self) -> str:
        """Compact identifier used in report rows."""
        supports = self.supports if isinstance(self.supports, str) else f"{len(self.supports)}sets"
        poly = "+".join(f"{c:g}R^{a}" for a, c in self.powers_and_coeffs)
        a, b = self.replica_pair
        return f"{self.axis}:{supports}:{a}-{b}:{poly}"


class ReplicaSection(BaseModel):
    """Replica study settings (shared disorder across replicas)."""

    n_replicas: int = Field(default=2, ge=2)
    path: Literal["auto", "dense", "classical"] = Field(
        default="auto", description="auto picks the classical path for diagonal models"
    )
    overlap: OverlapSpec = Field(default_factory=OverlapSpec)

    @model_validator(mode="after")
    def validate_pair_in_range(self) -> "ReplicaSection":
        if max(self.overlap.replica_pair) > self.n_replicas:
            raise ValueError(
                f"replica_pair {self.overlap.replica_pair} exceeds n_replicas={self.n_replicas}"
            )
        return self


# ==============================================================================
# Study Config
# ==============================================================================


class StudyConfig(BaseModel):
    """Ensemble study over a ladder of system sizes."""

    name: str = Field(default="study", description="Label written into every report row")
    size_ladder: List[int] = Field(..., min_length=1)
    beta: float = Field(..., gt=0.0)
    lambda_grid: List[float] = Field(default_factory=lambda: [0.0])
    samples_per_size: int = Field(default=20, ge=2)
    master_seed: int = Field(default=0, ge=0, lt=2 ** 64)
    model: ModelFamily = Field(default_factory=ModelFamily)
    replica: Optional[ReplicaSection] = None

    @field_validator("size_ladder")
    @classmethod
    def validate_ladder(cls, v: List[int]) -> List[int]:
        if any(n < 1 for n in v):
            raise ValueError("system sizes must be positive")
        if any(b <= a for a, b in zip(v, v[1:])):
            raise ValueError(f"size_ladder must be strictly ascending, got {v}")
        return v

    @model_validator(mode="after")
    def validate_square_sizes(self) -> "StudyConfig":
        if self.model.lattice == "square":
            for n in self.size_ladder:
                side = math.isqrt(n)
                if side * side != n:
                    raise ValueError(f"square lattice needs N = L^2, got N={n}")
        return self

    def sorted_lambdas(self) -> List[float]:
        return sorted(self.lambda_grid)

    def nonzero_lambdas(self) -> List[float]:
        return [lam for lam in self.sorted_lambdas() if lam != 0.0]
