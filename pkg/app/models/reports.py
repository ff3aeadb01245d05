"""
Study report models.

Pydantic v2 models for the outputs of ensemble and replica studies:
- Per-size ensemble statistics (SizePointReport) and trend fits (TrendVerdict)
- Lambda sweeps and their derivative checks
- Assumption diagnostics (commutator norms, p_N increments, long-range-order sides)
- Replica diagnostics (RSB decomposition, overlap ratio, limit commutativity)
- The StudyResult envelope written to JSON, with provenance
"""
from typing import Any, Dict, List, Literal, Optional

from pydantic import BaseModel, Field


# ==============================================================================
# Ensemble Studies
# ==============================================================================


class SizePointReport(BaseModel):
    """Ensemble statistics of one (N, lambda) point."""

    n: int
    lam: float
    beta: float
    n_samples: int = Field(..., description="Samples that completed")
    n_failed: int = 0

    mean_psi: float = Field(..., description="p_N = E psi_N")
    mean_psi_se: float
    var_psi: float = Field(..., description="Unbiased sample variance of psi_N")
    var_psi_se: float
    c_phi: float = Field(..., description="Exact max ||phi|| of the built catalog")
    sigma_squared: float = Field(..., description="Variance budget sum Var(J) / N")
    lemma1_bound: float = Field(..., description="2 beta^2 C_phi^2 sigma^2 / N")
    bound_exceeded: bool = Field(
        default=False, description="var_psi above bound + SE_MULTIPLIER * var_psi_se"
    )

    mean_order: float
    mean_order_se: float
    var_order_total: float = Field(..., description="E<(O - E<O>)^2>")
    var_order_total_se: float
    var_order_gibbs: float = Field(..., description="E<(O - <O>)^2>")
    var_order_gibbs_se: float
    var_order_sample: float = Field(..., description="E(<O> - E<O>)^2")
    var_order_sample_se: float
    additivity_ok: bool = True

    assumption2_mean: float = Field(..., description="Mean of ||[O, [H, O]]|| over samples")
    assumption2_max: float


class TrendVerdict(BaseModel):
    """Log-log fit of a positive quantity against N with its pass flag."""

    quantity: str
    lam: Optional[float] = None
    slope: float
    slope_se: float
    threshold: float = Field(..., description="Pass when slope <= threshold")
    passed: bool
    n_points: int
    note: str = ""


# ==============================================================================
# Lambda Sweeps
# ==============================================================================


class SweepRow(BaseModel):
    """Ensemble averages at one (N, lambda)."""

    n: int
    lam: float
    mean_order: float
    mean_order_se: float
    mean_psi: float
    mean_psi_se: float
    duhamel_slope: float = Field(..., description="N beta E[truncated (O, O)]")
    duhamel_slope_se: float
    order_derivative: Optional[float] = Field(
        default=None, description="Finite-difference dE<O>/dlambda (interior points)"
    )
    psi_derivative: Optional[float] = Field(
        default=None, description="Finite-difference dE psi_N/dlambda divided by beta"
    )
    psi_second_difference: Optional[float] = None
    derivative_agrees: Optional[bool] = None
    psi_slope_agrees: Optional[bool] = None


class IntegratedDuhamelRow(BaseModel):
    """
    E<O>(hi) - E<O>(lo) against N beta times the trapezoid integral of
    E[truncated (O, O)] over [lo, hi], and the bound 2 C_o / (N beta) on
    that integral.
    """

    n: int
    lam_lo: float
    lam_hi: float
    order_increment: float
    integrated_duhamel: float
    integral_bound: float
    within_bound: bool


class SweepReport(BaseModel):
    rows: List[SweepRow] = Field(default_factory=list)
    integrals: List[IntegratedDuhamelRow] = Field(default_factory=list)
    convex: bool = True
    monotone: bool = True
    derivatives_agree: bool = True


# ==============================================================================
# Assumption Diagnostics
# ==============================================================================


class AssumptionRow(BaseModel):
    """Commutator norms, p_N convergence and long-range-order sides at one N."""

    n: int
    assumption2_mean: float
    assumption2_max: float
    assumption2_scaled: float = Field(..., description="N * mean ||[O, [H, O]]||")
    p_n: float = Field(..., description="E psi_N at lambda = 0")
    p_n_se: float
    p_increment: Optional[float] = Field(
        default=None, description="|p_N - p_N'| against the previous size"
    )
    fluctuation_side: float = Field(..., description="sqrt(E<O^2>) at lambda = 0")
    order_side: Optional[float] = Field(
        default=None, description="E<O> at the smallest positive lambda"
    )
    order_side_lam: Optional[float] = None


# ==============================================================================
# Replica Studies
# ==============================================================================


class RSBPoint(BaseModel):
    """Variance decomposition of the RSB operator at one (N, lambda)."""

    n: int
    lam: float
    mean_r: float = Field(..., description="E<R>")
    mean_r_se: float
    gibbs_term: float = Field(..., description="E<(R - <R>)^2>")
    gibbs_term_se: float
    sample_term: float = Field(..., description="E(<R> - E<R>)^2")
    sample_term_se: float
    total: float = Field(..., description="E<(R - E<R>)^2>")
    total_se: float
    additivity_ok: bool
    ratio: Optional[float] = Field(default=None, description="gibbs_term / total")
    ratio_se: Optional[float] = None


class ReplicaSymmetryRow(BaseModel):
    """Replica-permutation defects of one sample at lambda = 0."""

    n: int
    sample_index: int = 0
    hamiltonian_defect: float = Field(
        ..., description="max over permutations P of max |P H P^dagger - H|"
    )
    expectation_defect: float = Field(
        ..., description="max |<f> - <P f P^dagger>| over single-replica observables f"
    )


class RSBReport(BaseModel):
    n_replicas: int
    overlap_spec: str
    path: Literal["dense", "classical"]
    c_r: Dict[int, float] = Field(
        default_factory=dict, description="Norm bound of the RSB operator per N"
    )
    points: List[RSBPoint] = Field(default_factory=list)
    symmetry: List[ReplicaSymmetryRow] = Field(default_factory=list)


class GGRatioPoint(BaseModel):
    """Ratio of the Gibbs term to the total variance of the overlap at one N."""

    n: int
    ratio: Optional[float] = Field(default=None, description="Absent when total = 0")
    ratio_se: Optional[float] = None
    gibbs_term: float
    total: float
    distance_to_two_thirds: Optional[float] = None


class CommutativityRow(BaseModel):
    """
    E<R> at lambda = 0 against its one-sided limits lambda -> 0+ and 0-.
    """

    n: int
    value_at_zero: float
    value_at_zero_se: float
    limit_plus: Optional[float] = None
    limit_plus_se: Optional[float] = None
    limit_minus: Optional[float] = None
    limit_minus_se: Optional[float] = None
    gap_plus: Optional[float] = None
    gap_plus_se: Optional[float] = None
    gap_minus: Optional[float] = None
    gap_minus_se: Optional[float] = None
    gap: float = Field(..., description="Largest one-sided gap")


# ==============================================================================
# Envelope
# ==============================================================================


class FailedSample(BaseModel):
    n: int
    sample_index: int
    seed: int
    lam: Optional[float] = None
    error: str


StudyKind = Literal[
    "concentration", "theorem", "sweep", "assumptions", "replica", "commutativity", "algebra"
]


class StudyResult(BaseModel):
    """Everything one CLI study writes to its JSON report."""

    study: str
    kind: StudyKind
    config_hash: str = ""
    master_seed: int = 0
    beta: Optional[float] = None
    passed: bool = True

    size_points: List[SizePointReport] = Field(default_factory=list)
    verdicts: List[TrendVerdict] = Field(default_factory=list)
    sweep: Optional[SweepReport] = None
    assumptions: List[AssumptionRow] = Field(default_factory=list)
    rsb: Optional[RSBReport] = None
    gg_ratio: List[GGRatioPoint] = Field(default_factory=list)
    commutativity: List[CommutativityRow] = Field(default_factory=list)
    checks: List[Dict[str, Any]] = Field(default_factory=list)

    failed_samples: List[FailedSample] = Field(default_factory=list)
    verdict_summary: Dict[str, Any] = Field(default_factory=dict)

    def summary_line(self) -> str:
        """One-line human summary printed by the CLI."""
        status = "PASS" if self.passed else "FAIL"
        parts = [f"{self.kind}:{self.study}", status]
        if self.verdicts:
            slopes = ", ".join(
                f"{v.quantity}@{v.lam if v.lam is not None else '-'} slope={v.slope:.3f}"
                for v in self.verdicts
            )
            parts.append(slopes)
        if self.size_points:
            exceeded = sum(point.bound_exceeded for point in self.size_points)
            parts.append(f"points={len(self.size_points)} bound_exceeded={exceeded}")
        if self.commutativity:
            parts.append(
                "gaps=" + ",".join(f"N{row.n}:{row.gap:.3g}" for row in self.commutativity)
            )
        if self.gg_ratio:
            parts.append(
                "ratios=" + ",".join(
                    f"N{p.n}:{p.ratio:.3f}" if p.ratio is not None else f"N{p.n}:absent"
                    for p in self.gg_ratio
                )
            )
        if self.failed_samples:
            parts.append(f"failed_samples={len(self.failed_samples)}")
        return " | ".join(parts)
