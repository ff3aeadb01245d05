"""
Pydantic models for the disordered spin laboratory.
"""
from app.models.disorder import (
    ConstantCoupling,
    CouplingDistribution,
    GaussianCoupling,
    InteractionCatalog,
    InteractionTerm,
    PhiSpec,
    TwoPointCoupling,
    UniformCoupling,
)
from app.models.study import (
    ModelFamily,
    OrderOperatorSpec,
    OverlapSpec,
    ReplicaSection,
    StudyConfig,
)
from app.models.reports import (
    AssumptionRow,
    CommutativityRow,
    FailedSample,
    GGRatioPoint,
    IntegratedDuhamelRow,
    RSBPoint,
    RSBReport,
    ReplicaSymmetryRow,
    SizePointReport,
    StudyResult,
    SweepReport,
    SweepRow,
    TrendVerdict,
)

__all__ = [
    # Disorder models
    "ConstantCoupling",
    "CouplingDistribution",
    "GaussianCoupling",
    "InteractionCatalog",
    "InteractionTerm",
    "PhiSpec",
    "TwoPointCoupling",
    "UniformCoupling",
    # Study config models
    "ModelFamily",
    "OrderOperatorSpec",
    "OverlapSpec",
    "ReplicaSection",
    "StudyConfig",
    # Report models
    "AssumptionRow",
    "CommutativityRow",
    "FailedSample",
    "GGRatioPoint",
    "IntegratedDuhamelRow",
    "RSBPoint",
    "RSBReport",
    "ReplicaSymmetryRow",
    "SizePointReport",
    "StudyResult",
    "SweepReport",
    "SweepRow",
    "TrendVerdict",
]
