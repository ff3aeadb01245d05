"""
Configuration settings for the disordered spin laboratory.
"""
from pydantic import Field
from pydantic_settings import BaseSettings


class Settings(BaseSettings):
    """Process-wide settings loaded from environment variables."""

    # ============================================
    # Project
    # ============================================
    PROJECT_NAME: str = "Disordered Spin Laboratory"
    VERSION: str = "0.1.0"

    # Debug & Logging
    LOG_LEVEL: str = "INFO"
    LOG_FORMAT: str = "text"  # json or text
    DEBUG_CHECKS: bool = Field(
        default=False,
        description="Re-verify Hermiticity flags after every operator arithmetic op",
    )

    # ============================================
    # Dimension envelope
    # ============================================
    MAX_DIMENSION: int = 4096  # dense Hilbert-space dimension cap (N=12 at S=1/2)
    MAX_CLASSICAL_SPINS: int = 24  # n_replicas * N on the diagonal path
    MAX_QUANTUM_REPLICAS: int = 3
    MAX_SUPPORT_SIZE: int = 4  # |X| for interaction and overlap supports

    # ============================================
    # Numerical tolerances
    # ============================================
    ALGEBRA_TOLERANCE: float = 1e-12
    REALITY_TOLERANCE: float = 1e-10
    DEGENERACY_THRESHOLD: float = 1e-8  # scaled by max(1, ||H||)
    AXIS_TOLERANCE: float = 1e-9
    FIRST_DIFFERENCE_STEP: float = 1e-5  # central difference of log Z
    SECOND_DIFFERENCE_STEP: float = 1e-4  # mixed difference of Z / Z(0)
    SWEEP_RELATIVE_TOLERANCE: float = 1e-3

    # ============================================
    # Study policy
    # ============================================
    SE_MULTIPLIER: float = 4.0
    TREND_SLOPE_THRESHOLD: float = -0.3
    SAMPLE_FAILURE_LIMIT: float = 0.01
    DEFAULT_THREADS: int = 1

    model_config = {
        "env_file": ".env",
        "case_sensitive": True,
        "extra": "ignore"
    }


# Create global settings instance
settings = Settings()
