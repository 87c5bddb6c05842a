"""
Configuration management using environment variables
"""
from typing import Tuple
from pydantic_settings import BaseSettings, SettingsConfigDict
from dotenv import load_dotenv
load_dotenv()


class Settings(BaseSettings):
    """Numerical and runtime settings"""

    # Special functions
    KUMMER_SERIES_TOL: float = 1e-16
    KUMMER_MAX_TERMS: int = 100_000
    KUMMER_ASYMPTOTIC_THRESHOLD: float = 500.0
    KUMMER_ASYMPTOTIC_TOL: float = 1e-15

    # Policy
    RATIO_ASYMPTOTIC_PSI: float = 1e8
    SMALL_PSI_BAND: float = 0.01
    LARGE_PSI_BAND: float = 100.0
    RATIO_TABLE_PSI_MIN: float = 1e-6
    RATIO_TABLE_PSI_MAX: float = 1e6
    RATIO_TABLE_NODES_PER_DECADE: int = 40

    # PDE grid
    GRID_V_MIN_FRACTION: float = 1e-4
    GRID_V_MAX_STDEVS: float = 10.0
    GRID_STRETCH: float = 3.0
    RANNACHER_HALF_STEPS: int = 2

    # Monte Carlo
    MC_BLOCK_SIZE: int = 4096
    MC_WEALTH_FLOOR_FRACTION: float = 1e-8
    MC_MAX_FLAGGED_FRACTION: float = 1e-3
    MC_VARIANCE_FLOOR: float = 1e-12

    # Verification tolerances
    VERIFY_RESIDUAL_TOL: float = 1e-6
    VERIFY_RESIDUAL_REL_STEP: float = 1e-4
    VERIFY_RICHARDSON_REL_STEP: float = 0.05
    VERIFY_RICHARDSON_BAND: Tuple[float, float] = (1.5, 2.5)
    VERIFY_CN_REL_TOL: float = 5e-4
    # CN comparison window: v in theta * band, tau >= fraction * tau_max
    VERIFY_CN_WINDOW_V_BAND: Tuple[float, float] = (0.5, 2.0)
    VERIFY_CN_WINDOW_TAU_FRACTION: float = 0.25
    VERIFY_CN_INTERIOR_TAU_LEVELS: int = 8
    VERIFY_CN_ORDER_BAND: Tuple[float, float] = (1.6, 2.4)
    VERIFY_ASYMPTOTIC_REL_TOL: float = 1e-2
    VERIFY_TERMINAL_TOL: float = 1e-5
    VERIFY_N_SIGMA: float = 3.0

    # Logging
    LOG_LEVEL: str = "INFO"

    model_config = SettingsConfigDict(
        env_file=".env",
        env_prefix="HESTONOPT_",
        case_sensitive=True,
        extra="ignore",
    )


settings = Settings()
