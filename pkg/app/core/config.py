from pydantic_settings import BaseSettings, SettingsConfigDict

class Settings(BaseSettings):
    PROJECT_NAME: str = "relforms"

    # Runtime environment
    # - dev: verbose logging, metrics export optional
    # - batch: quieter logs for long preset sweeps
    ENVIRONMENT: str = "dev"
    LOG_LEVEL: str = "INFO"

    # Rank / symmetry tolerances
    # Relative thresholds: singular values below TOL * max(1, sigma_max) count as zero.
    TOL: float = 1e-10
    # Cholesky congruences on FEM matrices lose a few digits, so FEM triples get a looser knob.
    FEM_TOL: float = 1e-9
    # Two graphs are equal when their symmetric gap is below this.
    GAP_TOL: float = 1e-8

    # Self-adjointness is tested at finitely many s values
    SELFADJOINT_S_VALUES: list[float] = [1.0, -1.0, 0.5]

    # Finite-sequence surrogate for "-> 0"
    CONVERGENCE_TOL: float = 1e-8
    FEM_CONVERGENCE_TOL: float = 1e-6
    DECAY_RATIO: float = 0.1

    # A sequence of graphs counts as uniformly bounded below when min lower bound > -threshold
    LOWER_BOUND_THRESHOLD: float = 1e3
    # Resolvent norms above this are reported as unbounded
    RESOLVENT_NORM_CAP: float = 1e6

    # Minimal distance of 0 to the discrete Dirichlet spectrum before D_m is trusted single-valued
    NEAR_SPECTRUM_MARGIN: float = 1e-6

    # Randomized suites / searches
    DEFAULT_SEED: int = 20240229
    OMEGA_GRID: list[float] = [0.0, 0.5, 1.0, 2.0, 5.0, 10.0, 100.0]

    # Battery runner
    MAX_WORKERS: int = 4

    # Optional Prometheus textfile export (empty = disabled)
    METRICS_PATH: str = ""

    model_config = SettingsConfigDict(env_file=".env", env_prefix="RELFORMS_")

settings = Settings()
