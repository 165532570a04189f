from pydantic import BaseModel
import os

class Settings(BaseModel):
    output_dir: str = os.getenv("LEGALRISK_OUTPUT_DIR", "out")
    log_level: str = os.getenv("LEGALRISK_LOG_LEVEL", "INFO")
    max_workers: int = int(os.getenv("LEGALRISK_MAX_WORKERS", "1"))
    default_steps: int = int(os.getenv("LEGALRISK_DEFAULT_STEPS", "2048"))
    path_block_size: int = int(os.getenv("LEGALRISK_PATH_BLOCK", "1024"))
    quad_tol: float = float(os.getenv("LEGALRISK_QUAD_TOL", "1e-10"))
    shooting_tol: float = float(os.getenv("LEGALRISK_SHOOTING_TOL", "1e-8"))
    shooting_max_iter: int = int(os.getenv("LEGALRISK_SHOOTING_MAX_ITER", "60"))
    oracle_restarts: int = int(os.getenv("LEGALRISK_ORACLE_RESTARTS", "8"))
    oracle_max_iter: int = int(os.getenv("LEGALRISK_ORACLE_MAX_ITER", "4000"))
    oracle_exclusion: float = float(os.getenv("LEGALRISK_ORACLE_EXCLUSION", "0.05"))
    csv_float_format: str = "%.12g"

settings = Settings()
