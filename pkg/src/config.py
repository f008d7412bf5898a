"""
Settings for the metastability lab, read once from the environment (.env)
"""

import os
import logging
from pathlib import Path
from typing import Dict, List, Optional
from dotenv import load_dotenv

env_path = Path(__file__).parent.parent / ".env"
load_dotenv(dotenv_path=env_path)

LOG_LEVELS = ("DEBUG", "INFO", "WARNING", "ERROR", "CRITICAL")


def _int(name: str, default: int) -> int:
    return int(os.getenv(name, str(default)))


def _flag(name: str, default: bool) -> bool:
    return os.getenv(name, "true" if default else "false").strip().lower() in ("1", "true", "yes", "on")


class Config:
    """Class-level settings; tests monkeypatch attributes directly"""

    # --- locations ---------------------------------------------------------
    BASE_DIR: Path = Path(__file__).parent.parent
    CACHE_DIR: str = os.getenv("METASTAB_CACHE_DIR", "data/cache/eigen")
    RUNS_DIR: str = os.getenv("METASTAB_RUNS_DIR", "runs")
    ENABLE_CACHE: bool = _flag("ENABLE_CACHE", True)

    # --- size guards (NumericalGuardError beyond these) --------------------
    DENSE_LIMIT: int = _int("DENSE_LIMIT", 4096)
    ENUMERATION_GUARD: int = _int("ENUMERATION_GUARD", 200000)
    SUBSPACE_LIMIT: int = _int("SUBSPACE_LIMIT", 200000)
    KRYLOV_MAX_DIM: int = _int("KRYLOV_MAX_DIM", 64)
    LANCZOS_MAX_ITER: int = _int("LANCZOS_MAX_ITER", 3000)

    # --- filter tables -----------------------------------------------------
    FILTER_N_MAX: int = _int("FILTER_N_MAX", 10000)
    FILTER_GRID_DIVISOR: int = _int("FILTER_GRID_DIVISOR", 2000)

    # --- execution ---------------------------------------------------------
    THREADS: int = _int("THREADS", os.cpu_count() or 1)
    DEFAULT_SEED: int = _int("DEFAULT_SEED", 20240501)

    LOG_LEVEL: str = os.getenv("LOG_LEVEL", "INFO")
    LOG_FILE: Optional[str] = os.getenv("LOG_FILE") or None

    _logging_ready: bool = False

    @classmethod
    def setup_logging(cls, level: Optional[str] = None):
        """Install console (and optional file) handlers once"""
        if cls._logging_ready:
            return

        handlers: List[logging.Handler] = [logging.StreamHandler()]
        if cls.LOG_FILE:
            log_path = Path(cls.LOG_FILE)
            log_path.parent.mkdir(parents=True, exist_ok=True)
            handlers.append(logging.FileHandler(log_path, encoding="utf-8"))

        logging.basicConfig(
            level=(level or cls.LOG_LEVEL).upper(),
            format="%(asctime)s %(levelname)s %(name)s: %(message)s",
            handlers=handlers,
        )
        cls._logging_ready = True

    @classmethod
    def validate(cls) -> List[str]:
        """Human-readable problems with the current settings (empty when fine)"""
        issues = []
        if not env_path.exists():
            issues.append("ℹ️  no .env file, running on defaults (see .env.example)")
        if cls.DENSE_LIMIT < 2:
            issues.append("⚠️  DENSE_LIMIT must be at least 2")
        if cls.FILTER_N_MAX < 100:
            issues.append("⚠️  FILTER_N_MAX below 100, filter tables will refuse to build")
        if cls.THREADS < 1:
            issues.append("⚠️  THREADS must be positive")
        if cls.LOG_LEVEL.upper() not in LOG_LEVELS:
            issues.append(f"⚠️  unknown LOG_LEVEL {cls.LOG_LEVEL}")
        return issues

    @classmethod
    def summary(cls) -> Dict[str, Dict[str, object]]:
        """Grouped settings for display"""
        return {
            "📁 Locations": {
                "Eigen cache": cls.CACHE_DIR,
                "Runs": cls.RUNS_DIR,
                "Cache enabled": "✅" if cls.ENABLE_CACHE else "❌",
            },
            "🧮 Guards": {
                "Dense limit": cls.DENSE_LIMIT,
                "Enumeration guard": cls.ENUMERATION_GUARD,
                "Subspace limit": cls.SUBSPACE_LIMIT,
                "Krylov max dim": cls.KRYLOV_MAX_DIM,
                "Lanczos max iter": cls.LANCZOS_MAX_ITER,
                "Filter n_max": cls.FILTER_N_MAX,
            },
            "⚡ Execution": {
                "Threads": cls.THREADS,
                "Seed": cls.DEFAULT_SEED,
                "Log level": cls.LOG_LEVEL,
            },
        }

    @classmethod
    def print_config(cls):
        for group, rows in cls.summary().items():
            print(f"\n{group}")
            for key, value in rows.items():
                print(f"   {key}: {value}")
        for issue in cls.validate():
            print(f"   {issue}")


if __name__ == "__main__":
    Config.print_config()
