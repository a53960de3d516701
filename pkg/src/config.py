import logging
import os
from dotenv import load_dotenv

from src.errors import ConfigError

# Load environment variables from .env file (force override to catch changes)
load_dotenv(override=True)

KNOWN_CVXPY_SOLVERS = ("CLARABEL", "SCS", "MOSEK", "CVXOPT")


def _env_number(name, default, cast):
    raw = os.getenv(name)
    if raw is None or raw.strip() == "":
        return default
    try:
        return cast(raw)
    except ValueError:
        raise ConfigError(f"{name} must be a number, got {raw!r}")


class Config:
    SDP_SOLVER_PATH = os.getenv("SQUASH_SDP_SOLVER")
    CVXPY_SOLVER = os.getenv("SQUASH_CVXPY_SOLVER", "CLARABEL").upper()
    LARGE_BLOCK_SOLVER = os.getenv("SQUASH_LARGE_BLOCK_SOLVER", "SCS").upper()
    LARGE_BLOCK_SIDE = _env_number("SQUASH_LARGE_BLOCK_SIDE", 64, int)
    MAX_BASIS_WORDS = _env_number("SQUASH_MAX_BASIS_WORDS", 2000, int)
    SOLVER_TIME_LIMIT = _env_number("SQUASH_SOLVER_TIME_LIMIT", 36000.0, float)
    RECORDS_PATH = os.getenv("SQUASH_RECORDS_PATH", "data/run_records.json")
    LOG_LEVEL = os.getenv("SQUASH_LOG_LEVEL", "INFO").upper()
    RUN_SLOW_TESTS = os.getenv("SQUASH_RUN_SLOW", "false").lower() == "true"

    @classmethod
    def validate(cls):
        problems = []
        if cls.CVXPY_SOLVER not in KNOWN_CVXPY_SOLVERS:
            problems.append(f"SQUASH_CVXPY_SOLVER={cls.CVXPY_SOLVER} (expected one of {', '.join(KNOWN_CVXPY_SOLVERS)})")
        if cls.LARGE_BLOCK_SOLVER and cls.LARGE_BLOCK_SOLVER not in KNOWN_CVXPY_SOLVERS:
            problems.append(f"SQUASH_LARGE_BLOCK_SOLVER={cls.LARGE_BLOCK_SOLVER} (expected one of {', '.join(KNOWN_CVXPY_SOLVERS)} or empty)")
        if cls.LARGE_BLOCK_SIDE < 1:
            problems.append(f"SQUASH_LARGE_BLOCK_SIDE={cls.LARGE_BLOCK_SIDE} (must be positive)")
        if cls.MAX_BASIS_WORDS < 1:
            problems.append(f"SQUASH_MAX_BASIS_WORDS={cls.MAX_BASIS_WORDS} (must be positive)")
        if cls.SOLVER_TIME_LIMIT <= 0:
            problems.append(f"SQUASH_SOLVER_TIME_LIMIT={cls.SOLVER_TIME_LIMIT} (must be positive)")
        if not isinstance(logging.getLevelName(cls.LOG_LEVEL), int):
            problems.append(f"SQUASH_LOG_LEVEL={cls.LOG_LEVEL}")

        if problems:
            raise ConfigError(f"Invalid configuration: {'; '.join(problems)}. Fix the values in .env or the environment.")
        return True

    @classmethod
    def get_solver_options(cls, **overrides):
        from src.clients.solver_client import SolverOptions
        options = {
            "backend": "embedded",
            "external_path": cls.SDP_SOLVER_PATH,
            "cvxpy_solver": cls.CVXPY_SOLVER,
            "large_block_solver": cls.LARGE_BLOCK_SOLVER or None,
            "large_block_side": cls.LARGE_BLOCK_SIDE,
            "time_limit": cls.SOLVER_TIME_LIMIT,
        }
        options.update({k: v for k, v in overrides.items() if v is not None})
        return SolverOptions(**options)

    @classmethod
    def configure_logging(cls, level=None):
        level = (level or cls.LOG_LEVEL).upper()
        root = logging.getLogger()
        if not root.handlers:
            handler = logging.StreamHandler()
            handler.setFormatter(logging.Formatter("%(asctime)s %(levelname)s %(name)s: %(message)s"))
            root.addHandler(handler)
        root.setLevel(level)
        return root
