"""
Configuration management for disqsim
Reads runtime settings from environment variables (and a local .env file)
"""

import os
from pathlib import Path
from typing import Optional

from dotenv import load_dotenv

from disqsim.errors import ConfigError

load_dotenv()


class Config:
    """Runtime settings for the pipeline, the CLI and the MCP server"""

    def _get_int(self, key: str, default: int, minimum: int = 0) -> int:
        raw = os.getenv(key)
        if raw is None or raw == "":
            return default
        try:
            value = int(raw)
        except ValueError:
            raise ConfigError(f"{key} must be an integer, got {raw!r}")
        if value < minimum:
            raise ConfigError(f"{key} must be >= {minimum}, got {value}")
        return value

    @property
    def log_level(self) -> str:
        """Get log level from environment"""
        return os.getenv("DISQSIM_LOG_LEVEL", "INFO").upper()

    @property
    def max_qubits(self) -> int:
        """Largest number of active qubits the simulator accepts"""
        return self._get_int("DISQSIM_MAX_QUBITS", 26, minimum=1)

    @property
    def shots(self) -> int:
        return self._get_int("DISQSIM_SHOTS", 10000, minimum=1)

    @property
    def seed(self) -> int:
        return self._get_int("DISQSIM_SEED", 1234)

    @property
    def kappa(self) -> float:
        """Coupling factor between link loss and EPR depolarization"""
        raw = os.getenv("DISQSIM_KAPPA", "1.0")
        try:
            value = float(raw)
        except ValueError:
            raise ConfigError(f"DISQSIM_KAPPA must be a number, got {raw!r}")
        if not 0.0 <= value <= 1.0:
            raise ConfigError(f"DISQSIM_KAPPA must lie in [0, 1], got {value}")
        return value

    @property
    def opt_level(self) -> int:
        level = self._get_int("DISQSIM_OPT_LEVEL", 1)
        if level not in (0, 1):
            raise ConfigError(f"DISQSIM_OPT_LEVEL must be 0 or 1, got {level}")
        return level

    @property
    def workers(self) -> int:
        return self._get_int("DISQSIM_WORKERS", 1, minimum=1)

    @property
    def arch_dir(self) -> Optional[Path]:
        """Extra directory searched for architecture files"""
        raw = os.getenv("DISQSIM_ARCH_DIR")
        return Path(raw) if raw else None
