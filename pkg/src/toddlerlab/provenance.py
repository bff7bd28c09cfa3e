import hashlib
import platform
from pathlib import Path
from typing import Dict, Union

import numpy as np
import tomli_w

from ._runtime_version import resolve_version_info
from .checkpoint import atomic_write_bytes
from .config import RunConfig, dump_config

CONFIG_FILE = "config.toml"
PROVENANCE_FILE = "provenance.toml"


class Provenance:
    """Identifies what produced a run directory: package, config and platform."""

    @classmethod
    def generate(cls, config: RunConfig) -> Dict[str, str]:
        """Build the provenance record.

        Returns:
            Mapping of field name to value; identical inputs give identical records
        """
        version = resolve_version_info()
        return {
            "package_version": version.version,
            "version_source": version.source,
            "config_sha256": cls.config_fingerprint(config),
            "python": platform.python_version(),
            "numpy": np.__version__,
            "platform": cls._get_platform(),
        }

    @classmethod
    def config_fingerprint(cls, config: RunConfig) -> str:
        return cls._hash(dump_config(config))

    @classmethod
    def _get_platform(cls) -> str:
        """Get OS and machine type."""
        try:
            return f"{platform.system()}-{platform.machine()}"
        except Exception:
            return "unknown"

    @classmethod
    def _hash(cls, value: str) -> str:
        """Generate SHA256 hash of value.

        Args:
            value: String to hash

        Returns:
            Hexadecimal SHA256 hash
        """
        return hashlib.sha256(value.encode("utf-8")).hexdigest()


def write_run_metadata(out_dir: Union[str, Path], config: RunConfig) -> Path:
    """Write the effective config and its provenance record into ``out_dir``."""
    target = Path(out_dir)
    atomic_write_bytes(target / CONFIG_FILE, dump_config(config).encode("utf-8"))
    record = tomli_w.dumps(Provenance.generate(config))
    atomic_write_bytes(target / PROVENANCE_FILE, record.encode("utf-8"))
    return target
