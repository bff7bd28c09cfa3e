from __future__ import annotations

from importlib.metadata import PackageNotFoundError
from importlib.metadata import version as installed_version
from pathlib import Path
from typing import Callable, NamedTuple, Optional, Tuple, cast

DISTRIBUTION = "toddlerlab"
FALLBACK_VERSION = "0.0.0.dev0"


class VersionInfo(NamedTuple):
    version: str
    source: str  # generated | scm | metadata | fallback


def _from_generated_module() -> Optional[str]:
    try:
        from ._version import version  # type: ignore[import-not-found]
    except ImportError:
        return None
    return str(version)


def _from_checkout() -> Optional[str]:
    try:
        from setuptools_scm import get_version  # type: ignore[import-not-found]
    except ImportError:
        return None
    scm_get_version = cast(Callable[..., str], get_version)
    try:
        return scm_get_version(
            root=str(Path(__file__).resolve().parents[2]), relative_to=__file__
        )
    except Exception:
        return None


def _from_metadata() -> Optional[str]:
    try:
        return installed_version(DISTRIBUTION)
    except PackageNotFoundError:
        return None


_RESOLVERS: Tuple[Tuple[str, Callable[[], Optional[str]]], ...] = (
    ("generated", _from_generated_module),
    ("scm", _from_checkout),
    ("metadata", _from_metadata),
)


def resolve_version_info(default: str = FALLBACK_VERSION) -> VersionInfo:
    """
    The first version found in the generated module, the git checkout or the
    installed metadata, together with where it came from.
    """
    for source, resolver in _RESOLVERS:
        found = resolver()
        if found:
            return VersionInfo(found, source)
    return VersionInfo(default, "fallback")


def resolve_package_version(default: str = FALLBACK_VERSION) -> str:
    return resolve_version_info(default).version
