import os

import pytest

ENABLE_VARIABLE = "TODDLERLAB_ACCEPTANCE"


def _acceptance_enabled() -> bool:
    return os.getenv(ENABLE_VARIABLE, "").strip().lower() in ("1", "true", "yes")


def _require_acceptance() -> None:
    if not _acceptance_enabled():
        pytest.skip(f"slow acceptance suite; set {ENABLE_VARIABLE}=1 to run it")
