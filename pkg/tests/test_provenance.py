import hashlib
import sys
from unittest.mock import patch

from toddlerlab.config import RunConfig, apply_overrides, dump_config
from toddlerlab.provenance import (
    CONFIG_FILE,
    PROVENANCE_FILE,
    Provenance,
    write_run_metadata,
)

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib


class TestProvenance:
    """Tests for the run provenance record."""

    def test_config_fingerprint_is_sha256_of_dumped_config(self):
        config = RunConfig()
        expected = hashlib.sha256(dump_config(config).encode("utf-8")).hexdigest()
        assert Provenance.config_fingerprint(config) == expected

    def test_fingerprint_changes_with_config(self):
        a = RunConfig()
        b = apply_overrides(a, {"sac.lr": 0.001})
        assert Provenance.config_fingerprint(a) != Provenance.config_fingerprint(b)

    def test_generate_is_deterministic(self):
        """No timestamps: identical inputs give identical records."""
        config = RunConfig(seed=4)
        assert Provenance.generate(config) == Provenance.generate(config)

    def test_generate_fields(self):
        record = Provenance.generate(RunConfig())
        assert set(record) == {
            "package_version",
            "version_source",
            "config_sha256",
            "python",
            "numpy",
            "platform",
        }
        assert all(isinstance(value, str) and value for value in record.values())

    def test_get_platform_fallback(self):
        """Should fall back to 'unknown' on error."""
        with patch("platform.system", side_effect=Exception("No platform")):
            assert Provenance._get_platform() == "unknown"

    def test_hash_produces_sha256(self):
        assert Provenance._hash("test") == hashlib.sha256(b"test").hexdigest()

    def test_write_run_metadata(self, tmp_path):
        config = RunConfig(seed=9)
        write_run_metadata(tmp_path / "run", config)
        written = (tmp_path / "run" / CONFIG_FILE).read_text(encoding="utf-8")
        assert written == dump_config(config)
        record = tomllib.loads((tmp_path / "run" / PROVENANCE_FILE).read_text(encoding="utf-8"))
        assert record["config_sha256"] == Provenance.config_fingerprint(config)
