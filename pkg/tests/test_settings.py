"""Unit tests for core/settings.py: seed resolution and environment fallbacks."""
import importlib
import sys
import warnings

import pytest

from iqclab.core.settings import Settings


def _settings_module():
    """The core.settings module object, for importlib.reload().

    `iqclab/core/__init__.py` re-exports the `settings` instance under the
    submodule's name, so attribute access on the package returns the
    instance; sys.modules still holds the module.
    """
    import iqclab.core.settings  # noqa: F401
    return sys.modules["iqclab.core.settings"]


class TestResolveSeed:
    def test_first_candidate_wins(self):
        assert Settings(SEED=7).resolve_seed(3, 5) == 3

    def test_skips_missing_candidates(self):
        assert Settings(SEED=7).resolve_seed(None, 5) == 5

    def test_falls_back_to_environment_seed(self):
        assert Settings(SEED=7).resolve_seed(None, None) == 7

    def test_zero_when_nothing_given(self):
        assert Settings(SEED=None).resolve_seed(None) == 0

    def test_zero_is_a_real_seed(self):
        assert Settings(SEED=7).resolve_seed(0) == 0


class TestEnvironment:
    def test_prefix(self, monkeypatch):
        monkeypatch.setenv("IQCLAB_SEED", "11")
        monkeypatch.setenv("IQCLAB_DET_TOL", "1e-7")
        s = Settings()
        assert s.SEED == 11
        assert s.DET_TOL == 1e-7

    def test_log_level_value(self):
        assert Settings(LOG_LEVEL="debug").log_level_value == 10


class TestFallbackWarnings:
    def test_warns_on_non_positive_jobs(self, monkeypatch):
        monkeypatch.setenv("IQCLAB_JOBS", "0")
        settings_module = _settings_module()
        with pytest.warns(UserWarning, match="IQCLAB_JOBS"):
            importlib.reload(settings_module)
        assert settings_module.settings.JOBS == 1
        monkeypatch.undo()
        importlib.reload(settings_module)

    def test_warns_on_unknown_log_level(self, monkeypatch):
        monkeypatch.setenv("IQCLAB_LOG_LEVEL", "chatty")
        settings_module = _settings_module()
        with pytest.warns(UserWarning, match="IQCLAB_LOG_LEVEL"):
            importlib.reload(settings_module)
        assert settings_module.settings.LOG_LEVEL == "WARNING"
        monkeypatch.undo()
        importlib.reload(settings_module)

    def test_quiet_with_defaults(self, monkeypatch):
        monkeypatch.delenv("IQCLAB_JOBS", raising=False)
        monkeypatch.delenv("IQCLAB_LOG_LEVEL", raising=False)
        settings_module = _settings_module()
        with warnings.catch_warnings(record=True) as caught:
            warnings.simplefilter("always")
            importlib.reload(settings_module)
        assert not [w for w in caught if "IQCLAB_" in str(w.message)]
