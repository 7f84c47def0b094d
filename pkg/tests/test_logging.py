"""
Tests for the structured logger.
"""

import logging
from unittest.mock import patch

from utils.logging import AppLogger, StructuredFormatter, get_logger, resolve_level


class TestLogging:
    """Test suite for level handling and record formatting."""

    def test_resolve_level(self):
        """FRACBUMP_LOG values map onto logging levels."""
        assert resolve_level("debug") == "DEBUG"
        assert resolve_level(" Warning ") == "WARNING"
        assert resolve_level("verbose") == "INFO"

    def test_module_loggers_propagate(self):
        """Module loggers sit below the application logger without own handlers."""
        module_logger = get_logger("core.reduction")

        assert module_logger.logger.name == "fracbump.core.reduction"
        assert module_logger.logger.handlers == []
        assert module_logger.logger.propagate

    def test_keyword_fields_in_record(self):
        """Keyword arguments appear in the formatted entry."""
        record = logging.LogRecord("fracbump.test", logging.INFO, __file__, 1,
                                   "fixed point converged", None, None)
        record.extra_fields = {"iterations": 7}

        text = StructuredFormatter().format(record)

        assert "'iterations': 7" in text
        assert "'message': 'fixed point converged'" in text

    def test_set_level(self):
        """set_level accepts the lower-case names."""
        app_logger = AppLogger("fracbump.test.levels", None)

        app_logger.set_level("error")

        assert app_logger.logger.level == logging.ERROR

    def test_error_fields_reach_record(self):
        """Keyword fields of an error are handed over as extra_fields."""
        app_logger = AppLogger("fracbump.test.errors", None)

        with patch.object(app_logger.logger, "error") as emit:
            app_logger.error("run failed", error="ConfigurationError", detail="p = 5 is too large")

        emit.assert_called_once_with(
            "run failed",
            extra={"extra_fields": {"error": "ConfigurationError", "detail": "p = 5 is too large"}},
        )

    def test_public_methods_document_arguments(self):
        """Every logging method documents its arguments."""
        for name in ("set_level", "info", "error", "warning", "debug", "exception"):
            assert "Args:" in getattr(AppLogger, name).__doc__, name
        for helper in (resolve_level, get_logger):
            assert "Returns:" in helper.__doc__
