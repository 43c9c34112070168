"""
Unit Tests for Settings and Logging Setup
Trial Emulation v1.0
"""

import logging
import os
import unittest
from unittest import mock

from pythonjsonlogger import jsonlogger

from trial_emulation.config.logging import PACKAGE_LOGGER, configure_logging
from trial_emulation.config.settings import Settings


class TestSettings(unittest.TestCase):
    """Test Settings."""

    def test_defaults(self):
        with mock.patch.dict(os.environ, {}, clear=True):
            settings = Settings(_env_file=None)
        self.assertEqual(settings.LOG_LEVEL, "INFO")
        self.assertEqual(settings.MAX_WORKERS, 1)
        self.assertFalse(settings.RUN_SLOW_TESTS)

    def test_environment_prefix(self):
        env = {"TRIAL_EMULATION_MAX_WORKERS": "4", "TRIAL_EMULATION_RUN_SLOW_TESTS": "true"}
        with mock.patch.dict(os.environ, env, clear=True):
            settings = Settings(_env_file=None)
        self.assertEqual(settings.MAX_WORKERS, 4)
        self.assertTrue(settings.RUN_SLOW_TESTS)


class TestConfigureLogging(unittest.TestCase):
    """Test configure_logging."""

    def tearDown(self):
        logger = logging.getLogger(PACKAGE_LOGGER)
        for handler in list(logger.handlers):
            logger.removeHandler(handler)
        logger.propagate = True

    def test_single_handler(self):
        settings = Settings(_env_file=None, LOG_LEVEL="debug")
        configure_logging(settings)
        logger = configure_logging(settings)
        self.assertEqual(len(logger.handlers), 1)
        self.assertEqual(logger.level, logging.DEBUG)

    def test_json_format(self):
        logger = configure_logging(Settings(_env_file=None, LOG_FORMAT="json"))
        self.assertIsInstance(logger.handlers[0].formatter, jsonlogger.JsonFormatter)


if __name__ == "__main__":
    unittest.main()
