"""Pytest configuration for signflow tests."""

import os

import numpy as np
import pytest
from click.testing import CliRunner

# Keep presets independent of the developer's shell
os.environ.pop("SIGNFLOW_ENV", None)
os.environ.pop("SIGNFLOW_LOG_DIR", None)


@pytest.fixture
def config():
    """Tiny double-precision configuration"""
    from src.config import get_config

    return get_config("testing")


@pytest.fixture
def rng():
    """Seeded generator for test data"""
    return np.random.default_rng(0)


@pytest.fixture
def corpus(config):
    """Synthetic corpus built from the testing configuration"""
    from src.services.corpus_service import CorpusService

    return CorpusService(config).build_corpus()


@pytest.fixture
def pipeline(config, corpus):
    """Freshly initialized pipeline wired to the test corpus"""
    from src.factory import create_pipeline

    return create_pipeline(config, corpus)


@pytest.fixture
def trained_pipeline(pipeline, corpus):
    """Pipeline with one predictor epoch and a trained back-translator"""
    pipeline.fit(corpus, epochs=1)
    pipeline.fit_backtranslator(corpus, epochs=1)
    return pipeline


@pytest.fixture
def runner():
    """Create a CLI runner"""
    return CliRunner()
