"""Pytest configuration and fixtures."""

import logging
from pathlib import Path

import numpy as np
import pytest

from otlex.models import EmbeddingSpace, SyntheticInstance
from otlex.synth import generate


@pytest.fixture
def tiny_path() -> Path:
    """Return path to the tiny four-word embedding pair used for I/O tests."""
    return Path(__file__).parent / "fixtures" / "tiny"


@pytest.fixture
def write_vectors(tmp_path):
    """Return a helper that writes a vector file with the given text."""

    def _write(text: str, name: str = "vectors.vec") -> Path:
        path = tmp_path / name
        path.write_text(text, encoding="utf-8")
        return path

    return _write


@pytest.fixture
def rng() -> np.random.Generator:
    return np.random.default_rng(0)


@pytest.fixture
def cat_dog_space() -> EmbeddingSpace:
    """The 2×3 space holding cat=(1,0,0) and dog=(0,1,0)."""
    return EmbeddingSpace(words=["cat", "dog"], matrix=[[1.0, 0.0, 0.0], [0.0, 1.0, 0.0]])


@pytest.fixture(scope="session")
def planted_instance() -> SyntheticInstance:
    """Noise-free planted instance: target row pi[i] is exactly source row i rotated."""
    return generate(n=200, d=8, noise_sigma=0.0, seed=3)


@pytest.fixture(scope="session")
def noisy_instance() -> SyntheticInstance:
    """Planted instance at the acceptance scale (n=1000, d=16, sigma=0.01)."""
    return generate(n=1000, d=16, noise_sigma=0.01, seed=0)


@pytest.fixture(autouse=True)
def require_converged_plans(request, caplog):
    """Fail tests whose transport plans stop short of the marginal tolerance.

    Tests that cap Sinkhorn on purpose opt out with ``@pytest.mark.allow_unconverged``.
    """
    caplog.set_level(logging.WARNING, logger="otlex.ot_core")
    yield
    if request.node.get_closest_marker("allow_unconverged"):
        return
    stopped = [
        record.getMessage()
        for record in caplog.get_records("call")
        if record.name == "otlex.ot_core" and "Sinkhorn stopped" in record.getMessage()
    ]
    if stopped:
        pytest.fail(f"{len(stopped)} unconverged plan(s); first: {stopped[0]}")
