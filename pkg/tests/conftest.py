from pathlib import Path

import numpy as np
import pytest

FIXTURES = Path(__file__).parent / "fixtures"


@pytest.fixture
def fixtures_dir():
    return FIXTURES


def unit_at(theta: float) -> np.ndarray:
    """2-D unit vector at angle ``theta`` from [1, 0]."""
    return np.array([np.cos(theta), np.sin(theta)])


def unit_pair(cosine: float) -> tuple[np.ndarray, np.ndarray]:
    """Two 2-D unit vectors whose dot product is ``cosine``."""
    return np.array([1.0, 0.0]), np.array([cosine, np.sqrt(1.0 - cosine**2)])
