from pathlib import Path

import pytest

VECTOR_DIR = Path(__file__).resolve().parent.parent / "vectors"


@pytest.fixture(scope="session")
def vector_dir() -> Path:
    return VECTOR_DIR
