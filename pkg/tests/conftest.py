import os
import sys

import pytest

sys.path.insert(0, os.path.join(os.path.dirname(__file__), "..", "src"))

GOLDEN_DIR = os.path.join(os.path.dirname(__file__), "golden")


def load_golden(name: str) -> list[str]:
    """Read a golden trace fixture as a token list."""
    with open(os.path.join(GOLDEN_DIR, name + ".txt"), encoding="utf-8") as fh:
        return fh.read().split()


@pytest.fixture
def golden():
    return load_golden
