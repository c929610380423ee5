from __future__ import annotations

from pathlib import Path

import pytest

from qres.instance import Instance, load_instance

DATA_DIR = Path(__file__).parent / "data"


@pytest.fixture(scope="session")
def data_dir() -> Path:
    return DATA_DIR


@pytest.fixture(scope="session")
def reference_instance() -> Instance:
    """Bundled demo: 3 providers x 2 machines, capacity 30, rates
    1.68/0.1/7/10, demand uniform on 10..22, wait uniform on 1..9 ms,
    every execution time 5 ms."""
    return load_instance(DATA_DIR / "reference.json")
