"""Shared fixtures: the bundled toy dataset, small random graphs and seeded generators."""
from datetime import date, timedelta
from pathlib import Path

import numpy as np
import pytest

from app.config import get_settings
from app.models.graph import KGBuilder, TemporalKG
from app.services import DatasetService


TOY_DIR = Path(__file__).resolve().parent.parent / "data" / "toy"


@pytest.fixture(autouse=True)
def _isolated_settings(monkeypatch, tmp_path):
    monkeypatch.setenv("TKGE_OUTPUT_DIR", str(tmp_path / "runs"))
    monkeypatch.setenv("TKGE_PROGRESS", "false")
    get_settings.cache_clear()
    yield
    get_settings.cache_clear()


@pytest.fixture
def toy_dir() -> Path:
    return TOY_DIR


@pytest.fixture
def toy_kg() -> TemporalKG:
    kg, _ = DatasetService().load(DatasetService().manifest_for(TOY_DIR))
    return kg


@pytest.fixture
def rng() -> np.random.Generator:
    return np.random.default_rng(1234)


def random_raws(n_entities: int, n_relations: int, n_dates: int, n_facts: int, seed: int):
    """Distinct random string facts over a small vocabulary."""
    gen = np.random.default_rng(seed)
    days = [date(2015, 1, 1) + timedelta(days=30 * k) for k in range(n_dates)]
    raws = set()
    while len(raws) < n_facts:
        h, t = gen.integers(0, n_entities, size=2)
        r = gen.integers(0, n_relations)
        raws.add((f"e{h}", f"r{r}", f"e{t}", days[gen.integers(0, n_dates)]))
    return sorted(raws)


@pytest.fixture
def small_kg() -> TemporalKG:
    """12 entities, 3 relations, 6 dates; valid/test drawn from the same vocabulary."""
    raws = random_raws(12, 3, 6, 90, seed=7)
    train, valid, test = raws[:70], raws[70:80], raws[80:]
    return KGBuilder().build(train, valid, test)
