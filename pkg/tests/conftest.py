import importlib.resources as res
import os

import pytest

from planforge import catalog as cat
from planforge import datagen, loader, runtime
from planforge.backend import interp

MINI = os.path.join(os.path.dirname(__file__), "data", "mini")

ALL_QUERIES = ["q1", "q2s", "q3", "q4", "q5m", "q6", "q12", "q13", "q14",
               "q19", "q22", "qmot"]


def bundled_plan_text(name):
    return (res.files("planforge") / "queries" / f"{name}.plan").read_text()


def schema_text():
    return (res.files("planforge") / "queries" / "tpch.schema").read_text()


def fresh_catalog(data_dir=None):
    c = cat.parse_schema(schema_text())
    if data_dir is not None:
        runtime.collect_stats(c, data_dir)
    return c


@pytest.fixture(scope="session")
def mini_dir():
    return MINI


@pytest.fixture(scope="session")
def empty_dir(tmp_path_factory):
    d = tmp_path_factory.mktemp("empty")
    datagen.generate_empty(str(d))
    return str(d)


@pytest.fixture(scope="session")
def sf001_dir(tmp_path_factory):
    d = tmp_path_factory.mktemp("sf001")
    datagen.generate(str(d), scale=0.01)
    return str(d)


@pytest.fixture(scope="session")
def sf01_dir(tmp_path_factory):
    d = tmp_path_factory.mktemp("sf01")
    datagen.generate(str(d), scale=0.1)
    return str(d)


@pytest.fixture(scope="session")
def mini_catalog():
    return fresh_catalog(MINI)


def run_program(program, catalog, data_dir):
    db = loader.prepare_db(program, catalog, data_dir)
    return interp.interpret(program, db)


def pytest_configure(config):
    config.addinivalue_line(
        "markers", "slow: scale-factor-0.1 measurements and C round trips")
