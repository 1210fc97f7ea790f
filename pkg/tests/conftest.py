import json

import pytest

from helpers import FIXTURES
from taintslice import ingest
from taintslice.model import FuncSpec, ParamSelector


@pytest.fixture(scope="session")
def overflow_export():
    return ingest.load(FIXTURES / "overflow_foo.json")


@pytest.fixture(scope="session")
def chain_export():
    return ingest.load(FIXTURES / "command_chain.json")


@pytest.fixture()
def printf_sink():
    return FuncSpec("printf", "sink", ParamSelector.all_from(1))


@pytest.fixture()
def fscanf_source():
    return FuncSpec("fscanf", "source", ParamSelector.all_from(3))


@pytest.fixture()
def fgets_source():
    return FuncSpec("fgets", "source", ParamSelector.of(1))


@pytest.fixture()
def system_sink():
    return FuncSpec("system", "sink", ParamSelector.of(1))


@pytest.fixture()
def write_export(tmp_path):
    def _write(obj, name="export.json"):
        path = tmp_path / name
        path.write_text(json.dumps(obj), encoding="utf-8")
        return path
    return _write
