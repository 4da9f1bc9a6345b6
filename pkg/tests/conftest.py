import pytest

from app.core.config import SynthesisParams
from app.models.dsl import parse_code
from app.models.references import load_reference_code, load_reference_task

H5_VARIANT = "def Run(){ move turnLeft RepeatUntil(goal){ move If(pathRight){ turnRight } } }"


@pytest.fixture
def params():
    return SynthesisParams(n=10, mcts_iterations=200, runs_per_code=1, seed=0)


@pytest.fixture(scope="session")
def reference_codes():
    return {name: load_reference_code(name) for name in
            ("H1", "H2", "H3", "H4", "H5", "H6", "K7", "K8", "K9", "K10")}


@pytest.fixture(scope="session")
def h2_task():
    return load_reference_task("H2")


@pytest.fixture(scope="session")
def h5_task():
    return load_reference_task("H5")


@pytest.fixture(scope="session")
def k7_task():
    return load_reference_task("K7")


@pytest.fixture(scope="session")
def h5_variant():
    return parse_code(H5_VARIANT, "hoc")


@pytest.fixture(scope="session")
def reference_tasks():
    return {name: load_reference_task(name) for name in
            ("H1", "H2", "H3", "H4", "H5", "H6", "K7", "K8", "K9", "K10")}
