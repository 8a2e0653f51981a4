import pytest

from perfmodel.model import ParamVector
from perfmodel.schema import CategoricalParam, NumericParam, ParamSchema

# criterion number -> (passed, detail); filled by test_acceptance.py
ACCEPTANCE: dict[int, tuple[bool, str]] = {}


def recovery_schema() -> ParamSchema:
    """3 numeric intrinsics, categorical groups of 3 and 2 levels, 2 extrinsics."""
    return ParamSchema(
        intrinsic_numeric=(
            NumericParam("kernel", (2.0, 3.0, 4.0, 5.0)),
            NumericParam("filters", (4.0, 8.0, 16.0, 32.0, 64.0)),
            NumericParam("stride", (1.0, 2.0, 3.0)),
        ),
        intrinsic_categorical=(
            CategoricalParam("act", ("relu", "tanh", "sigmoid")),
            CategoricalParam("opt", ("adam", "sgd")),
        ),
        extrinsic=(
            NumericParam("gpus", (1.0, 2.0, 3.0, 4.0)),
            NumericParam("batch", (8.0, 16.0, 32.0, 64.0, 128.0)),
        ),
    )


def recovery_truth(schema: ParamSchema) -> ParamVector:
    return ParamVector.from_parts(
        schema,
        numeric={"kernel": (30.0, 1.0), "filters": (15.0, 0.8), "stride": (40.0, -1.0)},
        categorical={"act": {"relu": 20.0, "tanh": 30.0, "sigmoid": 25.0},
                     "opt": {"adam": 40.0, "sgd": 25.0}},
        extrinsic={"gpus": -0.9, "batch": -0.7},
        constant=3.7,
    )


@pytest.fixture(scope="session")
def tiny_schema():
    """One numeric, one categorical pair, one extrinsic: M = 2 + 2 + 1 + 1 = 6."""
    return ParamSchema(
        intrinsic_numeric=(NumericParam("k", (1.0, 2.0, 3.0, 4.0)),),
        intrinsic_categorical=(CategoricalParam("c", ("x", "y")),),
        extrinsic=(NumericParam("g", (1.0, 2.0, 4.0)),),
    )


@pytest.fixture(scope="session")
def rec_schema():
    return recovery_schema()


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(ACCEPTANCE):
        ok, detail = ACCEPTANCE[k]
        terminalreporter.write_line(f"criterion {k:>2}: {'PASS' if ok else 'FAIL'}  {detail}")
