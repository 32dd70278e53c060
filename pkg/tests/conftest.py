from __future__ import annotations

import pytest

from idsbench.dataset import AttributeSchema, CategoryMap, LabeledDataset, make_record
from idsbench.synthetic import synthetic_dataset

CMAP = CategoryMap.default()


def schema_of(kinds: str) -> AttributeSchema:
    """'cn' -> a categorical attribute a0 followed by a numeric a1."""
    return AttributeSchema.build(
        [(f"a{i}", "categorical" if k == "c" else "numeric") for i, k in enumerate(kinds)]
    )


def make_dataset(rows, kinds: str) -> LabeledDataset:
    """rows: iterable of (values, is_attack)."""
    schema = schema_of(kinds)
    records = []
    for values, is_attack in rows:
        values = tuple(float(v) if k == "n" else str(v) for v, k in zip(values, kinds))
        records.append(make_record(values, "smurf" if is_attack else "normal", CMAP))
    return LabeledDataset(schema, tuple(records))


@pytest.fixture(scope="session")
def synthetic_6k() -> LabeledDataset:
    return synthetic_dataset(6000, seed=11)


@pytest.fixture(scope="session")
def synthetic_file(tmp_path_factory, synthetic_6k):
    from idsbench.dataset import write_dataset
    path = tmp_path_factory.mktemp("data") / "synthetic.csv"
    with open(path, "w", encoding="utf-8") as fh:
        write_dataset(synthetic_6k, fh)
    return path


# Acceptance verdicts, collected by tests/test_acceptance.py and echoed in the summary.
ACCEPTANCE: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE:
            terminalreporter.write_line(line)
