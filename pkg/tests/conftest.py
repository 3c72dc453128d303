import json
from pathlib import Path

import pytest

from sqlprobe.database import Database
from sqlprobe.schema import ColumnDef, ForeignKey, Schema, TableDef

MINI_DDL = """\
CREATE TABLE PEOPLE (
  ID INTEGER PRIMARY KEY,
  NAME TEXT NOT NULL,
  AGE INTEGER,
  SECTION TEXT
);
"""

MINI_UTTERANCES = [
    {"id": "q_min", "text": "How old is the youngest person?", "schema_id": "minipeople",
     "gold_sql": "SELECT MIN(AGE) FROM PEOPLE", "difficulty": "easy"},
    {"id": "q_count", "text": "How many people are in section A?", "schema_id": "minipeople",
     "gold_sql": "SELECT COUNT(*) FROM PEOPLE WHERE SECTION = 'A'", "difficulty": "easy"},
]

MINI_CANDIDATES = [
    {"utterance_id": "q_min", "sql": "SELECT MIN(AGE) FROM PEOPLE", "count": 5},
    {"utterance_id": "q_min", "sql": "SELECT MAX(AGE) FROM PEOPLE", "count": 3},
    {"utterance_id": "q_count", "sql": "SELECT COUNT(*) FROM PEOPLE WHERE SECTION = 'A'", "count": 4},
    {"utterance_id": "q_count", "sql": "SELECT COUNT(*) FROM PEOPLE", "count": 5},
]


def write_mini_corpus(root: Path) -> Path:
    """A two-utterance corpus bundle on disk, for service and CLI tests."""
    (root / "schemas").mkdir(parents=True, exist_ok=True)
    (root / "databases").mkdir(exist_ok=True)
    (root / "schemas" / "minipeople.sql").write_text(MINI_DDL)
    (root / "schemas" / "minipeople.json").write_text(json.dumps({
        "domain_id": "people",
        "descriptions": {"_overview": "People and their ages.",
                         "PEOPLE": "One row per person."},
    }))
    (root / "databases" / "minipeople.json").write_text(json.dumps({
        "schema_id": "minipeople",
        "tables": {"PEOPLE": [
            [1, "Alice", 35, "A"], [2, "Bob", 42, "A"], [3, "Cara", 29, "B"],
            [4, "Dan", 35, "B"], [5, "Eve", 51, "A"],
        ]},
    }))
    with (root / "utterances.jsonl").open("w") as fh:
        for doc in MINI_UTTERANCES:
            fh.write(json.dumps(doc) + "\n")
    with (root / "candidates.jsonl").open("w") as fh:
        for doc in MINI_CANDIDATES:
            fh.write(json.dumps(doc) + "\n")
    (root / "units.json").write_text(json.dumps({"unit1": ["q_min", "q_count"]}))
    (root / "config.toml").write_text(
        "[synth]\nn_fuzz = 12\nmax_rows_per_table = 5\n\n[cluster]\nn_dbs = 40\n")
    return root


def people_schema(schema_id="people_t") -> Schema:
    return Schema(
        id=schema_id,
        tables=(
            TableDef("PEOPLE", (
                ColumnDef("ID", "integer", primary_key=True),
                ColumnDef("NAME", "text", not_null=True),
                ColumnDef("AGE", "integer"),
                ColumnDef("SECTION", "text"),
            )),
        ),
        domain_id="people",
    )


def people_db(rows=None, schema=None) -> Database:
    schema = schema or people_schema()
    if rows is None:
        rows = [
            (1, "Alice", 35, "A"), (2, "Bob", 42, "A"), (3, "Cara", 29, "B"),
            (4, "Dan", 35, "B"), (5, "Eve", 51, "A"),
        ]
    return Database(schema, {"PEOPLE": [tuple(r) for r in rows]})


def two_table_schema(schema_id="shop_t") -> Schema:
    return Schema(
        id=schema_id,
        tables=(
            TableDef("CUSTOMER", (
                ColumnDef("ID", "integer", primary_key=True),
                ColumnDef("NAME", "text", not_null=True),
            )),
            TableDef("ORDERS", (
                ColumnDef("ID", "integer", primary_key=True),
                ColumnDef("CUSTOMER_ID", "integer"),
                ColumnDef("AMOUNT", "integer"),
            )),
        ),
        foreign_keys=(ForeignKey("ORDERS", "CUSTOMER_ID", "CUSTOMER", "ID"),),
        domain_id="shop",
    )


def two_table_db(schema=None) -> Database:
    schema = schema or two_table_schema()
    return Database(schema, {
        "CUSTOMER": [(1, "Noor"), (2, "Pat"), (3, "Quinn")],
        "ORDERS": [(1, 1, 100), (2, 1, 250), (3, 2, 80)],
    })


@pytest.fixture
def schema():
    return people_schema()


@pytest.fixture
def db(schema):
    return people_db(schema=schema)


# ---------------------------------------------------------------------------
# Acceptance reporting: one PASS/FAIL line per criterion at the end.

_acceptance_results = []


def pytest_runtest_logreport(report):
    if report.when == "call" and "test_acceptance" in report.nodeid:
        _acceptance_results.append((report.nodeid.split("::")[-1], report.outcome))


def pytest_terminal_summary(terminalreporter):
    if not _acceptance_results:
        return
    terminalreporter.write_sep("=", "acceptance criteria")
    for name, outcome in _acceptance_results:
        status = "PASS" if outcome == "passed" else "FAIL"
        terminalreporter.write_line(f"[{status}] {name}")
