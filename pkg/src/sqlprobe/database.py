"""Database instances: typed cell values, validation, repair, serialization.

A Database is an immutable-by-convention mapping of table name to rows,
bound to its Schema. Cell values are restricted to NULL (None), int,
float (finite), and text; dates are stored as canonical yyyy-mm-dd text.
"""

from __future__ import annotations

import datetime
import json
import math
import re
import sqlite3
from dataclasses import dataclass, field
from pathlib import Path

from .schema import Schema, SchemaError

DATE_PATTERN = re.compile(r"^\d{4}-\d{2}-\d{2}$")

# Input formats accepted by repair; the canonical output form is yyyy-mm-dd.
DEFAULT_DATE_FORMATS = (
    "%Y-%m-%d",
    "%b%d,%Y",
    "%B%d,%Y",
    "%b %d, %Y",
    "%B %d, %Y",
    "%b %d %Y",
    "%B %d %Y",
    "%m/%d/%Y",
    "%Y/%m/%d",
    "%d %b %Y",
    "%d %B %Y",
)


class ValidationError(ValueError):
    """A database violates typing, key, or value invariants."""


class RepairError(ValueError):
    """Repair could not normalize a value (e.g. an unparseable date)."""


@dataclass
class Database:
    schema: Schema
    tables: dict[str, list[tuple]] = field(default_factory=dict)

    @property
    def schema_id(self) -> str:
        return self.schema.id

    @property
    def size(self) -> int:
        """Total record count across all tables."""
        return sum(len(rows) for rows in self.tables.values())

    def rows(self, table: str) -> list[tuple]:
        for name, rows in self.tables.items():
            if name.lower() == table.lower():
                return rows
        return []

    def column_values(self, table: str, column: str) -> list:
        tdef = self.schema.table(table)
        idx = tdef.column_index(column)
        return [row[idx] for row in self.rows(table)]

    def replace_tables(self, tables: dict[str, list[tuple]]) -> "Database":
        return Database(self.schema, {name: [tuple(r) for r in rows] for name, rows in tables.items()})

    def fingerprint(self) -> tuple:
        """Hashable content key (used for memoizing per-database computations)."""
        return tuple((name, tuple(self.tables[name])) for name in sorted(self.tables))


def _check_cell(value, col, table_name: str, problems: list[str]):
    where = f"{table_name}.{col.name}"
    if value is None:
        if col.not_null:
            problems.append(f"NULL in NOT NULL column {where}")
        return
    if col.type == "integer":
        if isinstance(value, bool) or not isinstance(value, int):
            problems.append(f"non-integer {value!r} in integer column {where}")
    elif col.type == "real":
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            problems.append(f"non-numeric {value!r} in real column {where}")
        elif isinstance(value, float) and not math.isfinite(value):
            problems.append(f"non-finite {value!r} in real column {where}")
    elif col.type == "text":
        if not isinstance(value, str):
            problems.append(f"non-text {value!r} in text column {where}")
    elif col.type == "date":
        if not isinstance(value, str) or not DATE_PATTERN.match(value):
            problems.append(f"non-canonical date {value!r} in date column {where}")


def validate_database(db: Database) -> None:
    """Raise ValidationError unless typing, key, and foreign-key invariants hold."""
    schema = db.schema
    problems: list[str] = []
    for name in db.tables:
        if not schema.has_table(name):
            problems.append(f"unknown table {name!r}")
    for tdef in schema.tables:
        rows = db.rows(tdef.name)
        for row in rows:
            if len(row) != len(tdef.columns):
                problems.append(f"row arity {len(row)} != {len(tdef.columns)} in table {tdef.name!r}")
                continue
            for value, col in zip(row, tdef.columns):
                _check_cell(value, col, tdef.name, problems)
        for i, col in enumerate(tdef.columns):
            if col.is_unique:
                seen = set()
                for row in rows:
                    if len(row) != len(tdef.columns):
                        continue
                    v = row[i]
                    if v is None:
                        continue
                    if v in seen:
                        problems.append(f"duplicate value {v!r} in unique column {tdef.name}.{col.name}")
                    seen.add(v)
    for fk in schema.foreign_keys:
        parent_values = set(v for v in db.column_values(fk.parent_table, fk.parent_column) if v is not None)
        child_idx = schema.table(fk.child_table).column_index(fk.child_column)
        for row in db.rows(fk.child_table):
            v = row[child_idx]
            if v is not None and v not in parent_values:
                problems.append(
                    f"orphan foreign key {fk.child_table}.{fk.child_column}={v!r} "
                    f"(no parent in {fk.parent_table}.{fk.parent_column})"
                )
    if problems:
        raise ValidationError("; ".join(problems))


def is_valid_database(db: Database) -> bool:
    try:
        validate_database(db)
        return True
    except ValidationError:
        return False


def canonicalize_date(text: str, formats=DEFAULT_DATE_FORMATS) -> str:
    if DATE_PATTERN.match(text):
        return text
    for fmt in formats:
        try:
            return datetime.datetime.strptime(text.strip(), fmt).strftime("%Y-%m-%d")
        except ValueError:
            continue
    raise RepairError(f"cannot parse date value {text!r} with the configured input formats")


def repair_database(db: Database, date_formats=DEFAULT_DATE_FORMATS) -> Database:
    """Return a database satisfying all invariants.

    Date-typed text is rewritten to yyyy-mm-dd, then rows whose foreign-key
    values lack a parent are dropped repeatedly until a fixed point. The
    input database is not modified.
    """
    schema = db.schema
    tables: dict[str, list[tuple]] = {}
    for tdef in schema.tables:
        date_idxs = [i for i, c in enumerate(tdef.columns) if c.type == "date"]
        new_rows = []
        for row in db.rows(tdef.name):
            if date_idxs:
                row = list(row)
                for i in date_idxs:
                    if isinstance(row[i], str):
                        row[i] = canonicalize_date(row[i], date_formats)
                row = tuple(row)
            new_rows.append(tuple(row))
        tables[tdef.name] = new_rows

    changed = True
    while changed:
        changed = False
        for fk in schema.foreign_keys:
            parent_tdef = schema.table(fk.parent_table)
            parent_idx = parent_tdef.column_index(fk.parent_column)
            parent_values = set(
                row[parent_idx] for row in tables.get(parent_tdef.name, []) if row[parent_idx] is not None
            )
            child_tdef = schema.table(fk.child_table)
            child_idx = child_tdef.column_index(fk.child_column)
            kept = [
                row for row in tables.get(child_tdef.name, [])
                if row[child_idx] is None or row[child_idx] in parent_values
            ]
            if len(kept) != len(tables.get(child_tdef.name, [])):
                tables[child_tdef.name] = kept
                changed = True
    repaired = Database(schema, tables)
    validate_database(repaired)
    return repaired


# ---------------------------------------------------------------------------
# Serialization: portable JSON and the engine's native single-file format.

def database_to_json(db: Database) -> dict:
    return {
        "schema_id": db.schema_id,
        "tables": {t.name: [list(row) for row in db.rows(t.name)] for t in db.schema.tables},
    }


def database_from_json(doc: dict, schema: Schema) -> Database:
    if doc.get("schema_id") not in (None, schema.id):
        raise SchemaError(f"database schema_id {doc.get('schema_id')!r} does not match schema {schema.id!r}")
    tables = {}
    for tdef in schema.tables:
        rows = doc.get("tables", {}).get(tdef.name, [])
        tables[tdef.name] = [tuple(row) for row in rows]
    return Database(schema, tables)


def dump_database(db: Database, path: str | Path) -> None:
    Path(path).write_text(json.dumps(database_to_json(db), indent=2, sort_keys=True) + "\n")


def load_database(path: str | Path, schema: Schema) -> Database:
    return database_from_json(json.loads(Path(path).read_text()), schema)


_SQLITE_TYPES = {"integer": "INTEGER", "real": "REAL", "text": "TEXT", "date": "TEXT"}


def create_tables_sql(schema: Schema) -> list[str]:
    """Plain CREATE TABLE statements; constraints are enforced by our validator,
    not the engine, so literal values round-trip unchanged."""
    stmts = []
    for t in schema.tables:
        cols = ", ".join(f'"{c.name}" {_SQLITE_TYPES[c.type]}' for c in t.columns)
        stmts.append(f'CREATE TABLE "{t.name}" ({cols})')
    return stmts


def save_sqlite(db: Database, path: str | Path) -> None:
    path = Path(path)
    if path.exists():
        path.unlink()
    conn = sqlite3.connect(path)
    try:
        for stmt in create_tables_sql(db.schema):
            conn.execute(stmt)
        for t in db.schema.tables:
            rows = db.rows(t.name)
            if rows:
                marks = ", ".join(["?"] * len(t.columns))
                conn.executemany(f'INSERT INTO "{t.name}" VALUES ({marks})', rows)
        conn.commit()
    finally:
        conn.close()


def load_sqlite(path: str | Path, schema: Schema) -> Database:
    conn = sqlite3.connect(Path(path))
    try:
        tables = {}
        for t in schema.tables:
            cur = conn.execute(f'SELECT * FROM "{t.name}"')
            tables[t.name] = [tuple(row) for row in cur.fetchall()]
        return Database(schema, tables)
    finally:
        conn.close()
