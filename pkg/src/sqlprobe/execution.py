"""Query execution against in-process SQLite, denotations, and output equality."""

from __future__ import annotations

import math
import re
import sqlite3
import time
from dataclasses import dataclass

from .database import Database, create_tables_sql

DEFAULT_TIMEOUT_S = 2.0

REAL_REL_TOL = 1e-6
REAL_ABS_TOL = 1e-9


@dataclass(frozen=True)
class Denotation:
    """The output of a query: labelled rows, ordered when the query sorts them."""
    columns: tuple[str, ...]
    rows: tuple[tuple, ...]
    ordered: bool = False


class ExecutionError(Exception):
    """Execution failure, classified so callers can filter candidates.

    kind is one of: syntax, missing, type, timeout, other.
    """

    def __init__(self, kind: str, message: str):
        super().__init__(message)
        self.kind = kind


def _classify(message: str) -> str:
    low = message.lower()
    if "syntax error" in low or "incomplete input" in low:
        return "syntax"
    if "no such table" in low or "no such column" in low or "no such function" in low:
        return "missing"
    if "datatype mismatch" in low or "mismatch" in low:
        return "type"
    if "interrupted" in low:
        return "timeout"
    return "other"


def _strip_strings(sql: str) -> str:
    return re.sub(r"'(?:[^']|'')*'|\"(?:[^\"]|\"\")*\"", " ", sql)


def has_top_level_order_by(sql: str) -> bool:
    """True iff an ORDER BY occurs at parenthesis depth zero (outside literals)."""
    text = _strip_strings(sql)
    depth = 0
    for m in re.finditer(r"\(|\)|\border\s+by\b", text, re.IGNORECASE):
        tok = m.group(0)
        if tok == "(":
            depth += 1
        elif tok == ")":
            depth -= 1
        elif depth == 0:
            return True
    return False


_ALLOWED_OPS = {
    sqlite3.SQLITE_SELECT,
    sqlite3.SQLITE_READ,
    sqlite3.SQLITE_FUNCTION,
    getattr(sqlite3, "SQLITE_RECURSIVE", 33),
}


def _read_only_authorizer(op, *args):
    return sqlite3.SQLITE_OK if op in _ALLOWED_OPS else sqlite3.SQLITE_DENY


class Workbench:
    """Materializes one database into a private SQLite connection and runs
    queries against it. Databases are immutable, so a workbench can be
    shared for many reads but must not outlive its usefulness in a loop
    that builds thousands of them; use as a context manager.
    """

    def __init__(self, db: Database, timeout_s: float = DEFAULT_TIMEOUT_S):
        self.db = db
        self.timeout_s = timeout_s
        self._conn = sqlite3.connect(":memory:")
        try:
            for stmt in create_tables_sql(db.schema):
                self._conn.execute(stmt)
            for t in db.schema.tables:
                rows = db.rows(t.name)
                if rows:
                    marks = ", ".join(["?"] * len(t.columns))
                    self._conn.executemany(f'INSERT INTO "{t.name}" VALUES ({marks})', rows)
        except Exception:
            self._conn.close()
            raise

    def __enter__(self) -> "Workbench":
        return self

    def __exit__(self, *exc):
        self.close()

    def close(self):
        self._conn.close()

    def execute(self, sql: str) -> Denotation:
        deadline = time.monotonic() + self.timeout_s

        def guard():
            return 1 if time.monotonic() > deadline else 0

        # Databases are immutable: reject anything that is not a read.
        self._conn.set_authorizer(_read_only_authorizer)
        self._conn.set_progress_handler(guard, 2000)
        try:
            cur = self._conn.execute(sql)
            rows = tuple(tuple(r) for r in cur.fetchall())
            columns = tuple(d[0] for d in cur.description) if cur.description else ()
        except sqlite3.Error as exc:
            kind = _classify(str(exc))
            if kind == "timeout" or time.monotonic() > deadline:
                raise ExecutionError("timeout", f"query exceeded {self.timeout_s}s budget") from exc
            raise ExecutionError(kind, str(exc)) from exc
        finally:
            self._conn.set_progress_handler(None, 0)
            self._conn.set_authorizer(None)
        return Denotation(columns=columns, rows=rows, ordered=has_top_level_order_by(sql))


def execute(sql: str, db: Database, timeout_s: float = DEFAULT_TIMEOUT_S) -> Denotation:
    """One-shot execution; use a Workbench to run many queries on one database."""
    with Workbench(db, timeout_s=timeout_s) as wb:
        return wb.execute(sql)


def _is_number(v) -> bool:
    return isinstance(v, (int, float)) and not isinstance(v, bool)


def cells_equal(a, b) -> bool:
    if a is None or b is None:
        return a is None and b is None
    if _is_number(a) and _is_number(b):
        return math.isclose(a, b, rel_tol=REAL_REL_TOL, abs_tol=REAL_ABS_TOL)
    if type(a) is not type(b) and not (_is_number(a) and _is_number(b)):
        return False
    return a == b


def _rows_equal(a: tuple, b: tuple) -> bool:
    return len(a) == len(b) and all(cells_equal(x, y) for x, y in zip(a, b))


def _sort_key(row: tuple) -> tuple:
    key = []
    for v in row:
        if v is None:
            key.append((0, ""))
        elif _is_number(v):
            key.append((1, float(v)))
        elif isinstance(v, str):
            key.append((2, v))
        else:
            key.append((3, repr(v)))
    return tuple(key)


def denotations_equal(a: Denotation, b: Denotation) -> bool:
    """Row-content equality, ignoring column labels.

    Rows compare as sequences when both denotations are ordered and as
    multisets otherwise; NULL equals NULL and reals compare with relative
    tolerance. Mixed ordered/unordered falls back to multiset comparison.
    """
    if len(a.columns) != len(b.columns):
        return False
    if len(a.rows) != len(b.rows):
        return False
    if a.ordered and b.ordered:
        return all(_rows_equal(x, y) for x, y in zip(a.rows, b.rows))
    sa = sorted(a.rows, key=_sort_key)
    sb = sorted(b.rows, key=_sort_key)
    return all(_rows_equal(x, y) for x, y in zip(sa, sb))
