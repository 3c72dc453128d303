"""Relational schema model: tables, columns, keys, and DDL loading.

A schema is immutable once constructed and is validated eagerly so that
everything downstream (generation, repair, execution) can assume it is
well formed: unique names, resolvable foreign keys, and an acyclic
table-reference graph that admits a parent-first generation order.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass, field
from pathlib import Path

COLUMN_TYPES = ("integer", "real", "text", "date")

_TYPE_ALIASES = {
    "int": "integer",
    "integer": "integer",
    "bigint": "integer",
    "smallint": "integer",
    "real": "real",
    "float": "real",
    "double": "real",
    "numeric": "real",
    "decimal": "real",
    "text": "text",
    "varchar": "text",
    "char": "text",
    "string": "text",
    "date": "date",
}


class SchemaError(ValueError):
    """Raised when a schema definition violates a structural invariant."""


@dataclass(frozen=True)
class ColumnDef:
    name: str
    type: str
    not_null: bool = False
    primary_key: bool = False
    unique: bool = False

    def __post_init__(self):
        if self.type not in COLUMN_TYPES:
            raise SchemaError(f"unknown column type {self.type!r} for column {self.name!r}")

    @property
    def is_unique(self) -> bool:
        return self.primary_key or self.unique


@dataclass(frozen=True)
class TableDef:
    name: str
    columns: tuple[ColumnDef, ...]

    def __post_init__(self):
        seen = set()
        for col in self.columns:
            key = col.name.lower()
            if key in seen:
                raise SchemaError(f"duplicate column {col.name!r} in table {self.name!r}")
            seen.add(key)
        if not self.columns:
            raise SchemaError(f"table {self.name!r} has no columns")

    @property
    def column_names(self) -> tuple[str, ...]:
        return tuple(c.name for c in self.columns)

    def column(self, name: str) -> ColumnDef:
        low = name.lower()
        for col in self.columns:
            if col.name.lower() == low:
                return col
        raise SchemaError(f"no column {name!r} in table {self.name!r}")

    def column_index(self, name: str) -> int:
        low = name.lower()
        for i, col in enumerate(self.columns):
            if col.name.lower() == low:
                return i
        raise SchemaError(f"no column {name!r} in table {self.name!r}")

    def has_column(self, name: str) -> bool:
        low = name.lower()
        return any(c.name.lower() == low for c in self.columns)


@dataclass(frozen=True)
class ForeignKey:
    child_table: str
    child_column: str
    parent_table: str
    parent_column: str


@dataclass(frozen=True)
class Schema:
    id: str
    tables: tuple[TableDef, ...]
    foreign_keys: tuple[ForeignKey, ...] = ()
    domain_id: str = "default"
    descriptions: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        names = set()
        for t in self.tables:
            key = t.name.lower()
            if key in names:
                raise SchemaError(f"duplicate table {t.name!r} in schema {self.id!r}")
            names.add(key)
        for fk in self.foreign_keys:
            child = self.table(fk.child_table)
            parent = self.table(fk.parent_table)
            child.column(fk.child_column)
            pcol = parent.column(fk.parent_column)
            if not pcol.is_unique:
                raise SchemaError(
                    f"foreign key {fk.child_table}.{fk.child_column} references "
                    f"{fk.parent_table}.{fk.parent_column}, which is not unique/primary-key"
                )
        self.topological_order()  # raises on cycles

    def table(self, name: str) -> TableDef:
        low = name.lower()
        for t in self.tables:
            if t.name.lower() == low:
                return t
        raise SchemaError(f"no table {name!r} in schema {self.id!r}")

    def has_table(self, name: str) -> bool:
        low = name.lower()
        return any(t.name.lower() == low for t in self.tables)

    def foreign_keys_of(self, child_table: str) -> list[ForeignKey]:
        low = child_table.lower()
        return [fk for fk in self.foreign_keys if fk.child_table.lower() == low]

    def child_fk_columns(self, table: str) -> dict[str, ForeignKey]:
        """Map of lower-cased column name -> foreign key for a child table."""
        return {fk.child_column.lower(): fk for fk in self.foreign_keys_of(table)}

    def topological_order(self) -> list[TableDef]:
        """Tables ordered parents-first; raises SchemaError on reference cycles."""
        deps: dict[str, set[str]] = {t.name.lower(): set() for t in self.tables}
        for fk in self.foreign_keys:
            child, parent = fk.child_table.lower(), fk.parent_table.lower()
            if child != parent:
                deps[child].add(parent)
            else:
                raise SchemaError(f"self-referencing foreign key on table {fk.child_table!r}")
        order: list[str] = []
        ready = sorted(name for name, d in deps.items() if not d)
        pending = {name: set(d) for name, d in deps.items() if d}
        while ready:
            name = ready.pop(0)
            order.append(name)
            newly = []
            for other, d in pending.items():
                d.discard(name)
                if not d:
                    newly.append(other)
            for other in sorted(newly):
                del pending[other]
                ready.append(other)
        if pending:
            raise SchemaError(f"foreign-key cycle among tables: {sorted(pending)}")
        by_name = {t.name.lower(): t for t in self.tables}
        return [by_name[n] for n in order]


# ---------------------------------------------------------------------------
# DDL + sidecar loading

_CREATE_RE = re.compile(r"create\s+table\s+(?:if\s+not\s+exists\s+)?[\"`]?(\w+)[\"`]?\s*\((.*)\)\s*$",
                        re.IGNORECASE | re.DOTALL)
_FK_RE = re.compile(
    r"foreign\s+key\s*\(\s*[\"`]?(\w+)[\"`]?\s*\)\s*references\s+[\"`]?(\w+)[\"`]?\s*\(\s*[\"`]?(\w+)[\"`]?\s*\)",
    re.IGNORECASE,
)
_PK_RE = re.compile(r"primary\s+key\s*\(\s*[\"`]?(\w+)[\"`]?\s*\)", re.IGNORECASE)
_INLINE_REF_RE = re.compile(r"references\s+[\"`]?(\w+)[\"`]?\s*\(\s*[\"`]?(\w+)[\"`]?\s*\)", re.IGNORECASE)


def _strip_comments(ddl: str) -> str:
    return "\n".join(re.sub(r"--.*$", "", line) for line in ddl.splitlines())


def _split_top_level(body: str) -> list[str]:
    parts, depth, cur = [], 0, []
    for ch in body:
        if ch == "(":
            depth += 1
        elif ch == ")":
            depth -= 1
        if ch == "," and depth == 0:
            parts.append("".join(cur).strip())
            cur = []
        else:
            cur.append(ch)
    tail = "".join(cur).strip()
    if tail:
        parts.append(tail)
    return parts


def _parse_column(item: str):
    tokens = item.split()
    name = tokens[0].strip('"`')
    raw_type = re.sub(r"\(.*\)", "", tokens[1]).lower() if len(tokens) > 1 else "text"
    ctype = _TYPE_ALIASES.get(raw_type)
    if ctype is None:
        raise SchemaError(f"unsupported column type {tokens[1]!r} for column {name!r}")
    rest = " ".join(tokens[2:]).lower()
    return ColumnDef(
        name=name,
        type=ctype,
        not_null="not null" in rest,
        primary_key="primary key" in rest,
        unique=bool(re.search(r"\bunique\b", rest)),
    )


def schema_from_ddl(ddl: str, sidecar: dict | None = None, schema_id: str | None = None) -> Schema:
    """Build a Schema from a CREATE TABLE script plus sidecar metadata.

    The sidecar carries what DDL cannot: domain_id, extra foreign keys,
    and optional human-readable table descriptions.
    """
    sidecar = sidecar or {}
    tables: list[TableDef] = []
    fks: list[ForeignKey] = []
    for stmt in _strip_comments(ddl).split(";"):
        stmt = stmt.strip()
        if not stmt:
            continue
        m = _CREATE_RE.match(stmt)
        if not m:
            raise SchemaError(f"cannot parse DDL statement: {stmt[:80]!r}")
        tname, body = m.group(1), m.group(2)
        cols: list[ColumnDef] = []
        pk_extra: str | None = None
        for item in _split_top_level(body):
            low = item.lower()
            if low.startswith("foreign key"):
                fkm = _FK_RE.match(item)
                if not fkm:
                    raise SchemaError(f"cannot parse foreign key clause: {item!r}")
                fks.append(ForeignKey(tname, fkm.group(1), fkm.group(2), fkm.group(3)))
            elif low.startswith("primary key"):
                pkm = _PK_RE.match(item)
                if not pkm:
                    raise SchemaError(f"cannot parse primary key clause: {item!r}")
                pk_extra = pkm.group(1)
            else:
                col = _parse_column(item)
                refm = _INLINE_REF_RE.search(item)
                if refm:
                    fks.append(ForeignKey(tname, col.name, refm.group(1), refm.group(2)))
                cols.append(col)
        if pk_extra is not None:
            cols = [
                ColumnDef(c.name, c.type, c.not_null, True, c.unique)
                if c.name.lower() == pk_extra.lower() else c
                for c in cols
            ]
        tables.append(TableDef(tname, tuple(cols)))

    for extra in sidecar.get("foreign_keys", []):
        fk = ForeignKey(extra["table"], extra["column"], extra["ref_table"], extra["ref_column"])
        if fk not in fks:
            fks.append(fk)
    return Schema(
        id=schema_id or sidecar.get("schema_id", "schema"),
        tables=tuple(tables),
        foreign_keys=tuple(fks),
        domain_id=sidecar.get("domain_id", "default"),
        descriptions=sidecar.get("descriptions", {}),
    )


def load_schema(ddl_path: str | Path, sidecar_path: str | Path | None = None) -> Schema:
    ddl_path = Path(ddl_path)
    sidecar = {}
    if sidecar_path is None:
        candidate = ddl_path.with_suffix(".json")
        if candidate.exists():
            sidecar_path = candidate
    if sidecar_path is not None:
        sidecar = json.loads(Path(sidecar_path).read_text())
    return schema_from_ddl(ddl_path.read_text(), sidecar, schema_id=ddl_path.stem)


def schema_to_json(schema: Schema) -> dict:
    return {
        "id": schema.id,
        "domain_id": schema.domain_id,
        "tables": [
            {
                "name": t.name,
                "columns": [
                    {
                        "name": c.name,
                        "type": c.type,
                        "not_null": c.not_null,
                        "primary_key": c.primary_key,
                        "unique": c.unique,
                    }
                    for c in t.columns
                ],
            }
            for t in schema.tables
        ],
        "foreign_keys": [
            {
                "table": fk.child_table,
                "column": fk.child_column,
                "ref_table": fk.parent_table,
                "ref_column": fk.parent_column,
            }
            for fk in schema.foreign_keys
        ],
        "descriptions": dict(schema.descriptions),
    }


def schema_from_json(doc: dict) -> Schema:
    return Schema(
        id=doc["id"],
        tables=tuple(
            TableDef(
                t["name"],
                tuple(
                    ColumnDef(
                        c["name"],
                        c["type"],
                        not_null=c.get("not_null", False),
                        primary_key=c.get("primary_key", False),
                        unique=c.get("unique", False),
                    )
                    for c in t["columns"]
                ),
            )
            for t in doc["tables"]
        ),
        foreign_keys=tuple(
            ForeignKey(fk["table"], fk["column"], fk["ref_table"], fk["ref_column"])
            for fk in doc.get("foreign_keys", [])
        ),
        domain_id=doc.get("domain_id", "default"),
        descriptions=doc.get("descriptions", {}),
    )


def linearize_schema(schema: Schema) -> str:
    """One-line-per-table rendering used in generation prompts."""
    lines = [f"# Database schema ({schema.id}):"]
    for t in schema.tables:
        cols = ", ".join(c.name for c in t.columns)
        lines.append(f"# {t.name}({cols})")
    for fk in schema.foreign_keys:
        lines.append(f"# {fk.child_table}.{fk.child_column} references {fk.parent_table}.{fk.parent_column}")
    return "\n".join(lines)
