import pytest

from sqlprobe.schema import (
    ColumnDef,
    ForeignKey,
    Schema,
    SchemaError,
    TableDef,
    linearize_schema,
    schema_from_ddl,
    schema_from_json,
    schema_to_json,
)

DDL = """
CREATE TABLE BATTLE (
  ID INTEGER PRIMARY KEY,
  NAME TEXT NOT NULL,
  RESULT TEXT
);
-- ships reference the battle they were lost in
CREATE TABLE SHIP (
  ID INTEGER PRIMARY KEY,
  NAME TEXT NOT NULL,
  LOST_IN_BATTLE INTEGER,
  FOREIGN KEY (LOST_IN_BATTLE) REFERENCES BATTLE(ID)
);
"""


def test_ddl_parse_tables_and_fk():
    schema = schema_from_ddl(DDL, {"domain_id": "history"}, schema_id="battles")
    assert [t.name for t in schema.tables] == ["BATTLE", "SHIP"]
    assert schema.table("ship").column("lost_in_battle").type == "integer"
    assert schema.table("BATTLE").column("ID").primary_key
    assert schema.foreign_keys == (ForeignKey("SHIP", "LOST_IN_BATTLE", "BATTLE", "ID"),)
    assert schema.domain_id == "history"


def test_inline_references_clause():
    ddl = """
    CREATE TABLE A (ID INTEGER PRIMARY KEY);
    CREATE TABLE B (ID INTEGER PRIMARY KEY, A_ID INTEGER REFERENCES A(ID));
    """
    schema = schema_from_ddl(ddl, schema_id="ab")
    assert schema.foreign_keys == (ForeignKey("B", "A_ID", "A", "ID"),)


def test_table_level_primary_key():
    ddl = "CREATE TABLE T (X INTEGER, Y TEXT, PRIMARY KEY (X));"
    schema = schema_from_ddl(ddl, schema_id="t")
    assert schema.table("T").column("X").primary_key


def test_sidecar_extra_foreign_keys():
    ddl = "CREATE TABLE P (ID INTEGER PRIMARY KEY); CREATE TABLE C (ID INTEGER PRIMARY KEY, P_ID INTEGER);"
    sidecar = {"foreign_keys": [{"table": "C", "column": "P_ID", "ref_table": "P", "ref_column": "ID"}]}
    schema = schema_from_ddl(ddl, sidecar, schema_id="pc")
    assert len(schema.foreign_keys) == 1


def test_fk_must_reference_unique_column():
    with pytest.raises(SchemaError, match="not unique"):
        Schema(
            id="bad",
            tables=(
                TableDef("P", (ColumnDef("V", "integer"),)),
                TableDef("C", (ColumnDef("P_V", "integer"),)),
            ),
            foreign_keys=(ForeignKey("C", "P_V", "P", "V"),),
        )


def test_duplicate_names_rejected_case_insensitively():
    with pytest.raises(SchemaError, match="duplicate column"):
        TableDef("T", (ColumnDef("a", "integer"), ColumnDef("A", "text")))
    with pytest.raises(SchemaError, match="duplicate table"):
        Schema(id="s", tables=(
            TableDef("T", (ColumnDef("a", "integer"),)),
            TableDef("t", (ColumnDef("b", "integer"),)),
        ))


def test_fk_cycle_rejected():
    with pytest.raises(SchemaError, match="cycle"):
        Schema(
            id="cyc",
            tables=(
                TableDef("A", (ColumnDef("ID", "integer", primary_key=True),
                               ColumnDef("B_ID", "integer"))),
                TableDef("B", (ColumnDef("ID", "integer", primary_key=True),
                               ColumnDef("A_ID", "integer"))),
            ),
            foreign_keys=(
                ForeignKey("A", "B_ID", "B", "ID"),
                ForeignKey("B", "A_ID", "A", "ID"),
            ),
        )


def test_topological_order_parents_first():
    schema = schema_from_ddl(DDL, schema_id="battles")
    names = [t.name for t in schema.topological_order()]
    assert names.index("BATTLE") < names.index("SHIP")


def test_json_round_trip():
    schema = schema_from_ddl(DDL, {"domain_id": "history", "descriptions": {"BATTLE": "battles"}},
                             schema_id="battles")
    again = schema_from_json(schema_to_json(schema))
    assert again == schema


def test_linearize_mentions_every_table():
    schema = schema_from_ddl(DDL, schema_id="battles")
    text = linearize_schema(schema)
    assert "BATTLE(" in text and "SHIP(" in text and "references" in text
