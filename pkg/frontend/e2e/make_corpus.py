"""Write the little two-table corpus the UI end-to-end test runs against."""
import json
import sys
from pathlib import Path

DDL = """\
CREATE TABLE CUSTOMER (
  ID INTEGER PRIMARY KEY,
  NAME TEXT NOT NULL,
  CITY TEXT
);
CREATE TABLE ORDERS (
  ID INTEGER PRIMARY KEY,
  CUSTOMER_ID INTEGER,
  AMOUNT INTEGER,
  FOREIGN KEY (CUSTOMER_ID) REFERENCES CUSTOMER(ID)
);
"""

SIDECAR = {
    "domain_id": "shop",
    "descriptions": {
        "_overview": "Customers and the orders they placed.",
        "CUSTOMER": "One row per customer.",
        "ORDERS": "One row per order; CUSTOMER_ID says who placed it.",
    },
}

DB = {
    "schema_id": "shop",
    "tables": {
        "CUSTOMER": [[1, "Noor", "Paris"], [2, "Pat", "Lyon"], [3, "Quinn", "Paris"]],
        "ORDERS": [[1, 1, 100], [2, 1, 250], [3, 2, 100]],
    },
}

UTTERANCES = [
    {"id": "e1", "text": "What is the largest order amount?", "schema_id": "shop",
     "gold_sql": "SELECT MAX(AMOUNT) FROM ORDERS", "difficulty": "easy"},
    {"id": "e2", "text": "Which customers have placed at least one order?", "schema_id": "shop",
     "gold_sql": "SELECT NAME FROM CUSTOMER WHERE ID IN (SELECT CUSTOMER_ID FROM ORDERS)",
     "difficulty": "medium"},
]

CANDIDATES = [
    {"utterance_id": "e1", "sql": "SELECT MAX(AMOUNT) FROM ORDERS", "count": 5},
    {"utterance_id": "e1", "sql": "SELECT MIN(AMOUNT) FROM ORDERS", "count": 4},
    {"utterance_id": "e2",
     "sql": "SELECT NAME FROM CUSTOMER WHERE ID IN (SELECT CUSTOMER_ID FROM ORDERS)", "count": 4},
    {"utterance_id": "e2",
     "sql": "SELECT NAME FROM CUSTOMER WHERE ID NOT IN (SELECT CUSTOMER_ID FROM ORDERS)", "count": 3},
]

CONFIG = "[synth]\nn_fuzz = 12\nmax_rows_per_table = 5\n\n[cluster]\nn_dbs = 40\n"


def main(root: Path) -> None:
    (root / "schemas").mkdir(parents=True, exist_ok=True)
    (root / "databases").mkdir(exist_ok=True)
    (root / "schemas" / "shop.sql").write_text(DDL)
    (root / "schemas" / "shop.json").write_text(json.dumps(SIDECAR, indent=2))
    (root / "databases" / "shop.json").write_text(json.dumps(DB, indent=2))
    (root / "utterances.jsonl").write_text("\n".join(json.dumps(u) for u in UTTERANCES) + "\n")
    (root / "candidates.jsonl").write_text("\n".join(json.dumps(c) for c in CANDIDATES) + "\n")
    (root / "units.json").write_text(json.dumps({"unit1": ["e1", "e2"]}))
    (root / "config.toml").write_text(CONFIG)


if __name__ == "__main__":
    main(Path(sys.argv[1]))
