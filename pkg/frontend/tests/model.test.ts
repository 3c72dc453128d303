import { describe, expect, it } from "vitest";

import type { ForeignKeyView, TableView } from "../src/api.js";
import { cellKey, formatCell, mergeTables } from "../src/model.js";

const BATTLE: TableView = {
  name: "BATTLE",
  description: "battles",
  columns: ["ID", "NAME", "RESULT"],
  rows: [
    [1, "River Clash", "victory"],
    [2, "Harbor Siege", "defeat"],
  ],
};

const SHIP: TableView = {
  name: "SHIP",
  description: "ships",
  columns: ["ID", "NAME", "LOST_IN_BATTLE"],
  rows: [
    [1, "Lettice", 2],
    [2, "Coral", 2],
    [3, "Drift", null],
  ],
};

const FKS: ForeignKeyView[] = [
  { table: "SHIP", column: "LOST_IN_BATTLE", ref_table: "BATTLE", ref_column: "ID" },
];

describe("formatCell", () => {
  it("renders NULL distinctly from empty text and the word NULL", () => {
    expect(formatCell(null)).toBe("∅ NULL");
    expect(formatCell("")).toBe("");
    expect(formatCell("NULL")).toBe("NULL");
    expect(formatCell(3.5)).toBe("3.5");
  });
});

describe("cellKey", () => {
  it("separates types and treats numbers numerically", () => {
    expect(cellKey(1)).toBe(cellKey(1.0));
    expect(cellKey(1)).not.toBe(cellKey("1"));
    expect(cellKey(null)).not.toBe(cellKey("null"));
  });
});

describe("mergeTables", () => {
  it("widens the child with parent columns and keeps the parent as is", () => {
    const merged = mergeTables([BATTLE, SHIP], FKS);
    expect(merged[0]).toEqual(BATTLE);
    const ship = merged[1];
    expect(ship.columns).toEqual(
      ["ID", "NAME", "LOST_IN_BATTLE", "BATTLE.ID", "BATTLE.NAME", "BATTLE.RESULT"]);
    expect(ship.rows[0]).toEqual([1, "Lettice", 2, 2, "Harbor Siege", "defeat"]);
  });

  it("leaves parent rows without children out of the merged child view", () => {
    const merged = mergeTables([BATTLE, SHIP], FKS);
    const shipCells = merged[1].rows.flat();
    expect(shipCells).not.toContain("River Clash"); // battle 1 lost no ship
  });

  it("fills parent columns with NULL when the key is NULL", () => {
    const merged = mergeTables([BATTLE, SHIP], FKS);
    expect(merged[1].rows[2]).toEqual([3, "Drift", null, null, null, null]);
  });

  it("handles a child with several foreign keys", () => {
    const singer: TableView = {
      name: "SINGER", description: "", columns: ["ID", "WHO"], rows: [[1, "Joe"]],
    };
    const concert: TableView = {
      name: "CONCERT", description: "", columns: ["ID", "TITLE"], rows: [[7, "Gala"]],
    };
    const perf: TableView = {
      name: "PERF", description: "", columns: ["ID", "SINGER_ID", "CONCERT_ID"],
      rows: [[1, 1, 7]],
    };
    const merged = mergeTables([singer, concert, perf], [
      { table: "PERF", column: "SINGER_ID", ref_table: "SINGER", ref_column: "ID" },
      { table: "PERF", column: "CONCERT_ID", ref_table: "CONCERT", ref_column: "ID" },
    ]);
    expect(merged[2].columns).toEqual(
      ["ID", "SINGER_ID", "CONCERT_ID", "SINGER.ID", "SINGER.WHO", "CONCERT.ID", "CONCERT.TITLE"]);
    expect(merged[2].rows[0]).toEqual([1, 1, 7, 1, "Joe", 7, "Gala"]);
  });

  it("is the identity for tables without foreign keys", () => {
    expect(mergeTables([BATTLE], [])).toEqual([BATTLE]);
  });
});
