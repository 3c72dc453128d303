/** Pure view-model helpers: cell rendering, equality keys for highlighting,
 * and the foreign-key merge transform. */

import type { Cell, ForeignKeyView, TableView } from "./api.js";

/** NULL cells render distinctly from empty strings or the text "NULL". */
export function formatCell(cell: Cell): string {
  if (cell === null) return "∅ NULL";
  return String(cell);
}

export function isNullCell(cell: Cell): boolean {
  return cell === null;
}

/** Canonical key for value-equality highlighting; numbers compare
 * numerically (1 and 1.0 share a key) and never match equal-looking text. */
export function cellKey(cell: Cell): string {
  if (cell === null) return "null:";
  if (typeof cell === "number") return `num:${cell}`;
  return `str:${cell}`;
}

function findTable(tables: TableView[], name: string): TableView | undefined {
  const low = name.toLowerCase();
  return tables.find((t) => t.name.toLowerCase() === low);
}

function columnIndex(table: TableView, column: string): number {
  const low = column.toLowerCase();
  return table.columns.findIndex((c) => c.toLowerCase() === low);
}

/**
 * Widen every child table with its parents' columns along the foreign keys.
 *
 * Each child row keeps its own cells and gains `Parent.column` cells from
 * the matching parent row (empty when the key is NULL). Parent tables stay
 * as they are, so parent rows without children do not appear in the merged
 * child view.
 */
export function mergeTables(tables: TableView[], fks: ForeignKeyView[]): TableView[] {
  return tables.map((table) => {
    const myFks = fks.filter((fk) => fk.table.toLowerCase() === table.name.toLowerCase());
    if (myFks.length === 0) return table;

    const columns = [...table.columns];
    const extra: { fk: ForeignKeyView; parent: TableView; keyIdx: number; childIdx: number }[] = [];
    for (const fk of myFks) {
      const parent = findTable(tables, fk.ref_table);
      if (!parent) continue;
      const keyIdx = columnIndex(parent, fk.ref_column);
      const childIdx = columnIndex(table, fk.column);
      if (keyIdx < 0 || childIdx < 0) continue;
      extra.push({ fk, parent, keyIdx, childIdx });
      for (const col of parent.columns) {
        columns.push(`${parent.name}.${col}`);
      }
    }
    if (extra.length === 0) return table;

    const rows = table.rows.map((row) => {
      const merged: Cell[] = [...row];
      for (const { parent, keyIdx, childIdx } of extra) {
        const key = row[childIdx];
        const match = key === null
          ? undefined
          : parent.rows.find((p) => cellKey(p[keyIdx]) === cellKey(key));
        for (let i = 0; i < parent.columns.length; i++) {
          merged.push(match ? match[i] : null);
        }
      }
      return merged;
    });
    return { ...table, columns, rows };
  });
}
