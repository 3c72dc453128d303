/** DOM rendering for one question page: database tables with hover
 * highlighting, collapsible tables, foreign-key merge/unmerge, the
 * multiple-choice options in server display order, follow-up fields, and
 * the countdown. No framework; every element is built explicitly so the
 * page can also run headlessly under jsdom. */

import type { Cell, NextView, OptionView, QuestionView, TableView } from "./api.js";
import { cellKey, formatCell, isNullCell, mergeTables } from "./model.js";
import { Countdown, formatClock } from "./timer.js";

export interface SubmitPayload {
  questionId: string;
  response: string;
  ambiguous: string;
  confusing: string;
  noneReason: string;
  elapsedMs: number;
}

export interface ViewHandlers {
  onSubmit(payload: SubmitPayload): void;
  onTimeout(questionId: string): void;
}

function el<K extends keyof HTMLElementTagNameMap>(
  doc: Document,
  tag: K,
  className?: string,
  text?: string,
): HTMLElementTagNameMap[K] {
  const node = doc.createElement(tag);
  if (className) node.className = className;
  if (text !== undefined) node.textContent = text;
  return node;
}

function renderCell(doc: Document, cell: Cell, tag: "td" | "th" = "td"): HTMLElement {
  const node = el(doc, tag as "td", isNullCell(cell) ? "cell null-cell" : "cell");
  node.textContent = formatCell(cell);
  node.setAttribute("data-key", cellKey(cell));
  return node;
}

function renderGrid(doc: Document, columns: string[], rows: Cell[][]): HTMLTableElement {
  const table = el(doc, "table", "grid");
  const head = doc.createElement("thead");
  const headRow = doc.createElement("tr");
  for (const col of columns) {
    headRow.appendChild(el(doc, "th", "col-name", col));
  }
  head.appendChild(headRow);
  table.appendChild(head);
  const body = doc.createElement("tbody");
  for (const row of rows) {
    const tr = doc.createElement("tr");
    for (const cell of row) {
      tr.appendChild(renderCell(doc, cell));
    }
    body.appendChild(tr);
  }
  table.appendChild(body);
  return table;
}

function renderOption(doc: Document, option: OptionView): HTMLElement {
  const wrap = el(doc, "div", "option-denotation");
  if (option.rows.length === 1 && option.rows[0].length === 1) {
    const scalar = renderCell(doc, option.rows[0][0], "td");
    scalar.classList.add("scalar");
    wrap.appendChild(scalar);
  } else if (option.rows.length === 0) {
    wrap.appendChild(el(doc, "div", "empty-result", "(no rows)"));
  } else {
    wrap.appendChild(renderGrid(doc, option.columns, option.rows));
  }
  if (option.ordered) {
    wrap.appendChild(el(doc, "div", "ordered-note", "rows are in order"));
  }
  return wrap;
}

export class QuestionPage {
  readonly root: HTMLElement;
  private doc: Document;
  private timer = new Countdown();
  private view: NextView | null = null;
  private handlers: ViewHandlers | null = null;
  private merged = false;
  private startedAt = 0;

  constructor(root: HTMLElement) {
    this.root = root;
    this.doc = root.ownerDocument;
    root.addEventListener("mouseover", (ev) => this.setHighlight(ev.target as HTMLElement, true));
    root.addEventListener("mouseout", (ev) => this.setHighlight(ev.target as HTMLElement, false));
  }

  private setHighlight(target: HTMLElement | null, on: boolean): void {
    if (!target || !target.getAttribute) return;
    const key = target.getAttribute("data-key");
    if (!key) return;
    this.root.querySelectorAll("[data-key]").forEach((node) => {
      if (node.getAttribute("data-key") === key) node.classList.toggle("highlight", on);
    });
  }

  renderDone(): void {
    this.timer.cancel();
    this.root.textContent = "";
    const box = el(this.doc, "div", "done-box", "All questions answered. Thank you!");
    this.root.appendChild(box);
  }

  render(view: NextView, handlers: ViewHandlers): void {
    this.view = view;
    this.handlers = handlers;
    this.merged = false;
    this.startedAt = Date.now();
    this.timer.cancel();
    this.root.textContent = "";
    if (view.done || !view.question) {
      this.renderDone();
      return;
    }
    const q = view.question;

    const header = el(this.doc, "header", "question-header");
    header.appendChild(el(this.doc, "h2", "utterance", view.utterance?.text ?? ""));
    const meta = el(this.doc, "div", "meta");
    meta.appendChild(el(this.doc, "span", "round-indicator",
      `Round ${view.round} of ${view.max_rounds}`));
    if (view.unit_progress) {
      meta.appendChild(el(this.doc, "span", "progress",
        `Question ${view.unit_progress.position} of ${view.unit_progress.total}`));
    }
    const clock = el(this.doc, "span", "countdown");
    meta.appendChild(clock);
    header.appendChild(meta);
    if (q.schema.overview) {
      header.appendChild(el(this.doc, "p", "schema-overview", q.schema.overview));
    }
    this.root.appendChild(header);

    const mergeButton = el(this.doc, "button", "merge-toggle", "Merge foreign keys");
    mergeButton.addEventListener("click", () => {
      this.merged = !this.merged;
      mergeButton.textContent = this.merged ? "Unmerge" : "Merge foreign keys";
      this.renderTableSection();
    });
    this.root.appendChild(mergeButton);

    this.root.appendChild(el(this.doc, "section", "tables"));
    this.renderTableSection();

    this.root.appendChild(this.renderOptionsSection(q));
    this.root.appendChild(this.renderFollowups());
    this.root.appendChild(this.renderSubmit(q));

    const seconds = view.timer_seconds ?? 240;
    this.timer.start(
      seconds,
      (remaining) => { clock.textContent = formatClock(remaining); },
      () => this.handlers?.onTimeout(q.id),
    );
  }

  private currentTables(): TableView[] {
    const q = this.view!.question!;
    return this.merged ? mergeTables(q.tables, q.schema.foreign_keys) : q.tables;
  }

  private renderTableSection(): void {
    const section = this.root.querySelector("section.tables")!;
    section.textContent = "";
    for (const table of this.currentTables()) {
      const block = this.doc.createElement("details");
      block.className = "table-block";
      block.open = true;
      const summary = el(this.doc, "summary", "table-name", table.name);
      if (table.description) {
        summary.appendChild(el(this.doc, "span", "table-description", ` — ${table.description}`));
      }
      block.appendChild(summary);
      block.appendChild(renderGrid(this.doc, table.columns, table.rows));
      section.appendChild(block);
    }
  }

  private renderOptionsSection(q: QuestionView): HTMLElement {
    const section = el(this.doc, "section", "options");
    section.appendChild(el(this.doc, "h3", undefined, "Which is the correct output?"));
    const list = el(this.doc, "div", "option-list");
    const letters = "ABCDEF";
    q.options.forEach((option, i) => {
      const label = el(this.doc, "label", "option");
      const input = this.doc.createElement("input");
      input.type = "radio";
      input.name = "option";
      input.value = option.id;
      input.addEventListener("change", () => this.refreshGating());
      label.appendChild(input);
      label.appendChild(el(this.doc, "span", "option-letter", letters[i] ?? String(i)));
      label.appendChild(renderOption(this.doc, option));
      list.appendChild(label);
    });
    const noneLabel = el(this.doc, "label", "option none-option");
    const noneInput = this.doc.createElement("input");
    noneInput.type = "radio";
    noneInput.name = "option";
    noneInput.value = q.none_option_id;
    noneInput.addEventListener("change", () => this.refreshGating());
    noneLabel.appendChild(noneInput);
    noneLabel.appendChild(el(this.doc, "span", "option-letter", "∅"));
    noneLabel.appendChild(el(this.doc, "span", undefined, "None of them is correct"));
    list.appendChild(noneLabel);
    section.appendChild(list);
    return section;
  }

  private renderFollowups(): HTMLElement {
    const section = el(this.doc, "section", "followups");
    const none = el(this.doc, "div", "none-reason hidden");
    none.appendChild(el(this.doc, "label", undefined, "What is the answer you have in mind, and why?"));
    const noneArea = this.doc.createElement("textarea");
    noneArea.className = "none-reason-input";
    noneArea.addEventListener("input", () => this.refreshGating());
    none.appendChild(noneArea);
    section.appendChild(none);

    const amb = el(this.doc, "div", "followup");
    amb.appendChild(el(this.doc, "label", undefined, "If the question is ambiguous, tell us why (optional)"));
    const ambArea = this.doc.createElement("textarea");
    ambArea.className = "ambiguous-input";
    amb.appendChild(ambArea);
    section.appendChild(amb);

    const conf = el(this.doc, "div", "followup");
    conf.appendChild(el(this.doc, "label", undefined, "If the question looks confusing, tell us why (optional)"));
    const confArea = this.doc.createElement("textarea");
    confArea.className = "confusing-input";
    conf.appendChild(confArea);
    section.appendChild(conf);
    return section;
  }

  private renderSubmit(q: QuestionView): HTMLElement {
    const section = el(this.doc, "section", "submit-row");
    const button = el(this.doc, "button", "submit", "Submit");
    button.disabled = true;
    button.addEventListener("click", () => {
      const payload = this.payload(q);
      if (payload) this.handlers?.onSubmit(payload);
    });
    section.appendChild(button);
    section.appendChild(el(this.doc, "span", "submit-hint hidden",
      "Selecting “none” requires describing the answer you expected."));
    return section;
  }

  selectedResponse(): string | null {
    const checked = this.root.querySelector<HTMLInputElement>("input[name=option]:checked");
    return checked ? checked.value : null;
  }

  select(responseId: string): void {
    const input = this.root.querySelector<HTMLInputElement>(`input[name=option][value="${responseId}"]`);
    if (!input) throw new Error(`no option ${responseId}`);
    input.checked = true;
    input.dispatchEvent(new this.doc.defaultView!.Event("change"));
  }

  noneReason(): string {
    return this.root.querySelector<HTMLTextAreaElement>(".none-reason-input")?.value ?? "";
  }

  private noneSelected(): boolean {
    const q = this.view?.question;
    return !!q && this.selectedResponse() === q.none_option_id;
  }

  /** Submission is blocked until something is selected, and a "none" choice
   * additionally requires the follow-up text. */
  submitBlocked(): boolean {
    const selected = this.selectedResponse();
    if (selected === null) return true;
    if (this.noneSelected() && this.noneReason().trim() === "") return true;
    return false;
  }

  private refreshGating(): void {
    const noneBox = this.root.querySelector(".none-reason");
    const hint = this.root.querySelector(".submit-hint");
    const button = this.root.querySelector<HTMLButtonElement>("button.submit");
    if (noneBox) noneBox.classList.toggle("hidden", !this.noneSelected());
    if (button) button.disabled = this.submitBlocked();
    if (hint) hint.classList.toggle("hidden", !(this.noneSelected() && this.noneReason().trim() === ""));
  }

  private payload(q: QuestionView): SubmitPayload | null {
    if (this.submitBlocked()) return null;
    return {
      questionId: q.id,
      response: this.selectedResponse()!,
      ambiguous: this.root.querySelector<HTMLTextAreaElement>(".ambiguous-input")?.value ?? "",
      confusing: this.root.querySelector<HTMLTextAreaElement>(".confusing-input")?.value ?? "",
      noneReason: this.noneReason(),
      elapsedMs: Date.now() - this.startedAt,
    };
  }

  stopTimer(): void {
    this.timer.cancel();
  }
}
