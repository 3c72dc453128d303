/** Session bootstrap and the client-side interaction loop.
 *
 * The page is stateless beyond the session token, which lives in the URL
 * hash: a reload calls GET /next and resumes at the server's current
 * question with identical rendering. Network failures show a retry banner
 * and leave the rendered question (and any selections) untouched.
 */

import { ApiClient, ApiError, NextView } from "./api.js";
import { QuestionPage, SubmitPayload } from "./view.js";

export class App {
  private api: ApiClient;
  private page: QuestionPage;
  private sessionId: string | null = null;
  private banner: HTMLElement;

  constructor(private root: HTMLElement, base = "") {
    this.api = new ApiClient(base);
    const doc = root.ownerDocument;
    this.banner = doc.createElement("div");
    this.banner.className = "error-banner hidden";
    root.appendChild(this.banner);
    const pageRoot = doc.createElement("div");
    pageRoot.className = "page-root";
    root.appendChild(pageRoot);
    this.page = new QuestionPage(pageRoot);
  }

  async start(): Promise<void> {
    const hash = this.root.ownerDocument.defaultView?.location.hash ?? "";
    const m = hash.match(/#s=(.+)/);
    if (m) {
      this.sessionId = m[1];
      await this.refresh();
    } else {
      this.renderSessionForm();
    }
  }

  private renderSessionForm(): void {
    const doc = this.root.ownerDocument;
    const form = doc.createElement("form");
    form.className = "session-form";
    form.innerHTML = `
      <label>Annotator id <input name="annotator" required></label>
      <label>Unit <input name="unit" required></label>
      <button type="submit">Start session</button>
    `;
    form.addEventListener("submit", async (ev) => {
      ev.preventDefault();
      const annotator = (form.querySelector("[name=annotator]") as HTMLInputElement).value;
      const unit = (form.querySelector("[name=unit]") as HTMLInputElement).value;
      try {
        const created = await this.api.createSession(annotator, unit);
        this.sessionId = created.session_id;
        const win = doc.defaultView;
        if (win) win.location.hash = `#s=${created.session_id}`;
        form.remove();
        await this.refresh();
      } catch (err) {
        this.showError(err, () => form.requestSubmit());
      }
    });
    this.root.appendChild(form);
  }

  private showError(err: unknown, retry: () => void): void {
    const message = err instanceof ApiError && err.status === 0
      ? "Network problem — your work is untouched."
      : `Request failed: ${String(err)}`;
    this.banner.textContent = "";
    this.banner.classList.remove("hidden");
    this.banner.appendChild(this.root.ownerDocument.createTextNode(message + " "));
    const button = this.root.ownerDocument.createElement("button");
    button.textContent = "Retry";
    button.addEventListener("click", () => {
      this.banner.classList.add("hidden");
      retry();
    });
    this.banner.appendChild(button);
  }

  private handlers() {
    return {
      onSubmit: (payload: SubmitPayload) => void this.submit(payload),
      onTimeout: (questionId: string) => void this.timeout(questionId),
    };
  }

  async refresh(): Promise<void> {
    try {
      const view = await this.api.next(this.sessionId!);
      this.show(view);
    } catch (err) {
      this.showError(err, () => void this.refresh());
    }
  }

  private show(view: NextView): void {
    this.banner.classList.add("hidden");
    this.page.render(view, this.handlers());
  }

  private async submit(payload: SubmitPayload): Promise<void> {
    try {
      const view = await this.api.submit(this.sessionId!, {
        question_id: payload.questionId,
        response: payload.response,
        free_text_ambiguous: payload.ambiguous || null,
        free_text_confusing: payload.confusing || null,
        free_text_none_reason: payload.noneReason || null,
        elapsed_ms: payload.elapsedMs,
      });
      this.page.stopTimer();
      this.show(view);
    } catch (err) {
      if (err instanceof ApiError && err.status === 409) {
        // stale question: reload the server's current one
        await this.refresh();
        return;
      }
      this.showError(err, () => void this.submit(payload));
    }
  }

  private async timeout(questionId: string): Promise<void> {
    try {
      const view = await this.api.submit(this.sessionId!, {
        question_id: questionId,
        response: "timeout",
      });
      this.show(view);
    } catch (err) {
      if (err instanceof ApiError && err.status === 409) {
        await this.refresh();
        return;
      }
      this.showError(err, () => void this.timeout(questionId));
    }
  }
}

export function mount(rootId = "app", base = ""): App {
  const root = document.getElementById(rootId);
  if (!root) throw new Error(`no element #${rootId}`);
  const app = new App(root, base);
  void app.start();
  return app;
}
