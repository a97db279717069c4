/**
 * DOM layer: side-by-side document view, rubric questionnaire, final
 * judgments, progress, and the submit flow.
 *
 * Documents render in equal-width panes labeled strictly "Left" and "Right";
 * no pipeline identity ever reaches this layer (the service payload is blind
 * by construction, and renders are scanned for identity strings in tests).
 */

import { SessionClient, SessionExhausted, ServiceRequestError } from "./session.js";
import { CHOICES, Choice, PairAssignment, Question } from "./types.js";

const CHOICE_LABELS: Record<Choice, string> = {
  left: "Left",
  tie: "Tie",
  right: "Right",
};

/** Annotation guidance shown in the collapsible panel. */
const GUIDELINE_ITEMS: ReadonlyArray<[string, string]> = [
  ["Reading scope", "Judge literature review quality from the Introduction and Related Work only; judge overall quality from a full read of both papers."],
  ["Ignore templates and metadata", "Ignore conference headers, watermarks, or author blocks. Judge only the intrinsic quality of the text and research."],
  ["Independence", "Evaluate each paper on its own before comparing them."],
  ["Length", "Do not base your decision solely on paper length or verbosity."],
];

function el<K extends keyof HTMLElementTagNameMap>(
  tag: K,
  className?: string,
  text?: string,
): HTMLElementTagNameMap[K] {
  const node = document.createElement(tag);
  if (className) node.className = className;
  if (text !== undefined) node.textContent = text;
  return node;
}

export class AnnotationView {
  constructor(
    private readonly root: HTMLElement,
    private readonly session: SessionClient,
  ) {}

  /** Fetch (or restore) the current pair and render the whole screen. */
  async loadNext(): Promise<void> {
    this.renderMessage("Loading next pair…");
    let assignment: PairAssignment;
    try {
      assignment = await this.session.loadNext();
    } catch (error) {
      if (error instanceof SessionExhausted) {
        this.renderCompletion();
        return;
      }
      this.renderError(error, () => void this.loadNext());
      return;
    }
    this.renderPair(assignment);
  }

  private clear(): void {
    this.root.replaceChildren();
  }

  private renderMessage(text: string): void {
    this.clear();
    this.root.append(el("p", "status-message", text));
  }

  private renderError(error: unknown, retry: () => void): void {
    this.clear();
    const banner = el("div", "error-banner");
    const detail = error instanceof Error ? error.message : String(error);
    banner.append(el("p", "error-text", `Something went wrong: ${detail}`));
    const button = el("button", "retry-button", "Retry");
    button.addEventListener("click", retry);
    banner.append(button);
    this.root.append(banner);
  }

  private renderCompletion(): void {
    this.clear();
    const done = el("div", "completion-screen");
    done.append(el("h2", undefined, "All pairs annotated"));
    const snapshot = this.session.snapshot();
    done.append(el("p", undefined, `You completed ${snapshot.completed} pair(s). Thank you.`));
    const link = el("a", "summary-link", "View aggregate summary");
    link.setAttribute("href", "/api/summary");
    done.append(link);
    this.root.append(done);
  }

  private renderPair(assignment: PairAssignment): void {
    this.clear();
    this.root.append(this.buildHeader(assignment));
    this.root.append(this.buildGuidelines());
    this.root.append(this.buildDocumentPanes(assignment));
    this.root.append(this.buildQuestionnaire(assignment));
    this.updateProgress();
  }

  private buildHeader(assignment: PairAssignment): HTMLElement {
    const header = el("header", "pair-header");
    header.append(el("h1", undefined, "Side-by-Side Manuscript Comparison"));
    const progress = el("p", "progress-indicator");
    progress.id = "progress";
    header.append(progress);
    const pairLabel = el("p", "pair-label", `Pair ${assignment.pair_id}`);
    header.append(pairLabel);
    return header;
  }

  private buildGuidelines(): HTMLElement {
    const details = el("details", "guidelines-panel");
    details.append(el("summary", undefined, "Annotation guidelines"));
    const list = el("ul");
    for (const [title, body] of GUIDELINE_ITEMS) {
      const item = el("li");
      item.append(el("strong", undefined, `${title}: `));
      item.append(document.createTextNode(body));
      list.append(item);
    }
    details.append(list);
    return details;
  }

  private buildDocumentPanes(assignment: PairAssignment): HTMLElement {
    const panes = el("div", "document-panes");
    for (const side of ["left", "right"] as const) {
      const pane = el("section", `pane pane-${side}`);
      pane.append(el("h2", undefined, CHOICE_LABELS[side]));
      const frame = el("iframe", "doc-frame");
      frame.setAttribute("src", side === "left" ? assignment.left_doc : assignment.right_doc);
      frame.setAttribute("title", `${CHOICE_LABELS[side]} document`);
      frame.setAttribute("loading", "lazy");
      const skeleton = el("div", "doc-skeleton", "Loading document…");
      frame.addEventListener("load", () => skeleton.remove());
      pane.append(skeleton);
      pane.append(frame);
      panes.append(pane);
    }
    return panes;
  }

  private buildQuestionnaire(assignment: PairAssignment): HTMLElement {
    const form = el("form", "questionnaire");
    form.addEventListener("submit", (event) => event.preventDefault());
    const q = assignment.questionnaire;
    form.append(this.questionGroup("Literature review quality", q.lit_questions));
    form.append(this.questionGroup("Overall paper quality", q.overall_questions));
    form.append(this.questionGroup("Final judgments", q.final_judgments));

    const submit = el("button", "submit-button", "Submit judgment");
    submit.id = "submit";
    submit.setAttribute("type", "button");
    submit.disabled = true;
    submit.addEventListener("click", () => void this.handleSubmit());
    form.append(submit);

    const inlineError = el("p", "inline-error");
    inlineError.id = "inline-error";
    form.append(inlineError);
    return form;
  }

  private questionGroup(title: string, questions: Question[]): HTMLElement {
    const group = el("fieldset", "question-group");
    group.append(el("legend", undefined, title));
    for (const question of questions) {
      group.append(this.questionRow(question));
    }
    return group;
  }

  private questionRow(question: Question): HTMLElement {
    const row = el("div", "question-row");
    row.dataset.questionId = question.id;
    row.append(el("span", "question-text", question.text));
    const options = el("div", "choice-options");
    for (const choice of CHOICES) {
      const label = el("label", "choice-label");
      const input = el("input");
      input.setAttribute("type", "radio");
      input.setAttribute("name", question.id);
      input.setAttribute("value", choice);
      input.addEventListener("change", () => {
        this.session.answer(question.id, choice);
        this.updateProgress();
      });
      label.append(input);
      label.append(document.createTextNode(CHOICE_LABELS[choice]));
      options.append(label);
    }
    row.append(options);
    return row;
  }

  /** Reflect the answer buffer in the progress line and the submit gate. */
  updateProgress(): void {
    const snapshot = this.session.snapshot();
    const progress = this.root.querySelector<HTMLElement>("#progress");
    if (progress) {
      progress.textContent =
        `Completed pairs: ${snapshot.completed} — ` +
        `answered ${snapshot.answered} of ${snapshot.total} items`;
    }
    const submit = this.root.querySelector<HTMLButtonElement>("#submit");
    if (submit) {
      submit.disabled = !snapshot.submittable;
    }
    // restore checked state after a refresh
    for (const [questionId, choice] of Object.entries(this.session.currentAnswers())) {
      const input = this.root.querySelector<HTMLInputElement>(
        `input[name="${questionId}"][value="${choice}"]`,
      );
      if (input && !input.checked) {
        input.checked = true;
      }
    }
  }

  private async handleSubmit(): Promise<void> {
    const inlineError = this.root.querySelector<HTMLElement>("#inline-error");
    try {
      await this.session.submit();
    } catch (error) {
      if (inlineError) {
        if (error instanceof ServiceRequestError && error.kind === "IncompleteAnswersError") {
          inlineError.textContent = `Unanswered items: ${error.detail}`;
          this.markMissing(error.detail);
        } else {
          const detail = error instanceof Error ? error.message : String(error);
          inlineError.textContent = `Submission failed, your answers are preserved: ${detail}`;
        }
      }
      return;
    }
    await this.loadNext();
  }

  private markMissing(detail: string): void {
    for (const row of this.root.querySelectorAll<HTMLElement>(".question-row")) {
      const id = row.dataset.questionId ?? "";
      row.classList.toggle("missing", detail.includes(id));
    }
  }
}
