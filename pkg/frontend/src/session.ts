/**
 * Session state machine for one annotator, decoupled from the DOM.
 *
 * Holds the current assignment and the answer buffer, persists both through an
 * injectable key-value store (localStorage in the browser) so a mid-pair
 * refresh restores the same assignment and answers, and submits judgments once
 * every questionnaire item plus both final judgments have a value.
 */

import {
  Choice,
  isChoice,
  JudgmentPayload,
  PairAssignment,
  ServiceError,
  SubmitAck,
  Summary,
} from "./types.js";

export type FetchLike = (url: string, init?: RequestInit) => Promise<Response>;

export interface KeyValueStore {
  getItem(key: string): string | null;
  setItem(key: string, value: string): void;
  removeItem(key: string): void;
}

export class MemoryStore implements KeyValueStore {
  private data = new Map<string, string>();
  getItem(key: string): string | null {
    return this.data.has(key) ? (this.data.get(key) as string) : null;
  }
  setItem(key: string, value: string): void {
    this.data.set(key, value);
  }
  removeItem(key: string): void {
    this.data.delete(key);
  }
}

export class ServiceRequestError extends Error {
  constructor(
    public readonly kind: string,
    public readonly detail: string,
    public readonly status: number,
  ) {
    super(`${kind}: ${detail}`);
  }
}

export class SessionExhausted extends Error {}

interface PersistedState {
  assignment: PairAssignment | null;
  answers: Record<string, Choice>;
  completed: number;
}

export interface SessionSnapshot {
  assignment: PairAssignment | null;
  answered: number;
  total: number;
  completed: number;
  submittable: boolean;
}

/** All item ids that must carry a choice before submission is allowed. */
export function requiredItemIds(assignment: PairAssignment): string[] {
  const q = assignment.questionnaire;
  return [
    ...q.lit_questions.map((item) => item.id),
    ...q.overall_questions.map((item) => item.id),
    ...q.final_judgments.map((item) => item.id),
  ];
}

export class SessionClient {
  private assignment: PairAssignment | null = null;
  private answers: Record<string, Choice> = {};
  private completed = 0;

  constructor(
    private readonly baseUrl: string,
    readonly annotatorId: string,
    private readonly fetchImpl: FetchLike,
    private readonly store: KeyValueStore = new MemoryStore(),
  ) {
    this.restore();
  }

  private storageKey(): string {
    return `sxs-session:${this.annotatorId}`;
  }

  private persist(): void {
    const state: PersistedState = {
      assignment: this.assignment,
      answers: this.answers,
      completed: this.completed,
    };
    this.store.setItem(this.storageKey(), JSON.stringify(state));
  }

  private restore(): void {
    const raw = this.store.getItem(this.storageKey());
    if (raw === null) return;
    try {
      const state = JSON.parse(raw) as PersistedState;
      this.assignment = state.assignment;
      this.answers = state.answers ?? {};
      this.completed = state.completed ?? 0;
    } catch {
      this.store.removeItem(this.storageKey());
    }
  }

  snapshot(): SessionSnapshot {
    const total = this.assignment === null ? 0 : requiredItemIds(this.assignment).length;
    return {
      assignment: this.assignment,
      answered: Object.keys(this.answers).length,
      total,
      completed: this.completed,
      submittable: this.isComplete(),
    };
  }

  currentAnswers(): Readonly<Record<string, Choice>> {
    return { ...this.answers };
  }

  /** Fetch the next pair (or return the restored open one). */
  async loadNext(): Promise<PairAssignment> {
    if (this.assignment !== null) {
      return this.assignment;
    }
    const response = await this.fetchImpl(
      `${this.baseUrl}/api/pairs/next?annotator=${encodeURIComponent(this.annotatorId)}`,
    );
    if (!response.ok) {
      const body = (await response.json()) as ServiceError;
      if (body.error === "ExhaustedError") {
        throw new SessionExhausted(body.detail);
      }
      throw new ServiceRequestError(body.error, body.detail, response.status);
    }
    this.assignment = (await response.json()) as PairAssignment;
    this.answers = {};
    this.persist();
    return this.assignment;
  }

  /**
   * Record a choice for one questionnaire item. Re-answering overwrites;
   * anything outside {left, tie, right} or the current schema is rejected.
   */
  answer(questionId: string, choice: unknown): void {
    if (this.assignment === null) {
      throw new Error("no active assignment");
    }
    if (!isChoice(choice)) {
      throw new Error(`choice must be left|tie|right, got ${String(choice)}`);
    }
    if (!requiredItemIds(this.assignment).includes(questionId)) {
      throw new Error(`question not in the current schema: ${questionId}`);
    }
    this.answers[questionId] = choice;
    this.persist();
  }

  missingItems(): string[] {
    if (this.assignment === null) return [];
    return requiredItemIds(this.assignment).filter((id) => !isChoice(this.answers[id]));
  }

  isComplete(): boolean {
    return this.assignment !== null && this.missingItems().length === 0;
  }

  buildPayload(): JudgmentPayload {
    if (this.assignment === null) {
      throw new Error("no active assignment");
    }
    const missing = this.missingItems();
    if (missing.length > 0) {
      throw new Error(`unanswered items: ${missing.join(", ")}`);
    }
    const answers: Record<string, Choice> = {};
    for (const [id, choice] of Object.entries(this.answers)) {
      if (id !== "final_lit" && id !== "final_overall") {
        answers[id] = choice;
      }
    }
    return {
      pair_id: this.assignment.pair_id,
      annotator_id: this.annotatorId,
      answers,
      final_lit: this.answers["final_lit"],
      final_overall: this.answers["final_overall"],
    };
  }

  /**
   * POST the completed judgment. On success the buffer clears and the next
   * call to loadNext() fetches a fresh pair; on failure the buffer survives so
   * the annotator can retry.
   */
  async submit(): Promise<SubmitAck> {
    const payload = this.buildPayload();
    const response = await this.fetchImpl(`${this.baseUrl}/api/judgments`, {
      method: "POST",
      headers: { "Content-Type": "application/json" },
      body: JSON.stringify(payload),
    });
    if (!response.ok) {
      const body = (await response.json()) as ServiceError;
      throw new ServiceRequestError(body.error, body.detail, response.status);
    }
    const ack = (await response.json()) as SubmitAck;
    this.assignment = null;
    this.answers = {};
    this.completed += 1;
    this.persist();
    return ack;
  }

  async summary(): Promise<Summary> {
    const response = await this.fetchImpl(`${this.baseUrl}/api/summary`);
    if (!response.ok) {
      const body = (await response.json()) as ServiceError;
      throw new ServiceRequestError(body.error, body.detail, response.status);
    }
    return (await response.json()) as Summary;
  }
}
