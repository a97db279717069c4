/** Shared test fixtures: a schema-faithful assignment and a scripted service. */

import type {
  JudgmentPayload,
  PairAssignment,
  QuestionnaireSchema,
} from "../src/types.js";
import type { FetchLike } from "../src/session.js";

export function questionnaire(): QuestionnaireSchema {
  return {
    lit_questions: [
      { id: "lit_motivation", text: "Motivation?" },
      { id: "lit_coverage", text: "Coverage?" },
      { id: "lit_synthesis", text: "Synthesis?" },
      { id: "lit_positioning", text: "Positioning?" },
      { id: "lit_readability", text: "Readability?" },
    ],
    overall_questions: [
      { id: "overall_depth", text: "Depth?" },
      { id: "overall_execution", text: "Execution?" },
      { id: "overall_flow", text: "Flow?" },
      { id: "overall_clarity", text: "Clarity?" },
      { id: "overall_evidence", text: "Evidence?" },
      { id: "overall_style", text: "Style?" },
    ],
    final_judgments: [
      { id: "final_lit", text: "Final: literature review" },
      { id: "final_overall", text: "Final: overall quality" },
    ],
    choices: ["left", "tie", "right"],
  };
}

export function assignment(pairId = "p000", annotator = "annA"): PairAssignment {
  return {
    pair_id: pairId,
    annotator_id: annotator,
    left_doc: `/docs/${pairId}/left.pdf?annotator=${annotator}`,
    right_doc: `/docs/${pairId}/right.pdf?annotator=${annotator}`,
    questionnaire: questionnaire(),
  };
}

function jsonResponse(payload: unknown, status = 200): Response {
  return new Response(JSON.stringify(payload), {
    status,
    headers: { "Content-Type": "application/json" },
  });
}

export interface ScriptedService {
  fetch: FetchLike;
  submissions: JudgmentPayload[];
  nextCalls: number;
}

/**
 * In-memory stand-in for the annotation service: serves `pairs` in order per
 * annotator, records submissions, and signals exhaustion afterwards.
 */
export function scriptedService(pairIds: string[]): ScriptedService {
  const submissions: JudgmentPayload[] = [];
  const servedBy = new Map<string, number>();
  const service: ScriptedService = {
    submissions,
    nextCalls: 0,
    fetch: async (url: string, init?: RequestInit): Promise<Response> => {
      const parsed = new URL(url, "http://service.test");
      if (parsed.pathname === "/api/pairs/next") {
        service.nextCalls += 1;
        const annotator = parsed.searchParams.get("annotator") ?? "";
        const served = servedBy.get(annotator) ?? 0;
        if (served >= pairIds.length) {
          return jsonResponse({ error: "ExhaustedError", detail: "no unserved pairs" }, 404);
        }
        servedBy.set(annotator, served + 1);
        return jsonResponse(assignment(pairIds[served], annotator));
      }
      if (parsed.pathname === "/api/judgments" && init?.method === "POST") {
        const payload = JSON.parse(String(init.body)) as JudgmentPayload;
        submissions.push(payload);
        return jsonResponse({ status: "ok", pair_id: payload.pair_id, demapped: {} });
      }
      if (parsed.pathname === "/api/summary") {
        return jsonResponse({ baselines: {}, judgment_count: submissions.length });
      }
      return jsonResponse({ error: "NotFound", detail: parsed.pathname }, 404);
    },
  };
  return service;
}

/** Answer every questionnaire item plus the two finals with `choice`. */
export function answerEverything(
  session: { answer(id: string, choice: string): void },
  schema: QuestionnaireSchema,
  choice = "tie",
): void {
  for (const q of [...schema.lit_questions, ...schema.overall_questions, ...schema.final_judgments]) {
    session.answer(q.id, choice);
  }
}
