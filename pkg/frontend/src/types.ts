/**
 * Wire types for the annotation service API.
 *
 * The service keeps annotators blind: assignments carry only opaque
 * left/right document URLs and never any pipeline identity.
 */

export type Choice = "left" | "tie" | "right";

export interface Question {
  id: string;
  text: string;
}

export interface QuestionnaireSchema {
  lit_questions: Question[];
  overall_questions: Question[];
  final_judgments: Question[];
  choices: Choice[];
}

export interface PairAssignment {
  pair_id: string;
  annotator_id: string;
  left_doc: string;
  right_doc: string;
  questionnaire: QuestionnaireSchema;
}

export interface JudgmentPayload {
  pair_id: string;
  annotator_id: string;
  answers: Record<string, Choice>;
  final_lit: Choice;
  final_overall: Choice;
}

export interface SubmitAck {
  status: string;
  pair_id: string;
  demapped: Record<string, string>;
}

export interface ServiceError {
  error: string;
  detail: string;
}

export interface AspectSummary {
  win: number;
  tie: number;
  loss: number;
  margin: number;
}

export interface Summary {
  baselines: Record<string, Record<string, AspectSummary>>;
  judgment_count: number;
}

export const CHOICES: readonly Choice[] = ["left", "tie", "right"];

export function isChoice(value: unknown): value is Choice {
  return typeof value === "string" && (CHOICES as readonly string[]).includes(value);
}
