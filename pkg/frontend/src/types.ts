// API payload shapes, mirrored 1:1 from the engine's /api/v1 responses.
// The console renders these values verbatim; it never recomputes
// classifications, verdicts, or gate decisions client-side.

export interface Annotation {
  idea_id: string;
  rating: 'selected' | 'rejected' | 'unreviewed' | 'potentially-feasible';
  notes: string;
  conditioning_text: string;
}

export interface IdeaCard {
  id: string;
  name: string;
  short_description: string;
  long_description: string;
  hypothesis: string;
  variables: { independent: string[]; dependent: string[]; controls: string[] };
  metric: string;
  baselines: string;
  pilot: string;
  required_resources: string[];
  operator: string;
  source_paper_ids: string[];
  annotation: Annotation | null;
}

export interface RunOutcome {
  kind: 'Completed' | 'DebugLimit' | 'HardTimeLimit' | 'CodeTooLong' | 'CostLimit';
  detail: string;
}

export interface RunStatus {
  run_id: string;
  plan_id: string | null;
  attempt_index: number | null;
  status: 'queued' | 'running' | 'terminal';
  iteration: number;
  tier: string | null;
  cost_microdollars: number;
  outcome: RunOutcome | null;
  needs_human: string | null;
  last_log_lines: string[];
}

export interface ResultSummary {
  run_id: string;
  text: string;
  verdict: 'supports' | 'rejects' | 'inconclusive' | null;
  interesting: boolean;
  interesting_rationale: string;
}

export interface ReportView {
  run_id: string;
  document: string;
  figures: string[];
  is_failure_digest: boolean;
}

export interface AttemptSummary {
  run_id: string;
  outcome: string;
  verdict: string | null;
}

export interface MetaDash {
  idea_id: string;
  plan_id: string;
  attempt_summaries: AttemptSummary[];
  classification: 'Consistent' | 'Mixed' | 'Limited';
  narrative: string;
}

export interface GateDecision {
  discovery_id: string;
  external_pass: boolean;
  internal_pass: boolean;
  final: boolean;
}

export interface PlanView {
  id: string;
  idea_id: string;
  codeblock_ids: string[];
  tiers: { name: string; scale_params: Record<string, number>; stop_after: boolean }[];
  conditioning_text: string;
  text: string;
}
