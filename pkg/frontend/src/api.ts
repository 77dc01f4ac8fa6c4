// Thin client over the engine's versioned HTTP API. One source of truth:
// every value shown in the console comes straight from these payloads.

import type {
  Annotation,
  GateDecision,
  IdeaCard,
  MetaDash,
  PlanView,
  ReportView,
  ResultSummary,
  RunStatus,
} from './types.js';

export type FetchLike = (input: string, init?: RequestInit) => Promise<Response>;

export class ApiError extends Error {
  constructor(
    readonly status: number,
    readonly detail: string,
  ) {
    super(`API ${status}: ${detail}`);
  }
}

export interface RatingSubmission {
  reviewer_id: string;
  soundness: string;
  novelty: string;
  justification: string;
}

export class ApiClient {
  constructor(
    private readonly baseUrl: string,
    private readonly token?: string,
    private readonly fetchImpl: FetchLike = (input, init) => fetch(input, init),
  ) {}

  private async request<T>(method: string, path: string, body?: unknown): Promise<T> {
    const headers: Record<string, string> = { 'Content-Type': 'application/json' };
    if (this.token) headers['X-Auth-Token'] = this.token;
    const response = await this.fetchImpl(`${this.baseUrl}/api/v1${path}`, {
      method,
      headers,
      body: body === undefined ? undefined : JSON.stringify(body),
    });
    if (!response.ok) {
      let detail = response.statusText;
      try {
        const payload = (await response.json()) as { detail?: string };
        if (payload.detail) detail = payload.detail;
      } catch {
        // non-JSON error body; keep the status text
      }
      throw new ApiError(response.status, detail);
    }
    return (await response.json()) as T;
  }

  health(): Promise<{ status: string }> {
    return this.request('GET', '/health');
  }

  // ideas + triage
  listIdeas(): Promise<IdeaCard[]> {
    return this.request('GET', '/ideas');
  }

  getIdea(ideaId: string): Promise<IdeaCard> {
    return this.request('GET', `/ideas/${ideaId}`);
  }

  triageQueue(strataKey = 'operator', perStratum = 10): Promise<IdeaCard[]> {
    return this.request(
      'GET',
      `/triage/queue?strata_key=${encodeURIComponent(strataKey)}&per_stratum=${perStratum}`,
    );
  }

  submitAnnotation(ideaId: string, annotation: Omit<Annotation, 'idea_id'>): Promise<IdeaCard> {
    return this.request('POST', `/ideas/${ideaId}/annotation`, annotation);
  }

  // plans + jobs
  createPlan(ideaId: string): Promise<PlanView> {
    return this.request('POST', '/plans', { idea_id: ideaId });
  }

  getPlan(planId: string): Promise<PlanView> {
    return this.request('GET', `/plans/${planId}`);
  }

  validatePlan(planId: string): Promise<{ plan_id: string; violations: string[]; valid: boolean }> {
    return this.request('POST', `/plans/${planId}/validate`);
  }

  enqueueJob(planId: string, attempts = 5, concurrencyCap = 4): Promise<{ run_ids: string[] }> {
    return this.request('POST', '/jobs', {
      plan_id: planId,
      attempts,
      concurrency_cap: concurrencyCap,
    });
  }

  // runs
  listRuns(): Promise<RunStatus[]> {
    return this.request('GET', '/runs');
  }

  runStatus(runId: string): Promise<RunStatus> {
    return this.request('GET', `/runs/${runId}/status`);
  }

  runReport(runId: string): Promise<ReportView> {
    return this.request('GET', `/runs/${runId}/report`);
  }

  runSummary(runId: string): Promise<ResultSummary> {
    return this.request('GET', `/runs/${runId}/summary`);
  }

  // meta + review
  getMeta(ideaId: string): Promise<MetaDash> {
    return this.request('GET', `/meta/${ideaId}`);
  }

  submitRatings(discoveryId: string, ratings: RatingSubmission[]): Promise<GateDecision> {
    return this.request('POST', `/reviews/${discoveryId}/ratings`, { ratings });
  }

  submitVeto(discoveryId: string, passed: boolean, notes = ''): Promise<GateDecision> {
    return this.request('POST', `/reviews/${discoveryId}/veto`, { passed, notes });
  }

  getGate(discoveryId: string): Promise<GateDecision> {
    return this.request('GET', `/reviews/${discoveryId}/gate`);
  }
}
