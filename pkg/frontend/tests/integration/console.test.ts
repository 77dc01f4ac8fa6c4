// End-to-end console flows against the real engine in scripted mode.
// The suite boots the Python API server with a scenario file, then drives
// the same ApiClient the UI uses: triage round-trip, live-board polling
// with monotone cost, and the review gate with the internal veto.

import { ChildProcess, execFileSync, spawn } from 'node:child_process';
import { mkdtempSync, mkdirSync, writeFileSync } from 'node:fs';
import { tmpdir } from 'node:os';
import { join } from 'node:path';
import { afterAll, beforeAll, describe, expect, it } from 'vitest';

import { ApiClient } from '../../src/api.js';
import { RunBoard } from '../../src/board.js';
import { emptySelection, formSubmittable, toRatingSubmission } from '../../src/review.js';
import { renderGate, renderMetaDash } from '../../src/views.js';

const PYTHON = process.env.PYTHON ?? 'python3';
const PORT = 18100 + (process.pid % 1500);
const BASE = `http://127.0.0.1:${PORT}`;

const fence = '```';

const IDEA_REPLY = [
  'Here is the idea.',
  '',
  `${fence}yaml`,
  'name: graph-memory',
  'short_description: Graph memory for agents in cooking tasks.',
  'long_description: Augment an agent with a graph memory and compare scores.',
  'hypothesis: Graph memory raises the partial task score.',
  'variables:',
  '  independent: [agent variant]',
  '  dependent: [task score]',
  '  controls: [model, seed]',
  'metric: mean partial task score',
  'baselines: plain agent',
  'pilot: three episodes of ten steps',
  'required_resources: [environment API]',
  fence,
].join('\n');

const PLAN_REPLY = [
  `${fence}yaml`,
  'operationalization:',
  '  modes_and_scope: |',
  '    PILOT_MODE selects MINI_PILOT, PILOT, or FULL_EXPERIMENT.',
  '  environment_setup: |',
  '    Simple cooking environment.',
  '  model_config: |',
  '    Calls go through the metering proxy.',
  '  data_collection: |',
  '    Record scores per episode.',
  '  analysis: |',
  '    Compare means with a bootstrap.',
  '  logging_output: |',
  '    Print RESULT lines.',
  '  execution_flow: |',
  '    Run MINI_PILOT first, escalate on success.',
  '  success_criteria: |',
  '    Clean execution, non-zero score.',
  'codeblock_ids: []',
  'tiers:',
  '  - name: MINI_PILOT',
  '    scale_params: {episodes: 3, steps: 10}',
  '  - name: PILOT',
  '    scale_params: {episodes: 20, steps: 25}',
  '  - name: FULL_EXPERIMENT',
  '    scale_params: {episodes: 200, steps: 50}',
  fence,
].join('\n');

const PROGRAM_REPLY = [
  `${fence}python`,
  'PILOT_MODE = "MINI_PILOT"',
  "print('RESULT', PILOT_MODE)",
  fence,
].join('\n');

const REFLECT_OK = 'DECISION: success\nFAITHFULNESS: matches plan\nPATCH_INTENT: none';
const REPORT_REPLY = `${fence}\nGraph memory beat the baseline 0.42 vs 0.31.\n${fence}`;
const SUMMARY_REPLY = 'Graph memory improved scores 0.42 vs 0.31.\nVERDICT: supports';
const INTERESTING_REPLY = 'INTERESTING: yes\nClear positive margin.';

// Builder calls cost real (scripted) tokens so the cost meter moves per
// iteration: 400k input tokens at $0.15/1M = $0.06 per generation call.
const SCENARIO = {
  rules: [
    { run: 'ideation*', responses: [{ text: IDEA_REPLY }] },
    { run: 'planning-*', responses: [{ text: PLAN_REPLY }] },
    { run: 'meta-*', responses: [{ text: 'Both attempts support the hypothesis.' }] },
    {
      iteration: 1,
      responses: [
        { text: PROGRAM_REPLY, input_tokens: 400_000, output_tokens: 2_000 },
        { text: REFLECT_OK, input_tokens: 50_000, output_tokens: 200 },
      ],
    },
    {
      iteration: 2,
      responses: [{ text: REFLECT_OK, input_tokens: 50_000, output_tokens: 200 }],
    },
    {
      iteration: 3,
      responses: [
        { text: REFLECT_OK, input_tokens: 50_000, output_tokens: 200 },
        { text: REPORT_REPLY, input_tokens: 60_000, output_tokens: 500 },
        { text: SUMMARY_REPLY, input_tokens: 10_000, output_tokens: 100 },
        { text: INTERESTING_REPLY, input_tokens: 5_000, output_tokens: 50 },
      ],
    },
  ],
};

let server: ChildProcess | undefined;
let api: ApiClient;

async function waitForHealth(client: ApiClient, timeoutMs: number): Promise<void> {
  const deadline = Date.now() + timeoutMs;
  let lastError: unknown;
  while (Date.now() < deadline) {
    try {
      await client.health();
      return;
    } catch (error) {
      lastError = error;
      await new Promise((resolve) => setTimeout(resolve, 250));
    }
  }
  throw new Error(`engine did not come up on ${BASE}: ${lastError}`);
}

beforeAll(async () => {
  const base = mkdtempSync(join(tmpdir(), 'console-it-'));
  const root = join(base, 'root');
  const scenarioPath = join(base, 'scenario.json'); // JSON is valid YAML
  writeFileSync(scenarioPath, JSON.stringify(SCENARIO));

  const papers = join(base, 'papers');
  mkdirSync(papers);
  writeFileSync(join(papers, 'a.txt'), 'Paper Alpha\n' + 'alpha body '.repeat(20));
  writeFileSync(join(papers, 'b.txt'), 'Paper Beta\n' + 'beta body '.repeat(20));
  const blocks = join(base, 'blocks');
  mkdirSync(blocks);
  writeFileSync(
    join(blocks, 'agent.block'),
    '---\nname: Agent loop\nsummary: Minimal agent loop.\ncapabilities: agent loop\n---\npass\n',
  );

  const cli = ['-m', 'labloop.orchestrator.cli', '--root', root, '--scenario', scenarioPath];
  execFileSync(PYTHON, [...cli, 'ingest', '--papers', papers, '--codeblocks', blocks]);
  execFileSync(PYTHON, [...cli, 'ideate', '--pairs', '1', '--seed', '3']);

  server = spawn(PYTHON, [...cli, 'serve', '--port', String(PORT)], { stdio: 'inherit' });
  api = new ApiClient(BASE);
  await waitForHealth(api, 60_000);
});

afterAll(() => {
  server?.kill('SIGTERM');
});

describe('console against the scripted engine', () => {
  let ideaId: string;
  let planId: string;
  let runIds: string[] = [];

  it('triage round-trip: submitted annotation is visible via the API', async () => {
    const queue = await api.triageQueue('operator', 5);
    expect(queue.length).toBe(1);
    ideaId = queue[0].id;
    expect(queue[0].annotation).toBeNull();

    await api.submitAnnotation(ideaId, {
      rating: 'selected',
      notes: 'Use the partial task score, not completion.',
      conditioning_text: 'Prefer the inexpensive model.',
    });
    const fetched = await api.getIdea(ideaId);
    expect(fetched.annotation?.rating).toBe('selected');
    expect(fetched.annotation?.notes).toContain('partial task score');
  });

  it('plans the annotated idea and validates it', async () => {
    const plan = await api.createPlan(ideaId);
    planId = plan.id;
    expect(plan.tiers.map((tier) => tier.name)).toEqual([
      'MINI_PILOT',
      'PILOT',
      'FULL_EXPERIMENT',
    ]);
    const validation = await api.validatePlan(planId);
    expect(validation.valid).toBe(true);
  });

  it('live board: cost is monotone across at least three polls per run', async () => {
    const { run_ids } = await api.enqueueJob(planId, 2, 2);
    runIds = run_ids;
    expect(runIds.length).toBe(2);

    const board = new RunBoard();
    const histories = new Map<string, number[]>(runIds.map((id) => [id, []]));
    const deadline = Date.now() + 120_000;
    for (;;) {
      const statuses = await Promise.all(
        runIds.map(async (runId) => {
          const ticket = board.beginPoll(runId);
          const status = await api.runStatus(runId);
          board.apply(ticket, status);
          histories.get(runId)!.push(status.cost_microdollars);
          return status;
        }),
      );
      const done = statuses.every((status) => status.status === 'terminal');
      const enoughPolls = [...histories.values()].every((series) => series.length >= 3);
      if (done && enoughPolls) break;
      if (Date.now() > deadline) throw new Error('runs did not finish in time');
      await new Promise((resolve) => setTimeout(resolve, 150));
    }

    for (const series of histories.values()) {
      expect(series.length).toBeGreaterThanOrEqual(3);
      expect(board.costSeriesIsMonotone(series)).toBe(true);
      expect(series[series.length - 1]).toBeGreaterThan(0);
    }
    for (const runId of runIds) {
      expect(board.row(runId)?.outcome?.kind).toBe('Completed');
    }
  });

  it('shows results and the meta dashboard from server values', async () => {
    const summary = await api.runSummary(runIds[0]);
    expect(summary.verdict).toBe('supports');
    expect(summary.interesting).toBe(true);

    const meta = await api.getMeta(ideaId);
    expect(meta.classification).toBe('Consistent');
    const html = renderMetaDash(meta);
    expect(html).toContain('<span class="classification">Consistent</span>');
    expect(meta.attempt_summaries.length).toBe(2);
  });

  it('review form reproduces the two-of-three pass pattern and the veto override', async () => {
    // Reviewer bits (1,1), (1,1), (0,1): external majority passes both axes.
    const selections = [
      { ...emptySelection('r1'), soundness: 'likely_sound', novelty: 'incremental_minor' },
      { ...emptySelection('r2'), soundness: 'clearly_sound', novelty: 'incremental_significant' },
      { ...emptySelection('r3'), soundness: 'unsound', novelty: 'incremental_minor' },
    ] as const;
    const mutable = selections.map((s) => ({ ...s }));
    expect(formSubmittable(mutable)).toBe(true);

    const afterRatings = await api.submitRatings(ideaId, mutable.map(toRatingSubmission));
    expect(afterRatings.external_pass).toBe(true);
    expect(renderGate(afterRatings)).toContain('external: pass');

    const vetoFail = await api.submitVeto(ideaId, false, 'replication failed');
    expect(vetoFail.external_pass).toBe(true);
    expect(vetoFail.final).toBe(false); // veto overrides the external pass
    expect(renderGate(vetoFail)).toContain('final: fail');

    const vetoPass = await api.submitVeto(ideaId, true, 'replicated at 3x samples');
    expect(vetoPass.final).toBe(true);
    const gate = await api.getGate(ideaId);
    expect(gate.final).toBe(true);
  });
});
