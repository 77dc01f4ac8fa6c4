// HTML rendering for the five screens. Pure string builders so they are
// trivially testable; every science-bearing value (verdict, classification,
// gate) is interpolated from the API payload untouched.

import type {
  GateDecision,
  IdeaCard,
  MetaDash,
  ResultSummary,
  RunStatus,
} from './types.js';

export function escapeHtml(text: string): string {
  return text
    .replaceAll('&', '&amp;')
    .replaceAll('<', '&lt;')
    .replaceAll('>', '&gt;')
    .replaceAll('"', '&quot;');
}

export function formatCost(microdollars: number): string {
  return `$${(microdollars / 1_000_000).toFixed(4)}`;
}

export function renderIdeaCard(idea: IdeaCard): string {
  const annotation = idea.annotation;
  const badge = annotation ? annotation.rating : 'unreviewed';
  return `
<article class="idea-card" data-idea="${escapeHtml(idea.id)}">
  <header><strong>${escapeHtml(idea.name)}</strong> <span class="badge">${escapeHtml(badge)}</span></header>
  <p>${escapeHtml(idea.short_description)}</p>
  <dl>
    <dt>Hypothesis</dt><dd>${escapeHtml(idea.hypothesis)}</dd>
    <dt>Metric</dt><dd>${escapeHtml(idea.metric)}</dd>
    <dt>Baselines</dt><dd>${escapeHtml(idea.baselines)}</dd>
    <dt>Operator</dt><dd>${escapeHtml(idea.operator)}</dd>
    <dt>Source papers</dt><dd>${idea.source_paper_ids.map(escapeHtml).join(', ')}</dd>
  </dl>
  <form class="annotation-form">
    <textarea name="notes" placeholder="2-3 sentence expert comments">${escapeHtml(annotation?.notes ?? '')}</textarea>
    <textarea name="conditioning_text" placeholder="conditioning text for the planner">${escapeHtml(annotation?.conditioning_text ?? '')}</textarea>
    <button data-rating="selected">Select</button>
    <button data-rating="rejected">Reject</button>
    <button data-rating="potentially-feasible">Maybe</button>
  </form>
</article>`;
}

export function renderRunRow(status: RunStatus): string {
  const outcome = status.outcome
    ? `<span class="outcome outcome-${status.outcome.kind}">${escapeHtml(status.outcome.kind)}</span>`
    : `<span class="outcome outcome-pending">${escapeHtml(status.status)}</span>`;
  const tail = status.last_log_lines.map((line) => escapeHtml(line)).join('<br/>');
  return `
<tr data-run="${escapeHtml(status.run_id)}">
  <td>${escapeHtml(status.run_id)}</td>
  <td>${status.iteration}</td>
  <td>${escapeHtml(status.tier ?? '-')}</td>
  <td class="cost">${formatCost(status.cost_microdollars)}</td>
  <td>${outcome}</td>
  <td class="log-tail">${tail}</td>
</tr>`;
}

export function renderResults(summary: ResultSummary, reportHref: string): string {
  const verdict = summary.verdict ?? 'pending';
  const star = summary.interesting ? ' &#9733; interesting' : '';
  return `
<section class="results" data-run="${escapeHtml(summary.run_id)}">
  <span class="verdict-chip verdict-${escapeHtml(verdict)}">${escapeHtml(verdict)}</span>${star}
  <p>${escapeHtml(summary.text)}</p>
  <a href="${escapeHtml(reportHref)}">full report</a>
</section>`;
}

export function renderMetaDash(meta: MetaDash): string {
  const rows = meta.attempt_summaries
    .map(
      (attempt) =>
        `<tr><td>${escapeHtml(attempt.run_id)}</td><td>${escapeHtml(attempt.outcome)}</td>` +
        `<td>${escapeHtml(attempt.verdict ?? 'n/a')}</td></tr>`,
    )
    .join('');
  return `
<section class="meta-dash" data-idea="${escapeHtml(meta.idea_id)}">
  <h3>Classification: <span class="classification">${escapeHtml(meta.classification)}</span></h3>
  <table class="attempt-grid"><thead><tr><th>run</th><th>outcome</th><th>verdict</th></tr></thead>
  <tbody>${rows}</tbody></table>
  <p class="narrative">${escapeHtml(meta.narrative)}</p>
</section>`;
}

export function renderGate(gate: GateDecision): string {
  const chip = (label: string, value: boolean) =>
    `<span class="gate gate-${value ? 'pass' : 'fail'}">${label}: ${value ? 'pass' : 'fail'}</span>`;
  return `
<div class="gate-decision" data-discovery="${escapeHtml(gate.discovery_id)}">
  ${chip('external', gate.external_pass)}
  ${chip('internal', gate.internal_pass)}
  ${chip('final', gate.final)}
</div>`;
}
