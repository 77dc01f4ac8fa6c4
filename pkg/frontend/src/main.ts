// SPA wiring: tabs for triage, runs, results, meta, review. All state is
// server state; the only client-side memory is in-progress form drafts.

import { ApiClient } from './api.js';
import { RunBoard } from './board.js';
import {
  emptySelection,
  formSubmittable,
  NOVELTY_CHOICES,
  RubricSelection,
  SOUNDNESS_CHOICES,
  toRatingSubmission,
} from './review.js';
import {
  renderGate,
  renderIdeaCard,
  renderMetaDash,
  renderResults,
  renderRunRow,
} from './views.js';

const POLL_MS = 1500;

function el(id: string): HTMLElement {
  const node = document.getElementById(id);
  if (!node) throw new Error(`missing element #${id}`);
  return node;
}

export function startConsole(baseUrl: string, token?: string): void {
  const api = new ApiClient(baseUrl, token);
  const board = new RunBoard();
  const watched = new Set<string>();

  async function refreshTriage(): Promise<void> {
    const queue = await api.triageQueue();
    el('triage').innerHTML = queue.map(renderIdeaCard).join('\n') || '<p>queue is empty</p>';
    el('triage').querySelectorAll('.idea-card').forEach((card) => {
      const ideaId = card.getAttribute('data-idea')!;
      card.querySelectorAll('button[data-rating]').forEach((button) => {
        button.addEventListener('click', async (event: Event) => {
          event.preventDefault();
          const form = card.querySelector('.annotation-form')!;
          const notes = (form.querySelector('[name=notes]') as HTMLTextAreaElement).value;
          const conditioning = (
            form.querySelector('[name=conditioning_text]') as HTMLTextAreaElement
          ).value;
          await api.submitAnnotation(ideaId, {
            rating: button.getAttribute('data-rating') as never,
            notes,
            conditioning_text: conditioning,
          });
          await refreshTriage();
        });
      });
    });
  }

  async function pollRuns(): Promise<void> {
    const runs = await api.listRuns();
    for (const status of runs) watched.add(status.run_id);
    await Promise.all(
      [...watched].map(async (runId) => {
        const ticket = board.beginPoll(runId);
        const status = await api.runStatus(runId);
        board.apply(ticket, status);
      }),
    );
    el('runs').innerHTML =
      '<table><thead><tr><th>run</th><th>iter</th><th>tier</th><th>cost</th><th>state</th><th>log tail</th></tr></thead><tbody>' +
      board.allRows().map(renderRunRow).join('\n') +
      '</tbody></table>';
  }

  async function showResults(runId: string): Promise<void> {
    const summary = await api.runSummary(runId);
    el('results').innerHTML = renderResults(summary, `${baseUrl}/api/v1/runs/${runId}/report`);
  }

  async function showMeta(ideaId: string): Promise<void> {
    const meta = await api.getMeta(ideaId);
    el('meta').innerHTML = renderMetaDash(meta);
  }

  function reviewForm(discoveryId: string): void {
    const selections: RubricSelection[] = [1, 2, 3].map((n) => emptySelection(`reviewer-${n}`));
    const container = el('review');

    function renderForm(): void {
      const rows = selections
        .map((selection, index) => {
          const soundness = SOUNDNESS_CHOICES.map(
            (choice) =>
              `<label><input type="radio" name="s${index}" value="${choice.value}" ${
                selection.soundness === choice.value ? 'checked' : ''
              }/> ${choice.label}</label>`,
          ).join('<br/>');
          const novelty = NOVELTY_CHOICES.map(
            (choice) =>
              `<label><input type="radio" name="n${index}" value="${choice.value}" ${
                selection.novelty === choice.value ? 'checked' : ''
              }/> ${choice.label}</label>`,
          ).join('<br/>');
          return `<fieldset data-reviewer="${index}"><legend>${selection.reviewerId}</legend>
            <div class="scale">${soundness}</div><div class="scale">${novelty}</div>
            <textarea name="j${index}" placeholder="justification">${selection.justification}</textarea>
            </fieldset>`;
        })
        .join('\n');
      container.innerHTML = `${rows}
        <button id="submit-ratings" ${formSubmittable(selections) ? '' : 'disabled'}>Submit ratings</button>
        <button id="veto-toggle">Toggle internal veto</button>
        <div id="gate-view"></div>`;

      container.querySelectorAll('input[type=radio]').forEach((input) => {
        input.addEventListener('change', (event) => {
          const target = event.target as HTMLInputElement;
          const index = Number(target.name.slice(1));
          if (target.name.startsWith('s')) selections[index].soundness = target.value as never;
          else selections[index].novelty = target.value as never;
          renderForm();
        });
      });
      el('submit-ratings').addEventListener('click', async () => {
        const gate = await api.submitRatings(discoveryId, selections.map(toRatingSubmission));
        el('gate-view').innerHTML = renderGate(gate);
      });
      el('veto-toggle').addEventListener('click', async () => {
        const current = await api.getGate(discoveryId);
        const gate = await api.submitVeto(discoveryId, !current.internal_pass);
        el('gate-view').innerHTML = renderGate(gate);
      });
    }

    renderForm();
  }

  void refreshTriage();
  setInterval(() => void pollRuns(), POLL_MS);

  // Expose navigation hooks for the page shell.
  (window as unknown as Record<string, unknown>).labloopConsole = {
    refreshTriage,
    pollRuns,
    showResults,
    showMeta,
    reviewForm,
  };
}
