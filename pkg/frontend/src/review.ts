// Review form model: rubric radio groups map one-to-one onto the engine's
// rating vocabulary. The form only gates submission on completeness; pass
// or fail is decided server-side and displayed verbatim.

import type { RatingSubmission } from './api.js';

export const SOUNDNESS_CHOICES = [
  { value: 'clearly_sound', label: 'Clearly sound: design, implementation, and analysis fully support the claims' },
  { value: 'likely_sound', label: 'Likely sound: evidence generally supports the claims despite minor uncertainties' },
  { value: 'minor_concerns', label: 'Minor concerns: limitations that do not alter the overall conclusions' },
  { value: 'unsound', label: 'Unsound: flaws undermine the claims' },
] as const;

export const NOVELTY_CHOICES = [
  { value: 'highly_novel', label: 'Highly novel: introduces concepts not previously explored' },
  { value: 'incremental_significant', label: 'Incrementally novel (significant variation)' },
  { value: 'incremental_minor', label: 'Incrementally novel (minor variation)' },
  { value: 'not_novel', label: 'Not novel / exists in exact form' },
] as const;

export type SoundnessValue = (typeof SOUNDNESS_CHOICES)[number]['value'];
export type NoveltyValue = (typeof NOVELTY_CHOICES)[number]['value'];

export interface RubricSelection {
  reviewerId: string;
  soundness: SoundnessValue | null;
  novelty: NoveltyValue | null;
  justification: string;
}

export function emptySelection(reviewerId: string): RubricSelection {
  return { reviewerId, soundness: null, novelty: null, justification: '' };
}

/** Both scales must be chosen before a reviewer's rating can be submitted. */
export function selectionComplete(selection: RubricSelection): boolean {
  return selection.soundness !== null && selection.novelty !== null;
}

/** The submit button is enabled only when every reviewer row is complete. */
export function formSubmittable(selections: RubricSelection[]): boolean {
  return selections.length > 0 && selections.every(selectionComplete);
}

export function toRatingSubmission(selection: RubricSelection): RatingSubmission {
  if (!selectionComplete(selection)) {
    throw new Error(`rubric incomplete for reviewer ${selection.reviewerId}`);
  }
  return {
    reviewer_id: selection.reviewerId,
    soundness: selection.soundness as string,
    novelty: selection.novelty as string,
    justification: selection.justification,
  };
}
