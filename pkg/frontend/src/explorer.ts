// Explorer view state: selections, the last explanation, and an in-flight
// request guard. The UI layer owns the DOM; this module owns the rules.

import { ExplainResponse } from './types.js';

export interface ExplorerState {
    classes: string[];
    selectedClass: string | null;
    images: string[];
    selectedImage: string | null;
    counterClass: string | null;
    scoreKind: string;
    area: number;
    response: ExplainResponse | null;
    explainedImage: string | null;   // image the current response belongs to
    loading: boolean;
    error: string | null;
    requestSeq: number;              // last issued request id
    appliedSeq: number;              // last applied response id
}

export function createExplorerState(): ExplorerState {
    return {
        classes: [],
        selectedClass: null,
        images: [],
        selectedImage: null,
        counterClass: null,
        scoreKind: 'easiness',
        area: 4 / 64,
        response: null,
        explainedImage: null,
        loading: false,
        error: null,
        requestSeq: 0,
        appliedSeq: 0,
    };
}

export interface ExplainCheck {
    ok: boolean;
    reason?: string;
}

/** The counter class must differ from the model's prediction; the prediction
 * is known from the previous response for the same image. */
export function canRequestExplain(state: ExplorerState): ExplainCheck {
    if (!state.selectedImage) return { ok: false, reason: 'pick an image first' };
    if (!state.counterClass) return { ok: false, reason: 'pick a counter class' };
    if (state.response
        && state.selectedImage === state.explainedImage
        && state.counterClass === state.response.predicted_class) {
        return { ok: false, reason: 'counter class equals the predicted class' };
    }
    if (!(state.area > 0 && state.area <= 1)) return { ok: false, reason: 'bad area' };
    return { ok: true };
}

/** Mark a new in-flight request; returns its sequence number. */
export function beginExplain(state: ExplorerState): number {
    state.requestSeq += 1;
    state.loading = true;
    state.error = null;
    return state.requestSeq;
}

/** Apply a response unless a newer request has been issued since. */
export function applyExplainResult(state: ExplorerState, seq: number,
                                   response: ExplainResponse): boolean {
    if (seq < state.requestSeq) return false;   // stale response, discard
    state.appliedSeq = seq;
    state.response = response;
    state.explainedImage = state.selectedImage;
    state.loading = false;
    return true;
}

export function applyExplainError(state: ExplorerState, seq: number,
                                  message: string): boolean {
    if (seq < state.requestSeq) return false;
    state.appliedSeq = seq;
    state.loading = false;
    state.error = message;     // surfaced, never blocking
    return true;
}
