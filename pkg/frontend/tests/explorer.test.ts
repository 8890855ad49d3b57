import { describe, expect, it } from 'vitest';
import {
    applyExplainError,
    applyExplainResult,
    beginExplain,
    canRequestExplain,
    createExplorerState,
} from '../src/explorer.js';
import { ExplainResponse } from '../src/types.js';

function fakeResponse(predicted: string, counter: string): ExplainResponse {
    const side = {
        grid_shape: [8, 8] as [number, number],
        mask_rle: [63, 1],
        pixel_mask_rle: [1008, 16],
        area_fraction: 1 / 64,
        threshold: 0.5,
        degenerate_factors: [],
        heatmap: { width: 8, height: 8, gray_base64: '' },
    };
    return {
        prediction: 0,
        predicted_class: predicted,
        explained_class: predicted,
        counter_class: counter,
        confidence: { softmax: 0.9, certainty: 0.8, easiness: 0.95 },
        score_kind: 'easiness',
        area: 1 / 64,
        query: side,
        counter_image_id: 'img_00009',
        counter: { ...side },
        degenerate: false,
    };
}

function readyState() {
    const state = createExplorerState();
    state.classes = ['alpha', 'beta'];
    state.selectedClass = 'alpha';
    state.selectedImage = 'img_00001';
    state.counterClass = 'beta';
    return state;
}

describe('explorer state', () => {
    it('requires an image and counter class', () => {
        const state = createExplorerState();
        expect(canRequestExplain(state).ok).toBe(false);
        expect(canRequestExplain(readyState()).ok).toBe(true);
    });

    it('blocks a counter class equal to the known prediction', () => {
        const state = readyState();
        const seq = beginExplain(state);
        applyExplainResult(state, seq, fakeResponse('alpha', 'beta'));
        state.counterClass = 'alpha';   // equals the prediction for this image
        const check = canRequestExplain(state);
        expect(check.ok).toBe(false);
        expect(check.reason).toMatch(/predicted/);
        // a different image clears the constraint (prediction unknown there)
        state.selectedImage = 'img_00002';
        expect(canRequestExplain(state).ok).toBe(true);
    });

    it('discards stale responses by sequence number', () => {
        const state = readyState();
        const first = beginExplain(state);
        const second = beginExplain(state);
        const stale = applyExplainResult(state, first, fakeResponse('alpha', 'beta'));
        expect(stale).toBe(false);
        expect(state.response).toBeNull();
        const fresh = applyExplainResult(state, second, fakeResponse('alpha', 'beta'));
        expect(fresh).toBe(true);
        expect(state.loading).toBe(false);
        expect(state.response?.predicted_class).toBe('alpha');
    });

    it('surfaces errors without blocking later requests', () => {
        const state = readyState();
        const seq = beginExplain(state);
        expect(applyExplainError(state, seq, 'boom')).toBe(true);
        expect(state.error).toBe('boom');
        expect(state.loading).toBe(false);
        expect(canRequestExplain(state).ok).toBe(true);
        // stale errors are dropped too
        const a = beginExplain(state);
        beginExplain(state);
        expect(applyExplainError(state, a, 'stale')).toBe(false);
    });
});
