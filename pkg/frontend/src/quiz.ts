// Client-side quiz session: mirrors the server's three-phase flow, enforces
// phase order locally, and persists the token so a refresh resumes the run.

import { ApiClient } from './api.js';
import {
    QuizAnswerResponse,
    QuizItem,
    QuizMode,
    QuizPhase,
    QuizSummary,
} from './types.js';

export const TOKEN_KEY = 'cfexplain.quiz.token';
export const ITEM_KEY = 'cfexplain.quiz.item';

export interface QuizState {
    token: string | null;
    mode: QuizMode;
    classes: string[];
    phase: QuizPhase | null;
    item: QuizItem | null;
    lastAnswer: QuizAnswerResponse | null;
    summary: QuizSummary | null;
    error: string | null;
}

export function createQuizState(): QuizState {
    return {
        token: null,
        mode: 'counterfactual',
        classes: [],
        phase: null,
        item: null,
        lastAnswer: null,
        summary: null,
        error: null,
    };
}

export interface TokenStore {
    getItem(key: string): string | null;
    setItem(key: string, value: string): void;
    removeItem(key: string): void;
}

export async function startQuiz(state: QuizState, api: ApiClient, mode: QuizMode,
                                store: TokenStore, seed?: number): Promise<void> {
    const started = await api.quizStart(mode, seed);
    state.token = started.token;
    state.mode = started.mode;
    state.classes = started.classes;
    state.phase = started.item.phase;
    state.item = started.item;
    state.lastAnswer = null;
    state.summary = null;
    state.error = null;
    store.setItem(TOKEN_KEY, started.token);
    store.setItem(ITEM_KEY, JSON.stringify(started.item));
}

/** Answers the current item; rejects out-of-phase choices locally. */
export async function answerCurrent(state: QuizState, api: ApiClient,
                                    answer: string): Promise<QuizAnswerResponse> {
    if (!state.token || !state.item || state.phase === 'done') {
        throw new Error('no active quiz item');
    }
    if (!state.item.choices.includes(answer)) {
        throw new Error(`answer ${answer} not allowed in the ${state.phase} phase`);
    }
    const resp = await api.quizAnswer(state.token, answer);
    state.lastAnswer = resp;
    const next = resp.next as QuizItem | { phase: 'done' };
    state.phase = next.phase;
    state.item = next.phase === 'done' ? null : (next as QuizItem);
    return resp;
}

/** Persist the pending item so a refreshed client can keep going (the API
 * exposes no current-item endpoint; the server still owns phase truth). */
export function persistItem(state: QuizState, store: TokenStore): void {
    if (state.item) {
        store.setItem(ITEM_KEY, JSON.stringify(state.item));
    } else {
        store.removeItem(ITEM_KEY);
    }
}

export async function loadSummary(state: QuizState, api: ApiClient): Promise<QuizSummary> {
    if (!state.token) throw new Error('no quiz session');
    const summary = await api.quizSummary(state.token);
    state.summary = summary;
    return summary;
}

/** Restore phase from a persisted token (refresh mid-session). */
export async function resumeQuiz(state: QuizState, api: ApiClient,
                                 store: TokenStore): Promise<boolean> {
    const token = store.getItem(TOKEN_KEY);
    if (!token) return false;
    try {
        const summary = await api.quizSummary(token);
        state.token = token;
        state.mode = summary.mode;
        state.classes = summary.classes;
        state.phase = summary.phase;
        state.summary = summary;
        state.item = null;
        const snapshot = store.getItem(ITEM_KEY);
        if (snapshot && summary.phase !== 'done') {
            const item = JSON.parse(snapshot) as QuizItem;
            if (item.phase === summary.phase) state.item = item;
        }
        return true;
    } catch {
        store.removeItem(TOKEN_KEY);
        store.removeItem(ITEM_KEY);
        return false;
    }
}

/** Exact accuracy from the server tallies: correct answers over the 20
 * test items of the phase. */
export function phaseAccuracy(summary: QuizSummary, phase: 'pre' | 'post'): number {
    return summary[phase].correct / 20;
}

/** Post-test items must carry no visual aids. */
export function showsExplanation(phase: QuizPhase | null): boolean {
    return phase === 'learn';
}
