// Payload shapes of the explanation service API.

export interface ImagePayload {
    id: string;
    width: number;
    height: number;
    rgb_base64: string;
}

export interface HeatmapPayload {
    width: number;
    height: number;
    gray_base64: string;
}

export interface MaskSide {
    grid_shape: [number, number];
    mask_rle: number[];
    pixel_mask_rle: number[];
    area_fraction: number;
    threshold: number;
    degenerate_factors: string[];
    heatmap: HeatmapPayload;
}

export interface ExplainResponse {
    prediction: number;
    predicted_class: string;
    explained_class: string;
    counter_class: string;
    confidence: { softmax: number; certainty: number; easiness: number };
    score_kind: string;
    area: number;
    query: MaskSide;
    counter_image_id: string;
    counter: MaskSide;
    degenerate: boolean;
}

export interface ExplainRequest {
    image_id: string;
    counter_class: string;
    score_kind: string;
    area: number;
}

export type QuizMode = 'counterfactual' | 'random' | 'full';
export type QuizPhase = 'pre' | 'learn' | 'post' | 'done';

export interface QuizItem {
    phase: QuizPhase;
    index: number;
    total: number;
    image: ImagePayload;
    choices: string[];
}

export interface QuizStartResponse {
    token: string;
    mode: QuizMode;
    classes: string[];
    counts: { pre: number; learn: number; post: number };
    item: QuizItem;
}

export interface QuizAnswerResponse {
    phase: QuizPhase;
    index: number;
    recorded: boolean;
    correct?: boolean;
    true_class?: string;
    explanation?: ExplainResponse;
    next: QuizItem | { phase: 'done' };
}

export interface PhaseSummary {
    answered: number;
    correct: number;
    accuracy: number | null;
}

export interface QuizSummary {
    token: string;
    mode: QuizMode;
    phase: QuizPhase;
    classes: string[];
    pre: PhaseSummary;
    learn: PhaseSummary;
    post: PhaseSummary;
}
