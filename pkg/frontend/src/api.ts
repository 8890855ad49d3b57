import {
    ExplainRequest,
    ExplainResponse,
    ImagePayload,
    QuizAnswerResponse,
    QuizMode,
    QuizStartResponse,
    QuizSummary,
} from './types.js';

export class ApiError extends Error {
    constructor(public status: number, message: string) {
        super(message);
    }
}

async function parse<T>(res: Response): Promise<T> {
    if (!res.ok) {
        let detail = res.statusText;
        try {
            const body = await res.json();
            if (body && body.detail) detail = String(body.detail);
        } catch {
            // non-JSON error body; keep the status text
        }
        throw new ApiError(res.status, detail);
    }
    return res.json() as Promise<T>;
}

export class ApiClient {
    constructor(private base: string = '', private fetcher: typeof fetch = fetch) {}

    private get(path: string) {
        return this.fetcher(`${this.base}${path}`);
    }

    private post(path: string, body: unknown) {
        return this.fetcher(`${this.base}${path}`, {
            method: 'POST',
            headers: { 'Content-Type': 'application/json' },
            body: JSON.stringify(body),
        });
    }

    async classes(): Promise<string[]> {
        const payload = await parse<{ classes: string[] }>(await this.get('/api/classes'));
        return payload.classes;
    }

    async images(className: string): Promise<string[]> {
        const payload = await parse<{ images: string[] }>(
            await this.get(`/api/images?class=${encodeURIComponent(className)}`));
        return payload.images;
    }

    async image(id: string): Promise<ImagePayload> {
        return parse(await this.get(`/api/image/${encodeURIComponent(id)}`));
    }

    async explain(req: ExplainRequest): Promise<ExplainResponse> {
        return parse(await this.post('/api/explain', req));
    }

    async quizStart(mode: QuizMode, seed?: number,
                    classes?: string[]): Promise<QuizStartResponse> {
        const body: Record<string, unknown> = { mode };
        if (seed !== undefined) body.seed = seed;
        if (classes) body.classes = classes;
        return parse(await this.post('/api/quiz/start', body));
    }

    async quizAnswer(token: string, answer: string): Promise<QuizAnswerResponse> {
        return parse(await this.post('/api/quiz/answer', { token, answer }));
    }

    async quizSummary(token: string): Promise<QuizSummary> {
        return parse(await this.get(`/api/quiz/summary?token=${encodeURIComponent(token)}`));
    }
}
