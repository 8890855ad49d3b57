import { describe, expect, it, vi } from 'vitest';
import { ApiClient, ApiError } from '../src/api.js';

function jsonResponse(payload: unknown, status = 200): Response {
    return new Response(JSON.stringify(payload), {
        status,
        headers: { 'Content-Type': 'application/json' },
    });
}

describe('api client', () => {
    it('requests the expected endpoints', async () => {
        const fetcher = vi.fn(async (url: string) => {
            if (url === '/api/classes') return jsonResponse({ classes: ['a', 'b'], count: 2 });
            if (url === '/api/images?class=a') return jsonResponse({ class: 'a', images: ['img_1'] });
            if (url === '/api/image/img_1') {
                return jsonResponse({ id: 'img_1', width: 2, height: 2, rgb_base64: '' });
            }
            return jsonResponse({ detail: 'missing' }, 404);
        });
        const api = new ApiClient('', fetcher as unknown as typeof fetch);
        expect(await api.classes()).toEqual(['a', 'b']);
        expect(await api.images('a')).toEqual(['img_1']);
        expect((await api.image('img_1')).id).toBe('img_1');
        expect(fetcher).toHaveBeenCalledTimes(3);
    });

    it('posts explain requests as JSON', async () => {
        const fetcher = vi.fn(async (_url: string, init?: RequestInit) => {
            const body = JSON.parse(String(init!.body));
            expect(body).toEqual({
                image_id: 'img_1', counter_class: 'b',
                score_kind: 'easiness', area: 0.0625,
            });
            expect((init!.headers as Record<string, string>)['Content-Type'])
                .toBe('application/json');
            return jsonResponse({ prediction: 0 });
        });
        const api = new ApiClient('', fetcher as unknown as typeof fetch);
        await api.explain({ image_id: 'img_1', counter_class: 'b',
                            score_kind: 'easiness', area: 0.0625 });
        expect(fetcher).toHaveBeenCalledOnce();
    });

    it('raises ApiError with the server detail on failures', async () => {
        const fetcher = vi.fn(async () =>
            jsonResponse({ detail: 'counter class equals the predicted class' }, 400));
        const api = new ApiClient('', fetcher as unknown as typeof fetch);
        const err = await api.explain({ image_id: 'x', counter_class: 'y',
                                        score_kind: 'easiness', area: 0.1 })
            .catch((e: unknown) => e);
        expect(err).toBeInstanceOf(ApiError);
        expect((err as ApiError).status).toBe(400);
        expect((err as ApiError).message).toMatch(/predicted class/);
    });

    it('handles non-JSON error bodies', async () => {
        const fetcher = vi.fn(async () => new Response('<html>oops</html>',
                                                       { status: 502, statusText: 'Bad Gateway' }));
        const api = new ApiClient('', fetcher as unknown as typeof fetch);
        const err = await api.classes().catch((e: unknown) => e);
        expect(err).toBeInstanceOf(ApiError);
        expect((err as ApiError).status).toBe(502);
    });
});
