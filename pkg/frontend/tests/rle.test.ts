import { describe, expect, it } from 'vitest';
import { areaMatches, decodeRle, encodeRle, maskArea } from '../src/rle.js';

describe('run-length codec', () => {
    it('decodes a leading-false run', () => {
        expect(Array.from(decodeRle([2, 3, 1], 6))).toEqual([0, 0, 1, 1, 1, 0]);
    });

    it('decodes an all-true mask with a zero leading run', () => {
        expect(Array.from(decodeRle([0, 4], 4))).toEqual([1, 1, 1, 1]);
    });

    it('round-trips random masks', () => {
        for (let trial = 0; trial < 200; trial++) {
            const size = 1 + (trial % 96);
            const mask = Uint8Array.from({ length: size },
                () => (Math.random() < 0.4 ? 1 : 0));
            const decoded = decodeRle(encodeRle(mask), size);
            expect(Array.from(decoded)).toEqual(Array.from(mask));
        }
    });

    it('rejects runs that do not fit', () => {
        expect(() => decodeRle([3], 4)).toThrow();
        expect(() => decodeRle([5], 4)).toThrow();
        expect(() => decodeRle([2, -1, 3], 4)).toThrow();
    });

    it('computes area and matches a server-reported fraction within one cell', () => {
        const mask = decodeRle([60, 4], 64);
        expect(maskArea(mask)).toBeCloseTo(4 / 64, 12);
        expect(areaMatches(mask, 4 / 64)).toBe(true);
        expect(areaMatches(mask, 5 / 64)).toBe(true);    // one cell of slack
        expect(areaMatches(mask, 7 / 64)).toBe(false);
    });
});
