// Run-length mask codec matching the server: alternating run lengths over
// the row-major flattened mask, starting with the leading false run.

export function decodeRle(runs: number[], size: number): Uint8Array {
    const mask = new Uint8Array(size);
    let pos = 0;
    let value = 0;
    for (const run of runs) {
        if (run < 0 || pos + run > size) {
            throw new Error('run-length data does not fit the mask size');
        }
        if (value) mask.fill(1, pos, pos + run);
        pos += run;
        value ^= 1;
    }
    if (pos !== size) {
        throw new Error('run-length data does not fit the mask size');
    }
    return mask;
}

export function encodeRle(mask: ArrayLike<number>): number[] {
    const runs: number[] = [];
    let current = 0;
    let count = 0;
    for (let i = 0; i < mask.length; i++) {
        const bit = mask[i] ? 1 : 0;
        if (bit === current) {
            count += 1;
        } else {
            runs.push(count);
            current = bit;
            count = 1;
        }
    }
    runs.push(count);
    return runs;
}

export function maskArea(mask: ArrayLike<number>): number {
    let on = 0;
    for (let i = 0; i < mask.length; i++) if (mask[i]) on += 1;
    return on / mask.length;
}

/** True when the decoded area matches the server-reported fraction within one cell. */
export function areaMatches(mask: ArrayLike<number>, reported: number): boolean {
    return Math.abs(maskArea(mask) - reported) <= 1 / mask.length + 1e-12;
}
