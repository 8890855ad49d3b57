// Pure pixel compositing for explanation views: masked regions keep full
// brightness, everything else is darkened.

export const DARKEN = 0.25;

export function decodeBase64Bytes(b64: string): Uint8Array {
    const bin = atob(b64);
    const out = new Uint8Array(bin.length);
    for (let i = 0; i < bin.length; i++) out[i] = bin.charCodeAt(i);
    return out;
}

/** RGB bytes (row-major, 3 per pixel) to RGBA with out-of-mask darkening. */
export function composeOverlay(rgb: Uint8Array, width: number, height: number,
                               pixelMask: Uint8Array | null,
                               darken: number = DARKEN): Uint8ClampedArray {
    if (rgb.length !== width * height * 3) {
        throw new Error('rgb byte length does not match dimensions');
    }
    if (pixelMask && pixelMask.length !== width * height) {
        throw new Error('mask length does not match dimensions');
    }
    const out = new Uint8ClampedArray(width * height * 4);
    for (let p = 0; p < width * height; p++) {
        const keep = pixelMask ? pixelMask[p] === 1 : true;
        const f = keep ? 1.0 : darken;
        out[p * 4] = rgb[p * 3] * f;
        out[p * 4 + 1] = rgb[p * 3 + 1] * f;
        out[p * 4 + 2] = rgb[p * 3 + 2] * f;
        out[p * 4 + 3] = 255;
    }
    return out;
}

/** Grayscale heatmap bytes to RGBA (hot tint so it reads over the image grid). */
export function heatmapToRgba(gray: Uint8Array): Uint8ClampedArray {
    const out = new Uint8ClampedArray(gray.length * 4);
    for (let i = 0; i < gray.length; i++) {
        const v = gray[i];
        out[i * 4] = v;
        out[i * 4 + 1] = Math.round(v * 0.45);
        out[i * 4 + 2] = Math.round(v * 0.1);
        out[i * 4 + 3] = 255;
    }
    return out;
}
