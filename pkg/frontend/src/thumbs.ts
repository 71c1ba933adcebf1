const THUMB_SIDE = 8;
const DISPLAY_SIDE = 64;

function decodeBase64Bytes(b64: string): Uint8Array {
    const binary = atob(b64);
    const bytes = new Uint8Array(binary.length);
    for (let i = 0; i < binary.length; i++) {
        bytes[i] = binary.charCodeAt(i);
    }
    return bytes;
}

/** Render an 8x8 RGB preview, upscaled without smoothing. Falls back to a
 *  solid swatch of the mean color where 2D canvas is unavailable (jsdom). */
export function renderThumbnail(thumbnailB64: string): HTMLElement {
    const bytes = decodeBase64Bytes(thumbnailB64);
    const canvas = document.createElement("canvas");
    canvas.width = DISPLAY_SIDE;
    canvas.height = DISPLAY_SIDE;
    canvas.className = "thumb";
    let ctx: CanvasRenderingContext2D | null = null;
    try {
        ctx = canvas.getContext("2d");
    } catch {
        ctx = null;
    }
    if (ctx === null) {
        let r = 0, g = 0, b = 0;
        const pixels = bytes.length / 3;
        for (let i = 0; i < bytes.length; i += 3) {
            r += bytes[i];
            g += bytes[i + 1];
            b += bytes[i + 2];
        }
        const div = document.createElement("div");
        div.className = "thumb thumb-fallback";
        div.style.width = `${DISPLAY_SIDE}px`;
        div.style.height = `${DISPLAY_SIDE}px`;
        div.style.backgroundColor =
            `rgb(${Math.round(r / pixels)}, ${Math.round(g / pixels)}, ${Math.round(b / pixels)})`;
        return div;
    }
    const scale = DISPLAY_SIDE / THUMB_SIDE;
    for (let y = 0; y < THUMB_SIDE; y++) {
        for (let x = 0; x < THUMB_SIDE; x++) {
            const o = (y * THUMB_SIDE + x) * 3;
            ctx.fillStyle = `rgb(${bytes[o]}, ${bytes[o + 1]}, ${bytes[o + 2]})`;
            ctx.fillRect(x * scale, y * scale, scale, scale);
        }
    }
    return canvas;
}
