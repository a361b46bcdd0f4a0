/**
 * Class color convention shared with the server's indexed PNGs:
 * index 0 is unmarked, then cyan, magenta, purple, and spares.
 */

export interface Rgb {
  r: number;
  g: number;
  b: number;
}

export const CLASS_COLORS: Rgb[] = [
  { r: 0, g: 0, b: 0 },
  { r: 0, g: 255, b: 255 },
  { r: 255, g: 0, b: 255 },
  { r: 128, g: 0, b: 255 },
  { r: 255, g: 200, b: 0 },
  { r: 0, g: 255, b: 96 },
  { r: 255, g: 96, b: 0 },
  { r: 96, g: 128, b: 255 },
  { r: 255, g: 255, b: 255 },
];

export function classColor(cls: number): Rgb {
  if (cls >= 0 && cls < CLASS_COLORS.length) return CLASS_COLORS[cls];
  return { r: cls % 256, g: cls % 256, b: cls % 256 };
}

export function classCss(cls: number): string {
  const { r, g, b } = classColor(cls);
  return `rgb(${r}, ${g}, ${b})`;
}

/**
 * Make background pixels transparent in a decoded segmentation overlay.
 * Class 0 decodes to black; everything else keeps the given alpha.
 */
export function applyOverlayAlpha(pixels: Uint8ClampedArray, alpha: number): void {
  const a = Math.round(Math.max(0, Math.min(1, alpha)) * 255);
  for (let i = 0; i < pixels.length; i += 4) {
    const background = pixels[i] === 0 && pixels[i + 1] === 0 && pixels[i + 2] === 0;
    pixels[i + 3] = background ? 0 : a;
  }
}
