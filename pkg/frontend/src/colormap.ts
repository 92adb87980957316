/** Colour maps for field slices: f32 values to RGBA bytes.
 *
 * "diverging" is the phi map (blue through white to red, zero-centred),
 * "fire" a black-orange-white intensity ramp for densities and spectra,
 * "grey" the debugging fallback. Maps clamp, and non-finite values render
 * magenta so a NaN in a streamed frame is visible instead of silent.
 */

export type ColormapName = "diverging" | "fire" | "grey";

export const COLORMAPS: ColormapName[] = ["diverging", "fire", "grey"];

function lerp(a: number, b: number, t: number): number {
  return a + (b - a) * t;
}

/** t in [0,1] -> [r,g,b] */
function sample(name: ColormapName, t: number): [number, number, number] {
  switch (name) {
    case "grey": {
      const v = Math.round(255 * t);
      return [v, v, v];
    }
    case "fire": {
      // black -> red -> orange -> white
      if (t < 1 / 3) {
        const u = 3 * t;
        return [Math.round(200 * u), 0, 0];
      }
      if (t < 2 / 3) {
        const u = 3 * t - 1;
        return [Math.round(lerp(200, 255, u)), Math.round(150 * u), 0];
      }
      const u = 3 * t - 2;
      return [255, Math.round(lerp(150, 255, u)), Math.round(255 * u)];
    }
    case "diverging": {
      // deep blue -> white -> deep red
      if (t < 0.5) {
        const u = 2 * t;
        return [
          Math.round(lerp(40, 255, u)),
          Math.round(lerp(60, 255, u)),
          Math.round(lerp(180, 255, u)),
        ];
      }
      const u = 2 * t - 1;
      return [
        255,
        Math.round(lerp(255, 60, u)),
        Math.round(lerp(255, 50, u)),
      ];
    }
  }
}

export interface Scale {
  lo: number;
  hi: number;
}

/** Data range for display. Diverging maps centre on zero. */
export function autoScale(
  data: Float32Array | Float64Array,
  name: ColormapName,
): Scale {
  let lo = Infinity;
  let hi = -Infinity;
  for (const v of data) {
    if (!Number.isFinite(v)) continue;
    if (v < lo) lo = v;
    if (v > hi) hi = v;
  }
  if (lo > hi) return { lo: 0, hi: 1 }; // all NaN
  if (name === "diverging") {
    const a = Math.max(Math.abs(lo), Math.abs(hi), 1e-30);
    return { lo: -a, hi: a };
  }
  if (hi - lo < 1e-30) hi = lo + 1e-30;
  return { lo, hi };
}

/** Fill an RGBA buffer (4 bytes per value) from data under the scale. */
export function mapToRgba(
  data: Float32Array | Float64Array,
  name: ColormapName,
  scale: Scale,
  out?: Uint8ClampedArray,
): Uint8ClampedArray {
  const rgba = out ?? new Uint8ClampedArray(4 * data.length);
  const span = scale.hi - scale.lo;
  for (let i = 0; i < data.length; i++) {
    const v = data[i];
    const j = 4 * i;
    if (!Number.isFinite(v)) {
      rgba[j] = 255;
      rgba[j + 1] = 0;
      rgba[j + 2] = 255;
      rgba[j + 3] = 255;
      continue;
    }
    const t = Math.min(1, Math.max(0, (v - scale.lo) / span));
    const [r, g, b] = sample(name, t);
    rgba[j] = r;
    rgba[j + 1] = g;
    rgba[j + 2] = b;
    rgba[j + 3] = 255;
  }
  return rgba;
}

/** Burn a mask into an already-mapped RGBA buffer: cells where the mask
 * exceeds the threshold go toward green, the overlay the defect view uses. */
export function overlayMask(
  rgba: Uint8ClampedArray,
  mask: Float32Array | Float64Array,
  threshold = 0.5,
  alpha = 0.55,
): void {
  const n = Math.min(rgba.length >> 2, mask.length);
  for (let i = 0; i < n; i++) {
    if (!(mask[i] > threshold)) continue;
    const j = 4 * i;
    rgba[j] = Math.round(lerp(rgba[j], 40, alpha));
    rgba[j + 1] = Math.round(lerp(rgba[j + 1], 255, alpha));
    rgba[j + 2] = Math.round(lerp(rgba[j + 2], 80, alpha));
  }
}
