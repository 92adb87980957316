/** Canvas drawing for slice frames and spectrum maps. Data stays at
 * lattice resolution in the backing canvas; CSS scales it up with
 * image-rendering: pixelated, so a 64x64 slice still reads as pixels. */

import {
  ColormapName,
  Scale,
  autoScale,
  mapToRgba,
  overlayMask,
} from "./colormap";

export interface DrawOptions {
  colormap: ColormapName;
  /** fixed scale; omit for per-frame autoscale */
  scale?: Scale;
  /** optional mask drawn over the image (same shape) */
  mask?: Float32Array | Float64Array;
  maskThreshold?: number;
}

/** Draw a row-major (h rows, w cols) array onto the canvas. Returns the
 * scale actually used so the caller can label it. */
export function drawField(
  canvas: HTMLCanvasElement,
  data: Float32Array | Float64Array,
  h: number,
  w: number,
  opts: DrawOptions,
): Scale {
  if (canvas.width !== w || canvas.height !== h) {
    canvas.width = w;
    canvas.height = h;
  }
  const ctx = canvas.getContext("2d");
  if (ctx === null) throw new Error("2d canvas unavailable");
  const scale = opts.scale ?? autoScale(data, opts.colormap);
  const image = ctx.createImageData(w, h);
  mapToRgba(data, opts.colormap, scale, image.data);
  if (opts.mask !== undefined) {
    overlayMask(image.data, opts.mask, opts.maskThreshold ?? 0.5);
  }
  ctx.putImageData(image, 0, 0);
  return scale;
}

/** The spectrum map is drawn fftshift-ed so k = 0 sits in the middle and
 * the Bragg spots form the familiar centred pattern. Log intensity. */
export function drawSpectrum(
  canvas: HTMLCanvasElement,
  map: Float64Array,
  nzRows: number,
  nyCols: number,
): void {
  const shifted = new Float64Array(map.length);
  const hz = nzRows >> 1;
  const hy = nyCols >> 1;
  for (let z = 0; z < nzRows; z++) {
    for (let y = 0; y < nyCols; y++) {
      shifted[((z + hz) % nzRows) * nyCols + ((y + hy) % nyCols)] =
        Math.log10(1 + map[z * nyCols + y]);
    }
  }
  drawField(canvas, shifted, nzRows, nyCols, { colormap: "fire" });
}
