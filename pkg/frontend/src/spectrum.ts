/** x-summed structure-factor map of a streamed volume.
 *
 * S(k) = |FFT3(phi - <phi>)|^2 / V and X(k_z, k_y) = sum over k_x of S;
 * the map is what the service-side analysis writes, computed here from a
 * (possibly downsampled) volume frame so the console needs no second data
 * channel. Summing |FFT2 of each x-plane|^2 gives the same X without the
 * third transform (Parseval along k_x), so the cost is nx transforms of
 * an (nz x ny) plane.
 *
 * X_max = max(X) / nx. X[0,0] keeps whatever roundoff the mean removal
 * leaves (the service zeroes the single k = 0 bin; the difference is
 * ~1e-25 relative and invisible to both display and peak counting).
 */

import { fft2d } from "./fft";

export interface SpectrumMap {
  /** row-major (nz rows, ny cols), rows are k_z, columns k_y */
  map: Float64Array;
  ny: number;
  nz: number;
  max: number; // max(map) / nx
}

/** vol is flat with x fastest: vol[(z*ny + y)*nx + x], dims = [nx,ny,nz]. */
export function xSummedSpectrum(
  vol: Float32Array | Float64Array,
  dims: [number, number, number],
): SpectrumMap {
  const [nx, ny, nz] = dims;
  const n = nx * ny * nz;
  if (vol.length !== n) {
    throw new Error(`volume length ${vol.length} does not match ${dims}`);
  }
  let mean = 0;
  for (let i = 0; i < n; i++) mean += vol[i];
  mean /= n;

  const map = new Float64Array(nz * ny);
  const re = new Float64Array(nz * ny);
  const im = new Float64Array(nz * ny);
  for (let x = 0; x < nx; x++) {
    for (let z = 0; z < nz; z++) {
      for (let y = 0; y < ny; y++) {
        re[z * ny + y] = vol[(z * ny + y) * nx + x] - mean;
      }
    }
    im.fill(0);
    fft2d(re, im, nz, ny);
    for (let i = 0; i < map.length; i++) {
      map[i] += re[i] * re[i] + im[i] * im[i];
    }
  }
  const norm = 1 / (ny * nz); // (nx / V) on the plane sums
  let max = 0;
  for (let i = 0; i < map.length; i++) {
    map[i] *= norm;
    if (map[i] > max) max = map[i];
  }
  return { map, ny, nz, max: max / nx };
}

/** Distinct local maxima of the periodic map above min_frac of its peak,
 * plateau-deduplicated the same way the service counts them. */
export function countPeaks(
  spec: SpectrumMap,
  minFrac = 0.1,
): number {
  const { map, ny, nz } = spec;
  let top = 0;
  for (const v of map) if (v > top) top = v;
  if (top <= 0) return 0;
  const floor = top * minFrac;

  // wrap-aware 3x3 maximum filter, then count cells equal to their
  // neighbourhood maximum, collapsing flat plateaus to one count via
  // first-occurrence scan order
  const seen = new Set<number>();
  let count = 0;
  for (let z = 0; z < nz; z++) {
    for (let y = 0; y < ny; y++) {
      const v = map[z * ny + y];
      if (v < floor) continue;
      let isMax = true;
      let plateauFirst = true;
      for (let dz = -1; dz <= 1 && isMax; dz++) {
        for (let dy = -1; dy <= 1; dy++) {
          if (dz === 0 && dy === 0) continue;
          const zz = (z + dz + nz) % nz;
          const yy = (y + dy + ny) % ny;
          const w = map[zz * ny + yy];
          if (w > v) {
            isMax = false;
            break;
          }
          if (w === v && seen.has(zz * ny + yy)) plateauFirst = false;
        }
      }
      if (isMax) {
        seen.add(z * ny + y);
        if (plateauFirst) count++;
      }
    }
  }
  return count;
}
