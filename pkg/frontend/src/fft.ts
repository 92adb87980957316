/** Small complex FFT, enough for structure-factor maps of lattice volumes.
 * Power-of-two lengths take the iterative radix-2 path; anything else
 * falls back to a direct DFT (lattice edges are powers of two in practice,
 * the fallback just keeps odd sizes correct). Unnormalised forward
 * transform, matching numpy's convention. */

export function isPow2(n: number): boolean {
  return n > 0 && (n & (n - 1)) === 0;
}

/** In-place forward FFT of length-n complex data, n a power of two. */
export function fftRadix2(re: Float64Array, im: Float64Array): void {
  const n = re.length;
  // bit-reversal permutation
  for (let i = 1, j = 0; i < n; i++) {
    let bit = n >> 1;
    for (; j & bit; bit >>= 1) j ^= bit;
    j ^= bit;
    if (i < j) {
      [re[i], re[j]] = [re[j], re[i]];
      [im[i], im[j]] = [im[j], im[i]];
    }
  }
  for (let len = 2; len <= n; len <<= 1) {
    const ang = (-2 * Math.PI) / len;
    const wRe = Math.cos(ang);
    const wIm = Math.sin(ang);
    for (let i = 0; i < n; i += len) {
      let curRe = 1;
      let curIm = 0;
      for (let k = 0; k < len >> 1; k++) {
        const a = i + k;
        const b = i + k + (len >> 1);
        const tRe = re[b] * curRe - im[b] * curIm;
        const tIm = re[b] * curIm + im[b] * curRe;
        re[b] = re[a] - tRe;
        im[b] = im[a] - tIm;
        re[a] += tRe;
        im[a] += tIm;
        const nextRe = curRe * wRe - curIm * wIm;
        curIm = curRe * wIm + curIm * wRe;
        curRe = nextRe;
      }
    }
  }
}

/** Direct O(n^2) DFT for lengths the radix-2 path cannot take. */
export function dftNaive(re: Float64Array, im: Float64Array): void {
  const n = re.length;
  const outRe = new Float64Array(n);
  const outIm = new Float64Array(n);
  for (let k = 0; k < n; k++) {
    let sumRe = 0;
    let sumIm = 0;
    for (let t = 0; t < n; t++) {
      const ang = (-2 * Math.PI * k * t) / n;
      const c = Math.cos(ang);
      const s = Math.sin(ang);
      sumRe += re[t] * c - im[t] * s;
      sumIm += re[t] * s + im[t] * c;
    }
    outRe[k] = sumRe;
    outIm[k] = sumIm;
  }
  re.set(outRe);
  im.set(outIm);
}

export function fft1d(re: Float64Array, im: Float64Array): void {
  if (isPow2(re.length)) fftRadix2(re, im);
  else dftNaive(re, im);
}

/** In-place 2-d FFT of an h-rows by w-cols complex matrix (row-major). */
export function fft2d(
  re: Float64Array,
  im: Float64Array,
  h: number,
  w: number,
): void {
  const rowRe = new Float64Array(w);
  const rowIm = new Float64Array(w);
  for (let r = 0; r < h; r++) {
    rowRe.set(re.subarray(r * w, (r + 1) * w));
    rowIm.set(im.subarray(r * w, (r + 1) * w));
    fft1d(rowRe, rowIm);
    re.set(rowRe, r * w);
    im.set(rowIm, r * w);
  }
  const colRe = new Float64Array(h);
  const colIm = new Float64Array(h);
  for (let c = 0; c < w; c++) {
    for (let r = 0; r < h; r++) {
      colRe[r] = re[r * w + c];
      colIm[r] = im[r * w + c];
    }
    fft1d(colRe, colIm);
    for (let r = 0; r < h; r++) {
      re[r * w + c] = colRe[r];
      im[r * w + c] = colIm[r];
    }
  }
}
