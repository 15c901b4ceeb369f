/** Built-in procedural image classification set.
 *
 * Four grayscale pattern classes generated deterministically at 32x32 and
 * box-resized to the requested fidelity. Patterns use coarse scales (period
 * at least 8 pixels) so class structure survives downsampling to 8x8.
 */
import { Rng } from "./rng";

export const BASE_SIDE = 32;
export const N_CLASSES = 4;
export const CLASS_NAMES = ["h-stripes", "v-stripes", "disc", "checker"];

export interface Dataset {
  images: Float64Array[]; // BASE_SIDE * BASE_SIDE each, values in [0, 1]
  labels: number[];
}

function blank(rng: Rng): { img: Float64Array; bg: number; fg: number } {
  const bg = 0.1 + 0.2 * rng.next();
  const fg = 0.6 + 0.4 * rng.next();
  const img = new Float64Array(BASE_SIDE * BASE_SIDE).fill(bg);
  return { img, bg, fg };
}

function paint(img: Float64Array, fg: number, on: (x: number, y: number) => boolean): void {
  for (let y = 0; y < BASE_SIDE; y++) {
    for (let x = 0; x < BASE_SIDE; x++) {
      if (on(x, y)) img[y * BASE_SIDE + x] = fg;
    }
  }
}

function drawClass(label: number, rng: Rng): Float64Array {
  const { img, fg } = blank(rng);
  const period = rng.next() < 0.5 ? 8 : 16;
  const phase = rng.int(period);
  const half = period / 2;
  if (label === 0) {
    paint(img, fg, (_x, y) => (y + phase) % period < half);
  } else if (label === 1) {
    paint(img, fg, (x, _y) => (x + phase) % period < half);
  } else if (label === 2) {
    const r = 7 + 5 * rng.next();
    const cx = 16 + (rng.int(9) - 4);
    const cy = 16 + (rng.int(9) - 4);
    paint(img, fg, (x, y) => (x - cx) ** 2 + (y - cy) ** 2 <= r * r);
  } else {
    const parity = rng.int(2);
    paint(
      img,
      fg,
      (x, y) =>
        ((Math.floor((x + phase) / half) + Math.floor((y + phase) / half)) % 2) === parity,
    );
  }
  for (let i = 0; i < img.length; i++) {
    const v = img[i] + 0.1 * rng.normal();
    img[i] = v < 0 ? 0 : v > 1 ? 1 : v;
  }
  return img;
}

export function generateDataset(seed: number, perClass: number): Dataset {
  const rng = new Rng(seed);
  const images: Float64Array[] = [];
  const labels: number[] = [];
  for (let label = 0; label < N_CLASSES; label++) {
    for (let i = 0; i < perClass; i++) {
      images.push(drawClass(label, rng));
      labels.push(label);
    }
  }
  return { images, labels };
}

/** 70/30 split performed independently within each class. */
export function stratifiedSplit(
  labels: number[],
  trainFraction: number,
  rng: Rng,
): { train: number[]; val: number[] } {
  const train: number[] = [];
  const val: number[] = [];
  for (let label = 0; label < N_CLASSES; label++) {
    const members: number[] = [];
    for (let i = 0; i < labels.length; i++) if (labels[i] === label) members.push(i);
    rng.shuffle(members);
    const cut = Math.round(trainFraction * members.length);
    train.push(...members.slice(0, cut));
    val.push(...members.slice(cut));
  }
  return { train, val };
}

/** Area-average resize from BASE_SIDE to side x side. */
export function resize(img: Float64Array, side: number): Float64Array {
  if (side === BASE_SIDE) return img.slice();
  const out = new Float64Array(side * side);
  const scale = BASE_SIDE / side;
  for (let oy = 0; oy < side; oy++) {
    const y0 = Math.floor(oy * scale);
    const y1 = Math.max(y0 + 1, Math.floor((oy + 1) * scale));
    for (let ox = 0; ox < side; ox++) {
      const x0 = Math.floor(ox * scale);
      const x1 = Math.max(x0 + 1, Math.floor((ox + 1) * scale));
      let sum = 0;
      for (let y = y0; y < y1; y++) {
        for (let x = x0; x < x1; x++) sum += img[y * BASE_SIDE + x];
      }
      out[oy * side + ox] = sum / ((y1 - y0) * (x1 - x0));
    }
  }
  return out;
}
