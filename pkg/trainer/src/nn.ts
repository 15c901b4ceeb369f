/** Minimal dense/convolutional network on flat Float64Arrays.
 *
 * Layout is [channels, height, width]. Every layer exposes forward, backward
 * (accumulating parameter gradients), and a plain SGD update with L1/L2
 * penalties. The optimizer (plain SGD) and the ReLU activations are fixed,
 * non-tuned constants of this trainer.
 */
import { Rng } from "./rng";

export interface Layer {
  forward(input: Float64Array): Float64Array;
  backward(gradOut: Float64Array): Float64Array;
  update(lr: number, l1: number, l2: number, batch: number): void;
}

function applyPenalties(w: Float64Array, g: Float64Array, lr: number, l1: number, l2: number, batch: number): void {
  for (let i = 0; i < w.length; i++) {
    const sign = w[i] > 0 ? 1 : w[i] < 0 ? -1 : 0;
    w[i] -= lr * (g[i] / batch + l1 * sign + 2 * l2 * w[i]);
    g[i] = 0;
  }
}

export class Conv2D implements Layer {
  readonly w: Float64Array;
  readonly b: Float64Array;
  private gw: Float64Array;
  private gb: Float64Array;
  private input!: Float64Array;

  constructor(
    readonly inC: number,
    readonly outC: number,
    readonly k: number,
    readonly side: number,
    rng: Rng,
  ) {
    const fanIn = inC * k * k;
    this.w = new Float64Array(outC * inC * k * k);
    for (let i = 0; i < this.w.length; i++) this.w[i] = rng.normal() * Math.sqrt(2 / fanIn);
    this.b = new Float64Array(outC);
    this.gw = new Float64Array(this.w.length);
    this.gb = new Float64Array(outC);
  }

  forward(input: Float64Array): Float64Array {
    this.input = input;
    const { inC, outC, k, side } = this;
    const pad = Math.floor(k / 2);
    const out = new Float64Array(outC * side * side);
    for (let f = 0; f < outC; f++) {
      const wBase = f * inC * k * k;
      for (let y = 0; y < side; y++) {
        for (let x = 0; x < side; x++) {
          let acc = this.b[f];
          for (let c = 0; c < inC; c++) {
            const inBase = c * side * side;
            const wChan = wBase + c * k * k;
            for (let dy = 0; dy < k; dy++) {
              const yy = y + dy - pad;
              if (yy < 0 || yy >= side) continue;
              const rowBase = inBase + yy * side;
              const wRow = wChan + dy * k;
              for (let dx = 0; dx < k; dx++) {
                const xx = x + dx - pad;
                if (xx < 0 || xx >= side) continue;
                acc += this.w[wRow + dx] * input[rowBase + xx];
              }
            }
          }
          out[(f * side + y) * side + x] = acc;
        }
      }
    }
    return out;
  }

  backward(gradOut: Float64Array): Float64Array {
    const { inC, outC, k, side } = this;
    const pad = Math.floor(k / 2);
    const gradIn = new Float64Array(inC * side * side);
    for (let f = 0; f < outC; f++) {
      const wBase = f * inC * k * k;
      for (let y = 0; y < side; y++) {
        for (let x = 0; x < side; x++) {
          const g = gradOut[(f * side + y) * side + x];
          if (g === 0) continue;
          this.gb[f] += g;
          for (let c = 0; c < inC; c++) {
            const inBase = c * side * side;
            const wChan = wBase + c * k * k;
            for (let dy = 0; dy < k; dy++) {
              const yy = y + dy - pad;
              if (yy < 0 || yy >= side) continue;
              const rowBase = inBase + yy * side;
              const wRow = wChan + dy * k;
              for (let dx = 0; dx < k; dx++) {
                const xx = x + dx - pad;
                if (xx < 0 || xx >= side) continue;
                this.gw[wRow + dx] += this.input[rowBase + xx] * g;
                gradIn[rowBase + xx] += this.w[wRow + dx] * g;
              }
            }
          }
        }
      }
    }
    return gradIn;
  }

  update(lr: number, l1: number, l2: number, batch: number): void {
    applyPenalties(this.w, this.gw, lr, l1, l2, batch);
    for (let f = 0; f < this.outC; f++) {
      this.b[f] -= (lr * this.gb[f]) / batch;
      this.gb[f] = 0;
    }
  }
}

export class ReLU implements Layer {
  private mask!: Uint8Array;

  forward(input: Float64Array): Float64Array {
    const out = new Float64Array(input.length);
    this.mask = new Uint8Array(input.length);
    for (let i = 0; i < input.length; i++) {
      if (input[i] > 0) {
        out[i] = input[i];
        this.mask[i] = 1;
      }
    }
    return out;
  }

  backward(gradOut: Float64Array): Float64Array {
    const gradIn = new Float64Array(gradOut.length);
    for (let i = 0; i < gradOut.length; i++) if (this.mask[i]) gradIn[i] = gradOut[i];
    return gradIn;
  }

  update(): void {}
}

/** 2x2 max pooling, stride 2; an odd trailing row/column is dropped. */
export class MaxPool2 implements Layer {
  readonly outSide: number;
  private argmax!: Int32Array;

  constructor(readonly channels: number, readonly side: number) {
    this.outSide = Math.floor(side / 2);
  }

  forward(input: Float64Array): Float64Array {
    const { channels, side, outSide } = this;
    const out = new Float64Array(channels * outSide * outSide);
    this.argmax = new Int32Array(out.length);
    for (let c = 0; c < channels; c++) {
      for (let y = 0; y < outSide; y++) {
        for (let x = 0; x < outSide; x++) {
          let best = -Infinity;
          let bestIdx = -1;
          for (let dy = 0; dy < 2; dy++) {
            for (let dx = 0; dx < 2; dx++) {
              const idx = (c * side + 2 * y + dy) * side + 2 * x + dx;
              if (input[idx] > best) {
                best = input[idx];
                bestIdx = idx;
              }
            }
          }
          const o = (c * outSide + y) * outSide + x;
          out[o] = best;
          this.argmax[o] = bestIdx;
        }
      }
    }
    return out;
  }

  backward(gradOut: Float64Array): Float64Array {
    const gradIn = new Float64Array(this.channels * this.side * this.side);
    for (let o = 0; o < gradOut.length; o++) gradIn[this.argmax[o]] += gradOut[o];
    return gradIn;
  }

  update(): void {}
}

export class Dense implements Layer {
  readonly w: Float64Array;
  readonly b: Float64Array;
  private gw: Float64Array;
  private gb: Float64Array;
  private input!: Float64Array;

  constructor(readonly inN: number, readonly outN: number, rng: Rng) {
    this.w = new Float64Array(outN * inN);
    for (let i = 0; i < this.w.length; i++) this.w[i] = rng.normal() * Math.sqrt(2 / inN);
    this.b = new Float64Array(outN);
    this.gw = new Float64Array(this.w.length);
    this.gb = new Float64Array(outN);
  }

  forward(input: Float64Array): Float64Array {
    this.input = input;
    const out = new Float64Array(this.outN);
    for (let o = 0; o < this.outN; o++) {
      let acc = this.b[o];
      const base = o * this.inN;
      for (let i = 0; i < this.inN; i++) acc += this.w[base + i] * input[i];
      out[o] = acc;
    }
    return out;
  }

  backward(gradOut: Float64Array): Float64Array {
    const gradIn = new Float64Array(this.inN);
    for (let o = 0; o < this.outN; o++) {
      const g = gradOut[o];
      this.gb[o] += g;
      const base = o * this.inN;
      for (let i = 0; i < this.inN; i++) {
        this.gw[base + i] += this.input[i] * g;
        gradIn[i] += this.w[base + i] * g;
      }
    }
    return gradIn;
  }

  update(lr: number, l1: number, l2: number, batch: number): void {
    applyPenalties(this.w, this.gw, lr, l1, l2, batch);
    for (let o = 0; o < this.outN; o++) {
      this.b[o] -= (lr * this.gb[o]) / batch;
      this.gb[o] = 0;
    }
  }
}

export function softmax(logits: Float64Array): Float64Array {
  let max = -Infinity;
  for (const v of logits) if (v > max) max = v;
  const out = new Float64Array(logits.length);
  let sum = 0;
  for (let i = 0; i < logits.length; i++) {
    out[i] = Math.exp(logits[i] - max);
    sum += out[i];
  }
  for (let i = 0; i < out.length; i++) out[i] /= sum;
  return out;
}

export class Net {
  constructor(readonly layers: Layer[]) {}

  forward(x: Float64Array): Float64Array {
    for (const layer of this.layers) x = layer.forward(x);
    return x;
  }

  /** Cross-entropy on one example; backpropagates and returns the loss. */
  trainExample(x: Float64Array, label: number): number {
    const logits = this.forward(x);
    const probs = softmax(logits);
    const grad = new Float64Array(probs.length);
    for (let i = 0; i < probs.length; i++) grad[i] = probs[i] - (i === label ? 1 : 0);
    let g: Float64Array = grad;
    for (let i = this.layers.length - 1; i >= 0; i--) g = this.layers[i].backward(g);
    return -Math.log(Math.max(probs[label], 1e-12));
  }

  update(lr: number, l1: number, l2: number, batch: number): void {
    for (const layer of this.layers) layer.update(lr, l1, l2, batch);
  }

  predict(x: Float64Array): number {
    const logits = this.forward(x);
    let best = 0;
    for (let i = 1; i < logits.length; i++) if (logits[i] > logits[best]) best = i;
    return best;
  }
}
