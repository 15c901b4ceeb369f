/** Build a network from a configuration and train it with early stopping. */
import { Dataset, N_CLASSES, resize, stratifiedSplit } from "./dataset";
import { Conv2D, Dense, Layer, MaxPool2, Net, ReLU } from "./nn";
import { Rng } from "./rng";

export const PATIENCE = 5;
export const TRAIN_FRACTION = 0.7;

export interface TrainOutcome {
  valError: number;
  epochsRun: number;
  bestEpoch: number;
}

export class BuildError extends Error {}

/** Largest pooling depth keeping at least 2 pixels per side. */
export function maxConvLayers(side: number): number {
  let count = 0;
  let r = Math.floor(side);
  while (r >= 4) {
    r = Math.floor(r / 2);
    count++;
  }
  return count;
}

interface NetConfig {
  learning_rate: number;
  n_conv: number;
  n_fc: number;
  batch_size: number;
  l1: number;
  l2: number;
  [key: string]: number;
}

function perLayer(config: Record<string, unknown>, prefix: string, i: number, fallback: number): number {
  // deep layers may lack their own entry after a cross-fidelity lift; reuse
  // the last declared value
  for (let j = i; j >= 1; j--) {
    const v = config[`${prefix}_${j}`];
    if (typeof v === "number") return v;
  }
  return fallback;
}

export function buildNet(config: NetConfig, side: number, rng: Rng): Net {
  const nConv = config.n_conv;
  if (!Number.isInteger(nConv) || nConv < 0) throw new BuildError(`bad n_conv ${nConv}`);
  if (nConv > maxConvLayers(side)) {
    throw new BuildError(
      `spatial collapse: ${nConv} pooled blocks exceed the ${maxConvLayers(side)} ` +
        `supported at ${side}x${side}`,
    );
  }
  const layers: Layer[] = [];
  let channels = 1;
  let spatial = side;
  for (let i = 1; i <= nConv; i++) {
    const filters = perLayer(config, "filters", i, 16);
    const kernel = perLayer(config, "kernel", i, 3);
    layers.push(new Conv2D(channels, filters, kernel, spatial, rng));
    layers.push(new ReLU());
    layers.push(new MaxPool2(filters, spatial));
    channels = filters;
    spatial = Math.floor(spatial / 2);
  }
  let width = channels * spatial * spatial;
  const nFc = config.n_fc;
  if (!Number.isInteger(nFc) || nFc < 1) throw new BuildError(`bad n_fc ${nFc}`);
  for (let j = 1; j <= nFc; j++) {
    const units = perLayer(config, "units", j, 32);
    layers.push(new Dense(width, units, rng));
    layers.push(new ReLU());
    width = units;
  }
  layers.push(new Dense(width, N_CLASSES, rng));
  return new Net(layers);
}

function errorRate(net: Net, images: Float64Array[], labels: number[], indices: number[]): number {
  let wrong = 0;
  for (const i of indices) if (net.predict(images[i]) !== labels[i]) wrong++;
  return wrong / indices.length;
}

export function trainAndScore(
  config: NetConfig,
  fidelity: number,
  seed: number,
  data: Dataset,
  maxEpochs: number,
): TrainOutcome {
  const side = Math.floor(fidelity);
  if (side < 2) throw new BuildError(`fidelity ${fidelity} below the 2-pixel minimum`);
  const rng = new Rng(seed);
  const images = data.images.map((img) => resize(img, side));
  const { train, val } = stratifiedSplit(data.labels, TRAIN_FRACTION, rng);
  const net = buildNet(config, side, rng);

  const lr = config.learning_rate;
  const batch = Math.max(1, Math.floor(config.batch_size ?? 32));
  const l1 = config.l1 ?? 0;
  const l2 = config.l2 ?? 0;

  let bestError = errorRate(net, images, data.labels, val);
  let bestEpoch = 0;
  let epoch = 0;
  const order = train.slice();
  while (epoch < maxEpochs && epoch - bestEpoch < PATIENCE) {
    epoch++;
    rng.shuffle(order);
    for (let start = 0; start < order.length; start += batch) {
      const end = Math.min(start + batch, order.length);
      for (let i = start; i < end; i++) {
        net.trainExample(images[order[i]], data.labels[order[i]]);
      }
      net.update(lr, l1, l2, end - start);
    }
    const err = errorRate(net, images, data.labels, val);
    if (err < bestError) {
      bestError = err;
      bestEpoch = epoch;
    }
  }
  return { valError: bestError, epochsRun: epoch, bestEpoch };
}
