/** Worker entry point: line-delimited JSON trainer service.
 *
 * Handshakes on stdout, then answers one training request per input line.
 * Requests carry {trial_id, fidelity, seed, config}; replies carry
 * {trial_id, status, objective, cost_minutes, message}. Malformed input
 * produces a failed reply and the loop continues.
 */
import * as readline from "node:readline";
import { generateDataset } from "./dataset";
import { BuildError, trainAndScore } from "./train";

const PROTOCOL = 1;
const DATA_SEED = 424242;

interface Args {
  dataset: string;
  maxEpochs: number;
  perClass: number;
}

function parseArgs(argv: string[]): Args {
  const args: Args = { dataset: "shapes", maxEpochs: 30, perClass: 150 };
  for (let i = 0; i < argv.length; i++) {
    if (argv[i] === "--dataset") args.dataset = argv[++i];
    else if (argv[i] === "--max-epochs") args.maxEpochs = parseInt(argv[++i], 10);
    else if (argv[i] === "--per-class") args.perClass = parseInt(argv[++i], 10);
    else throw new Error(`unknown flag ${argv[i]}`);
  }
  if (args.dataset !== "shapes") throw new Error(`unknown dataset ${args.dataset}`);
  if (!Number.isInteger(args.maxEpochs) || args.maxEpochs < 1) {
    throw new Error("--max-epochs must be a positive integer");
  }
  return args;
}

function emit(doc: unknown): void {
  process.stdout.write(JSON.stringify(doc) + "\n");
}

function handle(line: string, args: Args, data: ReturnType<typeof generateDataset>): void {
  let trialId: number | null = null;
  const started = process.hrtime.bigint();
  const minutes = () => Number(process.hrtime.bigint() - started) / 60e9;
  try {
    const req = JSON.parse(line);
    trialId = req.trial_id;
    const outcome = trainAndScore(req.config, req.fidelity, req.seed, data, args.maxEpochs);
    emit({
      trial_id: trialId,
      status: "ok",
      objective: outcome.valError,
      cost_minutes: minutes(),
      message: `epochs=${outcome.epochsRun} best=${outcome.bestEpoch}`,
    });
  } catch (err) {
    const message = err instanceof BuildError ? err.message : `request failed: ${err}`;
    emit({
      trial_id: trialId,
      status: "failed",
      objective: null,
      cost_minutes: minutes(),
      message,
    });
  }
}

export function serve(args: Args): void {
  const data = generateDataset(DATA_SEED, args.perClass);
  emit({ protocol: PROTOCOL, name: `reference-trainer/${args.dataset}` });
  const rl = readline.createInterface({ input: process.stdin, terminal: false });
  rl.on("line", (line) => {
    if (line.trim() === "") return;
    handle(line, args, data);
  });
}

if (require.main === module) {
  serve(parseArgs(process.argv.slice(2)));
}
