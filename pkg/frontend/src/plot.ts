/**
 * CLI: render simulator trace CSVs as a log-scale convergence chart.
 *
 *   node dist/src/plot.js --glob 'out/*_mean.csv' --metric stationarity --out fig.png
 */

import { parseTrace, assertColumn, MissingColumnError, TraceFormatError, Trace } from "./csv.js";
import { expandGlob } from "./glob.js";
import { plotConvergence } from "./render.js";

interface Args {
  globs: string[];
  metric: string;
  out: string;
}

export function parseArgs(argv: string[]): Args {
  const args: Args = { globs: [], metric: "stationarity", out: "fig.png" };
  for (let i = 0; i < argv.length; i++) {
    const flag = argv[i];
    const value = () => {
      const v = argv[++i];
      if (v === undefined) throw new Error(`flag ${flag} needs a value`);
      return v;
    };
    switch (flag) {
      case "--glob":
        args.globs.push(value());
        break;
      case "--metric":
        args.metric = value();
        break;
      case "--out":
        args.out = value();
        break;
      case "--help":
      case "-h":
        console.log("usage: plot --glob <pattern> [--glob <pattern> ...] [--metric name] [--out fig.png]");
        process.exit(0);
        break;
      default:
        throw new Error(`unknown flag ${flag}`);
    }
  }
  if (args.globs.length === 0) throw new Error("at least one --glob is required");
  return args;
}

export function main(argv: string[]): number {
  let args: Args;
  try {
    args = parseArgs(argv);
  } catch (err) {
    console.error(`error: ${(err as Error).message}`);
    return 2;
  }
  const paths = args.globs.flatMap(expandGlob);
  if (paths.length === 0) {
    console.error(`error: no files match ${args.globs.join(", ")}`);
    return 2;
  }
  try {
    const traces: Trace[] = paths.map(parseTrace);
    const metric = assertColumn(args.metric, paths[0]);
    const result = plotConvergence(traces, args.out, metric);
    console.log(
      `wrote ${result.outPath} (${result.width}x${result.height}, ` +
        `${result.legendEntries.length} series: ${result.legendEntries.join(", ")})`,
    );
    return 0;
  } catch (err) {
    if (err instanceof MissingColumnError || err instanceof TraceFormatError) {
      console.error(`error: ${err.message}`);
      return 2;
    }
    console.error(`error: ${(err as Error).message}`);
    return 1;
  }
}

if (import.meta.url === `file://${process.argv[1]}`) {
  process.exit(main(process.argv.slice(2)));
}
