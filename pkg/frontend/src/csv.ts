/**
 * Reader for the simulator's trace CSVs.
 *
 * File contract: `#`-prefixed metadata comment lines (`# key = value`),
 * then the header `iteration,stationarity,consensus,objective,seconds`,
 * then one numeric row per evaluation point.
 */

import { readFileSync } from "node:fs";
import { basename } from "node:path";

export const COLUMNS = ["iteration", "stationarity", "consensus", "objective", "seconds"] as const;
export type Column = (typeof COLUMNS)[number];

export interface Trace {
  /** Display label: the `algorithm` metadata entry, else the file stem. */
  label: string;
  path: string;
  metadata: Record<string, string>;
  columns: Record<Column, number[]>;
}

export class MissingColumnError extends Error {
  constructor(column: string, path: string) {
    super(`no column '${column}' in ${path}; expected one of ${COLUMNS.join(", ")}`);
    this.name = "MissingColumnError";
  }
}

export class TraceFormatError extends Error {
  constructor(message: string) {
    super(message);
    this.name = "TraceFormatError";
  }
}

export function assertColumn(name: string, path: string): Column {
  if (!(COLUMNS as readonly string[]).includes(name)) {
    throw new MissingColumnError(name, path);
  }
  return name as Column;
}

export function parseTrace(path: string): Trace {
  const metadata: Record<string, string> = {};
  const columns: Record<Column, number[]> = {
    iteration: [],
    stationarity: [],
    consensus: [],
    objective: [],
    seconds: [],
  };
  let sawHeader = false;

  for (const raw of readFileSync(path, "utf8").split("\n")) {
    const line = raw.trim();
    if (line === "") continue;
    if (line.startsWith("#")) {
      const eq = line.indexOf("=");
      if (eq > 0) {
        metadata[line.slice(1, eq).trim()] = line.slice(eq + 1).trim();
      }
      continue;
    }
    if (line === COLUMNS.join(",")) {
      sawHeader = true;
      continue;
    }
    const parts = line.split(",");
    if (parts.length !== COLUMNS.length) {
      throw new TraceFormatError(`${path}: malformed row '${line}'`);
    }
    parts.forEach((value, i) => {
      const parsed = Number(value);
      if (Number.isNaN(parsed)) {
        throw new TraceFormatError(`${path}: non-numeric value '${value}'`);
      }
      columns[COLUMNS[i]].push(parsed);
    });
  }
  if (!sawHeader) {
    throw new TraceFormatError(`${path}: missing header '${COLUMNS.join(",")}'`);
  }
  const stem = basename(path).replace(/\.csv$/, "");
  return { label: metadata["algorithm"] ?? stem, path, metadata, columns };
}
