/** Minimal glob: `*` and `?` wildcards in the basename segment only. */

import { readdirSync } from "node:fs";
import { dirname, basename, join } from "node:path";

export function expandGlob(pattern: string): string[] {
  const dir = dirname(pattern);
  const base = basename(pattern);
  if (!base.includes("*") && !base.includes("?")) {
    return [pattern];
  }
  const regex = new RegExp(
    "^" + base.replace(/[.+^${}()|[\]\\]/g, "\\$&").replace(/\*/g, ".*").replace(/\?/g, ".") + "$",
  );
  let entries: string[];
  try {
    entries = readdirSync(dir);
  } catch {
    return [];
  }
  return entries
    .filter((name) => regex.test(name))
    .sort()
    .map((name) => join(dir, name));
}
