/**
 * Process boundary to the lesionforge CLI.
 *
 * The CLI is the stable external interface: inputs and outputs are NIfTI
 * and JSON files, success is exit code 0, and failures arrive as a JSON
 * object on stderr with exit code 2 (bad input) or 3 (computation).
 */
import { spawnSync } from "node:child_process";
import { mkdtempSync, rmSync } from "node:fs";
import { tmpdir } from "node:os";
import { join } from "node:path";

export class CliError extends Error {
  /** CLI exit code: 2 usage/input, 3 computation. */
  readonly code: number;
  /** Error class name reported by the CLI. */
  readonly kind: string;

  constructor(code: number, kind: string, message: string) {
    super(`${kind}: ${message}`);
    this.code = code;
    this.kind = kind;
  }
}

function pythonCommand(): string[] {
  const custom = process.env.LESIONFORGE_CLI;
  if (custom && custom.trim()) return custom.trim().split(/\s+/);
  return ["python3", "-m", "lesionforge"];
}

export function runCli(args: string[], timeoutMs = 600_000): string {
  const [cmd, ...prefix] = pythonCommand();
  const proc = spawnSync(cmd, [...prefix, ...args], {
    encoding: "utf-8",
    timeout: timeoutMs,
    maxBuffer: 256 * 1024 * 1024,
  });
  if (proc.error) throw proc.error;
  if (proc.status !== 0) {
    let kind = "CliFailure";
    let message = (proc.stderr || "").trim();
    try {
      const parsed = JSON.parse(proc.stderr.trim().split("\n").pop() ?? "");
      kind = parsed.error ?? kind;
      message = parsed.message ?? message;
    } catch {
      // stderr was not the structured JSON contract; surface it raw
    }
    throw new CliError(proc.status ?? -1, kind, message);
  }
  return proc.stdout;
}

export function withTempDir<T>(fn: (dir: string) => T): T {
  const dir = mkdtempSync(join(tmpdir(), "lesionforge-"));
  try {
    return fn(dir);
  } finally {
    rmSync(dir, { recursive: true, force: true });
  }
}
