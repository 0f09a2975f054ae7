/**
 * Subprocess wrapper around the pipeline command line. The binding
 * talks to the pipeline only through this surface and its files, so a
 * single installation serves both.
 */

import { spawnSync } from "node:child_process";

/** Nonzero exit from the pipeline; message carries its stderr verbatim. */
export class CliError extends Error {
  readonly exitCode: number;

  constructor(exitCode: number, stderr: string) {
    super(stderr.trim() || `pipeline exited with code ${exitCode}`);
    this.name = "CliError";
    this.exitCode = exitCode;
  }
}

const LAUNCHER = process.env.NNN_CLI
  ? process.env.NNN_CLI.split(" ")
  : ["python3", "-m", "nnnorm"];

export function runNnn(args: string[]): void {
  const [cmd, ...prefix] = LAUNCHER;
  const proc = spawnSync(cmd!, [...prefix, ...args], {
    encoding: "utf8",
    maxBuffer: 64 * 1024 * 1024,
  });
  if (proc.error) {
    throw proc.error;
  }
  if (proc.status !== 0) {
    throw new CliError(proc.status ?? -1, proc.stderr ?? "");
  }
}
