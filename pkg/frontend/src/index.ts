/**
 * Bindings for the cape verification engine.
 *
 * The boundary is JSON-in/JSON-out over the engine's command-line
 * interface: a session materializes its policy set once, every call
 * shells out to the engine, and the payload bytes pass through
 * untouched — output is byte-identical to invoking the CLI directly on
 * the same inputs. Rewrite providers cross the boundary as commands
 * speaking the engine's line-delimited JSON protocol; the engine treats
 * them like any other provider and re-verifies whatever they produce.
 */

import { spawnSync } from "node:child_process";
import { mkdtempSync, rmSync, writeFileSync } from "node:fs";
import { tmpdir } from "node:os";
import { join } from "node:path";

/** Mirrors the engine version. */
export const VERSION = "0.1.0";

const MINIMAL_GRAPH = '{"schema_version":"1.0.0"}';

export interface EngineCommand {
  /** Executable plus leading arguments, e.g. ["python3", "-m", "cape"]. */
  argv: string[];
}

export class EngineError extends Error {}
export class SessionClosedError extends EngineError {
  constructor() {
    super("session is closed");
  }
}

function defaultEngine(): string[] {
  const fromEnv = process.env.CAPE_BIN;
  if (fromEnv && fromEnv.length > 0) {
    return fromEnv.split(" ");
  }
  const python = process.env.CAPE_PYTHON ?? "python3";
  return [python, "-m", "cape"];
}

interface RunResult {
  status: number;
  stdout: string;
  stderr: string;
}

function runEngine(argv: string[], args: string[]): RunResult {
  const [command, ...leading] = argv;
  const result = spawnSync(command, [...leading, ...args], {
    encoding: "utf-8",
    maxBuffer: 64 * 1024 * 1024,
  });
  if (result.error) {
    throw new EngineError(`failed to launch engine: ${result.error.message}`);
  }
  return {
    status: result.status ?? -1,
    stdout: result.stdout ?? "",
    stderr: result.stderr ?? "",
  };
}

function engineFailure(result: RunResult): EngineError {
  const diagnostic = result.stderr.trim().split("\n").pop() ?? "engine error";
  return new EngineError(diagnostic);
}

export interface CheckOptions {
  outputId?: string;
  details?: boolean;
}

export interface CorrectOptions {
  outputId?: string;
  /**
   * Command for rewrite-class corrections, speaking the engine's
   * line-delimited JSON provider protocol on stdin/stdout. Errors it
   * raises surface as per-violation failures in the result document,
   * never as a crash.
   */
  rewriteProviderCmd?: string;
  seed?: number;
}

/**
 * A loaded policy set. The handle outlives every verdict produced from
 * it; independent sessions never influence each other. Operations on a
 * closed session throw SessionClosedError.
 */
export class BoundSession {
  private readonly dir: string;
  private readonly policyPaths: string[];
  private readonly engine: string[];
  private closed = false;
  private calls = 0;

  constructor(policyDocuments: string[], engine?: EngineCommand) {
    this.engine = engine?.argv ?? defaultEngine();
    this.dir = mkdtempSync(join(tmpdir(), "cape-session-"));
    this.policyPaths = policyDocuments.map((doc, index) => {
      const path = join(this.dir, `policy_${index}.json`);
      writeFileSync(path, doc, "utf-8");
      return path;
    });
    // Surface parse errors and duplicate ids now, with the engine's own
    // diagnostics, rather than on first use.
    const result = this.invoke(["check", this.writeInput(MINIMAL_GRAPH), "--output-id", "load"]);
    if (result.status === 2) {
      this.closeQuietly();
      throw engineFailure(result);
    }
  }

  get policyCount(): number {
    return this.policyPaths.length;
  }

  /** Evaluate the policy set against a PredicateGraph document; returns
   * the verdict JSON exactly as the engine's CLI prints it. */
  check(graphDocument: string, options: CheckOptions = {}): string {
    this.assertOpen();
    const args = ["check", this.writeInput(graphDocument)];
    args.push("--output-id", options.outputId ?? "output_0");
    if (options.details) {
      args.push("--details");
    }
    const result = this.invoke(args);
    if (result.status === 2 || result.status < 0) {
      throw engineFailure(result);
    }
    return result.stdout;
  }

  /** Correct violations and re-verify; returns the correction-result
   * document. Accepted or not is in the payload, not the exit path. */
  correct(graphDocument: string, options: CorrectOptions = {}): string {
    this.assertOpen();
    const args = ["correct", this.writeInput(graphDocument)];
    args.push("--output-id", options.outputId ?? "output_0");
    if (options.rewriteProviderCmd) {
      args.push("--rewrite-provider", options.rewriteProviderCmd);
    }
    if (options.seed !== undefined) {
      args.push("--seed", String(options.seed));
    }
    const result = this.invoke(args);
    if (result.status === 2 || result.status < 0) {
      throw engineFailure(result);
    }
    return result.stdout;
  }

  close(): void {
    this.closeQuietly();
  }

  private closeQuietly(): void {
    if (!this.closed) {
      this.closed = true;
      rmSync(this.dir, { recursive: true, force: true });
    }
  }

  private assertOpen(): void {
    if (this.closed) {
      throw new SessionClosedError();
    }
  }

  private writeInput(document: string): string {
    const path = join(this.dir, `input_${this.calls++}.json`);
    writeFileSync(path, document, "utf-8");
    return path;
  }

  private invoke(args: string[]): RunResult {
    this.assertOpen();
    const withPolicies = [...args];
    for (const path of this.policyPaths) {
      withPolicies.push("--policy", path);
    }
    return runEngine(this.engine, withPolicies);
  }
}

export function loadPolicies(policyDocuments: string[], engine?: EngineCommand): BoundSession {
  return new BoundSession(policyDocuments, engine);
}

export function check(session: BoundSession, graphDocument: string, options?: CheckOptions): string {
  return session.check(graphDocument, options);
}

export function correct(session: BoundSession, graphDocument: string, options?: CorrectOptions): string {
  return session.correct(graphDocument, options);
}

export interface RunPackOptions {
  format?: "json" | "table";
}

/** Compute a pack's adherence profile from a directory of recorded
 * per-case graphs; byte-identical to `pack run` on the CLI. */
export function runPack(
  packDir: string,
  outputsDir: string,
  options: RunPackOptions = {},
  engine?: EngineCommand,
): string {
  const args: string[] = [];
  if (options.format === "table") {
    args.push("--format", "table");
  }
  args.push("pack", "run", packDir, "--outputs", outputsDir);
  const result = runEngine(engine?.argv ?? defaultEngine(), args);
  if (result.status === 2 || result.status < 0) {
    throw engineFailure(result);
  }
  return result.stdout;
}
