import { spawnSync } from "node:child_process";
import { readFileSync } from "node:fs";
import { join } from "node:path";
import { describe, expect, it } from "vitest";

import { BoundSession, EngineError, SessionClosedError, loadPolicies, runPack } from "../src/index.js";

const REPO_ROOT = join(__dirname, "..", "..");
const GOLDEN = join(REPO_ROOT, "tests", "golden");
const FIXTURES = join(REPO_ROOT, "tests", "fixtures");

const CALC_GRAPH = readFileSync(join(GOLDEN, "calc_graph.json"), "utf-8");
const CALC_POLICY = readFileSync(join(GOLDEN, "calc_matches.json"), "utf-8");
const GOLDEN_VERDICT = readFileSync(join(GOLDEN, "verdict_golden.json"), "utf-8");

const NO_EVAL_POLICY = JSON.stringify({
  id: "policy.code.no_eval",
  tier: "T2",
  scope: { kind: "code_block" },
  assert: [{ expr: "not(contains(code_block.content, 'eval('))" }],
  on_violation: { action: "CORRECT" },
});

const EVAL_GRAPH = JSON.stringify({
  schema_version: "1.0.0",
  code_blocks: [{ language_tag: "python", content: "x = eval(raw)" }],
});

function cliBytes(args: string[]): string {
  const result = spawnSync("python3", ["-m", "cape", ...args], {
    encoding: "utf-8",
    maxBuffer: 64 * 1024 * 1024,
  });
  expect(result.error).toBeUndefined();
  return result.stdout;
}

describe("session lifecycle", () => {
  it("loads a single policy", () => {
    const session = loadPolicies([CALC_POLICY]);
    try {
      expect(session.policyCount).toBe(1);
    } finally {
      session.close();
    }
  });

  it("loads an empty policy set", () => {
    const session = loadPolicies([]);
    try {
      const verdict = JSON.parse(session.check(CALC_GRAPH));
      expect(verdict.policies_evaluated).toBe(0);
      expect(verdict.policies_passed).toBe(0);
      expect(verdict.violations).toEqual([]);
    } finally {
      session.close();
    }
  });

  it("surfaces duplicate ids as engine diagnostics", () => {
    expect(() => loadPolicies([CALC_POLICY, CALC_POLICY])).toThrowError(/duplicate policy id/);
  });

  it("surfaces parse errors as engine diagnostics", () => {
    expect(() => loadPolicies(['{"id":"p","tier":"T9"}'])).toThrowError(EngineError);
  });

  it("rejects use after close", () => {
    const session = loadPolicies([CALC_POLICY]);
    session.close();
    expect(() => session.check(CALC_GRAPH)).toThrowError(SessionClosedError);
  });
});

describe("boundary fidelity", () => {
  it("check output is byte-identical to the CLI and to the golden file", () => {
    const session = loadPolicies([CALC_POLICY]);
    try {
      const mine = session.check(CALC_GRAPH, { outputId: "example_847" });
      expect(mine).toBe(GOLDEN_VERDICT);

      const viaCli = (() => {
        const tmp = session as unknown as { dir: string; policyPaths: string[] };
        return cliBytes([
          "check",
          join(GOLDEN, "calc_graph.json"),
          "--output-id",
          "example_847",
          "--policy",
          tmp.policyPaths[0],
        ]);
      })();
      expect(mine).toBe(viaCli);
    } finally {
      session.close();
    }
  });

  it("repeated calls return identical bytes", () => {
    const session = loadPolicies([CALC_POLICY]);
    try {
      const first = session.check(CALC_GRAPH, { outputId: "example_847" });
      for (let i = 0; i < 24; i++) {
        expect(session.check(CALC_GRAPH, { outputId: "example_847" })).toBe(first);
      }
    } finally {
      session.close();
    }
  });

  it("pack run matches the CLI byte for byte", () => {
    const packDir = join(FIXTURES, "adherence_pack");
    const outputsDir = join(FIXTURES, "adherence_outputs");
    const mine = runPack(packDir, outputsDir);
    const viaCli = cliBytes(["pack", "run", packDir, "--outputs", outputsDir]);
    expect(mine).toBe(viaCli);
    expect(JSON.parse(mine).core_adherence).toBe(0.7);
  });
});

describe("correct", () => {
  it("applies the deterministic calc patch", () => {
    const session = loadPolicies([CALC_POLICY]);
    try {
      const result = JSON.parse(session.correct(CALC_GRAPH));
      expect(result.accepted).toBe(true);
      expect(result.patches).toHaveLength(1);
      expect(result.patches[0].path).toBe("/tool_calls/0/arguments/value");
      expect(result.patches[0].old).toBe(7.1);
      expect(result.patches[0].new).toBe(7.095);
    } finally {
      session.close();
    }
  });

  it("is a no-op on a clean graph", () => {
    const clean = JSON.parse(CALC_GRAPH);
    clean.tool_calls[0].arguments.value = 7.095;
    const session = loadPolicies([CALC_POLICY]);
    try {
      const result = JSON.parse(session.correct(JSON.stringify(clean)));
      expect(result.accepted).toBe(true);
      expect(result.patches).toEqual([]);
    } finally {
      session.close();
    }
  });

  it("records a failing rewrite callback per violation without crashing", () => {
    const provider = `python3 ${join(FIXTURES, "rewrite_provider.py")} --fail`;
    const session = loadPolicies([NO_EVAL_POLICY]);
    try {
      const result = JSON.parse(session.correct(EVAL_GRAPH, { rewriteProviderCmd: provider }));
      expect(result.accepted).toBe(false);
      expect(result.failures.some((f: { reason: string }) => f.reason.includes("rewrite failed"))).toBe(
        true,
      );
    } finally {
      session.close();
    }
  });

  it("accepts a successful rewrite", () => {
    const provider = `python3 ${join(FIXTURES, "rewrite_provider.py")}`;
    const session = loadPolicies([NO_EVAL_POLICY]);
    try {
      const result = JSON.parse(session.correct(EVAL_GRAPH, { rewriteProviderCmd: provider }));
      expect(result.accepted).toBe(true);
    } finally {
      session.close();
    }
  });
});

describe("session isolation", () => {
  it("interleaved sessions with different policy sets do not cross-talk", () => {
    const calcSession = loadPolicies([CALC_POLICY]);
    const evalSession = loadPolicies([NO_EVAL_POLICY]);
    try {
      const calcBaseline = calcSession.check(CALC_GRAPH, { outputId: "a" });
      const evalBaseline = evalSession.check(EVAL_GRAPH, { outputId: "b" });
      for (let i = 0; i < 5; i++) {
        expect(calcSession.check(CALC_GRAPH, { outputId: "a" })).toBe(calcBaseline);
        expect(evalSession.check(EVAL_GRAPH, { outputId: "b" })).toBe(evalBaseline);
        // Swapped inputs produce each session's own view, not the other's.
        const calcOnEval = JSON.parse(calcSession.check(EVAL_GRAPH, { outputId: "b" }));
        expect(calcOnEval.policies_evaluated).toBe(1);
        expect(calcOnEval.violations).toEqual([]); // calc policy not applicable here
        const evalOnEval = JSON.parse(evalSession.check(EVAL_GRAPH, { outputId: "b" }));
        expect(evalOnEval.violations).toHaveLength(1);
      }
    } finally {
      calcSession.close();
      evalSession.close();
    }
  });
});

describe("session constructor engine override", () => {
  it("fails cleanly when the engine command is bogus", () => {
    expect(() => new BoundSession([CALC_POLICY], { argv: ["definitely-not-a-binary"] })).toThrowError(
      EngineError,
    );
  });
});
