import { mkdtempSync, mkdirSync, readFileSync, writeFileSync } from "node:fs";
import { tmpdir } from "node:os";
import path from "node:path";
import { describe, expect, it } from "vitest";

import { detectSequence } from "../src/adapter";
import { StubBackend, makeBackend } from "../src/backends";
import { main } from "../src/cli";
import { parseMot } from "../src/mot";

// 1x1 transparent PNG; the stub backend never decodes pixels, frames only
// need to exist as image files
const PNG_1X1 = Buffer.from(
  "iVBORw0KGgoAAAANSUhEUgAAAAEAAAABCAYAAAAfFcSJAAAADUlEQVR42mP8z8BQDwAEhQGAhKmMIQAAAABJRU5ErkJggg==",
  "base64"
);

function makeFramesDir(names: string[]): string {
  const dir = mkdtempSync(path.join(tmpdir(), "adapter-frames-"));
  for (const name of names) {
    writeFileSync(path.join(dir, name), PNG_1X1);
  }
  return dir;
}

function writeGroundings(
  dir: string,
  expressions: Record<string, Record<string, Array<{ box: number[]; score: number }>>>
) {
  writeFileSync(path.join(dir, "groundings.json"), JSON.stringify({ expressions }, null, 2));
}

function outPath(): string {
  return path.join(mkdtempSync(path.join(tmpdir(), "adapter-out-")), "det.txt");
}

describe("detectSequence with the stub checkpoint", () => {
  it("emits one line per grounded region in frame order", async () => {
    const dir = makeFramesDir(["f1.png", "f2.png", "f3.png"]);
    writeGroundings(dir, {
      "the red box": {
        "f1.png": [{ box: [10, 20, 30, 40], score: 0.9 }],
        "f2.png": [
          { box: [12, 22, 30, 40], score: 0.85 },
          { box: [200, 200, 10, 10], score: 0.4 },
        ],
        "f3.png": [{ box: [14.5, 24.5, 30, 40], score: 0.8 }],
      },
    });
    const out = outPath();
    const result = await detectSequence(
      { framesDir: dir, expression: "the red box", out, scoreFloor: 0 },
      new StubBackend(dir)
    );
    expect(result.frames).toBe(3);
    expect(result.emitted).toBe(4);
    const text = readFileSync(out, "utf8");
    expect(text).toBe(
      "1,-1,10,20,30,40,0.9,-1,-1,-1\n" +
        "2,-1,12,22,30,40,0.85,-1,-1,-1\n" +
        "2,-1,200,200,10,10,0.4,-1,-1,-1\n" +
        "3,-1,14.5,24.5,30,40,0.8,-1,-1,-1\n"
    );
    // passes the wire-format contract
    const rows = parseMot(text);
    expect(rows.map((r) => r.frame)).toEqual([1, 2, 2, 3]);
  });

  it("frame indices follow lexicographic filename order", async () => {
    const dir = makeFramesDir(["b.png", "a.png", "c.png"]);
    writeGroundings(dir, {
      q: {
        "a.png": [{ box: [0, 0, 5, 5], score: 0.5 }],
        "c.png": [{ box: [0, 0, 5, 5], score: 0.5 }],
      },
    });
    const out = outPath();
    await detectSequence({ framesDir: dir, expression: "q", out, scoreFloor: 0 },
      new StubBackend(dir));
    const rows = parseMot(readFileSync(out, "utf8"));
    expect(rows.map((r) => r.frame)).toEqual([1, 3]); // a=1, b=2, c=3
  });

  it("empty frames directory produces an empty file", async () => {
    const dir = makeFramesDir([]);
    const out = outPath();
    const result = await detectSequence(
      { framesDir: dir, expression: "anything", out, scoreFloor: 0 },
      new StubBackend(dir)
    );
    expect(result.frames).toBe(0);
    expect(readFileSync(out, "utf8")).toBe("");
  });

  it("omits lines below the score floor, frames may go silent", async () => {
    const dir = makeFramesDir(["f1.png", "f2.png"]);
    writeGroundings(dir, {
      q: {
        "f1.png": [{ box: [0, 0, 5, 5], score: 0.3 }],
        "f2.png": [
          { box: [0, 0, 5, 5], score: 0.9 },
          { box: [9, 9, 5, 5], score: 0.49 },
        ],
      },
    });
    const out = outPath();
    const result = await detectSequence(
      { framesDir: dir, expression: "q", out, scoreFloor: 0.5 },
      new StubBackend(dir)
    );
    expect(result.emitted).toBe(1);
    const rows = parseMot(readFileSync(out, "utf8"));
    expect(rows).toHaveLength(1);
    expect(rows[0].frame).toBe(2);
  });

  it("is deterministic", async () => {
    const dir = makeFramesDir(["f1.png", "f2.png"]);
    writeGroundings(dir, {
      q: { "f1.png": [{ box: [1.25, 2.5, 3.75, 4.125], score: 0.625 }] },
    });
    const a = outPath();
    const b = outPath();
    await detectSequence({ framesDir: dir, expression: "q", out: a, scoreFloor: 0 },
      new StubBackend(dir));
    await detectSequence({ framesDir: dir, expression: "q", out: b, scoreFloor: 0 },
      new StubBackend(dir));
    expect(readFileSync(a)).toEqual(readFileSync(b));
  });

  it("an expression absent from the checkpoint grounds nothing", async () => {
    const dir = makeFramesDir(["f1.png"]);
    writeGroundings(dir, { other: { "f1.png": [{ box: [0, 0, 5, 5], score: 0.9 }] } });
    const out = outPath();
    const result = await detectSequence(
      { framesDir: dir, expression: "unseen phrase", out, scoreFloor: 0 },
      new StubBackend(dir)
    );
    expect(result.emitted).toBe(0);
  });

  it("missing checkpoint with frames present is an error", async () => {
    const dir = makeFramesDir(["f1.png"]);
    await expect(
      detectSequence({ framesDir: dir, expression: "q", out: outPath(), scoreFloor: 0 },
        new StubBackend(dir))
    ).rejects.toThrow(/checkpoint not found/);
  });
});

describe("cli", () => {
  it("exits 0 on an empty sequence", async () => {
    const dir = makeFramesDir([]);
    const out = outPath();
    const code = await main(["--frames", dir, "--expression", "q", "--out", out]);
    expect(code).toBe(0);
    expect(readFileSync(out, "utf8")).toBe("");
  });

  it("exits 2 on missing required options", async () => {
    expect(await main([])).toBe(2);
    expect(await main(["--frames", "/nowhere"])).toBe(2);
  });

  it("exits 2 on an unknown backend or bad floor", async () => {
    const dir = makeFramesDir([]);
    expect(
      await main(["--frames", dir, "--expression", "q", "--out", outPath(),
                  "--backend", "magic"])
    ).toBe(2);
    expect(
      await main(["--frames", dir, "--expression", "q", "--out", outPath(),
                  "--score-floor", "7"])
    ).toBe(2);
  });

  it("exits 1 when the checkpoint is unavailable", async () => {
    const dir = makeFramesDir(["f1.png"]);
    const code = await main(["--frames", dir, "--expression", "q", "--out", outPath()]);
    expect(code).toBe(1);
  });

  it("exits 1 when the frames directory does not exist", async () => {
    const code = await main([
      "--frames", "/definitely/not/here", "--expression", "q", "--out", outPath(),
    ]);
    expect(code).toBe(1);
  });
});
