#!/usr/bin/env node
/**
 * detect-adapter: ground a referring expression over an ordered image
 * sequence and emit MOT-format detections consumable by the tracking CLI.
 *
 * Exit codes: 0 success, 1 model/input failure, 2 usage error.
 */
import { realpathSync } from "node:fs";
import process from "node:process";
import { pathToFileURL } from "node:url";
import { parseArgs } from "node:util";

import { detectSequence } from "./adapter.js";
import { BackendError, makeBackend } from "./backends.js";

const USAGE = `usage: detect-adapter --frames DIR --expression TEXT --out FILE
                      [--score-floor F] [--backend stub|transformers] [--model NAME]

Frames are the image files in DIR sorted lexicographically (indices 1..N).
Output lines: frame,-1,x,y,w,h,score,-1,-1,-1 — one per grounded region at
or above the score floor. The stub backend reads model output from
DIR/groundings.json; the transformers backend needs the optional
@huggingface/transformers package and local weights.`;

export async function main(argv: string[]): Promise<number> {
  let values: {
    frames?: string;
    expression?: string;
    out?: string;
    "score-floor"?: string;
    backend?: string;
    model?: string;
    help?: boolean;
  };
  try {
    ({ values } = parseArgs({
      args: argv,
      options: {
        frames: { type: "string" },
        expression: { type: "string" },
        out: { type: "string" },
        "score-floor": { type: "string", default: "0" },
        backend: { type: "string", default: "stub" },
        model: { type: "string" },
        help: { type: "boolean", short: "h" },
      },
    }));
  } catch (err) {
    console.error((err as Error).message);
    console.error(USAGE);
    return 2;
  }
  if (values.help) {
    console.log(USAGE);
    return 0;
  }
  if (!values.frames || !values.expression || !values.out) {
    console.error("missing required option(s): --frames, --expression, --out");
    console.error(USAGE);
    return 2;
  }
  const scoreFloor = Number(values["score-floor"]);
  if (!Number.isFinite(scoreFloor) || scoreFloor < 0 || scoreFloor > 1) {
    console.error(`--score-floor must be a number in [0, 1], got ${values["score-floor"]}`);
    return 2;
  }
  let backend;
  try {
    backend = makeBackend(values.backend ?? "stub", values.frames, values.model);
  } catch (err) {
    console.error((err as Error).message);
    return 2;
  }
  console.error(
    `detect-adapter 0.1.0 backend=${backend.name} frames=${values.frames} ` +
      `expression=${JSON.stringify(values.expression)} score-floor=${scoreFloor} out=${values.out}`
  );
  try {
    const result = await detectSequence(
      {
        framesDir: values.frames,
        expression: values.expression,
        out: values.out,
        scoreFloor,
      },
      backend
    );
    console.error(`emitted ${result.emitted} detections over ${result.frames} frames`);
    return 0;
  } catch (err) {
    if (err instanceof BackendError) {
      console.error(err.message);
      return 1;
    }
    console.error(`detect-adapter failed: ${(err as Error).message}`);
    return 1;
  }
}

function isDirectInvocation(): boolean {
  if (!process.argv[1]) return false;
  try {
    // resolve bin-stub symlinks so `detect-adapter` on PATH works too
    return import.meta.url === pathToFileURL(realpathSync(process.argv[1])).href;
  } catch {
    return false;
  }
}

if (isDirectInvocation()) {
  main(process.argv.slice(2)).then((code) => {
    process.exitCode = code;
  });
}
