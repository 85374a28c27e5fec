import { promises as fs } from "node:fs";
import path from "node:path";

import { GroundingBackend } from "./backends.js";
import { listFrames } from "./frames.js";
import { DetectionRow, emitMot } from "./mot.js";

/** One invocation handles one (sequence, expression) pair. */
export interface AdapterRequest {
  framesDir: string;
  expression: string;
  out: string;
  scoreFloor: number; // detections scoring below this are not emitted
}

export interface AdapterResult {
  frames: number;
  emitted: number;
}

/**
 * Run the grounding model over every frame and write MOT detection lines:
 * `frame,-1,x,y,w,h,score,-1,-1,-1`, frames in index order, regions in model
 * order. Scores are emitted raw (thresholding beyond the floor belongs to
 * the tracker downstream). An empty frames directory yields an empty file.
 */
export async function detectSequence(
  req: AdapterRequest,
  backend: GroundingBackend
): Promise<AdapterResult> {
  if (req.scoreFloor < 0 || req.scoreFloor > 1) {
    throw new Error(`score floor must be in [0, 1], got ${req.scoreFloor}`);
  }
  const frames = await listFrames(req.framesDir);
  const rows: DetectionRow[] = [];
  for (const frame of frames) {
    const groundings = await backend.groundFrame(frame, req.expression);
    for (const g of groundings) {
      if (g.score < req.scoreFloor) continue;
      if (g.box[2] < 0 || g.box[3] < 0) {
        throw new Error(`model returned a negative-size box on ${frame.name}`);
      }
      rows.push({ frame: frame.index, box: g.box, score: g.score });
    }
  }
  await fs.mkdir(path.dirname(path.resolve(req.out)), { recursive: true });
  await fs.writeFile(req.out, emitMot(rows));
  return { frames: frames.length, emitted: rows.length };
}
