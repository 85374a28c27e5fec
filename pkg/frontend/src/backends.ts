import { promises as fs } from "node:fs";
import path from "node:path";

import type { Frame } from "./frames.js";

/** One grounded region proposed by the model for the query expression. */
export interface Grounding {
  box: [number, number, number, number]; // x, y, w, h in pixels
  score: number;
}

/**
 * A grounding backend scores regions of one image against a referring
 * expression. Implementations must be deterministic for fixed weights and
 * inference settings.
 */
export interface GroundingBackend {
  readonly name: string;
  groundFrame(frame: Frame, expression: string): Promise<Grounding[]>;
}

export class BackendError extends Error {}

const STUB_FILE = "groundings.json";

interface StubPayload {
  expressions: Record<string, Record<string, Array<{ box: number[]; score: number }>>>;
}

/**
 * Fixture-backed "checkpoint": the model output is read from a
 * `groundings.json` sidecar next to the frames, keyed by expression and
 * frame filename. Used for contract tests and offline development; an
 * expression or frame absent from the fixture grounds nothing.
 */
export class StubBackend implements GroundingBackend {
  readonly name = "stub";
  private payload: StubPayload | null = null;
  private readonly framesDir: string;

  constructor(framesDir: string) {
    this.framesDir = framesDir;
  }

  private async load(): Promise<StubPayload> {
    if (this.payload) return this.payload;
    const file = path.join(this.framesDir, STUB_FILE);
    let raw: string;
    try {
      raw = await fs.readFile(file, "utf8");
    } catch {
      throw new BackendError(
        `stub checkpoint not found: ${file} (the stub backend reads model output from this sidecar)`
      );
    }
    let data: unknown;
    try {
      data = JSON.parse(raw);
    } catch (err) {
      throw new BackendError(`stub checkpoint ${file} is not valid JSON: ${(err as Error).message}`);
    }
    if (typeof data !== "object" || data === null || typeof (data as StubPayload).expressions !== "object") {
      throw new BackendError(`stub checkpoint ${file} must hold {"expressions": {...}}`);
    }
    this.payload = data as StubPayload;
    return this.payload;
  }

  async groundFrame(frame: Frame, expression: string): Promise<Grounding[]> {
    const payload = await this.load();
    const perFrame = payload.expressions[expression]?.[frame.name] ?? [];
    return perFrame.map((g, i) => {
      if (!Array.isArray(g.box) || g.box.length !== 4 || typeof g.score !== "number") {
        throw new BackendError(
          `stub checkpoint entry ${i} for ${frame.name} must be {box: [x,y,w,h], score}`
        );
      }
      return { box: [g.box[0], g.box[1], g.box[2], g.box[3]], score: g.score };
    });
  }
}

/**
 * Real backend: zero-shot object grounding through transformers.js with the
 * referring expression as the candidate label. Requires the optional
 * `@huggingface/transformers` package and locally available weights; single
 * pipeline instance, sequential frames, so output is deterministic for a
 * fixed checkpoint.
 */
export class TransformersBackend implements GroundingBackend {
  readonly name = "transformers";
  private readonly model: string;
  private detector: ((image: string, labels: string[], opts: object) => Promise<unknown>) | null =
    null;

  constructor(model = "Xenova/owlvit-base-patch32") {
    this.model = model;
  }

  private async load() {
    if (this.detector) return this.detector;
    const moduleName = "@huggingface/transformers";
    let mod: { pipeline: (task: string, model: string) => Promise<unknown> };
    try {
      mod = (await import(moduleName)) as typeof mod;
    } catch (err) {
      throw new BackendError(
        `grounding model unavailable: cannot load ${moduleName} (${(err as Error).message}); ` +
          `install it and provide weights, or use --backend stub`
      );
    }
    try {
      this.detector = (await mod.pipeline(
        "zero-shot-object-detection",
        this.model
      )) as NonNullable<typeof this.detector>;
    } catch (err) {
      throw new BackendError(
        `grounding weights unavailable for ${this.model}: ${(err as Error).message}`
      );
    }
    return this.detector;
  }

  async groundFrame(frame: Frame, expression: string): Promise<Grounding[]> {
    const detector = await this.load();
    let results: unknown;
    try {
      results = await detector(frame.file, [expression], { threshold: 0.0 });
    } catch (err) {
      throw new BackendError(`cannot run grounding on ${frame.file}: ${(err as Error).message}`);
    }
    const list = Array.isArray(results) ? results : [];
    return list.map((r) => {
      const item = r as { score: number; box: { xmin: number; ymin: number; xmax: number; ymax: number } };
      return {
        box: [
          item.box.xmin,
          item.box.ymin,
          item.box.xmax - item.box.xmin,
          item.box.ymax - item.box.ymin,
        ],
        score: item.score,
      };
    });
  }
}

export function makeBackend(kind: string, framesDir: string, model?: string): GroundingBackend {
  if (kind === "stub") return new StubBackend(framesDir);
  if (kind === "transformers") return new TransformersBackend(model);
  throw new BackendError(`unknown backend ${JSON.stringify(kind)}; expected stub or transformers`);
}
