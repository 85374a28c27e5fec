import { promises as fs } from "node:fs";
import path from "node:path";

const IMAGE_EXTENSIONS = new Set([".jpg", ".jpeg", ".png", ".bmp", ".ppm", ".webp"]);

export interface Frame {
  index: number; // 1-based
  file: string; // absolute path
  name: string;
}

/**
 * Image files in the directory, sorted lexicographically; their positions
 * define frame indices 1..N.
 */
export async function listFrames(framesDir: string): Promise<Frame[]> {
  let entries: string[];
  try {
    entries = await fs.readdir(framesDir);
  } catch (err) {
    throw new Error(`cannot read frames directory ${framesDir}: ${(err as Error).message}`);
  }
  const images = entries
    .filter((name) => IMAGE_EXTENSIONS.has(path.extname(name).toLowerCase()))
    .sort();
  return images.map((name, i) => ({
    index: i + 1,
    file: path.join(framesDir, name),
    name,
  }));
}
