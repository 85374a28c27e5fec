/**
 * MOT text wire format shared with the tracking toolkit.
 *
 * Detection lines are `frame,id,x,y,w,h,conf,x3,y3,z3` with id -1 for raw
 * detections and `.` as the decimal separator. Numbers are written in their
 * shortest exact form so emitted files are byte-deterministic.
 */

export interface DetectionRow {
  frame: number;
  box: [number, number, number, number]; // x, y, w, h
  score: number;
}

export function formatNumber(v: number): string {
  if (!Number.isFinite(v)) {
    throw new Error(`non-finite value in detection output: ${v}`);
  }
  if (Number.isInteger(v)) return String(v);
  return String(v); // shortest round-trip decimal per the language spec
}

export function toMotLine(row: DetectionRow): string {
  const [x, y, w, h] = row.box;
  return [
    row.frame,
    -1,
    formatNumber(x),
    formatNumber(y),
    formatNumber(w),
    formatNumber(h),
    formatNumber(row.score),
    -1,
    -1,
    -1,
  ].join(",");
}

export function emitMot(rows: DetectionRow[]): string {
  return rows.map((r) => toMotLine(r) + "\n").join("");
}

/** Minimal validating parser for the same wire format (used by tests). */
export function parseMot(text: string): DetectionRow[] {
  const rows: DetectionRow[] = [];
  const lines = text.split("\n");
  lines.forEach((line, idx) => {
    const trimmed = line.trim();
    if (!trimmed) return;
    const parts = trimmed.split(",");
    if (parts.length < 7 || parts.length > 10) {
      throw new Error(`line ${idx + 1}: expected 7..10 fields, got ${parts.length}`);
    }
    const nums = parts.map((p) => {
      const v = Number(p);
      if (!Number.isFinite(v)) {
        throw new Error(`line ${idx + 1}: non-numeric field ${JSON.stringify(p)}`);
      }
      return v;
    });
    if (!Number.isInteger(nums[0]) || nums[0] < 1) {
      throw new Error(`line ${idx + 1}: frame must be a positive integer`);
    }
    if (nums[4] < 0 || nums[5] < 0) {
      throw new Error(`line ${idx + 1}: negative box size`);
    }
    rows.push({
      frame: nums[0],
      box: [nums[2], nums[3], nums[4], nums[5]],
      score: nums[6],
    });
  });
  return rows;
}
