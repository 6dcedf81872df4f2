import { describe, expect, it } from "vitest";

import { parsePgm } from "../src/pgm.js";

function pgmBytes(header: string, pixels: number[]): ArrayBuffer {
  const head = new TextEncoder().encode(header);
  const body = new Uint8Array(pixels);
  const out = new Uint8Array(head.length + body.length);
  out.set(head);
  out.set(body, head.length);
  return out.buffer;
}

describe("pgm parser", () => {
  it("parses a small P5 file", () => {
    const grid = parsePgm(pgmBytes("P5\n3 2\n255\n", [0, 10, 20, 30, 40, 250]));
    expect(grid.height).toBe(2);
    expect(grid.width).toBe(3);
    expect(grid.get(1, 2)).toBe(250);
  });

  it("skips header comments", () => {
    const grid = parsePgm(pgmBytes("P5\n# made by a test\n2 2\n255\n", [1, 2, 3, 4]));
    expect(Array.from(grid.data)).toEqual([1, 2, 3, 4]);
  });

  it("rejects ascii pgm and wrong depth", () => {
    expect(() => parsePgm(pgmBytes("P2\n1 1\n255\n", [0]))).toThrow(/P5/);
    expect(() => parsePgm(pgmBytes("P5\n1 1\n65535\n", [0, 0]))).toThrow(/8-bit/);
  });

  it("rejects truncated payloads", () => {
    expect(() => parsePgm(pgmBytes("P5\n2 2\n255\n", [1, 2]))).toThrow(/truncated/);
  });
});
