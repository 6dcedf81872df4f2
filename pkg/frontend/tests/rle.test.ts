import { describe, expect, it } from "vitest";

import { decodeGrid, encodeGrid, Grid } from "../src/rle.js";

describe("rle codec", () => {
  it("round-trips random grids", () => {
    for (let trial = 0; trial < 10; trial++) {
      const grid = Grid.empty(9, 7);
      for (let i = 0; i < grid.data.length; i++) {
        grid.data[i] = Math.floor(Math.random() * 4);
      }
      const back = decodeGrid(encodeGrid(grid));
      expect(back.height).toBe(9);
      expect(back.width).toBe(7);
      expect(Array.from(back.data)).toEqual(Array.from(grid.data));
    }
  });

  it("decodes the documented wire form", () => {
    const grid = decodeGrid({ shape: [2, 2], rle: [0, 1, 5, 2, 0, 1] });
    expect(Array.from(grid.data)).toEqual([0, 5, 5, 0]);
  });

  it("encodes runs compactly", () => {
    const grid = new Grid(1, 6, new Uint8Array([1, 1, 1, 0, 0, 2]));
    expect(encodeGrid(grid)).toEqual({ shape: [1, 6], rle: [1, 3, 0, 2, 2, 1] });
  });

  it("rejects coverage mismatches", () => {
    expect(() => decodeGrid({ shape: [2, 2], rle: [1, 3] })).toThrow(/covers/);
    expect(() => decodeGrid({ shape: [2, 2], rle: [1, 5] })).toThrow(/overflow/);
    expect(() => decodeGrid({ shape: [2, 2], rle: [1, 2, 0] })).toThrow(/pairs/);
    expect(() => decodeGrid({ shape: [2, 2], rle: [1, 0, 1, 4] })).toThrow(/positive/);
  });

  it("counts nonzero pixels", () => {
    const grid = new Grid(2, 2, new Uint8Array([0, 1, 2, 0]));
    expect(grid.countOn()).toBe(2);
  });
});
