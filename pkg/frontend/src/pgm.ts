/** Minimal binary (P5) PGM parser for local uploads. */
import { Grid } from "./rle.js";

export function parsePgm(buffer: ArrayBuffer): Grid {
  const bytes = new Uint8Array(buffer);
  if (bytes[0] !== 0x50 || bytes[1] !== 0x35) {
    throw new Error("not a binary (P5) PGM file");
  }
  const isSpace = (b: number) => b === 0x20 || b === 0x09 || b === 0x0a || b === 0x0d;
  let pos = 2;
  const tokens: number[] = [];
  while (tokens.length < 3) {
    while (pos < bytes.length && isSpace(bytes[pos])) pos++;
    if (bytes[pos] === 0x23) { // '#' comment
      while (pos < bytes.length && bytes[pos] !== 0x0a) pos++;
      continue;
    }
    let start = pos;
    while (pos < bytes.length && !isSpace(bytes[pos])) pos++;
    const text = new TextDecoder().decode(bytes.subarray(start, pos));
    const value = Number.parseInt(text, 10);
    if (!Number.isFinite(value)) throw new Error(`bad PGM header token: ${text}`);
    tokens.push(value);
  }
  pos++; // single whitespace after maxval
  const [width, height, maxval] = tokens;
  if (maxval !== 255) throw new Error(`only 8-bit PGM supported, maxval=${maxval}`);
  const expected = width * height;
  if (bytes.length - pos < expected) throw new Error("PGM payload truncated");
  return new Grid(height, width, bytes.slice(pos, pos + expected));
}
