import { execFileSync, spawn, ChildProcess } from "node:child_process";
import { readFileSync } from "node:fs";

export interface Fixture {
  workspace: string;
  modelPath: string;
  correctionModelPath: string;
  imagesDir: string;
  imagePaths: string[];
  baseUrl: string;
}

export function loadFixture(): Fixture {
  const path = process.env.WBAUG_FIXTURE;
  if (!path) throw new Error("WBAUG_FIXTURE not set; globalSetup did not run");
  return JSON.parse(readFileSync(path, "utf-8")) as Fixture;
}

/** Run the wbaug CLI; returns stdout. Throws on non-zero exit. */
export function runCli(args: string[]): string {
  return execFileSync("python3", ["-m", "wbaug", ...args], {
    encoding: "utf-8",
    stdio: ["ignore", "pipe", "pipe"],
  });
}

/** Deterministic 32-bit PRNG (mulberry32). */
export function prng(seed: number): () => number {
  let a = seed >>> 0;
  return () => {
    a = (a + 0x6d2b79f5) >>> 0;
    let t = a;
    t = Math.imul(t ^ (t >>> 15), t | 1);
    t ^= t + Math.imul(t ^ (t >>> 7), t | 61);
    return ((t ^ (t >>> 14)) >>> 0) / 4294967296;
  };
}

export function randomPixels(seed: number, width: number, height: number): Uint8Array {
  const next = prng(seed);
  const data = new Uint8Array(width * height * 3);
  for (let i = 0; i < data.length; i++) {
    data[i] = Math.floor(next() * 256);
  }
  return data;
}

/** Binary PPM (P6, maxval 255), the layout the engine reads and writes. */
export function encodePpm(pixels: Uint8Array, width: number, height: number): Uint8Array {
  const header = Buffer.from(`P6\n${width} ${height}\n255\n`, "ascii");
  return new Uint8Array(Buffer.concat([header, Buffer.from(pixels)]));
}

export function decodePpm(data: Uint8Array): {
  pixels: Uint8Array;
  width: number;
  height: number;
} {
  const buf = Buffer.from(data);
  // header: magic, width, height, maxval as whitespace-separated tokens
  let pos = 0;
  const tokens: string[] = [];
  while (tokens.length < 4) {
    while (pos < buf.length && /\s/.test(String.fromCharCode(buf[pos]))) pos++;
    if (buf[pos] === 0x23) {
      // comment line
      while (pos < buf.length && buf[pos] !== 0x0a) pos++;
      continue;
    }
    let start = pos;
    while (pos < buf.length && !/\s/.test(String.fromCharCode(buf[pos]))) pos++;
    tokens.push(buf.subarray(start, pos).toString("ascii"));
  }
  pos++; // single whitespace after maxval
  if (tokens[0] !== "P6" || tokens[3] !== "255") {
    throw new Error(`unsupported PPM header: ${tokens.join(" ")}`);
  }
  const width = parseInt(tokens[1], 10);
  const height = parseInt(tokens[2], 10);
  const pixels = new Uint8Array(buf.subarray(pos, pos + width * height * 3));
  if (pixels.length !== width * height * 3) throw new Error("truncated PPM payload");
  return { pixels, width, height };
}

export async function waitForHealth(baseUrl: string, timeoutMs = 60_000): Promise<void> {
  const deadline = Date.now() + timeoutMs;
  let lastError: unknown = null;
  while (Date.now() < deadline) {
    try {
      const response = await fetch(`${baseUrl}/health`);
      if (response.ok) return;
    } catch (error) {
      lastError = error;
    }
    await new Promise((resolve) => setTimeout(resolve, 250));
  }
  throw new Error(`service at ${baseUrl} never became healthy: ${lastError}`);
}

export function startService(port: number): ChildProcess {
  return spawn(
    "python3",
    ["-m", "wbaug", "serve", "--host", "127.0.0.1", "--port", String(port)],
    { stdio: ["ignore", "inherit", "inherit"] }
  );
}
