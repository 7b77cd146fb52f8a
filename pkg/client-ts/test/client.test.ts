import { readFileSync } from "node:fs";
import { join } from "node:path";
import { afterAll, beforeAll, describe, expect, it } from "vitest";

import {
  InvalidStateError,
  ModelHandle,
  WbaugClient,
  WbaugServiceError,
} from "../src/client.js";
import { Fixture, encodePpm, loadFixture, runCli } from "./helpers.js";

let fixture: Fixture;
let client: WbaugClient;
let handle: ModelHandle;

beforeAll(async () => {
  fixture = loadFixture();
  client = new WbaugClient(fixture.baseUrl);
  handle = await client.loadModel(fixture.modelPath);
});

afterAll(async () => {
  await handle.close();
});

describe("lifecycle", () => {
  it("reports health", async () => {
    const health = await client.health();
    expect(health.status).toBe("ok");
  });

  it("info matches the CLI field for field", async () => {
    const info = await handle.info();
    const cliLines = runCli(["info", fixture.modelPath]).trim().split("\n");
    const cli = new Map(
      cliLines.map((line) => {
        const idx = line.indexOf(": ");
        return [line.slice(0, idx), line.slice(idx + 2)] as const;
      })
    );
    expect(String(info.formatVersion)).toBe(cli.get("format_version"));
    expect(info.direction).toBe(cli.get("direction"));
    expect(String(info.records)).toBe(cli.get("records"));
    expect(info.settings.join(", ")).toBe(cli.get("settings"));
    expect(String(info.defaultK)).toBe(cli.get("default_k"));
    expect(String(info.defaultSigma)).toBe(cli.get("default_sigma"));
    expect(info.kernelOrder).toBe(cli.get("kernel_order"));
    expect(info.checksum).toBe(cli.get("checksum"));
  });

  it("gives independent handles for concurrent loads of one file", async () => {
    const [a, b] = await Promise.all([
      client.loadModel(fixture.modelPath),
      client.loadModel(fixture.modelPath),
    ]);
    expect(a.modelId).not.toBe(b.modelId);
    expect(a.checksum).toBe(b.checksum);
    await a.close();
    const bInfo = await b.info(); // closing one handle leaves the other alive
    expect(bInfo.records).toBeGreaterThan(0);
    await b.close();
  });

  it("rejects operations on a closed handle", async () => {
    const doomed = await client.loadModel(fixture.modelPath);
    await doomed.close();
    await expect(doomed.info()).rejects.toBeInstanceOf(InvalidStateError);
    await expect(doomed.close()).rejects.toBeInstanceOf(InvalidStateError);
  });

  it("maps load failures to coded errors", async () => {
    await expect(
      client.loadModel(join(fixture.workspace, "missing.wbm"))
    ).rejects.toMatchObject({ code: "file_not_found", status: 404 });
    const corrupt = join(fixture.workspace, "corrupt.wbm");
    const bytes = readFileSync(fixture.modelPath);
    bytes[100] ^= 0xff;
    const { writeFileSync } = await import("node:fs");
    writeFileSync(corrupt, bytes);
    await expect(client.loadModel(corrupt)).rejects.toMatchObject({
      code: "corrupt_model",
      status: 400,
    });
  });
});

describe("request validation", () => {
  it("rejects settings outside the vocabulary", async () => {
    const image = new Uint8Array(readFileSync(fixture.imagePaths[0]));
    await expect(
      handle.augmentImage(image, { settings: ["9999K_AS"] })
    ).rejects.toMatchObject({ code: "invalid_input", status: 422 });
  });

  it("rejects undecodable image bytes", async () => {
    await expect(
      handle.augmentImage(new Uint8Array([1, 2, 3]))
    ).rejects.toMatchObject({ code: "invalid_input" });
  });

  it("rejects pixel buffers of the wrong size before sending", async () => {
    await expect(async () =>
      handle.augmentPixels({ data: new Uint8Array(10), width: 4, height: 4 })
    ).rejects.toBeInstanceOf(RangeError);
  });

  it("reports grayscale inputs as skipped, not as errors", async () => {
    const gray = new Uint8Array(64 * 48 * 3);
    for (let i = 0; i < 64 * 48; i++) {
      gray[3 * i] = gray[3 * i + 1] = gray[3 * i + 2] = (i * 7) % 256;
    }
    const result = await handle.augmentImage(encodePpm(gray, 64, 48));
    expect(result.outputs).toBeNull();
    expect(result.skipped).toContain("grayscale");
    const forced = await handle.augmentImage(encodePpm(gray, 64, 48), {
      grayscaleScreen: false,
      settings: ["5500K_AS"],
    });
    expect(forced.skipped).toBeNull();
    expect(Object.keys(forced.outputs!)).toEqual(["5500K_AS"]);
  });

  it("rejects augmenting with a correction model", async () => {
    const correction = await client.loadModel(fixture.correctionModelPath);
    const image = new Uint8Array(readFileSync(fixture.imagePaths[0]));
    await expect(correction.augmentImage(image)).rejects.toMatchObject({
      code: "invalid_input",
    });
    await correction.close();
  });
});

describe("correction", () => {
  it("corrects images through the correction model", async () => {
    const correction = await client.loadModel(fixture.correctionModelPath);
    const image = new Uint8Array(readFileSync(fixture.imagePaths[0]));
    const output = await correction.correctImage(image, { outputFormat: "ppm" });
    expect(output.length).toBeGreaterThan(0);
    // corrected pixels decode to the same geometry
    const { decodePpm } = await import("./helpers.js");
    const decoded = decodePpm(output);
    expect(decoded.width).toBe(64);
    expect(decoded.height).toBe(48);
    await correction.close();
  });
});
