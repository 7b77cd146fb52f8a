/**
 * Binding parity: outputs fetched through the client must be bit-identical
 * to the files the CLI writes for the same inputs and parameters, and
 * concurrent calls on one handle must match serial calls.
 */

import { mkdtempSync, readFileSync } from "node:fs";
import { tmpdir } from "node:os";
import { basename, join } from "node:path";
import { afterAll, beforeAll, describe, expect, it } from "vitest";

import { ModelHandle, WbaugClient } from "../src/client.js";
import {
  Fixture,
  decodePpm,
  loadFixture,
  runCli,
} from "./helpers.js";

let fixture: Fixture;
let client: WbaugClient;
let handle: ModelHandle;
let cliOutDir: string;

beforeAll(async () => {
  fixture = loadFixture();
  client = new WbaugClient(fixture.baseUrl);
  handle = await client.loadModel(fixture.modelPath);
  cliOutDir = mkdtempSync(join(tmpdir(), "wbaug-cli-out-"));
  runCli([
    "augment",
    fixture.modelPath,
    ...fixture.imagePaths,
    "-o",
    cliOutDir,
  ]);
}, 240_000);

afterAll(async () => {
  await handle.close();
});

describe("criterion 11: binding parity", () => {
  it("client outputs are bit-identical to CLI output files for 20 images", async () => {
    const manifest = JSON.parse(
      readFileSync(join(cliOutDir, "run_manifest.json"), "utf-8")
    ) as { results: { input: string; outputs: Record<string, string> }[] };
    expect(manifest.results).toHaveLength(20);

    let compared = 0;
    for (const entry of manifest.results) {
      const image = new Uint8Array(readFileSync(entry.input));
      const result = await handle.augmentImage(image, { outputFormat: "ppm" });
      expect(result.skipped).toBeNull();
      const outputs = result.outputs!;
      expect(Object.keys(outputs)).toHaveLength(10);
      for (const [setting, fileName] of Object.entries(entry.outputs)) {
        const cliBytes = new Uint8Array(readFileSync(join(cliOutDir, fileName)));
        expect(
          Buffer.from(outputs[setting]).equals(Buffer.from(cliBytes)),
          `${basename(entry.input)} @ ${setting}`
        ).toBe(true);
        compared++;
      }
    }
    expect(compared).toBe(200);
  }, 240_000);

  it("pixel-mode outputs equal decoded image-mode outputs", async () => {
    const image = new Uint8Array(readFileSync(fixture.imagePaths[0]));
    const source = decodePpm(image);
    const viaImage = await handle.augmentImage(image, {
      settings: ["2850K_AS", "7500K_CS"],
      outputFormat: "ppm",
    });
    const viaPixels = await handle.augmentPixels(
      { data: source.pixels, width: source.width, height: source.height },
      { settings: ["2850K_AS", "7500K_CS"] }
    );
    expect(viaPixels.skipped).toBeNull();
    for (const setting of ["2850K_AS", "7500K_CS"]) {
      const decoded = decodePpm(viaImage.outputs![setting]);
      expect(
        Buffer.from(viaPixels.outputs![setting]).equals(Buffer.from(decoded.pixels))
      ).toBe(true);
    }
  }, 120_000);

  it("float64 pixels give the same outputs as their 8-bit source", async () => {
    const source = decodePpm(new Uint8Array(readFileSync(fixture.imagePaths[1])));
    const asFloats = new Float64Array(source.pixels.length);
    for (let i = 0; i < source.pixels.length; i++) asFloats[i] = source.pixels[i] / 255;
    const fromBytes = await handle.augmentPixels(
      { data: source.pixels, width: source.width, height: source.height },
      { settings: ["5500K_CS"] }
    );
    const fromFloats = await handle.augmentPixels(
      { data: asFloats, width: source.width, height: source.height },
      { settings: ["5500K_CS"] }
    );
    expect(
      Buffer.from(fromFloats.outputs!["5500K_CS"]).equals(
        Buffer.from(fromBytes.outputs!["5500K_CS"])
      )
    ).toBe(true);
  }, 120_000);

  it("8 concurrent calls on one handle match serial results", async () => {
    const images = fixture.imagePaths
      .slice(0, 8)
      .map((p) => new Uint8Array(readFileSync(p)));
    const options = { settings: ["2850K_AS", "6500K_CS"], outputFormat: "ppm" as const };

    const serial: Record<string, Uint8Array>[] = [];
    for (const image of images) {
      serial.push((await handle.augmentImage(image, options)).outputs!);
    }
    const concurrent = await Promise.all(
      images.map((image) => handle.augmentImage(image, options))
    );
    concurrent.forEach((result, i) => {
      for (const setting of options.settings) {
        expect(
          Buffer.from(result.outputs![setting]).equals(
            Buffer.from(serial[i][setting])
          ),
          `image ${i} @ ${setting}`
        ).toBe(true);
      }
    });
  }, 240_000);
});
