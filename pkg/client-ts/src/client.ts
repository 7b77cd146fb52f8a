/**
 * Client for the wbaug HTTP service.
 *
 * The service holds immutable white-balance models; a handle stays valid
 * until closed and is safe to share across concurrent callers. Outputs are
 * bit-identical to what the wbaug CLI writes for the same inputs and
 * parameters, so results can be mixed freely with offline batches.
 */

/** Parameters of a loaded model, as reported by the service and the CLI. */
export interface ModelInfo {
  modelId: string;
  formatVersion: number;
  direction: "emulation" | "correction";
  records: number;
  settings: string[];
  histogramBins: number;
  histogramBounds: [number, number];
  blackLevel: number;
  featureDim: number;
  defaultK: number;
  defaultSigma: number;
  maxFitPixels: number;
  kernelOrder: string;
  chromaConvention: string;
  meanFitResidual: number;
  checksum: string;
}

export interface AugmentOptions {
  /** Setting names like "2850K_AS"; defaults to the whole vocabulary. */
  settings?: string[];
  k?: number;
  sigma?: number;
  /** Skip grayscale inputs (default true, matching the engine). */
  grayscaleScreen?: boolean;
  /** Encoding of image-mode outputs (default "png"). */
  outputFormat?: "png" | "ppm";
}

export interface CorrectOptions {
  k?: number;
  sigma?: number;
  outputFormat?: "png" | "ppm";
}

/** Raw interleaved H x W x 3 pixels. uint8 values are scaled by 1/255. */
export interface PixelBuffer {
  data: Uint8Array | Float64Array;
  width: number;
  height: number;
}

/** Result of image-mode augmentation: encoded bytes per setting name. */
export interface AugmentImageResult {
  outputs: Record<string, Uint8Array> | null;
  /** Set instead of outputs when the grayscale screen rejected the input. */
  skipped: string | null;
}

/** Result of pixel-mode augmentation: 8-bit H x W x 3 buffers per setting. */
export interface AugmentPixelsResult {
  outputs: Record<string, Uint8Array> | null;
  skipped: string | null;
  width: number;
  height: number;
}

/** Error reported by the service, carrying its machine-readable code. */
export class WbaugServiceError extends Error {
  readonly code: string;
  readonly status: number;

  constructor(status: number, code: string, message: string) {
    super(message);
    this.name = "WbaugServiceError";
    this.code = code;
    this.status = status;
  }
}

/** Thrown when a handle is used after close(). */
export class InvalidStateError extends Error {
  constructor(message: string) {
    super(message);
    this.name = "InvalidStateError";
  }
}

function toBase64(data: Uint8Array): string {
  return Buffer.from(data.buffer, data.byteOffset, data.byteLength).toString("base64");
}

function fromBase64(text: string): Uint8Array {
  return new Uint8Array(Buffer.from(text, "base64"));
}

function decodeOutputs(
  outputs: Record<string, string> | null
): Record<string, Uint8Array> | null {
  if (outputs === null) return null;
  const decoded: Record<string, Uint8Array> = {};
  for (const [name, payload] of Object.entries(outputs)) {
    decoded[name] = fromBase64(payload);
  }
  return decoded;
}

function pixelPayload(pixels: PixelBuffer) {
  const { data, width, height } = pixels;
  const expected = width * height * 3;
  if (data.length !== expected) {
    throw new RangeError(
      `pixel buffer holds ${data.length} values, expected ${expected}`
    );
  }
  const bytes =
    data instanceof Float64Array
      ? new Uint8Array(data.buffer, data.byteOffset, data.byteLength)
      : data;
  return {
    data_b64: toBase64(bytes),
    width,
    height,
    dtype: data instanceof Float64Array ? "float64" : "uint8",
  };
}

async function parseFailure(response: Response): Promise<never> {
  let code = "http_error";
  let message = `${response.status} ${response.statusText}`;
  try {
    const body = (await response.json()) as { detail?: unknown };
    const detail = body.detail;
    if (typeof detail === "string") {
      message = detail;
    } else if (detail && typeof detail === "object") {
      const d = detail as { code?: string; message?: string };
      if (d.code) code = d.code;
      if (d.message) message = d.message;
      else message = JSON.stringify(detail);
    }
  } catch {
    // non-JSON body: keep the status line
  }
  throw new WbaugServiceError(response.status, code, message);
}

function toModelInfo(body: Record<string, unknown>): ModelInfo {
  return {
    modelId: body.model_id as string,
    formatVersion: body.format_version as number,
    direction: body.direction as ModelInfo["direction"],
    records: body.records as number,
    settings: body.settings as string[],
    histogramBins: body.histogram_bins as number,
    histogramBounds: body.histogram_bounds as [number, number],
    blackLevel: body.black_level as number,
    featureDim: body.feature_dim as number,
    defaultK: body.default_k as number,
    defaultSigma: body.default_sigma as number,
    maxFitPixels: body.max_fit_pixels as number,
    kernelOrder: body.kernel_order as string,
    chromaConvention: body.chroma_convention as string,
    meanFitResidual: body.mean_fit_residual as number,
    checksum: body.checksum as string,
  };
}

export class WbaugClient {
  readonly baseUrl: string;

  constructor(baseUrl: string) {
    this.baseUrl = baseUrl.replace(/\/+$/, "");
  }

  async request(
    method: string,
    path: string,
    body?: unknown
  ): Promise<Record<string, unknown>> {
    const response = await fetch(this.baseUrl + path, {
      method,
      headers: body === undefined ? {} : { "content-type": "application/json" },
      body: body === undefined ? undefined : JSON.stringify(body),
    });
    if (!response.ok) await parseFailure(response);
    if (response.status === 204) return {};
    return (await response.json()) as Record<string, unknown>;
  }

  async health(): Promise<{ status: string; version: string }> {
    return (await this.request("GET", "/health")) as {
      status: string;
      version: string;
    };
  }

  /** Load a model from a path on the service host; returns a fresh handle. */
  async loadModel(path: string): Promise<ModelHandle> {
    const body = await this.request("POST", "/v1/models", { path });
    return new ModelHandle(this, toModelInfo(body));
  }
}

export class ModelHandle {
  private readonly client: WbaugClient;
  private readonly initialInfo: ModelInfo;
  private closed = false;

  constructor(client: WbaugClient, info: ModelInfo) {
    this.client = client;
    this.initialInfo = info;
  }

  get modelId(): string {
    return this.initialInfo.modelId;
  }

  get checksum(): string {
    return this.initialInfo.checksum;
  }

  private guard(): void {
    if (this.closed) {
      throw new InvalidStateError(`handle ${this.modelId} is closed`);
    }
  }

  async info(): Promise<ModelInfo> {
    this.guard();
    const body = await this.client.request("GET", `/v1/models/${this.modelId}`);
    return toModelInfo(body);
  }

  /** Augment an encoded PNG/PPM image; outputs are encoded image bytes. */
  async augmentImage(
    image: Uint8Array,
    options: AugmentOptions = {}
  ): Promise<AugmentImageResult> {
    this.guard();
    const body = await this.client.request(
      "POST",
      `/v1/models/${this.modelId}/augment`,
      {
        image_b64: toBase64(image),
        settings: options.settings ?? null,
        k: options.k ?? null,
        sigma: options.sigma ?? null,
        grayscale_screen: options.grayscaleScreen ?? true,
        output_format: options.outputFormat ?? "png",
      }
    );
    return {
      outputs: decodeOutputs(body.outputs as Record<string, string> | null),
      skipped: (body.skipped as string | null) ?? null,
    };
  }

  /** Augment raw pixels; outputs are 8-bit H x W x 3 buffers. */
  async augmentPixels(
    pixels: PixelBuffer,
    options: AugmentOptions = {}
  ): Promise<AugmentPixelsResult> {
    this.guard();
    const body = await this.client.request(
      "POST",
      `/v1/models/${this.modelId}/augment`,
      {
        pixels: pixelPayload(pixels),
        settings: options.settings ?? null,
        k: options.k ?? null,
        sigma: options.sigma ?? null,
        grayscale_screen: options.grayscaleScreen ?? true,
      }
    );
    return {
      outputs: decodeOutputs(body.outputs as Record<string, string> | null),
      skipped: (body.skipped as string | null) ?? null,
      width: (body.width as number | null) ?? pixels.width,
      height: (body.height as number | null) ?? pixels.height,
    };
  }

  /** Remove a white-balance cast from an encoded image. */
  async correctImage(
    image: Uint8Array,
    options: CorrectOptions = {}
  ): Promise<Uint8Array> {
    this.guard();
    const body = await this.client.request(
      "POST",
      `/v1/models/${this.modelId}/correct`,
      {
        image_b64: toBase64(image),
        k: options.k ?? null,
        sigma: options.sigma ?? null,
        output_format: options.outputFormat ?? "png",
      }
    );
    return fromBase64(body.output as string);
  }

  /** Remove a cast from raw pixels; returns an 8-bit buffer. */
  async correctPixels(
    pixels: PixelBuffer,
    options: CorrectOptions = {}
  ): Promise<{ pixels: Uint8Array; width: number; height: number }> {
    this.guard();
    const body = await this.client.request(
      "POST",
      `/v1/models/${this.modelId}/correct`,
      {
        pixels: pixelPayload(pixels),
        k: options.k ?? null,
        sigma: options.sigma ?? null,
      }
    );
    return {
      pixels: fromBase64(body.output as string),
      width: (body.width as number | null) ?? pixels.width,
      height: (body.height as number | null) ?? pixels.height,
    };
  }

  /** Release the server-side handle; the handle is unusable afterwards. */
  async close(): Promise<void> {
    if (this.closed) {
      throw new InvalidStateError(`handle ${this.modelId} is already closed`);
    }
    await this.client.request("DELETE", `/v1/models/${this.modelId}`);
    this.closed = true;
  }
}
