export {
  AugmentImageResult,
  AugmentOptions,
  AugmentPixelsResult,
  CorrectOptions,
  InvalidStateError,
  ModelHandle,
  ModelInfo,
  PixelBuffer,
  WbaugClient,
  WbaugServiceError,
} from "./client.js";
