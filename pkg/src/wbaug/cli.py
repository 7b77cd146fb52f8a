"""Command-line interface. Thin argument parsing over the library calls.

Subcommands: build-model, augment, correct, info, synth, serve.
Exit codes: 0 success, 1 usage error, 2 data error, 3 model error.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from . import __version__
from .errors import (
    EXIT_DATA,
    EXIT_MODEL,
    EXIT_OK,
    EXIT_USAGE,
    InvalidInputError,
    ModelFormatError,
    WbaugError,
)
from .features import HistogramParams
from .pipeline import AugmentationRequest, run_batch
from .store import (
    DEFAULT_K,
    DEFAULT_SIGMA,
    Direction,
    build_model,
    load_model,
    model_info,
    read_manifest,
    save_model,
)


class _Parser(argparse.ArgumentParser):
    # argparse exits 2 on usage errors; the CLI contract wants 1
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="wbaug", description=__doc__)
    parser.add_argument("--version", action="version", version=f"wbaug {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("build-model", parents=[], help="fit a model from a dataset manifest")
    p.add_argument("manifest", help="dataset manifest (one group per line)")
    p.add_argument("-o", "--output", required=True, help="model file to write")
    p.add_argument(
        "--direction",
        choices=["emulate", "correct"],
        default="emulate",
        help="transform direction stored in the model",
    )
    p.add_argument("--bins", type=int, default=60, help="histogram bins per axis")
    p.add_argument("--k", type=int, default=DEFAULT_K, help="default neighbor count")
    p.add_argument("--sigma", type=float, default=DEFAULT_SIGMA, help="default RBF width")

    p = sub.add_parser("augment", help="emulate white-balance errors on images")
    p.add_argument("model", help="emulation-direction model file")
    p.add_argument("inputs", nargs="+", help="input images")
    p.add_argument("-o", "--output-dir", required=True)
    p.add_argument("--settings", help="comma-separated setting names (default: all)")
    p.add_argument("--k", type=int, default=None)
    p.add_argument("--sigma", type=float, default=None)
    p.add_argument(
        "--no-grayscale-screen",
        action="store_true",
        help="also process grayscale images instead of skipping them",
    )

    p = sub.add_parser("correct", help="remove white-balance casts from images")
    p.add_argument("model", help="correction-direction model file")
    p.add_argument("inputs", nargs="+", help="input images")
    p.add_argument("-o", "--output-dir", required=True)
    p.add_argument("--k", type=int, default=None)
    p.add_argument("--sigma", type=float, default=None)

    p = sub.add_parser("info", help="print model parameters")
    p.add_argument("model")

    p = sub.add_parser("synth", help="generate a synthetic paired dataset + manifest")
    p.add_argument("-o", "--output-dir", required=True)
    p.add_argument("--count", type=int, default=60, help="number of base images")
    p.add_argument("--width", type=int, default=96)
    p.add_argument("--height", type=int, default=64)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--config", help="camera emulation config (defaults built in)")

    p = sub.add_parser("serve", help="run the HTTP service")
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=8000)

    return parser


class _ExitWith(Exception):
    def __init__(self, code: int, message: str):
        self.code = code
        self.message = message


def _load_model_checked(path):
    # model-file problems (missing, unreadable, bad format) are exit 3
    try:
        return load_model(path)
    except ModelFormatError as exc:
        raise _ExitWith(EXIT_MODEL, f"model error: {exc}")
    except (InvalidInputError, OSError) as exc:
        raise _ExitWith(EXIT_MODEL, f"model error: {exc}")


def _cmd_build_model(args) -> int:
    try:
        groups = read_manifest(args.manifest)
        direction = (
            Direction.EMULATION if args.direction == "emulate" else Direction.CORRECTION
        )
        model, report = build_model(
            groups,
            direction=direction,
            hist_params=HistogramParams(bins=args.bins),
            default_k=args.k,
            default_sigma=args.sigma,
        )
        save_model(model, args.output)
    except (WbaugError, OSError) as exc:
        raise _ExitWith(EXIT_DATA, f"data error: {exc}")
    print(report.format())
    print(f"model written to {args.output} (checksum {model.checksum()})")
    return EXIT_OK


def _run_batch_command(args, mode: str) -> int:
    settings = None
    if getattr(args, "settings", None):
        settings = tuple(s.strip() for s in args.settings.split(",") if s.strip())
    request = AugmentationRequest(
        model_path=args.model,
        inputs=tuple(args.inputs),
        output_dir=args.output_dir,
        mode=mode,
        settings=settings,
        k=args.k,
        sigma=args.sigma,
        grayscale_screen=(
            False if getattr(args, "no_grayscale_screen", False) else None
        ),
    )
    model = _load_model_checked(args.model)
    try:
        manifest = run_batch(request, model=model)
    except InvalidInputError as exc:
        # bad settings/k/sigma/direction for this model: a request mistake
        raise _ExitWith(EXIT_USAGE, f"usage error: {exc}")
    except (WbaugError, OSError) as exc:
        raise _ExitWith(EXIT_DATA, f"data error: {exc}")
    ok = sum(1 for r in manifest.results if r["status"] == "ok")
    skipped = sum(1 for r in manifest.results if r["status"] == "skipped")
    failed = sum(1 for r in manifest.results if r["status"] == "failed")
    print(f"processed {ok}, skipped {skipped}, failed {failed} of {len(manifest.results)} inputs")
    for entry in manifest.results:
        if entry["status"] != "ok":
            print(f"  {entry['status']}: {entry['input']}: {entry['reason']}")
    print(f"run manifest: {Path(args.output_dir) / 'run_manifest.json'}")
    return EXIT_OK


def _cmd_info(args) -> int:
    info = model_info(_load_model_checked(args.model))
    for key, value in info.items():
        if isinstance(value, list):
            value = ", ".join(str(v) for v in value)
        print(f"{key}: {value}")
    return EXIT_OK


def _cmd_synth(args) -> int:
    from .synth import (
        CameraEmulation,
        generate_bases,
        load_emulation,
        make_manifest,
        write_emulation,
    )

    emulation = load_emulation(args.config) if args.config else CameraEmulation()
    out_dir = Path(args.output_dir)
    bases = generate_bases(
        out_dir / "bases", args.count, args.width, args.height, args.seed
    )
    manifest_path, skipped = make_manifest(bases, out_dir / "dataset", emulation)
    write_emulation(emulation, out_dir / "emulation.cfg")  # record what rendered it
    for path, reason in skipped:
        print(f"skipped {path}: {reason}")
    print(f"{len(bases) - len(skipped)} groups rendered")
    print(f"manifest: {manifest_path}")
    return EXIT_OK


def _cmd_serve(args) -> int:
    import uvicorn

    from .service import app

    uvicorn.run(app, host=args.host, port=args.port, log_level="warning")
    return EXIT_OK


def main(argv=None) -> int:
    from ._alloc import tune_for_large_buffers

    tune_for_large_buffers()
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:  # argparse exits for usage errors and --version
        return int(exc.code or 0)
    handlers = {
        "build-model": _cmd_build_model,
        "augment": lambda a: _run_batch_command(a, "augment"),
        "correct": lambda a: _run_batch_command(a, "correct"),
        "info": _cmd_info,
        "synth": _cmd_synth,
        "serve": _cmd_serve,
    }
    try:
        return handlers[args.command](args)
    except _ExitWith as exc:
        print(f"wbaug: {exc.message}", file=sys.stderr)
        return exc.code
    except ModelFormatError as exc:
        print(f"wbaug: model error: {exc}", file=sys.stderr)
        return EXIT_MODEL
    except InvalidInputError as exc:
        print(f"wbaug: usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (WbaugError, OSError) as exc:
        print(f"wbaug: data error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
