"""Command line entry points for the inference service.

Two subcommands:
  serve                    run the HTTP service for one checkpoint
  export-reference-labels  relabel a dataset file directly in process

Exit codes: 0 on success, 2 on usage errors (unreadable or mismatched
files, bad arguments).
"""

from __future__ import annotations

import argparse
import sys

from .formats import FormatError, read_dataset, write_dataset
from .model import load_model

EXIT_OK = 0
EXIT_USAGE = 2


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="victim-server",
        description="Serve a checkpointed classifier over HTTP, or relabel "
                    "dataset files with it directly.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    serve = sub.add_parser("serve", help="run the HTTP inference service")
    serve.add_argument("--model", required=True, help="checkpoint file to serve")
    serve.add_argument("--host", default="127.0.0.1", help="bind address")
    serve.add_argument("--port", type=int, default=8080, help="bind port")

    export = sub.add_parser(
        "export-reference-labels",
        help="replace a dataset file's probabilities with this model's outputs",
    )
    export.add_argument("--model", required=True, help="checkpoint file")
    export.add_argument("--inputs", required=True, help="dataset file to relabel")
    export.add_argument("--output", required=True, help="destination dataset file")
    return parser


def cmd_serve(args) -> int:
    import uvicorn

    from .app import create_app

    try:
        model = load_model(args.model)
    except (OSError, FormatError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    print(f"serving model {model.model_id} "
          f"(input_dim={model.input_dim}, class_count={model.class_count}) "
          f"on {args.host}:{args.port}")
    uvicorn.run(create_app(model), host=args.host, port=args.port,
                log_level="warning")
    return EXIT_OK


def cmd_export(args) -> int:
    try:
        model = load_model(args.model)
        data = read_dataset(args.inputs)
    except (OSError, FormatError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    if data.features.shape[1] != model.input_dim:
        print(f"error: dataset has {data.features.shape[1]} features but the "
              f"model expects {model.input_dim}", file=sys.stderr)
        return EXIT_USAGE
    probs = model.predict(data.features.astype(float))
    write_dataset(args.output, data.features, probs, data.generations)
    print(f"wrote {len(data)} labeled rows to {args.output}")
    return EXIT_OK


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    if args.command == "serve":
        return cmd_serve(args)
    return cmd_export(args)


if __name__ == "__main__":
    sys.exit(main())
