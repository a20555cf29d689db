"""Adapter command line: serve the protocol, or run the fine-tune driver.

Imports are deferred per subcommand so `serve` does not pay for torch and
`finetune` does not pay for the HTTP stack.
"""

from __future__ import annotations

import argparse
import json
import sys


def main(argv: list[str] | None = None) -> int:
    parser = argparse.ArgumentParser(prog="tabe-adapter")
    sub = parser.add_subparsers(dest="command", required=True)

    serve_p = sub.add_parser("serve", help="serve the wire protocol (stdio or HTTP)")
    serve_p.add_argument("--config", required=True, help="adapter.yaml")

    ft = sub.add_parser("finetune", help="LoRA fine-tune from a finetune_manifest.json")
    ft.add_argument("--manifest", required=True)
    ft.add_argument("--out-dir", default=None, help="where to write state and log")
    ft.add_argument("--steps", type=int, default=None, help="override manifest steps")
    ft.add_argument("--learning-rate", type=float, default=None)
    ft.add_argument("--resolution", type=int, nargs=2, default=None, metavar=("W", "H"))
    ft.add_argument("--sequence-length", type=int, default=None)
    ft.add_argument("--device", default="cpu")
    ft.add_argument("--seed", type=int, default=0)

    args = parser.parse_args(argv)
    from .config import ConfigError

    try:
        if args.command == "serve":
            from .config import load_config
            from .server import serve

            serve(load_config(args.config))
            return 0

        from .finetune import FinetuneError, finetune

        try:
            result = finetune(
                args.manifest,
                overrides={
                    "steps": args.steps,
                    "learning_rate": args.learning_rate,
                    "resolution": list(args.resolution) if args.resolution else None,
                    "sequence_length": args.sequence_length,
                },
                out_dir=args.out_dir,
                device=args.device,
                seed=args.seed,
            )
        except FinetuneError as exc:
            print(f"error: {exc}", file=sys.stderr)
            return 2
        print(json.dumps({
            "state": str(result.state_path),
            "log": str(result.log_path),
            "steps": result.steps,
            "frames": result.frames,
            "trained_frames": result.trained_frames,
            "final_loss": result.final_loss,
        }, indent=2))
        return 0
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
