"""Command line front end: `python -m trainkit config.json`.

The config file holds TrainConfig fields as a flat JSON object; `dataset`
and `out` are required, everything else falls back to the dataclass
defaults. Progress goes to stderr, a one-line JSON summary to stdout.
"""

from __future__ import annotations

import json
import sys
from pathlib import Path

from .train import TrainConfig, train

KNOWN = {"dataset", "out", "epochs", "batch_size", "lr", "t_count",
         "beta_start", "beta_end", "base_channels", "groups", "temb_dim",
         "seed", "device", "check_count"}


def main(argv=None) -> int:
    argv = sys.argv[1:] if argv is None else list(argv)
    if len(argv) != 1:
        print("usage: python -m trainkit config.json", file=sys.stderr)
        return 2
    doc = json.loads(Path(argv[0]).read_text())
    unknown = set(doc) - KNOWN
    if unknown:
        print(f"unknown config keys: {sorted(unknown)}", file=sys.stderr)
        return 1
    for key in ("dataset", "out"):
        if key not in doc:
            print(f"config is missing required key {key!r}", file=sys.stderr)
            return 1
    try:
        result = train(TrainConfig(**doc),
                       log=lambda line: print(line, file=sys.stderr))
    except (ValueError, RuntimeError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    print(json.dumps({
        "out": str(result.path),
        "epochs": len(result.history),
        "first_loss": result.history[0],
        "final_loss": result.history[-1],
        "loss_drop": result.loss_drop,
    }))
    return 0


if __name__ == "__main__":
    sys.exit(main())
