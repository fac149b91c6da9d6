"""Command-line entry point: ``fsomimo {train,sweep,validate-channel,plot}``.

Exit status is 0 on success, 2 for configuration or input errors (bad
config, model/scenario mismatch, CSV schema violation), 3 when training
diverges and 4 for file-system errors.
"""

from __future__ import annotations

import argparse
import sys

from fsomimo import harness
from fsomimo import neuralnet as nn
from fsomimo import pipelines as pl

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_DIVERGED = 3
EXIT_IO = 4


def _overrides(args: argparse.Namespace) -> dict[str, str]:
    out: dict[str, str] = {}
    for item in args.set or []:
        if "=" not in item:
            raise harness.ConfigError(f"--set expects key=value, got {item!r}")
        key, val = item.split("=", 1)
        out[key.strip()] = val.strip()
    for key, attr in (("seed", "seed"), ("out_dir", "out"), ("trials", "trials"), ("grid", "grid")):
        val = getattr(args, attr, None)
        if val is not None:
            out[key] = str(val)
    return out


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="fsomimo", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p: argparse.ArgumentParser) -> None:
        p.add_argument("--config", help="key = value config file")
        p.add_argument("--seed", type=int, help="master seed (u64)")
        p.add_argument("--out", help="output directory")
        p.add_argument("--set", action="append", metavar="KEY=VALUE", help="override a config key (repeatable)")

    p = sub.add_parser("train", help="train the configured DNN detector")
    common(p)
    p = sub.add_parser("sweep", help="evaluate SER over an Es/N0 grid")
    common(p)
    p.add_argument("--trials", type=int, help="trials per grid point")
    p.add_argument("--grid", help="comma-separated Es/N0 values in dB")
    p = sub.add_parser("validate-channel", help="check sampler moments and KS statistic")
    common(p)
    p = sub.add_parser("plot", help="draw SER CSVs as one SVG chart")
    p.add_argument("csv", nargs="+")
    p.add_argument("--out", required=True, help="destination SVG file")
    p.add_argument("--title", default="")
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.command == "plot":
            path = harness.cmd_plot(args.csv, args.out, args.title)
            print(path)
            return EXIT_OK
        cfg = harness.load_config(args.config, _overrides(args))
        if args.command == "train":
            files = harness.cmd_train(cfg)
        elif args.command == "sweep":
            files = harness.cmd_sweep(cfg)
        else:
            files = harness.cmd_validate_channel(cfg)
            print(files["report"].read_text(), end="")
        for name, path in files.items():
            print(f"{name}: {path}")
        return EXIT_OK
    except (harness.ConfigError, harness.SchemaError, pl.ModelMismatchError, nn.ModelFileError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except pl.TrainingDivergedError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DIVERGED
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
