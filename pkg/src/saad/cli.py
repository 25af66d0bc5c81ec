"""``saad`` command line: generate, fit-stat, train, sweep, eval.

Exit codes: 0 success, 2 invalid config/arguments/data, 3 file-system
failure, 4 numerical failure. ``SAAD_LOG`` sets the log level (default
WARNING).
"""
from __future__ import annotations

import argparse
import json
import logging
import os
import sys

from saad import config, pipeline
from saad.errors import SaadError, ValidationError

EXIT_OK, EXIT_VALIDATION, EXIT_IO, EXIT_COMPUTATION = 0, 2, 3, 4

log = logging.getLogger("saad")


def _fmt(x) -> str:
    return "undefined" if x is None else f"{x:.4f}"


def cmd_generate(cfg: config.RunConfig) -> None:
    for split, path in pipeline.generate_data(cfg).items():
        print(f"{split}: {path}")


def cmd_fit_stat(cfg: config.RunConfig) -> None:
    info = pipeline.fit_stat(cfg)
    if cfg.stat.calibrate_target is not None:
        log.warning("calibrated t = %s (target anomaly rate %s)", info["t"], cfg.stat.calibrate_target)
    print(f"t={info['t']} k={info['k']} artificial anomaly rate: "
          + ", ".join(f"{n}={r:.4f}" for n, r in info["rates"].items()))


def cmd_train(cfg: config.RunConfig) -> None:
    _, history = pipeline.train_model(cfg)
    print(f"epochs={len(history.val_loss)} best_epoch={history.best_epoch} "
          f"best_val_loss={history.val_loss[history.best_epoch - 1]:.6f}")


def cmd_sweep(cfg: config.RunConfig) -> None:
    grid = pipeline.run_sweep(cfg)
    a, b, acc = grid.best()
    print(f"grid {len(grid.b_values)}x{len(grid.a_values)} written to {cfg.out_dir}; "
          f"best accuracy {acc:.4f} at a={a} b={b}")


def cmd_eval(cfg: config.RunConfig) -> None:
    result = pipeline.evaluate(cfg)
    for section in ("statistical", "fcn", "aggregated"):
        r = result[section]
        print(f"{section:12s} accuracy={_fmt(r['accuracy'])} precision={_fmt(r['precision'])} "
              f"recall={_fmt(r['recall'])} f1={_fmt(r['f1'])} f_beta({r['beta']:g})={_fmt(r['f_beta'])}")
    print("disagreements: " + json.dumps(result["disagreements"]))


COMMANDS = {
    "generate": cmd_generate,
    "fit-stat": cmd_fit_stat,
    "train": cmd_train,
    "sweep": cmd_sweep,
    "eval": cmd_eval,
}


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_VALIDATION, f"{self.prog}: error: {message}\n")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="saad", description="Statistical + FCN aggregated anomaly detection.")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", required=True, help="YAML run configuration")
        p.add_argument("--seed", type=int, help="global seed (overrides config)")
        p.add_argument("--out", help="output directory (overrides config)")
        p.add_argument("--a", type=float, help="aggregation threshold a")
        p.add_argument("--b", type=float, help="aggregation threshold b")
        p.add_argument("--beta", type=float, help="beta of the reported F-beta score")
        p.add_argument("--calibrate-t", type=float, metavar="RATE",
                       help="pick t whose artificial anomaly rate is closest to RATE")
    return parser


def main(argv=None) -> int:
    level = os.environ.get("SAAD_LOG", "WARNING").upper()
    if not isinstance(logging.getLevelName(level), int):
        level = "WARNING"
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s")
    args = build_parser().parse_args(argv)
    try:
        cfg = config.override(config.load(args.config), seed=args.seed, out_dir=args.out,
                              a=args.a, b=args.b, beta=args.beta, calibrate_t=args.calibrate_t)
        COMMANDS[args.command](cfg)
    except ValidationError as exc:
        print(f"saad: invalid input: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except OSError as exc:
        print(f"saad: I/O error: {exc}", file=sys.stderr)
        return EXIT_IO
    except (SaadError, ArithmeticError) as exc:
        print(f"saad: computation failed: {exc}", file=sys.stderr)
        return EXIT_COMPUTATION
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
