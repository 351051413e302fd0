"""Command-line runner.

    pflego run --config exp.yaml [--seed S] [--rounds T] [--algorithm A] [--threads N] [--out DIR]
    pflego compare RUN_A RUN_B [--window W] [--figure FILE]
    pflego verify --config exp.yaml
    pflego plot RUN [RUN ...] --out FILE
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from datetime import datetime
from pathlib import Path

import yaml

from .config import parse_config
from .errors import PflegoError, UsageError
from .orchestrator import run_experiment
from .orchestrator.verify import run_checks
from .reporting import compare_runs, prepare_run_dir, summarize, write_manifest, write_rounds_csv, write_summary

log = logging.getLogger("pflego")

EXIT_OK, EXIT_FAIL, EXIT_USAGE = 0, 1, 2


def _overrides(args) -> dict:
    out = {
        "seed": getattr(args, "seed", None),
        "rounds": getattr(args, "rounds", None),
        "algorithm": getattr(args, "algorithm", None),
        "threads": getattr(args, "threads", None),
    }
    for item in getattr(args, "set", None) or []:
        key, sep, value = item.partition("=")
        if not sep or not key:
            raise UsageError(f"--set expects KEY=VALUE, got {item!r}")
        out[key.strip()] = yaml.safe_load(value)
    return out


def cmd_run(args) -> int:
    cfg, resolved = parse_config(args.config, _overrides(args))
    if args.out:
        run_dir = Path(args.out)
    else:
        stamp = datetime.now().strftime("%Y%m%d-%H%M%S")
        run_dir = Path("runs") / f"{resolved['algorithm']}-seed{resolved['seed']}-{stamp}"
    run_dir = prepare_run_dir(run_dir)
    outputs = {"rounds": str(run_dir / "rounds.csv"), "summary": str(run_dir / "summary.json")}
    if resolved["output"]["figures"]:
        outputs["figure"] = str(run_dir / "curves.png")
    write_manifest(run_dir, resolved, outputs)
    log.info("running %s for %d rounds into %s", resolved["algorithm"], cfg.rounds, run_dir)

    reports = run_experiment(cfg)

    write_rounds_csv(outputs["rounds"], reports, wall_time=resolved["output"]["wall_time"])
    summary = summarize(reports, cfg.window, {"algorithm": resolved["algorithm"], "seed": resolved["seed"]})
    write_summary(outputs["summary"], summary)
    if "figure" in outputs:
        from .plotting import plot_curves

        plot_curves([run_dir], [resolved["algorithm"]], out=outputs["figure"])
    fw = summary["final_window"]
    print(
        f"{run_dir}: final-{fw['window']} loss {fw['global_train_loss']['mean']:.6f} "
        f"± {fw['global_train_loss']['std']:.6f}, accuracy {fw['mean_test_accuracy']['mean']:.4f} "
        f"± {fw['mean_test_accuracy']['std']:.4f}"
    )
    return EXIT_OK


def cmd_compare(args) -> int:
    for d in (args.run_a, args.run_b):
        if not (Path(d) / "rounds.csv").is_file():
            raise UsageError(f"{d} has no rounds.csv")
    text, _ = compare_runs(args.run_a, args.run_b, args.window)
    print(text)
    if args.figure:
        from .plotting import plot_curves

        plot_curves([args.run_a, args.run_b], ["A: " + Path(args.run_a).name, "B: " + Path(args.run_b).name], out=args.figure)
        print(f"figure written to {args.figure}")
    return EXIT_OK


def cmd_verify(args) -> int:
    _, resolved = parse_config(args.config, _overrides(args))
    checks = run_checks(resolved["seed"])
    for c in checks:
        print(f"{'PASS' if c.passed else 'FAIL'}  {c.name}: {c.detail}")
    return EXIT_OK if all(c.passed for c in checks) else EXIT_FAIL


def cmd_plot(args) -> int:
    from .plotting import plot_curves

    for d in args.runs:
        if not (Path(d) / "rounds.csv").is_file():
            raise UsageError(f"{d} has no rounds.csv")
    labels = []
    for d in args.runs:
        summary = Path(d) / "summary.json"
        labels.append(json.loads(summary.read_text()).get("algorithm", Path(d).name) if summary.is_file() else Path(d).name)
    plot_curves(args.runs, labels, out=args.out, title=args.title)
    print(f"figure written to {args.out}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="pflego", description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run one seeded experiment")
    run.add_argument("--config", required=True)
    run.add_argument("--seed", type=int)
    run.add_argument("--rounds", type=int)
    run.add_argument("--algorithm", choices=["pflego", "fedavg", "fedper", "fedrecon"])
    run.add_argument("--threads", type=int)
    run.add_argument("--out", help="run directory (must not exist or be empty)")
    run.add_argument("--set", action="append", metavar="KEY=VALUE", help="override a dotted config key")
    run.set_defaults(fn=cmd_run)

    cmp_ = sub.add_parser("compare", help="compare the final windows of two runs")
    cmp_.add_argument("run_a")
    cmp_.add_argument("run_b")
    cmp_.add_argument("--window", type=int, default=10)
    cmp_.add_argument("--figure", help="also write an overlay figure to this file")
    cmp_.set_defaults(fn=cmd_compare)

    ver = sub.add_parser("verify", help="run the unbiasedness, oracle, gradient and accounting checks")
    ver.add_argument("--config", required=True)
    ver.add_argument("--seed", type=int)
    ver.set_defaults(fn=cmd_verify)

    plot = sub.add_parser("plot", help="plot loss and accuracy curves of one or more runs")
    plot.add_argument("runs", nargs="+")
    plot.add_argument("--out", required=True)
    plot.add_argument("--title")
    plot.set_defaults(fn=cmd_plot)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return args.fn(args)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except PflegoError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_FAIL


if __name__ == "__main__":
    sys.exit(main())
