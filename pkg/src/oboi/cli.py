"""Command-line interface.

Subcommands: gen-synthetic, build-bag, evaluate, sweep, validate.
Exit codes: 0 success, 1 usage error, 2 data/validation error,
3 internal invariant failure. Errors go to stderr as one JSON object.
Every command is deterministic given its flags and seed; rerunning
overwrites outputs byte-identically.
"""

from __future__ import annotations

import argparse
import csv
import json
import os
import sys
from pathlib import Path

from .bag import build_bag_from_dataset, load_bag, save_bag
from .episodes import PROTOCOLS, Episode, make_split, select_instances
from .errors import InvalidConfig, OboiError, UndefinedGain
from .jsonio import canonical_dumps, read_json, write_json
from .metrics import evaluate, relative_gain, report_table
from .model import HEADS, REDUCTION_MODES, TRANSFORMS, HeadConfig, ReductionConfig
from .synthetic import gen_synthetic, load_spec
from .tensorstore import load_dataset, validate_dataset

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_DATA = 2
EXIT_INTERNAL = 3

EPISODE_FILE = "episode.json"


def _emit_error(kind: str, detail: str) -> None:
    sys.stderr.write(json.dumps({"error": kind, "detail": detail}, sort_keys=True) + "\n")


class _Parser(argparse.ArgumentParser):
    """argparse defaults to exit code 2 on usage errors; we reserve 2 for
    data problems, so route usage failures through exit code 1."""

    def error(self, message):
        _emit_error("UsageError", message)
        raise SystemExit(EXIT_USAGE)


def _int_list(text: str) -> list[int]:
    try:
        values = [int(v) for v in text.split(",") if v.strip() != ""]
    except ValueError as e:
        raise argparse.ArgumentTypeError(str(e)) from e
    if not values:
        raise argparse.ArgumentTypeError("expected a comma-separated list of ints")
    return values


def _str_list(text: str) -> list[str]:
    values = [v.strip() for v in text.split(",") if v.strip() != ""]
    if not values:
        raise argparse.ArgumentTypeError("expected a comma-separated list")
    return values


def _threads(args) -> int:
    if args.threads is not None:
        value = args.threads
    else:
        value = int(os.environ.get("OBOI_THREADS", "1"))
    if value < 1:
        raise InvalidConfig(f"threads must be >= 1, got {value}")
    return value


def _reduction_from_args(args) -> ReductionConfig:
    return ReductionConfig(
        mode=args.mode,
        moment_order=args.R,
        standardize=args.standardize,
        use_mask=not args.no_mask,
    )


def _head_from_args(args) -> HeadConfig:
    return HeadConfig(
        head=args.head,
        simpleshot_transform=args.transform,
        conditioned=not args.no_conditioning,
        fallback_unconditioned=args.fallback,
    )


def _print_json(obj, round_sig: int | None = 6) -> None:
    sys.stdout.write(canonical_dumps(obj, round_sig=round_sig))


def cmd_gen_synthetic(args) -> int:
    spec = load_spec(args.spec)
    dataset = gen_synthetic(spec, args.seed, args.out)
    _print_json(
        {
            "manifest": str(Path(args.out) / "manifest.json"),
            "objects": len(dataset.label_space.object_classes),
            "instances": len(dataset.label_space.instance_classes),
            "sequences": len(dataset.sequences),
            "samples": len(dataset.samples),
        },
        round_sig=None,
    )
    return EXIT_OK


def _load_subset(manifest, p: int | None):
    dataset = load_dataset(manifest)
    if p is not None:
        dataset = select_instances(dataset, p)
    return dataset


def cmd_build_bag(args) -> int:
    if args.k is not None and args.protocol != "kshot":
        raise InvalidConfig("--k only applies to --protocol kshot")
    dataset = _load_subset(args.manifest, args.p)
    episode = make_split(dataset, args.protocol, args.seed, k=args.k)
    bag = build_bag_from_dataset(
        dataset, episode.support, _reduction_from_args(args), _head_from_args(args)
    )
    out = Path(args.out)
    save_bag(bag, out)
    write_json(
        out / EPISODE_FILE,
        {
            "manifest": str(Path(args.manifest).resolve()),
            "p": args.p,
            "episode": episode.to_dict(),
        },
    )
    _print_json(
        {
            "bag": str(out),
            "instances": len(bag.instances()),
            "dim": bag.dim,
            "support": len(episode.support),
            "test": len(episode.test),
            "val": len(episode.val),
        },
        round_sig=None,
    )
    return EXIT_OK


def _load_bag_dir(bag_dir):
    bag = load_bag(bag_dir)
    meta = read_json(Path(bag_dir) / EPISODE_FILE)
    dataset = _load_subset(meta["manifest"], meta.get("p"))
    episode = Episode.from_dict(meta["episode"])
    return bag, episode, dataset


def cmd_evaluate(args) -> int:
    bag, episode, dataset = _load_bag_dir(args.bag)
    report = evaluate(bag, episode, dataset, split=args.split, threads=_threads(args))
    if args.table:
        sys.stdout.write(report_table(report))
    else:
        _print_json(report.to_dict())
    return EXIT_OK


def cmd_sweep(args) -> int:
    baseline_r = args.baseline_R if args.baseline_R is not None else min(args.R)
    if baseline_r not in args.R:
        raise InvalidConfig(f"--baseline-R {baseline_r} is not in the R list {args.R}")
    for head in args.heads:
        if head not in HEADS:
            raise InvalidConfig(f"unknown head {head!r}")
    out = Path(args.out)
    cells = out / "cells"
    cells.mkdir(parents=True, exist_ok=True)
    threads = _threads(args)
    full = load_dataset(args.manifest)

    rows = []
    for p in args.p:
        dataset = select_instances(full, p)
        for k in args.shots:
            # one seed per p; the instance subsets nest by construction
            episode = make_split(dataset, "kshot", args.seed, k=k)
            for head in args.heads:
                acc = {}
                for r in args.R:
                    reduction = ReductionConfig(mode="aee", moment_order=r)
                    bag = build_bag_from_dataset(
                        dataset, episode.support, reduction, HeadConfig(head=head)
                    )
                    report = evaluate(bag, episode, dataset, threads=threads)
                    acc[r] = report.acc_i
                    name = f"p{p}_k{k}_R{r}_{head}"
                    write_json(cells / f"{name}.json", report.to_dict(), round_sig=6)
                for r in args.R:
                    try:
                        delta = relative_gain(acc[baseline_r], acc[r])
                    except UndefinedGain:
                        delta = float("nan")
                    rows.append(
                        {
                            "p": p, "k": k, "R": r, "head": head,
                            "acc_i": f"{acc[r]:.6g}",
                            "delta_vs_baseline": f"{delta:.6g}",
                        }
                    )

    csv_path = out / "sweep.csv"
    with open(csv_path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.DictWriter(
            fh,
            fieldnames=["p", "k", "R", "head", "acc_i", "delta_vs_baseline"],
            lineterminator="\n",
        )
        writer.writeheader()
        writer.writerows(rows)
    _print_json(
        {"out": str(out), "cells": len(rows), "csv": str(csv_path)},
        round_sig=None,
    )
    return EXIT_OK


def cmd_validate(args) -> int:
    path = Path(args.path)
    target = path
    if path.is_dir():
        if (path / "bag.json").exists():
            target = path / "bag.json"
        else:
            target = path / "manifest.json"
    if target.name == "bag.json" or (
        target.exists() and _looks_like_bag(target)
    ):
        bag = load_bag(target.parent)
        _print_json(
            {
                "bag": str(target.parent),
                "ok": True,
                "instances": len(bag.instances()),
                "dim": bag.dim,
            },
            round_sig=None,
        )
        return EXIT_OK
    result = validate_dataset(target)
    _print_json(result, round_sig=None)
    return EXIT_OK if result["ok"] else EXIT_DATA


def _looks_like_bag(path: Path) -> bool:
    try:
        doc = read_json(path)
    except Exception:
        return False
    return isinstance(doc, dict) and "prototypes" in doc


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="oboi", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p_gen = sub.add_parser("gen-synthetic", help="generate a synthetic dataset")
    p_gen.add_argument("spec", help="path to a generator spec JSON file")
    p_gen.add_argument("out", help="output dataset directory")
    p_gen.add_argument("--seed", type=int, default=0)
    p_gen.set_defaults(func=cmd_gen_synthetic)

    p_bag = sub.add_parser("build-bag", help="split a dataset and build a bag")
    p_bag.add_argument("manifest", help="dataset manifest path")
    p_bag.add_argument("--out", "-o", required=True, help="bag output directory")
    p_bag.add_argument("--protocol", choices=PROTOCOLS, default="1sas")
    p_bag.add_argument("--k", type=int, default=None, help="shots (kshot only)")
    p_bag.add_argument("--p", type=int, default=None, help="instances per object")
    p_bag.add_argument("--seed", type=int, default=0)
    p_bag.add_argument("--mode", choices=REDUCTION_MODES, default="aee")
    p_bag.add_argument("--R", type=int, default=4, help="highest moment order")
    p_bag.add_argument("--standardize", action="store_true")
    p_bag.add_argument("--no-mask", action="store_true")
    p_bag.add_argument("--head", choices=HEADS, default="protonet")
    p_bag.add_argument("--transform", choices=TRANSFORMS, default="none")
    p_bag.add_argument("--no-conditioning", action="store_true")
    p_bag.add_argument("--fallback", action="store_true",
                       help="fall back to all instances when a predicted "
                            "object has no prototypes")
    p_bag.set_defaults(func=cmd_build_bag)

    p_eval = sub.add_parser("evaluate", help="evaluate a bag on its episode")
    p_eval.add_argument("bag", help="bag directory (from build-bag)")
    p_eval.add_argument("--split", choices=("test", "val"), default="test")
    p_eval.add_argument("--table", action="store_true", help="plain-text table")
    p_eval.add_argument("--threads", type=int, default=None,
                        help="embedding threads (default: OBOI_THREADS or 1)")
    p_eval.set_defaults(func=cmd_evaluate)

    p_sweep = sub.add_parser("sweep", help="grid over p, shots, R and heads")
    p_sweep.add_argument("manifest", help="dataset manifest path")
    p_sweep.add_argument("--out", "-o", required=True, help="sweep output directory")
    p_sweep.add_argument("--p", type=_int_list, required=True,
                         help="comma list of instances per object")
    p_sweep.add_argument("--shots", type=_int_list, default=[1])
    p_sweep.add_argument("--R", type=_int_list, default=[1, 4])
    p_sweep.add_argument("--heads", type=_str_list, default=["protonet"])
    p_sweep.add_argument("--baseline-R", type=int, default=None,
                         help="R of the baseline cell for the delta column "
                              "(default: smallest R)")
    p_sweep.add_argument("--seed", type=int, default=0)
    p_sweep.add_argument("--threads", type=int, default=None)
    p_sweep.set_defaults(func=cmd_sweep)

    p_val = sub.add_parser("validate", help="validate a manifest or a bag")
    p_val.add_argument("path", help="manifest path, bag dir or bag.json")
    p_val.set_defaults(func=cmd_validate)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return int(e.code or 0)
    try:
        return args.func(args)
    except (InvalidConfig, argparse.ArgumentTypeError) as e:
        _emit_error(type(e).__name__, str(e))
        return EXIT_USAGE
    except (OboiError, OSError, json.JSONDecodeError) as e:
        _emit_error(type(e).__name__, str(e))
        return EXIT_DATA
    except Exception as e:  # anything else is a broken invariant
        _emit_error(type(e).__name__, str(e))
        return EXIT_INTERNAL


if __name__ == "__main__":
    sys.exit(main())
