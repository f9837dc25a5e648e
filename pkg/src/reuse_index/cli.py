"""Command-line entry point: ``reuse-index <subcommand> ...``.

Exit codes: 0 on success, 2 when an index answers a lookup wrongly, 1 on
usage or I/O errors.
"""

from __future__ import annotations

import argparse
import json
import pickle
import sys
import time
from dataclasses import asdict, fields

from .bench import (INDEX_ALIASES, INDEX_KINDS, WorkloadSpec, append_csv, build_index, gen_data,
                    run_workload, sosd_read)
from .errors import CorrectnessError, ReuseIndexError
from .index import BinarySearchIndex, RmiIndex, RmrtIndex
from .models import TrainConfig
from .pool import ModelPool, default_bin_count, load_pool, pretrain_pool, save_pool

EXIT_OK, EXIT_USAGE, EXIT_WRONG = 0, 1, 2


class _UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise _UsageError(f"{self.prog}: {message}")


def _index_kind(value: str) -> str:
    value = INDEX_ALIASES.get(value, value)
    if value not in INDEX_KINDS:
        raise argparse.ArgumentTypeError(f"choose from {', '.join(INDEX_KINDS)} or bsearch")
    return value


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="reuse-index", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("gen-data", help="write a uniform or power-skew SOSD key file")
    p.add_argument("--kind", choices=("uniform", "skew"), required=True)
    p.add_argument("--alpha", type=int, default=1)
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)

    p = sub.add_parser("gen-pool", help="pre-train a model pool on the synthetic grid")
    p.add_argument("--eps", type=float, required=True)
    p.add_argument("--m", type=int)
    p.add_argument("--ns", type=int, default=100)
    p.add_argument("--model", choices=("linear", "tinynet"), default="linear")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)

    p = sub.add_parser("build", help="build an index over a SOSD file and report its shape")
    p.add_argument("--index", type=_index_kind, required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--pool", help="pool file; rmrt and rmi-mr start from an empty pool without it")
    p.add_argument("--eps", type=float, default=0.9)
    p.add_argument("--model", choices=("linear", "tinynet"), default="linear")
    p.add_argument("--fanout", type=int, default=1024)
    p.add_argument("--branch", type=int, default=128)
    p.add_argument("--leaf-cap", type=int, default=10_000)
    p.add_argument("--out", help="pickle the built index here")

    p = sub.add_parser("bench", help="run a lookup/insert workload and emit metrics")
    p.add_argument("--spec", help="JSON file of workload fields; flags given explicitly override it")
    p.add_argument("--data")
    p.add_argument("--kind", choices=("uniform", "skew"))
    p.add_argument("--alpha", type=int)
    p.add_argument("--n", type=int)
    p.add_argument("--index", type=_index_kind)
    p.add_argument("--model", choices=("linear", "tinynet"))
    p.add_argument("--eps", type=float)
    p.add_argument("--fanout", type=int)
    p.add_argument("--branch", type=int)
    p.add_argument("--leaf-cap", type=int)
    p.add_argument("--lookups", type=int)
    p.add_argument("--insert-ratio", type=float)
    p.add_argument("--absent-ratio", type=float)
    p.add_argument("--interleave", action="store_true", default=None)
    p.add_argument("--pool", help="'warm', 'empty' or a pool file")
    p.add_argument("--m", type=int)
    p.add_argument("--ns", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--threads", type=int)
    p.add_argument("--json", action="store_true", help="print the report as JSON (default)")
    p.add_argument("--csv", help="append the report to this CSV file")

    p = sub.add_parser("inspect", help="summarize a pool file or a pickled index")
    group = p.add_mutually_exclusive_group(required=True)
    group.add_argument("--pool")
    group.add_argument("--index")
    return parser


def _emit(obj):
    print(json.dumps(obj))


def _cmd_gen_data(args):
    keys = gen_data(args.kind, args.n, args.seed, args.out, args.alpha)
    _emit({"out": args.out, "n": int(keys.size), "min": int(keys[0]), "max": int(keys[-1])})


def _cmd_gen_pool(args):
    t0 = time.perf_counter()
    pool = pretrain_pool(args.eps, args.model, args.ns, args.seed, args.m)
    save_pool(pool, args.out)
    _emit({"out": args.out, "entries": len(pool), "m": pool.m, "eps": pool.eps,
           "model": pool.model_kind, "seconds": time.perf_counter() - t0})


def _cmd_build(args):
    keys = sosd_read(args.data)
    pool = None
    if args.index in ("rmrt", "rmi-mr"):
        if args.pool:
            pool = load_pool(args.pool)
        else:
            pool = ModelPool(args.model, args.eps, default_bin_count(args.eps))
    model = pool.model_kind if pool is not None else args.model
    t0 = time.perf_counter()
    index = build_index(args.index, keys, pool, args.eps, model, args.fanout,
                        args.leaf_cap, args.branch, TrainConfig())
    seconds = time.perf_counter() - t0
    if args.out:
        with open(args.out, "wb") as fh:
            pickle.dump(index, fh)
    report = {"index": args.index, "n": int(keys.size), "build_seconds": seconds}
    report.update(asdict(index.stats()))
    _emit(report)


def _cmd_bench(args):
    raw = {}
    if args.spec:
        with open(args.spec) as fh:
            raw = json.load(fh)
    for f in fields(WorkloadSpec):
        value = getattr(args, f.name, None)
        if value is not None:
            raw[f.name] = value
    spec = WorkloadSpec.from_dict(raw)
    report = run_workload(spec)
    if args.csv:
        append_csv(report, args.csv)
    print(report.to_json())


def _cmd_inspect(args):
    if args.pool:
        pool = load_pool(args.pool)
        errors = [e.max_abs_err for e in pool]
        _emit({"model": pool.model_kind, "eps": pool.eps, "m": pool.m, "ns": pool.ns,
               "entries": len(pool), "min_max_abs_err": min(errors, default=None),
               "max_max_abs_err": max(errors, default=None)})
        return
    with open(args.index, "rb") as fh:
        index = pickle.load(fh)
    if not isinstance(index, (RmiIndex, RmrtIndex, BinarySearchIndex)):
        raise ReuseIndexError(f"{args.index} does not hold an index")
    report = {"type": type(index).__name__}
    report.update(asdict(index.stats()))
    _emit(report)


COMMANDS = {"gen-data": _cmd_gen_data, "gen-pool": _cmd_gen_pool, "build": _cmd_build,
            "bench": _cmd_bench, "inspect": _cmd_inspect}


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
        COMMANDS[args.command](args)
    except _UsageError as exc:
        print(exc, file=sys.stderr)
        return EXIT_USAGE
    except CorrectnessError as exc:
        print(f"correctness failure: {exc}", file=sys.stderr)
        print(json.dumps({"mismatches": exc.sample}), file=sys.stderr)
        return EXIT_WRONG
    except (ReuseIndexError, OSError, ValueError, pickle.UnpicklingError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
