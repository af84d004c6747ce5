"""Command line interface: ``kperfect {gen,build,verify,bench,curves}``."""
from __future__ import annotations

import argparse
import sys
import time

from . import harness
from .bucket_opt import beta_curve, pk_curve
from .threshold_opt import asymptotic_thresholds, expected_empty_slots, optimal_thresholds


def cmd_gen(args) -> int:
    keys = harness.gen_keys(args.n, args.min_len, args.max_len, args.seed)
    harness.write_keys(args.out, keys)
    print(f"wrote {len(keys)} keys to {args.out}")
    return 0


def cmd_build(args) -> int:
    keys = harness.read_keys(args.keys)
    config = harness.parse_config(args.scheme, args.config)
    t0 = time.perf_counter()
    phf = harness.build(args.scheme, keys, args.k, config, args.seed)
    dt = time.perf_counter() - t0
    report = harness.verify(phf, keys)
    if not report.passed:
        print(report, file=sys.stderr)
        return 1
    if args.out:
        harness.save(phf, args.out)
    print(f"{args.scheme} n={phf.n} k={phf.k} bits/key={phf.bits_per_key():.6f} "
          f"build={dt:.2f}s {report}")
    return 0


def cmd_verify(args) -> int:
    phf = harness.load(args.input, args.scheme, args.k)
    report = harness.verify(phf, harness.read_keys(args.keys))
    print(report)
    return 0 if report.passed else 1


def cmd_bench(args) -> int:
    if args.keys:
        keys = harness.read_keys(args.keys)
    else:
        keys = harness.random_hashes(args.n, args.key_seed)
    records = []
    for text in args.config or [""]:
        config = harness.parse_config(args.scheme, text)
        rec = harness.bench(args.scheme, config, keys, args.k, args.runs, args.queries, args.seed)
        records.append(rec)
        print(f"{rec.scheme} [{rec.config}] bits/key={rec.bits_per_key:.4f} "
              f"(+{rec.overhead_pct:.1f}%) build={rec.construct_ns_per_key:.0f}ns/key "
              f"query={rec.query_ns_per_query:.0f}ns", file=sys.stderr)
    text = harness.emit_csv(records, args.csv)
    if not args.csv:
        sys.stdout.write(text)
    return 0


def cmd_curves(args) -> int:
    out = sys.stdout
    if args.kind == "thresholds":
        tv = optimal_thresholds(args.k, args.gamma, args.t)
        asym = asymptotic_thresholds(args.k, args.gamma, args.t)
        out.write(f"# k={args.k} gamma={args.gamma} t={args.t} "
                  f"expected_empty={expected_empty_slots(tv):.6g}\n")
        out.write("i,threshold,asymptotic\n")
        for i, (a, b) in enumerate(zip(tv.T, asym.T)):
            out.write(f"{i},{a:.12g},{b:.12g}\n")
    else:
        table = beta_curve(args.k, args.grid) if args.kind == "beta" else pk_curve(args.k, args.grid)
        out.write(f"x,{args.kind}\n")
        step = max(1, args.grid // args.points)
        for x, y in zip(table.xs[::step], table.ys[::step]):
            out.write(f"{x:.8g},{y:.12g}\n")
    return 0


def make_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="kperfect", description=__doc__)
    sub = p.add_subparsers(dest="cmd", required=True)
    schemes = sorted(harness.SCHEMES)

    g = sub.add_parser("gen", help="generate random distinct keys")
    g.add_argument("--n", type=int, required=True)
    g.add_argument("--min-len", type=int, default=10)
    g.add_argument("--max-len", type=int, default=50)
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--out", required=True)
    g.set_defaults(func=cmd_gen)

    b = sub.add_parser("build", help="build, verify and optionally save a structure")
    b.add_argument("--scheme", choices=schemes, required=True)
    b.add_argument("--keys", required=True)
    b.add_argument("-k", type=int, required=True)
    b.add_argument("--config", default="", help="e.g. gamma=2.0,t=32,variant=packed")
    b.add_argument("--seed", type=int, default=0)
    b.add_argument("--out")
    b.set_defaults(func=cmd_build)

    v = sub.add_parser("verify", help="audit a saved structure against its keys")
    v.add_argument("--in", dest="input", required=True)
    v.add_argument("--keys", required=True)
    v.add_argument("--scheme", choices=schemes)
    v.add_argument("-k", type=int)
    v.set_defaults(func=cmd_verify)

    be = sub.add_parser("bench", help="benchmark verified builds and emit CSV")
    be.add_argument("--scheme", choices=schemes, required=True)
    be.add_argument("-k", type=int, required=True)
    be.add_argument("--config", action="append", help="repeat for several configurations")
    be.add_argument("--keys", help="key file; default random 128-bit hashes")
    be.add_argument("--n", type=int, default=10 ** 6)
    be.add_argument("--key-seed", type=int, default=0)
    be.add_argument("--runs", type=int, default=3)
    be.add_argument("--queries", type=int, default=10 ** 7)
    be.add_argument("--seed", type=int, default=0)
    be.add_argument("--csv")
    be.set_defaults(func=cmd_bench)

    c = sub.add_parser("curves", help="dump threshold vectors or bucket assignment tables")
    c.add_argument("--kind", choices=["thresholds", "beta", "pk"], required=True)
    c.add_argument("-k", type=int, required=True)
    c.add_argument("--gamma", type=float, default=2.0)
    c.add_argument("-t", type=int, default=32)
    c.add_argument("--grid", type=int, default=4096)
    c.add_argument("--points", type=int, default=64)
    c.set_defaults(func=cmd_curves)
    return p


def main(argv=None) -> int:
    args = make_parser().parse_args(argv)
    try:
        return args.func(args)
    except (ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
