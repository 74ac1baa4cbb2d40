"""Command-line front end: ``amap <command> [options]``.

Every random command takes ``--seed``; the seed feeds one PCG64 generator
from which estimators spawn their own substreams, so identical arguments
give byte-identical output.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import sys
from dataclasses import dataclass

import numpy as np

from amap import chain as chain_mod
from amap import montecarlo as mc
from amap.excursion_kit import ExcursionError
from amap.mapping_core import Mapping, MappingError, require_acyclic, sample_uniform_acyclic
from amap.path_codec import LatticePath, PathError, decode, encode
from amap.rtree_metric import EXACT_MAX_VERTICES, RootedWeightedTree, TreeError, delta_ghwr

SUITES = ("shifted-excursion", "disintegration", "jump-square", "convergence")
REPORT_COLUMNS = ("name", "estimate", "stderr", "target", "z_score", "reps", "cutoff")


class CommandError(Exception):
    """Runtime failure reported with exit code 1."""


@dataclass
class RunConfig:
    command: str
    seed: int = 0
    n: int | None = None
    steps: int | None = None
    grid: int | None = None
    reps: int | None = None
    cutoff: float | None = None
    input: str | None = None
    output: str = "-"

    def rng(self) -> np.random.Generator:
        return np.random.Generator(np.random.PCG64(np.random.SeedSequence(self.seed)))


def _read(path: str) -> str:
    if path == "-":
        return sys.stdin.read()
    try:
        with open(path, encoding="utf-8") as fh:
            return fh.read()
    except OSError as exc:
        raise CommandError(f"cannot read {path}: {exc.strerror}") from None


def _write(path: str, text: str) -> None:
    if path == "-":
        sys.stdout.write(text)
        sys.stdout.flush()
        return
    try:
        with open(path, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
    except OSError as exc:
        raise CommandError(f"cannot write {path}: {exc.strerror}") from None


def _summary(text: str) -> None:
    print(text, file=sys.stderr)


def _positive(kind):
    def parse(text):
        try:
            value = kind(text)
        except ValueError:
            raise argparse.ArgumentTypeError(f"expected a {kind.__name__}, got {text!r}") from None
        if value <= 0:
            raise argparse.ArgumentTypeError(f"must be positive, got {text}")
        return value

    return parse


def _nonnegative_int(text):
    try:
        value = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected an integer, got {text!r}") from None
    if value < 0:
        raise argparse.ArgumentTypeError(f"must be >= 0, got {text}")
    return value


# ---------------------------------------------------------------------------
# commands


def cmd_sample(args) -> None:
    cfg = RunConfig("sample", seed=args.seed, n=args.n, output=args.out)
    rng = cfg.rng()
    lines = [sample_uniform_acyclic(args.n, rng).to_json() for _ in range(args.count)]
    _write(cfg.output, "".join(line + "\n" for line in lines))
    _summary(f"sampled {args.count} acyclic mappings of [{args.n}] with seed {args.seed}")


def cmd_chain(args) -> None:
    cfg = RunConfig("chain", seed=args.seed, n=args.n, steps=args.steps, input=args.input, output=args.out)
    rng = cfg.rng()
    names = [name.strip() for name in args.observe.split(",") if name.strip()]
    unknown = [name for name in names if name not in chain_mod.OBSERVERS]
    if unknown:
        raise CommandError(f"unknown observer {unknown[0]!r}; choose from {sorted(chain_mod.OBSERVERS)}")
    if cfg.input:
        m0 = require_acyclic(Mapping.from_json(_read(cfg.input)))
    elif cfg.n is None:
        raise CommandError("chain needs --n or --in for the initial state")
    else:
        m0 = sample_uniform_acyclic(cfg.n, rng)
    traj = chain_mod.run_chain(m0, args.steps, rng, observers=names, stride=args.stride)
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["step"] + names)
    for k, t in enumerate(traj.times):
        writer.writerow([t] + [traj.series[name][k] for name in names])
    _write(cfg.output, buf.getvalue())
    _summary(f"ran {args.steps} steps on n={m0.n}; recorded {len(traj.times)} rows")


def cmd_encode(args) -> None:
    m = Mapping.from_json(_read(args.input))
    path = encode(m)
    _write(args.out, path.to_json() + "\n")
    _summary(f"encoded mapping of [{m.n}] as a path of length {2 * path.n}")


def cmd_decode(args) -> None:
    path = LatticePath.from_json(_read(args.input))
    m = decode(path)
    _write(args.out, m.to_json() + "\n")
    _summary(f"decoded path of length {2 * path.n} into a mapping of [{m.n}]")


def cmd_tree_dist(args) -> None:
    x = RootedWeightedTree.from_json(_read(args.a))
    y = RootedWeightedTree.from_json(_read(args.b))
    if args.mode == "exact":
        if x.size > EXACT_MAX_VERTICES or y.size > EXACT_MAX_VERTICES:
            raise CommandError(
                f"exact mode needs at most {EXACT_MAX_VERTICES} vertices per tree, "
                f"got {x.size} and {y.size}; use --mode bracket"
            )
        result = delta_ghwr(x, y)
        payload = {"mode": "exact", "delta": result.value}
        line = f"delta = {result.value:.6g}"
    else:
        result = delta_ghwr(x, y, exact_max=0)
        payload = {"mode": "bracket", "lower": result.lower, "upper": result.upper}
        line = f"delta in [{result.lower:.6g}, {result.upper:.6g}]"
    _write(args.out, json.dumps(payload) + "\n")
    _summary(line)


def _report_csv(reports) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(REPORT_COLUMNS)
    for r in reports:
        row = r.as_row()
        writer.writerow(["" if row[c] is None else (repr(row[c]) if isinstance(row[c], float) else row[c])
                         for c in REPORT_COLUMNS])
    return buf.getvalue()


def cmd_verify(args) -> None:
    cfg = RunConfig("verify", seed=args.seed, grid=args.grid, reps=args.reps, cutoff=args.cutoff,
                    n=args.n, output=args.out)
    rng = cfg.rng()
    if args.suite == "shifted-excursion":
        reports = mc.verify_shifted_excursion(args.reps, args.grid, rng)
    elif args.suite == "disintegration":
        reports = mc.verify_disintegration(args.reps, args.grid, rng, cutoff=args.cutoff)
    elif args.suite == "jump-square":
        reports = [mc.verify_jump_square(args.reps, args.grid, rng)]
    else:
        n = args.n or 10_000
        reports = [mc.chain_convergence(n, args.reps, rng, reference=ref) for ref in mc.MIDPOINT_REFERENCES]
    _write(cfg.output, _report_csv(reports))
    worst = max((abs(r.z_score) for r in reports if r.z_score is not None), default=float("nan"))
    _summary(f"{args.suite}: {len(reports)} rows, largest |z| = {worst:.2f}")


# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="amap", description="Acyclic mappings, their paths and trees.")
    sub = parser.add_subparsers(dest="command", required=True, metavar="command")

    p = sub.add_parser("sample", help="uniform acyclic mappings as JSON lines")
    p.add_argument("--n", type=_positive(int), required=True)
    p.add_argument("--count", type=_positive(int), default=1)
    p.add_argument("--seed", type=_nonnegative_int, default=0)
    p.add_argument("--out", default="-")
    p.set_defaults(func=cmd_sample)

    p = sub.add_parser("chain", help="run the relocation chain and record observers as CSV")
    p.add_argument("--n", type=_positive(int))
    p.add_argument("--in", dest="input", help="initial mapping JSON (default: uniform sample)")
    p.add_argument("--steps", type=_nonnegative_int, required=True)
    p.add_argument("--seed", type=_nonnegative_int, default=0)
    p.add_argument("--observe", default="fixed-points,height")
    p.add_argument("--stride", type=_positive(int), default=1)
    p.add_argument("--out", default="-")
    p.set_defaults(func=cmd_chain)

    p = sub.add_parser("encode", help="mapping JSON to lattice path JSON")
    p.add_argument("--in", dest="input", required=True)
    p.add_argument("--out", default="-")
    p.set_defaults(func=cmd_encode)

    p = sub.add_parser("decode", help="lattice path JSON to its canonical mapping")
    p.add_argument("--in", dest="input", required=True)
    p.add_argument("--out", default="-")
    p.set_defaults(func=cmd_decode)

    p = sub.add_parser("tree-dist", help="discrepancy between two weighted rooted trees")
    p.add_argument("--a", required=True)
    p.add_argument("--b", required=True)
    p.add_argument("--mode", choices=("exact", "bracket"), default="exact")
    p.add_argument("--out", default="-")
    p.set_defaults(func=cmd_tree_dist)

    p = sub.add_parser("verify", help="Monte Carlo checks as CSV")
    p.add_argument("--suite", choices=SUITES, required=True)
    p.add_argument("--reps", type=_positive(int), default=2000)
    p.add_argument("--grid", type=_positive(int), default=8192)
    p.add_argument("--cutoff", type=_positive(float), default=0.2)
    p.add_argument("--n", type=_positive(int), help="mapping size for the convergence suite")
    p.add_argument("--seed", type=_nonnegative_int, default=0)
    p.add_argument("--out", default="-")
    p.set_defaults(func=cmd_verify)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        args.func(args)
    except (CommandError, MappingError, PathError, TreeError, ExcursionError, ValueError, KeyError) as exc:
        message = exc.args[0] if isinstance(exc, KeyError) and exc.args else exc
        if isinstance(exc, KeyError):
            message = f"missing field {message!r}"
        print(f"amap {args.command}: error: {message}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
