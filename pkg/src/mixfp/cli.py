"""Command-line harness: split and GEMM accuracy studies, training runs.

Exit codes: 0 success, 1 usage error, 2 numerical divergence, 3 I/O failure.
"""
from __future__ import annotations

import argparse
import math
import sys
from pathlib import Path

import numpy as np

from . import matrix as spmx
from .asgd import ENGINES, DivergedError, TrainConfig, make_least_squares
from .emugemm import GemmMode, gemm_report
from .mlp import DenseNet, accuracy, make_blobs, net_objective, save_checkpoint
from .split import split_error, split_matrix

EXIT_OK, EXIT_USAGE, EXIT_DIVERGED, EXIT_IO = 0, 1, 2, 3

# fixed problem definitions for `train`
LSQ = dict(n=1000, d=20, noise=0.1, batch_size=10)
BLOBS = dict(n=300, classes=3, dim=2, separation=6.0, hidden=16, batch_size=16)


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: error: {message}")


def fmt(x) -> str:
    return f"{float(x):.17g}"


def to_csv(header: list[str], rows: list[list]) -> str:
    out = [",".join(header)]
    out += [",".join(v if isinstance(v, str) else fmt(v) if isinstance(v, float) else str(v) for v in r) for r in rows]
    return "\n".join(out) + "\n"


def emit(text: str, out: str | None) -> None:
    if out is None:
        sys.stdout.write(text)
    else:
        spmx.atomic_write_bytes(out, text.encode())


def random_matrix(rng: np.random.Generator, rows: int, cols: int, scale: float = 1.0) -> np.ndarray:
    return (rng.uniform(-1.0, 1.0, (rows, cols)) * scale).astype(np.float32)


def _positive(name: str, v: int) -> None:
    if v < 1:
        raise UsageError(f"--{name} must be >= 1, got {v}")


def cmd_split_report(args) -> str:
    _positive("n", args.n)
    _positive("seeds", args.seeds)
    if not (math.isfinite(args.scale) and args.scale >= 0):
        raise UsageError(f"--scale must be finite and >= 0, got {args.scale}")
    rows = []
    for seed in range(args.seeds):
        a = random_matrix(np.random.default_rng(seed), args.n, args.n, args.scale)
        s = split_matrix(a)
        err = split_error(a, s)
        rows.append([seed, args.n, float(args.scale), float(s.a1), float(s.a2), err.max_rel, err.frob_rel])
    text = to_csv(["seed", "n", "scale", "a1", "a2", "max_rel_err", "frob_rel_err"], rows)
    emit(text, args.out)
    return text


def cmd_gemm_accuracy(args) -> str:
    _positive("n", args.n)
    _positive("seeds", args.seeds)
    try:
        modes = [GemmMode.parse(m) for m in args.modes.split(",") if m.strip()]
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    if not modes:
        raise UsageError("--modes is empty")
    rows = []
    for seed in range(args.seeds):
        rng = np.random.default_rng(seed)
        a = random_matrix(rng, args.n, args.n)
        b = random_matrix(rng, args.n, args.n)
        for mode in modes:
            rep = gemm_report(a, b, mode)
            rows.append([seed, args.n, mode.value, rep.half_product_count, rep.frobenius_rel_error_vs_oracle])
    text = to_csv(["seed", "n", "mode", "half_products", "frob_rel_err"], rows)
    emit(text, args.out)
    return text


def checkpoint_path(out: str | Path) -> Path:
    out = Path(out)
    return out.with_name(out.name + ".ckpt")


def cmd_train(args) -> str:
    if args.engine == "pserver" and args.staleness is None:
        raise UsageError("--engine pserver requires --staleness")
    if args.engine != "pserver" and args.staleness is not None:
        raise UsageError("--staleness only applies to --engine pserver")
    if args.engine != "hogwild" and args.workers != 1:
        raise UsageError("--workers > 1 needs --engine hogwild")
    try:
        mode = GemmMode.parse(args.gemm)
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    if args.problem == "lsq" and mode is not GemmMode.EXACT32:
        raise UsageError("--gemm only applies to --problem blobs")
    if not 0 <= args.seed < 2**64:
        raise UsageError("--seed must fit in 64 bits")
    problem = LSQ if args.problem == "lsq" else BLOBS
    try:
        cfg = TrainConfig(
            learning_rate=args.lr,
            epochs=args.epochs,
            batch_size=problem["batch_size"],
            workers=args.workers,
            seed=args.seed,
            staleness=args.staleness or 0,
        )
    except ValueError as exc:
        raise UsageError(str(exc)) from None

    engine = ENGINES[args.engine]
    if args.problem == "lsq":
        lsq = make_least_squares(LSQ["n"], LSQ["d"], LSQ["noise"], seed=args.seed)
        trace = engine(lsq.objective(), cfg)
        text = trace.to_csv()
        emit(text, args.out)
        spmx.save(checkpoint_path(args.out), trace.params.reshape(-1, 1))
        return text

    train, test = make_blobs(BLOBS["n"], BLOBS["classes"], BLOBS["dim"], BLOBS["separation"], seed=args.seed)
    net = DenseNet.init([BLOBS["dim"], BLOBS["hidden"], BLOBS["classes"]], seed=args.seed, gemm_mode=mode)
    trace = engine(net_objective(net, train), cfg)
    trained = net.with_params(trace.params)
    text = trace.to_csv() + f"# test_accuracy={fmt(accuracy(trained, test))}\n"
    emit(text, args.out)
    save_checkpoint(checkpoint_path(args.out), trained)
    return text


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="mixfp", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    s = sub.add_parser("split-report", help="split random matrices and report reconstruction error")
    s.add_argument("--n", type=int, required=True)
    s.add_argument("--seeds", type=int, required=True)
    s.add_argument("--scale", type=float, default=1.0, help="entries uniform in [-scale, scale]")
    s.add_argument("--out")
    s.set_defaults(func=cmd_split_report)

    g = sub.add_parser("gemm-accuracy", help="error and half-product count per GEMM mode")
    g.add_argument("--n", type=int, required=True)
    g.add_argument("--seeds", type=int, required=True)
    g.add_argument("--modes", required=True, help="comma list of " + ",".join(m.value for m in GemmMode))
    g.add_argument("--out")
    g.set_defaults(func=cmd_gemm_accuracy)

    t = sub.add_parser("train", help="train on a toy problem with one of the SGD engines")
    t.add_argument("--engine", choices=sorted(ENGINES), required=True)
    t.add_argument("--workers", type=int, default=1)
    t.add_argument("--staleness", type=int)
    t.add_argument("--gemm", default=GemmMode.EXACT32.value)
    t.add_argument("--epochs", type=int, default=50)
    t.add_argument("--lr", type=float, default=0.05)
    t.add_argument("--seed", type=int, default=0)
    t.add_argument("--problem", choices=["blobs", "lsq"], required=True)
    t.add_argument("--out", required=True)
    t.set_defaults(func=cmd_train)
    return p


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        args.func(args)
        return EXIT_OK
    except UsageError as exc:
        parser.print_usage(sys.stderr)
        print(exc, file=sys.stderr)
        return EXIT_USAGE
    except DivergedError as exc:
        print(f"mixfp: {exc}", file=sys.stderr)
        return EXIT_DIVERGED
    except OSError as exc:
        print(f"mixfp: I/O failure: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
