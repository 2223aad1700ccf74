"""``stiefel-relu`` command line.

Subcommands::

    gen M N METHOD        write one weight matrix plus a validation report
    check PATH            validate a stored matrix
    stats clt|transport|propagate|choleskycheck
    bench depth|fewshot|tabular|activation

Matrices are written as CSV (``.csv``) or in a little-endian binary layout
(any other suffix): the 4 bytes ``SRW1``, uint32 rows, uint32 cols, then
``rows * cols`` float64 values in row-major order.

Bench results are CSV with a header row (see ``RESULT_FIELDS`` in
:mod:`stiefel_relu.bench`); ``--summary`` adds per-config mean/std/median.
Infrastructure failures exit non-zero; model divergence never does.
"""
import argparse
import json
import logging
import os
import struct
import sys
from pathlib import Path

import numpy as np

from . import bench, data
from .errors import BadMagic, InvalidDim, LengthMismatch, StiefelReluError
from .initializers import (
    BASELINE_KINDS,
    InitializerSpec,
    generate_alg1,
    generate_alg2,
    generate_baseline,
    make_rng,
    validate_membership,
)
from .linalg import centering_matrix, cholesky_P
from .nn import ActivationKind
from .propagation import InputDistribution, clt_distance, empirical_transport, propagate_theory

log = logging.getLogger("stiefel_relu")

MAGIC = b"SRW1"
EXIT_USAGE = 2


# --- matrix files -------------------------------------------------------------

def write_matrix(w, path):
    path = Path(path)
    w = np.asarray(w, dtype=np.float64)
    if path.suffix == ".csv":
        np.savetxt(path, w, delimiter=",", fmt="%.17g")
    else:
        with open(path, "wb") as f:
            f.write(MAGIC + struct.pack("<II", *w.shape))
            f.write(w.astype("<f8").tobytes())


def read_matrix(path):
    path = Path(path)
    if path.suffix == ".csv":
        return np.atleast_2d(np.loadtxt(path, delimiter=",", dtype=np.float64))
    raw = path.read_bytes()
    if raw[:4] != MAGIC:
        raise BadMagic(f"{path}: not an SRW1 matrix file")
    rows, cols = struct.unpack("<II", raw[4:12])
    if len(raw) != 12 + 8 * rows * cols:
        raise LengthMismatch(f"{path}: expected {rows}x{cols} float64 values")
    return np.frombuffer(raw, dtype="<f8", offset=12).reshape(rows, cols).copy()


def generate(m, n, method, seed):
    rng = make_rng(seed)
    if method in ("alg1", "proposed_alg1"):
        return generate_alg1(m, n, rng).w
    if method in ("alg2", "proposed_alg2"):
        return generate_alg2(m, n, rng).w
    if method in BASELINE_KINDS:
        return generate_baseline(InitializerSpec(method, seed=seed), m, n, rng)
    raise argparse.ArgumentTypeError(f"unknown method {method!r}")


def cmd_gen(args):
    w = generate(args.m, args.n, args.method, args.seed)
    report = validate_membership(w, args.tol).as_dict() if w.shape[0] <= w.shape[1] else {}
    report.update(m=args.m, n=args.n, method=args.method, seed=args.seed,
                  objective=float(w.sum()), optimum=float(np.sqrt(args.m * args.n)))
    if args.out:
        write_matrix(w, args.out)
        Path(str(args.out) + ".report.json").write_text(json.dumps(report, indent=2) + "\n")
        print(json.dumps(report))
    else:
        np.savetxt(sys.stdout, w, delimiter=",", fmt="%.17g")
        print(json.dumps(report), file=sys.stderr)
    return 0


def cmd_check(args):
    w = read_matrix(args.path)
    report = validate_membership(w, args.tol)
    print(json.dumps(report.as_dict()))
    return 0 if report.passed else 1


# --- stats ----------------------------------------------------------------

def parse_widths(text):
    """``64x50`` is a 64-wide input followed by 50 layers of width 64; ``a,b,c`` is literal."""
    if "x" in text:
        w, d = text.split("x")
        return [int(w)] * (int(d) + 1)
    return [int(v) for v in text.split(",")]


def _int_list(text):
    return [int(float(v)) for v in text.split(",") if v]


def _float_list(text):
    return [float(v) for v in text.split(",") if v]


def _str_list(text):
    return [v.strip() for v in text.split(",") if v.strip()]


def cholesky_check(max_m):
    """Largest deviation of the closed form from a numerical factorization, over m = 2..max_m.

    ``I - J/m`` is only semidefinite, so the reference factors its positive
    definite leading block with LAPACK and completes the last row by a
    triangular solve.
    """
    from scipy.linalg import cholesky, solve_triangular

    worst_entry = worst_recon = 0.0
    for m in range(2, max_m + 1):
        p = centering_matrix(m)
        ref = np.zeros((m, m))
        ref[:-1, :-1] = cholesky(p[:-1, :-1], lower=True)
        ref[-1, :-1] = solve_triangular(ref[:-1, :-1], p[-1, :-1], lower=True)
        L = cholesky_P(m)
        worst_entry = max(worst_entry, float(np.max(np.abs(L - ref))))
        worst_recon = max(worst_recon, float(np.max(np.abs(L @ L.T - p))))
    return {"max_m": max_m, "max_entry_deviation": worst_entry,
            "max_reconstruction_residual": worst_recon}


def cmd_stats(args, out):
    if args.stat == "clt":
        dist = InputDistribution.parse(args.dist)
        rows = []
        for n in _int_list(args.dims):
            m = args.m or n
            ks = [clt_distance(m, n, dist, args.trials, make_rng(args.seed, m, n, i))
                  for i in range(args.draws)]
            rows.append({"m": m, "n": n, "draws": args.draws, "trials": args.trials,
                         "ks_mean": float(np.mean(ks)), "ks_std": float(np.std(ks))})
        bench.write_rows(rows, out, list(rows[0]))
    elif args.stat == "transport":
        dist = InputDistribution.parse(args.dist)
        w = generate_alg2(args.m or args.n, args.n, make_rng(args.seed, 0)).w
        r = empirical_transport(w, dist, args.trials, make_rng(args.seed, 1))
        keys = ("trials", "predicted_mean", "predicted_variance", "mean_z", "diag_z",
                "offdiag_z", "max_mean_deviation", "max_cov_deviation")
        out.write(json.dumps({k: getattr(r, k) for k in keys}) + "\n")
    elif args.stat == "propagate":
        layers = propagate_theory(parse_widths(args.widths), args.mu, args.sigma)
        rows = [vars(s) for s in layers]
        bench.write_rows(rows, out, list(rows[0]))
    else:
        out.write(json.dumps(cholesky_check(args.max_m)) + "\n")
    return 0


# --- bench ----------------------------------------------------------------

BENCH_DEFAULTS = {
    "depths": "10,50",
    "inits": "proposed_alg2,xavier",
    "dataset": None,
    "width": None,
    "k": "4",
    "alphas": "-2,0,2,50",
    "activations": "relu,leaky_relu,prelu,elu,selu",
    "workers": 1,
    "curves": False,
    "summary": None,
}


def _apply_config(args):
    """Fill unset bench options from ``--config`` JSON, then from built-in defaults."""
    cfg = json.loads(Path(args.config).read_text()) if args.config else {}
    for key, default in BENCH_DEFAULTS.items():
        if getattr(args, key, None) is None:
            value = cfg.get(key, default)
            if isinstance(value, list):
                value = ",".join(map(str, value))
            setattr(args, key, value)
    for key in ("seed", "trials", "paper_mode"):
        if key in cfg and getattr(args, key) in (None, False):
            setattr(args, key, cfg[key])


def build_grid(args):
    scale = bench.FULL if args.paper_mode else bench.DESK
    depths = _int_list(args.depths)
    inits = _str_list(args.inits)
    kw = dict(scale=scale, trials=args.trials)
    if args.grid == "depth":
        return bench.depth_grid(depths, inits, dataset=args.dataset or "mnist",
                                width=args.width or 64, **kw)
    if args.grid == "activation":
        acts = [ActivationKind(a) for a in _str_list(args.activations)]
        return bench.activation_grid(acts, depths, inits, dataset=args.dataset or "mnist",
                                     width=args.width or 64, **kw)
    if args.grid == "fewshot":
        return bench.fewshot_grid(_int_list(args.k), depths, inits,
                                  dataset=args.dataset or "mnist", width=args.width or 64, **kw)
    return bench.tabular_grid(args.dataset or "wine", _float_list(args.alphas), depths, inits,
                              width=args.width, **kw)


def cmd_bench(args, out):
    _apply_config(args)
    configs = build_grid(args)
    seeds = None
    if args.seed is not None:
        seeds = range(args.seed, args.seed + (args.trials or configs[0].trials))
    rows = bench.run_grid(configs, seeds=seeds, data_dir=args.data_dir,
                          workers=int(args.workers), curves=bool(args.curves))
    bench.write_rows(rows, out)
    summary = bench.summarize(rows)
    if args.summary:
        bench.write_rows(summary, args.summary, bench.SUMMARY_FIELDS)
    for s in summary:
        log.info("%-10s %-14s depth=%-3d alpha0=%-5s k=%-2d %s %.4f +- %.4f (n_ok=%d/%d)",
                 s["experiment"], s["initializer"], s["depth"], s["alpha0"], s["k"],
                 s["metric"], s["mean"], s["std"], s["n_ok"], s["n"])
    return 0


# --- parser ---------------------------------------------------------------

def build_parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=None, help="base seed (default 0)")
    common.add_argument("--trials", type=int, default=None, help="repetitions / Monte-Carlo size")
    common.add_argument("--out", default=None, help="output file (default stdout)")
    common.add_argument("--paper-mode", action="store_true",
                        help="full-scale settings: 100 epochs, batch 256, full datasets")
    common.add_argument("--data-dir", default=None,
                        help=f"dataset directory (default ${data.DATA_ENV} or ~/.cache/stiefel_relu)")
    common.add_argument("-v", "--verbose", action="store_true")

    # shared flags live on the leaf parsers only; argparse lets subparser
    # defaults overwrite values parsed by a parent
    p = argparse.ArgumentParser(prog="stiefel-relu", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)

    g = sub.add_parser("gen", parents=[common], help="generate a weight matrix")
    g.add_argument("m", type=int)
    g.add_argument("n", type=int)
    g.add_argument("method", choices=["alg1", "alg2", *BASELINE_KINDS])
    g.add_argument("--tol", type=float, default=1e-10)

    c = sub.add_parser("check", parents=[common], help="validate a stored matrix")
    c.add_argument("path")
    c.add_argument("--tol", type=float, default=1e-10)

    s = sub.add_parser("stats", help="statistical verifications")
    ss = s.add_subparsers(dest="stat", required=True)
    clt = ss.add_parser("clt", parents=[common])
    clt.add_argument("--dims", default="5,10,100")
    clt.add_argument("--m", type=int, default=None, help="rows of W (default: m = n)")
    clt.add_argument("--dist", default="chisq3")
    clt.add_argument("--draws", type=int, default=20)
    tr = ss.add_parser("transport", parents=[common])
    tr.add_argument("--n", type=int, default=64)
    tr.add_argument("--m", type=int, default=None)
    tr.add_argument("--dist", default="chisq3")
    pr = ss.add_parser("propagate", parents=[common])
    pr.add_argument("--widths", default="64x50")
    pr.add_argument("--mu", type=float, default=2.0)
    pr.add_argument("--sigma", type=float, default=1.0)
    ch = ss.add_parser("choleskycheck", parents=[common])
    ch.add_argument("--max-m", type=int, default=512)

    b = sub.add_parser("bench", parents=[common], help="training experiment grids")
    b.add_argument("grid", choices=["depth", "fewshot", "tabular", "activation"])
    b.add_argument("--config", default=None, help="JSON file with default options")
    b.add_argument("--depths")
    b.add_argument("--inits", help="comma list of initializers")
    b.add_argument("--dataset")
    b.add_argument("--width", type=int)
    b.add_argument("--k", help="few-shot sizes, comma list")
    b.add_argument("--alphas", help="tabular mean shifts, comma list")
    b.add_argument("--activations")
    b.add_argument("--workers", type=int)
    b.add_argument("--curves", action="store_true", default=None, help="one row per epoch")
    b.add_argument("--summary", help="also write per-config summary CSV here")
    return p


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.INFO,
                        format="%(message)s", stream=sys.stderr)
    if args.data_dir:
        os.environ[data.DATA_ENV] = args.data_dir
    if args.command == "bench":
        stat_defaults = {}
    else:
        stat_defaults = {"seed": 0, "trials": 100_000 if args.command == "stats" else None}
    for key, value in stat_defaults.items():
        if getattr(args, key) is None:
            setattr(args, key, value)

    out = open(args.out, "w", newline="") if args.out and args.command in ("stats", "bench") \
        else sys.stdout
    try:
        if args.command == "gen":
            return cmd_gen(args)
        if args.command == "check":
            return cmd_check(args)
        if args.command == "stats":
            return cmd_stats(args, out)
        return cmd_bench(args, out)
    except InvalidDim as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_USAGE
    except (StiefelReluError, OSError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 1
    except ValueError as e:
        if args.command == "bench" and str(e).startswith("empty"):
            print(f"usage error: {e}", file=sys.stderr)
            return EXIT_USAGE
        raise
    finally:
        if out is not sys.stdout:
            out.close()


if __name__ == "__main__":
    sys.exit(main())
