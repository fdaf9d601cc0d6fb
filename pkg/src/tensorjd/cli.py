"""Command-line interface: ``generate``, ``factorize``, ``bench`` and ``moments``.

Exit codes: 0 success, 2 usage error, 3 I/O error.
"""
from __future__ import annotations

import argparse
import csv
import io as _io
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import io
from .analysis import align_factors, incoherence
from .baselines import als, tensor_power_method
from .factorize import (
    FactorizeOptions,
    factorize_asymmetric,
    factorize_fourth_order,
    two_stage_factorize,
)
from .moments import estimate_topic_model, generate_corpus, random_topic_model, topic_errors
from .synthetic import derive_seed, random_model, random_noise
from .tensor import NoiseSpec, cp_to_tensor

EXIT_USAGE = 2
EXIT_IO = 3

CSV_HEADER = ["trial", "seed", "d", "k", "eps", "method", "mode", "error", "objective",
              "rho_max", "mu", "sweeps", "runtime_ms", "status"]
BENCH_METHODS = ("ojd0", "ojd1", "nojd0", "nojd1", "tpm", "als")
FACTORIZE_METHODS = BENCH_METHODS + ("asym", "order4")


class UsageError(Exception):
    pass


def _u64(text: str) -> int:
    v = int(text, 0)
    if not 0 <= v < 2**64:
        raise argparse.ArgumentTypeError("seed must be an unsigned 64-bit integer")
    return v


def _positive(text: str) -> int:
    v = int(text)
    if v < 1:
        raise argparse.ArgumentTypeError("must be a positive integer")
    return v


def _nonneg_float(text: str) -> float:
    v = float(text)
    if not v >= 0:
        raise argparse.ArgumentTypeError("must be nonnegative")
    return v


def _list(conv):
    def parse(text: str):
        items = [t for t in text.split(",") if t.strip()]
        if not items:
            raise argparse.ArgumentTypeError("empty list")
        return [conv(t.strip()) for t in items]
    return parse


def _method(text: str) -> str:
    if text not in BENCH_METHODS:
        raise argparse.ArgumentTypeError(f"unknown method {text!r}")
    return text


def _fmt(x) -> str:
    if x is None:
        return ""
    if isinstance(x, (bool, np.bool_)):
        return "1" if x else "0"
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    return format(float(x), ".10g")


# ----------------------------------------------------------------- methods

def _run_method(method: str, T: np.ndarray, k: int, seed: int, L0: int | None):
    """Run one factorization method; returns ``(estimate, info)``."""
    if method in ("ojd0", "ojd1", "nojd0", "nojd1"):
        opts = FactorizeOptions(rank=k, mode="orthogonal" if method.startswith("o") else "nonorthogonal",
                                projections=L0, plugin=method.endswith("1"), seed=seed)
        rep = two_stage_factorize(T, opts)
        dg = rep.diagnostics
        last = rep.stage1 if rep.stage1 is not None else rep.stage0
        info = dict(dg, objective=last.objective,
                    sweeps=dg["sweeps0"] + (dg["sweeps1"] or 0), flags=rep.flags)
        return rep.estimate, info
    if method in ("asym", "order4"):
        opts = FactorizeOptions(rank=k, mode="nonorthogonal", projections=L0, seed=seed)
        if method == "asym":
            rep = factorize_asymmetric(T, opts)
        else:
            rep = factorize_fourth_order(T, opts, return_report=True)
        info = dict(rep.diagnostics, objective=rep.stage0.objective,
                    sweeps=rep.stage0.sweeps, flags=rep.flags)
        return rep.estimate, info
    if method == "tpm":
        est = tensor_power_method(T, k, seed=seed)
        resid = float(np.sum((T - cp_to_tensor(est)) ** 2))
        flags = {k_: v for k_, v in est.flags.items() if k_ not in ("restarts", "iters")}
        return est, {"objective": resid, "mu": incoherence(est.A), "seed": seed,
                     "restarts": est.flags["restarts"], "iters": est.flags["iters"], "flags": flags}
    if method == "als":
        est = als(T, k, seed=seed)
        trace = est.flags["trace"]
        return est, {"objective": trace[-1], "mu": incoherence(est.A), "sweeps": len(trace) - 1,
                     "seed": seed, "flags": {k_: v for k_, v in est.flags.items() if k_ != "trace"}}
    raise ValueError(f"unknown method {method!r}")


# ----------------------------------------------------------------- generate

def cmd_generate(args) -> int:
    if args.k > args.d:
        raise UsageError("rank exceeds dimension")
    model = random_model(args.d, args.k, args.mode, seed=args.seed, mu_max=args.mu_max,
                         cond_max=args.cond_max)
    order = model.order
    spec = NoiseSpec(args.eps, seed=derive_seed(args.seed, 1), normalization=args.normalization)
    T = cp_to_tensor(model)
    if args.eps > 0:
        T = T + args.eps * random_noise(args.d, order, spec)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    io.write_tensor(out / "tensor.tns", T)
    io.write_model(out / "truth.cp", model)
    print(f"wrote {out / 'tensor.tns'} and {out / 'truth.cp'}")
    return 0


# ----------------------------------------------------------------- factorize

def cmd_factorize(args) -> int:
    T = io.read_tensor(args.input)
    truth = io.read_model(args.truth) if args.truth else None
    method = args.method
    if T.ndim == 4:
        method = "order4"
    elif method == "order4":
        raise UsageError("order4 needs a TNS4 tensor")
    if args.k > min(T.shape):
        raise UsageError("rank exceeds dimension")
    try:
        est, info = _run_method(method, T, args.k, args.seed, args.L0)
    except ValueError as exc:
        raise UsageError(str(exc)) from exc
    lines = [f"method={method}", f"k={args.k}"]
    for key in ("L0", "seed", "objective0", "objective1", "sweeps0", "sweeps1",
                "converged0", "converged1", "objective", "sweeps", "rho_max", "mu",
                "restarts", "iters"):
        if key in info:
            lines.append(f"{key}={_fmt(info[key])}")
    flags = info.get("flags") or {}
    lines.append("flags=" + ";".join(f"{k_}:{v}" for k_, v in sorted(flags.items())))
    if truth is not None:
        al = align_factors(truth, est)
        lines.append(f"error={_fmt(al.mean_error)}")
    report = "\n".join(lines) + "\n"
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    io.write_model(out / "estimate.cp", est)
    (out / "report.txt").write_text(report)
    sys.stdout.write(report)
    return 0


# ----------------------------------------------------------------- bench

@dataclass(frozen=True)
class BenchConfig:
    """Grid of benchmark cells; each cell runs ``trials`` seeded instances."""

    dims: tuple
    ranks: tuple
    epsilons: tuple
    methods: tuple
    trials: int = 10
    seed: int = 0
    output: str | None = None
    L0: int | None = None
    jobs: int = 1
    timing: bool = False

    def __post_init__(self):
        for name in ("dims", "ranks", "epsilons", "methods"):
            if not getattr(self, name):
                raise ValueError(f"{name} must be nonempty")
        if self.trials < 1:
            raise ValueError("trials must be at least 1")
        for m in self.methods:
            if m not in BENCH_METHODS:
                raise ValueError(f"unknown method {m!r}")

    def cells(self):
        cells = []
        for d in self.dims:
            for k in self.ranks:
                for eps in self.epsilons:
                    for method in self.methods:
                        cells.append((d, k, eps, method))
        return cells


def _bench_trial(task):
    """One benchmark instance; never raises."""
    cell_index, trial, d, k, eps, method, master, L0, timing = task
    seed = derive_seed(master, cell_index, trial)
    mode = "nonortho" if method.startswith("n") else "ortho"
    row = {"trial": trial, "seed": seed, "d": d, "k": k, "eps": _fmt(eps), "method": method,
           "mode": mode, "error": "", "objective": "", "rho_max": "", "mu": "", "sweeps": "",
           "runtime_ms": "", "status": "ok"}
    try:
        if k > d:
            raise ValueError("rank exceeds dimension")
        truth = random_model(d, k, mode, seed=seed)
        T = cp_to_tensor(truth)
        if eps > 0:
            T = T + eps * random_noise(d, 3, NoiseSpec(eps, seed=derive_seed(seed, 1)))
        start = time.perf_counter()
        est, info = _run_method(method, T, k, seed, L0)
        elapsed = (time.perf_counter() - start) * 1e3
        row.update(error=_fmt(align_factors(truth, est).mean_error), objective=_fmt(info.get("objective")),
                   rho_max=_fmt(info.get("rho_max")), mu=_fmt(info.get("mu")),
                   sweeps=_fmt(info.get("sweeps")))
        if timing:
            row["runtime_ms"] = _fmt(elapsed)
        flags = info.get("flags") or {}
        if flags:
            row["status"] = "ok;" + "|".join(sorted(flags))
    except Exception as exc:  # a failed trial is reported, never fatal
        row["status"] = f"error:{type(exc).__name__}:{exc}".replace(",", ";").replace("\n", " ")
    return row


def _median(values):
    vals = [float(v) for v in values if v != ""]
    return np.median(vals) if vals else None


def run_bench(config: BenchConfig) -> str:
    """Run the benchmark grid and return the CSV text."""
    tasks = []
    for ci, (d, k, eps, method) in enumerate(config.cells()):
        for t in range(config.trials):
            tasks.append((ci, t, d, k, eps, method, config.seed, config.L0, config.timing))
    if config.jobs > 1:
        with ProcessPoolExecutor(max_workers=config.jobs) as pool:
            rows = list(pool.map(_bench_trial, tasks, chunksize=1))
    else:
        rows = [_bench_trial(t) for t in tasks]

    buf = _io.StringIO()
    writer = csv.DictWriter(buf, fieldnames=CSV_HEADER, lineterminator="\n")
    writer.writeheader()
    for ci, (d, k, eps, method) in enumerate(config.cells()):
        cell_rows = rows[ci * config.trials:(ci + 1) * config.trials]
        writer.writerows(cell_rows)
        ok = [r for r in cell_rows if r["status"].startswith("ok")]
        errors = [float(r["error"]) for r in ok if r["error"] != ""]
        mean = np.mean(errors) if errors else None
        writer.writerow({
            "trial": "summary", "seed": config.seed, "d": d, "k": k, "eps": _fmt(eps),
            "method": method, "mode": cell_rows[0]["mode"],
            "error": _fmt(_median([r["error"] for r in ok])),
            "objective": _fmt(_median([r["objective"] for r in ok])),
            "rho_max": _fmt(_median([r["rho_max"] for r in ok])),
            "mu": _fmt(_median([r["mu"] for r in ok])),
            "sweeps": _fmt(_median([r["sweeps"] for r in ok])),
            "runtime_ms": _fmt(_median([r["runtime_ms"] for r in ok])) if config.timing else "",
            "status": f"mean={_fmt(mean)};ok={len(ok)}/{config.trials}",
        })
    return buf.getvalue()


def cmd_bench(args) -> int:
    try:
        config = BenchConfig(tuple(args.dims), tuple(args.ranks), tuple(args.eps), tuple(args.methods),
                             trials=args.trials, seed=args.seed, output=args.out, L0=args.L0,
                             jobs=args.jobs, timing=args.timing)
    except ValueError as exc:
        raise UsageError(str(exc)) from exc
    text = run_bench(config)
    if args.out:
        Path(args.out).write_text(text)
    else:
        sys.stdout.write(text)
    return 0


# ----------------------------------------------------------------- moments

def cmd_moments(args) -> int:
    if args.k > args.d:
        raise UsageError("rank exceeds dimension")
    model = random_topic_model(args.d, args.k, seed=args.seed, separated=not args.dirichlet)
    corpus = generate_corpus(model, args.n, seed=derive_seed(args.seed, 1))
    if args.corpus_out:
        io.write_corpus(args.corpus_out, corpus)
    opts = FactorizeOptions(rank=args.k, mode="nonorthogonal", seed=derive_seed(args.seed, 2))
    est = estimate_topic_model(corpus, args.k, opts)
    topic_err, prior_err = topic_errors(model, est)
    print(f"topic_err={_fmt(topic_err)}")
    print(f"prior_err={_fmt(prior_err)}")
    if est.flags:
        print("flags=" + ";".join(sorted(est.flags)))
    return 0


# ----------------------------------------------------------------- parser

def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="tensorjd",
                                description="CP tensor factorization by simultaneous diagonalization.")
    sub = p.add_subparsers(dest="command", required=True)

    g = sub.add_parser("generate", help="write a random tensor and its ground-truth model")
    g.add_argument("--d", type=_positive, required=True)
    g.add_argument("--k", type=_positive, required=True)
    g.add_argument("--eps", type=_nonneg_float, default=0.0)
    g.add_argument("--mode", choices=["ortho", "nonortho", "asym", "order4"], default="ortho")
    g.add_argument("--mu-max", type=float, default=0.5)
    g.add_argument("--cond-max", type=float, default=10.0)
    g.add_argument("--normalization", choices=["operator-estimate", "frobenius"],
                   default="operator-estimate")
    g.add_argument("--seed", type=_u64, default=0)
    g.add_argument("--out", required=True, help="output directory")
    g.set_defaults(func=cmd_generate)

    f = sub.add_parser("factorize", help="factorize a tensor file")
    f.add_argument("input")
    f.add_argument("--k", type=_positive, required=True)
    f.add_argument("--method", choices=FACTORIZE_METHODS, default="ojd1")
    f.add_argument("--L0", type=int, default=None, help="stage-0 projection count")
    f.add_argument("--truth", help="ground-truth CPMODEL file; adds an error line")
    f.add_argument("--seed", type=_u64, default=0)
    f.add_argument("--out", required=True, help="output directory")
    f.set_defaults(func=cmd_factorize)

    b = sub.add_parser("bench", help="seeded benchmark sweep to CSV")
    b.add_argument("--dims", type=_list(_positive), required=True)
    b.add_argument("--ranks", type=_list(_positive), required=True)
    b.add_argument("--eps", type=_list(_nonneg_float), required=True)
    b.add_argument("--methods", type=_list(_method), default=["ojd1"])
    b.add_argument("--trials", type=_positive, default=10)
    b.add_argument("--L0", type=int, default=None)
    b.add_argument("--jobs", type=_positive, default=1)
    b.add_argument("--timing", action="store_true", help="fill runtime_ms (breaks byte determinism)")
    b.add_argument("--seed", type=_u64, default=0)
    b.add_argument("--out", default=None, help="CSV path (stdout if omitted)")
    b.set_defaults(func=cmd_bench)

    m = sub.add_parser("moments", help="single topic model demo")
    m.add_argument("--d", type=_positive, required=True)
    m.add_argument("--k", type=_positive, required=True)
    m.add_argument("--n", type=_positive, required=True)
    m.add_argument("--dirichlet", action="store_true", help="overlapping topics")
    m.add_argument("--corpus-out", default=None)
    m.add_argument("--seed", type=_u64, default=0)
    m.set_defaults(func=cmd_moments)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    if getattr(args, "L0", None) is not None and args.L0 < 2:
        print("error: --L0 must be at least 2", file=sys.stderr)
        return EXIT_USAGE
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (OSError, io.FormatError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
