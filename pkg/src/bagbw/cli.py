"""Command-line front end.

    bagbw select cv DATA.csv --x age --y days
    bagbw select bagged DATA.csv --x age --y days --r 30000 --N 10 --bins 3000
    bagbw r0 DATA.csv --x age --y days --N 25
    bagbw fit DATA.csv --x age --y days --method bagged --r 2000 --ecdf
    bagbw simulate mse-ratio --model M1 --n 10000 --r 100,1000 --reps 200

Exit codes: 0 success, 2 usage error, 3 data error, 4 numerical failure.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import os
import sys
import time
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import __version__
from .asymptotics import estimate_r0
from .bagging import BaggingConfig, bagged_bandwidth
from .binning import default_bins
from .cv import cv_bandwidth
from .errors import BagbwError, DataError, NumericalError
from .estimator import Dataset, ecdf_transform, fit_curve
from .kernel import gaussian_kernel

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_NUMERIC = 0, 2, 3, 4
SEED_ENV = "BAGBW_SEED"
EXPERIMENTS = ("sn-dist", "mse-ratio", "small-n", "timing", "mise-oracle")


class UsageError(Exception):
    pass


# --- ingestion ---------------------------------------------------------------


@dataclass(frozen=True)
class IngestConfig:
    path: str
    x_column: str = "0"
    y_column: str = "1"
    delimiter: str = ","
    header: bool = True
    jitter: bool = False
    jitter_seed: int = 0
    filter: tuple[str, str] | None = None


def _resolve_column(spec: str, names: list[str] | None, what: str) -> int:
    if names is not None and spec in names:
        return names.index(spec)
    if spec.lstrip("-").isdigit():
        idx = int(spec)
        width = len(names) if names is not None else None
        if idx < 0 or (width is not None and idx >= width):
            raise DataError(f"{what} column index {idx} out of range")
        return idx
    raise DataError(f"{what} column {spec!r} not found" + (f" (have: {', '.join(names)})" if names else ""))


def ingest(cfg: IngestConfig) -> Dataset:
    """Read two numeric columns from a delimited text file."""
    try:
        text = Path(cfg.path).read_text()
    except OSError as exc:
        raise DataError(f"cannot read {cfg.path}: {exc.strerror or exc}") from exc
    rows = list(csv.reader(io.StringIO(text), delimiter=cfg.delimiter))
    names = None
    start_line = 1
    if cfg.header:
        if not rows:
            raise DataError(f"{cfg.path} is empty")
        names = [c.strip() for c in rows[0]]
        rows = rows[1:]
        start_line = 2
    ix = _resolve_column(cfg.x_column, names, "x")
    iy = _resolve_column(cfg.y_column, names, "y")
    flt = None
    if cfg.filter is not None:
        flt = (_resolve_column(cfg.filter[0], names, "filter"), cfg.filter[1])

    xs, ys = [], []
    for lineno, row in enumerate(rows, start=start_line):
        if not row or all(not c.strip() for c in row):
            continue
        need = max(ix, iy, flt[0] if flt else 0)
        if len(row) <= need:
            raise DataError(f"line {lineno}: expected at least {need + 1} fields, got {len(row)}")
        if flt is not None and row[flt[0]].strip() != flt[1]:
            continue
        try:
            xv, yv = float(row[ix]), float(row[iy])
        except ValueError:
            raise DataError(f"line {lineno}: non-numeric value in {row[ix]!r}, {row[iy]!r}") from None
        if not (np.isfinite(xv) and np.isfinite(yv)):
            raise DataError(f"line {lineno}: non-finite value")
        xs.append(xv)
        ys.append(yv)
    if len(xs) < 2:
        raise DataError(f"need at least 2 data rows, found {len(xs)}")
    d = Dataset(np.array(xs), np.array(ys))
    return jitter_ties(d, cfg.jitter_seed) if cfg.jitter else d


def jitter_ties(d: Dataset, seed: int) -> Dataset:
    """x + U1 and y + (U2 - U3) with U1, U2, U3 independent U(0, 1) samples."""
    rng = np.random.default_rng(seed)
    u1, u2, u3 = (rng.random(d.n) for _ in range(3))
    return Dataset(d.x + u1, d.y + (u2 - u3))


# --- schemas -----------------------------------------------------------------


def load_schema(name: str) -> dict:
    return json.loads((Path(__file__).parent / "schemas" / f"{name}.schema.json").read_text())


# --- commands ----------------------------------------------------------------


def _seed(args) -> int:
    if getattr(args, "seed", None) is not None:
        return int(args.seed)
    env = os.environ.get(SEED_ENV)
    if env is not None:
        try:
            return int(env)
        except ValueError:
            raise UsageError(f"{SEED_ENV} must be an integer, got {env!r}") from None
    return 0


def _ingest_from(args, seed: int) -> Dataset:
    flt = None
    if getattr(args, "filter", None):
        if "=" not in args.filter:
            raise UsageError("--filter expects column=value")
        col, val = args.filter.split("=", 1)
        flt = (col.strip(), val.strip())
    cfg = IngestConfig(
        path=args.data,
        x_column=args.x,
        y_column=args.y,
        delimiter=args.delimiter,
        header=not args.no_header,
        jitter=args.jitter,
        jitter_seed=args.jitter_seed if args.jitter_seed is not None else seed,
        filter=flt,
    )
    return ingest(cfg)


def _select(args, d: Dataset, seed: int) -> dict:
    k = gaussian_kernel()
    t0 = time.perf_counter()
    if args.method == "cv":
        bins = args.bins if args.bins is not None else default_bins(d.n)
        curve = cv_bandwidth(d, k, bins=bins, exact=args.exact)
        return {
            "method": "cv",
            "h": curve.h_star,
            "n": d.n,
            "bins": None if args.exact else bins,
            "boundary_hit": curve.boundary_hit,
            "failures": 0,
            "seed": seed,
            "timing_seconds": time.perf_counter() - t0,
        }

    if args.auto_r0 and args.r is not None:
        raise UsageError("--r and --auto-r0 are mutually exclusive")
    out = {"method": "bagged", "n": d.n, "seed": seed}
    if args.auto_r0:
        r, c_hat = estimate_r0(d, k, N=args.N, s=args.s, p=args.p, seed=seed)
        out["r0"] = {"r_hat": r, "constants": c_hat.to_dict()}
    elif args.r is not None:
        r = args.r
    else:
        raise UsageError("select bagged needs --r or --auto-r0")
    cfg = BaggingConfig(r=r, N=args.N, seed=seed, bins_per_subsample=args.bins, workers=args.workers)
    res = bagged_bandwidth(d, k, cfg)
    out.update(
        {
            "h": res.h_bagged,
            "r": r,
            "N": args.N,
            "bins": cfg.bins,
            "workers": args.workers,
            "per_subsample": [None if not np.isfinite(v) else float(v) for v in res.h_subsample],
            "per_subsample_rescaled": [None if not np.isfinite(v) else float(v) for v in res.h_rescaled],
            "failures": res.failures,
            "boundary_hits": res.boundary_hits,
            "timing_seconds": time.perf_counter() - t0,
        }
    )
    return out


def cmd_select(args) -> int:
    seed = _seed(args)
    d = _ingest_from(args, seed)
    out = _select(args, d, seed)
    out["version"] = __version__
    _emit_json(out, args.out)
    return EXIT_OK


def cmd_r0(args) -> int:
    seed = _seed(args)
    d = _ingest_from(args, seed)
    k = gaussian_kernel()
    t0 = time.perf_counter()
    r, c_hat = estimate_r0(d, k, N=args.N, s=args.s, p=args.p, seed=seed)
    _emit_json(
        {
            "method": "r0",
            "r_hat": r,
            "n": d.n,
            "N": args.N,
            "s": args.s,
            "p": args.p if args.p is not None else min(d.n, 5000),
            "constants": c_hat.to_dict(),
            "seed": seed,
            "timing_seconds": time.perf_counter() - t0,
            "version": __version__,
        },
        args.out,
    )
    return EXIT_OK


def cmd_fit(args) -> int:
    seed = _seed(args)
    d = _ingest_from(args, seed)
    k = gaussian_kernel()
    quantile_map = None
    if args.ecdf:
        d, quantile_map = ecdf_transform(d)
    if args.h is not None:
        if not args.h > 0:
            raise DataError(f"bandwidth must be positive, got {args.h}")
        h = args.h
    elif args.method is not None:
        h = _select(args, d, seed)["h"]
    else:
        raise UsageError("fit needs --h or --method")
    curve = fit_curve(d, k, h, n_grid=args.grid_points)
    grid = quantile_map(curve.grid) if quantile_map is not None else curve.grid
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\r\n")
    w.writerow(["grid", "value"])
    for g, v in zip(np.atleast_1d(grid), curve.values):
        w.writerow([repr(float(g)), repr(float(v))])
    _emit_text(buf.getvalue(), args.out)
    print(json.dumps({"h": h, "ecdf": bool(args.ecdf), "points": int(curve.grid.size)}), file=sys.stderr)
    return EXIT_OK


def _int_list(s: str) -> list[int]:
    try:
        return [int(float(v)) for v in s.split(",") if v.strip()]
    except ValueError:
        raise UsageError(f"expected a comma-separated list of integers, got {s!r}") from None


def cmd_simulate(args) -> int:
    from . import simlab

    seed = _seed(args)
    n_list = _int_list(args.n) if args.n else None
    exp = args.experiment
    sim = simlab.get_model(args.model) if exp != "timing" else None

    def need_n(single: bool):
        if not n_list:
            raise UsageError(f"simulate {exp} needs --n")
        if single and len(n_list) != 1:
            raise UsageError(f"simulate {exp} takes a single --n")
        return n_list[0] if single else n_list

    if exp == "mise-oracle":
        rep = simlab.experiment_mise_oracle(sim, need_n(True), reps=args.reps, seed=seed, workers=args.workers)
    elif exp == "sn-dist":
        rep = simlab.experiment_sn_distribution(sim, need_n(False), reps=args.reps, seed=seed, oracle_reps=args.oracle_reps, workers=args.workers)
    elif exp == "mse-ratio":
        if not args.r:
            raise UsageError("simulate mse-ratio needs --r")
        rep = simlab.experiment_mse_ratio(sim, need_n(True), _int_list(args.r), N=args.N, reps=args.reps, seed=seed, oracle_reps=args.oracle_reps, workers=args.workers)
    elif exp == "small-n":
        rep = simlab.experiment_small_n(sim, n_list or (50, 500, 5000), reps=args.reps, seed=seed, oracle_reps=args.oracle_reps, workers=args.workers)
    else:
        exps = tuple(float(e) for e in args.r_exponents.split(","))
        rep = simlab.experiment_timing(need_n(False), exps, N=args.N, seed=seed, model=args.model, workers=args.workers)

    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    stem = f"{exp}_{args.model}_seed{seed}"
    report = rep.statistical_payload()
    report["digest"] = rep.digest()
    (out_dir / f"{stem}.json").write_text(json.dumps(report, sort_keys=True, indent=1) + "\n")
    (out_dir / f"{stem}.timings.json").write_text(
        json.dumps({"timings": simlab._jsonable(rep.timings), "machine": rep.machine, "workers": args.workers}, sort_keys=True, indent=1) + "\n"
    )
    with open(out_dir / f"{stem}.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\r\n")
        if exp == "timing":
            fits = rep.timings["fits"]
            w.writerow(["method", "n", "r", "seconds", "alpha", "beta"])
            for row in rep.timings["rows"]:
                fit = fits[row["method"]]
                w.writerow([row["method"], row["n"], row["r"], repr(row["seconds"]), repr(fit["alpha"]), repr(fit["beta"])])
        else:
            for row in rep.csv_rows():
                w.writerow(row)
    print(json.dumps({"report": str(out_dir / f"{stem}.json"), "csv": str(out_dir / f"{stem}.csv"), "digest": rep.digest(), "summary": simlab._jsonable(rep.summary)}, sort_keys=True))
    return EXIT_OK


def _emit_json(obj: dict, out: str | None) -> None:
    _emit_text(json.dumps(obj, sort_keys=True) + "\n", out)


def _emit_text(text: str, out: str | None) -> None:
    if out:
        with open(out, "w", newline="") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


# --- parser ------------------------------------------------------------------


def _add_data_args(p: argparse.ArgumentParser) -> None:
    p.add_argument("data", help="delimited text file")
    p.add_argument("--x", default="0", help="covariate column (name or 0-based index)")
    p.add_argument("--y", default="1", help="response column (name or 0-based index)")
    p.add_argument("--delimiter", default=",")
    p.add_argument("--no-header", action="store_true", help="first line is data")
    p.add_argument("--jitter", action="store_true", help="break ties: x + U1, y + (U2 - U3)")
    p.add_argument("--jitter-seed", type=int, default=None, help="defaults to --seed")
    p.add_argument("--filter", default=None, metavar="COLUMN=VALUE", help="keep only matching rows")
    p.add_argument("--seed", type=int, default=None, help=f"master seed (fallback: ${SEED_ENV}, then 0)")
    p.add_argument("--out", default=None, help="write output here instead of stdout")


def _add_selection_args(p: argparse.ArgumentParser) -> None:
    p.add_argument("--bins", type=int, default=None, help="bins (default 0.1n for cv, 0.1r per subsample)")
    p.add_argument("--exact", action="store_true", help="cv: exact O(n^2) criterion instead of binning")
    p.add_argument("--r", type=int, default=None, help="subsample size")
    p.add_argument("--N", type=int, default=25, help="number of subsamples")
    p.add_argument("--workers", type=int, default=os.cpu_count() or 1)
    p.add_argument("--auto-r0", action="store_true", help="estimate r from the data")
    p.add_argument("--s", type=int, default=10, help="pilot subsamples for --auto-r0")
    p.add_argument("--p", type=int, default=None, help="pilot subsample size for --auto-r0")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="bagbw", description="Bagged cross-validation bandwidths for Nadaraya-Watson regression.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    sel = sub.add_parser("select", help="select a bandwidth")
    sel_sub = sel.add_subparsers(dest="method", required=True)
    for method in ("cv", "bagged"):
        p = sel_sub.add_parser(method)
        _add_data_args(p)
        _add_selection_args(p)
        p.set_defaults(func=cmd_select)

    r0 = sub.add_parser("r0", help="estimate the AMSE-optimal subsample size")
    _add_data_args(r0)
    r0.add_argument("--N", type=int, default=25)
    r0.add_argument("--s", type=int, default=10)
    r0.add_argument("--p", type=int, default=None)
    r0.set_defaults(func=cmd_r0)

    fit = sub.add_parser("fit", help="evaluate the fitted curve on a grid (CSV)")
    _add_data_args(fit)
    fit.add_argument("--h", type=float, default=None, help="bandwidth")
    fit.add_argument("--method", choices=("cv", "bagged"), default=None, help="select h first")
    fit.add_argument("--ecdf", action="store_true", help="fit on the ECDF scale, report on the original scale")
    fit.add_argument("--grid-points", type=int, default=401)
    _add_selection_args(fit)
    fit.set_defaults(func=cmd_fit)

    sim = sub.add_parser("simulate", help="run a Monte Carlo experiment")
    sim.add_argument("experiment", choices=EXPERIMENTS)
    sim.add_argument("--model", default="M1", choices=("M1", "M2", "M3"))
    sim.add_argument("--n", default=None, help="sample size(s), comma separated")
    sim.add_argument("--r", default=None, help="subsample sizes for mse-ratio, comma separated")
    sim.add_argument("--r-exponents", default="0.7,0.8,0.9", help="timing: r = n^e")
    sim.add_argument("--N", type=int, default=25)
    sim.add_argument("--reps", type=int, default=200)
    sim.add_argument("--oracle-reps", type=int, default=200)
    sim.add_argument("--seed", type=int, default=None)
    sim.add_argument("--workers", type=int, default=1)
    sim.add_argument("--out-dir", default=".")
    sim.set_defaults(func=cmd_simulate)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except UsageError as exc:
        parser.print_usage(sys.stderr)
        print(f"bagbw: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except DataError as exc:
        print(f"bagbw: data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except NumericalError as exc:
        print(f"bagbw: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except BagbwError as exc:
        print(f"bagbw: error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


def main_entry() -> None:
    sys.exit(main())


if __name__ == "__main__":
    main_entry()
