"""Command-line front end.

    markovfbm quadrature  --H 0.25 --n 2 --m 1 --r 0.5
    markovfbm error-sweep --H 0.1 --m 5 --n 4,8,16,32,64,128,256
    markovfbm paths       --H 0.1 --n 8 --m 3 --k 64 --N 10 --seed 1
    markovfbm price       --H 0.1 --n 16 --m 5 --K 1 --k 256 --N 100000 --seed 42

Exit codes: 0 success, 2 invalid arguments, 3 numerical failure.
"""

from __future__ import annotations

import argparse
import contextlib
import json
import sys
from dataclasses import dataclass, field

from . import io
from .analysis import error_sweep, fit_rate
from .bergomi import VOL_SOURCES, PricingConfig, price
from .errors import NumericalFailure
from .quadrature import ModelParams, build_scheme
from .rng import check_seed
from .simulate import DEFAULT_TOL_RANK, simulate_lift

SUBCOMMANDS = ("quadrature", "error-sweep", "paths", "price")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


@dataclass
class RunConfig:
    subcommand: str
    params: dict = field(default_factory=dict)
    output: str | None = None
    format: str = "json"

    def validate(self) -> None:
        """Check every parameter against the owning module before any work starts."""
        p = self.params
        ModelParams(p["H"], p.get("T", 1.0))
        if self.subcommand in ("quadrature", "paths", "price"):
            if p.get("vol") in (None, "scheme"):
                if p["n"] < 2:
                    raise ValueError(f"need n >= 2 intervals, got n={p['n']}")
                if p["m"] < 1:
                    raise ValueError(f"need m >= 1 points per interval, got m={p['m']}")
        if p.get("r") is not None and not p["r"] > 0.0:
            raise ValueError(f"rate must be positive, got r={p['r']}")
        if self.subcommand == "error-sweep":
            if not p["n"]:
                raise ValueError("--n needs at least one interval count")
            if any(n < 2 for n in p["n"]):
                raise ValueError(f"all interval counts must be >= 2, got {p['n']}")
            if p["m"] < 1:
                raise ValueError(f"need m >= 1 points per interval, got m={p['m']}")
        if self.subcommand in ("paths", "price"):
            check_seed(p["seed"])
            if p["k"] < 1:
                raise ValueError(f"need k >= 1 steps, got k={p['k']}")
            if p["N"] < 1:
                raise ValueError(f"need N >= 1 paths, got N={p['N']}")
            if not -1.0 <= p["rho"] <= 1.0:
                raise ValueError(f"correlation must lie in [-1, 1], got rho={p['rho']}")
            if not p["tol_rank"] >= 0.0:
                raise ValueError("rank tolerance must be non-negative")
        if self.subcommand == "price":
            PricingConfig(K=p["K"], T=p["T"], k=p["k"], N=p["N"], rho=p["rho"], H=p["H"],
                          n=p["n"], m=p["m"], r=p["r"], vol_source=p["vol"], seed=p["seed"],
                          tol_rank=p["tol_rank"])


def _int_list(text: str) -> list[int]:
    try:
        return [int(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="markovfbm", description=__doc__.split("\n")[0], allow_abbrev=False)
    sub = parser.add_subparsers(dest="subcommand", required=True, parser_class=_Parser)

    def common(p, scheme=True):
        p.add_argument("--H", type=float, required=True, help="Hurst index in (0, 1/2)")
        p.add_argument("--T", type=float, default=1.0, help="horizon")
        if scheme:
            p.add_argument("--n", type=int, default=16, help="number of geometric intervals")
            p.add_argument("--m", type=int, default=5, help="Gauss points per interval")
        p.add_argument("--r", type=float, default=None, help="grid rate (default 2Hm/3)")
        p.add_argument("--out", default=None, help="output file (default stdout)")

    p = sub.add_parser("quadrature", help="build a scheme and print it as JSON")
    common(p)

    p = sub.add_parser("error-sweep", help="closed-form L2 errors over n plus a rate fit")
    common(p, scheme=False)
    p.add_argument("--m", type=int, required=True)
    p.add_argument("--n", type=_int_list, required=True, help="comma-separated interval counts")
    p.add_argument("--format", choices=("csv", "json"), default="csv")
    p.add_argument("--workers", type=int, default=1)

    for name, hlp in (("paths", "simulate W^{H,n} paths"), ("price", "Monte Carlo option price")):
        p = sub.add_parser(name, help=hlp)
        common(p)
        p.add_argument("--k", type=int, default=256, help="time steps")
        p.add_argument("--N", type=int, default=1000, help="Monte Carlo paths")
        p.add_argument("--rho", type=float, default=0.0, help="correlation of B and W")
        p.add_argument("--seed", type=int, required=True, help="random seed (required)")
        p.add_argument("--tol-rank", dest="tol_rank", type=float, default=DEFAULT_TOL_RANK)
        p.add_argument("--workers", type=int, default=1)
        if name == "paths":
            p.add_argument("--format", choices=("csv", "json"), default="csv")
        else:
            p.add_argument("--K", type=float, required=True, help="strike")
            p.add_argument("--vol", choices=VOL_SOURCES, default="scheme")
            p.add_argument("--option", choices=("put", "call"), default="put")
    return parser


def _run_config(args) -> RunConfig:
    params = {k: v for k, v in vars(args).items() if k not in ("subcommand", "out", "format")}
    return RunConfig(args.subcommand, params, args.out, getattr(args, "format", "json"))


def _execute(cfg: RunConfig, out) -> None:
    p = cfg.params
    if cfg.subcommand == "quadrature":
        scheme = build_scheme(ModelParams(p["H"], p["T"]), p["n"], p["m"], p["r"])
        out.write(scheme.to_json(indent=2) + "\n")
    elif cfg.subcommand == "error-sweep":
        records = error_sweep(p["H"], p["m"], p["n"], p["T"], p["r"], p["workers"])
        fit = fit_rate(records) if len(records) >= 2 else None
        if cfg.format == "csv":
            io.write_sweep_csv(records, fit, out)
        else:
            doc = {"records": [vars(rec) for rec in records]}
            if fit is not None:
                doc["fit"] = io.fit_document(records, fit)
            out.write(json.dumps(doc, indent=2) + "\n")
    elif cfg.subcommand == "paths":
        scheme = build_scheme(ModelParams(p["H"], p["T"]), p["n"], p["m"], p["r"])
        batch = simulate_lift(scheme, p["T"], p["k"], p["rho"], p["N"], p["seed"],
                              tol_rank=p["tol_rank"], workers=p["workers"])
        prov = {key: p[key] for key in ("H", "T", "n", "m", "k", "N", "rho", "seed", "tol_rank")}
        prov["r"] = scheme.r
        if cfg.format == "csv":
            io.write_paths_csv(batch, out, prov)
        else:
            out.write(json.dumps(io.paths_document(batch, prov)) + "\n")
    elif cfg.subcommand == "price":
        config = PricingConfig(K=p["K"], T=p["T"], k=p["k"], N=p["N"], rho=p["rho"], H=p["H"],
                               n=p["n"], m=p["m"], r=p["r"], vol_source=p["vol"],
                               seed=p["seed"], tol_rank=p["tol_rank"])
        result = price(config, p["option"], p["workers"])
        out.write(json.dumps(result.to_dict(), indent=2) + "\n")


@contextlib.contextmanager
def _open_out(path):
    if path is None:
        yield sys.stdout
    else:
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            yield fh


def run(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        cfg = _run_config(args)
        cfg.validate()
    except (UsageError, ValueError) as exc:
        print(f"markovfbm: error: {exc}", file=sys.stderr)
        return 2
    try:
        with _open_out(cfg.output) as out:
            _execute(cfg, out)
    except NumericalFailure as exc:
        print(f"markovfbm: numerical failure: {exc}", file=sys.stderr)
        return 3
    except ValueError as exc:
        print(f"markovfbm: error: {exc}", file=sys.stderr)
        return 2
    return 0


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
