"""Command-line laboratory: every capability as a reproducible batch command.

All commands are pure functions of their flags: the seed defaults to the
fixed constant 1729, never the clock.  CSV output starts with a one-line
reproducibility header comment; JSON output embeds the same data under
"meta".  Exit codes: 0 success, 1 a verification verdict came back
"diverging" (or a trend check failed), 2 usage or guard errors.
"""

import argparse
import io
import json
import math
import sys

from . import __version__
from .asymptotics import (
    DYADIC_GRID,
    appendix_sum_fits,
    compute_constants,
    mean_expansion,
    mean_remainder_fit,
    variance_expansion,
    variance_remainder_fit,
    write_fit_csv,
)
from .contraction import CONTRACTION_GRID, decay_check, write_diagnostics_csv
from .errors import GuardError
from .exact_engine import (
    height_pmf_table,
    moment_tables,
    write_moments_csv,
    write_pmf_csv,
)
from .simulate import (
    DEFAULT_SEED,
    ks_normal,
    joint_values,
    run_experiment,
    sample_tree,
    derive_rng,
)

_CONSTANT_FORMULAS = [
    ("zeta2", "pi^2/6"),
    ("zeta3", "sum 1/n^3"),
    ("zeta4", "pi^4/90"),
    ("gamma", "lim theta(n)-log(n)"),
    ("A", "1/(2*zeta2)"),
    ("B", "gamma/zeta2 + zeta3/zeta2^2"),
    ("C", "1/10 + gamma^2/(2*zeta2) + gamma*zeta3/zeta2^2 + zeta3^2/zeta2^3"),
    ("A_star", "2*zeta3/(3*zeta2^3)"),
    ("B_star", "-1/(2*zeta2) - 3*zeta4/zeta2^3 + 2*gamma*zeta3/zeta2^3 + 4*zeta3^2/zeta2^4"),
    ("A_hat", "1/zeta2"),
    ("B_hat", "gamma/zeta2 + zeta3/zeta2^2"),
    ("A_hat_star", "2*zeta3/zeta2^3"),
    ("B_hat_star", "-3/(5*zeta2) + 2*gamma*zeta3/zeta2^3 + 5*zeta3^2/zeta2^4"),
    ("X", "-1 - 8*A*(A*gamma-B)*zeta3 - 24*A^2*zeta4 + A_star*(3*gamma*zeta2+6*zeta3)"),
]


def _config_string(args, keys):
    return " ".join(f"{k}={getattr(args, k)}" for k in keys if getattr(args, k, None) is not None)


def _header(command, config):
    return f"# betasplit={__version__} cmd={command} {config}"


def _emit(args, text):
    if args.output:
        with open(args.output, "w") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


def _parse_grid(text, default):
    if not text:
        return list(default)
    return sorted(int(tok) for tok in text.replace(" ", "").split(",") if tok)


# ----------------------------------------------------------------------
# subcommands

def _cmd_constants(args):
    c = compute_constants(args.precision_terms)
    d = c.as_dict()
    rows = [(name, formula, d[name]) for name, formula in _CONSTANT_FORMULAS]
    idents = c.identity_residuals()
    config = _config_string(args, ["precision_terms", "format"])
    if args.format == "json":
        body = {
            "meta": {"version": __version__, "command": "constants", "config": config},
            "constants": {name: val for name, _, val in rows},
            "identity_residuals": idents,
        }
        _emit(args, json.dumps(body, indent=2) + "\n")
        return 0
    buf = io.StringIO()
    buf.write(_header("constants", config) + "\n")
    buf.write("name,formula,value\n")
    for name, formula, val in rows:
        buf.write(f"{name},{formula},{val!r}\n")
    for name, val in idents.items():
        buf.write(f"identity {name},0,{val!r}\n")
    _emit(args, buf.getvalue())
    return 0


def _cmd_moments(args):
    mu, s2 = moment_tables(args.max_n, args.variant, fast=args.fast)
    config = _config_string(args, ["max_n", "variant", "fast", "format"])
    if args.format == "json":
        body = {
            "meta": {"version": __version__, "command": "moments", "config": config},
            "variant": args.variant,
            "n": list(range(1, args.max_n + 1)),
            "mu": [float(x) for x in mu],
            "sigma2": [float(x) for x in s2],
        }
        _emit(args, json.dumps(body) + "\n")
        return 0
    buf = io.StringIO()
    buf.write(_header("moments", config) + "\n")
    write_moments_csv(buf, mu, s2, args.variant)
    _emit(args, buf.getvalue())
    return 0


def _cmd_pmf(args):
    pmfs = height_pmf_table(args.n)
    buf = io.StringIO()
    buf.write(_header("pmf", _config_string(args, ["n"])) + "\n")
    write_pmf_csv(buf, pmfs[args.n - 1])
    _emit(args, buf.getvalue())
    return 0


def _fit_block(buf, label, fit):
    buf.write(f"# fit={label} verdict={fit.verdict}\n")
    write_fit_csv(buf, fit)


def _cmd_verify(args):
    constants = compute_constants()
    buf = io.StringIO()
    fits = []
    if args.which in ("mean", "var"):
        grid = _parse_grid(args.grid, DYADIC_GRID)
        N = max(grid)
        buf.write(_header("verify", _config_string(args, ["which", "grid"])) + "\n")
        for variant in ("discrete", "continuous"):
            mu, s2 = moment_tables(N, variant, fast=True)
            if args.which == "mean":
                fit = mean_remainder_fit(mu, variant, grid, constants)
            else:
                fit = variance_remainder_fit(s2, variant, grid, constants)
            fits.append(fit)
            _fit_block(buf, f"{args.which}_{variant}", fit)
    elif args.which == "sums":
        grid = _parse_grid(args.grid, DYADIC_GRID)
        buf.write(_header("verify", _config_string(args, ["which", "grid"])) + "\n")
        mu, _ = moment_tables(max(grid), "discrete", fast=True)
        for name, fit in appendix_sum_fits(grid, mu, constants).items():
            fits.append(fit)
            _fit_block(buf, name, fit)
    elif args.which == "contraction":
        grid = _parse_grid(args.grid, CONTRACTION_GRID)
        buf.write(_header("verify", _config_string(args, ["which", "grid"])) + "\n")
        for variant in ("discrete", "continuous"):
            check = decay_check(grid, variant, constants=constants)
            fits.append(check)
            buf.write(f"# fit=contraction_{variant} verdict={check.verdict}\n")
            write_diagnostics_csv(buf, check.diagnostics)
    else:
        raise ValueError(f"unknown check {args.which!r}")
    _emit(args, buf.getvalue())
    return 0 if all(f.verdict == "bounded" for f in fits) else 1


def _cmd_sample(args):
    summary = run_experiment(n=args.n, reps=args.reps, variant=args.variant,
                             seed=args.seed, workers=args.workers,
                             keep_values=args.keep_values)
    ks = None
    if args.keep_values:
        c = compute_constants()
        mu = mean_expansion(args.n, args.variant, c)
        sd = math.sqrt(variance_expansion(args.n, args.variant, c))
        ks = ks_normal(summary, mu, sd)
    config = _config_string(args, ["n", "reps", "variant", "seed", "workers", "keep_values"])
    body = summary.to_dict()
    body["ks"] = ks
    body = {"meta": {"version": __version__, "command": "sample", "config": config}, **body}
    _emit(args, json.dumps(body, indent=2) + "\n")
    return 0


def _cmd_clt(args):
    grid = _parse_grid(args.n_grid, [10**3, 10**4, 10**5])
    N = max(grid)
    mu_d, s2_d = moment_tables(N, "discrete", fast=True)
    mu_c, s2_c = moment_tables(N, "continuous", fast=True)
    buf = io.StringIO()
    buf.write(_header("clt", _config_string(args, ["n_grid", "reps", "seed", "workers"])) + "\n")
    buf.write("n,ks_height,ks_time_height\n")
    ks_h, ks_t = [], []
    for n in grid:
        h, ht = joint_values(n, args.reps, args.seed, args.workers)
        kh = ks_normal(h, mu_d[n - 1], math.sqrt(s2_d[n - 1]))
        kt = ks_normal(ht, mu_c[n - 1], math.sqrt(s2_c[n - 1]))
        ks_h.append(kh)
        ks_t.append(kt)
        buf.write(f"{n},{kh!r},{kt!r}\n")
    decreasing = all(a > b for a, b in zip(ks_h, ks_h[1:])) and \
        all(a > b for a, b in zip(ks_t, ks_t[1:]))
    _emit(args, buf.getvalue())
    return 0 if decreasing else 1


def _cmd_tree(args):
    tree = sample_tree(args.n, args.variant, derive_rng(args.seed, 0))
    tree.validate()
    text = _header("tree", _config_string(args, ["n", "variant", "seed"])) + "\n"
    text += tree.newick() + "\n"
    _emit(args, text)
    return 0


# ----------------------------------------------------------------------

def _build_parser():
    p = argparse.ArgumentParser(
        prog="betasplit",
        description="critical beta-splitting tree laboratory",
    )
    p.add_argument("--version", action="version", version=__version__)
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp):
        sp.add_argument("--output", "-o", default=None, help="write to file instead of stdout")

    sp = sub.add_parser("constants", help="expansion constants and identity residuals")
    sp.add_argument("--precision-terms", type=int, default=10**7, dest="precision_terms")
    sp.add_argument("--format", choices=["csv", "json"], default="csv")
    common(sp)
    sp.set_defaults(func=_cmd_constants)

    sp = sub.add_parser("moments", help="exact mean/variance tables")
    sp.add_argument("--max-n", type=int, required=True, dest="max_n")
    sp.add_argument("--variant", choices=["discrete", "continuous"], default="discrete")
    sp.add_argument("--fast", action="store_true", help="CDQ/FFT convolution route")
    sp.add_argument("--format", choices=["csv", "json"], default="csv")
    common(sp)
    sp.set_defaults(func=_cmd_moments)

    sp = sub.add_parser("pmf", help="exact pmf of the leaf height at one n")
    sp.add_argument("--n", type=int, required=True)
    common(sp)
    sp.set_defaults(func=_cmd_pmf)

    sp = sub.add_parser("verify", help="scaled-residual and decay checks; exit 1 on diverging")
    sp.add_argument("--which", choices=["mean", "var", "sums", "contraction"], required=True)
    sp.add_argument("--grid", default=None, help="comma-separated n values")
    common(sp)
    sp.set_defaults(func=_cmd_verify)

    sp = sub.add_parser("sample", help="reproducible Monte Carlo batch, JSON summary")
    sp.add_argument("--n", type=int, required=True)
    sp.add_argument("--reps", type=int, required=True)
    sp.add_argument("--variant", choices=["discrete", "continuous"], default="discrete")
    sp.add_argument("--seed", type=int, default=DEFAULT_SEED)
    sp.add_argument("--workers", type=int, default=1)
    sp.add_argument("--keep-values", action="store_true", dest="keep_values",
                    help="retain values and report an expansion-standardized KS")
    common(sp)
    sp.set_defaults(func=_cmd_sample)

    sp = sub.add_parser("clt", help="KS trend along an n grid; exit 1 unless decreasing")
    sp.add_argument("--n-grid", default=None, dest="n_grid")
    sp.add_argument("--reps", type=int, default=10**5)
    sp.add_argument("--seed", type=int, default=DEFAULT_SEED)
    sp.add_argument("--workers", type=int, default=1)
    common(sp)
    sp.set_defaults(func=_cmd_clt)

    sp = sub.add_parser("tree", help="sample one tree and print Newick text")
    sp.add_argument("--n", type=int, required=True)
    sp.add_argument("--variant", choices=["discrete", "continuous"], default="discrete")
    sp.add_argument("--seed", type=int, default=DEFAULT_SEED)
    sp.add_argument("--newick", action="store_true", help="accepted for compatibility; Newick is the default output")
    common(sp)
    sp.set_defaults(func=_cmd_tree)

    return p


def main(argv=None):
    parser = _build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except GuardError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
