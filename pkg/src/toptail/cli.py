"""Command-line interface: fit, gap, predict-max, report, simulate.

Exit codes: 0 success, 2 usage or input error, 3 numerical failure.
"""
from __future__ import annotations

import argparse
import io
import json
import logging
import math
import sys
from pathlib import Path
from typing import Dict, List, Optional

import numpy as np

from .data import RatingList, RatingRecord, make_sample, parse_rating_csv, parse_stratum, to_topk, write_rating_csv
from .errors import ContractError, DegenerateSampleError, DomainError, FormatError, NumericalError
from .estimation import FitResult, fit_full, fit_topk
from .extremes import exact_gumbel_norming, expected_max, gumbel_norming, to_rating_scale
from .gaptest import pooled_bootstrap, scale_gap_t
from .model import DEFAULT_R0, ThresholdModel, sample
from .report import build_report, render_svg, run_metadata

log = logging.getLogger("toptail")

EXIT_OK, EXIT_INPUT, EXIT_NUMERIC = 0, 2, 3


class UsageError(Exception):
    pass


class FitFailure(Exception):
    pass


# ---------------------------------------------------------------------------
# helpers
# ---------------------------------------------------------------------------


def _load(path: str):
    try:
        raw = Path(path).read_bytes()
    except OSError as exc:
        raise UsageError(f"cannot read {path}: {exc.strerror or exc}") from exc
    lst = parse_rating_csv(raw, source=path)
    for diag in lst.rejected:
        print(f"{path}: {diag}", file=sys.stderr)
    return lst, raw


def _est(fit: FitResult, name: str) -> Dict[str, float]:
    est, se = fit.focus_estimates[name]
    return {"estimate": est, "se": se}


def fit_to_json(fit: FitResult, stratum: str) -> Dict[str, object]:
    return {
        "stratum": stratum,
        "method": fit.method,
        "r0": fit.model.r0,
        "n": fit.n,
        "k": fit.k,
        "loglik": fit.loglik,
        "a": _est(fit, "a"),
        "theta": _est(fit, "theta"),
        "mu": _est(fit, "mu"),
        "sigma": _est(fit, "sigma"),
        "median": _est(fit, "median"),
        "cov": fit.cov.tolist(),
        "warnings": list(fit.warnings),
    }


def _check_fit(fit: FitResult, label: str) -> FitResult:
    if fit.at_boundary:
        raise FitFailure(f"{label}: tail index estimate on the search boundary")
    return fit


def _flags(args) -> Dict[str, object]:
    return {k: v for k, v in vars(args).items() if k not in ("func",)}


def _emit(doc: Dict[str, object], out_dir: Optional[str], name: str) -> None:
    text = json.dumps(doc, indent=2, sort_keys=False)
    print(text)
    if out_dir:
        d = Path(out_dir)
        d.mkdir(parents=True, exist_ok=True)
        (d / name).write_text(text + "\n")


def _two_strata(args) -> List[str]:
    strata = args.stratum or ["sex=M", "sex=W"]
    if len(strata) != 2:
        raise UsageError("exactly two --stratum expressions are required")
    return strata


# ---------------------------------------------------------------------------
# commands
# ---------------------------------------------------------------------------


def cmd_fit(args) -> int:
    lst, raw = _load(args.input)
    fits = []
    for expr in args.stratum or ["all"]:
        stratum = parse_stratum(expr)
        s = make_sample(lst, args.r0, stratum)
        if args.topk is not None:
            if args.topk > s.n:
                raise UsageError(f"--topk {args.topk} exceeds the {s.n} ratings in {stratum.label}")
            fit = fit_topk(to_topk(s, args.topk))
        else:
            fit = fit_full(s)
        fits.append(fit_to_json(_check_fit(fit, stratum.label), stratum.label))
    doc = {"command": "fit", "metadata": run_metadata(None, raw, _flags(args)), "fits": fits}
    _emit(doc, args.out, "fit.json")
    return EXIT_OK


def cmd_gap(args) -> int:
    lst, raw = _load(args.input)
    e1, e2 = _two_strata(args)
    st1, st2 = parse_stratum(e1), parse_stratum(e2)
    g1, g2 = make_sample(lst, args.r0, st1), make_sample(lst, args.r0, st2)
    f1, f2 = _check_fit(fit_full(g1), st1.label), _check_fit(fit_full(g2), st2.label)
    boot = pooled_bootstrap(g1, g2, reps=args.reps, seed=args.seed, workers=args.workers)

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    draws_path = out / "bootstrap.csv"
    with open(draws_path, "w") as fh:
        fh.write("rep,A_points,B_points\n")
        for i, (a, b) in enumerate(boot.draws):
            fh.write(f"{i},{a:.10g},{b:.10g}\n")

    def t(name):
        (m1, s1), (m2, s2) = f1.focus_estimates[name], f2.focus_estimates[name]
        return scale_gap_t(m1, s1, m2, s2)

    doc = {
        "command": "gap",
        "metadata": run_metadata(args.seed, raw, _flags(args)),
        "strata": [st1.label, st2.label],
        "n": [g1.n, g2.n],
        "observed": {"A": boot.observed.A, "B": boot.observed.B},
        "exceed_A": boot.exceed_A,
        "exceed_B": boot.exceed_B,
        "reps": boot.reps,
        "scale_gap_t": {"sigma": t("sigma"), "theta": t("theta")},
        "draws_path": str(draws_path),
    }
    _emit(doc, args.out, "gap.json")
    return EXIT_OK


def _model_from_args(args) -> ThresholdModel:
    if args.fit_json:
        try:
            doc = json.loads(Path(args.fit_json).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise UsageError(f"cannot read fit JSON {args.fit_json}: {exc}") from exc
        fits = doc.get("fits", [])
        if args.stratum:
            fits = [f for f in fits if f.get("stratum") == parse_stratum(args.stratum[0]).label]
        if not fits:
            raise UsageError("no matching fit in the fit JSON")
        f = fits[0]
        return ThresholdModel(f["a"]["estimate"], f["theta"]["estimate"], f["r0"])
    if args.a is None or args.theta is None:
        raise UsageError("give --a and --theta, or --fit-json")
    return ThresholdModel(args.a, args.theta, args.r0)


def cmd_predict_max(args) -> int:
    if not args.n >= 2:
        raise UsageError("--n must be >= 2")
    m = _model_from_args(args)
    unrefined = expected_max(m, args.n, refined=False)
    refined = expected_max(m, args.n, refined=True)
    norming = None
    if args.n >= 3:
        std = gumbel_norming(m.a, args.n)
        exact = exact_gumbel_norming(m.a, args.n)
        norming = {
            "standardized": {"a_n": std.a_n, "b_n": std.b_n},
            "rating_scale": vars(to_rating_scale(std, m)),
            "exact_standardized": {"a_n": exact.a_n, "b_n": exact.b_n},
            "exact_rating_scale": vars(to_rating_scale(exact, m)),
        }
    doc = {
        "command": "predict-max",
        "metadata": run_metadata(None, None, _flags(args)),
        "model": {"a": m.a, "theta": m.theta, "r0": m.r0},
        "n": args.n,
        "refined": bool(args.refined),
        "expected_max": refined if args.refined else unrefined,
        "expected_max_unrefined": unrefined,
        "expected_max_refined": refined,
        "norming": norming,
    }
    _emit(doc, args.out, "predict_max.json")
    return EXIT_OK


def cmd_report(args) -> int:
    lst, raw = _load(args.input)
    e1, e2 = _two_strata(args)
    st1, st2 = parse_stratum(e1), parse_stratum(e2)
    g1, g2 = make_sample(lst, args.r0, st1), make_sample(lst, args.r0, st2)
    bundle = build_report(g1, g2, reps=args.reps, seed=args.seed, workers=args.workers)
    for label, fit in bundle.fits.items():
        _check_fit(fit, label)

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    files = {}
    titles = {
        "density": "Fitted densities",
        "cdf": "Fitted and empirical cdfs",
        "logdensity": "Fitted log-densities",
        "quantile": "Empirical and fitted quantile functions",
        "band": "Survivor difference with 90% band",
        "bootstrap": "Permutation null draws (A, B)",
    }
    for name, table in bundle.tables.items():
        path = out / f"{name}.csv"
        table.write(path)
        files[name] = str(path)
        if args.svg:
            (out / f"{name}.svg").write_text(render_svg(table, titles[name], scatter=name == "bootstrap"))
    doc = {
        "command": "report",
        "metadata": run_metadata(args.seed, raw, _flags(args)),
        "groups": {"g1": st1.label, "g2": st2.label},
        "fits": [fit_to_json(bundle.fits[st1.label], st1.label), fit_to_json(bundle.fits[st2.label], st2.label)],
        "pooled_fit": fit_to_json(bundle.pooled_fit, "pooled"),
        "adequacy": bundle.adequacy,
        "observed": {"A": bundle.bootstrap.observed.A, "B": bundle.bootstrap.observed.B},
        "exceed_A": bundle.bootstrap.exceed_A,
        "exceed_B": bundle.bootstrap.exceed_B,
        "files": files,
    }
    _emit(doc, args.out, "report.json")
    return EXIT_OK


def _parse_group(spec: str) -> Dict[str, object]:
    fields = {}
    for part in spec.split(","):
        if "=" not in part:
            raise UsageError(f"bad --group entry {part!r}; expected key=value")
        k, v = (p.strip() for p in part.split("=", 1))
        fields[k.lower()] = v
    try:
        return {
            "sex": fields.get("sex", "M").upper(),
            "a": float(fields["a"]),
            "theta": float(fields["theta"]),
            "n": int(fields["n"]),
        }
    except (KeyError, ValueError) as exc:
        raise UsageError(f"--group needs a=, theta=, n= (got {spec!r})") from exc


def simulate_records(groups, r0: float, seed: int) -> List[RatingRecord]:
    records: List[RatingRecord] = []
    for gi, g in enumerate(groups):
        if g["n"] < 0:
            raise UsageError("n must be >= 0")
        m = ThresholdModel(g["a"], g["theta"], r0)
        ratings = np.rint(sample(m, g["n"], seed=[seed, gi])).astype(int)
        for r in ratings:
            i = len(records) + 1
            records.append(RatingRecord(f"S{i:07d}", f"Synthetic {i}", "", g["sex"], int(r), True))
    return records


def cmd_simulate(args) -> int:
    groups = [_parse_group(g) for g in args.group or []]
    if args.a is not None or args.theta is not None or args.n is not None:
        if args.a is None or args.theta is None or args.n is None:
            raise UsageError("--a, --theta and --n go together")
        groups.insert(0, {"sex": args.sex.upper(), "a": args.a, "theta": args.theta, "n": args.n})
    if not groups:
        raise UsageError("give --a/--theta/--n or at least one --group")
    if not float(args.r0).is_integer():
        raise UsageError("--r0 must be an integer rating for simulated lists")
    records = simulate_records(groups, args.r0, args.seed)
    buf = io.StringIO()
    write_rating_csv(RatingList(records, source="simulate"), buf)
    if args.out:
        Path(args.out).write_text(buf.getvalue())
    else:
        sys.stdout.write(buf.getvalue())
    return EXIT_OK


# ---------------------------------------------------------------------------
# parser
# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="toptail", description=__doc__.splitlines()[0])
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, needs_input=True):
        if needs_input:
            sp.add_argument("--input", required=True, metavar="PATH", help="rating-list CSV")
        sp.add_argument("--r0", type=float, default=DEFAULT_R0, help="threshold (default 2100)")

    sp = sub.add_parser("fit", help="fit the tail model to one or more strata")
    common(sp)
    sp.add_argument("--stratum", action="append", metavar="EXPR", help="e.g. sex=M (repeatable; default all)")
    sp.add_argument("--topk", type=int, metavar="K", help="fit from the top K ratings only")
    sp.add_argument("--out", metavar="DIR", help="also write fit.json here")
    sp.set_defaults(func=cmd_fit)

    sp = sub.add_parser("gap", help="two-group gap test with pooled permutation null")
    common(sp)
    sp.add_argument("--stratum", action="append", metavar="EXPR", help="two strata (default sex=M, sex=W)")
    sp.add_argument("--reps", type=int, default=1000)
    sp.add_argument("--seed", type=int, required=True)
    sp.add_argument("--workers", type=int, default=1)
    sp.add_argument("--out", default=".", metavar="DIR", help="directory for bootstrap.csv and gap.json")
    sp.set_defaults(func=cmd_gap)

    sp = sub.add_parser("predict-max", help="expected stratum maximum and Gumbel norming")
    common(sp, needs_input=False)
    sp.add_argument("--a", type=float)
    sp.add_argument("--theta", type=float)
    sp.add_argument("--fit-json", metavar="PATH", help="take (a, theta, r0) from a fit output")
    sp.add_argument("--stratum", action="append", metavar="EXPR", help="select a fit from --fit-json")
    sp.add_argument("--n", type=float, required=True, help="participation size")
    sp.add_argument("--refined", action="store_true", help="include the Euler-constant correction")
    sp.add_argument("--out", metavar="DIR")
    sp.set_defaults(func=cmd_predict_max)

    sp = sub.add_parser("report", help="plot-data tables for two strata")
    common(sp)
    sp.add_argument("--stratum", action="append", metavar="EXPR", help="two strata (default sex=M, sex=W)")
    sp.add_argument("--reps", type=int, default=1000)
    sp.add_argument("--seed", type=int, required=True)
    sp.add_argument("--workers", type=int, default=1)
    sp.add_argument("--out", default=".", metavar="DIR")
    sp.add_argument("--svg", action="store_true", help="also render each table as SVG")
    sp.set_defaults(func=cmd_report)

    sp = sub.add_parser("simulate", help="write a synthetic rating list")
    common(sp, needs_input=False)
    sp.add_argument("--a", type=float)
    sp.add_argument("--theta", type=float)
    sp.add_argument("--n", type=int)
    sp.add_argument("--sex", default="M")
    sp.add_argument("--group", action="append", metavar="SPEC", help="sex=W,a=0.612,theta=194.86,n=753 (repeatable)")
    sp.add_argument("--seed", type=int, required=True)
    sp.add_argument("--out", metavar="FILE", help="output CSV (default stdout)")
    sp.set_defaults(func=cmd_simulate)
    return p


def main(argv: Optional[List[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_INPUT if exc.code else EXIT_OK
    logging.basicConfig(level=logging.INFO if args.verbose else logging.ERROR, format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except (UsageError, FormatError, DomainError, ContractError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except (FitFailure, NumericalError, DegenerateSampleError) as exc:
        print(f"fit failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
