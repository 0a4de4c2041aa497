"""Command line front end: analyze, geodesic, abnormal."""

from __future__ import annotations

import argparse
import sys
from fractions import Fraction
from pathlib import Path

from . import __version__
from .abnormal import (
    NoCharacteristic,
    certify_minimal_order,
    integrate_abnormal,
    kernel_at,
    sample_W,
    weak_stratification,
    wedge_locus,
)
from .algebra import format_poly
from .fundamental import weyl_verdict
from .geometry import (
    NonPolynomialStructure,
    NotBracketGenerating,
    growth_vector,
    is_regular_point,
    verify_privileged,
)
from .hamiltonian import IntegrationError, integrate_normal
from .report import render_json, render_text
from .specfile import SpecError, load_spec

EXIT_USAGE = 2
EXIT_NONPOLY = 3

LIMITATIONS = [
    "ranks and membership are computed over the rationals at sampled points",
    "minimal order is a sampling certificate, not a proof",
]


class UsageError(Exception):
    pass


def _load(path: str):
    spec = load_spec(path)
    S = spec.to_structure()
    S.structure  # raises NonPolynomialStructure early
    return spec, S


def _geometry_section(S) -> dict:
    out: dict = {}
    try:
        out["growth vector"] = list(growth_vector(S))
    except NotBracketGenerating as exc:
        out["growth vector"] = f"not bracket generating ({list(exc.flag)})"
    out["regular point"] = is_regular_point(S)
    if S.weights is not None:
        out["weights"] = list(S.weights)
        out["privileged"] = bool(verify_privileged(S))
    out["structure functions"] = [
        f"c^{k + 1}_{i + 1}{j + 1} = {format_poly(p)}" for k, i, j, p in S.structure.nonzero()
    ]
    return out


def _scan(strat, count: int, seed: int, T: float, samples: int):
    starts = sample_W(strat, count, seed=seed)
    if not starts:
        return None, []
    report, trajs = certify_minimal_order(strat, starts, T, samples)
    return report, list(zip(starts, trajs))


def _abnormal_section(strat, depth: int, seed: int, scan: int, T: float, samples: int) -> dict:
    out: dict = {
        "locus": strat.describe_locus(),
        "locus dimension": strat.locus_dimension,
    }
    weak_stratification(strat, depth, seed=seed)
    out["strata"] = [
        {
            "level": st.level,
            "dimension": st.dimension,
            "description": st.description,
            "samples": st.samples,
            "restricted kernel dims": {str(k): v for k, v in sorted(st.kernel_dims.items())},
            "one-dimensional kernel": st.one_dimensional,
        }
        for st in strat.strata
    ]
    report, _ = _scan(strat, scan, seed, T, samples)
    if report is None:
        out["minimal order"] = "no abnormal extremals"
    else:
        out["minimal order"] = {
            "certified": f"{report.certified}/{len(report.verdicts)}",
            "verdicts": report.verdicts,
            "stable under refinement": report.stable,
            "samples": f"{report.samples}, {2 * report.samples}, {4 * report.samples}",
            "T": report.T,
            "kind": report.label,
        }
    return out


def cmd_analyze(args) -> int:
    spec, S = _load(args.spec)
    doc: dict = {
        "tool": f"srweyl {__version__}",
        "command": "analyze",
        "seed": args.seed,
        "input": spec.to_dict(),
        "geometry": _geometry_section(S),
    }
    rep = weyl_verdict(S, layers=args.layers)
    doc["rigidity"] = {"verdict": rep.verdict, "route": rep.route, "notes": rep.notes, "evidence": rep.evidence}
    if S.m < S.n:
        doc["abnormal"] = _abnormal_section(wedge_locus(S), args.depth, args.seed, args.scan, 1.0, 10)
    doc["limitations"] = LIMITATIONS
    _emit(doc, args.out)
    return 0


def _emit(doc: dict, out: str | None) -> None:
    text = render_text(doc)
    if out:
        Path(out).write_text(text, encoding="utf-8")
        Path(out + ".json").write_text(render_json(doc), encoding="utf-8")
    else:
        sys.stdout.write(text)


def _floats(values, n: int, what: str) -> list[float]:
    if values is None:
        return [0.0] * n
    try:
        out = [float(Fraction(v)) for v in values]
    except (ValueError, ZeroDivisionError):
        raise UsageError(f"{what}: not numbers: {values}") from None
    if len(out) != n:
        raise UsageError(f"{what} needs {n} values, got {len(out)}")
    return out


def cmd_geodesic(args) -> int:
    _, S = _load(args.spec)
    if args.steps < 1:
        raise UsageError("--steps must be at least 1")
    x0 = _floats(args.x0, S.n, "--x0")
    u0 = _floats(args.u0, S.n, "--u0")
    traj = integrate_normal(S, x0, u0, args.T, args.steps)
    summary = f"energy drift (relative): {traj.drift:.3e} over T={args.T:g}"
    if args.csv:
        with open(args.csv, "w", encoding="utf-8", newline="") as fh:
            traj.write_csv(fh)
        print(summary)
    else:
        traj.write_csv(sys.stdout)
        print(summary, file=sys.stderr)
    return 0


def cmd_abnormal(args) -> int:
    spec, S = _load(args.spec)
    doc: dict = {
        "tool": f"srweyl {__version__}",
        "command": "abnormal",
        "seed": args.seed,
        "input": spec.to_dict(),
    }
    if S.m == S.n:
        doc["abnormal"] = "no abnormal extremals"
        _emit(doc, args.out)
        return 0
    strat = wedge_locus(S)
    section: dict = {"locus": strat.describe_locus(), "locus dimension": strat.locus_dimension}
    if args.start is not None:
        lam = [Fraction(v) for v in args.start]
        if len(lam) != 2 * S.n - S.m:
            raise UsageError(f"--from needs {2 * S.n - S.m} coordinates (x, u_{S.m + 1}..u_{S.n})")
        if not kernel_at(strat, lam).in_W:
            section["result"] = "initial point is not in W_D"
            doc["abnormal"] = section
            _emit(doc, args.out)
            return 0
        starts = [lam]
    else:
        starts = sample_W(strat, args.scan, seed=args.seed)
    if not starts:
        section["result"] = "no abnormal extremals"
    else:
        report, trajs = certify_minimal_order(strat, starts, args.T, args.samples)
        section["trajectories"] = [
            {
                "start": ", ".join(str(v) for v in lam),
                "verdict": v,
                "stable": s,
                "end": ", ".join(f"{c:.9f}" for c in t.states[-1]),
                "status": t.message,
            }
            for lam, t, v, s in zip(starts, trajs, report.verdicts, report.stable)
        ]
        section["aggregate"] = f"{report.certified}/{len(starts)} MinimalOrder"
        section["kind"] = report.label
        if args.csv:
            _write_abnormal_csv(args.csv, S, trajs)
    doc["abnormal"] = section
    doc["limitations"] = LIMITATIONS
    _emit(doc, args.out)
    return 0


def _write_abnormal_csv(path: str, S, trajs) -> None:
    cols = [f"x{i + 1}" for i in range(S.n)] + [f"u{k + 1}" for k in range(S.m, S.n)]
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(",".join(["trajectory", "t"] + cols + ["locus", "in_W"]) + "\n")
        for idx, t in enumerate(trajs):
            for time, state, p, w in zip(t.times, t.states, t.locus_values, t.in_W):
                vals = [f"{time:.12g}"] + [f"{v:.12g}" for v in state] + [f"{p:.3e}", str(int(w))]
                fh.write(",".join([str(idx)] + vals) + "\n")


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="srweyl", description="Rigidity certificates for sub-Riemannian frames")
    p.add_argument("--version", action="version", version=__version__)
    sub = p.add_subparsers(dest="command", required=True)

    a = sub.add_parser("analyze", help="growth, rigidity verdict and abnormal stratification")
    a.add_argument("spec")
    a.add_argument("--layers", type=int, default=None, help="initial layer count")
    a.add_argument("--depth", type=int, default=1, help="weak stratification depth")
    a.add_argument("--seed", type=int, default=0)
    a.add_argument("--scan", type=int, default=10, help="abnormal trajectories to sample")
    a.add_argument("--out", help="write the report here (plus a .json sibling)")
    a.set_defaults(func=cmd_analyze)

    g = sub.add_parser("geodesic", help="integrate a normal extremal")
    g.add_argument("spec")
    g.add_argument("--x0", nargs="+")
    g.add_argument("--u0", nargs="+", required=True)
    g.add_argument("--T", type=float, default=1.0)
    g.add_argument("--steps", type=int, default=100)
    g.add_argument("--csv", help="write the trajectory here instead of stdout")
    g.set_defaults(func=cmd_geodesic)

    b = sub.add_parser("abnormal", help="abnormal extremals and minimal-order verdicts")
    b.add_argument("spec")
    src = b.add_mutually_exclusive_group()
    src.add_argument("--scan", type=int, default=10)
    src.add_argument("--from", dest="start", nargs="+")
    b.add_argument("--T", type=float, default=1.0)
    b.add_argument("--samples", type=int, default=10)
    b.add_argument("--seed", type=int, default=0)
    b.add_argument("--csv")
    b.add_argument("--out")
    b.set_defaults(func=cmd_abnormal)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except SpecError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except NonPolynomialStructure as exc:
        print(f"error: non-polynomial structure functions: {exc}", file=sys.stderr)
        return EXIT_NONPOLY
    except (IntegrationError, NoCharacteristic) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
