"""Command line entry point: ``latgauss <command> ...``."""

from __future__ import annotations

import argparse
import math
import sys
from fractions import Fraction

import numpy as np

from .combiner import PipelineConfig
from .cvp import CCVPConfig, exact_cvp, recursion_census
from .dgs import DGSRequest, approx_cvp, dgs_solve
from .errors import PipelineStarvedError, SolverStarvedError
from .harness import CRITERIA, KINDS, TARGET_MODES, ExperimentSpec, gen_instance, run_experiment, summarize, write_report
from .lattice import Basis, cvp_enum, format_rational, hkz_basis, parse_vector, read_basis_file, write_basis_file


def _global_flags() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(add_help=False)
    p.add_argument("--seed", type=int, default=0, help="root seed (default 0)")
    p.add_argument("--threads", type=int, default=1, help="worker processes for suites")
    p.add_argument("--strict", action="store_true", help="enforce the full size requirements")
    p.add_argument("--out", default=None, help="write output to this path")
    return p


def build_parser() -> argparse.ArgumentParser:
    common = _global_flags()
    ap = argparse.ArgumentParser(prog="latgauss", description=__doc__)
    sub = ap.add_subparsers(dest="command", required=True)

    g = sub.add_parser("gen", parents=[common], help="generate a random instance")
    g.add_argument("--n", type=int, required=True)
    g.add_argument("--bound", type=int, default=10)
    g.add_argument("--mode", choices=TARGET_MODES, default=TARGET_MODES[0])
    g.add_argument("--noise", type=float, default=0.05)

    h = sub.add_parser("hkz", parents=[common], help="HKZ-reduce a basis file")
    h.add_argument("--basis", required=True)

    s = sub.add_parser("sample", parents=[common], help="discrete Gaussian samples from L - t")
    s.add_argument("--basis", required=True)
    s.add_argument("--target", default=None, help='e.g. "1/2 0 3"; defaults to the file\'s t: line or 0')
    s.add_argument("--s", type=float, required=True)
    s.add_argument("--ell", type=int, default=None)
    s.add_argument("--kappa", type=float, default=4.0)
    s.add_argument("--count", type=int, default=None, help="seed batch size")
    s.add_argument("--verify", action="store_true")

    c = sub.add_parser("cvp", parents=[common], help="exact closest vector")
    c.add_argument("--basis", required=True)
    c.add_argument("--target", default=None)
    c.add_argument("--oracle", action="store_true", help="use enumeration instead of the sampler")
    c.add_argument("--census", action="store_true", help="report calls per rank")
    c.add_argument("--alpha", type=float, default=None)
    c.add_argument("--f", type=int, default=None, dest="f_cluster")
    c.add_argument("--p", type=int, default=64, dest="p_cap")

    a = sub.add_parser("approx-cvp", parents=[common], help="approximate closest vector")
    a.add_argument("--basis", required=True)
    a.add_argument("--target", default=None)
    a.add_argument("--f", type=float, default=4.0, help="approximation factor is 1 + 1/f")
    a.add_argument("--oracle", action="store_true", help="exact distance bracket")

    v = sub.add_parser("verify", parents=[common], help="run an experiment suite")
    v.add_argument("suite", choices=KINDS)
    v.add_argument("--dims", default=None, help='comma separated, e.g. "2,3,4"')
    v.add_argument("--trials", type=int, default=None)

    b = sub.add_parser("bench", parents=[common], help="time the sampler across dimensions")
    b.add_argument("--dims", default="4,5,6,7,8,9,10")
    return ap


def _load(args) -> tuple[Basis, tuple[Fraction, ...]]:
    B, t = read_basis_file(args.basis)
    if args.target is not None:
        t = parse_vector(args.target)
    if t is None:
        t = (Fraction(0),) * B.dim
    return B, t


def _emit(lines, out):
    text = "\n".join(lines) + ("\n" if lines else "")
    if out:
        with open(out, "w") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


def _rat_row(row) -> str:
    return " ".join(format_rational(x) for x in row)


def _exact_dist2(B: Basis, z, t) -> Fraction:
    v = B.exact_vector(z)
    return sum(((a - b) ** 2 for a, b in zip(v, t)), Fraction(0))


def _format_distance(d2: Fraction) -> str:
    num, den = d2.numerator, d2.denominator
    rn, rd = math.isqrt(num), math.isqrt(den)
    if rn * rn == num and rd * rd == den:
        return format_rational(Fraction(rn, rd))
    return repr(math.sqrt(num / den))


def cmd_gen(args) -> int:
    B, t = gen_instance(args.n, args.bound, args.seed, args.mode, args.noise)
    if args.out:
        write_basis_file(args.out, B, t)
    else:
        lines = [str(B.rank)] + [_rat_row(r) for r in B.rows] + ["t: " + _rat_row(t)]
        _emit(lines, None)
    return 0


def cmd_hkz(args) -> int:
    B, _ = read_basis_file(args.basis)
    H = hkz_basis(B)
    _emit([str(H.basis.rank)] + [_rat_row(r) for r in H.basis.rows], args.out)
    return 0


def cmd_sample(args) -> int:
    B, t = _load(args)
    rng = np.random.default_rng(args.seed)
    req = DGSRequest(B, t, args.s)
    cfg = PipelineConfig(ell=args.ell, kappa=args.kappa)
    out = dgs_solve(req, cfg, M_override=args.count, rng=rng, strict=args.strict, verify=args.verify)
    shift = B.coefficients(t)
    lines = [_rat_row(Fraction(int(zi)) - ti for zi, ti in zip(z, shift)) for z in out.rows()]
    _emit(lines, args.out)
    for flag in out.flags:
        print(flag, file=sys.stderr)
    if out.size == 0:
        print("latgauss: warning: no samples survived; raise --count or lower --ell", file=sys.stderr)
    return 0


def cmd_cvp(args) -> int:
    B, t = _load(args)
    lines = []
    if args.oracle:
        res = cvp_enum(B, t)
    else:
        kw = {"p_cap": args.p_cap}
        if args.alpha is not None:
            kw["alpha"] = args.alpha
        if args.f_cluster is not None:
            kw["f_cluster"] = args.f_cluster
        cfg = CCVPConfig(**kw)
        if args.census:
            rep = recursion_census(B, t, cfg, args.seed)
            res = rep.result
            lines = rep.lines()
        else:
            res = exact_cvp(B, t, cfg, args.seed)
    z = [int(x) for x in res.coeffs]
    d2 = _exact_dist2(B, z, t)
    _emit([f"distance={_format_distance(d2)} witness={' '.join(map(str, z))}"] + lines, args.out)
    return 0


def cmd_approx_cvp(args) -> int:
    B, t = _load(args)
    res = approx_cvp(B, t, args.f, np.random.default_rng(args.seed), args.oracle)
    z = [int(x) for x in res.coeffs]
    d2 = _exact_dist2(B, z, t)
    _emit([f"distance={_format_distance(d2)} witness={' '.join(map(str, z))}"], args.out)
    return 0


def _dims(text):
    return [int(x) for x in text.split(",") if x.strip()]


def _run_suite(spec: ExperimentSpec, out) -> int:
    records = run_experiment(spec)
    for r in records:
        print(r)
    if out:
        write_report(records, out)
    summary = summarize(records)
    print(f"summary records={summary['records']} failed={summary['failed']}")
    return 0 if summary["failed"] == 0 else 1


def cmd_verify(args) -> int:
    base = next((c for c in CRITERIA.values() if c.kind == args.suite), ExperimentSpec(args.suite))
    spec = ExperimentSpec(
        args.suite,
        _dims(args.dims) if args.dims else list(base.dims),
        args.trials if args.trials is not None else base.trials,
        args.seed,
        dict(base.params),
        args.threads,
    )
    return _run_suite(spec, args.out)


def cmd_bench(args) -> int:
    return _run_suite(ExperimentSpec("bench", _dims(args.dims), 1, args.seed, {}, args.threads), args.out)


COMMANDS = {
    "gen": cmd_gen,
    "hkz": cmd_hkz,
    "sample": cmd_sample,
    "cvp": cmd_cvp,
    "approx-cvp": cmd_approx_cvp,
    "verify": cmd_verify,
    "bench": cmd_bench,
}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return COMMANDS[args.command](args)
    except (ValueError, PipelineStarvedError, SolverStarvedError, OSError) as exc:
        print(f"latgauss: error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
