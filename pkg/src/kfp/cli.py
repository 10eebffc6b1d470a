"""Command-line front end.

Exit codes: 0 success, 1 input or convergence error, 2 hypothesis failure,
3 constant search failure. Reports go to stdout (or ``--out``) as JSON with
sorted keys; profile and spectrum series are written as CSV.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import os
import sys

import numpy as np

from .errors import HypothesisViolated, KFPError, NonConvergence, NotFound, PotentialParseError

EXIT_OK, EXIT_INPUT, EXIT_HYPOTHESIS, EXIT_SEARCH = 0, 1, 2, 3

log = logging.getLogger("kfp")


def _positive(kind):
    def check(text):
        value = kind(text)
        if value <= 0:
            raise argparse.ArgumentTypeError(f"expected a positive value, got {text}")
        return value

    return check


class _Parser(argparse.ArgumentParser):
    """Usage errors are input errors (exit 1); argparse would use 2, the hypothesis code."""

    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_INPUT, f"{self.prog}: error: {message}\n")


def build_parser():
    common = _Parser(add_help=False)
    common.add_argument("--Nq", type=_positive(int), default=64)
    common.add_argument("--Np", type=_positive(int), default=32)
    common.add_argument("--L", type=_positive(float), default=8.0)
    common.add_argument("--bc", choices=("periodic", "dirichlet"), default="periodic")
    common.add_argument("--convention", choices=("opnorm", "det"), default="opnorm")
    common.add_argument("--delta", type=float, default=0.5)
    common.add_argument("--nu", type=_positive(float), default=None)
    common.add_argument("--j", type=int, default=1)
    common.add_argument("--Cmax", type=_positive(float), default=1e6)
    common.add_argument("--tol", type=_positive(float), default=1e-10)
    common.add_argument("--resolution", type=_positive(float), default=1e-2,
                        help="sphere sampling resolution for the critical-point search")
    common.add_argument("--seed", type=int, default=0)
    common.add_argument("--threads", type=_positive(int), default=None)
    common.add_argument("--out", default=None, help="output file (default stdout)")

    parser = _Parser(prog="kfp", description="Kramers-Fokker-Planck estimate toolkit")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("check", parents=[common], help="decide the critical-point hypothesis")
    p.add_argument("potential")

    p = sub.add_parser("verify", parents=[common], help="measure the main-theorem constant")
    p.add_argument("potential")
    p.add_argument("--drop-weights", default="",
                   help="comma list of Op,grad,hess,Dq to omit, or 'all'")

    p = sub.add_parser("spectrum", parents=[common], help="eigenvalues of an assembled operator as CSV")
    p.add_argument("potential", nargs="?")
    p.add_argument("--op", choices=("Op", "KV", "XV"), default="Op")
    p.add_argument("--d", type=int, choices=(1, 2), default=1)
    p.add_argument("--export", default=None, help="also write the matrix in MatrixMarket format")

    p = sub.add_parser("partition-demo", parents=[common], help="cutoff profiles as CSV")
    p.add_argument("--h", type=float, required=True)
    p.add_argument("--r", type=float, required=True)
    p.add_argument("--samples", type=_positive(int), default=201)

    p = sub.add_parser("constants", parents=[common], help="A_V, B_V or the epsilon constants")
    p.add_argument("potential")
    return parser


def _emit(text, out):
    if out:
        with open(out, "w", encoding="utf-8") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


def _emit_json(obj, out):
    _emit(json.dumps(obj, sort_keys=True, indent=2) + "\n", out)


def _load(path, homogeneous=True):
    from .potential import load_potential

    return load_potential(path, homogeneous=homogeneous)


def _disc(args, d):
    from .operators import Discretization

    return Discretization(d=d, Nq=args.Nq, Np=args.Np, L=args.L, bc=args.bc)


def _check_report(V, args):
    from .assumption import check_assumption

    return check_assumption(V, grid_resolution=args.resolution, refine_tol=args.tol,
                            convention=args.convention)


def cmd_check(args):
    V = _load(args.potential)
    report = _check_report(V, args)
    _emit_json(report.to_json(), args.out)
    return EXIT_OK if report.holds else EXIT_HYPOTHESIS


def _weights(spec):
    from .estimates import WEIGHTS

    spec = spec.strip()
    if not spec:
        return WEIGHTS
    if spec == "all":
        return ()
    drop = {w.strip() for w in spec.split(",") if w.strip()}
    unknown = drop - set(WEIGHTS)
    if unknown:
        raise ValueError(f"unknown weights {sorted(unknown)}; expected a subset of {list(WEIGHTS)}")
    return tuple(w for w in WEIGHTS if w not in drop)


def cmd_verify(args):
    from .estimates import verify_main_theorem

    weights = _weights(args.drop_weights)
    V = _load(args.potential)
    if V.d > 2:
        raise ValueError("operators are discretised for d <= 2 only")
    disc = _disc(args, V.d)
    report = _check_report(V, args)
    if not report.holds:
        _emit_json({"error": "hypothesis fails", "assumption": report.to_json()}, args.out)
        return EXIT_HYPOTHESIS
    est = verify_main_theorem(V, disc, C_max=args.Cmax, weights=weights,
                              convention=args.convention, seed=args.seed)
    out = est.to_json()
    out["assumption"] = report.to_json()
    _emit_json(out, args.out)
    return EXIT_OK


def cmd_spectrum(args):
    import scipy.linalg as sla

    from .operators import (assemble_KV, assemble_Op, assemble_XV, export_matrix_market,
                            oscillator_diagonal, write_spectrum_csv)

    if args.op == "Op":
        eig = oscillator_diagonal(args.Np, args.d).astype(complex)
        op = None
        if args.export:
            op = assemble_Op(_disc(args, args.d))
    else:
        if not args.potential:
            raise ValueError(f"--op {args.op} needs a potential file")
        V = _load(args.potential)
        disc = _disc(args, V.d)
        if disc.dim > 6000:
            raise ValueError(f"dense spectrum of dimension {disc.dim} is too large; reduce --Nq/--Np")
        op = assemble_KV(V, disc) if args.op == "KV" else assemble_XV(V, disc)
        eig = sla.eigvals(op.toarray())
    if args.export and op is not None:
        export_matrix_market(op, args.export)
    buf = io.StringIO()
    write_spectrum_csv(eig, buf)
    _emit(buf.getvalue(), args.out)
    return EXIT_OK


def cmd_partition_demo(args):
    from .partition import build_radial_pair, patch_radius, radial_cutoff, select_nu

    if not 0.0 < args.h < 1.0:
        raise ValueError("--h must lie in (0, 1)")
    nu = args.nu if args.nu is not None else select_nu(args.r)
    rho = patch_radius(args.h, nu)
    pair = build_radial_pair()
    x = np.linspace(0.0, 3.0, args.samples)
    chi = pair.chi(x)[0]
    phi = pair.phi(x)[0]
    theta = radial_cutoff(x / rho, 0.5, 1.0)[0]
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["x", "chi", "phi", "theta"])
    for row in zip(x, chi, phi, theta):
        w.writerow([repr(float(v)) for v in row])
    _emit(buf.getvalue(), args.out)
    print(f"patch radius {rho!r} (nu={nu!r})", file=sys.stderr)
    return EXIT_OK


def cmd_constants(args):
    from .potential import growth_exponent, paper_constants

    V = _load(args.potential)
    if V.degree <= 2:
        c = paper_constants(V)
        _emit_json({"A_V": c.a_v, "B_V": c.b_v, "hypothesis_nondegenerate": c.hypothesis_nondegenerate,
                    "tr_plus": c.tr_plus, "tr_minus": c.tr_minus, "min_grad": c.min_grad}, args.out)
        return EXIT_OK
    report = _check_report(V, args)
    out = report.to_json()
    if 0.0 < args.delta < 1.0:
        g = growth_exponent(V, args.delta, args.convention)
        out["growth_exponent"] = g.exponent
        out["m_delta"] = g.m_delta
        out["delta"] = args.delta
    _emit_json(out, args.out)
    return EXIT_OK


COMMANDS = {
    "check": cmd_check,
    "verify": cmd_verify,
    "spectrum": cmd_spectrum,
    "partition-demo": cmd_partition_demo,
    "constants": cmd_constants,
}


def _configure_logging():
    level = os.environ.get("KFP_LOG", "WARNING").upper()
    logging.basicConfig(level=getattr(logging, level, logging.WARNING),
                        format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)


def main(argv=None):
    _configure_logging()
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.command in ("check", "verify", "constants") and not os.path.isfile(args.potential):
        print(f"error: no such potential file: {args.potential}", file=sys.stderr)
        return EXIT_INPUT
    try:
        if args.threads:
            from threadpoolctl import threadpool_limits

            with threadpool_limits(limits=args.threads):
                return COMMANDS[args.command](args)
        return COMMANDS[args.command](args)
    except NonConvergence as exc:
        print(f"error: {exc}; cells: {exc.cells}", file=sys.stderr)
        return EXIT_INPUT
    except NotFound as exc:
        print(f"error: {exc} (min eigenvalue {exc.min_eigenvalue:.3g})", file=sys.stderr)
        return EXIT_SEARCH
    except HypothesisViolated as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_HYPOTHESIS
    except (PotentialParseError, KFPError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
