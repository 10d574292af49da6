"""Command-line interface: ``pairfact <command> [options]``.

Exit codes: 0 success, 1 validation failure, 2 a verification identity failed.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from . import io
from .errors import PairfactError
from .estimators import (
    cr_bias,
    estimate,
    mp_bias,
    true_cov_cr,
    true_cov_mp,
)
from .kernels import BACKENDS
from .model_matrix import build_model_matrix
from .oracle import compare, compare_designs, verify_cr, verify_mp
from .population import population_effect
from .randomization import default_cap, draw_complete, draw_matched_pair, observe

EXIT_OK, EXIT_INVALID, EXIT_VERIFY = 0, 1, 2


def _positive_float(text: str) -> float:
    v = float(text)
    if not v > 0:
        raise argparse.ArgumentTypeError("must be > 0")
    return v


def _seed(text: str) -> int:
    v = int(text)
    if not 0 <= v < 2**64:
        raise argparse.ArgumentTypeError("seed must be a 64-bit unsigned integer")
    return v


def _cap(text: str) -> int:
    v = int(text)
    if v < 1:
        raise argparse.ArgumentTypeError("cap must be >= 1")
    return v


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_INVALID, f"{self.prog}: error: {message}\n")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(
        prog="pairfact",
        description="Completely randomized and matched-pair 2^K factorial designs.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def output_opts(p):
        p.add_argument("--format", choices=("csv", "json"), default=None)
        p.add_argument("--json", action="store_true", help="shorthand for --format json")
        p.add_argument("--out", type=Path, help="write to this file instead of stdout")

    p = sub.add_parser("design", help="print the 2^K model matrix")
    p.add_argument("--k", type=int, required=True)
    output_opts(p)

    p = sub.add_parser("assign", help="draw a random assignment for a science table")
    p.add_argument("--table", type=Path, required=True)
    p.add_argument("--pairing", type=Path)
    p.add_argument("--paired", action="store_true", help="matched-pair randomization")
    p.add_argument("--seed", type=_seed, required=True)
    p.add_argument("--out", type=Path)
    p.add_argument("--obs-out", type=Path, help="also write the revealed outcomes")

    p = sub.add_parser("estimate", help="point and covariance estimates from observed data")
    p.add_argument("--obs", type=Path, required=True)
    p.add_argument("--design", choices=("cr", "mp"), required=True)
    output_opts(p)

    p = sub.add_parser("truth", help="true effects and estimator covariance from a science table")
    p.add_argument("--table", type=Path, required=True)
    p.add_argument("--pairing", type=Path)
    p.add_argument("--design", choices=("cr", "mp"))
    output_opts(p)

    p = sub.add_parser("verify", help="check closed forms against exact enumeration")
    p.add_argument("--table", type=Path, required=True)
    p.add_argument("--pairing", type=Path)
    p.add_argument("--design", choices=("cr", "mp", "both"), default="both")
    p.add_argument("--tol", type=_positive_float, default=1e-10)
    p.add_argument("--cap", type=_cap)
    p.add_argument("--expected", type=Path, help="JSON fixture of expected closed-form values")
    p.add_argument("--backend", choices=BACKENDS)
    p.add_argument("--workers", type=int, default=1)
    output_opts(p)

    p = sub.add_parser("compare", help="CR versus MP true covariances")
    p.add_argument("--table", type=Path, required=True)
    p.add_argument("--pairing", type=Path)
    output_opts(p)
    return parser


def _fmt(args, default: str = "csv") -> str:
    if args.json:
        return "json"
    return args.format or default


def _write(text: str, out: Path | None) -> None:
    if out is None:
        sys.stdout.write(text)
        if not text.endswith("\n"):
            sys.stdout.write("\n")
    else:
        out.write_text(text if text.endswith("\n") else text + "\n")


def _load(args, need_pairing: bool = False):
    st, pairing = io.parse_science_table(args.table)
    if getattr(args, "pairing", None) is not None:
        pairing = io.parse_pairing(args.pairing, st)
    if need_pairing and pairing is None:
        raise PairfactError("a pairing is required: add a 'pair' column or pass --pairing")
    return st, pairing


def cmd_design(args) -> int:
    _write(io.emit_report(build_model_matrix(args.k), _fmt(args)), args.out)
    return EXIT_OK


def cmd_assign(args) -> int:
    st, pairing = _load(args, need_pairing=args.paired)
    st.replicates()
    if args.paired:
        a = draw_matched_pair(pairing, st.k, args.seed)
    else:
        a = draw_complete(st.n, st.k, args.seed)
    _write(io.format_assignment(a, st), args.out)
    if args.obs_out is not None:
        obs = observe(st, a, pairing if args.paired else None)
        _write(io.format_observed(obs), args.obs_out)
    return EXIT_OK


def cmd_estimate(args) -> int:
    obs = io.parse_observed(args.obs, args.design)
    rep = estimate(obs, build_model_matrix(obs.k), args.design)
    _write(io.emit_report(rep, _fmt(args)), args.out)
    return EXIT_OK


def cmd_truth(args) -> int:
    st, pairing = _load(args)
    design = args.design or ("mp" if pairing is not None else "cr")
    if design == "mp" and pairing is None:
        raise PairfactError("design mp needs a pairing")
    m = build_model_matrix(st.k)
    tau = population_effect(st, m)
    if design == "cr":
        cov = true_cov_cr(st, m)
        bias = cr_bias(st, m) if st.replicates() >= 2 else None
        r = st.replicates()
    else:
        cov = true_cov_mp(st, pairing, m)
        bias = mp_bias(st, pairing, m) if pairing.r >= 2 else None
        r = pairing.r
    if _fmt(args) == "json":
        d = {
            "design": design,
            "k": st.k,
            "n": st.n,
            "r": r,
            "effects": m.effect_names,
            "tau": tau.tolist(),
            "covariance": cov.tolist(),
            "estimator_bias": None if bias is None else bias.tolist(),
        }
        _write(io.to_json(d), args.out)
    else:
        _write(io.effect_table_csv(m.effect_names, tau, cov, "tau"), args.out)
    return EXIT_OK


def _fixture_checks(expected, st, pairing, m, tol):
    checks = []
    closed = {
        "tau": lambda: population_effect(st, m),
        "cov_cr": lambda: true_cov_cr(st, m),
        "bias_cr": lambda: cr_bias(st, m),
        "cov_mp": lambda: true_cov_mp(st, pairing, m),
        "bias_mp": lambda: mp_bias(st, pairing, m),
    }
    for key, value in expected.items():
        if key.endswith("_mp") and pairing is None:
            raise PairfactError(f"fixture entry {key!r} needs a pairing")
        checks.append(compare(f"fixture: {key}", closed[key](), value, tol))
    return checks


def cmd_verify(args) -> int:
    st, pairing = _load(args)
    m = build_model_matrix(st.k)
    kw = dict(
        tol=args.tol,
        cap=args.cap if args.cap is not None else default_cap(),
        backend=args.backend,
        workers=args.workers,
    )
    reports = []
    if args.design in ("cr", "both"):
        reports.append(verify_cr(st, m, **kw))
    if args.design in ("mp", "both"):
        if pairing is None:
            if args.design == "mp":
                raise PairfactError("design mp needs a pairing")
        else:
            reports.append(verify_mp(st, pairing, m, **kw))
    extra = []
    if args.expected is not None:
        extra = _fixture_checks(io.load_expected(args.expected), st, pairing, m, args.tol)
    if _fmt(args, "csv") == "json":
        text = io.to_json(io.verification_dict(reports, extra))
    else:
        text = io.verification_csv(reports, extra)
    _write(text, args.out)
    ok = all(r.passed for r in reports) and all(c.passed for c in extra)
    return EXIT_OK if ok else EXIT_VERIFY


def cmd_compare(args) -> int:
    st, pairing = _load(args, need_pairing=True)
    rep = compare_designs(st, pairing, build_model_matrix(st.k))
    _write(io.emit_report(rep, _fmt(args)), args.out)
    return EXIT_OK


COMMANDS = {
    "design": cmd_design,
    "assign": cmd_assign,
    "estimate": cmd_estimate,
    "truth": cmd_truth,
    "verify": cmd_verify,
    "compare": cmd_compare,
}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return COMMANDS[args.command](args)
    except PairfactError as exc:
        print(f"pairfact: error: {exc}", file=sys.stderr)
        return EXIT_INVALID


if __name__ == "__main__":
    sys.exit(main())
