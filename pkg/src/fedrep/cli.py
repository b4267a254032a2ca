"""Command-line entry point: ``fedrep run|certify-agg|verify-dp|verify-contraction``."""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from .config import load_config
from .core import derive_stream
from .errors import FedrepError
from .robust_agg import AGGREGATORS, AggregatorSpec, certify_robustness
from .verify import verify_contraction, verify_dp

log = logging.getLogger("fedrep")


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise SystemExit(2)


def _build_parser() -> argparse.ArgumentParser:
    ap = _Parser(prog="fedrep", description=__doc__)
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True, parser_class=_Parser)

    run = sub.add_parser("run", help="run an experiment from a TOML config")
    run.add_argument("--config", required=True, type=Path)
    run.add_argument("--seed", type=int, help="override master_seed")
    run.add_argument("--out", type=Path, help="metrics file (JSON lines); default stdout")
    run.add_argument("--workers", type=int, help="override worker thread count")
    run.add_argument("--rounds", type=int, help="override the number of rounds")
    run.add_argument("--transcript", type=Path, help="also dump per-round transcripts (JSON lines)")

    cert = sub.add_parser("certify-agg", help="Monte Carlo (delta, c)-robustness estimate")
    cert.add_argument("--agg", choices=sorted(AGGREGATORS), default="geomed")
    cert.add_argument("--delta", type=float, default=0.2)
    cert.add_argument("--trials", type=int, default=200)
    cert.add_argument("--n", type=int, default=16)
    cert.add_argument("--dim", type=int, default=4)
    cert.add_argument("--seed", type=int, default=0)

    dp = sub.add_parser("verify-dp", help="exhaustive likelihood-ratio check of the proposal mechanism")
    dp.add_argument("--d", type=int, required=True)
    dp.add_argument("--k-over-m", type=int, required=True)
    dp.add_argument("--alpha", type=float, required=True)

    con = sub.add_parser("verify-contraction", help="Monte Carlo check of the contraction constant")
    con.add_argument("--d", type=int, required=True)
    con.add_argument("--K", type=int, required=True)
    con.add_argument("--m", type=int, required=True)
    con.add_argument("--alpha", type=float, default=0.0)
    con.add_argument("--delta", type=float, default=0.0)
    con.add_argument("--trials", type=int, default=10_000)
    con.add_argument("--seed", type=int, default=0)
    return ap


def _cmd_run(args) -> int:
    from .protocol import run_experiment

    cfg = load_config(args.config)
    changes = {}
    if args.seed is not None:
        changes["master_seed"] = args.seed
    if args.workers is not None:
        changes["workers"] = args.workers
    if args.rounds is not None:
        changes["rounds"] = args.rounds
    if changes:
        cfg = cfg.replace(**changes)
    out = args.out.open("w") if args.out else sys.stdout
    tr_out = args.transcript.open("w") if args.transcript else None

    def write_record(rec):
        out.write(rec.to_json() + "\n")
        out.flush()

    def write_transcript(tr):
        tr_out.write(json.dumps(tr.to_dict(), separators=(",", ":")) + "\n")
        tr_out.flush()

    try:
        run_experiment(
            cfg, on_record=write_record, on_transcript=write_transcript if tr_out else None
        )
    finally:
        if args.out:
            out.close()
        if tr_out:
            tr_out.close()
    return 0


def _cmd_certify(args) -> int:
    est = certify_robustness(
        AggregatorSpec(kind=args.agg), args.delta, args.trials,
        derive_stream(args.seed, 0, "certify"), n=args.n, dim=args.dim,
    )
    print(f"aggregator={args.agg} delta={est.delta:g} rho^2={est.rho_sq:g}")
    for name, mse in sorted(est.mean_sq_error.items()):
        print(f"  {name:>16s}  E||e||^2={mse:.6g}")
    print(f"estimated c={est.c:.6g} (worst: {est.worst_attack})")
    return 0


def _cmd_verify_dp(args) -> int:
    res = verify_dp(args.d, args.k_over_m, args.alpha)
    print(f"d={res.d} K/m={res.k} alpha={res.alpha:g}")
    print(f"max likelihood ratio = {res.max_ratio:.12g}")
    print(f"bound exp(epsilon)   = {res.bound:.12g} (epsilon={res.epsilon:.6g})")
    print("PASS" if res.ok else "FAIL")
    return 0 if res.ok else 1


def _cmd_verify_contraction(args) -> int:
    res = verify_contraction(
        args.d, args.K, args.m, args.alpha, args.delta, args.trials,
        derive_stream(args.seed, 0, "verify-contraction"),
    )
    print(f"mean ||g-C(g)||^2/||g||^2 = {res.mean:.6f} (se {res.se:.2g}, {res.trials} trials)")
    print(f"bound 1 - d'/d           = {res.bound:.6f} (d'={res.d_cons:.4f})")
    print("PASS" if res.ok else "FAIL")
    return 0 if res.ok else 1


_COMMANDS = {
    "run": _cmd_run,
    "certify-agg": _cmd_certify,
    "verify-dp": _cmd_verify_dp,
    "verify-contraction": _cmd_verify_contraction,
}


def main(argv=None) -> int:
    ap = _build_parser()
    try:
        args = ap.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        return _COMMANDS[args.command](args)
    except FedrepError as exc:
        print(f"fedrep: error: {exc}", file=sys.stderr)
        return 2


cli_main = main

if __name__ == "__main__":
    sys.exit(main())
