"""Command-line entry point: ``hypident verify ...``.

Exit codes: 0 every selected required entry matched, 1 a required entry
mismatched, 2 usage or catalog error, 3 a required entry failed numerically.
"""

from __future__ import annotations

import argparse
import sys
from concurrent.futures import ProcessPoolExecutor

from .catalog import load_catalog
from .errors import CatalogError, HypidentError, UsageError
from .numkernel import MIN_TARGET_DIGITS, EvalContext
from .verify import STRATEGIES, VerifyReport, emit_report, exit_code, verify_identity

EXIT_OK, EXIT_MISMATCH, EXIT_USAGE, EXIT_NUMERIC = 0, 1, 2, 3


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise SystemExit(EXIT_USAGE)


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="hypident", description="Verify hypergeometric series identities.")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)
    v = sub.add_parser("verify", help="verify catalog entries")
    sel = v.add_mutually_exclusive_group(required=True)
    sel.add_argument("--all", action="store_true", help="every entry in the catalog")
    sel.add_argument("--id", action="append", metavar="ID", help="one entry (repeatable)")
    sel.add_argument("--status", choices=("verified", "audit"), help="entries with this expected status")
    v.add_argument("--digits", type=int, default=40, help="target decimal digits (default 40)")
    v.add_argument("--strategy", choices=STRATEGIES, default="auto")
    v.add_argument("--catalog", metavar="PATH", help="catalog file (default: bundled catalog)")
    v.add_argument("--format", choices=("table", "lines"), default="lines")
    v.add_argument("--jobs", type=int, default=1, metavar="K", help="worker processes")
    v.add_argument("-v", "--verbose", action="store_true", help="print per-sample details")
    return p


_worker_state: dict = {}


def _worker_verify(catalog, rid, digits, strategy) -> VerifyReport:
    key = ("catalog", catalog)
    if _worker_state.get("key") != key:
        records = load_catalog(catalog)
        _worker_state["key"] = key
        _worker_state["index"] = {r.id: r for r in records}
    index = _worker_state["index"]
    rep = verify_identity(index[rid], strategy, EvalContext(digits), index)
    # context-local mpf classes do not pickle; ship the values as decimal text
    for s in rep.samples:
        s.lhs = None if s.lhs is None else str(s.lhs)
        s.rhs = None if s.rhs is None else str(s.rhs)
    return rep


def run_cli(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    if args.digits < MIN_TARGET_DIGITS:
        print(f"hypident: error: --digits must be at least {MIN_TARGET_DIGITS}", file=sys.stderr)
        return EXIT_USAGE
    if args.jobs < 1:
        print("hypident: error: --jobs must be positive", file=sys.stderr)
        return EXIT_USAGE
    try:
        records = load_catalog(args.catalog)
    except CatalogError as exc:
        print(f"hypident: catalog error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    index = {r.id: r for r in records}
    if args.all:
        selected = records
    elif args.id:
        missing = [i for i in args.id if i not in index]
        if missing:
            print(f"hypident: error: unknown identity id(s): {', '.join(missing)}", file=sys.stderr)
            return EXIT_USAGE
        selected = [index[i] for i in dict.fromkeys(args.id)]
    else:
        selected = [r for r in records if r.expected_status == args.status]

    ctx = EvalContext(args.digits)
    try:
        if args.jobs == 1 or len(selected) <= 1:
            reports = [verify_identity(r, args.strategy, ctx, index) for r in selected]
        else:
            with ProcessPoolExecutor(max_workers=args.jobs) as pool:
                futures = [pool.submit(_worker_verify, args.catalog, r.id, args.digits, args.strategy)
                           for r in selected]
                reports = [f.result() for f in futures]
    except UsageError as exc:
        print(f"hypident: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except HypidentError as exc:
        print(f"hypident: error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC

    sys.stdout.write(emit_report(reports, args.format))
    if args.verbose:
        for rep in sorted(reports, key=lambda r: r.id):
            if rep.message:
                print(f"  {rep.id}: {rep.message}")
            if len(rep.samples) > 1:
                for s in rep.samples:
                    vals = ", ".join(f"{k}={v}" for k, v in s.bindings.items())
                    print(f"  {rep.id} [{vals}] digits={s.digits} raw={s.raw_digits}"
                          + (f" error={s.error}" if s.error else ""))
    return exit_code(reports)


def main(argv=None) -> None:
    sys.exit(run_cli(argv))


if __name__ == "__main__":
    main()
