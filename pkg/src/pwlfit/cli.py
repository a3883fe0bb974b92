"""Command line front end.

Reads a signal from CSV, solves the segment-budget or the penalized problem
and writes the fit as CSV or JSON.
"""

from __future__ import annotations

import argparse
import json
import sys
from dataclasses import dataclass

import numpy as np

from .cost import CONTINUOUS, DISCRETE, Signal
from .oracle import CombinatorialGuardError, brute_force
from .solver import (InfeasibleBudgetError, instrumentation_report,
                     solve_constrained, solve_regularized)

EXIT_OK = 0
EXIT_INTERNAL = 1
EXIT_USAGE = 2
EXIT_INPUT = 3
EXIT_BUDGET = 4
EXIT_PENALTY = 5
EXIT_ORACLE_MISMATCH = 6
EXIT_ORACLE_GUARD = 7

ORACLE_RTOL = 1e-8

EPILOG = f"""\
input:
  one value per line            discrete series g[0..N]
  t,g per line                  continuous signal on grid t (strictly increasing)
  a non-numeric first line is treated as a header

output (csv):
  m,objective,indices,values    indices and values joined by ';'
  with --stats: i,max_len rows, then R,<R>,bound_held,<true|false>

exit codes:
  {EXIT_OK}  success
  {EXIT_INTERNAL}  internal error
  {EXIT_USAGE}  invalid arguments
  {EXIT_INPUT}  unreadable or invalid input file
  {EXIT_BUDGET}  segment budget infeasible (needs 1 <= M <= N)
  {EXIT_PENALTY}  invalid penalty (needs zeta >= 0)
  {EXIT_ORACLE_MISMATCH}  --oracle disagrees with the solver
  {EXIT_ORACLE_GUARD}  --oracle refused: too many breakpoint sets
"""


class IngestError(ValueError):
    pass


@dataclass
class RunConfig:
    mode: str
    input: str
    segments: int | None = None
    zeta: float | None = None
    kind: str | None = None
    format: str = "csv"
    emit_all_m: bool = False
    stats: bool = False
    oracle: bool = False
    threads: int = 1
    output: str | None = None

    def validate(self):
        if self.mode == "constrained":
            if self.segments is None or self.zeta is not None:
                raise ValueError("constrained mode needs --segments and no --zeta")
        elif self.mode == "regularized":
            if self.zeta is None or self.segments is not None:
                raise ValueError("regularized mode needs --zeta and no --segments")
        else:
            raise ValueError(f"unknown mode {self.mode!r}")
        if self.threads < 1:
            raise ValueError("--threads must be >= 1")


def ingest(path, kind: str | None = None) -> Signal:
    """Read a discrete (one column) or continuous (``t,g``) signal."""
    try:
        with open(path, encoding="utf-8") as fh:
            text = fh.read()
    except OSError as err:
        raise IngestError(f"{path}: {err.strerror}") from err
    rows = []
    ncol = None
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.strip()
        if not line:
            continue
        fields = [f.strip() for f in line.split(",")]
        try:
            row = [float(f) for f in fields]
        except ValueError:
            if not rows and ncol is None:
                ncol = len(fields)  # header
                continue
            raise IngestError(f"{path}:{lineno}: cannot parse {line!r}") from None
        if ncol is None:
            ncol = len(row)
        if len(row) != ncol:
            raise IngestError(
                f"{path}:{lineno}: expected {ncol} columns, got {len(row)}")
        if not all(np.isfinite(row)):
            raise IngestError(f"{path}:{lineno}: non-finite value")
        rows.append(row)
    if len(rows) < 2:
        raise IngestError(f"{path}: need at least 2 data rows, got {len(rows)}")
    if ncol not in (1, 2):
        raise IngestError(f"{path}: expected 1 or 2 columns, got {ncol}")
    detected = DISCRETE if ncol == 1 else CONTINUOUS
    if kind is not None and kind != detected:
        raise IngestError(f"{path}: {ncol}-column file cannot be read as {kind}")
    data = np.array(rows)
    if detected == DISCRETE:
        return Signal.discrete(data[:, 0])
    t = data[:, 0]
    bad = np.nonzero(np.diff(t) <= 0)[0]
    if bad.size:
        raise IngestError(f"{path}: non-increasing grid at data row {bad[0] + 2}")
    return Signal.continuous(t, data[:, 1])


def _num(x) -> str:
    # repr round-trips doubles exactly; +0.0 folds negative zero
    return repr(float(x) + 0.0)


def _fit_record(fit, oracle_obj=None):
    rec = {
        "segments": int(fit.segments),
        "objective": float(fit.objective) + 0.0,
        "residual": float(fit.residual) + 0.0,
        "indices": [int(i) for i in fit.indices],
        "values": [float(v) + 0.0 for v in fit.values],
    }
    if oracle_obj is not None:
        rec["oracle_objective"] = float(oracle_obj) + 0.0
    return rec


def run(cfg: RunConfig, out=None) -> int:
    """Execute one configuration; returns the process exit code."""
    out = out if out is not None else sys.stdout
    err = sys.stderr
    try:
        cfg.validate()
    except ValueError as e:
        print(f"error: {e}", file=err)
        return EXIT_USAGE
    try:
        signal = ingest(cfg.input, cfg.kind)
    except (IngestError, ValueError) as e:
        print(f"error: {e}", file=err)
        return EXIT_INPUT

    try:
        if cfg.mode == "constrained":
            fits = solve_constrained(signal, cfg.segments, threads=cfg.threads)
            if not cfg.emit_all_m:
                fits = fits[-1:]
        else:
            fits = [solve_regularized(signal, cfg.zeta)]
    except InfeasibleBudgetError as e:
        print(f"error: {e}", file=err)
        return EXIT_BUDGET
    except ValueError as e:
        print(f"error: {e}", file=err)
        return EXIT_PENALTY if cfg.mode == "regularized" else EXIT_INTERNAL

    oracle = [None] * len(fits)
    status = EXIT_OK
    if cfg.oracle:
        try:
            if cfg.mode == "constrained":
                oracle = [brute_force(signal, f.segments).objective for f in fits]
            else:
                oracle = [brute_force(signal, signal.N, zeta=cfg.zeta).objective]
        except CombinatorialGuardError as e:
            print(f"error: {e}", file=err)
            return EXIT_ORACLE_GUARD
        for f, o in zip(fits, oracle):
            if abs(f.objective - o) > ORACLE_RTOL * max(1.0, abs(o)):
                print(f"error: oracle objective {o!r} != solver {f.objective!r} "
                      f"for {f.segments} segments", file=err)
                status = EXIT_ORACLE_MISMATCH

    report = instrumentation_report(fits[0].diagnostics) if cfg.stats else None

    if cfg.format == "json":
        doc = {"mode": cfg.mode, "kind": signal.kind, "N": signal.N}
        if cfg.zeta is not None:
            doc["zeta"] = float(cfg.zeta)
        doc["results"] = [_fit_record(f, o) for f, o in zip(fits, oracle)]
        if report is not None:
            doc["stats"] = {
                "max_lengths": [int(n) for n in report.max_lengths],
                "R": report.R,
                "bound_held": report.bound_held,
                "index_bound_held": report.index_bound_held,
            }
        out.write(json.dumps(doc, indent=2) + "\n")
    else:
        head = "m,objective,indices,values"
        lines = [head + (",oracle_objective" if cfg.oracle else "")]
        for f, o in zip(fits, oracle):
            row = [str(f.segments), _num(f.objective),
                   ";".join(str(int(i)) for i in f.indices),
                   ";".join(_num(v) for v in f.values)]
            if cfg.oracle:
                row.append(_num(o))
            lines.append(",".join(row))
        if report is not None:
            lines.append("i,max_len")
            lines.extend(report.lines())
        out.write("\n".join(lines) + "\n")
    return status


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="pwlfit",
        description="Exact least-squares continuous piecewise-linear fitting "
                    "with a segment budget or a per-segment penalty.",
        epilog=EPILOG,
        formatter_class=argparse.RawDescriptionHelpFormatter)
    p.add_argument("--input", required=True, metavar="PATH")
    p.add_argument("--mode", choices=("constrained", "regularized"),
                   default="constrained")
    p.add_argument("--segments", type=int, metavar="M",
                   help="number of segments (constrained mode)")
    p.add_argument("--zeta", type=float, metavar="Z",
                   help="penalty per segment (regularized mode)")
    p.add_argument("--kind", choices=(DISCRETE, CONTINUOUS),
                   help="signal kind; detected from the column count if omitted")
    p.add_argument("--format", choices=("csv", "json"), default="csv")
    p.add_argument("--emit-all-m", action="store_true",
                   help="constrained mode: emit the optimum for every m <= M")
    p.add_argument("--stats", action="store_true",
                   help="append envelope length statistics")
    p.add_argument("--oracle", action="store_true",
                   help="cross-check against exhaustive search (small inputs)")
    p.add_argument("--threads", type=int, default=1, metavar="K")
    p.add_argument("--output", metavar="PATH", help="write here instead of stdout")
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    cfg = RunConfig(mode=args.mode, input=args.input, segments=args.segments,
                    zeta=args.zeta, kind=args.kind, format=args.format,
                    emit_all_m=args.emit_all_m, stats=args.stats,
                    oracle=args.oracle, threads=args.threads, output=args.output)
    try:
        if cfg.output:
            with open(cfg.output, "w", encoding="utf-8", newline="\n") as fh:
                return run(cfg, fh)
        return run(cfg)
    except Exception as e:  # noqa: BLE001
        print(f"internal error: {type(e).__name__}: {e}", file=sys.stderr)
        return EXIT_INTERNAL


if __name__ == "__main__":
    sys.exit(main())
