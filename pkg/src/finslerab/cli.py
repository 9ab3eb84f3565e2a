"""Command-line entry point: ``finslerab {verify,sweep,phi}``.

Exit codes: 0 success / all checks pass, 1 some check failed, 2 configuration
or input error.
"""
from __future__ import annotations

import argparse
import csv
import io
import math
import os
import sys
import tempfile
from pathlib import Path

import numpy as np

from .errors import ConfigError, FinslerError
from .family import FamilyParams, admissible, assemble_finsler, closed_form_K, phi_derivatives, tau_eval
from .geometry import curvature_sample
from .scenario import bundled_scenarios, load_scenario
from .verify import serialize_report, theorem1_suite

SWEEP_COLUMNS = ("x1", "x2", "B", "K_closed", "K_numeric", "S", "einstein_dev", "status")
SWEEP_DIRECTIONS = 8


class _Parser(argparse.ArgumentParser):
    """argparse exits with 2 on usage errors already; keep messages on stderr."""

    def error(self, message):
        self.print_usage(sys.stderr)
        sys.stderr.write(f"{self.prog}: error: {message}\n")
        raise SystemExit(2)


def atomic_write(path, data: bytes) -> None:
    """Write ``data`` to ``path`` via a temp file in the same directory and rename."""
    path = Path(path)
    fd, tmp = tempfile.mkstemp(prefix=f".{path.name}.", dir=path.parent if str(path.parent) else ".")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _fmt(x: float) -> str:
    return "%.17g" % x


def _resolve(path: str) -> Path:
    """A file path, or the name of a bundled scenario."""
    p = Path(path)
    if p.exists():
        return p
    bundled = bundled_scenarios()
    key = p.name[:-5] if p.name.endswith(".json") else p.name
    return bundled.get(key, p)


# -- verify ------------------------------------------------------------------
def cmd_verify(args) -> int:
    sc = load_scenario(_resolve(args.scenario))
    if args.seed is not None:
        sc = sc.with_seed(args.seed)
    report = theorem1_suite(sc)
    if args.json_out:
        atomic_write(args.json_out, serialize_report(report, "json"))
    if args.csv_out:
        atomic_write(args.csv_out, serialize_report(report, "csv"))
    env = report.environment
    print(f"scenario {report.scenario or args.scenario}: k1={env['params']['k1']:g} k2={env['params']['k2']:g} "
          f"eps={env['params']['eps']:+d}, {env['sampling']['n_points']} points, seed {env['seed']}")
    for name, c in report.checks.items():
        print(f"  {c.verdict.upper():4s}  {name:24s} max {c.max_residual:.3e}  tol {c.tolerance:.1e}"
              f"  ({c.n_samples} samples, {c.n_skipped} skipped)")
    print(f"verdict: {report.verdict.upper()}")
    return 0 if report.passed else 1


# -- sweep ---------------------------------------------------------------------------
def _parse_grid(text: str) -> tuple[int, int]:
    try:
        nx, ny = (int(t) for t in text.split(","))
    except ValueError:
        raise ConfigError(f"--grid expects 'nx,ny', got {text!r}") from None
    if nx < 1 or ny < 1:
        raise ConfigError("--grid sizes must be positive")
    return nx, ny


def sweep_rows(sc, nx: int, ny: int) -> list[dict]:
    p, d = sc.params, sc.structure
    (a, b), (c, e) = d.domain.box
    gx = np.linspace(a, b, nx) if nx > 1 else np.array([(a + b) / 2])
    gy = np.linspace(c, e, ny) if ny > 1 else np.array([(c + e) / 2])
    g1, g2 = np.meshgrid(gx, gy, indexing="ij")
    pts = np.stack([g1.ravel(), g2.ravel()])
    ok = admissible(p, d, pts)
    rows = [{"x1": pts[0, i], "x2": pts[1, i], "status": "ok" if ok[i] else "excluded"} for i in range(pts.shape[1])]
    idx = np.flatnonzero(ok)
    if idx.size:
        F = assemble_finsler(p, d)
        th = 2 * np.pi * np.arange(SWEEP_DIRECTIONS) / SWEEP_DIRECTIONS
        y = np.broadcast_to(np.stack([np.cos(th), np.sin(th)])[:, None, :], (2, idx.size, SWEEP_DIRECTIONS))
        cs = curvature_sample(F, pts[:, idx, None], y)
        Kmean = cs.K.mean(axis=1)
        dev = np.max(np.abs(cs.K - Kmean[:, None]), axis=1) / (1 + np.abs(Kmean))
        S = np.max(np.abs(cs.S) / cs.F, axis=1)
        Bv = np.asarray(d.B.value(pts[0, idx], pts[1, idx]))
        for n, i in enumerate(idx):
            try:
                kc = closed_form_K(p, d, pts[:, i]).K
            except FinslerError:
                kc = math.nan
            rows[i].update(B=float(Bv[n]), K_closed=kc, K_numeric=float(Kmean[n]), S=float(S[n]),
                           einstein_dev=float(dev[n]))
    return rows


def sweep_csv(rows: list[dict]) -> bytes:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\r\n")
    w.writerow(SWEEP_COLUMNS)
    for r in rows:
        w.writerow([_fmt(r[c]) if c in r and c != "status" else r.get(c, "") for c in SWEEP_COLUMNS])
    return buf.getvalue().encode("utf-8")


def cmd_sweep(args) -> int:
    sc = load_scenario(_resolve(args.scenario))
    nx, ny = _parse_grid(args.grid)
    rows = sweep_rows(sc, nx, ny)
    data = sweep_csv(rows)
    atomic_write(args.out, data)
    n_ok = sum(r["status"] == "ok" for r in rows)
    print(f"sweep {nx}x{ny}: {n_ok} admissible, {len(rows) - n_ok} excluded, written to {args.out}")
    return 0


# -- phi ---------------------------------------------------------------------------------
def cmd_phi(args) -> int:
    try:
        p = FamilyParams(args.k1, args.k2, args.eps)
    except FinslerError as exc:
        raise ConfigError(str(exc)) from None
    if args.table is not None:
        smin, smax, n = args.table
        n = int(n)
        if n < 1:
            raise ConfigError("--table needs n >= 1")
        s = np.linspace(smin, smax, n) if n > 1 else np.array([smin])
    else:
        s = np.array([args.s])
    try:
        f, d1, d2 = phi_derivatives(p, s)
        t = tau_eval(p, s)
    except FinslerError as exc:
        raise ConfigError(f"s outside the admissible range: {exc}") from None
    w = csv.writer(sys.stdout, lineterminator="\n")
    w.writerow(("s", "phi", "dphi", "d2phi", "tau"))
    for row in zip(s, f, d1, d2, t):
        w.writerow([_fmt(float(v)) for v in row])
    return 0


def build_parser() -> argparse.ArgumentParser:
    ap = _Parser(prog="finslerab", description="Construct and verify two-dimensional Einstein (alpha, beta)-metrics.")
    sub = ap.add_subparsers(dest="command", required=True, parser_class=_Parser)

    v = sub.add_parser("verify", help="run every check of a scenario file")
    v.add_argument("scenario", help="scenario JSON path or bundled scenario name")
    v.add_argument("--json-out", help="write the JSON report here")
    v.add_argument("--csv-out", help="write the CSV summary here")
    v.add_argument("--seed", type=int, help="override the sampling seed")
    v.set_defaults(func=cmd_verify)

    s = sub.add_parser("sweep", help="tabulate curvature over a grid")
    s.add_argument("scenario")
    s.add_argument("--grid", default="20,20", help="nx,ny (default 20,20)")
    s.add_argument("--out", required=True, help="CSV output path")
    s.set_defaults(func=cmd_sweep)

    f = sub.add_parser("phi", help="evaluate phi and its derivatives")
    f.add_argument("--k1", type=float, required=True)
    f.add_argument("--k2", type=float, required=True)
    f.add_argument("--eps", type=int, default=1, choices=(1, -1))
    g = f.add_mutually_exclusive_group(required=True)
    g.add_argument("--s", type=float)
    g.add_argument("--table", nargs=3, type=float, metavar=("SMIN", "SMAX", "N"))
    f.set_defaults(func=cmd_phi)
    return ap


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code) if isinstance(exc.code, int) else 2
    try:
        return args.func(args)
    except (ConfigError, FinslerError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:  # keep the exit-code contract total
        print(f"internal error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
