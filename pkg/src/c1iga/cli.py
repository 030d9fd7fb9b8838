"""Command line driver for the C1 multi-patch experiments.

Verdicts of ``study`` use the last refinement interval: OPTIMAL when the H2
order is at least ``p - 1 - 0.25``, LOCKED when the H2 error drops by less
than 10 %, SUBOPTIMAL otherwise.
"""

from __future__ import annotations

import argparse
import csv
import json
import sys
import warnings
from pathlib import Path

import numpy as np

from .biharmonic import LOCKING_DECREASE, SLOPE_TOL, manufactured_problem, run_study, write_patch_csv, write_study_csv
from .c1space import (
    C1_NULLSPACE_TOL,
    build_c0_space,
    build_c1_basis,
    num_spans_for_level,
    predicted_trace_dims,
    trace_component_dims,
    write_spectrum_csv,
)
from .catalog import CATALOG, catalog
from .geometry import GeometryError, MultiPatchGeometry, load_geometry
from .gluing import classify_as_g1, compute_gluing_data

EXIT_OK, EXIT_CONFIG, EXIT_NUMERICAL = 0, 1, 2


class ConfigError(Exception):
    pass


def _load(spec: str) -> MultiPatchGeometry:
    if spec in CATALOG:
        return catalog(spec)
    path = Path(spec)
    if not path.is_file():
        raise ConfigError(f"unknown geometry {spec!r}: not a catalog name or a file")
    try:
        return load_geometry(path)
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read geometry file {spec}: {exc}") from exc


def _regularities(values, p: int, study: bool) -> list[int]:
    if values in (None, ["all-valid"]):
        return list(range(1, p))
    rs = [int(r) for r in values]
    for r in rs:
        if not 1 <= r <= p - 1:
            raise ConfigError(f"regularity {r} outside 1..{p - 1} for degree {p}")
    return rs


def _check_degree(p: int, study: bool):
    if study and not 3 <= p <= 5:
        raise ConfigError(f"biharmonic runs need 3 <= degree <= 5, got {p}")
    if p < 2:
        raise ConfigError(f"degree must be at least 2, got {p}")


def _outdir(args) -> Path | None:
    if args.out is None:
        return None
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _finite(x):
    if isinstance(x, float) and not np.isfinite(x):
        return None
    if isinstance(x, dict):
        return {k: _finite(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_finite(v) for v in x]
    return x


def cmd_classify(args) -> int:
    geom = _load(args.geometry)
    records = []
    for i in range(len(geom.interfaces)):
        frame = geom.frame(i)
        report = classify_as_g1(frame)
        rec = {"interface": i, "report": report.to_dict()}
        try:
            rec["gluing"] = compute_gluing_data(frame).to_dict()
        except (ValueError, np.linalg.LinAlgError) as exc:
            rec["gluing"] = None
            rec["gluing_error"] = str(exc)
        records.append(rec)
    text = json.dumps(_finite({"geometry": geom.name, "interfaces": records}), indent=2, sort_keys=True)
    out = _outdir(args)
    if out is not None:
        (out / f"classify_{geom.name or 'geometry'}.json").write_text(text + "\n")
    print(text)
    return EXIT_OK


def cmd_study(args) -> int:
    geom = _load(args.geometry)
    problem = manufactured_problem(geom)
    studies = []
    failed = False
    for p in args.degree:
        _check_degree(p, study=True)
        for r in _regularities(args.regularity, p, True):
            st = run_study(problem, p, r, args.levels, tol=args.tol_nullspace)
            studies.append(st)
            errors = [lv.error for lv in st.levels if lv.error]
            failed |= bool(errors)
            last = st.eoc_h2[-1] if len(st.levels) > 1 else float("nan")
            print(f"{geom.name} p={p} r={r}: {st.verdict} (last H2 EOC {last:.3f})")
            for e in errors:
                print(f"  failure: {e}", file=sys.stderr)
    out = _outdir(args)
    if out is not None:
        write_study_csv(out / "study.csv", studies)
        write_patch_csv(out / "study_patches.csv", studies)
        with open(out / "summary.csv", "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["geometry", "p", "r", "levels", "verdict"])
            for st in studies:
                w.writerow([st.geometry, st.degree, st.regularity, len(st.levels), st.verdict])
    return EXIT_NUMERICAL if failed else EXIT_OK


def _trace_rows(geom, p, r, levels, interface, tol):
    report = classify_as_g1(geom.frame(interface))
    left_id = geom.frame(interface).is_left_identity()
    for lev in range(levels):
        n = num_spans_for_level(lev)
        basis = build_c1_basis(build_c0_space(geom, p, r, n, bc="none"), tol=tol)
        td = trace_component_dims(basis, interface, report)
        pred = predicted_trace_dims(report, p, r, n, left_id)
        yield {
            "level": lev,
            "num_spans": n,
            "dim_G0": td.g0,
            "dim_G1": td.g1,
            "dim_V1": basis.dim,
            "ambiguous": int(td.ambiguous),
            **{k: pred.get(k, "") for k in ("g0_min", "g1_min", "g0_max", "g1_max", "g0_exact", "g1_exact")},
        }


def cmd_trace_dims(args) -> int:
    geom = _load(args.geometry)
    cols = ["level", "num_spans", "dim_G0", "dim_G1", "dim_V1", "ambiguous"]
    cols += ["g0_min", "g1_min", "g0_max", "g1_max", "g0_exact", "g1_exact"]
    rows = []
    for p in args.degree:
        _check_degree(p, study=False)
        for r in _regularities(args.regularity, p, False):
            for row in _trace_rows(geom, p, r, args.levels, args.interface, args.tol_nullspace):
                rows.append({"p": p, "r": r, **row})
    out = _outdir(args)
    fh = open(out / f"trace_dims_{geom.name}.csv", "w", newline="") if out else sys.stdout
    try:
        w = csv.DictWriter(fh, fieldnames=["p", "r"] + cols)
        w.writeheader()
        w.writerows(rows)
    finally:
        if out:
            fh.close()
    return EXIT_OK


def cmd_spectrum(args) -> int:
    geom = _load(args.geometry)
    for p in args.degree:
        _check_degree(p, study=False)
        for r in _regularities(args.regularity, p, False):
            rows = []
            for lev in range(args.levels):
                space = build_c0_space(geom, p, r, num_spans_for_level(lev), bc=args.bc)
                basis = build_c1_basis(space, tol=args.tol_nullspace)
                rows.append((lev, basis.spectrum))
                print(
                    f"{geom.name} p={p} r={r} level={lev}: dim V1 {basis.dim}, "
                    f"gap index {basis.spectrum.gap_index}, gap ratio {basis.spectrum.gap_ratio:.3e}"
                )
            out = _outdir(args)
            if out is not None:
                write_spectrum_csv(out / f"spectrum_{geom.name}_p{p}_r{r}.csv", rows)
    return EXIT_OK


def cmd_catalog_list(args) -> int:
    for name, (_, desc) in CATALOG.items():
        print(f"{name:22s} {desc}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="c1iga",
        description="C1 isogeometric spaces on multi-patch domains.",
        epilog=(
            f"study verdicts: OPTIMAL if the last H2 EOC >= p-1-{SLOPE_TOL}; "
            f"LOCKED if the last H2 error decrease < {LOCKING_DECREASE:.0%}; else SUBOPTIMAL. "
            "Exit codes: 0 success, 1 configuration error, 2 numerical failure."
        ),
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, degrees=(3,), levels=3):
        p.add_argument("--geometry", required=True, help="catalog name or geometry JSON file")
        p.add_argument("--degree", type=int, nargs="+", default=list(degrees))
        p.add_argument("--regularity", nargs="+", default=None, help='integers or "all-valid" (default)')
        p.add_argument("--levels", type=int, default=levels)
        p.add_argument("--tol-nullspace", type=float, default=C1_NULLSPACE_TOL)
        p.add_argument("--out", default=None, help="output directory")
        p.add_argument("--seed", type=int, default=0)

    p = sub.add_parser("classify", help="AS G1 classification report per interface")
    p.add_argument("--geometry", required=True)
    p.add_argument("--out", default=None)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_classify)

    p = sub.add_parser("study", help="convergence study with error, EOC and dimension tables")
    common(p, degrees=(3, 4, 5), levels=4)
    p.set_defaults(func=cmd_study)

    p = sub.add_parser("trace-dims", help="trace component dimensions per level")
    common(p)
    p.add_argument("--interface", type=int, default=0)
    p.set_defaults(func=cmd_trace_dims)

    p = sub.add_parser("spectrum", help="eigenvalues of the C1 constraint per level")
    common(p)
    p.add_argument("--bc", choices=["clamped", "none"], default="clamped")
    p.set_defaults(func=cmd_spectrum)

    p = sub.add_parser("catalog-list", help="list the shipped geometries")
    p.set_defaults(func=cmd_catalog_list)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_CONFIG if exc.code else EXIT_OK
    if getattr(args, "levels", 1) < 1:
        print("error: --levels must be positive", file=sys.stderr)
        return EXIT_CONFIG
    if not 0.0 <= getattr(args, "tol_nullspace", 0.0) < 1.0:
        print("error: --tol-nullspace must lie in [0, 1)", file=sys.stderr)
        return EXIT_CONFIG
    np.random.seed(getattr(args, "seed", 0))
    try:
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", RuntimeWarning)
            return args.func(args)
    except (ConfigError, KeyError, GeometryError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (np.linalg.LinAlgError, ValueError, ArithmeticError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL


if __name__ == "__main__":
    sys.exit(main())
