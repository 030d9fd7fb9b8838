"""Acceptance criteria, one test per criterion.

Each test prints a single ``criterion N: PASS|FAIL`` line; the lines are
repeated in the pytest terminal summary.  Run the module directly
(``python3 tests/test_acceptance.py``) to get only those lines.
"""

from __future__ import annotations

import sys
import time
import warnings

import numpy as np

from c1iga.biharmonic import LOCKING_DECREASE, SLOPE_TOL, manufactured_problem, run_study
from c1iga.c1space import (
    assemble_c1_matrix,
    build_c0_space,
    build_c1_basis,
    interface_defects,
    num_spans_for_level,
    trace_component_dims,
    verify_trace_inclusion,
)
from c1iga.catalog import catalog, catalog_names
from c1iga.gluing import classify_as_g1, compute_gluing_data
from c1iga.splines import SplineFunction, SplineSpace1D
from oracles import identity_c1_oracle

RESULTS: dict[int, str] = {}

DELTA = 0.3
BILINEAR = ["two_patch_identity", "chevron", "lshape", "triangle3", "rectangle4"]
AS_GEOMETRIES = BILINEAR + ["quarter_circle3", "smooth5"]
# two_patch_identity is trivially G1 and never locks, so the locking half of
# criterion 7 does not apply to it
CONVERGENCE_GEOMETRIES = ["chevron", "lshape", "triangle3", "rectangle4", "quarter_circle3", "smooth5"]


def record(n: int, ok: bool, detail: str) -> None:
    line = f"criterion {n:2d}: {'PASS' if ok else 'FAIL'}  {detail}"
    RESULTS[n] = line
    print(line)
    assert ok, line


def study_levels(p: int, r: int) -> int:
    # p = 5 with r <= 2 is already past its pre-asymptotic range after 4 levels
    return 4 if p == 5 and r <= 2 else 5


# ---------------------------------------------------------------------------


def test_criterion_01_gluing_closed_forms():
    forms = {
        "two_patch_identity": lambda v: (1 + 0 * v, 1 + 0 * v, 0 * v, 0 * v, 0 * v),
        "chevron": lambda v: (1 + 0 * v, 1 + 0 * v, 2 * v, -v, v),
        "distorted_rectangle": lambda v: (1 + 0 * v, 1 + 4 * DELTA * v * (1 - v), 0 * v, 0 * v, 0 * v),
    }
    worst = 0.0
    for name, form in forms.items():
        d = compute_gluing_data(catalog(name).frame(0), m=200)
        got = (d.alpha_left_samples, d.alpha_right_samples, d.beta_bar_samples, d.beta_left_samples, d.beta_right_samples)
        worst = max(worst, max(np.abs(g - w).max() for g, w in zip(got, form(d.v))))
    record(1, worst <= 1e-10, f"gluing data vs closed forms, max deviation {worst:.1e} at 200 points")


def test_criterion_02_classification_matrix():
    wrong = []
    for name in AS_GEOMETRIES:
        g = catalog(name)
        for i in range(len(g.interfaces)):
            if not classify_as_g1(g.frame(i)).is_as_g1:
                wrong.append(f"{name}[{i}]")
    rep = classify_as_g1(catalog("distorted_rectangle").frame(0))
    if rep.is_as_g1 or rep.p_alpha != 2 or not rep.beta_right_zero:
        wrong.append("distorted_rectangle")
    g = catalog("circle5")
    for i in range(len(g.interfaces)):
        if classify_as_g1(g.frame(i)).status != "outside_as_framework":
            wrong.append(f"circle5[{i}]")
    record(2, not wrong, f"misclassifications: {len(wrong)} {' '.join(wrong)}".rstrip())


def test_criterion_03_pointwise_c1():
    worst, where, count = 0.0, "", 0
    for name in catalog_names():
        g = catalog(name)
        for p in (3, 4, 5):
            for r in sorted({1, p - 1}):
                for lev in range(3):
                    with warnings.catch_warnings():
                        warnings.simplefilter("ignore", RuntimeWarning)
                        b = build_c1_basis(build_c0_space(g, p, r, num_spans_for_level(lev)))
                    cols = b.B[:, b.coupled_columns]
                    if cols.shape[1] == 0:
                        continue
                    _, gj = interface_defects(b.space, cols)
                    count += cols.shape[1]
                    if gj.max() > worst:
                        worst, where = float(gj.max()), f"{name} p={p} r={r} level {lev}"
    record(3, worst <= 1e-8, f"max gradient jump {worst:.1e} over {count} columns ({where})")


def test_criterion_04_trace_inclusion():
    combos = [(3, 1), (4, 1), (4, 2), (5, 1), (5, 2), (5, 3)]
    rng = np.random.default_rng(2024)
    n = 4
    failures, worst, total = [], 0.0, 0
    for name in AS_GEOMETRIES:
        g = catalog(name)
        frames = [g.frame(i) for i in range(len(g.interfaces))]
        reports = [classify_as_g1(f) for f in frames]
        for k in range(20):
            i = k % len(frames)
            p, r = combos[k % len(combos)]
            s0, s1 = SplineSpace1D(p, r + 1, n), SplineSpace1D(p - 1, r, n)
            g0 = SplineFunction(s0, rng.standard_normal(s0.dim))
            g1 = SplineFunction(s1, rng.standard_normal(s1.dim))
            res = verify_trace_inclusion(frames[i], reports[i], p, r, n, g0, g1, tol=1e-10)
            total += 1
            worst = max(worst, res.membership_residual, res.g1_residual)
            if not res:
                failures.append(f"{name}[{i}] p={p} r={r}")
    record(4, not failures, f"{total - len(failures)}/{total} pairs included, max residual {worst:.1e}")


def _trace_dims(name, p, r, levels=3):
    g = catalog(name)
    rep = classify_as_g1(g.frame(0))
    out = []
    for lev in range(levels):
        b = build_c1_basis(build_c0_space(g, p, r, num_spans_for_level(lev), bc="none"))
        td = trace_component_dims(b, 0, rep)
        out.append((td.g0, td.g1))
    return out


def _affine_growth(seq, spans):
    # dims = a + b n with b > 0
    slope = (seq[1] - seq[0]) / (spans[1] - spans[0])
    return slope > 0 and all(seq[k] == seq[0] + slope * (spans[k] - spans[0]) for k in range(len(seq)))


def test_criterion_05_locking_dimensions():
    spans = [num_spans_for_level(k) for k in range(3)]
    bad, lines = [], []
    for name in ("chevron", "lshape"):
        for p in (3, 4):
            for r in range(1, p):
                dims = _trace_dims(name, p, r)
                g0, g1 = [d[0] for d in dims], [d[1] for d in dims]
                lines.append(f"{name} p={p} r={r}: G0 {g0} G1 {g1}")
                if r == p - 1:
                    if len(set(g0)) > 1 or g0[0] > p + 2:
                        bad.append(f"{name} p={p} r={r} G0 {g0}")
                    if len(set(g1)) > 1 or g1[0] > p:
                        bad.append(f"{name} p={p} r={r} G1 {g1}")
                else:
                    if not _affine_growth(g0, spans):
                        bad.append(f"{name} p={p} r={r} G0 {g0}")
                    if not _affine_growth(g1, spans):
                        bad.append(f"{name} p={p} r={r} G1 {g1}")
    for line in lines:
        print("   ", line)
    record(5, not bad, "locking and growth of trace dimensions" + (f"; violated: {', '.join(bad)}" if bad else ""))


def test_criterion_06_non_as_characterization():
    g = catalog("distorted_rectangle")
    rep = classify_as_g1(g.frame(0))
    assert rep.beta_right_zero and rep.p_alpha == 2
    bad, seen = [], []
    for p in (4, 5):
        r = 1
        for lev, (g0, g1) in enumerate(_trace_dims("distorted_rectangle", p, r)):
            n = num_spans_for_level(lev)
            # beta^R = 0: G0 = S^p_r, G1 = S^{p - p_alpha}_r
            want = (SplineSpace1D(p, r, n).dim, SplineSpace1D(p - rep.p_alpha, r, n).dim)
            seen.append(f"p={p} n={n}: {(g0, g1)}")
            if (g0, g1) != want:
                bad.append(f"p={p} n={n}: got {(g0, g1)}, expected {want}")
    record(6, not bad, "distorted_rectangle trace dims " + ("; ".join(bad) if bad else "; ".join(seen)))


def test_criterion_07_convergence_matrix():
    start = time.time()
    bad, lines = [], []
    for name in CONVERGENCE_GEOMETRIES:
        problem = manufactured_problem(catalog(name))
        for p in (3, 4, 5):
            for r in range(1, p):
                st = run_study(problem, p, r, study_levels(p, r))
                slope = float(st.eoc_h2[-1])
                drop = 1 - st.h2[-1] / st.h2[-2]
                optimal = slope >= p - 1 - SLOPE_TOL
                lines.append(f"{name} p={p} r={r}: EOC {slope:.2f}, decrease {drop:.1%} -> {st.verdict}")
                if r <= p - 2 and not optimal:
                    bad.append(f"{name} p={p} r={r} EOC {slope:.2f}")
                if r == p - 1 and (optimal or drop >= LOCKING_DECREASE):
                    bad.append(f"{name} p={p} r={r} decrease {drop:.1%}")
    for line in lines:
        print("   ", line)
    record(7, not bad, f"{len(lines)} studies in {time.time() - start:.0f}s" + (f"; violated: {', '.join(bad)}" if bad else ""))


def test_criterion_08_non_as_suboptimal():
    problem = manufactured_problem(catalog("distorted_rectangle"))
    st = run_study(problem, 4, 1, 6)
    slope = float(st.eoc_h2[-1])
    ok = 1.5 <= slope <= 2.75 and slope < 3 - SLOPE_TOL
    verdicts = [run_study(problem, 3, r, 5).verdict for r in (1, 2)]
    ok = ok and verdicts == ["LOCKED", "LOCKED"]
    record(8, ok, f"p=4 r=1 final H2 EOC {slope:.2f}; p=3 r=1,2: {', '.join(verdicts)}")


def _gap_ratios(name, p, r, levels=3):
    out = []
    for lev in range(levels):
        b = build_c1_basis(build_c0_space(catalog(name), p, r, num_spans_for_level(lev)))
        out.append(b.spectrum.gap_ratio)
    return out


def test_criterion_09_eigenvalue_separation():
    lsh = _gap_ratios("lshape", 4, 1)
    dis = _gap_ratios("distorted_rectangle", 4, 1)
    ok = min(lsh) >= 1e10 and all(a > b for a, b in zip(dis, dis[1:]))
    record(
        9,
        ok,
        "lshape gaps " + ", ".join(f"{x:.1e}" for x in lsh) + "; distorted gaps " + ", ".join(f"{x:.1e}" for x in dis),
    )


def test_criterion_10_tiny_oracles():
    b = build_c1_basis(build_c0_space(catalog("two_patch_identity"), 2, 1, 1, bc="none"))
    # merged C1 space on [-1, 1] x [0, 1]: quadratics on two spans in x (4), one span in y (3)
    dim_ok = b.dim == 4 * 3
    s = build_c0_space(catalog("two_patch_identity"), 2, 1, 2, bc="none")
    oracle = identity_c1_oracle(s)
    dev = float(np.abs(assemble_c1_matrix(s) - oracle).max())
    record(10, dim_ok and dev <= 1e-8, f"dim V1 = {b.dim} (expected 12); C1 vs oversampled oracle {dev:.1e}")


if __name__ == "__main__":
    tests = [obj for key, obj in sorted(globals().items()) if key.startswith("test_criterion_")]
    for test in tests:
        try:
            test()
        except AssertionError:
            pass
    sys.exit(0 if all("PASS" in line for line in RESULTS.values()) and len(RESULTS) == len(tests) else 1)
