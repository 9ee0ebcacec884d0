"""Acceptance criteria, one test and one summary line per criterion.

Exact-layer tolerances are fixed numbers; approximation-layer gates are
``2 x`` the committed calibration (``qazb/calibration.json``).  Every line
printed in the ``acceptance criteria`` summary section reads
``PASS|FAIL  <criterion>  <measured> vs <tolerance>``.
"""
import time

import numpy as np

from conftest import ACCEPTANCE_LINES, SESSION_START, random_normal
from qazb.calibration import calibration_cd_pairs
from qazb.lattice import GroupElement, chi, chi_matrix, embed, make_lattice, mul
from qazb.linalg import fro, z_inverse, z_transform
from qazb.multunitary import delta_checks, pentagon_residual
from qazb.qexp import SolverOptions, constant_qexp, gauge_distance, solve
from qazb.representations import (
    build_V,
    decompose,
    extract_c,
    label_match_rate,
    make_cd_pair,
    random_unitary_rep,
    regular_cd_pair,
    rep_residual,
)
from qazb.schrodinger import (
    canonical_pair,
    char_unitary,
    dual_action,
    fourier_chi,
    weyl_decompose,
    weyl_reconstruct,
)

SCALE = 2.0  # approximation-layer gates are 2x calibrated


def record(name, ok, measured, tolerance):
    line = f"{'PASS' if ok else 'FAIL'}  {name}  {measured} vs {tolerance}"
    ACCEPTANCE_LINES.append(line)
    print(line)
    assert ok, line


def _fmt(d):
    return ", ".join(f"{k}={v:.3g}" if isinstance(v, float) else f"{k}={v}"
                     for k, v in d.items())


# ---------------------------------------------------------------- exact layer


def test_bicharacter_suite():
    t0 = time.perf_counter()
    p = make_lattice(6, 3)
    els = p.elements()
    sym = mult = unim = 0.0
    for g in els:
        for h in els:
            x = chi(g, h, p)
            sym = max(sym, abs(x - chi(h, g, p)))
            unim = max(unim, abs(abs(x) - 1))
            for g2 in els:
                gg, wrapped = mul(g, g2, p)
                if not wrapped:
                    mult = max(mult, abs(chi(gg, h, p) - x * chi(g2, h, p)))
                    mult = max(mult, abs(chi(h, gg, p) - chi(h, g, p) * chi(h, g2, p)))
    # nondegeneracy: chi(g, .) = 1 only for g = e, i.e. the pairing matrix is invertible
    C = chi_matrix(p)
    nondeg = fro(C.conj().T @ C / p.size - np.eye(p.size))
    e = GroupElement(0, 0)
    detects = all(np.max(np.abs(C[p.index(g)] - 1)) > 1e-3 for g in els if g != e)
    wall = time.perf_counter() - t0
    ok = max(sym, mult, unim, nondeg) <= 1e-12 and detects and wall < 5
    record("bicharacter suite N=6 M=3 (54 elements)", ok,
           _fmt(dict(symmetry=sym, multiplicativity=mult, unimodularity=unim,
                     nondegeneracy=nondeg, wall_s=wall)), "1e-12 each, < 5 s")


def test_canonical_pair_relations():
    t0 = time.perf_counter()
    vals = {}
    for M in (2, 3, 4):
        p = make_lattice(6, M)
        F = fourier_chi(p)
        pair = canonical_pair(p)
        sa = np.sort_complex(np.round(np.linalg.eigvals(pair.a), 12))
        sb = np.sort_complex(np.round(np.linalg.eigvals(pair.b), 12))
        vals[M] = dict(unitarity=fro(F.conj().T @ F - np.eye(p.size)),
                       phase=pair.certificate.phase_residual,
                       modulus=pair.certificate.modulus_residual,
                       spectrum=float(np.max(np.abs(sa - sb))))
    wall = time.perf_counter() - t0
    ok = all(v["unitarity"] <= 1e-12 and v["phase"] <= 1e-10 and v["modulus"] <= 1e-10
             and v["spectrum"] <= 1e-10 for v in vals.values())
    worst = {k: max(v[k] for v in vals.values()) for k in vals[2]}
    record("fourier_chi unitarity / phase / modulus / Sp b = Sp a, N=6 M=2,3,4", ok,
           _fmt({**worst, "wall_s": wall}), "1e-12 / 1e-10 / 1e-10 / 1e-10")


def test_z_transform_roundtrip():
    rng = np.random.default_rng(0)
    worst = 0.0
    for _ in range(50):
        T = random_normal(8, rng, scale=2.0)
        worst = max(worst, fro(z_inverse(z_transform(T)) - T) / fro(T))
    record("z-transform round trip, 50 random 8x8 normals", worst <= 1e-10,
           f"{worst:.3g}", "1e-10")


def test_dual_action():
    p = make_lattice(6, 2)
    pair = canonical_pair(p)
    fix_b = theta_u = law = 0.0
    X = np.random.default_rng(1).standard_normal((p.size, p.size))
    for g in p.elements():
        fix_b = max(fix_b, fro(dual_action(g, pair.b, pair) - pair.b) / fro(pair.b))
        for t in p.elements():
            U = char_unitary(t, pair)
            theta_u = max(theta_u, fro(dual_action(g, U, pair) - chi(g, t, p) * U))
            gt, wrapped = mul(g, t, p)
            if not wrapped:
                lhs = dual_action(g, dual_action(t, X, pair), pair)
                law = max(law, fro(lhs - dual_action(gt, X, pair)) / fro(X))
    ok = fix_b <= 1e-12 and theta_u <= 1e-10 and law <= 1e-10
    record("dual action: theta(b)=b, theta(U_t)=chi U_t, group law", ok,
           _fmt(dict(fix_b=fix_b, char_unitaries=theta_u, group_law=law)),
           "1e-12 / 1e-10 / 1e-10")


def test_weyl_reconstruction():
    pair = canonical_pair(make_lattice(6, 2))
    n = pair.dim
    worst = 0.0
    for i in range(n):
        for j in range(n):
            E = np.zeros((n, n), dtype=complex)
            E[i, j] = 1
            worst = max(worst, fro(weyl_reconstruct(weyl_decompose(E, pair), pair) - E))
    record("Weyl decomposition reconstruction, all matrix units N=6 M=2", worst <= 1e-10,
           f"{worst:.3g}", "1e-10")


def test_sr_pair_identity(sr62):
    record("S,R pair: ||RS - q^2 SR|| / ||RS||, N=6 M=2", sr62.qsq_residual <= 1e-10,
           f"{sr62.qsq_residual:.3g}", "1e-10")


def test_extract_c_exactness(pair62, F1, p62):
    t0 = time.perf_counter()
    rng = np.random.default_rng(2)
    els = p62.elements()
    exact = 0
    worst = 0.0
    for _ in range(20):
        K = int(rng.integers(1, 5))
        gs = [els[i] for i in rng.integers(len(els), size=K)]
        c = np.diag([embed(g, p62) for g in gs])
        rep = build_V(make_cd_pair(c, np.zeros((K, K)), p62), pair62, F1)
        cres = extract_c(rep, pair62)
        found = np.sort_complex(np.round(cres.c_dec.eigenvalues, 8))
        want = np.sort_complex(np.round(np.diag(c), 8))
        err = float(np.max(np.abs(found - want)))
        worst = max(worst, err)
        exact += sorted(cres.labels) == sorted(gs) and err <= 1e-6
    wall = time.perf_counter() - t0
    record("extract_c synthesis-inversion, 20 lattice-diagonal c (d=0)",
           exact == 20 and wall < 30,
           _fmt(dict(exact=f"{exact}/20", worst_eigenvalue_error=worst, wall_s=wall)),
           "20/20 under 1e-6, < 30 s")


# ---------------------------------------------------------------- approximation layer


def test_qexp_solve(F1, F2, p62, cal):
    comm = max(F1.report["residuals"]["commutator_residual"],
               F2.report["residuals"]["commutator_residual"])
    tau1 = cal.gate("qexp_commutator", p62, SCALE)
    gdist, mu = gauge_distance(F1, F2)
    tau_g = cal.gate("qexp_gauge", p62, SCALE)
    escaped = solve(p62, SolverOptions(seed=0, init="constant", starts=2, max_sweeps=3))
    trivial_rejected = (not F1.degenerate and not F2.degenerate
                        and constant_qexp(p62).degenerate and not escaped.degenerate)
    ok = comm <= tau1 and gdist <= tau_g and trivial_rejected
    record("qexp solve: commutator, two-seed gauge agreement, trivial rejected", ok,
           _fmt(dict(commutator=comm, gauge=gdist, mu=tuple(mu),
                     trivial_rejected=trivial_rejected)),
           f"commutator <= {tau1:.3g}, gauge <= {tau_g:.3g}")


def test_pentagon(W62, W0, p62, cal):
    unit = W62.report["unitarity"]
    pent = pentagon_residual(W62)
    base = pentagon_residual(W0)
    gate = cal.gate("pentagon", p62, SCALE)
    ok = unit <= 1e-9 and pent <= gate and pent * 5 <= base
    record("W unitarity; pentagon <= 2x calibrated and 5x below F=1 baseline", ok,
           _fmt(dict(unitarity=unit, pentagon=pent, baseline=base,
                     baseline_ratio=base / pent if pent else float("inf"))),
           f"1e-9; {gate:.3g}; ratio >= 5")


def test_comultiplication(W62, W0, pair62, p62, cal):
    da, db = delta_checks(W62, pair62)
    da0, db0 = delta_checks(W0, pair62)
    ga = cal.gate("delta_a", p62, SCALE)
    gb = cal.gate("delta_b", p62, SCALE)
    ok = da <= ga and db <= gb and da < da0 and db < db0
    record("Delta(a)=a(x)a and Delta(b)=a(x)b+b(x)I, below gates and F=1 baseline", ok,
           _fmt(dict(delta_a=da, baseline_a=da0, delta_b=db, baseline_b=db0)),
           f"a <= {ga:.3g} and < baseline; b <= {gb:.3g} and < baseline")


def _round_trip(cd, pair, W, F, p, cal, reduce_c):
    rep = build_V(cd, pair, F)
    out, rpt = decompose(rep, W, pair, F)
    c_match = label_match_rate(out.c_dec.eigenvalues, cd.c_dec.eigenvalues, p, reduce=reduce_c)
    d_match = label_match_rate(out.d_dec.eigenvalues, cd.d_dec.eigenvalues, p)
    keys = ("rep_residual", "left_twist", "right_twist", "d_covariance")
    ratios = {k: rpt[k] / cal.gate(f"cd_{k}", p, SCALE) for k in keys}
    ok = c_match == 1 and d_match >= 0.9 and max(ratios.values()) <= 1
    return ok, c_match, d_match, ratios, rpt


def test_representation_round_trip(pair62, W62, F1, p62, cal):
    results = []
    for cd in calibration_cd_pairs(pair62, seed=101, count=10):
        results.append(_round_trip(cd, pair62, W62, F1, p62, cal, reduce_c=False))
    reg = _round_trip(regular_cd_pair(pair62), pair62, W62, F1, p62, cal, reduce_c=True)
    n_ok = sum(r[0] for r in results)
    worst_ratio = max(max(r[3].values()) for r in results)
    ok = n_ok == 10 and reg[0]
    record("representation round trip: 10 random pairs and the regular pair", ok,
           _fmt(dict(random_ok=f"{n_ok}/10", random_worst_gate_ratio=worst_ratio,
                     regular_c_match=reg[1], regular_d_match=reg[2],
                     regular_worst_gate_ratio=max(reg[3].values()))),
           "c exact, d match >= 0.9, residuals <= 2x calibrated")


def test_negative_controls(pair62, W62, F1, p62, cal):
    gate = cal.gate("cd_rep_residual", p62, SCALE)
    worst = np.inf
    for s in range(3):
        neg = random_unitary_rep(3, pair62, np.random.default_rng(1000 + s))
        worst = min(worst, rep_residual(neg, W62))
    ratio = worst / gate
    cd = calibration_cd_pairs(pair62, seed=202, count=1)[0]
    _, rpt = decompose(build_V(cd, pair62, F1), W62, pair62, F1)
    _, rpt_reg = decompose(build_V(regular_cd_pair(pair62), pair62, F1), W62, pair62, F1)
    ok = ratio >= 10 and rpt["self_dual"] and rpt_reg["self_dual"]
    record("negative controls: Haar V fails by >= 10x gate; self-duality certificate", ok,
           _fmt(dict(haar_residual=float(worst), gate=gate, ratio=float(ratio),
                     self_dual_random=bool(rpt["self_dual"]),
                     self_dual_regular=bool(rpt_reg["self_dual"]))),
           "ratio >= 10, both self-dual")


def test_suite_wall_time():
    wall = time.perf_counter() - SESSION_START[0]
    record("whole suite wall time (N=6 M=2 dense, M=3,4 exact extensions included)",
           wall <= 300, f"{wall:.1f} s", "300 s")
