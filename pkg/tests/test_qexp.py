import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from qazb.errors import ConvergenceError, NormalityError, PreconditionError, RayError
from qazb.lattice import GroupElement, embed
from qazb.linalg import fro, kron_funcalc
from qazb.qexp import (
    QExp,
    SolverOptions,
    circular_variance,
    commutator_residual,
    constant_qexp,
    dilate,
    from_table,
    func_eq_residual,
    gauge_distance,
    qexp_eval,
    solve,
)

CHEAP = dict(starts=2, max_sweeps=3, samples=16)


def _random_qexp(p, seed):
    r = np.random.default_rng(seed)
    return QExp(p, np.exp(1j * r.uniform(-np.pi, np.pi, (p.N, p.M))))


def test_eval_rules(p62):
    F = _random_qexp(p62, 0)
    assert qexp_eval(F, 0) == 1
    for g in p62.elements():
        assert F(embed(g, p62)) == F.value(g)
    # between lattice points the value is unimodular
    z = p62.q ** 2 * p62.lam ** 0.3
    assert abs(abs(F(z)) - 1) < 1e-14
    with pytest.raises(RayError):
        F(np.exp(0.2j))
    assert abs(abs(qexp_eval(F, np.exp(0.2j), tol=None)) - 1) < 1e-14


def test_eval_interpolation_is_linear_in_phase(p62):
    # per ray linear in log-modulus: midpoint phase is the mean of the neighbours
    table = np.ones((6, 2), dtype=complex)
    table[1] = [np.exp(0.2j), np.exp(0.6j)]
    F = QExp(p62, table)
    mid = F(p62.q * p62.lam ** -0.5)
    assert abs(mid - np.exp(0.4j)) < 1e-14


def test_eval_cache_takes_precedence(p62):
    F = _random_qexp(p62, 1)
    z = p62.q ** 3 * p62.lam ** 0.25
    key = (3, int(round(0.25 * 1e6)))
    F.cache[key] = 1j
    assert F(z) == 1j
    # lattice points ignore the cache
    F.cache[(3, 0)] = -1
    assert F(p62.q ** 3) == F.value(GroupElement(3, 0))


def test_from_table_and_constant(p62):
    F = from_table(p62, 2 * np.ones((6, 2)))
    assert np.allclose(F.table, 1) and F.degenerate
    with pytest.raises(PreconditionError):
        from_table(p62, np.zeros((6, 2)))
    with pytest.raises(PreconditionError):
        QExp(p62, np.ones((6, 3)))
    assert constant_qexp(p62).degenerate
    assert not _random_qexp(p62, 2).degenerate


@settings(max_examples=40, deadline=None)
@given(st.lists(st.floats(-np.pi, np.pi), min_size=1, max_size=20))
def test_circular_variance_bounds(angles):
    v = circular_variance(np.exp(1j * np.array(angles)))
    assert -1e-12 <= v <= 1 + 1e-12
    assert circular_variance(np.exp(1j * np.full(5, angles[0]))) < 1e-12


def test_sr_pair_measurements(pair62, sr62):
    # independent oracle for the q^2 relation
    S, R = np.kron(pair62.b, np.eye(12)), np.kron(pair62.a, pair62.b)
    q2 = pair62.lattice.q ** 2
    ref = np.linalg.norm(R @ S - q2 * S @ R) / np.linalg.norm(R @ S)
    assert sr62.qsq_residual == pytest.approx(ref, rel=1e-12)
    T = S + R
    ref_n = np.linalg.norm(T @ T.conj().T - T.conj().T @ T) / np.linalg.norm(T) ** 2
    assert sr62.sum_normality == pytest.approx(ref_n, rel=1e-10)


def test_commutator_matches_dense_oracle(pair62, sr62):
    p = pair62.lattice
    F = _random_qexp(p, 7)
    f = lambda z: qexp_eval(F, z, tol=None)
    FS = np.kron(pair62.b_dec.reconstruct(f(pair62.b_dec.eigenvalues)), np.eye(p.size))
    FR = kron_funcalc(pair62.a_dec, pair62.b_dec, f)
    T = sr62.S + sr62.R
    P = FS @ FR
    dense = fro(P @ T - T @ P) / fro(T)
    assert commutator_residual(F, sr62) == pytest.approx(dense, rel=1e-10)


def test_constant_solves_commutator_trivially(p62, sr62):
    assert commutator_residual(constant_qexp(p62), sr62) < 1e-14


def test_func_eq_residual_strict_raises(p62, sr62):
    with pytest.raises(NormalityError):
        func_eq_residual(constant_qexp(p62), sr62)
    res = func_eq_residual(constant_qexp(p62), sr62, surrogate=True)
    assert res.degenerate and res.equation_residual < 1e-12
    assert res.surrogate_departure > 0


def test_solver_deterministic_and_monotone(p62):
    opts = SolverOptions(seed=4, **CHEAP)
    Fa, Fb = solve(p62, opts), solve(p62, opts)
    assert np.array_equal(Fa.table, Fb.table)
    assert Fa.cache == Fb.cache
    trace = Fa.report["trace"]
    assert all(b <= a + 1e-15 for a, b in zip(trace, trace[1:]))
    assert Fa.report["options"]["seed"] == 4
    assert len(Fa.report["starts"]) == 2


def test_solver_escapes_constant_init(p62):
    F = solve(p62, SolverOptions(seed=0, init="constant", **CHEAP))
    assert all(s["escaped"] for s in F.report["starts"])
    assert not F.degenerate


def test_solver_threshold_raises_with_best(p62):
    with pytest.raises(ConvergenceError) as ei:
        solve(p62, SolverOptions(seed=0, threshold=1e-12, **CHEAP))
    assert isinstance(ei.value.best, QExp)


def test_solver_rejects_collapse(p62):
    # a floor no table can reach forces every start to be rejected
    with pytest.raises(ConvergenceError, match="collapsed"):
        solve(p62, SolverOptions(seed=0, variance_floor=1.1, **CHEAP))


def test_gauge_fixed(F1):
    shell = F1.table[:, 0]
    m = shell.mean()
    assert abs(m.imag) < 1e-12 and m.real > 0


def test_dilate_identity_and_inverse(F1):
    p = F1.lattice
    e = GroupElement(0, 0)
    assert np.allclose(dilate(F1, e).table, F1.table, atol=1e-15)
    mu = GroupElement(2, 0)
    back = dilate(dilate(F1, mu), GroupElement(-2, 0))
    assert np.allclose(back.table, F1.table, atol=1e-15)
    D = dilate(F1, GroupElement(1, 1))
    assert len(D.report["edge"]) == p.N
    for g in p.elements():
        if p.in_window(g.j + 1):
            assert D.value(g) == pytest.approx(F1.value(GroupElement(g.k + 1, g.j + 1)))


def test_gauge_distance_recovers_dilation(F1):
    mu = GroupElement(3, 0)
    d, found = gauge_distance(F1, dilate(F1, mu))
    assert d < 1e-14 and found == mu


def test_solved_pair_within_calibration(F1, F2, sr62, cal, p62):
    for F in (F1, F2):
        assert not F.degenerate
        assert F.report["residuals"]["commutator_residual"] <= cal.gate("qexp_commutator", p62)
    d, _ = gauge_distance(F1, F2)
    assert d <= cal.gate("qexp_gauge", p62)


@pytest.mark.parametrize("k", [1, 2, 3])
def test_gauge_family_residuals(F1, sr62, k):
    base = func_eq_residual(F1, sr62, surrogate=True)
    moved = func_eq_residual(dilate(F1, GroupElement(k, 0)), sr62, surrogate=True)
    assert moved.commutator_residual <= 2 * base.commutator_residual
    assert moved.equation_residual <= 2 * base.equation_residual
