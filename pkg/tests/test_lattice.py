import cmath
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from qazb.errors import ParameterError, RayError
from qazb.lattice import (
    ZERO,
    GroupElement,
    bulk_indices,
    bulk_mask,
    chi,
    chi_matrix,
    chi_ray,
    chi_values,
    embed,
    group_label,
    lattice_distance,
    lattice_label,
    make_lattice,
    mul,
    ray_coordinates,
)

P63 = make_lattice(6, 3)


@pytest.mark.parametrize("N,M", [(5, 2), (4, 2), (7, 3), (6, 1), (6.5, 2)])
def test_make_lattice_rejects(N, M):
    with pytest.raises(ParameterError):
        make_lattice(N, M)


def test_lambda_frozen():
    # oracle: math.exp on the closed form, frozen
    assert P63.lam == pytest.approx(4.3971692402141525, rel=1e-15)
    assert make_lattice(6, 2).lam == pytest.approx(math.exp(2 * math.pi / math.sqrt(12)), rel=1e-15)


def test_chi_frozen_values():
    w = chi(GroupElement(0, 1), GroupElement(0, 1), P63)
    assert abs(w - cmath.exp(-2j * math.pi / 3)) < 1e-15
    assert abs(chi(GroupElement(1, 0), GroupElement(1, 0), P63) - P63.q) < 1e-15
    # half a modulus step against one full step
    z = chi_ray(P63.lam ** 0.5, GroupElement(0, 1), P63)
    assert abs(z - cmath.exp(-1j * math.pi / 3)) < 1e-14


def test_window_layout():
    assert (P63.jmin, P63.jmax) == (-1, 1)
    assert len(P63.elements()) == 18
    for i, g in enumerate(P63.elements()):
        assert P63.index(g) == i
        assert P63.element(i) == g
    assert np.allclose(P63.embedded(), [embed(g, P63) for g in P63.elements()])


def test_reduce_flags_wrap():
    g, wrapped = mul(GroupElement(1, 1), GroupElement(2, 1), P63)
    assert g == GroupElement(3, -1) and wrapped
    g, wrapped = mul(GroupElement(5, 1), GroupElement(2, -1), P63)
    assert g == GroupElement(1, 0) and not wrapped


def test_chi_matrix_matches_pointwise():
    els = P63.elements()
    direct = np.array([[chi(g, h, P63) for h in els] for g in els])
    assert np.max(np.abs(chi_matrix(P63) - direct)) < 1e-15


def test_chi_matrix_unitary_and_nondegenerate():
    C = chi_matrix(P63)
    n = P63.size
    assert np.linalg.norm(C.conj().T @ C / n - np.eye(n)) < 1e-12
    # every non-identity element is detected by some h
    for g in P63.elements():
        if g != GroupElement(0, 0):
            assert np.max(np.abs(C[P63.index(g)] - 1)) > 1e-3


ks = st.integers(-20, 20)


@settings(max_examples=200, deadline=None)
@given(ks, ks, ks, ks)
def test_chi_symmetric_unimodular(k1, j1, k2, j2):
    g, h = GroupElement(k1, j1), GroupElement(k2, j2)
    assert abs(chi(g, h, P63) - chi(h, g, P63)) < 1e-12
    assert abs(abs(chi(g, h, P63)) - 1) < 1e-12


@settings(max_examples=200, deadline=None)
@given(ks, st.integers(-1, 1), ks, st.integers(-1, 1), ks, st.integers(-1, 1))
def test_chi_multiplicative(k1, j1, k2, j2, k3, j3):
    g, g2, h = GroupElement(k1, j1), GroupElement(k2, j2), GroupElement(k3, j3)
    gg, wrapped = mul(g, g2, P63)
    if wrapped:
        return
    assert abs(chi(gg, h, P63) - chi(g, h, P63) * chi(g2, h, P63)) < 1e-12


@settings(max_examples=100, deadline=None)
@given(st.floats(-3, 3), st.floats(-3, 3), st.integers(0, 5), st.integers(0, 5))
def test_chi_values_bicharacter_on_rays(s1, s2, k1, k2):
    z1 = P63.q ** k1 * math.exp(s1)
    z2 = P63.q ** k2 * math.exp(s2)
    # multiplicative in the first slot for continuous moduli
    a = chi_values(z1 * z1, z2, P63)
    b = chi_values(z1, z2, P63) ** 2
    assert abs(a - b) < 1e-10
    assert abs(chi_values(z1, z2, P63) - chi_values(z2, z1, P63)) < 1e-12


def test_chi_values_zero_and_lattice():
    assert chi_values(0, 3.0, P63) == 1
    assert chi_values(P63.q, 0, P63) == 1
    for g in P63.elements():
        for h in P63.elements():
            assert abs(chi_values(embed(g, P63), embed(h, P63), P63) - chi(g, h, P63)) < 1e-12


def test_ray_coordinates():
    k, logmod, is_zero, err = ray_coordinates(np.array([P63.q ** 2 * 3.0, 0]), P63)
    assert k[0] == 2 and abs(logmod[0] - math.log(3)) < 1e-14
    assert list(is_zero) == [False, True]
    with pytest.raises(RayError):
        ray_coordinates(np.exp(0.3j), P63)
    k, _, _, err = ray_coordinates(np.exp(0.3j), P63, tol=None)
    assert k == 0 and abs(err - 0.3) < 1e-12


def test_labels_and_distance():
    z = embed(GroupElement(4, 3), P63)
    assert lattice_label(z, P63) == GroupElement(4, 3)
    assert group_label(z, P63) == GroupElement(4, 0)
    assert lattice_label(0, P63) is ZERO and group_label(1e-9, P63) is ZERO
    assert lattice_distance(z, P63) < 1e-14
    assert lattice_distance(0, P63) == 0
    assert lattice_distance(z * 1.01, P63) == pytest.approx(0.01 / 1.01, rel=1e-9)


@pytest.mark.parametrize("M,expected", [(2, [0]), (3, [0, 1]), (4, [-1, 0]), (5, [0, 1])])
def test_bulk_indices(M, expected):
    assert bulk_indices(make_lattice(6, M)) == expected


def test_bulk_indices_full_and_bad():
    assert bulk_indices(P63, 1.0) == [-1, 0, 1]
    for frac in (0, -0.1, 1.5):
        with pytest.raises(ParameterError):
            bulk_indices(P63, frac)


def test_bulk_mask():
    vals = np.array([embed(g, P63) for g in P63.elements()] + [0])
    mask = bulk_mask(vals, P63)
    js = [g.j for g in P63.elements()] + [None]
    assert [bool(m) for m in mask] == [j in (0, 1) for j in js]
