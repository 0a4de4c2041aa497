from __future__ import annotations

import random
from fractions import Fraction

import numpy as np
import pytest
import sympy as sp

from srweyl.abnormal import (
    AbnormalTrajectory,
    NoCharacteristic,
    certify_minimal_order,
    characteristic_direction,
    integrate_abnormal,
    kernel_at,
    minimal_order_verdict,
    restricted_form,
    sample_W,
    sigma_value,
    strict_normality_test,
    tangent_basis,
    trajectory_verdict,
    weak_stratification,
    wedge_locus,
)
from srweyl.algebra import det_bareiss, pfaffian
from srweyl.specfile import StructureSpec, catalog

HEIS = catalog("heisenberg")
ENGEL = catalog("engel")


def entries(form):
    return {(a, b): str(v.as_expr()) for a, row in enumerate(form.matrix) for b, v in enumerate(row) if v and a < b}


def test_heisenberg_form():
    F = restricted_form(HEIS)
    assert F.size == 4
    assert entries(F) == {(0, 1): "-u3", (2, 3): "-1"}


def test_engel_form():
    F = restricted_form(ENGEL)
    assert entries(F) == {(0, 1): "-u3", (0, 2): "-u4", (2, 4): "-1", (3, 5): "-1"}


def test_commuting_frame_form():
    flat = StructureSpec("flat", 3, 1, (("1", "0", "0"), ("0", "1", "0"), ("0", "0", "1"))).to_structure()
    F = restricted_form(flat)
    assert set(entries(F).values()) == {"-1"}


@pytest.mark.parametrize("name", ["heisenberg", "engel", "cartan235", "free35", "free36", "growth2356"])
def test_form_skew_and_free_of_horizontal_fibres(name):
    S = catalog(name)
    F = restricted_form(S)
    M = [list(r) for r in F.matrix]
    for a in range(F.size):
        for b in range(F.size):
            assert M[a][b] == -M[b][a]
            for k in range(S.m):
                assert M[a][b].degree(S.n + k) <= 0
    if F.size % 2 == 0:
        assert pfaffian(M) ** 2 == det_bareiss(M)


def test_locus_examples():
    h = wedge_locus(HEIS)
    assert str(h.locus.as_expr()) in ("u3", "-u3")
    e = wedge_locus(ENGEL)
    assert str(e.locus.as_expr()) in ("u3", "-u3")
    assert e.locus_dimension == 5
    f = wedge_locus(catalog("free35"))
    assert f.all_of_dperp and f.locus_dimension == 7


def test_heisenberg_kernel_off_locus():
    info = kernel_at(wedge_locus(HEIS), [0, 0, 0, 1])
    assert info.dim == 0 and not info.in_tilde and not info.in_W


def test_engel_kernel_on_locus():
    st = wedge_locus(ENGEL)
    info = kernel_at(st, [0, 0, 0, 0, 0, 1])
    assert info.dim == 2 and info.in_tilde and info.in_W
    assert info.restricted_basis == [[0, 1, 0, 0, 0, 0]]
    # oracle: kernel by sympy elimination
    M = sp.Matrix([[0, 0, -1, 0, 0], [0, 0, 0, 0, 0], [1, 0, 0, -1, 0], [0, 0, 1, 0, 0], [0, 0, 0, 0, 0]])
    full = sp.zeros(6, 6)
    full[0, 2], full[2, 0] = -1, 1
    full[2, 4], full[4, 2] = -1, 1
    full[3, 5], full[5, 3] = -1, 1
    assert len(full.nullspace()) == 2


def test_zero_section_excluded():
    st = wedge_locus(ENGEL)
    info = kernel_at(st, [1, 2, 3, 4, 0, 0])
    assert not info.in_tilde and not info.in_W
    with pytest.raises(NoCharacteristic):
        characteristic_direction(st, [1, 2, 3, 4, 0, 0])


def test_engel_characteristic_parallel_to_x2():
    st = wedge_locus(ENGEL)
    rng = random.Random(3)
    for _ in range(20):
        x = [Fraction(rng.randint(-9, 9), rng.randint(1, 5)) for _ in range(4)]
        c = Fraction(rng.randint(1, 9), rng.randint(1, 5))
        lam = x + [Fraction(0), c]
        d = characteristic_direction(st, lam)
        X2 = [0, 1, x[0], x[0] ** 2 / 2]
        assert all(d.projection[a] * X2[b] - d.projection[b] * X2[a] == 0 for a in range(4) for b in range(4))
        assert any(d.projection)
        for w in tangent_basis(st, lam):
            assert sigma_value(st, lam, d.vector, w) == 0


def test_heisenberg_has_no_characteristic():
    st = wedge_locus(HEIS)
    assert sample_W(st, 5) == []
    with pytest.raises(NoCharacteristic):
        characteristic_direction(st, [0, 0, 0, 0])


@pytest.mark.parametrize("name,even", [("heisenberg", True), ("engel", True), ("free35", False), ("cartan235", True)])
def test_kernel_dimension_parity(name, even):
    S = catalog(name)
    st = wedge_locus(S)
    rng = random.Random(11)
    N = 2 * S.n - S.m
    for _ in range(10):
        lam = [Fraction(rng.randint(-7, 7), rng.randint(1, 3)) for _ in range(N)]
        info = kernel_at(st, lam)
        if even:
            assert (info.dim == 0) == (not info.in_tilde)
        else:
            assert info.dim >= 1


def test_engel_abnormal_follows_x2_flow():
    st = wedge_locus(ENGEL)
    tr = integrate_abnormal(st, [Fraction(1, 2), 0, 0, 0, 0, 1], 1.0, 10)
    t = tr.times
    x1 = 0.5
    expected = np.stack([np.full_like(t, x1), t, x1 * t, x1**2 / 2 * t], axis=1)
    assert np.max(np.abs(tr.states[:, :4] - expected)) < 1e-8
    assert np.max(np.abs(tr.states[:, 4])) < 1e-10
    assert tr.in_W.all() and not tr.truncated


def test_reparametrization_same_point_set():
    st = wedge_locus(ENGEL)
    lam = [0, 0, 0, 0, 0, 1]
    slow = integrate_abnormal(st, lam, 2.0, 8, speed=1.0)
    fast = integrate_abnormal(st, lam, 1.0, 8, speed=2.0)
    assert np.allclose(slow.states, fast.states, atol=1e-10)


def test_minimal_order_verdicts():
    assert trajectory_verdict([True, True, False, True, True]) == "MinimalOrder"
    assert trajectory_verdict([True, False, False, True]) == "NotCertified"
    assert trajectory_verdict([True, True, False]) == "NotCertified"
    assert trajectory_verdict([True, True], truncated=True) == "NotCertified"
    bad = AbnormalTrajectory(np.arange(4.0), np.zeros((4, 6)), np.zeros(4), np.ones(4, bool),
                             np.array([True, False, False, True]), False, "synthetic", 1.0)
    rep = minimal_order_verdict([bad])
    assert rep.verdicts == ["NotCertified"] and rep.fraction == 0.0


def test_engel_and_cartan_minimal_order():
    for name in ("engel", "cartan235"):
        st = wedge_locus(catalog(name))
        pts = sample_W(st, 5, seed=4)
        assert len(pts) == 5
        rep, _ = certify_minimal_order(st, pts, 1.0, 5)
        assert rep.certified == 5


def test_weak_stratification():
    e = weak_stratification(wedge_locus(ENGEL), 1)
    assert e.strata[0].dimension == 5 and e.strata[0].one_dimensional
    assert e.strata[1].description == "empty at sampled points"
    f = weak_stratification(wedge_locus(catalog("free35")), 0)
    assert len(f.strata) == 1 and f.strata[0].description == "AllOfDperp"
    h = weak_stratification(wedge_locus(HEIS), 0)
    assert len(h.strata) == 1
    with pytest.raises(ValueError):
        weak_stratification(wedge_locus(HEIS), -1)


def test_strict_normality():
    h = strict_normality_test(HEIS, None, [0, 0, 0], [1.0, 0.4, -0.3], 1.0)
    assert h.strictly_normal and h.max_dim == 6
    e = strict_normality_test(ENGEL, None, [0, 0, 0, 0], [0, 1.0, 0, 0.5], 1.0)
    assert not e.strictly_normal and e.max_dim < 8
    g = strict_normality_test(ENGEL, None, [0, 0, 0, 0], [0.3, 1.0, 0.2, 0.5], 1.0)
    assert g.strictly_normal


def test_riemannian_always_strictly_normal():
    flat = StructureSpec("plane", 2, 2, (("1", "0"), ("0", "1"))).to_structure()
    res = strict_normality_test(flat, None, [0, 0], [1.0, 0.5], 1.0)
    assert res.strictly_normal and res.max_dim == 4


def test_strict_normality_rejects_zero_energy():
    with pytest.raises(ValueError):
        strict_normality_test(HEIS, None, [0, 0, 0], [0, 0, 1.0], 1.0)
