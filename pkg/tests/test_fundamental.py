from __future__ import annotations

import dataclasses

import pytest
import sympy as sp

from srweyl.algebra import InconsistentSystem, RationalFunction, cramer, evaluate, weighted_part
from srweyl.fundamental import (
    NeedMoreLayers,
    assemble_orbital_map,
    build_layers,
    epsilon_table,
    flow_invariance_test,
    ki_certificate,
    layer_degree_audit,
    nilpotent_layers,
    polynomial_jets,
    polynomiality_test,
    q_matrix,
    residual_36,
    residual_37,
    solve_psi,
    verify_all_layers,
    weyl_verdict,
)
from srweyl.hamiltonian import AlphaJet, hamiltonian
from srweyl.specfile import StructureSpec, catalog

HEIS = catalog("heisenberg")
ENGEL = catalog("engel")
SYM = AlphaJet.symbols()
ZERO = AlphaJet.numeric(1, (0, 0))

R = HEIS.ring
x1, x2, x3, u1, u2, u3, a0, a1, a2 = R.gens


def to_sympy(p):
    return sp.sympify(str(p.as_expr())) if p else sp.Integer(0)


def test_q_matrix_examples():
    assert q_matrix(HEIS, HEIS.structure) == [[-u2], [u1]]
    E = ENGEL.ring.gens
    assert q_matrix(ENGEL, ENGEL.structure) == [[-E[5], ENGEL.ring.zero], [E[4], ENGEL.ring.zero]]
    flat = StructureSpec("flat", 3, 2, (("1", "0", "0"), ("0", "1", "0"), ("0", "0", "1"))).to_structure()
    assert all(not v for row in q_matrix(flat, flat.structure) for v in row)


def test_heisenberg_first_layer():
    L = build_layers(HEIS, HEIS.structure, SYM, 1)
    assert L.A[0] == [[-u2], [u1]]
    assert L.d[0] == [a2 * u1 * u2 - a1 * u2**2, a1 * u1 * u2 - a2 * u1**2]


@pytest.mark.parametrize("name", ["heisenberg", "engel", "cartan235", "free35"])
def test_zero_gradient_gives_zero_d(name):
    S = catalog(name)
    jet = AlphaJet.numeric(2, (0,) * S.m)
    L = build_layers(S, S.structure, jet, 3)
    assert all(not v for layer in L.d for v in layer)
    P = solve_psi(nilpotent_layers(S, S.structure, jet, 2 * (S.n - S.m)))
    assert all(not f.num for f in P.components)


def test_heisenberg_nilpotent_equals_general():
    a = build_layers(HEIS, HEIS.structure, SYM, 3)
    b = nilpotent_layers(HEIS, HEIS.structure, SYM, 3)
    assert a.A == b.A and a.d == b.d


def test_engel_degree_bound_and_homogeneity():
    L = build_layers(ENGEL, ENGEL.structure, SYM, 4)
    for s, deg in layer_degree_audit(L):
        assert deg is None or deg <= 2 * s
    Lh = nilpotent_layers(ENGEL, ENGEL.structure, SYM, 4)
    w = list(ENGEL.weights) * 2 + [0, 0, 0]
    for s, layer in enumerate(Lh.d, start=1):
        for p in layer:
            assert weighted_part(p, w, 2 * s) == p


def test_top_weighted_part_of_d_is_nilpotent_d():
    spec = StructureSpec("hpert", 3, 2, (("1", "0", "-x2/2 + x1^2"), ("0", "1", "x1/2 + x1*x2"), ("0", "0", "1")),
                         (1, 1, 2))
    S = spec.to_structure()
    k = 3
    L = build_layers(S, S.structure, SYM, k)
    Lh = nilpotent_layers(HEIS, HEIS.structure, SYM, k)
    w = [1, 1, 2, 1, 1, 2, 0, 0, 0]
    at_q0 = {0: 0, 1: 0, 2: 0}
    for s in range(k):
        for j in range(2):
            d0 = evaluate(L.d[s][j], at_q0)
            assert (layer_degree_audit(L)[s][1] or 0) <= 2 * (s + 1)
            assert weighted_part(d0, w, 2 * (s + 1)) == Lh.d[s][j]


def test_heisenberg_psi_matches_sympy_solve():
    P = solve_psi(nilpotent_layers(HEIS, HEIS.structure, SYM, 1))
    assert P.components == [RationalFunction.poly(a1 * u2 - a2 * u1)]
    assert P.delta_reduced == 1
    U1, U2, A1, A2, psi = sp.symbols("u1 u2 a1 a2 psi")
    sol = sp.solve([-U2 * psi - (A2 * U1 * U2 - A1 * U2**2), U1 * psi - (A1 * U1 * U2 - A2 * U1**2)], psi)
    assert sp.expand(sol[psi] - to_sympy(P.components[0].as_poly())) == 0
    assert polynomiality_test(P)
    assert verify_all_layers(P)


def test_heisenberg_two_layers_force_zero_jet():
    P = solve_psi(nilpotent_layers(HEIS, HEIS.structure, SYM, 2))
    assert P.jets.gradient_forced_zero()
    assert all(not f.num for f in P.components)


def test_numeric_jet_inconsistency_detected():
    with pytest.raises(InconsistentSystem):
        solve_psi(nilpotent_layers(HEIS, HEIS.structure, AlphaJet.numeric(1, (1, 0)), 2))


def test_need_more_layers():
    S = catalog("growth2356")
    with pytest.raises(NeedMoreLayers):
        solve_psi(nilpotent_layers(S, S.structure, SYM, 1))


def test_engel_brute_force_oracle():
    S = ENGEL
    L = nilpotent_layers(S, S.structure, SYM, 2)
    P = solve_psi(L)
    M, b = L.stacked()
    p3, p4 = sp.symbols("p3 p4")
    eqs = [to_sympy(M[r][0]) * p3 + to_sympy(M[r][1]) * p4 - to_sympy(b[r]) for r in range(len(M))]
    sol = sp.solve(eqs[:1] + eqs[2:3], [p3, p4], dict=True)[0]
    for k, sym in ((2, p3), (3, p4)):
        assert sp.simplify(sol[sym] - to_sympy(P.component(k).num) / to_sympy(P.component(k).den)) == 0
    assert not polynomiality_test(P)
    restricted = polynomial_jets(P)
    g = S.ring.gens
    assert restricted.component(2).as_poly() == g[9] * g[5]
    assert restricted.component(3).as_poly() == 2 * g[9] * g[6]


def test_solution_independent_of_witness():
    L = nilpotent_layers(ENGEL, ENGEL.structure, SYM, 2)
    P = solve_psi(L)
    M, b = L.stacked()
    other = [1, 2]
    assert other != P.witness[0]
    nums, den = cramer(M, b, other)
    for k in range(2):
        assert RationalFunction.make(nums[k], den) == P.components[k]


def test_synthetic_non_polynomial():
    P = solve_psi(nilpotent_layers(HEIS, HEIS.structure, SYM, 1))
    fake = dataclasses.replace(P, components=[RationalFunction.make(u1, u2)])
    assert not polynomiality_test(fake)
    zero = dataclasses.replace(P, components=[RationalFunction.poly(R.zero)])
    assert polynomiality_test(zero)


def test_heisenberg_certificate():
    P = solve_psi(nilpotent_layers(HEIS, HEIS.structure, SYM, 1))
    eps = epsilon_table(P)
    assert eps == {(2, 0): -a2, (2, 1): a1}
    cert = ki_certificate(P, HEIS, HEIS.structure)
    assert cert.K[(0, 1)] == a1 and cert.K[(1, 1)] == a2
    assert cert.k1_layer_one == [a1, a2]
    assert cert.k1_telescoped == [-a1, -a2]
    assert cert.recursion_defects == {(0, 2): 2 * a1, (1, 2): 2 * a2}
    assert cert.forced_zero and cert.verdict == "WeylRigid"


def test_zero_jet_certificate_trivial():
    P = solve_psi(nilpotent_layers(ENGEL, ENGEL.structure, AlphaJet.numeric(1, (0, 0)), 2))
    cert = ki_certificate(P, ENGEL, ENGEL.structure)
    assert all(not v for v in cert.K.values())
    assert all(not v for v in cert.recursion_defects.values())


def test_engel_restricted_certificate():
    P = polynomial_jets(solve_psi(nilpotent_layers(ENGEL, ENGEL.structure, SYM, 2)))
    cert = ki_certificate(P, ENGEL, ENGEL.structure)
    g = ENGEL.ring.gens
    assert cert.K[(0, 1)] == g[9] and cert.K[(0, 2)] == 2 * g[9]
    assert cert.recursion_defects[(0, 3)] == 3 * g[9]
    assert cert.ladder == (2, 3, 4)
    assert cert.forced_zero


def test_propagation_identities_heisenberg():
    P = solve_psi(nilpotent_layers(HEIS, HEIS.structure, SYM, 1))
    assert residual_36(P, HEIS.structure) == [0, 0]
    # off the certified locus the propagation identity fails by 2 alpha^i u_i u_3
    assert residual_37(P, HEIS.structure)[2] == 2 * (a1 * u1 + a2 * u2) * u3


def test_flow_invariance():
    c = HEIS.structure
    assert flow_invariance_test(HEIS, c, u3)
    assert not flow_invariance_test(HEIS, c, u1)
    assert flow_invariance_test(HEIS, c, hamiltonian(HEIS))


def test_orbital_map():
    P = solve_psi(nilpotent_layers(HEIS, HEIS.structure, SYM, 1))
    phi = assemble_orbital_map(P, SYM)
    alpha_hat = a0 + a1 * x1 + a2 * x2
    assert phi[0] == RationalFunction.poly(alpha_hat * u1)
    assert phi[1] == RationalFunction.poly(alpha_hat * u2)
    assert phi[2] == RationalFunction.poly(a1 * u2 - a2 * u1 + alpha_hat * u3)
    const = solve_psi(nilpotent_layers(HEIS, HEIS.structure, AlphaJet.numeric(5, (0, 0)), 1))
    assert assemble_orbital_map(const, AlphaJet.numeric(5, (0, 0))) == [
        RationalFunction.poly(5 * u) for u in (u1, u2, u3)
    ]


@pytest.mark.parametrize("name", ["heisenberg", "engel", "cartan235", "free35", "free36", "growth2356"])
def test_verdict_catalog(name):
    rep = weyl_verdict(catalog(name))
    assert rep.verdict == "WeylRigid"
    assert rep.route == "polynomial-certificate"
    assert rep.certificate.forced_zero


def test_verdict_not_applicable():
    bad = StructureSpec("bad", 2, 1, (("1", "0"), ("0", "1+x1^2"))).to_structure()
    assert weyl_verdict(bad).verdict == "NotApplicable"
    assert weyl_verdict(catalog("martinet")).verdict == "NotApplicable"
