from __future__ import annotations

from fractions import Fraction

import pytest
import sympy as sp

from srweyl.geometry import (
    NonPolynomialStructure,
    NotBracketGenerating,
    NotPrivileged,
    SubRiemannianStructure,
    VectorField,
    growth_vector,
    infer_weights,
    is_graded,
    is_regular_point,
    lie_bracket,
    nilpotent_truncate,
    reconstruct_bracket,
    structure_functions,
    verify_privileged,
)
from srweyl.specfile import StructureSpec, catalog, catalog_names

from helpers import gens

CATALOG = catalog_names()


def sympy_bracket(V, W, xs):
    return [sp.expand(sum(V[b] * sp.diff(W[a], xs[b]) - W[b] * sp.diff(V[a], xs[b]) for b in range(len(xs))))
            for a in range(len(xs))]


def test_coordinate_fields_commute():
    R, X, _, _ = gens()
    d1 = VectorField((R.one, R.zero, R.zero))
    d2 = VectorField((R.zero, R.one, R.zero))
    assert lie_bracket(d1, d2).is_zero()


def test_heisenberg_bracket():
    S = catalog("heisenberg")
    br = lie_bracket(S.frame[0], S.frame[1])
    assert br.components == (S.ring.zero, S.ring.zero, S.ring.one)


def test_engel_bracket_against_sympy():
    S = catalog("engel")
    xs = sp.symbols("x1:5")
    X1 = [1, 0, 0, 0]
    X2 = [0, 1, xs[0], xs[0] ** 2 / 2]
    oracle = sympy_bracket(X1, X2, xs)
    br = lie_bracket(S.frame[0], S.frame[1])
    assert [sp.sympify(str(c.as_expr())) for c in br.components] == oracle
    assert oracle == [0, 0, 1, xs[0]]


def test_structure_functions_examples():
    c = structure_functions(catalog("heisenberg"))
    assert dict(((k, i, j), str(p)) for k, i, j, p in c.nonzero()) == {(2, 0, 1): "1"}
    assert c(2, 1, 0) == -c(2, 0, 1)
    e = structure_functions(catalog("engel"))
    assert e(2, 0, 1) == 1 and e(3, 0, 2) == 1 and not e(3, 1, 2)
    assert sum(1 for _ in e.nonzero()) == 2


def test_commuting_frame_has_zero_structure():
    R, _, _, _ = gens(3, 2)
    frame = tuple(VectorField(tuple(R.one if a == b else R.zero for a in range(3))) for b in range(3))
    S = SubRiemannianStructure(3, 2, frame, name="flat")
    assert not list(structure_functions(S).nonzero())


@pytest.mark.parametrize("name", CATALOG)
def test_reconstruction_and_antisymmetry(name):
    S = catalog(name)
    c = S.structure
    for i in range(S.n):
        for j in range(S.n):
            for k in range(S.n):
                assert c(k, i, j) == -c(k, j, i)
            if i < j:
                assert reconstruct_bracket(S, c, i, j) == lie_bracket(S.frame[i], S.frame[j])


def test_non_polynomial_structure_rejected():
    spec = StructureSpec("bad", 2, 1, (("1", "0"), ("0", "1+x1^2")))
    S = spec.to_structure()
    with pytest.raises(NonPolynomialStructure):
        S.structure


@pytest.mark.parametrize("name,growth", [
    ("heisenberg", (2, 3)), ("engel", (2, 3, 4)), ("cartan235", (2, 3, 5)),
    ("free35", (3, 5)), ("free36", (3, 6)), ("growth2356", (2, 3, 5, 6)), ("martinet", (2, 2, 3)),
])
def test_growth_vectors(name, growth):
    assert growth_vector(catalog(name)) == growth


def test_martinet_growth_away_from_singular_line():
    S = catalog("martinet")
    assert growth_vector(S, [0, 1, 0]) == (2, 3)
    assert not is_regular_point(S)


def test_not_bracket_generating():
    spec = StructureSpec("integrable", 3, 2, (("1", "0", "0"), ("0", "1", "0"), ("0", "0", "1")))
    with pytest.raises(NotBracketGenerating):
        growth_vector(spec.to_structure())


def test_verify_privileged_examples():
    assert verify_privileged(catalog("engel"))
    assert verify_privileged(catalog("heisenberg"))
    S = catalog("heisenberg")
    wrong = SubRiemannianStructure(3, 2, S.frame, (1, 1, 1), name="h111")
    diag = verify_privileged(wrong)
    assert not diag and diag.growth == (2, 3) and diag.expected == (3,)


@pytest.mark.parametrize("name", ["heisenberg", "engel", "cartan235", "free35", "free36", "growth2356"])
def test_truncation_fixed_point_and_graded(name):
    S = catalog(name)
    T = nilpotent_truncate(S)
    assert T.frame == S.frame
    assert is_graded(T, T.structure)
    assert growth_vector(T) == growth_vector(S)
    assert infer_weights(S) == S.weights


def test_truncation_removes_higher_order_term():
    spec = StructureSpec("hpert", 3, 2, (("1", "0", "-x2/2 + x1^2"), ("0", "1", "x1/2"), ("0", "0", "1")),
                         (1, 1, 2))
    S = spec.to_structure()
    assert verify_privileged(S)
    assert nilpotent_truncate(S).frame == catalog("heisenberg").frame


def test_truncation_requires_privileged():
    spec = StructureSpec("hlow", 3, 2, (("1", "0", "-x2/2 + 1"), ("0", "1", "x1/2"), ("0", "0", "1")),
                         (1, 1, 2))
    with pytest.raises(NotPrivileged):
        nilpotent_truncate(spec.to_structure())


def test_base_point_shift():
    spec = StructureSpec("hshift", 3, 2, (("1", "0", "-(x2-1)/2"), ("0", "1", "(x1-2)/2"), ("0", "0", "1")),
                         (1, 1, 2), (Fraction(2), Fraction(1), Fraction(0)))
    S = spec.to_structure()
    assert verify_privileged(S)
    assert nilpotent_truncate(S).frame == catalog("heisenberg").frame
