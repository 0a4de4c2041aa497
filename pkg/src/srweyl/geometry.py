"""Polynomial frames, Lie brackets, structure functions, flags and truncation."""

from __future__ import annotations

import random
from dataclasses import dataclass, field
from fractions import Fraction
from functools import cached_property
from typing import Sequence

from .algebra import (
    NotDivisible,
    RationalPoly,
    RankDeficient,
    det_bareiss,
    evaluate_scalar,
    format_poly,
    phase_ring,
    rank_exact,
    solve_linear,
    substitute,
)


class NonPolynomialStructure(ValueError):
    pass


class NotBracketGenerating(ValueError):
    def __init__(self, message: str, flag: Sequence[int] = ()):
        super().__init__(message)
        self.flag = tuple(flag)


class NotPrivileged(ValueError):
    pass


class InvalidStructure(ValueError):
    pass


@dataclass(frozen=True)
class VectorField:
    components: tuple[RationalPoly, ...]

    @property
    def ring(self):
        return self.components[0].ring

    @property
    def dim(self) -> int:
        return len(self.components)

    def apply(self, f: RationalPoly) -> RationalPoly:
        """Derivative of f along the field (x-variables only)."""
        R = f.ring
        out = R.zero
        for b, comp in enumerate(self.components):
            if comp:
                df = f.diff(R.gens[b])
                if df:
                    out += comp * df
        return out

    def __add__(self, other: "VectorField") -> "VectorField":
        return VectorField(tuple(a + b for a, b in zip(self.components, other.components)))

    def scale(self, p) -> "VectorField":
        return VectorField(tuple(p * a for a in self.components))

    def is_zero(self) -> bool:
        return not any(self.components)

    def __str__(self) -> str:
        parts = [
            f"({format_poly(c)})*d{b + 1}" for b, c in enumerate(self.components) if c
        ]
        return " + ".join(parts) if parts else "0"


def lie_bracket(V: VectorField, W: VectorField) -> VectorField:
    if V.dim != W.dim:
        raise ValueError("vector fields of different dimension")
    return VectorField(tuple(V.apply(Wa) - W.apply(Va) for Va, Wa in zip(V.components, W.components)))


@dataclass(frozen=True)
class StructureFunctions:
    """c[k][i][j] with [X_i, X_j] = sum_k c[k][i][j] X_k (0-based)."""

    n: int
    table: tuple[tuple[tuple[RationalPoly, ...], ...], ...]

    def __call__(self, k: int, i: int, j: int) -> RationalPoly:
        return self.table[k][i][j]

    def nonzero(self):
        for k in range(self.n):
            for i in range(self.n):
                for j in range(i + 1, self.n):
                    if self.table[k][i][j]:
                        yield k, i, j, self.table[k][i][j]


@dataclass(frozen=True)
class SubRiemannianStructure:
    """Frame X_1..X_n on R^n; the first m fields are orthonormal for the metric."""

    n: int
    m: int
    frame: tuple[VectorField, ...]
    weights: tuple[int, ...] | None = None
    base_point: tuple[Fraction, ...] | None = None
    name: str = "unnamed"
    _cache: dict = field(default_factory=dict, compare=False, repr=False, hash=False)

    def __post_init__(self):
        if not 1 <= self.m <= self.n:
            raise InvalidStructure(f"rank m={self.m} must satisfy 1 <= m <= n={self.n}")
        if len(self.frame) != self.n or any(X.dim != self.n for X in self.frame):
            raise InvalidStructure("frame must consist of n fields with n components")
        if self.base_point is None:
            object.__setattr__(self, "base_point", tuple(Fraction(0) for _ in range(self.n)))
        elif len(self.base_point) != self.n:
            raise InvalidStructure("base point has wrong dimension")
        if self.weights is not None:
            w = tuple(int(v) for v in self.weights)
            object.__setattr__(self, "weights", w)
            if len(w) != self.n:
                raise InvalidStructure("weights must have n entries")
            if any(v != 1 for v in w[: self.m]):
                raise InvalidStructure("the first m weights must equal 1")
            if any(a > b for a, b in zip(w, w[1:])):
                raise InvalidStructure("weights must be nondecreasing")
        if evaluate_scalar(det_bareiss(self.frame_matrix()), self.point_values()) == 0:
            raise InvalidStructure("frame is singular at the base point")

    @property
    def ring(self):
        return phase_ring(self.n, self.m)

    def x(self, i: int) -> RationalPoly:
        return self.ring.gens[i]

    def u(self, i: int) -> RationalPoly:
        return self.ring.gens[self.n + i]

    def a(self, i: int) -> RationalPoly:
        """Jet symbol: a(0) is the value, a(i) the i-th frame derivative."""
        return self.ring.gens[2 * self.n + i]

    def u_index(self, i: int) -> int:
        return self.n + i

    def point_values(self, q: Sequence | None = None) -> dict[int, Fraction]:
        q = self.base_point if q is None else q
        return {i: Fraction(v) for i, v in enumerate(q)}

    def frame_matrix(self):
        """Matrix whose k-th column is X_k."""
        return [[self.frame[k].components[a] for k in range(self.n)] for a in range(self.n)]

    @property
    def structure(self) -> StructureFunctions:
        if "c" not in self._cache:
            self._cache["c"] = _compute_structure_functions(self)
        return self._cache["c"]

    def n_s(self, s: int) -> int:
        return sum(1 for w in self.weights if w <= s)

    @property
    def step(self) -> int:
        return max(self.weights)


def _compute_structure_functions(S: SubRiemannianStructure) -> StructureFunctions:
    R = S.ring
    n = S.n
    F = S.frame_matrix()
    table = [[[R.zero] * n for _ in range(n)] for _ in range(n)]
    for i in range(n):
        for j in range(i + 1, n):
            br = lie_bracket(S.frame[i], S.frame[j])
            if br.is_zero():
                continue
            try:
                sol = solve_linear(F, list(br.components))
            except RankDeficient as exc:
                raise InvalidStructure("frame is not a frame over the function field") from exc
            for k, rf in enumerate(sol):
                try:
                    p = rf.as_poly()
                except NotDivisible:
                    raise NonPolynomialStructure(
                        f"c^{k + 1}_{i + 1}{j + 1} = {rf} is not polynomial"
                    ) from None
                table[k][i][j] = p
                table[k][j][i] = -p
    return StructureFunctions(n, tuple(tuple(tuple(r) for r in t) for t in table))


def structure_functions(S: SubRiemannianStructure) -> StructureFunctions:
    return S.structure


def reconstruct_bracket(S: SubRiemannianStructure, c: StructureFunctions, i: int, j: int) -> VectorField:
    R = S.ring
    out = VectorField(tuple(R.zero for _ in range(S.n)))
    for k in range(S.n):
        if c(k, i, j):
            out = out + S.frame[k].scale(c(k, i, j))
    return out


# -- flags -----------------------------------------------------------------


def _eval_fields(fields: Sequence[VectorField], vals: dict[int, Fraction]):
    return [[evaluate_scalar(comp, vals) for comp in X.components] for X in fields]


def bracket_levels(S: SubRiemannianStructure, max_step: int | None = None) -> list[list[VectorField]]:
    """Fields of bracket length 1, 2, ... generated from the first m frame fields."""
    max_step = max_step or 2 * S.n
    key = ("levels", max_step)
    if key in S._cache:
        return S._cache[key]
    gens = list(S.frame[: S.m])
    levels = [gens]
    seen = {X.components for X in gens}
    for _ in range(max_step - 1):
        new = []
        for X in gens:
            for V in levels[-1]:
                B = lie_bracket(X, V)
                neg = tuple(-c for c in B.components)
                if B.is_zero() or B.components in seen or neg in seen:
                    continue
                seen.add(B.components)
                new.append(B)
        if not new:
            break
        levels.append(new)
    S._cache[key] = levels
    return levels


def growth_vector(S: SubRiemannianStructure, q: Sequence | None = None) -> tuple[int, ...]:
    """Flag dimensions at q; raises NotBracketGenerating if n is never reached."""
    vals = S.point_values(q)
    rows: list[list[Fraction]] = []
    dims: list[int] = []
    for level in bracket_levels(S):
        rows.extend(_eval_fields(level, vals))
        dims.append(rank_exact(rows))
        if dims[-1] == S.n:
            return tuple(dims)
    raise NotBracketGenerating(f"flag stabilizes at {dims} below n={S.n}", dims)


def infer_weights(S: SubRiemannianStructure) -> tuple[int, ...]:
    """w_k = first flag level whose span at q0 contains X_k(q0)."""
    vals = S.point_values()
    frame_vals = _eval_fields(S.frame, vals)
    rows: list[list[Fraction]] = []
    weights = [0] * S.n
    for s, level in enumerate(bracket_levels(S), start=1):
        rows.extend(_eval_fields(level, vals))
        r = rank_exact(rows)
        for k in range(S.n):
            if not weights[k] and rank_exact(rows + [frame_vals[k]]) == r:
                weights[k] = s
        if all(weights):
            break
    if not all(weights):
        raise NotBracketGenerating("frame fields outside the generated flag")
    return tuple(weights)


def is_regular_point(S: SubRiemannianStructure, q: Sequence | None = None,
                     samples: int = 8, seed: int = 0) -> bool:
    """Flag dimensions at q agree with those at seeded random rational points."""
    try:
        ref = growth_vector(S, q)
    except NotBracketGenerating:
        return False
    rng = random.Random(seed)
    for _ in range(samples):
        p = [Fraction(rng.randint(-20, 20), rng.randint(1, 7)) for _ in range(S.n)]
        try:
            if growth_vector(S, p) != ref:
                return False
        except NotBracketGenerating:
            return False
    return True


# -- privileged coordinates --------------------------------------------------


@dataclass
class PrivilegedDiagnostics:
    ok: bool
    offending: list[str]
    growth: tuple[int, ...] | None
    expected: tuple[int, ...]

    def __bool__(self) -> bool:
        return self.ok


def _centered_frame(S: SubRiemannianStructure) -> list[VectorField]:
    if not any(S.base_point):
        return list(S.frame)
    R = S.ring
    shift = {i: R.gens[i] + R(R.domain(v.numerator, v.denominator)) for i, v in enumerate(S.base_point)}
    return [VectorField(tuple(substitute(c, shift) for c in X.components)) for X in S.frame]


def _monomial_order(mon, weights, n) -> int:
    return sum(mon[b] * weights[b] for b in range(n))


def verify_privileged(S: SubRiemannianStructure) -> PrivilegedDiagnostics:
    if S.weights is None:
        raise ValueError("weights are required")
    w = S.weights
    offending = []
    for i, X in enumerate(_centered_frame(S)):
        for j, comp in enumerate(X.components):
            for mon, coeff in comp.items():
                if _monomial_order(mon, w, S.n) < w[j] - w[i]:
                    offending.append(f"X{i + 1}: {coeff}*x^{mon[:S.n]} d{j + 1}")
    expected = tuple(S.n_s(s) for s in range(1, S.step + 1))
    try:
        growth = growth_vector(S)
    except NotBracketGenerating:
        growth = None
    ok = not offending and growth == expected
    return PrivilegedDiagnostics(ok, offending, growth, expected)


def nilpotent_truncate(S: SubRiemannianStructure) -> SubRiemannianStructure:
    """Keep in X_i only the terms of weighted order exactly -w_i (at q0 = 0)."""
    if S.weights is None or not verify_privileged(S):
        raise NotPrivileged(f"{S.name} is not given in privileged coordinates")
    R = S.ring
    w = S.weights
    frame = []
    for i, X in enumerate(_centered_frame(S)):
        comps = []
        for j, comp in enumerate(X.components):
            terms = {mon: c for mon, c in comp.items() if _monomial_order(mon, w, S.n) == w[j] - w[i]}
            comps.append(R.from_dict(terms) if terms else R.zero)
        frame.append(VectorField(tuple(comps)))
    return SubRiemannianStructure(S.n, S.m, tuple(frame), w, None, S.name + "-nilpotent")


def is_graded(S: SubRiemannianStructure, c: StructureFunctions) -> bool:
    """c^k_ij are constants vanishing unless w_k = w_i + w_j."""
    w = S.weights
    for k, i, j, p in c.nonzero():
        if not p.is_ground or w[k] != w[i] + w[j]:
            return False
    return True
