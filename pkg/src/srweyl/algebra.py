"""Exact arithmetic over QQ: polynomials, rational functions and linear algebra.

Polynomials are sympy ``PolyElement`` objects living in a graded-lex ring.
Everything here is exact; floats never enter this module.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from functools import lru_cache
from typing import Iterable, Sequence

from sympy import QQ
from sympy.polys.orderings import grlex
from sympy.polys.polyerrors import ExactQuotientFailed
from sympy.polys.rings import PolyElement, PolyRing, ring as _ring

RationalPoly = PolyElement
PolyMatrix = list  # list of rows, each a list of RationalPoly


class DivisionByZeroPoly(ZeroDivisionError):
    pass


class NotDivisible(ArithmeticError):
    pass


class RankDeficient(ValueError):
    pass


class InconsistentSystem(ValueError):
    def __init__(self, message: str, rows: Sequence[int] = ()):
        super().__init__(message)
        self.rows = list(rows)


class NotSkewEven(ValueError):
    pass


@lru_cache(maxsize=None)
def poly_ring(names: tuple[str, ...]) -> PolyRing:
    R, *_ = _ring(",".join(names), QQ, grlex)
    return R


@lru_cache(maxsize=None)
def phase_ring(n: int, m: int) -> PolyRing:
    """Ring in x1..xn, u1..un and the conformal jet symbols a0, a1..am."""
    names = (
        [f"x{i}" for i in range(1, n + 1)]
        + [f"u{i}" for i in range(1, n + 1)]
        + ["a0"]
        + [f"a{i}" for i in range(1, m + 1)]
    )
    return poly_ring(tuple(names))


def to_fraction(c) -> Fraction:
    if isinstance(c, Fraction):
        return c
    if isinstance(c, int):
        return Fraction(c)
    return Fraction(int(c.numerator), int(c.denominator))


def to_domain(R: PolyRing, c):
    c = to_fraction(c)
    return R.domain(c.numerator, c.denominator)


# -- polynomials -----------------------------------------------------------


def monic(p: RationalPoly) -> RationalPoly:
    return p if not p else p.monic()


def gcd_poly(p: RationalPoly, q: RationalPoly) -> RationalPoly:
    """Monic greatest common divisor; ``gcd(0, 0) == 0``."""
    if not p and not q:
        return p.ring.zero
    return monic(p.gcd(q))


def gcd_many(polys: Iterable[RationalPoly]) -> RationalPoly:
    g = None
    for p in polys:
        g = p if g is None else gcd_poly(g, p)
        if g is not None and g.is_ground and g:
            return g.ring.one
    return monic(g)


def divide_exact(p: RationalPoly, q: RationalPoly) -> RationalPoly:
    if not q:
        raise DivisionByZeroPoly("division by the zero polynomial")
    try:
        return p.exquo(q)
    except ExactQuotientFailed:
        raise NotDivisible(f"{q} does not divide {p}") from None


def divides(q: RationalPoly, p: RationalPoly) -> bool:
    try:
        divide_exact(p, q)
    except NotDivisible:
        return False
    return True


def weighted_degree(p: RationalPoly, weights: Sequence[int]) -> int | None:
    """Max of sum(e_i * w_i) over the monomials of p; None for p == 0."""
    if not p:
        return None
    return max(sum(e * w for e, w in zip(mon, weights)) for mon in p.keys())


def is_weighted_homogeneous(p: RationalPoly, weights: Sequence[int], degree: int) -> bool:
    return all(sum(e * w for e, w in zip(mon, weights)) == degree for mon in p.keys())


def weighted_part(p: RationalPoly, weights: Sequence[int], degree: int) -> RationalPoly:
    R = p.ring
    terms = {
        mon: c for mon, c in p.items() if sum(e * w for e, w in zip(mon, weights)) == degree
    }
    return R.from_dict(terms) if terms else R.zero


def evaluate(p: RationalPoly, values: dict[int, Fraction]) -> RationalPoly:
    """Substitute ``values`` (generator index -> rational) and return a poly."""
    R = p.ring
    out: dict = {}
    for mon, c in p.items():
        coeff = to_fraction(c)
        new = list(mon)
        for i, v in values.items():
            e = mon[i]
            if e:
                coeff *= Fraction(v) ** e
                new[i] = 0
        if coeff:
            key = tuple(new)
            out[key] = out.get(key, Fraction(0)) + coeff
    return R.from_dict({k: to_domain(R, v) for k, v in out.items() if v}) if out else R.zero


def evaluate_scalar(p: RationalPoly, values: dict[int, Fraction]) -> Fraction:
    q = evaluate(p, values)
    if not q.is_ground:
        raise ValueError(f"{q} is not constant after substitution")
    return to_fraction(q.LC) if q else Fraction(0)


def substitute(p: RationalPoly, mapping: dict[int, RationalPoly]) -> RationalPoly:
    """Replace generators by polynomials (same ring)."""
    if not mapping:
        return p
    R = p.ring
    return p.compose([(R.gens[i], v) for i, v in mapping.items()])


def format_poly(p: RationalPoly) -> str:
    return str(p.as_expr()) if p else "0"


# -- rational functions -----------------------------------------------------


@dataclass(frozen=True)
class RationalFunction:
    """num/den in lowest terms with a monic (grlex) denominator."""

    num: RationalPoly
    den: RationalPoly

    @classmethod
    def make(cls, num: RationalPoly, den: RationalPoly) -> "RationalFunction":
        if not den:
            raise DivisionByZeroPoly("zero denominator")
        if not num:
            return cls(num.ring.zero, num.ring.one)
        g = gcd_poly(num, den)
        if not g.is_ground:
            num, den = num.exquo(g), den.exquo(g)
        lc = den.LC
        return cls(num.quo_ground(lc), den.quo_ground(lc))

    @classmethod
    def poly(cls, p: RationalPoly) -> "RationalFunction":
        return cls(p, p.ring.one)

    @property
    def is_polynomial(self) -> bool:
        return self.den.is_ground

    def as_poly(self) -> RationalPoly:
        if not self.is_polynomial:
            raise NotDivisible(f"{self} is not a polynomial")
        return self.num.quo_ground(self.den.LC)

    def __add__(self, other):
        other = _as_rf(other, self)
        return RationalFunction.make(self.num * other.den + other.num * self.den, self.den * other.den)

    __radd__ = __add__

    def __neg__(self):
        return RationalFunction(-self.num, self.den)

    def __sub__(self, other):
        return self + (-_as_rf(other, self))

    def __rsub__(self, other):
        return _as_rf(other, self) - self

    def __mul__(self, other):
        other = _as_rf(other, self)
        return RationalFunction.make(self.num * other.num, self.den * other.den)

    __rmul__ = __mul__

    def __truediv__(self, other):
        other = _as_rf(other, self)
        return RationalFunction.make(self.num * other.den, self.den * other.num)

    def __eq__(self, other):
        if not isinstance(other, RationalFunction):
            other = _as_rf(other, self)
        return self.num * other.den == other.num * self.den

    def __hash__(self):
        return hash((self.num, self.den))

    def __str__(self):
        if self.is_polynomial:
            return format_poly(self.as_poly())
        return f"({format_poly(self.num)})/({format_poly(self.den)})"


def _as_rf(x, like: RationalFunction) -> RationalFunction:
    if isinstance(x, RationalFunction):
        return x
    R = like.num.ring
    if isinstance(x, PolyElement):
        return RationalFunction.poly(x)
    return RationalFunction.poly(R(to_domain(R, x)))


# -- matrices over the polynomial ring --------------------------------------


def det_bareiss(M: Sequence[Sequence[RationalPoly]]) -> RationalPoly:
    """Determinant by fraction-free (Bareiss) elimination."""
    n = len(M)
    if n == 0:
        raise ValueError("empty matrix")
    R = M[0][0].ring
    A = [list(row) for row in M]
    sign = 1
    prev = R.one
    for k in range(n - 1):
        if not A[k][k]:
            for i in range(k + 1, n):
                if A[i][k]:
                    A[k], A[i] = A[i], A[k]
                    sign = -sign
                    break
            else:
                return R.zero
        akk = A[k][k]
        for i in range(k + 1, n):
            aik = A[i][k]
            row_i, row_k = A[i], A[k]
            for j in range(k + 1, n):
                row_i[j] = (akk * row_i[j] - aik * row_k[j]).exquo(prev)
            row_i[k] = R.zero
        prev = akk
    return A[n - 1][n - 1] if sign > 0 else -A[n - 1][n - 1]


def _echelon(M: Sequence[Sequence[RationalPoly]]):
    """Fraction-free row echelon; returns (rank, pivot rows, pivot cols)."""
    rows = len(M)
    cols = len(M[0]) if rows else 0
    if not rows or not cols:
        return 0, [], []
    R = M[0][0].ring
    A = [list(r) for r in M]
    order = list(range(rows))
    prev = R.one
    rank = 0
    pivcols: list[int] = []
    for col in range(cols):
        piv = next((i for i in range(rank, rows) if A[i][col]), None)
        if piv is None:
            continue
        A[rank], A[piv] = A[piv], A[rank]
        order[rank], order[piv] = order[piv], order[rank]
        p = A[rank][col]
        for i in range(rank + 1, rows):
            a = A[i][col]
            for j in range(col + 1, cols):
                A[i][j] = (p * A[i][j] - a * A[rank][j]).exquo(prev)
            A[i][col] = R.zero
        prev = p
        pivcols.append(col)
        rank += 1
        if rank == rows:
            break
    return rank, order[:rank], pivcols


def submatrix(M, rows: Sequence[int], cols: Sequence[int]):
    return [[M[r][c] for c in cols] for r in rows]


def rank_and_minor(M: Sequence[Sequence[RationalPoly]], size: int):
    """Symbolic rank and the index sets of one nonzero ``size`` x ``size`` minor.

    The witness is ``(rows, cols)`` (0-based, sorted) or None when the rank is
    below ``size``.
    """
    if M and size > min(len(M), len(M[0])):
        raise ValueError("minor size exceeds matrix dimensions")
    rank, prow, pcol = _echelon(M)
    if rank < size:
        return rank, None
    return rank, (sorted(prow[:size]), sorted(pcol[:size]))


def cramer(M, b, rows: Sequence[int]):
    """Numerators and denominator of the Cramer solution on ``rows``."""
    cols = range(len(M[0]))
    A = submatrix(M, rows, cols)
    delta = det_bareiss(A)
    nums = []
    for l in cols:
        Al = [[b[r] if c == l else M[r][c] for c in cols] for r in rows]
        nums.append(det_bareiss(Al))
    return nums, delta


def solve_linear(M, b) -> list[RationalFunction]:
    """Unique solution over the fraction field, re-substituted into every row."""
    ncols = len(M[0])
    rank, witness = rank_and_minor(M, ncols)
    if witness is None:
        raise RankDeficient(f"rank {rank} < {ncols} columns")
    nums, delta = cramer(M, b, witness[0])
    bad = [
        r for r in range(len(M))
        if sum((M[r][l] * nums[l] for l in range(ncols)), delta.ring.zero) != b[r] * delta
    ]
    if bad:
        raise InconsistentSystem(f"augmented rank exceeds rank (rows {bad})", bad)
    return [RationalFunction.make(p, delta) for p in nums]


def matmul(A, B):
    R = A[0][0].ring
    return [
        [sum((A[i][k] * B[k][j] for k in range(len(B))), R.zero) for j in range(len(B[0]))]
        for i in range(len(A))
    ]


def is_skew(M) -> bool:
    n = len(M)
    return all(len(r) == n for r in M) and all(
        M[i][j] == -M[j][i] for i in range(n) for j in range(i, n)
    )


def pfaffian(M) -> RationalPoly:
    """Pfaffian of a skew matrix of even size, by memoised row expansion."""
    n = len(M)
    if n % 2 or not is_skew(M):
        raise NotSkewEven("pfaffian needs a skew-symmetric matrix of even size")
    if n == 0:
        raise NotSkewEven("empty matrix")
    R = M[0][0].ring
    memo: dict[tuple[int, ...], RationalPoly] = {(): R.one}

    def pf(idx: tuple[int, ...]) -> RationalPoly:
        if idx in memo:
            return memo[idx]
        i, rest = idx[0], idx[1:]
        total = R.zero
        for pos, j in enumerate(rest):
            a = M[i][j]
            if not a:
                continue
            sub = pf(rest[:pos] + rest[pos + 1:])
            if sub:
                total = total + a * sub if pos % 2 == 0 else total - a * sub
        memo[idx] = total
        return total

    return pf(tuple(range(n)))


# -- exact linear algebra over QQ -------------------------------------------


def rref(M: Sequence[Sequence]) -> tuple[list[list[Fraction]], list[int]]:
    A = [[to_fraction(x) for x in row] for row in M]
    rows = len(A)
    cols = len(A[0]) if rows else 0
    pivots: list[int] = []
    r = 0
    for c in range(cols):
        piv = next((i for i in range(r, rows) if A[i][c]), None)
        if piv is None:
            continue
        A[r], A[piv] = A[piv], A[r]
        inv = 1 / A[r][c]
        A[r] = [v * inv for v in A[r]]
        for i in range(rows):
            if i != r and A[i][c]:
                f = A[i][c]
                A[i] = [a - f * b for a, b in zip(A[i], A[r])]
        pivots.append(c)
        r += 1
        if r == rows:
            break
    return A, pivots


def _numeric_entries(M):
    out = []
    for row in M:
        new = []
        for x in row:
            if isinstance(x, PolyElement):
                if not x.is_ground:
                    raise ValueError("kernel_basis needs a constant matrix")
                x = x.LC if x else 0
            new.append(to_fraction(x))
        out.append(new)
    return out


def kernel_basis(M) -> list[list[Fraction]]:
    """Basis of the right kernel of a constant matrix (exact)."""
    A = _numeric_entries(M)
    if not A:
        return []
    cols = len(A[0])
    R, pivots = rref(A)
    free = [c for c in range(cols) if c not in pivots]
    basis = []
    for f in free:
        v = [Fraction(0)] * cols
        v[f] = Fraction(1)
        for r, p in enumerate(pivots):
            v[p] = -R[r][f]
        basis.append(v)
    return basis


def rank_exact(M) -> int:
    A = _numeric_entries(M)
    if not A or not A[0]:
        return 0
    return len(rref(A)[1])
