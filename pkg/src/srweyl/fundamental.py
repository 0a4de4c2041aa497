"""Layered fundamental algebraic system, its solution Psi and the rigidity certificate.

All quantities live in the phase ring, which also carries the jet symbols
a0, a1..am (value and first frame derivatives of the conformal factor).
Symbolic jets are handled as a linear subspace of admissible values: every
exact consistency requirement found along the way is a linear form in the
jet symbols and is recorded in a ``JetConstraints`` object.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction
from typing import Sequence

from .algebra import (
    InconsistentSystem,
    RationalFunction,
    RationalPoly,
    cramer,
    divides,
    format_poly,
    gcd_many,
    rank_and_minor,
    rref,
    substitute,
    to_domain,
    to_fraction,
    weighted_degree,
)
from .geometry import (
    NonPolynomialStructure,
    NotBracketGenerating,
    StructureFunctions,
    SubRiemannianStructure,
    infer_weights,
    is_regular_point,
    nilpotent_truncate,
    verify_privileged,
)
from .hamiltonian import AlphaJet, h1_derive


class NeedMoreLayers(ValueError):
    def __init__(self, k: int, rank: int):
        super().__init__(f"rank {rank} is not full with {k} layers")
        self.k = k
        self.rank = rank


class InternalInconsistency(AssertionError):
    """A proved identity failed; indicates a bug upstream."""


# -- jet constraints -----------------------------------------------------------


@dataclass(frozen=True)
class JetConstraints:
    """Admissible jets: the kernel of a set of linear forms in a0..am."""

    n: int
    m: int
    forms: tuple[RationalPoly, ...] = ()
    substitution: tuple[tuple[int, RationalPoly], ...] = ()

    @property
    def symbol_indices(self) -> list[int]:
        return list(range(2 * self.n, 2 * self.n + self.m + 1))

    @classmethod
    def free(cls, n: int, m: int) -> "JetConstraints":
        return cls(n, m)

    def with_forms(self, ring, new_forms: Sequence[RationalPoly]) -> "JetConstraints":
        forms = [f for f in list(self.forms) + list(new_forms) if f]
        if not forms:
            return JetConstraints(self.n, self.m)
        idx = self.symbol_indices
        rows = []
        for f in forms:
            row = [Fraction(0)] * len(idx)
            for mon, coeff in f.items():
                nz = [g for g, e in enumerate(mon) if e]
                if len(nz) != 1 or nz[0] not in idx or mon[nz[0]] != 1:
                    raise ValueError(f"{f} is not a linear form in the jet symbols")
                row[idx.index(nz[0])] += to_fraction(coeff)
            rows.append(row)
        red, pivots = rref(rows)
        subst = []
        for r, p in enumerate(pivots):
            expr = ring.zero
            for col, v in enumerate(red[r]):
                if col != p and v:
                    expr -= ring(to_domain(ring, v)) * ring.gens[idx[col]]
            subst.append((idx[p], expr))
        kept = tuple(
            sum((ring(to_domain(ring, v)) * ring.gens[idx[c]] for c, v in enumerate(red[r]) if v), ring.zero)
            for r in range(len(pivots))
        )
        return JetConstraints(self.n, self.m, kept, tuple(subst))

    def apply(self, p: RationalPoly) -> RationalPoly:
        return substitute(p, dict(self.substitution)) if self.substitution else p

    def apply_rf(self, f: RationalFunction) -> RationalFunction:
        return RationalFunction.make(self.apply(f.num), self.apply(f.den))

    def gradient_forced_zero(self) -> bool:
        """Every derivative a1..am is pinned to zero."""
        sub = dict(self.substitution)
        return all(i in sub and not sub[i] for i in self.symbol_indices[1:])

    def describe(self) -> list[str]:
        return [f"{format_poly(f)} = 0" for f in self.forms]


def jet_linear_forms(p: RationalPoly, n: int, m: int) -> list[RationalPoly]:
    """Split p = sum_mu (linear form in jet symbols) * mu over (x, u)-monomials mu.

    Raises InconsistentSystem if p has a part free of jet symbols.
    """
    R = p.ring
    lo, hi = 2 * n, 2 * n + m + 1
    groups: dict[tuple, dict] = {}
    for mon, coeff in p.items():
        jet = [g for g in range(lo, hi) if mon[g]]
        if not jet:
            raise InconsistentSystem(f"residual {format_poly(p)} has a part free of the jet")
        if len(jet) != 1 or mon[jet[0]] != 1:
            raise ValueError("residual is not linear in the jet symbols")
        key = tuple(e if g < lo else 0 for g, e in enumerate(mon))
        lin = [0] * len(mon)
        lin[jet[0]] = 1
        groups.setdefault(key, {})[tuple(lin)] = coeff
    return [R.from_dict(d) for _, d in sorted(groups.items())]


# -- layers --------------------------------------------------------------------


def q_full(S: SubRiemannianStructure, c: StructureFunctions) -> list[list[RationalPoly]]:
    """q[j][k] = sum_{i<m} c^k_{ij} u_i for all j, k."""
    R = S.ring
    return [
        [sum((c(k, i, j) * S.u(i) for i in range(S.m) if c(k, i, j)), R.zero) for k in range(S.n)]
        for j in range(S.n)
    ]


def q_matrix(S: SubRiemannianStructure, c: StructureFunctions) -> list[list[RationalPoly]]:
    q = q_full(S, c)
    return [[q[j][k] for k in range(S.m, S.n)] for j in range(S.m)]


@dataclass
class LayeredSystem:
    S: SubRiemannianStructure
    c: StructureFunctions
    alpha: AlphaJet
    A: list[list[list[RationalPoly]]]  # A[s][j][k - m]
    d: list[list[RationalPoly]]  # d[s][j]
    nilpotent: bool = False

    @property
    def k(self) -> int:
        return len(self.A)

    def stacked(self):
        M = [row for layer in self.A for row in layer]
        b = [v for layer in self.d for v in layer]
        return M, b


def _layers(S, c, alpha, k, grad, corr, nilpotent) -> LayeredSystem:
    if k < 1:
        raise ValueError("need at least one layer")
    R = S.ring
    n, m = S.n, S.m
    q = q_full(S, c)
    A = [[q[j][l] for l in range(m, n)] for j in range(m)]
    d = [
        sum(((grad[i] * S.u(j) - grad[j] * S.u(i)) * S.u(i) for i in range(m)), R.zero)
        for j in range(m)
    ]
    As, ds = [A], [d]
    for _ in range(k - 1):
        A_next = [
            [
                h1_derive(S, c, A[j][l - m])
                + sum((A[j][kk - m] * q[kk][l] for kk in range(m, n) if A[j][kk - m]), R.zero)
                for l in range(m, n)
            ]
            for j in range(m)
        ]
        d_next = [
            h1_derive(S, c, d[j])
            + sum((A[j][kk - m] * corr[kk] for kk in range(m, n) if A[j][kk - m]), R.zero)
            for j in range(m)
        ]
        A, d = A_next, d_next
        As.append(A)
        ds.append(d)
    return LayeredSystem(S, c, alpha, As, ds, nilpotent)


def build_layers(S: SubRiemannianStructure, c: StructureFunctions, alpha: AlphaJet, k: int) -> LayeredSystem:
    """Layers of the fundamental system for the conformal factor modelled by ``alpha``."""
    R = S.ring
    al = alpha.as_function(S)
    grad = [X.apply(al) for X in S.frame]  # X_j(alpha) for all j
    corr = [
        sum((S.u(i) * (grad[i] * S.u(kk) - grad[kk] * S.u(i)) for i in range(S.m)), R.zero)
        for kk in range(S.n)
    ]
    return _layers(S, c, alpha, k, grad, corr, False)


def nilpotent_layers(S_hat: SubRiemannianStructure, c_hat: StructureFunctions,
                     alpha: AlphaJet, k: int) -> LayeredSystem:
    """Layers of the nilpotent system: only the jet values alpha^i enter."""
    R = S_hat.ring
    g = alpha.gradient_polys(S_hat)
    grad = g + [R.zero] * (S_hat.n - S_hat.m)
    lin = sum((S_hat.u(i) * g[i] for i in range(S_hat.m)), R.zero)
    corr = [lin * S_hat.u(kk) for kk in range(S_hat.n)]
    return _layers(S_hat, c_hat, alpha, k, grad, corr, True)


# -- solving ---------------------------------------------------------------------


@dataclass
class PsiSolution:
    system: LayeredSystem
    components: list[RationalFunction]  # Psi_{m+1}..Psi_n
    delta: RationalPoly  # witness minor
    delta_reduced: RationalPoly
    numerators: list[RationalPoly]  # reduced, over delta_reduced
    witness: tuple[list[int], list[int]]
    jets: JetConstraints
    eps: dict | None = None

    @property
    def S(self) -> SubRiemannianStructure:
        return self.system.S

    @property
    def is_polynomial(self) -> bool:
        return all(f.is_polynomial for f in self.components)

    def component(self, k: int) -> RationalFunction:
        """Psi_k for a 0-based frame index k >= m."""
        return self.components[k - self.S.m]


def _reduce(nums: list[RationalPoly], den: RationalPoly):
    g = gcd_many([den] + [p for p in nums if p])
    if not g.is_ground:
        nums = [p.exquo(g) for p in nums]
        den = den.exquo(g)
    lc = den.LC
    return [p.quo_ground(lc) for p in nums], den.quo_ground(lc)


def _finish(L: LayeredSystem, nums, den, delta, witness, jets: JetConstraints) -> PsiSolution:
    nums = [jets.apply(p) for p in nums]
    nums, den = _reduce(nums, den)
    comps = [RationalFunction.make(p, den) for p in nums]
    return PsiSolution(L, comps, delta, den, nums, witness, jets)


def solve_psi(L: LayeredSystem, jets: JetConstraints | None = None) -> PsiSolution:
    """Unique Psi with A Psi = d on every built layer.

    For a symbolic jet, rows outside the witness minor can only be satisfied on a
    linear subspace of jets; that subspace is returned in ``jets``.
    """
    S = L.S
    n, m = S.n, S.m
    jets = jets or JetConstraints.free(n, m)
    M, b = L.stacked()
    b = [jets.apply(v) for v in b]
    if len(M) < n - m:
        raise NeedMoreLayers(L.k, rank_and_minor(M, min(len(M), n - m))[0])
    rank, witness = rank_and_minor(M, n - m)
    if witness is None:
        raise NeedMoreLayers(L.k, rank)
    rows = witness[0]
    nums, delta = cramer(M, b, rows)
    nums, den = _reduce(nums, delta)
    forms = []
    for r in range(len(M)):
        res = sum((M[r][l] * nums[l] for l in range(n - m) if M[r][l]), S.ring.zero) - b[r] * den
        if res:
            if not L.alpha.symbolic:
                raise InconsistentSystem(f"row {r} is not satisfied", [r])
            forms.extend(jet_linear_forms(res, n, m))
    if forms:
        jets = jets.with_forms(S.ring, forms)
    return _finish(L, nums, den, delta, witness, jets)


def polynomiality_test(P: PsiSolution) -> bool:
    return P.is_polynomial


def polynomial_jets(P: PsiSolution) -> PsiSolution:
    """Restrict to the jets on which every component of Psi is a polynomial.

    Division by the single divisor delta_reduced has a unique remainder, which is
    linear in the jet symbols; its vanishing is the exact divisibility condition.
    """
    if P.is_polynomial:
        return P
    S = P.S
    forms = []
    for p in P.numerators:
        rem = p.rem(P.delta_reduced)
        if rem:
            forms.extend(jet_linear_forms(rem, S.n, S.m))
    jets = P.jets.with_forms(S.ring, forms)
    return _finish(P.system, P.numerators, P.delta_reduced, P.delta, P.witness, jets)


def verify_all_layers(P: PsiSolution) -> bool:
    """Exact re-substitution of Psi into every built layer (on the admissible jets)."""
    M, b = P.system.stacked()
    S = P.S
    for r in range(len(M)):
        lhs = sum((M[r][l] * P.numerators[l] for l in range(S.n - S.m) if M[r][l]), S.ring.zero)
        if lhs != P.jets.apply(b[r]) * P.delta_reduced:
            return False
    return True


# -- epsilon coefficients and the K_i certificate ---------------------------------


def _weights(S: SubRiemannianStructure) -> tuple[int, ...]:
    return S.weights if S.weights is not None else infer_weights(S)


def epsilon_table(P: PsiSolution) -> dict[tuple[int, int], RationalPoly]:
    """eps[(k, l)] with Psi_k = sum_l eps_kl u_l over indices with w_l = w_k - 1."""
    S = P.S
    w = _weights(S)
    n = S.n
    table: dict[tuple[int, int], RationalPoly] = {}
    for k in range(S.m, n):
        psi = P.component(k)
        if not psi.is_polynomial:
            raise ValueError("epsilon table needs a polynomial Psi")
        for mon, coeff in psi.as_poly().items():
            xs = [g for g in range(n) if mon[g]]
            us = [g - n for g in range(n, 2 * n) if mon[g]]
            if xs or len(us) != 1 or mon[n + us[0]] != 1 or w[us[0]] != w[k] - 1:
                raise InternalInconsistency(f"Psi_{k + 1} is not linear in the weight-{w[k] - 1} fibers")
            l = us[0]
            jet_mon = tuple(e if g >= 2 * n else 0 for g, e in enumerate(mon))
            term = S.ring.from_dict({jet_mon: coeff})
            table[(k, l)] = table.get((k, l), S.ring.zero) + term
    P.eps = table
    return table


@dataclass
class KiCertificate:
    K: dict[tuple[int, int], RationalPoly]  # (i, s) -> K_i(s)
    k1_layer_one: list[RationalPoly]
    k1_telescoped: list[RationalPoly]
    recursion_defects: dict[tuple[int, int], RationalPoly]
    jets: JetConstraints
    forced_zero: bool
    eps: dict[tuple[int, int], RationalPoly]
    ladder: tuple[int, ...]

    @property
    def verdict(self) -> str:
        return "WeylRigid" if self.forced_zero else "Inconclusive"


def residual_36(P: PsiSolution, c_hat: StructureFunctions) -> list[RationalPoly]:
    """LHS - RHS of the first-layer identity, one entry per j < m."""
    S = P.S
    w = _weights(S)
    R = S.ring
    g = P.system.alpha.gradient_polys(S)
    out = []
    for j in range(S.m):
        lhs = R.zero
        for k in range(S.m, S.n):
            if w[k] != 2:
                continue
            psi = P.component(k).as_poly()
            for i in range(S.m):
                if c_hat(k, i, j):
                    lhs += c_hat(k, i, j) * S.u(i) * psi
        rhs = sum(((g[i] * S.u(j) - g[j] * S.u(i)) * S.u(i) for i in range(S.m)), R.zero)
        out.append(P.jets.apply(lhs - rhs))
    return out


def residual_37(P: PsiSolution, c_hat: StructureFunctions) -> dict[int, RationalPoly]:
    """LHS - RHS of the propagation identity for every k >= m."""
    S = P.S
    w = _weights(S)
    R = S.ring
    g = P.system.alpha.gradient_polys(S)
    lin = sum((g[i] * S.u(i) for i in range(S.m)), R.zero)
    out = {}
    for k in range(S.m, S.n):
        psi_k = P.component(k).as_poly()
        rhs = R.zero
        for l in range(S.m, S.n):
            if w[l] != w[k] + 1:
                continue
            psi_l = P.component(l).as_poly()
            for i in range(S.m):
                if c_hat(l, i, k):
                    rhs += c_hat(l, i, k) * S.u(i) * psi_l
        rhs -= lin * S.u(k)
        out[k] = P.jets.apply(h1_derive(S, c_hat, psi_k) - rhs)
    return out


def ki_certificate(P: PsiSolution, S_hat: SubRiemannianStructure, c_hat: StructureFunctions) -> KiCertificate:
    if not P.is_polynomial:
        raise ValueError("the K_i certificate needs a polynomial Psi")
    S = S_hat
    R = S.ring
    n, m = S.n, S.m
    w = _weights(S)
    r = max(w)
    jets = P.jets
    alpha = [jets.apply(g) for g in P.system.alpha.gradient_polys(S)]
    eps = epsilon_table(P)

    def e(k, l):
        return eps.get((k, l), R.zero)

    by_weight = {s: [k for k in range(n) if w[k] == s] for s in range(1, r + 2)}
    K: dict[tuple[int, int], RationalPoly] = {}
    for i in range(m):
        for s in range(1, r + 1):
            K[(i, s)] = jets.apply(sum(
                (c_hat(k1, i, k0) * e(k1, k0) for k0 in by_weight[s] for k1 in by_weight[s + 1]),
                R.zero,
            ))
    for i in range(m):
        if K[(i, r)]:
            raise InternalInconsistency("K_i vanishes at the nilpotency step by construction")

    # identities that hold on any solution of the first layer
    res36 = residual_36(P, c_hat)
    if any(res36):
        raise InternalInconsistency("first-layer identity fails on the solved Psi")
    k1_layer_one = [jets.apply((m - 1) * alpha[i]) for i in range(m)]
    for i in range(m):
        if K[(i, 1)] != k1_layer_one[i]:
            raise InternalInconsistency(f"K_{i + 1}(1) differs from (m-1) alpha^{i + 1}")

    # the propagation identity: per-index defects match its residual coefficients
    res37 = residual_37(P, c_hat)
    defects: dict[tuple[int, int], RationalPoly] = {}
    forms = []
    for i in range(m):
        for s in range(2, r + 1):
            total = R.zero
            for ks in by_weight[s]:
                ks_defect = jets.apply(
                    sum((e(ks, k0) * c_hat(ks, i, k0) for k0 in by_weight[s - 1]), R.zero)
                    - sum((c_hat(k1, i, ks) * e(k1, ks) for k1 in by_weight[s + 1]), R.zero)
                    + alpha[i]
                )
                if ks_defect != _u_coefficient(res37[ks], S, i, ks):
                    raise InternalInconsistency(
                        f"defect of index {ks + 1} does not match the propagation residual"
                    )
                total += ks_defect
            jump = S.n_s(s) - S.n_s(s - 1)
            defect = K[(i, s - 1)] - K[(i, s)] + jump * alpha[i]
            if defect != total:
                raise InternalInconsistency("summed defects differ from the recursion defect")
            defects[(i, s)] = defect
            if defect:
                forms.append(defect)
    k1_telescoped = [jets.apply(-(n - m) * alpha[i]) for i in range(m)]
    final = jets.with_forms(R, forms) if forms else jets
    return KiCertificate(
        K, k1_layer_one, k1_telescoped, defects, final, final.gradient_forced_zero(), eps,
        tuple(S.n_s(s) for s in range(1, r + 1)),
    )


def _u_coefficient(p: RationalPoly, S: SubRiemannianStructure, a: int, b: int) -> RationalPoly:
    """Jet-symbol coefficient of the monomial u_a u_b in p."""
    R = S.ring
    n = S.n
    target = [0] * (2 * n)
    target[n + a] += 1
    target[n + b] += 1
    target = tuple(target)
    out = {}
    for mon, coeff in p.items():
        if tuple(mon[: 2 * n]) == target:
            key = tuple(0 if g < 2 * n else e for g, e in enumerate(mon))
            out[key] = coeff
    return R.from_dict(out) if out else R.zero


# -- other diagnostics -----------------------------------------------------------


def flow_invariance_test(S: SubRiemannianStructure, c: StructureFunctions, p: RationalPoly) -> bool:
    if not p:
        raise ValueError("p must be nonzero")
    return divides(p, h1_derive(S, c, p))


def assemble_orbital_map(P: PsiSolution, alpha: AlphaJet) -> list[RationalFunction]:
    S = P.S
    al = P.jets.apply(alpha.as_function(S))
    out = []
    for k in range(S.n):
        base = RationalFunction.poly(al * S.u(k))
        out.append(base if k < S.m else P.component(k) + base)
    return out


def layer_degree_audit(L: LayeredSystem) -> list[tuple[int, int | None]]:
    """(s, max weighted degree of d^s in the fibre variables, u_k weighted by w_k)."""
    S = L.S
    w = _weights(S)
    full = [0] * S.n + list(w) + [0] * (S.m + 1)
    out = []
    for s, layer in enumerate(L.d, start=1):
        degs = [weighted_degree(p, full) for p in layer if p]
        out.append((s, max(degs) if degs else None))
    return out


# -- verdict ---------------------------------------------------------------------


@dataclass
class RigidityReport:
    verdict: str  # WeylRigid | Inconclusive | NotApplicable
    route: str  # polynomial-certificate | abnormal-route | none
    evidence: dict = field(default_factory=dict)
    notes: list[str] = field(default_factory=list)
    certificate: KiCertificate | None = None
    supplementary: KiCertificate | None = None
    solution: PsiSolution | None = None


def _cert_evidence(cert: KiCertificate) -> dict:
    return {
        "K": {f"K_{i + 1}({s})": format_poly(v) for (i, s), v in sorted(cert.K.items())},
        "K_i(1) from first layer": [format_poly(v) for v in cert.k1_layer_one],
        "K_i(1) telescoped": [format_poly(v) for v in cert.k1_telescoped],
        "recursion defects": {
            f"i={i + 1},s={s}": format_poly(v) for (i, s), v in sorted(cert.recursion_defects.items())
        },
        "eps": {f"eps_{k + 1},{l + 1}": format_poly(v) for (k, l), v in sorted(cert.eps.items())},
        "jet constraints": cert.jets.describe(),
        "alpha^1..alpha^m forced to 0": cert.forced_zero,
        "flag ladder": list(cert.ladder),
    }


def weyl_verdict(S: SubRiemannianStructure, layers: int | None = None, cap: int | None = None) -> RigidityReport:
    try:
        S.structure
    except NonPolynomialStructure as exc:
        return RigidityReport("NotApplicable", "none", notes=[f"structure functions: {exc}"])
    n, m = S.n, S.m
    if m == n:
        return RigidityReport("NotApplicable", "none", notes=["Riemannian case (m = n)"])
    try:
        if not is_regular_point(S):
            return RigidityReport("NotApplicable", "none", notes=["base point is not a regular point of the flag"])
    except NotBracketGenerating as exc:
        return RigidityReport("NotApplicable", "none", notes=[str(exc)])
    if S.weights is None:
        S = type(S)(S.n, S.m, S.frame, infer_weights(S), S.base_point, S.name)
    diag = verify_privileged(S)
    if not diag:
        return RigidityReport("NotApplicable", "none",
                              notes=["coordinates are not privileged at q0"] + diag.offending[:5])
    S_hat = nilpotent_truncate(S)
    c_hat = S_hat.structure
    alpha = AlphaJet.symbols()
    k = layers or (n - m)
    cap = max(cap or 4 * (n - m), k)
    report = RigidityReport("Inconclusive", "none")
    attempts = []
    while k <= cap:
        L = nilpotent_layers(S_hat, c_hat, alpha, k)
        try:
            P = solve_psi(L)
        except NeedMoreLayers as exc:
            attempts.append(f"k={k}: rank {exc.rank} < {n - m}")
            k *= 2
            continue
        if not verify_all_layers(P):
            raise InternalInconsistency("solved Psi fails re-substitution")
        if P.is_polynomial:
            attempts.append(f"k={k}: Psi polynomial")
            cert = ki_certificate(P, S_hat, c_hat)
            report.certificate = cert
            report.solution = P
            if cert.forced_zero:
                report.verdict, report.route = "WeylRigid", "polynomial-certificate"
                report.notes.append(
                    "pointwise conclusion at q0; local constancy of alpha assumes density of regular points"
                )
            break
        attempts.append(f"k={k}: Psi not polynomial for a free jet")
        if report.supplementary is None:
            restricted = polynomial_jets(P)
            if restricted.is_polynomial:
                report.supplementary = ki_certificate(restricted, S_hat, c_hat)
        k *= 2
    if report.verdict != "WeylRigid":
        report.notes.append("polynomial route did not close; minimal-order route left to the abnormal analysis")
    ev = report.evidence
    ev["layer attempts"] = attempts
    if report.solution is not None:
        P = report.solution
        ev["layers"] = P.system.k
        ev["Psi"] = [str(f) for f in P.components]
        ev["witness rows"] = [r + 1 for r in P.witness[0]]
        ev["witness minor"] = format_poly(P.delta)
        ev["layer degrees"] = [f"s={s}: {d}" for s, d in layer_degree_audit(P.system)]
    if report.certificate is not None:
        ev["certificate"] = _cert_evidence(report.certificate)
    if report.supplementary is not None:
        ev["restricted certificate"] = _cert_evidence(report.supplementary)
    return report
