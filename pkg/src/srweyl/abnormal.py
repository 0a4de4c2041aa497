"""Abnormal extremals: the symplectic form restricted to the annihilator of D.

Points of the annihilator are written as lam = (x_1..x_n, u_{m+1}..u_n); the
first m fiber coordinates vanish there.  Tangent vectors are expressed in the
basis (Y_1..Y_n, d/du_{m+1}..d/du_n), where Y_b moves x along X_b with u fixed.
"""

from __future__ import annotations

import random
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Sequence

import numpy as np
from scipy.integrate import solve_ivp

from ._numeric import PolyEvaluator
from .algebra import (
    RationalPoly,
    evaluate,
    evaluate_scalar,
    format_poly,
    kernel_basis,
    pfaffian,
    to_fraction,
)
from .geometry import StructureFunctions, SubRiemannianStructure
from .hamiltonian import PhaseEvaluator, hamiltonian_field, integrate_normal


class NoCharacteristic(ValueError):
    pass


class IndeterminateRank(RuntimeError):
    pass


MEMBERSHIP_TOL = 1e-8


# -- the restricted form ----------------------------------------------------------


@dataclass(frozen=True)
class RestrictedForm:
    S: SubRiemannianStructure
    matrix: tuple[tuple[RationalPoly, ...], ...]

    @property
    def size(self) -> int:
        return len(self.matrix)

    def labels(self) -> list[str]:
        S = self.S
        return [f"Y{b + 1}" for b in range(S.n)] + [f"du{k + 1}" for k in range(S.m, S.n)]


def restricted_form(S: SubRiemannianStructure, c: StructureFunctions | None = None) -> RestrictedForm:
    c = c or S.structure
    R = S.ring
    n, m = S.n, S.m
    N = 2 * n - m
    M = [[R.zero] * N for _ in range(N)]
    for i in range(n):
        for j in range(i + 1, n):
            v = -sum((S.u(k) * c(k, i, j) for k in range(m, n) if c(k, i, j)), R.zero)
            M[i][j], M[j][i] = v, -v
    for k in range(m, n):
        col = n + k - m
        M[k][col] = -R.one
        M[col][k] = R.one
    return RestrictedForm(S, tuple(tuple(r) for r in M))


def dperp_indices(S: SubRiemannianStructure) -> list[int]:
    """Ring generator indices of the annihilator coordinates."""
    return list(range(S.n)) + [S.n + k for k in range(S.m, S.n)]


def _point_values(S: SubRiemannianStructure, lam: Sequence) -> dict[int, Fraction]:
    idx = dperp_indices(S)
    if len(lam) != len(idx):
        raise ValueError(f"a point of the annihilator has {len(idx)} coordinates")
    vals = {g: to_fraction(Fraction(v)) for g, v in zip(idx, lam)}
    for k in range(S.m):
        vals[S.n + k] = Fraction(0)
    return vals


# -- stratification -----------------------------------------------------------------


@dataclass
class Stratum:
    level: int
    dimension: int | None
    description: str
    samples: int
    kernel_dims: dict[int, int]
    one_dimensional: bool | None
    flagged: list[str] = field(default_factory=list)


@dataclass
class Stratification:
    form: RestrictedForm
    locus: RationalPoly | None  # None means the whole annihilator (m odd)
    gradient: tuple[RationalPoly, ...] = ()
    strata: list[Stratum] = field(default_factory=list)

    @property
    def S(self) -> SubRiemannianStructure:
        return self.form.S

    @property
    def all_of_dperp(self) -> bool:
        return self.locus is None

    @property
    def locus_dimension(self) -> int:
        N = self.form.size
        return N if self.all_of_dperp else N - 1

    def describe_locus(self) -> str:
        return "AllOfDperp" if self.all_of_dperp else format_poly(self.locus)


def wedge_locus(S: SubRiemannianStructure, c: StructureFunctions | None = None) -> Stratification:
    form = restricted_form(S, c)
    if S.m % 2:
        return Stratification(form, None)
    P = pfaffian([list(r) for r in form.matrix])
    n, m = S.n, S.m
    grad = [S.frame[b].apply(P) for b in range(n)] + [P.diff(S.u(k)) for k in range(m, n)]
    return Stratification(form, P, tuple(grad))


@dataclass
class KernelInfo:
    dim: int
    basis: list[list[Fraction]]
    in_tilde: bool
    in_W: bool
    restricted_basis: list[list[Fraction]]
    singular: bool = False


def _is_zero_section(S, lam) -> bool:
    return all(Fraction(v) == 0 for v in lam[S.n:])


def kernel_at(strat: Stratification, lam: Sequence) -> KernelInfo:
    S = strat.S
    vals = _point_values(S, lam)
    M = [[evaluate_scalar(e, vals) for e in row] for row in strat.form.matrix]
    ker = kernel_basis(M)
    if _is_zero_section(S, lam):
        return KernelInfo(len(ker), ker, False, False, [])
    if strat.all_of_dperp:
        return KernelInfo(len(ker), ker, True, len(ker) == 1, ker)
    if evaluate_scalar(strat.locus, vals) != 0:
        return KernelInfo(len(ker), ker, False, False, [])
    g = [evaluate_scalar(p, vals) for p in strat.gradient]
    if not any(g):
        return KernelInfo(len(ker), ker, True, False, [], singular=True)
    N = len(M)
    B = [row + [g[a]] for a, row in enumerate(M)] + [g + [Fraction(0)]]
    restricted = [v[:N] for v in kernel_basis(B)]
    return KernelInfo(len(ker), ker, True, len(restricted) == 1, restricted)


@dataclass
class CharacteristicDirection:
    vector: list[Fraction]
    projection: list[Fraction]


def characteristic_direction(strat: Stratification, lam: Sequence) -> CharacteristicDirection:
    info = kernel_at(strat, lam)
    if not info.in_W:
        raise NoCharacteristic(f"point {list(map(str, lam))} is not in W_D")
    v = info.restricted_basis[0]
    S = strat.S
    vals = _point_values(S, lam)
    proj = [
        sum((v[b] * evaluate_scalar(S.frame[b].components[a], vals) for b in range(S.n)), Fraction(0))
        for a in range(S.n)
    ]
    return CharacteristicDirection(v, proj)


def tangent_basis(strat: Stratification, lam: Sequence) -> list[list[Fraction]]:
    """Basis of the tangent space of the locus at lam (in the frame basis)."""
    N = strat.form.size
    if strat.all_of_dperp:
        return [[Fraction(int(a == b)) for a in range(N)] for b in range(N)]
    vals = _point_values(strat.S, lam)
    g = [evaluate_scalar(p, vals) for p in strat.gradient]
    return kernel_basis([g])


def sigma_value(strat: Stratification, lam: Sequence, v, w) -> Fraction:
    vals = _point_values(strat.S, lam)
    M = [[evaluate_scalar(e, vals) for e in row] for row in strat.form.matrix]
    N = len(M)
    return sum((v[a] * M[a][b] * w[b] for a in range(N) for b in range(N) if M[a][b]), Fraction(0))


# -- sampling the locus ----------------------------------------------------------------


def _rand_q(rng: random.Random) -> Fraction:
    return Fraction(rng.randint(-12, 12), rng.randint(1, 6))


def _solve_on_locus(strat: Stratification, lam: list[Fraction], rng: random.Random) -> list[Fraction] | None:
    """Replace one coordinate in which the locus polynomial is linear so that lam lies on it."""
    S = strat.S
    idx = dperp_indices(S)
    order = list(range(len(idx)))[::-1]  # fiber coordinates first
    for pos in order:
        g = idx[pos]
        vals = _point_values(S, lam)
        del vals[g]
        p = evaluate(strat.locus, vals)
        if p.degree(g) != 1:
            continue
        var = p.ring.gens[g]
        a = evaluate_scalar(p.coeff_wrt(var, 1), {})
        b = evaluate_scalar(p.coeff_wrt(var, 0), {})
        if a == 0:
            continue
        out = list(lam)
        out[pos] = -b / a
        return out
    return None


def sample_locus(strat: Stratification, rng: random.Random, zero_prob: float = 0.0) -> list[Fraction] | None:
    S = strat.S
    size = len(dperp_indices(S))
    lam = [Fraction(0) if rng.random() < zero_prob else _rand_q(rng) for _ in range(size)]
    if strat.all_of_dperp:
        return lam
    return _solve_on_locus(strat, lam, rng)


def sample_W(strat: Stratification, count: int, seed: int = 0, max_tries: int | None = None) -> list[list[Fraction]]:
    """Seeded rational points of W_D (possibly fewer than ``count`` if it looks empty)."""
    rng = random.Random(seed)
    out: list[list[Fraction]] = []
    tries = 0
    max_tries = max_tries or 20 * count + 50
    while len(out) < count and tries < max_tries:
        tries += 1
        lam = sample_locus(strat, rng)
        if lam is not None and kernel_at(strat, lam).in_W:
            out.append(lam)
    return out


# -- numerical line field -----------------------------------------------------------


class _LineField:
    def __init__(self, strat: Stratification, speed: float = 1.0):
        self.strat = strat
        S = strat.S
        self.S = S
        self.N = strat.form.size
        self.idx = dperp_indices(S)
        flat = [e for row in strat.form.matrix for e in row]
        self.M_ev = PolyEvaluator(flat, S.ring.ngens)
        frame_polys = [comp for X in S.frame for comp in X.components]
        self.X_ev = PolyEvaluator(frame_polys, S.ring.ngens)
        if strat.all_of_dperp:
            self.P_ev = None
        else:
            coord_grad = [strat.locus.diff(S.ring.gens[g]) for g in self.idx]
            self.P_ev = PolyEvaluator([strat.locus] + list(strat.gradient) + coord_grad, S.ring.ngens)
        self.speed = speed
        self.buf = np.zeros(S.ring.ngens)

    def _load(self, z):
        self.buf[:] = 0.0
        self.buf[self.idx] = z

    def bordered(self, z) -> np.ndarray:
        self._load(z)
        N = self.N
        M = self.M_ev(self.buf).reshape(N, N)
        if self.P_ev is None:
            return M
        vals = self.P_ev(self.buf)
        g = vals[1:1 + N]
        B = np.zeros((N + 1, N + 1))
        B[:N, :N] = M
        B[:N, N] = g
        B[N, :N] = g
        return B

    def locus_value(self, z) -> float:
        if self.P_ev is None:
            return 0.0
        self._load(z)
        return float(self.P_ev(self.buf)[0])

    def project(self, z, iters: int = 5):
        """Newton steps along the coordinate gradient onto the locus."""
        if self.P_ev is None:
            return z
        N = self.N
        for _ in range(iters):
            self._load(z)
            vals = self.P_ev(self.buf)
            p, cg = vals[0], vals[1 + N:]
            nrm = float(cg @ cg)
            if abs(p) <= 1e-14 or nrm == 0:
                break
            z = z - p * cg / nrm
        return z

    def direction(self, z, ref=None) -> np.ndarray:
        B = self.bordered(z)
        _, _, vt = np.linalg.svd(B)
        v = vt[-1][: self.N]
        nv = np.linalg.norm(v)
        if nv == 0:
            raise FloatingPointError("degenerate line field")
        v = v / nv
        if ref is not None:
            if v @ ref < 0:
                v = -v
        elif v[np.argmax(np.abs(v))] < 0:
            v = -v
        return v

    def velocity(self, z, v) -> np.ndarray:
        S = self.S
        n = S.n
        self._load(z)
        X = self.X_ev(self.buf).reshape(n, n)  # X[b][a] = component a of X_b
        xdot = v[:n] @ X
        return self.speed * np.concatenate([xdot, v[n:]])

    def nullity(self, z, tol: float = MEMBERSHIP_TOL) -> int:
        s = np.linalg.svd(self.bordered(z), compute_uv=False)
        return int(np.sum(s <= tol * max(1.0, s[0])))


@dataclass
class AbnormalTrajectory:
    times: np.ndarray
    states: np.ndarray
    locus_values: np.ndarray
    in_tilde: np.ndarray
    in_W: np.ndarray
    truncated: bool
    message: str
    speed: float


def integrate_abnormal(strat: Stratification, lam0: Sequence, T: float, steps: int,
                       speed: float = 1.0) -> AbnormalTrajectory:
    if steps < 1:
        raise ValueError("steps must be >= 1")
    if not kernel_at(strat, lam0).in_W:
        raise NoCharacteristic("initial point is not in W_D")
    lf = _LineField(strat, speed)
    S = strat.S
    z = np.array([float(Fraction(v)) for v in lam0])
    times = np.linspace(0.0, T, steps + 1)
    states, pvals, tilde, inw = [z.copy()], [lf.locus_value(z)], [True], [True]
    ref = lf.direction(z)
    truncated, message = False, "ok"
    for t0, t1 in zip(times[:-1], times[1:]):
        ref_local = ref

        def rhs(_t, y, ref_local=ref_local):
            return lf.velocity(y, lf.direction(y, ref_local))

        sol = solve_ivp(rhs, (t0, t1), z, method="DOP853", rtol=1e-12, atol=1e-12)
        if sol.status != 0 or not np.all(np.isfinite(sol.y)):
            truncated, message = True, f"integration failed at t={t0:.6g}: {sol.message}"
            break
        z = lf.project(sol.y[:, -1])
        p = lf.locus_value(z)
        if abs(p) > MEMBERSHIP_TOL:
            truncated, message = True, f"left the locus at t={t1:.6g} (value {p:.3e})"
            break
        off_zero = np.linalg.norm(z[S.n:]) > MEMBERSHIP_TOL
        states.append(z.copy())
        pvals.append(p)
        tilde.append(bool(off_zero))
        inw.append(bool(off_zero and lf.nullity(z) == 1))
        ref = lf.direction(z, ref)
    k = len(states)
    return AbnormalTrajectory(times[:k], np.array(states), np.array(pvals), np.array(tilde),
                              np.array(inw), truncated, message, speed)


# -- minimal order --------------------------------------------------------------------


def trajectory_verdict(flags: Sequence[bool], truncated: bool = False) -> str:
    """MinimalOrder if every sample is in W_D except isolated single-sample exits."""
    if truncated or not len(flags):
        return "NotCertified"
    f = list(flags)
    for i, ok in enumerate(f):
        if ok:
            continue
        left = f[i - 1] if i > 0 else True
        right = f[i + 1] if i + 1 < len(f) else True
        if i == 0 or i == len(f) - 1 or not (left and right):
            return "NotCertified"
    return "MinimalOrder"


@dataclass
class MinimalOrderReport:
    verdicts: list[str]
    stable: list[bool]
    fraction: float
    samples: int
    T: float
    label: str = "sampling certificate (not a proof)"

    @property
    def certified(self) -> int:
        return sum(1 for v, s in zip(self.verdicts, self.stable) if v == "MinimalOrder" and s)


def minimal_order_verdict(trajectories: Sequence[AbnormalTrajectory], samples: int | None = None) -> MinimalOrderReport:
    verdicts = [trajectory_verdict(t.in_W, t.truncated) for t in trajectories]
    frac = sum(v == "MinimalOrder" for v in verdicts) / len(verdicts) if verdicts else 0.0
    T = float(trajectories[0].times[-1]) if trajectories else 0.0
    s = samples or (len(trajectories[0].times) - 1 if trajectories else 0)
    return MinimalOrderReport(verdicts, [True] * len(verdicts), frac, s, T)


def certify_minimal_order(strat: Stratification, starts: Sequence[Sequence], T: float = 1.0,
                          samples: int = 10) -> tuple[MinimalOrderReport, list[AbnormalTrajectory]]:
    """Verdicts on sampling nets of s, 2s and 4s points; stable if all three agree."""
    trajs = [integrate_abnormal(strat, lam, T, 4 * samples) for lam in starts]
    verdicts, stable = [], []
    for t in trajs:
        vs = [trajectory_verdict(t.in_W[::stride], t.truncated) for stride in (4, 2, 1)]
        verdicts.append(vs[-1])
        stable.append(len(set(vs)) == 1)
    ok = sum(1 for v, s in zip(verdicts, stable) if v == "MinimalOrder" and s)
    frac = ok / len(trajs) if trajs else 0.0
    return MinimalOrderReport(verdicts, stable, frac, samples, T), trajs


# -- weak stratification ---------------------------------------------------------------


def _restricted_dim(info: KernelInfo) -> int:
    return len(info.restricted_basis)


def weak_stratification(strat: Stratification, depth: int, samples: int = 20, seed: int = 0) -> Stratification:
    """Chain of strata checked at seeded sample points.

    Level 0 is the locus itself.  Points of level i whose restricted kernel is
    larger than one-dimensional are collected as samples of level i + 1; a level
    with no such samples is reported empty at the sampled points.
    """
    if depth < 0:
        raise ValueError("depth must be >= 0")
    rng = random.Random(seed)
    pts = []
    for t in range(samples * 4):
        lam = sample_locus(strat, rng, zero_prob=0.0 if t < samples else 0.3)
        if lam is not None and not _is_zero_section(strat.S, lam):
            pts.append(lam)
    strata = []
    level_pts = pts
    dim: int | None = strat.locus_dimension
    for level in range(depth + 1):
        if not level_pts:
            strata.append(Stratum(level, None, "empty at sampled points", 0, {}, None))
            break
        infos = [kernel_at(strat, lam) for lam in level_pts]
        dims: dict[int, int] = {}
        flagged = []
        for lam, info in zip(level_pts, infos):
            if info.singular:
                flagged.append("singular point " + ",".join(map(str, lam)))
                continue
            d = _restricted_dim(info)
            dims[d] = dims.get(d, 0) + 1
        generic = min(dims) if dims else None
        desc = strat.describe_locus() if level == 0 else f"degeneracy stratum {level} (sampled)"
        one_dim = None
        if dim is not None and dim % 2 == 1:
            one_dim = generic == 1
        strata.append(Stratum(level, dim, desc, len(level_pts), dims, one_dim, flagged))
        if flagged:
            break
        level_pts = [
            lam for lam, info in zip(level_pts, infos)
            if not info.singular and generic is not None and _restricted_dim(info) > generic
        ]
        dim = None
    strat.strata = strata
    return strat


# -- strict normality ----------------------------------------------------------------


def _bracket_phase(H: Sequence[RationalPoly], V: Sequence[RationalPoly], nvars: int) -> list[RationalPoly]:
    R = H[0].ring if H else V[0].ring
    out = []
    for a in range(nvars):
        acc = R.zero
        for b in range(nvars):
            g = R.gens[b]
            if H[b] and V[a]:
                acc += H[b] * V[a].diff(g)
            if V[b] and H[a]:
                acc -= V[b] * H[a].diff(g)
        out.append(acc)
    return out


def j_filtration_fields(S: SubRiemannianStructure, c: StructureFunctions, depth: int) -> list[list[list[RationalPoly]]]:
    """Fields spanning J^(0), ..., J^(depth) on the 2n-dimensional (x, u) space."""
    R = S.ring
    n = S.n
    H = hamiltonian_field(S, c)
    level = [[R.one if a == n + j else R.zero for a in range(2 * n)] for j in range(n)]
    levels = [level]
    for _ in range(depth):
        level = [_bracket_phase(H, V, 2 * n) for V in level]
        levels.append(level)
    return levels


@dataclass
class StrictNormality:
    strictly_normal: bool
    max_dim: int
    dims: list[int]
    index: int


def _numeric_rank(A: np.ndarray, tols=(1e-6, 1e-8, 1e-10)) -> int:
    s = np.linalg.svd(A, compute_uv=False)
    scale = max(1.0, s[0]) if s.size else 1.0
    ranks = {int(np.sum(s > t * scale)) for t in tols}
    if len(ranks) != 1:
        raise IndeterminateRank(f"rank differs across tolerances: singular values {s}")
    return ranks.pop()


def strict_normality_test(S: SubRiemannianStructure, c: StructureFunctions | None, x0: Sequence[float],
                          u0: Sequence[float], T: float, samples: int = 20) -> StrictNormality:
    c = c or S.structure
    h0 = sum(float(v) ** 2 for v in u0[: S.m]) / 2
    if h0 == 0:
        raise ValueError("initial covector must have nonzero energy")
    index = S.n - S.m + 1
    fields = [V for level in j_filtration_fields(S, c, index) for V in level]
    ev = PhaseEvaluator(S, [p for V in fields for p in V])
    traj = integrate_normal(S, x0, u0, T, samples, c)
    dims = []
    for s in traj.states:
        A = ev(s[: S.n], s[S.n:]).reshape(len(fields), 2 * S.n)
        dims.append(_numeric_rank(A))
    mx = max(dims)
    return StrictNormality(mx == 2 * S.n, mx, dims, index)
