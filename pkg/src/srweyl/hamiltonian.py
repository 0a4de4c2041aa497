"""Hamiltonian calculus in frame-fiber coordinates (x, u) and normal geodesics.

The fiber coordinates are u_i = <p, X_i(x)>.  The lifted frame fields act on
phase polynomials as x-derivations with u frozen.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from fractions import Fraction
from typing import Sequence

import numpy as np
from scipy.integrate import solve_ivp

from ._numeric import PolyEvaluator
from .algebra import RationalFunction, RationalPoly, to_domain
from .geometry import StructureFunctions, SubRiemannianStructure


class IntegrationError(RuntimeError):
    pass


def hamiltonian(S: SubRiemannianStructure) -> RationalPoly:
    R = S.ring
    half = R(to_domain(R, Fraction(1, 2)))
    return half * sum((S.u(i) ** 2 for i in range(S.m)), R.zero)


def h1_derive(S: SubRiemannianStructure, c: StructureFunctions, f: RationalPoly) -> RationalPoly:
    R = S.ring
    n, m = S.n, S.m
    out = R.zero
    for i in range(m):
        xf = S.frame[i].apply(f)
        if xf:
            out += S.u(i) * xf
    for j in range(n):
        df = f.diff(S.u(j))
        if not df:
            continue
        coeff = R.zero
        for i in range(m):
            for k in range(n):
                ck = c(k, i, j)
                if ck:
                    coeff += ck * S.u(i) * S.u(k)
        if coeff:
            out += coeff * df
    return out


def hamiltonian_field(S: SubRiemannianStructure, c: StructureFunctions) -> list[RationalPoly]:
    """Components (xdot_1..xdot_n, udot_1..udot_n) of the normal Hamiltonian field."""
    return [h1_derive(S, c, S.x(a)) for a in range(S.n)] + [h1_derive(S, c, S.u(j)) for j in range(S.n)]


@dataclass(frozen=True)
class AlphaJet:
    """Value and first frame derivatives of the conformal factor at q0.

    With ``symbolic=True`` the entries are the ring indeterminates a0, a1..am.
    """

    value: Fraction | None = None
    gradient: tuple[Fraction, ...] | None = None
    symbolic: bool = False

    @classmethod
    def symbols(cls) -> "AlphaJet":
        return cls(symbolic=True)

    @classmethod
    def numeric(cls, value, gradient: Sequence) -> "AlphaJet":
        value = Fraction(value)
        if value == 0:
            raise ValueError("alpha(q0) must be nonzero")
        return cls(value, tuple(Fraction(g) for g in gradient))

    def value_poly(self, S: SubRiemannianStructure) -> RationalPoly:
        R = S.ring
        return S.a(0) if self.symbolic else R(to_domain(R, self.value))

    def gradient_polys(self, S: SubRiemannianStructure) -> list[RationalPoly]:
        R = S.ring
        if self.symbolic:
            return [S.a(i + 1) for i in range(S.m)]
        if len(self.gradient) != S.m:
            raise ValueError(f"alpha jet needs {S.m} derivatives")
        return [R(to_domain(R, g)) for g in self.gradient]

    def as_function(self, S: SubRiemannianStructure) -> RationalPoly:
        """alpha(x) = alpha0 + sum_i alpha^i (x_i - q0_i), the affine model of the jet."""
        R = S.ring
        out = self.value_poly(S)
        for i, g in enumerate(self.gradient_polys(S)):
            out += g * (S.x(i) - R(to_domain(R, S.base_point[i])))
        return out

    def is_zero_gradient(self) -> bool:
        return not self.symbolic and not any(self.gradient)


def h2_derive(S: SubRiemannianStructure, c: StructureFunctions, alpha: AlphaJet,
              f: RationalPoly) -> RationalFunction:
    """Companion field of the conformal metric g/alpha^2 applied to f."""
    R = S.ring
    al = alpha.as_function(S)
    energy = sum((S.u(i) ** 2 for i in range(S.m)), R.zero)
    num = h1_derive(S, c, f) * al
    for j in range(S.n):
        df = f.diff(S.u(j))
        if df:
            num += S.frame[j].apply(al) * energy * df
    return RationalFunction.make(num, al ** 3)


# -- numerical integration ------------------------------------------------------


@dataclass
class Trajectory:
    times: np.ndarray
    states: np.ndarray  # shape (len(times), 2n)
    energy: np.ndarray
    n: int

    @property
    def x(self) -> np.ndarray:
        return self.states[:, : self.n]

    @property
    def u(self) -> np.ndarray:
        return self.states[:, self.n:]

    @property
    def drift(self) -> float:
        h0 = abs(self.energy[0])
        dev = float(np.max(np.abs(self.energy - self.energy[0])))
        return dev / h0 if h0 > 0 else dev

    def write_csv(self, fh) -> None:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["t"] + [f"x{i + 1}" for i in range(self.n)] + [f"u{i + 1}" for i in range(self.n)] + ["h"])
        for t, s, h in zip(self.times, self.states, self.energy):
            w.writerow([f"{t:.12g}"] + [f"{v:.12g}" for v in s] + [f"{h:.12g}"])


class PhaseEvaluator:
    """Float evaluation of ring polynomials at (x, u) with jet symbols set to 0."""

    def __init__(self, S: SubRiemannianStructure, polys: Sequence[RationalPoly]):
        self.S = S
        self.ev = PolyEvaluator(polys, S.ring.ngens)
        self.buf = np.zeros(S.ring.ngens)

    def __call__(self, x, u) -> np.ndarray:
        n = self.S.n
        self.buf[:n] = x
        self.buf[n:2 * n] = u
        return self.ev(self.buf)


def integrate_normal(S: SubRiemannianStructure, x0: Sequence[float], u0: Sequence[float],
                     T: float, steps: int, c: StructureFunctions | None = None,
                     rtol: float = 1e-12, atol: float = 1e-12) -> Trajectory:
    if steps < 1:
        raise ValueError("steps must be >= 1")
    if len(x0) != S.n or len(u0) != S.n:
        raise ValueError(f"initial state must have {S.n}+{S.n} entries")
    c = c or S.structure
    n = S.n
    rhs_eval = PhaseEvaluator(S, hamiltonian_field(S, c))
    h_eval = PhaseEvaluator(S, [hamiltonian(S)])

    def rhs(_t, y):
        return rhs_eval(y[:n], y[n:])

    y0 = np.concatenate([np.asarray(x0, float), np.asarray(u0, float)])
    times = np.linspace(0.0, T, steps + 1)
    sol = solve_ivp(rhs, (0.0, T), y0, method="DOP853", t_eval=times, rtol=rtol, atol=atol)
    if sol.status != 0 or not np.all(np.isfinite(sol.y)):
        raise IntegrationError(sol.message)
    states = sol.y.T
    energy = np.array([h_eval(s[:n], s[n:])[0] for s in states])
    return Trajectory(sol.t, states, energy, n)
