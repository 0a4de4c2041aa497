"""Float evaluation of batches of ring polynomials (used by the integrators)."""

from __future__ import annotations

from typing import Sequence

import numpy as np

from .algebra import RationalPoly


class PolyEvaluator:
    """Evaluates a fixed list of polynomials at float points of the full ring."""

    def __init__(self, polys: Sequence[RationalPoly], ngens: int):
        exps, coeffs, owner = [], [], []
        for idx, p in enumerate(polys):
            for mon, c in p.items():
                exps.append(mon)
                coeffs.append(float(c))
                owner.append(idx)
        self.count = len(polys)
        self.ngens = ngens
        if exps:
            E = np.array(exps, dtype=np.int64)
            self.used = np.nonzero(E.any(axis=0))[0]
            self.exps = E[:, self.used]
        else:
            self.used = np.zeros(0, dtype=np.int64)
            self.exps = np.zeros((0, 0), dtype=np.int64)
        self.coeffs = np.array(coeffs, dtype=float)
        self.owner = np.array(owner, dtype=np.int64)

    def __call__(self, point: np.ndarray) -> np.ndarray:
        if not self.coeffs.size:
            return np.zeros(self.count)
        z = np.asarray(point, dtype=float)[self.used]
        terms = self.coeffs * np.prod(z ** self.exps, axis=1) if self.used.size else self.coeffs
        return np.bincount(self.owner, weights=terms, minlength=self.count)
