from __future__ import annotations

from srweyl.algebra import phase_ring


def gens(n=3, m=2):
    """(ring, x list, u list, a list) for the phase ring."""
    R = phase_ring(n, m)
    g = R.gens
    return R, list(g[:n]), list(g[n:2 * n]), list(g[2 * n:])
