"""Deterministic adaptive Gauss-Kronrod (7, 15) quadrature.

Semi-infinite pieces are mapped onto [0, 1) with x = p +/- s / (1 - s).
Panels are bisected in order of decreasing error estimate, ties broken by
creation order, so the result is a pure function of the inputs.
"""

from __future__ import annotations

import heapq
import math
from dataclasses import dataclass

import numpy as np

from remlab.errors import DomainError, QuadratureError

_XGK = np.array([
    0.991455371120812639206854697526329, 0.949107912342758524526189684047851,
    0.864864423359769072789712788640926, 0.741531185599394439863864773280788,
    0.586087235467691130294144845693013, 0.405845151377397166906606412076961,
    0.207784955007898467600689403773245, 0.0,
])
_WGK = np.array([
    0.022935322010529224963732008058970, 0.063092092629978553290700663189204,
    0.104790010322250183839876322541518, 0.140653259715525918745189590510238,
    0.169004726639267902826583426598550, 0.190350578064785409913256402421014,
    0.204432940075298892414161999234649, 0.209482141084727828012999174891714,
])
_WG = np.array([
    0.129484966168869693270611432679082, 0.279705391489276667901467771423780,
    0.381830050505118944950369775488975, 0.417959183673469387755102040816327,
])
_NODES = np.concatenate([-_XGK[:-1], _XGK[::-1]])
_KW = np.concatenate([_WGK[:-1], _WGK[::-1]])
_GW = np.zeros(15)
_GW[[1, 3, 5, 7, 9, 11, 13]] = np.concatenate([_WG[:-1], _WG[::-1]])

_EPS = np.finfo(float).eps
# each panel's error estimate never drops below 50 eps times its |f| integral
MIN_REL_TOL = 50.0 * _EPS
ABS_FLOOR = 1e-300
MAX_EVALS = 10**6


@dataclass(frozen=True)
class QuadratureResult:
    value: float
    abs_error_estimate: float
    evaluations: int


class _Piece:
    """A stretch of the real line in the coordinate the rule integrates over."""

    def __init__(self, a, b):
        self.a, self.b = a, b
        if math.isfinite(a) and math.isfinite(b):
            self.kind, self.lo, self.hi = "finite", a, b
        elif math.isfinite(a):
            self.kind, self.lo, self.hi = "right", 0.0, 1.0
        elif math.isfinite(b):
            self.kind, self.lo, self.hi = "left", 0.0, 1.0
        else:
            raise DomainError("doubly infinite piece must be split first")

    def rule(self, f, lo, hi):
        half = 0.5 * (hi - lo)
        centre = 0.5 * (hi + lo)
        s = centre + half * _NODES
        if self.kind == "finite":
            x, jac = s, 1.0
        else:
            d = s / (1.0 - s)
            jac = 1.0 / np.square(1.0 - s)
            x = self.a + d if self.kind == "right" else self.b - d
        y = np.asarray(f(x), dtype=float) * jac
        if not np.all(np.isfinite(y)):
            raise QuadratureError(f"integrand not finite on [{lo!r}, {hi!r}] of piece ({self.a!r}, {self.b!r})")
        kron = half * float(np.dot(_KW, y))
        gauss = half * float(np.dot(_GW, y))
        resabs = abs(half) * float(np.dot(_KW, np.abs(y)))
        mean = kron / (2.0 * half) if half else 0.0
        resasc = abs(half) * float(np.dot(_KW, np.abs(y - mean)))
        err = abs(kron - gauss)
        if resasc != 0.0 and err != 0.0:
            err = resasc * min(1.0, (200.0 * err / resasc) ** 1.5)
        if resabs > 0.0:
            err = max(err, MIN_REL_TOL * resabs)
        return kron, err


def _pieces(a, b, breakpoints):
    if not a < b:
        raise DomainError(f"integration limits must satisfy a < b, got ({a!r}, {b!r})")
    pts = sorted({float(p) for p in breakpoints if a < p < b and math.isfinite(p)})
    if a == -math.inf and b == math.inf and not pts:
        pts = [0.0]
    edges = [a, *pts, b]
    return [_Piece(lo, hi) for lo, hi in zip(edges, edges[1:])]


def integrate(f, a, b, rel_tol=1e-10, breakpoints=(), abs_tol=ABS_FLOOR, max_evals=MAX_EVALS,
              initial_panels=8):
    """Integrate a vectorised ``f`` over (a, b); either limit may be infinite.

    Known kinks go in ``breakpoints``; panels never straddle them.  Raises
    :class:`QuadratureError` carrying the best estimate when ``max_evals``
    integrand evaluations do not reach ``max(rel_tol*|value|, abs_tol)``.
    ``rel_tol`` below the roundoff floor ``MIN_REL_TOL`` is rejected up front.
    """
    if not rel_tol >= MIN_REL_TOL:
        raise DomainError(f"rel_tol must be >= {MIN_REL_TOL!r} (roundoff floor), got {rel_tol!r}")
    heap = []
    order = 0
    evals = 0
    panels = {}
    for piece in _pieces(float(a), float(b), breakpoints):
        k = initial_panels if piece.kind != "finite" else max(1, initial_panels // 2)
        grid = np.linspace(piece.lo, piece.hi, k + 1)
        for lo, hi in zip(grid, grid[1:]):
            val, err = piece.rule(f, lo, hi)
            evals += 15
            panels[order] = (piece, lo, hi, val, err)
            heapq.heappush(heap, (-err, order))
            order += 1

    while True:
        total = math.fsum(p[3] for p in panels.values())
        err_total = math.fsum(p[4] for p in panels.values())
        if err_total <= max(rel_tol * abs(total), abs_tol):
            return QuadratureResult(total, err_total, evals)
        if evals >= max_evals or not heap:
            raise QuadratureError(
                f"quadrature did not converge: estimate {total!r} +/- {err_total!r} after {evals} evaluations",
                estimate=total, abs_error=err_total, evaluations=evals)
        _, key = heapq.heappop(heap)
        piece, lo, hi, val, err = panels[key]
        mid = 0.5 * (lo + hi)
        if not lo < mid < hi:
            # Cannot split further; freeze this panel's contribution.
            continue
        del panels[key]
        for l, h in ((lo, mid), (mid, hi)):
            v, e = piece.rule(f, l, h)
            evals += 15
            panels[order] = (piece, l, h, v, e)
            heapq.heappush(heap, (-e, order))
            order += 1
