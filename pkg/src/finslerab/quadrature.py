"""Quadrature rules used by the family (primitive of tau) and the volume factor."""
from __future__ import annotations

from typing import Callable

import numpy as np

from .errors import QuadratureNonConvergence
from .jet import Jet


def simpson(f: Callable[[np.ndarray], np.ndarray], a, b, tol: float = 1e-12, max_level: int = 16):
    """Integrate ``f`` over ``[a, b]`` elementwise with refinement by interval doubling.

    ``a`` and ``b`` broadcast; each element stops refining once the Richardson
    error estimate ``|S_2n - S_n| / 15`` drops below ``tol``, and the
    extrapolated value is returned.  ``f`` must accept arrays.
    """
    a, b = np.broadcast_arrays(np.asarray(a, float), np.asarray(b, float))
    shape = a.shape
    a = a.ravel()
    b = b.ravel()
    out = np.empty_like(a)
    todo = np.arange(a.size)
    width = b - a

    # level 0: n = 2 intervals
    n = 2
    fa = f(a)
    fb = f(b)
    fm = f(a + 0.5 * width)
    ends = fa + fb
    odd = fm  # sum of f at odd nodes
    even = np.zeros_like(a)  # sum of f at interior even nodes
    prev = width / 6.0 * (ends + 4.0 * odd)
    for _ in range(max_level):
        n *= 2
        h = width[todo] / n
        k = np.arange(1, n, 2)
        nodes = a[todo, None] + h[:, None] * k
        new_odd = f(nodes).sum(axis=-1)
        even[todo] += odd[todo]
        odd[todo] = new_odd
        cur = h / 3.0 * (ends[todo] + 4.0 * odd[todo] + 2.0 * even[todo])
        err = np.abs(cur - prev[todo]) / 15.0
        done = err <= tol
        out[todo[done]] = cur[done] + (cur[done] - prev[todo][done]) / 15.0
        prev[todo] = cur
        todo = todo[~done]
        if todo.size == 0:
            return out.reshape(shape)
    for i in todo:
        out[i] = _adaptive_simpson(f, a[i], b[i], tol)
    return out.reshape(shape)


def _adaptive_simpson(f, a: float, b: float, tol: float, max_depth: int = 60) -> float:
    """Locally refined Simpson rule for integrands with sharp features (near-poles).

    All pending panels are refined together so ``f`` sees one array per sweep.
    A panel is accepted when its halves agree to its share of ``tol``, or when
    the disagreement is at rounding level for the panel's magnitude.
    """
    m = 0.5 * (a + b)
    fa, fm, fb = (float(v) for v in f(np.array([a, m, b])))
    # panel rows: a, b, f(a), f(m), f(b), whole-panel estimate, tolerance share
    whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb)
    panels = np.array([[a, b, fa, fm, fb, whole, tol]])
    total = 0.0
    for _ in range(max_depth):
        lo, hi, fl, fc, fh, est, share = panels.T
        mid = 0.5 * (lo + hi)
        q = f(np.concatenate([0.5 * (lo + mid), 0.5 * (mid + hi)]))
        fq1, fq3 = q[: lo.size], q[lo.size :]
        left = (mid - lo) / 6.0 * (fl + 4.0 * fq1 + fc)
        right = (hi - mid) / 6.0 * (fc + 4.0 * fq3 + fh)
        diff = left + right - est
        floor = 64.0 * np.finfo(float).eps * (np.abs(left) + np.abs(right))
        ok = (np.abs(diff) <= 15.0 * share) | (np.abs(diff) <= floor)
        if not np.all(np.isfinite(diff)):
            break
        total += float(np.sum((left + right + diff / 15.0)[ok]))
        keep = ~ok
        if not np.any(keep):
            return total
        k = keep
        panels = np.concatenate([
            np.stack([lo[k], mid[k], fl[k], fq1[k], fc[k], left[k], 0.5 * share[k]], axis=1),
            np.stack([mid[k], hi[k], fc[k], fq3[k], fh[k], right[k], 0.5 * share[k]], axis=1),
        ])
        if panels.shape[0] > 2**14:
            break
    raise QuadratureNonConvergence(
        f"adaptive Simpson rule did not reach tolerance {tol:g} on [{a:g}, {b:g}]"
    )


def periodic_trapezoid(
    f: Callable[[np.ndarray], Jet],
    rtol: float = 1e-11,
    n0: int = 16,
    nmax: int = 2**14,
) -> tuple[Jet, int]:
    """Integral over ``[0, 2 pi)`` of a jet-valued periodic integrand.

    ``f(theta)`` receives a 1-d array of angles and returns a jet whose last
    batch axis runs over those angles.  The node count doubles (re-using old
    nodes) until successive estimates agree to ``rtol`` relative, coefficient
    by coefficient against the largest coefficient magnitude.  Returns the
    integral jet and the number of nodes used.
    """
    n = n0
    theta = 2.0 * np.pi * np.arange(n) / n
    total = f(theta).sum(axis=-1)
    estimate = total * (2.0 * np.pi / n)
    while n < nmax:
        theta = 2.0 * np.pi * (np.arange(n) + 0.5) / n
        total = total + f(theta).sum(axis=-1)
        n *= 2
        new = total * (2.0 * np.pi / n)
        scale = np.max(np.abs(new.c), axis=-1, keepdims=True)
        if np.all(np.abs(new.c - estimate.c) <= rtol * scale):
            return new, n
        estimate = new
    raise QuadratureNonConvergence(
        f"periodic trapezoid rule not converged to {rtol:g} at {n} nodes"
    )

