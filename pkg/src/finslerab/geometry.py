"""Finsler invariants of a 2-D Finsler function, computed from jets of F.

All functions take ``x`` and ``y`` as array-likes of shape ``(2, ...)``; the
trailing shapes broadcast, so one call can evaluate many points and many
directions at once.  Derivatives come from a single jet of ``F`` with
``x_order = 2`` and ``y_order = 4``, which is exactly enough for the Riemann
curvature of the spray.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from . import jet as J
from .errors import DomainError, SingularMetric
from .expr import ScalarField
from .jet import X1, X2, Y1, Y2, Jet, JetSpace, seed_point
from .quadrature import periodic_trapezoid

CURVATURE_SPACE = JetSpace(2, 4)
VOLUME_SPACE = JetSpace(1, 0)
SINGULAR_RTOL = 1e-12

Domain = Callable[[np.ndarray, np.ndarray], np.ndarray]


@dataclass(frozen=True)
class FinslerFunction:
    """``func(x1, x2, y1, y2) -> F`` on jets, plus an optional admissibility test.

    ``domain(x, y)`` receives arrays of shape ``(2, ...)`` and returns a
    boolean array; ``None`` means everywhere admissible.
    """

    func: Callable[[Jet, Jet, Jet, Jet], Jet]
    domain: Optional[Domain] = None
    name: str = ""

    def __call__(self, x1, x2, y1, y2) -> Jet:
        return self.func(x1, x2, y1, y2)

    def jet(self, x, y, space: JetSpace = CURVATURE_SPACE, active=(X1, X2, Y1, Y2)) -> Jet:
        x, y = _broadcast(x, y)
        seeds = seed_point(space, (x[0], x[1], y[0], y[1]), active=active)
        out = self(*seeds)
        if out.shape != x.shape[1:]:
            out = out + np.zeros(x.shape[1:])
        return out

    def value(self, x, y):
        return self.jet(x, y, JetSpace(0, 0), active=()).value

    def check_domain(self, x, y):
        x, y = _broadcast(x, y)
        if np.any(np.hypot(y[0], y[1]) == 0):
            raise DomainError("direction y must be non-zero")
        if self.domain is not None:
            ok = np.asarray(self.domain(x, y), bool)
            if not np.all(ok):
                bad = np.argwhere(~np.broadcast_to(ok, x.shape[1:]))
                where = tuple(bad[0]) if bad.size else ()
                raise DomainError(f"({self.name or 'F'}) sample {where} outside the admissible domain")


def _broadcast(x, y):
    x = np.asarray(x, float)
    y = np.asarray(y, float)
    shape = np.broadcast_shapes(x.shape[1:], y.shape[1:])
    return np.broadcast_to(x, (2,) + shape), np.broadcast_to(y, (2,) + shape)


# -- simple constructors ----------------------------------------------------
def euclidean() -> FinslerFunction:
    return FinslerFunction(lambda x1, x2, y1, y2: J.sqrt(y1 * y1 + y2 * y2), name="euclidean")


def riemannian(metric: Callable[[Jet, Jet], tuple], name: str = "riemannian") -> FinslerFunction:
    """``F = sqrt(a_ij(x) y^i y^j)`` for ``metric(x1, x2) -> (a11, a12, a22)``."""

    def func(x1, x2, y1, y2):
        a11, a12, a22 = metric(x1, x2)
        return J.sqrt(a11 * y1 * y1 + 2.0 * a12 * y1 * y2 + a22 * y2 * y2)

    return FinslerFunction(func, name=name)


def conformal(sigma: ScalarField | Callable[[Jet, Jet], Jet], name: str = "conformal") -> FinslerFunction:
    """``F = e^{sigma(x)} |y|``."""

    def func(x1, x2, y1, y2):
        return J.exp(sigma(x1, x2)) * J.sqrt(y1 * y1 + y2 * y2)

    return FinslerFunction(func, name=name)


# -- core computations -------------------------------------------------------
@dataclass
class _Spray:
    F: Jet
    g: list  # 2x2 nested list of jets in S(2, 2)
    G: list  # two jets, two y-orders below the input space
    y: tuple


def _inverse_2x2(g):
    det = g[0][0] * g[1][1] - g[0][1] * g[0][1]
    scale = np.maximum.reduce([np.abs(g[0][0].value), np.abs(g[1][1].value), np.abs(g[0][1].value)])
    dv = np.asarray(det.value)
    if np.any(dv <= SINGULAR_RTOL * np.asarray(scale) ** 2):
        worst = float(np.min(dv / np.maximum(np.asarray(scale) ** 2, 1e-300)))
        raise SingularMetric(f"fundamental tensor not positive definite (det/scale^2 = {worst:.3e})", worst)
    inv_det = J.reciprocal(det)
    return [[g[1][1] * inv_det, -g[0][1] * inv_det], [-g[0][1] * inv_det, g[0][0] * inv_det]]


def _spray(F: FinslerFunction, x, y, space: JetSpace = CURVATURE_SPACE) -> _Spray:
    F.check_domain(x, y)
    x, y = _broadcast(x, y)
    x1, x2, y1, y2 = seed_point(space, (x[0], x[1], y[0], y[1]))
    Fj = F(x1, x2, y1, y2)
    E = Fj * Fj
    ys = (y1, y2)
    Ey = [E.diff(Y1), E.diff(Y2)]
    g = [[0.5 * Ey[i].diff(Y1 + j) for j in range(2)] for i in range(2)]
    ginv = _inverse_2x2(g)
    Ex = [E.diff(X1), E.diff(X2)]
    w = [Ex[0].diff(Y1 + l) * ys[0] + Ex[1].diff(Y1 + l) * ys[1] - Ex[l] for l in range(2)]
    G = [0.25 * (ginv[i][0] * w[0] + ginv[i][1] * w[1]) for i in range(2)]
    G = [Gi.truncate(JetSpace(space.x_order - 1, space.y_order - 2)) for Gi in G]
    return _Spray(Fj, g, G, (y[0], y[1]))


def _d(jet: Jet, *vars_) -> np.ndarray:
    idx = [0, 0, 0, 0]
    for v in vars_:
        idx[v] += 1
    return np.asarray(jet.partial(idx))


def _riemann_from_spray(sp: _Spray) -> np.ndarray:
    G = sp.G
    y = sp.y
    X = (X1, X2)
    Y = (Y1, Y2)
    shape = np.shape(G[0].value)
    R = np.zeros(shape + (2, 2))
    for i in range(2):
        for k in range(2):
            term = 2.0 * _d(G[i], X[k])
            for j in range(2):
                term = term - y[j] * _d(G[i], X[j], Y[k])
                term = term + 2.0 * np.asarray(G[j].value) * _d(G[i], Y[j], Y[k])
                term = term - _d(G[i], Y[j]) * _d(G[j], Y[k])
            R[..., i, k] = term
    return R


def fundamental_tensor(F: FinslerFunction, x, y) -> np.ndarray:
    """``g_ij = 1/2 [F^2]_{y^i y^j}`` as an array of shape ``(..., 2, 2)``."""
    F.check_domain(x, y)
    x, y = _broadcast(x, y)
    x1, x2, y1, y2 = seed_point(JetSpace(0, 2), (x[0], x[1], y[0], y[1]), active=(Y1, Y2))
    E = F(x1, x2, y1, y2) ** 2
    g = np.empty(x.shape[1:] + (2, 2))
    for i in range(2):
        for j in range(2):
            idx = [0, 0, 0, 0]
            idx[Y1 + i] += 1
            idx[Y1 + j] += 1
            g[..., i, j] = 0.5 * E.partial(idx)
    det = g[..., 0, 0] * g[..., 1, 1] - g[..., 0, 1] * g[..., 1, 0]
    scale = np.max(np.abs(g), axis=(-2, -1))
    if np.any(det <= SINGULAR_RTOL * scale**2):
        raise SingularMetric("fundamental tensor not positive definite", float(np.min(det)))
    return g


def spray_coefficients(F: FinslerFunction, x, y) -> np.ndarray:
    """Geodesic coefficients ``G^i``, shape ``(..., 2)``."""
    sp = _spray(F, x, y, JetSpace(1, 2))
    return np.stack([np.asarray(sp.G[0].value), np.asarray(sp.G[1].value)], axis=-1)


def riemann_curvature(F: FinslerFunction, x, y) -> tuple[np.ndarray, np.ndarray]:
    """``(R^i_k, Ric)``; ``R`` has shape ``(..., 2, 2)``."""
    R = _riemann_from_spray(_spray(F, x, y))
    return R, R[..., 0, 0] + R[..., 1, 1]


def _flag_from(sp: _Spray, R: np.ndarray):
    F2 = np.asarray(sp.F.value) ** 2
    Ric = R[..., 0, 0] + R[..., 1, 1]
    K = Ric / F2
    g = np.stack([np.stack([np.asarray(sp.g[i][j].value) for j in range(2)], -1) for i in range(2)], -2)
    y = np.stack(np.broadcast_arrays(*sp.y), axis=-1)
    y_low = np.einsum("...kj,...j->...k", g, y)
    model = K[..., None, None] * (F2[..., None, None] * np.eye(2) - y[..., :, None] * y_low[..., None, :])
    residual = np.max(np.abs(R - model), axis=(-2, -1))
    return K, residual, g


def flag_curvature(F: FinslerFunction, x, y) -> tuple[np.ndarray, np.ndarray]:
    """``(K, flag_residual)`` with ``K = Ric / F^2``."""
    sp = _spray(F, x, y)
    K, residual, _ = _flag_from(sp, _riemann_from_spray(sp))
    return K, residual


def bh_volume_factor(F: FinslerFunction, x, rtol: float = 1e-11, nmax: int = 2**14):
    """Busemann-Hausdorff factor ``sigma_F(x)`` and ``d ln sigma_F / dx``.

    The F-unit ball has area ``1/2 * integral F(x, e(t))^-2 dt``; the
    x-derivatives are differentiated under the integral sign through x-jets.
    Returns ``(sigma, dlnsigma)`` with shapes ``(...)`` and ``(..., 2)``.
    """
    x = np.asarray(x, float)
    x1 = x[0][..., None]
    x2 = x[1][..., None]

    def integrand(theta):
        y1 = np.cos(theta)
        y2 = np.sin(theta)
        seeds = seed_point(VOLUME_SPACE, (x1, x2, y1, y2), active=(X1, X2))
        f = F(*seeds)
        return 0.5 * J.reciprocal(f * f)

    area, _ = periodic_trapezoid(integrand, rtol=rtol, nmax=nmax)
    if np.any(np.asarray(area.value) <= 0):
        raise DomainError("F-unit ball has non-positive area")
    log_sigma = np.log(np.pi) - J.log(area)
    sigma = np.pi / np.asarray(area.value)
    dln = np.stack([np.asarray(log_sigma.partial((1, 0, 0, 0))), np.asarray(log_sigma.partial((0, 1, 0, 0)))], -1)
    return sigma, dln


def _s_from(sp: _Spray, dln: np.ndarray) -> np.ndarray:
    div = _d(sp.G[0], Y1) + _d(sp.G[1], Y2)
    return div - (sp.y[0] * dln[..., 0] + sp.y[1] * dln[..., 1])


def s_curvature(F: FinslerFunction, x, y) -> np.ndarray:
    sp = _spray(F, x, y, JetSpace(1, 3))
    _, dln = bh_volume_factor(F, np.asarray(x, float))
    return _s_from(sp, dln)


@dataclass
class CurvatureSample:
    x: np.ndarray
    y: np.ndarray
    F: np.ndarray
    g: np.ndarray
    G: np.ndarray
    R: np.ndarray
    Ric: np.ndarray
    K: np.ndarray
    S: np.ndarray
    flag_residual: np.ndarray


def curvature_sample(F: FinslerFunction, x, y, with_s: bool = True) -> CurvatureSample:
    """Every pointwise invariant in one pass (one jet of F, one volume quadrature).

    ``x`` may carry singleton axes where only ``y`` varies, e.g. ``x`` of shape
    ``(2, P, 1)`` with ``y`` of shape ``(2, P, D)``; the volume factor is then
    computed once per point.
    """
    x = np.asarray(x, float)
    sp = _spray(F, x, y)
    R = _riemann_from_spray(sp)
    K, residual, g = _flag_from(sp, R)
    xb, yb = _broadcast(x, y)
    if with_s:
        _, dln = bh_volume_factor(F, x)
        dln = np.broadcast_to(dln, xb.shape[1:] + (2,))
        S = _s_from(sp, dln)
    else:
        S = np.full(xb.shape[1:], np.nan)
    G = np.stack([np.asarray(sp.G[0].value), np.asarray(sp.G[1].value)], axis=-1)
    return CurvatureSample(
        x=np.moveaxis(xb, 0, -1),
        y=np.moveaxis(yb, 0, -1),
        F=np.asarray(sp.F.value),
        g=g,
        G=G,
        R=R,
        Ric=R[..., 0, 0] + R[..., 1, 1],
        K=K,
        S=S,
        flag_residual=residual,
    )
