"""Riemannian metric ``alpha`` and one-form ``beta`` on a 2-D chart.

Tensors are jets whose batch axes are tensor indices: ``a`` has shape
``(2, 2)``, Christoffel symbols ``Gamma[k, i, j] = Gamma^k_ij``, and a
covariant derivative appends the differentiation index last, so
``b_{i|j}`` is ``bij[i, j]``.  Every derivative step lowers the x-order of
the jets by one; fields are evaluated with ``x_order = 2``.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from . import jet as J
from .errors import DegenerateDenominator, DegenerateForm, SingularMetric
from .expr import ScalarField
from .jet import X1, X2, Jet, JetSpace, jeinsum, seed_point

FIELD_SPACE = JetSpace(2, 0)


def normalized(residual, *terms) -> float:
    """``max|residual| / (1 + max|term|)`` -- the scale-free residual used throughout."""
    scale = max((float(np.max(np.abs(t))) for t in terms if np.size(t)), default=0.0)
    return float(np.max(np.abs(residual))) / (1.0 + scale)


def _seed(x, space=FIELD_SPACE):
    return seed_point(space, (x[0], x[1], 0.0, 0.0), active=(X1, X2))[:2]


@dataclass(frozen=True)
class RiemannData:
    """A metric field ``a_ij(x)``; ``metric(x1, x2)`` returns a (2, 2) jet."""

    metric: Callable[[Jet, Jet], Jet]

    def at(self, x, space=FIELD_SPACE) -> Jet:
        return self.metric(*_seed(x, space))

    @classmethod
    def conformally_flat(cls, sigma: ScalarField | Callable) -> "RiemannData":
        def metric(x1, x2):
            e2 = J.exp(2.0 * sigma(x1, x2))
            zero = e2 * 0.0
            return Jet.stack([Jet.stack([e2, zero]), Jet.stack([zero, e2])])

        return cls(metric)

    @classmethod
    def from_components(cls, fn: Callable[[Jet, Jet], tuple]) -> "RiemannData":
        """``fn(x1, x2) -> (a11, a12, a22)``."""

        def metric(x1, x2):
            a11, a12, a22 = fn(x1, x2)
            return Jet.stack([Jet.stack([a11, a12]), Jet.stack([a12, a22])])

        return cls(metric)


@dataclass(frozen=True)
class OneFormData:
    """A one-form field ``b_i(x)``; ``form(x1, x2)`` returns a (2,) jet."""

    form: Callable[[Jet, Jet], Jet]

    def at(self, x, space=FIELD_SPACE) -> Jet:
        return self.form(*_seed(x, space))

    @classmethod
    def from_components(cls, fn: Callable[[Jet, Jet], tuple]) -> "OneFormData":
        return cls(lambda x1, x2: Jet.stack(list(fn(x1, x2))))


# -- tensor calculus on jets -------------------------------------------------
def inverse(a: Jet) -> Jet:
    det = a[0, 0] * a[1, 1] - a[0, 1] * a[1, 0]
    scale = float(np.max(np.abs(a.c[..., 0])))
    if det.value <= 1e-12 * scale**2:
        raise SingularMetric(f"metric not positive definite (det = {det.value:.3e})", det.value)
    inv_det = J.reciprocal(det)
    return Jet.stack([Jet.stack([a[1, 1], -a[0, 1]]), Jet.stack([-a[1, 0], a[0, 0]])]) * inv_det


def christoffel(a: Jet, a_inv: Jet) -> Jet:
    da = a.grad_x()  # da[i, j, k] = d_k a_ij
    lowered = da.transpose(0, 2, 1) + da - da.transpose(2, 0, 1)
    return 0.5 * jeinsum("kl,lij->kij", a_inv, lowered)


def cov_covector(w: Jet, gamma: Jet) -> Jet:
    return w.grad_x() - jeinsum("mik,m->ik", gamma, w)


def cov_vector(v: Jet, gamma: Jet) -> Jet:
    return v.grad_x() + jeinsum("imk,m->ik", gamma, v)


def cov_covariant2(t: Jet, gamma: Jet) -> Jet:
    return t.grad_x() - jeinsum("mik,mj->ijk", gamma, t) - jeinsum("mjk,im->ijk", gamma, t)


def cov_mixed(t: Jet, gamma: Jet) -> Jet:
    """``T^i_{j|k}`` for a (1,1)-tensor ``t[i, j]``."""
    return t.grad_x() + jeinsum("imk,mj->ijk", gamma, t) - jeinsum("mjk,im->ijk", gamma, t)


def riemann_tensor(a: Jet, gamma: Jet) -> Jet:
    """Fully covariant curvature ``Rbar[j, m, i, k]`` with the 2-D normal form
    ``Rbar_jmik = lambda (a_jk a_mi - a_ij a_mk)``."""
    dg = gamma.grad_x()  # dg[l, i, k, j] = d_j Gamma^l_ik
    up = (
        dg.transpose(0, 1, 3, 2)
        - dg
        + jeinsum("ljm,mik->lijk", gamma, gamma)
        - jeinsum("lkm,mij->lijk", gamma, gamma)
    )
    return -jeinsum("pl,lijk->pijk", a, up)


def _values(j: Jet) -> np.ndarray:
    return np.asarray(j.c[..., 0])


@dataclass
class ABTensorSet:
    """Values of the alpha-beta tensor zoo at one point (index conventions above)."""

    x: np.ndarray
    a: np.ndarray
    a_inv: np.ndarray
    b: np.ndarray
    b_up: np.ndarray
    b2: float
    bij: np.ndarray
    r: np.ndarray
    s: np.ndarray
    r_mixed: np.ndarray
    s_mixed: np.ndarray
    r_vec: np.ndarray  # r_j
    s_vec: np.ndarray  # s_j
    q: np.ndarray
    t: np.ndarray
    q_vec: np.ndarray
    t_vec: np.ndarray
    r_scalar: float  # r = b^i r_i
    theta: float
    r_cov: np.ndarray  # r_{ij|k}
    s_cov: np.ndarray  # s_{ij|k}
    lam: float
    Rbar: np.ndarray
    jets: dict = field(repr=False, default_factory=dict)


def ab_tensors(rm: RiemannData, of: OneFormData, x) -> ABTensorSet:
    x = np.asarray(x, float)
    a = rm.at(x)
    b = of.at(x)
    a_inv = inverse(a)
    gamma = christoffel(a, a_inv)
    bij = cov_covector(b, gamma)
    r = 0.5 * (bij + bij.transpose(1, 0))
    s = 0.5 * (bij - bij.transpose(1, 0))
    b_up = jeinsum("ij,j->i", a_inv, b)
    b2 = jeinsum("i,i->", b_up, b)
    r_mixed = jeinsum("ik,kj->ij", a_inv, r)
    s_mixed = jeinsum("ik,kj->ij", a_inv, s)
    q = jeinsum("im,mj->ij", r, s_mixed)
    t = jeinsum("im,mj->ij", s, s_mixed)
    r_vec = jeinsum("i,ij->j", b_up, r)
    s_vec = jeinsum("i,ij->j", b_up, s)
    q_vec = jeinsum("i,ij->j", b_up, q)
    t_vec = jeinsum("i,ij->j", b_up, t)
    r_scalar = jeinsum("i,i->", b_up, r_vec)
    s_up = jeinsum("ij,j->i", a_inv, s_vec)
    ss = jeinsum("i,i->", s_vec, s_up)
    b2v = float(b2.value)
    theta = float(ss.value) / b2v if b2v > 0 else 0.0
    r_cov = cov_covariant2(r, gamma)
    s_cov = cov_covariant2(s, gamma)
    Rbar = riemann_tensor(a, gamma)
    lam = _gauss_curvature(_values(a), _values(Rbar))
    jets = dict(
        a=a, a_inv=a_inv, gamma=gamma, b=b, b_up=b_up, b2=b2, r=r, s=s,
        r_mixed=r_mixed, s_mixed=s_mixed, r_vec=r_vec, s_vec=s_vec, s_up=s_up,
        q=q, t=t, t_vec=t_vec, ss=ss,
    )
    return ABTensorSet(
        x=x, a=_values(a), a_inv=_values(a_inv), b=_values(b), b_up=_values(b_up),
        b2=b2v, bij=_values(bij), r=_values(r), s=_values(s),
        r_mixed=_values(r_mixed), s_mixed=_values(s_mixed),
        r_vec=_values(r_vec), s_vec=_values(s_vec), q=_values(q), t=_values(t),
        q_vec=_values(q_vec), t_vec=_values(t_vec), r_scalar=float(r_scalar.value),
        theta=theta, r_cov=_values(r_cov), s_cov=_values(s_cov),
        lam=lam, Rbar=_values(Rbar), jets=jets,
    )


def _gauss_curvature(a: np.ndarray, Rbar: np.ndarray) -> float:
    det = a[0, 0] * a[1, 1] - a[0, 1] * a[1, 0]
    # Rbar_1212 = lambda (a_12 a_21 - a_11 a_22)
    return float(-Rbar[0, 1, 0, 1] / det)


def _normal_form(a: np.ndarray, lam: float) -> np.ndarray:
    return lam * (np.einsum("jk,mi->jmik", a, a) - np.einsum("ij,mk->jmik", a, a))


def ricci_tensor(a_inv: np.ndarray, Rbar: np.ndarray) -> np.ndarray:
    """``Ric_mi = a^{jk} Rbar_jmik`` (equals ``lambda a_mi`` in 2-D)."""
    return np.einsum("jk,jmik->mi", a_inv, Rbar)


@dataclass
class AlphaCurvature:
    lam: float
    Rbar: np.ndarray
    ric: np.ndarray
    residual: float


def alpha_curvature(rm: RiemannData, x) -> AlphaCurvature:
    x = np.asarray(x, float)
    a = rm.at(x)
    a_inv = inverse(a)
    Rbar = _values(riemann_tensor(a, christoffel(a, a_inv)))
    av = _values(a)
    lam = _gauss_curvature(av, Rbar)
    model = _normal_form(av, lam)
    return AlphaCurvature(lam, Rbar, ricci_tensor(_values(a_inv), Rbar), normalized(Rbar - model, Rbar))


# -- universal identities ----------------------------------------------------
@dataclass
class RicciIdentityResiduals:
    first: float
    second: float
    third: float
    fourth: float

    def max(self) -> float:
        return max(self.first, self.second, self.third, self.fourth)


def ricci_identity_residuals(
    rm: RiemannData, of: OneFormData, x, y, curvature_scale: float = 1.0
) -> RicciIdentityResiduals:
    """LHS - RHS of the four Ricci identities for ``r``/``s`` (normalized).

    ``curvature_scale`` multiplies the curvature tensor; anything but 1 is a
    deliberately corrupted probe.
    """
    T = ab_tensors(rm, of, x)
    y = np.asarray(y, float)
    jt = T.jets
    gamma = jt["gamma"]
    Rbar = curvature_scale * T.Rbar
    ric = ricci_tensor(T.a_inv, Rbar)
    bu = T.b_up

    # first: s_ij|k = r_ik|j - r_jk|i - b^l Rbar_klij
    rc = T.r_cov
    curv1 = np.einsum("l,klij->ijk", bu, Rbar)
    rhs1 = np.einsum("ikj->ijk", rc) - np.einsum("jki->ijk", rc) - curv1
    first = normalized(T.s_cov - rhs1, T.s_cov, rc, curv1)

    # second: s^k_0|k = r^k_k|0 - r^k_0|k + b^l Ric_l0
    s_mixed_cov = _values(cov_mixed(jt["s_mixed"], gamma))
    r_mixed_cov = _values(cov_mixed(jt["r_mixed"], gamma))
    trace_r = jt["r_mixed"][0, 0] + jt["r_mixed"][1, 1]
    d_trace = np.array([trace_r.partial((1, 0, 0, 0)), trace_r.partial((0, 1, 0, 0))])
    lhs2 = np.einsum("kjk,j->", s_mixed_cov, y)
    t_a = d_trace @ y
    t_b = np.einsum("kjk,j->", r_mixed_cov, y)
    t_c = bu @ ric @ y
    second = normalized(lhs2 - (t_a - t_b + t_c), lhs2, t_a, t_b, t_c)

    # third: b^k s_0|k = r_k s^k_0 - t_0 + b^k b^l r_kl|0 - b^k b^l r_k0|l
    s_vec_cov = _values(cov_covector(jt["s_vec"], gamma))  # [j, k] = s_j|k
    lhs3 = np.einsum("k,j,jk->", bu, y, s_vec_cov)
    u1 = np.einsum("k,kj,j->", T.r_vec, T.s_mixed, y)
    u2 = T.t_vec @ y
    u3 = np.einsum("k,l,klm,m->", bu, bu, rc, y)
    u4 = np.einsum("k,l,kjl,j->", bu, bu, rc, y)
    third = normalized(lhs3 - (u1 - u2 + u3 - u4), lhs3, u1, u2, u3, u4)

    # fourth: s^k_|k = r^k_|k - t^k_k - r^i_j r^j_i - b^i r^k_k|i - b^k b^i Ric_ik
    s_up_cov = _values(cov_vector(jt["s_up"], gamma))
    r_up = jeinsum("ij,j->i", jt["a_inv"], jt["r_vec"])
    r_up_cov = _values(cov_vector(r_up, gamma))
    lhs4 = np.trace(s_up_cov)
    v1 = np.trace(r_up_cov)
    v2 = np.trace(T.a_inv @ T.t)
    v3 = np.trace(T.r_mixed @ T.r_mixed)
    v4 = bu @ d_trace
    v5 = bu @ ric @ bu
    fourth = normalized(lhs4 - (v1 - v2 - v3 - v4 - v5), lhs4, v1, v2, v3, v4, v5)
    return RicciIdentityResiduals(first, second, third, fourth)


@dataclass
class ThetaDecomposition:
    theta: float
    s0_squared: float  # s_0^2 - theta (b^2 alpha^2 - beta^2)
    t00: float  # t_00 + theta alpha^2
    t00_closed: float  # t_00 + (s_m s^m beta^2 + b^2 s_0^2) / b^4
    s_closure: float  # s_ij - (b_i s_j - b_j s_i) / b^2

    def max(self) -> float:
        return max(self.s0_squared, self.t00, self.t00_closed, self.s_closure)


def theta_decomposition(rm: RiemannData, of: OneFormData, x, y, b2_min: float = 1e-12) -> ThetaDecomposition:
    T = ab_tensors(rm, of, x)
    if T.b2 <= b2_min:
        raise DegenerateForm(f"b^2 = {T.b2:.3e} too small for the theta decomposition")
    y = np.asarray(y, float)
    alpha2 = y @ T.a @ y
    beta = T.b @ y
    s0 = T.s_vec @ y
    t00 = y @ T.t @ y
    ss = T.theta * T.b2
    th = T.theta
    closure = (np.outer(T.b, T.s_vec) - np.outer(T.s_vec, T.b)) / T.b2
    return ThetaDecomposition(
        theta=th,
        s0_squared=normalized(s0**2 - th * (T.b2 * alpha2 - beta**2), s0**2, th * T.b2 * alpha2, th * beta**2),
        t00=normalized(t00 + th * alpha2, t00, th * alpha2),
        t00_closed=normalized(
            t00 + (ss * beta**2 + T.b2 * s0**2) / T.b2**2, t00, ss * beta**2 / T.b2**2, s0**2 / T.b2
        ),
        s_closure=normalized(T.s - closure, T.s, closure),
    )


def r00_coefficient(k1: float, k2: float, b2: float) -> float:
    den = 4.0 + (k1 + 3.0 * k2) * b2
    if abs(den) < 1e-12:
        raise DegenerateDenominator(f"4 + (k1 + 3 k2) b^2 = {den:.3e}")
    return (3.0 * k1 + k2 + 4.0 * k1 * k2 * b2) / den


def r00_residual(rm: RiemannData, of: OneFormData, params, x, y=None) -> float:
    """Normalized ``max|r_ij - c (b_i s_j + b_j s_i)|`` for the family coefficient ``c``."""
    T = ab_tensors(rm, of, x)
    c = r00_coefficient(params.k1, params.k2, T.b2)
    model = c * (np.outer(T.b, T.s_vec) + np.outer(T.s_vec, T.b))
    return normalized(T.r - model, T.r, model)


@dataclass
class ConformalKillingResult:
    conditions_residual: float
    c: float
    covderiv_residual: float


def conformal_killing_check(sigma, W, x, n_directions: int = 8) -> ConformalKillingResult:
    """Check a vector field ``W^i`` against the conformal-Killing conditions
    for ``a = e^{2 sigma} delta``, compute ``c`` and the residual of
    ``W_{0|0} = -2 c alpha^2`` on a circle of directions."""
    x = np.asarray(x, float)
    x1, x2 = _seed(x)
    w_up = [W[0](x1, x2), W[1](x1, x2)]
    sig = sigma(x1, x2)
    if not isinstance(sig, Jet):
        sig = Jet.constant(FIELD_SPACE, sig)
    d = lambda j, i: float(j.partial((1, 0, 0, 0) if i == 0 else (0, 1, 0, 0)))
    off = abs(d(w_up[0], 1) + d(w_up[1], 0))
    diag = abs(d(w_up[0], 0) - d(w_up[1], 1))
    tau = d(w_up[0], 0)
    c = -0.5 * (tau + w_up[0].value * d(sig, 0) + w_up[1].value * d(sig, 1))
    rm = RiemannData.conformally_flat(sigma)
    a = rm.at(x)
    gamma = christoffel(a, inverse(a))
    e2 = J.exp(2.0 * sig)
    w_low = Jet.stack([e2 * w_up[0], e2 * w_up[1]])
    wij = _values(cov_covector(w_low, gamma))
    ang = 2.0 * np.pi * np.arange(n_directions) / n_directions
    ys = np.stack([np.cos(ang), np.sin(ang)])
    w00 = np.einsum("in,ij,jn->n", ys, wij, ys)
    alpha2 = np.einsum("in,ij,jn->n", ys, _values(a), ys)
    cov = normalized(w00 + 2.0 * c * alpha2, w00, 2.0 * c * alpha2)
    return ConformalKillingResult(max(off, diag), c, cov)


# -- random test pairs --------------------------------------------------------
def _poly(coeffs: np.ndarray):
    """Bivariate polynomial ``sum c[p, q] x1^p x2^q`` on jets."""

    def fn(x1, x2):
        out = x1 * 0.0 + coeffs[0, 0]
        for p in range(coeffs.shape[0]):
            for q in range(coeffs.shape[1]):
                if (p or q) and coeffs[p, q]:
                    out = out + coeffs[p, q] * (x1**p) * (x2**q)
        return out

    return fn


def random_smooth_pair(rng: np.random.Generator, degree: int = 3, eps: float = 0.1):
    """``a = I + eps Q(x)`` and polynomial ``b`` with PD-ness guaranteed on ``|x| <= 1``.

    Each entry of ``Q`` is a polynomial whose coefficients are bounded so that
    ``|Q_ij(x)| <= 1`` on the unit disc; Gershgorin then keeps ``a`` PD for
    ``eps < 0.5``.
    """
    n = degree + 1

    def coeffs():
        c = rng.uniform(-1.0, 1.0, size=(n, n))
        mask = np.add.outer(np.arange(n), np.arange(n)) <= degree
        c = c * mask
        return c / np.abs(c).sum()

    q11, q12, q22 = (_poly(coeffs()) for _ in range(3))
    b1 = _poly(rng.uniform(-1.0, 1.0, size=(n, n)) * (np.add.outer(np.arange(n), np.arange(n)) <= degree))
    b2 = _poly(rng.uniform(-1.0, 1.0, size=(n, n)) * (np.add.outer(np.arange(n), np.arange(n)) <= degree))
    rm = RiemannData.from_components(
        lambda x1, x2: (1.0 + eps * q11(x1, x2), eps * q12(x1, x2), 1.0 + eps * q22(x1, x2))
    )
    of = OneFormData.from_components(lambda x1, x2: (b1(x1, x2), b2(x1, x2)))
    return rm, of
