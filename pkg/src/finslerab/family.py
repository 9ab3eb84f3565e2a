"""The two-parameter family ``phi(s)`` and its Einstein (alpha, beta) structures.

``phi(s) = [(1 + k1 s^2)(1 + k2 s^2)]^(1/4) exp(Phi(s))`` with ``Phi`` the
primitive of ``tau(s) = eps sqrt(k2 - k1) / (2 (1 + k1 s^2) sqrt(1 + k2 s^2))``
vanishing at 0.  A structure triple ``(B, u, v)`` with ``u + i v`` holomorphic
and ``u B_1 + v B_2 = 0`` determines ``alpha`` and ``beta`` pointwise.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import jet as J
from .ab import (
    FIELD_SPACE,
    OneFormData,
    RiemannData,
    ab_tensors,
    christoffel,
    cov_covector,
    inverse,
    jeinsum,
    normalized,
)
from .errors import DomainError, InvalidParameters, PreconditionFailed, StructureViolation
from .expr import ScalarField
from .geometry import FinslerFunction
from .jet import X1, X2, Jet, JetSpace, seed_point
from .quadrature import simpson

MARGIN = 1e-6
PHI_TOL = 1e-12
SIGN_TOL = 1e-8


@dataclass(frozen=True)
class FamilyParams:
    k1: float
    k2: float
    eps: int = 1

    def __post_init__(self):
        if not (math.isfinite(self.k1) and math.isfinite(self.k2)):
            raise InvalidParameters("k1 and k2 must be finite")
        if not self.k2 > self.k1:
            raise InvalidParameters(f"need k2 > k1, got k1={self.k1}, k2={self.k2}")
        if self.eps not in (1, -1):
            raise InvalidParameters(f"eps must be +1 or -1, got {self.eps}")

    @property
    def a1(self) -> float:
        """Signed ``tau(0)``: ``eps sqrt(k2 - k1) / 2``."""
        return self.eps * math.sqrt(self.k2 - self.k1) / 2.0


# -- phi and tau ---------------------------------------------------------------
def _check_s(p: FamilyParams, s2):
    if np.any(1.0 + p.k1 * s2 <= 0) or np.any(1.0 + p.k2 * s2 <= 0):
        raise DomainError(f"s outside the domain of phi for k1={p.k1}, k2={p.k2}")


def tau_eval(p: FamilyParams, s):
    """``tau(s)`` for numbers, arrays or jets."""
    if isinstance(s, Jet):
        s2 = s * s
        _check_s(p, s2.value)
        return p.a1 * J.reciprocal((1.0 + p.k1 * s2) * J.sqrt(1.0 + p.k2 * s2))
    s = np.asarray(s, float)
    _check_s(p, s * s)
    return p.a1 / ((1.0 + p.k1 * s * s) * np.sqrt(1.0 + p.k2 * s * s))


def primitive_value(p: FamilyParams, s, tol: float = PHI_TOL):
    """``Phi(s) = int_0^s tau`` by Simpson quadrature (vectorized)."""
    s = np.asarray(s, float)
    _check_s(p, s * s)
    return simpson(lambda t: tau_eval(p, t), 0.0, s, tol=tol)


def primitive_closed_form(p: FamilyParams, s):
    """``Phi(s) = eps/2 atanh(sqrt(k2 - k1) s / sqrt(1 + k2 s^2))``; independent check on the quadrature."""
    s = np.asarray(s, float)
    return p.eps * 0.5 * np.arctanh(math.sqrt(p.k2 - p.k1) * s / np.sqrt(1.0 + p.k2 * s * s))


def phi_eval(p: FamilyParams, s, tol: float = PHI_TOL):
    """``phi(s)`` for numbers, arrays or jets (jets carry exact derivatives)."""
    if isinstance(s, Jet):
        s2 = s * s
        _check_s(p, s2.value)
        Phi = J.primitive(s, primitive_value(p, s.value, tol), lambda t: tau_eval(p, t))
        radicand = (1.0 + p.k1 * s2) * (1.0 + p.k2 * s2)
        return J.pow_real(radicand, 0.25) * J.exp(Phi)
    s = np.asarray(s, float)
    _check_s(p, s * s)
    radicand = (1.0 + p.k1 * s * s) * (1.0 + p.k2 * s * s)
    return radicand**0.25 * np.exp(primitive_value(p, s, tol))


def phi_derivatives(p: FamilyParams, s, tol: float = PHI_TOL) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """``(phi, phi', phi'')`` at ``s`` from a second-order jet."""
    t = seed_point(JetSpace(2, 0), (np.asarray(s, float), 0.0, 0.0, 0.0), active=(X1,))[0]
    f = phi_eval(p, t, tol)
    return (
        np.asarray(f.value),
        np.asarray(f.partial((1, 0, 0, 0))),
        np.asarray(f.partial((2, 0, 0, 0))),
    )


# -- positivity ------------------------------------------------------------------
def f_coefficients(k1, k2, b2):
    A = 2 * k1 * k2 * (k1 + k2) * b2 + 3 * k1**2 + 2 * k2**2 - k1 * k2
    B = k1 * (9 * k2 - k1) * b2 + 3 * k2 + 5 * k1
    C = (3 * k2 + k1) * b2 + 4
    return A, B, C


def h_coefficients(k1, k2, b2):
    A = (
        4 * k1 * k2**2 * (3 * k2 + k1) * b2**2
        + 4 * k2 * (3 * k2**2 + 3 * k1**2 + 2 * k1 * k2) * b2
        - 6 * k1 * k2
        + 9 * k1**2
        + 13 * k2**2
    )
    B = 4 * k1 * k2 * (9 * k2 - k1) * b2**2 + 2 * (9 * k2 - k1) * (3 * k1 + k2) * b2 + 12 * k1 + 20 * k2
    C = (4 + k1 * b2 + 3 * k2 * b2) ** 2
    return A, B, C


def quadratic_min(A, B, C, lo, hi) -> float:
    """Minimum of ``A t^2 + B t + C`` over ``[lo, hi]``."""
    cands = [lo, hi]
    if A != 0:
        v = -B / (2 * A)
        if lo < v < hi:
            cands.append(v)
    return min(A * t * t + B * t + C for t in cands)


@dataclass
class PositivityVerdict:
    pd: bool
    condition_value: float
    sampled_min: tuple[float, float, float]
    f_h_minima: tuple[float, float]
    sampling_agrees: bool


def positivity_check(p: FamilyParams, b: float, nodes: int = 201) -> PositivityVerdict:
    """Regularity of ``alpha phi(beta/alpha)`` for ``||beta||_alpha = b``.

    Samples the three strict inequalities on ``[-b, b]``; nodes where ``phi``
    is undefined count as violations (value ``-inf``).  Only signs matter
    here, and nodes can sit next to the pole of ``tau`` where rounding in the
    integrand alone exceeds ``PHI_TOL``, so the quadrature runs at
    ``SIGN_TOL``.
    """
    b = float(b)
    b2 = b * b
    cond = 1.0 + p.k1 * b2
    pd = cond > 0
    s = np.linspace(-b, b, nodes)
    defined = (1.0 + p.k1 * s * s > 0) & (1.0 + p.k2 * s * s > 0)
    q = np.full((3, nodes), -np.inf)
    if np.any(defined):
        with np.errstate(all="ignore"):
            f, d1, d2 = phi_derivatives(p, s[defined], SIGN_TOL)
            sd = s[defined]
            q[0, defined] = f
            q[1, defined] = f - sd * d1
            q[2, defined] = f - sd * d1 + (b2 - sd * sd) * d2
    q[~np.isfinite(q)] = -np.inf
    mins = tuple(float(v) for v in q.min(axis=1))
    sampled_ok = all(m > 0 for m in mins)
    fm = quadratic_min(*f_coefficients(p.k1, p.k2, b2), 0.0, b2)
    hm = quadratic_min(*h_coefficients(p.k1, p.k2, b2), 0.0, b2)
    return PositivityVerdict(pd, cond, mins, (fm, hm), sampled_ok == pd)


# -- structure data ----------------------------------------------------------------
@dataclass(frozen=True)
class Domain:
    """Box ``[[x1lo, x1hi], [x2lo, x2hi]]`` minus points where any exclusion field is > 0."""

    box: tuple[tuple[float, float], tuple[float, float]] = ((-1.0, 1.0), (-1.0, 1.0))
    exclusions: tuple[ScalarField, ...] = ()

    def contains(self, x1, x2):
        x1 = np.asarray(x1, float)
        x2 = np.asarray(x2, float)
        (a, b), (c, d) = self.box
        ok = (x1 >= a) & (x1 <= b) & (x2 >= c) & (x2 <= d)
        for ex in self.exclusions:
            with np.errstate(all="ignore"):
                ok = ok & ~(np.asarray(ex.value(x1, x2)) > 0)
        return ok


@dataclass(frozen=True)
class StructureData:
    u: ScalarField
    v: ScalarField
    B: ScalarField
    domain: Domain = field(default_factory=Domain)


def polynomial_fields(coeffs) -> tuple[str, str]:
    """Real and imaginary parts of ``sum c_n z^n`` (``z = x1 + i x2``) as expression text."""
    terms_u: dict[tuple[int, int], float] = {}
    terms_v: dict[tuple[int, int], float] = {}
    for n, c in enumerate(coeffs):
        c = complex(*c) if isinstance(c, (list, tuple)) else complex(c)
        for k in range(n + 1):
            w = math.comb(n, k) * (1j) ** k * c
            key = (n - k, k)
            terms_u[key] = terms_u.get(key, 0.0) + w.real
            terms_v[key] = terms_v.get(key, 0.0) + w.imag
    return _poly_text(terms_u), _poly_text(terms_v)


def _poly_text(terms) -> str:
    parts = []
    for (p, q), c in sorted(terms.items()):
        if c == 0:
            continue
        factors = [repr(float(c))]
        if p:
            factors.append("x1" if p == 1 else f"x1^{p}")
        if q:
            factors.append("x2" if q == 1 else f"x2^{q}")
        parts.append("*".join(factors))
    return " + ".join(parts) if parts else "0"


def structure_residuals(d: StructureData, x) -> np.ndarray:
    """Normalized residuals of ``u1 - v2``, ``u2 + v1``, ``u B1 + v B2`` (last axis)."""
    x = np.asarray(x, float)
    x1, x2 = seed_point(JetSpace(1, 0), (x[0], x[1], 0.0, 0.0), active=(X1, X2))[:2]
    u, v, B = d.u(x1, x2), d.v(x1, x2), d.B(x1, x2)
    g = lambda j, i: np.asarray(j.partial((1, 0, 0, 0) if i == 0 else (0, 1, 0, 0)))
    u1, u2, v1, v2, B1, B2 = g(u, 0), g(u, 1), g(v, 0), g(v, 1), g(B, 0), g(B, 1)
    uv, vv = np.asarray(u.value), np.asarray(v.value)
    res = [
        np.abs(u1 - v2) / (1 + np.maximum(np.abs(u1), np.abs(v2))),
        np.abs(u2 + v1) / (1 + np.maximum(np.abs(u2), np.abs(v1))),
        np.abs(uv * B1 + vv * B2) / (1 + np.maximum(np.abs(uv * B1), np.abs(vv * B2))),
    ]
    return np.stack(np.broadcast_arrays(*res), axis=-1)


EQUATIONS = ("u1 = v2", "u2 = -v1", "u B1 + v B2 = 0")


def build_structure(
    B: str,
    u: str | None = None,
    v: str | None = None,
    f_coeffs=None,
    domain: Domain | None = None,
    tol: float = 1e-10,
    grid: int = 9,
) -> StructureData:
    """Parse and validate a structure triple on a ``grid x grid`` sample of the domain."""
    if f_coeffs is not None:
        if u is not None or v is not None:
            raise ValueError("give either f_coeffs or (u, v), not both")
        u, v = polynomial_fields(f_coeffs)
    if u is None or v is None:
        raise ValueError("u and v are required")
    d = StructureData(
        ScalarField.from_text(u), ScalarField.from_text(v), ScalarField.from_text(B), domain or Domain()
    )
    (a, b), (c, e) = d.domain.box
    g1, g2 = np.meshgrid(np.linspace(a, b, grid), np.linspace(c, e, grid), indexing="ij")
    keep = d.domain.contains(g1, g2)
    pts = np.stack([g1[keep], g2[keep]])
    if pts.shape[1]:
        res = structure_residuals(d, pts)
        worst = np.unravel_index(np.argmax(res), res.shape)
        if res[worst] > tol:
            raise StructureViolation(EQUATIONS[worst[1]], pts[:, worst[0]], float(res[worst]))
    return d


# -- alpha and beta -----------------------------------------------------------------
def _alpha_beta_fields(p: FamilyParams, B: Jet, u: Jet, v: Jet):
    """``(e^{2 sigma}, b_1, b_2)`` as jets."""
    uv2 = u * u + v * v
    one_k1 = 1.0 + p.k1 * B
    one_k2 = 1.0 + p.k2 * B
    e2sigma = B / (uv2 * J.pow_real(one_k1, 1.5) * J.sqrt(one_k2))
    scale = B / (J.pow_real(one_k1, 0.75) * J.pow_real(one_k2, 0.25) * uv2)
    return e2sigma, scale * u, scale * v


def admissible(p: FamilyParams, d: StructureData, x, margin: float = MARGIN):
    """Domain membership plus the margins ``B, u^2 + v^2, 1 + k1 B, 1 + k2 B > margin``."""
    x = np.asarray(x, float)
    with np.errstate(all="ignore"):
        Bv = np.asarray(d.B.value(x[0], x[1]))
        uv2 = np.asarray(d.u.value(x[0], x[1])) ** 2 + np.asarray(d.v.value(x[0], x[1])) ** 2
        ok = d.domain.contains(x[0], x[1])
        ok = ok & (Bv > margin) & (uv2 > margin) & (1 + p.k1 * Bv > margin) & (1 + p.k2 * Bv > margin)
    return ok & np.isfinite(Bv) & np.isfinite(uv2)


def construct_alpha_beta(p: FamilyParams, d: StructureData, x=None) -> tuple[RiemannData, OneFormData]:
    """The metric ``a = e^{2 sigma} delta`` and form ``b`` of the structure triple.

    With ``x`` given, the point is checked against the admissibility margins.
    """
    if x is not None and not np.all(admissible(p, d, x)):
        raise DomainError(f"x={tuple(float(v) for v in np.asarray(x, float))} violates the structure margins")

    def metric(x1, x2):
        e2, _, _ = _alpha_beta_fields(p, d.B(x1, x2), d.u(x1, x2), d.v(x1, x2))
        zero = e2 * 0.0
        return Jet.stack([Jet.stack([e2, zero]), Jet.stack([zero, e2])])

    def form(x1, x2):
        _, b1, b2 = _alpha_beta_fields(p, d.B(x1, x2), d.u(x1, x2), d.v(x1, x2))
        return Jet.stack([b1, b2])

    return RiemannData(metric), OneFormData(form)


def assemble_finsler(p: FamilyParams, d: StructureData) -> FinslerFunction:
    """``F = alpha phi(beta / alpha)`` evaluated entirely in jets."""

    def func(x1, x2, y1, y2):
        e2, b1, b2 = _alpha_beta_fields(p, d.B(x1, x2), d.u(x1, x2), d.v(x1, x2))
        alpha = J.sqrt(e2 * (y1 * y1 + y2 * y2))
        beta = b1 * y1 + b2 * y2
        return alpha * phi_eval(p, beta / alpha)

    def domain(x, y):
        return admissible(p, d, x)

    return FinslerFunction(func, domain, name=f"family(k1={p.k1}, k2={p.k2}, eps={p.eps:+d})")


def sqrt_metric(d: StructureData, p: FamilyParams) -> FinslerFunction:
    """``sqrt(alpha (alpha + eps beta))`` from the same alpha, beta (reference for k1=-1, k2=0)."""

    def func(x1, x2, y1, y2):
        e2, b1, b2 = _alpha_beta_fields(p, d.B(x1, x2), d.u(x1, x2), d.v(x1, x2))
        alpha = J.sqrt(e2 * (y1 * y1 + y2 * y2))
        beta = b1 * y1 + b2 * y2
        return J.sqrt(alpha * (alpha + p.eps * beta))

    return FinslerFunction(func, name="square-root")


# -- closed-form curvature -------------------------------------------------------------
@dataclass
class ClosedFormK:
    K: float
    branch: str  # "v" uses (B1/v)^2, "u" uses (B2/u)^2
    branch_gap: float  # relative disagreement of the two quotients when both are usable


def _field_data(d: StructureData, x):
    x1, x2 = seed_point(FIELD_SPACE, (x[0], x[1], 0.0, 0.0), active=(X1, X2))[:2]
    B, u, v = d.B(x1, x2), d.u(x1, x2), d.v(x1, x2)
    return dict(
        B=B.value,
        B1=B.partial((1, 0, 0, 0)),
        B2=B.partial((0, 1, 0, 0)),
        B11=B.partial((2, 0, 0, 0)),
        B22=B.partial((0, 2, 0, 0)),
        u=u.value,
        v=v.value,
    )


def quotient_sq(fd, delta: float = MARGIN):
    """``(B1/v)^2`` or its replacement ``(B2/u)^2``, choosing the larger denominator."""
    u, v = fd["u"], fd["v"]
    if max(abs(u), abs(v)) <= delta:
        raise DomainError("u and v both vanish; the quotient term is undefined")
    qv = (fd["B1"] / v) ** 2 if abs(v) > delta else None
    qu = (fd["B2"] / u) ** 2 if abs(u) > delta else None
    gap = 0.0
    if qv is not None and qu is not None:
        gap = abs(qv - qu) / max(1.0, abs(qv), abs(qu))
    if abs(v) >= abs(u):
        return qv, "v", gap
    return qu, "u", gap


def closed_form_K(p: FamilyParams, d: StructureData, x) -> ClosedFormK:
    x = np.asarray(x, float)
    if not admissible(p, d, x):
        raise DomainError(f"x={tuple(float(v) for v in x)} outside the admissible domain")
    fd = _field_data(d, x)
    B = fd["B"]
    uv2 = fd["u"] ** 2 + fd["v"] ** 2
    q, branch, gap = quotient_sq(fd)
    s1 = math.sqrt(1 + p.k1 * B)
    s2 = math.sqrt(1 + p.k2 * B)
    brace = 2 * s1 * (fd["B11"] + fd["B22"]) - uv2 * (2 + 3 * p.k1 * B) / (B * s1) * q
    return ClosedFormK(-uv2 * s2 / (4 * B * B) * brace, branch, gap)


# -- deformation and rigidity ---------------------------------------------------------
def deform_and_killing(p: FamilyParams, rm: RiemannData, of: OneFormData, x):
    """Rescale ``beta`` by ``(1 + k1 b^2)^(-3/4) (1 + k2 b^2)^(-1/4)`` and return
    ``((rm, deformed form), normalized max|r~_ij|)``."""
    x = np.asarray(x, float)

    def form(x1, x2):
        a = rm.metric(x1, x2)
        b = of.form(x1, x2)
        b2 = jeinsum("ij,i,j->", inverse(a), b, b)
        if np.any(1 + p.k1 * b2.value <= 0) or np.any(1 + p.k2 * b2.value <= 0):
            raise DomainError("deformation factor undefined (1 + k b^2 <= 0)")
        factor = J.pow_real(1 + p.k1 * b2, -0.75) * J.pow_real(1 + p.k2 * b2, -0.25)
        return b * factor

    deformed = OneFormData(form)
    a = rm.at(x)
    gamma = christoffel(a, inverse(a))
    bt = deformed.at(x)
    db = np.asarray(bt.grad_x().c[..., 0])
    gb = np.asarray(jeinsum("mik,m->ik", gamma, bt).c[..., 0])
    bij = db - gb
    r = 0.5 * (bij + bij.T)
    return (rm, deformed), normalized(r, db, gb)


def constant_B_rigidity(p: FamilyParams, d: StructureData, x, grad_tol: float = 1e-12):
    """``(|lambda|, max|b_{i|j}|)`` for a structure with constant ``B``."""
    x = np.asarray(x, float)
    fd = _field_data(d, x)
    if max(abs(fd["B1"]), abs(fd["B2"])) > grad_tol:
        raise PreconditionFailed(f"B is not constant at x={tuple(float(v) for v in x)} (|grad B| = {max(abs(fd['B1']), abs(fd['B2'])):.3e})")
    rm, of = construct_alpha_beta(p, d, x)
    T = ab_tensors(rm, of, x)
    return abs(T.lam), float(np.max(np.abs(T.bij)))
