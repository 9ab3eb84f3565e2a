"""Scenario-driven verification of the Einstein family and the proof-chain identities.

Every check reduces to a non-negative residual per sample point; a check
passes when its largest residual is within tolerance.  Reports are plain data
and serialize deterministically.
"""
from __future__ import annotations

import csv
import io
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import __version__
from .ab import ab_tensors, cov_covector, cov_mixed, cov_vector, jeinsum, normalized, r00_residual
from .errors import DegenerateDenominator, FinslerError
from .family import (
    MARGIN,
    PHI_TOL,
    FamilyParams,
    StructureData,
    _field_data,
    admissible,
    assemble_finsler,
    closed_form_K,
    construct_alpha_beta,
    deform_and_killing,
    positivity_check,
    quotient_sq,
    structure_residuals,
)
from .geometry import CURVATURE_SPACE, curvature_sample
from .scenario import Scenario

REPORT_SCHEMA_VERSION = "1.0"
CHAIN_MARGIN = 1e-4
CHUNK = 25
CSV_COLUMNS = (
    "check", "verdict", "max_residual", "mean_residual", "tolerance",
    "n_samples", "n_skipped", "worst_x1", "worst_x2",
)


# -- proof-chain scalars ------------------------------------------------------
@dataclass(frozen=True)
class ProofScalars:
    """Polynomial constants of the proof chain at given ``(k1, k2, b^2)``, plus point data."""

    k1: float
    k2: float
    b2: float
    theta: float = math.nan
    lam: float = math.nan
    ss: float = math.nan

    @property
    def D(self) -> float:
        k1, k2, b2 = self.k1, self.k2, self.b2
        return 2 * (1 - k1 * k2 * b2 * b2) + (k2 - k1) * b2

    @property
    def E(self) -> float:
        return 4 + (self.k1 + 3 * self.k2) * self.b2

    @property
    def A(self) -> float:
        k1, k2, b2 = self.k1, self.k2, self.b2
        return (
            2 * k1 * k2 * (k1**2 - 18 * k1 * k2 - 15 * k2**2) * b2**3
            + (3 * k1**3 - 135 * k1 * k2**2 - 57 * k1**2 * k2 - 3 * k2**3) * b2**2
            - (156 * k1 * k2 + 18 * k1**2 + 18 * k2**2) * b2
            - 16 * (3 * k1 + k2)
        )

    @property
    def A1(self) -> float:
        k1, k2, b2 = self.k1, self.k2, self.b2
        return (
            4 * k1 * k2 * (k1 + 3 * k2) * b2**3 * (2 * k1 * k2 * b2 + 3 * (k1 - k2))
            + (6 * k1**3 - 6 * k2**3 - 18 * k1**2 * k2 - 174 * k1 * k2**2) * b2**2
            - (12 * k1**2 + 28 * k2**2 + 216 * k1 * k2) * b2
            - 24 * (3 * k1 + k2)
        )

    @property
    def A2(self) -> float:
        k1, k2, b2 = self.k1, self.k2, self.b2
        return 2 * k1**2 * k2**2 * b2**3 + 5 * k1 * k2 * (k1 + k2) * b2**2 + k1 * (k1 + 13 * k2) * b2 + 2 * (2 * k1 + k2)

    @property
    def T(self) -> float:
        k1, k2, B = self.k1, self.k2, self.b2
        return 2 * k1 * k2 * B**3 * (k1 * k2 * B + k1 - k2) + (k1**2 - k2**2 - 8 * k1 * k2) * B**2 - 4 * (k1 + k2) * B - 2

    @property
    def c(self) -> float:
        """Coefficient of ``b_i s_j + b_j s_i`` in ``r_ij``."""
        return (3 * self.k1 + self.k2 + 4 * self.k1 * self.k2 * self.b2) / self.E

    @property
    def c_div(self) -> float:
        """Coefficient of ``s_m s^m`` in ``r^m_|m``."""
        k1, k2, b2 = self.k1, self.k2, self.b2
        return (
            32 * (1 + k1 * b2) * (1 + k2 * b2)
            * (k1 * k2 * (3 * k2 + k1) * b2**2 + 8 * k1 * k2 * b2 + 3 * k1 + k2)
            / self.E**3
        )

    def s_div(self, lambda_sign: float = -1.0) -> float:
        """``s^m_|m`` in terms of ``theta`` and ``lambda``.

        Contracting the fourth Ricci identity gives the ``lambda`` term with a
        minus sign; ``lambda_sign=+1`` gives the opposite sign, which
        the numerics refute.
        """
        k1, k2, b2, D, E = self.k1, self.k2, self.b2, self.D, self.E
        p = 8 * (1 + k1 * b2) * (1 + k2 * b2) * ((3 * k2**2 - k1**2 + 6 * k1 * k2) * b2**2 + 4 * (k1 + 3 * k2) * b2 + 8)
        return p / (E**2 * D) * self.theta + lambda_sign * b2 * E / (2 * D) * self.lam

    def K(self) -> float:
        """Flag curvature through ``lambda`` and ``s_m s^m``."""
        return 2 * (1 + self.k2 * self.b2) / self.D * (self.lam - 8 * self.A2 / (self.b2 * self.E**2) * self.ss)


def _check_chain_denominators(ps: ProofScalars):
    if abs(ps.D) < CHAIN_MARGIN:
        raise DegenerateDenominator(f"2(1 - k1 k2 b^4) + (k2 - k1) b^2 = {ps.D:.3e} within {CHAIN_MARGIN:g} of 0")
    if abs(ps.E) < CHAIN_MARGIN:
        raise DegenerateDenominator(f"4 + (k1 + 3 k2) b^2 = {ps.E:.3e} within {CHAIN_MARGIN:g} of 0")
    if ps.b2 < CHAIN_MARGIN:
        raise DegenerateDenominator(f"b^2 = {ps.b2:.3e} within {CHAIN_MARGIN:g} of 0")


def _v(j) -> np.ndarray:
    return np.asarray(j.c[..., 0])


def proof_chain_residuals(p: FamilyParams, d: StructureData, x, y, K_numeric: float | None = None) -> dict:
    """Normalized LHS - RHS of each link of the flag-curvature derivation at ``(x, y)``.

    Left sides come from covariant derivatives of the constructed pair; right
    sides from ProofScalars.  Raises DegenerateDenominator near the loci where
    the closed forms divide by zero.
    """
    x = np.asarray(x, float)
    y = np.asarray(y, float)
    rm, of = construct_alpha_beta(p, d, x)
    T = ab_tensors(rm, of, x)
    jt = T.jets
    gamma = jt["gamma"]
    ps = ProofScalars(p.k1, p.k2, T.b2, T.theta, T.lam, float(jt["ss"].value))
    _check_chain_denominators(ps)
    D, E = ps.D, ps.E

    alpha2 = float(y @ T.a @ y)
    beta = float(T.b @ y)
    ortho = T.b2 * alpha2 - beta**2
    bu = T.b_up
    out = {}

    s_up_cov = _v(cov_vector(jt["s_up"], gamma))
    s_div = float(np.trace(s_up_cov))
    r_up = jeinsum("ij,j->i", jt["a_inv"], jt["r_vec"])
    r_div = float(np.trace(_v(cov_vector(r_up, gamma))))
    cb2 = ps.c * ps.b2
    rhs = ps.c_div * ps.ss + cb2 * s_div
    out["r_divergence"] = normalized(r_div - rhs, r_div, ps.c_div * ps.ss, cb2 * s_div)

    rhs = ps.s_div()
    out["s_divergence"] = normalized(s_div - rhs, s_div, rhs)

    s_vec_cov = _v(cov_covector(jt["s_vec"], gamma))  # [j, k] = s_j|k
    lhs = float(np.einsum("k,j,jk->", bu, y, s_vec_cov))
    rhs = 2 * D / E * ps.theta * beta
    out["b_s0k"] = normalized(lhs - rhs, lhs, rhs)

    s_mixed_cov = _v(cov_mixed(jt["s_mixed"], gamma))  # [k, j, m] = s^k_j|m
    lhs = float(np.einsum("mjm,j->", s_mixed_cov, y))
    t1 = beta / D * 2 * ps.A / E**2 * ps.theta
    t2 = beta / D * 0.5 * E * ps.lam
    out["s_mixed_divergence"] = normalized(lhs - t1 - t2, lhs, t1, t2)

    s00 = float(np.einsum("j,k,jk->", y, y, s_vec_cov))
    rc = T.r_cov  # [i, j, k] = r_ij|k
    u1 = float(np.einsum("m,mjk,j,k->", bu, rc, y, y))
    u2 = float(np.einsum("m,jkm,j,k->", bu, rc, y, y))
    q00 = float(y @ T.q @ y)
    t00 = float(y @ T.t @ y)
    lam_term = ps.lam * ortho
    out["s00_from_ricci"] = normalized(s00 - (u1 - u2 - lam_term + q00 - t00), s00, u1, u2, lam_term, q00, t00)

    v1 = -E * ps.lam / (2 * D) * ortho
    v2 = 2 * ps.theta * D / E * alpha2
    v3 = -2 * ps.theta * ps.A1 / (E**2 * D) * ortho
    out["s00_from_scalars"] = normalized(s00 - (v1 + v2 + v3), s00, v1, v2, v3)

    K_chain = ps.K()
    if K_numeric is None:
        K_numeric = float(curvature_sample(assemble_finsler(p, d), x, y, with_s=False).K)
    out["K_chain"] = normalized(K_numeric - K_chain, K_numeric, K_chain)

    fd = _field_data(d, x)
    B, u, v = fd["B"], fd["u"], fd["v"]
    uv2 = u * u + v * v
    EB = 4 + (p.k1 + 3 * p.k2) * B
    ss_closed = EB**2 * (u * fd["B2"] - v * fd["B1"]) ** 2 / (
        64 * B * math.sqrt(1 + p.k1 * B) * (1 + p.k2 * B) ** 1.5
    )
    out["ss_closed"] = normalized(ps.ss - ss_closed, ps.ss, ss_closed)

    q, _, _ = quotient_sq(fd)
    psB = ProofScalars(p.k1, p.k2, B)
    w1 = psB.D * math.sqrt(1 + p.k1 * B) * (fd["B11"] + fd["B22"])
    w2 = uv2 * q / (B * (1 + p.k2 * B) * math.sqrt(1 + p.k1 * B)) * psB.T
    pref = -uv2 / (4 * B * B * math.sqrt(1 + p.k2 * B))
    lam_closed = pref * (w1 + w2)
    out["lambda_closed"] = normalized(ps.lam - lam_closed, ps.lam, pref * w1, pref * w2)

    K_closed = closed_form_K(p, d, x).K
    out["closed_K_vs_chain"] = normalized(K_closed - K_chain, K_closed, K_chain)
    return out


# -- reports ----------------------------------------------------------------------
@dataclass
class CheckResult:
    name: str
    tolerance: float
    max_residual: float = 0.0
    mean_residual: float = 0.0
    n_samples: int = 0
    n_skipped: int = 0
    worst_point: tuple | None = None
    details: dict = field(default_factory=dict)

    @property
    def verdict(self) -> str:
        if self.n_samples == 0:
            return "skip"
        ok = self.max_residual <= self.tolerance and math.isfinite(self.max_residual)
        return "pass" if ok else "fail"


@dataclass
class VerificationReport:
    environment: dict
    checks: dict = field(default_factory=dict)
    summary: dict = field(default_factory=dict)
    scenario: str = ""
    schema_version: str = REPORT_SCHEMA_VERSION

    @property
    def verdict(self) -> str:
        return "fail" if any(c.verdict == "fail" for c in self.checks.values()) else "pass"

    @property
    def passed(self) -> bool:
        return self.verdict == "pass"

    def to_dict(self) -> dict:
        doc = {"schema_version": self.schema_version, "environment": self.environment}
        if self.scenario:
            doc["scenario"] = self.scenario
        if self.checks:
            doc["verdict"] = self.verdict
            doc["checks"] = {
                name: {
                    "max_residual": c.max_residual,
                    "mean_residual": c.mean_residual,
                    "tolerance": c.tolerance,
                    "verdict": c.verdict,
                    "n_samples": c.n_samples,
                    "n_skipped": c.n_skipped,
                    "worst_point": list(c.worst_point) if c.worst_point is not None else None,
                    **({"details": c.details} if c.details else {}),
                }
                for name, c in self.checks.items()
            }
        if self.summary:
            doc["summary"] = self.summary
        return doc


# -- sampling -------------------------------------------------------------------------
def sample_points(sc: Scenario) -> tuple[np.ndarray, int]:
    """Admissible sample points ``(2, P)`` and the number of rejected candidates."""
    s = sc.sampling
    (a, b), (c, e) = sc.structure.domain.box
    if s.mode == "grid":
        nx, ny = s.grid
        gx = np.linspace(a, b, nx) if nx > 1 else np.array([(a + b) / 2])
        gy = np.linspace(c, e, ny) if ny > 1 else np.array([(c + e) / 2])
        g1, g2 = np.meshgrid(gx, gy, indexing="ij")
        cand = np.stack([g1.ravel(), g2.ravel()])
        keep = admissible(sc.params, sc.structure, cand)
        return cand[:, keep], int(np.sum(~keep))
    rng = np.random.default_rng(np.random.SeedSequence([s.seed, 0]))
    pts = np.zeros((2, 0))
    rejected = 0
    for _ in range(200):
        cand = np.stack([rng.uniform(a, b, s.count), rng.uniform(c, e, s.count)])
        keep = admissible(sc.params, sc.structure, cand)
        rejected += int(np.sum(~keep))
        pts = np.concatenate([pts, cand[:, keep]], axis=1)
        if pts.shape[1] >= s.count:
            break
    return pts[:, : s.count], rejected


def direction_sets(sc: Scenario, n_points: int) -> np.ndarray:
    """Unit directions ``(2, P, D)``: equally spaced plus per-point random ones."""
    s = sc.sampling
    base = 2 * np.pi * np.arange(s.directions) / s.directions
    streams = np.random.SeedSequence([s.seed, 1]).spawn(n_points)
    th = np.empty((n_points, s.directions + s.random_directions))
    for i, ss in enumerate(streams):
        th[i, : s.directions] = base
        th[i, s.directions :] = np.random.default_rng(ss).uniform(0, 2 * np.pi, s.random_directions)
    return np.stack([np.cos(th), np.sin(th)])


def _workers() -> int:
    raw = os.environ.get("FINSLER_THREADS", "0").strip() or "0"
    try:
        n = int(raw)
    except ValueError:
        n = 0
    if n <= 0:
        n = min(4, os.cpu_count() or 1)
    return n


# -- the suite ----------------------------------------------------------------------------
def _chunk_residuals(sc: Scenario, F, x: np.ndarray, y: np.ndarray) -> dict:
    """Per-point residual arrays (NaN = skipped) for one chunk of points."""
    p, d = sc.params, sc.structure
    P = x.shape[1]
    want = set(sc.checks)
    res = {name: np.full(P, np.nan) for name in want}
    chain_detail = {}
    Kmean = np.full(P, np.nan)

    if "structure" in want:
        res["structure"] = np.max(structure_residuals(d, x), axis=-1)

    need_geom = want & {"s_curvature", "einstein", "closed_form_K", "scalar_flag", "proof_chain", "closed_form_consistency"}
    K = None
    if need_geom:
        cs = curvature_sample(F, x[:, :, None], y, with_s="s_curvature" in want)
        K = cs.K
        Kmean = K.mean(axis=1)
        if "s_curvature" in want:
            res["s_curvature"] = np.max(np.abs(cs.S) / cs.F, axis=1)
        if "einstein" in want:
            res["einstein"] = np.max(np.abs(K - Kmean[:, None]), axis=1) / (1 + np.abs(Kmean))
        if "scalar_flag" in want:
            scale = 1 + np.max(np.abs(cs.R), axis=(-2, -1))
            res["scalar_flag"] = np.max(cs.flag_residual / scale, axis=1)

    for i in range(P):
        xi = x[:, i]
        try:
            if "positivity" in want:
                v = positivity_check(p, math.sqrt(max(float(d.B.value(*xi)), 0.0)))
                res["positivity"][i] = 0.0 if (v.pd and v.sampling_agrees and min(v.f_h_minima) > 0) else 1.0
            if "closed_form_K" in want:
                kc = closed_form_K(p, d, xi).K
                res["closed_form_K"][i] = np.max(np.abs(K[i] - kc)) / (1 + abs(kc))
            if want & {"r00", "killing"}:
                rm, of = construct_alpha_beta(p, d, xi)
                if "r00" in want:
                    res["r00"][i] = r00_residual(rm, of, p, xi)
                if "killing" in want:
                    res["killing"][i] = deform_and_killing(p, rm, of, xi)[1]
            if want & {"proof_chain", "closed_form_consistency"}:
                j = y.shape[2] - 1
                try:
                    chain = proof_chain_residuals(p, d, xi, y[:, i, j], K_numeric=float(K[i, j]))
                except DegenerateDenominator:
                    continue
                consistency = chain.pop("closed_K_vs_chain")
                if "closed_form_consistency" in want:
                    res["closed_form_consistency"][i] = consistency
                if "proof_chain" in want:
                    res["proof_chain"][i] = max(chain.values())
                    for k, val in chain.items():
                        chain_detail[k] = max(chain_detail.get(k, 0.0), val)
        except FinslerError:
            for name in want - {"structure", "s_curvature", "einstein", "scalar_flag"}:
                if np.isnan(res[name][i]):
                    res[name][i] = np.inf
    return {"res": res, "K": K, "chain_detail": chain_detail}


def theorem1_suite(sc: Scenario) -> VerificationReport:
    """Run every selected check over the scenario's sample points."""
    pts, rejected = sample_points(sc)
    P = pts.shape[1]
    dirs = direction_sets(sc, P)
    F = assemble_finsler(sc.params, sc.structure)
    chunks = [(s, min(s + CHUNK, P)) for s in range(0, P, CHUNK)]
    with ThreadPoolExecutor(max_workers=_workers()) as pool:
        parts = list(pool.map(lambda ab: _chunk_residuals(sc, F, pts[:, ab[0]:ab[1]], dirs[:, ab[0]:ab[1]]), chunks))

    checks = {}
    for name in sc.checks:
        vals = np.concatenate([pt["res"][name] for pt in parts]) if parts else np.zeros(0)
        done = ~np.isnan(vals)
        cr = CheckResult(name, float(sc.tolerances[name]), n_samples=int(done.sum()), n_skipped=int((~done).sum()))
        if cr.n_samples:
            v = vals[done]
            worst = int(np.flatnonzero(done)[np.argmax(v)])
            cr.max_residual = float(np.max(v))
            cr.mean_residual = float(np.mean(v)) if np.all(np.isfinite(v)) else math.inf
            cr.worst_point = (float(pts[0, worst]), float(pts[1, worst]))
        if name == "proof_chain":
            detail = {}
            for pt in parts:
                for k, val in pt["chain_detail"].items():
                    detail[k] = max(detail.get(k, 0.0), val)
            cr.details = dict(sorted(detail.items()))
        checks[name] = cr

    summary = {}
    Ks = [pt["K"] for pt in parts if pt["K"] is not None]
    if Ks:
        K = np.concatenate(Ks, axis=0)
        summary = {
            "K_min": float(np.min(K)),
            "K_max": float(np.max(K)),
            "K_abs_min": float(np.min(np.abs(K))),
            "K_abs_max": float(np.max(np.abs(K))),
        }
    env = environment_block(sc, P, rejected)
    return VerificationReport(env, checks, summary, scenario=sc.name)


def environment_block(sc: Scenario, n_points: int = 0, rejected: int = 0) -> dict:
    s = sc.sampling
    return {
        "package_version": __version__,
        "params": {"k1": sc.params.k1, "k2": sc.params.k2, "eps": sc.params.eps},
        "seed": s.seed,
        "sampling": {
            "mode": s.mode,
            "count": s.count if s.mode == "random" else None,
            "grid": list(s.grid) if s.mode == "grid" else None,
            "directions": s.directions,
            "random_directions": s.random_directions,
            "n_points": n_points,
            "n_rejected": rejected,
        },
        "jet_orders": {"x": CURVATURE_SPACE.x_order, "y": CURVATURE_SPACE.y_order},
        "quadrature": {"phi_tol": PHI_TOL, "volume_rtol": 1e-11, "volume_max_nodes": 2**14},
        "margins": {"structure": MARGIN, "proof_chain": CHAIN_MARGIN},
    }


# -- serialization ----------------------------------------------------------------------------
def _fmt_float(x: float) -> str:
    if not math.isfinite(x):
        return "null"
    text = "%.17g" % x
    if all(ch not in text for ch in ".en"):
        text += ".0"
    return text


def _dump(obj) -> str:
    import json

    if obj is None or isinstance(obj, bool):
        return json.dumps(obj)
    if isinstance(obj, (int, np.integer)):
        return str(int(obj))
    if isinstance(obj, (float, np.floating)):
        return _fmt_float(float(obj))
    if isinstance(obj, str):
        return json.dumps(obj)
    if isinstance(obj, dict):
        items = sorted(obj.items())
        return "{" + ", ".join(f"{json.dumps(str(k))}: {_dump(v)}" for k, v in items) + "}"
    if isinstance(obj, (list, tuple)):
        return "[" + ", ".join(_dump(v) for v in obj) + "]"
    raise TypeError(f"cannot serialize {type(obj).__name__}")


def serialize_report(report: VerificationReport, format: str = "json") -> bytes:
    """Deterministic bytes: sorted keys, 17 significant digits, non-finite -> null."""
    if format == "json":
        return (_dump(report.to_dict()) + "\n").encode("utf-8")
    if format in ("csv", "csv-summary"):
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\r\n")
        w.writerow(CSV_COLUMNS)
        for name, c in report.checks.items():
            wp = c.worst_point or (math.nan, math.nan)
            w.writerow([
                name, c.verdict, _csv_float(c.max_residual), _csv_float(c.mean_residual),
                _csv_float(c.tolerance), c.n_samples, c.n_skipped, _csv_float(wp[0]), _csv_float(wp[1]),
            ])
        return buf.getvalue().encode("utf-8")
    raise ValueError(f"unknown report format {format!r}")


def _csv_float(x: float) -> str:
    return "%.17g" % x if math.isfinite(x) else ("inf" if x == math.inf else "nan")
