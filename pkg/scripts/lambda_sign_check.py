"""Compare both signs of the lambda term in the divergence of s^m.

The trace of the covariant derivative of s^m is computed directly from jets
and compared with the scalar formula using each sign.  Only the minus sign
closes the identity.
"""
import numpy as np

from finslerab.ab import ab_tensors, cov_vector
from finslerab.family import FamilyParams, build_structure, construct_alpha_beta
from finslerab.verify import ProofScalars

structure = build_structure("x1^2 + x2^2", u="-x2", v="x1")
for k1, k2 in [(-1.0, 0.0), (-0.5, 1.5), (0.3, 2.2)]:
    p = FamilyParams(k1, k2)
    rm, of = construct_alpha_beta(p, structure)
    print(f"k1={k1:+.2f} k2={k2:+.2f}")
    for x in [(0.5, 0.2), (-0.3, 0.6)]:
        T = ab_tensors(rm, of, x)
        lhs = float(np.trace(cov_vector(T.jets["s_up"], T.jets["gamma"]).c[..., 0]))
        ps = ProofScalars(k1, k2, T.b2, T.theta, T.lam, T.theta * T.b2)
        minus, plus = (abs(lhs - ps.s_div(sign)) / (1 + abs(lhs)) for sign in (-1.0, 1.0))
        print(f"  x={x}: residual with minus {minus:.1e}, with plus {plus:.1e}")
