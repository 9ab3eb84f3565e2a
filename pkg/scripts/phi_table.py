"""Print phi, phi', phi'' and tau on a grid of s for given k1, k2, eps."""
import argparse
import csv
import sys

import numpy as np

from finslerab.family import FamilyParams, phi_derivatives, tau_eval

ap = argparse.ArgumentParser(description=__doc__)
ap.add_argument("k1", type=float)
ap.add_argument("k2", type=float)
ap.add_argument("--eps", type=int, default=1, choices=(1, -1))
ap.add_argument("--smax", type=float, default=0.5)
ap.add_argument("-n", type=int, default=11)
args = ap.parse_args()

p = FamilyParams(args.k1, args.k2, args.eps)
s = np.linspace(-args.smax, args.smax, args.n)
phi, d1, d2 = phi_derivatives(p, s)
w = csv.writer(sys.stdout)
w.writerow(["s", "phi", "dphi", "d2phi", "tau"])
for row in zip(s, phi, d1, d2, tau_eval(p, s)):
    w.writerow([f"{v:.12g}" for v in row])
