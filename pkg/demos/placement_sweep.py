"""How the layer cluster spreads as eps -> 0.

For a unit disk with constant potential V = 1, print the predicted layer
offsets f_1 < ... < f_N (in stretched units t/eps) over a sweep of eps.
Two things to watch:

* every offset grows like |ln eps| / (2 sqrt(2) beta), so the cluster
  drifts slowly into the domain while staying within O(eps |ln eps|) of
  the boundary in unstretched units;
* the gap f_{j+1} - f_j carries an extra ln(N+1-j) correction, so the
  gaps are NOT equal: outer gaps (small j) are slightly wider because the
  remaining stack of layers pushes harder from inside.
"""

import numpy as np

from layercluster.placement import predicted_positions

BETA = np.array([1.0])      # sqrt(V) on the boundary
HCAL = np.array([1.0])      # curvature of the unit circle, flat potential
N = 3

print(__doc__)
print(f"N = {N} layers, circle, V = 1\n")
header = ["eps"] + [f"f_{j}" for j in range(1, N + 1)] \
    + [f"gap_{j}" for j in range(2, N + 1)] + ["eps*f_N"]
print("  ".join(f"{h:>9s}" for h in header))
for eps in (0.05, 0.02, 0.01, 0.005, 0.002, 0.001):
    f, spacings = predicted_positions(N, eps, BETA, HCAL)
    vals = [eps, *f[:, 0], *spacings[1:, 0], eps * f[-1, 0]]
    print("  ".join(f"{v:9.4f}" for v in vals))

print("\nThe last column (eps * f_N, unstretched depth of the innermost")
print("layer) tends to zero: the whole cluster collapses onto the boundary")
print("even though the stretched offsets diverge logarithmically.")
