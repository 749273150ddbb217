"""Resonant values of eps where the reduced layer-interaction system
loses invertibility.

The linearized interaction system along the boundary is
-eps gamma_0 f~'' + (1/eps) B(theta) f~ = h.  On a circle with constant
potential the operator diagonalizes in Fourier modes and its eigenvalues
cross zero at the discrete set eps_m = rho ell^2 / (4 pi^2 gamma_0 m^2):
at those eps the solve is ill-posed and the scan must flag a window, not
a single point, because neighbouring eigenvalues are only O(sqrt(eps))
apart.
"""

import numpy as np

from layercluster.geometry import BoundaryCurve, PotentialField, \
    potential_trace
from layercluster.placement import interaction_coeffs, place_layers
from layercluster.toda import (analytic_circle_resonances, assemble_system,
                               resonance_scan)

print(__doc__)
curve = BoundaryCurve.circle()
potential = PotentialField.constant(1.0)
theta = np.linspace(0.0, curve.length, 128, endpoint=False)
beta, beta1, _ = potential_trace(potential, curve, theta)
k = curve.curvature(theta)


def factory(eps):
    layers = place_layers(1, eps, theta, beta, beta1, k)
    coeffs = interaction_coeffs(layers.bar, beta)
    return assemble_system(coeffs, eps, theta, curve.length)


eps_grid = np.logspace(np.log10(4e-3), np.log10(1e-2), 160)
scan = resonance_scan(factory, eps_grid)
rho = float(factory(eps_grid[0]).a_eigenvalues().min())
analytic = analytic_circle_resonances(rho, curve.length, 3e-3, 1.2e-2)

print(f"scanned {eps_grid.size} eps values in [4e-3, 1e-2]; "
      f"{int(scan.resonant.sum())} flagged as resonant\n")
print("analytic resonances in range and the nearest flagged eps:")
flagged = scan.eps[scan.resonant]
for e_res in analytic[(analytic >= eps_grid[0]) & (analytic <= eps_grid[-1])]:
    if flagged.size:
        nearest = flagged[np.argmin(np.abs(flagged - e_res))]
        rel = abs(nearest - e_res) / e_res
        print(f"  eps_res = {e_res:.5e}   nearest flag = {nearest:.5e}"
              f"   (rel dist {rel:.1e})")
    else:
        print(f"  eps_res = {e_res:.5e}   NOT flagged")

print("\nBetween resonances the spectral gap stays a healthy fraction of")
print("the local eigenvalue spacing, so the quantitative solvability bound")
print("||f~||_inf <= C eps^{-1/2} ||h||_L2 applies there.")
