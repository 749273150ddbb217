"""Boundary-clustered transition layers of singularly perturbed Allen-Cahn.

Asymptotic layer placement, the reduced Toda-type interaction system with
its resonance structure, linearized strip solvers, and full nonlinear PDE
solves for eps^2 Lap u + V(y) u (1 - u^2) = 0 with Neumann data.
"""

__version__ = "0.1.0"

from .geometry import (BoundaryCurve, FermiChart, PotentialField,
                       generalized_mean_curvature, potential_trace)
from .placement import (InteractionCoeffs, LayerVector, dot_f,
                        interaction_coeffs, place_layers,
                        predicted_positions, solve_barf)
from .profile import (GAMMA0, GAMMA1, CutoffFamily, h, h_x, profile_integrals,
                      psi)
from .strip_linear import StripField, apply_strip_operator, build_phi11, \
    solve_strip_linear
from .toda import (ResonanceScan, TodaSystem, analytic_circle_resonances,
                   assemble_system, resonance_scan, solve_tilde_f,
                   spectral_gap)
from .pde import (LayerTrace, SolutionField, build_u1, compare_to_theory,
                  extract_layers, residual_strip, solve_radial, solve_strip)

__all__ = [
    "BoundaryCurve", "FermiChart", "PotentialField",
    "generalized_mean_curvature", "potential_trace",
    "InteractionCoeffs", "LayerVector", "dot_f", "interaction_coeffs",
    "place_layers", "predicted_positions", "solve_barf",
    "GAMMA0", "GAMMA1", "CutoffFamily", "h", "h_x", "profile_integrals",
    "psi",
    "StripField", "apply_strip_operator", "build_phi11",
    "solve_strip_linear",
    "ResonanceScan", "TodaSystem", "analytic_circle_resonances",
    "assemble_system", "resonance_scan", "solve_tilde_f", "spectral_gap",
    "LayerTrace", "SolutionField", "build_u1", "compare_to_theory",
    "extract_layers", "residual_strip", "solve_radial", "solve_strip",
    "__version__",
]
