"""The 1D heteroclinic profile, its integral constants, and cutoff machinery.

Everything downstream (layer placement, the reduced system, the PDE ansatz)
is built from the single transition profile H(x) = tanh(x/sqrt(2)) and a
handful of integrals of it.  All of those integrals have closed forms; the
quadrature here exists to *verify* them and to evaluate the cutoff-weighted
variants that have no closed form.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from numpy.polynomial.legendre import leggauss

SQRT2 = np.sqrt(2.0)

# Exact values of the profile integrals.
GAMMA0 = 2.0 * SQRT2 / 3.0            # int H_x^2
GAMMA1 = 8.0 / (3.0 * SQRT2)          # int exp(-sqrt(2) x) H_x^2
IDENTITY1 = -2.0 * SQRT2 / 3.0        # 2 int x H_x H_xx
IDENTITY2 = 8.0                       # 3 int (1 - H^2) exp(-sqrt(2) x) H_x


def h(x):
    """Heteroclinic profile H(x) = tanh(x / sqrt(2))."""
    return np.tanh(np.asarray(x, dtype=float) / SQRT2)


def h_x(x):
    """H'(x) = (1 - H^2)/sqrt(2) = sech^2(x/sqrt(2))/sqrt(2)."""
    c = np.cosh(np.asarray(x, dtype=float) / SQRT2)
    return 1.0 / (SQRT2 * c * c)


def h_xx(x):
    return -SQRT2 * h(x) * h_x(x)


def h_xxx(x):
    hh = h(x)
    return -(1.0 - 3.0 * hh * hh) * h_x(x)


def h_asymptotic(x):
    """Tail form +-(1 - 2 exp(-sqrt(2)|x|)), valid for large |x|."""
    x = np.asarray(x, dtype=float)
    return np.sign(x) * (1.0 - 2.0 * np.exp(-SQRT2 * np.abs(x)))


def heteroclinic_eval(x):
    """Evaluate (H, H_x, ODE residual) at x.

    The residual H'' + (1 - H^2) H is assembled from the closed-form
    derivatives, so it measures only floating-point cancellation.
    """
    hh = h(x)
    hx = h_x(x)
    residual = h_xx(x) + (1.0 - hh * hh) * hh
    return hh, hx, residual


def psi(x):
    """The explicit corrector psi(x) = x H_x(x) / 2."""
    return 0.5 * np.asarray(x, dtype=float) * h_x(x)


def psi_eval(x):
    """Evaluate (psi, residual of psi'' + (1-3H^2) psi + (H - H^3))."""
    x = np.asarray(x, dtype=float)
    hh = h(x)
    p = psi(x)
    p_xx = h_xx(x) + 0.5 * x * h_xxx(x)
    residual = p_xx + (1.0 - 3.0 * hh * hh) * p + (hh - hh**3)
    return p, residual


def _panel_rule(lo: float, hi: float, panel: float = 0.5, order: int = 16):
    """Composite Gauss-Legendre nodes/weights with fixed panel width."""
    n_panels = max(1, int(np.ceil((hi - lo) / panel)))
    edges = np.linspace(lo, hi, n_panels + 1)
    xg, wg = leggauss(order)
    half = np.diff(edges) / 2.0
    mid = (edges[:-1] + edges[1:]) / 2.0
    nodes = (mid[:, None] + half[:, None] * xg[None, :]).ravel()
    weights = (half[:, None] * wg[None, :]).ravel()
    return nodes, weights


def quadrature_grid(window: float = 25.0, panel: float = 0.5):
    """Default quadrature rule for profile integrals on [-window, window]."""
    return _panel_rule(-window, window, panel=panel)


def profile_integrals(window: float = 25.0):
    """Compute (gamma0, gamma1, identity1, identity2) by quadrature.

    All integrands decay at least like exp(-sqrt(2)|x|) toward the relevant
    tail, so the truncation error at window = 25 is below exp(-25 sqrt(2)).
    """
    if window < 20.0:
        raise ValueError(
            f"window={window} too small: tail bound exp(-sqrt(2)*{window:g}) "
            f"= {np.exp(-SQRT2 * window):.2e} exceeds the 1e-10 target"
        )
    x, w = quadrature_grid(window)
    hx = h_x(x)
    gamma0 = np.dot(w, hx * hx)
    gamma1 = np.dot(w, np.exp(-SQRT2 * x) * hx * hx)
    id1 = 2.0 * np.dot(w, x * hx * h_xx(x))
    id2 = 3.0 * np.dot(w, (1.0 - h(x) ** 2) * np.exp(-SQRT2 * x) * hx)
    return gamma0, gamma1, id1, id2


def smoothstep(t):
    """C^2 quintic smoothstep: 0 for t<=0, 1 for t>=1."""
    t = np.clip(np.asarray(t, dtype=float), 0.0, 1.0)
    return t * t * t * (10.0 + t * (-15.0 + 6.0 * t))


class SeparationError(ValueError):
    """Layer offsets too close for the cutoff supports to be disjoint."""


@dataclass(frozen=True)
class CutoffFamily:
    """Smooth partition of unity along the stretched normal direction.

    One bump per layer: chi_j == 1 on a plateau around the layer offset
    f_j and the transitions (half-width ``delta_tilde``) sit at the
    midpoints between consecutive layers, so sum_j chi_j == 1 identically.
    """

    offsets: np.ndarray            # increasing layer offsets f_1..f_N (stretched)
    delta_tilde: float = 2.0       # transition half-width, stretched units
    min_separation: float = field(default=4.0, repr=False)

    def __post_init__(self):
        f = np.atleast_1d(np.asarray(self.offsets, dtype=float))
        object.__setattr__(self, "offsets", f)
        if f.size > 1:
            gaps = np.diff(f)
            if np.any(gaps < self.min_separation) or np.any(
                gaps < 2.0 * self.delta_tilde
            ):
                raise SeparationError(
                    f"layer gaps {gaps} too small for cutoff transitions of "
                    f"half-width {self.delta_tilde}"
                )

    @property
    def n_layers(self) -> int:
        return self.offsets.size

    def _rise(self, s, midpoint):
        # 0 below the midpoint band, 1 above it.
        return smoothstep((np.asarray(s, float) - midpoint + self.delta_tilde)
                          / (2.0 * self.delta_tilde))

    def chi(self, j: int, s):
        """chi_j(s) for layer index j in 1..N."""
        f = self.offsets
        n = f.size
        if not 1 <= j <= n:
            raise IndexError(f"layer index {j} outside 1..{n}")
        s = np.asarray(s, dtype=float)
        left = np.ones_like(s)
        if j > 1:
            left = self._rise(s, 0.5 * (f[j - 2] + f[j - 1]))
        right = np.zeros_like(s)
        if j < n:
            right = self._rise(s, 0.5 * (f[j - 1] + f[j]))
        return left - right

    def chi_sum(self, s):
        return sum(self.chi(j, s) for j in range(1, self.n_layers + 1))


def weighted_gammas(cutoffs: CutoffFamily, j: int, beta: float,
                    window: float = 25.0):
    """Cutoff-weighted profile integrals (gamma0j, gamma1j, gamma2j).

    The weights are chi_j expressed in the layer coordinate
    x_j = beta (s - f_j); their deviation from the unweighted values is
    the O(sqrt(eps)) effect the reduced system tolerates.
    """
    x, w = quadrature_grid(window)
    s = cutoffs.offsets[j - 1] + x / beta
    chi = cutoffs.chi(j, s)
    hx2 = h_x(x) ** 2
    g0 = np.dot(w, chi * hx2)
    g1 = np.dot(w, chi * hx2 * np.exp(-SQRT2 * x))
    g2 = np.dot(w, chi * hx2 * np.exp(SQRT2 * x))
    return g0, g1, g2
