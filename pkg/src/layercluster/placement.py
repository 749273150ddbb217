"""Asymptotic placement of the clustered layers.

The layer offsets split as f_j = fdot_j + fbar_j + ftilde_j:

* fdot_j carries the logarithmic leading terms in eps,
* fbar_j solves an N x N algebraic system balancing the layer interactions
  against the generalized mean curvature (solved per theta node),
* ftilde_j is the small periodic correction governed by the reduced
  Toda-type system (module ``toda``).

All functions are vectorized over the theta grid.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from math import lgamma

import numpy as np

from .profile import GAMMA1, SQRT2


class PlacementError(ValueError):
    pass


class HypothesisError(PlacementError):
    """Generalized mean curvature non-positive: no clustered branch."""


def dot_f(n_layers: int, eps: float, beta):
    """Leading logarithmic offsets fdot_j(theta), shape (N, M).

    fdot_1 = ln(1/(N eps)) / (2 sqrt(2) beta) and, for j >= 2,
    fdot_j = fdot_1 + ln((N-j)! / ((N-1)! eps^{j-1})) / (sqrt(2) beta).
    """
    if not 0 < eps < 1.0 / n_layers:
        raise PlacementError(
            f"eps={eps} must lie in (0, 1/N) for positive leading offsets")
    beta = np.atleast_1d(np.asarray(beta, dtype=float))
    base = np.log(1.0 / (n_layers * eps)) / (2.0 * SQRT2 * beta)
    rows = [base]
    for j in range(2, n_layers + 1):
        extra = (lgamma(n_layers - j + 1) - lgamma(n_layers)
                 - (j - 1) * np.log(eps))
        rows.append(base + extra / (SQRT2 * beta))
    return np.stack(rows)


def formal_spacings(n_layers: int, eps: float, beta, hcal):
    """Formal geometric ladder exp(-sqrt(2) beta (f_j - f_{j-1})), (N, M).

    Entry j equals (N+1-j) eps (sqrt(2)/(12 beta)) Hcal; the j = 1 slot uses
    the doubled boundary gap f_1 - f_0 = 2 f_1.
    """
    beta = np.atleast_1d(np.asarray(beta, dtype=float))
    hcal = np.broadcast_to(np.asarray(hcal, dtype=float), beta.shape)
    if np.any(hcal <= 0):
        raise HypothesisError("generalized mean curvature must be positive")
    unit = eps * SQRT2 / (12.0 * beta) * hcal
    j = np.arange(1, n_layers + 1)
    return (n_layers + 1 - j)[:, None] * unit[None, :]


def _barf_residual(fbar, beta, hcal, g1, g2):
    """Residual of the interaction balance, all arrays (N, M) / (M,)."""
    n = fbar.shape[0]
    f_prev = np.vstack([-fbar[0:1], fbar[:-1]])           # fbar_0 = -fbar_1
    gaps = fbar - f_prev
    expo = np.exp(-SQRT2 * beta * gaps)
    weights = (n - np.arange(1, n + 1) + 1)[:, None]      # N-j+1
    lead = weights * g1 * expo
    trail = np.zeros_like(lead)
    if n > 1:
        nxt = np.exp(-SQRT2 * beta * (fbar[1:] - fbar[:-1]))
        trail[:-1] = (n - np.arange(1, n))[:, None] * g2[:-1] * nxt
    target = hcal / (9.0 * beta**2)
    return lead - trail - target


def _barf_jacobian(fbar, beta, g1, g2):
    """Jacobian of ``_barf_residual`` w.r.t. fbar, shape (M, N, N)."""
    n, m = fbar.shape
    f_prev = np.vstack([-fbar[0:1], fbar[:-1]])
    expo = np.exp(-SQRT2 * beta * (fbar - f_prev))
    weights = (n - np.arange(1, n + 1) + 1)[:, None]
    lead = weights * g1 * expo                            # (N, M)
    jac = np.zeros((m, n, n))
    sb = SQRT2 * beta                                     # (M,)
    for j in range(n):
        dlead = -sb * lead[j]
        jac[:, j, j] += dlead
        if j == 0:
            jac[:, 0, 0] += dlead                          # fbar_0 = -fbar_1
        else:
            jac[:, j, j - 1] -= dlead
        if j < n - 1:
            nxt = (n - (j + 1)) * g2[j] * np.exp(
                -sb * (fbar[j + 1] - fbar[j]))
            jac[:, j, j + 1] -= -sb * nxt
            jac[:, j, j] += -sb * nxt
    return jac


def solve_barf(n_layers: int, beta, beta1, k, gamma_weights=None,
               tol: float = 1e-12, max_iter: int = 60):
    """Solve the O(1) offset system for fbar(theta), shape (N, M).

    Newton iteration per theta node, started from the closed-form equal
    spacing solution; ``gamma_weights`` optionally supplies cutoff-weighted
    (gamma1_j, gamma2_j) arrays of shape (N,), else gamma_1 is used.
    """
    beta = np.atleast_1d(np.asarray(beta, dtype=float))
    beta1 = np.broadcast_to(np.asarray(beta1, dtype=float), beta.shape)
    k = np.broadcast_to(np.asarray(k, dtype=float), beta.shape)
    hcal = k - beta1 / (2.0 * beta**2)
    if np.any(hcal <= 0):
        raise HypothesisError("generalized mean curvature must be positive")
    if gamma_weights is None:
        g1 = np.full((n_layers, 1), GAMMA1)
        g2 = np.full((n_layers, 1), GAMMA1)
    else:
        g1 = np.asarray(gamma_weights[0], dtype=float).reshape(n_layers, 1)
        g2 = np.asarray(gamma_weights[1], dtype=float).reshape(n_layers, 1)

    # Closed-form initial guess: equal ladder entries Hcal/(9 beta^2 gamma1).
    spacing = np.log(9.0 * beta**2 * GAMMA1 / hcal) / (SQRT2 * beta)
    fbar = 0.5 * spacing[None, :] + spacing[None, :] * np.arange(n_layers)[:, None]

    for _ in range(max_iter):
        res = _barf_residual(fbar, beta, hcal, g1, g2)
        if np.max(np.abs(res)) < tol:
            break
        jac = _barf_jacobian(fbar, beta, g1, g2)
        step = np.linalg.solve(jac, res.T[..., None])[..., 0].T
        fbar = fbar - step
    else:
        raise PlacementError(
            f"Newton stagnated; residual {np.max(np.abs(res)):.2e}, "
            f"trace min(Hcal)={hcal.min():.3g}")
    return fbar


def solve_barf_fixed_point(n_layers: int, beta, beta1, k, gamma_weights=None,
                           damping: float = 0.5, tol: float = 1e-13,
                           max_iter: int = 400):
    """Independent oracle: damped fixed-point iteration in ladder variables.

    Iterates u_j <- (1-d) u_j + d [q + (N-j) g2_j u_{j+1}] / ((N-j+1) g1_j)
    with q = Hcal/(9 beta^2), then recovers fbar by cumulative logs.
    """
    beta = np.atleast_1d(np.asarray(beta, dtype=float))
    beta1 = np.broadcast_to(np.asarray(beta1, dtype=float), beta.shape)
    k = np.broadcast_to(np.asarray(k, dtype=float), beta.shape)
    hcal = k - beta1 / (2.0 * beta**2)
    if np.any(hcal <= 0):
        raise HypothesisError("generalized mean curvature must be positive")
    if gamma_weights is None:
        g1 = np.full((n_layers, 1), GAMMA1)
        g2 = np.full((n_layers, 1), GAMMA1)
    else:
        g1 = np.asarray(gamma_weights[0], dtype=float).reshape(n_layers, 1)
        g2 = np.asarray(gamma_weights[1], dtype=float).reshape(n_layers, 1)
    q = hcal / (9.0 * beta**2)
    u = np.tile(q / GAMMA1, (n_layers, 1))
    for _ in range(max_iter):
        new = np.empty_like(u)
        for j in range(n_layers):
            carry = 0.0 if j == n_layers - 1 else \
                (n_layers - j - 1) * g2[j] * u[j + 1]
            new[j] = (q + carry) / ((n_layers - j) * g1[j])
        new = (1.0 - damping) * u + damping * new
        if np.max(np.abs(new - u)) < tol:
            u = new
            break
        u = new
    gaps = -np.log(u) / (SQRT2 * beta)
    fbar = np.empty_like(u)
    fbar[0] = 0.5 * gaps[0]
    for j in range(1, n_layers):
        fbar[j] = fbar[j - 1] + gaps[j]
    return fbar


@dataclass(frozen=True)
class InteractionCoeffs:
    """Exponential interaction strengths of neighbouring layers.

    d[j-1] holds bold-d_j for j = 1..N+1 (the N+1 slot is zero); with the
    eps^{1/2} correction layer out of scope, bold-k_j coincides with
    bold-d_j.  a[n-1] = 12 beta^2 gamma_1 k_n drives the reduced system.
    """

    d: np.ndarray                 # (N+1, M)
    a: np.ndarray                 # (N, M)
    beta: np.ndarray              # (M,)

    @property
    def k(self) -> np.ndarray:
        return self.d


def interaction_coeffs(fbar, beta) -> InteractionCoeffs:
    """Assemble the interaction coefficients from the solved fbar."""
    fbar = np.atleast_2d(np.asarray(fbar, dtype=float))
    beta = np.atleast_1d(np.asarray(beta, dtype=float))
    n = fbar.shape[0]
    f_prev = np.vstack([-fbar[0:1], fbar[:-1]])
    expo = np.exp(-SQRT2 * beta * (fbar - f_prev))
    weights = (n - np.arange(1, n + 1) + 1)[:, None]
    d = np.vstack([weights * expo, np.zeros((1, beta.size))])
    a = 12.0 * beta**2 * GAMMA1 * d[:-1]
    return InteractionCoeffs(d=d, a=a, beta=beta)


def predicted_positions(n_layers: int, eps: float, beta, hcal):
    """Closed-form leading-order positions: (f (N, M), spacings (N, M)).

    f_1 = [ln(1/(N eps)) - ln Hcal + ln(9 gamma_1 beta^2)] / (2 sqrt(2) beta);
    spacing_j (j >= 2) replaces N by N+1-j and drops the 1/2.  The j = 1
    spacing slot reports the doubled boundary gap 2 f_1.
    """
    beta = np.atleast_1d(np.asarray(beta, dtype=float))
    hcal = np.broadcast_to(np.asarray(hcal, dtype=float), beta.shape)
    if np.any(hcal <= 0):
        raise HypothesisError("generalized mean curvature must be positive")
    v0 = beta**2
    log_core = np.log(9.0 * GAMMA1 * v0) - np.log(hcal)
    f1 = (np.log(1.0 / (n_layers * eps)) + log_core) / (2.0 * SQRT2 * beta)
    f = np.empty((n_layers, beta.size))
    spacings = np.empty_like(f)
    f[0] = f1
    spacings[0] = 2.0 * f1
    for j in range(2, n_layers + 1):
        gap = (np.log(1.0 / ((n_layers + 1 - j) * eps)) + log_core) \
            / (SQRT2 * beta)
        f[j - 1] = f[j - 2] + gap
        spacings[j - 1] = gap
    return f, spacings


@dataclass(frozen=True)
class LayerVector:
    """Per-theta decomposition of the layer offsets f = fdot + fbar + ftilde."""

    n_layers: int
    theta: np.ndarray
    dot: np.ndarray                      # (N, M)
    bar: np.ndarray                      # (N, M)
    tilde: np.ndarray = None             # (N, M), defaults to zero

    def __post_init__(self):
        if self.tilde is None:
            object.__setattr__(self, "tilde", np.zeros_like(self.dot))
        total = self.total
        if np.any(total[0] <= 0) or np.any(np.diff(total, axis=0) <= 0):
            raise PlacementError("layer offsets must satisfy 0 < f_1 < ... < f_N")

    @property
    def total(self) -> np.ndarray:
        return self.dot + self.bar + self.tilde


def place_layers(n_layers: int, eps: float, theta, beta, beta1, k,
                 gamma_weights=None) -> LayerVector:
    """Full placement pipeline: fdot + fbar on the theta grid."""
    theta = np.atleast_1d(np.asarray(theta, dtype=float))
    fdot = dot_f(n_layers, eps, beta)
    fbar = solve_barf(n_layers, beta, beta1, k, gamma_weights=gamma_weights)
    return LayerVector(n_layers=n_layers, theta=theta, dot=fdot, bar=fbar)
