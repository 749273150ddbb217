"""The reduced Toda-type system along the boundary and its resonance scan.

For the periodic corrections ftilde_n(theta), n = 1..N, the system is

    -eps gamma0 ftilde_n'' - G_n(ftilde) = h_n,

where G_n collects the exponential neighbour interactions.  Its
linearization at zero is the block operator -eps gamma0 d^2/dtheta^2 - B
with B(theta) the tridiagonal-in-layers coupling matrix; B is an O(sqrt eps)
perturbation of a symmetric matrix A whose spectrum is positive whenever
the generalized mean curvature is.  Resonances are the eps values where
-eps gamma0 d^2 - rho_n(theta) has a near-zero eigenvalue.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import spsolve

from .placement import InteractionCoeffs
from .profile import GAMMA0, GAMMA1, SQRT2


class TodaError(RuntimeError):
    pass


class ResonantEpsError(TodaError):
    """Requested solve at an eps flagged as resonant."""


@dataclass(frozen=True)
class TodaSystem:
    """Assembled reduced system on a periodic theta grid of size M."""

    n_layers: int
    theta: np.ndarray               # (M,), uniform on [0, ell)
    ell: float
    eps: float
    beta: np.ndarray                # (M,)
    c: np.ndarray                   # (N, M)  frak-c_n = 12 b^2 g1n k_n
    dcoef: np.ndarray               # (N, M)  frak-d_n = 12 b^2 g2n k_{n+1}
    a: np.ndarray                   # (N, M)  frak-a_{n-1} = 12 b^2 g1 k_n
    kvec: np.ndarray                # (N+1, M) bold-k_j
    g1: np.ndarray = field(repr=False, default=None)   # (N,) weights
    g2: np.ndarray = field(repr=False, default=None)

    @property
    def m_nodes(self) -> int:
        return self.theta.size

    @property
    def h_theta(self) -> float:
        return self.ell / self.m_nodes

    def b_matrix(self, node: int) -> np.ndarray:
        """Coupling matrix B(theta_node), N x N."""
        n = self.n_layers
        c = self.c[:, node]
        d = self.dcoef[:, node]
        mat = np.zeros((n, n))
        mat[0, 0] = 2.0 * c[0] + d[0]
        if n > 1:
            mat[0, 1] = -d[0]
            for i in range(1, n - 1):
                mat[i, i - 1] = -c[i]
                mat[i, i] = c[i] + d[i]
                mat[i, i + 1] = -d[i]
            mat[n - 1, n - 2] = -c[n - 1]
            mat[n - 1, n - 1] = c[n - 1]
        return mat

    def a_matrix(self, node: int) -> np.ndarray:
        """Symmetric leading-order matrix A(theta_node)."""
        n = self.n_layers
        a = self.a[:, node]
        mat = np.zeros((n, n))
        mat[0, 0] = 2.0 * a[0] + (a[1] if n > 1 else 0.0)
        for i in range(1, n):
            mat[i, i - 1] = -a[i]
            mat[i - 1, i] = -a[i]
            mat[i, i] = a[i] + (a[i + 1] if i + 1 < n else 0.0)
        return mat

    def a_eigenvalues(self) -> np.ndarray:
        """Eigenvalues of A at every node, shape (M, N), ascending."""
        mats = np.stack([self.a_matrix(m) for m in range(self.m_nodes)])
        return np.linalg.eigvalsh(mats)

    def b_eigenvalues(self) -> np.ndarray:
        """Eigenvalues of B at every node, shape (M, N), ascending.

        B is a perturbation of symmetric A; its spectrum is real (the
        congruence structure survives the perturbation for small eps).
        """
        mats = np.stack([self.b_matrix(m) for m in range(self.m_nodes)])
        vals = np.linalg.eigvals(mats)
        if np.max(np.abs(vals.imag)) > 1e-9 * max(np.max(np.abs(vals)), 1.0):
            raise TodaError("complex spectrum: coupling matrix degenerate")
        return np.sort(vals.real, axis=1)


def assemble_system(coeffs: InteractionCoeffs, eps: float, theta, ell: float,
                    gamma_weights=None) -> TodaSystem:
    """Build the reduced system from the interaction coefficients.

    ``gamma_weights`` optionally supplies cutoff-weighted (gamma1_j,
    gamma2_j) arrays of shape (N,); the default uses the unweighted
    gamma_1 for both, which is exact to O(sqrt eps).
    """
    theta = np.atleast_1d(np.asarray(theta, dtype=float))
    if theta.size < 64:
        raise TodaError("theta grid too coarse (need M >= 64)")
    beta = np.broadcast_to(coeffs.beta, theta.shape).astype(float)
    n = coeffs.d.shape[0] - 1
    if gamma_weights is None:
        g1 = np.full(n, GAMMA1)
        g2 = np.full(n, GAMMA1)
    else:
        g1 = np.asarray(gamma_weights[0], dtype=float)
        g2 = np.asarray(gamma_weights[1], dtype=float)
    kvec = coeffs.k
    c = 12.0 * beta**2 * g1[:, None] * kvec[:-1]
    dcoef = 12.0 * beta**2 * g2[:, None] * kvec[1:]
    a = 12.0 * beta**2 * GAMMA1 * kvec[:-1]
    if np.any(a <= 0):
        raise TodaError("non-positive interaction strengths: Hcal <= 0 "
                        "somewhere on the boundary")
    return TodaSystem(n_layers=n, theta=theta, ell=float(ell), eps=float(eps),
                      beta=beta, c=c, dcoef=dcoef, a=a, kvec=kvec,
                      g1=g1, g2=g2)


def _gaps(sys: TodaSystem, ftilde):
    """Neighbour gaps Delta_n = ftilde_n - ftilde_{n-1} with the doubled
    boundary gap Delta_1 = 2 ftilde_1; shape (N, M)."""
    prev = np.vstack([-ftilde[0:1], ftilde[:-1]])
    return ftilde - prev


def interaction_term(sys: TodaSystem, ftilde):
    """Full nonlinear interaction G_n(ftilde), shape (N, M).

    G_n = -6 sqrt2 beta g1n k_n [exp(-sqrt2 beta Delta_n) - 1]
          +6 sqrt2 beta g2n k_{n+1} [exp(-sqrt2 beta Delta_{n+1}) - 1].
    """
    beta = sys.beta
    gaps = _gaps(sys, ftilde)
    expm = np.expm1(-SQRT2 * beta * gaps)                # (N, M)
    lead = -6.0 * SQRT2 * beta * sys.g1[:, None] * sys.kvec[:-1] * expm
    trail = np.zeros_like(lead)
    if sys.n_layers > 1:
        trail[:-1] = 6.0 * SQRT2 * beta * sys.g2[:-1, None] \
            * sys.kvec[1:-1] * expm[1:]
    return lead + trail


def nonlinear_residual(sys: TodaSystem, ftilde):
    """Split the interaction into linear part B ftilde and quadratic tail J.

    Returns (linear, jterm) with linear + jterm = G(ftilde); jterm uses the
    expansion exp(-u) - 1 + u which is exactly quadratic-order at zero.
    """
    ftilde = np.atleast_2d(np.asarray(ftilde, dtype=float))
    beta = sys.beta
    gaps = _gaps(sys, ftilde)
    quad = np.expm1(-SQRT2 * beta * gaps) + SQRT2 * beta * gaps
    jterm = -6.0 * SQRT2 * beta * sys.g1[:, None] * sys.kvec[:-1] * quad
    if sys.n_layers > 1:
        jterm[:-1] += 6.0 * SQRT2 * beta * sys.g2[:-1, None] \
            * sys.kvec[1:-1] * quad[1:]
    linear = interaction_term(sys, ftilde) - jterm
    return linear, jterm


def _second_difference(m: int, h: float) -> sp.csr_matrix:
    main = np.full(m, -2.0 / h**2)
    off = np.full(m, 1.0 / h**2)
    d2 = sp.diags([off, main, off], offsets=[-1, 0, 1],
                  shape=(m, m), format="lil")
    d2[0, m - 1] = 1.0 / h**2
    d2[m - 1, 0] = 1.0 / h**2
    return d2.tocsr()


def _spectral_d2(m: int, ell: float) -> np.ndarray:
    """Dense Fourier-collocation second-derivative matrix, period ell."""
    kappa = 2.0 * np.pi * np.fft.fftfreq(m, d=ell / m)
    return np.real(np.fft.ifft(-kappa[:, None] ** 2
                               * np.fft.fft(np.eye(m), axis=0), axis=0))


def periodic_operator_matrix(sys: TodaSystem, rho: np.ndarray) -> np.ndarray:
    """Dense matrix of v -> -eps gamma0 v'' - rho(theta) v, periodic grid.

    Fourier-collocation second derivative: the operator's eigenvalues for
    constant rho are exactly eps gamma0 (2 pi m / ell)^2 - rho up to the
    grid Nyquist mode, so resonance locations carry no FD dispersion error.
    """
    m = sys.m_nodes
    return -sys.eps * GAMMA0 * _spectral_d2(m, sys.ell) - np.diag(rho)


def spectral_gap(sys: TodaSystem) -> float:
    """Smallest |eigenvalue| over the N periodic layer-mode operators.

    For constant rho the gap is evaluated in closed form over all integer
    Fourier modes (no Nyquist truncation); variable rho falls back to the
    dense collocation matrix and requires the near-kernel mode to be
    resolved by the theta grid.
    """
    rhos = sys.b_eigenvalues()                           # (M, N)
    scale = sys.eps * GAMMA0 * (2.0 * np.pi / sys.ell) ** 2
    gap = np.inf
    for n in range(sys.n_layers):
        rho = rhos[:, n]
        span = float(rho.max() - rho.min())
        if span <= 1e-10 * max(1.0, float(np.abs(rho).max())):
            r = float(rho.mean())
            cands = [0.0]
            if r > 0:
                m_star = np.sqrt(r / scale)
                cands += [np.floor(m_star), np.ceil(m_star)]
            vals = [abs(scale * mm**2 - r) for mm in cands]
            gap = min(gap, min(vals))
        else:
            m_star = np.sqrt(max(float(rho.max()), 0.0) / scale)
            if m_star > sys.m_nodes / 3:
                raise TodaError(
                    f"theta grid too coarse for the resonant mode "
                    f"m ~ {m_star:.0f} (need M > {3 * m_star:.0f} nodes)")
            mat = periodic_operator_matrix(sys, rho)
            vals = np.linalg.eigvalsh(0.5 * (mat + mat.T))
            gap = min(gap, float(np.min(np.abs(vals))))
    return gap


@dataclass(frozen=True)
class ResonanceScan:
    eps: np.ndarray
    gap: np.ndarray
    resonant: np.ndarray            # bool mask
    threshold_factor: float

    def non_resonant_eps(self) -> np.ndarray:
        return self.eps[~self.resonant]

    def rows(self):
        for e, g, r in zip(self.eps, self.gap, self.resonant):
            yield e, g, bool(r)


def resonance_scan(system_factory, eps_grid, threshold_factor: float = 0.1
                   ) -> ResonanceScan:
    """Scan the eps grid for near-kernel layer-mode operators.

    ``system_factory(eps) -> TodaSystem``; an eps is flagged resonant when
    the minimal |eigenvalue| falls below threshold_factor times the local
    eigenvalue spacing 2 sqrt(eps gamma0 (2 pi/ell)^2 rho) of the periodic
    operator -- i.e. when a kernel eigenvalue is within 10% (by default) of
    the distance to its neighbour, the scale at which the inversion
    estimate degrades.
    """
    eps_grid = np.asarray(eps_grid, dtype=float)
    gaps = np.empty_like(eps_grid)
    spacing = np.empty_like(eps_grid)
    for i, e in enumerate(eps_grid):
        sys = system_factory(e)
        gaps[i] = spectral_gap(sys)
        rho_bar = float(np.mean(sys.b_eigenvalues()[:, 0]))
        scale = e * GAMMA0 * (2.0 * np.pi / sys.ell) ** 2
        spacing[i] = 2.0 * np.sqrt(scale * max(rho_bar, 0.0)) + scale
    resonant = gaps < threshold_factor * spacing
    return ResonanceScan(eps=eps_grid, gap=gaps, resonant=resonant,
                         threshold_factor=threshold_factor)


def analytic_circle_resonances(rho: float, ell: float, eps_lo: float,
                               eps_hi: float) -> np.ndarray:
    """Constant-coefficient resonances eps = rho ell^2 / (4 pi^2 gamma0 m^2)
    inside [eps_lo, eps_hi], descending in m."""
    out = []
    m = 1
    while True:
        e = rho * ell**2 / (GAMMA0 * 4.0 * np.pi**2 * m**2)
        if e < eps_lo:
            break
        if e <= eps_hi:
            out.append(e)
        m += 1
    return np.asarray(out)


def _interaction_jacobian(sys: TodaSystem, ftilde) -> sp.csr_matrix:
    """Sparse Jacobian of G w.r.t. ftilde (block tridiagonal in layers)."""
    n, m = ftilde.shape
    beta = sys.beta
    gaps = _gaps(sys, ftilde)
    expo = np.exp(-SQRT2 * beta * gaps)                  # (N, M)
    lead = 12.0 * beta**2 * sys.g1[:, None] * sys.kvec[:-1] * expo
    rows, cols, vals = [], [], []

    def add(nrow, ncol, diag_vals):
        rows.append(nrow * m + np.arange(m))
        cols.append(ncol * m + np.arange(m))
        vals.append(diag_vals)

    for i in range(n):
        # leading term contributes +lead_i * d(Delta_i)/d ftilde
        factor = 2.0 if i == 0 else 1.0
        add(i, i, factor * lead[i])
        if i > 0:
            add(i, i - 1, -lead[i])
        if i < n - 1:
            trail = 12.0 * beta**2 * sys.g2[i] * sys.kvec[i + 1] * expo[i + 1]
            add(i, i + 1, -trail)
            add(i, i, trail)
    rows = np.concatenate(rows)
    cols = np.concatenate(cols)
    vals = np.concatenate(vals)
    return sp.csr_matrix((vals, (rows, cols)), shape=(n * m, n * m))


@dataclass
class TodaSolveReport:
    converged: bool
    iterations: int
    residual_norm: float
    ftilde_inf: float
    gap: float
    newton_trace: list

    def to_json(self) -> str:
        return json.dumps({
            "converged": self.converged,
            "iterations": self.iterations,
            "residual_norm": self.residual_norm,
            "ftilde_inf": self.ftilde_inf,
            "gap": self.gap,
            "newton_trace": self.newton_trace,
        }, indent=2)


def full_residual(sys: TodaSystem, ftilde, h):
    """Residual of -eps gamma0 ftilde'' - G(ftilde) - h, shape (N, M)."""
    d2 = _second_difference(sys.m_nodes, sys.h_theta)
    second = np.stack([d2 @ row for row in ftilde])
    return -sys.eps * GAMMA0 * second - interaction_term(sys, ftilde) - h


def solve_tilde_f(sys: TodaSystem, h, tol: float = 1e-11,
                  max_iter: int = 50, gap_threshold_factor: float = 0.1,
                  check_resonance: bool = True):
    """Damped Newton solve for the periodic correction ftilde.

    Refuses to run at a resonant eps (near-singular linearization); returns
    (ftilde, TodaSolveReport).
    """
    h = np.atleast_2d(np.asarray(h, dtype=float))
    n, m = sys.n_layers, sys.m_nodes
    if h.shape != (n, m):
        raise TodaError(f"forcing shape {h.shape} != {(n, m)}")
    gap = spectral_gap(sys) if check_resonance else np.nan
    if check_resonance:
        scale = sys.eps * GAMMA0 * (2.0 * np.pi / sys.ell) ** 2
        rho_bar = float(np.mean(sys.b_eigenvalues()[:, 0]))
        spacing = 2.0 * np.sqrt(scale * max(rho_bar, 0.0)) + scale
        if gap < gap_threshold_factor * spacing:
            raise ResonantEpsError(
                f"eps={sys.eps:g} resonant: spectral gap {gap:.3e} < "
                f"{gap_threshold_factor:g} * mode spacing {spacing:.3e}")

    d2 = _second_difference(m, sys.h_theta)
    lap = -sys.eps * GAMMA0 * sp.kron(sp.identity(n), d2, format="csr")
    ftilde = np.zeros((n, m))
    trace = []
    res = full_residual(sys, ftilde, h)
    rnorm = float(np.max(np.abs(res)))
    for it in range(1, max_iter + 1):
        if rnorm < tol:
            return ftilde, TodaSolveReport(True, it - 1, rnorm,
                                           float(np.max(np.abs(ftilde))),
                                           gap, trace)
        jac = lap - _interaction_jacobian(sys, ftilde)
        step = spsolve(jac.tocsc(), res.ravel()).reshape(n, m)
        lam = 1.0
        while lam >= 2.0**-12:
            trial = ftilde - lam * step
            tres = full_residual(sys, trial, h)
            tnorm = float(np.max(np.abs(tres)))
            if tnorm < (1.0 - 0.25 * lam) * rnorm or tnorm < tol:
                break
            lam *= 0.5
        else:
            raise TodaError(
                f"Newton damping floor reached at iter {it}; "
                f"trace: {trace}")
        ftilde, res, rnorm = trial, tres, tnorm
        trace.append({"iter": it, "residual": rnorm, "damping": lam})
    raise TodaError(f"Newton did not converge: residual {rnorm:.2e}; "
                    f"trace: {trace}")
