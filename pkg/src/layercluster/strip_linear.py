"""Linearized solver on the periodic strip and the explicit corrections.

The operator is  phi_zz + beta(eps z)^2 [phi_xx + (1 - 3 H^2) phi]  on
x in [-X, X], z in [0, ell/eps) periodic, with decay in x and the
orthogonality  int phi(., z) H_x dx = 0  per z.

Solution route: the substitution ztilde = iota(z) = eps^{-1} int_0^{eps z}
beta absorbs the beta^2 factor into a constant-coefficient operator (up to
an O(eps) drift term handled by a fixed-point sweep); Fourier modes in
ztilde then decouple into tridiagonal two-point problems in x, with the
near-kernel H_x removed by deflation.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.interpolate import CubicSpline
from scipy.linalg import solve_banded

from . import profile
from .profile import SQRT2, h, h_x


class StripSolverError(RuntimeError):
    pass


class OrthogonalityError(StripSolverError):
    """Right-hand side not orthogonal to the profile derivative."""


@dataclass
class StripField:
    """Grid function on the strip: values[i, m] at (x[i], z[m]).

    z is a uniform periodic grid on [0, z_period); x is uniform on [-X, X].
    """

    x: np.ndarray
    z: np.ndarray
    values: np.ndarray
    z_period: float

    @property
    def hx(self) -> float:
        return float(self.x[1] - self.x[0])

    @property
    def hz(self) -> float:
        return float(self.z[1] - self.z[0])

    def orthogonality_defect(self) -> float:
        """max_z |int values(., z) H_x dx| by trapezoid on the x grid."""
        w = h_x(self.x)
        return float(np.max(np.abs(self.hx * (w @ self.values))))

    def decay_defect(self) -> float:
        """Edge magnitude relative to the interior maximum."""
        interior = np.max(np.abs(self.values))
        if interior == 0.0:
            return 0.0
        edge = max(np.max(np.abs(self.values[0])),
                   np.max(np.abs(self.values[-1])))
        return float(edge / interior)


def make_grid(x_max: float, nx: int, z_period: float, nz: int):
    x = np.linspace(-x_max, x_max, nx)
    z = np.linspace(0.0, z_period, nz, endpoint=False)
    return x, z


def _mode_matrix_bands(x, omega2):
    """Banded (ab) form of D_xx + diag(1 - 3 H^2) - omega^2 on interior x."""
    hx = x[1] - x[0]
    xi = x[1:-1]
    diag = -2.0 / hx**2 + (1.0 - 3.0 * h(xi) ** 2) - omega2
    off = np.full(xi.size - 1, 1.0 / hx**2)
    ab = np.zeros((3, xi.size))
    ab[0, 1:] = off
    ab[1] = diag
    ab[2, :-1] = off
    return ab


def _deflated_mode_solve(ab, rhs, w):
    """Solve the banded system with the span{H_x} direction deflated.

    Sherman-Morrison form of the bordered system: the returned solution
    satisfies  A phi = rhs - lam w  with  w . phi = 0.
    """
    sol = solve_banded((1, 1), ab, np.column_stack([rhs.real, rhs.imag, w]))
    y = sol[:, 0] + 1j * sol[:, 1]
    v = sol[:, 2]
    denom = np.dot(w, v)
    if abs(denom) < 1e-300:
        raise StripSolverError("deflation direction degenerate")
    return y - (np.dot(w, y) / denom) * v


def apply_strip_operator(field: StripField, beta_z, eps: float) -> StripField:
    """Discrete action of phi_zz + beta^2 [phi_xx + (1-3H^2) phi].

    x derivatives by the solver's 3-point stencil, z derivatives spectrally
    on the uniform periodic z grid.
    """
    x, z, phi = field.x, field.z, field.values
    hx = field.hx
    beta_z = np.broadcast_to(np.asarray(beta_z, float), z.shape)
    lap_x = np.zeros_like(phi)
    lap_x[1:-1] = (phi[2:] - 2.0 * phi[1:-1] + phi[:-2]) / hx**2
    freqs = 2.0 * np.pi * np.fft.rfftfreq(z.size, d=field.hz)
    phi_zz = np.fft.irfft(-(freqs**2) * np.fft.rfft(phi, axis=1),
                          z.size, axis=1)
    pot = (1.0 - 3.0 * h(x) ** 2)[:, None]
    out = phi_zz + beta_z[None, :] ** 2 * (lap_x + pot * phi)
    return StripField(x=x, z=z, values=out, z_period=field.z_period)


def solve_strip_linear(rhs: StripField, beta_z, eps: float,
                       orth_tol: float = 1e-8, max_sweeps: int = 25,
                       sweep_tol: float = 1e-10,
                       project_rhs: bool = True) -> StripField:
    """Solve the linearized strip problem for the given right-hand side.

    ``beta_z`` is beta(eps z) sampled on the z grid.  The RHS must be
    orthogonal to H_x per z (checked; projected out when ``project_rhs``).
    """
    x, z = rhs.x, rhs.z
    nz = z.size
    phi_rhs = rhs.values.copy()
    beta_z = np.broadcast_to(np.asarray(beta_z, float), z.shape).astype(float)

    w_quad = h_x(x) * rhs.hx                  # trapezoid = midpoint on uniform grid
    norm_w = np.dot(w_quad, h_x(x))
    defect = np.max(np.abs(w_quad @ phi_rhs))
    scale = max(np.max(np.abs(phi_rhs)), 1e-300)
    if defect > orth_tol * max(1.0, scale):
        if not project_rhs:
            raise OrthogonalityError(
                f"RHS has H_x component {defect:.2e} (tolerance "
                f"{orth_tol:.1e}); supply gamma-consistent data")
        phi_rhs = phi_rhs - np.outer(h_x(x), (w_quad @ phi_rhs) / norm_w)

    # Change of variables ztilde = iota(z); theta grid matches eps * z.
    theta = eps * np.append(z, rhs.z_period)
    beta_ext = np.append(beta_z, beta_z[0])
    beta_spl = CubicSpline(theta, beta_ext, bc_type="periodic")
    iota_nodes = np.concatenate([[0.0], np.cumsum(
        [beta_spl.integrate(theta[i], theta[i + 1]) for i in range(nz)])]) / eps
    period_t = iota_nodes[-1]
    iota_spl = CubicSpline(eps * np.append(z, rhs.z_period), iota_nodes)

    zt = np.linspace(0.0, period_t, nz, endpoint=False)
    # z as a function of ztilde (monotone inverse).
    z_of_zt = CubicSpline(iota_nodes, np.append(z, rhs.z_period))(zt)
    theta_of_zt = eps * z_of_zt
    beta_t = beta_spl(np.mod(theta_of_zt, theta[-1]))
    dbeta_t = beta_spl(np.mod(theta_of_zt, theta[-1]), 1)

    def resample_to_zt(vals):
        spl = CubicSpline(np.append(z, rhs.z_period),
                          np.concatenate([vals, vals[:, :1]], axis=1),
                          axis=1, bc_type="periodic")
        return spl(z_of_zt)

    def resample_to_z(vals):
        spl = CubicSpline(np.append(zt, period_t),
                          np.concatenate([vals, vals[:, :1]], axis=1),
                          axis=1, bc_type="periodic")
        return spl(iota_spl(eps * z))

    rhs_t0 = resample_to_zt(phi_rhs) / beta_t[None, :] ** 2
    freqs = 2.0 * np.pi * np.fft.rfftfreq(nz, d=zt[1] - zt[0])

    def fourier_solve(rhs_t):
        rhat = np.fft.rfft(rhs_t[1:-1], axis=1)
        phat = np.empty_like(rhat)
        w = h_x(x[1:-1])
        for m in range(rhat.shape[1]):
            ab = _mode_matrix_bands(x, freqs[m] ** 2)
            phat[:, m] = _deflated_mode_solve(ab, rhat[:, m], w)
        phi_t = np.zeros((x.size, nz))
        phi_t[1:-1] = np.fft.irfft(phat, nz, axis=1)
        return phi_t

    phi_t = fourier_solve(rhs_t0)
    drift_scale = float(np.max(np.abs(eps * dbeta_t / beta_t**2)))
    sweeps = 0
    if drift_scale > 0.0:
        for sweeps in range(1, max_sweeps + 1):
            phi_zt = np.fft.irfft(1j * freqs * np.fft.rfft(phi_t, axis=1),
                                  nz, axis=1)
            drift = (eps * dbeta_t / beta_t**2)[None, :] * phi_zt
            new = fourier_solve(rhs_t0 - drift)
            update = np.max(np.abs(new - phi_t))
            ref = max(np.max(np.abs(new)), 1e-300)
            phi_t = new
            if update < sweep_tol * ref:
                break
        else:
            raise StripSolverError(
                f"drift fixed point not contracting (eps={eps:g}, "
                f"relative update {update / ref:.2e} after {max_sweeps} sweeps)")

    phi = resample_to_z(phi_t)
    phi[0] = 0.0
    phi[-1] = 0.0
    return StripField(x=x, z=z, values=phi, z_period=rhs.z_period)


def build_phi11(s, z, f_total, f_dot, beta_z, beta1_z, eps: float,
                z_period: float) -> StripField:
    """First explicit correction field eps |ln eps| phi_11 on the (s, z) grid.

    Sum over layers of (eps beta1 / beta^2) fdot_j [psi_j(beta (s - f_j)) +
    psi_j(-beta (s + f_j))] with psi_j(x) = (-1)^j psi(x); the reflected
    term makes the normal derivative vanish at s = 0.
    """
    s = np.asarray(s, dtype=float)
    z = np.asarray(z, dtype=float)
    n = f_total.shape[0]
    beta_z = np.broadcast_to(np.asarray(beta_z, float), z.shape)
    beta1_z = np.broadcast_to(np.asarray(beta1_z, float), z.shape)
    out = np.zeros((s.size, z.size))
    pref = eps * beta1_z / beta_z**2
    for j in range(1, n + 1):
        fj = f_total[j - 1]
        fdj = f_dot[j - 1]
        xj = beta_z[None, :] * (s[:, None] - fj[None, :])
        xr = -beta_z[None, :] * (s[:, None] + fj[None, :])
        sign = (-1.0) ** j
        out += pref[None, :] * fdj[None, :] * sign \
            * (profile.psi(xj) + profile.psi(xr))
    return StripField(x=s, z=z, values=out, z_period=z_period)


def build_xi3_rhs(layer: int, x, z, coeffs, cutoffs, z_period: float,
                  gamma_weighted=None) -> StripField:
    """RHS -chi_j Xi_{3,j} driving the psi*_j correction for one layer.

    Xi_{3,j} pairs the exponential interaction tails with a gamma-ratio
    subtraction that makes chi_j Xi_{3,j} orthogonal to H_{j,x_j}.
    ``gamma_weighted`` supplies (gamma0j, gamma1j, gamma2j); defaults to
    the cutoff-weighted integrals computed on the fly.
    """
    x = np.asarray(x, dtype=float)
    z = np.asarray(z, dtype=float)
    beta = coeffs.beta
    n = coeffs.d.shape[0] - 1
    if not 1 <= layer <= n:
        raise IndexError(f"layer {layer} outside 1..{n}")
    if gamma_weighted is None:
        gamma_weighted = profile.weighted_gammas(
            cutoffs, layer, float(np.mean(beta)))
    g0, g1, g2 = gamma_weighted
    dj = coeffs.d[layer - 1]
    djp = coeffs.d[layer]
    sign = (-1.0) ** layer
    hjx = sign * h_x(x)[:, None]
    tails = (-dj[None, :] * np.exp(-SQRT2 * x)[:, None]
             + djp[None, :] * np.exp(SQRT2 * x)[:, None])
    flats = (-(g1 / g0) * dj + (g2 / g0) * djp)[None, :]
    xi3 = -6.0 * SQRT2 * beta[None, :] ** 2 * hjx * tails \
        + 6.0 * SQRT2 * beta[None, :] ** 2 * hjx * flats
    fj = cutoffs.offsets[layer - 1]
    beta_ref = float(np.mean(beta))
    chi = cutoffs.chi(layer, fj + x / beta_ref)[:, None]
    return StripField(x=x, z=z, values=-chi * xi3, z_period=z_period)
