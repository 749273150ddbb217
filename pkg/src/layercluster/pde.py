"""Full nonlinear solves of eps^2 Lap u + V (1 - u^2) u = 0 near the boundary.

Two solvers: a radial 1D solver on the unit disk (the oracle geometry) and
a 2D Fermi-collar solver on the stretched strip for general curves.  Both
use damped Newton with analytic Jacobians, seeded by the multi-layer
ansatz u1, and report extracted zero-crossing depths for comparison with
the asymptotic placement.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
from scipy.interpolate import CubicSpline
from scipy.linalg import solve_banded
from scipy.sparse.linalg import splu

from . import profile
from .geometry import BoundaryCurve, FermiChart, PotentialField, potential_trace
from .profile import h as h_profile


class PdeError(RuntimeError):
    pass


class BranchMismatchError(PdeError):
    """Converged solution has a different layer count than requested."""


@dataclass
class SolutionField:
    """Converged (or trial) solution values plus solve diagnostics."""

    values: np.ndarray
    residual_norm: float = np.nan
    newton_trace: list = field(default_factory=list)
    meta: dict = field(default_factory=dict)


@dataclass
class LayerTrace:
    """Zero-crossing depths, stretched units, sorted increasing per slice.

    ``depths`` has shape (n_slices, count); radial solves have one slice.
    """

    depths: np.ndarray
    count: int
    unresolved: bool = False

    @classmethod
    def single(cls, depths) -> "LayerTrace":
        d = np.sort(np.atleast_1d(np.asarray(depths, dtype=float)))
        return cls(depths=d[None, :], count=d.size)


# ---------------------------------------------------------------------------
# ansatz
# ---------------------------------------------------------------------------

def build_u1(s, f_total, beta_z, n_layers: int):
    """Multi-layer ansatz u1 on an (s, z) product grid.

    u1 = sum_j H_j(beta (s - f_j)) + sum_j Hbar_j(beta (s + f_j)) + (-1)^N
    with H_j = (-1)^j H and Hbar_j = (-1)^{j+1} H; the reflected terms
    enforce the discrete Neumann condition at s = 0.
    """
    s = np.asarray(s, dtype=float)
    beta_z = np.atleast_1d(np.asarray(beta_z, dtype=float))
    f_total = np.atleast_2d(np.asarray(f_total, dtype=float))
    u = np.full((s.size, beta_z.size), (-1.0) ** n_layers)
    for j in range(1, n_layers + 1):
        fj = f_total[j - 1]
        sign = (-1.0) ** j
        u += sign * h_profile(beta_z[None, :] * (s[:, None] - fj[None, :]))
        u -= sign * h_profile(beta_z[None, :] * (s[:, None] + fj[None, :]))
    return u


# ---------------------------------------------------------------------------
# radial solver
# ---------------------------------------------------------------------------

def radial_grid(eps: float, f_max: float, coarse_h: float = 0.01,
                grow: float = 1.08):
    """Nodes on [0, 1] with collar refinement Delta r = eps/8 near r = 1."""
    fine_h = eps / 8.0
    width = min(0.45, eps * (f_max + 10.0))
    nodes = [1.0]
    r = 1.0
    while r > 1.0 - width:
        r -= fine_h
        nodes.append(r)
    hstep = fine_h
    while r > 0.0 and hstep < coarse_h:
        hstep *= grow
        r -= hstep
        if r > 0:
            nodes.append(r)
    if r > 0:
        n_rest = max(1, int(np.ceil(r / coarse_h)))
        nodes.extend(np.linspace(r, 0.0, n_rest + 1)[1:])
    nodes = np.array(nodes[::-1])
    nodes[0] = 0.0
    return nodes


def _radial_stencils(r):
    """Central 3-point first/second derivative weights on a nonuniform grid."""
    hm = r[1:-1] - r[:-2]
    hp = r[2:] - r[1:-1]
    d2 = (2.0 / (hm * (hm + hp)),
          -2.0 / (hm * hp),
          2.0 / (hp * (hm + hp)))
    d1 = (-hp / (hm * (hm + hp)),
          (hp - hm) / (hm * hp),
          hm / (hp * (hm + hp)))
    return d1, d2


def _radial_residual(u, r, eps: float, v_of_r):
    d1, d2 = _radial_stencils(r)
    res = np.empty_like(u)
    ri = r[1:-1]
    upp = d2[0] * u[:-2] + d2[1] * u[1:-1] + d2[2] * u[2:]
    up = d1[0] * u[:-2] + d1[1] * u[1:-1] + d1[2] * u[2:]
    res[1:-1] = eps**2 * (upp + up / ri) + v_of_r(ri) * u[1:-1] \
        * (1.0 - u[1:-1] ** 2)
    h0 = r[1] - r[0]
    res[0] = 4.0 * eps**2 * (u[1] - u[0]) / h0**2 + v_of_r(r[0]) * u[0] \
        * (1.0 - u[0] ** 2)
    hn = r[-1] - r[-2]
    res[-1] = 2.0 * eps**2 * (u[-2] - u[-1]) / hn**2 + v_of_r(r[-1]) * u[-1] \
        * (1.0 - u[-1] ** 2)
    return res


def _radial_jacobian_bands(u, r, eps: float, v_of_r):
    n = u.size
    d1, d2 = _radial_stencils(r)
    ab = np.zeros((3, n))
    ri = r[1:-1]
    ab[0, 2:] = eps**2 * (d2[2] + d1[2] / ri)            # super
    ab[1, 1:-1] = eps**2 * (d2[1] + d1[1] / ri) \
        + v_of_r(ri) * (1.0 - 3.0 * u[1:-1] ** 2)        # diag
    ab[2, :-2] = eps**2 * (d2[0] + d1[0] / ri)           # sub
    h0 = r[1] - r[0]
    ab[1, 0] = -4.0 * eps**2 / h0**2 + v_of_r(r[0]) * (1.0 - 3.0 * u[0] ** 2)
    ab[0, 1] = 4.0 * eps**2 / h0**2
    hn = r[-1] - r[-2]
    ab[1, -1] = -2.0 * eps**2 / hn**2 + v_of_r(r[-1]) * (1.0 - 3.0 * u[-1] ** 2)
    ab[2, -2] = 2.0 * eps**2 / hn**2
    return ab


def _damped_newton_radial(u, r, eps, v_of_r, tol, max_iter=80):
    trace = []
    res = _radial_residual(u, r, eps, v_of_r)
    rnorm = float(np.max(np.abs(res)))
    for it in range(1, max_iter + 1):
        if rnorm < tol:
            return u, rnorm, trace
        ab = _radial_jacobian_bands(u, r, eps, v_of_r)
        step = solve_banded((1, 1), ab, res)
        lam = 1.0
        while lam >= 2.0**-12:
            trial = u - lam * step
            tres = _radial_residual(trial, r, eps, v_of_r)
            tnorm = float(np.max(np.abs(tres)))
            if tnorm < (1.0 - 0.25 * lam) * rnorm or tnorm < tol:
                break
            lam *= 0.5
        else:
            raise PdeError(f"radial Newton stalled at iter {it}, "
                           f"residual {rnorm:.2e}")
        u, res, rnorm = trial, tres, tnorm
        trace.append({"iter": it, "residual": rnorm, "damping": lam})
    raise PdeError(f"radial Newton did not converge: residual {rnorm:.2e}")


def solve_radial(n_layers: int, eps: float, v_of_r, f_pred=None,
                 tol: float = 1e-10, u0=None):
    """Damped Newton on eps^2 (u'' + u'/r) + V(r) u (1 - u^2) = 0.

    Neumann at both ends; the initial guess is the layer ansatz at the
    predicted offsets ``f_pred`` (stretched units, increasing).  Returns
    (SolutionField, LayerTrace) with depths in stretched units t/eps.
    """
    if f_pred is None and n_layers > 0:
        raise PdeError("predicted offsets required to seed the solve")
    if not callable(v_of_r):
        v_const = float(v_of_r)
        v_of_r = lambda rr: np.full_like(np.asarray(rr, float), v_const)
    f_pred = np.atleast_1d(np.asarray(f_pred, dtype=float)) \
        if f_pred is not None else np.empty(0)
    f_max = f_pred[-1] if f_pred.size else 1.0
    if n_layers > 0 and eps * f_max > 0.3:
        eps_fit = 0.3 / f_max
        raise PdeError(
            f"layers do not fit in the collar: eps*f_N = {eps * f_max:.3f} "
            f"> 0.3; need eps < {eps_fit:.4f}")
    r = radial_grid(eps, f_max if n_layers else 1.0)
    beta = np.sqrt(v_of_r(np.array([1.0])))[0] \
        if callable(v_of_r) else np.sqrt(v_of_r)
    if u0 is None:
        s = (1.0 - r) / eps
        u0 = build_u1(s, f_pred[:, None], np.array([beta]),
                      n_layers)[:, 0] if n_layers else \
            np.full(r.size, -1.0)
    u, rnorm, trace = _damped_newton_radial(u0.copy(), r, eps, v_of_r, tol)
    if np.max(np.abs(u)) > 1.1:
        raise PdeError("solution violates the maximum-principle band")
    depths = extract_zero_depths(u[::-1], (1.0 - r[::-1]) / eps)
    sol = SolutionField(values=u, residual_norm=rnorm, newton_trace=trace,
                        meta={"r": r, "eps": eps, "n_layers": n_layers})
    trace_obj = LayerTrace.single(depths) if depths.size else \
        LayerTrace(depths=np.empty((1, 0)), count=0)
    if trace_obj.count != n_layers:
        raise BranchMismatchError(
            f"requested {n_layers} layers, converged branch has "
            f"{trace_obj.count} (depths {depths})")
    return sol, trace_obj


# ---------------------------------------------------------------------------
# layer extraction
# ---------------------------------------------------------------------------

def extract_zero_depths(u, s, min_slope: float = 1e-6):
    """Zero crossings of u(s) on one slice, s increasing.

    Linear interpolation seeds one Newton step on a local cubic; crossings
    with interpolated |u_s| below ``min_slope`` are treated as noise.
    """
    u = np.asarray(u, dtype=float)
    s = np.asarray(s, dtype=float)
    sign = np.sign(u)
    idx = np.nonzero(sign[:-1] * sign[1:] < 0)[0]
    depths = []
    for i in idx:
        s0 = s[i] - u[i] * (s[i + 1] - s[i]) / (u[i + 1] - u[i])
        lo = max(0, i - 1)
        hi = min(u.size, i + 3)
        if hi - lo >= 4:
            local = CubicSpline(s[lo:hi], u[lo:hi])
            slope = float(local(s0, 1))
            if abs(slope) < min_slope:
                continue
            s0 = s0 - float(local(s0)) / slope
        depths.append(s0)
    return np.asarray(depths)


def extract_layers(u_grid, s, expected: int = None,
                   resolution: float = None) -> LayerTrace:
    """Per-z-slice zero crossings of u(s, z); flags unresolved pairs."""
    u_grid = np.atleast_2d(np.asarray(u_grid, dtype=float))
    s = np.asarray(s, dtype=float)
    if resolution is None:
        resolution = 2.0 * float(s[1] - s[0])
    rows = []
    unresolved = False
    for m in range(u_grid.shape[1]):
        d = extract_zero_depths(u_grid[:, m], s)
        if d.size > 1 and np.any(np.diff(d) < resolution):
            unresolved = True
        rows.append(d)
    counts = {r.size for r in rows}
    if len(counts) != 1:
        raise BranchMismatchError(f"crossing count varies per slice: {counts}")
    count = counts.pop()
    if expected is not None and count != expected:
        raise BranchMismatchError(
            f"expected {expected} layers, found {count}")
    depths = np.vstack([np.sort(r) for r in rows]) if count else \
        np.empty((u_grid.shape[1], 0))
    return LayerTrace(depths=depths, count=count, unresolved=unresolved)


# ---------------------------------------------------------------------------
# strip residual and solver
# ---------------------------------------------------------------------------

def _strip_coefficients(chart: FermiChart, potential: PotentialField,
                        s, z):
    """Metric and potential coefficient tables on the (s, z) grid."""
    eps = chart.eps
    theta = eps * np.asarray(z, dtype=float)
    k = chart.curve.curvature(theta)
    kp = chart.curve.curvature_prime(theta)
    g = 1.0 - eps * np.asarray(s, dtype=float)[:, None] * k[None, :]
    if np.any(g <= 0):
        raise PdeError("metric degenerate: collar too wide for curvature")
    a_zz = 1.0 / g**2
    c_s = -eps * k[None, :] / g
    c_z = eps**2 * np.asarray(s, float)[:, None] * kp[None, :] / g**3
    t = eps * np.asarray(s, dtype=float)
    vgrid = np.stack([potential.along_normal(chart.curve, theta,
                                             np.full(theta.shape, ti))
                      for ti in t])
    return a_zz, c_s, c_z, vgrid


def residual_strip(u, chart: FermiChart, potential: PotentialField, s, z,
                   coeffs=None):
    """Local-form residual S(u) = u_ss + u_zz + B1(u) + V F(u) on the grid.

    Exact metric coefficients (no Taylor truncation).  Neumann symmetry is
    used at s = 0 and one-sided differences at the far edge.  Returns
    (field, sup_norm, l2_norm).
    """
    u = np.asarray(u, dtype=float)
    s = np.asarray(s, dtype=float)
    z = np.asarray(z, dtype=float)
    hs = s[1] - s[0]
    hz = z[1] - z[0]
    if coeffs is None:
        coeffs = _strip_coefficients(chart, potential, s, z)
    a_zz, c_s, c_z, vgrid = coeffs

    u_pad = np.vstack([u[1:2], u, u[-2:-1]])   # ghost rows: Neumann s=0,
    u_ss = (u_pad[2:] - 2.0 * u + u_pad[:-2]) / hs**2
    u_s = (u_pad[2:] - u_pad[:-2]) / (2.0 * hs)
    u_zz = (np.roll(u, -1, axis=1) - 2.0 * u + np.roll(u, 1, axis=1)) / hz**2
    u_z = (np.roll(u, -1, axis=1) - np.roll(u, 1, axis=1)) / (2.0 * hz)

    res = u_ss + a_zz * u_zz + c_s * u_s + c_z * u_z \
        + vgrid * u * (1.0 - u * u)
    sup = float(np.max(np.abs(res)))
    l2 = float(np.sqrt(np.sum(res**2) * hs * hz))
    return res, sup, l2


def _strip_jacobian(u, s, z, coeffs, far_value: float) -> sp.csc_matrix:
    """Sparse Jacobian of the strip residual with the Dirichlet far edge.

    Unknowns are u[i, m] for i = 0..ns-2 (the last row is pinned to the
    far-field constant), flattened with z fastest.
    """
    a_zz, c_s, c_z, vgrid = coeffs
    ns, nz = u.shape
    hs = s[1] - s[0]
    hz = z[1] - z[0]
    ni = ns - 1                               # interior + boundary rows
    idx = np.arange(ni * nz).reshape(ni, nz)

    rows, cols, vals = [], [], []

    def add(r, c, v):
        rows.append(r.ravel())
        cols.append(c.ravel())
        vals.append(np.broadcast_to(v, r.shape).ravel())

    i_all = np.arange(ni)
    diag = (-2.0 / hs**2 - 2.0 * a_zz[:ni] / hz**2
            + vgrid[:ni] * (1.0 - 3.0 * u[:ni] ** 2))
    add(idx, idx, diag)
    # z neighbours (periodic)
    zp = np.roll(np.arange(nz), -1)
    zm = np.roll(np.arange(nz), 1)
    add(idx, idx[:, zp][i_all], a_zz[:ni] / hz**2 + c_z[:ni] / (2.0 * hz))
    add(idx, idx[:, zm][i_all], a_zz[:ni] / hz**2 - c_z[:ni] / (2.0 * hz))
    # s neighbours
    up_coeff = 1.0 / hs**2 + c_s[:ni] / (2.0 * hs)      # toward i+1
    dn_coeff = 1.0 / hs**2 - c_s[:ni] / (2.0 * hs)      # toward i-1
    # row 0: ghost u[-1] = u[1]
    add(idx[0:1], idx[1:2], up_coeff[0:1] + dn_coeff[0:1])
    inner = np.arange(1, ni)
    add(idx[inner], idx[inner - 1], dn_coeff[inner])
    has_up = inner[inner + 1 <= ni - 1]
    add(idx[has_up], idx[has_up + 1], up_coeff[has_up])
    # row ni-1 couples to the pinned far row: constant, no Jacobian entry.
    rows = np.concatenate(rows)
    cols = np.concatenate(cols)
    vals = np.concatenate(vals)
    return sp.csc_matrix((vals, (rows, cols)), shape=(ni * nz, ni * nz))


def solve_strip(n_layers: int, eps: float, curve: BoundaryCurve,
                potential: PotentialField, f_pred, n_s: int = None,
                n_z: int = None, delta0: float = None,
                rel_tol: float = 1e-8, max_iter: int = 40,
                u0=None, phi11=None):
    """Damped Newton on the full Fermi-strip operator.

    Neumann at s = 0, Dirichlet u = (-1)^N at s = delta0/eps, z-periodic.
    ``f_pred`` is the (N, n_z) array of predicted offsets used for the
    ansatz.  Returns (SolutionField, LayerTrace, grids).
    """
    chart = FermiChart(curve=curve, eps=eps, delta0=delta0)
    if n_s is None:
        n_s = int(np.ceil(chart.s_max / 0.15)) + 1
    if n_z is None:
        n_z = 512
    s = np.linspace(0.0, chart.s_max, n_s)
    if s[1] - s[0] > 0.15 + 1e-12:
        raise PdeError(f"h_s = {s[1] - s[0]:.3f} exceeds 0.15; increase n_s")
    z = np.linspace(0.0, curve.length / eps, n_z, endpoint=False)
    theta = eps * z
    beta, _, _ = potential_trace(potential, curve, theta)
    f_pred = np.atleast_2d(np.asarray(f_pred, dtype=float))
    if np.max(f_pred) > chart.s_max - 6.0:
        raise PdeError("predicted layers too close to the far edge; "
                       "decrease eps or widen delta0")
    far = (-1.0) ** n_layers
    if u0 is None:
        u0 = build_u1(s, f_pred, beta, n_layers)
        if phi11 is not None:
            u0 = u0 + phi11
    u = u0.copy()
    u[-1] = far

    coeffs = _strip_coefficients(chart, potential, s, z)

    def dirichlet_residual(uu):
        res, _, _ = residual_strip(uu, chart, potential, s, z, coeffs=coeffs)
        return res[:-1]

    res = dirichlet_residual(u)
    rnorm0 = float(np.max(np.abs(res)))
    rnorm = rnorm0
    trace = []
    target = max(rel_tol * rnorm0, 1e-13)
    for it in range(1, max_iter + 1):
        if rnorm < target:
            break
        jac = _strip_jacobian(u, s, z, coeffs, far)
        step = splu(jac).solve(res.ravel()).reshape(res.shape)
        lam = 1.0
        while lam >= 2.0**-12:
            trial = u.copy()
            trial[:-1] -= lam * step
            tres = dirichlet_residual(trial)
            tnorm = float(np.max(np.abs(tres)))
            if tnorm < (1.0 - 0.25 * lam) * rnorm or tnorm < target:
                break
            lam *= 0.5
        else:
            raise PdeError(f"strip Newton stalled at iter {it}, "
                           f"residual {rnorm:.3e}")
        u, res, rnorm = trial, tres, tnorm
        trace.append({"iter": it, "residual": rnorm, "damping": lam})
    else:
        raise PdeError(f"strip Newton did not converge: residual {rnorm:.3e} "
                       f"(target {target:.3e})")
    if np.max(np.abs(u)) > 1.1:
        raise PdeError("solution violates the maximum-principle band")
    layer_trace = extract_layers(u, s, expected=n_layers)
    sol = SolutionField(values=u, residual_norm=rnorm, newton_trace=trace,
                        meta={"eps": eps, "n_layers": n_layers,
                              "rel_residual": rnorm / max(rnorm0, 1e-300)})
    return sol, layer_trace, (s, z)


# ---------------------------------------------------------------------------
# theory comparison
# ---------------------------------------------------------------------------

@dataclass
class DeltaTable:
    """Measured-vs-predicted layer positions and spacings."""

    measured: np.ndarray            # (n_slices, N)
    predicted: np.ndarray           # (n_slices, N)
    delta: np.ndarray
    rel_delta: np.ndarray
    spacing_measured: np.ndarray    # (n_slices, N-1)
    spacing_predicted: np.ndarray


def compare_to_theory(trace: LayerTrace, predicted) -> DeltaTable:
    """Per-layer deltas; ``predicted`` is (N,) or (N, n_slices)."""
    predicted = np.asarray(predicted, dtype=float)
    if predicted.ndim == 1:
        predicted = np.tile(predicted[:, None], (1, trace.depths.shape[0]))
    pred = predicted.T
    if pred.shape != trace.depths.shape:
        raise PdeError(f"layer count mismatch: measured {trace.depths.shape}"
                       f" vs predicted {pred.shape}")
    delta = trace.depths - pred
    rel = delta / pred
    return DeltaTable(
        measured=trace.depths, predicted=pred, delta=delta, rel_delta=rel,
        spacing_measured=np.diff(trace.depths, axis=1),
        spacing_predicted=np.diff(pred, axis=1))
