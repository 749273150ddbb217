"""Boundary curves, potentials, and the Fermi collar chart.

Curves live on a uniform arclength grid theta in [0, ell).  Closed-form
kinds (circle, ellipse) carry analytic curvature on top of the sampled
representation so they can serve as oracles for the generic path.

Orientation convention: positively oriented curve, outward unit normal nu
with nu_theta = k gamma_theta (so the unit circle has k = +1).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from numpy.polynomial.legendre import leggauss
from scipy.interpolate import CubicSpline
from scipy.optimize import brentq


class GeometryError(ValueError):
    pass


class OutOfChartError(GeometryError):
    """Point outside the injectivity collar of the Fermi chart."""


def _arclength_table(point_fn, speed_fn, u_hi: float, n_panels: int = 2048,
                     order: int = 12):
    """Cumulative arclength of a parametric curve on [0, u_hi].

    Composite Gauss-Legendre per panel; with smooth speed the panel error
    is far below 1e-12, comfortably inside the 1e-10 target.
    """
    edges = np.linspace(0.0, u_hi, n_panels + 1)
    xg, wg = leggauss(order)
    half = np.diff(edges) / 2.0
    mid = (edges[:-1] + edges[1:]) / 2.0
    nodes = mid[:, None] + half[:, None] * xg[None, :]
    panel_len = (half[:, None] * wg[None, :] * speed_fn(nodes)).sum(axis=1)
    cum = np.concatenate([[0.0], np.cumsum(panel_len)])
    return edges, cum


@dataclass(frozen=True)
class BoundaryCurve:
    """Closed planar curve sampled at uniform arclength nodes."""

    theta: np.ndarray               # uniform nodes in [0, ell)
    points: np.ndarray              # (n, 2) samples gamma(theta)
    length: float
    kind: str = "sampled"
    params: dict = field(default_factory=dict)
    _spline_x: CubicSpline = field(repr=False, default=None)
    _spline_y: CubicSpline = field(repr=False, default=None)

    # -- constructors ------------------------------------------------------

    @staticmethod
    def _finalize(theta, pts, length, kind, params):
        thp = np.append(theta, length)
        xp = np.append(pts[:, 0], pts[0, 0])
        yp = np.append(pts[:, 1], pts[0, 1])
        sx = CubicSpline(thp, xp, bc_type="periodic")
        sy = CubicSpline(thp, yp, bc_type="periodic")
        return BoundaryCurve(theta=theta, points=pts, length=length,
                             kind=kind, params=params,
                             _spline_x=sx, _spline_y=sy)

    @classmethod
    def circle(cls, radius: float = 1.0, n: int = 512) -> "BoundaryCurve":
        if radius <= 0:
            raise GeometryError("radius must be positive")
        ell = 2.0 * np.pi * radius
        theta = np.linspace(0.0, ell, n, endpoint=False)
        ang = theta / radius
        pts = radius * np.column_stack([np.cos(ang), np.sin(ang)])
        return cls._finalize(theta, pts, ell, "circle", {"radius": radius})

    @classmethod
    def ellipse(cls, a: float, b: float, n: int = 512) -> "BoundaryCurve":
        """Ellipse (a cos u, b sin u) reparameterized to unit speed."""
        if a <= 0 or b <= 0:
            raise GeometryError("semi-axes must be positive")

        def speed(u):
            return np.sqrt((a * np.sin(u)) ** 2 + (b * np.cos(u)) ** 2)

        edges, cum = _arclength_table(None, speed, 2.0 * np.pi)
        ell = cum[-1]
        len_of_u = CubicSpline(edges, cum)
        theta = np.linspace(0.0, ell, n, endpoint=False)
        u = CubicSpline(cum, edges)(theta)
        # Newton polish so |gamma_theta| = 1 to interpolation precision.
        for _ in range(4):
            u = u - (len_of_u(u) - theta) / speed(u)
        pts = np.column_stack([a * np.cos(u), b * np.sin(u)])
        curve = cls._finalize(theta, pts, ell, "ellipse", {"a": a, "b": b})
        object.__setattr__(curve, "_ellipse_u", u)
        return curve

    @classmethod
    def from_samples(cls, points: np.ndarray, n: int = 512) -> "BoundaryCurve":
        """Closed curve through the given ordered sample points.

        The samples are interpolated with a periodic cubic spline in a
        provisional parameter and then reparameterized to unit speed.
        """
        pts = np.asarray(points, dtype=float)
        if pts.ndim != 2 or pts.shape[1] != 2 or pts.shape[0] < 8:
            raise GeometryError("need an (m, 2) array with m >= 8")
        if np.allclose(pts[0], pts[-1]):
            pts = pts[:-1]
        m = pts.shape[0]
        u0 = np.linspace(0.0, 1.0, m + 1)
        px = CubicSpline(u0, np.append(pts[:, 0], pts[0, 0]), bc_type="periodic")
        py = CubicSpline(u0, np.append(pts[:, 1], pts[0, 1]), bc_type="periodic")

        def speed(u):
            return np.hypot(px(u, 1), py(u, 1))

        edges, cum = _arclength_table(None, speed, 1.0, n_panels=4 * m)
        ell = cum[-1]
        inv = CubicSpline(cum, edges)
        theta = np.linspace(0.0, ell, n, endpoint=False)
        u = inv(theta)
        new_pts = np.column_stack([px(u), py(u)])
        return cls._finalize(theta, new_pts, ell, "sampled", {})

    # -- evaluation --------------------------------------------------------

    def _wrap(self, theta):
        return np.mod(theta, self.length)

    def point(self, theta):
        t = self._wrap(theta)
        return np.stack([self._spline_x(t), self._spline_y(t)], axis=-1)

    def tangent(self, theta):
        t = self._wrap(theta)
        tx, ty = self._spline_x(t, 1), self._spline_y(t, 1)
        norm = np.hypot(tx, ty)
        return np.stack([tx / norm, ty / norm], axis=-1)

    def normal(self, theta):
        """Outward unit normal (tangent rotated by -pi/2 for CCW curves)."""
        tngt = self.tangent(theta)
        return np.stack([tngt[..., 1], -tngt[..., 0]], axis=-1)

    def curvature(self, theta):
        """Signed curvature with nu_theta = k gamma_theta."""
        theta = np.asarray(theta, dtype=float)
        if self.kind == "circle":
            return np.full(theta.shape, 1.0 / self.params["radius"])
        if self.kind == "ellipse":
            a, b = self.params["a"], self.params["b"]
            u = self._param_of_theta(theta)
            denom = ((a * np.sin(u)) ** 2 + (b * np.cos(u)) ** 2) ** 1.5
            return a * b / denom
        t = self._wrap(theta)
        gxx, gyy = self._spline_x(t, 2), self._spline_y(t, 2)
        nu = self.normal(theta)
        return -(gxx * nu[..., 0] + gyy * nu[..., 1])

    def curvature_prime(self, theta):
        """d k / d theta, by spectral differentiation on the sample grid."""
        k = self.curvature(self.theta)
        n = k.size
        kh = np.fft.rfft(k)
        freqs = 2.0j * np.pi * np.arange(kh.size) / self.length
        kp = np.fft.irfft(kh * freqs, n)
        spl = CubicSpline(np.append(self.theta, self.length),
                          np.append(kp, kp[0]), bc_type="periodic")
        return spl(self._wrap(theta))

    def _param_of_theta(self, theta):
        u = getattr(self, "_ellipse_u", None)
        if u is None:
            raise GeometryError("parametric lookup only for ellipse kind")
        a, b = self.params["a"], self.params["b"]

        t = np.atleast_1d(self._wrap(theta))
        uu = np.interp(t, self.theta, u)
        for _ in range(6):
            # arclength residual via the spline points is awkward; invert by
            # matching the sampled point instead: Newton on gamma(u) ~ point.
            pu = np.column_stack([a * np.cos(uu), b * np.sin(uu)])
            target = np.atleast_2d(self.point(t))
            du = np.column_stack([-a * np.sin(uu), b * np.cos(uu)])
            err = ((pu - target) * du).sum(axis=1)
            uu = uu - err / (du * du).sum(axis=1)
        return uu.reshape(np.shape(theta))

    def max_curvature(self) -> float:
        return float(np.max(np.abs(self.curvature(self.theta))))

    def diameter(self) -> float:
        lo = self.points.min(axis=0)
        hi = self.points.max(axis=0)
        return float(np.hypot(*(hi - lo)))

    def unit_speed_defect(self) -> float:
        tx = self._spline_x(self.theta, 1)
        ty = self._spline_y(self.theta, 1)
        return float(np.max(np.abs(np.hypot(tx, ty) - 1.0)))


def curvature_and_frame(curve: BoundaryCurve, theta):
    """(signed curvature, unit tangent, outward unit normal) at theta."""
    defect = curve.unit_speed_defect()
    if defect > 1e-6:
        raise GeometryError(
            f"curve is not unit speed (defect {defect:.2e}); reparameterize"
        )
    return curve.curvature(theta), curve.tangent(theta), curve.normal(theta)


@dataclass(frozen=True)
class PotentialField:
    """Positive potential V on the closed domain plus collar traces.

    ``eval_fn`` maps cartesian points (..., 2) -> V.  If analytic collar
    traces (V, V_t, V_tt at the boundary, as functions of theta) are not
    supplied they are computed by 4th-order one-sided finite differences
    along the inward normal.
    """

    eval_fn: Callable
    kind: str = "generic"
    trace_fn: Callable = None       # theta -> (V0, Vt, Vtt), optional
    fd_step_scale: float = 1e-4

    @classmethod
    def constant(cls, value: float) -> "PotentialField":
        if value <= 0:
            raise GeometryError("potential must be positive")

        def ev(y):
            y = np.asarray(y, dtype=float)
            return np.full(y.shape[:-1], float(value))

        return cls(eval_fn=ev, kind="constant",
                   trace_fn=lambda th: (np.full(np.shape(th), float(value)),
                                        np.zeros(np.shape(th)),
                                        np.zeros(np.shape(th))))

    @classmethod
    def radial(cls, v_of_r: Callable, trace_fn: Callable = None
               ) -> "PotentialField":
        def ev(y):
            y = np.asarray(y, dtype=float)
            return v_of_r(np.hypot(y[..., 0], y[..., 1]))

        return cls(eval_fn=ev, kind="radial", trace_fn=trace_fn)

    @classmethod
    def from_expression(cls, expr: str) -> "PotentialField":
        """V given as a numpy expression in y1, y2 (config 'expr-table')."""
        allowed = {name: getattr(np, name) for name in
                   ("sin", "cos", "tan", "exp", "log", "sqrt", "hypot",
                    "abs", "pi", "e", "cosh", "sinh", "tanh")}

        def ev(y):
            y = np.asarray(y, dtype=float)
            ns = dict(allowed, y1=y[..., 0], y2=y[..., 1])
            out = eval(expr, {"__builtins__": {}}, ns)  # noqa: S307 - config-owned
            return np.broadcast_to(np.asarray(out, dtype=float),
                                   y.shape[:-1]).copy()

        return cls(eval_fn=ev, kind="expr-table")

    def along_normal(self, curve: BoundaryCurve, theta, t):
        """V(t, theta) = V(gamma(theta) - t nu(theta)); t > 0 is inside."""
        theta = np.asarray(theta, dtype=float)
        t = np.asarray(t, dtype=float)
        pts = curve.point(theta) - t[..., None] * curve.normal(theta)
        return self.eval_fn(pts)


def potential_trace(potential: PotentialField, curve: BoundaryCurve, theta):
    """Collar traces (beta, beta1, beta2) = (V^{1/2}, V_t, V_tt) at s = 0."""
    theta = np.asarray(theta, dtype=float)
    if potential.trace_fn is not None:
        v0, vt, vtt = potential.trace_fn(theta)
        v0 = np.broadcast_to(np.asarray(v0, float), theta.shape)
        vt = np.broadcast_to(np.asarray(vt, float), theta.shape)
        vtt = np.broadcast_to(np.asarray(vtt, float), theta.shape)
    else:
        hstep = potential.fd_step_scale * curve.diameter()
        ts = hstep * np.arange(6)
        vals = np.stack([potential.along_normal(curve, theta, np.full(theta.shape, t))
                         for t in ts])
        v0 = vals[0]
        # 4th-order one-sided first and second derivatives.
        c1 = np.array([-137.0 / 60, 5.0, -5.0, 10.0 / 3, -5.0 / 4, 1.0 / 5])
        c2 = np.array([15.0 / 4, -77.0 / 6, 107.0 / 6, -13.0, 61.0 / 12,
                       -5.0 / 6])
        vt = np.tensordot(c1, vals, axes=(0, 0)) / hstep
        vtt = np.tensordot(c2, vals, axes=(0, 0)) / hstep**2
    if np.any(v0 <= 0):
        raise GeometryError("potential non-positive on the boundary")
    return np.sqrt(v0), vt, vtt


def generalized_mean_curvature(curve: BoundaryCurve,
                               potential: PotentialField, theta):
    """H(theta) = k - V_t(0, theta) / (2 V(0, theta)) and a positivity flag."""
    k = curve.curvature(theta)
    beta, beta1, _ = potential_trace(potential, curve, theta)
    hcal = k - beta1 / (2.0 * beta**2)
    return hcal, bool(np.all(hcal > 0))


@dataclass(frozen=True)
class FermiChart:
    """Stretched collar chart (s, z) around the boundary.

    s = t / eps is the stretched inward distance, z = theta / eps the
    stretched arclength; the chart is injective for t < delta0 provided
    delta0 * max|k| < 1.
    """

    curve: BoundaryCurve
    eps: float
    delta0: float = None

    def __post_init__(self):
        if self.delta0 is None:
            object.__setattr__(self, "delta0",
                               0.4 / self.curve.max_curvature())
        if self.delta0 * self.curve.max_curvature() >= 1.0:
            raise GeometryError("delta0 too wide: chart not injective")
        if not 0 < self.eps < 1:
            raise GeometryError("eps must lie in (0, 1)")

    @property
    def s_max(self) -> float:
        return self.delta0 / self.eps

    @property
    def z_max(self) -> float:
        return self.curve.length / self.eps

    def det_g(self, s, z):
        k = self.curve.curvature(self.eps * np.asarray(z, float))
        return (1.0 - self.eps * np.asarray(s, float) * k) ** 2


def fermi_map(chart: FermiChart, s, z):
    """Map (s, z) to the rescaled cartesian plane; returns (point, det g)."""
    s = np.asarray(s, dtype=float)
    z = np.asarray(z, dtype=float)
    if np.any(s < 0) or np.any(s >= chart.s_max):
        raise OutOfChartError(f"s outside [0, {chart.s_max:g})")
    theta = chart.eps * z
    pt = chart.curve.point(theta) / chart.eps \
        - s[..., None] * chart.curve.normal(theta)
    return pt, chart.det_g(s, z)


def fermi_inverse(chart: FermiChart, point):
    """Invert the chart: rescaled cartesian point -> (s, z)."""
    y = chart.eps * np.asarray(point, dtype=float)   # physical coordinates
    curve = chart.curve
    d2 = ((curve.points - y) ** 2).sum(axis=1)
    theta = curve.theta[int(np.argmin(d2))]
    for _ in range(60):
        g = curve.point(theta)
        tau = curve.tangent(theta)
        step = float(np.dot(y - g, tau))
        theta += step
        if abs(step) < 1e-14 * max(1.0, curve.length):
            break
    theta = float(np.mod(theta, curve.length))
    t = float(np.dot(curve.point(theta) - y, curve.normal(theta)))
    if not -1e-12 <= t < chart.delta0:
        raise OutOfChartError(f"normal distance t={t:g} outside the collar")
    return max(t, 0.0) / chart.eps, theta / chart.eps


def winding_integral(curve: BoundaryCurve) -> float:
    """Quadrature of k dtheta over one period (2 pi for simple curves)."""
    k = curve.curvature(curve.theta)
    return float(np.sum(k) * curve.length / curve.theta.size)
