import math

import numpy as np
import pytest

from layercluster import profile as pr
from layercluster import strip_linear as sl

SQRT2 = math.sqrt(2.0)


def _manufactured(nx, nz, eps, x_max=16.0, amp_beta=0.2):
    """Exact field x H_x sin(theta) and its image under the operator."""
    ell = 2.0 * np.pi
    x, z = sl.make_grid(x_max, nx, ell / eps, nz)
    theta = eps * z
    beta = 1.0 + amp_beta * np.cos(theta)
    g = np.sin(theta)
    phihat = x * pr.h_x(x)
    exact = phihat[:, None] * g[None, :]
    phihat_xx = 2.0 * pr.h_xx(x) + x * pr.h_xxx(x)
    rhs_vals = (phihat[:, None] * (-(eps**2) * g)[None, :]
                + beta[None, :]**2
                * ((phihat_xx + (1.0 - 3.0 * pr.h(x)**2) * phihat)[:, None]
                   * g[None, :]))
    rhs = sl.StripField(x=x, z=z, values=rhs_vals, z_period=ell / eps)
    return rhs, exact, beta


class TestSolveStripLinear:
    def test_manufactured_solution(self):
        rhs, exact, beta = _manufactured(1601, 128, 0.01)
        phi = sl.solve_strip_linear(rhs, beta, 0.01)
        assert np.max(np.abs(phi.values - exact)) < 1e-4

    def test_second_order_convergence(self):
        errs = []
        for nx in (401, 801, 1601):
            rhs, exact, beta = _manufactured(nx, 128, 0.01)
            phi = sl.solve_strip_linear(rhs, beta, 0.01)
            errs.append(np.max(np.abs(phi.values - exact)))
        orders = [math.log(a / b) / math.log(2.0)
                  for a, b in zip(errs, errs[1:])]
        assert min(orders) > 1.8

    def test_constant_beta_skips_drift(self):
        # With beta constant the substitution is the identity and the
        # solve is a single Fourier pass.
        rhs, exact, _ = _manufactured(801, 64, 0.01, amp_beta=0.0)
        phi = sl.solve_strip_linear(rhs, np.ones(64), 0.01)
        assert np.max(np.abs(phi.values - exact)) < 1e-3

    def test_solution_orthogonality_and_decay(self):
        rhs, _, beta = _manufactured(801, 64, 0.01)
        phi = sl.solve_strip_linear(rhs, beta, 0.01)
        assert phi.orthogonality_defect() < 1e-10
        assert phi.decay_defect() < 1e-8

    def test_operator_consistency(self):
        # Applying the discrete operator to the solution recovers the
        # (projected) right-hand side away from roundoff + drift residue.
        rhs, _, beta = _manufactured(801, 64, 0.01)
        phi = sl.solve_strip_linear(rhs, beta, 0.01)
        back = sl.apply_strip_operator(phi, beta, 0.01)
        interior = slice(1, -1)
        err = np.max(np.abs(back.values[interior] - rhs.values[interior]))
        assert err < 5e-3 * np.max(np.abs(rhs.values))

    def test_nonorthogonal_rhs_rejected(self):
        x, z = sl.make_grid(12.0, 201, 2.0 * np.pi / 0.01, 32)
        bad = sl.StripField(x=x, z=z, values=np.outer(pr.h_x(x), np.ones(32)),
                            z_period=2.0 * np.pi / 0.01)
        with pytest.raises(sl.OrthogonalityError):
            sl.solve_strip_linear(bad, np.ones(32), 0.01, project_rhs=False)

    def test_nonorthogonal_rhs_projected(self):
        x, z = sl.make_grid(12.0, 201, 2.0 * np.pi / 0.01, 32)
        vals = np.outer(pr.h_x(x), np.ones(32)) \
            + np.outer(x * pr.h_x(x), np.sin(0.01 * z))
        rhs = sl.StripField(x=x, z=z, values=vals,
                            z_period=2.0 * np.pi / 0.01)
        phi = sl.solve_strip_linear(rhs, np.ones(32), 0.01, project_rhs=True)
        assert phi.orthogonality_defect() < 1e-10


class TestPhi11:
    def test_neumann_symmetry_at_wall(self):
        # The reflected psi term makes d/ds phi11 vanish at s = 0.
        s = np.linspace(0.0, 30.0, 3001)
        z = np.linspace(0.0, 2.0 * np.pi / 0.01, 16, endpoint=False)
        f = np.full((2, 16), 0.0)
        f[0], f[1] = 3.0, 9.0
        fdot = np.full((2, 16), 1.0)
        field = sl.build_phi11(s, z, f, fdot, np.ones(16), np.ones(16),
                               0.01, 2.0 * np.pi / 0.01)
        ds = (field.values[1] - field.values[0]) / (s[1] - s[0])
        assert np.max(np.abs(ds)) < 1e-4

    def test_amplitude_scaling(self):
        s = np.linspace(0.0, 20.0, 501)
        z = np.zeros(1)
        f = np.array([[4.0]])
        fdot = np.array([[2.5]])
        a = sl.build_phi11(s, z, f, fdot, np.ones(1), np.ones(1), 0.01, 1.0)
        b = sl.build_phi11(s, z, f, fdot, np.ones(1), 2.0 * np.ones(1),
                           0.01, 1.0)
        assert np.allclose(b.values, 2.0 * a.values, atol=1e-14)


class TestXi3:
    def test_orthogonal_to_layer_mode(self):
        from layercluster import placement as pl
        eps = 1e-3
        beta = np.ones(4)
        fbar = pl.solve_barf(2, beta, 0.0, 1.0)
        f, _ = pl.predicted_positions(2, eps, beta, np.ones(4))
        co = pl.interaction_coeffs(fbar, beta)
        fam = pr.CutoffFamily(offsets=f[:, 0])
        x, w = pr.quadrature_grid(25.0)
        z = np.zeros(4)
        for layer in (1, 2):
            rhs = sl.build_xi3_rhs(layer, x, z, co, fam, 1.0)
            mode = (-1.0) ** layer * pr.h_x(x)
            proj = w @ (rhs.values * mode[:, None])
            scale = np.max(np.abs(rhs.values))
            assert np.max(np.abs(proj)) < 1e-8 * max(scale, 1e-30)

    def test_layer_index_validated(self):
        from layercluster import placement as pl
        fbar = pl.solve_barf(2, np.ones(2), 0.0, 1.0)
        co = pl.interaction_coeffs(fbar, np.ones(2))
        fam = pr.CutoffFamily(offsets=np.array([3.0, 9.0]))
        with pytest.raises(IndexError):
            sl.build_xi3_rhs(3, np.linspace(-5, 5, 11), np.zeros(2), co,
                             fam, 1.0)
