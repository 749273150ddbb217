import math

import numpy as np
import pytest

from layercluster import placement as pl
from layercluster import toda
from layercluster.profile import GAMMA0, GAMMA1

SQRT2 = math.sqrt(2.0)
ELL = 2.0 * math.pi
M = 128
THETA = np.linspace(0.0, ELL, M, endpoint=False)


def make_system(n, eps, beta=None, hcal=1.0):
    beta = np.ones(M) if beta is None else beta
    fbar = pl.solve_barf(n, beta, 0.0, hcal)
    coeffs = pl.interaction_coeffs(fbar, beta)
    return toda.assemble_system(coeffs, eps, THETA, ELL)


class TestAssembly:
    def test_matrix_structure_single_layer(self):
        sys = make_system(1, 1e-3)
        b = sys.b_matrix(0)
        # N=1: B = [2 frak-c_1] with frak-c_1 = (4/3) Hcal.
        assert b.shape == (1, 1)
        assert b[0, 0] == pytest.approx(8.0 / 3.0, abs=1e-10)

    def test_b_equals_a_for_equal_weights(self):
        sys = make_system(3, 1e-3)
        for node in (0, M // 2):
            assert np.allclose(sys.b_matrix(node), sys.a_matrix(node),
                               atol=1e-12)

    def test_a_congruent_to_positive_diagonal(self):
        # Q A Q^T = diag(2 a_0, a_1, ..., a_{N-1}) for the lower
        # bidiagonal Q of cumulative sums, so A > 0 whenever all a_n > 0.
        sys = make_system(3, 1e-3)
        a = sys.a[:, 0]
        A = sys.a_matrix(0)
        n = a.size
        q = np.eye(n) - np.diag(np.ones(n - 1), -1)   # gap map w = Q v
        p = np.linalg.inv(q)                          # cumulative sums
        diag = p.T @ A @ p
        expected = np.diag(np.concatenate([[2.0 * a[0]], a[1:]]))
        assert np.allclose(diag, expected, atol=1e-10)

    def test_positive_spectrum_under_hypothesis(self):
        for n in (1, 2, 4):
            sys = make_system(n, 1e-3, hcal=0.7)
            assert np.all(sys.a_eigenvalues() > 0)

    def test_coarse_grid_rejected(self):
        beta = np.ones(16)
        fbar = pl.solve_barf(1, beta, 0.0, 1.0)
        coeffs = pl.interaction_coeffs(fbar, beta)
        with pytest.raises(toda.TodaError):
            toda.assemble_system(coeffs, 1e-3,
                                 np.linspace(0, ELL, 16, endpoint=False),
                                 ELL)


class TestInteraction:
    def test_linearization_matches_b(self):
        # d G / d ftilde at 0 equals the B blocks, checked against a
        # finite-difference of the nonlinear interaction term.
        sys = make_system(3, 1e-3)
        ft = np.zeros((3, M))
        g0 = toda.interaction_term(sys, ft)
        step = 1e-7
        jac_fd = np.zeros((3, 3))
        for j in range(3):
            pert = ft.copy()
            pert[j, 0] += step
            jac_fd[:, j] = (toda.interaction_term(sys, pert)[:, 0]
                            - g0[:, 0]) / step
        assert np.allclose(jac_fd, sys.b_matrix(0), atol=1e-4)

    def test_split_sums_to_full_term(self):
        sys = make_system(2, 1e-3)
        rng = np.random.default_rng(7)
        ft = 0.05 * rng.standard_normal((2, M))
        linear, jterm = toda.nonlinear_residual(sys, ft)
        assert np.allclose(linear + jterm,
                           toda.interaction_term(sys, ft), atol=1e-12)

    def test_quadratic_tail_bound(self):
        sys = make_system(2, 1e-3)
        rng = np.random.default_rng(11)
        ratios = []
        for amp in (1e-2, 1e-3):
            ft = amp * rng.standard_normal((2, M))
            _, jterm = toda.nonlinear_residual(sys, ft)
            ratios.append(np.max(np.abs(jterm))
                          / np.max(np.abs(ft)) ** 2)
        # ||J(f)|| <= C ||f||^2: the measured constant is amp-independent.
        assert ratios[0] == pytest.approx(ratios[1], rel=1.0)

    def test_jacobian_matches_finite_differences(self):
        sys = make_system(2, 1e-3)
        rng = np.random.default_rng(3)
        ft = 0.02 * rng.standard_normal((2, M))
        jac = toda._interaction_jacobian(sys, ft).toarray()
        step = 1e-7
        cols = [0, M - 1, M, 2 * M - 1]
        for col in cols:
            pert = ft.ravel().copy()
            pert[col] += step
            fd = (toda.interaction_term(sys, pert.reshape(2, M))
                  - toda.interaction_term(sys, ft)).ravel() / step
            assert np.allclose(jac[:, col], fd, atol=1e-4)


class TestResonance:
    def test_analytic_locations(self):
        rho = 8.0 / 3.0
        res = toda.analytic_circle_resonances(rho, ELL, 1e-4, 1e-2)
        # eps_res = rho ell^2 / (4 pi^2 gamma0 m^2) = rho / (gamma0 m^2).
        for e in res:
            m = math.sqrt(rho / (GAMMA0 * e))
            assert abs(m - round(m)) < 1e-9
        assert np.all(np.diff(res) < 0) or np.all(np.diff(res) > 0) \
            or res.size <= 1

    def test_gap_vanishes_at_resonance(self):
        sys = make_system(1, 1e-3)
        rho = float(sys.b_eigenvalues()[0, 0])
        e_res = toda.analytic_circle_resonances(rho, ELL, 1e-3, 1e-2)[0]
        # Constant-coefficient path: gap at the exact resonant eps is tiny
        # (only the Hcal drift of rho with eps moves it off zero).
        gap = toda.spectral_gap(make_system(1, e_res))
        assert gap < 5e-3

    def test_scan_flags_cover_resonances(self):
        grid = np.geomspace(4e-3, 1e-2, 120)
        scan = toda.resonance_scan(lambda e: make_system(1, e), grid)
        rho = 8.0 / 3.0
        analytic = toda.analytic_circle_resonances(rho, ELL, 4e-3, 1e-2)
        flagged = grid[scan.resonant]
        assert flagged.size > 0
        for e_res in analytic:
            assert np.min(np.abs(flagged - e_res)) / e_res < 0.05

    def test_resonant_solve_refused(self):
        rho = 8.0 / 3.0
        e_res = toda.analytic_circle_resonances(rho, ELL, 1e-3, 1e-2)[0]
        sys = make_system(1, e_res)
        with pytest.raises(toda.ResonantEpsError):
            toda.solve_tilde_f(sys, np.zeros((1, M)))


class TestSolve:
    EPS_SAFE = 7.48e-3      # geometric midpoint between resonances

    def test_homogeneous_solution_is_zero(self):
        sys = make_system(2, 4.5e-3)       # non-resonant for two layers
        ft, rep = toda.solve_tilde_f(sys, np.zeros((2, M)))
        assert np.max(np.abs(ft)) == 0.0
        assert rep.converged

    def test_converged_residual(self):
        sys = make_system(1, self.EPS_SAFE)
        h = self.EPS_SAFE * np.cos(THETA)[None, :]
        ft, rep = toda.solve_tilde_f(sys, h)
        assert rep.residual_norm < 1e-11
        res = toda.full_residual(sys, ft, h)
        assert np.max(np.abs(res)) < 1e-11

    def test_inversion_bound(self):
        sys = make_system(1, self.EPS_SAFE)
        h = self.EPS_SAFE * np.cos(THETA)[None, :]
        ft, _ = toda.solve_tilde_f(sys, h)
        h_l2 = math.sqrt(float(np.sum(h**2)) * sys.h_theta)
        assert np.max(np.abs(ft)) <= 1.0 * self.EPS_SAFE**-0.5 * h_l2

    def test_report_serializes(self):
        import json
        sys = make_system(1, self.EPS_SAFE)
        _, rep = toda.solve_tilde_f(sys, np.zeros((1, M)))
        payload = json.loads(rep.to_json())
        assert payload["converged"] is True
        assert "newton_trace" in payload

    def test_wrong_forcing_shape(self):
        sys = make_system(2, self.EPS_SAFE)
        with pytest.raises(toda.TodaError):
            toda.solve_tilde_f(sys, np.zeros((1, M)))
