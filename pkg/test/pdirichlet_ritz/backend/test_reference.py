import numpy as np
import pandas as pd
import pytest

from pdirichlet_ritz.backend import reference
from pdirichlet_ritz.backend.exceptions import NewtonConvergenceError
from pdirichlet_ritz.backend.reference import (
    cell_quadrature,
    exact,
    exact_on_points,
    family_domain,
    family_exponent,
    fd_solve_1d,
    fit_rate,
    penalty_rate_study,
    residual_check,
)


def ones(x):
    return np.ones_like(x)


class TestExact:
    def test_vrhs_at_one(self):
        """𝓹 = 1: sin(π) = 0，u* = sin(πx)/π²"""
        x = np.linspace(-1.0, 1.0, 11)
        u, _ = exact("vrhs", 1.0, x)
        np.testing.assert_allclose(u, np.sin(np.pi * x) / np.pi ** 2, rtol=0, atol=1e-15)
        assert exact("vrhs", 1.0, [0.0])[0][0] == 0.0

    def test_vexp_p2_centre(self):
        u, du = exact("vexp", 2.0, [0.0])
        assert u[0] == 0.5
        assert du[0, 0] == 0.0
        assert du.shape == (1, 1)

    def test_vdom_boundary(self):
        u, _ = exact("vdom", 1.5, [-1.5, 1.5])
        np.testing.assert_array_equal(u, [0.0, 0.0])

    @pytest.mark.parametrize("family,param", [("vrhs", 2.5), ("vexp", 1.7), ("vexp", 4.0), ("vdom", 1.3)])
    def test_vanishes_on_the_boundary(self, family, param):
        a, b = family_domain(family, param)
        u, _ = exact(family, param, [a, b])
        np.testing.assert_allclose(u, 0.0, atol=1e-15)

    @pytest.mark.parametrize("family,param", [("vrhs", 2.5), ("vexp", 1.7), ("vexp", 4.0), ("vdom", 1.3)])
    def test_gradient_matches_differences(self, family, param):
        a, b = family_domain(family, param)
        x = np.linspace(a, b, 41)[1:-1]
        x = x[np.abs(x) > 1e-2]
        h = 1e-6
        fd = (exact(family, param, x + h)[0] - exact(family, param, x - h)[0]) / (2 * h)
        np.testing.assert_allclose(exact(family, param, x)[1][:, 0], fd, rtol=1e-6, atol=1e-9)

    def test_vexp_undefined_at_one(self):
        with pytest.raises(ValueError):
            exact("vexp", 1.0, [0.0])

    def test_unknown_family(self):
        with pytest.raises(ValueError):
            exact("vfoo", 1.0, [0.0])

    def test_family_exponent(self):
        assert family_exponent("vexp", 3.5) == 3.5
        assert family_exponent("vrhs", 3.5) == 2.0


class TestExactOnPoints:
    def test_parameter_from_first_column(self):
        points = np.array([[1.2, 0.1], [1.8, -0.3], [1.2, 0.5]])
        u, du = exact_on_points("vdom", points, parameter_dim=1)
        np.testing.assert_allclose(u, [(1.44 - 0.01) / 2, (3.24 - 0.09) / 2, (1.44 - 0.25) / 2])
        np.testing.assert_allclose(du[:, 0], [-0.1, 0.3, -0.5])

    def test_fixed_parameter(self):
        u, _ = exact_on_points("vexp", np.array([[0.0]]), parameter_dim=0, fixed_parameter=2.0)
        assert u[0] == 0.5

    def test_fixed_parameter_required(self):
        with pytest.raises(ValueError):
            exact_on_points("vexp", np.array([[0.0]]), parameter_dim=0)

    def test_one_spatial_column(self):
        with pytest.raises(ValueError):
            exact_on_points("vdom", np.zeros((2, 3)), parameter_dim=1)


class TestResidualCheck:
    def test_vrhs(self):
        assert residual_check("vrhs", 2.0) <= 1e-4

    def test_vexp(self):
        """|u′|^{p−2}u′ = −x，−(−x)′ − 1 = 0"""
        assert residual_check("vexp", 3.0) <= 1e-3

    @pytest.mark.parametrize("param", [1.0, 1.5, 2.0])
    def test_vdom(self, param):
        assert residual_check("vdom", param) <= 1e-6

    def test_step_must_be_positive(self):
        with pytest.raises(ValueError):
            residual_check("vdom", 1.0, h=0.0)


class TestFDSolve:
    def test_p2_dirichlet(self):
        """−u″ = 1 on (−1, 1) → (1−x²)/2"""
        sol = fd_solve_1d(2.0, ones, (-1.0, 1.0), 200)
        assert sol.values[0] == 0.0 and sol.values[-1] == 0.0
        assert np.max(np.abs(sol.values - (1 - sol.nodes ** 2) / 2)) <= 1e-4

    def test_p2_penalty_shifts_by_one_over_lambda(self):
        sol = fd_solve_1d(2.0, ones, (-1.0, 1.0), 200, bc="penalty", penalty=10.0)
        assert np.max(np.abs(sol.values - ((1 - sol.nodes ** 2) / 2 + 0.1))) <= 1e-3

    def test_p3_matches_closed_form(self):
        """p = 3 的解即 p′ = 3/2 的 vexp 精确解"""
        sol = fd_solve_1d(3.0, ones, (-1.0, 1.0), 400)
        assert sol.max_error(lambda x: exact("vexp", 3.0, x)[0]) <= 1e-3

    def test_second_order_for_p2(self):
        errors = [fd_solve_1d(2.0, ones, (-1.0, 1.0), n).max_error(lambda x: (1 - x ** 2) / 2) for n in (50, 100, 200, 400)]
        orders = np.log2(np.array(errors[:-1]) / np.array(errors[1:]))
        assert np.all(orders >= 1.9)

    def test_newton_energy_decreases(self):
        sol = fd_solve_1d(3.0, ones, (-1.0, 1.0), 100)
        energies = [entry["energy"] for entry in sol.newton_log]
        assert sol.iterations == len(energies) > 0
        assert np.all(np.diff(energies) <= 1e-12)
        assert sol.newton_log[-1]["gradient_norm"] > 0

    @pytest.mark.parametrize("p", [1.5, 1.2])
    def test_p_below_two_matches_closed_form(self, p):
        """p < 2: 默认 tol 与 max_iter 下收敛到 vexp 精确解"""
        sol = fd_solve_1d(p, ones, (-1.0, 1.0), 400)
        assert sol.iterations <= 100
        assert sol.max_error(lambda x: exact("vexp", p, x)[0]) <= 1e-3

    def test_p_below_two_penalty(self):
        """f = 1 时边界通量为 1，u_λ = u* + λ^{−1/(p−1)}"""
        sol = fd_solve_1d(1.5, ones, (-1.0, 1.0), 400, bc="penalty", penalty=10.0)
        assert sol.values[0] == pytest.approx(0.01, rel=1e-3)
        assert sol.values[-1] == pytest.approx(0.01, rel=1e-3)
        assert sol.max_error(lambda x: exact("vexp", 1.5, x)[0] + 0.01) <= 1e-3

    @pytest.mark.parametrize("p, bc", [(1.5, "dirichlet0"), (1.5, "penalty"), (3.0, "penalty")])
    def test_energy_never_rises(self, p, bc):
        sol = fd_solve_1d(p, ones, (-1.0, 1.0), 200, bc=bc, penalty=100.0 if bc == "penalty" else None)
        energies = [entry["energy"] for entry in sol.newton_log]
        assert np.all(np.diff(energies) <= 1e-12)

    def test_ascent_step_is_rejected(self, monkeypatch):
        monkeypatch.setattr(reference, "_newton_direction", lambda H, g: g)
        with pytest.raises(NewtonConvergenceError, match="Line search failed") as excinfo:
            fd_solve_1d(3.0, ones, (-1.0, 1.0), 50)
        assert excinfo.value.log == []

    def test_iteration_cap(self):
        with pytest.raises(NewtonConvergenceError) as excinfo:
            fd_solve_1d(3.0, ones, (-1.0, 1.0), 50, max_iter=0)
        assert excinfo.value.log == []

    @pytest.mark.parametrize(
        "kwargs",
        [{"n": 2}, {"p": 1.0}, {"bc": "neumann"}, {"bc": "penalty"}, {"bc": "penalty", "penalty": -1.0}, {"domain": (1.0, -1.0)}],
    )
    def test_invalid_arguments(self, kwargs):
        args = {"p": 2.0, "f": ones, "domain": (-1.0, 1.0), "n": 10}
        args.update(kwargs)
        with pytest.raises(ValueError):
            fd_solve_1d(**args)

    def test_artifacts(self, tmp_path):
        sol = fd_solve_1d(2.0, ones, (0.0, 1.0), 10)
        assert sol.cell_gradients().shape == (10,)
        quad = cell_quadrature(sol)
        assert quad.size == 10
        assert quad.total_measure == pytest.approx(1.0)
        sol.to_csv(tmp_path / "fd_solution.csv")
        frame = pd.read_csv(tmp_path / "fd_solution.csv")
        assert list(frame.columns) == ["x", "u"]
        assert len(frame) == 11


class TestPenaltyRate:
    def test_p2_boundary_norm(self):
        """p = 2: u_λ(±1) = 1/λ，边界范数 2/λ²"""
        lambdas = [1.0, 10.0, 100.0]
        table = penalty_rate_study(2.0, ones, lambdas, n=200)
        np.testing.assert_allclose(table["boundary_norm"], [2.0 / lam ** 2 for lam in lambdas], rtol=1e-3)
        assert np.all(np.diff(table["boundary_norm"]) < 0)
        assert list(table.columns) == ["lambda", "boundary_norm", "natural_sq", "newton_iterations"]

    @pytest.mark.parametrize("p", [3.0, 1.5])
    def test_boundary_norm_rate(self, p):
        """f = 1: u_λ(±1) = λ^{−1/(p−1)}，边界范数 2 λ^{−p/(p−1)}"""
        lambdas = [1.0, 10.0, 100.0, 1000.0]
        table = penalty_rate_study(p, ones, lambdas, n=400)
        assert np.all(np.diff(table["boundary_norm"]) < 0)
        np.testing.assert_allclose(table["boundary_norm"], [2.0 * lam ** (-p / (p - 1.0)) for lam in lambdas], rtol=1e-3)
        assert fit_rate(table)["slope"] <= -1.0 / p - 0.5
        assert np.all(np.isfinite(table["natural_sq"]))

    def test_fit_rate(self):
        table = pd.DataFrame({"lambda": [1.0, 10.0, 100.0], "boundary_norm": [3.0, 0.03, 0.0003]})
        fit = fit_rate(table)
        assert fit["slope"] == pytest.approx(-2.0)
        assert fit["constant"] == pytest.approx(3.0)

    def test_lambda_at_least_one(self):
        with pytest.raises(ValueError):
            penalty_rate_study(2.0, ones, [0.5, 10.0], n=20)
