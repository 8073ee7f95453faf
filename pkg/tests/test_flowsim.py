import numpy as np
import pytest

from conslaw.flowsim import (
    FlowConfig,
    activation_pattern,
    conservation_drift,
    forward,
    loss_and_grad,
    random_config,
    riemannian_metric,
    riemannian_residual,
    simulate,
)
from conslaw.models import ModelSpec, build_phi, known_laws
from conslaw.poly import parse

from .conftest import spec


def fd_grad(cfg, theta, eps=1e-6):
    g = np.zeros_like(theta)
    for i in range(theta.size):
        e = np.zeros_like(theta)
        e[i] = eps
        g[i] = (loss_and_grad(cfg, theta + e)[0] - loss_and_grad(cfg, theta - e)[0]) / (2 * eps)
    return g


class TestForward:
    def test_linear_is_matrix_product(self, rng):
        s = spec("linear", 2, 3, 2)
        theta = rng.normal(size=12)
        x = rng.normal(size=2)
        U1, U2 = theta[:6].reshape(2, 3), theta[6:].reshape(3, 2)
        assert np.allclose(forward(s, theta, x), x @ U1 @ U2)

    def test_relu_single_neuron(self):
        s = spec("relu2_nobias", 2, 1, 1)
        # theta = (v1, v2, u)
        assert forward(s, [1.0, -1.0, 2.0], [3.0, 1.0])[0] == 4.0
        assert forward(s, [1.0, -1.0, 2.0], [1.0, 3.0])[0] == 0.0

    def test_relu_zero_preactivation_inactive(self):
        s = spec("relu2_nobias", 2, 1, 1)
        assert not activation_pattern(s, np.array([1.0, -1.0, 2.0]), np.array([[1.0, 1.0]])).any()

    def test_bias(self):
        s = spec("relu2_bias", 1, 1, 1)
        # theta = (v, b, u, c)
        assert forward(s, [2.0, -1.0, 3.0, 0.5], [1.0])[0] == 3.5

    @pytest.mark.parametrize("s", [spec("relu2_nobias", 3, 2, 2), spec("relu2_bias", 2, 3, 1)])
    def test_output_factors_through_phi(self, s, rng):
        # on a fixed activation pattern the output is linear in phi(theta)
        phi = build_phi(s)
        theta = rng.integers(-5, 6, size=phi.D).astype(float)
        x = rng.normal(size=s.widths[0])
        act = activation_pattern(s, theta, x[None, :])[0]
        vals = np.array([float(p.eval(theta.astype(int).tolist())) for p in phi.phi])
        m, r, n = s.widths
        out = np.zeros(n)
        pos = 0
        for j in range(r):
            for k in range(n):
                out[k] += act[j] * vals[pos:pos + m] @ x
                pos += m
            if s.has_bias:
                out += act[j] * vals[pos:pos + n]
                pos += n
        if s.has_bias:
            out += vals[pos:pos + n]
        assert np.allclose(forward(s, theta, x), out)


class TestGradient:
    @pytest.mark.parametrize("s,loss", [
        (spec("linear", 2, 3, 2), "quadratic"),
        (spec("linear", 2, 2, 2, 1), "logistic"),
        (spec("relu2_nobias", 3, 4, 2), "quadratic"),
        (spec("relu2_bias", 2, 3, 1), "logistic"),
        (spec("relu_deep_nobias", 2, 3, 3, 1), "quadratic"),
    ])
    def test_matches_finite_differences(self, s, loss):
        cfg = random_config(s, seed=3, loss=loss)
        _, g = loss_and_grad(cfg, cfg.theta_init)
        assert np.allclose(g, fd_grad(cfg, cfg.theta_init), atol=1e-7)


class TestConfig:
    def test_validation(self):
        s = spec("linear", 2, 1)
        with pytest.raises(ValueError):
            FlowConfig(s, [[1.0, 2.0]], [[1.0]], [1.0])
        with pytest.raises(ValueError):
            FlowConfig(s, [[1.0, 2.0]], [[0.5]], [1.0, 1.0], loss="logistic")
        with pytest.raises(ValueError):
            FlowConfig(ModelSpec("custom", phi=("t1",), dim=1), [[1.0]], [[1.0]], [1.0])
        with pytest.raises(ValueError):
            FlowConfig(s, [[1.0, 2.0]], [[1.0]], [1.0, 1.0], steps=0)

    def test_round_trip(self):
        cfg = random_config(spec("relu2_bias", 2, 2, 1), seed=1, steps=10)
        back = FlowConfig.from_dict(cfg.to_dict())
        assert np.array_equal(back.theta_init, cfg.theta_init)
        assert back.spec == cfg.spec


class TestSimulate:
    def test_stationary_at_zero(self):
        s = spec("linear", 2, 2, 1)
        cfg = FlowConfig(s, [[1.0, 0.0]], [[1.0]], np.zeros(6), steps=50)
        traj = simulate(cfg)
        assert np.all(traj.states == 0.0)
        assert np.all(traj.energies == 0.5)

    @pytest.mark.parametrize("integrator", ["rk4", "euler"])
    def test_energy_decreases(self, integrator):
        cfg = random_config(spec("linear", 2, 3, 2), seed=5, steps=500, integrator=integrator)
        traj = simulate(cfg)
        assert np.all(np.diff(traj.energies) <= 1e-12)
        assert traj.times[-1] == pytest.approx(1.0)
        assert traj.states.shape == (501, 12)

    def test_rk4_order(self):
        cfg = random_config(spec("linear", 2, 2, 2), seed=2, steps=20)
        finals = []
        for n in (20, 40, 80):
            cfg.steps = n
            finals.append(simulate(cfg).states[-1])
        order = np.log2(np.linalg.norm(finals[0] - finals[1]) / np.linalg.norm(finals[1] - finals[2]))
        assert order >= 3.5

    def test_blowup_truncates(self):
        s = spec("linear", 1, 1, 1)
        cfg = FlowConfig(s, [[1.0]], [[0.0]], [30.0, 30.0], steps=5, T=10.0, integrator="euler")
        traj = simulate(cfg)
        assert traj.truncated
        assert "non-finite" in traj.diagnostic
        assert np.all(np.isfinite(traj.states))

    def test_csv(self):
        cfg = random_config(spec("linear", 1, 1, 1), seed=0, steps=3)
        lines = simulate(cfg).to_csv().splitlines()
        assert lines[0] == "t,theta_1,theta_2"
        assert len(lines) == 5


class TestDrift:
    def test_linear_laws_conserved(self):
        s = spec("linear", 2, 3, 2)
        traj = simulate(random_config(s, seed=11, steps=2000))
        rows = conservation_drift(traj, known_laws(s).laws)
        assert max(r["rel_drift"] for r in rows) < 1e-9

    def test_non_law_drifts(self):
        s = spec("linear", 1, 1, 1)
        traj = simulate(random_config(s, seed=11, steps=200))
        (row,) = conservation_drift(traj, [parse("t1^2 + t2^2", 2)])
        assert row["rel_drift"] > 1e-3

    def test_dimension_check(self):
        traj = simulate(random_config(spec("linear", 1, 1, 1), seed=0, steps=2))
        with pytest.raises(ValueError):
            conservation_drift(traj, [parse("t3", 3)])


class TestRiemannian:
    def test_metric_balanced(self):
        z = np.array([3.0, 4.0])
        M = riemannian_metric(z, 0.0)
        assert np.allclose(M, 5.0 * np.eye(2) + np.outer(z, z) / 5.0)

    def test_metric_stable_for_negative_delta(self):
        z = np.array([1e-9, 0.0])
        M = riemannian_metric(z, -1.0)
        # |z|_delta ~ |z|^2 / 2 for delta = -1
        assert M[1, 1] == pytest.approx(0.5e-18, rel=1e-6)
        assert np.all(riemannian_metric(np.zeros(2), -1.0) == 0)

    @pytest.mark.parametrize("widths", [(1, 1, 2), (3, 1, 1)])
    def test_residual_small(self, widths):
        cfg = random_config(spec("linear", *widths), seed=4, steps=2000)
        assert riemannian_residual(cfg) < 1e-3

    def test_requires_scalar_layer(self):
        with pytest.raises(ValueError):
            riemannian_residual(random_config(spec("linear", 2, 2, 2), seed=0, steps=2))
