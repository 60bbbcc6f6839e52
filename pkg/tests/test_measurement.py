import numpy as np
import pytest
from numpy.testing import assert_allclose

from twotoa.errors import CoincidentGeometry, NonPositiveSigma
from twotoa.measurement import (
    build_weights,
    forward_jacobian,
    forward_model,
    request_toa_clean,
    response_toa_clean,
    simulate,
)
from twotoa.model import StateVector


def state(p, offset=0.0, drift=0.0, v=(0.0, 0.0, 0.0)):
    return StateVector(np.asarray(p, float), offset, drift, np.asarray(v, float))


class TestCleanModels:
    def test_request_examples(self):
        assert request_toa_clean([100, 0, 0], state([0, 0, 0])) == pytest.approx(100.0)
        assert request_toa_clean([100, 0, 0], state([0, 0, 0], offset=10.0)) == pytest.approx(90.0)
        assert request_toa_clean([3, 4, 0], state([0, 0, 0], offset=-5.0)) == pytest.approx(10.0)

    def test_response_examples(self):
        assert response_toa_clean(
            [100, 0, 0], state([0, 0, 0], v=[10, 0, 0]), 0.01
        ) == pytest.approx(99.9)
        assert response_toa_clean(
            [100, 0, 0], state([0, 0, 0], offset=2.0, drift=40.0), 0.05
        ) == pytest.approx(104.0)
        assert response_toa_clean([3, 4, 0], state([0, 0, 0]), 0.01) == pytest.approx(5.0)

    def test_coincident_rejected(self):
        with pytest.raises(CoincidentGeometry):
            request_toa_clean([1.0, 2.0, 3.0], state([1.0, 2.0, 3.0]))
        # displaced position lands on the anchor
        with pytest.raises(CoincidentGeometry):
            response_toa_clean([1.0, 0.0, 0.0], state([0, 0, 0], v=[100.0, 0, 0]), 0.01)


class TestForwardModel:
    def test_symmetric_round_trip_single_anchor(self):
        theta = state([0, 0, 0])
        h = forward_model(theta, [[50.0, 0, 0]], [0.02])
        assert_allclose(h, [50.0, 50.0])

    def test_round_trip_symmetry_all_anchors(self, table1_anchors, table1_delays):
        theta = state([10.0, -20.0, 5.0])
        h = forward_model(theta, table1_anchors, table1_delays)
        assert_allclose(h[:8], h[8:], rtol=0, atol=1e-12)

    def test_matches_zero_noise_simulation(self, scenario_factory):
        sc = scenario_factory(seed=1, sigma=0.0)
        meas = simulate(sc, 7)
        h = forward_model(sc.true_state(), sc.anchor_positions(), sc.schedule.delays)
        assert_allclose(meas.stacked(), h, rtol=0, atol=0)

    def test_rowwise_scalar_oracle(self, table1_anchors, table1_delays):
        # Oracle: recompute each row with scalar arithmetic, no vector reuse.
        rng = np.random.default_rng(3)
        q = np.array([a.position for a in table1_anchors])
        for _ in range(20):
            theta = state(
                rng.uniform(-300, 300, 3),
                offset=rng.uniform(0, 6000),
                drift=rng.uniform(-3000, 3000),
                v=rng.uniform(-60, 60, 3),
            )
            h = forward_model(theta, q, table1_delays)
            for i in range(8):
                expect_req = (
                    sum((q[i, j] - theta.position[j]) ** 2 for j in range(3)) ** 0.5
                    - theta.clock_offset
                )
                moved = [
                    theta.position[j] + theta.velocity[j] * table1_delays[i]
                    for j in range(3)
                ]
                expect_resp = (
                    sum((q[i, j] - moved[j]) ** 2 for j in range(3)) ** 0.5
                    + theta.clock_offset
                    + theta.clock_drift * table1_delays[i]
                )
                assert h[i] == pytest.approx(expect_req, rel=1e-12)
                assert h[8 + i] == pytest.approx(expect_resp, rel=1e-12)


class TestSimulate:
    def test_zero_noise_equals_model(self, scenario_factory):
        sc = scenario_factory(seed=2, sigma=0.0)
        meas = simulate(sc, 123)
        h = forward_model(sc.true_state(), sc.anchor_positions(), sc.schedule.delays)
        assert_allclose(meas.stacked(), h)

    def test_fixed_seed_bit_exact(self, scenario_factory):
        sc = scenario_factory(seed=3, sigma=0.5)
        a = simulate(sc, 99)
        b = simulate(sc, 99)
        assert a.rho.tobytes() == b.rho.tobytes()
        assert a.tau.tobytes() == b.tau.tobytes()
        c = simulate(sc, 100)
        assert a.rho.tobytes() != c.rho.tobytes()

    def test_law_of_large_numbers(self, scenario_factory):
        # Oracle: the CLT bound |mean| < 5 sigma / sqrt(n) per entry.
        sc = scenario_factory(seed=4, sigma=1.0)
        clean = forward_model(sc.true_state(), sc.anchor_positions(), sc.schedule.delays)
        n = 100_000
        acc = np.zeros(16)
        for k in range(n):
            acc += simulate(sc, k).stacked()
        mean_dev = acc / n - clean
        assert np.all(np.abs(mean_dev) < 5.0 / np.sqrt(n))

    def test_noise_whitening(self, scenario_factory):
        sc = scenario_factory(seed=5, sigma=0.7)
        w = build_weights(sc.sigma_anchor, sc.sigma_ud)
        clean = forward_model(sc.true_state(), sc.anchor_positions(), sc.schedule.delays)
        n = 10_000
        samples = np.empty((n, 16))
        for k in range(n):
            samples[k] = np.sqrt(w.diagonal) * (simulate(sc, 500_000 + k).stacked() - clean)
        var = samples.var(axis=0)
        assert np.all(var > 0.9) and np.all(var < 1.1)


class TestJacobian:
    def test_unit_vector_geometry(self):
        theta = state([0, 0, 0])
        jac = forward_jacobian(theta, [[100.0, 0, 0]], [0.01])
        assert_allclose(jac[0, :3], [-1.0, 0.0, 0.0])
        assert jac[0, 3] == -1.0  # clock offset column, request row
        assert jac[0, 4] == 0.0
        assert_allclose(jac[0, 5:], 0.0)

    def test_drift_column_is_delay(self, table1_anchors, table1_delays):
        theta = state([5.0, 6.0, 7.0], offset=100.0, drift=-50.0, v=[1.0, 2.0, 3.0])
        jac = forward_jacobian(theta, table1_anchors, table1_delays)
        assert_allclose(jac[8:, 4], table1_delays, rtol=0, atol=0)

    def test_velocity_columns_scale_position_columns(self, table1_anchors, table1_delays):
        theta = state([5.0, -6.0, 7.0], v=[10.0, 0.0, -5.0])
        jac = forward_jacobian(theta, table1_anchors, table1_delays)
        for i in range(8):
            assert_allclose(
                jac[8 + i, 5:], table1_delays[i] * jac[8 + i, :3], rtol=1e-14
            )

    def test_finite_difference_oracle(self, table1_anchors, table1_delays):
        # Central differences with a 1e-4 m step on every state coordinate.
        rng = np.random.default_rng(11)
        q = np.array([a.position for a in table1_anchors])
        step = 1e-4
        for _ in range(10):
            theta_vec = np.concatenate(
                [
                    rng.uniform(-300, 300, 3),
                    [rng.uniform(0, 6000), rng.uniform(-3000, 3000)],
                    rng.uniform(-60, 60, 3),
                ]
            )
            jac = forward_jacobian(StateVector.from_vector(theta_vec), q, table1_delays)
            fd = np.zeros_like(jac)
            for j in range(8):
                plus = theta_vec.copy()
                plus[j] += step
                minus = theta_vec.copy()
                minus[j] -= step
                fd[:, j] = (
                    forward_model(StateVector.from_vector(plus), q, table1_delays)
                    - forward_model(StateVector.from_vector(minus), q, table1_delays)
                ) / (2 * step)
            # Relative error with a unit floor: entries are O(1) unit-vector
            # components, and the floor keeps FD roundoff on near-zero entries
            # from masquerading as Jacobian error.
            scale = np.maximum(np.abs(jac), 1.0)
            assert np.max(np.abs(jac - fd) / scale) < 1e-6


class TestWeights:
    def test_examples(self):
        assert_allclose(build_weights([2.0, 2.0], 2.0).diagonal, [0.25] * 4)
        assert_allclose(build_weights([1.0], 10.0).diagonal, [1.0, 0.01])
        assert_allclose(build_weights([1.0, 2.0], 0.5).diagonal, [1.0, 0.25, 4.0, 4.0])

    def test_rejects_nonpositive(self):
        with pytest.raises(NonPositiveSigma):
            build_weights([1.0, 0.0], 1.0)
        with pytest.raises(NonPositiveSigma):
            build_weights([1.0], -2.0)
