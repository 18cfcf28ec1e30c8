"""Unit tests for the neuron dynamics primitives.

Expected values are frozen from independent oracles: brentq root-finding for
the boundary, numpy eigenvalues for the spectral radius, and a plain
complex-arithmetic simulation for the resonator update.
"""

import numpy as np
import pytest

from brfnet.dynamics import (
    ALIFParams,
    ALIFState,
    BRF_FLAGS,
    NeuronState,
    RF_FLAGS,
    ResonatorFlags,
    ResonatorParams,
    alif_step,
    divergence_boundary,
    divergence_boundary_slope,
    effective_dampening,
    heaviside,
    li_step,
    resonator_step,
    spectral_radius,
    state_jacobian,
)

DELTA = 0.01


def brf_params(omega=10.0, b_offset=0.1, delta=DELTA):
    return ResonatorParams(omega=np.array([omega]), b_offset=np.array([b_offset]),
                           delta=delta)


class TestDivergenceBoundary:
    def test_value_at_omega_10(self):
        # frozen from direct evaluation; cross-checked against brentq below
        p = divergence_boundary(10.0, 0.01)
        assert p == pytest.approx(-0.5012562893380035, abs=1e-12)

    def test_matches_unit_radius_root(self):
        # independent oracle: solve spectral_radius(b) = 1 for b numerically
        from scipy.optimize import brentq
        for omega in (2.0, 10.0, 55.0, 95.0):
            b_root = brentq(lambda b: spectral_radius(b, omega, 0.01) - 1.0,
                            -100.0, -1e-12, xtol=1e-14)
            assert divergence_boundary(omega, 0.01) == pytest.approx(b_root, abs=1e-10)

    def test_small_omega_limit(self):
        assert divergence_boundary(1e-9, 0.01) == pytest.approx(0.0, abs=1e-9)
        assert divergence_boundary(0.1, 0.01) < 0.0

    def test_always_negative_and_decreasing(self):
        omegas = np.linspace(0.5, 99.0, 200)
        p = divergence_boundary(omegas, 0.01)
        assert np.all(p < 0.0)
        assert np.all(np.diff(p) < 0.0)

    def test_domain_error(self):
        with pytest.raises(ValueError):
            divergence_boundary(150.0, 0.01)
        with pytest.raises(ValueError):
            divergence_boundary(100.0, 0.01)  # delta*omega == 1 is rejected too
        with pytest.raises(ValueError):
            divergence_boundary(-1.0, 0.01)
        with pytest.raises(ValueError):
            divergence_boundary(10.0, 0.0)

    def test_slope_matches_finite_difference(self):
        for omega in (3.0, 10.0, 60.0):
            h = 1e-6
            fd = (divergence_boundary(omega + h, 0.01)
                  - divergence_boundary(omega - h, 0.01)) / (2 * h)
            assert divergence_boundary_slope(omega, 0.01) == pytest.approx(fd, rel=1e-6)


class TestEffectiveDampening:
    def test_brf_flags_no_refractory(self):
        b = effective_dampening(brf_params(b_offset=0.1), np.array([0.0]), BRF_FLAGS)
        assert b[0] == pytest.approx(-0.6012562893380035, abs=1e-12)

    def test_brf_flags_with_refractory(self):
        b = effective_dampening(brf_params(b_offset=0.1), np.array([1.0]), BRF_FLAGS)
        assert b[0] == pytest.approx(-1.6012562893380035, abs=1e-12)

    def test_all_flags_off_passes_negated_offset(self):
        b = effective_dampening(brf_params(b_offset=0.3), np.array([5.0]), RF_FLAGS)
        assert b[0] == -0.3  # q ignored without smooth reset

    def test_db_off_sr_on_subtracts_q(self):
        flags = ResonatorFlags(smooth_reset=True)
        b = effective_dampening(brf_params(b_offset=0.3), np.array([0.25]), flags)
        assert b[0] == pytest.approx(-0.55)

    def test_db_on_never_exceeds_boundary(self):
        rng = np.random.default_rng(7)
        params = ResonatorParams(omega=rng.uniform(1, 90, 64),
                                 b_offset=rng.uniform(0, 2, 64), delta=0.01)
        q = rng.uniform(0, 3, 64)
        b = effective_dampening(params, q, BRF_FLAGS)
        p = divergence_boundary(params.omega, params.delta)
        assert np.all(b <= p + 1e-15)


class TestResonatorStep:
    def test_zero_state_is_fixed_point(self):
        state = NeuronState.zeros(1)
        nxt, z = resonator_step(state, brf_params(), BRF_FLAGS, np.array([0.0]))
        assert nxt.u_re[0] == 0.0 and nxt.u_im[0] == 0.0 and nxt.q[0] == 0.0
        assert z[0] == 0.0

    def test_hand_evaluated_step(self):
        # Alg. lines with u=(1,0), q=0, x=0: b = p(10)-0.1, u_re' = 1+delta*b,
        # u_im' = delta*10
        state = NeuronState(np.array([1.0]), np.array([0.0]), np.array([0.0]))
        nxt, z = resonator_step(state, brf_params(b_offset=0.1), BRF_FLAGS,
                                np.array([0.0]), theta_c=1.0)
        assert nxt.u_re[0] == pytest.approx(1.0 + 0.01 * -0.6012562893380035, abs=1e-12)
        assert nxt.u_im[0] == pytest.approx(0.1, abs=1e-15)
        assert z[0] == 0.0
        assert nxt.q[0] == 0.0

    def test_refractory_raises_threshold(self):
        # engineered so Re(u') = 1.2: 1.2 < theta_c + q = 1.5 -> no spike
        flags = ResonatorFlags(refractory_period=True)
        params = brf_params(b_offset=0.5)
        state = NeuronState(np.array([1.2 / (1 + DELTA * -0.5)]), np.array([0.0]),
                            np.array([0.5]))
        # cancel rotation contribution by zeroing u_im; solve x for exact 1.2
        x = np.array([0.0])
        nxt, z = resonator_step(state, params, flags, x, theta_c=1.0)
        assert nxt.u_re[0] == pytest.approx(1.2, abs=1e-12)
        assert z[0] == 0.0

    def test_spike_updates_refractory(self):
        flags = ResonatorFlags(refractory_period=True)
        params = brf_params(b_offset=0.5)
        state = NeuronState(np.array([1.2 / (1 + DELTA * -0.5)]), np.array([0.0]),
                            np.array([0.0]))
        nxt, z = resonator_step(state, params, flags, np.array([0.0]),
                                theta_c=1.0, gamma=0.9)
        assert z[0] == 1.0
        assert nxt.q[0] == pytest.approx(1.0)  # gamma*0 + 1

    def test_q_stays_zero_without_rp_or_sr(self):
        state = NeuronState(np.array([5.0]), np.array([0.0]), np.array([0.0]))
        nxt, z = resonator_step(state, brf_params(b_offset=0.3),
                                ResonatorFlags(divergence_boundary=True),
                                np.array([0.0]))
        assert z[0] == 1.0
        assert nxt.q[0] == 0.0

    def test_refractory_never_negative(self):
        rng = np.random.default_rng(3)
        params = ResonatorParams(omega=rng.uniform(5, 50, 16),
                                 b_offset=rng.uniform(0, 1, 16), delta=0.01)
        state = NeuronState.zeros(16)
        for _ in range(200):
            state, _ = resonator_step(state, params, BRF_FLAGS,
                                      rng.normal(0, 5, 16))
            assert np.all(state.q >= 0.0)

    def test_matches_complex_arithmetic_oracle(self):
        # with all flags off the update is plain complex Euler integration
        rng = np.random.default_rng(11)
        params = ResonatorParams(omega=rng.uniform(5, 50, 8),
                                 b_offset=rng.uniform(0, 1, 8), delta=0.01)
        state = NeuronState.zeros(8)
        u_oracle = np.zeros(8, dtype=np.complex128)
        b = -params.b_offset
        for _ in range(100):
            x = rng.normal(0, 2, 8)
            state, _ = resonator_step(state, params, RF_FLAGS, x)
            u_oracle = u_oracle + params.delta * ((b + 1j * params.omega) * u_oracle + x)
            np.testing.assert_allclose(state.u_re, u_oracle.real, rtol=0, atol=1e-12)
            np.testing.assert_allclose(state.u_im, u_oracle.imag, rtol=0, atol=1e-12)

    @pytest.mark.parametrize("b_off,grows", [(0.3, True), (1.0, False)])
    def test_envelope_follows_spectral_radius(self, b_off, grows):
        # free evolution from (1, 0): amplitude after T steps is r^T
        params = brf_params(omega=10.0, b_offset=b_off)
        flags = RF_FLAGS  # direct dampening b = -b'
        r = spectral_radius(-b_off, 10.0, DELTA)
        state = NeuronState(np.array([1.0]), np.array([0.0]), np.array([0.0]))
        T = 400
        for _ in range(T):
            state, _ = resonator_step(state, params, flags, np.array([0.0]),
                                      theta_c=np.inf)
        amp = np.hypot(state.u_re[0], state.u_im[0])
        assert amp == pytest.approx(r ** T, rel=1e-9)
        assert (amp > 1.0) == grows

    def test_hard_reset_zeroes_real_and_sets_imaginary(self):
        flags = ResonatorFlags(hard_reset=True)
        state = NeuronState(np.array([5.0]), np.array([2.0]), np.array([0.0]))
        nxt, z = resonator_step(state, brf_params(b_offset=0.5), flags,
                                np.array([0.0]))
        assert z[0] == 1.0
        assert nxt.u_re[0] == 0.0
        assert nxt.u_im[0] == 1.0


class TestHeaviside:
    def test_spikes_on_exact_threshold_touch(self):
        assert heaviside(0.0) == 1.0
        assert heaviside(-1e-300) == 0.0
        assert heaviside(1e-300) == 1.0


class TestALIF:
    def params(self, alpha=0.9, rho=0.9, beta=0.0, b0=1.0, n=1):
        return ALIFParams(alpha=np.full(n, alpha), rho=np.full(n, rho),
                          beta=np.full(n, beta), b0=b0)

    def test_zero_state_fixed_point(self):
        state = ALIFState.zeros(1)
        nxt, z = alif_step(state, self.params(), np.array([0.0]), np.array([0.0]))
        assert nxt.u[0] == 0.0 and nxt.eta[0] == 0.0 and z[0] == 0.0

    def test_single_step_arithmetic(self):
        # u' = 0.5*0 + 0.5*2 = 1.0 exactly, theta = 1 -> spike on exact touch
        # (alpha chosen so 1-alpha is exactly representable)
        state = ALIFState.zeros(1)
        nxt, z = alif_step(state, self.params(alpha=0.5, beta=0.0),
                           np.array([2.0]), np.array([0.0]))
        assert nxt.u[0] == 1.0
        assert z[0] == 1.0

    def test_threshold_grows_while_spiking(self):
        # brute-force 10 steps with constant large drive; theta strictly
        # increases between consecutive spikes while beta > 0
        params = self.params(alpha=0.5, rho=0.9, beta=1.5)
        state = ALIFState.zeros(1)
        z = np.array([0.0])
        thetas = []
        for _ in range(10):
            state, z = alif_step(state, params, np.array([50.0]), z)
            assert z[0] == 1.0
            thetas.append(params.b0 + params.beta[0] * state.eta[0])
        assert all(b > a for a, b in zip(thetas, thetas[1:]))

    def test_adaptation_stays_nonnegative(self):
        rng = np.random.default_rng(5)
        params = self.params(alpha=0.8, rho=0.95, beta=1.8, n=8)
        state = ALIFState.zeros(8)
        z = np.zeros(8)
        for _ in range(100):
            state, z = alif_step(state, params, rng.normal(0, 3, 8), z)
            assert np.all(state.eta >= 0.0)

    def test_invalid_decays_rejected(self):
        with pytest.raises(ValueError):
            self.params(alpha=1.0)
        with pytest.raises(ValueError):
            self.params(rho=0.0)
        with pytest.raises(ValueError):
            self.params(beta=-0.1)


class TestLeakyIntegrator:
    def test_zero(self):
        assert li_step(0.0, 0.9, 0.0) == 0.0

    def test_pure_decay(self):
        assert li_step(1.0, 0.9, 0.0) == pytest.approx(0.9)

    def test_converges_to_constant_input(self):
        y = 0.0
        for _ in range(1000):
            y = li_step(y, 0.9, 3.5)
        assert abs(y - 3.5) < 1e-6


class TestJacobianAndRadius:
    def test_identity_in_small_delta_limit(self):
        J = state_jacobian(-1.0, 10.0, 0.0)
        np.testing.assert_array_equal(J, np.eye(2))

    def test_substitution(self):
        J = state_jacobian(-1.0, 10.0, 0.01)
        np.testing.assert_allclose(J, [[0.99, -0.1], [0.1, 0.99]], atol=1e-15)

    def test_antisymmetric_off_diagonal_and_equal_diagonal(self):
        rng = np.random.default_rng(2)
        for _ in range(50):
            b, omega, delta = rng.normal(0, 3), rng.uniform(0.1, 90), rng.uniform(1e-4, 0.02)
            J = state_jacobian(b, omega, delta)
            assert J[0, 1] == -J[1, 0]
            assert J[0, 0] == J[1, 1]

    def test_radius_matches_eigenvalue_oracle(self):
        rng = np.random.default_rng(4)
        for _ in range(100):
            b, omega, delta = rng.normal(-1, 1), rng.uniform(0.1, 90), 0.01
            r_oracle = np.max(np.abs(np.linalg.eigvals(state_jacobian(b, omega, delta))))
            assert spectral_radius(b, omega, delta) == pytest.approx(r_oracle, abs=1e-12)

    def test_divergent_and_convergent_regimes(self):
        assert spectral_radius(-0.3, 10.0, 0.01) == pytest.approx(1.0020024950068738,
                                                                  abs=1e-12)
        assert spectral_radius(-1.0, 10.0, 0.01) == pytest.approx(0.9950376877284599,
                                                                  abs=1e-12)
        assert spectral_radius(-0.3, 10.0, 0.01) > 1.0
        assert spectral_radius(-1.0, 10.0, 0.01) < 1.0

    def test_boundary_identity(self):
        # radius(p(w), w, delta) == 1 for any feasible (w, delta)
        rng = np.random.default_rng(123)
        omega = rng.uniform(0.1, 99.0, 1000)
        delta = rng.uniform(1e-4, 1.0, 1000) / np.maximum(omega, 1.0)
        delta = np.minimum(delta, 0.999 / omega)
        for w, d in zip(omega, delta):
            r = spectral_radius(divergence_boundary(w, d), w, d)
            assert abs(r - 1.0) < 1e-12

    def test_jacobian_is_scaled_rotation(self):
        # ||J v|| = radius * ||v|| for every v
        rng = np.random.default_rng(9)
        for _ in range(100):
            b, omega, delta = rng.normal(-1, 1), rng.uniform(0.1, 90), 0.01
            J = state_jacobian(b, omega, delta)
            r = spectral_radius(b, omega, delta)
            v = rng.normal(0, 1, 2)
            assert np.linalg.norm(J @ v) == pytest.approx(r * np.linalg.norm(v),
                                                          rel=1e-12)


class TestResonatorParamsValidation:
    def test_rejects_infeasible(self):
        with pytest.raises(ValueError):
            ResonatorParams(omega=np.array([150.0]), b_offset=np.array([0.1]),
                            delta=0.01)
        with pytest.raises(ValueError):
            ResonatorParams(omega=np.array([-1.0]), b_offset=np.array([0.1]),
                            delta=0.01)
        with pytest.raises(ValueError):
            ResonatorParams(omega=np.array([10.0]), b_offset=np.array([-0.1]),
                            delta=0.01)
