import math
import warnings

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from srcas.core import StateVector, SubintervalTimes, derive_params, nominal_design
from srcas.discretization import assemble_period_map
from srcas.small_signal import (DegenerateOperatingPointError, RationalTF, as_resonance_frequency,
                                as_transfer_function, build_full_model, build_simplified_model,
                                build_timing_sensitivities, evaluate_gain, fprime_T1, fprime_T3,
                                state_space_response, transfer_function_from_state_space)
from srcas.steady_state import OperatingPoint, f_T1, f_T3, solve_cyclic_steady_state

from .oracles import derivative5, nonlinear_map_jacobian, scaled_matrix

GRID = [(F, Qe) for F in (1.01, 1.03, 1.05, 1.1, 1.2, 1.5) for Qe in (0.5, 1, 2, 3, 5, 10)]


def _op(F, Qe):
    p = nominal_design(F, Qe)
    return p, solve_cyclic_steady_state(p)


class TestFprime:
    def test_T1_matches_finite_difference(self, t4, t4_op):
        x, T1 = t4_op.state, t4_op.times.T1
        slope = derivative5(lambda t: f_T1(t4, x, t), T1, 1e-10)
        assert fprime_T1(t4, t4_op) == pytest.approx(-slope, rel=1e-6)

    def test_T3_matches_partial_finite_difference(self, t4, t4_op):
        x, T1, T3 = t4_op.state, t4_op.times.T1, t4_op.times.T3
        slope = derivative5(lambda t: f_T3(t4, x, T1, t), T3, 1e-10)
        assert fprime_T3(t4, t4_op) == pytest.approx(-slope, rel=1e-6)

    def test_crossing_directions(self, t4, t4_op):
        # upward crossing at T1 (negated slope < 0), downward at T3
        assert fprime_T1(t4, t4_op) < 0
        assert fprime_T3(t4, t4_op) > 0

    def test_homogeneous_in_voltage(self, t4, t4_op):
        k = 3.0
        p2 = t4.replace(Vin=k * t4.Vin)
        op2 = solve_cyclic_steady_state(p2)
        assert fprime_T1(p2, op2) == pytest.approx(k * fprime_T1(t4, t4_op), rel=1e-7)

    def test_degenerate_point_flagged(self, t4, t4_op):
        # iL = 0 and vc at the drive voltage: the current has zero slope at T1
        vo = t4_op.state.vo
        state = StateVector(0.0, t4.Vin + vo / t4.N, vo)
        op = OperatingPoint(state=state, times=t4_op.times, residual_norm=0.0,
                            dc_gain=t4_op.dc_gain, Vin=t4.Vin)
        with pytest.warns(RuntimeWarning, match="degenerate"):
            fprime_T1(t4, op)
        with pytest.raises(DegenerateOperatingPointError), warnings.catch_warnings():
            warnings.simplefilter("ignore")
            build_timing_sensitivities(t4, op)
        with pytest.warns(RuntimeWarning, match="state-space"):
            tf = as_transfer_function(t4, op)
        assert np.all(np.isfinite(tf.den))


class TestTimingSensitivities:
    def test_Td_columns_match_finite_difference(self, t4, t4_op):
        ts = build_timing_sensitivities(t4, t4_op)
        x, times = t4_op.state.as_array(), t4_op.times

        def out(T1, T3):
            return assemble_period_map(t4, SubintervalTimes(T1, T3, times.Ts)).apply(x, t4.Vin)

        h = 1e-10
        d1 = derivative5(lambda t: out(t, times.T3), times.T1, h)
        d3 = derivative5(lambda t: out(times.T1, t), times.T3, h)
        np.testing.assert_allclose(ts.T_d[:, 0], d1, rtol=1e-5)
        np.testing.assert_allclose(ts.T_d[:, 1], d3, rtol=1e-5)

    @settings(max_examples=25, deadline=None)
    @given(dx=st.lists(st.floats(-1, 1), min_size=3, max_size=3), du=st.floats(-1, 1))
    def test_linearized_constraints_vanish(self, t4, t4_op, dx, du):
        ts = build_timing_sensitivities(t4, t4_op)
        x = t4_op.state.as_array()
        T1, T3, vin = t4_op.times.T1, t4_op.times.T3, t4.Vin
        xt = np.asarray(dx) * np.array([vin / derive_params(t4).Zc, vin, vin])
        ut = du * vin
        t1, t3 = ts.T_kx @ xt + ts.T_ku[:, 0] * ut
        # the constraints are affine in (x, u), so the state part is exact
        d1 = f_T1(t4, x + xt, T1, vin + ut) - f_T1(t4, x, T1, vin) - ts.fprime_T1 * t1
        dT1 = derivative5(lambda t: f_T3(t4, x, t, T3, vin), T1, 1e-10)
        d3 = (f_T3(t4, x + xt, T1, T3, vin + ut) - f_T3(t4, x, T1, T3, vin)
              + dT1 * t1 - ts.fprime_T3 * t3)
        scale = abs(ts.fprime_T1 * t1) + abs(f_T1(t4, x + xt, T1, vin + ut)) + 1e-12
        assert abs(d1) <= 1e-8 * scale
        scale3 = abs(ts.fprime_T3 * t3) + abs(dT1 * t1) + 1e-12
        assert abs(d3) <= 1e-8 * scale3

    def test_no_output_voltage_no_timing_effect(self, t4, t4_op):
        s = t4_op.state
        op = OperatingPoint(state=StateVector(s.iL, s.vc, 0.0), times=t4_op.times,
                            residual_norm=0.0, dc_gain=0.0, Vin=t4.Vin)
        ts = build_timing_sensitivities(t4, op)
        np.testing.assert_array_equal(ts.T_d[:2, :], np.zeros((2, 2)))


class TestFullModel:
    def test_matches_nonlinear_map_jacobian(self, t4, t4_op):
        m = build_full_model(t4, t4_op)
        A, B = nonlinear_map_jacobian(t4, t4_op)
        np.testing.assert_allclose(m.A_sd, A, rtol=1e-4)
        np.testing.assert_allclose(m.B_sd, B, rtol=1e-4)

    def test_reference_values(self, t4_op, t4):
        m = build_full_model(t4, t4_op)
        np.testing.assert_allclose(
            m.A_sd, [[0.4498, 8.506e-4, 2.031e-4], [-0.02582, 0.9951, 0.2489],
                     [-0.2140, -0.03969, 0.9850]], rtol=2e-3)
        np.testing.assert_allclose(m.B_sd[:, 0], [-1.870e-3, -3.990, 0.07947], rtol=2e-3)
        assert m.spectral_radius < 1

    def test_zero_perturbation_stays_zero(self, t4, t4_op):
        m = build_full_model(t4, t4_op)
        x = np.zeros(3)
        for _ in range(10):
            x = m.step(x, 0.0)
        np.testing.assert_array_equal(x, 0.0)

    @pytest.mark.parametrize("F,Qe", [(1.05, 3.0), (1.2, 1.0), (1.5, 10.0)])
    def test_jacobian_over_grid(self, F, Qe):
        p, op = _op(F, Qe)
        m = build_full_model(p, op)
        A, B = nonlinear_map_jacobian(p, op)
        As, Af = scaled_matrix(m.A_sd, p), scaled_matrix(A, p)
        assert np.max(np.abs(As - Af)) <= 1e-3 * np.max(np.abs(Af))


ENTRIES = [(1, 1), (1, 2), (2, 1), (2, 2), (2, 3), (3, 2), (3, 3)]
TANK_ENTRIES = [(1, 1), (1, 2), (2, 1)]


class TestSimplifiedModel:
    def test_structure(self, t4, t4_op):
        m = build_simplified_model(t4, t4_op)
        assert m.A_sd[0, 2] == 0.0 and m.A_sd[2, 0] == 0.0
        np.testing.assert_array_equal(m.B_sd[:, 0], [0.0, -4.0, 0.0])
        d = derive_params(t4)
        assert m.A_sd[2, 1] == pytest.approx(-4 / (t4.N * d.Zc * t4.Co * d.omega_r))
        assert m.A_sd[2, 1] < 0


    @staticmethod
    def _rel(entry, F, Qe):
        i, j = entry[0] - 1, entry[1] - 1
        p, op = _op(F, Qe)
        assert p.Ro * p.Co >= 100 / p.fs
        full = build_full_model(p, op).A_sd[i, j]
        simp = build_simplified_model(p, op).A_sd[i, j]
        return abs(simp - full) / abs(full)

    @pytest.mark.parametrize("entry", [e for e in ENTRIES if e not in TANK_ENTRIES])
    @pytest.mark.parametrize("Qe", [0.5, 1, 2, 3, 5, 10])
    def test_near_resonance_entries_within_5pct(self, entry, Qe):
        assert self._rel(entry, 1.01, Qe) < 0.05

    @pytest.mark.xfail(strict=True, reason="the closed-form simplification drops the "
                       "timing correction of the tank block and assumes operation close "
                       "to resonance; see the decisions ledger")
    def test_all_entries_within_5pct_over_grid(self):
        worst = max(self._rel(e, F, Qe) for e in ENTRIES for F, Qe in GRID)
        assert worst < 0.05


class TestTransferFunction:
    def test_dc_value_is_turns_ratio(self, t4, t4_op):
        tf = as_transfer_function(t4, t4_op)
        assert tf(1.0) == pytest.approx(t4.N, rel=1e-12)

    def test_structure(self, t4, t4_op):
        tf = as_transfer_function(t4, t4_op)
        assert len(tf.den) == 4 and len(tf.num) == 2
        roots = np.roots(tf.den)
        assert np.sum(np.abs(roots.imag) < 1e-12 * np.abs(roots)) == 1

    def test_equals_state_space_without_tank_coupling(self, t4, t4_op):
        """The closed form is the (3,1) transfer entry of the simplified
        matrix with the tank cross-coupling sin^2 term removed."""
        m = build_simplified_model(t4, t4_op)
        A = m.A_sd.copy()
        A[1, 0] = 0.0
        tf = as_transfer_function(t4, t4_op)
        rng = np.random.default_rng(7)
        theta = rng.uniform(1e-3, np.pi, 50)
        z = np.exp(1j * theta)
        ss = np.array([np.linalg.solve(zk * np.eye(3) - A, m.B_sd[:, 0])[2] for zk in z])
        np.testing.assert_allclose(tf(z), ss, rtol=1e-9)

    def test_z_and_shifted_coefficients_agree(self, t4, t4_op):
        tf = as_transfer_function(t4, t4_op)
        z = np.exp(1j * np.linspace(0.01, 3.0, 17))
        np.testing.assert_allclose(np.polyval(tf.num_z, z) / np.polyval(tf.den_z, z), tf(z),
                                   rtol=1e-10)

    def test_state_space_conversion(self, t4, t4_op):
        m = build_full_model(t4, t4_op)
        tf = transfer_function_from_state_space(m.A_sd, m.B_sd, 1 / t4.fs, t4_op.dc_gain)
        f = np.linspace(100, 20e3, 40)
        np.testing.assert_allclose(evaluate_gain(tf, f).gain, m.response(f), rtol=1e-8)
        assert isinstance(tf, RationalTF)

    def test_peak_near_closed_form_resonance(self, t4, t4_op):
        tf = as_transfer_function(t4, t4_op)
        f = np.linspace(100, 4000, 39001)
        g = evaluate_gain(tf, f)
        k = int(np.argmax(g.ripple_gain_db))
        assert f[k] == pytest.approx(1570, rel=0.01)
        assert g.ripple_gain_db[k] == pytest.approx(44.0, abs=1.5)


class TestResonanceFrequency:
    def test_prototype(self, t4, t4_op):
        r = as_resonance_frequency(t4, t4_op)
        assert r.hz == pytest.approx(1570, rel=0.01)
        assert r.omega == pytest.approx(2 * math.pi * r.hz)

    def test_nominal_design_near_simulated_peak(self):
        p, op = _op(1.01, 0.5)
        assert as_resonance_frequency(p, op).hz == pytest.approx(3950, rel=0.04)

    @pytest.mark.parametrize("F,Qe", GRID)
    def test_grid_properties(self, F, Qe):
        p, op = _op(F, Qe)
        r = as_resonance_frequency(p, op)
        assert r.pole_hz == pytest.approx(r.hz, rel=0.02)
        assert r.hz < derive_params(p).fr / 10
        roots = np.roots(as_transfer_function(p, op).den)
        n_real = np.sum(np.abs(roots.imag) <= 1e-12 * np.abs(roots))
        assert n_real == 1


class TestEvaluateGain:
    def test_rejects_nyquist_and_beyond(self, t4, t4_op):
        tf = as_transfer_function(t4, t4_op)
        with pytest.raises(ValueError):
            evaluate_gain(tf, t4.fs / 2)
        with pytest.raises(ValueError):
            evaluate_gain(tf, 0.0)

    def test_low_frequency_limit(self, t4, t4_op):
        tf = as_transfer_function(t4, t4_op)
        g = evaluate_gain(tf, 1e-3)
        assert abs(g.gain) == pytest.approx(t4.N, rel=1e-6)
        assert g.normalized_gain == pytest.approx(t4.N / t4_op.dc_gain, rel=1e-6)

    @given(theta=st.floats(1e-4, math.pi - 1e-4))
    def test_conjugate_symmetry(self, t4, t4_op, theta):
        tf = as_transfer_function(t4, t4_op)
        z = np.exp(1j * theta)
        assert abs(tf(z)) == pytest.approx(abs(tf(np.conj(z))), rel=1e-12)

    def test_state_space_response_scalar(self, t4, t4_op):
        m = build_full_model(t4, t4_op)
        h = state_space_response(m.A_sd, m.B_sd, 1 / t4.fs, 1500.0)
        assert np.ndim(h) == 0 and np.isfinite(h)
