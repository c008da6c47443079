"""Tests for the classical-limit solver."""

import math

import numpy as np
import pytest

from mrfm_spincat import (
    ClassicalSolver,
    ClassicalState,
    CoherentInit,
    DriveSchedule,
    ParameterError,
    PhysicalParams,
    ScheduleRangeError,
    SpinInit,
    SpinInitKind,
    integrate,
    stationary_amplitude,
)
from mrfm_spincat.analysis import angle_between
from mrfm_spincat.classical import rhs
from mrfm_spincat.model import BOHR_MAGNETON, drive_field, from_physical, peak_adiabaticity_margin

SPIN_UP = (0.0, 0.0, 0.5)


def pulsed_params(make_params, periods=5):
    """Pi pulses every half period, no continuous rf."""
    schedule = DriveSchedule.pi_pulse(2.0 * periods * math.pi + 1.0)
    return make_params(schedule, eta=0.3)


class TestClassicalState:
    """Tests for state construction."""

    def test_energy_and_spin_length(self):
        state = ClassicalState(3.0, 4.0, (0.3, 0.0, 0.4))
        assert state.energy == pytest.approx(12.5)
        assert state.spin_length == pytest.approx(0.5)

    def test_wrong_spin_size(self):
        with pytest.raises(ParameterError) as exc_info:
            ClassicalState(0.0, 0.0, (0.5, 0.0))
        assert exc_info.value.field == "spin"

    def test_from_quantum(self, make_params, scaled_schedule):
        params = make_params(scaled_schedule)
        state = ClassicalState.from_quantum(
            CoherentInit(-10.0 * math.sqrt(2.0)), SpinInit(SpinInitKind.ALONG_EFF), params
        )
        assert state.z == pytest.approx(-20.0)
        assert state.p == pytest.approx(0.0)
        assert angle_between(state.spin, drive_field(params, 0.0).vector) < 1e-12
        assert state.spin_length == pytest.approx(0.5)

    def test_ensemble_length(self):
        state = ClassicalState.ensemble(10, 1.0, 0.0, (0.0, 0.0, 2.0))
        assert state.spin == pytest.approx((0.0, 0.0, 5.0))

    @pytest.mark.parametrize(
        ("n_spins", "direction", "field"),
        [(0, (0.0, 0.0, 1.0), "n_spins"), (3, (0.0, 0.0, 0.0), "direction")],
    )
    def test_bad_ensemble(self, n_spins, direction, field):
        with pytest.raises(ParameterError) as exc_info:
            ClassicalState.ensemble(n_spins, 0.0, 0.0, direction)
        assert exc_info.value.field == field


class TestRhs:
    """Tests for the equations of motion."""

    def test_fixed_point(self, make_params):
        params = make_params(DriveSchedule.constant(10.0, -100.0, 0.0), eta=0.3)
        derivative = rhs(ClassicalState(0.3, 0.0, SPIN_UP), params)
        assert derivative.z == 0.0
        assert derivative.p == pytest.approx(0.0, abs=1e-15)
        assert derivative.spin == pytest.approx((0.0, 0.0, 0.0), abs=1e-15)

    def test_precession_direction(self, make_params):
        params = make_params(DriveSchedule.constant(10.0, -1.0, 0.0), eta=0.0)
        derivative = rhs(ClassicalState(0.0, 1.0, (0.5, 0.0, 0.0)), params)
        assert derivative.z == 1.0
        # S x B with B along +z
        assert derivative.spin == pytest.approx((0.0, -0.5, 0.0))


class TestIntegrate:
    """Tests for the DOP853 integration."""

    def test_free_oscillator(self, make_params):
        params = make_params(DriveSchedule.constant(1000.0, 0.0, 0.0), eta=0.0)
        init = ClassicalState(20.0, 0.0, SPIN_UP)
        trajectory = integrate(init, params, 1000.0, 1.0)
        assert trajectory.final.tau == 1000.0
        assert trajectory.final.z == pytest.approx(20.0 * math.cos(1000.0), abs=1e-5)
        energies = 0.5 * (trajectory.z**2 + trajectory.p**2)
        assert np.max(np.abs(energies - init.energy)) / init.energy < 1e-7

    def test_sampling_grid(self, make_params):
        params = make_params(DriveSchedule.constant(10.0, 0.0, 0.0), eta=0.0)
        trajectory = integrate(ClassicalState(1.0, 0.0, SPIN_UP), params, 1.05, 0.25)
        np.testing.assert_allclose(trajectory.taus, [0.0, 0.25, 0.5, 0.75, 1.0, 1.05])

    def test_spin_norm_preserved(self, make_params, scaled_schedule):
        params = make_params(scaled_schedule)
        init = ClassicalState.from_quantum(
            CoherentInit(-10.0 * math.sqrt(2.0)), SpinInit(SpinInitKind.ALONG_EFF), params
        )
        trajectory = integrate(init, params, 10.0, 0.1)
        assert trajectory.spin_drift_rate() < 1e-8

    def test_adiabatic_following(self, make_params, scaled_schedule):
        params = make_params(scaled_schedule, eta=0.0)
        init = ClassicalState.from_quantum(
            CoherentInit(0.0), SpinInit(SpinInitKind.ALONG_EFF), params
        )
        trajectory = integrate(init, params, 19.5, 0.25)
        bound = 3.0 * peak_adiabaticity_margin(params, 0.0, 19.5)
        for index in range(len(trajectory)):
            state = trajectory.state_at(index)
            field = drive_field(params, state.tau).vector
            assert angle_between(state.spin, field) <= bound

    def test_pi_pulses_amplify(self, make_params):
        """Each flip at a turning point adds 4*eta*|S_z| = 0.6 to the amplitude."""
        params = pulsed_params(make_params)
        trajectory = integrate(ClassicalState(-20.0, 0.0, SPIN_UP), params, 10.0 * math.pi, 0.1)
        assert trajectory.final.z == pytest.approx(-26.0, abs=1e-6)
        assert trajectory.final.p == pytest.approx(0.0, abs=1e-6)
        assert trajectory.final.spin == pytest.approx(SPIN_UP, abs=1e-12)

    def test_sample_on_pulse_records_flipped_spin(self, make_params):
        params = pulsed_params(make_params, periods=1)
        trajectory = integrate(ClassicalState(-20.0, 0.0, SPIN_UP), params, 1.5 * math.pi, math.pi)
        assert trajectory.taus[1] == pytest.approx(math.pi)
        assert trajectory.spin[1] == pytest.approx((0.0, 0.0, -0.5))
        assert trajectory.z[1] == pytest.approx(20.6, abs=1e-8)

    def test_backwards_returns_to_start(self, make_params, scaled_schedule):
        params = make_params(scaled_schedule)
        init = ClassicalState(-20.0, 0.0, (0.0, 0.3, 0.4))
        forward = integrate(init, params, 5.0, 0.5)
        backward = integrate(forward.final, params, 0.0, 0.5)
        assert backward.taus[-1] == 0.0
        assert backward.final.as_vector() == pytest.approx(init.as_vector(), abs=1e-6)

    def test_backwards_through_pulses(self, make_params):
        params = pulsed_params(make_params, periods=2)
        init = ClassicalState(-20.0, 0.0, SPIN_UP)
        forward = integrate(init, params, 2.5 * math.pi, 0.1)
        backward = integrate(forward.final, params, 0.0, 0.1)
        assert backward.final.as_vector() == pytest.approx(init.as_vector(), abs=1e-7)

    def test_outside_schedule(self, make_params):
        params = make_params(DriveSchedule.constant(5.0, 0.0, 0.0), eta=0.0)
        with pytest.raises(ScheduleRangeError):
            integrate(ClassicalState(0.0, 0.0, SPIN_UP), params, 6.0, 0.1)

    def test_bad_sample_step(self, make_params):
        params = make_params(DriveSchedule.constant(5.0, 0.0, 0.0), eta=0.0)
        with pytest.raises(ParameterError) as exc_info:
            integrate(ClassicalState(0.0, 0.0, SPIN_UP), params, 1.0, 0.0)
        assert exc_info.value.field == "sample_dt"

    def test_emits_events(self, make_params, event_recorder):
        params = pulsed_params(make_params, periods=1)
        solver = ClassicalSolver(params)
        solver.integrate(ClassicalState(-20.0, 0.0, SPIN_UP), 1.5 * math.pi, 0.1)
        sub_events = [event["sub_event"] for event in event_recorder]
        assert sub_events[0] == "INTEGRATE_START"
        assert sub_events[-1] == "INTEGRATE_FINISH"
        # one restart at the pulse, one at the target
        assert sub_events.count("INTEGRATE_PROGRESS") == 2
        assert event_recorder[-1]["data"]["n_evaluations"] == solver.n_evaluations
        assert solver.tau == pytest.approx(1.5 * math.pi)


class TestStationaryAmplitude:
    """Tests for the amplitude reached after Q_c dimensionless time."""

    @staticmethod
    def physical(quality_factor):
        return PhysicalParams(
            g_factor=2.0,
            magneton=BOHR_MAGNETON,
            B0=0.1,
            B1=1e-6,
            field_gradient=1e3,
            effective_mass=1e-12,
            omega_c=2.0 * math.pi * 1e4,
            quality_factor=quality_factor,
        )

    def test_amplitude_in_meters(self, make_params):
        params = pulsed_params(make_params)
        pp = self.physical(10.0 * math.pi)
        amplitude = stationary_amplitude(params, pp, ClassicalState(-20.0, 0.0, SPIN_UP))
        assert amplitude == pytest.approx(from_physical(pp).to_meters(26.0), rel=0.02)

    def test_quality_factor_beyond_schedule(self, make_params):
        params = pulsed_params(make_params)
        with pytest.raises(ParameterError) as exc_info:
            stationary_amplitude(params, self.physical(1e4), ClassicalState(-20.0, 0.0, SPIN_UP))
        assert exc_info.value.field == "quality_factor"

    def test_doubling_quality_factor_doubles_amplitude(self, make_params):
        """From rest every pulse adds the same 0.6, so the amplitude grows linearly."""
        params = pulsed_params(make_params, periods=10)
        rest = ClassicalState(0.0, 0.0, SPIN_UP)
        single = stationary_amplitude(params, self.physical(10.0 * math.pi + 0.5), rest)
        double = stationary_amplitude(params, self.physical(20.0 * math.pi + 1.0), rest)
        assert double / single == pytest.approx(2.0, rel=0.1)

    def test_no_coupling_keeps_initial_amplitude(self, make_params):
        params = make_params(DriveSchedule.pi_pulse(10.0 * math.pi + 1.0), eta=0.0)
        pp = self.physical(10.0 * math.pi)
        amplitude = stationary_amplitude(params, pp, ClassicalState(-20.0, 0.0, SPIN_UP))
        assert amplitude == pytest.approx(from_physical(pp).to_meters(20.0), rel=1e-6)
