import json
import math

import numpy as np
import pytest
from scipy.integrate import quad

from gesturecast.errors import DegenerateInputError
from gesturecast.gestures import gesture_duration, validate
from gesturecast.model import (ActionPlan, LognormalPrimitive, StrokePlan,
                               VelocityProfile, plan_from_obj, plan_to_obj,
                               plan_velocity, primitive_angle, primitive_speed,
                               reconstruct_trajectory, snr, velocity_on_grid)


def straight(D=100.0, t0=0.05, mu=-1.5, sigma=0.25, angle=0.0):
    return LognormalPrimitive(D=D, t0=t0, mu=mu, sigma=sigma,
                              theta_s=angle, theta_e=angle)


class TestPrimitiveSpeed:
    def test_value_at_unit_log_time(self):
        p = LognormalPrimitive(D=1, t0=0, mu=0, sigma=0.5, theta_s=0, theta_e=0)
        # At t - t0 = exp(mu) the exponent vanishes.
        assert primitive_speed(p, 1.0) == pytest.approx(1 / (0.5 * math.sqrt(2 * math.pi)))

    def test_zero_at_and_before_activation(self):
        p = straight(t0=0.3)
        assert primitive_speed(p, 0.3) == 0.0
        assert primitive_speed(p, 0.0) == 0.0

    def test_integral_equals_amplitude(self):
        p = LognormalPrimitive(D=2, t0=0, mu=0, sigma=0.5, theta_s=0, theta_e=0)
        integral, _ = quad(lambda t: primitive_speed(p, t), 0, 60, limit=200)
        assert integral == pytest.approx(2.0, abs=1e-6 * 2.0)

    def test_never_negative(self):
        p = straight()
        t = np.linspace(-1, 5, 2000)
        assert np.all(primitive_speed(p, t) >= 0)


class TestPrimitiveAngle:
    p = LognormalPrimitive(D=1, t0=0.2, mu=-1.0, sigma=0.3,
                           theta_s=0.5, theta_e=2.0)

    def test_start_angle_limit(self):
        assert primitive_angle(self.p, 0.2 + 1e-12) == pytest.approx(0.5)

    def test_end_angle_limit(self):
        assert primitive_angle(self.p, 100.0) == pytest.approx(2.0)

    def test_midpoint_at_log_center(self):
        t_mid = 0.2 + math.exp(-1.0)
        assert primitive_angle(self.p, t_mid) == pytest.approx(1.25)

    def test_domain_error_at_or_before_t0(self):
        with pytest.raises(ValueError):
            primitive_angle(self.p, 0.2)

    def test_monotone_between_angles(self):
        t = np.linspace(0.2001, 3.0, 500)
        a = primitive_angle(self.p, t)
        assert np.all(np.diff(a) >= 0)
        assert a.min() >= 0.5 - 1e-12 and a.max() <= 2.0 + 1e-12

    def test_monotone_decreasing_when_reversed(self):
        p = LognormalPrimitive(D=1, t0=0.0, mu=-1.0, sigma=0.3,
                               theta_s=2.0, theta_e=-1.0)
        t = np.linspace(0.001, 3.0, 500)
        a = primitive_angle(p, t)
        assert np.all(np.diff(a) <= 0)


class TestPlanVelocity:
    def test_horizontal_primitive_has_zero_vy(self):
        plan = StrokePlan([straight()], origin=(0, 0))
        profile = plan_velocity(plan, 0.005, 1.0)
        assert np.all(profile.vy == 0.0)

    def test_range_before_activation_is_all_zero(self):
        plan = StrokePlan([straight(t0=5.0)], origin=(0, 0))
        profile = plan_velocity(plan, 0.005, 1.0)
        assert np.all(profile.vx == 0.0) and np.all(profile.vy == 0.0)

    def test_two_identical_primitives_double_the_profile(self):
        p = straight(angle=0.7)
        single = plan_velocity(StrokePlan([p], origin=(0, 0)), 0.005, 1.0)
        double = plan_velocity(StrokePlan([p, p], origin=(0, 0)), 0.005, 1.0)
        n = min(len(single), len(double))
        np.testing.assert_allclose(double.vx[:n], 2 * single.vx[:n], rtol=1e-12)
        np.testing.assert_allclose(double.vy[:n], 2 * single.vy[:n], rtol=1e-12)

    def test_linearity_over_distinct_primitives(self):
        a = straight(D=120, t0=0.05, angle=0.3)
        b = LognormalPrimitive(D=60, t0=0.3, mu=-1.8, sigma=0.2,
                               theta_s=1.0, theta_e=2.2)
        t = np.arange(0, 1.2, 0.005)
        vx_ab, vy_ab = velocity_on_grid([a, b], t)
        vx_a, vy_a = velocity_on_grid([a], t)
        vx_b, vy_b = velocity_on_grid([b], t)
        np.testing.assert_allclose(vx_ab, vx_a + vx_b, rtol=1e-12, atol=1e-12)
        np.testing.assert_allclose(vy_ab, vy_a + vy_b, rtol=1e-12, atol=1e-12)

    def test_horizon_extends_to_cover_activity(self):
        plan = StrokePlan([straight(mu=-0.5, sigma=0.6)], origin=(0, 0))
        # 0.2 s cuts into the rising lobe; the grid must grow past it.
        profile = plan_velocity(plan, 0.005, 0.2)
        speed = profile.speed()
        assert profile.duration() > 0.2
        assert speed[-1] < 1e-6 * speed.max()


class TestReconstruct:
    def test_straight_primitive_endpoint(self):
        plan = ActionPlan([StrokePlan([straight(D=100.0)], origin=(0, 0))])
        g = reconstruct_trajectory(plan, dt=0.005)
        end = g.strokes[0].points[-1]
        assert math.hypot(end.x - 100.0, end.y) < 0.5
        assert validate(g) == []

    def test_curved_primitive_path_length(self):
        p = LognormalPrimitive(D=100, t0=0.05, mu=-1.5, sigma=0.25,
                               theta_s=0.0, theta_e=math.pi / 2)
        g = reconstruct_trajectory(ActionPlan([StrokePlan([p], origin=(0, 0))]))
        pts = g.strokes[0].points
        xs = np.array([q.x for q in pts])
        ys = np.array([q.y for q in pts])
        path = np.hypot(np.diff(xs), np.diff(ys)).sum()
        assert math.hypot(pts[-1].x, pts[-1].y) < 100.0
        assert path == pytest.approx(100.0, rel=0.01)

    def test_path_length_improves_with_smaller_dt(self):
        p = LognormalPrimitive(D=150, t0=0.05, mu=-1.5, sigma=0.25,
                               theta_s=0.0, theta_e=2.2)
        plan = ActionPlan([StrokePlan([p], origin=(0, 0))])

        def path_error(dt):
            g = reconstruct_trajectory(plan, dt=dt)
            pts = g.strokes[0].points
            xs = np.array([q.x for q in pts])
            ys = np.array([q.y for q in pts])
            return abs(np.hypot(np.diff(xs), np.diff(ys)).sum() - 150.0)

        assert path_error(0.001) < path_error(0.005) < 0.01 * 150.0

    def test_pen_down_offsets_preserved(self):
        plan = ActionPlan([
            StrokePlan([straight()], origin=(0, 0), pen_down_offset=0.0),
            StrokePlan([straight()], origin=(50, 50), pen_down_offset=0.8),
        ])
        g = reconstruct_trajectory(plan)
        assert gesture_duration(g) >= 0.8
        assert g.strokes[1].points[0].t == pytest.approx(800.0)

    def test_touch_ids_carried(self):
        plan = ActionPlan([StrokePlan([straight()], origin=(0, 0), touch_id=4)])
        g = reconstruct_trajectory(plan)
        assert g.strokes[0].touch_id == 4


class TestSnr:
    def _profile(self):
        p = LognormalPrimitive(D=100, t0=0.05, mu=-1.5, sigma=0.25,
                               theta_s=0.0, theta_e=1.0)
        return plan_velocity(StrokePlan([p], origin=(0, 0)), 0.005, 1.0)

    def test_identical_profiles_hit_the_cap(self):
        prof = self._profile()
        assert snr(prof, prof) == 120.0

    def test_zero_reconstruction_scores_zero(self):
        prof = self._profile()
        zero = VelocityProfile(prof.dt, np.zeros(len(prof)), np.zeros(len(prof)))
        assert snr(prof, zero) == pytest.approx(0.0, abs=1e-12)

    def test_scaled_reconstruction(self):
        prof = self._profile()
        scaled = VelocityProfile(prof.dt, 0.9 * prof.vx, 0.9 * prof.vy)
        assert snr(prof, scaled) == pytest.approx(20.0, abs=1e-9)

    def test_monotone_in_noise_amplitude(self):
        prof = self._profile()
        rng = np.random.default_rng(7)
        noise_x = rng.standard_normal(len(prof))
        noise_y = rng.standard_normal(len(prof))
        values = []
        for amp in (0.5, 1.0, 2.0, 4.0, 8.0):
            rec = VelocityProfile(prof.dt, prof.vx + amp * noise_x,
                                  prof.vy + amp * noise_y)
            values.append(snr(prof, rec))
        assert all(a > b for a, b in zip(values, values[1:]))

    def test_zero_energy_is_degenerate(self):
        zero = VelocityProfile(0.005, np.zeros(10), np.zeros(10))
        with pytest.raises(DegenerateInputError):
            snr(zero, zero)

    def test_mismatched_dt_rejected(self):
        prof = self._profile()
        other = VelocityProfile(0.01, prof.vx, prof.vy)
        with pytest.raises(ValueError):
            snr(prof, other)


class TestPlanSerialization:
    def test_round_trip(self):
        plan = ActionPlan([
            StrokePlan([straight(), LognormalPrimitive(D=30, t0=0.4, mu=-2.0,
                                                       sigma=0.15, theta_s=1.0,
                                                       theta_e=-0.5)],
                       origin=(10.5, -3.25), pen_down_offset=0.1, touch_id=2),
        ])
        again = plan_from_obj(plan_to_obj(plan))
        assert again == plan

    def test_wire_keys(self):
        obj = plan_to_obj(ActionPlan([StrokePlan([straight()], origin=(0, 0))]))
        text = json.dumps(obj)
        for key in ("origin", "penDownOffset", "touchId", "primitives",
                    "thetaS", "thetaE"):
            assert key in text


class TestInvariantEnforcement:
    def test_primitive_requires_positive_amplitude(self):
        with pytest.raises(ValueError):
            LognormalPrimitive(D=0, t0=0, mu=0, sigma=0.3, theta_s=0, theta_e=0)

    def test_primitive_requires_positive_sigma(self):
        with pytest.raises(ValueError):
            LognormalPrimitive(D=1, t0=0, mu=0, sigma=0, theta_s=0, theta_e=0)

    def test_primitive_requires_nonnegative_t0(self):
        with pytest.raises(ValueError):
            LognormalPrimitive(D=1, t0=-0.1, mu=0, sigma=0.3, theta_s=0, theta_e=0)

    def test_stroke_plan_requires_sorted_t0(self):
        with pytest.raises(ValueError):
            StrokePlan([straight(t0=0.5), straight(t0=0.1)], origin=(0, 0))

    def test_empty_action_plan_rejected(self):
        with pytest.raises(ValueError):
            ActionPlan([])
