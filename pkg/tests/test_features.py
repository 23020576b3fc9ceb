import math

import numpy as np
import pytest

from gesturecast.errors import (DegenerateFeatureError, DegenerateInputError,
                                UnknownFeatureError)
from gesturecast.features import (compute_feature, convex_hull,
                                  count_self_intersections, detect_corners,
                                  geometry_summary, registry, resample_spatial)
from gesturecast.gestures import Gesture, Stroke, TouchPoint

from conftest import make_gesture, random_polyline_gesture
from oracles import ORACLES, o_hull, o_num_intersections


class TestResample:
    def test_straight_segment(self):
        g = make_gesture([[(0, 0), (100, 0)]], timestamps=[[0.0, 1000.0]])
        rs = resample_spatial(g, 5)
        xs = [p.x for p in rs.strokes[0].points]
        assert xs == pytest.approx([0, 25, 50, 75, 100])
        assert all(p.y == 0 for p in rs.strokes[0].points)

    def test_closed_square_arc_spacing_uniform(self):
        g = make_gesture([[(0, 0), (100, 0), (100, 100), (0, 100), (0, 0)]])
        rs = resample_spatial(g, 64)
        pts = [(p.x, p.y) for p in rs.strokes[0].points]
        # Arc positions along the original square must advance uniformly.
        corners = [(0, 0), (100, 0), (100, 100), (0, 100), (0, 0)]

        def arc_position(pt):
            best = None
            acc = 0.0
            for (x0, y0), (x1, y1) in zip(corners, corners[1:]):
                seg = math.hypot(x1 - x0, y1 - y0)
                dx, dy = x1 - x0, y1 - y0
                u = ((pt[0] - x0) * dx + (pt[1] - y0) * dy) / seg ** 2
                u = min(max(u, 0.0), 1.0)
                qx, qy = x0 + u * dx, y0 + u * dy
                d = math.hypot(pt[0] - qx, pt[1] - qy)
                if best is None or d < best[0]:
                    best = (d, acc + u * seg)
                acc += seg
            assert best[0] < 1e-6  # resampled points lie on the square
            return best[1]

        arcs = [arc_position(p) for p in pts[:-1]]
        gaps = np.diff(arcs)
        assert gaps.var() < 1e-6 * gaps.mean()

    def test_timestamps_interpolated_monotone(self):
        g = make_gesture([[(0, 0), (50, 0), (100, 0)]],
                         timestamps=[[0.0, 400.0, 1000.0]])
        rs = resample_spatial(g, 11)
        ts = [p.t for p in rs.strokes[0].points]
        assert ts[0] == 0.0 and ts[-1] == 1000.0
        assert all(b >= a for a, b in zip(ts, ts[1:]))

    def test_zero_length_stroke_is_degenerate(self):
        g = make_gesture([[(5, 5), (5, 5)]])
        with pytest.raises(DegenerateInputError):
            resample_spatial(g, 8)

    def test_requires_three_points(self):
        g = make_gesture([[(0, 0), (1, 1)]])
        with pytest.raises(ValueError):
            resample_spatial(g, 2)


class TestConvexHull:
    def test_unit_square_with_center(self):
        hull, area, perimeter, degenerate = convex_hull(
            [(0, 0), (1, 0), (1, 1), (0, 1), (0.5, 0.5)])
        assert len(hull) == 4
        assert area == pytest.approx(1.0)
        assert perimeter == pytest.approx(4.0)
        assert not degenerate

    def test_collinear_points(self):
        hull, area, perimeter, degenerate = convex_hull([(0, 0), (5, 0), (10, 0)])
        assert degenerate
        assert area == 0.0
        assert perimeter == pytest.approx(20.0)

    def test_random_points_match_triple_oracle(self):
        rng = np.random.default_rng(11)
        for _ in range(25):
            pts = [(float(x), float(y)) for x, y in rng.uniform(0, 100, (20, 2))]
            hull, area, perimeter, _ = convex_hull(pts)
            o_vertices, o_area, o_perimeter = o_hull(pts)
            assert area == pytest.approx(o_area, rel=1e-9)
            assert perimeter == pytest.approx(o_perimeter, rel=1e-9)
            assert sorted(hull) == sorted(o_vertices)

    def test_all_points_inside_hull(self):
        rng = np.random.default_rng(12)
        pts = rng.uniform(0, 10, (100, 2))
        hull, _, _, _ = convex_hull(map(tuple, pts))
        hx = np.array([v[0] for v in hull])
        hy = np.array([v[1] for v in hull])
        for x, y in pts:
            cross = (np.roll(hx, -1) - hx) * (y - hy) - (np.roll(hy, -1) - hy) * (x - hx)
            assert np.all(cross >= -1e-9)


class TestCorners:
    def test_straight_line_is_one_segment(self):
        g = make_gesture([[(0, 0), (50, 0), (100, 0)]])
        assert detect_corners(g) == 1

    def test_l_shape_is_two_segments(self):
        g = make_gesture([[(0, 0), (100, 0), (100, 100)]])
        assert detect_corners(g) == 2

    def test_two_straight_strokes(self):
        g = make_gesture([[(0, 0), (100, 0)], [(0, 50), (100, 50)]])
        assert detect_corners(g) == 2

    def test_open_square_has_two_corners(self):
        g = make_gesture([[(0, 0), (100, 0), (100, 100), (0, 100)]])
        assert detect_corners(g) == 3


class TestIntersections:
    def test_straight_line(self):
        g = make_gesture([[(0, 0), (50, 0), (100, 0)]])
        assert count_self_intersections(g) == 0

    def test_figure_eight(self):
        g = make_gesture([[(0, 0), (2, 2), (2, 0), (0, 2), (0, 0)]])
        assert count_self_intersections(g) == 1

    def test_parallel_strokes(self):
        g = make_gesture([[(0, 0), (100, 0)], [(0, 50), (100, 50)]])
        assert count_self_intersections(g) == 0

    def test_crossing_strokes(self):
        g = make_gesture([[(0, 0), (100, 100)], [(0, 100), (100, 0)]])
        assert count_self_intersections(g) == 1

    def test_t_junction_counts_once(self):
        g = make_gesture([[(0, 0), (100, 0)], [(50, -50), (50, 0)]])
        assert count_self_intersections(g) == 1

    def test_matches_oracle_on_random_gestures(self):
        rng = np.random.default_rng(21)
        for _ in range(40):
            g = random_polyline_gesture(rng)
            assert count_self_intersections(g) == o_num_intersections(g)


class TestSquareFixture:
    expectations = {
        "path_length": 300.0,
        "line_similarity": 1.0 / 3.0,
        "density": 3.0,
        "box_area": 10000.0,
        "aspect_ratio": 1.0,
        "aspect": 0.0,
        "turning_angle": math.pi,
        "avg_speed": 300.0,
    }

    @pytest.mark.parametrize("fid,expected", sorted(expectations.items()))
    def test_open_square_values(self, square_gesture, fid, expected):
        assert compute_feature(fid, square_gesture) == pytest.approx(expected)

    def test_closed_square_perimeter_efficiency(self):
        g = make_gesture([[(0, 0), (100, 0), (100, 100), (0, 100), (0, 0)]])
        assert compute_feature("perimeter_efficiency", g) == \
            pytest.approx(math.sqrt(math.pi) / 2)


class TestRegistry:
    def test_exactly_eighteen(self):
        assert len(registry()) == 18

    def test_ids_distinct_and_ordered(self):
        ids = [d.id for d in registry()]
        assert len(set(ids)) == 18
        assert ids[0] == "production_time"
        assert ids[-1] == "perimeter_to_area"

    def test_perimeter_to_area_unit(self):
        by_id = {d.id: d for d in registry()}
        assert by_id["perimeter_to_area"].unit == "px^-1"
        assert by_id["box_area"].unit == "px^2"

    def test_categories(self):
        cats = [d.category for d in registry()]
        assert cats[:5] == ["performance"] * 5
        assert cats[5:8] == ["design"] * 3
        assert cats[8:] == ["recognition"] * 10

    def test_unknown_feature_raises(self, square_gesture):
        with pytest.raises(UnknownFeatureError):
            compute_feature("nope", square_gesture)


class TestOracleEquivalence:
    def test_all_features_match_brute_force(self):
        rng = np.random.default_rng(31)
        for _ in range(20):
            g = random_polyline_gesture(rng)
            for d in registry():
                expected = ORACLES[d.id](g)
                assert d.compute(g) == pytest.approx(expected, rel=1e-9), d.id


class TestInvarianceProperties:
    SCALE_INVARIANT = ("density", "line_similarity", "aspect_ratio", "aspect",
                       "lp_ratio", "lb_ratio", "hb_ratio", "perimeter_efficiency",
                       "turning_angle", "curviness", "num_segments",
                       "num_intersections")

    def _translate(self, g, dx, dy):
        return Gesture([Stroke([TouchPoint(p.x + dx, p.y + dy, p.t, p.touch_id)
                                for p in s.points]) for s in g.strokes])

    def _scale(self, g, f):
        return Gesture([Stroke([TouchPoint(p.x * f, p.y * f, p.t, p.touch_id)
                                for p in s.points]) for s in g.strokes])

    def test_translation_invariance(self):
        rng = np.random.default_rng(41)
        for _ in range(5):
            g = random_polyline_gesture(rng)
            moved = self._translate(g, float(rng.uniform(-500, 500)),
                                    float(rng.uniform(-500, 500)))
            for d in registry():
                assert d.compute(moved) == pytest.approx(d.compute(g), rel=1e-6), d.id

    def test_scale_covariance(self):
        rng = np.random.default_rng(42)
        g = random_polyline_gesture(rng, n_strokes=1)
        f = 3.5
        scaled = self._scale(g, f)
        assert compute_feature("path_length", scaled) == \
            pytest.approx(f * compute_feature("path_length", g))
        assert compute_feature("fl_distance", scaled) == \
            pytest.approx(f * compute_feature("fl_distance", g))
        assert compute_feature("box_area", scaled) == \
            pytest.approx(f * f * compute_feature("box_area", g))
        assert compute_feature("perimeter_to_area", scaled) == \
            pytest.approx(compute_feature("perimeter_to_area", g) / f)
        for fid in self.SCALE_INVARIANT:
            assert compute_feature(fid, scaled) == \
                pytest.approx(compute_feature(fid, g), rel=1e-9), fid

    def test_unistroke_bounds(self):
        rng = np.random.default_rng(43)
        for _ in range(10):
            g = random_polyline_gesture(rng, n_strokes=1)
            assert 0.0 <= compute_feature("line_similarity", g) <= 1.0
            assert compute_feature("density", g) >= 1.0

    def test_isoperimetric_bounds(self):
        rng = np.random.default_rng(44)
        for _ in range(10):
            g = random_polyline_gesture(rng)
            assert 0.0 < compute_feature("hb_ratio", g) <= 1.0 + 1e-12
            assert 0.0 < compute_feature("perimeter_efficiency", g) <= 1.0 + 1e-12


class TestDegenerateFeatures:
    def test_closed_gesture_density_is_finite_and_large(self):
        g = make_gesture([[(0, 0), (100, 0), (100, 100), (0, 100), (0, 0)]])
        value = compute_feature("density", g)
        assert math.isfinite(value)
        assert value > 1e9  # epsilon floor, not an error

    def test_zero_height_aspect_ratio_degenerate(self):
        g = make_gesture([[(0, 0), (100, 0)]])
        with pytest.raises(DegenerateFeatureError):
            compute_feature("aspect_ratio", g)

    def test_collinear_hull_features_degenerate(self):
        g = make_gesture([[(0, 0), (50, 50), (100, 100)]])
        for fid in ("hb_ratio", "perimeter_efficiency", "perimeter_to_area"):
            with pytest.raises(DegenerateFeatureError):
                compute_feature(fid, g)

    def test_zero_duration_speed_degenerate(self):
        g = make_gesture([[(0, 0), (100, 0)]], timestamps=[[0.0, 0.0]])
        with pytest.raises(DegenerateFeatureError):
            compute_feature("avg_speed", g)


def test_geometry_summary_consistency(square_gesture):
    s = geometry_summary(square_gesture)
    assert s.path_length == pytest.approx(300.0)
    assert s.fl_distance == pytest.approx(100.0)
    assert s.bounding_box == (0.0, 0.0, 100.0, 100.0)
    assert not s.hull_degenerate
