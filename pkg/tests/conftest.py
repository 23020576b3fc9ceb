"""Shared fixtures: gesture builders, plan generators, and the clone corpus."""

from __future__ import annotations

import math

import numpy as np
import pytest

from gesturecast.gestures import Corpus, Gesture, Stroke, TouchPoint
from gesturecast.model import (ActionPlan, LognormalPrimitive, StrokePlan,
                               reconstruct_trajectory)
from gesturecast.synthesis import NoiseSpec, synthesize_from_plan


def make_gesture(stroke_points, timestamps=None, touch_ids=None, metadata=None):
    """Build a gesture from lists of (x, y) points, one list per stroke."""
    strokes = []
    for si, pts in enumerate(stroke_points):
        if timestamps is not None:
            ts = timestamps[si]
        else:
            ts = [100.0 * i for i in range(len(pts))]
        tid = touch_ids[si] if touch_ids is not None else 0
        strokes.append(Stroke([TouchPoint(float(x), float(y), float(t), tid)
                               for (x, y), t in zip(pts, ts)]))
    return Gesture(strokes, metadata=metadata or {})


def polyline_plan(waypoints, start=(0.0, 0.0), pace=0.16, mu=-1.5, sigma=0.2,
                  pen_down_offset=0.0, touch_id=0):
    """One primitive per leg of a waypoint path; straight, evenly paced."""
    primitives = []
    x0, y0 = start
    t0 = 0.05
    for x1, y1 in waypoints:
        length = math.hypot(x1 - x0, y1 - y0)
        angle = math.atan2(y1 - y0, x1 - x0)
        primitives.append(LognormalPrimitive(D=max(length, 1e-6), t0=t0, mu=mu,
                                             sigma=sigma, theta_s=angle,
                                             theta_e=angle))
        t0 += pace
        x0, y0 = x1, y1
    return StrokePlan(primitives, origin=start, pen_down_offset=pen_down_offset,
                      touch_id=touch_id)


def arc_plan(radius=120.0, sweep=4.8, start=(200.0, 200.0), n_prims=4,
             mu=-1.3, sigma=0.22):
    """A curving stroke whose direction sweeps `sweep` radians in total."""
    primitives = []
    t0 = 0.05
    seg_angle = sweep / n_prims
    arc_len = abs(radius * seg_angle)
    theta = 0.0
    for _ in range(n_prims):
        primitives.append(LognormalPrimitive(
            D=arc_len, t0=t0, mu=mu, sigma=sigma,
            theta_s=theta, theta_e=theta + seg_angle))
        theta += seg_angle
        t0 += 0.21
    return StrokePlan(primitives, origin=start)


def random_test_plan(rng: np.random.Generator, n_prims: int) -> ActionPlan:
    """Plans drawn from the round-trip test distribution."""
    t0 = 0.05
    primitives = []
    theta = rng.uniform(-math.pi, math.pi)
    for _ in range(n_prims):
        theta_e = theta + rng.uniform(-1.2, 1.2)
        primitives.append(LognormalPrimitive(
            D=rng.uniform(40.0, 250.0), t0=t0, mu=rng.uniform(-2.2, -1.0),
            sigma=rng.uniform(0.1, 0.5), theta_s=theta, theta_e=theta_e))
        theta = theta_e
        t0 += rng.uniform(0.08, 0.25)
    return ActionPlan([StrokePlan(primitives, origin=(150.0, 150.0))])


def random_polyline_gesture(rng: np.random.Generator, n_strokes=None) -> Gesture:
    """Raw polyline gestures for geometry/feature oracle comparisons."""
    n_strokes = n_strokes or int(rng.integers(1, 3))
    stroke_points, stroke_ts, touch_ids = [], [], []
    t = 0.0
    for si in range(n_strokes):
        n = int(rng.integers(5, 14))
        pts = rng.uniform(0, 400, size=(n, 2))
        ts = []
        for _ in range(n):
            ts.append(t)
            t += float(rng.uniform(8, 40))
        t += 120.0
        stroke_points.append([(float(x), float(y)) for x, y in pts])
        stroke_ts.append(ts)
        touch_ids.append(si)
    return make_gesture(stroke_points, timestamps=stroke_ts, touch_ids=touch_ids)


# --------------------------------------------------------------------------
# Template plans: five distinct gesture types with well-separated features
# --------------------------------------------------------------------------

def template_plans() -> dict[str, ActionPlan]:
    flick = ActionPlan([polyline_plan([(150.0, 30.0), (310.0, 55.0)],
                                      start=(10.0, 10.0), pace=0.13,
                                      mu=-1.8, sigma=0.15)])
    square = ActionPlan([polyline_plan(
        [(300.0, 0.0), (300.0, 300.0), (0.0, 300.0), (0.0, 80.0)],
        start=(0.0, 0.0), pace=0.24, mu=-1.4, sigma=0.2)])
    zigzag = ActionPlan([polyline_plan(
        [(120.0, 220.0), (240.0, 20.0), (360.0, 220.0)],
        start=(0.0, 20.0), pace=0.17, mu=-1.6, sigma=0.18)])
    loop = ActionPlan([arc_plan(radius=130.0, sweep=5.2, n_prims=4)])
    cross = ActionPlan([
        polyline_plan([(260.0, 260.0)], start=(20.0, 20.0), pace=0.2,
                      mu=-1.2, sigma=0.2),
        polyline_plan([(20.0, 250.0)], start=(250.0, 30.0), pace=0.2,
                      mu=-1.2, sigma=0.2, pen_down_offset=0.75),
    ])
    return {"flick": flick, "square": square, "zigzag": zigzag,
            "loop": loop, "cross": cross}


def build_clone_corpus(n_users=4, n_trials=5, rng_seed=777) -> Corpus:
    """Synthesizer-built corpus: every user articulates every type n_trials times."""
    plans = template_plans()
    gestures = []
    root = np.random.SeedSequence(rng_seed)
    user_streams = root.spawn(n_users)
    for ui, user_stream in enumerate(user_streams):
        type_streams = user_stream.spawn(len(plans))
        for (name, plan), stream in zip(sorted(plans.items()), type_streams):
            variants = synthesize_from_plan(plan, n_trials, NoiseSpec(), stream)
            for ti, variant in enumerate(variants):
                gestures.append(Gesture(variant.strokes, metadata={
                    "subject": f"u{ui}", "gestureType": name, "trial": ti}))
    return Corpus(gestures)


@pytest.fixture(scope="session")
def clone_corpus() -> Corpus:
    return build_clone_corpus()


def fixture_seeds() -> list[Gesture]:
    """Ten varied, well-formed seed gestures (non-degenerate for all features)."""
    plans = template_plans()
    seeds = [reconstruct_trajectory(p) for p in plans.values()]
    rng = np.random.default_rng(4242)
    while len(seeds) < 10:
        seeds.append(reconstruct_trajectory(random_test_plan(rng,
                                                             int(rng.integers(3, 6)))))
    return seeds


@pytest.fixture(scope="session")
def seed_gestures() -> list[Gesture]:
    return fixture_seeds()


@pytest.fixture()
def square_gesture() -> Gesture:
    return make_gesture([[(0.0, 0.0), (100.0, 0.0), (100.0, 100.0), (0.0, 100.0)]],
                        timestamps=[[0.0, 1000.0 / 3, 2000.0 / 3, 1000.0]])
