import numpy as np
import pytest

from gesturecast.errors import DegenerateInputError
from gesturecast.gestures import gesture_to_obj, validate
from gesturecast.model import reconstruct_trajectory
from gesturecast.synthesis import (NoiseSpec, ZERO_NOISE, gesture_digest,
                                   make_rng, perturb_plan,
                                   synthesize_population, variant_streams)

from conftest import make_gesture, random_test_plan


@pytest.fixture(scope="module")
def plan():
    return random_test_plan(np.random.default_rng(1), 4)


class TestPerturb:
    def test_zero_noise_is_identity(self, plan):
        out = perturb_plan(plan, ZERO_NOISE, make_rng(0))
        assert out == plan

    def test_default_noise_bounds(self, plan):
        rng = make_rng(42)
        noise = NoiseSpec()
        for _ in range(1000 // plan.primitive_count() + 1):
            out = perturb_plan(plan, noise, rng)
            for sp, sp0 in zip(out.strokes, plan.strokes):
                for p, p0 in zip(sp.primitives, sp0.primitives):
                    assert abs(p.mu - p0.mu) <= 0.1
                    assert abs(p.sigma - p0.sigma) <= 0.1
                    assert abs(p.D - p0.D) <= 0.15 * p0.D + 1e-12
                    assert abs(p.theta_s - p0.theta_s) <= 0.06
                    assert abs(p.theta_e - p0.theta_e) <= 0.06
                    assert p.t0 == p0.t0

    def test_same_seed_bit_identical(self, plan):
        a = perturb_plan(plan, NoiseSpec(), make_rng(7))
        b = perturb_plan(plan, NoiseSpec(), make_rng(7))
        assert a == b

    def test_sigma_clamped_above_floor(self, plan):
        noise = NoiseSpec(n_sigma=5.0)
        rng = make_rng(3)
        for _ in range(50):
            out = perturb_plan(plan, noise, rng)
            for sp in out.strokes:
                for p in sp.primitives:
                    assert p.sigma >= 0.01

    def test_uniform_distribution_of_deltas(self, plan):
        # Kolmogorov-Smirnov against U(-n, n) over many draws.
        from scipy.stats import kstest
        rng = make_rng(11)
        noise = NoiseSpec()
        deltas = []
        p0 = plan.strokes[0].primitives[0]
        for _ in range(10_000 // plan.primitive_count() + 1):
            out = perturb_plan(plan, noise, rng)
            deltas.append(out.strokes[0].primitives[0].mu - p0.mu)
        stat = kstest(deltas, "uniform", args=(-0.1, 0.2)).statistic
        assert stat < 0.05


class TestSynthesizePopulation:
    def test_population_size_and_validity(self, plan):
        seed = reconstruct_trajectory(plan)
        variants, extraction = synthesize_population(seed, 100, rng=5)
        assert len(variants) == 100
        assert extraction.snr_db >= 15.0
        for v in variants:
            assert validate(v) == []

    def test_variants_are_distinct(self, plan):
        seed = reconstruct_trajectory(plan)
        variants, _ = synthesize_population(seed, 20, rng=5)
        payloads = {str(gesture_to_obj(v)["strokes"]) for v in variants}
        assert len(payloads) == 20

    def test_metadata_tags(self, plan):
        seed = reconstruct_trajectory(plan)
        variants, _ = synthesize_population(seed, 3, rng=5)
        digest = gesture_digest(seed)
        for i, v in enumerate(variants):
            assert v.metadata["variant"] == i
            assert v.metadata["seedHash"] == digest

    def test_determinism_bit_for_bit(self, plan):
        seed = reconstruct_trajectory(plan)
        a, _ = synthesize_population(seed, 10, rng=123)
        b, _ = synthesize_population(seed, 10, rng=123)
        assert [gesture_to_obj(x) for x in a] == [gesture_to_obj(y) for y in b]

    def test_zero_noise_collapses(self, plan):
        seed = reconstruct_trajectory(plan)
        variants, extraction = synthesize_population(seed, 5, noise=ZERO_NOISE,
                                                     rng=9)
        reference = reconstruct_trajectory(extraction.plan)
        for v in variants:
            assert v.strokes == reference.strokes

    def test_degenerate_seed_errors(self):
        seed = make_gesture([[(0, 0), (1, 1)]], timestamps=[[0.0, 0.0]])
        with pytest.raises(DegenerateInputError):
            synthesize_population(seed, 5, rng=1)

    def test_variant_streams_are_schedule_independent(self, plan):
        # Variant k regenerated alone, out of order, from its own child
        # stream matches variant k of the full batch.
        from gesturecast.synthesis import synthesize_from_plan
        full = synthesize_from_plan(plan, 8, NoiseSpec(), 77)
        streams = variant_streams(77, 8)
        for k in (5, 2, 7):
            perturbed = perturb_plan(plan, NoiseSpec(), make_rng(streams[k]))
            lone = reconstruct_trajectory(perturbed)
            assert gesture_to_obj(full[k])["strokes"] == \
                gesture_to_obj(lone)["strokes"]
