"""Generate human-like gesture variants by perturbing plan parameters.

Each primitive's parameters receive independent uniform noise inside fixed
human-variability bounds; amplitude noise is relative, the rest additive.
Activation times are left untouched by default (they are too sensitive).

Randomness comes from numpy's PCG64 seeded through SeedSequence spawning,
so populations are reproducible bit-for-bit across platforms and the n
variants are independent of evaluation order.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass

import numpy as np

from .extractor import ExtractionResult, ExtractorConfig, extract
from .gestures import Gesture, strokes_to_obj
from .model import (ActionPlan, LognormalPrimitive, StrokePlan, DEFAULT_DT,
                    reconstruct_trajectory)

SIGMA_FLOOR = 0.01  # perturbed sigma is clamped above this


@dataclass(frozen=True)
class NoiseSpec:
    """Half-widths of the uniform parameter noise."""

    n_mu: float = 0.1
    n_sigma: float = 0.1
    n_D: float = 0.15  # fraction of D
    n_theta: float = 0.06  # radians, start and end angle independently
    n_t0: float = 0.0

    def __post_init__(self):
        for name in ("n_mu", "n_sigma", "n_D", "n_theta", "n_t0"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be >= 0")


ZERO_NOISE = NoiseSpec(0.0, 0.0, 0.0, 0.0, 0.0)

RngSeed = int  # 64-bit unsigned; any value is valid


def make_rng(entropy: RngSeed | np.random.SeedSequence) -> np.random.Generator:
    """The project-wide generator: PCG64 under SeedSequence entropy."""
    if not isinstance(entropy, np.random.SeedSequence):
        entropy = np.random.SeedSequence(entropy)
    return np.random.Generator(np.random.PCG64(entropy))


def variant_streams(entropy: RngSeed | np.random.SeedSequence,
                    n: int) -> list[np.random.SeedSequence]:
    """One independent child stream per variant index."""
    if not isinstance(entropy, np.random.SeedSequence):
        entropy = np.random.SeedSequence(entropy)
    return entropy.spawn(n)


def gesture_digest(gesture: Gesture) -> str:
    """Stable short hash of a gesture's stroke content."""
    payload = json.dumps(strokes_to_obj(gesture), separators=(",", ":"))
    return hashlib.sha256(payload.encode()).hexdigest()[:12]


def perturb_plan(plan: ActionPlan, noise: NoiseSpec,
                 rng: np.random.Generator) -> ActionPlan:
    """Draw one perturbed copy of the plan.

    Six uniforms are consumed per primitive in a fixed order, so the stream
    layout does not depend on which noise components are enabled.
    """
    strokes = []
    for sp in plan.strokes:
        primitives = []
        for p in sp.primitives:
            d_mu = rng.uniform(-noise.n_mu, noise.n_mu)
            d_sigma = rng.uniform(-noise.n_sigma, noise.n_sigma)
            d_amp = rng.uniform(-noise.n_D, noise.n_D)
            d_ts = rng.uniform(-noise.n_theta, noise.n_theta)
            d_te = rng.uniform(-noise.n_theta, noise.n_theta)
            d_t0 = rng.uniform(-noise.n_t0, noise.n_t0)
            primitives.append(LognormalPrimitive(
                D=max(p.D * (1.0 + d_amp), 1e-9),
                t0=max(p.t0 + d_t0, 0.0),
                mu=p.mu + d_mu,
                sigma=max(p.sigma + d_sigma, SIGMA_FLOOR),
                theta_s=p.theta_s + d_ts,
                theta_e=p.theta_e + d_te))
        if noise.n_t0 > 0:
            primitives.sort(key=lambda q: q.t0)
        strokes.append(StrokePlan(primitives, origin=sp.origin,
                                  pen_down_offset=sp.pen_down_offset,
                                  touch_id=sp.touch_id))
    return ActionPlan(strokes)


def synthesize_from_plan(plan: ActionPlan, n: int, noise: NoiseSpec,
                         entropy: RngSeed | np.random.SeedSequence,
                         seed_digest: str = "", dt: float = DEFAULT_DT,
                         extra_metadata: dict | None = None) -> list[Gesture]:
    """n perturbed reconstructions of a plan, one child RNG stream each."""
    if n < 1:
        raise ValueError("population size must be at least 1")
    variants = []
    for index, stream in enumerate(variant_streams(entropy, n)):
        perturbed = perturb_plan(plan, noise, make_rng(stream))
        gesture = reconstruct_trajectory(perturbed, dt=dt)
        metadata = dict(extra_metadata or {})
        metadata["variant"] = index
        if seed_digest:
            metadata["seedHash"] = seed_digest
        variants.append(Gesture(gesture.strokes, metadata=metadata))
    return variants


def synthesize_population(seed_gesture: Gesture, n: int,
                          noise: NoiseSpec | None = None,
                          rng: RngSeed | np.random.SeedSequence = 0,
                          config: ExtractorConfig | None = None,
                          dt: float = DEFAULT_DT
                          ) -> tuple[list[Gesture], ExtractionResult]:
    """Extract the seed (quality-gated) and synthesize n variants from it."""
    noise = NoiseSpec() if noise is None else noise
    extraction = extract(seed_gesture, config)
    variants = synthesize_from_plan(
        extraction.plan, n, noise, rng,
        seed_digest=gesture_digest(seed_gesture), dt=dt)
    return variants, extraction
