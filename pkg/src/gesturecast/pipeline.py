"""End-to-end feature estimation: seeds -> synthetic population -> statistics.

One or more seed gestures are extracted (behind the SNR quality gate), a
population of variants is synthesized per seed, every requested feature is
evaluated on every variant, and each feature's value vector is summarized.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Mapping

import numpy as np

from .errors import (DegenerateFeatureError, InsufficientDataError, QualityError,
                     SandboxError, UnknownFeatureError)
from .extractor import ExtractorConfig, extract
from .features import evaluate_builtin, geometry_summary, is_builtin
from .gestures import Gesture, require_valid
from .model import DEFAULT_DT
from .stats import FeatureEstimate, summarize
from .synthesis import (NoiseSpec, RngSeed, gesture_digest, make_rng,
                        synthesize_from_plan)

DEFAULT_POPULATION = 100

# A custom feature evaluator: Gesture -> float (may raise SandboxError).
FeatureEvaluator = Callable[[Gesture], float]


@dataclass(frozen=True)
class EstimationRequest:
    seeds: tuple[Gesture, ...]
    feature_ids: tuple[str, ...]
    n_per_seed: int = DEFAULT_POPULATION
    noise: NoiseSpec = field(default_factory=NoiseSpec)
    rng_seed: RngSeed = 0

    def __init__(self, seeds, feature_ids, n_per_seed: int = DEFAULT_POPULATION,
                 noise: NoiseSpec | None = None, rng_seed: RngSeed = 0):
        object.__setattr__(self, "seeds", tuple(seeds))
        object.__setattr__(self, "feature_ids", tuple(feature_ids))
        object.__setattr__(self, "n_per_seed", int(n_per_seed))
        object.__setattr__(self, "noise", NoiseSpec() if noise is None else noise)
        object.__setattr__(self, "rng_seed", int(rng_seed))


@dataclass(frozen=True)
class EstimationResult:
    per_feature: dict[str, FeatureEstimate]
    population_size: int
    seed_snrs: tuple[float, ...]
    failures: dict[str, int]  # feature id -> variant evaluations that errored


def _resolve_features(feature_ids, custom: Mapping[str, FeatureEvaluator] | None):
    if not feature_ids:
        raise UnknownFeatureError("no features requested")
    custom = custom or {}
    for fid in feature_ids:
        if not is_builtin(fid) and fid not in custom:
            raise UnknownFeatureError(f"unknown feature id {fid!r}")
    return custom


def seed_entropy_streams(rng_seed: RngSeed, n_seeds: int) -> list[np.random.SeedSequence]:
    """Per-seed child streams; pooling equals the union of per-seed runs."""
    return np.random.SeedSequence(int(rng_seed)).spawn(n_seeds)


def evaluate_gesture_features(gesture: Gesture, feature_ids,
                              custom: Mapping[str, FeatureEvaluator] | None = None
                              ) -> dict[str, float | None]:
    """Every requested feature on one gesture; None marks a failed evaluation."""
    custom = custom or {}
    summary = geometry_summary(gesture)
    out: dict[str, float | None] = {}
    for fid in feature_ids:
        try:
            if is_builtin(fid):
                out[fid] = evaluate_builtin(fid, gesture, summary)
            else:
                out[fid] = float(custom[fid](gesture))
        except (DegenerateFeatureError, SandboxError):
            out[fid] = None
    return out


def estimate(req: EstimationRequest,
             custom: Mapping[str, FeatureEvaluator] | None = None,
             config: ExtractorConfig | None = None,
             dt: float = DEFAULT_DT) -> EstimationResult:
    """Run the full estimation pipeline for a request."""
    if not req.seeds:
        raise ValueError("at least one seed gesture is required")
    if req.n_per_seed < 1:
        raise ValueError("n_per_seed must be at least 1")
    custom = _resolve_features(req.feature_ids, custom)
    config = config or ExtractorConfig()
    for i, seed in enumerate(req.seeds):
        require_valid(seed, context=f"seed {i}")

    population: list[Gesture] = []
    seed_snrs: list[float] = []
    for i, (seed, stream) in enumerate(zip(req.seeds,
                                           seed_entropy_streams(req.rng_seed,
                                                                len(req.seeds)))):
        try:
            extraction = extract(seed, config)
        except QualityError as exc:
            raise QualityError(exc.snr_db, exc.threshold_db,
                               detail=f"seed {i}") from None
        seed_snrs.append(extraction.snr_db)
        population.extend(synthesize_from_plan(
            extraction.plan, req.n_per_seed, req.noise, stream,
            seed_digest=gesture_digest(seed), dt=dt,
            extra_metadata={"seedIndex": i}))

    values: dict[str, list[float]] = {fid: [] for fid in req.feature_ids}
    failures: dict[str, int] = {fid: 0 for fid in req.feature_ids}
    for gesture in population:
        row = evaluate_gesture_features(gesture, req.feature_ids, custom)
        for fid, value in row.items():
            if value is None:
                failures[fid] += 1
            else:
                values[fid].append(value)

    per_feature: dict[str, FeatureEstimate] = {}
    for fid in req.feature_ids:
        if len(values[fid]) < 2:
            raise InsufficientDataError(
                f"feature {fid!r} has {len(values[fid])} surviving values "
                f"({failures[fid]} failed)")
        per_feature[fid] = summarize(values[fid])
    return EstimationResult(per_feature=per_feature,
                            population_size=len(population),
                            seed_snrs=tuple(seed_snrs),
                            failures=failures)


def estimate_distribution_per_trial(seeds, feature_ids, rng_seed: RngSeed = 0,
                                    noise: NoiseSpec | None = None,
                                    custom: Mapping[str, FeatureEvaluator] | None = None,
                                    config: ExtractorConfig | None = None,
                                    dt: float = DEFAULT_DT):
    """One random variant per seed; the distribution-estimate sampling mode.

    Returns (values per feature, skip records). Seeds failing the quality
    gate are skipped and recorded, not fatal.
    """
    seeds = tuple(seeds)
    if len(seeds) < 2:
        raise ValueError("need at least 2 seed gestures")
    custom = _resolve_features(feature_ids, custom)
    noise = NoiseSpec() if noise is None else noise
    config = config or ExtractorConfig()

    values: dict[str, list[float]] = {fid: [] for fid in feature_ids}
    skipped: list[tuple[int, str]] = []
    for i, (seed, stream) in enumerate(zip(seeds,
                                           seed_entropy_streams(rng_seed,
                                                                len(seeds)))):
        try:
            extraction = extract(seed, config)
        except QualityError as exc:
            skipped.append((i, str(exc)))
            continue
        variant = synthesize_from_plan(extraction.plan, 1, noise, stream,
                                       seed_digest=gesture_digest(seed), dt=dt)[0]
        row = evaluate_gesture_features(variant, feature_ids, custom)
        for fid, value in row.items():
            if value is not None:
                values[fid].append(value)
    return values, skipped
