"""Estimate distributions of stroke-gesture features from a single example.

The toolkit fits a lognormal velocity model to a seed gesture, synthesizes a
population of human-like variants by bounded parameter perturbation, and
reports the distribution (with a full statistics palette) of any numerical
gesture feature over that population.

Submodules are imported lazily so lightweight entry points (CLI startup,
sandbox worker processes) do not pay for numpy/scipy.
"""

from __future__ import annotations

import importlib

__version__ = "0.1.0"

_EXPORTS = {
    # gestures
    "TouchPoint": "gestures", "Stroke": "gestures", "Gesture": "gestures",
    "Corpus": "gestures", "validate": "gestures", "gesture_duration": "gestures",
    "load_corpus": "gestures", "save_corpus": "gestures",
    "load_gesture": "gestures", "save_gesture": "gestures",
    # model
    "LognormalPrimitive": "model", "StrokePlan": "model", "ActionPlan": "model",
    "VelocityProfile": "model", "primitive_speed": "model",
    "primitive_angle": "model", "plan_velocity": "model",
    "reconstruct_trajectory": "model", "snr": "model",
    # extractor
    "ExtractorConfig": "extractor", "ExtractionResult": "extractor",
    "extract": "extractor", "estimate_velocity": "extractor",
    # synthesis
    "NoiseSpec": "synthesis", "ZERO_NOISE": "synthesis",
    "perturb_plan": "synthesis", "synthesize_population": "synthesis",
    # features
    "FeatureDefinition": "features", "registry": "features",
    "compute_feature": "features", "resample_spatial": "features",
    "convex_hull": "features", "detect_corners": "features",
    "count_self_intersections": "features",
    # stats
    "FeatureEstimate": "stats", "HistogramSpec": "stats", "summarize": "stats",
    "histogram": "stats", "spearman": "stats", "kruskal_wallis": "stats",
    "cohens_d": "stats",
    # sandbox
    "SandboxPolicy": "sandbox", "compile_spec": "sandbox",
    # pipeline
    "EstimationRequest": "pipeline", "EstimationResult": "pipeline",
    "estimate": "pipeline", "estimate_distribution_per_trial": "pipeline",
    # evaluation
    "EvaluationReport": "evaluation", "run_ev1": "evaluation",
    "run_ev2": "evaluation", "export_report": "evaluation",
    # errors
    "QualityError": "errors", "ValidationFailure": "errors",
    "DegenerateFeatureError": "errors", "UnknownFeatureError": "errors",
}

__all__ = sorted(_EXPORTS) + ["__version__"]


def __getattr__(name: str):
    module = _EXPORTS.get(name)
    if module is None:
        raise AttributeError(f"module {__name__!r} has no attribute {name!r}")
    return getattr(importlib.import_module(f".{module}", __name__), name)


def __dir__():
    return __all__
