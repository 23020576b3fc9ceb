"""Corpus-level evaluation of the estimator under leave-one-out testing.

Two scenarios:
  * statistic estimation: one seed at a time, its estimated feature means
    compared against the groundtruth means of all other subjects, with
    rank accuracy (Spearman across gesture types), absolute error, and
    best/worst/average cases;
  * distribution estimation: one random variant per trial of a subject,
    compared against the other subjects' value distributions with
    Kruskal-Wallis tests (Bonferroni-corrected) and effect sizes.
"""

from __future__ import annotations

import csv
import io
import json
from dataclasses import asdict, dataclass

import numpy as np

from .errors import InsufficientDataError, QualityError
from .extractor import ExtractorConfig
from .gestures import Corpus
from .pipeline import (EstimationRequest, estimate,
                       estimate_distribution_per_trial,
                       evaluate_gesture_features)
from .stats import cohens_d, kruskal_wallis, spearman
from .synthesis import NoiseSpec, RngSeed


@dataclass(frozen=True)
class Ev1Cell:
    feature_id: str
    gesture_type: str
    true_mean: float
    estimated_mean: float
    absolute_error: float
    best_case_error: float
    worst_case_error: float
    true_sd: float
    estimated_sd: float
    n_seeds: int


@dataclass(frozen=True)
class Ev2Cell:
    feature_id: str
    gesture_type: str
    subject: str
    kw_h: float | None
    kw_p: float | None
    kw_p_corrected: float | None
    effect_size: float | None
    n_estimated: int
    n_true: int


@dataclass(frozen=True)
class SkipRecord:
    subject: str
    gesture_type: str
    trial: str
    reason: str


@dataclass(frozen=True)
class EvaluationReport:
    scenario: str  # "ev1" | "ev2"
    feature_ids: tuple[str, ...]
    gesture_types: tuple[str, ...]
    cells: tuple[Ev1Cell, ...]
    spearman_by_feature: dict[str, float | None]
    spearman_notes: dict[str, str]
    ev2_cells: tuple[Ev2Cell, ...]
    skipped: tuple[SkipRecord, ...]


def _meta(gesture, key: str) -> str:
    return str(gesture.metadata.get(key, ""))


class _GroundTruth:
    """Per-feature value pools tagged with subject provenance."""

    def __init__(self, corpus: Corpus, feature_ids):
        self.feature_ids = tuple(feature_ids)
        # (feature, type) -> list of (subject, value)
        self.pools: dict[tuple[str, str], list[tuple[str, float]]] = {}
        for gesture in corpus.gestures:
            subject = _meta(gesture, "subject")
            gtype = _meta(gesture, "gestureType")
            row = evaluate_gesture_features(gesture, self.feature_ids)
            for fid, value in row.items():
                if value is not None:
                    self.pools.setdefault((fid, gtype), []).append((subject, value))

    def tagged(self, fid: str, gtype: str,
               exclude_subject: str | None) -> list[tuple[str, float]]:
        pool = self.pools.get((fid, gtype), [])
        kept = [(s, v) for s, v in pool if s != exclude_subject]
        # Leave-one-out hygiene: the excluded subject must never leak into
        # its own groundtruth.
        assert all(s != exclude_subject for s, _ in kept) or exclude_subject is None
        return kept

    def values(self, fid: str, gtype: str, exclude_subject: str | None) -> list[float]:
        return [v for _, v in self.tagged(fid, gtype, exclude_subject)]


def _check_corpus(corpus: Corpus) -> tuple[list[str], list[str]]:
    subjects = corpus.subjects()
    types = corpus.gesture_types()
    if len(subjects) < 2:
        raise InsufficientDataError("corpus needs at least 2 subjects")
    if len(types) < 2:
        raise InsufficientDataError("corpus needs at least 2 gesture types")
    return subjects, types


def _seed_rngs(rng_seed: RngSeed, count: int) -> list[int]:
    streams = np.random.SeedSequence(int(rng_seed)).spawn(count)
    return [int(s.generate_state(1, dtype=np.uint64)[0] >> 1) for s in streams]


def run_ev1(corpus: Corpus, feature_ids, rng: RngSeed = 0,
            n_per_seed: int = 100, noise: NoiseSpec | None = None,
            config: ExtractorConfig | None = None) -> EvaluationReport:
    """Estimate per-seed feature means and score them against groundtruth."""
    subjects, types = _check_corpus(corpus)
    feature_ids = tuple(feature_ids)
    noise = NoiseSpec() if noise is None else noise
    truth = _GroundTruth(corpus, feature_ids)

    seeds = list(corpus.gestures)
    seed_rngs = _seed_rngs(rng, len(seeds))

    # (feature, type) -> per-seed absolute errors and estimates
    errors: dict[tuple[str, str], list[float]] = {}
    estimates: dict[tuple[str, str], list[float]] = {}
    est_sds: dict[tuple[str, str], list[float]] = {}
    skipped: list[SkipRecord] = []

    for seed, seed_rng in zip(seeds, seed_rngs):
        subject = _meta(seed, "subject")
        gtype = _meta(seed, "gestureType")
        try:
            result = estimate(EstimationRequest([seed], feature_ids,
                                                n_per_seed=n_per_seed, noise=noise,
                                                rng_seed=seed_rng),
                              config=config)
        except (QualityError, InsufficientDataError) as exc:
            skipped.append(SkipRecord(subject, gtype, _meta(seed, "trial"), str(exc)))
            continue
        for fid in feature_ids:
            ref = truth.values(fid, gtype, exclude_subject=subject)
            if not ref:
                continue
            est = result.per_feature[fid]
            key = (fid, gtype)
            errors.setdefault(key, []).append(abs(est.mean - float(np.mean(ref))))
            estimates.setdefault(key, []).append(est.mean)
            est_sds.setdefault(key, []).append(est.standard_deviation)

    cells = []
    for fid in feature_ids:
        for gtype in types:
            key = (fid, gtype)
            if key not in errors:
                continue
            ref_all = truth.values(fid, gtype, exclude_subject=None)
            errs = errors[key]
            cells.append(Ev1Cell(
                feature_id=fid, gesture_type=gtype,
                true_mean=float(np.mean(ref_all)),
                estimated_mean=float(np.mean(estimates[key])),
                absolute_error=float(np.mean(errs)),
                best_case_error=float(np.min(errs)),
                worst_case_error=float(np.max(errs)),
                true_sd=float(np.std(ref_all, ddof=1)) if len(ref_all) > 1 else 0.0,
                estimated_sd=float(np.mean(est_sds[key])),
                n_seeds=len(errs)))

    spearman_by_feature: dict[str, float | None] = {}
    notes: dict[str, str] = {}
    for fid in feature_ids:
        pairs = [(c.true_mean, c.estimated_mean) for c in cells if c.feature_id == fid]
        if len(pairs) < 3:
            spearman_by_feature[fid] = None
            notes[fid] = f"needs at least 3 gesture types, have {len(pairs)}"
            continue
        try:
            spearman_by_feature[fid] = spearman([p[0] for p in pairs],
                                                [p[1] for p in pairs])
        except InsufficientDataError as exc:
            spearman_by_feature[fid] = None
            notes[fid] = str(exc)

    return EvaluationReport(scenario="ev1", feature_ids=feature_ids,
                            gesture_types=tuple(types), cells=tuple(cells),
                            spearman_by_feature=spearman_by_feature,
                            spearman_notes=notes, ev2_cells=(),
                            skipped=tuple(skipped))


def run_ev2(corpus: Corpus, feature_ids, rng: RngSeed = 0,
            noise: NoiseSpec | None = None,
            config: ExtractorConfig | None = None) -> EvaluationReport:
    """Compare estimated feature distributions against groundtruth ones."""
    subjects, types = _check_corpus(corpus)
    feature_ids = tuple(feature_ids)
    noise = NoiseSpec() if noise is None else noise
    truth = _GroundTruth(corpus, feature_ids)
    bonferroni = len(types) * len(feature_ids)

    groups = {}
    for gesture in corpus.gestures:
        key = (_meta(gesture, "subject"), _meta(gesture, "gestureType"))
        groups.setdefault(key, []).append(gesture)

    rngs = _seed_rngs(rng, len(groups))
    ev2_cells: list[Ev2Cell] = []
    skipped: list[SkipRecord] = []
    for ((subject, gtype), gestures), group_rng in zip(sorted(groups.items(),
                                                              key=lambda kv: kv[0]),
                                                       rngs):
        if len(gestures) < 2:
            skipped.append(SkipRecord(subject, gtype, "*",
                                      "needs at least 2 trials"))
            continue
        values, skips = estimate_distribution_per_trial(
            gestures, feature_ids, rng_seed=group_rng, noise=noise, config=config)
        for index, reason in skips:
            skipped.append(SkipRecord(subject, gtype,
                                      _meta(gestures[index], "trial"), reason))
        for fid in feature_ids:
            est = values[fid]
            ref = truth.values(fid, gtype, exclude_subject=subject)
            kw_h = kw_p = kw_pc = effect = None
            if len(est) >= 1 and len(ref) >= 1 and len(est) + len(ref) >= 5:
                try:
                    kw_h, kw_p = kruskal_wallis([est, ref])
                    kw_pc = min(kw_p * bonferroni, 1.0)
                except InsufficientDataError:
                    pass
            if len(est) >= 2 and len(ref) >= 2:
                try:
                    effect = cohens_d(est, ref)
                except InsufficientDataError:
                    pass
            ev2_cells.append(Ev2Cell(feature_id=fid, gesture_type=gtype,
                                     subject=subject, kw_h=kw_h, kw_p=kw_p,
                                     kw_p_corrected=kw_pc, effect_size=effect,
                                     n_estimated=len(est), n_true=len(ref)))

    return EvaluationReport(scenario="ev2", feature_ids=feature_ids,
                            gesture_types=tuple(types), cells=(),
                            spearman_by_feature={}, spearman_notes={},
                            ev2_cells=tuple(ev2_cells), skipped=tuple(skipped))


# --------------------------------------------------------------------------
# Export
# --------------------------------------------------------------------------

def report_to_obj(report: EvaluationReport) -> dict:
    return {
        "scenario": report.scenario,
        "featureIds": list(report.feature_ids),
        "gestureTypes": list(report.gesture_types),
        "cells": [asdict(c) for c in report.cells],
        "spearman": report.spearman_by_feature,
        "spearmanNotes": report.spearman_notes,
        "distributionCells": [asdict(c) for c in report.ev2_cells],
        "skipped": [asdict(s) for s in report.skipped],
    }


def report_from_obj(obj: dict) -> EvaluationReport:
    return EvaluationReport(
        scenario=obj["scenario"],
        feature_ids=tuple(obj["featureIds"]),
        gesture_types=tuple(obj["gestureTypes"]),
        cells=tuple(Ev1Cell(**c) for c in obj["cells"]),
        spearman_by_feature=dict(obj["spearman"]),
        spearman_notes=dict(obj["spearmanNotes"]),
        ev2_cells=tuple(Ev2Cell(**c) for c in obj["distributionCells"]),
        skipped=tuple(SkipRecord(**s) for s in obj["skipped"]))


def _feature_rollup(report: EvaluationReport, fid: str) -> dict[str, float]:
    """Across-type means of the per-cell figures for one feature."""
    cells = [c for c in report.cells if c.feature_id == fid]
    if not cells:
        return {}
    return {
        "true": float(np.mean([c.true_mean for c in cells])),
        "error": float(np.mean([c.absolute_error for c in cells])),
        "best": float(np.min([c.best_case_error for c in cells])),
        "worst": float(np.max([c.worst_case_error for c in cells])),
    }


def export_report(report: EvaluationReport, format: str = "json") -> bytes:
    """Serialize a report; the markdown profile is a per-feature roll-up."""
    if format == "json":
        return (json.dumps(report_to_obj(report), indent=1) + "\n").encode()
    if format == "csv":
        buf = io.StringIO()
        writer = csv.writer(buf)
        if report.scenario == "ev1":
            writer.writerow(["feature", "gestureType", "trueMean", "estimatedMean",
                             "absoluteError", "bestCaseError", "worstCaseError",
                             "trueSd", "estimatedSd", "nSeeds", "spearman"])
            for c in report.cells:
                writer.writerow([c.feature_id, c.gesture_type, c.true_mean,
                                 c.estimated_mean, c.absolute_error,
                                 c.best_case_error, c.worst_case_error, c.true_sd,
                                 c.estimated_sd, c.n_seeds,
                                 report.spearman_by_feature.get(c.feature_id)])
        else:
            writer.writerow(["feature", "gestureType", "subject", "kwH", "kwP",
                             "kwPCorrected", "effectSize", "nEstimated", "nTrue"])
            for c in report.ev2_cells:
                writer.writerow([c.feature_id, c.gesture_type, c.subject, c.kw_h,
                                 c.kw_p, c.kw_p_corrected, c.effect_size,
                                 c.n_estimated, c.n_true])
        return buf.getvalue().encode()
    if format == "markdown-table":
        lines = ["| Feature | True | r_s | Error | Best | Worst |",
                 "| --- | --- | --- | --- | --- | --- |"]
        for fid in report.feature_ids:
            roll = _feature_rollup(report, fid)
            rs = report.spearman_by_feature.get(fid)
            rs_text = f"{rs:.3f}" if rs is not None else "n/a"
            if roll:
                lines.append(
                    f"| {fid} | {roll['true']:.4g} | {rs_text} | "
                    f"{roll['error']:.4g} | {roll['best']:.4g} | {roll['worst']:.4g} |")
            else:
                lines.append(f"| {fid} | n/a | {rs_text} | n/a | n/a | n/a |")
        return ("\n".join(lines) + "\n").encode()
    raise ValueError(f"unknown report format {format!r}")
