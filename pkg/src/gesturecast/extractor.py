"""Estimate an action plan from an observed gesture.

Per stroke: resample and smooth the point path, differentiate to a velocity
profile, split it into speed lobes at deep valleys, seed one lognormal
primitive per lobe from its characteristic points (peak plus half-peak
crossings), greedily add primitives on leftover residual lobes, then jointly
refine all parameters by bounded least squares on the velocity samples.
Fit quality is scored as SNR between observed and reconstructed velocity.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.ndimage import gaussian_filter1d
from scipy.optimize import least_squares
from scipy.special import erf

from .errors import DegenerateInputError, QualityError, SegmentClippedError
from .gestures import Gesture, Stroke, require_valid
from .model import (ActionPlan, LognormalPrimitive, StrokePlan, VelocityProfile,
                    snr, velocity_on_grid)

_SQRT2PI = math.sqrt(2.0 * math.pi)
_HALF_WIDTH = math.sqrt(2.0 * math.log(2.0))  # half-peak spread in z units

# Initialization clamps; keep seeds out of degenerate basins.
SIGMA_INIT_RANGE = (0.05, 1.0)
MU_INIT_RANGE = (-3.5, 0.5)
# Refinement bounds are slightly wider than the init clamps.
SIGMA_BOUNDS = (0.03, 1.2)
MU_BOUNDS = (-3.8, 0.8)

VALLEY_RATIO = 0.75  # a split valley must dip below this fraction of both peaks
_ROUND_ITERS = 25  # optimizer iterations per accepted refinement round
_MAX_EXTRA_PRIMITIVES = 8
_SNR_GAIN_ACCEPT_DB = 0.2  # post-refit gain required to keep a residual-pass primitive


@dataclass(frozen=True)
class ExtractorConfig:
    resample_hz: float = 200.0
    smoothing_cutoff_hz: float = 12.0
    min_primitive_fraction: float = 0.01  # of peak speed
    max_refine_iters: int = 200
    snr_target_db: float = 25.0
    snr_accept_db: float = 15.0

    def __post_init__(self):
        for name in ("resample_hz", "smoothing_cutoff_hz", "min_primitive_fraction",
                     "max_refine_iters", "snr_target_db", "snr_accept_db"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")
        if self.snr_accept_db > self.snr_target_db:
            raise ValueError("snr_accept_db must not exceed snr_target_db")


@dataclass(frozen=True)
class ExtractionResult:
    plan: ActionPlan
    snr_db: float
    observed: tuple[VelocityProfile, ...]  # one per stroke
    iterations: int


# --------------------------------------------------------------------------
# Velocity estimation
# --------------------------------------------------------------------------

def estimate_velocity(stroke: Stroke, config: ExtractorConfig) -> VelocityProfile:
    """Resample the stroke onto a uniform grid, smooth, and differentiate."""
    t_ms = np.array([p.t for p in stroke.points], dtype=float)
    x = np.array([p.x for p in stroke.points], dtype=float)
    y = np.array([p.y for p in stroke.points], dtype=float)

    keep = np.concatenate(([True], np.diff(t_ms) > 0))
    t_ms, x, y = t_ms[keep], x[keep], y[keep]
    if len(t_ms) < 2:
        raise DegenerateInputError("stroke has no temporal extent")

    tau = (t_ms - t_ms[0]) / 1000.0
    dt = 1.0 / config.resample_hz
    n = int(math.floor(tau[-1] / dt + 1e-9)) + 1
    if n < 2:
        raise DegenerateInputError("stroke is shorter than one sampling step")
    grid = dt * np.arange(n)
    xs = np.interp(grid, tau, x)
    ys = np.interp(grid, tau, y)

    # Zero-phase Gaussian low-pass; -3 dB point at the configured cutoff.
    sigma_t = math.sqrt(math.log(2.0)) / (2.0 * math.pi * config.smoothing_cutoff_hz)
    sigma_samples = sigma_t * config.resample_hz
    if sigma_samples > 1e-3:
        xs = gaussian_filter1d(xs, sigma_samples, mode="nearest")
        ys = gaussian_filter1d(ys, sigma_samples, mode="nearest")

    vx = np.gradient(xs, dt)
    vy = np.gradient(ys, dt)
    return VelocityProfile(dt=dt, vx=vx, vy=vy, t_start=0.0)


# --------------------------------------------------------------------------
# Segmentation
# --------------------------------------------------------------------------

def _local_maxima(speed: np.ndarray) -> list[int]:
    out = []
    for i in range(1, len(speed) - 1):
        if speed[i] >= speed[i - 1] and speed[i] > speed[i + 1]:
            out.append(i)
    return out


def segment_primitives(profile: VelocityProfile,
                       config: ExtractorConfig) -> list[tuple[int, int]]:
    """Half-open index intervals, one speed lobe each, covering the profile."""
    speed = profile.speed()
    n = len(speed)
    peak = float(speed.max(initial=0.0))
    if peak <= 0.0 or n < 3:
        return [(0, n)]

    floor = config.min_primitive_fraction * peak
    maxima = [i for i in _local_maxima(speed) if speed[i] >= floor]
    splits = []
    for a, b in zip(maxima, maxima[1:]):
        v = a + 1 + int(np.argmin(speed[a + 1:b]))
        if speed[v] < VALLEY_RATIO * speed[a] and speed[v] < VALLEY_RATIO * speed[b]:
            splits.append(v)

    bounds = [0] + splits + [n]
    intervals = [(bounds[i], bounds[i + 1]) for i in range(len(bounds) - 1)]

    # Merge lobes too weak to stand on their own into a neighbor.
    def lobe_peak(iv):
        return float(speed[iv[0]:iv[1]].max(initial=0.0))

    changed = True
    while changed and len(intervals) > 1:
        changed = False
        for i, iv in enumerate(intervals):
            if lobe_peak(iv) >= floor:
                continue
            if i == 0:
                j = 1
            elif i == len(intervals) - 1:
                j = i - 1
            else:
                # Prefer the neighbor with the softer shared valley.
                j = i - 1 if speed[iv[0]] >= speed[iv[1] - 1] else i + 1
            lo = min(intervals[i][0], intervals[j][0])
            hi = max(intervals[i][1], intervals[j][1])
            merged = intervals[:min(i, j)] + [(lo, hi)] + intervals[max(i, j) + 1:]
            intervals = merged
            changed = True
            break
    return intervals


# --------------------------------------------------------------------------
# Characteristic-point initialization
# --------------------------------------------------------------------------

def init_primitive(profile: VelocityProfile, start: int, end: int) -> LognormalPrimitive:
    """Seed one primitive from a speed lobe's peak and half-peak crossings.

    Raises SegmentClippedError when the lobe is cut off (no interior peak or
    missing half-peak crossing); the caller widens the segment and retries.
    """
    speed = profile.speed()[start:end]
    times = profile.times()[start:end]
    if len(speed) < 3:
        raise SegmentClippedError("segment too short")
    p = int(np.argmax(speed))
    if p == 0 or p == len(speed) - 1:
        raise SegmentClippedError("peak sits on the segment boundary")
    vp = float(speed[p])
    if vp <= 0:
        raise SegmentClippedError("segment carries no speed")
    half = 0.5 * vp

    def cross_left() -> float:
        for i in range(p - 1, -1, -1):
            if speed[i] <= half:
                f = (half - speed[i]) / (speed[i + 1] - speed[i])
                return float(times[i] + f * (times[i + 1] - times[i]))
        raise SegmentClippedError("missing left half-peak crossing")

    def cross_right() -> float:
        for i in range(p + 1, len(speed)):
            if speed[i] <= half:
                f = (speed[i - 1] - half) / (speed[i - 1] - speed[i])
                return float(times[i - 1] + f * (times[i] - times[i - 1]))
        raise SegmentClippedError("missing right half-peak crossing")

    tp = float(times[p])
    t1 = cross_left()
    t2 = cross_right()
    r1, r2 = tp - t1, t2 - tp
    if r1 <= 0 or r2 <= 0:
        raise SegmentClippedError("half-peak crossings collapsed onto the peak")

    if r2 > r1:
        # ln(r2/r1) equals sigma * sqrt(2 ln 2) for a lognormal lobe.
        sigma = math.log(r2 / r1) / _HALF_WIDTH
        sigma = min(max(sigma, SIGMA_INIT_RANGE[0]), SIGMA_INIT_RANGE[1])
        c = _HALF_WIDTH * sigma
        mu = sigma * sigma + math.log(r1 / (1.0 - math.exp(-c)))
    else:
        # Symmetric (or left-skewed) lobe: a narrow lognormal behaves like a
        # Gaussian of time-domain spread sigma * exp(mu).
        sigma = SIGMA_INIT_RANGE[0]
        width = (t2 - t1) / (2.0 * _HALF_WIDTH)
        mu = math.log(max(width / sigma, 1e-6))
    mu = min(max(mu, MU_INIT_RANGE[0]), MU_INIT_RANGE[1])
    t0 = tp - math.exp(mu - sigma * sigma)
    if t0 < 0.0:
        # Keep the modeled peak on the observed one; a misplaced peak is a
        # far worse seed than a slightly wrong width.
        t0 = 0.0
        mu = math.log(max(tp, 1e-3)) + sigma * sigma
        mu = min(max(mu, MU_INIT_RANGE[0]), MU_INIT_RANGE[1])

    segment = slice(start, end)
    vx = profile.vx[segment]
    vy = profile.vy[segment]
    seg_speed = np.hypot(vx, vy)
    area = float(np.trapezoid(seg_speed, dx=profile.dt))
    if area <= 0:
        raise SegmentClippedError("segment encloses no area")

    valid = seg_speed > max(0.05 * vp, 1e-12)
    if np.any(valid):
        angles = np.unwrap(np.arctan2(vy[valid], vx[valid]))
        theta_s, theta_e = float(angles[0]), float(angles[-1])
    else:
        theta_s = theta_e = 0.0
    return LognormalPrimitive(D=area, t0=t0, mu=mu, sigma=sigma,
                              theta_s=theta_s, theta_e=theta_e)


def _init_with_widening(profile: VelocityProfile, start: int, end: int,
                        retries: int = 4) -> LognormalPrimitive | None:
    n = len(profile.vx)
    for _ in range(retries + 1):
        try:
            return init_primitive(profile, start, end)
        except SegmentClippedError:
            pad = max((end - start) // 4, 2)
            new_start, new_end = max(start - pad, 0), min(end + pad, n)
            if (new_start, new_end) == (start, end):
                return None
            start, end = new_start, new_end
    return None


def _fallback_primitive(profile: VelocityProfile) -> LognormalPrimitive | None:
    """Crude single-lobe seed for profiles where characteristic points fail."""
    speed = profile.speed()
    peak = float(speed.max(initial=0.0))
    if peak <= 0:
        return None
    times = profile.times()
    duration = max(float(times[-1]), profile.dt)
    sigma = 0.3
    mu = min(max(math.log(duration / 2.0), MU_INIT_RANGE[0]), MU_INIT_RANGE[1])
    tp = float(times[int(np.argmax(speed))])
    t0 = max(tp - math.exp(mu - sigma * sigma), 0.0)
    area = float(np.trapezoid(speed, dx=profile.dt))
    valid = speed > 0.05 * peak
    angles = np.unwrap(np.arctan2(profile.vy[valid], profile.vx[valid]))
    return LognormalPrimitive(D=max(area, 1e-9), t0=t0, mu=mu, sigma=sigma,
                              theta_s=float(angles[0]), theta_e=float(angles[-1]))


# --------------------------------------------------------------------------
# Joint refinement
# --------------------------------------------------------------------------

def _pack(primitives: list[LognormalPrimitive]) -> np.ndarray:
    return np.array([[p.D, p.t0, p.mu, p.sigma, p.theta_s, p.theta_e]
                     for p in primitives], dtype=float).ravel()


def _unpack(x: np.ndarray) -> list[LognormalPrimitive]:
    out = []
    for D, t0, mu, sigma, ts, te in x.reshape(-1, 6):
        out.append(LognormalPrimitive(D=float(max(D, 1e-9)), t0=float(max(t0, 0.0)),
                                      mu=float(mu), sigma=float(max(sigma, 1e-6)),
                                      theta_s=float(ts), theta_e=float(te)))
    return out


def _model_velocity(x: np.ndarray, t: np.ndarray):
    vx = np.zeros_like(t)
    vy = np.zeros_like(t)
    for D, t0, mu, sigma, ts, te in x.reshape(-1, 6):
        tau = t - t0
        mask = tau > 1e-12
        if not np.any(mask):
            continue
        z = (np.log(tau[mask]) - mu) / sigma
        s = D / (sigma * _SQRT2PI * tau[mask]) * np.exp(-0.5 * z * z)
        phi = ts + 0.5 * (te - ts) * (1.0 + erf(z / math.sqrt(2.0)))
        vx[mask] += s * np.cos(phi)
        vy[mask] += s * np.sin(phi)
    return vx, vy


def _model_jacobian(x: np.ndarray, t: np.ndarray) -> np.ndarray:
    """Analytic Jacobian of the stacked (vx, vy) residual wrt all parameters."""
    n = len(t)
    params = x.reshape(-1, 6)
    jac = np.zeros((2 * n, params.size))
    for k, (D, t0, mu, sigma, ts, te) in enumerate(params):
        tau = t - t0
        mask = tau > 1e-12
        if not np.any(mask):
            continue
        tm = tau[mask]
        z = (np.log(tm) - mu) / sigma
        s = D / (sigma * _SQRT2PI * tm) * np.exp(-0.5 * np.minimum(z * z, 1400.0))
        cdf = 0.5 * (1.0 + erf(z / math.sqrt(2.0)))
        phi = ts + (te - ts) * cdf
        pdf = np.exp(-0.5 * np.minimum(z * z, 1400.0)) / _SQRT2PI
        cphi, sphi = np.cos(phi), np.sin(phi)

        ds = {
            0: s / max(D, 1e-300),                  # dD
            1: s * (1.0 + z / sigma) / tm,          # dt0
            2: s * z / sigma,                       # dmu
            3: s * (z * z - 1.0) / sigma,           # dsigma
        }
        dphi = {
            1: (te - ts) * pdf * (-1.0 / (sigma * tm)),  # dt0
            2: (te - ts) * pdf * (-1.0 / sigma),         # dmu
            3: (te - ts) * pdf * (-z / sigma),           # dsigma
            4: 1.0 - cdf,                                # dtheta_s
            5: cdf,                                      # dtheta_e
        }
        col = 6 * k
        rows_x = np.nonzero(mask)[0]
        rows_y = rows_x + n
        for j in range(6):
            dvx = ds.get(j, 0.0) * cphi + s * (-sphi) * dphi.get(j, 0.0)
            dvy = ds.get(j, 0.0) * sphi + s * cphi * dphi.get(j, 0.0)
            jac[rows_x, col + j] = dvx
            jac[rows_y, col + j] = dvy
    return jac


def _score_times(profile: VelocityProfile) -> np.ndarray:
    """Scoring grid: the observed span plus a tail margin.

    Model energy after the stroke end must count as residual, otherwise the
    fit can hide arbitrarily large lobes past the last observed sample.
    """
    n = len(profile.vx)
    extra = max(int(round(0.25 * n)), int(round(0.2 / profile.dt)))
    return profile.t_start + profile.dt * np.arange(n + extra)


def _profile_snr(x: np.ndarray, profile: VelocityProfile) -> float:
    t = _score_times(profile)
    vx, vy = _model_velocity(x, t)
    return snr(profile, VelocityProfile(profile.dt, vx, vy, profile.t_start))


def _refine(primitives: list[LognormalPrimitive], profile: VelocityProfile,
            config: ExtractorConfig,
            max_rounds: int | None = None) -> tuple[list[LognormalPrimitive], float, int]:
    # Fit on a 2x decimated grid: the profile is low-passed well below the
    # decimated Nyquist rate, and the trust-region solves scale with rows.
    # Acceptance SNR is still scored on the full grid.
    t_full = _score_times(profile)
    pad = len(t_full) - len(profile.vx)
    vx_ext = np.concatenate([profile.vx, np.zeros(pad)])
    vy_ext = np.concatenate([profile.vy, np.zeros(pad)])
    t = t_full[::2]
    obs = np.concatenate([vx_ext[::2], vy_ext[::2]])
    n_prims = len(primitives)

    # Soft amplitude regularizer: a plan whose total amplitude matches the
    # observed arc length costs ~1% of the data term, but mutually cancelling
    # large-amplitude pairs (invisible to the velocity residual, disastrous
    # under amplitude noise) become expensive.
    speed_obs = np.hypot(profile.vx, profile.vy)
    path_obs = float(np.trapezoid(speed_obs, dx=profile.dt))
    sse_obs = float(obs @ obs)
    amp_weight = math.sqrt(0.01 * sse_obs) / max(path_obs, 1e-9)

    # Much gentler junction regularizer: consecutive primitives whose
    # handover directions disagree (mod 2 pi) fit only through angular
    # interference, which parameter noise destroys. The weight is far below
    # the residual floor at the target SNR, so genuine corners keep their
    # right angles; it only breaks ties between interference-equivalent fits.
    junction_weight = math.sqrt(1e-4 * sse_obs)
    order = np.argsort([p.t0 for p in primitives], kind="stable")
    junctions = [(int(order[i]), int(order[i + 1])) for i in range(n_prims - 1)]

    def _junction_terms(x):
        params = x.reshape(-1, 6)
        gaps = np.array([params[b, 4] - params[a, 5] for a, b in junctions])
        return junction_weight * np.arctan2(np.sin(gaps), np.cos(gaps))

    def residual(x):
        vx, vy = _model_velocity(x, t)
        data = np.concatenate([vx, vy]) - obs
        return np.concatenate([data, amp_weight * x.reshape(-1, 6)[:, 0],
                               _junction_terms(x)])

    def jacobian(x):
        data = _model_jacobian(x, t)
        penalty = np.zeros((n_prims + len(junctions), data.shape[1]))
        for k in range(n_prims):
            penalty[k, 6 * k] = amp_weight
        for j, (a, b) in enumerate(junctions):
            penalty[n_prims + j, 6 * b + 4] = junction_weight
            penalty[n_prims + j, 6 * a + 5] = -junction_weight
        return np.vstack([data, penalty])

    x = _pack(primitives)
    d_total = float(sum(p.D for p in primitives))
    t_end = float(t[-1]) if len(t) else 1.0
    angle_slack = math.pi + 0.5
    lower, upper = [], []
    for p in primitives:
        lower += [1e-6, 0.0, MU_BOUNDS[0], SIGMA_BOUNDS[0],
                  p.theta_s - angle_slack, p.theta_e - angle_slack]
        upper += [max(20.0 * d_total, 10.0), t_end, MU_BOUNDS[1], SIGMA_BOUNDS[1],
                  p.theta_s + angle_slack, p.theta_e + angle_slack]
    lo = np.array(lower)
    hi = np.array(upper)
    x = np.clip(x, lo, hi)

    best_snr = _profile_snr(x, profile)
    iterations = 0
    if max_rounds is None:
        max_rounds = max(config.max_refine_iters // _ROUND_ITERS, 1)
    for _ in range(max_rounds):
        if best_snr >= config.snr_target_db or iterations >= config.max_refine_iters:
            break
        result = least_squares(residual, x, jac=jacobian, bounds=(lo, hi),
                               method="trf", max_nfev=_ROUND_ITERS,
                               xtol=1e-12, ftol=1e-12, gtol=1e-12)
        iterations += result.nfev
        new_snr = _profile_snr(result.x, profile)
        if new_snr > best_snr:  # monotone acceptance
            gain = new_snr - best_snr
            x, best_snr = result.x, new_snr
            if gain < 0.01:
                break
        else:
            break
    return _unpack(x), best_snr, iterations


# --------------------------------------------------------------------------
# Full extraction
# --------------------------------------------------------------------------

def _residual_profile(x: np.ndarray, profile: VelocityProfile) -> VelocityProfile:
    vx, vy = _model_velocity(x, profile.times())
    return VelocityProfile(profile.dt, profile.vx - vx, profile.vy - vy,
                           profile.t_start)


def _extract_stroke(profile: VelocityProfile, config: ExtractorConfig):
    speed = profile.speed()
    obs_peak = float(speed.max(initial=0.0))
    if obs_peak <= 0:
        raise DegenerateInputError("stroke velocity is identically zero")

    primitives: list[LognormalPrimitive] = []
    for start, end in segment_primitives(profile, config):
        prim = _init_with_widening(profile, start, end)
        if prim is not None:
            primitives.append(prim)
    if not primitives:
        fallback = _fallback_primitive(profile)
        if fallback is None:
            raise DegenerateInputError("no primitive could be seeded")
        primitives = [fallback]

    primitives, snr_db, iterations = _refine(primitives, profile, config)

    # Greedy residual pass: while the fit is short of the target, seed one
    # primitive on a leftover residual lobe (strongest first), quick-refit
    # as a filter, and on acceptance re-polish the whole set so the next
    # decision compares against a converged baseline. Past the halfway mark
    # an extra primitive must pay for itself with a large gain, which keeps
    # the primitive count parsimonious.
    halfway_db = 0.5 * (config.snr_accept_db + config.snr_target_db)
    for _ in range(_MAX_EXTRA_PRIMITIVES):
        if snr_db >= config.snr_target_db:
            break
        required_gain = _SNR_GAIN_ACCEPT_DB if snr_db < halfway_db else 4.0
        res_profile = _residual_profile(_pack(primitives), profile)
        res_speed = res_profile.speed()
        if float(res_speed.max(initial=0.0)) < config.min_primitive_fraction * obs_peak:
            break
        intervals = segment_primitives(res_profile, config)
        intervals.sort(key=lambda iv: -float(res_speed[iv[0]:iv[1]].max(initial=0.0)))
        accepted = False
        attempts = 4 if snr_db < halfway_db else 2
        for start, end in intervals[:attempts]:
            candidate = _init_with_widening(res_profile, start, end)
            if candidate is None:
                continue
            trial, trial_snr, extra = _refine(primitives + [candidate], profile,
                                              config, max_rounds=2)
            iterations += extra
            if trial_snr > snr_db + required_gain:
                trial, trial_snr, extra = _refine(trial, profile, config)
                iterations += extra
                if trial_snr > snr_db:
                    primitives, snr_db = trial, trial_snr
                    accepted = True
                break
        if not accepted:
            break

    # Prune primitives that no longer contribute visible speed.
    if len(primitives) > 1:
        kept = []
        for p in primitives:
            vx, vy = velocity_on_grid([p], profile.times())
            if float(np.hypot(vx, vy).max(initial=0.0)) >= \
                    config.min_primitive_fraction * obs_peak:
                kept.append(p)
        if kept and len(kept) < len(primitives):
            primitives, snr_db, extra = _refine(kept, profile, config)
            iterations += extra

    primitives.sort(key=lambda p: p.t0)
    return primitives, snr_db, iterations


def extract(gesture: Gesture, config: ExtractorConfig | None = None) -> ExtractionResult:
    """Fit an action plan to a gesture; raises QualityError below the SNR gate."""
    config = config or ExtractorConfig()
    require_valid(gesture)
    gesture_start_ms = min(p.t for p in gesture.points())

    profiles: list[VelocityProfile] = []
    stroke_plans: list[StrokePlan] = []
    snrs: list[float] = []
    weights: list[float] = []
    iterations = 0
    for stroke in gesture.strokes:
        profile = estimate_velocity(stroke, config)
        primitives, snr_db, iters = _extract_stroke(profile, config)
        iterations += iters
        first = stroke.points[0]
        stroke_plans.append(StrokePlan(
            primitives, origin=(first.x, first.y),
            pen_down_offset=(first.t - gesture_start_ms) / 1000.0,
            touch_id=stroke.touch_id))
        profiles.append(profile)
        snrs.append(snr_db)
        weights.append(max(profile.duration(), profile.dt))

    total = sum(weights)
    snr_db = sum(s * w for s, w in zip(snrs, weights)) / total
    if snr_db < config.snr_accept_db:
        raise QualityError(snr_db, config.snr_accept_db)
    return ExtractionResult(plan=ActionPlan(stroke_plans), snr_db=snr_db,
                            observed=tuple(profiles), iterations=iterations)


def gesture_snr(result: ExtractionResult) -> float:
    """Recompute the duration-weighted SNR of a result from its plan."""
    snrs = []
    weights = []
    for sp, profile in zip(result.plan.strokes, result.observed):
        t = _score_times(profile)
        vx, vy = velocity_on_grid(sp.primitives, t)
        rec = VelocityProfile(profile.dt, vx, vy, profile.t_start)
        snrs.append(snr(profile, rec))
        weights.append(max(profile.duration(), profile.dt))
    total = sum(weights)
    return sum(s * w for s, w in zip(snrs, weights)) / total
