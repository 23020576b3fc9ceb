"""Lognormal velocity model: primitives, stroke plans, and reconstruction.

A gesture stroke is modeled as a temporal overlap of velocity primitives.
Each primitive contributes a lognormal speed profile along a direction that
sweeps from a start angle to an end angle; the stroke velocity is the vector
sum of all primitives, and the trajectory is its time integral.
"""

from __future__ import annotations

import json
import math
import os
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np
from scipy.special import erf

from .errors import CorpusFormatError, DegenerateInputError
from .gestures import Gesture, Stroke, TouchPoint

DEFAULT_DT = 0.005  # 200 Hz reconstruction grid
SNR_CAP_DB = 120.0
RESIDUAL_SPEED_FLOOR = 1e-6  # fraction of peak speed treated as "stopped"
_SQRT2PI = math.sqrt(2.0 * math.pi)


@dataclass(frozen=True)
class LognormalPrimitive:
    """One velocity lobe: amplitude D (px), activation time t0 (s, stroke-local),
    log-time scale mu, log-response width sigma, and start/end angles (rad).

    Angles are not wrapped; theta_e - theta_s beyond 2*pi encodes loops.
    """

    D: float
    t0: float
    mu: float
    sigma: float
    theta_s: float
    theta_e: float

    def __post_init__(self):
        if not (self.D > 0):
            raise ValueError(f"D must be positive, got {self.D}")
        if not (self.sigma > 0):
            raise ValueError(f"sigma must be positive, got {self.sigma}")
        if not (math.isfinite(self.t0) and self.t0 >= 0):
            raise ValueError(f"t0 must be finite and >= 0, got {self.t0}")
        for name in ("mu", "theta_s", "theta_e"):
            if not math.isfinite(getattr(self, name)):
                raise ValueError(f"{name} must be finite")

    def peak_time(self) -> float:
        """Time of maximum speed: t0 + exp(mu - sigma^2)."""
        return self.t0 + math.exp(self.mu - self.sigma * self.sigma)

    def support_end(self) -> float:
        """Time past which the remaining speed is negligible."""
        return self.t0 + math.exp(self.mu + 5.0 * self.sigma)


@dataclass(frozen=True)
class StrokePlan:
    """Primitives of one stroke plus its pen-down position and timing."""

    primitives: tuple[LognormalPrimitive, ...]
    origin: tuple[float, float]
    pen_down_offset: float = 0.0  # seconds from gesture start
    touch_id: int = 0

    def __init__(self, primitives: Iterable[LognormalPrimitive],
                 origin: tuple[float, float], pen_down_offset: float = 0.0,
                 touch_id: int = 0):
        primitives = tuple(primitives)
        if not primitives:
            raise ValueError("stroke plan needs at least one primitive")
        t0s = [p.t0 for p in primitives]
        if any(b < a for a, b in zip(t0s, t0s[1:])):
            raise ValueError("primitive t0 values must be non-decreasing")
        if pen_down_offset < 0:
            raise ValueError("pen_down_offset must be >= 0")
        object.__setattr__(self, "primitives", primitives)
        object.__setattr__(self, "origin", (float(origin[0]), float(origin[1])))
        object.__setattr__(self, "pen_down_offset", float(pen_down_offset))
        object.__setattr__(self, "touch_id", int(touch_id))


@dataclass(frozen=True)
class ActionPlan:
    """The full generative description of one gesture."""

    strokes: tuple[StrokePlan, ...]

    def __init__(self, strokes: Iterable[StrokePlan]):
        strokes = tuple(strokes)
        if not strokes:
            raise ValueError("action plan needs at least one stroke plan")
        object.__setattr__(self, "strokes", strokes)

    def primitive_count(self) -> int:
        return sum(len(s.primitives) for s in self.strokes)


@dataclass(frozen=True)
class VelocityProfile:
    """Uniformly sampled planar velocity. Arrays are read-only."""

    dt: float
    vx: np.ndarray
    vy: np.ndarray
    t_start: float = 0.0

    def __init__(self, dt: float, vx: np.ndarray, vy: np.ndarray, t_start: float = 0.0):
        if not dt > 0:
            raise ValueError("dt must be positive")
        vx = np.asarray(vx, dtype=float)
        vy = np.asarray(vy, dtype=float)
        if vx.shape != vy.shape or vx.ndim != 1:
            raise ValueError("vx and vy must be 1-D arrays of equal length")
        if not (np.all(np.isfinite(vx)) and np.all(np.isfinite(vy))):
            raise ValueError("velocity samples must be finite")
        vx.flags.writeable = False
        vy.flags.writeable = False
        object.__setattr__(self, "dt", float(dt))
        object.__setattr__(self, "vx", vx)
        object.__setattr__(self, "vy", vy)
        object.__setattr__(self, "t_start", float(t_start))

    def __len__(self) -> int:
        return len(self.vx)

    @property
    def samples(self) -> list[tuple[float, float]]:
        return list(zip(self.vx.tolist(), self.vy.tolist()))

    def times(self) -> np.ndarray:
        return self.t_start + self.dt * np.arange(len(self.vx))

    def speed(self) -> np.ndarray:
        return np.hypot(self.vx, self.vy)

    def duration(self) -> float:
        return self.dt * max(len(self.vx) - 1, 0)


# --------------------------------------------------------------------------
# Primitive profiles
# --------------------------------------------------------------------------

def primitive_speed(p: LognormalPrimitive, t):
    """Lognormal speed magnitude in px/s; zero for t <= t0."""
    t = np.asarray(t, dtype=float)
    scalar = t.ndim == 0
    t = np.atleast_1d(t)
    out = np.zeros_like(t)
    dt = t - p.t0
    mask = dt > 0
    if np.any(mask):
        log_dt = np.log(dt[mask])
        z = (log_dt - p.mu) / p.sigma
        out[mask] = p.D / (p.sigma * _SQRT2PI * dt[mask]) * np.exp(-0.5 * z * z)
    return float(out[0]) if scalar else out


def primitive_angle(p: LognormalPrimitive, t):
    """Direction of travel in radians; sweeps theta_s -> theta_e as t grows."""
    t = np.asarray(t, dtype=float)
    scalar = t.ndim == 0
    t = np.atleast_1d(t)
    if np.any(t <= p.t0):
        raise ValueError("angle is only defined for t > t0")
    z = (np.log(t - p.t0) - p.mu) / (p.sigma * math.sqrt(2.0))
    angle = p.theta_s + 0.5 * (p.theta_e - p.theta_s) * (1.0 + erf(z))
    return float(angle[0]) if scalar else angle


def velocity_on_grid(primitives: Sequence[LognormalPrimitive], t: np.ndarray):
    """Vector sum of primitive velocities sampled at times `t` (seconds).

    Returns (vx, vy) arrays. This is the workhorse shared by profile
    generation, trajectory reconstruction, and fitting.
    """
    t = np.asarray(t, dtype=float)
    vx = np.zeros_like(t)
    vy = np.zeros_like(t)
    for p in primitives:
        dt = t - p.t0
        mask = dt > 0
        if not np.any(mask):
            continue
        log_dt = np.log(dt[mask])
        z = (log_dt - p.mu) / p.sigma
        speed = p.D / (p.sigma * _SQRT2PI * dt[mask]) * np.exp(-0.5 * z * z)
        angle = p.theta_s + 0.5 * (p.theta_e - p.theta_s) * (1.0 + erf(z / math.sqrt(2.0)))
        vx[mask] += speed * np.cos(angle)
        vy[mask] += speed * np.sin(angle)
    return vx, vy


def plan_velocity(plan: StrokePlan, dt: float, horizon: float) -> VelocityProfile:
    """Sample the stroke's summed velocity on a uniform grid starting at 0.

    The horizon is extended until the terminal speed falls below
    RESIDUAL_SPEED_FLOOR of the peak, so no primitive activity is cut off.
    """
    if dt <= 0:
        raise ValueError("dt must be positive")
    horizon = max(horizon, dt)
    for _ in range(64):
        n = int(math.floor(horizon / dt + 1e-9)) + 1
        t = dt * np.arange(n)
        vx, vy = velocity_on_grid(plan.primitives, t)
        speed = np.hypot(vx, vy)
        peak = speed.max(initial=0.0)
        if peak <= 0.0 or speed[-1] < RESIDUAL_SPEED_FLOOR * peak or horizon > 120.0:
            break
        horizon *= 1.3
    return VelocityProfile(dt=dt, vx=vx, vy=vy, t_start=0.0)


def _analytic_horizon(plan: StrokePlan) -> float:
    return max(p.support_end() for p in plan.primitives)


def reconstruct_trajectory(plan: ActionPlan, dt: float = DEFAULT_DT) -> Gesture:
    """Integrate each stroke plan's velocity into a timestamped point path."""
    if dt <= 0:
        raise ValueError("dt must be positive")
    strokes = []
    for sp in plan.strokes:
        profile = plan_velocity(sp, dt, _analytic_horizon(sp))
        vx, vy = profile.vx, profile.vy
        x = sp.origin[0] + np.concatenate(([0.0], np.cumsum(0.5 * (vx[1:] + vx[:-1]) * dt)))
        y = sp.origin[1] + np.concatenate(([0.0], np.cumsum(0.5 * (vy[1:] + vy[:-1]) * dt)))
        speed = profile.speed()
        peak = speed.max(initial=0.0)
        if peak > 0:
            active = np.nonzero(speed >= RESIDUAL_SPEED_FLOOR * peak)[0]
            last = int(active[-1]) if len(active) else 1
        else:
            last = 1
        end = max(last + 2, 2)  # keep one quiet trailing sample as the rest point
        points = [
            TouchPoint(float(x[k]), float(y[k]),
                       (sp.pen_down_offset + k * dt) * 1000.0, sp.touch_id)
            for k in range(min(end, len(x)))
        ]
        strokes.append(Stroke(points))
    return Gesture(strokes)


# --------------------------------------------------------------------------
# Reconstruction quality
# --------------------------------------------------------------------------

def snr(observed: VelocityProfile, reconstructed: VelocityProfile) -> float:
    """Signal-to-noise ratio in dB between two aligned velocity profiles.

    Energies integrate both components jointly; profiles must share dt and
    t_start (resample first otherwise). The shorter profile is zero-padded.
    """
    if abs(observed.dt - reconstructed.dt) > 1e-9 * observed.dt:
        raise ValueError("profiles must share the sampling step")
    if abs(observed.t_start - reconstructed.t_start) > 1e-9:
        raise ValueError("profiles must share the start time")
    n = max(len(observed), len(reconstructed))

    def padded(profile: VelocityProfile):
        pad = n - len(profile)
        vx = np.pad(profile.vx, (0, pad)) if pad else profile.vx
        vy = np.pad(profile.vy, (0, pad)) if pad else profile.vy
        return vx, vy

    ovx, ovy = padded(observed)
    rvx, rvy = padded(reconstructed)
    dt = observed.dt
    signal_energy = np.trapezoid(ovx * ovx + ovy * ovy, dx=dt)
    residual_energy = np.trapezoid((ovx - rvx) ** 2 + (ovy - rvy) ** 2, dx=dt)
    if signal_energy <= 0:
        raise DegenerateInputError("observed profile carries no energy")
    if residual_energy < 1e-12 * signal_energy:
        return SNR_CAP_DB
    return min(10.0 * math.log10(signal_energy / residual_energy), SNR_CAP_DB)


# --------------------------------------------------------------------------
# Serialization
# --------------------------------------------------------------------------

def plan_to_obj(plan: ActionPlan) -> dict:
    return {
        "strokes": [
            {
                "origin": [sp.origin[0], sp.origin[1]],
                "penDownOffset": sp.pen_down_offset,
                "touchId": sp.touch_id,
                "primitives": [
                    {"D": p.D, "t0": p.t0, "mu": p.mu, "sigma": p.sigma,
                     "thetaS": p.theta_s, "thetaE": p.theta_e}
                    for p in sp.primitives
                ],
            }
            for sp in plan.strokes
        ]
    }


def plan_from_obj(obj: object, context: str = "plan") -> ActionPlan:
    if not isinstance(obj, dict) or "strokes" not in obj:
        raise CorpusFormatError(f"{context}: expected an object with a 'strokes' key")
    stroke_plans = []
    for si, raw in enumerate(obj["strokes"]):
        try:
            primitives = [
                LognormalPrimitive(D=float(rp["D"]), t0=float(rp["t0"]),
                                   mu=float(rp["mu"]), sigma=float(rp["sigma"]),
                                   theta_s=float(rp["thetaS"]), theta_e=float(rp["thetaE"]))
                for rp in raw["primitives"]
            ]
            stroke_plans.append(StrokePlan(
                primitives, origin=(float(raw["origin"][0]), float(raw["origin"][1])),
                pen_down_offset=float(raw.get("penDownOffset", 0.0)),
                touch_id=int(raw.get("touchId", 0))))
        except (KeyError, TypeError, ValueError) as exc:
            raise CorpusFormatError(f"{context}: stroke plan {si}: {exc}") from None
    return ActionPlan(stroke_plans)


def save_plan(plan: ActionPlan, path: str | os.PathLike) -> None:
    Path(path).write_text(json.dumps(plan_to_obj(plan), indent=1) + "\n")


def load_plan(path: str | os.PathLike) -> ActionPlan:
    path = Path(path)
    try:
        obj = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise CorpusFormatError(f"{path}: line {exc.lineno}: {exc.msg}") from None
    return plan_from_obj(obj, context=str(path))
