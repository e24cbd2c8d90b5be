"""Stimulus-response car-following acceleration law with reaction delay.

The follower's acceleration responds to the relative speed of the leader,
scaled by a power of the follower's own speed and an inverse power of the
spacing, both taken one perception-reaction time in the past:

    a(t) = c * v(t)**m * dv(t - tau) / dx(t - tau)

where dv is leader speed minus follower speed (positive when the leader
pulls away) and dx is the space headway. Two evaluation modes are provided:
one-step prediction against observed states, and forward simulation that
integrates the follower's own predicted state against the observed leader.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from enum import Enum

import numpy as np

from .episodes import Episode, EpisodeFrames
from .errors import DomainError, StateUnavailableError
from .ingest import FRAME_DT

logger = logging.getLogger(__name__)

#: Frame-unit tolerance: queries this close to a sample use the sample value.
_GRID_EPS = 1e-6


@dataclass(frozen=True)
class GHRParams:
    """Model coefficients: gain c, speed exponent m, spacing exponent l,
    perception-reaction time tau (s)."""

    c: float
    m: float
    l: float
    tau: float

    def __post_init__(self):
        for name in ("c", "m", "l", "tau"):
            if not math.isfinite(getattr(self, name)):
                raise DomainError(f"GHR parameter {name} must be finite")
        if self.tau < 0:
            raise DomainError(f"tau must be >= 0, got {self.tau}")


class FitMode(Enum):
    ONE_STEP_PREDICTION = "one_step_prediction"
    FORWARD_SIMULATION = "forward_simulation"


class DelayInterp(Enum):
    LINEAR = "linear"
    NEAREST_FRAME = "nearest_frame"


@dataclass(frozen=True)
class SimConfig:
    dt: float = FRAME_DT
    mode: FitMode = FitMode.ONE_STEP_PREDICTION
    delay_interp: DelayInterp = DelayInterp.LINEAR
    min_speed_floor: float = 0.0

    def __post_init__(self):
        if not self.dt > 0:
            raise DomainError(f"dt must be > 0, got {self.dt}")


def ghr_acceleration(v_n: float, dv: float, dx: float, p: GHRParams) -> float:
    """Evaluate the acceleration law at a single state, with strict domain checks.

    Requires positive spacing and a nonnegative follower speed; a zero speed
    with a negative speed exponent is singular.
    """
    if dx <= 0:
        raise DomainError(f"spacing must be positive, got {dx}")
    if v_n < 0:
        raise DomainError(f"follower speed must be >= 0, got {v_n}")
    if v_n == 0 and p.m < 0:
        raise DomainError("zero speed with negative speed exponent is singular")
    a = p.c * v_n ** p.m * dv / dx ** p.l
    if not math.isfinite(a):
        raise DomainError(
            f"non-finite acceleration for v={v_n}, dv={dv}, dx={dx}, params={p}")
    return a


def _ghr_array(v: np.ndarray, dv: np.ndarray, dx: np.ndarray,
               p: GHRParams) -> np.ndarray:
    """Vectorized law without domain checks; non-finite values pass through
    and are penalized by the fitting layer."""
    with np.errstate(all="ignore"):
        return p.c * v ** p.m * dv / dx ** p.l


def _interp_series(values: np.ndarray, x: np.ndarray,
                   interp: DelayInterp) -> np.ndarray:
    """Sample ``values`` at fractional frame coordinates ``x`` (must be valid).

    Queries within _GRID_EPS of a sample return that sample exactly, so
    linear interpolation with an on-grid delay is bitwise identical to
    nearest-frame sampling.
    """
    n = len(values)
    xi = np.rint(x)
    near_idx = np.clip(xi.astype(np.int64), 0, n - 1)
    if interp == DelayInterp.NEAREST_FRAME:
        return values[near_idx]
    on_grid = np.abs(x - xi) < _GRID_EPS
    i0 = np.clip(np.floor(x).astype(np.int64), 0, max(n - 2, 0))
    w = x - i0
    i1 = np.minimum(i0 + 1, n - 1)
    out = values[i0] * (1.0 - w) + values[i1] * w
    return np.where(on_grid, values[near_idx], out)


def delayed_state(frames: EpisodeFrames, t: float, tau: float,
                  interp: DelayInterp = DelayInterp.LINEAR):
    """Relative speed and spacing at time t - tau.

    Linear mode interpolates between the two bracketing samples; nearest-frame
    mode rounds to the closest one. Raises StateUnavailableError when t - tau
    falls before the first frame (the warm-up window).
    """
    t0 = float(frames.t[0])
    x = (t - tau - t0) / FRAME_DT
    if x < -_GRID_EPS:
        raise StateUnavailableError(
            f"state at t-tau={t - tau:.3f}s precedes episode start {t0:.3f}s")
    if x > len(frames) - 1 + _GRID_EPS:
        raise DomainError(f"query t={t} beyond episode end")
    xq = np.asarray([max(x, 0.0)])
    dv_arr = frames.leader_speed - frames.follower_speed
    dv = float(_interp_series(dv_arr, xq, interp)[0])
    dx = float(_interp_series(frames.space_headway, xq, interp)[0])
    return dv, dx


@dataclass
class PredictionSeries:
    """Aligned time/acceleration arrays covering the post-warm-up frames."""

    t: np.ndarray
    a_pred: np.ndarray

    def __len__(self):
        return len(self.t)


def predict_accelerations(episode: Episode, p: GHRParams,
                          cfg: SimConfig = SimConfig()) -> PredictionSeries:
    """One-step prediction: the law evaluated on observed states frame by frame.

    Frames whose delayed state falls before the episode start produce no
    prediction; the output covers the trailing frames only. An episode no
    longer than tau yields an empty series.
    """
    fr = episode.frames
    n = len(fr)
    x = np.arange(n, dtype=np.float64) - p.tau / cfg.dt
    valid = x >= -_GRID_EPS
    if not valid.any():
        logger.debug("episode %s shorter than warm-up tau=%.2fs",
                     episode.episode_id, p.tau)
        return PredictionSeries(np.empty(0), np.empty(0))
    xq = np.maximum(x[valid], 0.0)
    interp = cfg.delay_interp
    dv = _interp_series(fr.leader_speed - fr.follower_speed, xq, interp)
    dx = _interp_series(fr.space_headway, xq, interp)
    a = _ghr_array(fr.follower_speed[valid], dv, dx, p)
    return PredictionSeries(t=fr.t[valid].copy(), a_pred=a)


@dataclass
class SimulatedTrajectory:
    """Forward-simulated follower state; truncated marks a collision-guard stop."""

    t: np.ndarray
    y: np.ndarray
    v: np.ndarray
    a: np.ndarray
    truncated: bool = False

    def __len__(self):
        return len(self.t)


#: Simulated spacing at or below this aborts the integration.
COLLISION_GUARD_M = 0.1


def simulate_follower(episode: Episode, p: GHRParams,
                      cfg: SimConfig = SimConfig()) -> SimulatedTrajectory:
    """Integrate the follower forward against the observed leader trajectory.

    The follower state over the warm-up window [start, start+tau] is copied
    from observation; afterwards explicit first-order integration at cfg.dt
    advances speed (clamped at cfg.min_speed_floor) and position, with the
    law evaluated on the simulated follower history. The integration aborts
    with a truncation flag if the simulated spacing drops to 0.1 m.
    """
    fr = episode.frames
    n = len(fr)
    x = np.arange(n, dtype=np.float64) - p.tau / cfg.dt
    valid = x >= -_GRID_EPS
    sim_v = fr.follower_speed.astype(np.float64).copy()
    sim_y = fr.follower_y.astype(np.float64).copy()
    sim_a = fr.follower_accel.astype(np.float64).copy()
    if not valid.any():
        logger.debug("episode %s no longer than warm-up; returning observed state",
                     episode.episode_id)
        return SimulatedTrajectory(fr.t.copy(), sim_y, sim_v, sim_a)

    dv_arr = fr.leader_speed - sim_v
    dx_arr = fr.leader_y - sim_y
    i0 = int(np.argmax(valid))
    interp = cfg.delay_interp
    for i in range(i0, n):
        if fr.leader_y[i] - sim_y[i] <= COLLISION_GUARD_M:
            return SimulatedTrajectory(fr.t[:i].copy(), sim_y[:i], sim_v[:i],
                                       sim_a[:i], truncated=True)
        dv_arr[i] = fr.leader_speed[i] - sim_v[i]
        dx_arr[i] = fr.leader_y[i] - sim_y[i]
        xq = np.asarray([max(float(x[i]), 0.0)])
        dv = _interp_series(dv_arr, xq, interp)[0]
        dx = _interp_series(dx_arr, xq, interp)[0]
        a = _ghr_array(sim_v[i:i + 1], np.asarray([dv]), np.asarray([dx]), p)[0]
        if not np.isfinite(a):
            raise DomainError(
                f"non-finite acceleration at t={fr.t[i]:.1f}s in episode "
                f"{episode.episode_id} (v={sim_v[i]}, dv={dv}, dx={dx})")
        sim_a[i] = a
        if i + 1 < n:
            sim_v[i + 1] = max(sim_v[i] + a * cfg.dt, cfg.min_speed_floor)
            sim_y[i + 1] = sim_y[i] + sim_v[i] * cfg.dt
    return SimulatedTrajectory(fr.t.copy(), sim_y, sim_v, sim_a)
