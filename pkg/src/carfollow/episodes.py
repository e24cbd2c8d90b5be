"""Detection of car-following episodes, lane changes, and merge-boundary splits.

An episode is a maximal run of consecutive follower frames on which the same
leader is directly ahead in the same lane. Runs shorter than the configured
minimum duration are discarded, as are episodes whose mean gap falls outside
the configured band; both rules follow the statistical filters applied to the
10 Hz freeway data this toolkit targets.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from .classify import (ClassifierThresholds, DEFAULT_THRESHOLDS, PairClass,
                       VehicleClass, classify_by_length, pair_class)
from .errors import InternalError
from .ingest import FRAME_DT, Dataset, VehicleTrack

logger = logging.getLogger(__name__)


class EndReason(Enum):
    FOLLOWER_LANE_CHANGE = "follower_lane_change"
    LEADER_LANE_CHANGE = "leader_lane_change"
    LEADER_CHANGED = "leader_changed"
    SEGMENT_EXIT = "segment_exit"
    DATA_END = "data_end"


@dataclass(frozen=True)
class EpisodeFrame:
    """Scalar view of one episode sample."""

    t: float
    follower_y: float
    follower_speed: float
    follower_accel: float
    leader_y: float
    leader_speed: float
    space_headway: float
    gap: float


@dataclass
class EpisodeFrames:
    """Columnar per-frame state of one episode (all SI units).

    ``space_headway`` is the leader front-reference spacing consistent with
    the input data's headway convention; ``gap`` subtracts the leader length
    under the front-to-front convention.
    """

    t: np.ndarray
    follower_y: np.ndarray
    follower_speed: np.ndarray
    follower_accel: np.ndarray
    leader_y: np.ndarray
    leader_speed: np.ndarray
    space_headway: np.ndarray
    gap: np.ndarray

    def __len__(self):
        return len(self.t)

    def frame(self, i: int) -> EpisodeFrame:
        return EpisodeFrame(*(float(getattr(self, f)[i]) for f in (
            "t", "follower_y", "follower_speed", "follower_accel",
            "leader_y", "leader_speed", "space_headway", "gap")))

    def slice(self, a: int, b: int) -> "EpisodeFrames":
        return EpisodeFrames(*(getattr(self, f)[a:b] for f in (
            "t", "follower_y", "follower_speed", "follower_accel",
            "leader_y", "leader_speed", "space_headway", "gap")))


@dataclass
class Episode:
    """One contiguous leader/follower interaction with summary statistics."""

    episode_id: str
    follower_id: int
    leader_id: int
    follower_class: VehicleClass
    leader_class: VehicleClass
    pair: PairClass
    frames: EpisodeFrames
    end_reason: EndReason
    start_frame: int
    leader_length: float
    avg_gap_m: float
    avg_speed_mps: float
    late_entry: bool = False
    segment_label: str | None = None
    negative_gap_frames: int = 0

    @property
    def duration_s(self) -> float:
        return float(self.frames.t[-1] - self.frames.t[0])

    @property
    def n_frames(self) -> int:
        return len(self.frames)

    @property
    def start_t(self) -> float:
        return float(self.frames.t[0])

    @property
    def end_t(self) -> float:
        return float(self.frames.t[-1])


@dataclass(frozen=True)
class LaneChangeEvent:
    """A lane_id transition with windowed mean speeds on each side."""

    vehicle_id: int
    t: float
    from_lane: int
    to_lane: int
    speed_before: float
    speed_after: float


@dataclass(frozen=True)
class ExtractionConfig:
    min_duration_s: float = 25.0
    gap_min_m: float = 4.5
    gap_max_m: float = 76.0
    entry_grace_frames: int = 10
    merge_boundary_y_m: float = 120.0
    lane_change_window_s: float = 5.0
    min_segment_duration_s: float = 5.0
    leader_source: str = "auto"  # auto | column | geometric
    headway_convention: str = "front_to_front"  # or front_to_rear
    include_late_entries: bool = False
    exit_margin_m: float = 10.0
    thresholds: ClassifierThresholds = DEFAULT_THRESHOLDS


@dataclass
class ExtractionDiagnostics:
    leader_disagreements: int = 0
    skipped_unresolved_frames: int = 0
    negative_gap_frames: int = 0
    runs_too_short: int = 0
    runs_gap_filtered: int = 0
    late_entries_excluded: int = 0


def compute_gap(space_headway: float, leader_length: float) -> float:
    """Following gap: space headway minus the lead vehicle's length.

    A negative result signals overlapping trajectories (a data error); the
    caller flags the frame but rejection happens only on the episode's mean.
    """
    if space_headway < 0:
        raise ValueError(f"space headway must be >= 0, got {space_headway}")
    if not leader_length > 0:
        raise ValueError(f"leader length must be > 0, got {leader_length}")
    return space_headway - leader_length


def derive_geometric_leaders(dataset: Dataset) -> dict[int, np.ndarray]:
    """Nearest strictly-downstream same-lane vehicle per frame, per track.

    Returns one array per vehicle aligned with its track frames; 0 marks
    frames with no vehicle ahead in the lane.
    """
    vids = sorted(dataset.tracks)
    counts = np.asarray([len(dataset.tracks[v]) for v in vids], dtype=np.int64)
    vid_flat = np.repeat(np.asarray(vids, dtype=np.int64), counts)
    frames = np.concatenate([dataset.tracks[v].frames for v in vids])
    lanes = np.concatenate([dataset.tracks[v].lane_id for v in vids])
    ys = np.concatenate([dataset.tracks[v].y for v in vids])

    order = np.lexsort((ys, lanes, frames))
    sf, sl, sy, sv = frames[order], lanes[order], ys[order], vid_flat[order]
    lead_sorted = np.zeros(len(sv), dtype=np.int64)
    same = (sf[1:] == sf[:-1]) & (sl[1:] == sl[:-1]) & (sy[1:] > sy[:-1])
    lead_sorted[:-1][same] = sv[1:][same]

    lead_flat = np.empty_like(lead_sorted)
    lead_flat[order] = lead_sorted
    offsets = np.r_[0, np.cumsum(counts)]
    return {v: lead_flat[offsets[i]:offsets[i + 1]] for i, v in enumerate(vids)}


def _true_runs(mask: np.ndarray):
    """Maximal runs of True as (start, stop) index pairs."""
    if not mask.any():
        return []
    padded = np.r_[False, mask, False]
    edges = np.flatnonzero(padded[1:] != padded[:-1])
    return list(zip(edges[::2], edges[1::2]))


def _effective_leaders(track: VehicleTrack, geometric, cfg, diag) -> np.ndarray:
    if cfg.leader_source == "column":
        return track.preceding_id
    geo = geometric[track.vehicle_id]
    if cfg.leader_source == "auto":
        col = track.preceding_id
        diag.leader_disagreements += int(np.count_nonzero((col > 0) & (col != geo)))
    return geo


def _end_reason(fol, lead, leaders, b, dataset, cfg) -> EndReason:
    """Classify why a run ended at follower index ``b`` (first bad frame)."""
    n = len(fol)
    if b >= n:
        if fol.y[n - 1] >= dataset.segment_length_m - cfg.exit_margin_m:
            return EndReason.SEGMENT_EXIT
        return EndReason.DATA_END
    if fol.frames[b] != fol.frames[b - 1] + 1:
        return EndReason.DATA_END  # hole in the follower's own data
    if fol.lane_id[b] != fol.lane_id[b - 1]:
        return EndReason.FOLLOWER_LANE_CHANGE
    # Follower kept its lane; look at what the old leader did at frame b.
    j = int(np.searchsorted(lead.frames, fol.frames[b]))
    if j < len(lead.frames) and lead.frames[j] == fol.frames[b]:
        if lead.lane_id[j] != fol.lane_id[b]:
            return EndReason.LEADER_LANE_CHANGE
    return EndReason.LEADER_CHANGED


def _build_episode(fol, lead, a, b, lead_idx, fol_class, lead_class, end_reason,
                   late_entry, cfg, diag) -> Episode | None:
    t = fol.frames[a:b] * FRAME_DT
    leader_y = lead.y[lead_idx]
    leader_speed = lead.speed[lead_idx]
    dx = leader_y - fol.y[a:b]
    data_dx = fol.space_headway[a:b]
    usable = (~np.isnan(data_dx)) & (fol.preceding_id[a:b] == lead.vehicle_id) \
        & (data_dx > 0)
    if usable.any():
        dx = np.where(usable, data_dx, dx)
    if cfg.headway_convention == "front_to_front":
        gap = dx - lead.length
    else:
        gap = dx.copy()
    n_negative = int(np.count_nonzero(gap < 0))
    diag.negative_gap_frames += n_negative

    avg_gap = float(np.mean(gap))
    if not cfg.gap_min_m <= avg_gap <= cfg.gap_max_m:
        diag.runs_gap_filtered += 1
        return None
    frames = EpisodeFrames(
        t=t,
        follower_y=fol.y[a:b].copy(),
        follower_speed=fol.speed[a:b].copy(),
        follower_accel=fol.accel[a:b].copy(),
        leader_y=leader_y.copy(),
        leader_speed=leader_speed.copy(),
        space_headway=dx,
        gap=gap,
    )
    return Episode(
        episode_id=f"{fol.vehicle_id}-{lead.vehicle_id}-{int(fol.frames[a])}",
        follower_id=fol.vehicle_id,
        leader_id=lead.vehicle_id,
        follower_class=fol_class,
        leader_class=lead_class,
        pair=pair_class(fol_class, lead_class),
        frames=frames,
        end_reason=end_reason,
        start_frame=int(fol.frames[a]),
        leader_length=lead.length,
        avg_gap_m=avg_gap,
        avg_speed_mps=float(np.mean(fol.speed[a:b])),
        late_entry=late_entry,
        negative_gap_frames=n_negative,
    )


def extract_episodes(dataset: Dataset, cfg: ExtractionConfig = ExtractionConfig(),
                     diag: ExtractionDiagnostics | None = None) -> list:
    """Extract all car-following episodes from a validated dataset.

    Results are ordered by (follower_id, start frame) and therefore
    deterministic. Pass an ExtractionDiagnostics to collect filter and
    skip counters.
    """
    if not dataset.validated:
        raise ValueError("dataset must pass validate_and_derive before extraction")
    diag = diag if diag is not None else ExtractionDiagnostics()
    geometric = None
    if cfg.leader_source in ("auto", "geometric"):
        geometric = derive_geometric_leaders(dataset)
    elif cfg.leader_source != "column":
        raise ValueError(f"unknown leader_source {cfg.leader_source!r}")

    min_frames = int(round(cfg.min_duration_s / FRAME_DT)) + 1
    class_cache = {vid: classify_by_length(tr.length, cfg.thresholds)
                   for vid, tr in dataset.tracks.items()}

    episodes = []
    seen = set()
    for vid in sorted(dataset.tracks):
        fol = dataset.tracks[vid]
        n = len(fol)
        leaders = _effective_leaders(fol, geometric, cfg, diag)

        breaks = np.flatnonzero(
            (leaders[1:] != leaders[:-1]) | (np.diff(fol.frames) != 1)) + 1
        starts = np.r_[0, breaks]
        ends = np.r_[breaks, n]
        for s, e in zip(starts, ends):
            lid = int(leaders[s])
            if lid == 0:
                continue
            lead = dataset.tracks.get(lid)
            if lead is None:
                diag.skipped_unresolved_frames += int(e - s)
                continue
            idx = np.searchsorted(lead.frames, fol.frames[s:e])
            idx_c = np.minimum(idx, len(lead.frames) - 1)
            ok = (idx < len(lead.frames)) \
                & (lead.frames[idx_c] == fol.frames[s:e]) \
                & (lead.lane_id[idx_c] == fol.lane_id[s:e]) \
                & (lead.y[idx_c] > fol.y[s:e])
            for ra, rb in _true_runs(ok):
                a, b = int(s + ra), int(s + rb)
                if b - a < min_frames:
                    diag.runs_too_short += 1
                    continue
                late = a > cfg.entry_grace_frames
                if late and not cfg.include_late_entries:
                    diag.late_entries_excluded += 1
                    continue
                reason = _end_reason(fol, lead, leaders, b, dataset, cfg)
                ep = _build_episode(fol, lead, a, b, idx_c[ra:rb],
                                    class_cache[vid], class_cache[lid],
                                    reason, late, cfg, diag)
                if ep is None:
                    continue
                key = (ep.follower_id, ep.leader_id, ep.start_frame)
                if key in seen:
                    raise InternalError(f"duplicate episode {key}")
                seen.add(key)
                episodes.append(ep)
    return episodes


def detect_lane_changes(track: VehicleTrack, window_s: float = 5.0) -> list:
    """One event per lane_id transition with mean speeds over each side.

    The event time is the first frame observed in the new lane; the speed
    windows cover min(window_s, available data) of time on either side.
    """
    changes = np.flatnonzero(np.diff(track.lane_id) != 0) + 1
    if len(changes) == 0:
        return []
    t = track.t
    events = []
    for i in changes:
        t_evt = float(t[i])
        lo = int(np.searchsorted(t, t_evt - window_s - 1e-9, side="left"))
        hi = int(np.searchsorted(t, t_evt + window_s - 1e-9, side="right"))
        events.append(LaneChangeEvent(
            vehicle_id=track.vehicle_id,
            t=t_evt,
            from_lane=int(track.lane_id[i - 1]),
            to_lane=int(track.lane_id[i]),
            speed_before=float(np.mean(track.speed[lo:i])),
            speed_after=float(np.mean(track.speed[i:hi])),
        ))
    return events


def _rebuild_part(episode: Episode, a: int, b: int, label: str,
                  min_duration_s: float) -> Episode | None:
    part = episode.frames.slice(a, b)
    if len(part) < 2 or float(part.t[-1] - part.t[0]) < min_duration_s - 1e-9:
        return None
    return Episode(
        episode_id=f"{episode.episode_id}:{label}",
        follower_id=episode.follower_id,
        leader_id=episode.leader_id,
        follower_class=episode.follower_class,
        leader_class=episode.leader_class,
        pair=episode.pair,
        frames=part,
        end_reason=episode.end_reason,
        start_frame=episode.start_frame + a,
        leader_length=episode.leader_length,
        avg_gap_m=float(np.mean(part.gap)),
        avg_speed_mps=float(np.mean(part.follower_speed)),
        late_entry=episode.late_entry,
        segment_label=f"{label}_merge",
        negative_gap_frames=int(np.count_nonzero(part.gap < 0)),
    )


def segment_by_position(episode: Episode, boundary_y: float = 120.0,
                        min_segment_duration_s: float = 5.0):
    """Split an episode at the first frame at or beyond ``boundary_y``.

    Returns (before, after); a side shorter than ``min_segment_duration_s``
    is returned as None. Both parts recompute their gap and speed averages;
    their frame sets are disjoint and union to the original episode.
    """
    beyond = episode.frames.follower_y >= boundary_y
    if not beyond.any():
        return _rebuild_part(episode, 0, len(episode.frames), "before",
                             min_segment_duration_s), None
    k = int(np.argmax(beyond))
    before = _rebuild_part(episode, 0, k, "before", min_segment_duration_s)
    after = _rebuild_part(episode, k, len(episode.frames), "after",
                          min_segment_duration_s)
    return before, after
