"""Synthetic datasets, episodes, and cluster libraries for self-tests.

Everything here is deterministic given a seed. The shipped placeholder
cluster library is generated by :func:`synthetic_cluster_library`; it lets
the full pipeline run end to end but its parameter values are synthetic and
carry no behavioral meaning.
"""

from __future__ import annotations

import numpy as np
import pandas as pd

from .classify import VehicleClass, classify_by_length, pair_class
from .episodes import EndReason, Episode, EpisodeFrames
from .fitting import ClusterDefinition, ClusterLibrary
from .ghr import GHRParams, SimConfig, simulate_follower
from .ingest import FRAME_DT, Dataset, VehicleTrack, central_difference


def make_track(vehicle_id, length, lane, speeds, y0, start_frame=0,
               preceding=0, width=1.8, space_headway=None) -> VehicleTrack:
    """Build a consistent track: y integrates the given per-frame speeds."""
    speeds = np.asarray(speeds, dtype=np.float64)
    n = len(speeds)
    frames = np.arange(start_frame, start_frame + n, dtype=np.int64)
    y = np.empty(n)
    y[0] = y0
    np.cumsum(speeds[:-1] * FRAME_DT, out=y[1:])
    y[1:] += y0
    lane_arr = np.full(n, lane, dtype=np.int64) if np.isscalar(lane) \
        else np.asarray(lane, dtype=np.int64)
    prec_arr = np.full(n, preceding, dtype=np.int64) if np.isscalar(preceding) \
        else np.asarray(preceding, dtype=np.int64)
    sh = (np.full(n, np.nan) if space_headway is None
          else np.asarray(space_headway, dtype=np.float64))
    accel = (central_difference(speeds, frames * FRAME_DT) if n >= 2
             else np.zeros(n))
    return VehicleTrack(
        vehicle_id=vehicle_id, length=length, width=width,
        frames=frames, y=y, lane_id=lane_arr,
        speed=speeds.copy(), accel=accel,
        preceding_id=prec_arr, space_headway=sh)


def make_dataset(tracks, segment_length_m=400.0, merge_boundary_y_m=120.0,
                 validated=True) -> Dataset:
    return Dataset(tracks={tr.vehicle_id: tr for tr in tracks},
                   segment_length_m=segment_length_m,
                   merge_boundary_y_m=merge_boundary_y_m,
                   validated=validated)


def following_pair(duration_s=30.0, gap_m=15.0, speed_mps=10.0,
                   leader_length=4.5, follower_length=4.5, lane=1,
                   y0=50.0) -> Dataset:
    """Two vehicles at constant speed and constant gap in one lane."""
    n = int(round(duration_s / FRAME_DT)) + 1
    v = np.full(n, speed_mps)
    leader = make_track(1, leader_length, lane, v, y0 + gap_m + leader_length)
    follower = make_track(2, follower_length, lane, v, y0, preceding=1)
    return make_dataset([leader, follower])


def oracle_scenario() -> Dataset:
    """Six vehicles covering the extraction rules in one hand-built scene.

    Lane 1: heavy leader 1, car 2 following at a 15 m gap for the whole 30 s
    (crosses the 120 m merge boundary at t=7 s), car 3 tailgating car 2 at a
    3 m gap (filtered out). Lane 2: car 4 leading, car 5 following at an
    11.8 m gap until it changes to lane 3 at t=26 s (speeding up from 8 to
    10 m/s), car 6 entering at t=10 s behind car 5 (its run is too short,
    and its later run behind car 4 forms after the entry grace).
    """
    n = 301
    v10 = np.full(n, 10.0)
    v8 = np.full(n, 8.0)
    a = make_track(1, 6.0, 1, v10, 71.0)
    b = make_track(2, 4.5, 1, v10, 50.0, preceding=1)
    c = make_track(3, 4.2, 1, v10, 42.5, preceding=2)

    d = make_track(4, 4.6, 2, v8, 100.0)
    e_lane = np.full(n, 2, dtype=np.int64)
    e_lane[260:] = 3
    e_speed = np.full(n, 8.0)
    e_speed[260:] = 10.0
    e_prec = np.full(n, 4, dtype=np.int64)
    e_prec[260:] = 0
    e = make_track(5, 4.4, e_lane, e_speed, 83.6, preceding=e_prec)

    f_n = 200
    f_prec = np.full(f_n, 5, dtype=np.int64)
    f_prec[160:] = 4  # after vehicle 5 leaves lane 2
    f = make_track(6, 4.5, 2, np.full(f_n, 8.0), 149.2, start_frame=100,
                   preceding=f_prec)
    return make_dataset([a, b, c, d, e, f])


def dataset_to_ngsim_frame(dataset: Dataset, units="meters") -> pd.DataFrame:
    """Render a dataset back into the 16-column NGSIM layout (for test files)."""
    scale = 1.0 / 0.3048 if units == "feet" else 1.0
    parts = []
    for vid in sorted(dataset.tracks):
        tr = dataset.tracks[vid]
        n = len(tr)
        sh = np.where(np.isnan(tr.space_headway), 0.0, tr.space_headway)
        parts.append(pd.DataFrame({
            "Vehicle_ID": np.full(n, vid, dtype=np.int64),
            "Frame_ID": tr.frames,
            "Total_Frames": np.full(n, n, dtype=np.int64),
            "Global_Time": tr.frames * 100,
            "Local_X": np.zeros(n),
            "Local_Y": tr.y * scale,
            "v_Length": np.full(n, tr.length * scale),
            "v_Width": np.full(n, (tr.width if np.isfinite(tr.width) else 1.8) * scale),
            "v_Class": np.full(n, 2, dtype=np.int64),
            "v_Vel": tr.speed * scale,
            "v_Acc": tr.accel * scale,
            "Lane_ID": tr.lane_id,
            "Preceding": tr.preceding_id,
            "Following": np.zeros(n, dtype=np.int64),
            "Space_Headway": sh * scale,
            "Time_Headway": np.zeros(n),
        }))
    return pd.concat(parts, ignore_index=True)


# ---------------------------------------------------------------------------
# synthetic cluster libraries and model-generated episodes


def synthetic_cluster_library(n_per_class=30, seed=20250809, v_op=12.0,
                              dx_op=30.0) -> ClusterLibrary:
    """A deterministic placeholder library with well-separated parameters.

    Every cluster gets a distinct (m, l, tau) structure; the gain c is chosen
    so the effective feedback gain c*v**m/dx**l at the (v_op, dx_op) operating
    point is moderate and decreases as tau grows, keeping the delayed loop
    stable (gain*tau stays below ~1.1 everywhere). The values distinguish
    clusters from one another; they are not calibrated to any data.
    """
    groups = {}
    for gi, vclass in enumerate((VehicleClass.PASSENGER_CAR,
                                 VehicleClass.HEAVY_VEHICLE)):
        rng = np.random.default_rng(seed + gi)
        defs = []
        for k in range(1, n_per_class + 1):
            m = 0.25 * ((k - 1) % 5) + round(rng.uniform(0, 0.02), 4)
            l = 1.0 + 0.2 * ((k - 1) % 6) + round(rng.uniform(0, 0.02), 4)
            tau = round(0.4 + 0.08 * (k - 1) + rng.uniform(0, 0.008), 4)
            gain = 0.35 + 0.022 * (n_per_class - k)
            c = round(gain * dx_op ** l / v_op ** m, 4)
            defs.append(ClusterDefinition(
                k, vclass, GHRParams(c=c, m=round(m, 4), l=round(l, 4), tau=tau)))
        groups[vclass] = defs
    return ClusterLibrary(groups=groups, source=f"<synthetic seed={seed}>")


def write_library_csv(library: ClusterLibrary, path, comment=None) -> None:
    tag = {VehicleClass.PASSENGER_CAR: "car", VehicleClass.HEAVY_VEHICLE: "heavy"}
    lines = []
    if comment:
        lines.extend(f"# {ln}" for ln in comment.splitlines())
    lines.append("cluster_id,class,c,m,l,tau,units")
    for vclass in (VehicleClass.PASSENGER_CAR, VehicleClass.HEAVY_VEHICLE):
        for cd in library.groups.get(vclass, ()):
            p = cd.params
            lines.append(f"{cd.cluster_id},{tag[vclass]},{p.c},{p.m},{p.l},{p.tau},si")
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")


def wavy_leader_speeds(n, v0=12.0, amplitude=2.5, omega=0.6) -> np.ndarray:
    t = np.arange(n) * FRAME_DT
    return v0 + amplitude * np.sin(omega * t)


def episode_from_params(params: GHRParams, duration_s=30.0, v0=12.0,
                        gap0=30.0, leader_length=4.5, follower_length=4.4,
                        episode_id="synthetic", cfg: SimConfig = SimConfig(),
                        accel_noise_sigma=0.0, rng=None) -> Episode:
    """Generate one episode whose follower obeys the law under ``params``.

    The leader follows a wavy speed profile; the follower holds v0 through
    the warm-up window and is forward-simulated afterwards. Optional Gaussian
    noise perturbs only the recorded acceleration (the regression target).
    """
    n = int(round(duration_s / FRAME_DT)) + 1
    lead_v = wavy_leader_speeds(n, v0=v0)
    lead_y = np.empty(n)
    lead_y[0] = gap0 + leader_length
    np.cumsum(lead_v[:-1] * FRAME_DT, out=lead_y[1:])
    lead_y[1:] += lead_y[0]

    t = np.arange(n) * FRAME_DT
    fol_v = np.full(n, v0)
    fol_y = np.arange(n) * (v0 * FRAME_DT)
    proto = EpisodeFrames(
        t=t, follower_y=fol_y, follower_speed=fol_v,
        follower_accel=np.zeros(n), leader_y=lead_y, leader_speed=lead_v,
        space_headway=lead_y - fol_y, gap=lead_y - fol_y - leader_length)
    fol_class = classify_by_length(follower_length)
    lead_class = classify_by_length(leader_length)
    shell = Episode(
        episode_id=episode_id, follower_id=2, leader_id=1,
        follower_class=fol_class, leader_class=lead_class,
        pair=pair_class(fol_class, lead_class), frames=proto,
        end_reason=EndReason.DATA_END, start_frame=0,
        leader_length=leader_length, avg_gap_m=float(np.mean(proto.gap)),
        avg_speed_mps=v0)
    sim = simulate_follower(shell, params, cfg)
    if sim.truncated or len(sim) != n:
        raise ValueError(
            f"synthetic episode collided under params {params}; widen gap0")

    accel = sim.a.copy()
    if accel_noise_sigma > 0:
        rng = rng or np.random.default_rng(0)
        accel = accel + rng.normal(0.0, accel_noise_sigma, size=n)
    dx = lead_y - sim.y
    frames = EpisodeFrames(
        t=t, follower_y=sim.y, follower_speed=sim.v, follower_accel=accel,
        leader_y=lead_y, leader_speed=lead_v, space_headway=dx,
        gap=dx - leader_length)
    return Episode(
        episode_id=episode_id, follower_id=2, leader_id=1,
        follower_class=fol_class, leader_class=lead_class,
        pair=pair_class(fol_class, lead_class), frames=frames,
        end_reason=EndReason.DATA_END, start_frame=0,
        leader_length=leader_length,
        avg_gap_m=float(np.mean(frames.gap)),
        avg_speed_mps=float(np.mean(sim.v)))


def summary_episode(episode_id, follower_class, leader_class, gap_m, speed_mps,
                    n_frames=260, end_reason=EndReason.DATA_END,
                    follower_id=2, leader_id=1) -> Episode:
    """Constant-state episode for aggregation tests (means equal the inputs
    up to float summation)."""
    t = np.arange(n_frames) * FRAME_DT
    leader_length = 4.5 if leader_class == VehicleClass.PASSENGER_CAR else 9.0
    fol_y = speed_mps * t
    dx = np.full(n_frames, gap_m + leader_length)
    frames = EpisodeFrames(
        t=t, follower_y=fol_y, follower_speed=np.full(n_frames, speed_mps),
        follower_accel=np.zeros(n_frames), leader_y=fol_y + dx,
        leader_speed=np.full(n_frames, speed_mps), space_headway=dx,
        gap=dx - leader_length)
    return Episode(
        episode_id=episode_id, follower_id=follower_id, leader_id=leader_id,
        follower_class=follower_class, leader_class=leader_class,
        pair=pair_class(follower_class, leader_class), frames=frames,
        end_reason=end_reason, start_frame=0, leader_length=leader_length,
        avg_gap_m=float(np.mean(frames.gap)),
        avg_speed_mps=float(np.mean(frames.follower_speed)))


def random_summary_episodes(n, seed=0) -> list:
    """Randomized car-follower episode summaries spanning all speed bins."""
    rng = np.random.default_rng(seed)
    classes = (VehicleClass.PASSENGER_CAR, VehicleClass.HEAVY_VEHICLE)
    episodes = []
    for i in range(n):
        lead = classes[rng.integers(0, 2)]
        reason = (EndReason.FOLLOWER_LANE_CHANGE if rng.random() < 0.4
                  else EndReason.DATA_END)
        episodes.append(summary_episode(
            episode_id=f"rand-{i}",
            follower_class=VehicleClass.PASSENGER_CAR,
            leader_class=lead,
            gap_m=float(rng.uniform(5.0, 60.0)),
            speed_mps=float(rng.uniform(1.0, 25.0)),  # up to 90 km/hr
            n_frames=int(rng.integers(251, 500)),
            end_reason=reason,
            follower_id=100 + i, leader_id=1))
    return episodes


# ---------------------------------------------------------------------------
# bulk dataset for throughput checks


def write_bulk_dataset(path, n_vehicles=2900, n_frames=900, n_lanes=6) -> int:
    """Write an NGSIM-format file of constant-speed platoons; returns row count.

    Vehicles are chained per lane 30 m apart at 10 m/s, so nearly every
    vehicle yields one long episode.
    """
    vid = np.repeat(np.arange(1, n_vehicles + 1, dtype=np.int64), n_frames)
    frame = np.tile(np.arange(n_frames, dtype=np.int64), n_vehicles)
    pos_in_lane = (vid - 1) // n_lanes
    lane = (vid - 1) % n_lanes + 1
    ahead = vid + n_lanes
    ahead[ahead > n_vehicles] = 0
    y = pos_in_lane * 30 + frame  # 10 m/s * 0.1 s = 1 m per frame
    length = np.where(vid % 10 == 0, 6, 4)  # integer lengths keep the writer fast
    zeros = np.zeros(len(vid), dtype=np.int64)
    df = pd.DataFrame({
        "Vehicle_ID": vid,
        "Frame_ID": frame,
        "Total_Frames": np.full(len(vid), n_frames, dtype=np.int64),
        "Global_Time": frame * 100,
        "Local_X": zeros,
        "Local_Y": y,
        "v_Length": length,
        "v_Width": np.full(len(vid), 2, dtype=np.int64),
        "v_Class": np.full(len(vid), 2, dtype=np.int64),
        "v_Vel": np.full(len(vid), 10, dtype=np.int64),
        "v_Acc": zeros,
        "Lane_ID": lane,
        "Preceding": ahead,
        "Following": zeros,
        "Space_Headway": np.where(ahead > 0, 30, 0),
        "Time_Headway": zeros,
    })
    df.to_csv(path, sep=" ", header=False, index=False)
    return len(df)
