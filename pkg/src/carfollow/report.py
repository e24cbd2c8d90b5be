"""Aggregation of episodes, lane changes, and fit results into output tables.

Internal math stays in SI and full precision; speeds become km/hr and values
are rounded only at emission. Emission is deterministic: identical inputs and
configuration produce byte-identical files.
"""

from __future__ import annotations

import json
import logging
from bisect import bisect_right
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .classify import PairClass, REPORTED_PAIRS
from .episodes import EndReason, Episode, LaneChangeEvent

logger = logging.getLogger(__name__)

MPS_TO_KMH = 3.6


@dataclass(frozen=True)
class SpeedBins:
    """Ordered bin boundaries in km/hr; the bins tile (0, inf).

    Boundaries (b0..bk) produce bins [0,b0), [b0,b1), ..., [bk,inf). An empty
    boundary tuple is a single all-speeds bin.
    """

    boundaries_kmh: tuple = ()

    def __post_init__(self):
        b = self.boundaries_kmh
        if any(b[i] >= b[i + 1] for i in range(len(b) - 1)):
            raise ValueError(f"bin boundaries must be strictly increasing: {b}")

    @property
    def n_bins(self) -> int:
        return len(self.boundaries_kmh) + 1

    def index(self, speed_kmh: float) -> int:
        return bisect_right(self.boundaries_kmh, speed_kmh)

    def label(self, i: int) -> str:
        b = self.boundaries_kmh
        if not b:
            return "all"
        if i == 0:
            return f"<{b[0]:g}"
        if i == len(b):
            return f">{b[-1]:g}"
        return f"{b[i - 1]:g}-{b[i]:g}"


#: Speed bins of the gap-comparison table (20/25/30/40 mph in km/hr).
GAP_BINS = SpeedBins((32.2, 40.25, 48.3, 64.4))
#: Speed bins of the lane-change behavior table.
LANECHANGE_BINS = SpeedBins((20.0, 55.0))


@dataclass(frozen=True)
class PairSummaryRow:
    pair: PairClass
    n: int
    avg_gap_m: float | None
    avg_speed_kmh: float | None


def _mean(values, weights=None):
    if len(values) == 0:
        return None
    if weights is None:
        return float(np.mean(values))
    return float(np.average(values, weights=weights))


def pair_summary(episodes, weighting: str = "episode") -> list:
    """Count, mean gap, and mean following speed for the four reported pairs.

    ``weighting`` is "episode" (unweighted over episodes, the default) or
    "frame" (weighted by episode frame counts).
    """
    rows = []
    for pc in REPORTED_PAIRS:
        group = [e for e in episodes if e.pair == pc]
        w = [e.n_frames for e in group] if weighting == "frame" else None
        gap = _mean([e.avg_gap_m for e in group], w)
        spd = _mean([e.avg_speed_mps for e in group], w)
        rows.append(PairSummaryRow(
            pair=pc, n=len(group), avg_gap_m=gap,
            avg_speed_kmh=None if spd is None else spd * MPS_TO_KMH))
    return rows


@dataclass(frozen=True)
class GapSpeedBinRow:
    bin_label: str
    n_car_follows_heavy: int
    avg_gap_car_follows_heavy_m: float | None
    n_car_follows_car: int
    avg_gap_car_follows_car_m: float | None
    gap_decrease_pct: float | None


def gap_by_speed_bins(episodes, bins: SpeedBins = GAP_BINS,
                      weighting: str = "episode") -> list:
    """Passenger-car gap comparison by following-speed bin.

    Episodes land in a bin by their mean following speed. The decrease
    percentage is 100*(gap_cc - gap_ch)/gap_cc, positive when cars follow
    heavy vehicles closer than other cars; it is omitted for bins where
    either pair is empty.
    """
    per_bin: dict[int, dict[PairClass, list]] = {
        i: {PairClass.CAR_FOLLOWS_CAR: [], PairClass.CAR_FOLLOWS_HEAVY: []}
        for i in range(bins.n_bins)}
    for e in episodes:
        if e.pair not in (PairClass.CAR_FOLLOWS_CAR, PairClass.CAR_FOLLOWS_HEAVY):
            continue
        per_bin[bins.index(e.avg_speed_mps * MPS_TO_KMH)][e.pair].append(e)

    rows = []
    for i in range(bins.n_bins):
        ch = per_bin[i][PairClass.CAR_FOLLOWS_HEAVY]
        cc = per_bin[i][PairClass.CAR_FOLLOWS_CAR]
        wch = [e.n_frames for e in ch] if weighting == "frame" else None
        wcc = [e.n_frames for e in cc] if weighting == "frame" else None
        gap_ch = _mean([e.avg_gap_m for e in ch], wch)
        gap_cc = _mean([e.avg_gap_m for e in cc], wcc)
        decrease = None
        if gap_cc is not None and gap_ch is not None and gap_cc != 0:
            decrease = 100.0 * (gap_cc - gap_ch) / gap_cc
        rows.append(GapSpeedBinRow(
            bin_label=bins.label(i),
            n_car_follows_heavy=len(ch),
            avg_gap_car_follows_heavy_m=gap_ch,
            n_car_follows_car=len(cc),
            avg_gap_car_follows_car_m=gap_cc,
            gap_decrease_pct=decrease))
    return rows


@dataclass(frozen=True)
class LaneChangeRow:
    bin_label: str
    n_episodes: int
    n_lane_change: int
    lane_change_pct: float
    avg_speed_episode_mean_kmh: float
    avg_speed_frame_mean_kmh: float


def lane_change_rates(episodes, events=None, bins: SpeedBins = LANECHANGE_BINS) -> list:
    """Share of car-follows-heavy episodes ending in a follower lane change.

    One row per nonempty speed bin plus an "overall" row. Because the average
    following speed depends on the aggregation, the rows report both the
    episode-mean and the frame-mean speed. ``events``, when given, is used to
    cross-check that every lane-change ending has a matching detected event.
    """
    ch_eps = [e for e in episodes if e.pair == PairClass.CAR_FOLLOWS_HEAVY]
    if events is not None:
        unmatched = [e.episode_id for e in ch_eps
                     if e.end_reason == EndReason.FOLLOWER_LANE_CHANGE
                     and e.episode_id not in match_lane_change_events(ch_eps, events)]
        if unmatched:
            logger.warning("%d lane-change endings without a detected event: %s",
                           len(unmatched), unmatched[:5])

    def row(label, group):
        n = len(group)
        changed = sum(1 for e in group
                      if e.end_reason == EndReason.FOLLOWER_LANE_CHANGE)
        speeds = np.asarray([e.avg_speed_mps for e in group])
        frames = np.asarray([e.n_frames for e in group])
        return LaneChangeRow(
            bin_label=label,
            n_episodes=n,
            n_lane_change=changed,
            lane_change_pct=100.0 * changed / n,
            avg_speed_episode_mean_kmh=float(np.mean(speeds)) * MPS_TO_KMH,
            avg_speed_frame_mean_kmh=float(np.average(speeds, weights=frames))
            * MPS_TO_KMH)

    rows = []
    if ch_eps:
        rows.append(row("overall", ch_eps))
    for i in range(bins.n_bins):
        group = [e for e in ch_eps
                 if bins.index(e.avg_speed_mps * MPS_TO_KMH) == i]
        if not group:
            logger.info("lane-change bin %s empty, omitted", bins.label(i))
            continue
        rows.append(row(bins.label(i), group))
    return rows


def match_lane_change_events(episodes, events, tol_s: float = 0.2) -> dict:
    """episode_id -> LaneChangeEvent for episodes ending in a follower lane
    change, matched by vehicle and time (within tol_s of the episode end)."""
    by_vehicle: dict[int, list[LaneChangeEvent]] = {}
    for ev in events:
        by_vehicle.setdefault(ev.vehicle_id, []).append(ev)
    out = {}
    for e in episodes:
        if e.end_reason != EndReason.FOLLOWER_LANE_CHANGE:
            continue
        end_t = e.end_t
        candidates = [ev for ev in by_vehicle.get(e.follower_id, ())
                      if abs(ev.t - end_t) <= tol_s + 1e-9]
        if candidates:
            out[e.episode_id] = min(candidates, key=lambda ev: abs(ev.t - end_t))
    return out


def post_lane_change_speed_stats(events, initial_speed_threshold_kmh: float = 20.0):
    """Fractions of lane changes followed by a strict speed increase.

    Returns (overall fraction, fraction among events whose pre-change speed
    was below the threshold); a fraction is None when its denominator is
    empty.
    """
    events = list(events)
    if not events:
        return None, None
    increased = [ev.speed_after > ev.speed_before for ev in events]
    overall = sum(increased) / len(events)
    slow = [ev for ev in events
            if ev.speed_before * MPS_TO_KMH < initial_speed_threshold_kmh]
    below = (sum(ev.speed_after > ev.speed_before for ev in slow) / len(slow)
             if slow else None)
    return overall, below


@dataclass(frozen=True)
class MergeComparison:
    n_before: int
    n_after: int
    distinct_before: int
    distinct_after: int
    mean_rmse_before: float
    mean_rmse_after: float
    rmse_ratio: float  # before / after


def merge_comparison(results_before, results_after) -> MergeComparison:
    """Distinct best-cluster counts and mean-RMSE ratio across the merge split."""
    before, after = list(results_before), list(results_after)
    if not before or not after:
        raise ValueError("merge comparison requires fit results on both sides")
    mean_b = float(np.mean([r.rmse for r in before]))
    mean_a = float(np.mean([r.rmse for r in after]))
    if mean_a == 0.0:  # noise-free synthetic data on both sides
        ratio = 1.0 if mean_b == 0.0 else float("inf")
    else:
        ratio = mean_b / mean_a
    return MergeComparison(
        n_before=len(before),
        n_after=len(after),
        distinct_before=len({r.best_cluster_id for r in before}),
        distinct_after=len({r.best_cluster_id for r in after}),
        mean_rmse_before=mean_b,
        mean_rmse_after=mean_a,
        rmse_ratio=ratio)


# ---------------------------------------------------------------------------
# table assembly and emission


@dataclass
class ReportTable:
    name: str
    columns: list
    rows: list  # raw values; formatted only at emission
    formats: dict = field(default_factory=dict)  # column -> format spec


def _enum_value(v):
    return v.value if hasattr(v, "value") else v


def build_report_tables(episodes, events, results, lane_change_events_matched=None,
                        merge: MergeComparison | None = None,
                        frequencies=None,
                        speed_stats=None) -> dict:
    """Assemble the standard output tables from pipeline products."""
    tables = {}

    rows = [[_enum_value(r.pair), r.n, r.avg_gap_m, r.avg_speed_kmh]
            for r in pair_summary(episodes)]
    tables["pair_summary"] = ReportTable(
        "pair_summary", ["pair", "n", "avg_gap_m", "avg_speed_kmh"], rows,
        {"avg_gap_m": ".3f", "avg_speed_kmh": ".2f"})

    rows = [[g.bin_label, g.n_car_follows_heavy, g.avg_gap_car_follows_heavy_m,
             g.n_car_follows_car, g.avg_gap_car_follows_car_m, g.gap_decrease_pct]
            for g in gap_by_speed_bins(episodes)]
    tables["gap_by_speed"] = ReportTable(
        "gap_by_speed",
        ["speed_bin_kmh", "n_car_follows_heavy", "avg_gap_car_follows_heavy_m",
         "n_car_follows_car", "avg_gap_car_follows_car_m", "gap_decrease_pct"],
        rows,
        {"avg_gap_car_follows_heavy_m": ".3f", "avg_gap_car_follows_car_m": ".3f",
         "gap_decrease_pct": ".2f"})

    lc_rows = [[r.bin_label, r.n_episodes, r.n_lane_change, r.lane_change_pct,
                r.avg_speed_episode_mean_kmh, r.avg_speed_frame_mean_kmh]
               for r in lane_change_rates(episodes, events)]
    if speed_stats is not None:
        overall, below = speed_stats
        n_ev = len(lane_change_events_matched or {})
        lc_rows.append(["speed_increase_overall", n_ev, None,
                        None if overall is None else 100.0 * overall, None, None])
        lc_rows.append(["speed_increase_below_threshold", n_ev, None,
                        None if below is None else 100.0 * below, None, None])
    tables["lane_change"] = ReportTable(
        "lane_change",
        ["bin", "n_episodes", "n_lane_change", "pct",
         "avg_speed_episode_mean_kmh", "avg_speed_frame_mean_kmh"],
        lc_rows,
        {"pct": ".2f", "avg_speed_episode_mean_kmh": ".2f",
         "avg_speed_frame_mean_kmh": ".2f"})

    freq_rows = []
    if frequencies:
        for pc, hist in frequencies.items():
            for cid, count in hist.counts.items():
                freq_rows.append([_enum_value(pc), cid, count])
    tables["cluster_frequencies"] = ReportTable(
        "cluster_frequencies", ["pair", "cluster_id", "n_episodes"], freq_rows)

    if merge is not None:
        tables["merge_comparison"] = ReportTable(
            "merge_comparison",
            ["side", "n_episodes", "distinct_clusters", "mean_rmse_mps2",
             "rmse_ratio_before_after"],
            [["before", merge.n_before, merge.distinct_before,
              merge.mean_rmse_before, merge.rmse_ratio],
             ["after", merge.n_after, merge.distinct_after,
              merge.mean_rmse_after, None]],
            {"mean_rmse_mps2": ".6f", "rmse_ratio_before_after": ".4f"})
    return tables


def _format_cell(value, fmt):
    if value is None:
        return ""
    if isinstance(value, float):
        return format(value, fmt or ".6g")
    return str(value)


def _render_csv(table: ReportTable) -> str:
    lines = [",".join(table.columns)]
    for row in table.rows:
        cells = [_format_cell(v, table.formats.get(c))
                 for c, v in zip(table.columns, row)]
        lines.append(",".join(cells))
    return "\n".join(lines) + "\n"


def _render_json(table: ReportTable) -> str:
    rows = []
    for row in table.rows:
        obj = {}
        for c, v in zip(table.columns, row):
            if isinstance(v, float):
                obj[c] = float(_format_cell(v, table.formats.get(c)))
            else:
                obj[c] = v
        rows.append(obj)
    return json.dumps({"table": table.name, "columns": table.columns,
                       "rows": rows}, indent=2) + "\n"


def emit_report(tables: dict, format: str = "csv", out_dir=".",
                config_hash: str = "", extras: dict | None = None) -> list:
    """Write one file per table plus a manifest; no partial output on error.

    All file contents are rendered in memory first; if any write fails, files
    already written by this call are removed before the error propagates.
    """
    if format not in ("csv", "json"):
        raise ValueError(f"report format must be csv or json, got {format!r}")
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    probe = out / ".write_probe"
    try:
        probe.write_text("")
        probe.unlink()
    except OSError as exc:
        raise OSError(f"output directory {out} is not writable: {exc}") from exc

    ext = format
    rendered = {}
    manifest = {"config_hash": config_hash, "format": format, "tables": {}}
    for name in sorted(tables):
        table = tables[name]
        fname = f"{name}.{ext}"
        rendered[fname] = (_render_csv if format == "csv" else _render_json)(table)
        manifest["tables"][name] = {"file": fname, "rows": len(table.rows)}
    if extras:
        manifest.update(extras)
    rendered["manifest.json"] = json.dumps(manifest, indent=2, sort_keys=True) + "\n"

    written = []
    try:
        for fname in sorted(rendered):
            path = out / fname
            path.write_text(rendered[fname])
            written.append(path)
    except OSError:
        for path in written:
            path.unlink(missing_ok=True)
        raise
    return written
