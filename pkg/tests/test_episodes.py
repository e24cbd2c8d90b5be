import numpy as np
import pytest

from carfollow.classify import PairClass, VehicleClass
from carfollow.episodes import (EndReason, ExtractionConfig,
                                ExtractionDiagnostics, compute_gap,
                                derive_geometric_leaders, detect_lane_changes,
                                extract_episodes, segment_by_position)
from carfollow.synth import (following_pair, make_dataset, make_track,
                             oracle_scenario)


def test_compute_gap_examples():
    assert compute_gap(20.0, 5.0) == 15.0
    assert compute_gap(16.5, 16.5) == 0.0
    assert compute_gap(10.0, 12.0) == -2.0  # overlap: flagged upstream
    with pytest.raises(ValueError):
        compute_gap(-1.0, 5.0)
    with pytest.raises(ValueError):
        compute_gap(10.0, 0.0)


def test_compliant_pair_yields_one_episode():
    eps = extract_episodes(following_pair(duration_s=30.0, gap_m=15.0,
                                          speed_mps=10.0))
    assert len(eps) == 1
    ep = eps[0]
    assert ep.pair == PairClass.CAR_FOLLOWS_CAR
    assert abs(ep.avg_gap_m - 15.0) < 1e-9
    assert abs(ep.avg_speed_mps - 10.0) < 1e-9
    assert ep.end_reason == EndReason.DATA_END
    assert abs(ep.duration_s - 30.0) < 1e-9


def test_short_pair_discarded():
    diag = ExtractionDiagnostics()
    eps = extract_episodes(following_pair(duration_s=20.0), diag=diag)
    assert eps == []
    assert diag.runs_too_short == 1


def test_small_gap_pair_filtered():
    diag = ExtractionDiagnostics()
    eps = extract_episodes(following_pair(duration_s=30.0, gap_m=3.0),
                           diag=diag)
    assert eps == []
    assert diag.runs_gap_filtered == 1


def test_large_gap_pair_filtered():
    eps = extract_episodes(following_pair(duration_s=30.0, gap_m=80.0))
    assert eps == []


def test_exact_25s_kept():
    eps = extract_episodes(following_pair(duration_s=25.0))
    assert len(eps) == 1


def test_unvalidated_dataset_rejected():
    ds = following_pair()
    ds.validated = False
    with pytest.raises(ValueError, match="validate"):
        extract_episodes(ds)


def test_oracle_scenario_enumeration():
    ds = oracle_scenario()
    diag = ExtractionDiagnostics()
    eps = extract_episodes(ds, diag=diag)
    by_pairkey = {(e.follower_id, e.leader_id): e for e in eps}
    assert set(by_pairkey) == {(2, 1), (5, 4)}

    ep_b = by_pairkey[(2, 1)]
    assert ep_b.pair == PairClass.CAR_FOLLOWS_HEAVY
    assert ep_b.end_reason == EndReason.DATA_END
    assert abs(ep_b.avg_gap_m - 15.0) < 1e-9
    assert abs(ep_b.avg_speed_mps - 10.0) < 1e-9
    assert abs(ep_b.duration_s - 30.0) < 1e-9

    ep_e = by_pairkey[(5, 4)]
    assert ep_e.pair == PairClass.CAR_FOLLOWS_CAR
    assert ep_e.end_reason == EndReason.FOLLOWER_LANE_CHANGE
    assert abs(ep_e.end_t - 25.9) < 1e-9  # last frame before the change at 26 s
    assert abs(ep_e.avg_gap_m - 11.8) < 1e-9

    assert diag.runs_gap_filtered == 1   # the tailgater
    assert diag.runs_too_short >= 1      # the late entrant behind vehicle 5


def test_lane_change_ends_episode_within_tolerance():
    ds = oracle_scenario()
    eps = extract_episodes(ds)
    ep_e = next(e for e in eps if e.follower_id == 5)
    events = detect_lane_changes(ds.tracks[5])
    assert len(events) == 1
    assert abs(events[0].t - ep_e.end_t) <= 0.2


def test_episode_frames_contiguous_and_leader_ahead():
    for ep in extract_episodes(oracle_scenario()):
        dt = np.diff(ep.frames.t)
        np.testing.assert_allclose(dt, 0.1, atol=1e-9)
        assert np.min(ep.frames.leader_y - ep.frames.follower_y) > 0
        np.testing.assert_allclose(
            ep.frames.gap, ep.frames.space_headway - ep.leader_length,
            atol=1e-9)


def test_filter_idempotence():
    ds = oracle_scenario()
    ep = next(e for e in extract_episodes(ds) if e.follower_id == 2)
    # rebuild a dataset holding only the episode's two vehicles over the
    # episode's frame range and re-extract
    fol = ds.tracks[2]
    lead = ds.tracks[1]
    n = ep.n_frames
    sub = make_dataset([
        make_track(1, lead.length, 1, lead.speed[:n], lead.y[0]),
        make_track(2, fol.length, 1, fol.speed[:n], fol.y[0], preceding=1),
    ])
    eps2 = extract_episodes(sub)
    assert len(eps2) == 1
    assert abs(eps2[0].avg_gap_m - ep.avg_gap_m) < 1e-9
    assert eps2[0].n_frames == ep.n_frames


def test_negative_gap_frames_flagged_not_fatal():
    # headway dips below the leader length: gap goes negative on some frames
    n = 301
    v = np.full(n, 10.0)
    lead = make_track(1, 6.0, 1, v, 20.0)
    fol = make_track(2, 4.5, 1, v, 0.0, preceding=1)
    dip = slice(100, 120)
    lead.y = lead.y.copy()
    lead.y[dip] = fol.y[dip] + 4.0  # spacing 4 m < leader length 6 m
    diag = ExtractionDiagnostics()
    eps = extract_episodes(make_dataset([lead, fol]), diag=diag)
    assert len(eps) == 1
    assert eps[0].negative_gap_frames == 20
    assert diag.negative_gap_frames == 20


def test_late_entry_excluded_by_default():
    # leader moves into the follower's lane after the grace window
    n = 301
    v = np.full(n, 10.0)
    lane_lead = np.full(n, 2, dtype=np.int64)
    lane_lead[30:] = 1  # enters follower's lane at frame 30
    lead = make_track(1, 4.5, 1, v, 20.0)
    lead.lane_id = lane_lead
    fol = make_track(2, 4.5, 1, v, 0.0)
    diag = ExtractionDiagnostics()
    eps = extract_episodes(make_dataset([lead, fol]), diag=diag)
    assert eps == []
    assert diag.late_entries_excluded == 1

    cfg = ExtractionConfig(include_late_entries=True)
    eps2 = extract_episodes(make_dataset([lead, fol]), cfg)
    assert len(eps2) == 1
    assert eps2[0].late_entry


def test_within_grace_entry_kept():
    n = 301
    v = np.full(n, 10.0)
    lane_lead = np.full(n, 2, dtype=np.int64)
    lane_lead[8:] = 1  # enters within the 10-frame grace
    lead = make_track(1, 4.5, 1, v, 20.0)
    lead.lane_id = lane_lead
    fol = make_track(2, 4.5, 1, v, 0.0)
    eps = extract_episodes(make_dataset([lead, fol]))
    assert len(eps) == 1
    assert not eps[0].late_entry
    assert eps[0].end_reason == EndReason.DATA_END


def test_unresolved_leader_skipped():
    n = 301
    fol = make_track(2, 4.5, 1, np.full(n, 10.0), 0.0, preceding=99)
    diag = ExtractionDiagnostics()
    eps = extract_episodes(make_dataset([fol]),
                           ExtractionConfig(leader_source="column"), diag)
    assert eps == []
    assert diag.skipped_unresolved_frames == n


def test_leader_changed_reason():
    # leader 1 leaves the dataset mid-way; follower then follows leader 3
    n = 301
    v = np.full(n, 10.0)
    lead1 = make_track(1, 4.5, 1, v[:150], 30.0)
    lead3 = make_track(3, 4.5, 1, v, 60.0)
    fol = make_track(2, 4.5, 1, v, 0.0)
    eps = extract_episodes(make_dataset([lead1, lead3, fol]))
    assert len(eps) == 1
    assert eps[0].leader_id == 1
    assert eps[0].end_reason == EndReason.LEADER_CHANGED
    assert abs(eps[0].duration_s - 14.9) < 1e-9


def test_leader_lane_change_reason():
    n = 301
    v = np.full(n, 10.0)
    lane_lead = np.full(n, 1, dtype=np.int64)
    lane_lead[260:] = 2
    lead = make_track(1, 4.5, 1, v, 20.0)
    lead.lane_id = lane_lead
    fol = make_track(2, 4.5, 1, v, 0.0)
    eps = extract_episodes(make_dataset([lead, fol]))
    assert len(eps) == 1
    assert eps[0].end_reason == EndReason.LEADER_LANE_CHANGE


def test_segment_exit_reason():
    # follower's data ends just at the monitored segment's end
    n = 301
    v = np.full(n, 10.0)
    lead = make_track(1, 4.5, 1, v, 385.0 - 30.0 + 20.0)
    fol = make_track(2, 4.5, 1, v, 385.0 - 30.0)  # ends at y=385 > 400-10
    eps = extract_episodes(make_dataset([lead, fol]))
    assert len(eps) == 1
    assert eps[0].end_reason == EndReason.SEGMENT_EXIT


def test_geometric_leader_derivation():
    ds = oracle_scenario()
    leaders = derive_geometric_leaders(ds)
    assert np.all(leaders[2] == 1)          # car 2 behind heavy 1
    assert np.all(leaders[3] == 2)          # tailgater behind car 2
    assert np.all(leaders[1] == 0)          # front vehicle has no leader
    assert np.all(leaders[5][:260] == 4)    # car 5 behind car 4, then alone
    assert np.all(leaders[5][260:] == 0)
    assert np.all(leaders[6][:160] == 5)    # entrant behind car 5, then 4
    assert np.all(leaders[6][160:] == 4)


def test_leader_disagreement_diagnostic():
    ds = following_pair(duration_s=30.0)
    # corrupt the preceding column; geometry must win and count disagreements
    ds.tracks[2].preceding_id = np.full(len(ds.tracks[2]), 9, dtype=np.int64)
    diag = ExtractionDiagnostics()
    eps = extract_episodes(ds, diag=diag)
    assert len(eps) == 1
    assert eps[0].leader_id == 1
    assert diag.leader_disagreements == len(ds.tracks[2])


def test_suv_pair_retained_as_other():
    ds = following_pair(duration_s=30.0, follower_length=5.2)
    eps = extract_episodes(ds)
    assert len(eps) == 1
    assert eps[0].follower_class == VehicleClass.SUV_LIGHT_TRUCK
    assert eps[0].pair == PairClass.OTHER_PAIR


# ---------------------------------------------------------------------------
# lane changes


def test_detect_single_transition():
    track = make_track(1, 4.5, np.array([3, 3, 3, 2, 2]), np.full(5, 8.0), 0.0)
    events = detect_lane_changes(track)
    assert len(events) == 1
    ev = events[0]
    assert (ev.from_lane, ev.to_lane) == (3, 2)
    assert abs(ev.t - 0.3) < 1e-9  # first frame in the new lane


def test_detect_no_transition():
    track = make_track(1, 4.5, 2, np.full(50, 8.0), 0.0)
    assert detect_lane_changes(track) == []


def test_windowed_speed_means():
    n = 200
    speeds = np.full(n, 4.0)
    speeds[100:] = 6.0
    lanes = np.full(n, 1, dtype=np.int64)
    lanes[100:] = 2
    track = make_track(1, 4.5, lanes, speeds, 0.0)
    ev, = detect_lane_changes(track, window_s=5.0)
    assert abs(ev.speed_before - 4.0) < 1e-12
    assert abs(ev.speed_after - 6.0) < 1e-12
    assert abs((ev.speed_after - ev.speed_before) - 2.0) < 1e-12


def test_window_clipped_at_track_edges():
    n = 30  # 3 s of data: windows must clip
    speeds = np.r_[np.full(10, 3.0), np.full(20, 5.0)]
    lanes = np.r_[np.full(10, 1), np.full(20, 2)].astype(np.int64)
    track = make_track(1, 4.5, lanes, speeds, 0.0)
    ev, = detect_lane_changes(track, window_s=5.0)
    assert abs(ev.speed_before - 3.0) < 1e-12
    assert abs(ev.speed_after - 5.0) < 1e-12


# ---------------------------------------------------------------------------
# merge-boundary segmentation


def _oracle_main_episode():
    ds = oracle_scenario()
    return next(e for e in extract_episodes(ds) if e.follower_id == 2)


def test_segment_split_at_first_crossing():
    ep = _oracle_main_episode()
    before, after = segment_by_position(ep, 120.0, 5.0)
    assert before is not None and after is not None
    assert np.all(before.frames.follower_y < 120.0)
    assert after.frames.follower_y[0] >= 120.0
    assert before.segment_label == "before_merge"
    assert after.segment_label == "after_merge"
    # partition: disjoint frames that union to the original
    t_all = np.r_[before.frames.t, after.frames.t]
    np.testing.assert_array_equal(t_all, ep.frames.t)
    assert before.n_frames + after.n_frames == ep.n_frames
    # averages are recomputed per part
    assert abs(before.avg_gap_m - np.mean(before.frames.gap)) < 1e-12


def test_segment_entirely_beyond_boundary():
    ep = _oracle_main_episode()
    before, after = segment_by_position(ep, 10.0, 5.0)
    assert before is None
    assert after is not None and after.n_frames == ep.n_frames


def test_segment_entirely_before_boundary():
    ep = _oracle_main_episode()
    before, after = segment_by_position(ep, 1e6, 5.0)
    assert after is None
    assert before is not None and before.n_frames == ep.n_frames


def test_short_before_part_absent():
    ep = _oracle_main_episode()
    # boundary just 2 s into the episode: before-part under the 5 s minimum
    boundary = float(ep.frames.follower_y[20])
    before, after = segment_by_position(ep, boundary, 5.0)
    assert before is None
    assert after is not None
