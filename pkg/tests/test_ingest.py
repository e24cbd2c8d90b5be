import io

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from carfollow.errors import ParseError
from carfollow.ingest import (ColumnSchema, DerivePolicy, central_difference,
                              load_cache, parse_trajectory_file, save_cache,
                              validate_and_derive)
from carfollow.synth import following_pair, make_dataset, make_track

from conftest import ngsim_row


def test_feet_conversion_example(write_rows):
    # 328.084 ft is 100.000 m (hand multiplication by 0.3048)
    path = write_rows("\n".join([
        ngsim_row(1, 101, 328.084),
        ngsim_row(1, 102, 329.084),
    ]))
    ds = parse_trajectory_file(path, units="feet")
    assert abs(ds.tracks[1].y[0] - 100.000) < 1e-3


def test_frame_to_time_mapping(write_rows):
    path = write_rows("\n".join([
        ngsim_row(1, 101, 10.0),
        ngsim_row(1, 102, 11.0),
    ]))
    ds = parse_trajectory_file(path, units="meters")
    t = ds.tracks[1].t
    assert abs(t[0] - 10.1) < 1e-9
    assert abs(t[1] - 10.2) < 1e-9
    pt = ds.tracks[1].point(0)
    assert pt.frame == 101 and abs(pt.t - pt.frame * 0.1) < 1e-9


def test_malformed_row_rejected_parse_continues(write_rows):
    rows = [ngsim_row(1, 1, 10.0), ngsim_row(1, 2, 11.0), ngsim_row(1, 3, 12.0)]
    rows[1] = rows[1].replace("10.0 0.0 1", "abc 0.0 1")  # speed field
    path = write_rows("\n".join(rows))
    ds = parse_trajectory_file(path, units="meters")
    d = ds.diagnostics
    assert d.accepted_rows == 2
    assert d.rejected_count == 1
    (line_no, reason), = d.rejected_rows
    assert line_no == 2
    assert "speed" in reason
    assert len(ds.tracks[1]) == 2


def test_nan_token_rejected(write_rows):
    rows = [ngsim_row(1, 1, 10.0), ngsim_row(1, 2, "nan"), ngsim_row(1, 3, 12.0)]
    path = write_rows("\n".join(rows))
    ds = parse_trajectory_file(path, units="meters")
    assert ds.diagnostics.rejected_count == 1
    assert ds.diagnostics.rejected_rows[0][0] == 2


def test_duplicate_vehicle_frame_is_fatal(write_rows):
    path = write_rows("\n".join([
        ngsim_row(1, 101, 10.0),
        ngsim_row(1, 102, 11.0),
        ngsim_row(1, 101, 10.5),
    ]))
    with pytest.raises(ParseError) as exc:
        parse_trajectory_file(path, units="meters")
    msg = str(exc.value)
    assert "vehicle 1" in msg and "101" in msg
    assert "1" in msg and "3" in msg  # both offending lines listed


def test_empty_file_errors(write_rows):
    with pytest.raises(ParseError, match="empty"):
        parse_trajectory_file(write_rows(""), units="meters")
    with pytest.raises(ParseError, match="empty"):
        parse_trajectory_file(write_rows("\n\n  \n"), units="meters")


def test_header_row_detected(write_rows):
    header = " ".join(["Vehicle_ID", "Frame_ID", "Total_Frames", "Global_Time",
                       "Local_X", "Local_Y", "v_Length", "v_Width", "v_Class",
                       "v_Vel", "v_Acc", "Lane_ID", "Preceding", "Following",
                       "Space_Headway", "Time_Headway"])
    path = write_rows(header + "\n" + ngsim_row(1, 1, 5.0) + "\n"
                      + ngsim_row(1, 2, "bad") + "\n")
    ds = parse_trajectory_file(path, units="meters")
    assert ds.diagnostics.accepted_rows == 1
    assert ds.diagnostics.rejected_rows[0][0] == 3  # line number incl. header


def test_comma_delimited(write_rows):
    path = write_rows("\n".join([
        ngsim_row(1, 1, 10.0, sep=","),
        ngsim_row(1, 2, 11.0, sep=","),
    ]))
    ds = parse_trajectory_file(path, units="meters")
    assert len(ds.tracks[1]) == 2


def test_multispace_padded_file(write_rows):
    # space-padded column layouts must parse identically
    path = write_rows("   " + ngsim_row(1, 1, 10.0).replace(" ", "   ")
                      + "  \n" + ngsim_row(1, 2, 11.0) + "\n")
    ds = parse_trajectory_file(path, units="meters")
    assert len(ds.tracks[1]) == 2
    assert abs(ds.tracks[1].y[0] - 10.0) < 1e-12


def test_byte_stream_source():
    text = ngsim_row(1, 1, 10.0) + "\n" + ngsim_row(1, 2, 11.0) + "\n"
    ds = parse_trajectory_file(io.BytesIO(text.encode()), units="meters")
    assert len(ds.tracks[1]) == 2


def test_units_round_trip(write_ngsim):
    ds = following_pair(duration_s=5.0, gap_m=12.0, speed_mps=8.0, y0=10.0)
    path_m = write_ngsim(ds, units="meters", name="m.txt")
    parsed_m = parse_trajectory_file(path_m, units="meters")

    # the same data pre-multiplied by 3.28084 and parsed as feet
    import pandas as pd
    df = pd.read_csv(path_m, sep=" ", header=None)
    for col in (5, 6, 7, 9, 10, 14):  # y, length, width, speed, accel, headway
        df[col] = df[col] * 3.28084
    path_ft = path_m.replace("m.txt", "ft.txt")
    df.to_csv(path_ft, sep=" ", header=False, index=False)
    parsed_ft = parse_trajectory_file(path_ft, units="feet")

    for vid in parsed_m.tracks:
        np.testing.assert_allclose(parsed_ft.tracks[vid].y,
                                   parsed_m.tracks[vid].y, atol=1e-6)
        np.testing.assert_allclose(parsed_ft.tracks[vid].speed,
                                   parsed_m.tracks[vid].speed, atol=1e-6)


def test_grouping_conservation(write_rows):
    rows = [ngsim_row(2, 1, 20.0), ngsim_row(2, 2, 21.0),
            ngsim_row(1, 5, 9.0), ngsim_row(1, 6, 9.5),
            ngsim_row(1, 7, "oops"), ngsim_row(3, 9, 1.0)]
    ds = parse_trajectory_file(write_rows("\n".join(rows)), units="meters")
    assert ds.diagnostics.accepted_rows == 5
    assert sum(len(tr) for tr in ds.tracks.values()) == 5


def test_unsorted_rows_are_grouped(write_rows):
    rows = [ngsim_row(2, 2, 21.0), ngsim_row(1, 6, 9.5), ngsim_row(2, 1, 20.0),
            ngsim_row(1, 5, 9.0)]
    ds = parse_trajectory_file(write_rows("\n".join(rows)), units="meters")
    np.testing.assert_array_equal(ds.tracks[1].frames, [5, 6])
    np.testing.assert_array_equal(ds.tracks[2].frames, [1, 2])
    np.testing.assert_array_equal(ds.tracks[2].y, [20.0, 21.0])


def test_wrong_interval_rejected(write_rows):
    # Global_Time advancing 200 ms per frame step is not 10 Hz data
    rows = []
    for i in range(5):
        r = ngsim_row(1, i, float(i)).split()
        r[3] = str(i * 200)
        rows.append(" ".join(r))
    with pytest.raises(ParseError, match="10 Hz"):
        parse_trajectory_file(write_rows("\n".join(rows)), units="meters")


def test_schema_too_narrow_reports_first_line(write_rows):
    path = write_rows("1 2 3 4\n5 6 7 8\n")
    with pytest.raises(ParseError) as exc:
        parse_trajectory_file(path, units="meters")
    assert "line 1" in str(exc.value)


def test_custom_schema(tmp_path, write_rows):
    schema_file = tmp_path / "schema.json"
    schema_file.write_text(
        '{"vehicle_id": 0, "frame": 1, "y": 2, "length": 3, "lane_id": 4,'
        ' "global_time": null, "width": null, "v_class": null, "speed": null,'
        ' "accel": null, "preceding": null, "space_headway": null}')
    schema = ColumnSchema.from_json(schema_file)
    path = write_rows("7 1 10.0 4.5 2\n7 2 11.0 4.5 2\n")
    ds = parse_trajectory_file(path, schema=schema, units="meters")
    assert list(ds.tracks) == [7]
    assert np.isnan(ds.tracks[7].speed).all()


def test_unknown_schema_field_rejected(tmp_path):
    schema_file = tmp_path / "schema.json"
    schema_file.write_text('{"bogus": 3}')
    with pytest.raises(ParseError, match="bogus"):
        ColumnSchema.from_json(schema_file)


def test_negative_speed_row_rejected(write_rows):
    rows = [ngsim_row(1, 1, 10.0), ngsim_row(1, 2, 11.0, speed=-3.0)]
    ds = parse_trajectory_file(write_rows("\n".join(rows)), units="meters")
    assert ds.diagnostics.rejected_count == 1
    assert "negative speed" in ds.diagnostics.rejected_rows[0][1]


# ---------------------------------------------------------------------------
# validate_and_derive


def test_central_difference_example():
    # y samples 0, 1, 2 m at 0.1 s spacing: middle speed (2-0)/0.2 = 10
    y = np.array([0.0, 1.0, 2.0])
    t = np.array([0.0, 0.1, 0.2])
    v = central_difference(y, t)
    assert v[1] == 10.0
    assert v[0] == 10.0 and v[2] == 10.0  # one-sided ends on a linear ramp


def test_derived_speed_matches_analytic_constant_accel():
    a = 2.0
    frames = np.arange(100)
    t = frames * 0.1
    y = 0.5 * a * t ** 2
    track = make_track(1, 4.5, 1, np.zeros(100), 0.0)
    track.y = y
    track.speed = np.full(100, np.nan)
    track.accel = np.full(100, np.nan)
    ds = validate_and_derive(make_dataset([track], validated=False))
    v = ds.tracks[1].speed
    np.testing.assert_allclose(v[1:-1], (a * t)[1:-1], atol=1e-6)
    # accel inherits the one-sided endpoint speed error at indices 1 and -2
    acc = ds.tracks[1].accel
    np.testing.assert_allclose(acc[2:-2], a, atol=1e-6)


def test_constant_track_zero_kinematics():
    track = make_track(1, 4.5, 1, np.zeros(50), 10.0)
    track.speed = np.full(50, np.nan)
    track.accel = np.full(50, np.nan)
    ds = validate_and_derive(make_dataset([track], validated=False))
    assert np.all(ds.tracks[1].speed == 0.0)
    assert np.all(ds.tracks[1].accel == 0.0)


def test_single_frame_track_dropped():
    good = make_track(1, 4.5, 1, np.full(30, 5.0), 0.0)
    stub = make_track(2, 4.5, 1, np.array([5.0]), 50.0)
    ds = validate_and_derive(make_dataset([good, stub], validated=False))
    assert 2 not in ds.tracks
    assert any(vid == 2 for vid, _ in ds.diagnostics.dropped_tracks)


def test_backstep_threshold_is_configurable():
    track = make_track(3, 4.5, 1, np.full(30, 5.0), 0.0)
    track.y = track.y.copy()
    track.y[15] -= 5.0  # 5 m jump backward
    ds = validate_and_derive(make_dataset([track], validated=False),
                             DerivePolicy(max_backstep_m=6.0))
    assert 3 in ds.tracks and not ds.diagnostics.corrupt_tracks


def test_backstep_excluded_with_default_threshold():
    bad = make_track(1, 4.5, 1, np.full(30, 5.0), 0.0)
    bad.y = bad.y.copy()
    bad.y[10] -= 4.0
    keep = make_track(2, 4.5, 1, np.full(30, 5.0), 90.0)
    ds = validate_and_derive(make_dataset([bad, keep], validated=False))
    assert 1 not in ds.tracks
    assert ds.diagnostics.corrupt_tracks[0][0] == 1


def test_missing_frames_flagged():
    track = make_track(1, 4.5, 1, np.full(10, 5.0), 0.0)
    track.frames = np.r_[track.frames[:5], track.frames[7:]]
    for name in ("y", "lane_id", "speed", "accel", "preceding_id",
                 "space_headway"):
        arr = getattr(track, name)
        setattr(track, name, np.r_[arr[:5], arr[7:]])
    ds = validate_and_derive(make_dataset([track], validated=False))
    assert ds.diagnostics.missing_frame_tracks[1] == 2


def test_recompute_policy_overrides_provided():
    track = make_track(1, 4.5, 1, np.full(30, 5.0), 0.0)
    track.speed = np.full(30, 99.0)  # wrong on purpose
    ds = validate_and_derive(make_dataset([track], validated=False),
                             DerivePolicy(recompute_kinematics=True))
    np.testing.assert_allclose(ds.tracks[1].speed, 5.0, atol=1e-9)


def test_validate_keeps_input_untouched():
    track = make_track(1, 4.5, 1, np.full(30, 5.0), 0.0)
    track.speed = np.full(30, np.nan)
    raw = make_dataset([track], validated=False)
    validate_and_derive(raw)
    assert np.isnan(raw.tracks[1].speed).all()


# ---------------------------------------------------------------------------
# cache


def test_cache_round_trip(tmp_path, write_ngsim):
    ds = validate_and_derive(
        parse_trajectory_file(write_ngsim(following_pair(duration_s=5.0),
                                          name="c.txt"), units="meters"))
    path = tmp_path / "ds.npz"
    save_cache(ds, path)
    back = load_cache(path)
    assert back.validated
    assert set(back.tracks) == set(ds.tracks)
    for vid in ds.tracks:
        np.testing.assert_array_equal(back.tracks[vid].frames,
                                      ds.tracks[vid].frames)
        np.testing.assert_allclose(back.tracks[vid].y, ds.tracks[vid].y)
        assert back.tracks[vid].length == ds.tracks[vid].length
    assert back.segment_length_m == ds.segment_length_m


def test_cache_rejects_foreign_npz(tmp_path):
    path = tmp_path / "foreign.npz"
    np.savez(path, stuff=np.arange(3))
    with pytest.raises(ParseError):
        load_cache(path)


# ---------------------------------------------------------------------------
# properties


@settings(deadline=None, max_examples=25)
@given(st.lists(st.integers(min_value=0, max_value=500), min_size=2,
                max_size=40, unique=True))
def test_t_equals_frame_times_dt(frames):
    frames = sorted(frames)
    n = len(frames)
    track = make_track(1, 4.5, 1, np.full(n, 3.0), 0.0)
    track.frames = np.asarray(frames, dtype=np.int64)
    assert np.all(np.abs(track.t - np.asarray(frames) * 0.1) < 1e-9)
