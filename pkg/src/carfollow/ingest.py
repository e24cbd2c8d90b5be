"""Parsing, validation, and normalization of 10 Hz vehicle trajectory files.

Input files are delimited text (whitespace or comma) with one sample per row,
following the public NGSIM column order by default. All quantities are
normalized to SI units (m, s, m/s, m/s^2) at parse time; report modules
convert to km/hr only at emission.

Parsing is a single sequential pass; the resulting Dataset is treated as
immutable afterward and is safe for concurrent reads. A fast vectorized path
handles clean files; files with malformed rows fall back to a row-by-row pass
that records a diagnostic with the offending line number for every rejected
row instead of aborting.
"""

from __future__ import annotations

import io
import json
import logging
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np
import pandas as pd

from .errors import ParseError

logger = logging.getLogger(__name__)

#: Fixed sampling interval. Files recorded at any other rate are rejected.
FRAME_DT = 0.1
FT_TO_M = 0.3048

#: Cap on per-row diagnostics kept verbatim (counts are always exact).
_MAX_ROW_DIAGNOSTICS = 100


@dataclass(frozen=True)
class ColumnSchema:
    """Maps canonical fields to 0-based column indices; None marks an absent column.

    Defaults follow the public NGSIM column order: Vehicle_ID, Frame_ID,
    Total_Frames, Global_Time, Local_X, Local_Y, v_Length, v_Width, v_Class,
    v_Vel, v_Acc, Lane_ID, Preceding, Following, Space_Headway, Time_Headway.
    vehicle_id, frame, y, lane_id and length are required.
    """

    vehicle_id: int = 0
    frame: int = 1
    global_time: int | None = 3
    y: int = 5
    length: int = 6
    width: int | None = 7
    v_class: int | None = 8
    speed: int | None = 9
    accel: int | None = 10
    lane_id: int = 11
    preceding: int | None = 12
    space_headway: int | None = 14

    def mapped(self) -> dict[str, int]:
        """Field -> column index for every mapped field."""
        out = {}
        for name in ("vehicle_id", "frame", "global_time", "y", "length", "width",
                     "v_class", "speed", "accel", "lane_id", "preceding",
                     "space_headway"):
            idx = getattr(self, name)
            if idx is not None:
                out[name] = idx
        return out

    @classmethod
    def from_json(cls, path) -> "ColumnSchema":
        """Load a schema file: a JSON object of field name -> column index."""
        with open(path) as fh:
            raw = json.load(fh)
        known = {f for f in cls.__dataclass_fields__}
        unknown = set(raw) - known
        if unknown:
            raise ParseError(f"unknown schema fields: {sorted(unknown)}")
        return cls(**raw)


NGSIM_SCHEMA = ColumnSchema()


@dataclass(frozen=True)
class TrajectoryPoint:
    """One kinematic sample of one vehicle, in SI units."""

    vehicle_id: int
    frame: int
    t: float
    y: float
    lane_id: int
    speed: float
    accel: float
    preceding_id: int | None = None
    space_headway: float | None = None


@dataclass
class VehicleTrack:
    """Time-ordered samples of a single vehicle, stored columnar for speed.

    Frames are strictly increasing with no duplicates; ``t`` is derived as
    frame * 0.1 s. ``speed``/``accel``/``space_headway`` hold NaN where the
    source column was absent (filled by :func:`validate_and_derive`).
    """

    vehicle_id: int
    length: float
    width: float
    frames: np.ndarray
    y: np.ndarray
    lane_id: np.ndarray
    speed: np.ndarray
    accel: np.ndarray
    preceding_id: np.ndarray
    space_headway: np.ndarray
    ngsim_class: int | None = None

    def __len__(self):
        return len(self.frames)

    @property
    def t(self) -> np.ndarray:
        return self.frames * FRAME_DT

    @property
    def n_missing_frames(self) -> int:
        """Frames absent inside the track's span."""
        if len(self.frames) == 0:
            return 0
        return int(self.frames[-1] - self.frames[0] + 1) - len(self.frames)

    def point(self, i: int) -> TrajectoryPoint:
        pid = int(self.preceding_id[i])
        sh = float(self.space_headway[i])
        return TrajectoryPoint(
            vehicle_id=self.vehicle_id,
            frame=int(self.frames[i]),
            t=float(self.frames[i] * FRAME_DT),
            y=float(self.y[i]),
            lane_id=int(self.lane_id[i]),
            speed=float(self.speed[i]),
            accel=float(self.accel[i]),
            preceding_id=pid if pid > 0 else None,
            space_headway=None if np.isnan(sh) else sh,
        )

    @property
    def points(self) -> list[TrajectoryPoint]:
        return [self.point(i) for i in range(len(self))]


@dataclass
class Diagnostics:
    """Counters and capped samples of everything skipped or repaired."""

    total_rows: int = 0
    accepted_rows: int = 0
    rejected_count: int = 0
    rejected_rows: list = field(default_factory=list)  # (line_no, reason)
    unresolved_preceding: list = field(default_factory=list)
    dropped_tracks: list = field(default_factory=list)  # (vehicle_id, reason)
    corrupt_tracks: list = field(default_factory=list)  # (vehicle_id, reason)
    missing_frame_tracks: dict = field(default_factory=dict)  # vehicle_id -> count
    notes: list = field(default_factory=list)

    def reject(self, line_no, reason):
        self.rejected_count += 1
        if len(self.rejected_rows) < _MAX_ROW_DIAGNOSTICS:
            self.rejected_rows.append((line_no, reason))

    def summary(self) -> str:
        parts = [
            f"{self.accepted_rows} rows accepted",
            f"{self.rejected_count} rejected",
            f"{len(self.dropped_tracks)} tracks dropped",
            f"{len(self.corrupt_tracks)} tracks corrupt",
        ]
        if self.unresolved_preceding:
            parts.append(f"{len(self.unresolved_preceding)} unresolved leader ids")
        return ", ".join(parts)


@dataclass
class Dataset:
    """All vehicle tracks of one recording, keyed by vehicle id."""

    tracks: dict[int, VehicleTrack]
    segment_length_m: float = 400.0
    merge_boundary_y_m: float = 120.0
    diagnostics: Diagnostics = field(default_factory=Diagnostics)
    validated: bool = False

    def __len__(self):
        return len(self.tracks)


@dataclass(frozen=True)
class DerivePolicy:
    """How validate_and_derive treats kinematic columns.

    With ``recompute_kinematics`` speeds and accelerations are rebuilt from
    positions by central differences even when the source provided them;
    otherwise differences fill in only where columns were absent.
    ``max_backstep_m`` is the largest tolerated single-step decrease in y
    before a track is flagged corrupt and excluded.
    """

    recompute_kinematics: bool = False
    max_backstep_m: float = 3.0


def central_difference(values: np.ndarray, t: np.ndarray) -> np.ndarray:
    """Centered first derivative with one-sided differences at the endpoints.

    Interior: (x[i+1] - x[i-1]) / (t[i+1] - t[i-1]); exact for quadratics on
    a uniform grid. Requires at least 2 samples.
    """
    if len(values) < 2:
        raise ValueError("central difference needs at least 2 samples")
    out = np.empty_like(values, dtype=np.float64)
    out[1:-1] = (values[2:] - values[:-2]) / (t[2:] - t[:-2])
    out[0] = (values[1] - values[0]) / (t[1] - t[0])
    out[-1] = (values[-1] - values[-2]) / (t[-1] - t[-2])
    return out


# ---------------------------------------------------------------------------
# parsing


def _sniff(text_head: str):
    """Detect delimiter and header from the first non-blank line."""
    first = ""
    for line in text_head.splitlines():
        if line.strip():
            first = line
            break
    if not first:
        raise ParseError("empty trajectory file")
    sep = "," if "," in first else r"\s+"
    tokens = first.split(",") if sep == "," else first.split()
    has_header = False
    for tok in tokens:
        try:
            float(tok)
        except ValueError:
            has_header = True
            break
    return sep, has_header


def _coerce_source(source):
    """Return (readable-for-pandas, reopen callable, head text)."""
    if isinstance(source, (str, Path)):
        path = Path(source)
        with open(path, "rb") as fh:
            head = fh.read(8192)
        return path, lambda: path, head.decode("utf-8", errors="replace")
    data = source.read()
    if isinstance(data, str):
        data = data.encode("utf-8")
    return (io.BytesIO(data), lambda: io.BytesIO(data),
            data[:8192].decode("utf-8", errors="replace"))


class _FallBack(Exception):
    """Internal: the fast reader cannot handle this file; try the next one."""


def _normalize_whitespace(data: bytes) -> bytes:
    """Collapse runs of blanks to single spaces so a single-char-delimiter
    parser can read space-padded tables."""
    if b"\t" in data:
        data = data.replace(b"\t", b" ")
    while b"  " in data:
        data = data.replace(b"  ", b" ")
    while b"\n " in data:
        data = data.replace(b"\n ", b"\n")
    while b" \n" in data:
        data = data.replace(b" \n", b"\n")
    return data.lstrip(b" ")


def _arrow_read(source, reopen, sep, skiprows, mapped):
    """Multithreaded reader for the clean-file fast path (pyarrow csv)."""
    try:
        import pyarrow as pa
        import pyarrow.csv as pacsv
    except ImportError:
        raise _FallBack from None
    if isinstance(source, (str, Path)):
        data = Path(source).read_bytes()
    else:
        data = reopen().getvalue()
    if sep == ",":
        delim = ","
    else:
        delim = " "
        data = _normalize_whitespace(data)
    colnames = {name: f"f{idx}" for name, idx in mapped.items()}
    try:
        tbl = pacsv.read_csv(
            pa.BufferReader(data),
            read_options=pacsv.ReadOptions(autogenerate_column_names=True,
                                           skip_rows=skiprows),
            parse_options=pacsv.ParseOptions(delimiter=delim),
            convert_options=pacsv.ConvertOptions(
                column_types={c: pa.float64() for c in colnames.values()},
                include_columns=sorted(colnames.values(),
                                       key=lambda c: int(c[1:]))))
    except (pa.ArrowInvalid, pa.ArrowKeyError, KeyError):
        raise _FallBack from None
    arrays = {name: tbl.column(col).to_numpy(zero_copy_only=False)
              for name, col in colnames.items()}
    return arrays, tbl.num_rows


def _fast_read(reopen, sep, skiprows, usecols):
    buf = reopen()
    df = pd.read_csv(buf, sep=sep, header=None, skiprows=skiprows,
                     usecols=usecols, dtype=np.float64, engine="c")
    return df


def _tolerant_read(reopen, sep, skiprows, schema, diags):
    """Row-by-row parse keeping exact line numbers for every rejection."""
    mapped = schema.mapped()
    max_col = max(mapped.values())
    cols = {name: [] for name in mapped}
    lines_kept = []
    buf = reopen()
    text = io.TextIOWrapper(buf, encoding="utf-8", errors="replace") \
        if isinstance(buf, io.BytesIO) else open(buf, encoding="utf-8", errors="replace")
    with text:
        for line_no, line in enumerate(text, start=1):
            if line_no <= skiprows:
                continue
            if not line.strip():
                continue
            fields = line.split(",") if sep == "," else line.split()
            diags.total_rows += 1
            if len(fields) <= max_col:
                diags.reject(line_no, f"expected at least {max_col + 1} fields, got {len(fields)}")
                continue
            row = {}
            bad = None
            for name, idx in mapped.items():
                try:
                    row[name] = float(fields[idx])
                except ValueError:
                    bad = f"non-numeric value {fields[idx]!r} in field {name}"
                    break
            if bad:
                diags.reject(line_no, bad)
                continue
            for name in mapped:
                cols[name].append(row[name])
            lines_kept.append(line_no)
    arrays = {name: np.asarray(vals, dtype=np.float64) for name, vals in cols.items()}
    return arrays, np.asarray(lines_kept, dtype=np.int64)


def _check_frame_interval(vids, frames, gtime):
    """Verify the recording rate is 10 Hz using the global-time column."""
    if gtime is None or len(vids) < 2:
        return
    n = min(len(vids), 200_001)  # a sample is plenty to identify the rate
    same = vids[1:n] == vids[:n - 1]
    dfr = np.diff(frames[:n])[same]
    dgt = np.diff(gtime[:n])[same]
    ok = dfr > 0
    if not ok.any():
        return
    ratio = float(np.median(dgt[ok] / dfr[ok]))
    # Global time in milliseconds (NGSIM) or seconds are both accepted.
    if not (abs(ratio - 100.0) <= 1.0 or abs(ratio - FRAME_DT) <= 1e-3 or ratio == 0.0):
        raise ParseError(
            f"frame interval is {ratio} time units per frame; this pipeline "
            f"requires 10 Hz data (0.1 s per frame) and does not resample"
        )


def parse_trajectory_file(source, schema: ColumnSchema | None = None,
                          units: str = "feet",
                          segment_length_m: float = 400.0,
                          merge_boundary_y_m: float = 120.0) -> Dataset:
    """Parse a delimited trajectory file into a Dataset of SI-unit tracks.

    ``units`` names the positional units of the file ("feet" or "meters");
    feet-based positions, lengths, headways, speeds and accelerations are
    multiplied by 0.3048. Malformed rows are rejected with a per-line
    diagnostic and never abort the parse; duplicate (vehicle, frame) samples
    and empty files are fatal.
    """
    if units not in ("feet", "meters"):
        raise ParseError(f"units must be 'feet' or 'meters', got {units!r}")
    schema = schema or NGSIM_SCHEMA
    mapped = schema.mapped()
    diags = Diagnostics()

    _, reopen, head = _coerce_source(source)
    sep, has_header = _sniff(head)
    skiprows = 1 if has_header else 0

    usecols = sorted(set(mapped.values()))
    arrays = None
    try:
        arrays, n_rows = _arrow_read(source, reopen, sep, skiprows, mapped)
        diags.total_rows = n_rows
        lines = np.arange(n_rows, dtype=np.int64) + 1 + skiprows
    except _FallBack:
        arrays = None
    if arrays is None:
        try:
            df = _fast_read(reopen, sep, skiprows, usecols)
        except (ValueError, pd.errors.ParserError):
            arrays, lines = _tolerant_read(reopen, sep, skiprows, schema, diags)
        except pd.errors.EmptyDataError:
            raise ParseError("empty trajectory file") from None
        else:
            diags.total_rows = len(df)
            arrays = {name: df[idx].to_numpy() for name, idx in mapped.items()}
            lines = np.arange(len(df), dtype=np.int64) + 1 + skiprows
            del df

    if len(lines) == 0:
        if diags.rejected_count:
            first_ln, first_reason = diags.rejected_rows[0]
            raise ParseError(
                f"no parseable rows ({diags.rejected_count} rejected; first: "
                f"line {first_ln}: {first_reason})", line=first_ln)
        raise ParseError("empty trajectory file")

    # Numeric-but-invalid rows: vectorized invariant checks with line numbers.
    bad = np.zeros(len(lines), dtype=bool)
    reasons = {}

    def flag(mask, reason):
        mask = mask & ~bad
        if mask.any():
            for ln in lines[mask][:_MAX_ROW_DIAGNOSTICS]:
                reasons.setdefault(int(ln), reason)
        bad[mask] = True

    for name in mapped:
        flag(~np.isfinite(arrays[name]), f"non-finite {name}")
    for name in ("vehicle_id", "frame", "lane_id"):
        v = arrays[name]
        flag(np.abs(v - np.rint(v)) > 1e-6, f"non-integer {name}")
    flag(arrays["lane_id"] < 1, "lane_id < 1")
    if "speed" in arrays:
        flag(arrays["speed"] < 0, "negative speed")
    if "space_headway" in arrays:
        flag(arrays["space_headway"] < 0, "negative space headway")
    if bad.any():
        for ln in sorted(reasons):
            diags.reject(ln, reasons[ln])
        diags.rejected_count += int(bad.sum()) - len(reasons)  # beyond the sample cap
        keep = ~bad
        arrays = {k: v[keep] for k, v in arrays.items()}
        lines = lines[keep]

    if len(lines) == 0:
        first_ln, first_reason = diags.rejected_rows[0]
        raise ParseError(
            f"no valid rows ({diags.rejected_count} rejected; first: "
            f"line {first_ln}: {first_reason})", line=first_ln)
    diags.accepted_rows = len(lines)

    scale = FT_TO_M if units == "feet" else 1.0
    vids = np.rint(arrays["vehicle_id"]).astype(np.int64)
    frames = np.rint(arrays["frame"]).astype(np.int64)
    lanes = np.rint(arrays["lane_id"]).astype(np.int64)
    y = arrays["y"] * scale
    length = arrays["length"] * scale
    width = arrays["width"] * scale if "width" in arrays else np.full(len(lines), np.nan)
    speed = arrays["speed"] * scale if "speed" in arrays else np.full(len(lines), np.nan)
    accel = arrays["accel"] * scale if "accel" in arrays else np.full(len(lines), np.nan)
    preceding = (np.rint(arrays["preceding"]).astype(np.int64)
                 if "preceding" in arrays else np.zeros(len(lines), dtype=np.int64))
    space_headway = (arrays["space_headway"] * scale
                     if "space_headway" in arrays else np.full(len(lines), np.nan))
    gtime = arrays.get("global_time")
    vclass = (np.rint(arrays["v_class"]).astype(np.int64)
              if "v_class" in arrays else None)

    # Files are usually already sorted by (vehicle, frame); reorder only when
    # they are not. Strictly increasing frames within a vehicle also proves
    # the absence of duplicate (vehicle, frame) samples.
    same = vids[1:] == vids[:-1]
    presorted = (bool(np.all(vids[1:] >= vids[:-1]))
                 and bool(np.all(frames[1:][same] > frames[:-1][same])))
    if not presorted:
        order = np.lexsort((frames, vids))
        vids, frames, lanes, y = vids[order], frames[order], lanes[order], y[order]
        length, width, speed, accel = (length[order], width[order],
                                       speed[order], accel[order])
        preceding, space_headway, lines = (preceding[order],
                                           space_headway[order], lines[order])
        if gtime is not None:
            gtime = gtime[order]
        if vclass is not None:
            vclass = vclass[order]
        same = vids[1:] == vids[:-1]
        dup = same & (frames[1:] == frames[:-1])
        if dup.any():
            i = int(np.flatnonzero(dup)[0])
            raise ParseError(
                f"duplicate sample for vehicle {vids[i]} frame {frames[i]}: "
                f"lines {lines[i]} and {lines[i + 1]}",
                line=int(lines[i]),
            )

    _check_frame_interval(vids, frames, gtime)

    starts = np.r_[0, np.flatnonzero(~same) + 1, len(vids)]
    tracks: dict[int, VehicleTrack] = {}
    for a, b in zip(starts[:-1], starts[1:]):
        vid = int(vids[a])
        tlen = float(np.median(length[a:b]))
        if not tlen > 0:
            diags.dropped_tracks.append((vid, f"non-positive length {tlen}"))
            continue
        tracks[vid] = VehicleTrack(
            vehicle_id=vid,
            length=tlen,
            width=float(np.median(width[a:b])),
            frames=frames[a:b],
            y=y[a:b],
            lane_id=lanes[a:b],
            speed=speed[a:b],
            accel=accel[a:b],
            preceding_id=preceding[a:b],
            space_headway=space_headway[a:b],
            ngsim_class=int(vclass[a]) if vclass is not None else None,
        )

    referenced = set(np.unique(preceding[preceding > 0]).tolist())
    unresolved = sorted(referenced - set(tracks))
    diags.unresolved_preceding = unresolved
    if unresolved:
        logger.warning("%d preceding ids reference vehicles not in the dataset",
                       len(unresolved))

    if not tracks:
        raise ParseError("no usable vehicle tracks after parsing")

    return Dataset(tracks=tracks, segment_length_m=segment_length_m,
                   merge_boundary_y_m=merge_boundary_y_m, diagnostics=diags)


# ---------------------------------------------------------------------------
# validation and kinematic derivation


def validate_and_derive(dataset: Dataset, policy: DerivePolicy = DerivePolicy()) -> Dataset:
    """Validate tracks and fill in or recompute kinematics from positions.

    Returns a new Dataset; the input is left untouched. Tracks shorter than
    2 frames are dropped, tracks with a single-step y decrease beyond
    ``policy.max_backstep_m`` are flagged corrupt and excluded, and missing
    frames inside a track's span are counted in the diagnostics.
    """
    diags = replace(dataset.diagnostics,
                    rejected_rows=list(dataset.diagnostics.rejected_rows),
                    unresolved_preceding=list(dataset.diagnostics.unresolved_preceding),
                    dropped_tracks=list(dataset.diagnostics.dropped_tracks),
                    corrupt_tracks=list(dataset.diagnostics.corrupt_tracks),
                    missing_frame_tracks=dict(dataset.diagnostics.missing_frame_tracks),
                    notes=list(dataset.diagnostics.notes))
    tracks: dict[int, VehicleTrack] = {}
    for vid, tr in dataset.tracks.items():
        if len(tr) < 2:
            diags.dropped_tracks.append((vid, f"track has {len(tr)} frame(s)"))
            continue
        dy = np.diff(tr.y)
        worst = float(dy.min()) if len(dy) else 0.0
        if worst < -policy.max_backstep_m:
            diags.corrupt_tracks.append(
                (vid, f"y decreases by {-worst:.2f} m between consecutive frames"))
            continue
        if tr.n_missing_frames:
            diags.missing_frame_tracks[vid] = tr.n_missing_frames

        t = tr.t
        speed, accel = tr.speed, tr.accel
        need_speed = policy.recompute_kinematics or bool(np.isnan(speed).all())
        need_accel = policy.recompute_kinematics or bool(np.isnan(accel).all())
        if need_speed:
            speed = np.maximum(central_difference(tr.y, t), 0.0)
            need_accel = True
        if need_accel:
            accel = central_difference(speed, t)
        if need_speed or need_accel:
            tr = replace(tr, speed=speed, accel=accel)
        tracks[vid] = tr

    if not tracks:
        raise ParseError("no tracks survived validation")
    return Dataset(tracks=tracks, segment_length_m=dataset.segment_length_m,
                   merge_boundary_y_m=dataset.merge_boundary_y_m,
                   diagnostics=diags, validated=True)


# ---------------------------------------------------------------------------
# columnar cache

_CACHE_VERSION = 1


def save_cache(dataset: Dataset, path) -> None:
    """Write a compressed columnar cache of a (validated) dataset."""
    vids = sorted(dataset.tracks)
    counts = np.asarray([len(dataset.tracks[v]) for v in vids], dtype=np.int64)
    offsets = np.r_[0, np.cumsum(counts)]
    cat = {name: np.concatenate([getattr(dataset.tracks[v], name) for v in vids])
           for name in ("frames", "y", "lane_id", "speed", "accel",
                        "preceding_id", "space_headway")}
    meta = {
        "version": _CACHE_VERSION,
        "segment_length_m": dataset.segment_length_m,
        "merge_boundary_y_m": dataset.merge_boundary_y_m,
        "validated": dataset.validated,
        "diagnostics_summary": dataset.diagnostics.summary(),
    }
    np.savez_compressed(
        path,
        meta=np.frombuffer(json.dumps(meta).encode(), dtype=np.uint8),
        vehicle_ids=np.asarray(vids, dtype=np.int64),
        lengths=np.asarray([dataset.tracks[v].length for v in vids]),
        widths=np.asarray([dataset.tracks[v].width for v in vids]),
        ngsim_class=np.asarray(
            [dataset.tracks[v].ngsim_class or 0 for v in vids], dtype=np.int64),
        offsets=offsets,
        **cat,
    )


def load_cache(path) -> Dataset:
    """Load a dataset cache written by :func:`save_cache`."""
    with np.load(path) as z:
        try:
            meta = json.loads(bytes(z["meta"].tobytes()).decode())
        except (KeyError, ValueError) as exc:
            raise ParseError(f"not a carfollow dataset cache: {path}") from exc
        if meta.get("version") != _CACHE_VERSION:
            raise ParseError(
                f"unsupported cache version {meta.get('version')} in {path}")
        vids = z["vehicle_ids"]
        offsets = z["offsets"]
        cols = {name: z[name] for name in ("frames", "y", "lane_id", "speed",
                                           "accel", "preceding_id", "space_headway")}
        lengths, widths, nclass = z["lengths"], z["widths"], z["ngsim_class"]
    tracks = {}
    for i, vid in enumerate(vids.tolist()):
        a, b = offsets[i], offsets[i + 1]
        tracks[vid] = VehicleTrack(
            vehicle_id=vid,
            length=float(lengths[i]),
            width=float(widths[i]),
            frames=cols["frames"][a:b],
            y=cols["y"][a:b],
            lane_id=cols["lane_id"][a:b],
            speed=cols["speed"][a:b],
            accel=cols["accel"][a:b],
            preceding_id=cols["preceding_id"][a:b],
            space_headway=cols["space_headway"][a:b],
            ngsim_class=int(nclass[i]) or None,
        )
    diags = Diagnostics()
    diags.notes.append(f"loaded from cache: {meta['diagnostics_summary']}")
    return Dataset(tracks=tracks, segment_length_m=meta["segment_length_m"],
                   merge_boundary_y_m=meta["merge_boundary_y_m"],
                   diagnostics=diags, validated=meta["validated"])
