"""Behavioral cluster library loading and minimum-RMSE episode fitting.

Each episode is scored against every cluster calibrated for its follower's
vehicle class; the cluster with the lowest root mean squared one-step
acceleration error represents the episode. Cluster parameter values are an
external input (CSV, format below) -- this package never calibrates them.

Cluster library CSV format::

    cluster_id,class,c,m,l,tau,units
    24,car,0.42,0.85,1.2,1.31,si

``class`` is ``car`` or ``heavy``; ``units`` is ``si`` or ``feet``. Lines
starting with ``#`` are comments. Feet-based coefficients are converted so
the law returns m/s^2 for SI inputs (c scales by 0.3048**(l - m)).
"""

from __future__ import annotations

import csv
import logging
import math
from dataclasses import dataclass, field

import numpy as np

from .classify import PairClass, REPORTED_PAIRS, VehicleClass
from .episodes import Episode
from .errors import FitError, LibraryError
from .ghr import GHRParams, SimConfig, predict_accelerations
from .ingest import FT_TO_M

logger = logging.getLogger(__name__)

_LIBRARY_HEADER = ["cluster_id", "class", "c", "m", "l", "tau", "units"]
_CLASS_TAGS = {"car": VehicleClass.PASSENGER_CAR,
               "heavy": VehicleClass.HEAVY_VEHICLE}
MAX_CLUSTER_ID = 30


@dataclass(frozen=True)
class ClusterDefinition:
    cluster_id: int
    follower_class: VehicleClass
    params: GHRParams


@dataclass
class ClusterLibrary:
    """Up to 30 clusters per follower class, keyed car / heavy."""

    groups: dict = field(default_factory=dict)  # VehicleClass -> [ClusterDefinition]
    source: str = ""

    def group(self, follower_class: VehicleClass) -> list:
        try:
            return self.groups[follower_class]
        except KeyError:
            raise FitError(
                f"cluster library {self.source or '<memory>'} has no group for "
                f"{follower_class.value}") from None

    def __len__(self):
        return sum(len(g) for g in self.groups.values())


def load_cluster_library(source) -> ClusterLibrary:
    """Load and validate a cluster library CSV (see module docstring)."""
    if hasattr(source, "read"):
        rows = list(csv.reader(source))
        name = getattr(source, "name", "<stream>")
    else:
        name = str(source)
        with open(source, newline="") as fh:
            rows = list(csv.reader(fh))

    defs: dict[tuple, ClusterDefinition] = {}
    header_seen = False
    for row_no, row in enumerate(rows, start=1):
        if not row or row[0].lstrip().startswith("#"):
            continue
        cells = [c.strip() for c in row]
        if not header_seen:
            if [c.lower() for c in cells] != _LIBRARY_HEADER:
                raise LibraryError(
                    f"{name} row {row_no}: expected header "
                    f"{','.join(_LIBRARY_HEADER)}", line=row_no)
            header_seen = True
            continue
        if len(cells) != len(_LIBRARY_HEADER):
            raise LibraryError(
                f"{name} row {row_no}: expected {len(_LIBRARY_HEADER)} fields, "
                f"got {len(cells)}", line=row_no)
        raw = dict(zip(_LIBRARY_HEADER, cells))
        if any(v == "" for v in raw.values()):
            missing = [k for k, v in raw.items() if v == ""]
            raise LibraryError(f"{name} row {row_no}: missing field(s) {missing}",
                               line=row_no)
        try:
            cid = int(raw["cluster_id"])
            c, m, l, tau = (float(raw[k]) for k in ("c", "m", "l", "tau"))
        except ValueError as exc:
            raise LibraryError(f"{name} row {row_no}: {exc}", line=row_no) from None
        cls_tag = raw["class"].lower()
        if cls_tag not in _CLASS_TAGS:
            raise LibraryError(
                f"{name} row {row_no}: class must be car or heavy, got "
                f"{raw['class']!r}", line=row_no)
        units = raw["units"].lower()
        if units == "feet":
            c = c * FT_TO_M ** (l - m)
        elif units != "si":
            raise LibraryError(
                f"{name} row {row_no}: unknown units tag {raw['units']!r} "
                f"(use si or feet)", line=row_no)
        if not 1 <= cid <= MAX_CLUSTER_ID:
            raise LibraryError(
                f"{name} row {row_no}: cluster_id must be 1..{MAX_CLUSTER_ID}, "
                f"got {cid}", line=row_no)
        key = (cid, cls_tag)
        if key in defs:
            raise LibraryError(
                f"{name} row {row_no}: duplicate cluster ({cid}, {cls_tag})",
                line=row_no)
        defs[key] = ClusterDefinition(cid, _CLASS_TAGS[cls_tag],
                                      GHRParams(c=c, m=m, l=l, tau=tau))

    if not header_seen:
        raise LibraryError(f"{name}: no header row found")
    if not defs:
        raise LibraryError(f"{name}: no cluster definitions found")

    groups: dict[VehicleClass, list] = {}
    for (cid, _), cd in sorted(defs.items()):
        groups.setdefault(cd.follower_class, []).append(cd)
    return ClusterLibrary(groups=groups, source=name)


def rmse(predicted, observed) -> float:
    """Root mean squared error between two aligned series."""
    p = np.asarray(predicted, dtype=np.float64)
    o = np.asarray(observed, dtype=np.float64)
    if p.shape != o.shape:
        raise ValueError(f"series lengths differ: {p.shape} vs {o.shape}")
    if p.size == 0:
        raise FitError("cannot compute RMSE of an empty series "
                       "(episode shorter than the warm-up window)")
    return float(np.sqrt(np.mean((p - o) ** 2)))


@dataclass
class FitResult:
    episode_id: str
    follower_class: VehicleClass
    pair: PairClass
    best_cluster_id: int
    rmse: float
    n_frames_scored: int
    per_cluster_rmse: dict  # cluster_id -> rmse (inf = unscoreable)
    library_class: VehicleClass = VehicleClass.PASSENGER_CAR
    suv_fallback: bool = False


def _score(episode: Episode, params: GHRParams, cfg: SimConfig, target: str):
    """(rmse, n_scored) of one cluster on one episode; inf when unscoreable."""
    pred = predict_accelerations(episode, params, cfg)
    if len(pred) == 0:
        return math.inf, 0
    n = len(episode.frames)
    k = n - len(pred)
    if target == "accel":
        err = rmse(pred.a_pred, episode.frames.follower_accel[k:])
        return (err if math.isfinite(err) else math.inf), len(pred)
    # target == "speed": one-step speed built from the predicted acceleration
    if len(pred) < 2:
        return math.inf, 0
    v = episode.frames.follower_speed
    v_pred = v[k:-1] + pred.a_pred[:-1] * cfg.dt
    err = rmse(v_pred, v[k + 1:])
    return (err if math.isfinite(err) else math.inf), len(pred) - 1


def fit_episode(episode: Episode, library: ClusterLibrary,
                cfg: SimConfig = SimConfig(), target: str = "accel") -> FitResult:
    """Score an episode against its class's clusters; best = minimum RMSE.

    SUV/light-truck followers fall back to the car library and are flagged;
    clusters whose tau is not shorter than the episode score infinite RMSE.
    Ties break toward the lowest cluster id.
    """
    if target not in ("accel", "speed"):
        raise ValueError(f"fit target must be accel or speed, got {target!r}")
    lib_class = episode.follower_class
    suv_fallback = False
    if lib_class == VehicleClass.SUV_LIGHT_TRUCK:
        lib_class = VehicleClass.PASSENGER_CAR
        suv_fallback = True
    group = library.group(lib_class)

    per = {}
    best_id, best_rmse, best_n = None, math.inf, 0
    for cd in group:
        err, n_scored = _score(episode, cd.params, cfg, target)
        if not math.isfinite(err):
            logger.debug("episode %s cluster %d unscoreable (tau=%.2fs)",
                         episode.episode_id, cd.cluster_id, cd.params.tau)
        per[cd.cluster_id] = err
        if err < best_rmse:
            best_id, best_rmse, best_n = cd.cluster_id, err, n_scored
    if best_id is None:
        raise FitError(f"episode {episode.episode_id}: no scoreable cluster "
                       f"(duration {episode.duration_s:.1f}s)")
    return FitResult(
        episode_id=episode.episode_id,
        follower_class=episode.follower_class,
        pair=episode.pair,
        best_cluster_id=best_id,
        rmse=best_rmse,
        n_frames_scored=best_n,
        per_cluster_rmse=per,
        library_class=lib_class,
        suv_fallback=suv_fallback,
    )


def fit_all(episodes, library: ClusterLibrary, cfg: SimConfig = SimConfig(),
            target: str = "accel") -> list:
    """Fit every episode; results ordered by episode_id for reproducibility.

    Episodes that cannot be fitted at all are skipped with a warning; the
    (episode x cluster) evaluations are independent, so ordering never
    depends on evaluation schedule.
    """
    results = []
    for ep in sorted(episodes, key=lambda e: e.episode_id):
        try:
            results.append(fit_episode(ep, library, cfg, target))
        except FitError as exc:
            logger.warning("skipping episode %s: %s", ep.episode_id, exc)
    return results


@dataclass
class ClusterHistogram:
    counts: dict  # cluster_id -> episodes represented
    distinct: int


def cluster_frequencies(results, episodes) -> dict:
    """Best-cluster counts per pair class for the four reported pairs."""
    by_id = {ep.episode_id: ep for ep in episodes}
    raw: dict[PairClass, dict[int, int]] = {pc: {} for pc in REPORTED_PAIRS}
    for r in results:
        ep = by_id.get(r.episode_id)
        pair = ep.pair if ep is not None else r.pair
        if pair not in raw:
            continue
        raw[pair][r.best_cluster_id] = raw[pair].get(r.best_cluster_id, 0) + 1
    return {pc: ClusterHistogram(counts=dict(sorted(h.items())), distinct=len(h))
            for pc, h in raw.items()}


def mean_rmse_by_group(results, episodes, by: str = "pair") -> dict:
    """Arithmetic mean of best-cluster RMSE per pair class or merge side.

    Empty groups are omitted (logged). ``by`` is "pair" or "segment"; the
    segment grouping uses each episode's merge-split label.
    """
    if by not in ("pair", "segment"):
        raise ValueError(f"grouping must be pair or segment, got {by!r}")
    by_id = {ep.episode_id: ep for ep in episodes}
    groups: dict = {}
    for r in results:
        ep = by_id.get(r.episode_id)
        if ep is None:
            logger.warning("fit result %s has no matching episode", r.episode_id)
            continue
        key = ep.pair if by == "pair" else (ep.segment_label or "full")
        groups.setdefault(key, []).append(r.rmse)
    keyfn = (lambda k: k.value) if by == "pair" else str
    out = {}
    for key in sorted(groups, key=keyfn):
        vals = groups[key]
        if not vals:
            logger.info("group %s empty, omitted", key)
            continue
        out[key] = float(np.mean(vals))
    return out
