"""Cluster merging, feature assembly, statistics, and center-table queries."""

from __future__ import annotations

from dataclasses import dataclass, field as dc_field
from typing import Optional, Sequence

import numpy as np

from .model import DELTA, ClusterCenter, FieldSet, PointSet, Segmentation

QUERYABLE = ("x_c", "y_c", "z_c", "t_c", "p_c", "f_c",
             "n_points", "n_fields", "p_std", "f_std", "extent")


class QueryError(ValueError):
    """Unknown property or malformed predicate."""


class _UnionFind:
    def __init__(self, ids):
        self.parent = {i: i for i in ids}

    def find(self, a):
        while self.parent[a] != a:
            self.parent[a] = self.parent[self.parent[a]]
            a = self.parent[a]
        return a

    def union(self, a, b):
        ra, rb = self.find(a), self.find(b)
        if ra == rb:
            return
        # smaller id becomes the root, for stable representative choice
        if rb < ra:
            ra, rb = rb, ra
        self.parent[rb] = ra


def _pct_diff(a: float, b: float) -> float:
    """Symmetric percent difference with a zero-guard denominator."""
    return 2.0 * abs(a - b) / (abs(a) + abs(b) + DELTA)


def _values_match(a: Optional[float], b: Optional[float], eps_m: float) -> bool:
    if a is None and b is None:
        return True                      # both lack the kind: matching
    if a is None or b is None:
        return False                     # one-sided absence: never eligible
    return _pct_diff(a, b) <= eps_m


def merge_eligible(a: ClusterCenter, b: ClusterCenter, eps_m: float) -> bool:
    """Both the point and the field averages must match within eps_m."""
    return (_values_match(a.p_c, b.p_c, eps_m)
            and _values_match(a.f_c, b.f_c, eps_m))


def merge_clusters(centers: Sequence[ClusterCenter], eps_m: float):
    """Transitive-closure merge over the pairwise value criterion.

    Eligibility is evaluated on the original centers only, so the result is
    independent of scan order. Returns (merge_map, merged center table);
    merged representatives carry sample-count-weighted means and keep the
    lowest member id.
    """
    ids = [c.id for c in centers]
    uf = _UnionFind(ids)
    for i, a in enumerate(centers):
        for b in centers[i + 1:]:
            if merge_eligible(a, b, eps_m):
                uf.union(a.id, b.id)
    merge_map = {i: uf.find(i) for i in ids}

    groups = {}
    for c in centers:
        groups.setdefault(merge_map[c.id], []).append(c)
    merged = [_merge_group(rep, members) for rep, members in sorted(groups.items())]
    return merge_map, merged


def _merge_group(rep_id: int, members: Sequence[ClusterCenter]) -> ClusterCenter:
    n_p = sum(c.n_points for c in members)
    n_f = sum(c.n_fields for c in members)
    n_tot = sum(c.n_total for c in members)
    loc = sum(c.loc4 * c.n_total for c in members) / n_tot
    p_c = (sum(c.p_c * c.n_points for c in members if c.p_c is not None) / n_p
           if n_p > 0 else None)
    f_c = (sum(c.f_c * c.n_fields for c in members if c.f_c is not None) / n_f
           if n_f > 0 else None)
    return ClusterCenter(rep_id, float(loc[0]), float(loc[1]), float(loc[2]),
                         float(loc[3]), p_c, f_c, n_p, n_f)


@dataclass(frozen=True)
class FeatureStats:
    bbox_min: tuple          # (x, y, z, t)
    bbox_max: tuple
    p_mean: Optional[float]
    p_std: Optional[float]
    f_mean: Optional[float]
    f_std: Optional[float]
    n_points: int
    n_fields: int

    def to_dict(self) -> dict:
        return {
            "bbox_min": list(self.bbox_min), "bbox_max": list(self.bbox_max),
            "p_mean": self.p_mean, "p_std": self.p_std,
            "f_mean": self.f_mean, "f_std": self.f_std,
            "n_points": self.n_points, "n_fields": self.n_fields,
        }


@dataclass
class Feature:
    """One merged cluster materialized for exploration.

    polylines hold point-sample indices of runs with consecutive timesteps;
    isolated_points are single-sample remnants of the splitting rule.
    voxels maps field timestep index -> sorted flat cell indices.
    """

    id: int
    member_clusters: list
    polylines: list = dc_field(default_factory=list)
    isolated_points: list = dc_field(default_factory=list)
    voxels: dict = dc_field(default_factory=dict)
    stats: Optional[FeatureStats] = None


def _identity_map(seg: Segmentation) -> dict:
    return {c.id: c.id for c in seg.centers}


def build_features(seg: Segmentation, merge_map: Optional[dict],
                   points: PointSet, fields: FieldSet) -> list:
    """Assemble Features: split trajectories and bucket voxels per timestep.

    Within one trajectory, vertices are connected only while the feature
    stays the same AND the samples sit on consecutive timesteps. The dataset's
    timestep stride is the smallest positive difference between global point
    times; any larger jump (beyond float tolerance) is a gap.
    """
    if merge_map is None:
        merge_map = _identity_map(seg)
    members = {}
    for c in seg.centers:
        members.setdefault(merge_map[c.id], []).append(c.id)
    feats = {fid: Feature(fid, sorted(mids)) for fid, mids in members.items()}

    if len(points):
        diffs = np.diff(np.unique(points.t))
        stride = diffs.min() if len(diffs) else np.inf
        flabel = np.array([merge_map[int(l)] for l in seg.point_labels])
        order = np.lexsort((points.t, points.traj_id))
        tid_sorted = points.traj_id[order]
        starts = np.flatnonzero(np.r_[True, tid_sorted[1:] != tid_sorted[:-1]])
        for idx in np.split(order, starts[1:]):
            _split_trajectory(idx, flabel[idx], points.t[idx], stride, feats)

    if len(fields):
        n_cells = fields.n_cells
        flabels = np.array([merge_map[int(l)] for l in seg.field_labels])
        for m in range(len(fields.times)):
            lab_m = flabels[m * n_cells:(m + 1) * n_cells]
            for fid in np.unique(lab_m):
                feats[int(fid)].voxels[m] = np.flatnonzero(lab_m == fid)

    out = [feats[fid] for fid in sorted(feats)]
    for f in out:
        f.stats = feature_stats(f, points, fields)
    return out


def _split_trajectory(idx, flabel, t, stride, feats):
    """Emit polylines and isolated points for one time-ordered trajectory."""
    n = len(idx)
    start = 0
    for i in range(1, n + 1):
        boundary = (i == n or flabel[i] != flabel[start]
                    or t[i] - t[i - 1] > stride * (1 + 1e-9))
        if not boundary:
            continue
        fid = int(flabel[start])
        run = idx[start:i]
        if len(run) >= 2:
            feats[fid].polylines.append(run)
        else:
            feats[fid].isolated_points.append(int(run[0]))
        start = i


def feature_stats(feature: Feature, points: PointSet, fields: FieldSet) -> FeatureStats:
    """Population statistics and the 4D bounding box over member samples."""
    locs = []
    p_mean = p_std = f_mean = f_std = None
    n_p = n_f = 0
    pidx = np.concatenate([np.concatenate(feature.polylines) if feature.polylines
                           else np.empty(0, np.int64),
                           np.asarray(feature.isolated_points, np.int64)])
    if len(pidx):
        locs.append(points.loc4[pidx])
        vals = points.value[pidx]
        p_mean = float(vals.mean())
        p_std = float(vals.std())
        n_p = len(pidx)
    if feature.voxels:
        cc = fields.cell_centers()
        fvals = []
        for m, cells in feature.voxels.items():
            loc = np.column_stack([cc[cells], np.full(len(cells), fields.times[m])])
            locs.append(loc)
            fvals.append(fields.values[m][cells])
            n_f += len(cells)
        fvals = np.concatenate(fvals)
        f_mean = float(fvals.mean())
        f_std = float(fvals.std())
    if not locs:
        raise ValueError(f"feature {feature.id} has no member samples")
    allloc = np.vstack(locs)
    return FeatureStats(
        bbox_min=tuple(float(v) for v in allloc.min(axis=0)),
        bbox_max=tuple(float(v) for v in allloc.max(axis=0)),
        p_mean=p_mean, p_std=p_std, f_mean=f_mean, f_std=f_std,
        n_points=n_p, n_fields=n_f,
    )


@dataclass(frozen=True)
class CenterQuery:
    """Conjunction of inclusive range predicates over feature properties."""

    predicates: tuple = ()    # ((property, min, max), ...)

    def __post_init__(self):
        for prop, lo, hi in self.predicates:
            if prop not in QUERYABLE:
                raise QueryError(f"unknown property '{prop}' (allowed: {QUERYABLE})")
            if lo > hi:
                raise QueryError(f"predicate on '{prop}' has min > max")

    @classmethod
    def parse(cls, specs) -> "CenterQuery":
        """Parse 'prop=min:max' strings into a query."""
        preds = []
        for s in specs:
            try:
                prop, rng = s.split("=", 1)
                lo, hi = rng.split(":", 1)
                preds.append((prop.strip(), float(lo), float(hi)))
            except (ValueError, AttributeError):
                raise QueryError(f"malformed predicate '{s}', expected prop=min:max")
        return cls(tuple(preds))


def _property_value(center: ClusterCenter, stats: Optional[FeatureStats], prop: str):
    if prop in ("x_c", "y_c", "z_c", "t_c", "p_c", "f_c", "n_points", "n_fields"):
        return getattr(center, prop)
    if stats is None:
        return None
    if prop == "p_std":
        return stats.p_std
    if prop == "f_std":
        return stats.f_std
    if prop == "extent":
        d = np.asarray(stats.bbox_max[:3]) - np.asarray(stats.bbox_min[:3])
        return float(np.linalg.norm(d))
    raise QueryError(f"unknown property '{prop}'")


def query_centers(centers: Sequence[ClusterCenter], query: CenterQuery,
                  stats: Optional[dict] = None) -> list:
    """Feature ids passing every predicate; absent values never match."""
    out = []
    for c in centers:
        st = stats.get(c.id) if stats else None
        ok = True
        for prop, lo, hi in query.predicates:
            v = _property_value(c, st, prop)
            if v is None or not (lo <= v <= hi):
                ok = False
                break
        if ok:
            out.append(c.id)
    return sorted(out)
