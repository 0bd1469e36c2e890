"""Iterative windowed clustering over joint point + field samples.

The scheme seeds centers on a rectilinear 4D grid, assigns every sample to
the metric-minimizing center among those whose location lies within one
grid interval of the sample in each dimension, recomputes centers as member
means, and repeats until the relative change of every center value drops
below the convergence threshold.

Determinism contract: labels are a pure function of (samples, extent,
params). Worker count and chunk size only batch the assignment phase;
accumulation runs once over the full label arrays, so results are
bit-identical across any worker/chunk configuration.
"""

from __future__ import annotations

import itertools
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from .model import (DELTA, ClusterCenter, ClusterParams, DomainExtent,
                    FieldSet, PointSet, Segmentation, interval_distances,
                    space_time_distance)

ProgressSink = Callable[[int, float], None]


def seed_centers(extent: DomainExtent, k) -> np.ndarray:
    """(K, 4) seed locations at the midpoints of the k-grid cells.

    Ids run dense in seeding order: t-major, then z, y, x (x fastest).
    """
    C = interval_distances(extent, k)
    mins = extent.mins
    axes = [mins[d] + (np.arange(k[d]) + 0.5) * C[d] for d in range(4)]
    kx, ky, kz, kt = k
    out = np.empty((kx * ky * kz * kt, 4))
    i = 0
    for it, iz, iy, ix in itertools.product(range(kt), range(kz), range(ky), range(kx)):
        out[i] = (axes[0][ix], axes[1][iy], axes[2][iz], axes[3][it])
        i += 1
    return out


@dataclass
class CenterState:
    """Mutable per-iteration view of all clusters (arrays indexed by id)."""

    loc: np.ndarray       # (K, 4)
    pval: np.ndarray      # (K,) point-value average, NaN backed by has_p
    fval: np.ndarray      # (K,)
    has_p: np.ndarray     # (K,) bool
    has_f: np.ndarray     # (K,) bool
    n_points: np.ndarray  # (K,) int64
    n_fields: np.ndarray  # (K,) int64
    dormant: np.ndarray   # (K,) bool

    @classmethod
    def from_seeds(cls, seeds: np.ndarray) -> "CenterState":
        K = len(seeds)
        return cls(
            loc=seeds.copy(),
            pval=np.full(K, np.nan), fval=np.full(K, np.nan),
            has_p=np.zeros(K, bool), has_f=np.zeros(K, bool),
            n_points=np.zeros(K, np.int64), n_fields=np.zeros(K, np.int64),
            dormant=np.zeros(K, bool),
        )

    def to_table(self) -> list:
        """Live clusters only, as the public center table."""
        out = []
        for cid in range(len(self.loc)):
            if self.n_points[cid] + self.n_fields[cid] == 0:
                continue
            out.append(ClusterCenter(
                id=cid,
                x_c=float(self.loc[cid, 0]), y_c=float(self.loc[cid, 1]),
                z_c=float(self.loc[cid, 2]), t_c=float(self.loc[cid, 3]),
                p_c=float(self.pval[cid]) if self.has_p[cid] else None,
                f_c=float(self.fval[cid]) if self.has_f[cid] else None,
                n_points=int(self.n_points[cid]), n_fields=int(self.n_fields[cid]),
            ))
        return out


class CenterGrid:
    """Spatial-temporal binning of centers into C-sized bins.

    Bin index per dimension is floor((coord - min) / C), clipped to the seed
    grid, so a center always occupies exactly one bin even after drifting.
    """

    _OFFSETS = np.array(list(itertools.product((-1, 0, 1), repeat=4)))

    def __init__(self, loc: np.ndarray, extent: DomainExtent, C: np.ndarray, k):
        self.C = C
        self.mins = extent.mins
        self.k = np.asarray(k)
        idx = self._bin_indices(loc)
        flat = self._flatten(idx)
        order = np.argsort(flat, kind="stable")
        self.bins = {}
        uniq, starts = np.unique(flat[order], return_index=True)
        for key, grp in zip(uniq, np.split(order, starts[1:])):
            self.bins[int(key)] = np.sort(grp)
        self._cand_cache = {}

    def _bin_indices(self, loc: np.ndarray) -> np.ndarray:
        idx = np.floor((loc - self.mins) / self.C).astype(np.int64)
        return np.clip(idx, 0, self.k - 1)

    def _flatten(self, idx: np.ndarray) -> np.ndarray:
        kx, ky, kz, kt = self.k
        return ((idx[..., 3] * kz + idx[..., 2]) * ky + idx[..., 1]) * kx + idx[..., 0]

    def candidates(self, bin4: np.ndarray) -> np.ndarray:
        """Sorted center ids in the 3^4 neighborhood of one sample bin."""
        key = self._flatten(np.asarray(bin4))
        cached = self._cand_cache.get(int(key))
        if cached is not None:
            return cached
        neigh = bin4 + self._OFFSETS
        ok = np.all((neigh >= 0) & (neigh < self.k), axis=1)
        keys = np.unique(self._flatten(neigh[ok]))
        lists = [self.bins[int(k)] for k in keys if int(k) in self.bins]
        out = np.sort(np.concatenate(lists)) if lists else np.empty(0, np.int64)
        self._cand_cache[int(key)] = out
        return out

    def sample_bins(self, loc: np.ndarray) -> np.ndarray:
        return self._bin_indices(loc)


def _metric(loc4, vals, cloc, cval, chas, wv, wd, cf):
    """(n_samples, n_centers) distance matrix for one sample kind.

    Centers lacking this kind's average contribute no value term.
    """
    d = cloc[None, :, :] - loc4[:, None, :]
    sst = np.sqrt(d[..., 0] ** 2 + d[..., 1] ** 2 + d[..., 2] ** 2 + (cf * d[..., 3]) ** 2)
    if wv > 0:
        vdiff = np.abs(vals[:, None] - np.where(chas, cval, 0.0)[None, :])
        vterm = wv * np.where(chas[None, :], vdiff, 0.0)
    else:
        vterm = 0.0
    return vterm + wd * sst


def point_distance(loc4, value: float, center: ClusterCenter, params: ClusterParams) -> float:
    """w_p |p_s - p_c| + w_d S_st; the value term drops out when p_c is absent."""
    vterm = params.w_p * abs(value - center.p_c) if center.p_c is not None else 0.0
    return float(vterm + params.w_d * space_time_distance(loc4, center.loc4, params.c_f))


def field_distance(loc4, value: float, center: ClusterCenter, params: ClusterParams) -> float:
    """w_f |f_s - f_c| + w_d S_st; the value term drops out when f_c is absent."""
    vterm = params.w_f * abs(value - center.f_c) if center.f_c is not None else 0.0
    return float(vterm + params.w_d * space_time_distance(loc4, center.loc4, params.c_f))


def _assign_chunk(loc4, vals, cloc, cval, chas, grid: CenterGrid,
                  wv: float, wd: float, cf: float, C: np.ndarray) -> np.ndarray:
    """Window-limited argmin assignment of one chunk of samples."""
    n = len(loc4)
    labels = np.full(n, -1, np.int64)
    bins = grid.sample_bins(loc4)
    flat = grid._flatten(bins)
    order = np.argsort(flat, kind="stable")
    _, starts = np.unique(flat[order], return_index=True)
    stranded = []
    for grp in np.split(order, starts[1:]):
        cand = grid.candidates(bins[grp[0]])
        if len(cand) == 0:
            stranded.append(grp)
            continue
        # box test: sample within +-C of the candidate center in every dim
        diff = np.abs(cloc[cand][None, :, :] - loc4[grp][:, None, :])
        inbox = np.all(diff <= C[None, None, :], axis=2)
        D = _metric(loc4[grp], vals[grp], cloc[cand], cval[cand], chas[cand], wv, wd, cf)
        D = np.where(inbox, D, np.inf)
        best = np.argmin(D, axis=1)          # first minimum -> lowest candidate id
        covered = inbox.any(axis=1)
        labels[grp[covered]] = cand[best[covered]]
        if not covered.all():
            stranded.append(grp[~covered])
    for grp in stranded:
        for s in grp:
            labels[s] = _fallback_assign(loc4[s], vals[s], cloc, cval, chas, wv, wd, cf, C)
    return labels


def _fallback_assign(loc4, val, cloc, cval, chas, wv, wd, cf, C) -> int:
    """Doubling-window search for a sample no center window covers."""
    mult = 2.0
    while True:
        inbox = np.all(np.abs(cloc - loc4) <= mult * C, axis=1)
        if inbox.any():
            cand = np.flatnonzero(inbox)
            D = _metric(loc4[None, :], np.atleast_1d(val), cloc[cand],
                        cval[cand], chas[cand], wv, wd, cf)[0]
            return int(cand[np.argmin(D)])
        mult *= 2.0


def assign_iteration(points: PointSet, fields: FieldSet, field_loc4, centers: CenterState,
                     grid: CenterGrid, params: ClusterParams, C: np.ndarray,
                     workers: int = 1, chunk_size: Optional[int] = None):
    """Assign all samples of both kinds; returns (point_labels, field_labels)."""
    point_labels = _assign_kind(points.loc4 if len(points) else np.empty((0, 4)),
                                points.value, centers.pval, centers.has_p,
                                centers, grid, params.w_p, params, C, workers, chunk_size)
    field_labels = _assign_kind(field_loc4 if len(fields) else np.empty((0, 4)),
                                fields.flat_values(), centers.fval, centers.has_f,
                                centers, grid, params.w_f, params, C, workers, chunk_size)
    return point_labels, field_labels


def _assign_kind(loc4, vals, cval, chas, centers, grid, wv, params, C, workers, chunk_size):
    n = len(loc4)
    labels = np.empty(n, np.int64)
    if n == 0:
        return labels
    chunk = n if not chunk_size else int(chunk_size)
    ranges = [(s, min(s + chunk, n)) for s in range(0, n, chunk)]

    def work(r):
        s, e = r
        return _assign_chunk(loc4[s:e], vals[s:e], centers.loc, cval, chas, grid,
                             wv, params.w_d, params.c_f, C)

    if workers > 1 and len(ranges) > 1:
        with ThreadPoolExecutor(max_workers=workers) as ex:
            results = list(ex.map(work, ranges))
    else:
        results = [work(r) for r in ranges]
    for (s, e), res in zip(ranges, results):
        labels[s:e] = res
    return labels


def accumulate(point_labels, points: PointSet, field_labels, fields: FieldSet,
               field_loc4, K: int):
    """Per-cluster sums over the full label arrays (chunking-independent)."""
    sums = np.zeros((K, 4))
    psum = np.zeros(K)
    fsum = np.zeros(K)
    n_p = np.zeros(K, np.int64)
    n_f = np.zeros(K, np.int64)
    if len(points):
        loc = points.loc4
        for d in range(4):
            sums[:, d] += np.bincount(point_labels, weights=loc[:, d], minlength=K)
        psum += np.bincount(point_labels, weights=points.value, minlength=K)
        n_p += np.bincount(point_labels, minlength=K)
    if len(fields):
        for d in range(4):
            sums[:, d] += np.bincount(field_labels, weights=field_loc4[:, d], minlength=K)
        fsum += np.bincount(field_labels, weights=fields.flat_values(), minlength=K)
        n_f += np.bincount(field_labels, minlength=K)
    return sums, psum, fsum, n_p, n_f


def update_centers(centers: CenterState, sums, psum, fsum, n_p, n_f) -> CenterState:
    """New centers as member means; empty clusters freeze and go dormant."""
    K = len(centers.loc)
    total = n_p + n_f
    live = total > 0
    new = CenterState.from_seeds(centers.loc)
    new.loc[live] = sums[live] / total[live, None]
    new.loc[~live] = centers.loc[~live]
    new.has_p = n_p > 0
    new.has_f = n_f > 0
    new.pval = np.where(new.has_p, psum / np.maximum(n_p, 1), np.nan)
    new.fval = np.where(new.has_f, fsum / np.maximum(n_f, 1), np.nan)
    new.n_points = n_p
    new.n_fields = n_f
    new.dormant = ~live
    # frozen dormant centers keep their previous averages for display purposes
    new.pval[~live] = centers.pval[~live]
    new.fval[~live] = centers.fval[~live]
    new.has_p[~live] = centers.has_p[~live]
    new.has_f[~live] = centers.has_f[~live]
    return new


def _relative_change(old: np.ndarray, new: np.ndarray) -> np.ndarray:
    return np.abs(new - old) / (np.abs(old) + DELTA)


def has_converged(old: CenterState, new: CenterState, eps_c: float) -> bool:
    """True when every non-dormant center's six values changed by < eps_c."""
    active = ~new.dormant
    if not active.any():
        return True
    if np.any(_relative_change(old.loc[active], new.loc[active]) >= eps_c):
        return False
    for oval, ohas, nval, nhas in ((old.pval, old.has_p, new.pval, new.has_p),
                                   (old.fval, old.has_f, new.fval, new.has_f)):
        both = active & ohas & nhas
        if np.any(ohas[active] != nhas[active]):
            return False
        if np.any(_relative_change(oval[both], nval[both]) >= eps_c):
            return False
    return True


def max_center_delta(old: CenterState, new: CenterState) -> float:
    """Largest relative change over active centers (progress reporting)."""
    active = ~new.dormant
    if not active.any():
        return 0.0
    deltas = [_relative_change(old.loc[active], new.loc[active]).max()]
    for oval, nval, both in ((old.pval, new.pval, active & old.has_p & new.has_p),
                             (old.fval, new.fval, active & old.has_f & new.has_f)):
        if both.any():
            deltas.append(_relative_change(oval[both], nval[both]).max())
    return float(max(deltas))


def run(points: Optional[PointSet], fields: Optional[FieldSet], extent: DomainExtent,
        params: ClusterParams, workers: int = 1, chunk_size: Optional[int] = None,
        progress: Optional[ProgressSink] = None) -> Segmentation:
    """Full clustering run: seed, iterate, converge.

    Either sample kind may be empty. Non-convergence within max_iterations is
    reported via Segmentation.converged, not an error.
    """
    points = points if points is not None else PointSet.empty()
    fields = fields if fields is not None else FieldSet.empty()
    if len(points) == 0 and len(fields) == 0:
        raise ValueError("no samples of either kind")
    if len(points) > 0 and params.w_d + params.w_p <= 0:
        raise ValueError("point metric is identically zero")
    if len(fields) > 0 and params.w_d + params.w_f <= 0:
        raise ValueError("field metric is identically zero")

    C = interval_distances(extent, params.k)
    field_loc4 = fields.loc4() if len(fields) else np.empty((0, 4))
    seeds = seed_centers(extent, params.k)
    K = len(seeds)
    centers = CenterState.from_seeds(seeds)

    # initial assignment: pure space-time nearest seed (values not yet set)
    grid = CenterGrid(centers.loc, extent, C, params.k)
    zero_value = ClusterParams(k=params.k, c_f=params.c_f, w_d=1.0, w_p=0.0, w_f=0.0,
                               eps_c=params.eps_c, max_iterations=params.max_iterations)
    point_labels, field_labels = assign_iteration(points, fields, field_loc4, centers,
                                                  grid, zero_value, C, workers, chunk_size)
    centers = update_centers(centers, *accumulate(point_labels, points,
                                                  field_labels, fields, field_loc4, K))

    iterations = 0
    converged = False
    for it in range(1, params.max_iterations + 1):
        grid = CenterGrid(centers.loc, extent, C, params.k)
        point_labels, field_labels = assign_iteration(points, fields, field_loc4, centers,
                                                      grid, params, C, workers, chunk_size)
        new_centers = update_centers(centers, *accumulate(point_labels, points,
                                                          field_labels, fields,
                                                          field_loc4, K))
        delta = max_center_delta(centers, new_centers)
        converged = has_converged(centers, new_centers, params.eps_c)
        centers = new_centers
        iterations = it
        if progress is not None:
            progress(it, delta)
        if converged:
            break

    return Segmentation(
        point_labels=point_labels.astype(np.int32),
        field_labels=field_labels.astype(np.int32),
        centers=centers.to_table(),
        params=params,
        extent=extent,
        iterations_used=iterations,
        converged=converged,
    )


def initial_assignment(points: PointSet, fields: FieldSet, extent: DomainExtent,
                       params: ClusterParams, workers: int = 1,
                       chunk_size: Optional[int] = None):
    """Nearest-seed assignment under the space-time metric only."""
    C = interval_distances(extent, params.k)
    seeds = seed_centers(extent, params.k)
    centers = CenterState.from_seeds(seeds)
    grid = CenterGrid(centers.loc, extent, C, params.k)
    zero_value = ClusterParams(k=params.k, c_f=params.c_f, w_d=1.0, w_p=0.0, w_f=0.0,
                               eps_c=params.eps_c)
    field_loc4 = fields.loc4() if len(fields) else np.empty((0, 4))
    return assign_iteration(points, fields, field_loc4, centers, grid, zero_value, C,
                            workers, chunk_size)
