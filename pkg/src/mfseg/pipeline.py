"""End-to-end helpers shared by the CLI and the HTTP service."""

from __future__ import annotations

import time
from typing import Optional

import numpy as np

from . import artifacts, engine, ingest, postproc
from .model import ClusterParams, FieldSet, PointSet, Segmentation


def load_dataset(field_path: Optional[str], points_path: Optional[str],
                 derive: str = "v"):
    """Load whichever inputs were given; returns (points, fields)."""
    fields = ingest.load_field(field_path) if field_path else None
    points = ingest.load_points(points_path, derive) if points_path else None
    if fields is None and points is None:
        raise ingest.IngestError("need at least one of field/points inputs")
    return points, fields


def segment(points: Optional[PointSet], fields: Optional[FieldSet],
            params: ClusterParams, workers: int = 1,
            chunk_size: Optional[int] = None, progress=None):
    """Normalize, derive the extent, and run the engine.

    Returns (Segmentation, NormalizationRecord, per-iteration wall times).
    """
    points, fields, norm = ingest.normalize_variables(points, fields, params.normalize)
    extent = ingest.domain_extent(points, fields)
    iter_times = []
    last = [time.perf_counter()]

    def sink(it, delta):
        now = time.perf_counter()
        iter_times.append(now - last[0])
        last[0] = now
        if progress is not None:
            progress(it, delta)

    seg = engine.run(points, fields, extent, params,
                     workers=workers, chunk_size=chunk_size, progress=sink)
    return seg, norm, iter_times


def segment_to_dir(outdir: str, field_path: Optional[str], points_path: Optional[str],
                   params: ClusterParams, workers: int = 1,
                   chunk_size: Optional[int] = None, derive: str = "v",
                   progress=None) -> Segmentation:
    """Full segment run persisted as artifacts + run report."""
    points, fields = load_dataset(field_path, points_path, derive)
    t0 = time.perf_counter()
    seg, norm, iter_times = segment(points, fields, params, workers, chunk_size, progress)
    total = time.perf_counter() - t0
    artifacts.save_segmentation(outdir, seg, norm)
    artifacts.save_report(outdir, {
        "inputs": {"field": field_path, "points": points_path, "derive": derive},
        "params": params.to_dict(),
        "workers": workers,
        "chunk_size": chunk_size,
        "n_point_samples": int(len(seg.point_labels)),
        "n_field_samples": int(len(seg.field_labels)),
        "iterations_used": seg.iterations_used,
        "converged": seg.converged,
        "iteration_seconds": iter_times,
        "total_seconds": total,
    })
    return seg


def merge_to_dir(outdir: str, eps_m: float):
    """Recompute the merge view for saved artifacts; labels stay untouched."""
    seg, _ = artifacts.load_segmentation(outdir)
    merge_map, merged = postproc.merge_clusters(seg.centers, eps_m)
    artifacts.save_merge(outdir, eps_m, merge_map, merged)
    return merge_map, merged


def features_to_dir(outdir: str, field_path: Optional[str] = None,
                    points_path: Optional[str] = None, derive: Optional[str] = None):
    """Materialize features against the saved segmentation + merge view.

    Input paths default to the ones recorded in the run report.
    """
    seg, _ = artifacts.load_segmentation(outdir)
    report = artifacts.load_report(outdir)
    field_path = field_path or report["inputs"]["field"]
    points_path = points_path or report["inputs"]["points"]
    derive = derive or report["inputs"]["derive"]
    points, fields = load_dataset(field_path, points_path, derive)
    points, fields, _ = ingest.normalize_variables(points, fields, seg.params.normalize)
    points = points if points is not None else PointSet.empty()
    fields = fields if fields is not None else FieldSet.empty()
    try:
        _, merge_map, merged = artifacts.load_merge(outdir)
    except artifacts.ArtifactError:
        merge_map, merged = postproc.merge_clusters(seg.centers, 0.0)
    feats = postproc.build_features(seg, merge_map, points, fields)
    artifacts.save_features(outdir, feats, merged, merge_map)
    return feats, merged, merge_map


def query_dir(outdir: str, predicate_specs) -> list:
    """Range-query the (merged, if available) center table."""
    query = postproc.CenterQuery.parse(predicate_specs)
    try:
        _, merge_map, centers = artifacts.load_merge(outdir)
    except artifacts.ArtifactError:
        seg, _ = artifacts.load_segmentation(outdir)
        centers = list(seg.centers)
    stats = None
    try:
        doc = artifacts.load_features(outdir)
        stats = {f["id"]: _stats_from_dict(f["stats"]) for f in doc["features"]
                 if f["stats"]}
        centers = [postproc.ClusterCenter.from_dict(c) for c in doc["centers"]]
    except artifacts.ArtifactError:
        pass
    return postproc.query_centers(centers, query, stats)


def _stats_from_dict(d: dict) -> postproc.FeatureStats:
    return postproc.FeatureStats(
        bbox_min=tuple(d["bbox_min"]), bbox_max=tuple(d["bbox_max"]),
        p_mean=d["p_mean"], p_std=d["p_std"], f_mean=d["f_mean"], f_std=d["f_std"],
        n_points=d["n_points"], n_fields=d["n_fields"],
    )


def bench_iteration(points: PointSet, fields: FieldSet, params: ClusterParams,
                    workers: int = 1, chunk_size: Optional[int] = None,
                    repeats: int = 3) -> float:
    """Best-of-N wall time of one assign+update iteration."""
    pts, fld, _ = ingest.normalize_variables(points, fields, params.normalize)
    extent = ingest.domain_extent(pts, fld)
    C = engine.interval_distances(extent, params.k)
    field_loc4 = fld.loc4() if len(fld) else np.empty((0, 4))
    seeds = engine.seed_centers(extent, params.k)
    centers = engine.CenterState.from_seeds(seeds)
    grid = engine.CenterGrid(centers.loc, extent, C, params.k)
    pl, fl = engine.assign_iteration(pts, fld, field_loc4, centers, grid,
                                     params, C, workers, chunk_size)
    centers = engine.update_centers(
        centers, *engine.accumulate(pl, pts, fl, fld, field_loc4, len(seeds)))
    best = np.inf
    for _ in range(repeats):
        grid = engine.CenterGrid(centers.loc, extent, C, params.k)
        t0 = time.perf_counter()
        pl, fl = engine.assign_iteration(pts, fld, field_loc4, centers, grid,
                                         params, C, workers, chunk_size)
        engine.update_centers(
            centers, *engine.accumulate(pl, pts, fl, fld, field_loc4, len(seeds)))
        best = min(best, time.perf_counter() - t0)
    return float(best)


def bench_synthetic(n_samples: int, seed: int = 0) -> tuple:
    """A drifting multi-blob dataset sized to ~n_samples total samples.

    Roughly 80% field cells, 20% point samples.
    """
    n_field = int(n_samples * 0.8)
    n_point = n_samples - n_field
    n_steps = 8
    # fixed x/y resolution; z scales with the target so counts stay proportional
    nx = ny = 40
    nz = max(int(round(n_field / (n_steps * nx * ny))), 1)
    n_traj = max(n_point // n_steps, 1)
    ext = ingest.DomainExtent(0, 10, 0, 10, 0, 10, 0, 4)
    blobs = tuple(
        ingest.Blob(label=i + 1, center=(2.5 + 1.5 * i, 2.5 + 1.5 * i, 5.0),
                    radii=(1.2, 1.2, 1.2), t_start=0.0, t_end=4.0,
                    velocity=(0.5, 0.2, 0.0), field_value=1.0 + i,
                    point_value=2.0 + i, n_trajectories=n_traj // 4)
        for i in range(3))
    spec = ingest.SyntheticSpec(
        extent=ext, grid_dims=(nx, ny, nz), n_field_steps=n_steps,
        n_point_steps=n_steps, blobs=blobs, background_field=0.0,
        background_point=0.0,
        n_background_trajectories=max(n_traj - 3 * (n_traj // 4), 1),
        field_noise=0.05, point_noise=0.05, seed=seed)
    fs, points, _, _ = ingest.generate_synthetic(spec)
    return points, fs
