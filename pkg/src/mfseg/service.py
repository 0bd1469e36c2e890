"""HTTP facade over saved segmentation artifacts.

Single-session, single-dataset research companion: one engine run at a
time, merge/query reads always serve the last completed result.
"""

from __future__ import annotations

import itertools
import threading
from typing import Optional

import numpy as np
from fastapi import FastAPI, HTTPException, Request
from pydantic import BaseModel, Field

from . import artifacts, ingest, pipeline, postproc
from .model import ClusterParams, FieldSet, ParameterError, PointSet


class SegmentRequest(BaseModel):
    k: list[int] = Field(default=[2, 2, 2, 2], min_length=4, max_length=4)
    c_f: float = Field(default=1.0, gt=0)
    w_d: float = Field(default=1.0, ge=0)
    w_p: float = Field(default=1.0, ge=0)
    w_f: float = Field(default=1.0, ge=0)
    eps_c: float = Field(default=0.01, gt=0)
    eps_m: float = Field(default=0.0, ge=0)
    max_iterations: int = Field(default=50, ge=1)
    normalize: bool = True
    workers: int = Field(default=1, ge=1)
    chunk_size: Optional[int] = Field(default=None, ge=1)

    def to_params(self) -> ClusterParams:
        return ClusterParams(k=tuple(self.k), c_f=self.c_f, w_d=self.w_d,
                             w_p=self.w_p, w_f=self.w_f, eps_c=self.eps_c,
                             eps_m=self.eps_m, max_iterations=self.max_iterations,
                             normalize=self.normalize)


class MergeRequest(BaseModel):
    eps_m: float = Field(ge=0)


class SessionState:
    """Loaded dataset + latest results + job table, guarded by one lock."""

    def __init__(self, outdir: str, field_path: Optional[str],
                 points_path: Optional[str], derive: str):
        self.outdir = outdir
        self.field_path = field_path
        self.points_path = points_path
        self.derive = derive
        self.lock = threading.Lock()
        self.jobs: dict = {}
        self.job_counter = itertools.count(1)
        self.running_job: Optional[int] = None

        self.points: Optional[PointSet] = None
        self.fields: Optional[FieldSet] = None
        if field_path or points_path:
            self.points, self.fields = pipeline.load_dataset(field_path, points_path, derive)

        self.segmentation = None
        self.merge_map: Optional[dict] = None
        self.merged_centers = None
        self.features = None
        try:
            self.segmentation, _ = artifacts.load_segmentation(outdir)
            self._reset_merge_view(0.0)
        except artifacts.ArtifactError:
            pass

    def _reset_merge_view(self, eps_m: float) -> None:
        """Recompute merge_map + merged table; invalidate cached features."""
        self.merge_map, self.merged_centers = postproc.merge_clusters(
            self.segmentation.centers, eps_m)
        self.features = None

    def norm_samples(self):
        """Dataset in the value space the saved labels were computed in."""
        pts, fld, _ = ingest.normalize_variables(
            self.points, self.fields, self.segmentation.params.normalize)
        pts = pts if pts is not None else PointSet.empty()
        fld = fld if fld is not None else FieldSet.empty()
        return pts, fld

    def get_features(self) -> list:
        if self.features is None:
            pts, fld = self.norm_samples()
            self.features = postproc.build_features(
                self.segmentation, self.merge_map, pts, fld)
        return self.features


def _require_segmentation(state: SessionState):
    if state.segmentation is None:
        raise HTTPException(status_code=404, detail="no completed segmentation available")


def _center_row(c, stats: Optional[postproc.FeatureStats]) -> dict:
    row = c.to_dict()
    row["p_std"] = stats.p_std if stats else None
    row["f_std"] = stats.f_std if stats else None
    row["bbox_min"] = list(stats.bbox_min) if stats else None
    row["bbox_max"] = list(stats.bbox_max) if stats else None
    return row


def create_app(outdir: str, field_path: Optional[str] = None,
               points_path: Optional[str] = None, derive: str = "v") -> FastAPI:
    app = FastAPI(title="mfseg service")
    state = SessionState(outdir, field_path, points_path, derive)
    app.state.session = state

    @app.post("/api/segment")
    def endpoint_segment(req: SegmentRequest):
        if state.points is None and state.fields is None:
            raise HTTPException(status_code=409, detail="no dataset loaded")
        try:
            params = req.to_params()
        except ParameterError as e:
            raise HTTPException(status_code=422, detail=str(e))
        with state.lock:
            if state.running_job is not None:
                raise HTTPException(status_code=409,
                                    detail=f"job {state.running_job} is still running")
            job_id = next(state.job_counter)
            job = {"id": job_id, "kind": "segment", "status": "queued",
                   "progress": {"iteration": 0, "max_delta": None}, "error": None}
            state.jobs[job_id] = job
            state.running_job = job_id

        def progress(it, delta):
            job["progress"] = {"iteration": it, "max_delta": delta}

        def work():
            job["status"] = "running"
            try:
                seg = pipeline.segment_to_dir(
                    state.outdir, state.field_path, state.points_path, params,
                    workers=req.workers, chunk_size=req.chunk_size,
                    derive=state.derive, progress=progress)
                with state.lock:
                    state.segmentation = seg
                    state._reset_merge_view(params.eps_m)
                job["status"] = "done"
            except Exception as e:  # surfaced through the job table
                job["status"] = "failed"
                job["error"] = str(e)
            finally:
                with state.lock:
                    state.running_job = None

        threading.Thread(target=work, daemon=True).start()
        return {"job_id": job_id}

    @app.get("/api/jobs/{job_id}")
    def endpoint_job(job_id: int):
        job = state.jobs.get(job_id)
        if job is None:
            raise HTTPException(status_code=404, detail=f"unknown job {job_id}")
        return job

    @app.get("/api/centers")
    def endpoint_centers(request: Request, page: int = 1, page_size: int = 50):
        _require_segmentation(state)
        specs = [f"{k}={v}" for k, v in request.query_params.multi_items()
                 if k not in ("page", "page_size")]
        try:
            query = postproc.CenterQuery.parse(specs)
        except postproc.QueryError as e:
            raise HTTPException(status_code=422, detail=str(e))
        with state.lock:
            centers = list(state.merged_centers)
            feats = state.get_features()
        stats = {f.id: f.stats for f in feats}
        ids = set(postproc.query_centers(centers, query, stats))
        rows = [_center_row(c, stats.get(c.id)) for c in centers if c.id in ids]
        rows.sort(key=lambda r: r["id"])
        n_total = len(rows)
        start = (page - 1) * page_size
        return {"centers": rows[start:start + page_size], "page": page,
                "page_size": page_size, "n_total": n_total}

    @app.get("/api/features/{feature_id}")
    def endpoint_feature(feature_id: int, t: Optional[int] = None,
                         slice: Optional[str] = None, window: Optional[str] = None):
        _require_segmentation(state)
        with state.lock:
            feats = {f.id: f for f in state.get_features()}
        feat = feats.get(feature_id)
        if feat is None:
            raise HTTPException(status_code=404, detail=f"unknown feature {feature_id}")
        pts, fld = state.norm_samples()

        t_lo, t_hi = -np.inf, np.inf
        if window is not None:
            try:
                lo, hi = window.split(":", 1)
                t_lo, t_hi = float(lo), float(hi)
            except ValueError:
                raise HTTPException(status_code=422,
                                    detail=f"malformed window '{window}', expected t1:t2")

        polylines = []
        for line in feat.polylines:
            tt = pts.t[line]
            keep = (tt >= t_lo) & (tt <= t_hi)
            if keep.sum() < 2:
                continue
            idx = line[keep]
            polylines.append({
                "trajectory_id": int(pts.traj_id[idx[0]]),
                "t": [float(v) for v in pts.t[idx]],
                "xyz": pts.xyz[idx].tolist(),
                "values": [float(v) for v in pts.value[idx]],
            })

        voxels = {"timestep": t, "axis": None, "index": None, "cells": [], "values": []}
        if t is not None:
            if len(fld.times) == 0 or t < 0 or t >= len(fld.times):
                raise HTTPException(status_code=422,
                                    detail=f"timestep {t} out of range")
            cells = feat.voxels.get(t, np.empty(0, np.int64))
            nx, ny, nz = fld.dims
            i = cells % nx
            j = (cells // nx) % ny
            k = cells // (nx * ny)
            if slice is not None:
                try:
                    axis, index = slice.split(":", 1)
                    index = int(index)
                    sel = {"x": i, "y": j, "z": k}[axis]
                except (ValueError, KeyError):
                    raise HTTPException(status_code=422,
                                        detail=f"malformed slice '{slice}', expected axis:index")
                keep = sel == index
                cells, i, j, k = cells[keep], i[keep], j[keep], k[keep]
                voxels["axis"] = axis
                voxels["index"] = index
            vals = fld.values[t][cells] if len(cells) else np.empty(0)
            voxels["cells"] = np.column_stack([i, j, k]).tolist() if len(cells) else []
            voxels["values"] = [float(v) for v in vals]

        return {"id": feat.id, "member_clusters": feat.member_clusters,
                "polylines": polylines, "voxels": voxels,
                "stats": feat.stats.to_dict() if feat.stats else None}

    @app.post("/api/merge")
    def endpoint_merge(req: MergeRequest):
        _require_segmentation(state)
        with state.lock:
            state._reset_merge_view(req.eps_m)
            merged = state.merged_centers
            merge_map = dict(state.merge_map)
        artifacts.save_merge(state.outdir, req.eps_m, merge_map, merged)
        return {"eps_m": req.eps_m,
                "merge_map": {str(k): v for k, v in sorted(merge_map.items())},
                "centers": [c.to_dict() for c in merged]}

    @app.get("/api/dataset/meta")
    def endpoint_meta():
        meta = {
            "field": None, "points": None,
            "has_segmentation": state.segmentation is not None,
        }
        if state.fields is not None:
            meta["field"] = {
                "dims": list(state.fields.dims),
                "origin": [float(v) for v in state.fields.origin],
                "spacing": [float(v) for v in state.fields.spacing],
                "times": [float(v) for v in state.fields.times],
            }
        if state.points is not None:
            meta["points"] = {
                "n_samples": len(state.points),
                "n_trajectories": int(len(np.unique(state.points.traj_id))),
                "t_min": float(state.points.t.min()) if len(state.points) else None,
                "t_max": float(state.points.t.max()) if len(state.points) else None,
            }
        if state.segmentation is not None:
            meta["params"] = state.segmentation.params.to_dict()
            meta["iterations_used"] = state.segmentation.iterations_used
            meta["converged"] = state.segmentation.converged
        return meta

    return app
