"""On-disk artifact schema for segmentation runs.

A run directory contains:

* segmentation.json  - params, extent, center table, iteration info
* point_labels.bin   - one little-endian int32 per point record
* field_labels.bin   - one little-endian int32 per field cell per timestep
* report.json        - timings and environment notes (not reproducible byte
                       for byte, kept separate from the deterministic files)
* merge.json         - merge_map + merged center table (written by merge)
* features.json      - feature export document (written by features)
"""

from __future__ import annotations

import json
import os
from typing import Optional

import numpy as np

from .ingest import NormalizationRecord
from .model import ClusterCenter, ClusterParams, DomainExtent, Segmentation

SEGMENTATION_JSON = "segmentation.json"
POINT_LABELS_BIN = "point_labels.bin"
FIELD_LABELS_BIN = "field_labels.bin"
REPORT_JSON = "report.json"
MERGE_JSON = "merge.json"
FEATURES_JSON = "features.json"


class ArtifactError(ValueError):
    """Missing or inconsistent run artifacts."""


def _dump(path: str, obj) -> None:
    with open(path, "w") as f:
        json.dump(obj, f, sort_keys=True, indent=1)
        f.write("\n")


def _load(path: str):
    if not os.path.exists(path):
        raise ArtifactError(f"missing artifact: {path}")
    with open(path) as f:
        return json.load(f)


def save_segmentation(outdir: str, seg: Segmentation,
                      norm: Optional[NormalizationRecord] = None) -> None:
    os.makedirs(outdir, exist_ok=True)
    doc = {
        "params": seg.params.to_dict(),
        "extent": seg.extent.to_dict(),
        "iterations_used": seg.iterations_used,
        "converged": seg.converged,
        "centers": [c.to_dict() for c in seg.centers],
        "normalization": norm.to_dict() if norm else None,
        "n_point_samples": int(len(seg.point_labels)),
        "n_field_samples": int(len(seg.field_labels)),
    }
    _dump(os.path.join(outdir, SEGMENTATION_JSON), doc)
    seg.point_labels.astype("<i4").tofile(os.path.join(outdir, POINT_LABELS_BIN))
    seg.field_labels.astype("<i4").tofile(os.path.join(outdir, FIELD_LABELS_BIN))


def load_segmentation(outdir: str):
    """Returns (Segmentation, NormalizationRecord or None)."""
    doc = _load(os.path.join(outdir, SEGMENTATION_JSON))
    point_labels = np.fromfile(os.path.join(outdir, POINT_LABELS_BIN), dtype="<i4")
    field_labels = np.fromfile(os.path.join(outdir, FIELD_LABELS_BIN), dtype="<i4")
    if len(point_labels) != doc["n_point_samples"]:
        raise ArtifactError(f"{outdir}: point label count mismatch")
    if len(field_labels) != doc["n_field_samples"]:
        raise ArtifactError(f"{outdir}: field label count mismatch")
    seg = Segmentation(
        point_labels=point_labels,
        field_labels=field_labels,
        centers=[ClusterCenter.from_dict(c) for c in doc["centers"]],
        params=ClusterParams.from_dict(doc["params"]),
        extent=DomainExtent.from_dict(doc["extent"]),
        iterations_used=doc["iterations_used"],
        converged=doc["converged"],
    )
    norm = (NormalizationRecord.from_dict(doc["normalization"])
            if doc.get("normalization") else None)
    return seg, norm


def save_report(outdir: str, report: dict) -> None:
    _dump(os.path.join(outdir, REPORT_JSON), report)


def load_report(outdir: str) -> dict:
    return _load(os.path.join(outdir, REPORT_JSON))


def save_merge(outdir: str, eps_m: float, merge_map: dict, merged_centers) -> None:
    doc = {
        "eps_m": eps_m,
        "merge_map": {str(k): v for k, v in sorted(merge_map.items())},
        "merged_centers": [c.to_dict() for c in merged_centers],
    }
    _dump(os.path.join(outdir, MERGE_JSON), doc)


def load_merge(outdir: str):
    doc = _load(os.path.join(outdir, MERGE_JSON))
    merge_map = {int(k): v for k, v in doc["merge_map"].items()}
    merged = [ClusterCenter.from_dict(c) for c in doc["merged_centers"]]
    return doc["eps_m"], merge_map, merged


def save_features(outdir: str, features, merged_centers, merge_map: dict) -> None:
    doc = {
        "merge_map": {str(k): v for k, v in sorted(merge_map.items())},
        "centers": [c.to_dict() for c in merged_centers],
        "features": [{
            "id": f.id,
            "member_clusters": f.member_clusters,
            "polylines": [[int(i) for i in line] for line in f.polylines],
            "isolated_points": f.isolated_points,
            "voxels": {str(m): [int(i) for i in cells] for m, cells in sorted(f.voxels.items())},
            "stats": f.stats.to_dict() if f.stats else None,
        } for f in features],
    }
    _dump(os.path.join(outdir, FEATURES_JSON), doc)


def load_features(outdir: str) -> dict:
    return _load(os.path.join(outdir, FEATURES_JSON))
