"""Dataset loading, linking, normalization, and synthetic data generation.

On-disk formats:

* Field data: a JSON metadata sidecar naming one raw little-endian scalar
  array file per timestep (x-fastest order), keys: dims, origin, spacing,
  times, variable, data_files, dtype (f32|f64), order (x_fastest).
* Point data: comma-delimited text with a header row; required columns
  id, t, x, y, z; every other column is a raw variable.
"""

from __future__ import annotations

import json
import os
import warnings
from dataclasses import dataclass, field as dc_field
from typing import Optional

import numpy as np
import pandas as pd

from .model import DomainExtent, FieldSet, PointSet

FIELD_DTYPES = {"f32": "<f4", "f64": "<f8"}


class IngestError(ValueError):
    """Malformed or inconsistent input data."""


class SyntheticSpecError(ValueError):
    """Invalid synthetic dataset specification."""


# ---------------------------------------------------------------------------
# field format

def load_field(path: str) -> FieldSet:
    """Read a field metadata document and its per-timestep raw arrays."""
    try:
        with open(path) as f:
            meta = json.load(f)
    except FileNotFoundError:
        raise
    except (json.JSONDecodeError, UnicodeDecodeError) as e:
        raise IngestError(f"{path}: malformed field metadata: {e}")

    for key in ("dims", "origin", "spacing", "times", "variable", "data_files", "dtype", "order"):
        if key not in meta:
            raise IngestError(f"{path}: metadata missing key '{key}'")
    if meta["order"] != "x_fastest":
        raise IngestError(f"{path}: unsupported order '{meta['order']}'")
    if meta["dtype"] not in FIELD_DTYPES:
        raise IngestError(f"{path}: unsupported dtype '{meta['dtype']}'")

    dims = tuple(int(d) for d in meta["dims"])
    times = np.asarray(meta["times"], dtype=float)
    if len(times) != len(meta["data_files"]):
        raise IngestError(f"{path}: {len(times)} times but {len(meta['data_files'])} data files")
    if len(times) > 1 and not np.all(np.diff(times) > 0):
        raise IngestError(f"{path}: timestep times must strictly increase")

    n_cells = dims[0] * dims[1] * dims[2]
    dtype = np.dtype(FIELD_DTYPES[meta["dtype"]])
    base = os.path.dirname(os.path.abspath(path))
    values = np.empty((len(times), n_cells))
    for m, fname in enumerate(meta["data_files"]):
        fpath = os.path.join(base, fname)
        raw = np.fromfile(fpath, dtype=dtype)
        if len(raw) != n_cells:
            raise IngestError(
                f"{fpath}: expected {n_cells} values ({n_cells * dtype.itemsize} bytes), "
                f"got {len(raw)} (byte offset {len(raw) * dtype.itemsize})")
        values[m] = raw.astype(np.float64)

    return FieldSet(dims, np.asarray(meta["origin"], dtype=float),
                    np.asarray(meta["spacing"], dtype=float), times, values)


def write_field(path: str, fs: FieldSet, variable: str = "v", dtype: str = "f64") -> None:
    """Write the metadata sidecar + one raw array file per timestep."""
    if dtype not in FIELD_DTYPES:
        raise IngestError(f"unsupported dtype '{dtype}'")
    base = os.path.dirname(os.path.abspath(path))
    os.makedirs(base, exist_ok=True)
    stem = os.path.splitext(os.path.basename(path))[0]
    data_files = [f"{stem}_{m:04d}.bin" for m in range(len(fs.times))]
    meta = {
        "dims": list(fs.dims),
        "origin": [float(v) for v in fs.origin],
        "spacing": [float(v) for v in fs.spacing],
        "times": [float(t) for t in fs.times],
        "variable": variable,
        "data_files": data_files,
        "dtype": dtype,
        "order": "x_fastest",
    }
    np_dtype = np.dtype(FIELD_DTYPES[dtype])
    for m, fname in enumerate(data_files):
        fs.values[m].astype(np_dtype).tofile(os.path.join(base, fname))
    with open(path, "w") as f:
        json.dump(meta, f, indent=1, sort_keys=True)
        f.write("\n")


# ---------------------------------------------------------------------------
# point format + derived variables

REQUIRED_COLUMNS = ("id", "t", "x", "y", "z")
_AGGREGATE_NAMES = ("displacement", "path_length", "speed")


def _trajectory_aggregates(df: pd.DataFrame) -> dict:
    """Per-trajectory geometry aggregates, broadcast to each sample.

    displacement and path_length are whole-trajectory scalars; speed is the
    per-sample segment speed (first sample copies the second's value).
    """
    n = len(df)
    displacement = np.zeros(n)
    path_length = np.zeros(n)
    speed = np.zeros(n)
    xyz = df[["x", "y", "z"]].to_numpy(float)
    t = df["t"].to_numpy(float)
    for _, idx in df.groupby("id", sort=False).indices.items():
        p = xyz[idx]
        seg = np.linalg.norm(np.diff(p, axis=0), axis=1)
        displacement[idx] = np.linalg.norm(p[-1] - p[0])
        path_length[idx] = seg.sum()
        if len(idx) > 1:
            dt = np.diff(t[idx])
            s = np.empty(len(idx))
            s[1:] = seg / np.where(dt > 0, dt, np.inf)
            s[0] = s[1]
            speed[idx] = s
    return {"displacement": displacement, "path_length": path_length, "speed": speed}


def evaluate_derivation(df: pd.DataFrame, expression: str) -> np.ndarray:
    """Evaluate a v_p derivation expression over the point records.

    Names resolve to raw columns or to the per-trajectory aggregates
    displacement, path_length, speed. Plain arithmetic plus a few numpy
    functions are allowed; nothing else.
    """
    env = {c: df[c].to_numpy(float) for c in df.columns if c != "id"}
    env["id"] = df["id"].to_numpy()
    if any(name in expression for name in _AGGREGATE_NAMES):
        env.update(_trajectory_aggregates(df))
    env.update({"sqrt": np.sqrt, "abs": np.abs, "exp": np.exp, "log": np.log,
                "minimum": np.minimum, "maximum": np.maximum, "where": np.where})
    try:
        out = eval(expression, {"__builtins__": {}}, env)  # noqa: S307 - restricted namespace
    except NameError as e:
        raise IngestError(f"derivation expression references unknown name: {e}")
    except Exception as e:
        raise IngestError(f"derivation expression failed: {e}")
    out = np.broadcast_to(np.asarray(out, dtype=float), (len(df),)).copy()
    if not np.all(np.isfinite(out)):
        bad = int(np.flatnonzero(~np.isfinite(out))[0])
        raise IngestError(f"derivation produced a non-finite value at record {bad}")
    return out


def load_points(path: str, derive: str = "v") -> PointSet:
    """Read a point file and evaluate the v_p derivation expression."""
    try:
        df = pd.read_csv(path)
    except FileNotFoundError:
        raise
    except Exception as e:
        raise IngestError(f"{path}: cannot parse point file: {e}")
    missing = [c for c in REQUIRED_COLUMNS if c not in df.columns]
    if missing:
        raise IngestError(f"{path}: missing required columns {missing}")

    for tid, idx in df.groupby("id", sort=False).indices.items():
        tt = df["t"].to_numpy(float)[idx]
        if len(tt) > 1 and not np.all(np.diff(tt) > 0):
            raise IngestError(f"{path}: times not strictly increasing within trajectory {tid}")

    value = evaluate_derivation(df, derive)
    return PointSet(
        traj_id=df["id"].to_numpy(np.int64),
        t=df["t"].to_numpy(float),
        xyz=df[["x", "y", "z"]].to_numpy(float),
        value=value,
    )


def write_points(path: str, ps: PointSet, value_column: str = "v") -> None:
    df = pd.DataFrame({
        "id": ps.traj_id, "t": ps.t,
        "x": ps.xyz[:, 0], "y": ps.xyz[:, 1], "z": ps.xyz[:, 2],
        value_column: ps.value,
    })
    df.to_csv(path, index=False)


# ---------------------------------------------------------------------------
# domain extent + grid filtering

def domain_extent(points: Optional[PointSet], fs: Optional[FieldSet],
                  pad: float = 1e-9) -> DomainExtent:
    """Tight 4D bounding region over everything loaded.

    Degenerate axes (single timestep, flat point cloud with no field) are
    padded so every extent stays strictly positive.
    """
    los, his = [], []
    if fs is not None and len(fs.times) > 0:
        lo = np.concatenate([fs.origin, [fs.times[0]]])
        hi = np.concatenate([fs.origin + np.array(fs.dims) * fs.spacing, [fs.times[-1]]])
        los.append(lo)
        his.append(hi)
    if points is not None and len(points) > 0:
        loc = points.loc4
        los.append(loc.min(axis=0))
        his.append(loc.max(axis=0))
    if not los:
        raise IngestError("no samples: cannot derive a domain extent")
    lo = np.min(los, axis=0)
    hi = np.max(his, axis=0)
    span = hi - lo
    hi = np.where(span <= 0, hi + np.maximum(pad, np.abs(hi) * pad) + pad, hi)
    return DomainExtent(lo[0], hi[0], lo[1], hi[1], lo[2], hi[2], lo[3], hi[3])


def filter_to_grid(points: PointSet, fs: FieldSet):
    """Drop point samples outside the field grid's space-time box.

    Returns (kept PointSet, dropped count). Spatial membership uses the
    half-open cell rule, so the grid's upper faces are excluded; time must
    lie within [first timestep, last timestep].
    """
    lo = fs.origin
    hi = fs.origin + np.array(fs.dims) * fs.spacing
    ok = np.all((points.xyz >= lo) & (points.xyz < hi), axis=1)
    ok &= (points.t >= fs.times[0]) & (points.t <= fs.times[-1])
    dropped = int(len(points) - ok.sum())
    kept = PointSet(points.traj_id[ok], points.t[ok], points.xyz[ok], points.value[ok])
    return kept, dropped


@dataclass(frozen=True)
class LinkIndex:
    """Point indices bucketed by (grid cell, field timestep-interval).

    Keys are (i, j, k, m); every in-grid point lands in exactly one bucket.
    Cells use the half-open rule on each axis; time intervals are
    [t_m, t_{m+1}) with the last interval closed.
    """

    buckets: dict

    def total_points(self) -> int:
        return sum(len(v) for v in self.buckets.values())


def build_link_index(fs: FieldSet, points: PointSet) -> LinkIndex:
    """Bucket every point sample into its containing cell and time interval."""
    if len(points) == 0:
        return LinkIndex({})
    cell = np.floor((points.xyz - fs.origin) / fs.spacing).astype(np.int64)
    if np.any(cell < 0) or np.any(cell >= np.array(fs.dims)):
        raise IngestError("point sample outside the field grid; filter_to_grid first")
    n_intervals = max(len(fs.times) - 1, 1)
    m = np.clip(np.searchsorted(fs.times, points.t, side="right") - 1, 0, n_intervals - 1)
    nx, ny, nz = fs.dims
    flat = ((cell[:, 2] * ny + cell[:, 1]) * nx + cell[:, 0]) * n_intervals + m
    order = np.argsort(flat, kind="stable")
    buckets = {}
    for key, grp in zip(*_group_sorted(flat[order], order)):
        k3 = key // n_intervals
        i = k3 % nx
        j = (k3 // nx) % ny
        k = k3 // (nx * ny)
        buckets[(int(i), int(j), int(k), int(key % n_intervals))] = grp
    return LinkIndex(buckets)


def _group_sorted(sorted_keys: np.ndarray, payload: np.ndarray):
    """Split payload at key changes; keys must already be sorted."""
    uniq, starts = np.unique(sorted_keys, return_index=True)
    groups = np.split(payload, starts[1:])
    return uniq, groups


# ---------------------------------------------------------------------------
# variable normalization

@dataclass(frozen=True)
class NormalizationRecord:
    """Min/max per kind so normalized results can be mapped back."""

    enabled: bool
    p_min: Optional[float] = None
    p_max: Optional[float] = None
    f_min: Optional[float] = None
    f_max: Optional[float] = None

    def to_dict(self) -> dict:
        return {"enabled": self.enabled, "p_min": self.p_min, "p_max": self.p_max,
                "f_min": self.f_min, "f_max": self.f_max}

    @classmethod
    def from_dict(cls, d: dict) -> "NormalizationRecord":
        return cls(**d)


def _minmax(values: np.ndarray, kind: str):
    lo = float(values.min())
    hi = float(values.max())
    if hi == lo:
        warnings.warn(f"{kind} variable has a degenerate range ({lo}); all values map to 0")
        return np.zeros_like(values), lo, hi
    return (values - lo) / (hi - lo), lo, hi


def normalize_variables(points: Optional[PointSet], fs: Optional[FieldSet], enabled: bool):
    """Min-max map v_p and v_f independently onto [0, 1].

    Returns (points, field, NormalizationRecord); identity when disabled.
    """
    if not enabled:
        return points, fs, NormalizationRecord(enabled=False)
    p_min = p_max = f_min = f_max = None
    if points is not None and len(points) > 0:
        v, p_min, p_max = _minmax(points.value, "point")
        points = PointSet(points.traj_id, points.t, points.xyz, v)
    if fs is not None and len(fs) > 0:
        v, f_min, f_max = _minmax(fs.values, "field")
        fs = FieldSet(fs.dims, fs.origin, fs.spacing, fs.times, v)
    return points, fs, NormalizationRecord(True, p_min, p_max, f_min, f_max)


# ---------------------------------------------------------------------------
# synthetic ground-truth generator

@dataclass(frozen=True)
class Blob:
    """A drifting 4D region with its own field and point values.

    shape 'ellipsoid' uses the radii as semi-axes; 'box' uses them as
    half-widths per axis.
    """

    label: int                    # ground-truth class, >= 1
    center: tuple                 # (x, y, z) at t_start
    radii: tuple                  # (rx, ry, rz)
    t_start: float
    t_end: float
    velocity: tuple = (0.0, 0.0, 0.0)
    field_value: float = 1.0
    point_value: float = 1.0
    n_trajectories: int = 0
    shape: str = "ellipsoid"

    def __post_init__(self):
        if self.shape not in ("ellipsoid", "box"):
            raise SyntheticSpecError(f"unknown blob shape '{self.shape}'")

    def position(self, t) -> np.ndarray:
        t = np.asarray(t, dtype=float)
        return np.asarray(self.center) + np.outer(np.atleast_1d(t) - self.t_start,
                                                  np.asarray(self.velocity)).reshape(t.shape + (3,))

    def contains(self, xyz: np.ndarray, t: np.ndarray) -> np.ndarray:
        c = np.asarray(self.center) + (t[:, None] - self.t_start) * np.asarray(self.velocity)
        q = (xyz - c) / np.asarray(self.radii)
        if self.shape == "box":
            inside = np.all(np.abs(q) <= 1.0, axis=1)
        else:
            inside = np.sum(q * q, axis=1) <= 1.0
        return inside & (t >= self.t_start) & (t <= self.t_end)


@dataclass(frozen=True)
class SyntheticSpec:
    """Desk-scale ground-truth dataset description."""

    extent: DomainExtent
    grid_dims: tuple                       # (Nx, Ny, Nz)
    n_field_steps: int
    n_point_steps: int
    blobs: tuple = ()
    background_field: float = 0.0
    background_point: float = 0.0
    n_background_trajectories: int = 0
    field_noise: float = 0.0
    point_noise: float = 0.0
    seed: int = 0

    def to_dict(self) -> dict:
        return {
            "extent": self.extent.to_dict(),
            "grid_dims": list(self.grid_dims),
            "n_field_steps": self.n_field_steps,
            "n_point_steps": self.n_point_steps,
            "blobs": [{
                "label": b.label, "center": list(b.center), "radii": list(b.radii),
                "t_start": b.t_start, "t_end": b.t_end, "velocity": list(b.velocity),
                "field_value": b.field_value, "point_value": b.point_value,
                "n_trajectories": b.n_trajectories, "shape": b.shape,
            } for b in self.blobs],
            "background_field": self.background_field,
            "background_point": self.background_point,
            "n_background_trajectories": self.n_background_trajectories,
            "field_noise": self.field_noise,
            "point_noise": self.point_noise,
            "seed": self.seed,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "SyntheticSpec":
        blobs = tuple(Blob(
            label=b["label"], center=tuple(b["center"]), radii=tuple(b["radii"]),
            t_start=b["t_start"], t_end=b["t_end"],
            velocity=tuple(b.get("velocity", (0, 0, 0))),
            field_value=b.get("field_value", 1.0), point_value=b.get("point_value", 1.0),
            n_trajectories=b.get("n_trajectories", 0),
            shape=b.get("shape", "ellipsoid"),
        ) for b in d.get("blobs", []))
        return cls(
            extent=DomainExtent.from_dict(d["extent"]),
            grid_dims=tuple(d["grid_dims"]),
            n_field_steps=d["n_field_steps"],
            n_point_steps=d["n_point_steps"],
            blobs=blobs,
            background_field=d.get("background_field", 0.0),
            background_point=d.get("background_point", 0.0),
            n_background_trajectories=d.get("n_background_trajectories", 0),
            field_noise=d.get("field_noise", 0.0),
            point_noise=d.get("point_noise", 0.0),
            seed=d.get("seed", 0),
        )


def _check_blob_in_extent(b: Blob, ext: DomainExtent) -> None:
    for t in (b.t_start, b.t_end):
        c = np.asarray(b.center) + (t - b.t_start) * np.asarray(b.velocity)
        lo = c - np.asarray(b.radii)
        hi = c + np.asarray(b.radii)
        if np.any(lo < ext.mins[:3]) or np.any(hi > ext.maxs[:3]):
            raise SyntheticSpecError(f"blob {b.label} leaves the spatial extent at t={t}")
    if b.t_start < ext.tmin or b.t_end > ext.tmax or b.t_end < b.t_start:
        raise SyntheticSpecError(f"blob {b.label} time window outside the extent")


def _label_and_values(xyz, t, blobs, background_value, value_attr):
    """First containing blob wins; everything else is background (label 0)."""
    labels = np.zeros(len(t), dtype=np.int32)
    values = np.full(len(t), background_value, dtype=float)
    for b in blobs:
        mask = (labels == 0) & b.contains(xyz, t)
        labels[mask] = b.label
        values[mask] = getattr(b, value_attr)
    return labels, values


def generate_synthetic(spec: SyntheticSpec):
    """Deterministically build (FieldSet, PointSet, field truth, point truth).

    Every sample's value and ground-truth label come from geometric blob
    membership; noise is additive on top of the assigned value.
    """
    ext = spec.extent
    labels_seen = set()
    for b in spec.blobs:
        _check_blob_in_extent(b, ext)
        if b.label < 1 or b.label in labels_seen:
            raise SyntheticSpecError(f"blob labels must be unique positive ints, got {b.label}")
        labels_seen.add(b.label)

    rng = np.random.default_rng(spec.seed)
    nx, ny, nz = spec.grid_dims
    spacing = (ext.maxs[:3] - ext.mins[:3]) / np.array([nx, ny, nz])
    field_times = np.linspace(ext.tmin, ext.tmax, spec.n_field_steps)
    point_times = np.linspace(ext.tmin, ext.tmax, spec.n_point_steps)

    fs_proto = FieldSet((nx, ny, nz), ext.mins[:3], spacing, field_times,
                        np.zeros((spec.n_field_steps, nx * ny * nz)))
    centers = fs_proto.cell_centers()

    field_values = np.empty((spec.n_field_steps, nx * ny * nz))
    field_truth = np.empty((spec.n_field_steps, nx * ny * nz), dtype=np.int32)
    for m, tm in enumerate(field_times):
        tcol = np.full(len(centers), tm)
        lab, val = _label_and_values(centers, tcol, spec.blobs, spec.background_field,
                                     "field_value")
        if spec.field_noise > 0:
            val = val + spec.field_noise * rng.standard_normal(len(val))
        field_values[m] = val
        field_truth[m] = lab
    fs = FieldSet((nx, ny, nz), ext.mins[:3], spacing, field_times, field_values)

    # trajectory geometries first, then values/labels by membership
    traj_ids, traj_t, traj_xyz = [], [], []
    next_id = 0
    lo3, hi3 = ext.mins[:3], ext.maxs[:3]
    for _ in range(spec.n_background_trajectories):
        start = lo3 + rng.random(3) * (hi3 - lo3)
        end = lo3 + rng.random(3) * (hi3 - lo3)
        frac = ((point_times - ext.tmin) / (ext.tmax - ext.tmin))[:, None]
        pos = start + frac * (end - start)
        traj_ids.append(np.full(len(point_times), next_id))
        traj_t.append(point_times)
        traj_xyz.append(pos)
        next_id += 1
    for b in spec.blobs:
        in_window = (point_times >= b.t_start) & (point_times <= b.t_end)
        tt = point_times[in_window]
        if len(tt) == 0:
            continue
        for _ in range(b.n_trajectories):
            # uniform offset inside the region (rejection sampling for ellipsoids)
            while True:
                u = rng.uniform(-1, 1, 3)
                if b.shape == "box" or np.sum(u * u) <= 1.0:
                    break
            offset = u * np.asarray(b.radii)
            pos = b.position(tt) + offset
            traj_ids.append(np.full(len(tt), next_id))
            traj_t.append(tt)
            traj_xyz.append(pos)
            next_id += 1

    if traj_ids:
        pid = np.concatenate(traj_ids).astype(np.int64)
        pt = np.concatenate(traj_t)
        pxyz = np.vstack(traj_xyz)
        # keep wanderers inside the domain box
        pxyz = np.clip(pxyz, lo3, hi3)
        point_truth, pval = _label_and_values(pxyz, pt, spec.blobs, spec.background_point,
                                              "point_value")
        if spec.point_noise > 0:
            pval = pval + spec.point_noise * rng.standard_normal(len(pval))
        points = PointSet(pid, pt, pxyz, pval)
    else:
        points = PointSet.empty()
        point_truth = np.zeros(0, dtype=np.int32)

    return fs, points, field_truth.reshape(-1), point_truth


def write_synthetic(outdir: str, spec: SyntheticSpec) -> dict:
    """Generate and write field, points, and truth labels; returns the paths."""
    fs, points, field_truth, point_truth = generate_synthetic(spec)
    os.makedirs(outdir, exist_ok=True)
    field_path = os.path.join(outdir, "field.json")
    points_path = os.path.join(outdir, "points.csv")
    write_field(field_path, fs)
    write_points(points_path, points)
    ft_path = os.path.join(outdir, "field_truth.bin")
    pt_path = os.path.join(outdir, "point_truth.txt")
    field_truth.astype("<i4").tofile(ft_path)
    with open(pt_path, "w") as f:
        for lab in point_truth:
            f.write(f"{int(lab)}\n")
    return {"field": field_path, "points": points_path,
            "field_truth": ft_path, "point_truth": pt_path}
