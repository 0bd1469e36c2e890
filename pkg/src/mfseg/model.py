"""Core domain types shared by every stage of the segmentation pipeline.

All coordinates and variables are held as float64 internally; 32-bit data is
widened at ingest. Every type here is an immutable value object and can be
shared freely between workers.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Optional, Sequence

import numpy as np

# Guard for relative-change and percent-difference denominators.
DELTA = 1e-12


class ParameterError(ValueError):
    """Raised when clustering parameters violate their constraints."""


@dataclass(frozen=True)
class DomainExtent:
    """Axis-aligned 4D bounding region: three spatial axes plus time."""

    xmin: float
    xmax: float
    ymin: float
    ymax: float
    zmin: float
    zmax: float
    tmin: float
    tmax: float

    def __post_init__(self):
        for lo, hi, name in [
            (self.xmin, self.xmax, "x"),
            (self.ymin, self.ymax, "y"),
            (self.zmin, self.zmax, "z"),
            (self.tmin, self.tmax, "t"),
        ]:
            if not hi > lo:
                raise ParameterError(f"extent on axis {name} must have max > min, got [{lo}, {hi}]")

    @property
    def mins(self) -> np.ndarray:
        return np.array([self.xmin, self.ymin, self.zmin, self.tmin])

    @property
    def maxs(self) -> np.ndarray:
        return np.array([self.xmax, self.ymax, self.zmax, self.tmax])

    @property
    def extents(self) -> np.ndarray:
        """Per-dimension extents (x, y, z, t); all strictly positive."""
        return self.maxs - self.mins

    def contains(self, loc4: np.ndarray) -> np.ndarray:
        """Vectorized membership test for (N, 4) locations, bounds inclusive."""
        loc4 = np.atleast_2d(loc4)
        return np.all((loc4 >= self.mins) & (loc4 <= self.maxs), axis=1)

    def to_dict(self) -> dict:
        return {
            "x": [self.xmin, self.xmax],
            "y": [self.ymin, self.ymax],
            "z": [self.zmin, self.zmax],
            "t": [self.tmin, self.tmax],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "DomainExtent":
        return cls(d["x"][0], d["x"][1], d["y"][0], d["y"][1],
                   d["z"][0], d["z"][1], d["t"][0], d["t"][1])


@dataclass(frozen=True)
class PointSet:
    """Column-oriented collection of point/trajectory samples.

    One entry per (trajectory, timestep) sample. Within a trajectory, times
    strictly increase; that is enforced at ingest, not here.
    """

    traj_id: np.ndarray   # (N,) int64
    t: np.ndarray         # (N,) float64
    xyz: np.ndarray       # (N, 3) float64
    value: np.ndarray     # (N,) float64, the chosen/derived scalar v_p

    def __post_init__(self):
        n = len(self.traj_id)
        assert self.t.shape == (n,) and self.xyz.shape == (n, 3) and self.value.shape == (n,)

    def __len__(self) -> int:
        return len(self.traj_id)

    @property
    def loc4(self) -> np.ndarray:
        """(N, 4) locations as (x, y, z, t)."""
        return np.column_stack([self.xyz, self.t])

    @classmethod
    def empty(cls) -> "PointSet":
        return cls(np.empty(0, np.int64), np.empty(0), np.empty((0, 3)), np.empty(0))


@dataclass(frozen=True)
class FieldSet:
    """Dense scalar field on a regular grid over a set of timesteps.

    values[m] holds timestep m flattened x-fastest: flat = i + Nx*(j + Ny*k).
    Cell-center coordinates are origin + (index + 0.5) * spacing.
    """

    dims: tuple      # (Nx, Ny, Nz)
    origin: np.ndarray    # (3,)
    spacing: np.ndarray   # (3,)
    times: np.ndarray     # (T,), strictly increasing
    values: np.ndarray    # (T, Nx*Ny*Nz) float64

    def __post_init__(self):
        nx, ny, nz = self.dims
        assert self.values.shape == (len(self.times), nx * ny * nz)
        if len(self.times) > 1 and not np.all(np.diff(self.times) > 0):
            raise ValueError("field timestep times must strictly increase")

    @property
    def n_cells(self) -> int:
        nx, ny, nz = self.dims
        return nx * ny * nz

    def __len__(self) -> int:
        """Total number of field samples over all timesteps."""
        return self.n_cells * len(self.times)

    def cell_centers(self) -> np.ndarray:
        """(n_cells, 3) cell-center coordinates in flat (x-fastest) order."""
        nx, ny, nz = self.dims
        flat = np.arange(nx * ny * nz)
        ijk = np.column_stack([flat % nx, (flat // nx) % ny, flat // (nx * ny)])
        return self.origin + (ijk + 0.5) * self.spacing

    def loc4(self) -> np.ndarray:
        """(T*n_cells, 4) sample locations, timestep-major then x-fastest."""
        centers = self.cell_centers()
        nt = len(self.times)
        xyz = np.tile(centers, (nt, 1))
        t = np.repeat(self.times, self.n_cells)
        return np.column_stack([xyz, t])

    def flat_values(self) -> np.ndarray:
        return self.values.reshape(-1)

    @classmethod
    def empty(cls) -> "FieldSet":
        return cls((1, 1, 1), np.zeros(3), np.ones(3), np.zeros(0), np.zeros((0, 1)))


@dataclass(frozen=True)
class ClusterCenter:
    """Six-value cluster summary plus member counts.

    p_c / f_c are None exactly when the cluster has no members of that kind.
    """

    id: int
    x_c: float
    y_c: float
    z_c: float
    t_c: float
    p_c: Optional[float]
    f_c: Optional[float]
    n_points: int
    n_fields: int

    @property
    def loc4(self) -> np.ndarray:
        return np.array([self.x_c, self.y_c, self.z_c, self.t_c])

    @property
    def n_total(self) -> int:
        return self.n_points + self.n_fields

    def to_dict(self) -> dict:
        return {
            "id": self.id, "x_c": self.x_c, "y_c": self.y_c, "z_c": self.z_c,
            "t_c": self.t_c, "p_c": self.p_c, "f_c": self.f_c,
            "n_points": self.n_points, "n_fields": self.n_fields,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ClusterCenter":
        return cls(d["id"], d["x_c"], d["y_c"], d["z_c"], d["t_c"],
                   d["p_c"], d["f_c"], d["n_points"], d["n_fields"])


@dataclass(frozen=True)
class ClusterParams:
    """User-facing knobs of the clustering run."""

    k: tuple = (2, 2, 2, 2)        # cluster counts per dimension (x, y, z, t)
    c_f: float = 1.0               # length units per time unit
    w_d: float = 1.0               # weight of the space-time separation term
    w_p: float = 1.0               # weight of the point value term
    w_f: float = 1.0               # weight of the field value term
    eps_c: float = 0.01            # convergence threshold (relative change)
    eps_m: float = 0.0             # merge threshold (symmetric percent difference)
    max_iterations: int = 50
    normalize: bool = True         # min-max map v_p, v_f to [0, 1] at ingest

    def __post_init__(self):
        if len(self.k) != 4 or any(int(ki) != ki or ki < 1 for ki in self.k):
            raise ParameterError(f"k must be four positive integers, got {self.k}")
        if not self.c_f > 0:
            raise ParameterError(f"c_f must be > 0, got {self.c_f}")
        if self.w_d < 0 or self.w_p < 0 or self.w_f < 0:
            raise ParameterError("distance weights must be non-negative")
        if self.w_d + self.w_p <= 0:
            raise ParameterError("w_d + w_p must be > 0 (point metric would vanish)")
        if self.w_d + self.w_f <= 0:
            raise ParameterError("w_d + w_f must be > 0 (field metric would vanish)")
        if not self.eps_c > 0:
            raise ParameterError(f"eps_c must be > 0, got {self.eps_c}")
        if self.eps_m < 0:
            raise ParameterError(f"eps_m must be >= 0, got {self.eps_m}")
        if self.max_iterations < 1:
            raise ParameterError("max_iterations must be >= 1")

    @property
    def k_total(self) -> int:
        return int(np.prod(self.k))

    def to_dict(self) -> dict:
        return {
            "k": list(self.k), "c_f": self.c_f, "w_d": self.w_d, "w_p": self.w_p,
            "w_f": self.w_f, "eps_c": self.eps_c, "eps_m": self.eps_m,
            "max_iterations": self.max_iterations, "normalize": self.normalize,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ClusterParams":
        d = dict(d)
        d["k"] = tuple(d["k"])
        return cls(**d)


@dataclass(frozen=True)
class Segmentation:
    """Final result of a clustering run.

    point_labels / field_labels index the original (seed-order) cluster ids;
    `centers` lists only live centers (clusters that ended with members).
    """

    point_labels: np.ndarray      # (Np,) int32
    field_labels: np.ndarray      # (Nf,) int32, timestep-major x-fastest order
    centers: Sequence[ClusterCenter]
    params: ClusterParams
    extent: DomainExtent
    iterations_used: int
    converged: bool
    merge_map: Optional[dict] = None   # original id -> merged id, idempotent

    def center_by_id(self, cid: int) -> ClusterCenter:
        for c in self.centers:
            if c.id == cid:
                return c
        raise KeyError(cid)

    def with_merge(self, merge_map: dict) -> "Segmentation":
        return replace(self, merge_map=dict(merge_map))


def interval_distances(extent: DomainExtent, k: Sequence[int]) -> np.ndarray:
    """Seed-grid interval per dimension: extent divided by cluster count."""
    k = np.asarray(k)
    if len(k) != 4 or np.any(k < 1) or not np.issubdtype(k.dtype, np.integer):
        raise ParameterError(f"k must be four integers >= 1, got {list(k)}")
    return extent.extents / k


def space_time_distance(a, b, c_f: float):
    """4D Euclidean separation with time scaled into length units by c_f.

    Accepts single (4,) locations or (N, 4) arrays; broadcasts like numpy.
    """
    if not c_f > 0:
        raise ParameterError(f"c_f must be > 0, got {c_f}")
    d = np.asarray(a, dtype=float) - np.asarray(b, dtype=float)
    scale = np.array([1.0, 1.0, 1.0, c_f])
    d = d * scale
    return np.sqrt(np.sum(d * d, axis=-1))
