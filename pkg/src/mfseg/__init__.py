"""Joint 4D segmentation of point/trajectory and field-grid data."""

from .model import (ClusterCenter, ClusterParams, DomainExtent, FieldSet,
                    ParameterError, PointSet, Segmentation, interval_distances,
                    space_time_distance)
from .ingest import (Blob, IngestError, LinkIndex, NormalizationRecord,
                     SyntheticSpec, SyntheticSpecError, build_link_index,
                     domain_extent, filter_to_grid, generate_synthetic,
                     load_field, load_points, normalize_variables, write_field,
                     write_points, write_synthetic)
from .engine import (field_distance, initial_assignment, point_distance, run,
                     seed_centers)
from .postproc import (CenterQuery, Feature, FeatureStats, QueryError,
                       build_features, feature_stats, merge_clusters,
                       merge_eligible, query_centers)

__all__ = [
    "Blob", "CenterQuery", "ClusterCenter", "ClusterParams", "DomainExtent",
    "Feature", "FeatureStats", "FieldSet", "IngestError", "LinkIndex",
    "NormalizationRecord", "ParameterError", "PointSet", "Segmentation",
    "SyntheticSpec", "SyntheticSpecError", "build_features", "build_link_index",
    "domain_extent", "feature_stats", "field_distance", "filter_to_grid",
    "generate_synthetic", "initial_assignment", "interval_distances",
    "load_field", "load_points", "point_distance",
    "merge_clusters", "merge_eligible", "normalize_variables", "QueryError",
    "query_centers", "run",
    "seed_centers", "space_time_distance", "write_field", "write_points",
    "write_synthetic",
]

__version__ = "0.1.0"
