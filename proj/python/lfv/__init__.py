"""Light-field video 4D temporal coherence pipeline."""

from ._lfv import (
    LfvError,
    Pipeline,
    __version__,
    appearance_metric,
    config_hash,
    default_config,
    distance_metric,
    frame_similarity,
    match_features,
    normalize_config,
    read_flow,
    silhouette_overlap_error,
    stages,
    write_flow,
)

__all__ = [
    "LfvError",
    "Pipeline",
    "__version__",
    "appearance_metric",
    "config_hash",
    "default_config",
    "distance_metric",
    "frame_similarity",
    "match_features",
    "normalize_config",
    "read_flow",
    "silhouette_overlap_error",
    "stages",
    "write_flow",
]
