"""Face presentation attack detection with SPMT texture and TFBD stereo-structure features."""

from ._facepad import (
    Bundle,
    ConfigError,
    DegenerateGeometryError,
    DimensionError,
    Error,
    FormatError,
    ManifestError,
    MetricsError,
    ModeError,
    ModelCompatibilityError,
    PreconditionError,
    anchor_scales,
    compute_metrics,
    evaluate,
    extract_spmt,
    extract_tfbd,
    fuse_scores,
    gen_texture_image,
    landmark_depth,
    load_gray,
    predict,
    predict_cascade,
    save_gray,
    to_face_plane,
    train,
    write_synthetic_dataset,
)

__all__ = [name for name in dir() if not name.startswith("_")]
