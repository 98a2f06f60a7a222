//! Manifests, train/test splits, feature caches and evaluation reports.

pub mod cache;
pub mod manifest;
pub mod report;
pub mod split;

pub use cache::{
    cache_features, compute_features, failure_sidecar, read_cache, write_cache, CacheFailure, CacheSummary,
    FeatureCache, FeatureRecord,
};
pub use manifest::{
    filter_by_camera, filter_by_labels, load_manifest, parse_camera_set, parse_manifest, Camera, Manifest,
    ManifestEntry, DEFAULT_LABELS,
};
pub use report::{evaluate, EvalReport};
pub use split::{split, split_indices, SplitSpec};
