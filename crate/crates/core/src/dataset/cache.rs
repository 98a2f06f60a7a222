//! Feature cache: one CSV row of 20 features per image.
//!
//! ```text
//! # feature_order: signed-moments-v1
//! # labels: clean,soiled,...
//! # filter: radius_rows=3 radius_cols=3 epsilon=... laplacian=four-neighbor
//! path,label,camera,dataset,intensity_mean_pos,...
//! ```

use std::path::{Path, PathBuf};

use rayon::prelude::*;

use super::manifest::{Camera, Manifest, ManifestEntry};
use crate::error::{Error, Result};
use crate::features::{FeatureVector, FEATURE_COUNT, FEATURE_NAMES, FEATURE_ORDER_TAG};
use crate::filter::FilterConfig;
use crate::svm::fmt_f64;

#[derive(Debug, Clone, PartialEq)]
pub struct FeatureRecord {
    pub path: String,
    pub label: String,
    pub camera: Camera,
    pub dataset: String,
    pub features: FeatureVector,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FeatureCache {
    pub feature_order: String,
    pub labels: Vec<String>,
    pub filter: Option<String>,
    pub records: Vec<FeatureRecord>,
}

impl FeatureCache {
    pub fn label_index(&self, label: &str) -> Option<usize> {
        self.labels.iter().position(|l| l == label)
    }

    /// Records as a manifest (same order), for splitting and filtering.
    pub fn manifest(&self) -> Result<Manifest> {
        Manifest::new(
            self.labels.clone(),
            self.records
                .iter()
                .map(|r| ManifestEntry {
                    path: r.path.clone(),
                    label: r.label.clone(),
                    camera: r.camera,
                    dataset: r.dataset.clone(),
                })
                .collect(),
            PathBuf::new(),
        )
    }

    /// Records whose paths appear in `m`, in `m`'s order.
    pub fn select(&self, m: &Manifest) -> Result<Vec<&FeatureRecord>> {
        let index: std::collections::HashMap<&str, &FeatureRecord> =
            self.records.iter().map(|r| (r.path.as_str(), r)).collect();
        m.entries()
            .iter()
            .map(|e| {
                index
                    .get(e.path.as_str())
                    .copied()
                    .ok_or_else(|| Error::InsufficientData(format!("no cached features for {}", e.path)))
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CacheFailure {
    pub path: String,
    pub error: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CacheSummary {
    pub records: usize,
    pub failures: Vec<CacheFailure>,
}

pub fn filter_tag(cfg: &FilterConfig) -> String {
    format!(
        "radius_rows={} radius_cols={} epsilon={} laplacian={}",
        cfg.radius_rows,
        cfg.radius_cols,
        fmt_f64(cfg.epsilon),
        cfg.laplacian
    )
}

/// Extracts features for every manifest entry in parallel. Output order
/// follows the manifest; failing images are collected, not fatal.
pub fn compute_features(m: &Manifest, cfg: &FilterConfig) -> Result<(FeatureCache, Vec<CacheFailure>)> {
    cfg.validate()?;
    let results: Vec<std::result::Result<FeatureRecord, CacheFailure>> = m
        .entries()
        .par_iter()
        .map(|e| {
            crate::image_features(m.resolve(e), cfg)
                .map(|features| FeatureRecord {
                    path: e.path.clone(),
                    label: e.label.clone(),
                    camera: e.camera,
                    dataset: e.dataset.clone(),
                    features,
                })
                .map_err(|err| CacheFailure {
                    path: e.path.clone(),
                    error: err.to_string(),
                })
        })
        .collect();
    let mut records = Vec::new();
    let mut failures = Vec::new();
    for r in results {
        match r {
            Ok(rec) => records.push(rec),
            Err(f) => failures.push(f),
        }
    }
    Ok((
        FeatureCache {
            feature_order: FEATURE_ORDER_TAG.to_string(),
            labels: m.labels().to_vec(),
            filter: Some(filter_tag(cfg)),
            records,
        },
        failures,
    ))
}

pub fn failure_sidecar(out: &Path) -> PathBuf {
    let mut name = out.file_name().map(|n| n.to_os_string()).unwrap_or_default();
    name.push(".failures.csv");
    out.with_file_name(name)
}

/// Computes and writes the cache for `m`. Failed images are listed in a
/// `<out>.failures.csv` sidecar, which is removed when every image succeeds.
pub fn cache_features(m: &Manifest, cfg: &FilterConfig, out: impl AsRef<Path>) -> Result<CacheSummary> {
    let out = out.as_ref();
    let (cache, failures) = compute_features(m, cfg)?;
    write_cache(&cache, out)?;
    let sidecar = failure_sidecar(out);
    if failures.is_empty() {
        if sidecar.exists() {
            std::fs::remove_file(&sidecar)?;
        }
    } else {
        let mut w = csv::Writer::from_path(&sidecar)?;
        w.write_record(["path", "error"])?;
        for f in &failures {
            w.write_record([&f.path, &f.error])?;
        }
        w.flush()?;
    }
    Ok(CacheSummary {
        records: cache.records.len(),
        failures,
    })
}

pub fn write_cache(cache: &FeatureCache, path: impl AsRef<Path>) -> Result<()> {
    let mut out = format!(
        "# feature_order: {}\n# labels: {}\n",
        cache.feature_order,
        cache.labels.join(",")
    );
    if let Some(f) = &cache.filter {
        out.push_str(&format!("# filter: {f}\n"));
    }
    let mut w = csv::Writer::from_writer(Vec::new());
    let mut header = vec!["path", "label", "camera", "dataset"];
    header.extend(FEATURE_NAMES);
    w.write_record(&header)?;
    for r in &cache.records {
        let mut row = vec![r.path.clone(), r.label.clone(), r.camera.to_string(), r.dataset.clone()];
        row.extend(r.features.as_slice().iter().map(|v| fmt_f64(*v)));
        w.write_record(&row)?;
    }
    let body = w.into_inner().map_err(|e| Error::Io(e.into_error()))?;
    out.push_str(std::str::from_utf8(&body).expect("csv output is utf-8"));
    std::fs::write(path, out)?;
    Ok(())
}

pub fn read_cache(path: impl AsRef<Path>) -> Result<FeatureCache> {
    let path = path.as_ref();
    if !path.is_file() {
        return Err(Error::FileNotFound(path.to_path_buf()));
    }
    let text = std::fs::read_to_string(path)?;
    let parse_err = |line: u64, message: String| Error::Parse {
        path: path.to_path_buf(),
        line,
        message,
    };

    let mut order = None;
    let mut labels = None;
    let mut filter = None;
    for l in text.lines().take_while(|l| l.starts_with('#')) {
        if let Some(v) = l.strip_prefix("# feature_order:") {
            order = Some(v.trim().to_string());
        } else if let Some(v) = l.strip_prefix("# labels:") {
            labels = Some(v.trim().split(',').map(str::to_string).filter(|s| !s.is_empty()).collect::<Vec<_>>());
        } else if let Some(v) = l.strip_prefix("# filter:") {
            filter = Some(v.trim().to_string());
        }
    }
    let order = order.ok_or_else(|| parse_err(1, "missing '# feature_order:' line".into()))?;
    let labels = labels.ok_or_else(|| parse_err(1, "missing '# labels:' line".into()))?;

    let mut reader = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .from_reader(text.as_bytes());
    let headers = reader.headers()?.clone();
    let names: Vec<&str> = headers.iter().skip(4).collect();
    if order != FEATURE_ORDER_TAG || names != FEATURE_NAMES {
        return Err(Error::FeatureOrderMismatch {
            expected: format!("{FEATURE_ORDER_TAG} [{}]", FEATURE_NAMES.join(",")),
            found: format!("{order} [{}]", names.join(",")),
        });
    }

    let mut records = Vec::new();
    for rec in reader.records() {
        let rec = rec?;
        let line = rec.position().map_or(0, |p| p.line());
        if rec.len() != 4 + FEATURE_COUNT {
            return Err(parse_err(line, format!("expected {} columns, got {}", 4 + FEATURE_COUNT, rec.len())));
        }
        let label = rec[1].to_string();
        if !labels.contains(&label) {
            return Err(Error::UnknownLabel {
                label,
                declared: labels.join(","),
            });
        }
        let values: Vec<f64> = rec
            .iter()
            .skip(4)
            .map(|v| v.parse::<f64>().map_err(|_| parse_err(line, format!("invalid number '{v}'"))))
            .collect::<Result<_>>()?;
        records.push(FeatureRecord {
            path: rec[0].to_string(),
            label,
            camera: rec[2].parse().map_err(|e: Error| parse_err(line, e.to_string()))?,
            dataset: rec[3].to_string(),
            features: FeatureVector::from_slice(&values)?,
        });
    }
    Ok(FeatureCache {
        feature_order: order,
        labels,
        filter,
        records,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::image::GrayImage;

    fn write_images(dir: &Path, n: usize) -> Manifest {
        let mut entries = Vec::new();
        for k in 0..n {
            let img = GrayImage::from_fn(12, 14, |i, j| ((i * 3 + j * (k + 1)) % 17) as f64 / 16.0).unwrap();
            let name = format!("img{k}.png");
            img.save_png(dir.join(&name)).unwrap();
            entries.push(ManifestEntry {
                path: name,
                label: if k % 2 == 0 { "clean" } else { "soiled" }.into(),
                camera: Camera::FV,
                dataset: "unit".into(),
            });
        }
        Manifest::new(vec!["clean".into(), "soiled".into()], entries, dir).unwrap()
    }

    #[test]
    fn empty_manifest_gives_header_only_cache() {
        let dir = tempfile::tempdir().unwrap();
        let m = Manifest::new(vec!["clean".into()], vec![], dir.path()).unwrap();
        let out = dir.path().join("c.csv");
        let s = cache_features(&m, &FilterConfig::default(), &out).unwrap();
        assert_eq!(s.records, 0);
        let text = std::fs::read_to_string(&out).unwrap();
        assert_eq!(text.lines().filter(|l| !l.starts_with('#')).count(), 1);
        assert!(read_cache(&out).unwrap().records.is_empty());
    }

    #[test]
    fn cache_round_trip_and_idempotence() {
        let dir = tempfile::tempdir().unwrap();
        let m = write_images(dir.path(), 10);
        let out = dir.path().join("c.csv");
        let cfg = FilterConfig::default();
        let s = cache_features(&m, &cfg, &out).unwrap();
        assert_eq!(s.records, 10);
        assert!(s.failures.is_empty());
        let first = std::fs::read(&out).unwrap();
        cache_features(&m, &cfg, &out).unwrap();
        assert_eq!(first, std::fs::read(&out).unwrap());

        let cache = read_cache(&out).unwrap();
        assert_eq!(cache.records.len(), 10);
        for (rec, e) in cache.records.iter().zip(m.entries()) {
            assert_eq!(rec.path, e.path);
            let again = crate::image_features(m.resolve(e), &cfg).unwrap();
            for (a, b) in rec.features.as_slice().iter().zip(again.as_slice()) {
                assert_eq!(a.to_bits(), b.to_bits());
            }
        }
    }

    #[test]
    fn failures_go_to_sidecar() {
        let dir = tempfile::tempdir().unwrap();
        let m = write_images(dir.path(), 4);
        std::fs::write(dir.path().join("img2.png"), b"corrupt").unwrap();
        let out = dir.path().join("c.csv");
        let s = cache_features(&m, &FilterConfig::default(), &out).unwrap();
        assert_eq!(s.records, 3);
        assert_eq!(s.failures.len(), 1);
        assert_eq!(s.failures[0].path, "img2.png");
        let side = std::fs::read_to_string(failure_sidecar(&out)).unwrap();
        assert!(side.contains("img2.png"));

        let m = write_images(dir.path(), 4);
        cache_features(&m, &FilterConfig::default(), &out).unwrap();
        assert!(!failure_sidecar(&out).exists());
    }

    #[test]
    fn feature_order_mismatch_is_detected() {
        let dir = tempfile::tempdir().unwrap();
        let m = write_images(dir.path(), 2);
        let out = dir.path().join("c.csv");
        cache_features(&m, &FilterConfig::default(), &out).unwrap();
        let text = std::fs::read_to_string(&out).unwrap();
        std::fs::write(&out, text.replace("intensity_mean_pos,intensity_var_pos", "intensity_var_pos,intensity_mean_pos"))
            .unwrap();
        assert!(matches!(read_cache(&out), Err(Error::FeatureOrderMismatch { .. })));
        std::fs::write(&out, text.replace(FEATURE_ORDER_TAG, "other-v9")).unwrap();
        assert!(matches!(read_cache(&out), Err(Error::FeatureOrderMismatch { .. })));
    }
}
