//! Synthetic degradation corpora.
//!
//! Clean base images are augmented (random crop, optional mirror, bilinear
//! resize) and then degraded by one of five simulated effects at a random
//! severity in `[0.3, 1.0]`.

use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::{Camera, Manifest, ManifestEntry, DEFAULT_LABELS};
use crate::error::{Error, Result};
use crate::field::Field;
use crate::filter::gaussian_blur;
use crate::image::{from_dynamic, load_image, GrayImage};

pub const GENERATOR: &str = "ChaCha8Rng (rand_chacha 0.3) with rand_distr 0.4 Normal";
pub const SEVERITY_RANGE: (f64, f64) = (0.3, 1.0);
pub const DEFAULT_SIZE: (usize, usize) = (120, 160);
pub const SYNTH_DATASET: &str = "synthetic";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DegradeKind {
    Clean,
    Soiling,
    Blur,
    Glare,
    Noise,
    Underexposure,
}

impl DegradeKind {
    /// In label order.
    pub const ALL: [DegradeKind; 6] = [
        DegradeKind::Clean,
        DegradeKind::Soiling,
        DegradeKind::Blur,
        DegradeKind::Glare,
        DegradeKind::Noise,
        DegradeKind::Underexposure,
    ];

    pub fn label(self) -> &'static str {
        match self {
            DegradeKind::Clean => DEFAULT_LABELS[0],
            DegradeKind::Soiling => DEFAULT_LABELS[1],
            DegradeKind::Blur => DEFAULT_LABELS[2],
            DegradeKind::Glare => DEFAULT_LABELS[3],
            DegradeKind::Noise => DEFAULT_LABELS[4],
            DegradeKind::Underexposure => DEFAULT_LABELS[5],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DegradeSpec {
    pub kind: DegradeKind,
    pub severity: f64,
}

impl DegradeSpec {
    pub fn new(kind: DegradeKind, severity: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&severity) {
            return Err(Error::InvalidParameter(format!(
                "severity must be in [0, 1], got {severity}"
            )));
        }
        Ok(Self { kind, severity })
    }
}

/// Applies one degradation. Severity 0 returns the input unchanged for every
/// kind; randomness (noise, blob placement) comes from `rng`.
pub fn apply_degradation(img: &GrayImage, spec: DegradeSpec, rng: &mut ChaCha8Rng) -> Result<GrayImage> {
    let s = spec.severity;
    if spec.kind == DegradeKind::Clean || s == 0.0 {
        return Ok(img.clone());
    }
    let (h, w) = (img.height(), img.width());
    let src = img.as_slice();
    let out: Vec<f64> = match spec.kind {
        DegradeKind::Clean => unreachable!(),
        DegradeKind::Blur => gaussian_blur(img.as_field(), 4.0 * s).into_vec(),
        DegradeKind::Noise => {
            let normal = Normal::new(0.0, 0.15 * s).expect("positive std");
            src.iter().map(|&v| v + normal.sample(rng)).collect()
        }
        DegradeKind::Underexposure => src.iter().map(|&v| (v * (1.0 - 0.85 * s)).powf(1.0 + s)).collect(),
        DegradeKind::Glare => {
            let short = h.min(w) as f64;
            let radius = (0.10 + 0.40 * s) * short;
            let ci = rng.gen_range(0.0..h as f64);
            let cj = rng.gen_range(0.0..w as f64);
            let amp = 1.5 * s;
            let rho2 = 2.0 * (0.5 * radius).powi(2);
            let veil = 0.25 * s;
            let mut out = Vec::with_capacity(h * w);
            for i in 0..h {
                for j in 0..w {
                    let d2 = (i as f64 - ci).powi(2) + (j as f64 - cj).powi(2);
                    let g = (-d2 / rho2).exp();
                    let v = src[i * w + j];
                    out.push(v + amp * g + veil * (1.0 - v));
                }
            }
            out
        }
        DegradeKind::Soiling => {
            let mask = soiling_mask(h, w, s, rng);
            let tone = rng.gen_range(0.05..0.25);
            let smeared = gaussian_blur(img.as_field(), 3.0);
            src.iter()
                .zip(mask.as_slice())
                .zip(smeared.as_slice())
                .map(|((&v, &m), &b)| (1.0 - m) * v + m * (0.7 * tone + 0.3 * b * tone))
                .collect()
        }
    };
    GrayImage::from_clipped(h, w, out)
}

/// Opacity mask of 3 to 8 soft elliptical blobs covering roughly
/// `(0.15 + 0.3 s)` of the frame.
fn soiling_mask(h: usize, w: usize, s: f64, rng: &mut ChaCha8Rng) -> Field {
    let n = rng.gen_range(3..=8);
    let coverage = (0.15 + 0.3 * s) * (h * w) as f64;
    let mut mask = Field::zeros(h, w);
    let mut mean_radius = 0.0;
    for _ in 0..n {
        let area = coverage / n as f64 * rng.gen_range(0.6..1.4);
        let aspect: f64 = rng.gen_range(0.5..2.0);
        let r = (area / std::f64::consts::PI).sqrt();
        let (ri, rj) = (r * aspect.sqrt(), r / aspect.sqrt());
        mean_radius += r / n as f64;
        let (mi, mj) = ((0.5 * ri).min(0.5 * h as f64), (0.5 * rj).min(0.5 * w as f64));
        let ci = rng.gen_range(mi..=h as f64 - mi);
        let cj = rng.gen_range(mj..=w as f64 - mj);
        let opacity = (s * rng.gen_range(1.3..2.0)).min(1.0);
        for i in 0..h {
            for j in 0..w {
                let d = ((i as f64 - ci) / ri).powi(2) + ((j as f64 - cj) / rj).powi(2);
                if d <= 1.0 && mask.get(i, j) < opacity {
                    mask.set(i, j, opacity);
                }
            }
        }
    }
    gaussian_blur(&mask, (0.3 * mean_radius).max(1.0))
}

/// Random crop of 75 to 100 percent of each side (same fraction for both),
/// optional horizontal mirror, bilinear resize to `size = (height, width)`.
pub fn augment(img: &GrayImage, size: (usize, usize), rng: &mut ChaCha8Rng) -> Result<GrayImage> {
    let (h, w) = (img.height() as f64, img.width() as f64);
    let f = rng.gen_range(0.75..=1.0);
    let (ch, cw) = (h * f, w * f);
    let top = rng.gen_range(0.0..=(h - ch));
    let left = rng.gen_range(0.0..=(w - cw));
    let flip = rng.gen_bool(0.5);
    let (oh, ow) = size;
    let src = img.as_field();
    let sample = |y: f64, x: f64| {
        let y = y.clamp(0.0, h - 1.0);
        let x = x.clamp(0.0, w - 1.0);
        let (y0, x0) = (y.floor() as usize, x.floor() as usize);
        let (y1, x1) = ((y0 + 1).min(src.rows() - 1), (x0 + 1).min(src.cols() - 1));
        let (fy, fx) = (y - y0 as f64, x - x0 as f64);
        let a = src.get(y0, x0) * (1.0 - fx) + src.get(y0, x1) * fx;
        let b = src.get(y1, x0) * (1.0 - fx) + src.get(y1, x1) * fx;
        a * (1.0 - fy) + b * fy
    };
    GrayImage::from_fn(oh, ow, |i, j| {
        let jj = if flip { ow - 1 - j } else { j };
        let y = top + (i as f64 + 0.5) * ch / oh as f64 - 0.5;
        let x = left + (jj as f64 + 0.5) * cw / ow as f64 - 0.5;
        sample(y, x)
    })
}

/// Mixes a corpus seed and an item index into an independent stream seed.
pub fn item_seed(seed: u64, index: u64) -> u64 {
    let mut z = seed ^ index.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

const BUNDLED: [(&str, &[u8]); 12] = [
    ("astronaut", include_bytes!("../assets/bases/astronaut.png")),
    ("brick", include_bytes!("../assets/bases/brick.png")),
    ("camera", include_bytes!("../assets/bases/camera.png")),
    ("cell", include_bytes!("../assets/bases/cell.png")),
    ("chelsea", include_bytes!("../assets/bases/chelsea.png")),
    ("coffee", include_bytes!("../assets/bases/coffee.png")),
    ("coins", include_bytes!("../assets/bases/coins.png")),
    ("grass", include_bytes!("../assets/bases/grass.png")),
    ("gravel", include_bytes!("../assets/bases/gravel.png")),
    ("ihc", include_bytes!("../assets/bases/ihc.png")),
    ("rocket", include_bytes!("../assets/bases/rocket.png")),
    ("text", include_bytes!("../assets/bases/text.png")),
];

/// The twelve 320x240 base images shipped with the library.
pub fn bundled_bases() -> Result<Vec<(String, GrayImage)>> {
    BUNDLED
        .iter()
        .map(|(name, bytes)| Ok((name.to_string(), from_dynamic(&image::load_from_memory(bytes)?)?)))
        .collect()
}

/// Every PNG or JPEG in `dir`, sorted by file name.
pub fn load_bases(dir: impl AsRef<Path>) -> Result<Vec<(String, GrayImage)>> {
    let dir = dir.as_ref();
    if !dir.is_dir() {
        return Err(Error::FileNotFound(dir.to_path_buf()));
    }
    let mut paths: Vec<PathBuf> = std::fs::read_dir(dir)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| {
            p.extension()
                .and_then(|e| e.to_str())
                .is_some_and(|e| matches!(e.to_ascii_lowercase().as_str(), "png" | "jpg" | "jpeg"))
        })
        .collect();
    paths.sort();
    if paths.is_empty() {
        return Err(Error::InsufficientData(format!("no base images in {}", dir.display())));
    }
    paths
        .iter()
        .map(|p| {
            let name = p.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
            Ok((name, load_image(p)?))
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusItem {
    pub path: String,
    pub base: String,
    pub kind: DegradeKind,
    pub severity: f64,
    pub seed: u64,
    pub camera: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusInfo {
    pub generator: String,
    pub version: String,
    pub seed: u64,
    pub per_class: usize,
    pub height: usize,
    pub width: usize,
    pub severity_range: (f64, f64),
    pub bases: Vec<String>,
    pub items: Vec<CorpusItem>,
}

/// Generates one image in memory. Item `index` of a corpus always yields the
/// same image for the same seed and bases.
pub fn synth_item(
    bases: &[(String, GrayImage)],
    kind: DegradeKind,
    index: usize,
    seed: u64,
    size: (usize, usize),
) -> Result<(GrayImage, CorpusItem)> {
    let item = item_seed(seed, index as u64);
    let mut rng = ChaCha8Rng::seed_from_u64(item);
    let (base_name, base) = &bases[index % bases.len()];
    let augmented = augment(base, size, &mut rng)?;
    let severity = if kind == DegradeKind::Clean {
        0.0
    } else {
        rng.gen_range(SEVERITY_RANGE.0..=SEVERITY_RANGE.1)
    };
    let img = apply_degradation(&augmented, DegradeSpec::new(kind, severity)?, &mut rng)?;
    let label = kind.label();
    Ok((
        img,
        CorpusItem {
            path: format!("{label}/{label}_{index:05}.png"),
            base: base_name.clone(),
            kind,
            severity,
            seed: item,
            camera: Camera::ALL[index % 4].to_string(),
        },
    ))
}

/// Writes `per_class` images of each kind under `out_dir` together with
/// `manifest.csv` and `corpus.json`, and returns the manifest.
pub fn build_corpus(
    bases: &[(String, GrayImage)],
    per_class: usize,
    seed: u64,
    out_dir: impl AsRef<Path>,
    size: (usize, usize),
) -> Result<Manifest> {
    let out_dir = out_dir.as_ref();
    if bases.is_empty() {
        return Err(Error::InsufficientData("no base images".into()));
    }
    if per_class == 0 {
        return Err(Error::InvalidParameter("per-class count must be positive".into()));
    }
    for kind in DegradeKind::ALL {
        std::fs::create_dir_all(out_dir.join(kind.label()))?;
    }
    let jobs: Vec<(DegradeKind, usize)> = DegradeKind::ALL
        .iter()
        .enumerate()
        .flat_map(|(k, &kind)| (0..per_class).map(move |n| (kind, k * per_class + n)))
        .collect();
    let items = jobs
        .par_iter()
        .map(|&(kind, index)| {
            let (img, item) = synth_item(bases, kind, index, seed, size)?;
            img.save_png(out_dir.join(&item.path))?;
            Ok(item)
        })
        .collect::<Result<Vec<_>>>()?;

    let entries = items
        .iter()
        .map(|it| {
            Ok(ManifestEntry {
                path: it.path.clone(),
                label: it.kind.label().to_string(),
                camera: it.camera.parse()?,
                dataset: SYNTH_DATASET.to_string(),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let manifest = Manifest::new(
        DEFAULT_LABELS.iter().map(|s| s.to_string()).collect(),
        entries,
        out_dir,
    )?;
    manifest.write(out_dir.join("manifest.csv"))?;
    let info = CorpusInfo {
        generator: GENERATOR.to_string(),
        version: env!("CARGO_PKG_VERSION").to_string(),
        seed,
        per_class,
        height: size.0,
        width: size.1,
        severity_range: SEVERITY_RANGE,
        bases: bases.iter().map(|(n, _)| n.clone()).collect(),
        items,
    };
    std::fs::write(out_dir.join("corpus.json"), serde_json::to_string_pretty(&info)?)?;
    Ok(manifest)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::{compute_fields, extract_features, FilterConfig};

    fn features(img: &GrayImage) -> Vec<f64> {
        extract_features(&compute_fields(img, &FilterConfig::default()).unwrap())
            .unwrap()
            .as_slice()
            .to_vec()
    }

    fn idx(name: &str) -> usize {
        crate::FEATURE_NAMES.iter().position(|n| *n == name).unwrap()
    }

    fn small_bases() -> Vec<(String, GrayImage)> {
        bundled_bases()
            .unwrap()
            .into_iter()
            .map(|(n, b)| {
                let mut rng = ChaCha8Rng::seed_from_u64(0);
                (n, augment(&b, (60, 80), &mut rng).unwrap())
            })
            .collect()
    }

    #[test]
    fn zero_severity_is_identity() {
        let (_, base) = &small_bases()[0];
        for kind in DegradeKind::ALL {
            let mut rng = ChaCha8Rng::seed_from_u64(5);
            let out = apply_degradation(base, DegradeSpec::new(kind, 0.0).unwrap(), &mut rng).unwrap();
            assert_eq!(&out, base, "{kind:?}");
        }
    }

    #[test]
    fn degradations_are_seeded() {
        let (_, base) = &small_bases()[1];
        for kind in DegradeKind::ALL {
            let spec = DegradeSpec::new(kind, 0.7).unwrap();
            let a = apply_degradation(base, spec, &mut ChaCha8Rng::seed_from_u64(9)).unwrap();
            let b = apply_degradation(base, spec, &mut ChaCha8Rng::seed_from_u64(9)).unwrap();
            assert_eq!(a, b);
        }
    }

    #[test]
    fn outputs_stay_in_range() {
        let (_, base) = &small_bases()[2];
        for kind in DegradeKind::ALL {
            let out = apply_degradation(base, DegradeSpec::new(kind, 1.0).unwrap(), &mut ChaCha8Rng::seed_from_u64(1))
                .unwrap();
            assert!(out.as_slice().iter().all(|v| (0.0..=1.0).contains(v)));
        }
        assert!(DegradeSpec::new(DegradeKind::Blur, 1.5).is_err());
    }

    #[test]
    fn degradations_move_features_the_expected_way() {
        let lap_var = idx("laplacian_var_pos");
        let mean_i = idx("intensity_mean_pos");
        let contrast = idx("contrast_mean_pos");
        for (name, base) in small_bases() {
            let f0 = features(&base);
            let mut rng = ChaCha8Rng::seed_from_u64(3);
            let noisy = apply_degradation(&base, DegradeSpec::new(DegradeKind::Noise, 0.5).unwrap(), &mut rng).unwrap();
            assert!(features(&noisy)[lap_var] > f0[lap_var], "noise on {name}");
            let dark =
                apply_degradation(&base, DegradeSpec::new(DegradeKind::Underexposure, 0.5).unwrap(), &mut rng).unwrap();
            assert!(features(&dark)[mean_i] < f0[mean_i], "underexposure on {name}");
            let blurred = apply_degradation(&base, DegradeSpec::new(DegradeKind::Blur, 0.5).unwrap(), &mut rng).unwrap();
            assert!(features(&blurred)[contrast] < f0[contrast], "blur on {name}");
        }
    }

    #[test]
    fn stronger_blur_removes_more_contrast() {
        let (_, base) = &small_bases()[3];
        let contrast = idx("contrast_mean_pos");
        let mut last = features(base)[contrast];
        for s in [0.2, 0.5, 1.0] {
            let b = apply_degradation(base, DegradeSpec::new(DegradeKind::Blur, s).unwrap(), &mut ChaCha8Rng::seed_from_u64(0))
                .unwrap();
            let c = features(&b)[contrast];
            assert!(c < last);
            last = c;
        }
    }

    #[test]
    fn vanishing_blur_is_identity() {
        let (_, base) = &small_bases()[4];
        let out = apply_degradation(base, DegradeSpec::new(DegradeKind::Blur, 1e-4).unwrap(), &mut ChaCha8Rng::seed_from_u64(0))
            .unwrap();
        for (a, b) in out.as_slice().iter().zip(base.as_slice()) {
            assert!((a - b).abs() < 1e-6);
        }
    }

    #[test]
    fn classes_separate_in_feature_space() {
        let bases = small_bases();
        let mut rows = Vec::new();
        let mut class = Vec::new();
        for (k, kind) in DegradeKind::ALL.iter().enumerate() {
            for n in 0..12 {
                let (img, _) = synth_item(&bases, *kind, k * 12 + n, 42, (60, 80)).unwrap();
                rows.push(features(&img));
                class.push(k);
            }
        }
        let refs: Vec<&[f64]> = rows.iter().map(|r| r.as_slice()).collect();
        let st = crate::Standardizer::fit(&refs).unwrap();
        let z: Vec<Vec<f64>> = rows.iter().map(|r| st.transform(r).unwrap()).collect();
        let dist = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt();
        let centroids: Vec<Vec<f64>> = (0..6)
            .map(|k| {
                let members: Vec<&Vec<f64>> = z.iter().zip(&class).filter(|(_, &c)| c == k).map(|(r, _)| r).collect();
                (0..z[0].len())
                    .map(|d| members.iter().map(|r| r[d]).sum::<f64>() / members.len() as f64)
                    .collect()
            })
            .collect();
        let mut between = Vec::new();
        for a in 0..6 {
            for b in (a + 1)..6 {
                between.push(dist(&centroids[a], &centroids[b]));
            }
        }
        let between = between.iter().sum::<f64>() / between.len() as f64;
        let within = z.iter().zip(&class).map(|(r, &c)| dist(r, &centroids[c])).sum::<f64>() / z.len() as f64;
        assert!(between > within, "between {between} within {within}");
    }

    #[test]
    fn item_seeds_differ() {
        let seeds: std::collections::HashSet<u64> = (0..1000).map(|i| item_seed(42, i)).collect();
        assert_eq!(seeds.len(), 1000);
        assert_ne!(item_seed(1, 0), item_seed(2, 0));
    }

    #[test]
    fn corpus_layout_and_determinism() {
        let bases = small_bases();
        let a = tempfile::tempdir().unwrap();
        let b = tempfile::tempdir().unwrap();
        let m = build_corpus(&bases, 3, 7, a.path(), (40, 50)).unwrap();
        build_corpus(&bases, 3, 7, b.path(), (40, 50)).unwrap();
        assert_eq!(m.len(), 18);
        for (label, n) in m.class_counts() {
            assert_eq!(n, 3, "{label}");
        }
        for e in m.entries() {
            let pa = std::fs::read(a.path().join(&e.path)).unwrap();
            let pb = std::fs::read(b.path().join(&e.path)).unwrap();
            assert_eq!(pa, pb);
            let img = load_image(a.path().join(&e.path)).unwrap();
            assert_eq!((img.height(), img.width()), (40, 50));
        }
        let loaded = crate::dataset::load_manifest(a.path().join("manifest.csv")).unwrap();
        assert_eq!(loaded.entries(), m.entries());
        let info: CorpusInfo =
            serde_json::from_str(&std::fs::read_to_string(a.path().join("corpus.json")).unwrap()).unwrap();
        assert_eq!(info.items.len(), 18);
        assert!(info.items.iter().filter(|i| i.kind != DegradeKind::Clean).all(|i| i.severity >= 0.3));
    }

    #[test]
    fn load_bases_reads_directory() {
        let dir = tempfile::tempdir().unwrap();
        assert!(load_bases(dir.path()).is_err());
        let (_, base) = &small_bases()[0];
        base.save_png(dir.path().join("b.png")).unwrap();
        base.save_png(dir.path().join("a.png")).unwrap();
        std::fs::write(dir.path().join("notes.txt"), "x").unwrap();
        let names: Vec<String> = load_bases(dir.path()).unwrap().into_iter().map(|(n, _)| n).collect();
        assert_eq!(names, ["a", "b"]);
    }
}
