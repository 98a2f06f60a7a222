//! Per-image filter fields.
//!
//! From a [`GrayImage`] this module derives the intensity field itself, the
//! local mean subtracted field `I - mu`, the local contrast field `sigma`, a
//! discrete Laplacian, the MSCN coefficients `(I - mu) / (sigma + e)` and the
//! products of horizontally adjacent MSCN coefficients.
//!
//! All windowed operations use half-sample symmetric (mirror) padding. The
//! local mean is evaluated separably; the contrast field is evaluated directly
//! over the 2-D window because its centre value `mu(i, j)` differs per pixel.
//!
//! The pairwise product field pairs `(i, j)` with `(i, j + 1)`, i.e. neighbours
//! along the width axis. A literal reading of the row/column indices of the
//! product formula would pair vertical neighbours instead; the horizontal
//! reading is used here.

use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::{reflect_index, Field};
use crate::image::GrayImage;

/// Default stabilizing constant for MSCN: 1 on a 0..255 scale.
pub const DEFAULT_EPSILON: f64 = 1.0 / 255.0;

/// Circular Gaussian weighting window sampled out to three standard
/// deviations and scaled to unit volume.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianKernel {
    radius_rows: usize,
    radius_cols: usize,
    row_taps: Vec<f64>,
    col_taps: Vec<f64>,
    weights: Vec<f64>,
}

impl GaussianKernel {
    /// Kernel of size `(2K+1) x (2L+1)`. The standard deviation along each
    /// axis is `(2R+1)/6`, placing the window edge at three deviations.
    pub fn new(radius_rows: usize, radius_cols: usize) -> Result<Self> {
        if radius_rows < 1 || radius_cols < 1 {
            return Err(Error::InvalidRadius {
                rows: radius_rows,
                cols: radius_cols,
            });
        }
        let row_taps = gaussian_taps((2 * radius_rows + 1) as f64 / 6.0, radius_rows);
        let col_taps = gaussian_taps((2 * radius_cols + 1) as f64 / 6.0, radius_cols);
        let weights = row_taps
            .iter()
            .flat_map(|&a| col_taps.iter().map(move |&b| a * b))
            .collect();
        Ok(Self {
            radius_rows,
            radius_cols,
            row_taps,
            col_taps,
            weights,
        })
    }

    pub fn radius_rows(&self) -> usize {
        self.radius_rows
    }

    pub fn radius_cols(&self) -> usize {
        self.radius_cols
    }

    pub fn rows(&self) -> usize {
        2 * self.radius_rows + 1
    }

    pub fn cols(&self) -> usize {
        2 * self.radius_cols + 1
    }

    /// Weight at offset `(k, l)` with `-K <= k <= K`, `-L <= l <= L`.
    pub fn weight(&self, k: isize, l: isize) -> f64 {
        let r = (k + self.radius_rows as isize) as usize;
        let c = (l + self.radius_cols as isize) as usize;
        self.weights[r * self.cols() + c]
    }

    /// Row-major `(2K+1) x (2L+1)` weights.
    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// Normalized 1-D factor along the row (vertical) offset `k`.
    pub fn row_taps(&self) -> &[f64] {
        &self.row_taps
    }

    /// Normalized 1-D factor along the column (horizontal) offset `l`.
    pub fn col_taps(&self) -> &[f64] {
        &self.col_taps
    }
}

/// Normalized 1-D Gaussian taps at offsets `-radius..=radius`.
pub fn gaussian_taps(sigma: f64, radius: usize) -> Vec<f64> {
    let r = radius as isize;
    let raw: Vec<f64> = (-r..=r)
        .map(|x| (-((x * x) as f64) / (2.0 * sigma * sigma)).exp())
        .collect();
    let total: f64 = raw.iter().sum();
    raw.into_iter().map(|v| v / total).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum LaplacianStencil {
    /// Centre -4, edge-adjacent neighbours +1.
    #[default]
    FourNeighbor,
    /// Centre -8, all eight neighbours +1.
    EightNeighbor,
}

impl std::fmt::Display for LaplacianStencil {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            LaplacianStencil::FourNeighbor => f.write_str("four-neighbor"),
            LaplacianStencil::EightNeighbor => f.write_str("eight-neighbor"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FilterConfig {
    pub radius_rows: usize,
    pub radius_cols: usize,
    pub epsilon: f64,
    pub laplacian: LaplacianStencil,
}

impl Default for FilterConfig {
    fn default() -> Self {
        Self {
            radius_rows: 3,
            radius_cols: 3,
            epsilon: DEFAULT_EPSILON,
            laplacian: LaplacianStencil::FourNeighbor,
        }
    }
}

impl FilterConfig {
    pub fn validate(&self) -> Result<()> {
        GaussianKernel::new(self.radius_rows, self.radius_cols)?;
        if !(self.epsilon > 0.0) {
            return Err(Error::NonPositiveEpsilon(self.epsilon));
        }
        Ok(())
    }
}

/// The six per-image quantities the features are computed from.
#[derive(Debug, Clone, PartialEq)]
pub struct FilterFieldSet {
    pub intensity: Field,
    pub mean_sub: Field,
    pub contrast: Field,
    pub laplacian: Field,
    pub mscn: Field,
    /// `H x (W-1)`.
    pub mscn_prod: Field,
}

impl FilterFieldSet {
    /// `(name, field)` pairs in feature order.
    pub fn named(&self) -> [(&'static str, &Field); 6] {
        [
            ("intensity", &self.intensity),
            ("mean_sub", &self.mean_sub),
            ("contrast", &self.contrast),
            ("laplacian", &self.laplacian),
            ("mscn", &self.mscn),
            ("mscn_prod", &self.mscn_prod),
        ]
    }

    /// Writes each field as a min-max normalized 8-bit PNG into `dir`.
    pub fn export_pngs(&self, dir: impl AsRef<Path>) -> Result<()> {
        let dir = dir.as_ref();
        std::fs::create_dir_all(dir)?;
        for (name, field) in self.named() {
            let lo = field.as_slice().iter().copied().fold(f64::INFINITY, f64::min);
            let hi = field.as_slice().iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let span = if hi > lo { hi - lo } else { 1.0 };
            let bytes: Vec<u8> = field
                .as_slice()
                .iter()
                .map(|&v| (((v - lo) / span) * 255.0).round() as u8)
                .collect();
            let buf = image::GrayImage::from_raw(field.cols() as u32, field.rows() as u32, bytes)
                .expect("buffer length matches field shape");
            buf.save_with_format(dir.join(format!("{name}.png")), image::ImageFormat::Png)?;
        }
        Ok(())
    }
}

fn check_shape(expected: (usize, usize), actual: (usize, usize)) -> Result<()> {
    if expected != actual {
        return Err(Error::ShapeMismatch { expected, actual });
    }
    Ok(())
}

/// Gaussian-weighted local mean with mirror padding.
///
/// Evaluated separably in deviation form,
/// `mu(i,j) = I(i,j) + sum_k a_k [D(i+k,j) + I(i+k,j) - I(i,j)]` with the
/// horizontal pass `D(i,j) = sum_l b_l (I(i,j+l) - I(i,j))`, which equals the
/// direct weighted sum for unit-sum taps and returns the input exactly on
/// flat regions.
pub fn local_mean(img: &GrayImage, kern: &GaussianKernel) -> Field {
    let src = img.as_field();
    let (h, w) = src.shape();
    let rk = kern.radius_rows() as isize;
    let rl = kern.radius_cols() as isize;
    let col_idx = reflected_offsets(w, rl);
    let row_idx = reflected_offsets(h, rk);

    let mut dev = Field::zeros(h, w);
    dev.as_mut_slice()
        .par_chunks_mut(w)
        .enumerate()
        .for_each(|(i, out)| {
            let row = src.row(i);
            for (j, o) in out.iter_mut().enumerate() {
                let centre = row[j];
                let idx = &col_idx[j];
                let mut acc = 0.0;
                for (t, &b) in kern.col_taps().iter().enumerate() {
                    acc += b * (row[idx[t]] - centre);
                }
                *o = acc;
            }
        });

    let mut mu = Field::zeros(h, w);
    mu.as_mut_slice()
        .par_chunks_mut(w)
        .enumerate()
        .for_each(|(i, out)| {
            let idx = &row_idx[i];
            let centre_row = src.row(i);
            for (j, o) in out.iter_mut().enumerate() {
                let centre = centre_row[j];
                let mut acc = 0.0;
                for (t, &a) in kern.row_taps().iter().enumerate() {
                    let r = idx[t];
                    acc += a * (dev.get(r, j) + (src.get(r, j) - centre));
                }
                *o = (centre + acc).clamp(0.0, 1.0);
            }
        });
    mu
}

/// Elementwise `I - mu`.
pub fn mean_subtracted(img: &GrayImage, mu: &Field) -> Result<Field> {
    let src = img.as_field();
    check_shape(src.shape(), mu.shape())?;
    let data = src
        .as_slice()
        .iter()
        .zip(mu.as_slice())
        .map(|(a, b)| a - b)
        .collect();
    Ok(Field::from_vec(src.rows(), src.cols(), data))
}

/// Local contrast `sigma(i,j) = sqrt(sum_{k,l} w_{k,l} (I(i+k,j+l) - mu(i,j))^2)`.
pub fn local_contrast(img: &GrayImage, mu: &Field, kern: &GaussianKernel) -> Result<Field> {
    let src = img.as_field();
    check_shape(src.shape(), mu.shape())?;
    let (h, w) = src.shape();
    let col_idx = reflected_offsets(w, kern.radius_cols() as isize);
    let row_idx = reflected_offsets(h, kern.radius_rows() as isize);
    let kc = kern.cols();
    let weights = kern.weights();

    let mut sigma = Field::zeros(h, w);
    sigma
        .as_mut_slice()
        .par_chunks_mut(w)
        .enumerate()
        .for_each(|(i, out)| {
            let ridx = &row_idx[i];
            for (j, o) in out.iter_mut().enumerate() {
                let centre = mu.get(i, j);
                let cidx = &col_idx[j];
                let mut acc = 0.0;
                for (tr, &r) in ridx.iter().enumerate() {
                    let row = src.row(r);
                    let wrow = &weights[tr * kc..(tr + 1) * kc];
                    for (tc, &c) in cidx.iter().enumerate() {
                        let d = row[c] - centre;
                        acc += wrow[tc] * d * d;
                    }
                }
                *o = acc.sqrt();
            }
        });
    Ok(sigma)
}

/// Discrete Laplacian with mirror padding.
pub fn laplacian(img: &GrayImage, stencil: LaplacianStencil) -> Field {
    let src = img.as_field();
    let (h, w) = src.shape();
    let at = |i: isize, j: isize| src.get(reflect_index(i, h), reflect_index(j, w));
    let mut out = Field::zeros(h, w);
    out.as_mut_slice()
        .par_chunks_mut(w)
        .enumerate()
        .for_each(|(i, row)| {
            let i = i as isize;
            for (j, o) in row.iter_mut().enumerate() {
                let j = j as isize;
                let c = at(i, j);
                let cross = at(i - 1, j) + at(i + 1, j) + at(i, j - 1) + at(i, j + 1);
                *o = match stencil {
                    LaplacianStencil::FourNeighbor => cross - 4.0 * c,
                    LaplacianStencil::EightNeighbor => {
                        let diag = at(i - 1, j - 1)
                            + at(i - 1, j + 1)
                            + at(i + 1, j - 1)
                            + at(i + 1, j + 1);
                        cross + diag - 8.0 * c
                    }
                };
            }
        });
    out
}

/// Mean subtracted contrast normalized coefficients `(I - mu) / (sigma + e)`.
pub fn mscn(img: &GrayImage, mu: &Field, sigma: &Field, epsilon: f64) -> Result<Field> {
    if !(epsilon > 0.0) {
        return Err(Error::NonPositiveEpsilon(epsilon));
    }
    let src = img.as_field();
    check_shape(src.shape(), mu.shape())?;
    check_shape(src.shape(), sigma.shape())?;
    let data = src
        .as_slice()
        .iter()
        .zip(mu.as_slice())
        .zip(sigma.as_slice())
        .map(|((i, m), s)| (i - m) / (s + epsilon))
        .collect();
    Ok(Field::from_vec(src.rows(), src.cols(), data))
}

/// Products of horizontally adjacent MSCN coefficients, shape `H x (W-1)`.
pub fn mscn_products(mscn: &Field) -> Result<Field> {
    let (h, w) = mscn.shape();
    if w < 2 {
        return Err(Error::ImageTooNarrow(w));
    }
    let mut data = Vec::with_capacity(h * (w - 1));
    for i in 0..h {
        let row = mscn.row(i);
        data.extend(row.windows(2).map(|p| p[0] * p[1]));
    }
    Ok(Field::from_vec(h, w - 1, data))
}

/// Computes all six fields, sharing one local mean between the contrast and
/// MSCN stages.
pub fn compute_fields(img: &GrayImage, cfg: &FilterConfig) -> Result<FilterFieldSet> {
    cfg.validate()?;
    let kern = GaussianKernel::new(cfg.radius_rows, cfg.radius_cols)?;
    let mu = local_mean(img, &kern);
    let mean_sub = mean_subtracted(img, &mu)?;
    let contrast = local_contrast(img, &mu, &kern)?;
    let lap = laplacian(img, cfg.laplacian);
    let coeffs = mscn(img, &mu, &contrast, cfg.epsilon)?;
    let prods = mscn_products(&coeffs)?;
    Ok(FilterFieldSet {
        intensity: img.as_field().clone(),
        mean_sub,
        contrast,
        laplacian: lap,
        mscn: coeffs,
        mscn_prod: prods,
    })
}

/// Separable convolution with mirror padding. `row_taps` run along the
/// vertical axis, `col_taps` along the horizontal axis; both must have odd
/// length.
pub fn convolve_separable(src: &Field, row_taps: &[f64], col_taps: &[f64]) -> Field {
    debug_assert!(row_taps.len() % 2 == 1 && col_taps.len() % 2 == 1);
    let (h, w) = src.shape();
    let col_idx = reflected_offsets(w, (col_taps.len() / 2) as isize);
    let row_idx = reflected_offsets(h, (row_taps.len() / 2) as isize);

    let mut tmp = Field::zeros(h, w);
    tmp.as_mut_slice()
        .par_chunks_mut(w)
        .enumerate()
        .for_each(|(i, out)| {
            let row = src.row(i);
            for (j, o) in out.iter_mut().enumerate() {
                *o = col_idx[j]
                    .iter()
                    .zip(col_taps)
                    .map(|(&c, &b)| b * row[c])
                    .sum();
            }
        });
    let mut out = Field::zeros(h, w);
    out.as_mut_slice()
        .par_chunks_mut(w)
        .enumerate()
        .for_each(|(i, o_row)| {
            for (j, o) in o_row.iter_mut().enumerate() {
                *o = row_idx[i]
                    .iter()
                    .zip(row_taps)
                    .map(|(&r, &a)| a * tmp.get(r, j))
                    .sum();
            }
        });
    out
}

/// Isotropic Gaussian blur with standard deviation `sigma` pixels, truncated
/// at `ceil(3 sigma)` (at least one tap either side).
pub fn gaussian_blur(src: &Field, sigma: f64) -> Field {
    let radius = ((3.0 * sigma).ceil() as usize).max(1);
    let taps = gaussian_taps(sigma, radius);
    convolve_separable(src, &taps, &taps)
}

/// For each position `p` in `0..n`, the reflected indices of `p-r ..= p+r`.
fn reflected_offsets(n: usize, r: isize) -> Vec<Vec<usize>> {
    (0..n as isize)
        .map(|p| (-r..=r).map(|o| reflect_index(p + o, n)).collect())
        .collect()
}
