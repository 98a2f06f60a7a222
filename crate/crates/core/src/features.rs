//! Signed-moment features and standardization.
//!
//! Each filter field is summarized by the mean and variance of its
//! non-negative values and, separately, of its negative values. Both sums are
//! normalized by the *total* element count of the field, not by the number of
//! elements on that side of zero. The intensity and contrast fields are
//! non-negative and contribute only their non-negative pair, giving 20 values
//! per image.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::Field;
use crate::filter::FilterFieldSet;

pub const FEATURE_COUNT: usize = 20;

/// Identifies the layout of [`FEATURE_NAMES`]; stored with caches and models.
pub const FEATURE_ORDER_TAG: &str = "signed-moments-v1";

pub const FEATURE_NAMES: [&str; FEATURE_COUNT] = [
    "intensity_mean_pos",
    "intensity_var_pos",
    "mean_sub_mean_pos",
    "mean_sub_var_pos",
    "mean_sub_mean_neg",
    "mean_sub_var_neg",
    "contrast_mean_pos",
    "contrast_var_pos",
    "laplacian_mean_pos",
    "laplacian_var_pos",
    "laplacian_mean_neg",
    "laplacian_var_neg",
    "mscn_mean_pos",
    "mscn_var_pos",
    "mscn_mean_neg",
    "mscn_var_neg",
    "mscn_prod_mean_pos",
    "mscn_prod_var_pos",
    "mscn_prod_mean_neg",
    "mscn_prod_var_neg",
];

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SignedMoments {
    pub mean_pos: f64,
    pub var_pos: f64,
    pub mean_neg: f64,
    pub var_neg: f64,
}

/// First and second moments of the non-negative and negative parts of
/// `values`, both normalized by `denom`.
pub fn signed_moments(values: &[f64], denom: usize) -> Result<SignedMoments> {
    if values.is_empty() || denom == 0 {
        return Err(Error::EmptyField);
    }
    let n = denom as f64;
    let (mut sum_pos, mut sum_neg) = (0.0, 0.0);
    for &x in values {
        if x >= 0.0 {
            sum_pos += x;
        } else {
            sum_neg += x;
        }
    }
    let mean_pos = sum_pos / n;
    let mean_neg = sum_neg / n;
    let (mut sq_pos, mut sq_neg) = (0.0, 0.0);
    for &x in values {
        if x >= 0.0 {
            sq_pos += (x - mean_pos) * (x - mean_pos);
        } else {
            sq_neg += (x - mean_neg) * (x - mean_neg);
        }
    }
    Ok(SignedMoments {
        mean_pos,
        var_pos: sq_pos / n,
        mean_neg,
        var_neg: sq_neg / n,
    })
}

/// The 20-element per-image feature vector, in [`FEATURE_NAMES`] order.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FeatureVector(pub [f64; FEATURE_COUNT]);

impl FeatureVector {
    pub fn from_slice(values: &[f64]) -> Result<Self> {
        let arr: [f64; FEATURE_COUNT] = values.try_into().map_err(|_| Error::DimensionMismatch {
            expected: FEATURE_COUNT,
            actual: values.len(),
        })?;
        Ok(Self(arr))
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }
}

fn field_moments(field: &Field) -> Result<SignedMoments> {
    signed_moments(field.as_slice(), field.len())
}

pub fn extract_features(fields: &FilterFieldSet) -> Result<FeatureVector> {
    let mut out = Vec::with_capacity(FEATURE_COUNT);
    for (field, signed) in [
        (&fields.intensity, false),
        (&fields.mean_sub, true),
        (&fields.contrast, false),
        (&fields.laplacian, true),
        (&fields.mscn, true),
        (&fields.mscn_prod, true),
    ] {
        let m = field_moments(field)?;
        out.extend([m.mean_pos, m.var_pos]);
        if signed {
            out.extend([m.mean_neg, m.var_neg]);
        }
    }
    FeatureVector::from_slice(&out)
}

/// Per-dimension centring and scaling, fitted on training features.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Standardizer {
    mean: Vec<f64>,
    scale: Vec<f64>,
}

impl Standardizer {
    /// Sample mean and population standard deviation per dimension.
    /// Dimensions with (numerically) zero spread get scale 1.
    pub fn fit(rows: &[&[f64]]) -> Result<Self> {
        if rows.len() < 2 {
            return Err(Error::InsufficientData(format!(
                "standardizer needs at least 2 vectors, got {}",
                rows.len()
            )));
        }
        let dim = rows[0].len();
        if let Some(bad) = rows.iter().find(|r| r.len() != dim) {
            return Err(Error::DimensionMismatch {
                expected: dim,
                actual: bad.len(),
            });
        }
        let n = rows.len() as f64;
        let mut mean = vec![0.0; dim];
        for r in rows {
            for (m, v) in mean.iter_mut().zip(r.iter()) {
                *m += v;
            }
        }
        mean.iter_mut().for_each(|m| *m /= n);
        let mut var = vec![0.0; dim];
        for r in rows {
            for ((s, v), m) in var.iter_mut().zip(r.iter()).zip(&mean) {
                *s += (v - m) * (v - m);
            }
        }
        let scale = var
            .iter()
            .zip(&mean)
            .map(|(s, m)| {
                let sd = (s / n).sqrt();
                if sd == 0.0 || sd <= 10.0 * f64::EPSILON * m.abs() {
                    1.0
                } else {
                    sd
                }
            })
            .collect();
        Ok(Self { mean, scale })
    }

    pub fn fit_features(features: &[FeatureVector]) -> Result<Self> {
        let rows: Vec<&[f64]> = features.iter().map(|f| f.as_slice()).collect();
        Self::fit(&rows)
    }

    pub fn from_parts(mean: Vec<f64>, scale: Vec<f64>) -> Result<Self> {
        if mean.len() != scale.len() {
            return Err(Error::DimensionMismatch {
                expected: mean.len(),
                actual: scale.len(),
            });
        }
        if let Some(s) = scale.iter().find(|s| !(**s > 0.0) || !s.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "standardizer scale must be positive and finite, got {s}"
            )));
        }
        Ok(Self { mean, scale })
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn mean(&self) -> &[f64] {
        &self.mean
    }

    pub fn scale(&self) -> &[f64] {
        &self.scale
    }

    pub fn transform(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.check_dim(x.len())?;
        Ok(x.iter()
            .zip(&self.mean)
            .zip(&self.scale)
            .map(|((v, m), s)| (v - m) / s)
            .collect())
    }

    pub fn inverse_transform(&self, z: &[f64]) -> Result<Vec<f64>> {
        self.check_dim(z.len())?;
        Ok(z.iter()
            .zip(&self.mean)
            .zip(&self.scale)
            .map(|((v, m), s)| v * s + m)
            .collect())
    }

    fn check_dim(&self, actual: usize) -> Result<()> {
        if actual != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                actual,
            });
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::filter::{compute_fields, FilterConfig};
    use crate::image::GrayImage;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn signed_moments_hand_example() {
        // {1, -1, 2, 0}, HW = 4
        let m = signed_moments(&[1.0, -1.0, 2.0, 0.0], 4).unwrap();
        assert!((m.mean_pos - 0.75).abs() < 1e-15);
        assert!((m.var_pos - 0.546875).abs() < 1e-15);
        assert!((m.mean_neg + 0.25).abs() < 1e-15);
        assert!((m.var_neg - 0.140625).abs() < 1e-15);
    }

    #[test]
    fn signed_moments_degenerate_cases() {
        let m = signed_moments(&[0.0; 6], 6).unwrap();
        assert_eq!((m.mean_pos, m.var_pos, m.mean_neg, m.var_neg), (0.0, 0.0, 0.0, 0.0));

        let m = signed_moments(&[0.5, 1.0, 0.0], 3).unwrap();
        assert_eq!(m.mean_neg, 0.0);
        assert_eq!(m.var_neg, 0.0);

        assert!(matches!(signed_moments(&[], 0), Err(Error::EmptyField)));
    }

    #[test]
    fn constant_image_vector() {
        let img = GrayImage::constant(16, 16, 0.5).unwrap();
        let f = extract_features(&compute_fields(&img, &FilterConfig::default()).unwrap()).unwrap();
        let mut expected = [0.0; FEATURE_COUNT];
        expected[0] = 0.5;
        assert_eq!(f.0, expected);
    }

    #[test]
    fn feature_signs_and_intensity_range() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let img = GrayImage::from_fn(24, 30, |_, _| rng.gen::<f64>()).unwrap();
        let f = extract_features(&compute_fields(&img, &FilterConfig::default()).unwrap()).unwrap();
        for (name, v) in FEATURE_NAMES.iter().zip(f.0) {
            if name.contains("_var_") || name.contains("_mean_pos") {
                assert!(v >= 0.0, "{name} = {v}");
            } else {
                assert!(v <= 0.0, "{name} = {v}");
            }
        }
        assert!((0.0..=1.0).contains(&f.0[0]));
    }

    #[test]
    fn feature_names_are_unique() {
        let mut names = FEATURE_NAMES.to_vec();
        names.sort();
        names.dedup();
        assert_eq!(names.len(), FEATURE_COUNT);
    }

    #[test]
    fn standardizer_symmetric_pair() {
        let v = [1.0, -2.0, 3.5];
        let neg: Vec<f64> = v.iter().map(|x| -x).collect();
        let s = Standardizer::fit(&[&v, &neg]).unwrap();
        assert_eq!(s.mean(), &[0.0, 0.0, 0.0]);
        assert_eq!(s.scale(), &[1.0, 2.0, 3.5]);
    }

    #[test]
    fn standardizer_constant_dimension_gets_unit_scale() {
        let rows = [[0.3, 1.0], [0.3, 2.0], [0.3, 4.0]];
        let refs: Vec<&[f64]> = rows.iter().map(|r| r.as_slice()).collect();
        let s = Standardizer::fit(&refs).unwrap();
        assert_eq!(s.scale()[0], 1.0);
        assert_eq!(s.transform(&[0.3, 1.0]).unwrap()[0], 0.0);
    }

    #[test]
    fn standardizer_needs_two_vectors() {
        assert!(matches!(
            Standardizer::fit(&[&[1.0][..]]),
            Err(Error::InsufficientData(_))
        ));
        let s = Standardizer::fit(&[&[1.0, 2.0][..], &[3.0, 4.0][..]]).unwrap();
        assert!(matches!(
            s.transform(&[1.0]),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn standardized_training_set_has_zero_mean_unit_variance() {
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        let rows: Vec<Vec<f64>> = (0..100)
            .map(|_| (0..FEATURE_COUNT).map(|d| rng.gen::<f64>() * (d as f64 + 1.0) - 3.0).collect())
            .collect();
        let refs: Vec<&[f64]> = rows.iter().map(|r| r.as_slice()).collect();
        let s = Standardizer::fit(&refs).unwrap();
        let z: Vec<Vec<f64>> = rows.iter().map(|r| s.transform(r).unwrap()).collect();
        for d in 0..FEATURE_COUNT {
            let m = z.iter().map(|r| r[d]).sum::<f64>() / 100.0;
            let v = z.iter().map(|r| (r[d] - m).powi(2)).sum::<f64>() / 100.0;
            assert!(m.abs() < 1e-9);
            assert!((v - 1.0).abs() < 1e-9);
        }
        let back = s.inverse_transform(&s.transform(&rows[0]).unwrap()).unwrap();
        for (a, b) in back.iter().zip(&rows[0]) {
            assert!((a - b).abs() < 1e-12);
        }
        assert!(s.transform(s.mean()).unwrap().iter().all(|&v| v == 0.0));
    }

    proptest! {
        #[test]
        fn signed_means_recover_total_sum(values in proptest::collection::vec(-5.0f64..5.0, 1..200)) {
            let m = signed_moments(&values, values.len()).unwrap();
            let n = values.len() as f64;
            let total: f64 = values.iter().sum();
            prop_assert!((m.mean_pos * n + m.mean_neg * n - total).abs() < 1e-9);
            prop_assert!(m.var_pos >= 0.0 && m.var_neg >= 0.0);
            prop_assert!(m.mean_pos >= 0.0 && m.mean_neg <= 0.0);
        }
    }
}
