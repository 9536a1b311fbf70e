//! Luminance to irradiance regression.

pub mod benchmark;
pub mod lstsq;
mod model_io;

use std::collections::BTreeMap;

use chrono::{DateTime, FixedOffset, NaiveDate, Utc};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ingest::PairedSample;
use lstsq::{solve_least_squares, Matrix};

pub use model_io::{load_model, read_model, save_model, write_model, MODEL_SCHEMA_VERSION};

pub const MIN_DEGREE: usize = 1;
pub const MAX_DEGREE: usize = 5;

/// Cubic reported for the WAHRSIS imager, coefficients `a0` first.
pub const REFERENCE_CUBIC: [f64; 4] = [7.954, 0.00397, 3.96e-07, -4.25e-12];

/// Polynomial in luminance, coefficients `a0..=a_degree`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolyModel {
    pub degree: usize,
    pub coefficients: Vec<f64>,
    /// Training RMSE, W/m².
    pub fit_rmse: f64,
    pub n_train: usize,
    #[serde(default)]
    pub created_utc: Option<DateTime<Utc>>,
}

impl PolyModel {
    pub fn from_coefficients(coefficients: Vec<f64>) -> Result<Self> {
        let degree = coefficients.len().checked_sub(1).ok_or_else(|| Error::SchemaMismatch("no coefficients".into()))?;
        let model = Self {
            degree,
            coefficients,
            fit_rmse: 0.0,
            n_train: 0,
            created_utc: None,
        };
        model.validate()?;
        Ok(model)
    }

    pub fn reference_cubic() -> Self {
        Self::from_coefficients(REFERENCE_CUBIC.to_vec()).expect("valid cubic")
    }

    pub fn validate(&self) -> Result<()> {
        if !(MIN_DEGREE..=MAX_DEGREE).contains(&self.degree) {
            return Err(Error::SchemaMismatch(format!("degree {} outside 1..=5", self.degree)));
        }
        if self.coefficients.len() != self.degree + 1 {
            return Err(Error::SchemaMismatch(format!(
                "{} coefficients for degree {}",
                self.coefficients.len(),
                self.degree
            )));
        }
        Ok(())
    }

    /// Horner evaluation without clamping.
    pub fn eval(&self, luminance: f64) -> f64 {
        self.coefficients.iter().rev().fold(0.0, |acc, &a| acc * luminance + a)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Prediction {
    /// W/m², never negative.
    pub value: f64,
    /// Set when the polynomial went negative and was clamped to zero.
    pub clamped: bool,
}

pub fn predict(model: &PolyModel, luminance: f64) -> Prediction {
    let raw = model.eval(luminance);
    if raw < 0.0 {
        Prediction {
            value: 0.0,
            clamped: true,
        }
    } else {
        Prediction {
            value: raw,
            clamped: false,
        }
    }
}

/// Ordinary least-squares polynomial through `(luminance, irradiance)` pairs.
///
/// The abscissa is scaled to `[-1, 1]` by its largest magnitude and the
/// Vandermonde system solved by Householder QR; coefficients are mapped
/// back to the unscaled monomial basis.
pub fn fit_polynomial(pairs: &[PairedSample], degree: usize) -> Result<PolyModel> {
    let x: Vec<f64> = pairs.iter().map(|p| p.luminance).collect();
    let y: Vec<f64> = pairs.iter().map(|p| p.irradiance).collect();
    fit_xy(&x, &y, degree)
}

pub fn fit_xy(x: &[f64], y: &[f64], degree: usize) -> Result<PolyModel> {
    if !(MIN_DEGREE..=MAX_DEGREE).contains(&degree) {
        return Err(Error::InvalidParameter(format!("degree {degree} outside 1..=5")));
    }
    if x.len() != y.len() {
        return Err(Error::LengthMismatch {
            left: x.len(),
            right: y.len(),
        });
    }
    let n = x.len();
    if n < degree + 1 {
        return Err(Error::InsufficientData {
            needed: degree + 1,
            got: n,
        });
    }
    if x.iter().chain(y).any(|v| !v.is_finite()) {
        return Err(Error::InvalidParameter("non-finite sample".into()));
    }
    let mut distinct = x.to_vec();
    distinct.sort_by(f64::total_cmp);
    distinct.dedup();
    if distinct.len() < degree + 1 {
        return Err(Error::DegenerateDesign);
    }

    let scale = x.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let t: Vec<f64> = x.iter().map(|v| v / scale).collect();
    let columns = (0..=degree)
        .map(|k| t.iter().map(|ti| ti.powi(k as i32)).collect())
        .collect();
    let design = Matrix::from_columns(n, columns);
    let scaled = solve_least_squares(&design, y, 1e-12)?;
    let coefficients: Vec<f64> = scaled
        .iter()
        .enumerate()
        .map(|(k, c)| c / scale.powi(k as i32))
        .collect();

    let mut model = PolyModel {
        degree,
        coefficients,
        fit_rmse: 0.0,
        n_train: n,
        created_utc: None,
    };
    let sse: f64 = x.iter().zip(y).map(|(xi, yi)| (model.eval(*xi) - yi).powi(2)).sum();
    model.fit_rmse = (sse / n as f64).sqrt();
    Ok(model)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SelectionRow {
    pub degree: usize,
    pub rmse: f64,
}

/// Training RMSE of every degree in `degrees`.
pub fn model_selection_table(pairs: &[PairedSample], degrees: impl IntoIterator<Item = usize>) -> Result<Vec<SelectionRow>> {
    degrees
        .into_iter()
        .map(|degree| {
            fit_polynomial(pairs, degree).map(|m| SelectionRow {
                degree,
                rmse: m.fit_rmse,
            })
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NormalizationResult {
    pub factor: f64,
    /// `sum (x b_i - a_i)^2` at the optimum.
    pub objective_value: f64,
}

pub fn normalization_objective(factor: f64, a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(ai, bi)| (factor * bi - ai).powi(2)).sum()
}

/// Scale `x` minimising `sum (x b_i - a_i)^2`: `x = sum a_i b_i / sum b_i^2`.
pub fn normalization_factor(a: &[f64], b: &[f64]) -> Result<NormalizationResult> {
    if a.len() != b.len() {
        return Err(Error::LengthMismatch {
            left: a.len(),
            right: b.len(),
        });
    }
    if a.is_empty() {
        return Err(Error::EmptyInput);
    }
    let bb: f64 = b.iter().map(|v| v * v).sum();
    if bb == 0.0 {
        return Err(Error::ZeroDenominator);
    }
    let ab: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let factor = ab / bb;
    Ok(NormalizationResult {
        factor,
        objective_value: normalization_objective(factor, a, b),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum NormalizationMode {
    /// One factor for the whole series.
    Global,
    /// One factor per local calendar day.
    PerDay,
}

/// Returns `x b_i` for every point, with `x` fitted globally or per local day.
/// Days whose luminance is all zero keep a zero scaled series.
pub fn normalize_series(
    timestamps: &[DateTime<Utc>],
    measured: &[f64],
    luminance: &[f64],
    mode: NormalizationMode,
    utc_offset: FixedOffset,
) -> Result<Vec<f64>> {
    if timestamps.len() != measured.len() || measured.len() != luminance.len() {
        return Err(Error::LengthMismatch {
            left: measured.len(),
            right: luminance.len(),
        });
    }
    match mode {
        NormalizationMode::Global => {
            let x = normalization_factor(measured, luminance)?.factor;
            Ok(luminance.iter().map(|b| x * b).collect())
        }
        NormalizationMode::PerDay => {
            let mut days: BTreeMap<NaiveDate, Vec<usize>> = BTreeMap::new();
            for (i, t) in timestamps.iter().enumerate() {
                days.entry(t.with_timezone(&utc_offset).date_naive()).or_default().push(i);
            }
            let mut out = vec![0.0; luminance.len()];
            for idx in days.values() {
                let a: Vec<f64> = idx.iter().map(|&i| measured[i]).collect();
                let b: Vec<f64> = idx.iter().map(|&i| luminance[i]).collect();
                let x = match normalization_factor(&a, &b) {
                    Ok(r) => r.factor,
                    Err(Error::ZeroDenominator) => 0.0,
                    Err(e) => return Err(e),
                };
                for &i in idx {
                    out[i] = x * luminance[i];
                }
            }
            Ok(out)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use chrono::TimeZone;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn pairs(x: &[f64], y: &[f64]) -> Vec<PairedSample> {
        let t0 = Utc.with_ymd_and_hms(2016, 9, 1, 0, 0, 0).unwrap();
        x.iter()
            .zip(y)
            .enumerate()
            .map(|(i, (&l, &s))| PairedSample {
                timestamp: t0 + chrono::Duration::seconds(i as i64),
                luminance: l,
                irradiance: s,
                gap_s: 0.0,
            })
            .collect()
    }

    fn rel(a: f64, b: f64) -> f64 {
        (a - b).abs() / b.abs()
    }

    #[test]
    fn exact_line() {
        let x: Vec<f64> = (0..10).map(f64::from).collect();
        let y: Vec<f64> = x.iter().map(|v| 2.0 * v + 1.0).collect();
        let m = fit_polynomial(&pairs(&x, &y), 1).unwrap();
        assert!((m.coefficients[0] - 1.0).abs() < 1e-12);
        assert!((m.coefficients[1] - 2.0).abs() < 1e-12);
        assert!(m.fit_rmse < 1e-12);
        assert_eq!(m.n_train, 10);
    }

    #[test]
    fn recovers_reference_cubic() {
        let truth = PolyModel::reference_cubic();
        let x: Vec<f64> = (0..200).map(|i| 2e5 * f64::from(i) / 199.0).collect();
        let y: Vec<f64> = x.iter().map(|&v| truth.eval(v)).collect();
        let m = fit_polynomial(&pairs(&x, &y), 3).unwrap();
        for (got, want) in m.coefficients.iter().zip(REFERENCE_CUBIC) {
            assert!(rel(*got, want) < 1e-6, "{got} vs {want}");
        }
    }

    #[test]
    fn too_few_or_degenerate() {
        assert!(matches!(
            fit_polynomial(&pairs(&[1.0, 2.0], &[1.0, 2.0]), 3),
            Err(Error::InsufficientData { needed: 4, got: 2 })
        ));
        assert!(matches!(
            fit_polynomial(&pairs(&[5.0; 6], &[1.0, 2.0, 3.0, 4.0, 5.0, 6.0]), 1),
            Err(Error::DegenerateDesign)
        ));
        assert!(matches!(
            fit_polynomial(&pairs(&[0.0; 6], &[1.0; 6]), 1),
            Err(Error::DegenerateDesign)
        ));
    }

    #[test]
    fn reference_cubic_predictions() {
        let m = PolyModel::reference_cubic();
        assert_eq!(predict(&m, 0.0).value, 7.954);
        assert!(rel(predict(&m, 50_000.0).value, 665.204) < 1e-9);
        assert!(rel(predict(&m, 100_000.0).value, 114.954) < 1e-9);
        let p = predict(&m, 200_000.0);
        assert!(p.clamped && p.value == 0.0);
    }

    #[test]
    fn residuals_are_orthogonal_to_design() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let x: Vec<f64> = (0..300).map(|_| rng.random_range(0.0..80_000.0)).collect();
        let y: Vec<f64> = x
            .iter()
            .map(|&v| PolyModel::reference_cubic().eval(v) + rng.random_range(-30.0..30.0))
            .collect();
        for degree in 1..=5 {
            let m = fit_xy(&x, &y, degree).unwrap();
            // check against the scaled columns so every column has unit magnitude
            let scale = x.iter().cloned().fold(0.0, f64::max);
            for k in 0..=degree {
                let col: Vec<f64> = x.iter().map(|v| (v / scale).powi(k as i32)).collect();
                let dot: f64 = col.iter().zip(&x).zip(&y).map(|((c, xi), yi)| c * (yi - m.eval(*xi))).sum();
                let norm_c = col.iter().map(|c| c * c).sum::<f64>().sqrt();
                let norm_y = y.iter().map(|c| c * c).sum::<f64>().sqrt();
                assert!(dot.abs() <= 1e-6 * norm_c * norm_y, "degree {degree} col {k}: {dot}");
            }
        }
    }

    #[test]
    fn selection_table_on_exact_line() {
        let x: Vec<f64> = (0..30).map(|i| f64::from(i) * 1000.0).collect();
        let y: Vec<f64> = x.iter().map(|v| 0.004 * v + 8.0).collect();
        let rows = model_selection_table(&pairs(&x, &y), 1..=5).unwrap();
        assert_eq!(rows.len(), 5);
        assert!(rows.iter().all(|r| r.rmse < 1e-6));
    }

    #[test]
    fn normalization_examples() {
        let r = normalization_factor(&[2.0, 4.0], &[1.0, 2.0]).unwrap();
        assert_eq!(r.factor, 2.0);
        assert_eq!(r.objective_value, 0.0);
        let r = normalization_factor(&[1.0, 1.0], &[1.0, 2.0]).unwrap();
        assert!((r.factor - 0.6).abs() < 1e-15);
        assert!(matches!(normalization_factor(&[1.0, 1.0], &[0.0, 0.0]), Err(Error::ZeroDenominator)));
        assert!(matches!(normalization_factor(&[], &[]), Err(Error::EmptyInput)));
        assert!(matches!(normalization_factor(&[1.0], &[1.0, 2.0]), Err(Error::LengthMismatch { .. })));
    }

    #[test]
    fn per_day_normalisation_fits_each_day() {
        let off = FixedOffset::east_opt(8 * 3600).unwrap();
        let t = |d, h| Utc.with_ymd_and_hms(2016, 9, d, h, 0, 0).unwrap();
        let ts = [t(1, 2), t(1, 4), t(2, 2), t(2, 4)];
        let a = [2.0, 4.0, 30.0, 60.0];
        let b = [1.0, 2.0, 1.0, 2.0];
        let per_day = normalize_series(&ts, &a, &b, NormalizationMode::PerDay, off).unwrap();
        assert_eq!(per_day, vec![2.0, 4.0, 30.0, 60.0]);
        let global = normalize_series(&ts, &a, &b, NormalizationMode::Global, off).unwrap();
        let x = normalization_factor(&a, &b).unwrap().factor;
        assert_eq!(global, b.iter().map(|v| v * x).collect::<Vec<_>>());
    }

    proptest! {
        #[test]
        fn rmse_non_increasing_with_degree(seed in 0u64..500, n in 8usize..60) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let x: Vec<f64> = (0..n).map(|_| rng.random_range(0.0..1e5)).collect();
            let y: Vec<f64> = (0..n).map(|_| rng.random_range(0.0..1000.0)).collect();
            let rows = model_selection_table(&pairs(&x, &y), 1..=5).unwrap();
            for w in rows.windows(2) {
                prop_assert!(w[1].rmse <= w[0].rmse * (1.0 + 1e-9) + 1e-9, "{:?}", rows);
            }
        }

        #[test]
        fn normalization_scales_inversely(a in prop::collection::vec(-100.0f64..100.0, 1..20), c in 0.01f64..100.0, seed in 0u64..100) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let b: Vec<f64> = a.iter().map(|_| rng.random_range(0.5..10.0)).collect();
            let x = normalization_factor(&a, &b).unwrap().factor;
            let scaled: Vec<f64> = b.iter().map(|v| v * c).collect();
            let xs = normalization_factor(&a, &scaled).unwrap().factor;
            prop_assert!((xs - x / c).abs() <= 1e-9 * (x / c).abs().max(1e-12));
            for (bi, si) in b.iter().zip(&scaled) {
                prop_assert!((x * bi - xs * si).abs() <= 1e-9 * (x * bi).abs().max(1e-9));
            }
        }
    }
}
