//! Error metrics and the randomised train/test study.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ingest::PairedSample;
use crate::regress::fit_polynomial;

pub const DEFAULT_BIN_WIDTH: f64 = 50.0;
/// Half-width of the band reported by [`difference_histogram`], W/m².
pub const WITHIN_BAND: f64 = 100.0;
pub const DEFAULT_REPEATS: usize = 100;

fn check_lengths(a: &[f64], b: &[f64]) -> Result<()> {
    if a.len() != b.len() {
        return Err(Error::LengthMismatch {
            left: a.len(),
            right: b.len(),
        });
    }
    Ok(())
}

pub fn rmse(actual: &[f64], estimated: &[f64]) -> Result<f64> {
    check_lengths(actual, estimated)?;
    if actual.is_empty() {
        return Err(Error::EmptyInput);
    }
    let sse: f64 = actual.iter().zip(estimated).map(|(a, e)| (a - e).powi(2)).sum();
    Ok((sse / actual.len() as f64).sqrt())
}

/// 1-based ranks; tied values share the mean of the ranks they span.
pub fn fractional_ranks(values: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&i, &j| values[i].total_cmp(&values[j]));
    let mut ranks = vec![0.0; values.len()];
    let mut start = 0;
    while start < order.len() {
        let mut end = start + 1;
        while end < order.len() && values[order[end]] == values[order[start]] {
            end += 1;
        }
        // positions start..end hold ranks start+1..=end
        let rank = (start + end + 1) as f64 / 2.0;
        for &i in &order[start..end] {
            ranks[i] = rank;
        }
        start = end;
    }
    ranks
}

fn pearson(x: &[f64], y: &[f64]) -> Result<f64> {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        let (dx, dy) = (a - mx, b - my);
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if sxx == 0.0 || syy == 0.0 {
        return Err(Error::ConstantSeries);
    }
    Ok((sxy / (sxx * syy).sqrt()).clamp(-1.0, 1.0))
}

/// Spearman rank correlation: Pearson correlation of fractional ranks.
pub fn spearman(x: &[f64], y: &[f64]) -> Result<f64> {
    check_lengths(x, y)?;
    if x.len() < 2 {
        return Err(Error::InsufficientData {
            needed: 2,
            got: x.len(),
        });
    }
    pearson(&fractional_ranks(x), &fractional_ranks(y))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HistogramBin {
    /// Inclusive lower edge.
    pub lo: f64,
    /// Exclusive upper edge.
    pub hi: f64,
    pub count: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DifferenceHistogram {
    pub bin_width: f64,
    /// Contiguous bins from the lowest to the highest occupied one.
    pub bins: Vec<HistogramBin>,
    /// Share of differences with `|d| <= 100` W/m².
    pub fraction_within_band: f64,
}

/// Histogram of `estimated - actual` with bins `[(k - 1/2) w, (k + 1/2) w)`.
pub fn difference_histogram(actual: &[f64], estimated: &[f64], bin_width: f64) -> Result<DifferenceHistogram> {
    check_lengths(actual, estimated)?;
    if !(bin_width > 0.0 && bin_width.is_finite()) {
        return Err(Error::InvalidParameter(format!("bin width {bin_width}")));
    }
    let diffs: Vec<f64> = estimated.iter().zip(actual).map(|(e, a)| e - a).collect();
    if diffs.is_empty() {
        return Ok(DifferenceHistogram {
            bin_width,
            bins: Vec::new(),
            fraction_within_band: 0.0,
        });
    }
    let keys: Vec<i64> = diffs.iter().map(|d| (d / bin_width + 0.5).floor() as i64).collect();
    let lo = *keys.iter().min().expect("non-empty");
    let hi = *keys.iter().max().expect("non-empty");
    let mut bins: Vec<HistogramBin> = (lo..=hi)
        .map(|k| HistogramBin {
            lo: (k as f64 - 0.5) * bin_width,
            hi: (k as f64 + 0.5) * bin_width,
            count: 0,
        })
        .collect();
    for k in keys {
        bins[(k - lo) as usize].count += 1;
    }
    let within = diffs.iter().filter(|d| d.abs() <= WITHIN_BAND).count();
    Ok(DifferenceHistogram {
        bin_width,
        bins,
        fraction_within_band: within as f64 / diffs.len() as f64,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub rmse: f64,
    /// Absent when either series is constant.
    pub spearman: Option<f64>,
    pub histogram: DifferenceHistogram,
    pub n: usize,
}

pub fn evaluate(actual: &[f64], estimated: &[f64], bin_width: f64) -> Result<EvalReport> {
    let rmse = rmse(actual, estimated)?;
    let spearman = match spearman(actual, estimated) {
        Ok(r) => Some(r),
        Err(Error::ConstantSeries | Error::InsufficientData { .. }) => None,
        Err(e) => return Err(e),
    };
    Ok(EvalReport {
        rmse,
        spearman,
        histogram: difference_histogram(actual, estimated, bin_width)?,
        n: actual.len(),
    })
}

/// Sample quantile with linear interpolation between order statistics.
pub fn quantile(sorted: &[f64], q: f64) -> Option<f64> {
    if sorted.is_empty() || !(0.0..=1.0).contains(&q) {
        return None;
    }
    let pos = q * (sorted.len() - 1) as f64;
    let i = pos.floor() as usize;
    let frac = pos - i as f64;
    let lo = sorted[i];
    Some(match sorted.get(i + 1) {
        Some(hi) if frac > 0.0 => lo + frac * (hi - lo),
        _ => lo,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Quartiles {
    pub q1: f64,
    pub median: f64,
    pub q3: f64,
}

impl Quartiles {
    pub fn of(values: &[f64]) -> Option<Self> {
        let mut v = values.to_vec();
        v.sort_by(f64::total_cmp);
        Some(Self {
            q1: quantile(&v, 0.25)?,
            median: quantile(&v, 0.5)?,
            q3: quantile(&v, 0.75)?,
        })
    }

    pub fn iqr(&self) -> f64 {
        self.q3 - self.q1
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RepeatResult {
    pub train_rmse: f64,
    /// Absent when the test set is empty.
    pub test_rmse: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitStudy {
    pub train_fraction: f64,
    pub train_size: usize,
    pub repeats: Vec<RepeatResult>,
    pub train_quartiles: Quartiles,
    pub test_quartiles: Option<Quartiles>,
}

/// `start:stop:step` inclusive grid, e.g. `0.1:0.9:0.1`.
pub fn parse_fraction_grid(spec: &str) -> Result<Vec<f64>> {
    let parts: Vec<&str> = spec.split(':').collect();
    let num = |s: &str| {
        s.trim()
            .parse::<f64>()
            .map_err(|_| Error::InvalidParameter(format!("bad fraction grid `{spec}`")))
    };
    let grid = match parts.as_slice() {
        [single] => vec![num(single)?],
        [start, stop, step] => {
            let (start, stop, step) = (num(start)?, num(stop)?, num(step)?);
            if !(step > 0.0) || stop < start {
                return Err(Error::InvalidParameter(format!("bad fraction grid `{spec}`")));
            }
            let count = ((stop - start) / step + 1e-9).floor() as usize;
            // round to the step's precision so 0.1 + 2 * 0.1 prints as 0.3
            (0..=count)
                .map(|i| ((start + i as f64 * step) * 1e9).round() / 1e9)
                .collect()
        }
        _ => return Err(Error::InvalidParameter(format!("bad fraction grid `{spec}`"))),
    };
    if grid.iter().any(|f| !(*f > 0.0 && *f <= 1.0)) {
        return Err(Error::InvalidParameter(format!("fractions must lie in (0, 1]: `{spec}`")));
    }
    Ok(grid)
}

/// Random stream for one (fraction, repeat) cell of the study.
pub fn study_rng(seed: u64, fraction_index: usize, repeat_index: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(((fraction_index as u64) << 32) | repeat_index as u64);
    rng
}

fn predictions_rmse(model: &crate::regress::PolyModel, pairs: &[PairedSample]) -> Result<f64> {
    let actual: Vec<f64> = pairs.iter().map(|p| p.irradiance).collect();
    let est: Vec<f64> = pairs
        .iter()
        .map(|p| crate::regress::predict(model, p.luminance).value)
        .collect();
    rmse(&actual, &est)
}

/// Repeated random train/test splits at each training fraction.
///
/// Train sets are drawn without replacement; the test set is the complement.
/// Every cell has its own random stream, so results do not depend on the
/// thread count.
pub fn split_study(
    pairs: &[PairedSample],
    train_fractions: &[f64],
    repeats: usize,
    degree: usize,
    seed: u64,
) -> Result<Vec<SplitStudy>> {
    if repeats == 0 {
        return Err(Error::InvalidParameter("repeats must be at least 1".into()));
    }
    let n = pairs.len();
    train_fractions
        .iter()
        .enumerate()
        .map(|(fi, &fraction)| {
            if !(fraction > 0.0 && fraction <= 1.0) {
                return Err(Error::InvalidParameter(format!("train fraction {fraction}")));
            }
            let train_size = ((fraction * n as f64).round() as usize).min(n);
            if train_size < degree + 1 {
                return Err(Error::InsufficientData {
                    needed: degree + 1,
                    got: train_size,
                });
            }
            let results: Vec<RepeatResult> = (0..repeats)
                .into_par_iter()
                .map(|ri| {
                    let mut idx: Vec<usize> = (0..n).collect();
                    idx.shuffle(&mut study_rng(seed, fi, ri));
                    let (train_idx, test_idx) = idx.split_at(train_size);
                    let train: Vec<PairedSample> = train_idx.iter().map(|&i| pairs[i]).collect();
                    let test: Vec<PairedSample> = test_idx.iter().map(|&i| pairs[i]).collect();
                    let model = fit_polynomial(&train, degree)?;
                    let test_rmse = if test.is_empty() {
                        None
                    } else {
                        Some(predictions_rmse(&model, &test)?)
                    };
                    Ok(RepeatResult {
                        train_rmse: predictions_rmse(&model, &train)?,
                        test_rmse,
                    })
                })
                .collect::<Result<_>>()?;
            let train: Vec<f64> = results.iter().map(|r| r.train_rmse).collect();
            let test: Vec<f64> = results.iter().filter_map(|r| r.test_rmse).collect();
            Ok(SplitStudy {
                train_fraction: fraction,
                train_size,
                train_quartiles: Quartiles::of(&train).expect("repeats >= 1"),
                test_quartiles: Quartiles::of(&test),
                repeats: results,
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use chrono::{TimeZone, Utc};
    use proptest::prelude::*;
    use rand::Rng;

    fn pairs_from(x: &[f64], y: &[f64]) -> Vec<PairedSample> {
        let t0 = Utc.with_ymd_and_hms(2016, 9, 1, 0, 0, 0).unwrap();
        x.iter()
            .zip(y)
            .enumerate()
            .map(|(i, (&l, &s))| PairedSample {
                timestamp: t0 + chrono::Duration::seconds(i as i64 * 120),
                luminance: l,
                irradiance: s,
                gap_s: 0.0,
            })
            .collect()
    }

    #[test]
    fn rmse_examples() {
        assert_eq!(rmse(&[1.0, 2.0], &[1.0, 2.0]).unwrap(), 0.0);
        assert!((rmse(&[0.0, 0.0], &[3.0, 4.0]).unwrap() - 12.5f64.sqrt()).abs() < 1e-15);
        assert_eq!(rmse(&[10.0], &[13.0]).unwrap(), 3.0);
        assert!(matches!(rmse(&[1.0], &[1.0, 2.0]), Err(Error::LengthMismatch { .. })));
        assert!(matches!(rmse(&[], &[]), Err(Error::EmptyInput)));
    }

    #[test]
    fn spearman_examples() {
        assert!((spearman(&[1.0, 2.0, 3.0, 4.0], &[10.0, 30.0, 20.0, 40.0]).unwrap() - 0.8).abs() < 1e-15);
        let x = [0.5, 1.0, 2.0, 7.0, 9.0];
        let up: Vec<f64> = x.iter().map(|v: &f64| v.exp()).collect();
        let down: Vec<f64> = x.iter().map(|v| -v * v).collect();
        assert_eq!(spearman(&x, &up).unwrap(), 1.0);
        assert_eq!(spearman(&x, &down).unwrap(), -1.0);
        assert!(matches!(spearman(&x, &[1.0; 5]), Err(Error::ConstantSeries)));
        assert!(matches!(spearman(&x, &[1.0; 4]), Err(Error::LengthMismatch { .. })));
    }

    #[test]
    fn ties_get_average_ranks() {
        assert_eq!(fractional_ranks(&[3.0, 1.0, 3.0, 2.0]), vec![3.5, 1.0, 3.5, 2.0]);
        assert_eq!(fractional_ranks(&[5.0, 5.0, 5.0]), vec![2.0, 2.0, 2.0]);
    }

    #[test]
    fn histogram_examples() {
        let actual = [0.0; 4];
        let h = difference_histogram(&actual, &[-150.0, -50.0, 50.0, 150.0], 100.0).unwrap();
        let counts: Vec<usize> = h.bins.iter().map(|b| b.count).collect();
        assert_eq!(counts, vec![1, 1, 1, 1]);
        assert_eq!(h.bins[0].lo, -150.0);
        assert_eq!(h.fraction_within_band, 0.5);

        let same = difference_histogram(&[1.0, 5.0, 9.0], &[1.0, 5.0, 9.0], DEFAULT_BIN_WIDTH).unwrap();
        assert_eq!(same.bins.len(), 1);
        assert_eq!((same.bins[0].lo, same.bins[0].hi, same.bins[0].count), (-25.0, 25.0, 3));
        assert_eq!(same.fraction_within_band, 1.0);
    }

    #[test]
    fn report_for_identical_series() {
        let a = [100.0, 400.0, 250.0];
        let r = evaluate(&a, &a, DEFAULT_BIN_WIDTH).unwrap();
        assert_eq!(r.rmse, 0.0);
        assert_eq!(r.spearman, Some(1.0));
        assert_eq!(r.n, 3);
    }

    #[test]
    fn quantiles_interpolate() {
        let v = [1.0, 2.0, 3.0, 4.0];
        assert_eq!(quantile(&v, 0.0), Some(1.0));
        assert_eq!(quantile(&v, 0.5), Some(2.5));
        assert_eq!(quantile(&v, 0.25), Some(1.75));
        assert_eq!(quantile(&v, 1.0), Some(4.0));
        assert_eq!(quantile(&[], 0.5), None);
    }

    #[test]
    fn fraction_grid_parses() {
        let g = parse_fraction_grid("0.1:0.9:0.1").unwrap();
        assert_eq!(g, vec![0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9]);
        assert_eq!(parse_fraction_grid("1.0").unwrap(), vec![1.0]);
        assert!(parse_fraction_grid("0:1:0.5").is_err());
        assert!(parse_fraction_grid("0.5:0.1:0.1").is_err());
    }

    #[test]
    fn full_fraction_has_no_test_set() {
        let x: Vec<f64> = (0..40).map(f64::from).collect();
        let y: Vec<f64> = x.iter().map(|v| 3.0 + 0.5 * v + if (*v as i32) % 2 == 0 { 1.0 } else { -1.0 }).collect();
        let pairs = pairs_from(&x, &y);
        let study = split_study(&pairs, &[1.0], 3, 1, 7).unwrap();
        let full = fit_polynomial(&pairs, 1).unwrap();
        for r in &study[0].repeats {
            assert!(r.test_rmse.is_none());
            assert!((r.train_rmse - full.fit_rmse).abs() < 1e-9);
        }
        assert!(study[0].test_quartiles.is_none());
    }

    #[test]
    fn exact_linear_data_fits_everywhere() {
        let x: Vec<f64> = (0..50).map(|i| f64::from(i) * 10.0).collect();
        let y: Vec<f64> = x.iter().map(|v| 2.0 + 0.3 * v).collect();
        let study = split_study(&pairs_from(&x, &y), &[0.2, 0.5, 0.9], 10, 1, 1).unwrap();
        for s in &study {
            for r in &s.repeats {
                assert!(r.train_rmse < 1e-9);
                assert!(r.test_rmse.unwrap() < 1e-9);
            }
        }
    }

    #[test]
    fn study_is_reproducible_and_checks_size() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let x: Vec<f64> = (0..120).map(|_| rng.random_range(0.0..1e5)).collect();
        let y: Vec<f64> = x.iter().map(|v| 1e-3 * v + rng.random_range(-20.0..20.0)).collect();
        let pairs = pairs_from(&x, &y);
        let a = split_study(&pairs, &[0.3, 0.7], 20, 3, 11).unwrap();
        let b = split_study(&pairs, &[0.3, 0.7], 20, 3, 11).unwrap();
        assert_eq!(a, b);
        assert!(matches!(split_study(&pairs[..5], &[0.5], 2, 3, 0), Err(Error::InsufficientData { .. })));
        let q = a[0].train_quartiles;
        assert!(q.q1 <= q.median && q.median <= q.q3);
    }

    proptest! {
        #[test]
        fn rmse_symmetric_and_shift_invariant(
            v in prop::collection::vec((-1e3f64..1e3, -1e3f64..1e3), 1..40),
            c in -1e3f64..1e3,
        ) {
            let a: Vec<f64> = v.iter().map(|p| p.0).collect();
            let b: Vec<f64> = v.iter().map(|p| p.1).collect();
            let r = rmse(&a, &b).unwrap();
            prop_assert_eq!(r, rmse(&b, &a).unwrap());
            let a2: Vec<f64> = a.iter().map(|x| x + c).collect();
            let b2: Vec<f64> = b.iter().map(|x| x + c).collect();
            prop_assert!((rmse(&a2, &b2).unwrap() - r).abs() <= 1e-9 * (1.0 + r));
            prop_assert!(r >= 0.0);
        }

        #[test]
        fn spearman_invariant_under_monotone_maps(
            v in prop::collection::vec((-50i32..50, -50i32..50), 2..30),
        ) {
            let x: Vec<f64> = v.iter().map(|p| f64::from(p.0)).collect();
            let y: Vec<f64> = v.iter().map(|p| f64::from(p.1)).collect();
            if let Ok(r) = spearman(&x, &y) {
                let xt: Vec<f64> = x.iter().map(|t| (t / 10.0).exp()).collect();
                let yt: Vec<f64> = y.iter().map(|t| t * t * t + 5.0).collect();
                prop_assert!((spearman(&xt, &yt).unwrap() - r).abs() < 1e-12);
                prop_assert!((-1.0..=1.0).contains(&r));
            }
        }

        #[test]
        fn histogram_totals_and_permutation(
            v in prop::collection::vec((-500f64..500.0, -500f64..500.0), 1..60),
            w in 5f64..200.0,
        ) {
            let a: Vec<f64> = v.iter().map(|p| p.0).collect();
            let b: Vec<f64> = v.iter().map(|p| p.1).collect();
            let h = difference_histogram(&a, &b, w).unwrap();
            prop_assert_eq!(h.bins.iter().map(|b| b.count).sum::<usize>(), a.len());
            let (ra, rb): (Vec<f64>, Vec<f64>) = (a.iter().rev().copied().collect(), b.iter().rev().copied().collect());
            prop_assert_eq!(difference_histogram(&ra, &rb, w).unwrap(), h);
        }
    }
}
