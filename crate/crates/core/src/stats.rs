//! Small statistics helpers for sweep post-processing: medians, log-log
//! rate fits and bootstrap confidence bands.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::rng::{self, domain};

/// Median by sorting a copy (empty input is a caller bug).
pub fn median(values: &[f64]) -> f64 {
    assert!(!values.is_empty(), "median of empty slice");
    let mut v = values.to_vec();
    v.sort_unstable_by(|a, b| a.partial_cmp(b).unwrap());
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// Least-squares slope and intercept of `log y` against `log x`.
/// Fails on fewer than two distinct points or non-positive data.
pub fn log_log_slope(xs: &[f64], ys: &[f64]) -> Result<(f64, f64)> {
    if xs.len() != ys.len() || xs.len() < 2 {
        return Err(Error::Domain("need at least two (x, y) points".into()));
    }
    if xs.iter().chain(ys.iter()).any(|v| !(*v > 0.0)) {
        return Err(Error::Domain(
            "non-fittable: log-log fit needs strictly positive values".into(),
        ));
    }
    let lx: Vec<f64> = xs.iter().map(|x| x.ln()).collect();
    let ly: Vec<f64> = ys.iter().map(|y| y.ln()).collect();
    let n = lx.len() as f64;
    let mx = lx.iter().sum::<f64>() / n;
    let my = ly.iter().sum::<f64>() / n;
    let sxx: f64 = lx.iter().map(|x| (x - mx) * (x - mx)).sum();
    if sxx == 0.0 {
        return Err(Error::Domain("non-fittable: all x values coincide".into()));
    }
    let sxy: f64 = lx.iter().zip(&ly).map(|(x, y)| (x - mx) * (y - my)).sum();
    let slope = sxy / sxx;
    Ok((slope, my - slope * mx))
}

/// A fitted power-law rate with a bootstrap band.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct FitReport {
    pub slope: f64,
    pub intercept: f64,
    /// 2.5% and 97.5% bootstrap percentiles of the slope.
    pub band: (f64, f64),
}

/// Fits `log(median y) ~ slope · log x` over groups sharing an x value,
/// with a seed-keyed bootstrap over the replicates inside each group.
///
/// `points` are `(x, y)` pairs; replicates of one x form a group. Groups
/// are processed in first-appearance order.
pub fn fit_rate(points: &[(f64, f64)], bootstrap: usize, seed: u64) -> Result<FitReport> {
    let mut xs: Vec<f64> = Vec::new();
    let mut groups: Vec<Vec<f64>> = Vec::new();
    for &(x, y) in points {
        match xs.iter().position(|&u| u == x) {
            Some(i) => groups[i].push(y),
            None => {
                xs.push(x);
                groups.push(vec![y]);
            }
        }
    }
    if xs.len() < 3 {
        return Err(Error::Domain("need at least 3 distinct x values".into()));
    }
    let meds: Vec<f64> = groups.iter().map(|g| median(g)).collect();
    let (slope, intercept) = log_log_slope(&xs, &meds)?;

    let mut slopes = Vec::with_capacity(bootstrap);
    for b in 0..bootstrap {
        let resampled: Vec<f64> = groups
            .iter()
            .enumerate()
            .map(|(gi, g)| {
                let picks: Vec<f64> = (0..g.len())
                    .map(|j| {
                        let bits = rng::hash3(
                            seed ^ domain::BOOTSTRAP,
                            (b * groups.len() + gi) as u64,
                            j as u64,
                        );
                        g[rng::bounded(bits, g.len())]
                    })
                    .collect();
                median(&picks)
            })
            .collect();
        if let Ok((s, _)) = log_log_slope(&xs, &resampled) {
            slopes.push(s);
        }
    }
    let band = if slopes.is_empty() {
        (slope, slope)
    } else {
        slopes.sort_unstable_by(|a, b| a.partial_cmp(b).unwrap());
        let pick = |q: f64| slopes[((q * (slopes.len() - 1) as f64).round() as usize).min(slopes.len() - 1)];
        (pick(0.025), pick(0.975))
    };
    Ok(FitReport {
        slope,
        intercept,
        band,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn median_basics() {
        assert_eq!(median(&[3.0, 1.0, 2.0]), 2.0);
        assert_eq!(median(&[4.0, 1.0, 2.0, 3.0]), 2.5);
        assert_eq!(median(&[7.0]), 7.0);
    }

    #[test]
    fn exact_inverse_law_has_slope_minus_one() {
        let xs: Vec<f64> = vec![1.0, 2.0, 4.0, 8.0, 16.0];
        let ys: Vec<f64> = xs.iter().map(|x| 1.0 / x).collect();
        let (slope, _) = log_log_slope(&xs, &ys).unwrap();
        assert!((slope + 1.0).abs() < 1e-12, "slope {slope}");

        let points: Vec<(f64, f64)> = xs.iter().map(|&x| (x, 1.0 / x)).collect();
        let fit = fit_rate(&points, 50, 1).unwrap();
        assert!((fit.slope + 1.0).abs() < 1e-12);
        assert!(fit.band.0 <= fit.slope && fit.slope <= fit.band.1);
    }

    #[test]
    fn constant_values_have_zero_slope() {
        let xs = [1.0, 10.0, 100.0];
        let ys = [5.0, 5.0, 5.0];
        let (slope, _) = log_log_slope(&xs, &ys).unwrap();
        assert!(slope.abs() < 1e-14);
    }

    #[test]
    fn degenerate_inputs_are_not_fittable() {
        assert!(log_log_slope(&[1.0, 2.0], &[0.0, 1.0]).is_err());
        assert!(log_log_slope(&[1.0, 2.0], &[-1.0, 1.0]).is_err());
        assert!(log_log_slope(&[1.0], &[1.0]).is_err());
        assert!(fit_rate(&[(1.0, 1.0), (2.0, 0.5)], 10, 0).is_err());
    }

    #[test]
    fn fit_rate_groups_replicates() {
        // three x groups with replicates; medians lie exactly on y = x^2
        let points = vec![
            (1.0, 0.9),
            (1.0, 1.0),
            (1.0, 1.2),
            (2.0, 3.9),
            (2.0, 4.0),
            (2.0, 4.3),
            (4.0, 15.0),
            (4.0, 16.0),
            (4.0, 17.0),
        ];
        let fit = fit_rate(&points, 100, 7).unwrap();
        assert!((fit.slope - 2.0).abs() < 1e-12, "slope {}", fit.slope);
    }
}
